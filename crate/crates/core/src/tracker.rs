//! Bidirectional iterative centerline tracking from a single seed.
//!
//! At every point the network predicts a direction distribution and a radius.
//! The tracker steps one radius along the most probable direction within a
//! cone around the previous heading, and stops when the moving-average
//! normalized entropy of the distribution exceeds a threshold, when it comes
//! back too close to its own trail, when it leaves the volume, or after a
//! step budget.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use crate::cnn::{
    forward_infer, Grid, Head, NetworkParams, NetworkSpec, TrackerOutput, WeightsFile,
};
use crate::format::{self, fmt_f64};
use crate::geometry::{angle_between, polyline_length, Mat3, Vec3};
use crate::sphere::{
    fibonacci_codebook, normalized_entropy, DirectionCodebook, DirectionDistribution,
};
use crate::volume::{extract_patch, PatchSpec, Volume};
use crate::{Error, Result};

const VTE: &str = "VTE1";

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub entropy_threshold: f64,
    pub entropy_window: usize,
    pub cone_angle_deg: f64,
    pub opposing_min_angle_deg: f64,
    pub max_length_mm: f64,
    pub min_step_mm: f64,
    /// Step budget per half-track.
    pub max_steps: usize,
    /// Number of most recent trail points ignored by the self-proximity test.
    pub proximity_exclusion: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            entropy_threshold: 0.9,
            entropy_window: 3,
            cone_angle_deg: 60.0,
            opposing_min_angle_deg: 90.0,
            max_length_mm: 275.0,
            min_step_mm: 0.25,
            max_steps: 2000,
            proximity_exclusion: 5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.entropy_threshold >= 0.0 && self.entropy_threshold <= 1.0) {
            return Err(Error::invalid("entropy threshold must lie in [0, 1]"));
        }
        if self.entropy_window == 0 {
            return Err(Error::invalid("entropy window must be at least 1"));
        }
        if !(self.cone_angle_deg > 0.0 && self.cone_angle_deg < self.opposing_min_angle_deg) {
            return Err(Error::invalid(
                "cone angle must be positive and below the opposing angle",
            ));
        }
        if !(self.opposing_min_angle_deg < 180.0) {
            return Err(Error::invalid("opposing angle must be below 180 degrees"));
        }
        if !(self.min_step_mm > 0.0 && self.max_length_mm > 0.0) {
            return Err(Error::invalid(
                "minimum step and maximum length must be positive",
            ));
        }
        Ok(())
    }
}

/// Why one half of a track ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    Entropy,
    SelfProximity,
    Bounds,
    MaxSteps,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Entropy => "entropy",
            Termination::SelfProximity => "self-proximity",
            Termination::Bounds => "bounds",
            Termination::MaxSteps => "max-steps",
        })
    }
}

impl std::str::FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Termination::Entropy),
            "self-proximity" => Ok(Termination::SelfProximity),
            "bounds" => Ok(Termination::Bounds),
            "max-steps" => Ok(Termination::MaxSteps),
            _ => Err(Error::header(VTE, format!("unknown termination `{s}`"))),
        }
    }
}

/// An extracted centerline. Points run from the end reached in the first
/// tracking direction, through the seed, to the end of the second direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Centerline {
    pub seed: Vec3,
    pub points: Vec<Vec3>,
    pub radii: Vec<f64>,
    pub entropies: Vec<f64>,
    pub stop_fwd: Termination,
    pub stop_bwd: Termination,
}

impl Centerline {
    pub fn length(&self) -> f64 {
        polyline_length(&self.points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean distance between consecutive points.
    pub fn mean_step(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        self.length() / (self.points.len() - 1) as f64
    }
}

/// What the tracker needs from the network at one location.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub dist: DirectionDistribution,
    pub radius: f64,
    pub entropy: f64,
}

/// Source of direction and radius estimates.
pub trait DirectionPredictor {
    fn codebook(&self) -> &DirectionCodebook;
    /// Distance (mm) from the query point to the farthest sample it reads.
    fn reach_mm(&self) -> f64;
    fn predict(&self, vol: &Volume, pos: &Vec3) -> Result<Prediction>;
}

/// A trained tracker network with its codebook and patch geometry.
#[derive(Clone, Debug)]
pub struct TrackerModel {
    pub spec: NetworkSpec,
    pub params: NetworkParams<f32>,
    pub patch: PatchSpec,
    pub codebook: DirectionCodebook,
}

impl TrackerModel {
    pub fn new(spec: NetworkSpec, params: NetworkParams<f32>, patch: PatchSpec) -> Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        patch.validate()?;
        let Head::Tracker { num_directions } = spec.head else {
            return Err(Error::invalid("tracking needs a tracker head"));
        };
        if spec.receptive_field() != patch.width {
            return Err(Error::Shape(format!(
                "receptive field {} differs from patch width {}",
                spec.receptive_field(),
                patch.width
            )));
        }
        Ok(TrackerModel {
            spec,
            params,
            patch,
            codebook: fibonacci_codebook(num_directions)?,
        })
    }

    pub fn from_weights(w: WeightsFile) -> Result<Self> {
        TrackerModel::new(w.spec, w.params, w.patch)
    }
}

impl DirectionPredictor for TrackerModel {
    fn codebook(&self) -> &DirectionCodebook {
        &self.codebook
    }

    fn reach_mm(&self) -> f64 {
        self.patch.half_extent_mm()
    }

    fn predict(&self, vol: &Volume, pos: &Vec3) -> Result<Prediction> {
        let patch = extract_patch(vol, pos, &self.patch, &Mat3::identity())?;
        let input = Grid::from_patch(patch.width, &patch.values)?;
        let out = forward_infer(&self.params, &self.spec, &input)?;
        let out = TrackerOutput::from_channels(&out.data, self.spec.head)?;
        if !out.radius.is_finite() || out.logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite network output at {pos:?}"
            )));
        }
        let dist = out.distribution();
        let entropy = normalized_entropy(&dist);
        Ok(Prediction {
            dist,
            radius: out.radius,
            entropy,
        })
    }
}

/// The most probable direction and the most probable one at least
/// `min_angle_deg` away from it; ties go to the lowest index.
pub fn initial_directions(
    dist: &DirectionDistribution,
    cb: &DirectionCodebook,
    min_angle_deg: f64,
) -> (usize, usize) {
    let d0 = dist.argmax();
    let lim = min_angle_deg.to_radians();
    let far = (0..cb.len()).filter(|&i| angle_between(&cb.dir(d0), &cb.dir(i)) >= lim);
    let d1 = dist.argmax_among(far).unwrap_or(d0);
    (d0, d1)
}

/// True when `current` lies closer than `radius` to a trail point older than
/// the `exclusion` most recent ones.
pub fn self_proximity_stop(current: &Vec3, trail: &[Vec3], radius: f64, exclusion: usize) -> bool {
    let old = trail.len().saturating_sub(exclusion);
    trail[..old].iter().any(|p| (p - current).norm() < radius)
}

/// Result of one tracking step.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Moved {
        next_pos: Vec3,
        next_dir: usize,
        radius: f64,
        entropy: f64,
    },
    Terminated(Termination),
}

fn out_of_reach(vol: &Volume, pos: &Vec3, reach: f64) -> bool {
    !vol.contains(pos, reach + vol.spacing().max())
}

/// One tracking step from `pos`, having arrived along codebook direction `prev_dir`.
pub fn step(
    vol: &Volume,
    model: &impl DirectionPredictor,
    cfg: &TrackerConfig,
    pos: &Vec3,
    prev_dir: usize,
) -> Result<Step> {
    if out_of_reach(vol, pos, model.reach_mm()) {
        return Ok(Step::Terminated(Termination::Bounds));
    }
    let p = model.predict(vol, pos)?;
    let cb = model.codebook();
    let cone = cb.cone(prev_dir, cfg.cone_angle_deg);
    let next_dir = p.dist.argmax_among(cone).unwrap_or(prev_dir);
    let len = p.radius.max(cfg.min_step_mm);
    Ok(Step::Moved {
        next_pos: pos + cb.dir(next_dir) * len,
        next_dir,
        radius: p.radius,
        entropy: p.entropy,
    })
}

struct Half {
    points: Vec<Vec3>,
    radii: Vec<f64>,
    entropies: Vec<f64>,
    stop: Termination,
}

/// Follow one direction from the seed. `trail` holds the points already
/// tracked, ending with the seed; it grows as the half-track proceeds.
fn half_track(
    vol: &Volume,
    model: &impl DirectionPredictor,
    cfg: &TrackerConfig,
    seed: &Vec3,
    first: &Prediction,
    dir: usize,
    trail: &mut Vec<Vec3>,
) -> Result<Half> {
    let cb = model.codebook();
    let mut half = Half {
        points: Vec::new(),
        radii: Vec::new(),
        entropies: Vec::new(),
        stop: Termination::MaxSteps,
    };
    let mut window: VecDeque<f64> = VecDeque::from([first.entropy]);
    let mut pos = seed + cb.dir(dir) * first.radius.max(cfg.min_step_mm);
    let mut prev_dir = dir;
    for _ in 0..cfg.max_steps {
        match step(vol, model, cfg, &pos, prev_dir)? {
            Step::Terminated(reason) => {
                half.stop = reason;
                return Ok(half);
            }
            Step::Moved {
                next_pos,
                next_dir,
                radius,
                entropy,
            } => {
                half.points.push(pos);
                half.radii.push(radius);
                half.entropies.push(entropy);
                window.push_back(entropy);
                if window.len() > cfg.entropy_window {
                    window.pop_front();
                }
                let mean = window.iter().sum::<f64>() / window.len() as f64;
                if mean > cfg.entropy_threshold {
                    half.stop = Termination::Entropy;
                    return Ok(half);
                }
                if self_proximity_stop(&pos, trail, radius, cfg.proximity_exclusion) {
                    half.stop = Termination::SelfProximity;
                    return Ok(half);
                }
                trail.push(pos);
                pos = next_pos;
                prev_dir = next_dir;
            }
        }
    }
    Ok(half)
}

/// Track in both directions from `seed`, then apply [`postprocess`].
pub fn track(
    vol: &Volume,
    model: &impl DirectionPredictor,
    cfg: &TrackerConfig,
    seed: &Vec3,
) -> Result<Centerline> {
    cfg.validate()?;
    if !vol.contains(seed, 0.0) {
        return Err(Error::invalid(format!(
            "seed {seed:?} lies outside the volume"
        )));
    }
    let first = model.predict(vol, seed)?;
    let (d0, d1) = initial_directions(&first.dist, model.codebook(), cfg.opposing_min_angle_deg);
    let mut trail = vec![*seed];
    let fwd = half_track(vol, model, cfg, seed, &first, d0, &mut trail)?;
    let mut trail: Vec<Vec3> = fwd.points.iter().rev().cloned().collect();
    trail.push(*seed);
    let bwd = half_track(vol, model, cfg, seed, &first, d1, &mut trail)?;

    let mut points: Vec<Vec3> = fwd.points.iter().rev().cloned().collect();
    let mut radii: Vec<f64> = fwd.radii.iter().rev().cloned().collect();
    let mut entropies: Vec<f64> = fwd.entropies.iter().rev().cloned().collect();
    points.push(*seed);
    radii.push(first.radius);
    entropies.push(first.entropy);
    points.extend(bwd.points);
    radii.extend(bwd.radii);
    entropies.extend(bwd.entropies);
    Ok(postprocess(
        Centerline {
            seed: *seed,
            points,
            radii,
            entropies,
            stop_fwd: fwd.stop,
            stop_bwd: bwd.stop,
        },
        cfg,
    ))
}

/// Lines longer than the length budget are trimmed from alternating ends
/// until they fit, then cut at their smallest-radius point, keeping the
/// longer side. Shorter lines pass through unchanged.
pub fn postprocess(mut cl: Centerline, cfg: &TrackerConfig) -> Centerline {
    if cl.length() <= cfg.max_length_mm {
        return cl;
    }
    let (mut lo, mut hi) = (0, cl.points.len());
    let mut from_front = true;
    while hi - lo > 1 && polyline_length(&cl.points[lo..hi]) > cfg.max_length_mm {
        if from_front {
            lo += 1;
        } else {
            hi -= 1;
        }
        from_front = !from_front;
    }
    let min_at = (lo..hi)
        .min_by(|&a, &b| cl.radii[a].total_cmp(&cl.radii[b]))
        .unwrap();
    let before = polyline_length(&cl.points[lo..=min_at]);
    let after = polyline_length(&cl.points[min_at..hi]);
    if before >= after {
        hi = min_at + 1;
    } else {
        lo = min_at;
    }
    cl.points = cl.points[lo..hi].to_vec();
    cl.radii = cl.radii[lo..hi].to_vec();
    cl.entropies = cl.entropies[lo..hi].to_vec();
    cl
}

pub fn write_centerline(cl: &Centerline, path: &Path) -> Result<()> {
    format::write_file(path, centerline_text(cl).as_bytes())
}

pub fn centerline_text(cl: &Centerline) -> String {
    let mut s = format!(
        "VTE1\nmeta seed {} {} {}\nmeta stop_fwd {}\nmeta stop_bwd {}\n",
        fmt_f64(cl.seed.x),
        fmt_f64(cl.seed.y),
        fmt_f64(cl.seed.z),
        cl.stop_fwd,
        cl.stop_bwd
    );
    for i in 0..cl.points.len() {
        let p = cl.points[i];
        s.push_str(&format!(
            "{} {} {} {} {}\n",
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z),
            fmt_f64(cl.radii[i]),
            fmt_f64(cl.entropies[i])
        ));
    }
    s
}

pub fn read_centerline(path: &Path) -> Result<Centerline> {
    parse_centerline(&format::read_lines(path)?)
}

pub fn parse_centerline(lines: &[String]) -> Result<Centerline> {
    let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
    if it.next() != Some(VTE) {
        return Err(Error::header(VTE, "missing VTE1 magic"));
    }
    let mut seed = None;
    let mut stop_fwd = None;
    let mut stop_bwd = None;
    let mut cl = Centerline {
        seed: Vec3::zeros(),
        points: Vec::new(),
        radii: Vec::new(),
        entropies: Vec::new(),
        stop_fwd: Termination::Entropy,
        stop_bwd: Termination::Entropy,
    };
    for line in it {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f[0] == "meta" {
            match f.get(1).copied() {
                Some("seed") => {
                    let v = format::parse_triple::<f64>(VTE, &f[2..])?;
                    seed = Some(Vec3::new(v[0], v[1], v[2]));
                }
                Some("stop_fwd") if f.len() == 3 => stop_fwd = Some(f[2].parse()?),
                Some("stop_bwd") if f.len() == 3 => stop_bwd = Some(f[2].parse()?),
                _ => return Err(Error::header(VTE, format!("bad meta line `{line}`"))),
            }
            continue;
        }
        if f.len() != 5 {
            return Err(Error::header(
                VTE,
                format!("expected `x y z r H`, found `{line}`"),
            ));
        }
        let v: Vec<f64> = f
            .iter()
            .map(|s| format::parse_num(VTE, s))
            .collect::<Result<_>>()?;
        cl.points.push(Vec3::new(v[0], v[1], v[2]));
        cl.radii.push(v[3]);
        cl.entropies.push(v[4]);
    }
    cl.seed = seed.ok_or_else(|| Error::header(VTE, "missing `meta seed`"))?;
    cl.stop_fwd = stop_fwd.ok_or_else(|| Error::header(VTE, "missing `meta stop_fwd`"))?;
    cl.stop_bwd = stop_bwd.ok_or_else(|| Error::header(VTE, "missing `meta stop_bwd`"))?;
    Ok(cl)
}
