//! Training samples drawn from reference centerlines, and the optimization
//! loops for the tracker and proximity networks.
//!
//! A tracker sample is a patch around a point near a reference centerline.
//! Its label puts equal mass on the codebook directions pointing to the two
//! centerline points one radius away (upstream and downstream), and its radius
//! target is the reference radius at the nearest centerline point.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cnn::{
    backward, forward_train, proximity_loss, tracker_loss, AdamState, Grid, Head, NetworkParams,
    NetworkSpec, TrackerTarget,
};
use crate::format::{self, fmt_f64};
use crate::geometry::{axis_rotation, Mat3, Vec3};
use crate::sphere::{DirectionCodebook, DirectionDistribution};
use crate::volume::{extract_patch, sample_grid, Patch, PatchSpec, Volume};
use crate::{Error, Result};

const VTC: &str = "VTC1";

/// Ordered reference centerline with a radius per point.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterlineRef {
    points: Vec<Vec3>,
    radii: Vec<f64>,
    /// Cumulative arc length at each point.
    cum: Vec<f64>,
}

impl CenterlineRef {
    pub fn new(points: Vec<Vec3>, radii: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(
                "a reference centerline needs at least 2 points",
            ));
        }
        if points.len() != radii.len() {
            return Err(Error::invalid(
                "reference centerline has mismatched point/radius counts",
            ));
        }
        if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("reference radii must be positive"));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("reference points must be finite"));
        }
        let mut cum = Vec::with_capacity(points.len());
        cum.push(0.0);
        for w in points.windows(2) {
            let d = (w[1] - w[0]).norm();
            if d == 0.0 {
                return Err(Error::invalid("consecutive reference points coincide"));
            }
            cum.push(cum.last().unwrap() + d);
        }
        Ok(CenterlineRef { points, radii, cum })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Segment index and fraction for arc length `s`, clamped to the line.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length());
        let seg = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let len = self.cum[seg + 1] - self.cum[seg];
        (seg, ((s - self.cum[seg]) / len).clamp(0.0, 1.0))
    }

    /// Linear interpolation along the polyline; `s` is clamped to `[0, length]`.
    pub fn point_at_arclength(&self, s: f64) -> Vec3 {
        let (i, t) = self.locate(s);
        self.points[i] + (self.points[i + 1] - self.points[i]) * t
    }

    pub fn radius_at_arclength(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        self.radii[i] + (self.radii[i + 1] - self.radii[i]) * t
    }

    /// Arc length of the closest point on the line to `x`, and the distance to it.
    /// Ties go to the earliest segment.
    pub fn project(&self, x: &Vec3) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..self.points.len() - 1 {
            let (a, b) = (&self.points[i], &self.points[i + 1]);
            let t = crate::geometry::segment_param(x, a, b);
            let d = (x - (a + (b - a) * t)).norm();
            if d < best.1 {
                best = (self.cum[i] + t * (self.cum[i + 1] - self.cum[i]), d);
            }
        }
        best
    }
}

/// Reference centerlines keyed by branch id, as stored in a VTC1 file.
pub type BranchRefs = Vec<(u32, CenterlineRef)>;

pub fn write_centerlines(refs: &[(u32, CenterlineRef)], path: &Path) -> Result<()> {
    let mut s = String::from("VTC1\n");
    for (id, cl) in refs {
        s.push_str(&format!("branch {id}\n"));
        for (p, r) in cl.points.iter().zip(&cl.radii) {
            s.push_str(&format!(
                "{} {} {} {}\n",
                fmt_f64(p.x),
                fmt_f64(p.y),
                fmt_f64(p.z),
                fmt_f64(*r)
            ));
        }
    }
    format::write_file(path, s.as_bytes())
}

pub fn read_centerlines(path: &Path) -> Result<BranchRefs> {
    parse_centerlines(&format::read_lines(path)?)
}

pub fn parse_centerlines(lines: &[String]) -> Result<BranchRefs> {
    let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
    if it.next() != Some(VTC) {
        return Err(Error::header(VTC, "missing VTC1 magic"));
    }
    let mut out = Vec::new();
    let mut cur: Option<(u32, Vec<Vec3>, Vec<f64>)> = None;
    let finish = |c: Option<(u32, Vec<Vec3>, Vec<f64>)>, out: &mut BranchRefs| -> Result<()> {
        if let Some((id, p, r)) = c {
            out.push((id, CenterlineRef::new(p, r)?));
        }
        Ok(())
    };
    for line in it {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "branch" {
            finish(cur.take(), &mut out)?;
            if fields.len() != 2 {
                return Err(Error::header(VTC, format!("bad branch line `{line}`")));
            }
            cur = Some((format::parse_num(VTC, fields[1])?, Vec::new(), Vec::new()));
        } else {
            let (_, p, r) = cur
                .as_mut()
                .ok_or_else(|| Error::header(VTC, "point before the first branch line"))?;
            if fields.len() != 4 {
                return Err(Error::header(
                    VTC,
                    format!("expected `x y z r`, found `{line}`"),
                ));
            }
            let v: Vec<f64> = fields
                .iter()
                .map(|f| format::parse_num(VTC, f))
                .collect::<Result<_>>()?;
            p.push(Vec3::new(v[0], v[1], v[2]));
            r.push(v[3]);
        }
    }
    finish(cur, &mut out)?;
    Ok(out)
}

/// Codebook classes of the directions from `x` to the centerline points one
/// radius `r` upstream and downstream of the projection of `x`, measured in the
/// frame of `rotation` (patch axes to world). Returns the distinct classes;
/// empty when both displacements vanish.
pub fn reference_classes(
    cl: &CenterlineRef,
    x: &Vec3,
    r: f64,
    cb: &DirectionCodebook,
    rotation: &Mat3,
) -> Vec<usize> {
    let (s, _) = cl.project(x);
    let mut classes = Vec::with_capacity(2);
    for target in [s + r, s - r] {
        let dx = cl.point_at_arclength(target) - x;
        if dx.norm() > 1e-9 {
            let c = cb.nearest(&(rotation.transpose() * dx)).unwrap();
            if !classes.contains(&c) {
                classes.push(c);
            }
        }
    }
    classes
}

/// [`reference_classes`] in the world frame.
pub fn make_reference_directions(
    cl: &CenterlineRef,
    x: &Vec3,
    r: f64,
    cb: &DirectionCodebook,
) -> Vec<usize> {
    reference_classes(cl, x, r, cb, &Mat3::identity())
}

/// Optimization settings shared by both network kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_r: f64,
    pub lambda_w: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr_initial: f64,
    pub lr_decay: f64,
    pub lr_interval: usize,
    pub translation_augment: bool,
    pub rotation_augment: bool,
    /// Standard deviation of the translation shift as a fraction of the local radius.
    pub translation_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_r: 10.0,
            lambda_w: 0.001,
            batch_size: 64,
            iterations: 50_000,
            lr_initial: 0.01,
            lr_decay: 0.1,
            lr_interval: 10_000,
            translation_augment: true,
            rotation_augment: true,
            translation_sigma: 0.25,
        }
    }
}

impl TrainConfig {
    /// Small schedule that trains in minutes on a laptop.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 32,
            iterations: 3_000,
            lr_interval: 1_000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.lambda_r,
            self.lambda_w,
            self.lr_initial,
            self.lr_decay,
            self.translation_sigma,
        ];
        if positive.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(
                "training weights, rates and sigma must be finite and >= 0",
            ));
        }
        if self.batch_size == 0 || self.lr_interval == 0 {
            return Err(Error::invalid(
                "batch size and decay interval must be positive",
            ));
        }
        Ok(())
    }

    /// Staircase schedule: `initial · decay^⌊t / interval⌋`.
    pub fn learning_rate(&self, t: usize) -> f64 {
        self.lr_initial * self.lr_decay.powi((t / self.lr_interval) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub patch: Patch,
    pub ref_dist: DirectionDistribution,
    pub ref_radius: f64,
}

/// One annotated volume.
#[derive(Clone, Debug)]
pub struct AnnotatedVolume {
    pub volume: Volume,
    pub refs: Vec<CenterlineRef>,
}

/// Draw one tracker sample: a centerline uniformly among all volumes, an arc
/// length uniformly along it, then the optional translation and rotation
/// augmentations. Translated points farther than two radii from the chosen
/// centerline are redrawn.
pub fn draw_sample(
    data: &[AnnotatedVolume],
    cfg: &TrainConfig,
    spec: &PatchSpec,
    cb: &DirectionCodebook,
    rng: &mut impl Rng,
) -> Result<TrainingSample> {
    let lines: Vec<(usize, usize)> = data
        .iter()
        .enumerate()
        .flat_map(|(v, a)| (0..a.refs.len()).map(move |c| (v, c)))
        .collect();
    if lines.is_empty() {
        return Err(Error::invalid("no reference centerlines to sample from"));
    }
    loop {
        let (vi, ci) = lines[rng.random_range(0..lines.len())];
        let cl = &data[vi].refs[ci];
        let s = rng.random_range(0.0..=cl.length());
        let on_line = cl.point_at_arclength(s);
        let r = cl.radius_at_arclength(s);
        let mut x = on_line;
        if cfg.translation_augment {
            let n = Normal::new(0.0, cfg.translation_sigma * r).unwrap();
            x += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
            if cl.project(&x).1 > 2.0 * r {
                continue;
            }
        }
        let rotation = if cfg.rotation_augment {
            let axis = rng.random_range(0..3);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            axis_rotation(axis, angle)
        } else {
            Mat3::identity()
        };
        let (s_near, _) = cl.project(&x);
        let r_near = cl.radius_at_arclength(s_near);
        let classes = reference_classes(cl, &x, r_near, cb, &rotation);
        if classes.is_empty() {
            continue;
        }
        let patch = extract_patch(&data[vi].volume, &x, spec, &rotation)?;
        return Ok(TrainingSample {
            patch,
            ref_dist: DirectionDistribution::from_classes(cb.len(), &classes),
            ref_radius: r_near,
        });
    }
}

/// Trained parameters and the loss recorded at every iteration.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams<f32>,
    pub losses: Vec<f64>,
}

fn nonfinite(t: usize, lr: f64, loss: f64, losses: &[f64], params: &NetworkParams<f32>) -> Error {
    let recent: Vec<String> = losses
        .iter()
        .rev()
        .take(5)
        .rev()
        .map(|l| format!("{l:.6}"))
        .collect();
    Error::Numeric(format!(
        "non-finite loss {loss} at iteration {t} (lr {lr}); previous losses [{}]; parameters finite: {}",
        recent.join(", "),
        params.all_finite()
    ))
}

/// Train a tracker network with Adam on freshly drawn batches.
/// `progress` receives `(iteration, loss)` after each step.
pub fn train_tracker(
    data: &[AnnotatedVolume],
    cfg: &TrainConfig,
    spec: &NetworkSpec,
    patch: &PatchSpec,
    cb: &DirectionCodebook,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    patch.validate()?;
    let Head::Tracker { num_directions } = spec.head else {
        return Err(Error::invalid("train_tracker needs a tracker head"));
    };
    if num_directions != cb.len() {
        return Err(Error::CodebookMismatch {
            stored: num_directions,
            requested: cb.len(),
        });
    }
    if spec.receptive_field() != patch.width {
        return Err(Error::Shape(format!(
            "receptive field {} differs from patch width {}",
            spec.receptive_field(),
            patch.width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::<f32>::init(spec, &mut rng);
    let mut adam = AdamState::new(&params);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for t in 0..cfg.iterations {
        let mut inputs = Vec::with_capacity(cfg.batch_size);
        let mut targets = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let s = draw_sample(data, cfg, patch, cb, &mut rng)?;
            inputs.push(Grid::from_patch(s.patch.width, &s.patch.values)?);
            targets.push(TrackerTarget {
                dist: s.ref_dist,
                radius: s.ref_radius,
            });
        }
        let lr = cfg.learning_rate(t);
        let cache = forward_train(&mut params, spec, inputs)?;
        let (loss, d_out) = tracker_loss(
            cache.outputs(),
            &targets,
            &params,
            spec.head,
            cfg.lambda_r,
            cfg.lambda_w,
        )?;
        if !loss.is_finite() {
            return Err(nonfinite(t, lr, loss, &losses, &params));
        }
        let grads = backward(&params, spec, &cache, d_out, cfg.lambda_w)?;
        adam.step(&mut params, &grads, lr);
        losses.push(loss);
        progress(t, loss);
    }
    Ok(TrainOutcome { params, losses })
}

/// A volume resampled to the proximity network's isotropic grid together
/// with its regression target on the same grid.
#[derive(Clone, Debug)]
pub struct ProximityVolume {
    pub input: Volume,
    pub target: Volume,
    /// Points around which half of the crops are centred (e.g. centerline samples).
    pub focus: Vec<Vec3>,
}

/// Crop-based settings for proximity training.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximityTrainConfig {
    pub train: TrainConfig,
    /// Output crop width in voxels; the input crop adds the receptive field.
    pub output_width: usize,
    /// Fraction of crops centred near a focus point rather than uniformly.
    pub focus_fraction: f64,
    /// Maximum offset (mm, per axis) of a focus-centred crop from its focus point.
    pub focus_jitter_mm: f64,
}

impl Default for ProximityTrainConfig {
    fn default() -> Self {
        ProximityTrainConfig {
            train: TrainConfig {
                translation_augment: false,
                ..TrainConfig::default()
            },
            output_width: 9,
            focus_fraction: 0.5,
            focus_jitter_mm: 4.0,
        }
    }
}

impl ProximityTrainConfig {
    pub fn desk() -> Self {
        let d = ProximityTrainConfig::default();
        ProximityTrainConfig {
            train: TrainConfig {
                batch_size: 8,
                iterations: 1_500,
                lr_interval: 500,
                ..d.train
            },
            ..d
        }
    }
}

/// Train a proximity-regression network on randomly placed (and optionally
/// rotated) crops, minimizing the mean squared error to the target map.
pub fn train_proximity(
    data: &[ProximityVolume],
    cfg: &ProximityTrainConfig,
    spec: &NetworkSpec,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let tc = &cfg.train;
    tc.validate()?;
    spec.validate()?;
    if spec.head != Head::Proximity {
        return Err(Error::invalid("train_proximity needs a proximity head"));
    }
    if data.is_empty() || cfg.output_width == 0 {
        return Err(Error::invalid(
            "proximity training needs data and a positive crop width",
        ));
    }
    for d in data {
        if d.input.dims() != d.target.dims() || d.input.spacing() != d.target.spacing() {
            return Err(Error::Shape(
                "proximity input and target grids differ".into(),
            ));
        }
    }
    let in_width = cfg.output_width + spec.receptive_field() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::<f32>::init(spec, &mut rng);
    let mut adam = AdamState::new(&params);
    let mut losses = Vec::with_capacity(tc.iterations);
    for t in 0..tc.iterations {
        let mut inputs = Vec::with_capacity(tc.batch_size);
        let mut targets = Vec::with_capacity(tc.batch_size);
        for _ in 0..tc.batch_size {
            let d = &data[rng.random_range(0..data.len())];
            let lo = d.input.origin();
            let hi = d.input.world_max();
            let center = if !d.focus.is_empty() && rng.random_bool(cfg.focus_fraction) {
                let f = d.focus[rng.random_range(0..d.focus.len())];
                let j = cfg.focus_jitter_mm;
                f + Vec3::new(
                    rng.random_range(-j..=j),
                    rng.random_range(-j..=j),
                    rng.random_range(-j..=j),
                )
            } else {
                Vec3::new(
                    rng.random_range(lo.x..=hi.x),
                    rng.random_range(lo.y..=hi.y),
                    rng.random_range(lo.z..=hi.z),
                )
            };
            let rotation = if tc.rotation_augment {
                let axis = rng.random_range(0..3);
                axis_rotation(axis, rng.random_range(0.0..std::f64::consts::TAU))
            } else {
                Mat3::identity()
            };
            let v = d.input.spacing().x;
            let x = sample_grid(&d.input, &center, in_width, v, &rotation, 0.0);
            let y = sample_grid(&d.target, &center, cfg.output_width, v, &rotation, 0.0);
            inputs.push(Grid::from_data([in_width; 3], 1, x)?);
            targets.push(Grid::from_data([cfg.output_width; 3], 1, y)?);
        }
        let lr = tc.learning_rate(t);
        let cache = forward_train(&mut params, spec, inputs)?;
        let (loss, d_out) = proximity_loss(cache.outputs(), &targets, &params, tc.lambda_w)?;
        if !loss.is_finite() {
            return Err(nonfinite(t, lr, loss, &losses, &params));
        }
        let grads = backward(&params, spec, &cache, d_out, tc.lambda_w)?;
        adam.step(&mut params, &grads, lr);
        losses.push(loss);
        progress(t, loss);
    }
    Ok(TrainOutcome { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::fibonacci_codebook;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn straight(len: f64, r: f64) -> CenterlineRef {
        CenterlineRef::new(vec![Vec3::zeros(), Vec3::new(len, 0.0, 0.0)], vec![r, r]).unwrap()
    }

    #[test]
    fn arclength_endpoints_and_midpoint() {
        let cl = straight(10.0, 1.0);
        assert_eq!(cl.point_at_arclength(0.0), Vec3::zeros());
        assert!((cl.point_at_arclength(5.0) - Vec3::new(5.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(cl.point_at_arclength(-3.0), Vec3::zeros());
        assert_eq!(cl.point_at_arclength(99.0), Vec3::new(10.0, 0.0, 0.0));
    }

    #[test]
    fn arclength_is_1_lipschitz_on_random_polylines() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut pts = vec![Vec3::zeros()];
            for _ in 0..8 {
                let step = Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.1..2.0),
                );
                pts.push(pts.last().unwrap() + step);
            }
            let n = pts.len();
            let cl = CenterlineRef::new(pts, vec![1.0; n]).unwrap();
            let d = 0.01;
            let mut s = 0.0;
            while s + d <= cl.length() {
                let gap = (cl.point_at_arclength(s + d) - cl.point_at_arclength(s)).norm();
                assert!(gap <= d + 1e-12);
                s += 0.037;
            }
        }
    }

    #[test]
    fn projection_matches_dense_scan() {
        let pts = vec![
            Vec3::zeros(),
            Vec3::new(3.0, 1.0, 0.0),
            Vec3::new(5.0, -1.0, 2.0),
            Vec3::new(6.0, 4.0, 2.0),
        ];
        let cl = CenterlineRef::new(pts, vec![1.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = Vec3::new(
                rng.random_range(-1.0..7.0),
                rng.random_range(-2.0..5.0),
                rng.random_range(-1.0..3.0),
            );
            let (_, d) = cl.project(&x);
            let mut best = f64::INFINITY;
            let mut s = 0.0;
            while s <= cl.length() {
                best = best.min((cl.point_at_arclength(s) - x).norm());
                s += 0.001;
            }
            assert!(d <= best + 1e-9 && best - d < 2e-3, "{d} vs {best}");
        }
    }

    #[test]
    fn on_axis_point_gets_both_axis_classes() {
        let cb = fibonacci_codebook(100).unwrap();
        let cl = straight(20.0, 1.0);
        let classes = make_reference_directions(&cl, &Vec3::new(10.0, 0.0, 0.0), 1.0, &cb);
        let mut expected = vec![
            cb.nearest(&Vec3::x()).unwrap(),
            cb.nearest(&-Vec3::x()).unwrap(),
        ];
        expected.sort();
        let mut got = classes.clone();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn off_axis_point_points_back_toward_line() {
        let cl = straight(20.0, 2.0);
        let x = Vec3::new(10.0, 1.0, 0.0);
        let (s, _) = cl.project(&x);
        for target in [s + 2.0, s - 2.0] {
            let dx = cl.point_at_arclength(target) - x;
            assert!(dx.y < 0.0);
        }
        let cb = fibonacci_codebook(500).unwrap();
        for c in make_reference_directions(&cl, &x, 2.0, &cb) {
            assert!(cb.dir(c).y < 0.0);
        }
    }

    #[test]
    fn distal_endpoint_yields_single_class() {
        let cb = fibonacci_codebook(100).unwrap();
        let cl = straight(20.0, 1.0);
        let classes = make_reference_directions(&cl, &Vec3::new(20.0, 0.0, 0.0), 1.0, &cb);
        assert_eq!(classes, vec![cb.nearest(&-Vec3::x()).unwrap()]);
    }

    #[test]
    fn vtc1_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vtc");
        let refs = vec![
            (0, straight(5.0, 1.25)),
            (
                7,
                CenterlineRef::new(
                    vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0 / 3.0, 2.0, 3.0)],
                    vec![0.7, 0.9],
                )
                .unwrap(),
            ),
        ];
        write_centerlines(&refs, &path).unwrap();
        assert_eq!(read_centerlines(&path).unwrap(), refs);
    }

    #[test]
    fn vtc1_rejects_garbage() {
        let lines = |s: &str| s.lines().map(String::from).collect::<Vec<_>>();
        assert!(parse_centerlines(&lines("VTC2\nbranch 0\n")).is_err());
        assert!(parse_centerlines(&lines("VTC1\n0 0 0 1\n")).is_err());
        assert!(parse_centerlines(&lines("VTC1\nbranch 0\n0 0 0 1\n")).is_err());
        assert!(parse_centerlines(&lines("VTC1\nbranch 0\n0 0 0\n1 1 1 1\n")).is_err());
    }

    #[test]
    fn staircase_schedule_is_exact() {
        let cfg = TrainConfig::desk();
        assert_eq!(cfg.learning_rate(0), 0.01);
        assert_eq!(cfg.learning_rate(999), 0.01);
        assert_eq!(cfg.learning_rate(1000), 0.01 * 0.1);
        assert_eq!(cfg.learning_rate(2999), 0.01 * 0.1f64.powi(2));
    }

    fn tube_volume() -> (Volume, CenterlineRef) {
        let vol = Volume::filled([40, 20, 20], Vec3::repeat(0.5), Vec3::zeros(), 0.0).unwrap();
        let vol = {
            let mut v = vol;
            let dims = v.dims();
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let p = v.voxel_to_world(&Vec3::new(i as f64, j as f64, k as f64));
                        let d = ((p.y - 5.0).powi(2) + (p.z - 5.0).powi(2)).sqrt();
                        let idx = v.index(i, j, k);
                        v.data_mut()[idx] = if d < 2.0 { 1.0 } else { 0.0 };
                    }
                }
            }
            v
        };
        let cl = CenterlineRef::new(
            vec![Vec3::new(2.0, 5.0, 5.0), Vec3::new(17.0, 5.0, 5.0)],
            vec![2.0, 2.0],
        )
        .unwrap();
        (vol, cl)
    }

    #[test]
    fn plain_sample_matches_reference_directions() {
        let (vol, cl) = tube_volume();
        let cb = fibonacci_codebook(100).unwrap();
        let cfg = TrainConfig {
            translation_augment: false,
            rotation_augment: false,
            ..TrainConfig::desk()
        };
        let data = vec![AnnotatedVolume {
            volume: vol.clone(),
            refs: vec![cl.clone()],
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = draw_sample(&data, &cfg, &PatchSpec::default(), &cb, &mut rng).unwrap();
            let x = s.patch.center;
            assert!(cl.project(&x).1 < 1e-9);
            assert_eq!(s.patch.center_value(), vol.sample_trilinear(&x, 0.0));
            let classes = make_reference_directions(&cl, &x, 2.0, &cb);
            assert_eq!(
                s.ref_dist,
                DirectionDistribution::from_classes(100, &classes)
            );
            assert_eq!(s.ref_radius, 2.0);
        }
    }

    #[test]
    fn full_turn_rotation_keeps_classes() {
        let cb = fibonacci_codebook(500).unwrap();
        let pts = vec![
            Vec3::zeros(),
            Vec3::new(3.0, 1.0, 0.5),
            Vec3::new(6.0, 4.0, 2.0),
        ];
        let cl = CenterlineRef::new(pts, vec![1.0; 3]).unwrap();
        let x = Vec3::new(3.2, 1.4, 0.3);
        for axis in 0..3 {
            let r = axis_rotation(axis, std::f64::consts::TAU);
            assert_eq!(
                reference_classes(&cl, &x, 1.0, &cb, &r),
                make_reference_directions(&cl, &x, 1.0, &cb)
            );
        }
    }

    #[test]
    fn translation_shift_has_configured_spread() {
        let (vol, cl) = tube_volume();
        let cb = fibonacci_codebook(20).unwrap();
        let cfg = TrainConfig {
            rotation_augment: false,
            ..TrainConfig::desk()
        };
        let data = vec![AnnotatedVolume {
            volume: vol,
            refs: vec![cl.clone()],
        }];
        let spec = PatchSpec::new(3, 0.5, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let (mut sy, mut syy, mut sz, mut szz) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let c = draw_sample(&data, &cfg, &spec, &cb, &mut rng)
                .unwrap()
                .patch
                .center;
            sy += c.y - 5.0;
            syy += (c.y - 5.0).powi(2);
            sz += c.z - 5.0;
            szz += (c.z - 5.0).powi(2);
        }
        let sd = |s: f64, ss: f64| (ss / n as f64 - (s / n as f64).powi(2)).sqrt();
        // 0.25·r with r = 2 mm; the 2r redraw guard trims a negligible tail.
        assert!(close(sd(sy, syy), 0.5, 0.025), "{}", sd(sy, syy));
        assert!(close(sd(sz, szz), 0.5, 0.025), "{}", sd(sz, szz));
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let (vol, cl) = tube_volume();
        let cb = fibonacci_codebook(6).unwrap();
        let spec =
            NetworkSpec::dilated_stack([2, 2, 2, 2, 2, 2], Head::Tracker { num_directions: 6 })
                .unwrap();
        let data = vec![AnnotatedVolume {
            volume: vol,
            refs: vec![cl],
        }];
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::desk()
        };
        let out = train_tracker(
            &data,
            &cfg,
            &spec,
            &PatchSpec::default(),
            &cb,
            11,
            |_, _| {},
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(out.params, NetworkParams::<f32>::init(&spec, &mut rng));
        assert!(out.losses.is_empty());
    }

    #[test]
    fn same_seed_same_weights() {
        let (vol, cl) = tube_volume();
        let cb = fibonacci_codebook(6).unwrap();
        let spec =
            NetworkSpec::dilated_stack([2, 2, 2, 2, 2, 2], Head::Tracker { num_directions: 6 })
                .unwrap();
        let data = vec![AnnotatedVolume {
            volume: vol,
            refs: vec![cl],
        }];
        let cfg = TrainConfig {
            iterations: 3,
            batch_size: 4,
            ..TrainConfig::desk()
        };
        let run =
            || train_tracker(&data, &cfg, &spec, &PatchSpec::default(), &cb, 4, |_, _| {}).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.params, b.params);
        assert_eq!(a.losses, b.losses);
    }
}
