//! Synthetic tubular phantoms with analytically known centerlines.
//!
//! Each branch is a Catmull-Rom curve through its control points with a radius
//! that varies linearly between control points. Voxels inside the tube take
//! the branch intensity, with a one-voxel linear transition band at the wall,
//! then Gaussian noise is added. Decoys (blobs and capsules such as an aorta)
//! are drawn the same way but have no centerline.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Vec3;
use crate::training::{BranchRefs, CenterlineRef};
use crate::volume::Volume;
use crate::{Error, Result};

/// Target spacing of the dense centerline samples along each curve segment.
const DENSE_STEP_MM: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSpec {
    /// Control points in mm; an attached branch starts on its parent curve.
    pub points: Vec<Vec3>,
    /// Radius at each control point (mm).
    pub radii: Vec<f64>,
    pub intensity: f32,
    /// Parent branch index and curve parameter in `[0, 1]` of the attachment.
    pub parent: Option<(usize, f64)>,
    /// Closed curves wrap from the last control point back to the first.
    pub closed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decoy {
    Blob {
        center: Vec3,
        radius: f64,
        intensity: f32,
    },
    /// Round-capped cylinder between `a` and `b`.
    Capsule {
        a: Vec3,
        b: Vec3,
        radius: f64,
        intensity: f32,
    },
}

/// Stretch of a branch whose intensity is reset to background.
#[derive(Clone, Debug, PartialEq)]
pub struct Gap {
    pub branch: usize,
    pub start_mm: f64,
    pub length_mm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub origin: Vec3,
    pub background: f32,
    pub noise_sigma: f32,
    pub seed: u64,
    pub branches: Vec<BranchSpec>,
    pub decoys: Vec<Decoy>,
    pub gaps: Vec<Gap>,
}

/// A rasterized phantom: the image, one reference centerline per branch
/// (keyed by branch index) and the proximal end points of the root branches.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub volume: Volume,
    pub refs: BranchRefs,
    pub ostia: Vec<Vec3>,
}

fn catmull_rom(p0: &Vec3, p1: &Vec3, p2: &Vec3, p3: &Vec3, u: f64) -> Vec3 {
    let (u2, u3) = (u * u, u * u * u);
    (p1 * 2.0
        + (p2 - p0) * u
        + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * u2
        + (-p0 + p1 * 3.0 - p2 * 3.0 + p3) * u3)
        * 0.5
}

impl BranchSpec {
    fn segments(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    fn ctrl(&self, i: isize) -> Vec3 {
        let n = self.points.len() as isize;
        if self.closed {
            return self.points[i.rem_euclid(n) as usize];
        }
        if i < 0 {
            self.points[0] * 2.0 - self.points[1]
        } else if i >= n {
            self.points[(n - 1) as usize] * 2.0 - self.points[(n - 2) as usize]
        } else {
            self.points[i as usize]
        }
    }

    fn radius_ctrl(&self, i: usize) -> f64 {
        self.radii[i % self.radii.len()]
    }

    /// Curve point at global parameter `t ∈ [0, 1]` (segments equally spaced in `t`).
    pub fn point_at(&self, t: f64) -> Vec3 {
        let (seg, u) = self.split(t);
        let i = seg as isize;
        catmull_rom(
            &self.ctrl(i - 1),
            &self.ctrl(i),
            &self.ctrl(i + 1),
            &self.ctrl(i + 2),
            u,
        )
    }

    pub fn radius_at(&self, t: f64) -> f64 {
        let (seg, u) = self.split(t);
        self.radius_ctrl(seg) * (1.0 - u) + self.radius_ctrl(seg + 1) * u
    }

    fn split(&self, t: f64) -> (usize, f64) {
        let n = self.segments();
        let x = t.clamp(0.0, 1.0) * n as f64;
        let seg = (x.floor() as usize).min(n - 1);
        (seg, x - seg as f64)
    }

    /// Dense samples of the curve including every control point exactly.
    pub fn dense(&self) -> (Vec<Vec3>, Vec<f64>) {
        let n = self.segments();
        let mut pts = Vec::new();
        let mut rad = Vec::new();
        for seg in 0..n {
            let i = seg as isize;
            let chord = (self.ctrl(i + 1) - self.ctrl(i)).norm();
            let m = ((chord / DENSE_STEP_MM).ceil() as usize).max(2);
            for k in 0..m {
                let u = k as f64 / m as f64;
                let p = if k == 0 {
                    self.ctrl(i)
                } else {
                    catmull_rom(
                        &self.ctrl(i - 1),
                        &self.ctrl(i),
                        &self.ctrl(i + 1),
                        &self.ctrl(i + 2),
                        u,
                    )
                };
                pts.push(p);
                rad.push(self.radius_ctrl(seg) * (1.0 - u) + self.radius_ctrl(seg + 1) * u);
            }
        }
        pts.push(self.ctrl(n as isize));
        rad.push(self.radius_ctrl(n));
        (pts, rad)
    }

    fn max_radius(&self) -> f64 {
        self.radii.iter().cloned().fold(0.0, f64::max)
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("phantom dims must be positive"));
        }
        if self.spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("phantom spacing must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        let lo = self.origin;
        let hi = self.origin
            + Vec3::new(
                (self.dims[0] - 1) as f64 * self.spacing.x,
                (self.dims[1] - 1) as f64 * self.spacing.y,
                (self.dims[2] - 1) as f64 * self.spacing.z,
            );
        for (bi, b) in self.branches.iter().enumerate() {
            let min_points = if b.closed { 3 } else { 2 };
            if b.points.len() < min_points || b.points.len() != b.radii.len() {
                return Err(Error::invalid(format!(
                    "branch {bi}: needs >= {min_points} control points with one radius each"
                )));
            }
            if b.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(Error::invalid(format!(
                    "branch {bi}: radii must be positive"
                )));
            }
            for s in 0..b.segments() {
                if (b.ctrl(s as isize + 1) - b.ctrl(s as isize)).norm() == 0.0 {
                    return Err(Error::invalid(format!(
                        "branch {bi}: repeated control point"
                    )));
                }
            }
            if let Some((p, t)) = b.parent {
                if p >= bi {
                    return Err(Error::invalid(format!(
                        "branch {bi}: parent {p} must precede it"
                    )));
                }
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::invalid(format!(
                        "branch {bi}: attachment parameter {t} outside [0, 1]"
                    )));
                }
                let on_parent = self.branches[p].point_at(t);
                if (on_parent - b.points[0]).norm() > 1e-6 {
                    return Err(Error::invalid(format!(
                        "branch {bi}: first control point is not on parent {p} at t = {t}"
                    )));
                }
            }
            let margin = 2.0 * b.max_radius();
            let (pts, _) = b.dense();
            if pts
                .iter()
                .any(|q| (0..3).any(|a| q[a] < lo[a] + margin || q[a] > hi[a] - margin))
            {
                return Err(Error::invalid(format!(
                    "branch {bi}: curve leaves the volume (margin {margin} mm)"
                )));
            }
        }
        for g in &self.gaps {
            let b = self
                .branches
                .get(g.branch)
                .ok_or_else(|| Error::invalid(format!("gap on missing branch {}", g.branch)))?;
            let (pts, _) = b.dense();
            let len = crate::geometry::polyline_length(&pts);
            if !(g.start_mm >= 0.0 && g.length_mm > 0.0 && g.start_mm + g.length_mm <= len) {
                return Err(Error::invalid(format!(
                    "gap [{}, +{}] mm does not fit branch {} of length {len:.2} mm",
                    g.start_mm, g.length_mm, g.branch
                )));
            }
        }
        for d in &self.decoys {
            let r = match d {
                Decoy::Blob { radius, .. } | Decoy::Capsule { radius, .. } => *radius,
            };
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid("decoy radius must be positive"));
            }
        }
        Ok(())
    }
}

/// Running per-voxel maximum of `coverage · (intensity − background)`.
struct Canvas {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    band: f64,
    contrast: Vec<f32>,
}

impl Canvas {
    fn voxel_range(&self, lo: Vec3, hi: Vec3) -> Option<[(usize, usize); 3]> {
        let mut out = [(0, 0); 3];
        for a in 0..3 {
            let l = ((lo[a] - self.origin[a]) / self.spacing[a]).ceil().max(0.0);
            let h = ((hi[a] - self.origin[a]) / self.spacing[a])
                .floor()
                .min((self.dims[a] - 1) as f64);
            if l > h {
                return None;
            }
            out[a] = (l as usize, h as usize);
        }
        Some(out)
    }

    fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                i as f64 * self.spacing.x,
                j as f64 * self.spacing.y,
                k as f64 * self.spacing.z,
            )
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    fn coverage(&self, dist: f64, radius: f64) -> f32 {
        (0.5 - (dist - radius) / self.band).clamp(0.0, 1.0) as f32
    }

    /// Draw a tapered segment (radius interpolated along the segment).
    fn segment(&mut self, a: &Vec3, b: &Vec3, ra: f64, rb: f64, contrast: f32) {
        let reach = ra.max(rb) + self.band;
        let lo = a.inf(b) - Vec3::repeat(reach);
        let hi = a.sup(b) + Vec3::repeat(reach);
        let Some([(i0, i1), (j0, j1), (k0, k1)]) = self.voxel_range(lo, hi) else {
            return;
        };
        for k in k0..=k1 {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let p = self.world(i, j, k);
                    let t = crate::geometry::segment_param(&p, a, b);
                    let d = (p - (a + (b - a) * t)).norm();
                    let c = self.coverage(d, ra + (rb - ra) * t) * contrast;
                    let idx = self.index(i, j, k);
                    if c > self.contrast[idx] {
                        self.contrast[idx] = c;
                    }
                }
            }
        }
    }

    /// Reset to background every voxel within `radius + band` of the segment
    /// whose orthogonal projection falls inside it.
    fn erase_slab(&mut self, a: &Vec3, b: &Vec3, radius: f64) {
        let reach = radius + self.band;
        let lo = a.inf(b) - Vec3::repeat(reach);
        let hi = a.sup(b) + Vec3::repeat(reach);
        let Some([(i0, i1), (j0, j1), (k0, k1)]) = self.voxel_range(lo, hi) else {
            return;
        };
        let ab = b - a;
        let len2 = ab.norm_squared();
        for k in k0..=k1 {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let p = self.world(i, j, k);
                    let t = (p - a).dot(&ab) / len2;
                    if (0.0..=1.0).contains(&t) && (p - (a + ab * t)).norm() < reach {
                        let idx = self.index(i, j, k);
                        self.contrast[idx] = 0.0;
                    }
                }
            }
        }
    }
}

/// Render a phantom spec into a volume with its ground truth.
pub fn rasterize(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let n = spec.dims.iter().product();
    let mut canvas = Canvas {
        dims: spec.dims,
        spacing: spec.spacing,
        origin: spec.origin,
        band: spec.spacing.min(),
        contrast: vec![0.0; n],
    };
    let mut refs = Vec::with_capacity(spec.branches.len());
    for (bi, b) in spec.branches.iter().enumerate() {
        let (pts, rad) = b.dense();
        let contrast = b.intensity - spec.background;
        for s in 0..pts.len() - 1 {
            canvas.segment(&pts[s], &pts[s + 1], rad[s], rad[s + 1], contrast);
        }
        refs.push((bi as u32, CenterlineRef::new(pts, rad)?));
    }
    for d in &spec.decoys {
        match d {
            Decoy::Blob {
                center,
                radius,
                intensity,
            } => canvas.segment(
                center,
                center,
                *radius,
                *radius,
                intensity - spec.background,
            ),
            Decoy::Capsule {
                a,
                b,
                radius,
                intensity,
            } => canvas.segment(a, b, *radius, *radius, intensity - spec.background),
        }
    }
    for g in &spec.gaps {
        let cl = &refs[g.branch].1;
        let steps = ((g.length_mm / DENSE_STEP_MM).ceil() as usize).max(1);
        for s in 0..steps {
            let s0 = g.start_mm + g.length_mm * s as f64 / steps as f64;
            let s1 = g.start_mm + g.length_mm * (s + 1) as f64 / steps as f64;
            let r = cl.radius_at_arclength(s0).max(cl.radius_at_arclength(s1));
            canvas.erase_slab(&cl.point_at_arclength(s0), &cl.point_at_arclength(s1), r);
        }
    }
    let mut data: Vec<f32> = canvas
        .contrast
        .iter()
        .map(|c| spec.background + c)
        .collect();
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0f32, spec.noise_sigma).unwrap();
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    let volume = Volume::new(spec.dims, spec.spacing, spec.origin, data)?;
    let ostia = spec
        .branches
        .iter()
        .filter(|b| b.parent.is_none() && !b.closed)
        .map(|b| b.points[0])
        .collect();
    Ok(Phantom {
        volume,
        refs,
        ostia,
    })
}

fn fmt_vec(v: &Vec3) -> String {
    format!("{:?} {:?} {:?}", v.x, v.y, v.z)
}

/// Serialize to the plain-text `key = value` spec format.
pub fn spec_to_text(spec: &PhantomSpec) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "dims = {} {} {}\n",
        spec.dims[0], spec.dims[1], spec.dims[2]
    ));
    s.push_str(&format!("spacing = {}\n", fmt_vec(&spec.spacing)));
    s.push_str(&format!("origin = {}\n", fmt_vec(&spec.origin)));
    s.push_str(&format!("background = {:?}\n", spec.background));
    s.push_str(&format!("noise = {:?}\n", spec.noise_sigma));
    s.push_str(&format!("seed = {}\n", spec.seed));
    for b in &spec.branches {
        s.push_str("branch\n");
        s.push_str(&format!("intensity = {:?}\n", b.intensity));
        if let Some((p, t)) = b.parent {
            s.push_str(&format!("parent = {p} {t:?}\n"));
        }
        if b.closed {
            s.push_str("closed = true\n");
        }
        for (p, r) in b.points.iter().zip(&b.radii) {
            s.push_str(&format!("point = {} {r:?}\n", fmt_vec(p)));
        }
        s.push_str("end\n");
    }
    for d in &spec.decoys {
        match d {
            Decoy::Blob {
                center,
                radius,
                intensity,
            } => s.push_str(&format!(
                "blob = {} {radius:?} {intensity:?}\n",
                fmt_vec(center)
            )),
            Decoy::Capsule {
                a,
                b,
                radius,
                intensity,
            } => s.push_str(&format!(
                "capsule = {} {} {radius:?} {intensity:?}\n",
                fmt_vec(a),
                fmt_vec(b)
            )),
        }
    }
    for g in &spec.gaps {
        s.push_str(&format!(
            "gap = {} {:?} {:?}\n",
            g.branch, g.start_mm, g.length_mm
        ));
    }
    s
}

fn spec_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::invalid(format!("phantom spec line {line}: {msg}"))
}

fn nums<T: std::str::FromStr>(line: usize, value: &str, count: usize) -> Result<Vec<T>> {
    let v: Vec<T> = value
        .split_whitespace()
        .map(|f| {
            f.parse()
                .map_err(|_| spec_err(line, format!("bad number `{f}`")))
        })
        .collect::<Result<_>>()?;
    if v.len() != count {
        return Err(spec_err(
            line,
            format!("expected {count} values, found {}", v.len()),
        ));
    }
    Ok(v)
}

/// Parse the `key = value` spec format (`#` starts a comment). The result is validated.
pub fn parse_spec(text: &str) -> Result<PhantomSpec> {
    let mut spec = PhantomSpec {
        dims: [0; 3],
        spacing: Vec3::repeat(1.0),
        origin: Vec3::zeros(),
        background: 0.0,
        noise_sigma: 0.0,
        seed: 0,
        branches: Vec::new(),
        decoys: Vec::new(),
        gaps: Vec::new(),
    };
    let mut open: Option<BranchSpec> = None;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if line == "branch" {
            if open.is_some() {
                return Err(spec_err(ln, "nested branch block"));
            }
            open = Some(BranchSpec {
                points: Vec::new(),
                radii: Vec::new(),
                intensity: 1.0,
                parent: None,
                closed: false,
            });
            continue;
        }
        if line == "end" {
            let b = open
                .take()
                .ok_or_else(|| spec_err(ln, "`end` without `branch`"))?;
            spec.branches.push(b);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| spec_err(ln, "expected `key = value`"))?;
        if let Some(b) = open.as_mut() {
            match key {
                "intensity" => b.intensity = nums(ln, value, 1)?[0],
                "parent" => {
                    let v: Vec<f64> = nums(ln, value, 2)?;
                    if v[0] < 0.0 || v[0].fract() != 0.0 {
                        return Err(spec_err(ln, "parent index must be a nonnegative integer"));
                    }
                    b.parent = Some((v[0] as usize, v[1]));
                }
                "closed" => {
                    b.closed = value
                        .parse()
                        .map_err(|_| spec_err(ln, "closed must be true or false"))?
                }
                "point" => {
                    let v: Vec<f64> = nums(ln, value, 4)?;
                    b.points.push(Vec3::new(v[0], v[1], v[2]));
                    b.radii.push(v[3]);
                }
                _ => return Err(spec_err(ln, format!("unknown branch key `{key}`"))),
            }
            continue;
        }
        match key {
            "dims" => {
                let v: Vec<usize> = nums(ln, value, 3)?;
                spec.dims = [v[0], v[1], v[2]];
            }
            "spacing" => spec.spacing = Vec3::from_vec(nums(ln, value, 3)?),
            "origin" => spec.origin = Vec3::from_vec(nums(ln, value, 3)?),
            "background" => spec.background = nums(ln, value, 1)?[0],
            "noise" => spec.noise_sigma = nums(ln, value, 1)?[0],
            "seed" => spec.seed = nums(ln, value, 1)?[0],
            "blob" => {
                let v: Vec<f64> = nums(ln, value, 5)?;
                spec.decoys.push(Decoy::Blob {
                    center: Vec3::new(v[0], v[1], v[2]),
                    radius: v[3],
                    intensity: v[4] as f32,
                });
            }
            "capsule" => {
                let v: Vec<f64> = nums(ln, value, 8)?;
                spec.decoys.push(Decoy::Capsule {
                    a: Vec3::new(v[0], v[1], v[2]),
                    b: Vec3::new(v[3], v[4], v[5]),
                    radius: v[6],
                    intensity: v[7] as f32,
                });
            }
            "gap" => {
                let v: Vec<f64> = nums(ln, value, 3)?;
                if v[0] < 0.0 || v[0].fract() != 0.0 {
                    return Err(spec_err(ln, "gap branch must be a nonnegative integer"));
                }
                spec.gaps.push(Gap {
                    branch: v[0] as usize,
                    start_mm: v[1],
                    length_mm: v[2],
                });
            }
            _ => return Err(spec_err(ln, format!("unknown key `{key}`"))),
        }
    }
    if open.is_some() {
        return Err(Error::invalid("phantom spec ends inside a branch block"));
    }
    spec.validate()?;
    Ok(spec)
}

/// A named phantom within a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedPhantom {
    pub name: String,
    pub spec: PhantomSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub name: &'static str,
    pub phantoms: Vec<NamedPhantom>,
}

pub const SUITE_NAMES: [&str; 5] = ["straight", "curved", "branching", "degraded", "loop"];

/// Per-suite (training, held-out) phantom counts of the desk split.
pub const DESK_SPLIT: [(&str, usize, usize); 4] = [
    ("straight", 5, 3),
    ("curved", 6, 4),
    ("branching", 7, 3),
    ("degraded", 2, 0),
];

const LUMEN: f32 = 1.0;
const BACKGROUND: f32 = 0.0;

fn suite_seed(suite: &str) -> u64 {
    match suite {
        "straight" => 1_000,
        "curved" => 2_000,
        "branching" => 3_000,
        "degraded" => 4_000,
        _ => 5_000,
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Unit vector orthogonal to `d` in a random azimuth.
fn random_perpendicular(d: &Vec3, rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = random_unit(rng);
        let p = v - d * v.dot(d);
        if p.norm() > 0.1 {
            return p.normalize();
        }
    }
}

/// Rotate `d` by `angle` radians about the unit axis `axis`.
fn rotate(d: &Vec3, axis: &Vec3, angle: f64) -> Vec3 {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle) * d
}

fn base_spec(size_mm: f64, spacing: f64, seed: u64, rng: &mut impl Rng) -> PhantomSpec {
    let n = (size_mm / spacing).round() as usize;
    PhantomSpec {
        dims: [n; 3],
        spacing: Vec3::repeat(spacing),
        origin: Vec3::zeros(),
        background: BACKGROUND,
        noise_sigma: rng.random_range(0.05..=0.15),
        seed,
        branches: Vec::new(),
        decoys: Vec::new(),
        gaps: Vec::new(),
    }
}

/// Smallest distance between two sampled curves, weighed by their radii:
/// returns `min (|p − q| − rp − rq)`.
fn clearance(a: &(Vec<Vec3>, Vec<f64>), b: &(Vec<Vec3>, Vec<f64>)) -> f64 {
    let mut best = f64::INFINITY;
    for (p, rp) in a.0.iter().zip(&a.1) {
        for (q, rq) in b.0.iter().zip(&b.1) {
            best = best.min((p - q).norm() - rp - rq);
        }
    }
    best
}

fn inside(spec: &PhantomSpec, b: &BranchSpec) -> bool {
    let extent = Vec3::new(
        (spec.dims[0] - 1) as f64,
        (spec.dims[1] - 1) as f64,
        (spec.dims[2] - 1) as f64,
    );
    let hi = spec.origin + extent.component_mul(&spec.spacing);
    let m = 2.0 * b.max_radius() + 4.0;
    b.dense()
        .0
        .iter()
        .all(|q| (0..3).all(|a| q[a] >= spec.origin[a] + m && q[a] <= hi[a] - m))
}

/// Random walk of control points: each step turns the heading by up to `max_turn`.
fn wander(
    start: Vec3,
    heading: Vec3,
    steps: usize,
    step_mm: (f64, f64),
    max_turn: f64,
    rng: &mut impl Rng,
) -> Vec<Vec3> {
    let mut pts = vec![start];
    let mut d = heading.normalize();
    for i in 0..steps {
        if i > 0 && max_turn > 0.0 {
            let axis = random_perpendicular(&d, rng);
            d = rotate(&d, &axis, max_turn * rng.random_range(0.5..=1.0));
        }
        let len = rng.random_range(step_mm.0..=step_mm.1);
        pts.push(pts.last().unwrap() + d * len);
    }
    pts
}

fn linear_radii(n: usize, r0: f64, r1: f64) -> Vec<f64> {
    (0..n)
        .map(|i| r0 + (r1 - r0) * i as f64 / (n - 1).max(1) as f64)
        .collect()
}

/// Three disjoint tubes; `max_turn` of zero gives straight tubes.
fn tubes_phantom(seed: u64, max_turn: f64, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let mut spec = base_spec(64.0, 0.5, seed, rng);
    while spec.branches.len() < 3 {
        let r0 = rng.random_range(1.5..=3.0);
        let r1 = rng.random_range(1.0..=r0);
        let start = Vec3::new(
            rng.random_range(12.0..52.0),
            rng.random_range(12.0..52.0),
            rng.random_range(12.0..52.0),
        );
        let heading = random_unit(rng);
        let points = if max_turn == 0.0 {
            let len = rng.random_range(40.0..=52.0);
            vec![start, start + heading * len]
        } else {
            wander(start, heading, 5, (9.0, 11.0), max_turn, rng)
        };
        let n = points.len();
        let b = BranchSpec {
            points,
            radii: linear_radii(n, r0, r1),
            intensity: LUMEN,
            parent: None,
            closed: false,
        };
        if !inside(&spec, &b) {
            continue;
        }
        let dense = b.dense();
        if spec
            .branches
            .iter()
            .all(|o| clearance(&dense, &o.dense()) > 4.0)
        {
            spec.branches.push(b);
        }
    }
    spec
}

/// Tangent of a branch curve at parameter `t` by central differences.
fn tangent(b: &BranchSpec, t: f64) -> Vec3 {
    let h = 1e-4;
    let (a, c) = ((t - h).max(0.0), (t + h).min(1.0));
    (b.point_at(c) - b.point_at(a)).normalize()
}

const AORTA_CENTER: (f64, f64) = (14.0, 40.0);
const AORTA_RADIUS: f64 = 9.0;

/// Distance from `p` to the aorta axis (parallel to z).
fn aorta_axis_distance(p: &Vec3) -> f64 {
    ((p.x - AORTA_CENTER.0).powi(2) + (p.y - AORTA_CENTER.1).powi(2)).sqrt()
}

/// Try to grow a child of `parent_idx` at parameter `t` leaving at `angle`.
#[allow(clippy::too_many_arguments)]
fn grow_child(
    spec: &PhantomSpec,
    parent_idx: usize,
    t: f64,
    angle: f64,
    r0: f64,
    r1: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Option<BranchSpec> {
    let parent = &spec.branches[parent_idx];
    let start = parent.point_at(t);
    let tan = tangent(parent, t);
    let heading = rotate(&tan, &random_perpendicular(&tan, rng), angle);
    let points = wander(start, heading, steps, (8.0, 10.0), 20f64.to_radians(), rng);
    let n = points.len();
    let b = BranchSpec {
        points,
        radii: linear_radii(n, r0, r1),
        intensity: LUMEN,
        parent: Some((parent_idx, t)),
        closed: false,
    };
    branch_fits(spec, &b, Some(parent_idx)).then_some(b)
}

/// Bounds, aorta clearance and clearance from every other branch, ignoring
/// the first few millimetres next to the attachment point.
fn branch_fits(spec: &PhantomSpec, b: &BranchSpec, parent: Option<usize>) -> bool {
    if !inside(spec, b) {
        return false;
    }
    let (pts, rad) = b.dense();
    // Geometric overlap with the parent (or the aorta wall) is expected here.
    let skip = if parent.is_some() { 12.0 } else { 7.0 };
    let mut s = 0.0;
    let mut far = (Vec::new(), Vec::new());
    for i in 0..pts.len() {
        if i > 0 {
            s += (pts[i] - pts[i - 1]).norm();
        }
        let near_start = s <= skip;
        if !near_start {
            if aorta_axis_distance(&pts[i]) < AORTA_RADIUS + rad[i] + 2.0 {
                return false;
            }
            far.0.push(pts[i]);
            far.1.push(rad[i]);
        }
    }
    if far.0.is_empty() {
        return false;
    }
    spec.branches
        .iter()
        .all(|o| clearance(&far, &o.dense()) > 2.0)
}

/// Two three-level trees rooted on an aorta-like capsule, plus two blobs.
fn branching_phantom(seed: u64, rng: &mut ChaCha8Rng) -> PhantomSpec {
    'restart: loop {
        let mut spec = base_spec(80.0, 0.5, seed, rng);
        spec.decoys.push(Decoy::Capsule {
            a: Vec3::new(AORTA_CENTER.0, AORTA_CENTER.1, -20.0),
            b: Vec3::new(AORTA_CENTER.0, AORTA_CENTER.1, 100.0),
            radius: AORTA_RADIUS,
            intensity: LUMEN,
        });
        for z_range in [22.0..30.0, 50.0..58.0] {
            let mut tries = 0;
            let root = loop {
                tries += 1;
                if tries > 200 {
                    continue 'restart;
                }
                let phi: f64 = rng.random_range(-35f64..35.0).to_radians();
                let z = rng.random_range(z_range.clone());
                let radial = Vec3::new(phi.cos(), phi.sin(), 0.0);
                let ostium = Vec3::new(AORTA_CENTER.0, AORTA_CENTER.1, z) + radial * AORTA_RADIUS;
                let tilt = rotate(
                    &radial,
                    &Vec3::z().cross(&radial),
                    rng.random_range(-0.25..0.25),
                );
                let points = wander(ostium, tilt, 4, (8.0, 9.5), 18f64.to_radians(), rng);
                let r0 = rng.random_range(2.6..=3.2);
                let b = BranchSpec {
                    radii: linear_radii(points.len(), r0, r0 - 0.6),
                    points,
                    intensity: LUMEN,
                    parent: None,
                    closed: false,
                };
                if branch_fits(&spec, &b, None) {
                    break b;
                }
            };
            let root_r_end = *root.radii.last().unwrap();
            spec.branches.push(root);
            let root_idx = spec.branches.len() - 1;
            let plan = [
                (rng.random_range(0.45..0.65), (40.0f64, 55.0f64), 3usize),
                (1.0, (15.0, 30.0), 3usize),
            ];
            for (t, (amin, amax), steps) in plan {
                let mut tries = 0;
                let child = loop {
                    tries += 1;
                    if tries > 200 {
                        continue 'restart;
                    }
                    let angle = rng.random_range(amin..amax).to_radians();
                    let r0 = (spec.branches[root_idx].radius_at(t) * 0.85).min(root_r_end);
                    if let Some(b) = grow_child(&spec, root_idx, t, angle, r0, 1.5, steps, rng) {
                        break b;
                    }
                };
                spec.branches.push(child);
                let child_idx = spec.branches.len() - 1;
                let mut tries = 0;
                let grand = loop {
                    tries += 1;
                    if tries > 200 {
                        continue 'restart;
                    }
                    let tg = rng.random_range(0.35..0.6);
                    let angle = rng.random_range(35f64..50.0).to_radians();
                    if let Some(b) = grow_child(&spec, child_idx, tg, angle, 1.4, 1.0, 2, rng) {
                        break b;
                    }
                };
                spec.branches.push(grand);
            }
        }
        let vessels: Vec<_> = spec.branches.iter().map(BranchSpec::dense).collect();
        while spec.decoys.len() < 3 {
            let center = Vec3::new(
                rng.random_range(30.0..70.0),
                rng.random_range(10.0..70.0),
                rng.random_range(10.0..70.0),
            );
            let radius = rng.random_range(1.5..2.5);
            let blob = (vec![center], vec![radius]);
            if vessels.iter().all(|v| clearance(&blob, v) > 6.0) {
                spec.decoys.push(Decoy::Blob {
                    center,
                    radius,
                    intensity: LUMEN,
                });
            }
        }
        return spec;
    }
}

fn loop_phantom(seed: u64, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let mut spec = base_spec(48.0, 0.5, seed, rng);
    let big = rng.random_range(10.0..=13.0);
    let r = rng.random_range(1.4..=2.0);
    let normal = random_unit(rng);
    let u = random_perpendicular(&normal, rng);
    let v = normal.cross(&u);
    let center = Vec3::repeat(23.75);
    let n = 16;
    let points = (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            center + (u * a.cos() + v * a.sin()) * big
        })
        .collect();
    spec.branches.push(BranchSpec {
        points,
        radii: vec![r; n],
        intensity: LUMEN,
        parent: None,
        closed: true,
    });
    spec
}

/// Like the curved suite but with 1–3 mm stretches of each tube blanked out.
fn degraded_phantom(seed: u64, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let mut spec = tubes_phantom(seed, 25f64.to_radians(), rng);
    for bi in 0..spec.branches.len() {
        let len = crate::geometry::polyline_length(&spec.branches[bi].dense().0);
        for k in 0..2 {
            let lo = 10.0 + k as f64 * (len - 20.0) / 2.0;
            let hi = lo + (len - 20.0) / 2.0 - 3.0;
            spec.gaps.push(Gap {
                branch: bi,
                start_mm: rng.random_range(lo..hi),
                length_mm: rng.random_range(1.0..=3.0),
            });
        }
    }
    spec
}

fn suite_specs(name: &'static str) -> Vec<PhantomSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed(name));
    let base = suite_seed(name);
    match name {
        "straight" => (0..8)
            .map(|i| tubes_phantom(base + i, 0.0, &mut rng))
            .collect(),
        "curved" => (0..10)
            .map(|i| {
                let turn = [15.0, 25.0, 35.0, 45.0, 55.0][i as usize % 5];
                tubes_phantom(base + i, f64::to_radians(turn), &mut rng)
            })
            .collect(),
        "branching" => (0..10)
            .map(|i| branching_phantom(base + i, &mut rng))
            .collect(),
        "degraded" => (0..2)
            .map(|i| degraded_phantom(base + i, &mut rng))
            .collect(),
        "loop" => (0..3).map(|i| loop_phantom(base + i, &mut rng)).collect(),
        _ => unreachable!(),
    }
}

/// One named suite, or `None` for an unknown name.
pub fn suite(name: &str) -> Option<Suite> {
    let name = *SUITE_NAMES.iter().find(|n| **n == name)?;
    let phantoms = suite_specs(name)
        .into_iter()
        .enumerate()
        .map(|(i, spec)| NamedPhantom {
            name: format!("{name}-{i:02}"),
            spec,
        })
        .collect();
    Some(Suite { name, phantoms })
}

/// All deterministic suites: straight, curved, branching, degraded and loop.
pub fn standard_suites() -> Vec<Suite> {
    SUITE_NAMES.iter().map(|n| suite(n).unwrap()).collect()
}

/// Training and held-out phantoms of the desk configuration.
pub fn desk_split() -> (Vec<NamedPhantom>, Vec<NamedPhantom>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (name, n_train, n_held) in DESK_SPLIT {
        let s = suite(name).unwrap();
        train.extend(s.phantoms[..n_train].iter().cloned());
        held.extend(s.phantoms[n_train..n_train + n_held].iter().cloned());
    }
    (train, held)
}

/// Suite manifest lines: one `phantom <name>` line per phantom, each
/// followed by its `ostium x y z` and `gap <branch> <start_mm> <length_mm> <x y z>` lines.
pub fn suite_manifest(suite: &Suite) -> Result<String> {
    let mut s = format!("suite {}\n", suite.name);
    for p in &suite.phantoms {
        s.push_str(&format!("phantom {}\n", p.name));
        for b in p
            .spec
            .branches
            .iter()
            .filter(|b| b.parent.is_none() && !b.closed)
        {
            s.push_str(&format!("ostium {}\n", fmt_vec(&b.points[0])));
        }
        for g in &p.spec.gaps {
            let (pts, rad) = p.spec.branches[g.branch].dense();
            let cl = CenterlineRef::new(pts, rad)?;
            let at = cl.point_at_arclength(g.start_mm);
            s.push_str(&format!(
                "gap {} {:?} {:?} {}\n",
                g.branch,
                g.start_mm,
                g.length_mm,
                fmt_vec(&at)
            ));
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tube(len: f64, r: f64) -> PhantomSpec {
        PhantomSpec {
            dims: [80, 40, 40],
            spacing: Vec3::repeat(0.5),
            origin: Vec3::zeros(),
            background: 0.0,
            noise_sigma: 0.0,
            seed: 0,
            branches: vec![BranchSpec {
                points: vec![
                    Vec3::new(10.0, 10.0, 10.0),
                    Vec3::new(10.0 + len, 10.0, 10.0),
                ],
                radii: vec![r, r],
                intensity: 1.0,
                parent: None,
                closed: false,
            }],
            decoys: vec![],
            gaps: vec![],
        }
    }

    #[test]
    fn cylinder_voxel_count_matches_volume() {
        let (len, r) = (16.0, 2.0);
        let ph = rasterize(&tube(len, r)).unwrap();
        let inside = ph.volume.data().iter().filter(|v| **v > 0.5).count() as f64;
        // Cylinder plus the two hemispherical caps of the capsule.
        let expected = (PI * r * r * len + 4.0 / 3.0 * PI * r.powi(3)) / 0.125;
        let cyl_only = PI * r * r * len / 0.125;
        assert!(
            (inside - expected).abs() / expected < 0.1,
            "{inside} vs {expected}"
        );
        assert!((inside - cyl_only).abs() / cyl_only < 0.35);
    }

    #[test]
    fn background_only_spec_is_constant_plus_noise() {
        let mut spec = tube(10.0, 1.0);
        spec.branches.clear();
        spec.background = 0.25;
        let ph = rasterize(&spec).unwrap();
        assert!(ph.refs.is_empty() && ph.ostia.is_empty());
        assert!(ph.volume.data().iter().all(|v| *v == 0.25));
        spec.noise_sigma = 0.1;
        let ph = rasterize(&spec).unwrap();
        let n = ph.volume.len() as f64;
        let mean = ph.volume.data().iter().map(|v| *v as f64).sum::<f64>() / n;
        let var = ph
            .volume
            .data()
            .iter()
            .map(|v| (*v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!((mean - 0.25).abs() < 0.002);
        assert!((var.sqrt() - 0.1).abs() < 0.002);
    }

    #[test]
    fn references_pass_through_control_points() {
        let b = BranchSpec {
            points: vec![
                Vec3::new(10.0, 10.0, 10.0),
                Vec3::new(18.0, 14.0, 11.0),
                Vec3::new(25.0, 12.0, 15.0),
                Vec3::new(30.0, 18.0, 14.0),
            ],
            radii: vec![2.0, 1.8, 1.5, 1.2],
            intensity: 1.0,
            parent: None,
            closed: false,
        };
        let mut spec = tube(1.0, 1.0);
        spec.dims = [90, 70, 70];
        spec.branches = vec![b.clone()];
        let ph = rasterize(&spec).unwrap();
        let cl = &ph.refs[0].1;
        for (c, r) in b.points.iter().zip(&b.radii) {
            let hit = cl
                .points()
                .iter()
                .zip(cl.radii())
                .any(|(p, pr)| p == c && pr == r);
            assert!(hit, "control point {c:?} missing");
        }
        for (i, c) in b.points.iter().enumerate() {
            assert_eq!(b.point_at(i as f64 / 3.0), *c);
        }
        assert_eq!(ph.ostia, vec![b.points[0]]);
    }

    #[test]
    fn closed_curve_returns_to_start() {
        let spec = &suite("loop").unwrap().phantoms[0].spec;
        let b = &spec.branches[0];
        let (pts, _) = b.dense();
        assert_eq!(pts.first(), pts.last());
        let ph = rasterize(spec).unwrap();
        assert!(ph.ostia.is_empty());
    }

    #[test]
    fn spec_text_round_trip() {
        for s in standard_suites() {
            let spec = &s.phantoms[0].spec;
            assert_eq!(&parse_spec(&spec_to_text(spec)).unwrap(), spec);
        }
    }

    #[test]
    fn spec_parse_errors() {
        let good = spec_to_text(&tube(10.0, 1.0));
        assert!(parse_spec(&good).is_ok());
        assert!(parse_spec(&good.replace("dims", "dimz")).is_err());
        assert!(parse_spec(&good.replace("end\n", "")).is_err());
        assert!(parse_spec(&good.replace("spacing = 0.5", "spacing = 0.0")).is_err());
        // A curve pushed out of the volume.
        assert!(parse_spec(&good.replace("point = 20.0", "point = 200.0")).is_err());
    }

    #[test]
    fn attachment_must_lie_on_parent() {
        let mut spec = tube(20.0, 1.5);
        spec.dims = [80, 80, 80];
        let parent = spec.branches[0].clone();
        let start = parent.point_at(0.5);
        spec.branches.push(BranchSpec {
            points: vec![start, start + Vec3::new(5.0, 8.0, 0.0)],
            radii: vec![1.0, 1.0],
            intensity: 1.0,
            parent: Some((0, 0.5)),
            closed: false,
        });
        assert!(spec.validate().is_ok());
        spec.branches[1].parent = Some((0, 0.6));
        assert!(spec.validate().is_err());
    }

    #[test]
    fn gaps_blank_the_tube() {
        let mut spec = tube(20.0, 1.5);
        spec.gaps.push(Gap {
            branch: 0,
            start_mm: 8.0,
            length_mm: 2.0,
        });
        let ph = rasterize(&spec).unwrap();
        let v = &ph.volume;
        assert_eq!(v.sample_trilinear(&Vec3::new(19.0, 10.0, 10.0), 0.0), 0.0);
        assert_eq!(v.sample_trilinear(&Vec3::new(15.0, 10.0, 10.0), 0.0), 1.0);
        assert_eq!(v.sample_trilinear(&Vec3::new(23.0, 10.0, 10.0), 0.0), 1.0);
    }

    #[test]
    fn suites_are_deterministic_and_well_formed() {
        let a = standard_suites();
        let b = standard_suites();
        assert_eq!(a, b);
        let branching = a.iter().find(|s| s.name == "branching").unwrap();
        for p in &branching.phantoms {
            assert!(p.spec.branches.len() >= 6);
            assert_eq!(
                p.spec
                    .branches
                    .iter()
                    .filter(|b| b.parent.is_none())
                    .count(),
                2
            );
            p.spec.validate().unwrap();
        }
        let degraded = a.iter().find(|s| s.name == "degraded").unwrap();
        let manifest = suite_manifest(degraded).unwrap();
        assert_eq!(
            manifest.lines().filter(|l| l.starts_with("gap ")).count(),
            12
        );
        let (train, held) = desk_split();
        assert_eq!((train.len(), held.len()), (20, 10));
    }

    #[test]
    fn rasterization_is_seed_deterministic() {
        let spec = &suite("straight").unwrap().phantoms[0].spec;
        let a = rasterize(spec).unwrap();
        let b = rasterize(spec).unwrap();
        assert_eq!(a.volume, b.volume);
    }
}
