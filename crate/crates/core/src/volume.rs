//! Anisotropic scalar volumes with world geometry, trilinear sampling and
//! oriented isotropic patch extraction.
//!
//! World coordinates are millimetres. Voxel `(i, j, k)` sits at
//! `origin + (i·sx, j·sy, k·sz)` and data is stored x-fastest.

use std::path::Path;

use crate::format::{self, fmt_f64};
use crate::geometry::{axis_rotation, is_orthonormal, Mat3, Vec3};
use crate::{Error, Result};

const VTV: &str = "VTV1";

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: Vec3, origin: Vec3, data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "volume dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!(
                "volume spacing must be positive, got {:?}",
                spacing.as_slice()
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("volume origin must be finite"));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::Shape(format!(
                "volume data has {} values, dims {dims:?} need {n}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite intensity at index {i}")));
        }
        Ok(Volume {
            dims,
            spacing,
            origin,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: Vec3, origin: Vec3, value: f32) -> Result<Self> {
        Self::new(dims, spacing, origin, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    pub fn world_to_voxel(&self, p: &Vec3) -> Vec3 {
        (p - self.origin).component_div(&self.spacing)
    }

    pub fn voxel_to_world(&self, v: &Vec3) -> Vec3 {
        self.origin + v.component_mul(&self.spacing)
    }

    /// World position of the last voxel centre.
    pub fn world_max(&self) -> Vec3 {
        let last = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        );
        self.voxel_to_world(&last)
    }

    /// True when `p` lies within the box spanned by the voxel centres, grown by `margin` mm.
    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        let hi = self.world_max();
        (0..3).all(|a| p[a] >= self.origin[a] - margin && p[a] <= hi[a] + margin)
    }

    /// Trilinear interpolation at a world point; corners outside the volume contribute `pad`.
    pub fn sample_trilinear(&self, p: &Vec3, pad: f32) -> f32 {
        let c = self.world_to_voxel(p);
        self.sample_voxel([c.x, c.y, c.z], pad)
    }

    /// Trilinear interpolation at a continuous voxel coordinate.
    pub fn sample_voxel(&self, c: [f64; 3], pad: f32) -> f32 {
        let [nx, ny, nz] = self.dims;
        let fx = c[0].floor();
        let fy = c[1].floor();
        let fz = c[2].floor();
        let tx = c[0] - fx;
        let ty = c[1] - fy;
        let tz = c[2] - fz;
        let (x0, y0, z0) = (fx as i64, fy as i64, fz as i64);
        let inside = x0 >= 0
            && y0 >= 0
            && z0 >= 0
            && x0 + 1 < nx as i64
            && y0 + 1 < ny as i64
            && z0 + 1 < nz as i64;
        let corner = |dx: i64, dy: i64, dz: i64| -> f64 {
            let (x, y, z) = (x0 + dx, y0 + dy, z0 + dz);
            if inside
                || (x >= 0 && y >= 0 && z >= 0 && x < nx as i64 && y < ny as i64 && z < nz as i64)
            {
                self.data[(z as usize * ny + y as usize) * nx + x as usize] as f64
            } else {
                pad as f64
            }
        };
        if !inside
            && (x0 + 1 < 0
                || y0 + 1 < 0
                || z0 + 1 < 0
                || x0 >= nx as i64
                || y0 >= ny as i64
                || z0 >= nz as i64)
        {
            return pad;
        }
        let c00 = corner(0, 0, 0) * (1.0 - tx) + corner(1, 0, 0) * tx;
        let c10 = corner(0, 1, 0) * (1.0 - tx) + corner(1, 1, 0) * tx;
        let c01 = corner(0, 0, 1) * (1.0 - tx) + corner(1, 0, 1) * tx;
        let c11 = corner(0, 1, 1) * (1.0 - tx) + corner(1, 1, 1) * tx;
        let c0 = c00 * (1.0 - ty) + c10 * ty;
        let c1 = c01 * (1.0 - ty) + c11 * ty;
        (c0 * (1.0 - tz) + c1 * tz) as f32
    }

    /// Resample onto an isotropic grid with the same origin covering the same extent.
    pub fn resample_isotropic(&self, spacing: f64, pad: f32) -> Result<Volume> {
        if !(spacing > 0.0) {
            return Err(Error::invalid("resampling spacing must be positive"));
        }
        let extent = self.world_max() - self.origin;
        let dims = [0, 1, 2].map(|a| (extent[a] / spacing + 1e-9).floor() as usize + 1);
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = self.origin + Vec3::new(i as f64, j as f64, k as f64) * spacing;
                    data.push(self.sample_trilinear(&p, pad));
                }
            }
        }
        Volume::new(dims, Vec3::repeat(spacing), self.origin, data)
    }

    /// Exact 90°·`quarter_turns` rotation about world axis `axis` (through the world origin).
    ///
    /// Returns the rotated volume and the rotation matrix `R`, such that
    /// `rotated.sample(R·p) == self.sample(p)` for every world point `p`.
    pub fn rotated_quarter(&self, axis: usize, quarter_turns: i32) -> (Volume, Mat3) {
        let r = axis_rotation(axis, quarter_turns as f64 * std::f64::consts::FRAC_PI_2)
            .map(|v| v.round());
        // Old axis j lands on new axis perm[j] with sign sign[j].
        let mut perm = [0usize; 3];
        let mut sign = [1i64; 3];
        for j in 0..3 {
            for a in 0..3 {
                if r[(a, j)] != 0.0 {
                    perm[j] = a;
                    sign[j] = r[(a, j)] as i64;
                }
            }
        }
        let mut dims = [0usize; 3];
        let mut spacing = Vec3::zeros();
        let mut origin = Vec3::zeros();
        for j in 0..3 {
            let a = perm[j];
            dims[a] = self.dims[j];
            spacing[a] = self.spacing[j];
            origin[a] = if sign[j] > 0 {
                self.origin[j]
            } else {
                -self.origin[j] - (self.dims[j] - 1) as f64 * self.spacing[j]
            };
        }
        let mut data = vec![0f32; self.data.len()];
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let old = [i, j, k];
                    let mut new = [0usize; 3];
                    for ax in 0..3 {
                        new[perm[ax]] = if sign[ax] > 0 {
                            old[ax]
                        } else {
                            self.dims[ax] - 1 - old[ax]
                        };
                    }
                    data[(new[2] * dims[1] + new[1]) * dims[0] + new[0]] = self.get(i, j, k);
                }
            }
        }
        let vol = Volume {
            dims,
            spacing,
            origin,
            data,
        };
        (vol, r)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Volume> {
        Volume::new(
            self.dims,
            self.spacing,
            self.origin,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Sampling layout of an isotropic cubic patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchSpec {
    pub width: usize,
    pub voxel_mm: f64,
    pub pad_value: f32,
}

impl PatchSpec {
    pub fn new(width: usize, voxel_mm: f64, pad_value: f32) -> Result<Self> {
        let spec = PatchSpec {
            width,
            voxel_mm,
            pad_value,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || self.width % 2 == 0 {
            return Err(Error::invalid(format!(
                "patch width must be odd and at least 3, got {}",
                self.width
            )));
        }
        if !(self.voxel_mm > 0.0 && self.voxel_mm.is_finite()) {
            return Err(Error::invalid("patch voxel size must be positive"));
        }
        Ok(())
    }

    /// Half extent of the sample grid in mm (centre to outermost sample).
    pub fn half_extent_mm(&self) -> f64 {
        (self.width - 1) as f64 / 2.0 * self.voxel_mm
    }
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            width: 19,
            voxel_mm: 0.5,
            pad_value: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub width: usize,
    pub values: Vec<f32>,
    pub center: Vec3,
    pub rotation: Mat3,
}

impl Patch {
    pub fn center_value(&self) -> f32 {
        let h = self.width / 2;
        self.values[(h * self.width + h) * self.width + h]
    }
}

/// Sample a `w³` grid centred at `center`, stepping `v` mm along the columns
/// of `rotation` (patch axis `a` maps to world direction `rotation · e_a`).
pub fn extract_patch(
    vol: &Volume,
    center: &Vec3,
    spec: &PatchSpec,
    rotation: &Mat3,
) -> Result<Patch> {
    spec.validate()?;
    if !is_orthonormal(rotation, 1e-6) {
        return Err(Error::invalid("patch rotation is not orthonormal"));
    }
    let values = sample_grid(
        vol,
        center,
        spec.width,
        spec.voxel_mm,
        rotation,
        spec.pad_value,
    );
    Ok(Patch {
        width: spec.width,
        values,
        center: *center,
        rotation: *rotation,
    })
}

/// Cell-centred oriented grid sampler without validation; `width` may be any positive count.
pub(crate) fn sample_grid(
    vol: &Volume,
    center: &Vec3,
    width: usize,
    voxel_mm: f64,
    rotation: &Mat3,
    pad: f32,
) -> Vec<f32> {
    let inv = vol.spacing.map(|s| 1.0 / s);
    // voxel coordinate = base + i·ax + j·ay + k·az
    let step = |a: usize| -> Vec3 { rotation.column(a).component_mul(&inv) * voxel_mm };
    let (ax, ay, az) = (step(0), step(1), step(2));
    let h = (width as f64 - 1.0) / 2.0;
    let base = (center - vol.origin).component_mul(&inv) - (ax + ay + az) * h;
    let mut out = Vec::with_capacity(width * width * width);
    for k in 0..width {
        let pk = base + az * k as f64;
        for j in 0..width {
            let pj = pk + ay * j as f64;
            for i in 0..width {
                let c = pj + ax * i as f64;
                out.push(vol.sample_voxel([c.x, c.y, c.z], pad));
            }
        }
    }
    out
}

pub fn write_volume(vol: &Volume, path: &Path) -> Result<()> {
    let s = vol.spacing;
    let o = vol.origin;
    let header = format!(
        "{VTV}\ndims {} {} {}\nspacing {} {} {}\norigin {} {} {}\ndata raw-f32-le\n\n",
        vol.dims[0],
        vol.dims[1],
        vol.dims[2],
        fmt_f64(s.x),
        fmt_f64(s.y),
        fmt_f64(s.z),
        fmt_f64(o.x),
        fmt_f64(o.y),
        fmt_f64(o.z),
    );
    let mut bytes = header.into_bytes();
    format::push_f32s(&mut bytes, &vol.data);
    format::write_file(path, &bytes)
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    parse_volume(&format::read_all(path)?)
}

pub fn parse_volume(bytes: &[u8]) -> Result<Volume> {
    let (lines, mut payload) = format::split_header(VTV, bytes)?;
    if lines.len() != 5 || lines[0] != VTV {
        return Err(Error::header(
            VTV,
            "expected magic line followed by dims/spacing/origin/data",
        ));
    }
    let dims: [usize; 3] = format::parse_triple(VTV, &format::keyed(VTV, &lines[1], "dims")?)?;
    let spacing: [f64; 3] = format::parse_triple(VTV, &format::keyed(VTV, &lines[2], "spacing")?)?;
    let origin: [f64; 3] = format::parse_triple(VTV, &format::keyed(VTV, &lines[3], "origin")?)?;
    let enc = format::keyed(VTV, &lines[4], "data")?;
    if enc != ["raw-f32-le"] {
        return Err(Error::header(
            VTV,
            format!("unsupported data encoding {enc:?}"),
        ));
    }
    let n = dims.iter().product::<usize>();
    let data = format::take_f32s(VTV, &mut payload, n)?;
    if !payload.is_empty() {
        return Err(Error::Shape(format!(
            "{} trailing bytes after {n} voxels",
            payload.len()
        )));
    }
    Volume::new(dims, Vec3::from(spacing), Vec3::from(origin), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(dims: [usize; 3], spacing: Vec3, origin: Vec3, f: impl Fn(Vec3) -> f64) -> Volume {
        let mut data = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p =
                        origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&spacing);
                    data.push(f(p) as f32);
                }
            }
        }
        Volume::new(dims, spacing, origin, data).unwrap()
    }

    #[test]
    fn world_voxel_conversions() {
        let v = Volume::filled([4, 4, 4], Vec3::new(0.5, 0.5, 0.4), Vec3::zeros(), 0.0).unwrap();
        assert_eq!(v.world_to_voxel(&Vec3::zeros()), Vec3::zeros());
        let c = v.world_to_voxel(&Vec3::new(1.0, 1.0, 0.8));
        assert!((c - Vec3::new(2.0, 2.0, 2.0)).norm() < 1e-12);

        let v = Volume::filled(
            [3, 3, 3],
            Vec3::new(0.3, 0.7, 1.1),
            Vec3::new(-4.0, 2.0, 9.5),
            0.0,
        )
        .unwrap();
        assert_eq!(v.world_to_voxel(&v.origin()), Vec3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = Vec3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            assert!((v.voxel_to_world(&v.world_to_voxel(&p)) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn invalid_volumes_are_rejected() {
        let s = Vec3::repeat(1.0);
        assert!(Volume::new([0, 1, 1], s, Vec3::zeros(), vec![]).is_err());
        assert!(Volume::new(
            [1, 1, 1],
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::zeros(),
            vec![0.0]
        )
        .is_err());
        assert!(matches!(
            Volume::new([2, 1, 1], s, Vec3::zeros(), vec![0.0]),
            Err(Error::Shape(_))
        ));
        assert!(Volume::new([1, 1, 1], s, Vec3::zeros(), vec![f32::NAN]).is_err());
    }

    #[test]
    fn trilinear_reproduces_nodes_and_constants() {
        let v = ramp(
            [5, 4, 3],
            Vec3::new(0.5, 0.6, 0.7),
            Vec3::new(1.0, -1.0, 2.0),
            |p| (p.x * 3.0).sin() + p.y * p.z,
        );
        for (i, j, k) in [(0, 0, 0), (4, 3, 2), (2, 1, 1)] {
            let p = v.voxel_to_world(&Vec3::new(i as f64, j as f64, k as f64));
            assert_eq!(v.sample_trilinear(&p, -7.0), v.get(i, j, k));
        }
        let c = Volume::filled([4, 4, 4], Vec3::repeat(0.5), Vec3::zeros(), 3.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = Vec3::new(
                rng.random_range(0.0..1.5),
                rng.random_range(0.0..1.5),
                rng.random_range(0.0..1.5),
            );
            assert!((c.sample_trilinear(&p, 0.0) - 3.25).abs() < 1e-6);
        }
    }

    /// Brute-force weighted sum over the 8 cell corners.
    fn brute_trilinear(v: &Volume, p: &Vec3, pad: f32) -> f64 {
        let c = v.world_to_voxel(p);
        let base = c.map(f64::floor);
        let mut acc = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let idx = base + Vec3::new(dx as f64, dy as f64, dz as f64);
                    let w = (0..3).map(|a| 1.0 - (c[a] - idx[a]).abs()).product::<f64>();
                    let inside = (0..3).all(|a| idx[a] >= 0.0 && idx[a] < v.dims()[a] as f64);
                    let val = if inside {
                        v.get(idx.x as usize, idx.y as usize, idx.z as usize) as f64
                    } else {
                        pad as f64
                    };
                    acc += w * val;
                }
            }
        }
        acc
    }

    #[test]
    fn trilinear_on_ramp_matches_brute_force() {
        let v = ramp([6, 5, 4], Vec3::repeat(1.0), Vec3::zeros(), |p| p.x);
        let p = Vec3::new(2.5, 1.0, 1.0);
        assert!((v.sample_trilinear(&p, 0.0) - 2.5).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = ramp(
            [6, 5, 4],
            Vec3::new(0.4, 0.5, 0.9),
            Vec3::new(0.2, 0.0, -1.0),
            |p| p.x * p.y - p.z,
        );
        for _ in 0..500 {
            let p = Vec3::new(
                rng.random_range(-1.0..3.5),
                rng.random_range(-1.0..3.0),
                rng.random_range(-2.0..3.0),
            );
            let a = w.sample_trilinear(&p, 0.75) as f64;
            let b = brute_trilinear(&w, &p, 0.75);
            assert!((a - b).abs() < 1e-4, "{a} vs {b} at {p:?}");
        }
    }

    #[test]
    fn identity_patch_on_native_grid_copies_voxels() {
        let v = ramp([9, 9, 9], Vec3::repeat(0.5), Vec3::zeros(), |p| {
            p.x + 10.0 * p.y + 100.0 * p.z
        });
        let spec = PatchSpec::new(5, 0.5, 0.0).unwrap();
        let center = v.voxel_to_world(&Vec3::new(4.0, 4.0, 4.0));
        let patch = extract_patch(&v, &center, &spec, &Mat3::identity()).unwrap();
        let mut n = 0;
        for k in 2..7 {
            for j in 2..7 {
                for i in 2..7 {
                    assert_eq!(patch.values[n], v.get(i, j, k));
                    n += 1;
                }
            }
        }
        assert_eq!(patch.center_value(), v.sample_trilinear(&center, 0.0));
    }

    #[test]
    fn rotated_patch_of_constant_is_constant() {
        let v = Volume::filled([10, 10, 10], Vec3::repeat(0.5), Vec3::zeros(), 2.0).unwrap();
        let spec = PatchSpec::new(3, 0.5, 0.0).unwrap();
        let r = axis_rotation(0, 0.3) * axis_rotation(2, 1.1);
        let patch = extract_patch(&v, &Vec3::repeat(2.2), &spec, &r).unwrap();
        assert!(patch.values.iter().all(|&x| (x - 2.0).abs() < 1e-6));
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let v = Volume::filled([4, 4, 4], Vec3::repeat(1.0), Vec3::zeros(), 0.0).unwrap();
        let spec = PatchSpec::new(3, 1.0, 0.0).unwrap();
        let bad = Mat3::identity() * 1.01;
        assert!(extract_patch(&v, &Vec3::repeat(1.5), &spec, &bad).is_err());
    }

    #[test]
    fn rotated_extraction_matches_analytically_rotated_ramp() {
        // f(p) = g·p is linear, so trilinear sampling is exact and
        // extracting with R equals extracting with identity from f∘R.
        let g = Vec3::new(0.3, -1.2, 0.7);
        let spacing = Vec3::new(0.5, 0.4, 0.6);
        let dims = [30, 36, 26];
        let vol = ramp(dims, spacing, Vec3::zeros(), |p| g.dot(&p));
        let r = axis_rotation(1, 0.4) * axis_rotation(0, -1.3);
        let center = Vec3::new(7.0, 7.1, 7.5);
        let rotated = ramp(dims, spacing, Vec3::zeros(), |p| {
            g.dot(&(r * (p - center) + center))
        });
        let spec = PatchSpec::new(7, 0.5, 0.0).unwrap();
        let a = extract_patch(&vol, &center, &spec, &r).unwrap();
        let b = extract_patch(&rotated, &center, &spec, &Mat3::identity()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }

    #[test]
    fn quarter_rotation_preserves_world_samples() {
        let v = ramp(
            [5, 7, 4],
            Vec3::new(0.5, 0.4, 0.7),
            Vec3::new(1.0, -2.0, 3.0),
            |p| p.x * 2.0 + p.y * p.y - p.z,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for axis in 0..3 {
            for turns in 1..4 {
                let (rv, r) = v.rotated_quarter(axis, turns);
                for _ in 0..30 {
                    let p = v.voxel_to_world(&Vec3::new(
                        rng.random_range(0.0..4.0),
                        rng.random_range(0.0..6.0),
                        rng.random_range(0.0..3.0),
                    ));
                    let a = v.sample_trilinear(&p, 0.0);
                    let b = rv.sample_trilinear(&(r * p), 0.0);
                    assert!(
                        (a - b).abs() < 1e-4,
                        "axis {axis} turns {turns}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vtv");
        let v = Volume::new(
            [2, 2, 2],
            Vec3::new(0.32, 0.32, 0.4),
            Vec3::new(-10.5, 3.0, 0.1),
            vec![0.0, 1.5, -2.0, 3.0, 1e-7, 5.0, 6.0, 7.25],
        )
        .unwrap();
        write_volume(&v, &path).unwrap();
        assert_eq!(read_volume(&path).unwrap(), v);

        let bytes = std::fs::read(&path).unwrap();
        let cut = &bytes[..bytes.len() - 4];
        assert!(matches!(parse_volume(cut), Err(Error::Truncated { .. })));

        let bad = String::from_utf8_lossy(&bytes[..bytes.len() - 32])
            .replace("spacing 0.32", "spacing 0.0");
        let mut bad = bad.into_bytes();
        bad.extend_from_slice(&bytes[bytes.len() - 32..]);
        assert!(matches!(parse_volume(&bad), Err(Error::Invalid(_))));

        assert!(matches!(
            parse_volume(b"VTV2\n\n"),
            Err(Error::Header { .. })
        ));
    }
}
