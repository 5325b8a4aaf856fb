//! WebAssembly bindings for the demo page in `www/`: phantom slice
//! rendering, the direction codebook with the entropy of a peaked
//! distribution over it, and the proximity target curve.
//!
//! Every export is a thin wrapper over a plain function that tests call
//! natively.

use wasm_bindgen::prelude::*;

use vtrack::phantom::{rasterize, suite, Phantom, SUITE_NAMES};
use vtrack::sphere::{fibonacci_codebook, normalized_entropy, DirectionDistribution};
use vtrack::tree::{proximity_target, ProximityConfig};
use vtrack::{Error, Result};

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = suiteNames)]
pub fn suite_names() -> Vec<String> {
    SUITE_NAMES.iter().map(|s| s.to_string()).collect()
}

#[wasm_bindgen(js_name = suiteSize)]
pub fn suite_size(name: &str) -> usize {
    suite(name).map_or(0, |s| s.phantoms.len())
}

/// A rasterized standard phantom.
#[wasm_bindgen]
pub struct PhantomView {
    name: String,
    phantom: Phantom,
}

impl PhantomView {
    pub fn load(suite_name: &str, index: usize) -> Result<PhantomView> {
        let s = suite(suite_name)
            .ok_or_else(|| Error::Invalid(format!("unknown suite `{suite_name}`")))?;
        let p = s.phantoms.get(index).ok_or_else(|| {
            Error::Invalid(format!(
                "suite `{suite_name}` has {} phantoms",
                s.phantoms.len()
            ))
        })?;
        Ok(PhantomView {
            name: p.name.clone(),
            phantom: rasterize(&p.spec)?,
        })
    }

    fn plane(&self, axis: usize) -> Result<(usize, usize)> {
        let d = self.phantom.volume.dims();
        match axis {
            0 => Ok((d[1], d[2])),
            1 => Ok((d[0], d[2])),
            2 => Ok((d[0], d[1])),
            _ => Err(Error::Invalid(format!(
                "axis must be 0, 1 or 2, got {axis}"
            ))),
        }
    }

    /// RGBA pixels of voxel slice `k` across `axis`, row by row. Reference
    /// centerline samples within half a voxel of the slice are drawn red,
    /// ostia green.
    pub fn render(&self, axis: usize, k: usize) -> Result<Vec<u8>> {
        let (w, h) = self.plane(axis)?;
        let vol = &self.phantom.volume;
        if k >= vol.dims()[axis] {
            return Err(Error::Invalid(format!(
                "slice {k} outside {} voxels",
                vol.dims()[axis]
            )));
        }
        let voxel = |u: usize, v: usize| match axis {
            0 => [k, u, v],
            1 => [u, k, v],
            _ => [u, v, k],
        };
        let mut px = vec![255u8; w * h * 4];
        for v in 0..h {
            for u in 0..w {
                let [i, j, l] = voxel(u, v);
                let g = ((vol.get(i, j, l) + 0.25) / 1.5).clamp(0.0, 1.0);
                let g = (g * 255.0).round() as u8;
                px[(v * w + u) * 4..][..3].copy_from_slice(&[g, g, g]);
            }
        }
        let mut mark = |p: &vtrack::Vec3, rgb: [u8; 3], reach: f64| {
            let c = vol.world_to_voxel(p);
            if (c[axis] - k as f64).abs() > reach {
                return;
            }
            let (a, b) = match axis {
                0 => (c[1], c[2]),
                1 => (c[0], c[2]),
                _ => (c[0], c[1]),
            };
            let (u, v) = (a.round(), b.round());
            if u >= 0.0 && v >= 0.0 && (u as usize) < w && (v as usize) < h {
                px[(v as usize * w + u as usize) * 4..][..3].copy_from_slice(&rgb);
            }
        };
        for (_, r) in &self.phantom.refs {
            for p in r.points() {
                mark(p, [220, 40, 40], 0.5);
            }
        }
        for o in &self.phantom.ostia {
            mark(o, [40, 200, 60], 2.0);
        }
        Ok(px)
    }
}

#[wasm_bindgen]
impl PhantomView {
    #[wasm_bindgen(constructor)]
    pub fn new(suite_name: &str, index: usize) -> std::result::Result<PhantomView, JsError> {
        PhantomView::load(suite_name, index).map_err(js)
    }

    pub fn name(&self) -> String {
        self.name.clone()
    }

    /// Voxel counts along x, y and z.
    pub fn dims(&self) -> Vec<u32> {
        self.phantom
            .volume
            .dims()
            .iter()
            .map(|&d| d as u32)
            .collect()
    }

    /// Width and height of slices across `axis`.
    #[wasm_bindgen(js_name = sliceSize)]
    pub fn slice_size(&self, axis: usize) -> std::result::Result<Vec<u32>, JsError> {
        let (w, h) = self.plane(axis).map_err(js)?;
        Ok(vec![w as u32, h as u32])
    }

    #[wasm_bindgen(js_name = sliceRgba)]
    pub fn slice_rgba(&self, axis: usize, k: usize) -> std::result::Result<Vec<u8>, JsError> {
        self.render(axis, k).map_err(js)
    }

    #[wasm_bindgen(js_name = branchCount)]
    pub fn branch_count(&self) -> usize {
        self.phantom.refs.len()
    }
}

/// Codebook directions, flattened `x y z` triples.
pub fn codebook_points(n: usize) -> Result<Vec<f64>> {
    Ok(fibonacci_codebook(n)?
        .dirs()
        .iter()
        .flat_map(|d| [d.x, d.y, d.z])
        .collect())
}

/// Softmax of `kappa·cos θ` to the z axis over an `n`-direction codebook;
/// with `bidirectional` the score is `kappa·|cos θ|`, the shape a tracker
/// sees inside a vessel.
pub fn peaked_distribution(n: usize, kappa: f64, bidirectional: bool) -> Result<Vec<f64>> {
    let logits: Vec<f64> = fibonacci_codebook(n)?
        .dirs()
        .iter()
        .map(|d| kappa * if bidirectional { d.z.abs() } else { d.z })
        .collect();
    Ok(DirectionDistribution::from_logits(&logits).probs().to_vec())
}

pub fn entropy_of(probs: &[f64]) -> Result<f64> {
    Ok(normalized_entropy(&DirectionDistribution::new(
        probs.to_vec(),
    )?))
}

/// `samples` evenly spaced values of the proximity target on `[0, d_end]`.
pub fn proximity_values(a: f64, d_max_mm: f64, d_end_mm: f64, samples: usize) -> Result<Vec<f64>> {
    let cfg = ProximityConfig {
        a,
        d_max_mm,
        ..ProximityConfig::seeds()
    };
    cfg.validate()?;
    if samples < 2 || !(d_end_mm > 0.0) {
        return Err(Error::Invalid(
            "need at least two samples over a positive range".into(),
        ));
    }
    Ok((0..samples)
        .map(|i| proximity_target(d_end_mm * i as f64 / (samples - 1) as f64, &cfg))
        .collect())
}

#[wasm_bindgen(js_name = codebookPoints)]
pub fn codebook_points_js(n: usize) -> std::result::Result<Vec<f64>, JsError> {
    codebook_points(n).map_err(js)
}

#[wasm_bindgen(js_name = peakedDistribution)]
pub fn peaked_distribution_js(
    n: usize,
    kappa: f64,
    bidirectional: bool,
) -> std::result::Result<Vec<f64>, JsError> {
    peaked_distribution(n, kappa, bidirectional).map_err(js)
}

#[wasm_bindgen(js_name = normalizedEntropy)]
pub fn entropy_js(probs: &[f64]) -> std::result::Result<f64, JsError> {
    entropy_of(probs).map_err(js)
}

#[wasm_bindgen(js_name = proximityCurve)]
pub fn proximity_curve_js(
    a: f64,
    d_max_mm: f64,
    d_end_mm: f64,
    samples: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    proximity_values(a, d_max_mm, d_end_mm, samples).map_err(js)
}
