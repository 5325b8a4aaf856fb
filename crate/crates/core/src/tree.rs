//! Automatic seeding and tree assembly.
//!
//! Two regression networks map an isotropic resampling of the image to
//! proximity values that peak on vessel centerlines (seeds) and at ostia.
//! Local maxima of those maps start tracks; a track is kept when it reaches
//! an ostium, and kept tracks consume the queued seeds they pass through.

use std::path::Path;

use rayon::prelude::*;

use crate::cnn::{forward_infer, Grid, Head, NetworkParams, NetworkSpec, WeightsFile};
use crate::format::{self, fmt_f64};
use crate::geometry::Vec3;
use crate::tracker::{track, Centerline, DirectionPredictor, TrackerConfig};
use crate::training::ProximityVolume;
use crate::volume::{PatchSpec, Volume};
use crate::{Error, Result};

/// Shape of the proximity ramp `exp(a·(1 − d/d_M)) − 1` and the grid it is
/// predicted on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProximityConfig {
    pub a: f64,
    pub d_max_mm: f64,
    pub spacing_mm: f64,
}

impl ProximityConfig {
    pub fn seeds() -> Self {
        ProximityConfig {
            a: 6.0,
            d_max_mm: 4.0,
            spacing_mm: 1.0,
        }
    }

    pub fn ostia() -> Self {
        ProximityConfig {
            d_max_mm: 16.0,
            ..ProximityConfig::seeds()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.d_max_mm > 0.0 && self.spacing_mm > 0.0) {
            return Err(Error::invalid(
                "proximity a, d_max and spacing must be positive",
            ));
        }
        Ok(())
    }

    /// Largest target value, reached on the centerline itself.
    pub fn peak(&self) -> f64 {
        self.a.exp() - 1.0
    }
}

/// `exp(a·(1 − d/d_M)) − 1` inside the cutoff, zero outside.
pub fn proximity_target(dist_mm: f64, cfg: &ProximityConfig) -> f64 {
    if dist_mm < cfg.d_max_mm {
        (cfg.a * (1.0 - dist_mm / cfg.d_max_mm)).exp() - 1.0
    } else {
        0.0
    }
}

/// Distance from every voxel centre of `grid` to the nearest of `polylines`
/// (single points count as degenerate polylines); `INFINITY` beyond `cutoff`.
pub fn distance_field(grid: &Volume, polylines: &[&[Vec3]], cutoff: f64) -> Vec<f64> {
    let dims = grid.dims();
    let sp = grid.spacing();
    let org = grid.origin();
    let mut out = vec![f64::INFINITY; grid.len()];
    let mut visit = |a: &Vec3, b: &Vec3| {
        let lo = a.inf(b) - Vec3::repeat(cutoff);
        let hi = a.sup(b) + Vec3::repeat(cutoff);
        let mut range = [(0usize, 0usize); 3];
        for ax in 0..3 {
            let l = ((lo[ax] - org[ax]) / sp[ax]).ceil().max(0.0);
            let h = ((hi[ax] - org[ax]) / sp[ax])
                .floor()
                .min((dims[ax] - 1) as f64);
            if l > h {
                return;
            }
            range[ax] = (l as usize, h as usize);
        }
        for k in range[2].0..=range[2].1 {
            for j in range[1].0..=range[1].1 {
                for i in range[0].0..=range[0].1 {
                    let p = grid.voxel_to_world(&Vec3::new(i as f64, j as f64, k as f64));
                    let d = crate::geometry::point_segment_distance(&p, a, b);
                    let idx = grid.index(i, j, k);
                    if d < out[idx] && d <= cutoff {
                        out[idx] = d;
                    }
                }
            }
        }
    };
    for pl in polylines {
        match pl.len() {
            0 => {}
            1 => visit(&pl[0], &pl[0]),
            _ => pl.windows(2).for_each(|w| visit(&w[0], &w[1])),
        }
    }
    out
}

/// Resample `vol` to the proximity grid and build the normalized target
/// (proximity divided by its peak) for the given structures.
pub fn proximity_training_volume(
    vol: &Volume,
    structures: &[&[Vec3]],
    cfg: &ProximityConfig,
    pad: f32,
) -> Result<ProximityVolume> {
    cfg.validate()?;
    let input = vol.resample_isotropic(cfg.spacing_mm, pad)?;
    let dist = distance_field(&input, structures, cfg.d_max_mm);
    let peak = cfg.peak();
    let values = dist
        .iter()
        .map(|&d| (proximity_target(d, cfg) / peak) as f32)
        .collect();
    let target = Volume::new(input.dims(), input.spacing(), input.origin(), values)?;
    let mut focus: Vec<Vec3> = Vec::new();
    for s in structures {
        for (i, p) in s.iter().enumerate() {
            if i == 0
                || focus
                    .last()
                    .is_none_or(|q: &Vec3| (p - q).norm() >= cfg.spacing_mm)
            {
                focus.push(*p);
            }
        }
    }
    Ok(ProximityVolume {
        input,
        target,
        focus,
    })
}

/// A trained proximity regressor. The network predicts proximity divided by
/// `scale`; predictions are multiplied back.
#[derive(Clone, Debug)]
pub struct ProximityModel {
    pub spec: NetworkSpec,
    pub params: NetworkParams<f32>,
    pub cfg: ProximityConfig,
    pub scale: f64,
}

impl ProximityModel {
    pub fn new(
        spec: NetworkSpec,
        params: NetworkParams<f32>,
        cfg: ProximityConfig,
    ) -> Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        cfg.validate()?;
        if spec.head != Head::Proximity {
            return Err(Error::invalid("proximity maps need a proximity head"));
        }
        Ok(ProximityModel {
            spec,
            params,
            cfg,
            scale: cfg.peak(),
        })
    }

    pub fn meta(&self) -> Vec<(String, String)> {
        vec![
            ("proximity_a".into(), fmt_f64(self.cfg.a)),
            ("proximity_dmax".into(), fmt_f64(self.cfg.d_max_mm)),
            ("proximity_scale".into(), fmt_f64(self.scale)),
        ]
    }

    pub fn to_weights(&self) -> WeightsFile {
        WeightsFile {
            spec: self.spec.clone(),
            params: self.params.clone(),
            patch: PatchSpec {
                width: self.spec.receptive_field(),
                voxel_mm: self.cfg.spacing_mm,
                pad_value: 0.0,
            },
            meta: self.meta(),
        }
    }

    pub fn from_weights(w: WeightsFile) -> Result<Self> {
        let cfg = ProximityConfig {
            a: w.meta_f64("proximity_a")?,
            d_max_mm: w.meta_f64("proximity_dmax")?,
            spacing_mm: w.patch.voxel_mm,
        };
        let scale = w.meta_f64("proximity_scale")?;
        let mut m = ProximityModel::new(w.spec, w.params, cfg)?;
        m.scale = scale;
        Ok(m)
    }
}

/// Output tile edge (voxels) for fully convolutional map prediction.
const TILE: usize = 24;

/// Predicted proximity on the isotropic resampling of `vol`, aligned voxel
/// for voxel with that resampling. The input is padded by half the receptive
/// field with `pad`, and tiles are evaluated independently.
pub fn predict_proximity_map(vol: &Volume, model: &ProximityModel, pad: f32) -> Result<Volume> {
    let grid = vol.resample_isotropic(model.cfg.spacing_mm, pad)?;
    let rf = model.spec.receptive_field();
    let dims = grid.dims();
    if dims.iter().any(|&d| d < rf) {
        return Err(Error::Shape(format!(
            "resampled volume {dims:?} is smaller than the receptive field {rf}"
        )));
    }
    let half = (rf / 2) as isize;
    let tiles: Vec<[usize; 3]> = (0..dims[2])
        .step_by(TILE)
        .flat_map(|z| {
            (0..dims[1])
                .step_by(TILE)
                .flat_map(move |y| (0..dims[0]).step_by(TILE).map(move |x| [x, y, z]))
        })
        .collect();
    let results: Vec<([usize; 3], [usize; 3], Vec<f32>)> = tiles
        .par_iter()
        .map(|&start| {
            let size = [0, 1, 2].map(|a| TILE.min(dims[a] - start[a]));
            let ext = size.map(|s| s + rf - 1);
            let mut data = Vec::with_capacity(ext.iter().product());
            for k in 0..ext[2] {
                let z = start[2] as isize + k as isize - half;
                for j in 0..ext[1] {
                    let y = start[1] as isize + j as isize - half;
                    for i in 0..ext[0] {
                        let x = start[0] as isize + i as isize - half;
                        let inside = [x, y, z]
                            .iter()
                            .zip(dims)
                            .all(|(&c, d)| c >= 0 && (c as usize) < d);
                        data.push(if inside {
                            grid.get(x as usize, y as usize, z as usize)
                        } else {
                            pad
                        });
                    }
                }
            }
            let out = forward_infer(&model.params, &model.spec, &Grid::from_data(ext, 1, data)?)?;
            Ok((start, size, out.data))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0f32; grid.len()];
    let scale = model.scale as f32;
    for (start, size, data) in results {
        for k in 0..size[2] {
            for j in 0..size[1] {
                for i in 0..size[0] {
                    let v = data[(k * size[1] + j) * size[0] + i] * scale;
                    values[grid.index(start[0] + i, start[1] + j, start[2] + k)] = v;
                }
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite proximity prediction".into()));
    }
    Volume::new(dims, grid.spacing(), grid.origin(), values)
}

/// A local maximum of a map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub voxel: [usize; 3],
    pub position: Vec3,
    pub value: f64,
}

/// Voxels strictly greater than all existing 26-neighbours and above
/// `min_value`, highest first (ties by linear voxel index), at most `k`.
pub fn local_maxima(map: &Volume, k: usize, min_value: f64) -> Vec<Peak> {
    let [nx, ny, nz] = map.dims();
    let mut peaks = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = map.get(x, y, z);
                if (v as f64) <= min_value {
                    continue;
                }
                let mut is_max = true;
                'n: for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dx == 0 && dy == 0 && dz == 0 {
                                continue;
                            }
                            let (a, b, c) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if a < 0
                                || b < 0
                                || c < 0
                                || a >= nx as i64
                                || b >= ny as i64
                                || c >= nz as i64
                            {
                                continue;
                            }
                            if map.get(a as usize, b as usize, c as usize) >= v {
                                is_max = false;
                                break 'n;
                            }
                        }
                    }
                }
                if is_max {
                    peaks.push((map.index(x, y, z), [x, y, z], v as f64));
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    peaks
        .into_iter()
        .take(k)
        .map(|(_, voxel, value)| Peak {
            voxel,
            position: map.voxel_to_world(&Vec3::new(
                voxel[0] as f64,
                voxel[1] as f64,
                voxel[2] as f64,
            )),
            value,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeConfig {
    pub num_seeds: usize,
    pub ostia_count: usize,
    /// A track reaches an ostium when one of its points lies this close to it.
    pub reach_radius_mm: f64,
    /// Seeds must look at most this far from a centerline (sets the seed threshold).
    pub seed_max_distance_mm: f64,
    /// Ostium candidates closer than this to a stronger one are skipped.
    pub ostium_min_separation_mm: f64,
    pub tracker: TrackerConfig,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            num_seeds: 200,
            ostia_count: 2,
            reach_radius_mm: 5.0,
            seed_max_distance_mm: 2.0,
            ostium_min_separation_mm: 10.0,
            tracker: TrackerConfig::default(),
        }
    }
}

/// Pick the strongest maxima that keep a minimum distance from each other.
pub fn select_ostia(candidates: &[Peak], count: usize, min_separation: f64) -> Result<Vec<Peak>> {
    let mut chosen: Vec<Peak> = Vec::with_capacity(count);
    for c in candidates {
        if chosen.len() == count {
            break;
        }
        if chosen
            .iter()
            .all(|o| (o.position - c.position).norm() >= min_separation)
        {
            chosen.push(*c);
        }
    }
    if chosen.len() < count {
        return Err(Error::TooFewOstia {
            found: chosen.len(),
            needed: count,
        });
    }
    Ok(chosen)
}

/// One tracked seed and whether its centerline joined the tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeLine {
    pub seed: Peak,
    pub centerline: Centerline,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeResult {
    pub ostia: Vec<Peak>,
    /// Every track that was run, in queue order.
    pub lines: Vec<TreeLine>,
    /// Seeds consumed by accepted lines without being tracked.
    pub skipped_seeds: usize,
}

impl TreeResult {
    pub fn accepted(&self) -> impl Iterator<Item = &Centerline> {
        self.lines
            .iter()
            .filter(|l| l.accepted)
            .map(|l| &l.centerline)
    }
}

/// True when some point of `cl` lies within `reach` of some ostium.
pub fn reaches_ostium(cl: &Centerline, ostia: &[Vec3], reach: f64) -> bool {
    cl.points
        .iter()
        .any(|p| ostia.iter().any(|o| (p - o).norm() <= reach))
}

/// Queue-based assembly from precomputed seed and ostium maps.
pub fn extract_tree_from_maps(
    vol: &Volume,
    tracker: &impl DirectionPredictor,
    seed_map: &Volume,
    seed_cfg: &ProximityConfig,
    ostia_map: &Volume,
    cfg: &TreeConfig,
) -> Result<TreeResult> {
    let ostia = select_ostia(
        &local_maxima(ostia_map, usize::MAX, 0.0),
        cfg.ostia_count,
        cfg.ostium_min_separation_mm,
    )?;
    let ostium_points: Vec<Vec3> = ostia.iter().map(|o| o.position).collect();
    let min_value = proximity_target(cfg.seed_max_distance_mm, seed_cfg);
    let seeds = local_maxima(seed_map, cfg.num_seeds, min_value);
    let mut consumed = vec![false; seeds.len()];
    let mut lines = Vec::new();
    let mut skipped = 0;
    for i in 0..seeds.len() {
        if consumed[i] {
            skipped += 1;
            continue;
        }
        if !vol.contains(&seeds[i].position, 0.0) {
            continue;
        }
        let cl = track(vol, tracker, &cfg.tracker, &seeds[i].position)?;
        let accepted = reaches_ostium(&cl, &ostium_points, cfg.reach_radius_mm);
        if accepted {
            for j in i + 1..seeds.len() {
                let s = seeds[j].position;
                if !consumed[j]
                    && cl
                        .points
                        .iter()
                        .zip(&cl.radii)
                        .any(|(p, r)| (p - s).norm() < *r)
                {
                    consumed[j] = true;
                }
            }
        }
        lines.push(TreeLine {
            seed: seeds[i],
            centerline: cl,
            accepted,
        });
    }
    Ok(TreeResult {
        ostia,
        lines,
        skipped_seeds: skipped,
    })
}

/// Fully automatic extraction: predict both maps, then assemble the tree.
pub fn extract_tree(
    vol: &Volume,
    tracker: &impl DirectionPredictor,
    seed_model: &ProximityModel,
    ostia_model: &ProximityModel,
    cfg: &TreeConfig,
    pad: f32,
) -> Result<TreeResult> {
    let seed_map = predict_proximity_map(vol, seed_model, pad)?;
    let ostia_map = predict_proximity_map(vol, ostia_model, pad)?;
    extract_tree_from_maps(vol, tracker, &seed_map, &seed_model.cfg, &ostia_map, cfg)
}

/// File name of the `i`-th tracked line in a tree output directory.
pub fn line_file_name(i: usize) -> String {
    format!("line_{i:03}.vte")
}

/// Manifest text: `ostium` lines, then one `line` row per track with its
/// status, seed and file name.
pub fn tree_manifest(result: &TreeResult) -> String {
    let mut s = String::from("tree v1\n");
    for (i, o) in result.ostia.iter().enumerate() {
        s.push_str(&format!(
            "ostium {i} {} {} {} {}\n",
            fmt_f64(o.position.x),
            fmt_f64(o.position.y),
            fmt_f64(o.position.z),
            fmt_f64(o.value)
        ));
    }
    for (i, l) in result.lines.iter().enumerate() {
        let p = l.seed.position;
        s.push_str(&format!(
            "line {i} {} seed {} {} {} value {} file {}\n",
            if l.accepted { "accepted" } else { "rejected" },
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z),
            fmt_f64(l.seed.value),
            line_file_name(i)
        ));
    }
    s.push_str(&format!("skipped_seeds {}\n", result.skipped_seeds));
    s
}

/// Write the manifest and one VTE1 file per tracked line into `dir`.
pub fn write_tree(result: &TreeResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, l) in result.lines.iter().enumerate() {
        crate::tracker::write_centerline(&l.centerline, &dir.join(line_file_name(i)))?;
    }
    format::write_file(&dir.join("tree.manifest"), tree_manifest(result).as_bytes())
}

/// Ostium positions and the file names of accepted lines from a tree manifest.
pub fn read_tree_manifest(path: &Path) -> Result<(Vec<Vec3>, Vec<String>)> {
    let lines = format::read_lines(path)?;
    let mut ostia = Vec::new();
    let mut accepted = Vec::new();
    for line in &lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.first().copied() {
            Some("ostium") if f.len() == 6 => {
                let v = format::parse_triple::<f64>("tree manifest", &f[2..5])?;
                ostia.push(Vec3::new(v[0], v[1], v[2]));
            }
            Some("line") if f.len() == 11 => {
                if f[2] == "accepted" {
                    accepted.push(f[10].to_string());
                }
            }
            Some("tree") | Some("skipped_seeds") => {}
            _ => return Err(Error::header("tree manifest", format!("bad line `{line}`"))),
        }
    }
    Ok((ostia, accepted))
}
