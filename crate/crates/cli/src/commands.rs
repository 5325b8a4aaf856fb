//! Command implementations. Each returns the text printed on stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use vtrack::cnn::{load_weights, save_weights, Head, NetworkSpec, WeightsFile};
use vtrack::metrics::{
    bland_altman, correspond, marker_hits, markers_along, ostium_errors, radius_pairs, score,
    tree_coverage,
};
use vtrack::phantom::{
    desk_split, parse_spec, standard_suites, suite, suite_manifest, NamedPhantom,
};
use vtrack::sphere::fibonacci_codebook;
use vtrack::tracker::{read_centerline, track, write_centerline, TrackerConfig, TrackerModel};
use vtrack::training::{
    train_proximity, train_tracker, AnnotatedVolume, CenterlineRef, ProximityTrainConfig,
    ProximityVolume, TrainConfig,
};
use vtrack::tree::{
    extract_tree_from_maps, predict_proximity_map, proximity_training_volume, read_tree_manifest,
    write_tree, ProximityConfig, ProximityModel, TreeConfig,
};
use vtrack::volume::{read_volume, PatchSpec};
use vtrack::{Error, Result, Vec3};

use crate::args::*;
use crate::data::{self, PhantomData};

/// Channel widths of the six hidden layers.
pub const FULL_HIDDEN: [usize; 6] = [32, 32, 32, 32, 64, 64];
pub const DESK_HIDDEN: [usize; 6] = [16, 16, 16, 16, 32, 32];
pub const FULL_DIRECTIONS: usize = 500;
pub const DESK_DIRECTIONS: usize = 100;
/// Marker spacing along reference vessels for hit counting.
pub const MARKER_INTERVAL_MM: f64 = 10.0;
/// Tree coverage counts reference branches at least this wide.
pub const TREE_MIN_RADIUS_MM: f64 = 1.5;

/// Resolves relative paths against the directory the run was started from.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub base: PathBuf,
    pub verbose: bool,
}

impl Ctx {
    pub fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn log(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }
}

// ---------------------------------------------------------------- phantom

pub fn phantom(ctx: &Ctx, a: &PhantomArgs) -> Result<String> {
    let out = ctx.path(&a.out);
    data::create_dir(&out)?;
    let mut written = 0;
    let mut write_all = |dir: &Path, list: &[NamedPhantom]| -> Result<()> {
        data::create_dir(dir)?;
        list.par_iter()
            .map(|p| data::write_phantom(dir, p))
            .collect::<Result<Vec<_>>>()?;
        written += list.len();
        Ok(())
    };
    if let Some(name) = &a.suite {
        let s = suite(name).ok_or_else(|| Error::Invalid(format!("unknown suite `{name}`")))?;
        write_all(&out, &s.phantoms)?;
        data::write_text(&out.join(format!("{name}.manifest")), &suite_manifest(&s)?)?;
    } else if let Some(spec) = &a.spec {
        let path = ctx.path(spec);
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| {
                Error::Invalid(format!("cannot name a phantom after {}", path.display()))
            })?
            .to_string();
        let spec = parse_spec(&data::read_text(&path)?)?;
        write_all(&out, &[NamedPhantom { name, spec }])?;
    } else if a.desk_split {
        let (train, held) = desk_split();
        write_all(&out.join("train"), &train)?;
        write_all(&out.join("held"), &held)?;
    } else {
        for s in standard_suites() {
            write_all(&out, &s.phantoms)?;
            data::write_text(
                &out.join(format!("{}.manifest", s.name)),
                &suite_manifest(&s)?,
            )?;
        }
    }
    Ok(format!("wrote {written} phantoms to {}\n", out.display()))
}

// ---------------------------------------------------------------- train

/// Fully resolved tracker training settings.
#[derive(Clone, Debug)]
pub struct TrackerPlan {
    pub cfg: TrainConfig,
    pub spec: NetworkSpec,
    pub patch: PatchSpec,
    pub seed: u64,
}

/// Fully resolved proximity training settings.
#[derive(Clone, Debug)]
pub struct ProximityPlan {
    pub cfg: ProximityTrainConfig,
    pub spec: NetworkSpec,
    pub prox: ProximityConfig,
    pub seed: u64,
}

fn apply_overrides(cfg: &mut TrainConfig, a: &TrainArgs) {
    if let Some(v) = a.iters {
        cfg.iterations = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr_initial = v;
    }
    if let Some(v) = a.lr_decay {
        cfg.lr_decay = v;
    }
    if let Some(v) = a.lr_interval {
        cfg.lr_interval = v;
    }
    if a.no_rot_aug {
        cfg.rotation_augment = false;
    }
    if a.no_trans_aug {
        cfg.translation_augment = false;
    }
}

pub fn tracker_plan(a: &TrainArgs) -> Result<TrackerPlan> {
    let mut cfg = if a.desk {
        TrainConfig::desk()
    } else {
        TrainConfig::default()
    };
    apply_overrides(&mut cfg, a);
    cfg.validate()?;
    let ndirs = a.ndirs.unwrap_or(if a.desk {
        DESK_DIRECTIONS
    } else {
        FULL_DIRECTIONS
    });
    let hidden = if a.desk { DESK_HIDDEN } else { FULL_HIDDEN };
    let width = a.width.unwrap_or(19);
    let spec = NetworkSpec::dilated_stack_for_field(
        width,
        hidden,
        Head::Tracker {
            num_directions: ndirs,
        },
    )?;
    let patch = PatchSpec::new(width, a.voxel.unwrap_or(0.5), 0.0)?;
    Ok(TrackerPlan {
        cfg,
        spec,
        patch,
        seed: a.seed,
    })
}

pub fn proximity_plan(a: &TrainArgs) -> Result<ProximityPlan> {
    let mut cfg = if a.desk {
        ProximityTrainConfig::desk()
    } else {
        ProximityTrainConfig::default()
    };
    apply_overrides(&mut cfg.train, a);
    cfg.train.validate()?;
    let hidden = if a.desk { DESK_HIDDEN } else { FULL_HIDDEN };
    let spec =
        NetworkSpec::dilated_stack_for_field(a.width.unwrap_or(19), hidden, Head::Proximity)?;
    let mut prox = match a.head {
        HeadKind::ProximityOstia => ProximityConfig::ostia(),
        _ => ProximityConfig::seeds(),
    };
    if let Some(v) = a.voxel {
        prox.spacing_mm = v;
    }
    prox.validate()?;
    Ok(ProximityPlan {
        cfg,
        spec,
        prox,
        seed: a.seed,
    })
}

fn progress(ctx: &Ctx, start: Instant) -> impl FnMut(usize, f64) + '_ {
    move |t, loss| {
        if t % 100 == 0 {
            ctx.log(|| format!("iter {t} loss {loss:.5} ({:.0?})", start.elapsed()));
        }
    }
}

pub fn train_tracker_weights(
    ctx: &Ctx,
    phantoms: &[PhantomData],
    plan: &TrackerPlan,
) -> Result<(WeightsFile, f64)> {
    let data: Vec<AnnotatedVolume> = phantoms
        .iter()
        .map(|p| AnnotatedVolume {
            volume: p.volume.clone(),
            refs: p.refs.iter().map(|(_, c)| c.clone()).collect(),
        })
        .collect();
    let Head::Tracker { num_directions } = plan.spec.head else {
        unreachable!("tracker plans carry a tracker head")
    };
    let cb = fibonacci_codebook(num_directions)?;
    let start = Instant::now();
    let out = train_tracker(
        &data,
        &plan.cfg,
        &plan.spec,
        &plan.patch,
        &cb,
        plan.seed,
        progress(ctx, start),
    )?;
    let final_loss = out.losses.last().copied().unwrap_or(f64::NAN);
    let w = WeightsFile {
        spec: plan.spec.clone(),
        params: out.params,
        patch: plan.patch,
        meta: vec![
            ("trained_iterations".into(), plan.cfg.iterations.to_string()),
            ("train_seed".into(), plan.seed.to_string()),
        ],
    };
    Ok((w, final_loss))
}

/// Resampled input and normalized target for one phantom.
pub fn proximity_volume(
    p: &PhantomData,
    head: HeadKind,
    prox: &ProximityConfig,
) -> Result<ProximityVolume> {
    let structures: Vec<Vec<Vec3>> = match head {
        HeadKind::ProximityOstia => p.ostia.iter().map(|o| vec![*o]).collect(),
        _ => p.refs.iter().map(|(_, c)| c.points().to_vec()).collect(),
    };
    let slices: Vec<&[Vec3]> = structures.iter().map(Vec::as_slice).collect();
    proximity_training_volume(&p.volume, &slices, prox, 0.0)
}

pub fn train_proximity_weights(
    ctx: &Ctx,
    phantoms: &[PhantomData],
    head: HeadKind,
    plan: &ProximityPlan,
) -> Result<(WeightsFile, f64)> {
    let data: Vec<ProximityVolume> = phantoms
        .iter()
        .map(|p| proximity_volume(p, head, &plan.prox))
        .collect::<Result<_>>()?;
    if head == HeadKind::ProximityOstia && data.iter().all(|d| d.focus.is_empty()) {
        return Err(Error::Invalid(
            "no training phantom lists any ostium".into(),
        ));
    }
    let start = Instant::now();
    let out = train_proximity(
        &data,
        &plan.cfg,
        &plan.spec,
        plan.seed,
        progress(ctx, start),
    )?;
    let final_loss = out.losses.last().copied().unwrap_or(f64::NAN);
    let mut w = ProximityModel::new(plan.spec.clone(), out.params, plan.prox)?.to_weights();
    w.meta.push((
        "trained_iterations".into(),
        plan.cfg.train.iterations.to_string(),
    ));
    w.meta.push(("train_seed".into(), plan.seed.to_string()));
    Ok((w, final_loss))
}

pub fn load_dir(ctx: &Ctx, dir: &Path, suites: Option<&[String]>) -> Result<Vec<PhantomData>> {
    let dir = ctx.path(dir);
    data::list_phantoms(&dir, suites)?
        .iter()
        .map(|n| data::load_phantom(&dir, n))
        .collect()
}

pub fn train(ctx: &Ctx, a: &TrainArgs) -> Result<String> {
    let default_suites =
        (a.head == HeadKind::ProximityOstia).then(|| vec!["branching".to_string()]);
    let suites = a.suites.clone().or(default_suites);
    let phantoms = load_dir(ctx, &a.data, suites.as_deref())?;
    let (w, loss) = match a.head {
        HeadKind::Tracker => train_tracker_weights(ctx, &phantoms, &tracker_plan(a)?)?,
        head => train_proximity_weights(ctx, &phantoms, head, &proximity_plan(a)?)?,
    };
    let out = ctx.path(&a.out);
    save_weights(&w, &out)?;
    Ok(format!(
        "trained on {} phantoms; final loss {loss:.6}; wrote {}\n",
        phantoms.len(),
        out.display()
    ))
}

// ---------------------------------------------------------------- tracking

pub fn tracker_config(f: &TrackerFlags) -> Result<TrackerConfig> {
    let cfg = TrackerConfig {
        entropy_threshold: f.theta_h,
        max_steps: f.max_steps,
        ..TrackerConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_tracker(path: &Path, ndirs: Option<usize>) -> Result<TrackerModel> {
    let w = load_weights(path)?;
    if let Some(n) = ndirs {
        w.expect_directions(n)?;
    }
    TrackerModel::from_weights(w)
}

pub fn track_cmd(ctx: &Ctx, a: &TrackArgs) -> Result<String> {
    let vol = read_volume(&ctx.path(&a.volume))?;
    let model = load_tracker(&ctx.path(&a.weights), a.ndirs)?;
    let cl = track(&vol, &model, &tracker_config(&a.tracker)?, &a.seed_point)?;
    let out = ctx.path(&a.out);
    write_centerline(&cl, &out)?;
    Ok(format!(
        "{} points, {:.2} mm, stops {} / {}; wrote {}\n",
        cl.len(),
        cl.length(),
        cl.stop_fwd,
        cl.stop_bwd,
        out.display()
    ))
}

/// Seed for every reference vessel: its arc-length midpoint, displaced
/// perpendicular to the vessel by `offset` local radii in a random direction.
pub fn vessel_seeds(
    refs: &[(u32, CenterlineRef)],
    offset: f64,
    rng: &mut impl Rng,
) -> Vec<(u32, Vec3)> {
    refs.iter()
        .map(|(id, c)| {
            let s = c.length() / 2.0;
            let p = c.point_at_arclength(s);
            let t = (c.point_at_arclength(s + 0.5) - c.point_at_arclength(s - 0.5)).normalize();
            let dir = loop {
                let v = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let v = v - t * t.dot(&v);
                if v.norm() > 1e-3 {
                    break v.normalize();
                }
            };
            (*id, p + dir * (offset * c.radius_at_arclength(s)))
        })
        .collect()
}

pub fn track_all(ctx: &Ctx, a: &TrackAllArgs) -> Result<String> {
    if !(a.seed_offset >= 0.0 && a.seed_offset.is_finite()) {
        return Err(Error::Invalid(
            "seed offset must be a finite non-negative fraction".into(),
        ));
    }
    let dir = ctx.path(&a.data);
    let out = ctx.path(&a.out);
    data::create_dir(&out)?;
    let model = load_tracker(&ctx.path(&a.weights), None)?;
    let cfg = tracker_config(&a.tracker)?;
    let names = data::list_phantoms(&dir, a.suites.as_deref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut report = String::new();
    let mut vessels = 0;
    for name in &names {
        let ph = data::load_phantom(&dir, name)?;
        let seeds = vessel_seeds(&ph.refs, a.seed_offset, &mut rng);
        let start = Instant::now();
        let lines = seeds
            .par_iter()
            .map(|(id, s)| Ok((*id, track(&ph.volume, &model, &cfg, s)?)))
            .collect::<Result<Vec<_>>>()?;
        for (id, cl) in &lines {
            write_centerline(cl, &data::vessel_file(&out, name, *id))?;
            writeln!(
                report,
                "{name} b{id} points {} length {:.2} stops {} {}",
                cl.len(),
                cl.length(),
                cl.stop_fwd,
                cl.stop_bwd
            )
            .unwrap();
        }
        vessels += lines.len();
        ctx.log(|| format!("{name}: {} vessels in {:.2?}", lines.len(), start.elapsed()));
    }
    writeln!(report, "tracked {vessels} vessels into {}", out.display()).unwrap();
    Ok(report)
}

pub fn load_proximity(path: &Path) -> Result<ProximityModel> {
    ProximityModel::from_weights(load_weights(path)?)
}

pub fn autotrack(ctx: &Ctx, a: &AutotrackArgs) -> Result<String> {
    let vol = read_volume(&ctx.path(&a.volume))?;
    let tracker = load_tracker(&ctx.path(&a.tracker_weights), None)?;
    let seeds = load_proximity(&ctx.path(&a.seed_weights))?;
    let ostia = load_proximity(&ctx.path(&a.ostia_weights))?;
    let cfg = TreeConfig {
        num_seeds: a.num_seeds,
        tracker: tracker_config(&a.tracker)?,
        ..TreeConfig::default()
    };
    let start = Instant::now();
    let seed_map = predict_proximity_map(&vol, &seeds, 0.0)?;
    ctx.log(|| format!("seed map {:.1?}", start.elapsed()));
    let ostia_map = predict_proximity_map(&vol, &ostia, 0.0)?;
    ctx.log(|| format!("ostium map {:.1?}", start.elapsed()));
    let tree = extract_tree_from_maps(&vol, &tracker, &seed_map, &seeds.cfg, &ostia_map, &cfg)?;
    ctx.log(|| format!("tracking {:.1?}", start.elapsed()));
    let out = ctx.path(&a.out);
    write_tree(&tree, &out)?;
    Ok(format!(
        "{} ostia, {} tracks, {} accepted, {} seeds skipped in {:.1?}; wrote {}\n",
        tree.ostia.len(),
        tree.lines.len(),
        tree.accepted().count(),
        tree.skipped_seeds,
        start.elapsed(),
        out.display()
    ))
}

// ---------------------------------------------------------------- scoring

/// Scores of one tracked reference vessel.
#[derive(Clone, Debug, PartialEq)]
pub struct VesselScore {
    pub phantom: String,
    pub branch: u32,
    pub ov: f64,
    pub of: f64,
    pub ot: f64,
    pub ai: Option<f64>,
    pub hits: usize,
    pub markers: usize,
    pub ostium: bool,
}

/// Ostium error and coverage of one extracted tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeScore {
    pub phantom: String,
    pub ostium_errors: Vec<f64>,
    pub coverage: Option<f64>,
    pub accepted: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub vessels: Vec<VesselScore>,
    pub trees: Vec<TreeScore>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or("nan".into(), |x| format!("{x:.decimals$}"))
}

impl EvalReport {
    pub fn mean_ov(&self) -> Option<f64> {
        mean(self.vessels.iter().map(|v| v.ov))
    }

    pub fn mean_ai(&self) -> Option<f64> {
        mean(self.vessels.iter().filter_map(|v| v.ai))
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        if !self.vessels.is_empty() {
            s.push_str("# vessel OV OF OT AI hits ostium\n");
        }
        for v in &self.vessels {
            writeln!(
                s,
                "{}/b{} {:.2} {:.2} {:.2} {} {}/{} {}",
                v.phantom,
                v.branch,
                v.ov,
                v.of,
                v.ot,
                fmt_opt(v.ai, 4),
                v.hits,
                v.markers,
                if v.ostium { "yes" } else { "no" }
            )
            .unwrap();
        }
        if !self.trees.is_empty() {
            s.push_str("# tree max_ostium_error_mm coverage accepted\n");
        }
        for t in &self.trees {
            let max_err = t.ostium_errors.iter().cloned().fold(0.0, f64::max);
            writeln!(
                s,
                "{} {:.3} {} {}",
                t.phantom,
                max_err,
                fmt_opt(t.coverage, 4),
                t.accepted
            )
            .unwrap();
        }
        let n = self.vessels.len();
        writeln!(s, "vessels={n}").unwrap();
        if n > 0 {
            let m = |f: fn(&VesselScore) -> f64| mean(self.vessels.iter().map(f)).unwrap();
            writeln!(s, "mean_ov={:.4}", m(|v| v.ov)).unwrap();
            writeln!(s, "mean_of={:.4}", m(|v| v.of)).unwrap();
            writeln!(s, "mean_ot={:.4}", m(|v| v.ot)).unwrap();
            writeln!(s, "mean_ai={}", fmt_opt(self.mean_ai(), 4)).unwrap();
            writeln!(
                s,
                "ai_undefined={}",
                self.vessels.iter().filter(|v| v.ai.is_none()).count()
            )
            .unwrap();
            writeln!(
                s,
                "marker_hits={}",
                self.vessels.iter().map(|v| v.hits).sum::<usize>()
            )
            .unwrap();
            writeln!(
                s,
                "markers={}",
                self.vessels.iter().map(|v| v.markers).sum::<usize>()
            )
            .unwrap();
            writeln!(
                s,
                "ostium_reached={}",
                self.vessels.iter().filter(|v| v.ostium).count()
            )
            .unwrap();
        }
        writeln!(s, "trees={}", self.trees.len()).unwrap();
        if !self.trees.is_empty() {
            let worst = self
                .trees
                .iter()
                .flat_map(|t| t.ostium_errors.iter().cloned())
                .fold(0.0, f64::max);
            writeln!(s, "max_ostium_error={worst:.4}").unwrap();
            let cov = mean(self.trees.iter().filter_map(|t| t.coverage));
            writeln!(s, "mean_coverage={}", fmt_opt(cov, 4)).unwrap();
        }
        s
    }
}

pub fn score_vessel(
    phantom: &str,
    branch: u32,
    reference: &CenterlineRef,
    ostia: &[Vec3],
    ext_points: &[Vec3],
    ext_radii: &[f64],
) -> Result<VesselScore> {
    let sc = score(reference.points(), reference.radii(), ext_points, ext_radii)?;
    let markers = markers_along(reference.points(), reference.radii(), MARKER_INTERVAL_MM);
    let reach = TreeConfig::default().reach_radius_mm;
    Ok(VesselScore {
        phantom: phantom.to_string(),
        branch,
        ov: sc.overlap.ov,
        of: sc.overlap.of,
        ot: sc.overlap.ot,
        ai: sc.ai,
        hits: marker_hits(&markers, ext_points),
        markers: markers.len(),
        ostium: ext_points
            .iter()
            .any(|p| ostia.iter().any(|o| (p - o).norm() <= reach)),
    })
}

pub fn score_tree(
    phantom: &str,
    refs: &[(u32, CenterlineRef)],
    ostia: &[Vec3],
    found_ostia: &[Vec3],
    lines: &[Vec<Vec3>],
) -> TreeScore {
    let r: Vec<(&[Vec3], &[f64])> = refs.iter().map(|(_, c)| (c.points(), c.radii())).collect();
    let l: Vec<&[Vec3]> = lines.iter().map(Vec::as_slice).collect();
    TreeScore {
        phantom: phantom.to_string(),
        ostium_errors: ostium_errors(ostia, found_ostia),
        coverage: tree_coverage(&r, &l, TREE_MIN_RADIUS_MM),
        accepted: lines.len(),
    }
}

/// Score every `<phantom>__b<id>.vte` and `<phantom>/tree.manifest` found in
/// `ext_dir` against the references in `ref_dir`.
pub fn evaluate(ref_dir: &Path, ext_dir: &Path) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for name in data::list_phantoms(ref_dir, None)? {
        let (refs, ostia) = data::load_refs(ref_dir, &name)?;
        for (id, r) in &refs {
            let f = data::vessel_file(ext_dir, &name, *id);
            if f.exists() {
                let cl = read_centerline(&f)?;
                report
                    .vessels
                    .push(score_vessel(&name, *id, r, &ostia, &cl.points, &cl.radii)?);
            }
        }
        let manifest = data::tree_dir(ext_dir, &name).join("tree.manifest");
        if manifest.exists() {
            let (found, files) = read_tree_manifest(&manifest)?;
            let lines = files
                .iter()
                .map(|f| Ok(read_centerline(&data::tree_dir(ext_dir, &name).join(f))?.points))
                .collect::<Result<Vec<_>>>()?;
            report
                .trees
                .push(score_tree(&name, &refs, &ostia, &found, &lines));
        }
    }
    if report.vessels.is_empty() && report.trees.is_empty() {
        return Err(Error::Invalid(format!(
            "no extracted centerlines in {} match references in {}",
            ext_dir.display(),
            ref_dir.display()
        )));
    }
    Ok(report)
}

pub fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<String> {
    let text = evaluate(&ctx.path(&a.ref_dir), &ctx.path(&a.extracted_dir))?.text();
    if let Some(out) = &a.out {
        data::write_text(&ctx.path(out), &text)?;
    }
    Ok(text)
}

/// Pooled (extracted, reference) radius pairs over every matched vessel.
pub fn collect_radius_pairs(ref_dir: &Path, ext_dir: &Path) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::new();
    for name in data::list_phantoms(ref_dir, None)? {
        let (refs, _) = data::load_refs(ref_dir, &name)?;
        for (id, r) in &refs {
            let f = data::vessel_file(ext_dir, &name, *id);
            if f.exists() {
                let cl = read_centerline(&f)?;
                let c = correspond(r.points(), r.radii(), &cl.points, &cl.radii)?;
                pairs.extend(radius_pairs(&c));
            }
        }
    }
    Ok(pairs)
}

pub fn radius_eval(ctx: &Ctx, a: &RadiusEvalArgs) -> Result<String> {
    let pairs = collect_radius_pairs(&ctx.path(&a.ref_dir), &ctx.path(&a.extracted_dir))?;
    let ba = bland_altman(&pairs)?;
    let text = format!(
        "pairs={}\nmean_difference={:.5}\nlower_loa={:.5}\nupper_loa={:.5}\nloa_width={:.5}\n",
        ba.n,
        ba.mean,
        ba.lower,
        ba.upper,
        ba.width()
    );
    if let Some(out) = &a.out {
        data::write_text(&ctx.path(out), &text)?;
    }
    Ok(text)
}
