//! Centerline scoring: overlap (OV, OF, OT), inside accuracy (AI), marker
//! hits and Bland–Altman radius agreement.
//!
//! Both lines are resampled at a fixed arc-length spacing before labelling,
//! so scores do not depend on how densely either line was stored.

use crate::geometry::{point_segment_distance, resample_polyline, Vec3};
use crate::{Error, Result};

/// Arc-length spacing used for scoring.
pub const SCORING_SPACING_MM: f64 = 0.5;
/// Reference samples at least this wide count towards OT.
pub const CLINICAL_RADIUS_MM: f64 = 0.75;

/// Labelled samples of a reference/extracted pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub ref_points: Vec<Vec3>,
    pub ref_radii: Vec<f64>,
    /// Reference sample has an extracted sample within its radius.
    pub ref_tp: Vec<bool>,
    pub ext_points: Vec<Vec3>,
    pub ext_radii: Vec<f64>,
    /// Index of the nearest reference sample for each extracted sample.
    pub ext_nearest: Vec<usize>,
    pub ext_dist: Vec<f64>,
    /// Extracted sample lies within the radius of its nearest reference sample.
    pub ext_tp: Vec<bool>,
}

impl Correspondence {
    pub fn counts(&self) -> Counts {
        let tp_ref = self.ref_tp.iter().filter(|&&t| t).count();
        let tp_ext = self.ext_tp.iter().filter(|&&t| t).count();
        Counts {
            tp_ref,
            fn_: self.ref_tp.len() - tp_ref,
            tp_ext,
            fp: self.ext_tp.len() - tp_ext,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Counts {
    pub tp_ref: usize,
    pub fn_: usize,
    pub tp_ext: usize,
    pub fp: usize,
}

fn nearest(points: &[Vec3], p: &Vec3) -> (usize, f64) {
    points
        .iter()
        .enumerate()
        .map(|(i, q)| (i, (p - q).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty")
}

/// Resample both lines and label every sample TP, FP or FN.
pub fn correspond(
    ref_points: &[Vec3],
    ref_radii: &[f64],
    ext_points: &[Vec3],
    ext_radii: &[f64],
) -> Result<Correspondence> {
    if ref_points.is_empty() || ext_points.is_empty() {
        return Err(Error::invalid("cannot score an empty centerline"));
    }
    if ref_points.len() != ref_radii.len() || ext_points.len() != ext_radii.len() {
        return Err(Error::invalid("points and radii differ in length"));
    }
    let (rp, rr) = resample_polyline(ref_points, ref_radii, SCORING_SPACING_MM);
    let (ep, er) = resample_polyline(ext_points, ext_radii, SCORING_SPACING_MM);
    let mut ext_nearest = Vec::with_capacity(ep.len());
    let mut ext_dist = Vec::with_capacity(ep.len());
    let mut ext_tp = Vec::with_capacity(ep.len());
    for p in &ep {
        let (i, d) = nearest(&rp, p);
        ext_nearest.push(i);
        ext_dist.push(d);
        ext_tp.push(d <= rr[i]);
    }
    let ref_tp = rp
        .iter()
        .zip(&rr)
        .map(|(q, r)| ep.iter().any(|p| (p - q).norm() <= *r))
        .collect();
    Ok(Correspondence {
        ref_points: rp,
        ref_radii: rr,
        ref_tp,
        ext_points: ep,
        ext_radii: er,
        ext_nearest,
        ext_dist,
        ext_tp,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapScores {
    pub ov: f64,
    pub of: f64,
    pub ot: f64,
}

fn overlap(tp_ext: usize, tp_ref: usize, fp: usize, fn_: usize) -> f64 {
    let total = tp_ext + tp_ref + fp + fn_;
    if total == 0 {
        0.0
    } else {
        100.0 * (tp_ext + tp_ref) as f64 / total as f64
    }
}

/// OV over all samples; OF counts only reference samples before the first FN
/// (and extracted TPs matched to them) against all reference samples and all
/// extracted TPs; OT restricts OV to reference samples with radius of at
/// least [`CLINICAL_RADIUS_MM`] and extracted samples matched to them.
pub fn overlap_scores(c: &Correspondence) -> OverlapScores {
    let k = c.counts();
    let ov = overlap(k.tp_ext, k.tp_ref, k.fp, k.fn_);

    let first_fn = c.ref_tp.iter().position(|t| !t).unwrap_or(c.ref_tp.len());
    let prefix_ext = c
        .ext_tp
        .iter()
        .zip(&c.ext_nearest)
        .filter(|(t, &i)| **t && i < first_fn)
        .count();
    let of = if c.ref_tp.is_empty() {
        0.0
    } else {
        100.0 * (first_fn + prefix_ext) as f64 / (c.ref_tp.len() + k.tp_ext) as f64
    };

    let clinical = |i: usize| c.ref_radii[i] >= CLINICAL_RADIUS_MM;
    let (mut tr, mut fn_) = (0, 0);
    for (i, &t) in c.ref_tp.iter().enumerate() {
        if clinical(i) {
            if t {
                tr += 1;
            } else {
                fn_ += 1;
            }
        }
    }
    let (mut te, mut fp) = (0, 0);
    for (&t, &i) in c.ext_tp.iter().zip(&c.ext_nearest) {
        if clinical(i) {
            if t {
                te += 1;
            } else {
                fp += 1;
            }
        }
    }
    OverlapScores {
        ov,
        of,
        ot: overlap(te, tr, fp, fn_),
    }
}

/// Mean distance from TP extracted samples to the reference polyline.
pub fn ai_accuracy(c: &Correspondence) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, &t) in c.ext_points.iter().zip(&c.ext_tp) {
        if t {
            sum += distance_to_polyline(&c.ref_points, p);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoTruePositives);
    }
    Ok(sum / n as f64)
}

pub fn distance_to_polyline(points: &[Vec3], p: &Vec3) -> f64 {
    if points.len() == 1 {
        return (p - points[0]).norm();
    }
    points
        .windows(2)
        .map(|w| point_segment_distance(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Paired radii (extracted, reference): every TP reference sample against the
/// radius of the nearest extracted sample.
pub fn radius_pairs(c: &Correspondence) -> Vec<(f64, f64)> {
    c.ref_points
        .iter()
        .zip(&c.ref_radii)
        .zip(&c.ref_tp)
        .filter(|(_, &t)| t)
        .map(|((q, &r), _)| (c.ext_radii[nearest(&c.ext_points, q).0], r))
        .collect()
}

/// Full per-vessel score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreReport {
    pub overlap: OverlapScores,
    /// `None` when no extracted sample is a TP.
    pub ai: Option<f64>,
}

pub fn score(
    ref_points: &[Vec3],
    ref_radii: &[f64],
    ext_points: &[Vec3],
    ext_radii: &[f64],
) -> Result<ScoreReport> {
    let c = correspond(ref_points, ref_radii, ext_points, ext_radii)?;
    let ai = match ai_accuracy(&c) {
        Ok(v) => Some(v),
        Err(Error::NoTruePositives) => None,
        Err(e) => return Err(e),
    };
    Ok(ScoreReport {
        overlap: overlap_scores(&c),
        ai,
    })
}

/// Points spaced `interval_mm` along a reference line (starting at its first
/// point) with the local radius.
pub fn markers_along(points: &[Vec3], radii: &[f64], interval_mm: f64) -> Vec<(Vec3, f64)> {
    let (p, r) = resample_polyline(points, radii, interval_mm);
    let full = (crate::geometry::polyline_length(points) / interval_mm).floor() as usize + 1;
    p.into_iter().zip(r).take(full).collect()
}

/// Number of markers with an extracted point within the marker radius.
pub fn marker_hits(markers: &[(Vec3, f64)], ext: &[Vec3]) -> usize {
    markers
        .iter()
        .filter(|(m, r)| ext.iter().any(|p| (p - m).norm() <= *r))
        .count()
}

/// Distance from each reference ostium to the nearest detected ostium.
pub fn ostium_errors(reference: &[Vec3], detected: &[Vec3]) -> Vec<f64> {
    reference
        .iter()
        .map(|o| {
            detected
                .iter()
                .map(|d| (o - d).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Fraction of reference length with radius at least `min_radius` that lies
/// within the local radius of some extracted point. Returns `None` when no
/// reference sample qualifies.
pub fn tree_coverage(
    refs: &[(&[Vec3], &[f64])],
    extracted: &[&[Vec3]],
    min_radius: f64,
) -> Option<f64> {
    let ext: Vec<Vec3> = extracted
        .iter()
        .filter(|l| !l.is_empty())
        .flat_map(|l| resample_polyline(l, &vec![0.0; l.len()], SCORING_SPACING_MM).0)
        .collect();
    let mut total = 0usize;
    let mut covered = 0usize;
    for (pts, radii) in refs {
        let (p, r) = resample_polyline(pts, radii, SCORING_SPACING_MM);
        for (q, &rad) in p.iter().zip(&r) {
            if rad >= min_radius {
                total += 1;
                if ext.iter().any(|e| (e - q).norm() <= rad) {
                    covered += 1;
                }
            }
        }
    }
    (total > 0).then(|| covered as f64 / total as f64)
}

/// True when the extracted polyline passes within the local radius of both
/// reference end points.
pub fn reaches_both_ends(ref_points: &[Vec3], ref_radii: &[f64], extracted: &[Vec3]) -> bool {
    let n = ref_points.len();
    if n == 0 || extracted.is_empty() || ref_radii.len() != n {
        return false;
    }
    [0, n - 1]
        .iter()
        .all(|&i| distance_to_polyline(extracted, &ref_points[i]) <= ref_radii[i])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlandAltman {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub sd: f64,
    pub n: usize,
}

impl BlandAltman {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Mean of `auto − ref` with 95% limits of agreement (±1.96 sample sd).
pub fn bland_altman(pairs: &[(f64, f64)]) -> Result<BlandAltman> {
    if pairs.len() < 2 {
        return Err(Error::invalid(format!(
            "Bland–Altman needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let diffs: Vec<f64> = pairs.iter().map(|(a, r)| a - r).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    Ok(BlandAltman {
        mean,
        lower: mean - 1.96 * sd,
        upper: mean + 1.96 * sd,
        sd,
        n: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn straight(len: f64, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|i| Vec3::new(len * i as f64 / (n - 1) as f64, 0.0, 0.0))
            .collect()
    }

    #[test]
    fn identical_lines_score_perfectly() {
        let p = straight(20.0, 11);
        let r = vec![1.0; 11];
        let c = correspond(&p, &r, &p, &r).unwrap();
        let k = c.counts();
        assert_eq!((k.fp, k.fn_), (0, 0));
        let s = overlap_scores(&c);
        assert_eq!((s.ov, s.of, s.ot), (100.0, 100.0, 100.0));
        assert_eq!(ai_accuracy(&c).unwrap(), 0.0);
    }

    #[test]
    fn half_extraction_misses_only_the_distal_half() {
        let p = straight(20.0, 2);
        let half = straight(10.0, 2);
        let c = correspond(&p, &[1.0, 1.0], &half, &[1.0, 1.0]).unwrap();
        for (q, t) in c.ref_points.iter().zip(&c.ref_tp) {
            // Samples within one radius past the end are still covered.
            assert_eq!(*t, q.x <= 11.0, "x = {}", q.x);
        }
        assert_eq!(c.counts().fp, 0);
    }

    #[test]
    fn lateral_offset_of_two_radii_is_all_error() {
        let p = straight(20.0, 2);
        let q: Vec<Vec3> = p.iter().map(|v| v + Vec3::new(0.0, 2.0, 0.0)).collect();
        let c = correspond(&p, &[1.0, 1.0], &q, &[1.0, 1.0]).unwrap();
        let k = c.counts();
        assert_eq!((k.tp_ref, k.tp_ext), (0, 0));
        assert!(matches!(ai_accuracy(&c), Err(Error::NoTruePositives)));
        assert_eq!(score(&p, &[1.0, 1.0], &q, &[1.0, 1.0]).unwrap().ai, None);
        assert_eq!(overlap_scores(&c).of, 0.0);
    }

    /// Counts samples directly from the definition, without the scorer.
    fn brute_ov(ref_x: &[f64], ext_x: &[f64], r: f64) -> f64 {
        let mut tp = 0;
        let mut bad = 0;
        for &a in ref_x {
            if ext_x.iter().any(|&b| (a - b).abs() <= r) {
                tp += 1
            } else {
                bad += 1
            }
        }
        for &b in ext_x {
            if ref_x.iter().any(|&a| (a - b).abs() <= r) {
                tp += 1
            } else {
                bad += 1
            }
        }
        100.0 * tp as f64 / (tp + bad) as f64
    }

    #[test]
    fn distal_quarter_missing_gives_three_quarters_overlap() {
        // Radius small enough that the boundary sample does not spill over.
        let r = 0.1;
        let c = correspond(&straight(40.0, 2), &[r, r], &straight(30.0, 2), &[r, r]).unwrap();
        let ov = overlap_scores(&c).ov;
        let ref_x: Vec<f64> = (0..=80).map(|i| i as f64 * 0.5).collect();
        let ext_x: Vec<f64> = (0..=60).map(|i| i as f64 * 0.5).collect();
        assert!((ov - brute_ov(&ref_x, &ext_x, r)).abs() < 1e-12);
        // 61 + 61 TP, 20 FN. The reference-only fraction is the covered length share.
        assert!((ov - 100.0 * 122.0 / 142.0).abs() < 1e-12);
        let k = c.counts();
        assert_eq!((k.tp_ref - 1) * 4, (k.tp_ref + k.fn_ - 1) * 3);
    }

    #[test]
    fn missing_first_sample_zeroes_of_and_earlier_errors_reduce_it() {
        let p = straight(20.0, 2);
        let r = [0.4, 0.4];
        let late = correspond(
            &p,
            &r,
            &straight(1.0, 2)
                .iter()
                .map(|v| v + Vec3::new(1.0, 0.0, 0.0))
                .collect::<Vec<_>>(),
            &r,
        )
        .unwrap();
        assert_eq!(overlap_scores(&late).of, 0.0);

        let prefix = |len: f64| {
            let e = straight(len, 2);
            overlap_scores(&correspond(&p, &r, &e, &r).unwrap()).of
        };
        let (a, b, c) = (prefix(15.0), prefix(10.0), prefix(20.0));
        assert_eq!(c, 100.0);
        assert!(b < a && a < c);
    }

    #[test]
    fn parallel_offset_gives_offset_accuracy() {
        let p = straight(30.0, 2);
        let q: Vec<Vec3> = straight(30.0, 7)
            .iter()
            .map(|v| v + Vec3::new(0.0, 0.3, 0.0))
            .collect();
        let c = correspond(&p, &[1.0, 1.0], &q, &[1.0; 7]).unwrap();
        assert!((ai_accuracy(&c).unwrap() - 0.3).abs() < 0.01);
        // Shifting the extracted samples along the line does not matter either.
        let q2: Vec<Vec3> = q.iter().map(|v| v + Vec3::new(0.2, 0.0, 0.0)).collect();
        let c2 = correspond(&p, &[1.0, 1.0], &q2[..6], &[1.0; 6]).unwrap();
        assert!((ai_accuracy(&c2).unwrap() - 0.3).abs() < 0.01);
    }

    #[test]
    fn clinical_overlap_ignores_thin_parts() {
        let p = straight(20.0, 3);
        let r = [1.5, 0.5, 0.5];
        // Extract the thick part only: OT stays perfect while OV drops.
        let e = straight(9.0, 2);
        let c = correspond(&p, &r, &e, &[1.0, 1.0]).unwrap();
        let s = overlap_scores(&c);
        assert!(s.ov < 90.0);
        assert_eq!(s.ot, 100.0);
    }

    #[test]
    fn markers() {
        let p = straight(40.0, 2);
        let r = [1.0, 1.0];
        let m = markers_along(&p, &r, 10.0);
        assert_eq!(m.len(), 5);
        let on: Vec<Vec3> = m.iter().map(|(q, _)| *q).collect();
        assert_eq!(marker_hits(&m, &on), 5);
        let away: Vec<Vec3> = on.iter().map(|q| q + Vec3::new(0.0, 2.0, 0.0)).collect();
        assert_eq!(marker_hits(&m, &away), 0);
        // A tracked prefix of length L hits about L/10 + 1 markers.
        let (dense, _) = resample_polyline(&straight(23.0, 2), &[0.0, 0.0], 0.25);
        assert_eq!(marker_hits(&m, &dense), 3);
    }

    #[test]
    fn tree_level_scores() {
        let e = ostium_errors(
            &[Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)],
            &[Vec3::new(0.0, 1.0, 0.0), Vec3::new(9.0, 0.0, 0.0)],
        );
        assert_eq!(e, vec![1.0, 1.0]);
        assert!(ostium_errors(&[Vec3::zeros()], &[])[0].is_infinite());

        let thick = straight(20.0, 2);
        let thin: Vec<Vec3> = straight(10.0, 2)
            .iter()
            .map(|v| v + Vec3::new(0.0, 10.0, 0.0))
            .collect();
        let refs: [(&[Vec3], &[f64]); 2] = [(&thick, &[2.0, 2.0]), (&thin, &[1.0, 1.0])];
        // Thin branches do not count; half of the thick one is covered.
        let half = straight(10.0, 2);
        let c = tree_coverage(&refs, &[&half], 1.5).unwrap();
        assert!((c - 25.0 / 41.0).abs() < 1e-12, "{c}");
        assert_eq!(tree_coverage(&refs, &[&thick], 1.5), Some(1.0));
        assert_eq!(tree_coverage(&refs[1..], &[&thick], 1.5), None);

        // The far end is 1 mm beyond the track, inside a 1.5 mm radius but
        // outside a 0.5 mm one.
        let track = straight(19.0, 5);
        assert!(reaches_both_ends(&thick, &[1.5, 1.5], &track));
        assert!(!reaches_both_ends(&thick, &[1.5, 0.5], &track));
        assert!(!reaches_both_ends(&thick, &[2.0, 2.0], &half));
    }

    #[test]
    fn bland_altman_examples() {
        let z = bland_altman(&[(1.0, 1.0), (2.0, 2.0), (0.5, 0.5)]).unwrap();
        assert_eq!((z.mean, z.lower, z.upper), (0.0, 0.0, 0.0));
        let b = bland_altman(&[(1.2, 1.0), (0.8, 1.0)]).unwrap();
        assert!(b.mean.abs() < 1e-15);
        assert!((b.sd - 0.08f64.sqrt()).abs() < 1e-12);
        assert!((b.sd - 0.282_842_712_474_619).abs() < 1e-12);
        assert!((b.upper - 0.554_371_716_450_253_3).abs() < 1e-12);
        assert!((b.lower + 0.554_371_716_450_253_3).abs() < 1e-12);
        assert!(bland_altman(&[(1.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn self_overlap_is_perfect(pts in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0), 2..8), r in 0.3f64..3.0) {
            let p: Vec<Vec3> = pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            prop_assume!(crate::geometry::polyline_length(&p) > 1.0);
            let radii = vec![r; p.len()];
            let c = correspond(&p, &radii, &p, &radii).unwrap();
            prop_assert_eq!(overlap_scores(&c).ov, 100.0);
        }

        #[test]
        fn ai_is_rigid_invariant(ax in 0usize..3, angle in -3.0f64..3.0, t in (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), off in 0.0f64..0.8) {
            let p = vec![Vec3::zeros(), Vec3::new(8.0, 3.0, 0.0), Vec3::new(14.0, 3.0, 5.0)];
            let q: Vec<Vec3> = p.iter().map(|v| v + Vec3::new(0.0, 0.0, off)).collect();
            let r = vec![1.0; 3];
            let a = ai_accuracy(&correspond(&p, &r, &q, &r).unwrap()).unwrap();
            let rot = crate::geometry::axis_rotation(ax, angle);
            let tr = Vec3::new(t.0, t.1, t.2);
            let move_ = |v: &Vec3| rot * v + tr;
            let p2: Vec<Vec3> = p.iter().map(move_).collect();
            let q2: Vec<Vec3> = q.iter().map(move_).collect();
            let b = ai_accuracy(&correspond(&p2, &r, &q2, &r).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn ov_ignores_input_density(n in 2usize..30, m in 2usize..30, len in 5.0f64..30.0, cut in 0.3f64..1.0) {
            let p = straight(len, n);
            let q = straight(len * cut, m);
            let a = overlap_scores(&correspond(&p, &vec![0.6; n], &q, &vec![0.6; m]).unwrap()).ov;
            let b = overlap_scores(&correspond(&straight(len, 2), &[0.6, 0.6], &straight(len * cut, 2), &[0.6, 0.6]).unwrap()).ov;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn bland_altman_shifts_with_constant(pairs in prop::collection::vec((0.5f64..3.0, 0.5f64..3.0), 2..20), c in -1.0f64..1.0) {
            let a = bland_altman(&pairs).unwrap();
            let shifted: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x + c, y)).collect();
            let b = bland_altman(&shifted).unwrap();
            prop_assert!((b.mean - a.mean - c).abs() < 1e-9);
            prop_assert!((b.lower - a.lower - c).abs() < 1e-9);
            prop_assert!((b.upper - a.upper - c).abs() < 1e-9);
        }
    }
}
