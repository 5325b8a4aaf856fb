//! Direction codebook on the unit sphere and the normalized direction entropy.

use crate::geometry::{angle_between, Vec3};
use crate::{Error, Result};

/// A fixed set of near-uniformly distributed unit vectors. Class `i` of the
/// direction classifier corresponds to `dirs()[i]`.
#[derive(Clone, Debug)]
pub struct DirectionCodebook {
    dirs: Vec<Vec3>,
}

impl DirectionCodebook {
    pub fn from_dirs(dirs: Vec<Vec3>) -> Result<Self> {
        if dirs.len() < 4 {
            return Err(Error::invalid(format!(
                "a direction codebook needs at least 4 directions, got {}",
                dirs.len()
            )));
        }
        for (i, d) in dirs.iter().enumerate() {
            if (d.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "direction {i} is not a unit vector"
                )));
            }
        }
        Ok(DirectionCodebook { dirs })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn dirs(&self) -> &[Vec3] {
        &self.dirs
    }

    pub fn dir(&self, i: usize) -> Vec3 {
        self.dirs[i]
    }

    /// Index of the codebook vector with the smallest angle to `v`; ties go to the lowest index.
    pub fn nearest(&self, v: &Vec3) -> Result<usize> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid(
                "nearest direction of a zero or non-finite vector",
            ));
        }
        let u = v / n;
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in self.dirs.iter().enumerate() {
            let dot = d.dot(&u);
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        Ok(best)
    }

    /// All indices whose direction lies within `max_angle_deg` of direction `d` (always includes `d`).
    pub fn cone(&self, d: usize, max_angle_deg: f64) -> Vec<usize> {
        let limit = max_angle_deg.to_radians();
        let axis = self.dirs[d];
        self.dirs
            .iter()
            .enumerate()
            .filter(|&(i, v)| i == d || angle_between(&axis, v) <= limit)
            .map(|(i, _)| i)
            .collect()
    }

    /// Smallest pairwise angle in degrees (O(n²)).
    pub fn min_separation_deg(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.dirs.len() {
            for j in i + 1..self.dirs.len() {
                best = best.min(angle_between(&self.dirs[i], &self.dirs[j]));
            }
        }
        best.to_degrees()
    }
}

/// Golden-angle spiral point set: deterministic and near-uniform.
pub fn fibonacci_codebook(n: usize) -> Result<DirectionCodebook> {
    if n < 4 {
        return Err(Error::invalid(format!(
            "a direction codebook needs at least 4 directions, got {n}"
        )));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let dirs = (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z).normalize()
        })
        .collect();
    DirectionCodebook::from_dirs(dirs)
}

/// Posterior over codebook classes.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionDistribution {
    probs: Vec<f64>,
}

impl DirectionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty direction distribution"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(
                "direction probabilities must be finite and nonnegative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "direction probabilities sum to {sum}"
            )));
        }
        Ok(DirectionDistribution { probs })
    }

    /// Numerically stable softmax of arbitrary finite logits.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        DirectionDistribution {
            probs: exps.into_iter().map(|e| e / sum).collect(),
        }
    }

    pub fn uniform(n: usize) -> Self {
        DirectionDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Equal mass on each listed class (duplicates are merged).
    pub fn from_classes(n: usize, classes: &[usize]) -> Self {
        let mut uniq: Vec<usize> = classes.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        let mut probs = vec![0.0; n];
        for &c in &uniq {
            probs[c] = 1.0 / uniq.len() as f64;
        }
        DirectionDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability class among `candidates`, ties to the lowest index.
    pub fn argmax_among(&self, candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in candidates {
            let p = self.probs[i];
            match best {
                Some((bi, bp)) if p < bp || (p == bp && i > bi) => {}
                _ => best = Some((i, p)),
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn argmax(&self) -> usize {
        self.argmax_among(0..self.probs.len()).unwrap()
    }
}

/// Shannon entropy in bits divided by `log2 |D|`, with `0·log 0 = 0`.
pub fn normalized_entropy(p: &DirectionDistribution) -> f64 {
    let n = p.len();
    if n < 2 {
        return 0.0;
    }
    let h: f64 = p
        .probs
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.log2())
        .sum();
    (h / (n as f64).log2()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn too_small_codebook_is_rejected() {
        assert!(fibonacci_codebook(2).is_err());
        assert!(fibonacci_codebook(4).is_ok());
    }

    #[test]
    fn codebook_vectors_are_unit_and_separated() {
        for n in [4, 25, 100, 500] {
            let cb = fibonacci_codebook(n).unwrap();
            assert_eq!(cb.len(), n);
            assert!(cb.dirs().iter().all(|d| (d.norm() - 1.0).abs() < 1e-9));
            assert!(cb.min_separation_deg() > 1e-6_f64.to_degrees());
        }
    }

    #[test]
    fn codebook_is_near_uniform() {
        for n in [25, 100, 500, 1000] {
            let cb = fibonacci_codebook(n).unwrap();
            let nn: Vec<f64> = (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| angle_between(&cb.dir(i), &cb.dir(j)))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let max = nn.iter().cloned().fold(0.0, f64::max);
            let min = nn.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min <= 2.0, "n={n}: ratio {}", max / min);
        }
    }

    #[test]
    fn codebook_500_covers_sphere_within_10_degrees() {
        let cb = fibonacci_codebook(500).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let v = random_unit(&mut rng);
            let best = cb
                .dirs()
                .iter()
                .map(|d| angle_between(d, &v))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        // 10k random probes give a worst case near 6.5°.
        assert!(worst.to_degrees() <= 10.0, "{}", worst.to_degrees());
    }

    #[test]
    fn nearest_direction_basics() {
        let cb = fibonacci_codebook(500).unwrap();
        assert!(cb.nearest(&Vec3::zeros()).is_err());
        for k in [0, 17, 250, 499] {
            assert_eq!(cb.nearest(&cb.dir(k)).unwrap(), k);
            assert_eq!(cb.nearest(&(cb.dir(k) * 7.5)).unwrap(), k);
        }
        // The octahedron contains its own antipodes.
        let oct = DirectionCodebook::from_dirs(vec![
            Vec3::x(),
            -Vec3::x(),
            Vec3::y(),
            -Vec3::y(),
            Vec3::z(),
            -Vec3::z(),
        ])
        .unwrap();
        for k in 0..6 {
            let anti = oct.nearest(&-oct.dir(k)).unwrap();
            assert_eq!(oct.dir(anti), -oct.dir(k));
        }
    }

    #[test]
    fn nearest_direction_matches_brute_force_angle_scan() {
        let cb = fibonacci_codebook(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let v = random_unit(&mut rng) * rng.random_range(0.1..10.0);
            let k = cb.nearest(&v).unwrap();
            let a = angle_between(&cb.dir(k), &v);
            for d in cb.dirs() {
                assert!(a <= angle_between(d, &v) + 1e-12);
            }
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let cb = DirectionCodebook::from_dirs(vec![Vec3::x(), Vec3::y(), -Vec3::x(), -Vec3::y()])
            .unwrap();
        assert_eq!(cb.nearest(&Vec3::new(1.0, 1.0, 0.0)).unwrap(), 0);
        let dist = DirectionDistribution::uniform(4);
        assert_eq!(dist.argmax(), 0);
        assert_eq!(dist.argmax_among([3, 2]), Some(2));
    }

    #[test]
    fn cone_queries() {
        let cb = fibonacci_codebook(500).unwrap();
        assert_eq!(cb.cone(42, 180.0 - 1e-9).len(), 500);
        assert_eq!(cb.cone(42, 1.0), vec![42]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let dirs: Vec<Vec3> = (0..60).map(|_| random_unit(&mut rng)).collect();
            let cb = DirectionCodebook::from_dirs(dirs).unwrap();
            let d = rng.random_range(0..60);
            let max = rng.random_range(1.0..179.0);
            let cone = cb.cone(d, max);
            for i in 0..60 {
                let inside = i == d || angle_between(&cb.dir(i), &cb.dir(d)).to_degrees() <= max;
                assert_eq!(cone.contains(&i), inside);
            }
        }
    }

    #[test]
    fn entropy_closed_forms() {
        assert!((normalized_entropy(&DirectionDistribution::uniform(500)) - 1.0).abs() < 1e-9);
        let one_hot = DirectionDistribution::from_classes(500, &[3]);
        assert_eq!(normalized_entropy(&one_hot), 0.0);
        let two = DirectionDistribution::from_classes(500, &[3, 9]);
        let want = 1.0 / 500f64.log2();
        assert!((normalized_entropy(&two) - want).abs() < 1e-9);
        assert!((want - 0.11154).abs() < 1e-5);
    }

    #[test]
    fn softmax_is_a_distribution() {
        let d = DirectionDistribution::from_logits(&[1000.0, -1000.0, 3.0, 3.0]);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.argmax(), 0);
        assert!(DirectionDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DirectionDistribution::new(vec![0.5, 0.5]).is_ok());
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(w in prop::collection::vec(0.0f64..1.0, 4..64)) {
            let sum: f64 = w.iter().sum();
            prop_assume!(sum > 0.0);
            let d = DirectionDistribution::new(w.iter().map(|x| x / sum).collect()).unwrap();
            let h = normalized_entropy(&d);
            prop_assert!((0.0..=1.0).contains(&h));
        }

        #[test]
        fn cones_are_nested(d in 0usize..100, a in 1.0f64..179.0, b in 1.0f64..179.0) {
            let cb = fibonacci_codebook(100).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = cb.cone(d, lo);
            let big = cb.cone(d, hi);
            prop_assert!(small.iter().all(|i| big.contains(i)));
        }

        #[test]
        fn nearest_is_scale_invariant(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, s in 0.01f64..100.0) {
            let v = Vec3::new(x, y, z);
            prop_assume!(v.norm() > 1e-3);
            let cb = fibonacci_codebook(100).unwrap();
            prop_assert_eq!(cb.nearest(&v).unwrap(), cb.nearest(&(v * s)).unwrap());
        }
    }
}
