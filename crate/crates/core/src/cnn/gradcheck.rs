//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{
    backward, forward_train, proximity_loss, tracker_loss, NetworkParams, TrackerTarget,
};
use super::{Grid, Head, NetworkSpec};
use crate::sphere::DirectionDistribution;
use crate::Result;

/// Worst relative error for one parameter class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassError {
    /// `weights`, `bias`, `gamma` or `beta`.
    pub class: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn batch_loss(
    params: &mut NetworkParams<f64>,
    spec: &NetworkSpec,
    inputs: &[Grid<f64>],
    targets: &Targets,
    lambda_w: f64,
) -> Result<(f64, Vec<Grid<f64>>, super::ForwardCache<f64>)> {
    let cache = forward_train(params, spec, inputs.to_vec())?;
    let (loss, d) = match targets {
        Targets::Tracker(t) => tracker_loss(cache.outputs(), t, params, spec.head, 0.7, lambda_w)?,
        Targets::Proximity(t) => proximity_loss(cache.outputs(), t, params, lambda_w)?,
    };
    Ok((loss, d, cache))
}

enum Targets {
    Tracker(Vec<TrackerTarget>),
    Proximity(Vec<Grid<f64>>),
}

/// Compare backpropagated gradients of the full training loss (data term and
/// weight decay, batch-norm in training mode) with central differences.
/// Up to `per_tensor` randomly chosen entries of every trainable tensor are
/// checked; `floor` guards entries whose true gradient is zero.
pub fn check_gradients(
    spec: &NetworkSpec,
    batch: usize,
    input_width: usize,
    per_tensor: usize,
    floor: f64,
    seed: u64,
) -> Result<Vec<ClassError>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::<f64>::init(spec, &mut rng);
    // Move batch-norm scale/shift and biases off their initial values.
    for l in &mut params.layers {
        for v in l.bias.iter_mut().chain(&mut l.beta) {
            *v = rng.random_range(-0.3..0.3);
        }
        for v in &mut l.gamma {
            *v = rng.random_range(0.6..1.4);
        }
    }
    let out_w = spec.output_extent(input_width).ok_or_else(|| {
        crate::Error::Shape("gradient-check input below the receptive field".into())
    })?;
    let dims = [input_width; 3];
    let inputs: Vec<Grid<f64>> = (0..batch)
        .map(|_| {
            let data = (0..input_width.pow(3))
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            Grid::from_data(dims, 1, data)
        })
        .collect::<Result<_>>()?;
    let targets = match spec.head {
        Head::Tracker { num_directions } => Targets::Tracker(
            (0..batch)
                .map(|_| {
                    let a = rng.random_range(0..num_directions);
                    let b = (a + 1 + rng.random_range(0..num_directions - 1)) % num_directions;
                    TrackerTarget {
                        dist: DirectionDistribution::from_classes(num_directions, &[a, b]),
                        radius: rng.random_range(0.5..3.0),
                    }
                })
                .collect(),
        ),
        Head::Proximity => Targets::Proximity(
            (0..batch)
                .map(|_| {
                    let data = (0..out_w.pow(3))
                        .map(|_| rng.random_range(0.0..1.0))
                        .collect();
                    Grid::from_data([out_w; 3], 1, data)
                })
                .collect::<Result<_>>()?,
        ),
    };
    let lambda_w = 1e-3;
    let (_, d_out, cache) = batch_loss(&mut params, spec, &inputs, &targets, lambda_w)?;
    let grads = backward(&params, spec, &cache, d_out, lambda_w)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().cloned().collect();

    const CLASSES: [&str; 4] = ["weights", "bias", "gamma", "beta"];
    let mut report: Vec<ClassError> = CLASSES
        .iter()
        .map(|&class| ClassError {
            class,
            checked: 0,
            max_rel_error: 0.0,
        })
        .collect();
    let h = 1e-6;
    for (t, grad) in analytic.iter().enumerate() {
        if grad.is_empty() {
            continue;
        }
        let picks: Vec<usize> = if grad.len() <= per_tensor {
            (0..grad.len()).collect()
        } else {
            (0..per_tensor)
                .map(|_| rng.random_range(0..grad.len()))
                .collect()
        };
        for i in picks {
            let eval = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                p.trainable_mut()[t][i] += delta;
                Ok(batch_loss(&mut p, spec, &inputs, &targets, lambda_w)?.0)
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            let e = relative_error(grad[i], numeric, floor);
            let r = &mut report[t % 4];
            r.checked += 1;
            r.max_rel_error = r.max_rel_error.max(e);
        }
    }
    Ok(report)
}
