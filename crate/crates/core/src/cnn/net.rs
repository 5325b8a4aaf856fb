//! Parameters, batched training forward/backward passes, single-sample
//! inference and the two loss functions.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::conv::{conv3d_dilated, conv3d_dilated_backward};
use super::{Activation, Grid, Head, NetworkSpec, Real};
use crate::sphere::DirectionDistribution;
use crate::{Error, Result};

/// Running statistics are updated as `running = m·running + (1 − m)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    /// Batch-norm scale and shift; empty for layers without batch norm.
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    pub layers: Vec<LayerParams<T>>,
}

/// Gradients for the trainable tensors of one layer (same shapes as [`LayerParams`]).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Real> NetworkParams<T> {
    /// He-normal kernels, zero biases, unit batch-norm scale, zero shift.
    pub fn init(spec: &NetworkSpec, rng: &mut impl Rng) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let fan_in = l.kernel_width.pow(3) * l.in_channels;
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                let c = l.out_channels;
                let bn = |v: f64| {
                    if l.batch_norm {
                        vec![T::of(v); c]
                    } else {
                        Vec::new()
                    }
                };
                LayerParams {
                    weights: (0..l.kernel_len())
                        .map(|_| T::of(normal.sample(rng)))
                        .collect(),
                    bias: vec![T::zero(); c],
                    gamma: bn(1.0),
                    beta: bn(0.0),
                    running_mean: bn(0.0),
                    running_var: bn(1.0),
                }
            })
            .collect();
        NetworkParams { layers }
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "{} parameter layers for a {}-layer network",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (p, l)) in self.layers.iter().zip(&spec.layers).enumerate() {
            let c = l.out_channels;
            let bn = if l.batch_norm { c } else { 0 };
            let ok = p.weights.len() == l.kernel_len()
                && p.bias.len() == c
                && p.gamma.len() == bn
                && p.beta.len() == bn
                && p.running_mean.len() == bn
                && p.running_var.len() == bn;
            if !ok {
                return Err(Error::Shape(format!(
                    "layer {i} tensors do not match its spec"
                )));
            }
            if p.running_var.iter().any(|v| !(*v > T::zero())) {
                return Err(Error::invalid(format!(
                    "layer {i} has a non-positive running variance"
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::of(x.f64())).collect();
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: c(&l.weights),
                    bias: c(&l.bias),
                    gamma: c(&l.gamma),
                    beta: c(&l.beta),
                    running_mean: c(&l.running_mean),
                    running_var: c(&l.running_var),
                })
                .collect(),
        }
    }

    /// Trainable tensors in a fixed order: per layer weights, bias, gamma, beta.
    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias, &mut l.gamma, &mut l.beta])
            .collect()
    }

    pub fn trainable(&self) -> Vec<&Vec<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias, &l.gamma, &l.beta])
            .collect()
    }

    /// Sum of squared convolution kernel weights (the weight-decay term).
    pub fn kernel_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .map(|w| w.f64() * w.f64())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            [
                &l.weights,
                &l.bias,
                &l.gamma,
                &l.beta,
                &l.running_mean,
                &l.running_var,
            ]
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
        })
    }
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                    gamma: vec![T::zero(); l.gamma.len()],
                    beta: vec![T::zero(); l.beta.len()],
                })
                .collect(),
        }
    }

    /// Same order as [`NetworkParams::trainable_mut`].
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias, &l.gamma, &l.beta])
            .collect()
    }
}

/// Everything the backward pass needs from a training-mode forward pass.
pub struct ForwardCache<T> {
    /// `acts[0]` is the input batch, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<Grid<T>>>,
    /// Normalized pre-activations of batch-norm layers.
    xhat: Vec<Option<Vec<Grid<T>>>>,
    inv_std: Vec<Vec<f64>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn outputs(&self) -> &[Grid<T>] {
        self.acts.last().unwrap()
    }
}

fn check_input<T: Real>(spec: &NetworkSpec, g: &Grid<T>) -> Result<()> {
    if g.channels != spec.in_channels() {
        return Err(Error::Shape(format!(
            "input has {} channels, network expects {}",
            g.channels,
            spec.in_channels()
        )));
    }
    if g.dims.iter().any(|&d| d < spec.receptive_field()) {
        return Err(Error::Shape(format!(
            "input {:?} is smaller than the receptive field {}",
            g.dims,
            spec.receptive_field()
        )));
    }
    Ok(())
}

/// Per-channel (sum, sum of squares about `center`) over a batch, in sample order.
fn channel_sums<T: Real>(batch: &[Grid<T>], center: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    let c = center.len();
    let partial: Vec<(Vec<f64>, Vec<f64>)> = batch
        .par_iter()
        .map(|g| {
            let mut s = vec![0.0; c];
            let mut q = vec![0.0; c];
            for row in g.data.chunks_exact(c) {
                for ch in 0..c {
                    let d = row[ch].f64() - center[ch];
                    s[ch] += d;
                    q[ch] += d * d;
                }
            }
            (s, q)
        })
        .collect();
    let mut s = vec![0.0; c];
    let mut q = vec![0.0; c];
    for (ps, pq) in partial {
        for ch in 0..c {
            s[ch] += ps[ch];
            q[ch] += pq[ch];
        }
    }
    let n = batch.iter().map(Grid::positions).sum();
    (s, q, n)
}

/// Training-mode forward pass: batch statistics, running statistics updated.
pub fn forward_train<T: Real>(
    params: &mut NetworkParams<T>,
    spec: &NetworkSpec,
    batch: Vec<Grid<T>>,
) -> Result<ForwardCache<T>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    for g in &batch {
        check_input(spec, g)?;
        if g.dims != batch[0].dims {
            return Err(Error::Shape("batch samples differ in size".into()));
        }
    }
    let mut acts = vec![batch];
    let mut xhat = Vec::with_capacity(spec.layers.len());
    let mut inv_std = Vec::with_capacity(spec.layers.len());
    for (l, p) in spec.layers.iter().zip(params.layers.iter_mut()) {
        let input = acts.last().unwrap();
        let z: Vec<Grid<T>> = input
            .par_iter()
            .map(|g| conv3d_dilated(g, &p.weights, &p.bias, l.kernel_width, l.dilation))
            .collect::<Result<_>>()?;
        let c = l.out_channels;
        let (normed, out, istd) = if l.batch_norm {
            let (s, _, n) = channel_sums(&z, &vec![0.0; c]);
            let mean: Vec<f64> = s.iter().map(|v| v / n as f64).collect();
            let (_, q, _) = channel_sums(&z, &mean);
            let var: Vec<f64> = q.iter().map(|v| v / n as f64).collect();
            let istd: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            let unbias = if n > 1 {
                n as f64 / (n - 1) as f64
            } else {
                1.0
            };
            for ch in 0..c {
                let rm = p.running_mean[ch].f64();
                let rv = p.running_var[ch].f64();
                p.running_mean[ch] = T::of(BN_MOMENTUM * rm + (1.0 - BN_MOMENTUM) * mean[ch]);
                p.running_var[ch] =
                    T::of(BN_MOMENTUM * rv + (1.0 - BN_MOMENTUM) * var[ch] * unbias);
            }
            let meant: Vec<T> = mean.iter().map(|&v| T::of(v)).collect();
            let istdt: Vec<T> = istd.iter().map(|&v| T::of(v)).collect();
            let (gamma, beta) = (&p.gamma, &p.beta);
            let act = l.activation;
            let pairs: Vec<(Grid<T>, Grid<T>)> = z
                .into_par_iter()
                .map(|mut g| {
                    let mut y = g.clone();
                    for (xr, yr) in g.data.chunks_exact_mut(c).zip(y.data.chunks_exact_mut(c)) {
                        for ch in 0..c {
                            let xh = (xr[ch] - meant[ch]) * istdt[ch];
                            xr[ch] = xh;
                            let v = gamma[ch] * xh + beta[ch];
                            yr[ch] = activate(act, v);
                        }
                    }
                    (g, y)
                })
                .collect();
            let (normed, out): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            (Some(normed), out, istd)
        } else {
            let act = l.activation;
            let out = z
                .into_iter()
                .map(|mut g| {
                    g.data.iter_mut().for_each(|v| *v = activate(act, *v));
                    g
                })
                .collect();
            (None, out, Vec::new())
        };
        xhat.push(normed);
        inv_std.push(istd);
        acts.push(out);
    }
    Ok(ForwardCache {
        acts,
        xhat,
        inv_std,
    })
}

#[inline]
fn activate<T: Real>(act: Activation, v: T) -> T {
    match act {
        Activation::Relu => v.max(T::zero()),
        Activation::Identity => v,
    }
}

/// Inference-mode forward pass of one input using running statistics.
pub fn forward_infer<T: Real>(
    params: &NetworkParams<T>,
    spec: &NetworkSpec,
    input: &Grid<T>,
) -> Result<Grid<T>> {
    check_input(spec, input)?;
    let mut cur: Option<Grid<T>> = None;
    for (l, p) in spec.layers.iter().zip(&params.layers) {
        let src = cur.as_ref().unwrap_or(input);
        let mut z = conv3d_dilated(src, &p.weights, &p.bias, l.kernel_width, l.dilation)?;
        let c = l.out_channels;
        if l.batch_norm {
            let scale: Vec<T> = (0..c)
                .map(|ch| p.gamma[ch] / T::of((p.running_var[ch].f64() + BN_EPSILON).sqrt()))
                .collect();
            let shift: Vec<T> = (0..c)
                .map(|ch| p.beta[ch] - scale[ch] * p.running_mean[ch])
                .collect();
            for row in z.data.chunks_exact_mut(c) {
                for ch in 0..c {
                    row[ch] = activate(l.activation, row[ch] * scale[ch] + shift[ch]);
                }
            }
        } else {
            z.data
                .iter_mut()
                .for_each(|v| *v = activate(l.activation, *v));
        }
        cur = Some(z);
    }
    Ok(cur.unwrap())
}

/// Backpropagate `d_outputs` (gradient of the data loss w.r.t. the network
/// outputs) and add the `λw·Σ w²` weight-decay gradient.
pub fn backward<T: Real>(
    params: &NetworkParams<T>,
    spec: &NetworkSpec,
    cache: &ForwardCache<T>,
    d_outputs: Vec<Grid<T>>,
    weight_decay: f64,
) -> Result<Gradients<T>> {
    let mut grads = Gradients::zeros_like(params);
    let mut upstream = d_outputs;
    for li in (0..spec.layers.len()).rev() {
        let l = &spec.layers[li];
        let p = &params.layers[li];
        let c = l.out_channels;
        let out = &cache.acts[li + 1];
        if upstream.len() != out.len() || upstream.iter().zip(out).any(|(a, b)| a.dims != b.dims) {
            return Err(Error::Shape(format!(
                "gradient batch mismatch at layer {li}"
            )));
        }
        if l.activation == Activation::Relu {
            upstream
                .par_iter_mut()
                .zip(out.par_iter())
                .for_each(|(g, y)| {
                    for (gv, yv) in g.data.iter_mut().zip(&y.data) {
                        if *yv <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                });
        }
        if l.batch_norm {
            let xhat = cache.xhat[li].as_ref().unwrap();
            let istd = &cache.inv_std[li];
            let partial: Vec<(Vec<f64>, Vec<f64>)> = upstream
                .par_iter()
                .zip(xhat.par_iter())
                .map(|(g, x)| {
                    let mut sg = vec![0.0; c];
                    let mut sgx = vec![0.0; c];
                    for (gr, xr) in g.data.chunks_exact(c).zip(x.data.chunks_exact(c)) {
                        for ch in 0..c {
                            sg[ch] += gr[ch].f64();
                            sgx[ch] += gr[ch].f64() * xr[ch].f64();
                        }
                    }
                    (sg, sgx)
                })
                .collect();
            let mut sum_g = vec![0.0; c];
            let mut sum_gx = vec![0.0; c];
            for (a, b) in partial {
                for ch in 0..c {
                    sum_g[ch] += a[ch];
                    sum_gx[ch] += b[ch];
                }
            }
            let n = out.iter().map(Grid::positions).sum::<usize>() as f64;
            let lg = &mut grads.layers[li];
            for ch in 0..c {
                lg.gamma[ch] = T::of(sum_gx[ch]);
                lg.beta[ch] = T::of(sum_g[ch]);
            }
            // dz = γ·istd·(g − mean(g) − x̂·mean(g·x̂))
            let k1: Vec<T> = (0..c)
                .map(|ch| T::of(p.gamma[ch].f64() * istd[ch]))
                .collect();
            let mg: Vec<T> = sum_g.iter().map(|v| T::of(v / n)).collect();
            let mgx: Vec<T> = sum_gx.iter().map(|v| T::of(v / n)).collect();
            upstream
                .par_iter_mut()
                .zip(xhat.par_iter())
                .for_each(|(g, x)| {
                    for (gr, xr) in g.data.chunks_exact_mut(c).zip(x.data.chunks_exact(c)) {
                        for ch in 0..c {
                            gr[ch] = k1[ch] * (gr[ch] - mg[ch] - xr[ch] * mgx[ch]);
                        }
                    }
                });
        }
        let need_input = li > 0;
        let inputs = &cache.acts[li];
        let conv: Vec<_> = inputs
            .par_iter()
            .zip(upstream.par_iter())
            .map(|(x, g)| {
                conv3d_dilated_backward(x, g, &p.weights, l.kernel_width, l.dilation, need_input)
            })
            .collect::<Result<_>>()?;
        let lg = &mut grads.layers[li];
        let mut next = Vec::with_capacity(conv.len());
        for cg in conv {
            for (a, b) in lg.weights.iter_mut().zip(&cg.weights) {
                *a += *b;
            }
            for (a, b) in lg.bias.iter_mut().zip(&cg.bias) {
                *a += *b;
            }
            if let Some(g) = cg.input {
                next.push(g);
            }
        }
        if weight_decay != 0.0 {
            let k = T::of(2.0 * weight_decay);
            for (g, w) in lg.weights.iter_mut().zip(&p.weights) {
                *g += k * *w;
            }
        }
        upstream = next;
    }
    Ok(grads)
}

/// Direction logits and radius read from one output voxel of a tracker head.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerOutput {
    pub logits: Vec<f64>,
    pub radius: f64,
}

impl TrackerOutput {
    pub fn from_channels<T: Real>(channels: &[T], head: Head) -> Result<Self> {
        let Head::Tracker { num_directions } = head else {
            return Err(Error::invalid("not a tracker head"));
        };
        if channels.len() != num_directions + 1 {
            return Err(Error::Shape(format!(
                "tracker output has {} channels, expected {}",
                channels.len(),
                num_directions + 1
            )));
        }
        Ok(TrackerOutput {
            logits: channels[..num_directions].iter().map(|v| v.f64()).collect(),
            radius: channels[num_directions].f64(),
        })
    }

    pub fn distribution(&self) -> DirectionDistribution {
        DirectionDistribution::from_logits(&self.logits)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerTarget {
    pub dist: DirectionDistribution,
    pub radius: f64,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Single-sample loss: cross-entropy (natural log) of `softmax(logits)`
/// against the reference distribution, plus `λr·(r − r_ref)²`, plus
/// `λw·Σ kernel weights²`.
pub fn tracker_sample_loss<T: Real>(
    output: &TrackerOutput,
    target: &TrackerTarget,
    params: &NetworkParams<T>,
    lambda_r: f64,
    lambda_w: f64,
) -> f64 {
    let logp = log_softmax(&output.logits);
    let ce: f64 = target
        .dist
        .probs()
        .iter()
        .zip(&logp)
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, lp)| -q * lp)
        .sum();
    let dr = output.radius - target.radius;
    ce + lambda_r * dr * dr + lambda_w * params.kernel_sq_norm()
}

/// Batch-mean tracker loss (weight decay included) and its gradient with
/// respect to the raw network outputs. Every output must be a single voxel.
pub fn tracker_loss<T: Real>(
    outputs: &[Grid<T>],
    targets: &[TrackerTarget],
    params: &NetworkParams<T>,
    head: Head,
    lambda_r: f64,
    lambda_w: f64,
) -> Result<(f64, Vec<Grid<T>>)> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::Shape(
            "outputs and targets differ in batch size".into(),
        ));
    }
    let b = outputs.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.iter().zip(targets) {
        if o.positions() != 1 {
            return Err(Error::Shape(format!(
                "tracker loss needs 1×1×1 outputs, got {:?}",
                o.dims
            )));
        }
        let out = TrackerOutput::from_channels(&o.data, head)?;
        if t.dist.len() != out.logits.len() {
            return Err(Error::Shape(
                "reference distribution size differs from logits".into(),
            ));
        }
        total += tracker_sample_loss(&out, t, params, lambda_r, 0.0);
        let p = out.distribution();
        let mut g: Vec<T> = p
            .probs()
            .iter()
            .zip(t.dist.probs())
            .map(|(p, q)| T::of((p - q) / b))
            .collect();
        g.push(T::of(2.0 * lambda_r * (out.radius - t.radius) / b));
        grads.push(Grid::from_data(o.dims, o.channels, g)?);
    }
    Ok((total / b + lambda_w * params.kernel_sq_norm(), grads))
}

/// Mean squared error over every output voxel of the batch, plus weight decay.
pub fn proximity_loss<T: Real>(
    outputs: &[Grid<T>],
    targets: &[Grid<T>],
    params: &NetworkParams<T>,
    lambda_w: f64,
) -> Result<(f64, Vec<Grid<T>>)> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::Shape(
            "outputs and targets differ in batch size".into(),
        ));
    }
    let n: usize = outputs.iter().map(|g| g.data.len()).sum();
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.iter().zip(targets) {
        if o.dims != t.dims || o.channels != t.channels {
            return Err(Error::Shape(
                "proximity target does not match output map".into(),
            ));
        }
        let mut g = Vec::with_capacity(o.data.len());
        for (y, r) in o.data.iter().zip(&t.data) {
            let d = y.f64() - r.f64();
            total += d * d;
            g.push(T::of(2.0 * d / n as f64));
        }
        grads.push(Grid::from_data(o.dims, o.channels, g)?);
    }
    Ok((total / n as f64 + lambda_w * params.kernel_sq_norm(), grads))
}
