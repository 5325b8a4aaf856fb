//! `VTW1` weights files: a text header describing the network and sampling
//! geometry, a blank line, then little-endian f32 tensors in declared order
//! (per layer: kernel, bias, then gamma, beta, running mean, running variance
//! for batch-norm layers).

use std::path::Path;

use super::{Activation, Head, LayerParams, LayerSpec, NetworkParams, NetworkSpec};
use crate::format::{self, fmt_f64};
use crate::volume::PatchSpec;
use crate::{Error, Result};

const VTW: &str = "VTW1";
pub const WEIGHTS_VERSION: u32 = 1;

/// A network with the metadata needed to use it.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightsFile {
    pub spec: NetworkSpec,
    pub params: NetworkParams<f32>,
    pub patch: PatchSpec,
    /// Free-form `key value` pairs (e.g. proximity scaling), kept in order.
    pub meta: Vec<(String, String)>,
}

impl WeightsFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        let v = self
            .meta(key)
            .ok_or_else(|| Error::header(VTW, format!("missing meta `{key}`")))?;
        format::parse_num(VTW, v)
    }

    /// Fails unless the file was trained with a codebook of `requested` directions.
    pub fn expect_directions(&self, requested: usize) -> Result<()> {
        match self.spec.head {
            Head::Tracker { num_directions } if num_directions == requested => Ok(()),
            Head::Tracker { num_directions } => Err(Error::CodebookMismatch {
                stored: num_directions,
                requested,
            }),
            Head::Proximity => Err(Error::invalid(
                "weights hold a proximity head, not a tracker",
            )),
        }
    }
}

pub fn save_weights(w: &WeightsFile, path: &Path) -> Result<()> {
    format::write_file(path, &encode(w)?)
}

fn encode(w: &WeightsFile) -> Result<Vec<u8>> {
    w.spec.validate()?;
    w.params.check_shapes(&w.spec)?;
    let mut h = String::new();
    h.push_str(VTW);
    h.push('\n');
    h.push_str(&format!("version {WEIGHTS_VERSION}\n"));
    match w.spec.head {
        Head::Tracker { num_directions } => {
            h.push_str("head tracker\n");
            h.push_str(&format!("directions {num_directions}\n"));
        }
        Head::Proximity => {
            h.push_str("head proximity\n");
            h.push_str("directions 0\n");
        }
    }
    h.push_str(&format!("patch_width {}\n", w.patch.width));
    h.push_str(&format!("voxel_mm {}\n", fmt_f64(w.patch.voxel_mm)));
    h.push_str(&format!(
        "pad_value {}\n",
        fmt_f64(w.patch.pad_value as f64)
    ));
    h.push_str("order conv-bn-act\n");
    h.push_str(&format!("layers {}\n", w.spec.layers.len()));
    for l in &w.spec.layers {
        h.push_str(&format!(
            "layer {} {} {} {} {} {}\n",
            l.kernel_width,
            l.dilation,
            l.in_channels,
            l.out_channels,
            if l.batch_norm { "bn" } else { "nobn" },
            match l.activation {
                Activation::Relu => "relu",
                Activation::Identity => "linear",
            }
        ));
    }
    for (k, v) in &w.meta {
        if k.contains(char::is_whitespace) || v.contains('\n') || v.is_empty() {
            return Err(Error::invalid(format!(
                "meta entry `{k}` cannot be encoded"
            )));
        }
        h.push_str(&format!("meta {k} {v}\n"));
    }
    h.push_str("tensors f32-le\n\n");
    let mut bytes = h.into_bytes();
    for l in &w.params.layers {
        for t in [
            &l.weights,
            &l.bias,
            &l.gamma,
            &l.beta,
            &l.running_mean,
            &l.running_var,
        ] {
            format::push_f32s(&mut bytes, t);
        }
    }
    Ok(bytes)
}

pub fn load_weights(path: &Path) -> Result<WeightsFile> {
    parse_weights(&format::read_all(path)?)
}

pub fn parse_weights(bytes: &[u8]) -> Result<WeightsFile> {
    let (lines, mut payload) = format::split_header(VTW, bytes)?;
    let mut it = lines.iter();
    let mut next = |key: &str| -> Result<Vec<String>> {
        let line = it
            .next()
            .ok_or_else(|| Error::header(VTW, format!("missing `{key}` line")))?;
        Ok(format::keyed(VTW, line, key)?
            .into_iter()
            .map(String::from)
            .collect())
    };
    if lines.first().map(String::as_str) != Some(VTW) {
        return Err(Error::header(VTW, "bad magic"));
    }
    next(VTW)?;
    let version: u32 = format::parse_num(VTW, &single(next("version")?)?)?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Version {
            format: VTW,
            expected: WEIGHTS_VERSION,
            found: version,
        });
    }
    let head_kind = single(next("head")?)?;
    let directions: usize = format::parse_num(VTW, &single(next("directions")?)?)?;
    let head = match head_kind.as_str() {
        "tracker" => Head::Tracker {
            num_directions: directions,
        },
        "proximity" => Head::Proximity,
        other => return Err(Error::header(VTW, format!("unknown head `{other}`"))),
    };
    let width: usize = format::parse_num(VTW, &single(next("patch_width")?)?)?;
    let voxel: f64 = format::parse_num(VTW, &single(next("voxel_mm")?)?)?;
    let pad: f64 = format::parse_num(VTW, &single(next("pad_value")?)?)?;
    let order = single(next("order")?)?;
    if order != "conv-bn-act" {
        return Err(Error::header(
            VTW,
            format!("unsupported layer order `{order}`"),
        ));
    }
    let n_layers: usize = format::parse_num(VTW, &single(next("layers")?)?)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let f = next("layer")?;
        if f.len() != 6 {
            return Err(Error::header(VTW, "layer lines need 6 fields"));
        }
        layers.push(LayerSpec {
            kernel_width: format::parse_num(VTW, &f[0])?,
            dilation: format::parse_num(VTW, &f[1])?,
            in_channels: format::parse_num(VTW, &f[2])?,
            out_channels: format::parse_num(VTW, &f[3])?,
            batch_norm: match f[4].as_str() {
                "bn" => true,
                "nobn" => false,
                o => return Err(Error::header(VTW, format!("bad batch-norm flag `{o}`"))),
            },
            activation: match f[5].as_str() {
                "relu" => Activation::Relu,
                "linear" => Activation::Identity,
                o => return Err(Error::header(VTW, format!("bad activation `{o}`"))),
            },
        });
    }
    let mut meta = Vec::new();
    let rest: Vec<&String> = it.collect();
    let (tensor_line, meta_lines) = rest
        .split_last()
        .ok_or_else(|| Error::header(VTW, "missing `tensors` line"))?;
    for line in meta_lines {
        let f = format::keyed(VTW, line, "meta")?;
        if f.len() < 2 {
            return Err(Error::header(VTW, "meta lines need a key and a value"));
        }
        meta.push((f[0].to_string(), f[1..].join(" ")));
    }
    if format::keyed(VTW, tensor_line, "tensors")? != ["f32-le"] {
        return Err(Error::header(VTW, "unsupported tensor encoding"));
    }
    let spec = NetworkSpec { layers, head };
    spec.validate()?;
    let mut player = Vec::with_capacity(spec.layers.len());
    for l in &spec.layers {
        let c = l.out_channels;
        let bn = if l.batch_norm { c } else { 0 };
        let mut take = |n| format::take_f32s(VTW, &mut payload, n);
        player.push(LayerParams {
            weights: take(l.kernel_len())?,
            bias: take(c)?,
            gamma: take(bn)?,
            beta: take(bn)?,
            running_mean: take(bn)?,
            running_var: take(bn)?,
        });
    }
    if !payload.is_empty() {
        return Err(Error::Shape(format!(
            "{} trailing bytes after tensors",
            payload.len()
        )));
    }
    let params = NetworkParams { layers: player };
    params.check_shapes(&spec)?;
    if !params.all_finite() {
        return Err(Error::Numeric(
            "weights file contains non-finite values".into(),
        ));
    }
    Ok(WeightsFile {
        spec,
        params,
        patch: PatchSpec::new(width, voxel, pad as f32)?,
        meta,
    })
}

fn single(v: Vec<String>) -> Result<String> {
    match <[String; 1]>::try_from(v) {
        Ok([s]) => Ok(s),
        Err(v) => Err(Error::header(VTW, format!("expected one value, got {v:?}"))),
    }
}
