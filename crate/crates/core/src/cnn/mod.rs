//! Fully convolutional 3D network with dilated kernels, batch normalization and
//! two head variants: direction classification plus radius regression
//! (`Head::Tracker`) or a single proximity regression channel (`Head::Proximity`).
//!
//! Every layer is `conv → batch-norm → activation`. Convolutions are valid
//! (unpadded), so a patch exactly as wide as the receptive field produces a
//! single output voxel, and larger inputs produce a dense output map.

mod adam;
mod conv;
mod gradcheck;
mod grid;
mod net;
mod real;
mod weights;

pub use adam::AdamState;
pub use conv::{conv3d_dilated, conv3d_dilated_backward, ConvGrads};
pub use gradcheck::{check_gradients, relative_error, ClassError};
pub use grid::Grid;
pub use net::{
    backward, forward_infer, forward_train, proximity_loss, tracker_loss, tracker_sample_loss,
    ForwardCache, Gradients, LayerParams, NetworkParams, TrackerOutput, TrackerTarget, BN_EPSILON,
    BN_MOMENTUM,
};
pub use real::Real;
pub use weights::{load_weights, parse_weights, save_weights, WeightsFile, WEIGHTS_VERSION};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kernel_width: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub batch_norm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_width == 0 || self.kernel_width % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel width must be odd, got {}",
                self.kernel_width
            )));
        }
        if self.dilation == 0 {
            return Err(Error::invalid("dilation must be at least 1"));
        }
        if self.kernel_width == 1 && self.dilation != 1 {
            return Err(Error::invalid("1-wide kernels cannot be dilated"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        Ok(())
    }

    /// Voxels lost per axis by this valid convolution.
    pub fn shrink(&self) -> usize {
        self.dilation * (self.kernel_width - 1)
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_width.pow(3) * self.in_channels * self.out_channels
    }

    /// Trainable weights plus biases of the convolution itself.
    pub fn conv_param_count(&self) -> usize {
        self.kernel_len() + self.out_channels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// `num_directions` class logits followed by one radius channel.
    Tracker { num_directions: usize },
    /// One linear regression channel.
    Proximity,
}

impl Head {
    pub fn output_channels(&self) -> usize {
        match self {
            Head::Tracker { num_directions } => num_directions + 1,
            Head::Proximity => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub head: Head,
}

impl NetworkSpec {
    /// Build the seven-layer dilated stack with the given hidden widths.
    /// Kernel widths (3,3,3,3,3,1,1), dilations (1,1,2,4,1,1,1), 19-voxel field.
    pub fn dilated_stack(hidden: [usize; 6], head: Head) -> Result<Self> {
        Self::stack_with_dilations(hidden, [1, 1, 2, 4, 1], head)
    }

    /// The same layout with the dilations of the five 3-wide layers scaled so
    /// the receptive field equals `field` (odd, at least 11).
    pub fn dilated_stack_for_field(field: usize, hidden: [usize; 6], head: Head) -> Result<Self> {
        if field % 2 == 0 || field < 11 {
            return Err(Error::invalid(format!(
                "receptive field must be odd and at least 11, got {field}"
            )));
        }
        const BASE: [usize; 5] = [1, 1, 2, 4, 1];
        let total = (field - 1) / 2;
        let mut d = BASE.map(|b| ((b * total) as f64 / 9.0).round().max(1.0) as usize);
        // Rounding error goes to the widest layer, which stays at least 1.
        let sum: usize = d.iter().sum();
        d[3] = d[3] + total - sum;
        let spec = Self::stack_with_dilations(hidden, d, head)?;
        debug_assert_eq!(spec.receptive_field(), field);
        Ok(spec)
    }

    fn stack_with_dilations(hidden: [usize; 6], dilations: [usize; 5], head: Head) -> Result<Self> {
        const KERNELS: [usize; 7] = [3, 3, 3, 3, 3, 1, 1];
        let mut dil = [1; 7];
        dil[..5].copy_from_slice(&dilations);
        let mut channels = vec![1];
        channels.extend_from_slice(&hidden);
        channels.push(head.output_channels());
        let layers = (0..7)
            .map(|l| LayerSpec {
                kernel_width: KERNELS[l],
                dilation: dil[l],
                in_channels: channels[l],
                out_channels: channels[l + 1],
                batch_norm: true,
                activation: if l == 6 {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            })
            .collect();
        let spec = NetworkSpec { layers, head };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if i > 0 && self.layers[i - 1].out_channels != l.in_channels {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} input channels, previous layer produces {}",
                    l.in_channels,
                    self.layers[i - 1].out_channels
                )));
            }
        }
        let last = self.layers.last().unwrap();
        if last.out_channels != self.head.output_channels() {
            return Err(Error::Shape(format!(
                "final layer has {} channels, head needs {}",
                last.out_channels,
                self.head.output_channels()
            )));
        }
        if last.activation != Activation::Identity {
            return Err(Error::invalid("the output layer must be linear"));
        }
        if let Head::Tracker { num_directions } = self.head {
            if num_directions < 4 {
                return Err(Error::invalid("tracker head needs at least 4 directions"));
            }
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.layers)
    }

    /// Receptive field after each layer.
    pub fn layer_fields(&self) -> Vec<usize> {
        (1..=self.layers.len())
            .map(|n| receptive_field(&self.layers[..n]))
            .collect()
    }

    /// Output spatial extent for an input extent, or `None` if the input is too small.
    pub fn output_extent(&self, input: usize) -> Option<usize> {
        let shrink = self.receptive_field() - 1;
        input.checked_sub(shrink).filter(|&e| e > 0)
    }
}

/// The full-size network: hidden widths (32,32,32,32,64,64), `|D|+1` outputs.
pub fn table1_spec(num_directions: usize) -> Result<NetworkSpec> {
    NetworkSpec::dilated_stack([32, 32, 32, 32, 64, 64], Head::Tracker { num_directions })
}

pub fn receptive_field(layers: &[LayerSpec]) -> usize {
    1 + layers.iter().map(LayerSpec::shrink).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(k: usize, d: usize) -> LayerSpec {
        LayerSpec {
            kernel_width: k,
            dilation: d,
            in_channels: 1,
            out_channels: 1,
            batch_norm: false,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn full_size_layout() {
        let spec = table1_spec(500).unwrap();
        let k: Vec<_> = spec.layers.iter().map(|l| l.kernel_width).collect();
        let d: Vec<_> = spec.layers.iter().map(|l| l.dilation).collect();
        let c: Vec<_> = spec.layers.iter().map(|l| l.out_channels).collect();
        assert_eq!(k, [3, 3, 3, 3, 3, 1, 1]);
        assert_eq!(d, [1, 1, 2, 4, 1, 1, 1]);
        assert_eq!(c, [32, 32, 32, 32, 64, 64, 501]);
        assert_eq!(spec.layer_fields(), [3, 5, 9, 17, 19, 19, 19]);
        assert_eq!(spec.receptive_field(), 19);
        assert!(spec.layers.iter().all(|l| l.batch_norm));
        assert!(spec.layers[..6]
            .iter()
            .all(|l| l.activation == Activation::Relu));
        assert_eq!(spec.layers[6].activation, Activation::Identity);
    }

    #[test]
    fn receptive_field_examples() {
        assert_eq!(
            receptive_field(&[layer(3, 1), layer(3, 2), layer(3, 4)]),
            15
        );
        assert_eq!(receptive_field(&[layer(1, 1)]), 1);
    }

    #[test]
    fn output_extent_law() {
        let spec = table1_spec(100).unwrap();
        assert_eq!(spec.output_extent(19), Some(1));
        assert_eq!(spec.output_extent(21), Some(3));
        assert_eq!(spec.output_extent(18), None);
    }

    #[test]
    fn conv_params_grow_linearly_while_field_grows_fast() {
        let spec = table1_spec(500).unwrap();
        for l in &spec.layers[1..4] {
            assert_eq!(l.conv_param_count(), 27 * 32 * 32 + 32);
        }
        let fields = spec.layer_fields();
        assert_eq!(fields[3] - fields[2], 2 * (fields[2] - fields[1]));
    }

    #[test]
    fn field_scaled_stacks_hit_the_requested_field() {
        let head = Head::Tracker { num_directions: 10 };
        for field in (11..=61).step_by(2) {
            let spec = NetworkSpec::dilated_stack_for_field(field, [2; 6], head).unwrap();
            assert_eq!(spec.receptive_field(), field);
        }
        assert_eq!(
            NetworkSpec::dilated_stack_for_field(19, [2; 6], head).unwrap(),
            NetworkSpec::dilated_stack([2; 6], head).unwrap()
        );
        assert!(NetworkSpec::dilated_stack_for_field(9, [2; 6], head).is_err());
        assert!(NetworkSpec::dilated_stack_for_field(20, [2; 6], head).is_err());
    }

    #[test]
    fn invalid_layers_are_rejected() {
        assert!(layer(2, 1).validate().is_err());
        assert!(layer(1, 2).validate().is_err());
        assert!(layer(3, 0).validate().is_err());
        let mut spec = table1_spec(10).unwrap();
        spec.layers[3].in_channels = 7;
        assert!(matches!(spec.validate(), Err(Error::Shape(_))));
    }
}
