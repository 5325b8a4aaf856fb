use super::Real;
use crate::{Error, Result};

/// Multi-channel 3D feature map, channels-last, x-fastest spatial order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub dims: [usize; 3],
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn zeros(dims: [usize; 3], channels: usize) -> Self {
        Grid {
            dims,
            channels,
            data: vec![T::zero(); dims.iter().product::<usize>() * channels],
        }
    }

    pub fn from_data(dims: [usize; 3], channels: usize, data: Vec<T>) -> Result<Self> {
        let n = dims.iter().product::<usize>() * channels;
        if data.len() != n {
            return Err(Error::Shape(format!(
                "grid {dims:?}×{channels} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Grid {
            dims,
            channels,
            data,
        })
    }

    /// Single-channel cube from a `w³` patch.
    pub fn from_patch(width: usize, values: &[f32]) -> Result<Self> {
        Self::from_data(
            [width; 3],
            1,
            values.iter().map(|&v| T::of(v as f64)).collect(),
        )
    }

    pub fn positions(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize, z: usize) -> usize {
        ((z * self.dims[1] + y) * self.dims[0] + x) * self.channels
    }

    /// Channel values at one spatial position.
    pub fn at(&self, x: usize, y: usize, z: usize) -> &[T] {
        let o = self.offset(x, y, z);
        &self.data[o..o + self.channels]
    }

    pub fn cast<U: Real>(&self) -> Grid<U> {
        Grid {
            dims: self.dims,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}
