//! Valid (unpadded) dilated 3D convolution via im2col + GEMM.
//!
//! Kernel layout: `weights[(offset · c_in + ci) · c_out + co]`, with
//! `offset = (kz · k + ky) · k + kx`. The output at voxel `o` is
//! `bias[co] + Σ w · input[o + dilation · (kx, ky, kz)]`.

use super::real::gemm;
use super::{Grid, Real};
use crate::{Error, Result};

fn output_dims(input: [usize; 3], kernel_width: usize, dilation: usize) -> Result<[usize; 3]> {
    let span = dilation * (kernel_width - 1) + 1;
    if input.iter().any(|&d| d < span) {
        return Err(Error::Shape(format!(
            "input {input:?} is smaller than the dilated kernel span {span}"
        )));
    }
    Ok(input.map(|d| d - span + 1))
}

/// Gather every receptive-field column into a `positions × (k³·c_in)` matrix.
fn im2col<T: Real>(input: &Grid<T>, out_dims: [usize; 3], k: usize, dil: usize) -> Vec<T> {
    let ci = input.channels;
    let row_len = k * k * k * ci;
    let mut col = Vec::with_capacity(out_dims.iter().product::<usize>() * row_len);
    for oz in 0..out_dims[2] {
        for oy in 0..out_dims[1] {
            for ox in 0..out_dims[0] {
                for kz in 0..k {
                    for ky in 0..k {
                        let start = input.offset(ox, oy + ky * dil, oz + kz * dil);
                        if dil == 1 {
                            col.extend_from_slice(&input.data[start..start + k * ci]);
                        } else {
                            for kx in 0..k {
                                let s = start + kx * dil * ci;
                                col.extend_from_slice(&input.data[s..s + ci]);
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add a column-gradient matrix back onto the input grid.
fn col2im<T: Real>(dcol: &[T], grad: &mut Grid<T>, out_dims: [usize; 3], k: usize, dil: usize) {
    let ci = grad.channels;
    let row_len = k * k * k * ci;
    let mut r = 0;
    for oz in 0..out_dims[2] {
        for oy in 0..out_dims[1] {
            for ox in 0..out_dims[0] {
                let row = &dcol[r * row_len..(r + 1) * row_len];
                let mut c = 0;
                for kz in 0..k {
                    for ky in 0..k {
                        let start = grad.offset(ox, oy + ky * dil, oz + kz * dil);
                        for kx in 0..k {
                            let s = start + kx * dil * ci;
                            for (g, &d) in grad.data[s..s + ci].iter_mut().zip(&row[c..c + ci]) {
                                *g += d;
                            }
                            c += ci;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

pub fn conv3d_dilated<T: Real>(
    input: &Grid<T>,
    weights: &[T],
    bias: &[T],
    kernel_width: usize,
    dilation: usize,
) -> Result<Grid<T>> {
    let c_out = bias.len();
    let k_len = kernel_width.pow(3) * input.channels;
    if weights.len() != k_len * c_out {
        return Err(Error::Shape(format!(
            "kernel has {} weights, expected {}",
            weights.len(),
            k_len * c_out
        )));
    }
    let out_dims = output_dims(input.dims, kernel_width, dilation)?;
    let mut out = Grid::zeros(out_dims, c_out);
    for row in out.data.chunks_exact_mut(c_out) {
        row.copy_from_slice(bias);
    }
    let p = out.positions();
    if kernel_width == 1 {
        gemm(
            p,
            k_len,
            c_out,
            &input.data,
            false,
            weights,
            false,
            T::one(),
            &mut out.data,
        );
    } else {
        let col = im2col(input, out_dims, kernel_width, dilation);
        gemm(
            p,
            k_len,
            c_out,
            &col,
            false,
            weights,
            false,
            T::one(),
            &mut out.data,
        );
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Grid<T>>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of a convolution given the upstream gradient `d_out`.
pub fn conv3d_dilated_backward<T: Real>(
    input: &Grid<T>,
    d_out: &Grid<T>,
    weights: &[T],
    kernel_width: usize,
    dilation: usize,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let out_dims = output_dims(input.dims, kernel_width, dilation)?;
    if d_out.dims != out_dims {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match conv output {out_dims:?}",
            d_out.dims
        )));
    }
    let c_out = d_out.channels;
    let k_len = kernel_width.pow(3) * input.channels;
    let p = d_out.positions();

    let mut bias = vec![T::zero(); c_out];
    for row in d_out.data.chunks_exact(c_out) {
        for (b, &g) in bias.iter_mut().zip(row) {
            *b += g;
        }
    }

    let mut dw = vec![T::zero(); k_len * c_out];
    let col_storage;
    let col: &[T] = if kernel_width == 1 {
        &input.data
    } else {
        col_storage = im2col(input, out_dims, kernel_width, dilation);
        &col_storage
    };
    gemm(
        k_len,
        p,
        c_out,
        col,
        true,
        &d_out.data,
        false,
        T::zero(),
        &mut dw,
    );

    let d_input = if need_input_grad {
        let mut dcol = vec![T::zero(); p * k_len];
        gemm(
            p,
            c_out,
            k_len,
            &d_out.data,
            false,
            weights,
            true,
            T::zero(),
            &mut dcol,
        );
        if kernel_width == 1 {
            Some(Grid::from_data(input.dims, input.channels, dcol)?)
        } else {
            let mut g = Grid::zeros(input.dims, input.channels);
            col2im(&dcol, &mut g, out_dims, kernel_width, dilation);
            Some(g)
        }
    } else {
        None
    };
    Ok(ConvGrads {
        input: d_input,
        weights: dw,
        bias,
    })
}
