//! Real 2-D FFT over the trailing two axes.
//!
//! Forward transforms are unnormalized; [`irfft2`] applies `1/(H*W)`.
//! The half-spectrum layout keeps `W/2 + 1` bins on the last axis.
//!
//! Both transforms are real-linear maps, so the backward pass of any layer
//! using them needs their adjoints ([`rfft2_adjoint`], [`irfft2_adjoint`]),
//! which are *not* simply the inverse transforms.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ComplexGrid, Grid};
use crate::error::{invalid, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn split_trailing(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return invalid(format!("2-D transform needs rank >= 2, got {shape:?}"));
    }
    let n = shape.len();
    let planes = shape[..n - 2].iter().product();
    Ok((planes, shape[n - 2], shape[n - 1]))
}

/// Forward real-to-complex transform of every trailing `H x W` plane.
pub fn rfft2(g: &Grid) -> Result<ComplexGrid> {
    let (planes, h, w) = split_trailing(g.shape())?;
    let wh = w / 2 + 1;
    let row_fft = plan(w, false);
    let col_fft = plan(h, false);
    let mut out = vec![Complex64::new(0.0, 0.0); planes * h * wh];
    let mut row = vec![Complex64::new(0.0, 0.0); w];
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for p in 0..planes {
        let src = &g.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h * wh..(p + 1) * h * wh];
        for r in 0..h {
            for (c, z) in row.iter_mut().enumerate() {
                *z = Complex64::new(src[r * w + c], 0.0);
            }
            row_fft.process(&mut row);
            dst[r * wh..(r + 1) * wh].copy_from_slice(&row[..wh]);
        }
        for v in 0..wh {
            for r in 0..h {
                col[r] = dst[r * wh + v];
            }
            col_fft.process(&mut col);
            for r in 0..h {
                dst[r * wh + v] = col[r];
            }
        }
    }
    let mut shape = g.shape().to_vec();
    *shape.last_mut().unwrap() = wh;
    Ok(ComplexGrid::from_parts(shape, out))
}

/// Inverse of [`rfft2`]; `out_w` disambiguates even/odd widths.
///
/// Imaginary parts of the self-conjugate bins (DC column, and the Nyquist
/// column for even widths) do not contribute to the real output.
pub fn irfft2(c: &ComplexGrid, out_w: usize) -> Result<Grid> {
    let (planes, h, wh) = split_trailing(c.shape())?;
    if out_w == 0 || out_w / 2 + 1 != wh {
        return invalid(format!("half spectrum width {wh} inconsistent with output width {out_w}"));
    }
    let w = out_w;
    let row_fft = plan(w, true);
    let col_fft = plan(h, true);
    let norm = 1.0 / (h * w) as f64;
    let mut out = vec![0.0; planes * h * w];
    let mut tmp = vec![Complex64::new(0.0, 0.0); h * wh];
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    let mut row = vec![Complex64::new(0.0, 0.0); w];
    for p in 0..planes {
        tmp.copy_from_slice(&c.data()[p * h * wh..(p + 1) * h * wh]);
        for v in 0..wh {
            for r in 0..h {
                col[r] = tmp[r * wh + v];
            }
            col_fft.process(&mut col);
            for r in 0..h {
                tmp[r * wh + v] = col[r];
            }
        }
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for r in 0..h {
            let half = &tmp[r * wh..(r + 1) * wh];
            for (v, z) in row.iter_mut().enumerate() {
                *z = if v < wh { half[v] } else { half[w - v].conj() };
            }
            row_fft.process(&mut row);
            for (y, z) in row.iter().enumerate() {
                dst[r * w + y] = z.re * norm;
            }
        }
    }
    let mut shape = c.shape().to_vec();
    *shape.last_mut().unwrap() = w;
    Ok(Grid::from_parts(shape, out))
}

/// Number of times bin `v` appears in the full Hermitian spectrum.
fn bin_weight(v: usize, w: usize) -> f64 {
    if v == 0 || (w % 2 == 0 && v == w / 2) {
        1.0
    } else {
        2.0
    }
}

/// Adjoint of [`rfft2`] as a real-linear map `R^{HW} -> R^{2 H (W/2+1)}`.
pub fn rfft2_adjoint(g: &ComplexGrid, out_w: usize) -> Result<Grid> {
    let (_, h, wh) = split_trailing(g.shape())?;
    let scale = (h * out_w) as f64;
    let mut weighted = g.clone();
    for (i, z) in weighted.data_mut().iter_mut().enumerate() {
        *z *= scale / bin_weight(i % wh, out_w);
    }
    irfft2(&weighted, out_w)
}

/// Adjoint of [`irfft2`] as a real-linear map.
pub fn irfft2_adjoint(gy: &Grid) -> Result<ComplexGrid> {
    let (_, h, w) = split_trailing(gy.shape())?;
    let wh = w / 2 + 1;
    let mut c = rfft2(gy)?;
    let norm = 1.0 / (h * w) as f64;
    for (i, z) in c.data_mut().iter_mut().enumerate() {
        *z *= bin_weight(i % wh, w) * norm;
    }
    Ok(c)
}
