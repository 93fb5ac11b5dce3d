//! Image quality metrics: PSNR, SSIM and RMSE.

use crate::error::{invalid, Result};
use crate::tensor::Grid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    /// `f64::INFINITY` when the images are identical.
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub data_range: f64,
}

fn mse(a: &Grid, b: &Grid) -> Result<f64> {
    a.ensure_same_shape(b, "metric")?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

pub fn psnr(a: &Grid, b: &Grid, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return invalid("data range must be positive");
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

pub fn rmse(a: &Grid, b: &Grid) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Half-sample symmetric index reflection (`d c b a | a b c d | d c b a`).
pub fn reflect_symmetric(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn blur(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let cc = reflect_symmetric(c as isize + k as isize - half, w);
                acc += t * img[r * w + cc];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let rr = reflect_symmetric(r as isize + k as isize - half, h);
                acc += t * tmp[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) and symmetric padding.
pub fn ssim(a: &Grid, b: &Grid, data_range: f64) -> Result<f64> {
    a.ensure_same_shape(b, "ssim")?;
    let (h, w) = a.dims2()?;
    if !(data_range > 0.0) {
        return invalid("data range must be positive");
    }
    if a == b {
        return Ok(1.0);
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (x, y) = (a.data(), b.data());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mx = blur(x, h, w, &taps);
    let my = blur(y, h, w, &taps);
    let sxx = blur(&xx, h, w, &taps);
    let syy = blur(&yy, h, w, &taps);
    let sxy = blur(&xy, h, w, &taps);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    for i in 0..h * w {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / (h * w) as f64)
}

pub fn report(a: &Grid, b: &Grid, data_range: f64) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(a, b, data_range)?,
        ssim: ssim(a, b, data_range)?,
        rmse: rmse(a, b)?,
        data_range,
    })
}
