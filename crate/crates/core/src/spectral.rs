//! Unnormalized 2-D DCT-II, band-pass masks and the band-pass embedding
//! of a feature map.
//!
//! For a plane `Z` of shape `[N_w, N_h]` the spectrum is
//! `f[w, h] = sum_{i,j} Z[i, j] cos(pi w (i + 1/2) / N_w) cos(pi h (j + 1/2) / N_h)`
//! with no scale factors. The first axis plays the role of `i`/`w`.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::tensor::Grid;

/// `basis[w * n + i] = cos(pi w (i + 1/2) / n)`.
pub fn cosine_basis(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n);
    for w in 0..n {
        for i in 0..n {
            out.push((PI * w as f64 * (i as f64 + 0.5) / n as f64).cos());
        }
    }
    out
}

/// Separable DCT of one `nw x nh` plane: `C_w Z C_h^T`.
fn dct_plane(z: &[f64], nw: usize, nh: usize, bw: &[f64], bh: &[f64], out: &mut [f64]) {
    // tmp[i, h] = sum_j Z[i, j] Bh[h, j]
    let mut tmp = vec![0.0; nw * nh];
    for i in 0..nw {
        for h in 0..nh {
            let row = &z[i * nh..(i + 1) * nh];
            let basis = &bh[h * nh..(h + 1) * nh];
            tmp[i * nh + h] = row.iter().zip(basis).map(|(a, b)| a * b).sum();
        }
    }
    for w in 0..nw {
        for h in 0..nh {
            let mut acc = 0.0;
            for i in 0..nw {
                acc += bw[w * nw + i] * tmp[i * nh + h];
            }
            out[w * nh + h] = acc;
        }
    }
}

/// Adjoint of [`dct_plane`]: `C_w^T G C_h`.
fn dct_plane_adjoint(g: &[f64], nw: usize, nh: usize, bw: &[f64], bh: &[f64], out: &mut [f64]) {
    let mut tmp = vec![0.0; nw * nh];
    for w in 0..nw {
        for j in 0..nh {
            let mut acc = 0.0;
            for h in 0..nh {
                acc += g[w * nh + h] * bh[h * nh + j];
            }
            tmp[w * nh + j] = acc;
        }
    }
    for i in 0..nw {
        for j in 0..nh {
            let mut acc = 0.0;
            for w in 0..nw {
                acc += bw[w * nw + i] * tmp[w * nh + j];
            }
            out[i * nh + j] = acc;
        }
    }
}

/// DCT of a rank-2 grid.
pub fn dct2(channel: &Grid) -> Result<Grid> {
    let (nw, nh) = channel.dims2()?;
    let (bw, bh) = (cosine_basis(nw), cosine_basis(nh));
    let mut out = vec![0.0; nw * nh];
    dct_plane(channel.data(), nw, nh, &bw, &bh, &mut out);
    Ok(Grid::from_parts(vec![nw, nh], out))
}

/// Gradient of a scalar through [`dct2`]: maps `dL/df` to `dL/dZ`.
pub fn dct2_backward(grad_spectrum: &Grid) -> Result<Grid> {
    let (nw, nh) = grad_spectrum.dims2()?;
    let (bw, bh) = (cosine_basis(nw), cosine_basis(nh));
    let mut out = vec![0.0; nw * nh];
    dct_plane_adjoint(grad_spectrum.data(), nw, nh, &bw, &bh, &mut out);
    Ok(Grid::from_parts(vec![nw, nh], out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandMask {
    width: usize,
    height: usize,
    low: f64,
    up: f64,
    mask: Grid,
    indices: Vec<(usize, usize)>,
}

impl BandMask {
    /// Selects `(i, j)` with `low*N_w <= i <= up*N_w` and `low*N_h <= j <= up*N_h`.
    pub fn new(width: usize, height: usize, low: f64, up: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid("mask dimensions must be positive");
        }
        if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&up) || low >= up {
            return invalid(format!("band bounds must satisfy 0 <= low < up <= 1, got [{low}, {up}]"));
        }
        let keep = |k: usize, n: usize| {
            let k = k as f64;
            low * n as f64 <= k && k <= up * n as f64
        };
        let mut indices = Vec::new();
        let mut mask = Grid::zeros(&[width, height]);
        for i in 0..width {
            for j in 0..height {
                if keep(i, width) && keep(j, height) {
                    indices.push((i, j));
                    mask.data_mut()[i * height + j] = 1.0;
                }
            }
        }
        if indices.is_empty() {
            return invalid(format!("band [{low}, {up}] selects nothing on {width}x{height}"));
        }
        Ok(Self { width, height, low, up, mask, indices })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.low, self.up)
    }

    pub fn mask(&self) -> &Grid {
        &self.mask
    }

    /// Selected positions in row-major order.
    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEmbedding {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl SpectralEmbedding {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &SpectralEmbedding) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Everything needed to push a gradient on the embedding back to `Z`.
#[derive(Clone, Debug)]
pub struct EmbedCache {
    raw: Vec<f64>,
    norm: Option<f64>,
    shape: (usize, usize, usize),
}

/// Per-channel DCT, masked gather in the mask's index order, channels
/// concatenated in ascending order, optional L2 normalization.
pub fn bandpass_embed(z: &Grid, mask: &BandMask, normalize: bool) -> Result<SpectralEmbedding> {
    bandpass_embed_cached(z, mask, normalize).map(|(e, _)| e)
}

pub fn bandpass_embed_cached(
    z: &Grid,
    mask: &BandMask,
    normalize: bool,
) -> Result<(SpectralEmbedding, EmbedCache)> {
    let (nc, nw, nh) = match z.shape()[..] {
        [c, w, h] => (c, w, h),
        _ => return invalid(format!("feature map must be [C, W, H], got {:?}", z.shape())),
    };
    if (nw, nh) != (mask.width, mask.height) {
        return invalid(format!(
            "mask is {}x{}, feature map is {nw}x{nh}",
            mask.width, mask.height
        ));
    }
    let (bw, bh) = (cosine_basis(nw), cosine_basis(nh));
    let mut spec = vec![0.0; nw * nh];
    let mut raw = Vec::with_capacity(nc * mask.count());
    for c in 0..nc {
        dct_plane(&z.data()[c * nw * nh..(c + 1) * nw * nh], nw, nh, &bw, &bh, &mut spec);
        raw.extend(mask.indices.iter().map(|&(i, j)| spec[i * nh + j]));
    }
    let mut norm = None;
    let mut values = raw.clone();
    if normalize {
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidArgument("zero-norm embedding".into()));
        }
        values.iter_mut().for_each(|v| *v /= n);
        norm = Some(n);
    }
    Ok((SpectralEmbedding { values, normalized: normalize }, EmbedCache { raw, norm, shape: (nc, nw, nh) }))
}

/// Maps `dL/dz` (gradient on the embedding) to `dL/dZ` on the `[C, W, H]` map.
pub fn bandpass_embed_backward(grad: &[f64], cache: &EmbedCache, mask: &BandMask) -> Result<Grid> {
    let (nc, nw, nh) = cache.shape;
    if grad.len() != cache.raw.len() {
        return invalid(format!("gradient length {} vs embedding {}", grad.len(), cache.raw.len()));
    }
    // Through the normalization u = r / |r|: du/dr = (I - u u^T) / |r|.
    let g_raw: Vec<f64> = match cache.norm {
        Some(n) => {
            let u: Vec<f64> = cache.raw.iter().map(|r| r / n).collect();
            let proj: f64 = grad.iter().zip(&u).map(|(g, u)| g * u).sum();
            grad.iter().zip(&u).map(|(g, u)| (g - proj * u) / n).collect()
        }
        None => grad.to_vec(),
    };
    let (bw, bh) = (cosine_basis(nw), cosine_basis(nh));
    let per = mask.count();
    let mut spec = vec![0.0; nw * nh];
    let mut out = vec![0.0; nc * nw * nh];
    for c in 0..nc {
        spec.iter_mut().for_each(|v| *v = 0.0);
        for (k, &(i, j)) in mask.indices.iter().enumerate() {
            spec[i * nh + j] = g_raw[c * per + k];
        }
        dct_plane_adjoint(&spec, nw, nh, &bw, &bh, &mut out[c * nw * nh..(c + 1) * nw * nh]);
    }
    Ok(Grid::from_parts(vec![nc, nw, nh], out))
}
