//! Browser bindings for three interactive views of the pipeline:
//! projecting a phantom, sparse-view filtered back projection with quality
//! scores, and a DCT band-pass explorer.
//!
//! Images cross the boundary as row-major `Float32Array`s. The plain Rust
//! methods (`try_*`, `band_pass`) carry the logic so they can be tested off
//! the browser; the exported wrappers only translate errors.

use gloredi::metrics;
use gloredi::phantom::{random_phantom, sample_rng, shepp_logan};
use gloredi::spectral::{dct2, dct2_backward, BandMask};
use gloredi::tomo::{self, FilterKind, ScanGeometry, Sinogram};
use gloredi::Grid;
use wasm_bindgen::prelude::*;

fn to_f32(g: &Grid) -> Vec<f32> {
    g.data().iter().map(|&v| v as f32).collect()
}

fn js(e: gloredi::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A phantom and its full-view sinogram.
#[wasm_bindgen]
pub struct Scan {
    geometry: ScanGeometry,
    phantom: Grid,
    sinogram: Sinogram,
}

#[wasm_bindgen]
pub struct Reconstruction {
    image: Vec<f32>,
    views: usize,
    psnr: f64,
    ssim: f64,
}

#[wasm_bindgen]
pub struct BandView {
    log_spectrum: Vec<f32>,
    mask: Vec<f32>,
    filtered: Vec<f32>,
    kept: usize,
}

impl Scan {
    /// `i0 = 0` gives a noiseless sinogram.
    pub fn try_new(size: usize, phantom: Grid, seed: u64, i0: f64) -> gloredi::Result<Self> {
        let geometry = ScanGeometry::with_size(size);
        geometry.validate()?;
        let clean = tomo::radon(&phantom, &geometry, &geometry.full_angles())?;
        let sinogram = if i0 == 0.0 { clean } else { tomo::add_poisson_noise(&clean, i0, &mut sample_rng(seed, 0))? };
        Ok(Self { geometry, phantom, sinogram })
    }

    pub fn try_head(size: usize, i0: f64) -> gloredi::Result<Self> {
        Self::try_new(size, shepp_logan(size)?, 0, i0)
    }

    pub fn try_random(size: usize, seed: u64, i0: f64) -> gloredi::Result<Self> {
        let phantom = random_phantom(size, &mut sample_rng(seed, 1))?;
        Self::try_new(size, phantom, seed, i0)
    }

    pub fn phantom_grid(&self) -> &Grid {
        &self.phantom
    }

    pub fn try_reconstruct(&self, views: usize, filter: &str) -> gloredi::Result<Reconstruction> {
        let kind: FilterKind = filter.parse()?;
        let sparse = tomo::subsample_views(&self.sinogram, views)?;
        let image = tomo::fbp(&sparse, &self.geometry, kind)?;
        Ok(Reconstruction {
            psnr: metrics::psnr(&image, &self.phantom, 1.0)?,
            ssim: metrics::ssim(&image, &self.phantom, 1.0)?,
            image: to_f32(&image),
            views,
        })
    }
}

#[wasm_bindgen]
impl Scan {
    /// The head phantom at `size` pixels per side.
    pub fn head(size: usize, i0: f64) -> Result<Scan, JsError> {
        Self::try_head(size, i0).map_err(js)
    }

    /// A random ellipse phantom; the same seed always gives the same scan.
    pub fn random(size: usize, seed: u32, i0: f64) -> Result<Scan, JsError> {
        Self::try_random(size, seed as u64, i0).map_err(js)
    }

    pub fn size(&self) -> usize {
        self.geometry.image_size
    }

    pub fn detectors(&self) -> usize {
        self.geometry.n_detectors
    }

    pub fn full_views(&self) -> usize {
        self.geometry.n_full_views
    }

    pub fn phantom(&self) -> Vec<f32> {
        to_f32(&self.phantom)
    }

    /// `full_views x detectors` line integrals.
    pub fn sinogram(&self) -> Vec<f32> {
        to_f32(self.sinogram.values())
    }

    /// Filtered back projection from `views` evenly spaced views.
    pub fn reconstruct(&self, views: usize, filter: &str) -> Result<Reconstruction, JsError> {
        self.try_reconstruct(views, filter).map_err(js)
    }
}

#[wasm_bindgen]
impl Reconstruction {
    pub fn image(&self) -> Vec<f32> {
        self.image.clone()
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn psnr(&self) -> f64 {
        self.psnr
    }

    pub fn ssim(&self) -> f64 {
        self.ssim
    }
}

#[wasm_bindgen]
impl BandView {
    /// `ln(1 + |f|)` of the unnormalized DCT-II spectrum.
    pub fn log_spectrum(&self) -> Vec<f32> {
        self.log_spectrum.clone()
    }

    pub fn mask(&self) -> Vec<f32> {
        self.mask.clone()
    }

    /// The image rebuilt from the masked coefficients only.
    pub fn filtered(&self) -> Vec<f32> {
        self.filtered.clone()
    }

    pub fn kept(&self) -> usize {
        self.kept
    }
}

/// Inverse of the unnormalized DCT-II: the adjoint applied to coefficients
/// weighted by `a_w a_h / (N_w N_h)` with `a_0 = 1`, `a_k = 2`.
pub fn idct2(spectrum: &Grid) -> gloredi::Result<Grid> {
    let (nw, nh) = spectrum.dims2()?;
    let weight = |k: usize| if k == 0 { 1.0 } else { 2.0 };
    let scaled = Grid::new(
        &[nw, nh],
        (0..nw * nh).map(|k| spectrum.data()[k] * weight(k / nh) * weight(k % nh) / (nw * nh) as f64).collect(),
    )?;
    dct2_backward(&scaled)
}

pub fn try_band_pass(image: &[f32], size: usize, low: f64, up: f64) -> gloredi::Result<BandView> {
    let img = Grid::new(&[size, size], image.iter().map(|&v| v as f64).collect())?;
    let mask = BandMask::new(size, size, low, up)?;
    let spectrum = dct2(&img)?;
    let kept = spectrum.zip_map(mask.mask(), |f, m| f * m)?;
    Ok(BandView {
        log_spectrum: spectrum.data().iter().map(|f| f.abs().ln_1p() as f32).collect(),
        mask: to_f32(mask.mask()),
        filtered: to_f32(&idct2(&kept)?),
        kept: mask.count(),
    })
}

/// Keeps the DCT coefficients with `low*N <= i, j <= up*N` of a square image.
#[wasm_bindgen]
pub fn band_pass(image: &[f32], size: usize, low: f64, up: f64) -> Result<BandView, JsError> {
    try_band_pass(image, size, low, up).map_err(js)
}
