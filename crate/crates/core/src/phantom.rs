//! Synthetic CT slices and training-triplet assembly.
//!
//! Ellipses live in normalized coordinates `[-1, 1]^2` with `x` along
//! columns and `y` pointing up (row 0 is `y = +1`). Rasterization averages
//! an 8x8 grid of sub-samples per pixel so edges are area-weighted.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{invalid, Result};
use crate::tensor::Grid;
use crate::tomo::{self, FilterKind, ScanGeometry};

const SUPERSAMPLE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Counter-clockwise rotation in radians.
    pub rotation: f64,
    pub intensity: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.rotation.sin_cos();
        let xr = dx * c + dy * s;
        let yr = -dx * s + dy * c;
        (xr / self.semi_axes.0).powi(2) + (yr / self.semi_axes.1).powi(2) <= 1.0
    }
}

/// Area-weighted sum of ellipse intensities on an `n x n` grid (no clipping).
pub fn rasterize(ellipses: &[Ellipse], n: usize) -> Grid {
    let sub = SUPERSAMPLE;
    let inv = 1.0 / (n * sub) as f64;
    let weight = 1.0 / (sub * sub) as f64;
    Grid::from_fn2(n, n, |r, c| {
        let mut acc = 0.0;
        for sr in 0..sub {
            let y = 1.0 - (2 * (r * sub + sr) + 1) as f64 * inv;
            for sc in 0..sub {
                let x = (2 * (c * sub + sc) + 1) as f64 * inv - 1.0;
                for e in ellipses {
                    if e.contains(x, y) {
                        acc += e.intensity;
                    }
                }
            }
        }
        acc * weight
    })
}

/// The ten-ellipse head phantom with the high-contrast intensity set.
pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    // (intensity, a, b, x0, y0, rotation in degrees)
    const TABLE: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    TABLE
        .iter()
        .map(|&(rho, a, b, x0, y0, deg)| Ellipse {
            center: (x0, y0),
            semi_axes: (a, b),
            rotation: deg.to_radians(),
            intensity: rho,
        })
        .collect()
}

/// Shepp-Logan phantom rescaled affinely onto `[0, 1]`.
pub fn shepp_logan(n: usize) -> Result<Grid> {
    if n < 16 {
        return invalid(format!("phantom side must be >= 16, got {n}"));
    }
    let raw = rasterize(&shepp_logan_ellipses(), n);
    let (lo, hi) = (raw.min(), raw.max());
    Ok(raw.map(|v| (v - lo) / (hi - lo)))
}

/// Draws the ellipse list of a random phantom: one enclosing body ellipse
/// followed by 3..=11 interior structures.
///
/// Ranges: body semi-axes U(0.60, 0.85), centre offset U(-0.05, 0.05),
/// intensity U(0.15, 0.30); interior centres U(-0.5, 0.5), semi-axes
/// U(0.03, 0.30), intensity U(-0.10, 0.30); rotations U(0, pi).
pub fn random_ellipses<R: Rng + ?Sized>(rng: &mut R) -> Vec<Ellipse> {
    let mut out = Vec::new();
    out.push(Ellipse {
        center: (rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)),
        semi_axes: (rng.gen_range(0.60..0.85), rng.gen_range(0.60..0.85)),
        rotation: rng.gen_range(0.0..PI),
        intensity: rng.gen_range(0.15..0.30),
    });
    let interior = rng.gen_range(3..=11);
    for _ in 0..interior {
        out.push(Ellipse {
            center: (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
            semi_axes: (rng.gen_range(0.03..0.30), rng.gen_range(0.03..0.30)),
            rotation: rng.gen_range(0.0..PI),
            intensity: rng.gen_range(-0.10..0.30),
        });
    }
    out
}

pub fn random_phantom<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Grid> {
    if n == 0 {
        return invalid("phantom side must be positive");
    }
    Ok(rasterize(&random_ellipses(rng), n).map(|v| v.clamp(0.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleTriplet {
    pub id: usize,
    pub full: Grid,
    pub teacher_input: Grid,
    pub student_input: Grid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub count: usize,
    pub geometry: ScanGeometry,
    pub n_sparse: usize,
    pub teacher_multiplier: usize,
    pub photons: f64,
    pub seed: u64,
    pub filter: FilterKind,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 64,
            geometry: ScanGeometry::default(),
            n_sparse: 18,
            teacher_multiplier: 2,
            photons: 1e6,
            seed: 0,
            filter: FilterKind::RamLak,
        }
    }
}

impl DatasetConfig {
    pub fn teacher_views(&self) -> usize {
        self.n_sparse * self.teacher_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let full = self.geometry.n_full_views;
        if self.n_sparse == 0 || self.teacher_multiplier == 0 {
            return invalid("view count and teacher multiplier must be positive");
        }
        if full % self.n_sparse != 0 {
            return invalid(format!("{} sparse views do not divide {full}", self.n_sparse));
        }
        if full % self.teacher_views() != 0 {
            return invalid(format!(
                "teacher views {} x {} = {} do not divide {full}",
                self.n_sparse,
                self.teacher_multiplier,
                self.teacher_views()
            ));
        }
        if !(self.photons > 0.0) {
            return invalid("photon count must be positive");
        }
        Ok(())
    }
}

/// Per-sample generator: stream `id` of the ChaCha generator keyed by `seed`.
pub fn sample_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Builds one triplet. Noise is injected once on the full sinogram, so the
/// teacher and student inputs share the noise realization on common views.
pub fn build_sample(cfg: &DatasetConfig, id: usize) -> Result<SampleTriplet> {
    build_sample_with_sinogram(cfg, id).map(|(s, _)| s)
}

/// [`build_sample`] that also returns the noisy full-view sinogram.
pub fn build_sample_with_sinogram(cfg: &DatasetConfig, id: usize) -> Result<(SampleTriplet, tomo::Sinogram)> {
    let mut rng = sample_rng(cfg.seed, id);
    let geom = &cfg.geometry;
    let full = random_phantom(geom.image_size, &mut rng)?;
    let sino = tomo::radon(&full, geom, &geom.full_angles())?;
    let noisy = tomo::add_poisson_noise(&sino, cfg.photons, &mut rng)?;
    let student = tomo::fbp(&tomo::subsample_views(&noisy, cfg.n_sparse)?, geom, cfg.filter)?;
    let teacher = if cfg.teacher_multiplier == 1 {
        student.clone()
    } else {
        tomo::fbp(&tomo::subsample_views(&noisy, cfg.teacher_views())?, geom, cfg.filter)?
    };
    Ok((SampleTriplet { id, full, teacher_input: teacher, student_input: student }, noisy))
}

pub fn build_dataset(cfg: &DatasetConfig) -> Result<Vec<SampleTriplet>> {
    cfg.validate()?;
    (0..cfg.count).map(|id| build_sample(cfg, id)).collect()
}
