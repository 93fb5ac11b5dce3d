//! Parallel-beam CT simulation: forward projection, view subsampling,
//! transmission noise and filtered back projection.
//!
//! Coordinates: pixel `(row, col)` of an `N x N` image sits at
//! `x = col - (N-1)/2`, `y = row - (N-1)/2`. A view at angle `theta` sends
//! rays along `(sin theta, cos theta)` (so `theta = 0` runs along `+y`) and
//! measures offsets along the detector axis `(cos theta, -sin theta)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::tensor::Grid;

/// Distance between consecutive samples along a ray, in pixels.
pub const RAY_STEP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ScanGeometry {
    pub image_size: usize,
    pub n_detectors: usize,
    pub n_full_views: usize,
    /// Detector pitch in pixels.
    pub detector_spacing: f64,
    /// Source to rotation centre, in pixels. Unused by the parallel-beam projector.
    pub source_distance: f64,
    pub angle_range: f64,
}

impl Default for ScanGeometry {
    fn default() -> Self {
        Self {
            image_size: 64,
            n_detectors: 96,
            n_full_views: 180,
            detector_spacing: 1.0,
            source_distance: 256.0,
            angle_range: 2.0 * PI,
        }
    }
}

impl ScanGeometry {
    /// Geometry sized like the clinical setup: 256 px, 672 detectors, 720 views.
    pub fn clinical() -> Self {
        Self {
            image_size: 256,
            n_detectors: 672,
            n_full_views: 720,
            detector_spacing: 1.0,
            source_distance: 1024.0,
            angle_range: 2.0 * PI,
        }
    }

    pub fn with_size(image_size: usize) -> Self {
        Self { image_size, n_detectors: image_size * 3 / 2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return invalid("image size must be positive");
        }
        if self.n_detectors < self.image_size {
            return invalid(format!(
                "{} detectors cannot cover a {}-pixel image",
                self.n_detectors, self.image_size
            ));
        }
        if self.n_full_views < 2 {
            return invalid("need at least two full views");
        }
        if !(self.detector_spacing > 0.0 && self.angle_range > 0.0) {
            return invalid("detector spacing and angle range must be positive");
        }
        Ok(())
    }

    /// Uniformly spaced angles `v * range / n` for `v = 0..n`.
    pub fn angles(&self, n: usize) -> Vec<f64> {
        (0..n).map(|v| v as f64 * self.angle_range / n as f64).collect()
    }

    pub fn full_angles(&self) -> Vec<f64> {
        self.angles(self.n_full_views)
    }

    fn detector_offset(&self, d: usize) -> f64 {
        (d as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    values: Grid,
    angles: Vec<f64>,
}

impl Sinogram {
    pub fn new(values: Grid, angles: Vec<f64>) -> Result<Self> {
        let (rows, _) = values.dims2()?;
        if rows != angles.len() {
            return invalid(format!("{rows} sinogram rows but {} angles", angles.len()));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return invalid("non-finite view angle");
        }
        Ok(Self { values, angles })
    }

    pub fn values(&self) -> &Grid {
        &self.values
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_views(&self) -> usize {
        self.angles.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Bilinear lookup with zero outside the image.
#[inline]
fn bilinear(img: &[f64], n: usize, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let ni = n as isize;
    let px = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= ni || c >= ni {
            0.0
        } else {
            img[r as usize * n + c as usize]
        }
    };
    (1.0 - fr) * ((1.0 - fc) * px(r0, c0) + fc * px(r0, c0 + 1))
        + fr * ((1.0 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1))
}

/// Line integrals of `image` along every ray of every listed view.
pub fn radon(image: &Grid, geom: &ScanGeometry, angles: &[f64]) -> Result<Sinogram> {
    geom.validate()?;
    let (h, w) = image.dims2()?;
    if h != w {
        return invalid(format!("image must be square, got {h}x{w}"));
    }
    if h != geom.image_size {
        return invalid(format!("image side {h} does not match geometry {}", geom.image_size));
    }
    let n = h;
    let centre = (n as f64 - 1.0) / 2.0;
    // Symmetric sample positions covering the image diagonal.
    let reach = ((n as f64 / 2.0) * 2f64.sqrt() / RAY_STEP).ceil() as isize + 2;
    let img = image.data();
    let nd = geom.n_detectors;
    let mut out = vec![0.0; angles.len() * nd];
    for (v, &theta) in angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        let row_out = &mut out[v * nd..(v + 1) * nd];
        for (d, slot) in row_out.iter_mut().enumerate() {
            let t = geom.detector_offset(d);
            let (bx, by) = (t * cos, -t * sin);
            let mut acc = 0.0;
            for k in -reach..=reach {
                let s = k as f64 * RAY_STEP;
                let x = bx + s * sin;
                let y = by + s * cos;
                acc += bilinear(img, n, y + centre, x + centre);
            }
            *slot = acc * RAY_STEP;
        }
    }
    Sinogram::new(Grid::from_parts(vec![angles.len(), nd], out), angles.to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    RamLak,
    Hann,
}

impl std::str::FromStr for FilterKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ram-lak" => Ok(Self::RamLak),
            "hann" => Ok(Self::Hann),
            other => invalid(format!("unknown filter '{other}' (expected ram-lak or hann)")),
        }
    }
}

/// Frequency response on a length-`len` FFT grid.
fn filter_response(kind: FilterKind, len: usize, spacing: f64) -> Vec<f64> {
    let nyquist = 1.0 / (2.0 * spacing);
    (0..len)
        .map(|k| {
            let k = k.min(len - k);
            let freq = k as f64 / (len as f64 * spacing);
            let window = match kind {
                FilterKind::RamLak => 1.0,
                FilterKind::Hann => 0.5 * (1.0 + (PI * freq / nyquist).cos()),
            };
            freq * window
        })
        .collect()
}

/// Ramp-filters each projection (zero-padded to a power of two).
pub fn filter_projections(sino: &Sinogram, kind: FilterKind, spacing: f64) -> Grid {
    let (nv, nd) = (sino.n_views(), sino.n_detectors());
    let len = (2 * nd).next_power_of_two();
    let response = filter_response(kind, len, spacing);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut out = vec![0.0; nv * nd];
    for v in 0..nv {
        let row = &sino.values().data()[v * nd..(v + 1) * nd];
        for (i, z) in buf.iter_mut().enumerate() {
            *z = Complex64::new(if i < nd { row[i] } else { 0.0 }, 0.0);
        }
        fwd.process(&mut buf);
        for (z, r) in buf.iter_mut().zip(&response) {
            *z *= *r;
        }
        inv.process(&mut buf);
        for (o, z) in out[v * nd..(v + 1) * nd].iter_mut().zip(&buf) {
            *o = z.re / len as f64;
        }
    }
    Grid::from_parts(vec![nv, nd], out)
}

/// Filtered back projection onto an `N x N` grid.
pub fn fbp(sino: &Sinogram, geom: &ScanGeometry, kind: FilterKind) -> Result<Grid> {
    geom.validate()?;
    let nv = sino.n_views();
    if nv < 2 {
        return invalid(format!("filtered back projection needs >= 2 views, got {nv}"));
    }
    if sino.n_detectors() != geom.n_detectors {
        return invalid(format!(
            "sinogram has {} detectors, geometry expects {}",
            sino.n_detectors(),
            geom.n_detectors
        ));
    }
    let filtered = filter_projections(sino, kind, geom.detector_spacing);
    let n = geom.image_size;
    let nd = geom.n_detectors;
    let centre = (n as f64 - 1.0) / 2.0;
    let det_centre = (nd as f64 - 1.0) / 2.0;
    let mut img = vec![0.0; n * n];
    // Views are accumulated in index order so the result is reproducible.
    for (v, &theta) in sino.angles().iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        let q = &filtered.data()[v * nd..(v + 1) * nd];
        for r in 0..n {
            let y = r as f64 - centre;
            for c in 0..n {
                let x = c as f64 - centre;
                let pos = (x * cos - y * sin) / geom.detector_spacing + det_centre;
                let i0 = pos.floor();
                let f = pos - i0;
                let i0 = i0 as isize;
                let at = |i: isize| if i < 0 || i >= nd as isize { 0.0 } else { q[i as usize] };
                img[r * n + c] += (1.0 - f) * at(i0) + f * at(i0 + 1);
            }
        }
    }
    let scale = geom.angle_range / (2.0 * nv as f64);
    img.iter_mut().for_each(|p| *p *= scale);
    Ok(Grid::from_parts(vec![n, n], img))
}

/// Keeps every `(n_views / n_sparse)`-th view, starting at view 0.
pub fn subsample_views(sino: &Sinogram, n_sparse: usize) -> Result<Sinogram> {
    let nv = sino.n_views();
    if n_sparse == 0 || nv % n_sparse != 0 {
        return invalid(format!("{n_sparse} sparse views do not evenly divide {nv} views"));
    }
    let stride = nv / n_sparse;
    let nd = sino.n_detectors();
    let mut values = Vec::with_capacity(n_sparse * nd);
    let mut angles = Vec::with_capacity(n_sparse);
    for v in (0..nv).step_by(stride) {
        values.extend_from_slice(&sino.values().data()[v * nd..(v + 1) * nd]);
        angles.push(sino.angles()[v]);
    }
    Sinogram::new(Grid::from_parts(vec![n_sparse, nd], values), angles)
}

/// Transmission-domain Poisson noise: counts ~ Poisson(I0 exp(-s)),
/// measurement `-ln(max(counts, 1) / I0)`.
pub fn add_poisson_noise<R: Rng + ?Sized>(sino: &Sinogram, i0: f64, rng: &mut R) -> Result<Sinogram> {
    if !(i0 > 0.0 && i0.is_finite()) {
        return invalid(format!("photon count must be positive, got {i0}"));
    }
    if let Some(bad) = sino.values().data().iter().find(|&&s| s < 0.0) {
        return invalid(format!("negative line integral {bad} cannot be noised"));
    }
    let mut out = Vec::with_capacity(sino.values().len());
    for &s in sino.values().data() {
        let lambda = i0 * (-s).exp();
        let counts = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| crate::Error::InvalidArgument(format!("poisson rate {lambda}: {e}")))?
                .sample(rng)
        } else {
            0.0
        };
        out.push(-(counts.max(1.0) / i0).ln());
    }
    Sinogram::new(Grid::from_parts(sino.values().shape().to_vec(), out), sino.angles().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sino(rows: usize) -> Sinogram {
        let g = Grid::from_fn2(rows, 3, |r, c| (r * 10 + c) as f64);
        Sinogram::new(g, (0..rows).map(|r| r as f64).collect()).unwrap()
    }

    #[test]
    fn subsample_identity_and_stride() {
        let s = sino(180);
        assert_eq!(subsample_views(&s, 180).unwrap(), s);
        let sub = subsample_views(&s, 18).unwrap();
        let kept: Vec<f64> = sub.angles().to_vec();
        assert_eq!(kept, (0..18).map(|v| (v * 10) as f64).collect::<Vec<_>>());
        assert_eq!(sub.values().at2(3, 1), s.values().at2(30, 1));
    }

    #[test]
    fn subsample_rejects_non_divisor() {
        assert!(subsample_views(&sino(180), 72).is_err());
        assert!(subsample_views(&sino(180), 0).is_err());
    }

    #[test]
    fn subsample_composes() {
        let s = sino(180);
        let twice = subsample_views(&subsample_views(&s, 90).unwrap(), 18).unwrap();
        assert_eq!(twice, subsample_views(&s, 18).unwrap());
    }

    #[test]
    fn fbp_needs_two_views() {
        let geom = ScanGeometry { image_size: 4, n_detectors: 6, ..ScanGeometry::default() };
        let one = Sinogram::new(Grid::zeros(&[1, 6]), vec![0.0]).unwrap();
        assert!(fbp(&one, &geom, FilterKind::RamLak).is_err());
    }

    #[test]
    fn radon_rejects_non_square() {
        let geom = ScanGeometry::default();
        assert!(radon(&Grid::zeros(&[64, 32]), &geom, &[0.0]).is_err());
    }

    #[test]
    fn noise_rejects_negative_and_bad_i0() {
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let neg = Sinogram::new(Grid::filled(&[1, 2], -0.1), vec![0.0]).unwrap();
        assert!(add_poisson_noise(&neg, 1e6, &mut rng).is_err());
        let ok = Sinogram::new(Grid::zeros(&[1, 2]), vec![0.0]).unwrap();
        assert!(add_poisson_noise(&ok, 0.0, &mut rng).is_err());
    }

    #[test]
    fn filter_names_parse() {
        assert_eq!("hann".parse::<FilterKind>().unwrap(), FilterKind::Hann);
        assert!("shepp".parse::<FilterKind>().is_err());
    }
}
