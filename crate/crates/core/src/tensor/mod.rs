//! Dense row-major value grids.
//!
//! [`Grid`] is the single real container used for images, sinograms,
//! feature maps and parameters. Rank is dynamic; most of the crate uses
//! rank 2 (`H x W`) or rank 4 (`B x C x H x W`).

mod fft;

pub use fft::{irfft2, irfft2_adjoint, rfft2, rfft2_adjoint};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Grid {
    /// Builds a grid, rejecting length mismatches and non-finite values.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return invalid(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("element {pos} of grid {shape:?}")));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Unchecked constructor for values produced inside the crate.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_fn2(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { shape: vec![rows, cols], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(rows, cols)` of a rank-2 grid.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [h, w] => Ok((h, w)),
            _ => invalid(format!("expected rank-2 grid, got shape {:?}", self.shape)),
        }
    }

    /// `(batch, channels, rows, cols)` of a rank-4 grid.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => invalid(format!("expected rank-4 grid, got shape {:?}", self.shape)),
        }
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return invalid(format!("cannot reshape {:?} to {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn ensure_same_shape(&self, other: &Grid, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return invalid(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_shape(other, "zip_map")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Grid::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Grid) -> Result<Grid> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Grid) -> Result<Grid> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Grid {
        self.map(|v| v * s)
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Grid, s: f64) -> Result<()> {
        self.ensure_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Grid) -> Result<f64> {
        self.ensure_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Grid) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Slice of one `H x W` plane of a rank-4 grid.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let (ch, h, w) = (self.shape[1], self.shape[2], self.shape[3]);
        let start = (b * ch + c) * h * w;
        &self.data[start..start + h * w]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let (ch, h, w) = (self.shape[1], self.shape[2], self.shape[3]);
        let start = (b * ch + c) * h * w;
        &mut self.data[start..start + h * w]
    }

    /// One sample `[C, H, W]` of a rank-4 batch.
    pub fn sample(&self, b: usize) -> Grid {
        let per = self.shape[1..].iter().product::<usize>();
        Grid::from_parts(self.shape[1..].to_vec(), self.data[b * per..(b + 1) * per].to_vec())
    }

    /// Stacks equally shaped grids along a new leading axis.
    pub fn stack(items: &[Grid]) -> Result<Grid> {
        let Some(first) = items.first() else {
            return invalid("cannot stack zero grids");
        };
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * items.len());
        for g in items {
            first.ensure_same_shape(g, "stack")?;
            data.extend_from_slice(g.data());
        }
        Ok(Grid::from_parts(shape, data))
    }

    /// Concatenates two rank-4 grids along the channel axis.
    pub fn concat_channels(a: &Grid, b: &Grid) -> Result<Grid> {
        let (ba, ca, h, w) = a.dims4()?;
        let (bb, cb, h2, w2) = b.dims4()?;
        if ba != bb || h != h2 || w != w2 {
            return invalid(format!("concat_channels: {:?} vs {:?}", a.shape, b.shape));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(a.len() + b.len());
        for n in 0..ba {
            data.extend_from_slice(&a.data[n * ca * plane..(n + 1) * ca * plane]);
            data.extend_from_slice(&b.data[n * cb * plane..(n + 1) * cb * plane]);
        }
        Ok(Grid::from_parts(vec![ba, ca + cb, h, w], data))
    }

    /// Splits a rank-4 grid into channels `[0, first)` and `[first, C)`.
    pub fn split_channels(&self, first: usize) -> Result<(Grid, Grid)> {
        let (b, c, h, w) = self.dims4()?;
        if first > c {
            return invalid(format!("split at {first} exceeds {c} channels"));
        }
        let plane = h * w;
        let mut lo = Vec::with_capacity(b * first * plane);
        let mut hi = Vec::with_capacity(b * (c - first) * plane);
        for n in 0..b {
            let base = n * c * plane;
            lo.extend_from_slice(&self.data[base..base + first * plane]);
            hi.extend_from_slice(&self.data[base + first * plane..base + c * plane]);
        }
        Ok((
            Grid::from_parts(vec![b, first, h, w], lo),
            Grid::from_parts(vec![b, c - first, h, w], hi),
        ))
    }
}

/// Complex grid in half-spectrum layout for real transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != data.len() {
            return invalid(format!("complex shape {:?} vs {} values", shape, data.len()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("complex grid {shape:?}")));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<Complex64>) -> Self {
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.shape[1] + c]
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return invalid(format!("extents must be positive, got {shape:?}"));
    }
    Ok(())
}
