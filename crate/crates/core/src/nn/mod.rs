//! Explicit forward/backward layers and the encoder/decoder built from them.
//!
//! Every layer caches what its backward pass needs during `forward`, and
//! `backward` *accumulates* into parameter gradients; call
//! [`Module::zero_grad`] between steps.

pub mod checkpoint;
mod ffc;
mod fourier;
mod layers;
mod model;

pub use ffc::{FeaturePair, FfcBlock, FfcLayer};
pub use fourier::FourierUnit;
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, ReflectionPad2d, Relu, Sequential};
pub use model::{ChannelPlan, Decoder, Encoder, EncoderDecoderConfig};

use rand::Rng;

use crate::error::Result;
use crate::tensor::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Optimized by gradient descent.
    Weight,
    /// Running statistic; updated by forward passes, never by an optimizer.
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Grid,
    pub grad: Grid,
}

impl Param {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: Grid) -> Self {
        let grad = Grid::zeros(value.shape());
        Self { name: name.into(), kind, value, grad }
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == ParamKind::Weight
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics updated.
    Train,
    /// Batch statistics; running statistics left untouched.
    TrainFrozenStats,
    /// Running statistics.
    Eval,
}

pub trait Module {
    fn forward(&mut self, x: &Grid, mode: Mode) -> Result<Grid>;

    /// Consumes `dL/dy`, accumulates parameter gradients and returns `dL/dx`.
    fn backward(&mut self, grad_out: &Grid) -> Result<Grid>;

    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Total number of trainable scalars.
    fn num_trainable(&self) -> usize {
        self.params().iter().filter(|p| p.is_trainable()).map(|p| p.value.len()).sum()
    }
}

/// Uniform He initialization: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub(crate) fn kaiming_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Grid {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Grid::from_parts(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

/// `C = A' B' + beta C` where `A'` is `m x k` and `B'` is `k x n`, both row-major,
/// optionally stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches given
    // these strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // A = [[1,2,3],[4,5,6]], B = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // A^T stored: At = [[1,4],[2,5],[3,6]]
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c2 = [1.0; 4];
        gemm(2, 3, 2, &at, true, &bt, true, 1.0, &mut c2);
        assert_eq!(c2, [5.0, 6.0, 11.0, 12.0]);
    }
}
