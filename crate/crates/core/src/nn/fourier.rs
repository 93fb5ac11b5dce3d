use num_complex::Complex64;
use rand::Rng;

use super::layers::{BatchNorm2d, Conv2d, Relu, Sequential};
use super::{Mode, Module, Param};
use crate::error::{invalid, Error, Result};
use crate::tensor::{irfft2, irfft2_adjoint, rfft2, rfft2_adjoint, ComplexGrid, Grid};

/// Real channels `2k`, `2k+1` hold the real and imaginary part of complex channel `k`.
fn interleave(c: &ComplexGrid) -> Grid {
    let s = c.shape();
    let (b, ch, h, wf) = (s[0], s[1], s[2], s[3]);
    let plane = h * wf;
    let mut out = vec![0.0; b * 2 * ch * plane];
    for n in 0..b {
        for k in 0..ch {
            let src = &c.data()[(n * ch + k) * plane..][..plane];
            let base = (n * 2 * ch + 2 * k) * plane;
            for (i, z) in src.iter().enumerate() {
                out[base + i] = z.re;
                out[base + plane + i] = z.im;
            }
        }
    }
    Grid::from_parts(vec![b, 2 * ch, h, wf], out)
}

fn deinterleave(g: &Grid) -> ComplexGrid {
    let s = g.shape();
    let (b, ch2, h, wf) = (s[0], s[1], s[2], s[3]);
    let ch = ch2 / 2;
    let plane = h * wf;
    let mut out = vec![Complex64::new(0.0, 0.0); b * ch * plane];
    for n in 0..b {
        for k in 0..ch {
            let base = (n * ch2 + 2 * k) * plane;
            let dst = &mut out[(n * ch + k) * plane..][..plane];
            for (i, z) in dst.iter_mut().enumerate() {
                *z = Complex64::new(g.data()[base + i], g.data()[base + plane + i]);
            }
        }
    }
    ComplexGrid::from_parts(vec![b, ch, h, wf], out)
}

/// Global spectral transform: reduce to `C/2` channels, convolve pointwise in
/// the half spectrum, return to space, add the reduced activation, expand to `C`.
pub struct FourierUnit {
    channels: usize,
    reduce: Sequential,
    freq: Sequential,
    expand: Conv2d,
    linear: bool,
    width: Option<usize>,
}

impl FourierUnit {
    pub fn new<R: Rng + ?Sized>(name: &str, channels: usize, rng: &mut R) -> Result<Self> {
        if channels == 0 || channels % 2 != 0 {
            return invalid(format!("{name}: fourier unit needs an even channel count, got {channels}"));
        }
        let half = channels / 2;
        let reduce = Sequential::new()
            .push(Conv2d::new(&format!("{name}.reduce"), channels, half, 1, 1, 0, rng))
            .push(BatchNorm2d::new(&format!("{name}.reduce_bn"), half))
            .push(Relu::new());
        let freq = Sequential::new()
            .push(Conv2d::new(&format!("{name}.freq"), channels, channels, 1, 1, 0, rng))
            .push(BatchNorm2d::new(&format!("{name}.freq_bn"), channels))
            .push(Relu::new());
        let expand = Conv2d::new(&format!("{name}.expand"), half, channels, 1, 1, 0, rng);
        Ok(Self { channels, reduce, freq, expand, linear: false, width: None })
    }

    /// Skips every BN and ReLU so the unit becomes a linear map.
    pub fn set_linear(&mut self, linear: bool) {
        self.linear = linear;
    }

    fn stage(seq: &mut Sequential, x: &Grid, mode: Mode, linear: bool) -> Result<Grid> {
        if linear {
            seq.forward_prefix(x, mode, 1)
        } else {
            seq.forward(x, mode)
        }
    }

    fn stage_back(seq: &mut Sequential, g: &Grid, linear: bool) -> Result<Grid> {
        if linear {
            seq.backward_prefix(g, 1)
        } else {
            seq.backward(g)
        }
    }
}

impl Module for FourierUnit {
    fn forward(&mut self, x: &Grid, mode: Mode) -> Result<Grid> {
        let (_, c, _, w) = x.dims4()?;
        if c != self.channels {
            return invalid(format!("fourier unit: expected {} channels, got {c}", self.channels));
        }
        let reduced = Self::stage(&mut self.reduce, x, mode, self.linear)?;
        let spec = interleave(&rfft2(&reduced)?);
        let filtered = Self::stage(&mut self.freq, &spec, mode, self.linear)?;
        let back = irfft2(&deinterleave(&filtered), w)?;
        let summed = reduced.add(&back)?;
        self.width = Some(w);
        self.expand.forward(&summed, mode)
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let w = self.width.take().ok_or_else(|| Error::State("fourier unit: backward called before forward".into()))?;
        let d_sum = self.expand.backward(grad_out)?;
        let d_filtered = interleave(&irfft2_adjoint(&d_sum)?);
        let d_spec = Self::stage_back(&mut self.freq, &d_filtered, self.linear)?;
        let d_fft = rfft2_adjoint(&deinterleave(&d_spec), w)?;
        let d_reduced = d_sum.add(&d_fft)?;
        Self::stage_back(&mut self.reduce, &d_reduced, self.linear)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.reduce.params();
        p.extend(self.freq.params());
        p.extend(self.expand.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.reduce.params_mut();
        p.extend(self.freq.params_mut());
        p.extend(self.expand.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interleave_round_trip() {
        let c = ComplexGrid::from_parts(
            vec![1, 2, 1, 2],
            vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0), Complex64::new(5.0, 6.0), Complex64::new(7.0, 8.0)],
        );
        let r = interleave(&c);
        assert_eq!(r.data(), &[1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]);
        assert_eq!(deinterleave(&r), c);
    }

    #[test]
    fn odd_channels_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(FourierUnit::new("f", 3, &mut rng).is_err());
    }
}
