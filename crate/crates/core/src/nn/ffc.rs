use rand::Rng;

use super::fourier::FourierUnit;
use super::layers::{BatchNorm2d, Conv2d, Relu};
use super::{Mode, Module, Param};
use crate::error::{invalid, Result};
use crate::tensor::Grid;

/// Local and global feature maps sharing batch and spatial extents.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePair {
    pub local: Grid,
    pub global: Grid,
}

impl FeaturePair {
    pub fn new(local: Grid, global: Grid) -> Result<Self> {
        let (bl, _, hl, wl) = local.dims4()?;
        let (bg, _, hg, wg) = global.dims4()?;
        if (bl, hl, wl) != (bg, hg, wg) {
            return invalid(format!("feature pair extents differ: {:?} vs {:?}", local.shape(), global.shape()));
        }
        Ok(Self { local, global })
    }

    pub fn split(x: &Grid, local_channels: usize) -> Result<Self> {
        let (local, global) = x.split_channels(local_channels)?;
        Ok(Self { local, global })
    }

    pub fn concat(&self) -> Result<Grid> {
        Grid::concat_channels(&self.local, &self.global)
    }

    pub fn add(&self, other: &FeaturePair) -> Result<FeaturePair> {
        Ok(Self { local: self.local.add(&other.local)?, global: self.global.add(&other.global)? })
    }

    pub fn scale(&self, s: f64) -> FeaturePair {
        Self { local: self.local.scale(s), global: self.global.scale(s) }
    }
}

/// One fast-Fourier-convolution layer with four cross paths:
/// `y_l = ReLU(BN(l2l(x_l) + g2l(x_g)))`, `y_g = ReLU(BN(l2g(x_l) + fourier(x_g)))`.
pub struct FfcLayer {
    local_ch: usize,
    global_ch: usize,
    l2l: Conv2d,
    g2l: Conv2d,
    l2g: Conv2d,
    g2g: FourierUnit,
    bn_l: BatchNorm2d,
    bn_g: BatchNorm2d,
    relu_l: Relu,
    relu_g: Relu,
    linear: bool,
}

impl FfcLayer {
    pub fn new<R: Rng + ?Sized>(name: &str, local_ch: usize, global_ch: usize, rng: &mut R) -> Result<Self> {
        if local_ch == 0 || global_ch == 0 {
            return invalid(format!("{name}: both branches need channels, got {local_ch}/{global_ch}"));
        }
        Ok(Self {
            local_ch,
            global_ch,
            l2l: Conv2d::new(&format!("{name}.l2l"), local_ch, local_ch, 3, 1, 1, rng),
            g2l: Conv2d::new(&format!("{name}.g2l"), global_ch, local_ch, 3, 1, 1, rng),
            l2g: Conv2d::new(&format!("{name}.l2g"), local_ch, global_ch, 3, 1, 1, rng),
            g2g: FourierUnit::new(&format!("{name}.g2g"), global_ch, rng)?,
            bn_l: BatchNorm2d::new(&format!("{name}.bn_l"), local_ch),
            bn_g: BatchNorm2d::new(&format!("{name}.bn_g"), global_ch),
            relu_l: Relu::new(),
            relu_g: Relu::new(),
            linear: false,
        })
    }

    /// Bypasses every BN and ReLU, leaving a linear map.
    pub fn set_linear(&mut self, linear: bool) {
        self.linear = linear;
        self.g2g.set_linear(linear);
    }

    fn check(&self, p: &FeaturePair) -> Result<()> {
        let cl = p.local.dims4()?.1;
        let cg = p.global.dims4()?.1;
        if (cl, cg) != (self.local_ch, self.global_ch) {
            return invalid(format!(
                "ffc layer expects {}/{} channels, got {cl}/{cg}",
                self.local_ch, self.global_ch
            ));
        }
        Ok(())
    }

    pub fn forward_pair(&mut self, p: &FeaturePair, mode: Mode) -> Result<FeaturePair> {
        self.check(p)?;
        let sl = self.l2l.forward(&p.local, mode)?.add(&self.g2l.forward(&p.global, mode)?)?;
        let sg = self.l2g.forward(&p.local, mode)?.add(&self.g2g.forward(&p.global, mode)?)?;
        if self.linear {
            return FeaturePair::new(sl, sg);
        }
        let yl = self.relu_l.forward(&self.bn_l.forward(&sl, mode)?, mode)?;
        let yg = self.relu_g.forward(&self.bn_g.forward(&sg, mode)?, mode)?;
        FeaturePair::new(yl, yg)
    }

    pub fn backward_pair(&mut self, g: &FeaturePair) -> Result<FeaturePair> {
        let (dsl, dsg) = if self.linear {
            (g.local.clone(), g.global.clone())
        } else {
            (
                self.bn_l.backward(&self.relu_l.backward(&g.local)?)?,
                self.bn_g.backward(&self.relu_g.backward(&g.global)?)?,
            )
        };
        let dl = self.l2l.backward(&dsl)?.add(&self.l2g.backward(&dsg)?)?;
        let dg = self.g2l.backward(&dsl)?.add(&self.g2g.backward(&dsg)?)?;
        Ok(FeaturePair { local: dl, global: dg })
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.l2l.params();
        p.extend(self.g2l.params());
        p.extend(self.l2g.params());
        p.extend(self.g2g.params());
        p.extend(self.bn_l.params());
        p.extend(self.bn_g.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.l2l.params_mut();
        p.extend(self.g2l.params_mut());
        p.extend(self.l2g.params_mut());
        p.extend(self.g2g.params_mut());
        p.extend(self.bn_l.params_mut());
        p.extend(self.bn_g.params_mut());
        p
    }
}

/// Two FFC layers with a per-branch skip: `out = x + layer2(layer1(x))`.
///
/// As a [`Module`] the block reads and writes the channel concatenation
/// `[local | global]`.
pub struct FfcBlock {
    first: FfcLayer,
    second: FfcLayer,
}

impl FfcBlock {
    pub fn new<R: Rng + ?Sized>(name: &str, local_ch: usize, global_ch: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            first: FfcLayer::new(&format!("{name}.ffc1"), local_ch, global_ch, rng)?,
            second: FfcLayer::new(&format!("{name}.ffc2"), local_ch, global_ch, rng)?,
        })
    }

    pub fn local_channels(&self) -> usize {
        self.first.local_ch
    }

    pub fn set_linear(&mut self, linear: bool) {
        self.first.set_linear(linear);
        self.second.set_linear(linear);
    }

    pub fn forward_pair(&mut self, p: &FeaturePair, mode: Mode) -> Result<FeaturePair> {
        let h = self.first.forward_pair(p, mode)?;
        let y = self.second.forward_pair(&h, mode)?;
        p.add(&y)
    }

    pub fn backward_pair(&mut self, g: &FeaturePair) -> Result<FeaturePair> {
        let dh = self.second.backward_pair(g)?;
        let dx = self.first.backward_pair(&dh)?;
        g.add(&dx)
    }
}

impl Module for FfcBlock {
    fn forward(&mut self, x: &Grid, mode: Mode) -> Result<Grid> {
        let p = FeaturePair::split(x, self.local_channels())?;
        self.forward_pair(&p, mode)?.concat()
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let g = FeaturePair::split(grad_out, self.local_channels())?;
        self.backward_pair(&g)?.concat()
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.first.params();
        p.extend(self.second.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.first.params_mut();
        p.extend(self.second.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mismatched_pair_rejected() {
        assert!(FeaturePair::new(Grid::zeros(&[1, 2, 4, 4]), Grid::zeros(&[1, 2, 4, 5])).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = FfcLayer::new("l", 2, 4, &mut rng).unwrap();
        let p = FeaturePair::new(Grid::zeros(&[1, 3, 4, 4]), Grid::zeros(&[1, 4, 4, 4])).unwrap();
        assert!(layer.forward_pair(&p, Mode::Train).is_err());
    }
}
