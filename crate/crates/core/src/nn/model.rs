use rand::Rng;

use super::ffc::{FeaturePair, FfcBlock};
use super::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, ReflectionPad2d, Relu, Sequential};
use super::{Mode, Module, Param};
use crate::error::{invalid, Result};
use crate::tensor::Grid;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderDecoderConfig {
    pub base_channels: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub global_ratio: f64,
    pub width_multiplier: f64,
    pub input_channels: usize,
}

impl Default for EncoderDecoderConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            encoder_blocks: 7,
            decoder_blocks: 2,
            global_ratio: 0.75,
            width_multiplier: 0.25,
            input_channels: 1,
        }
    }
}

/// Resolved channel counts of one encoder/decoder pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelPlan {
    pub stem: usize,
    pub down: usize,
    pub trunk: usize,
    pub local: usize,
    pub global: usize,
}

impl EncoderDecoderConfig {
    pub fn validate(&self) -> Result<ChannelPlan> {
        if self.encoder_blocks + self.decoder_blocks == 0 {
            return invalid("at least one FFC block is required");
        }
        if self.input_channels == 0 {
            return invalid("input channels must be positive");
        }
        if !(self.width_multiplier > 0.0) {
            return invalid("width multiplier must be positive");
        }
        if !(self.global_ratio > 0.0 && self.global_ratio < 1.0) {
            return invalid(format!("global ratio must lie in (0, 1), got {}", self.global_ratio));
        }
        let scaled = self.base_channels as f64 * self.width_multiplier;
        let stem = scaled.round() as usize;
        if (scaled - stem as f64).abs() > 1e-9 || stem < 4 || stem % 4 != 0 {
            return invalid(format!(
                "scaled base width {scaled} must be an integer >= 4 divisible by 4"
            ));
        }
        let trunk = 4 * stem;
        let global_f = trunk as f64 * self.global_ratio;
        let global = global_f.round() as usize;
        if (global_f - global as f64).abs() > 1e-9 || global % 2 != 0 || global == 0 || global >= trunk {
            return invalid(format!("global ratio {} splits {trunk} channels unevenly", self.global_ratio));
        }
        Ok(ChannelPlan { stem, down: 2 * stem, trunk, local: trunk - global, global })
    }
}

fn conv_bn_relu<R: Rng + ?Sized>(
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    rng: &mut R,
) -> Sequential {
    Sequential::new()
        .push(Conv2d::new(name, cin, cout, k, stride, pad, rng))
        .push(BatchNorm2d::new(&format!("{name}_bn"), cout))
        .push(Relu::new())
}

/// Splits a trunk map into the local/global pair through two conv-BN-ReLU
/// branches, then runs the FFC blocks and concatenates `[local | global]`.
struct FfcTrunk {
    split_local: Sequential,
    split_global: Sequential,
    blocks: Vec<FfcBlock>,
}

impl FfcTrunk {
    fn new<R: Rng + ?Sized>(name: &str, cin: usize, plan: &ChannelPlan, stride: usize, blocks: usize, rng: &mut R) -> Result<Self> {
        let split_local = conv_bn_relu(&format!("{name}.split_local"), cin, plan.local, 3, stride, 1, rng);
        let split_global = conv_bn_relu(&format!("{name}.split_global"), cin, plan.global, 3, stride, 1, rng);
        let blocks = (0..blocks)
            .map(|i| FfcBlock::new(&format!("{name}.block{i}"), plan.local, plan.global, rng))
            .collect::<Result<_>>()?;
        Ok(Self { split_local, split_global, blocks })
    }

    fn forward(&mut self, x: &Grid, mode: Mode) -> Result<Grid> {
        let mut p = FeaturePair::new(self.split_local.forward(x, mode)?, self.split_global.forward(x, mode)?)?;
        for b in &mut self.blocks {
            p = b.forward_pair(&p, mode)?;
        }
        p.concat()
    }

    fn backward(&mut self, g: &Grid, local: usize) -> Result<Grid> {
        let mut gp = FeaturePair::split(g, local)?;
        for b in self.blocks.iter_mut().rev() {
            gp = b.backward_pair(&gp)?;
        }
        self.split_local.backward(&gp.local)?.add(&self.split_global.backward(&gp.global)?)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.split_local.params();
        p.extend(self.split_global.params());
        for b in &self.blocks {
            p.extend(b.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.split_local.params_mut();
        p.extend(self.split_global.params_mut());
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p
    }

    fn set_linear(&mut self, linear: bool) {
        for b in &mut self.blocks {
            b.set_linear(linear);
        }
    }
}

/// Image `[B, C_in, N, N]` to representation `Z` of shape `[B, C_trunk, N/4, N/4]`.
pub struct Encoder {
    plan: ChannelPlan,
    input_channels: usize,
    stem: Sequential,
    trunk: FfcTrunk,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(cfg: &EncoderDecoderConfig, rng: &mut R) -> Result<Self> {
        let plan = cfg.validate()?;
        let stem = Sequential::new()
            .push(ReflectionPad2d::new(3))
            .push(Conv2d::new("encoder.stem", cfg.input_channels, plan.stem, 7, 1, 0, rng))
            .push(BatchNorm2d::new("encoder.stem_bn", plan.stem))
            .push(Relu::new())
            .push(Conv2d::new("encoder.down", plan.stem, plan.down, 3, 2, 1, rng))
            .push(BatchNorm2d::new("encoder.down_bn", plan.down))
            .push(Relu::new());
        let trunk = FfcTrunk::new("encoder", plan.down, &plan, 2, cfg.encoder_blocks, rng)?;
        Ok(Self { plan, input_channels: cfg.input_channels, stem, trunk })
    }

    pub fn plan(&self) -> ChannelPlan {
        self.plan
    }

    pub fn set_linear(&mut self, linear: bool) {
        self.trunk.set_linear(linear);
    }
}

impl Module for Encoder {
    fn forward(&mut self, x: &Grid, mode: Mode) -> Result<Grid> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.input_channels {
            return invalid(format!("encoder expects {} input channels, got {c}", self.input_channels));
        }
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return invalid(format!("image extents must be positive multiples of 4, got {h}x{w}"));
        }
        let h = self.stem.forward(x, mode)?;
        self.trunk.forward(&h, mode)
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let g = self.trunk.backward(grad_out, self.plan.local)?;
        self.stem.backward(&g)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.stem.params();
        p.extend(self.trunk.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.stem.params_mut();
        p.extend(self.trunk.params_mut());
        p
    }
}

/// Representation `Z` back to a single-channel `[B, 1, N, N]` image.
pub struct Decoder {
    plan: ChannelPlan,
    trunk: FfcTrunk,
    head: Sequential,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(cfg: &EncoderDecoderConfig, rng: &mut R) -> Result<Self> {
        let plan = cfg.validate()?;
        let trunk = FfcTrunk::new("decoder", plan.trunk, &plan, 1, cfg.decoder_blocks, rng)?;
        let head = Sequential::new()
            .push(ConvTranspose2d::new("decoder.up1", plan.trunk, plan.down, 3, 2, 1, 1, rng))
            .push(BatchNorm2d::new("decoder.up1_bn", plan.down))
            .push(Relu::new())
            .push(ConvTranspose2d::new("decoder.up2", plan.down, plan.stem, 3, 2, 1, 1, rng))
            .push(BatchNorm2d::new("decoder.up2_bn", plan.stem))
            .push(Relu::new())
            .push(ReflectionPad2d::new(3))
            .push(Conv2d::new("decoder.out", plan.stem, 1, 7, 1, 0, rng));
        Ok(Self { plan, trunk, head })
    }

    pub fn plan(&self) -> ChannelPlan {
        self.plan
    }

    pub fn set_linear(&mut self, linear: bool) {
        self.trunk.set_linear(linear);
    }
}

impl Module for Decoder {
    fn forward(&mut self, z: &Grid, mode: Mode) -> Result<Grid> {
        let (_, c, h, w) = z.dims4()?;
        if c != self.plan.trunk {
            return invalid(format!("decoder expects {} channels, got {c}", self.plan.trunk));
        }
        if h == 0 || w == 0 {
            return invalid("empty representation");
        }
        let t = self.trunk.forward(z, mode)?;
        self.head.forward(&t, mode)
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let g = self.head.backward(grad_out)?;
        self.trunk.backward(&g, self.plan.local)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.trunk.params();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.trunk.params_mut();
        p.extend(self.head.params_mut());
        p
    }
}
