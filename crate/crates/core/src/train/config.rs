use std::fmt::Write as _;

use crate::distill::BcdDenominator;
use crate::error::{invalid, Result};
use crate::nn::EncoderDecoderConfig;

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the directional term.
    pub alpha: f64,
    /// Weight of the band-pass contrastive term.
    pub beta: f64,
    pub tau: f64,
    /// EMA momentum of the teacher decoder.
    pub momentum: f64,
    pub bank_capacity: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr: f64,
    /// Epochs between learning-rate halvings.
    pub lr_period: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub mask_low: f64,
    pub mask_up: f64,
    pub normalize_embeddings: bool,
    pub denominator: BcdDenominator,
    /// Adds the network input to the decoder output.
    pub residual_output: bool,
    /// Training-mode replays of the training set used to re-estimate the
    /// student's batch-norm statistics after optimization; 0 keeps the
    /// running averages gathered during training.
    pub bn_recalibration_passes: usize,
    pub model: EncoderDecoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.0002,
            tau: 1.0,
            momentum: 0.9,
            bank_capacity: 300,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr: 1e-3,
            lr_period: 40,
            batch_size: 4,
            iterations: 200,
            seed: 0,
            mask_low: 0.2,
            mask_up: 0.5,
            normalize_embeddings: true,
            denominator: BcdDenominator::WithPositive,
            residual_output: false,
            bn_recalibration_passes: 4,
            model: EncoderDecoderConfig::default(),
        }
    }
}

fn denominator_name(d: BcdDenominator) -> &'static str {
    match d {
        BcdDenominator::WithPositive => "with-positive",
        BcdDenominator::NegativesOnly => "negatives-only",
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        if self.iterations == 0 {
            return invalid("iteration count must be positive");
        }
        if self.lr_period == 0 || self.bank_capacity == 0 {
            return invalid("lr_period and bank_capacity must be positive");
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("tau", self.tau), ("lr", self.lr), ("adam_eps", self.adam_eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        for (name, v) in [("momentum", self.momentum), ("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(0.0 <= self.mask_low && self.mask_low < self.mask_up && self.mask_up <= 1.0) {
            return invalid(format!("mask bounds must satisfy 0 <= low < up <= 1, got [{}, {}]", self.mask_low, self.mask_up));
        }
        Ok(())
    }

    /// Pixel-loss-only configuration.
    pub fn is_pixel_only(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }

    /// Ordered `(key, value)` pairs; the inverse of [`TrainConfig::parse`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        vec![
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("tau", self.tau.to_string()),
            ("momentum", self.momentum.to_string()),
            ("bank_capacity", self.bank_capacity.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_period", self.lr_period.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("seed", self.seed.to_string()),
            ("mask_low", self.mask_low.to_string()),
            ("mask_up", self.mask_up.to_string()),
            ("normalize_embeddings", self.normalize_embeddings.to_string()),
            ("denominator", denominator_name(self.denominator).to_string()),
            ("residual_output", self.residual_output.to_string()),
            ("bn_recalibration_passes", self.bn_recalibration_passes.to_string()),
            ("base_channels", m.base_channels.to_string()),
            ("encoder_blocks", m.encoder_blocks.to_string()),
            ("decoder_blocks", m.decoder_blocks.to_string()),
            ("global_ratio", m.global_ratio.to_string()),
            ("width_multiplier", m.width_multiplier.to_string()),
            ("input_channels", m.input_channels.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k} = {v}").expect("string write");
        }
        s
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().or_else(|_| invalid(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "bank_capacity" => self.bank_capacity = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "lr_period" => self.lr_period = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "mask_low" => self.mask_low = num(key, value)?,
            "mask_up" => self.mask_up = num(key, value)?,
            "normalize_embeddings" => self.normalize_embeddings = num(key, value)?,
            "denominator" => {
                self.denominator = match value {
                    "with-positive" => BcdDenominator::WithPositive,
                    "negatives-only" => BcdDenominator::NegativesOnly,
                    _ => return invalid(format!("denominator: expected with-positive or negatives-only, got {value:?}")),
                }
            }
            "residual_output" => self.residual_output = num(key, value)?,
            "bn_recalibration_passes" => self.bn_recalibration_passes = num(key, value)?,
            "base_channels" => self.model.base_channels = num(key, value)?,
            "encoder_blocks" => self.model.encoder_blocks = num(key, value)?,
            "decoder_blocks" => self.model.decoder_blocks = num(key, value)?,
            "global_ratio" => self.model.global_ratio = num(key, value)?,
            "width_multiplier" => self.model.width_multiplier = num(key, value)?,
            "input_channels" => self.model.input_channels = num(key, value)?,
            _ => return invalid(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Parses flat `key = value` text on top of the defaults. `#` starts a
    /// comment; unknown or repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!("line {}: expected `key = value`", n + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return invalid(format!("line {}: duplicate key {k:?}", n + 1));
            }
            cfg.set(k, v).map_err(|e| crate::Error::InvalidArgument(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
