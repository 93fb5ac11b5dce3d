//! Teacher/student optimization with EMA decoder, memory bank and compound
//! student loss, plus the pixel-loss-only baseline.
//!
//! Each iteration runs, in order: EMA update of the teacher decoder, teacher
//! forward, teacher-encoder step on its pixel loss, student forward, student
//! step on `pixel + alpha * rdd + beta * bcd`, and finally a push of the
//! teacher's band-pass embeddings into the memory bank.

mod adam;
mod config;

pub use adam::{adam_step, lr_at, AdamState};
pub use config::TrainConfig;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distill::{bcd_loss, l1_pixel_loss, rdd_loss, EmaTracker, MemoryBank};
use crate::error::{invalid, Error, Result};
use crate::metrics;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Decoder, Encoder, Mode, Module, Param};
use crate::phantom::SampleTriplet;
use crate::spectral::{bandpass_embed, bandpass_embed_backward, bandpass_embed_cached, BandMask, SpectralEmbedding};
use crate::tensor::Grid;

pub const LOG_HEADER: &str = "iter,lr,pixelS,pixelT,rdd,bcd,cos_mean";
pub const EVAL_HEADER: &str = "id,psnr_fbp,psnr_model,ssim_fbp,ssim_model,rmse_fbp,rmse_model";

/// Checkpoint prefix of the re-estimated batch-norm statistics used for inference.
pub const EVAL_STATS_PREFIX: &str = "eval";

/// Stream offset separating the data-order generator from initialization.
const ORDER_STREAM: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Teacher branch, EMA decoder, memory bank and compound student loss.
    GloReDi,
    /// Student only, pixel loss only.
    FreeNet,
}

/// One CSV row. Teacher-side columns are `None` for the baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct IterLog {
    pub iter: usize,
    pub lr: f64,
    pub pixel_s: f64,
    pub pixel_t: Option<f64>,
    pub rdd: Option<f64>,
    pub bcd: Option<f64>,
    pub cos_mean: Option<f64>,
}

impl IterLog {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.iter,
            self.lr,
            self.pixel_s,
            opt(self.pixel_t),
            opt(self.rdd),
            opt(self.bcd),
            opt(self.cos_mean)
        )
    }
}

pub fn log_csv(rows: &[IterLog]) -> String {
    let mut s = format!("{LOG_HEADER}\n");
    for r in rows {
        writeln!(s, "{}", r.csv_row()).expect("string write");
    }
    s
}

fn ensure_finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{term} loss is {v}")))
    }
}

/// Copies values (weights and running statistics) between modules with
/// identical parameter lists.
fn copy_params(dst: &mut dyn Module, src: &dyn Module) -> Result<()> {
    let s = src.params();
    let d = dst.params_mut();
    if s.len() != d.len() {
        return invalid("parameter lists differ in length");
    }
    for (d, s) in d.into_iter().zip(s) {
        if d.name != s.name || d.value.shape() != s.value.shape() {
            return invalid(format!("cannot copy {} into {}", s.name, d.name));
        }
        d.value = s.value.clone();
    }
    Ok(())
}

fn batch_of(images: impl Iterator<Item = Grid>) -> Result<Grid> {
    let items: Vec<Grid> = images.collect();
    let stacked = Grid::stack(&items)?;
    let (b, h, w) = (stacked.shape()[0], stacked.shape()[1], stacked.shape()[2]);
    stacked.reshape(&[b, 1, h, w])
}

fn validate_dataset(data: &[SampleTriplet], cfg: &TrainConfig) -> Result<usize> {
    let Some(first) = data.first() else {
        return invalid("dataset is empty");
    };
    if cfg.model.input_channels != 1 {
        return invalid("training reads single-channel FBP images; set input_channels = 1");
    }
    let (h, w) = first.full.dims2()?;
    if h != w || h % 4 != 0 {
        return invalid(format!("images must be square with side divisible by 4, got {h}x{w}"));
    }
    for s in data {
        for g in [&s.full, &s.teacher_input, &s.student_input] {
            if g.shape() != [h, w] {
                return invalid(format!("sample {} has shape {:?}, expected [{h}, {w}]", s.id, g.shape()));
            }
        }
    }
    Ok(h)
}

/// Deterministic data order: the concatenation of per-epoch permutations.
#[derive(Clone, Debug)]
struct Order {
    seed: u64,
    n: usize,
    epoch: usize,
    perm: Vec<usize>,
}

impl Order {
    fn new(seed: u64, n: usize) -> Self {
        let mut o = Self { seed, n, epoch: usize::MAX, perm: Vec::new() };
        o.load(0);
        o
    }

    fn load(&mut self, epoch: usize) {
        if self.epoch == epoch {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(ORDER_STREAM + epoch as u64);
        self.perm = (0..self.n).collect();
        self.perm.shuffle(&mut rng);
        self.epoch = epoch;
    }

    fn at(&mut self, pos: usize) -> usize {
        self.load(pos / self.n);
        self.perm[pos % self.n]
    }
}

/// Student encoder/decoder pair returned by training.
pub struct TrainedModel {
    pub config: TrainConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

/// Per-sample comparison of the FBP input and the model output against the
/// full-view reference, all on data range 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub id: usize,
    pub fbp: metrics::MetricReport,
    pub model: metrics::MetricReport,
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.id, r.fbp.psnr, r.model.psnr, r.fbp.ssim, r.model.ssim, r.fbp.rmse, r.model.rmse
        )
        .expect("string write");
    }
    s
}

/// Means of `(psnr_fbp, psnr_model, ssim_fbp, ssim_model, rmse_fbp, rmse_model)`.
pub fn eval_means(rows: &[EvalRow]) -> [f64; 6] {
    let n = rows.len().max(1) as f64;
    let mut m = [0.0; 6];
    for r in rows {
        let v = [r.fbp.psnr, r.model.psnr, r.fbp.ssim, r.model.ssim, r.fbp.rmse, r.model.rmse];
        for (a, b) in m.iter_mut().zip(v) {
            *a += b / n;
        }
    }
    m
}

impl TrainedModel {
    /// Rebuilds the student from a checkpoint written by [`Trainer::checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = config_from_checkpoint(ck)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut encoder = Encoder::new(&config.model, &mut rng)?;
        let mut decoder = Decoder::new(&config.model, &mut rng)?;
        ck.load_module("student", &mut encoder)?;
        ck.load_module("student", &mut decoder)?;
        for p in encoder.params_mut().into_iter().chain(decoder.params_mut()).filter(|p| !p.is_trainable()) {
            let key = format!("{EVAL_STATS_PREFIX}.{}", p.name);
            if let Some(g) = ck.get(&key) {
                if g.shape() != p.value.shape() {
                    return Err(Error::Format(format!("{key}: shape {:?}, model {:?}", g.shape(), p.value.shape())));
                }
                p.value = g.clone();
            }
        }
        Ok(Self { config, encoder, decoder })
    }

    /// Replays `data` in order through the student in training mode without
    /// parameter updates. The running statistics gathered during optimization
    /// average over many past weight states; afterwards they track the final
    /// weights.
    pub fn recalibrate(&mut self, data: &[SampleTriplet], passes: usize) -> Result<()> {
        for _ in 0..passes {
            for chunk in data.chunks(self.config.batch_size) {
                let x = batch_of(chunk.iter().map(|s| s.student_input.clone()))?;
                let z = self.encoder.forward(&x, Mode::Train)?;
                self.decoder.forward(&z, Mode::Train)?;
            }
        }
        Ok(())
    }

    /// Stores the batch-norm statistics under [`EVAL_STATS_PREFIX`]; they
    /// override the training-state statistics in [`TrainedModel::from_checkpoint`].
    pub fn insert_statistics(&self, ck: &mut Checkpoint) -> Result<()> {
        for p in self.encoder.params().into_iter().chain(self.decoder.params()).filter(|p| !p.is_trainable()) {
            ck.insert(format!("{EVAL_STATS_PREFIX}.{}", p.name), p.value.clone())?;
        }
        Ok(())
    }

    /// Runs the student on a batch `[B, 1, N, N]` with running statistics.
    pub fn forward(&mut self, x: &Grid) -> Result<Grid> {
        let z = self.encoder.forward(x, Mode::Eval)?;
        let y = self.decoder.forward(&z, Mode::Eval)?;
        if self.config.residual_output {
            y.add(x)
        } else {
            Ok(y)
        }
    }

    /// Reconstructs one `[N, N]` image.
    pub fn reconstruct(&mut self, image: &Grid) -> Result<Grid> {
        let (h, w) = image.dims2()?;
        let out = self.forward(&image.clone().reshape(&[1, 1, h, w])?)?;
        out.ensure_finite("reconstruction")?;
        out.reshape(&[h, w])
    }

    pub fn evaluate(&mut self, data: &[SampleTriplet]) -> Result<Vec<EvalRow>> {
        if data.is_empty() {
            return invalid("dataset is empty");
        }
        data.iter()
            .map(|s| {
                let out = self.reconstruct(&s.student_input)?;
                Ok(EvalRow {
                    id: s.id,
                    fbp: metrics::report(&s.student_input, &s.full, 1.0)?,
                    model: metrics::report(&out, &s.full, 1.0)?,
                })
            })
            .collect()
    }
}

fn config_from_checkpoint(ck: &Checkpoint) -> Result<TrainConfig> {
    let bytes: Vec<u8> = ck.require("meta.config")?.data().iter().map(|&v| v as u8).collect();
    let text = String::from_utf8(bytes).map_err(|_| Error::Format("config entry is not UTF-8".into()))?;
    TrainConfig::parse(&text).map_err(|e| Error::Format(format!("stored config: {e}")))
}

fn text_entry(text: &str) -> Grid {
    Grid::new(&[text.len()], text.bytes().map(f64::from).collect()).expect("finite bytes")
}

struct TeacherSide {
    encoder: Encoder,
    ema: EmaTracker<Decoder>,
    adam: AdamState,
    bank: MemoryBank,
}

/// Training state; [`Trainer::step`] performs one iteration.
pub struct Trainer {
    cfg: TrainConfig,
    variant: Variant,
    encoder: Encoder,
    decoder: Decoder,
    adam: AdamState,
    teacher: Option<TeacherSide>,
    mask: BandMask,
    order: Order,
    iteration: usize,
    n_samples: usize,
}

impl Trainer {
    /// Initializes the student encoder, student decoder and (for the full
    /// method) teacher encoder from one generator, in that order; the teacher
    /// decoder starts as a copy of the student decoder.
    pub fn new(cfg: TrainConfig, variant: Variant, data: &[SampleTriplet]) -> Result<Self> {
        cfg.validate()?;
        let n = validate_dataset(data, &cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let encoder = Encoder::new(&cfg.model, &mut rng)?;
        let decoder = Decoder::new(&cfg.model, &mut rng)?;
        let teacher = match variant {
            Variant::FreeNet => None,
            Variant::GloReDi => {
                let t_enc = Encoder::new(&cfg.model, &mut rng)?;
                let mut t_dec = Decoder::new(&cfg.model, &mut ChaCha8Rng::seed_from_u64(0))?;
                copy_params(&mut t_dec, &decoder)?;
                Some(TeacherSide {
                    encoder: t_enc,
                    ema: EmaTracker::new(cfg.momentum, t_dec)?,
                    adam: AdamState::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
                    bank: MemoryBank::new(cfg.bank_capacity)?,
                })
            }
        };
        let side = n / 4;
        let mask = BandMask::new(side, side, cfg.mask_low, cfg.mask_up)?;
        Ok(Self {
            adam: AdamState::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            order: Order::new(cfg.seed, data.len()),
            cfg,
            variant,
            encoder,
            decoder,
            teacher,
            mask,
            iteration: 0,
            n_samples: data.len(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn mask(&self) -> &BandMask {
        &self.mask
    }

    pub fn student_mut(&mut self) -> (&mut Encoder, &mut Decoder) {
        (&mut self.encoder, &mut self.decoder)
    }

    pub fn teacher_encoder_mut(&mut self) -> Option<&mut Encoder> {
        self.teacher.as_mut().map(|t| &mut t.encoder)
    }

    pub fn bank(&self) -> Option<&MemoryBank> {
        self.teacher.as_ref().map(|t| &t.bank)
    }

    fn current_epoch(&self) -> usize {
        self.iteration * self.cfg.batch_size / self.n_samples
    }

    pub fn current_lr(&self) -> f64 {
        lr_at(self.current_epoch(), self.cfg.lr, self.cfg.lr_period)
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let b = self.cfg.batch_size;
        (0..b).map(|k| self.order.at(self.iteration * b + k)).collect()
    }

    fn embed_samples(&self, z: &Grid) -> Result<Vec<SpectralEmbedding>> {
        (0..z.shape()[0]).map(|b| bandpass_embed(&z.sample(b), &self.mask, self.cfg.normalize_embeddings)).collect()
    }

    /// Mean band-pass contrastive loss over the batch and its gradient on `z_s`.
    fn bcd_term(&self, zs: &Grid, zt_emb: &[SpectralEmbedding], bank: &MemoryBank) -> Result<(f64, Grid)> {
        let b = zs.shape()[0];
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(b);
        for (i, zt) in zt_emb.iter().enumerate() {
            let (emb, cache) = bandpass_embed_cached(&zs.sample(i), &self.mask, self.cfg.normalize_embeddings)?;
            let (l, g) = bcd_loss(&emb, zt, bank, self.cfg.tau, self.cfg.denominator)?;
            total += l;
            let g: Vec<f64> = g.into_iter().map(|v| v / b as f64).collect();
            grads.push(bandpass_embed_backward(&g, &cache, &self.mask)?);
        }
        Ok((total / b as f64, Grid::stack(&grads)?))
    }

    /// One iteration over the next batch of `data`.
    pub fn step(&mut self, data: &[SampleTriplet]) -> Result<IterLog> {
        if data.len() != self.n_samples {
            return invalid(format!("trainer was built for {} samples, got {}", self.n_samples, data.len()));
        }
        let idx = self.next_batch();
        let lr = self.current_lr();
        let target = batch_of(idx.iter().map(|&i| data[i].full.clone()))?;
        let student_in = batch_of(idx.iter().map(|&i| data[i].student_input.clone()))?;

        let mut teacher_out = None;
        if let Some(t) = self.teacher.as_mut() {
            t.ema.update(&self.decoder)?;
            let teacher_in = batch_of(idx.iter().map(|&i| data[i].teacher_input.clone()))?;
            let zt = t.encoder.forward(&teacher_in, Mode::Train)?;
            let mut yt = t.ema.teacher_mut().forward(&zt, Mode::TrainFrozenStats)?;
            if self.cfg.residual_output {
                yt = yt.add(&teacher_in)?;
            }
            let (pixel_t, g) = l1_pixel_loss(&yt, &target)?;
            ensure_finite("teacher pixel", pixel_t)?;
            t.encoder.zero_grad();
            t.ema.teacher_mut().zero_grad();
            let dz = t.ema.teacher_mut().backward(&g)?;
            t.encoder.backward(&dz)?;
            t.ema.teacher_mut().zero_grad();
            adam_step(t.encoder.params_mut(), &mut t.adam, lr)?;
            teacher_out = Some((zt, pixel_t));
        }

        let zs = self.encoder.forward(&student_in, Mode::Train)?;
        let mut ys = self.decoder.forward(&zs, Mode::Train)?;
        if self.cfg.residual_output {
            ys = ys.add(&student_in)?;
        }
        let (pixel_s, g) = l1_pixel_loss(&ys, &target)?;
        ensure_finite("student pixel", pixel_s)?;
        self.encoder.zero_grad();
        self.decoder.zero_grad();
        let mut dz = self.decoder.backward(&g)?;

        let mut log = IterLog { iter: self.iteration + 1, lr, pixel_s, pixel_t: None, rdd: None, bcd: None, cos_mean: None };
        if let Some((zt, pixel_t)) = teacher_out {
            let (rdd, g_rdd) = rdd_loss(&zs, &zt)?;
            ensure_finite("rdd", rdd)?;
            let zt_emb = self.embed_samples(&zt)?;
            let bank = &self.teacher.as_ref().expect("teacher present").bank;
            let (bcd, g_bcd) = self.bcd_term(&zs, &zt_emb, bank)?;
            ensure_finite("bcd", bcd)?;
            // zero weights contribute nothing, so the baseline trajectory is reproduced exactly
            if self.cfg.alpha != 0.0 {
                dz.add_scaled(&g_rdd, self.cfg.alpha)?;
            }
            if self.cfg.beta != 0.0 {
                dz.add_scaled(&g_bcd.reshape(dz.shape())?, self.cfg.beta)?;
            }
            log.pixel_t = Some(pixel_t);
            log.rdd = Some(rdd);
            log.bcd = Some(bcd);
            log.cos_mean = Some(1.0 - rdd);
            self.teacher.as_mut().expect("teacher present").bank.push_batch(&zt_emb)?;
        }
        self.encoder.backward(&dz)?;
        adam_step(self.encoder.params_mut().into_iter().chain(self.decoder.params_mut()), &mut self.adam, lr)?;
        self.iteration += 1;
        Ok(log)
    }

    /// Steps until `cfg.iterations` iterations are complete, reporting each row.
    pub fn run(&mut self, data: &[SampleTriplet], mut on_iter: impl FnMut(&IterLog)) -> Result<Vec<IterLog>> {
        let mut rows = Vec::new();
        while self.iteration < self.cfg.iterations {
            let row = self.step(data)?;
            on_iter(&row);
            rows.push(row);
        }
        Ok(rows)
    }

    /// Directional loss of the current student against the current teacher
    /// encoder on the given samples, both in evaluation mode.
    pub fn probe_rdd(&mut self, data: &[SampleTriplet]) -> Result<Option<f64>> {
        let Some(t) = self.teacher.as_mut() else {
            return Ok(None);
        };
        let xs = batch_of(data.iter().map(|s| s.student_input.clone()))?;
        let xt = batch_of(data.iter().map(|s| s.teacher_input.clone()))?;
        let zt = t.encoder.forward(&xt, Mode::Eval)?;
        let zs = self.encoder.forward(&xs, Mode::Eval)?;
        Ok(Some(rdd_loss(&zs, &zt)?.0))
    }

    /// Copy of the student with batch-norm statistics re-estimated on `data`
    /// for `bn_recalibration_passes` passes. The trainer itself is unchanged.
    pub fn export_model(&self, data: &[SampleTriplet]) -> Result<TrainedModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut encoder = Encoder::new(&self.cfg.model, &mut rng)?;
        let mut decoder = Decoder::new(&self.cfg.model, &mut rng)?;
        copy_params(&mut encoder, &self.encoder)?;
        copy_params(&mut decoder, &self.decoder)?;
        let mut model = TrainedModel { config: self.cfg.clone(), encoder, decoder };
        model.recalibrate(data, self.cfg.bn_recalibration_passes)?;
        Ok(model)
    }

    /// The student as trained, with the running statistics from optimization.
    pub fn into_model(self) -> TrainedModel {
        TrainedModel { config: self.cfg, encoder: self.encoder, decoder: self.decoder }
    }

    /// Full training state: both networks, optimizer moments, bank, config
    /// and iteration counter.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.insert("meta.config", text_entry(&self.cfg.to_text()))?;
        ck.insert_scalar("meta.iteration", self.iteration as f64)?;
        ck.insert_scalar("meta.variant", if self.variant == Variant::FreeNet { 1.0 } else { 0.0 })?;
        ck.insert_module("student", &self.encoder)?;
        ck.insert_module("student", &self.decoder)?;
        let student: Vec<&Param> = self.encoder.params().into_iter().chain(self.decoder.params()).collect();
        insert_adam(&mut ck, "adam_student", &self.adam, &student)?;
        if let Some(t) = &self.teacher {
            ck.insert_module("teacher", &t.encoder)?;
            ck.insert_module("teacher", t.ema.teacher())?;
            insert_adam(&mut ck, "adam_teacher", &t.adam, &t.encoder.params())?;
            if let Some(dim) = t.bank.dim() {
                let data = t.bank.iter().flat_map(|e| e.values.iter().copied()).collect();
                ck.insert("bank", Grid::new(&[t.bank.len(), dim], data)?)?;
            }
        }
        Ok(ck)
    }

    /// Restores a run saved by [`Trainer::checkpoint`]. `iterations`, when
    /// given, replaces the stored target so the run can be extended.
    pub fn resume(ck: &Checkpoint, data: &[SampleTriplet], iterations: Option<usize>) -> Result<Self> {
        let mut cfg = config_from_checkpoint(ck)?;
        if let Some(it) = iterations {
            cfg.iterations = it;
        }
        let variant = if ck.scalar("meta.variant")? == 1.0 { Variant::FreeNet } else { Variant::GloReDi };
        let mut tr = Trainer::new(cfg, variant, data)?;
        tr.iteration = ck.scalar("meta.iteration")? as usize;
        ck.load_module("student", &mut tr.encoder)?;
        ck.load_module("student", &mut tr.decoder)?;
        let student: Vec<&Param> = tr.encoder.params().into_iter().chain(tr.decoder.params()).collect();
        tr.adam = read_adam(ck, "adam_student", &tr.cfg, &student)?;
        if let Some(t) = tr.teacher.as_mut() {
            ck.load_module("teacher", &mut t.encoder)?;
            ck.load_module("teacher", t.ema.teacher_mut())?;
            t.adam = read_adam(ck, "adam_teacher", &tr.cfg, &t.encoder.params())?;
            if let Some(bank) = ck.get("bank") {
                let dim = bank.shape()[1];
                for row in bank.data().chunks(dim) {
                    t.bank.push(SpectralEmbedding { values: row.to_vec(), normalized: tr.cfg.normalize_embeddings })?;
                }
            }
        }
        Ok(tr)
    }
}

fn insert_adam(ck: &mut Checkpoint, prefix: &str, st: &AdamState, params: &[&Param]) -> Result<()> {
    ck.insert_scalar(format!("{prefix}.step"), st.step as f64)?;
    let trainable = params.iter().filter(|p| p.is_trainable());
    for ((p, m), v) in trainable.zip(&st.first).zip(&st.second) {
        ck.insert(format!("{prefix}.first.{}", p.name), m.clone())?;
        ck.insert(format!("{prefix}.second.{}", p.name), v.clone())?;
    }
    Ok(())
}

fn read_adam(ck: &Checkpoint, prefix: &str, cfg: &TrainConfig, params: &[&Param]) -> Result<AdamState> {
    let mut st = AdamState::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    st.step = ck.scalar(&format!("{prefix}.step"))? as u64;
    if st.step == 0 {
        return Ok(st);
    }
    for p in params.iter().filter(|p| p.is_trainable()) {
        for (kind, dst) in [("first", &mut st.first), ("second", &mut st.second)] {
            let g = ck.require(&format!("{prefix}.{kind}.{}", p.name))?;
            if g.shape() != p.value.shape() {
                return Err(Error::Format(format!("{prefix}.{kind}.{}: shape mismatch", p.name)));
            }
            dst.push(g.clone());
        }
    }
    Ok(st)
}

/// Trains the full method for `cfg.iterations` iterations.
pub fn train_glore_di(data: &[SampleTriplet], cfg: &TrainConfig) -> Result<(TrainedModel, Vec<IterLog>)> {
    let mut t = Trainer::new(cfg.clone(), Variant::GloReDi, data)?;
    let rows = t.run(data, |_| {})?;
    Ok((t.export_model(data)?, rows))
}

/// Trains the student alone on the pixel loss.
pub fn train_freenet(data: &[SampleTriplet], cfg: &TrainConfig) -> Result<(TrainedModel, Vec<IterLog>)> {
    let mut t = Trainer::new(cfg.clone(), Variant::FreeNet, data)?;
    let rows = t.run(data, |_| {})?;
    Ok((t.export_model(data)?, rows))
}
