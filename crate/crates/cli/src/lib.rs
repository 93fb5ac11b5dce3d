//! Subcommands of the `gloredi` binary.
//!
//! Exit codes: 0 on success, 2 for usage or validation errors (including
//! unreadable or malformed files), 3 when a numerical failure aborts a run.
//! Every command writes a flat JSON manifest of its resolved settings next to
//! its output; manifests carry no timestamps so reruns are byte-identical.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gloredi::io::{self, pgm_bytes, read_dataset, read_image, read_sinogram, write_dataset, write_image, write_sinogram};
use gloredi::nn::checkpoint::Checkpoint;
use gloredi::phantom::{build_sample_with_sinogram, DatasetConfig};
use gloredi::tomo::{self, FilterKind, ScanGeometry};
use gloredi::train::{eval_csv, eval_means, log_csv, TrainConfig, TrainedModel, Trainer, Variant, LOG_HEADER};
use serde_json::{json, Map, Value};

pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.gdc";
pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<gloredi::Error> for CliError {
    fn from(e: gloredi::Error) -> Self {
        let code = if matches!(e, gloredi::Error::NonFinite(_)) { 3 } else { 2 };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn with_path<T>(path: &Path, r: gloredi::Result<T>) -> Result<T> {
    r.map_err(|e| {
        let mut c = CliError::from(e);
        c.message = format!("{}: {}", path.display(), c.message);
        c
    })
}

#[derive(Debug, Parser)]
#[command(name = "gloredi", version, about = "Sparse-view CT reconstruction with global representation distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate phantoms and write (full, teacher, student) image triplets.
    GenData(GenDataArgs),
    /// Train the student (distillation by default, pixel loss only with --baseline).
    Train(TrainArgs),
    /// Score a checkpoint against the FBP inputs of a dataset.
    Eval(EvalArgs),
    /// Run a trained student on one image.
    Reconstruct(ReconstructArgs),
    /// Classical filtered back projection of a sinogram file.
    Fbp(FbpArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Sparse view count of the student input.
    #[arg(long, default_value_t = 18)]
    pub views: usize,
    /// Teacher views = views x teacher-mult.
    #[arg(long, default_value_t = 2)]
    pub teacher_mult: usize,
    /// Incident photon count of the noise model.
    #[arg(long, default_value_t = 1e6)]
    pub i0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Views of the full scan; defaults to 180.
    #[arg(long, default_value_t = 180)]
    pub full_views: usize,
    /// Detector count; defaults to 1.5 x size.
    #[arg(long)]
    pub detectors: Option<usize>,
    #[arg(long, default_value = "ram-lak")]
    pub filter: String,
    /// Also write each sample's noisy full-view sinogram as `<id>_sino.gds`.
    #[arg(long)]
    pub save_sino: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Flat `key = value` config; omitted keys keep their defaults.
    #[arg(long, conflicts_with = "resume")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pixel loss only, no teacher.
    #[arg(long, conflicts_with = "resume")]
    pub baseline: bool,
    /// Continue from a checkpoint written by an earlier `train`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Overrides the configured (or stored) iteration target.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, conflicts_with = "resume")]
    pub seed: Option<u64>,
    /// Progress line interval on stderr; 0 disables.
    #[arg(long, default_value_t = 20)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// PGM output; the raw reconstruction goes next to it with a `.gdi` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FbpArgs {
    #[arg(long)]
    pub sino: PathBuf,
    /// Number of uniformly spaced views to keep; must divide the file's view count.
    #[arg(long)]
    pub views: usize,
    #[arg(long, default_value = "ram-lak")]
    pub filter: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Image side; defaults to 2/3 of the detector count.
    #[arg(long)]
    pub size: Option<usize>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Reconstruct(a) => reconstruct(&a),
        Command::Fbp(a) => fbp(&a),
    }
}

fn parse_filter(name: &str) -> Result<FilterKind> {
    Ok(name.parse::<FilterKind>()?)
}

fn filter_name(kind: FilterKind) -> &'static str {
    match kind {
        FilterKind::RamLak => "ram-lak",
        FilterKind::Hann => "hann",
    }
}

fn write_manifest(path: &Path, fields: Map<String, Value>) -> Result<()> {
    let text = serde_json::to_string_pretty(&Value::Object(fields)).map_err(|e| CliError::usage(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// `report.csv` -> `report.run.json`.
fn sibling_manifest(out: &Path) -> PathBuf {
    out.with_extension(MANIFEST_FILE)
}

fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let filter = parse_filter(&a.filter)?;
    let geometry = ScanGeometry {
        image_size: a.size,
        n_detectors: a.detectors.unwrap_or(a.size * 3 / 2),
        n_full_views: a.full_views,
        ..ScanGeometry::default()
    };
    let cfg = DatasetConfig {
        count: a.count,
        geometry,
        n_sparse: a.views,
        teacher_multiplier: a.teacher_mult,
        photons: a.i0,
        seed: a.seed,
        filter,
    };
    cfg.validate()?;
    fs::create_dir_all(&a.out)?;
    let mut samples = Vec::with_capacity(a.count);
    for id in 0..a.count {
        let (sample, sino) = build_sample_with_sinogram(&cfg, id)?;
        if a.save_sino {
            write_sinogram(a.out.join(format!("{id}_sino.gds")), &sino)?;
        }
        samples.push(sample);
    }
    write_dataset(&a.out, &cfg, &samples)?;
    let g = &cfg.geometry;
    write_manifest(
        &a.out.join(MANIFEST_FILE),
        Map::from_iter([
            ("command".into(), json!("gen-data")),
            ("count".into(), json!(cfg.count)),
            ("size".into(), json!(g.image_size)),
            ("detectors".into(), json!(g.n_detectors)),
            ("full_views".into(), json!(g.n_full_views)),
            ("views".into(), json!(cfg.n_sparse)),
            ("teacher_views".into(), json!(cfg.teacher_views())),
            ("teacher_mult".into(), json!(cfg.teacher_multiplier)),
            ("i0".into(), json!(cfg.photons)),
            ("seed".into(), json!(cfg.seed)),
            ("filter".into(), json!(filter_name(filter))),
            ("save_sino".into(), json!(a.save_sino)),
        ]),
    )?;
    println!("wrote {} samples to {}", a.count, a.out.display());
    Ok(())
}

/// Keeps the header and the rows up to `iteration` of an earlier log.
fn log_prefix(path: &Path, iteration: usize) -> Result<String> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(format!("{LOG_HEADER}\n")),
        Err(e) => return Err(e.into()),
    };
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(CliError::usage(format!("{}: not a training log", path.display())));
    }
    let mut out = format!("{LOG_HEADER}\n");
    for line in lines {
        let iter: usize = line
            .split(',')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::usage(format!("{}: malformed row {line:?}", path.display())))?;
        if iter <= iteration {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn train(a: &TrainArgs) -> Result<()> {
    let data = with_path(&a.data, read_dataset(&a.data))?;
    if data.is_empty() {
        return Err(CliError::usage(format!("{}: dataset is empty", a.data.display())));
    }
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = with_path(path, Checkpoint::load(path))?;
            with_path(path, Trainer::resume(&ck, &data, a.iterations))?
        }
        None => {
            let mut cfg = match &a.config {
                Some(path) => with_path(path, fs::read_to_string(path).map_err(Into::into).and_then(|t| TrainConfig::parse(&t)))?,
                None => TrainConfig::default(),
            };
            if let Some(it) = a.iterations {
                cfg.iterations = it;
            }
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let variant = if a.baseline { Variant::FreeNet } else { Variant::GloReDi };
            Trainer::new(cfg, variant, &data)?
        }
    };
    let start = trainer.iteration();
    fs::create_dir_all(&a.out)?;
    let clock = Instant::now();
    let progress = a.progress;
    let rows = trainer.run(&data, |r| {
        if progress > 0 && r.iter % progress == 0 {
            eprintln!("iter {:>5}  pixelS {:.5}  lr {:.2e}  {:.1?}", r.iter, r.pixel_s, r.lr, clock.elapsed());
        }
    })?;
    let mut log = if a.resume.is_some() { log_prefix(&a.out.join(LOG_FILE), start)? } else { format!("{LOG_HEADER}\n") };
    log.push_str(log_csv(&rows).strip_prefix(&format!("{LOG_HEADER}\n")).unwrap_or_default());
    fs::write(a.out.join(LOG_FILE), log)?;
    let mut ck = trainer.checkpoint()?;
    trainer.export_model(&data)?.insert_statistics(&mut ck)?;
    ck.save(a.out.join(CHECKPOINT_FILE))?;

    let cfg = trainer.config();
    let config: Map<String, Value> = cfg.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect();
    let variant = match trainer.variant() {
        Variant::GloReDi => "gloredi",
        Variant::FreeNet => "freenet",
    };
    write_manifest(
        &a.out.join(MANIFEST_FILE),
        Map::from_iter([
            ("command".into(), json!("train")),
            ("variant".into(), json!(variant)),
            ("data".into(), path_value(&a.data)),
            ("samples".into(), json!(data.len())),
            ("seed".into(), json!(cfg.seed)),
            ("start_iteration".into(), json!(start)),
            ("final_iteration".into(), json!(trainer.iteration())),
            ("resumed_from".into(), a.resume.as_deref().map(path_value).unwrap_or(Value::Null)),
            ("config".into(), Value::Object(config)),
        ]),
    )?;
    println!(
        "{variant}: iterations {}..{} in {:.1?}, checkpoint {}",
        start + 1,
        trainer.iteration(),
        clock.elapsed(),
        a.out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    let ck = with_path(path, Checkpoint::load(path))?;
    with_path(path, TrainedModel::from_checkpoint(&ck))
}

fn eval(a: &EvalArgs) -> Result<()> {
    let data = with_path(&a.data, read_dataset(&a.data))?;
    if data.is_empty() {
        return Err(CliError::usage(format!("{}: dataset is empty", a.data.display())));
    }
    let mut model = load_model(&a.ckpt)?;
    let rows = model.evaluate(&data)?;
    let m = eval_means(&rows);
    let mut csv = eval_csv(&rows);
    csv.push_str(&format!("mean,{},{},{},{},{},{}\n", m[0], m[1], m[2], m[3], m[4], m[5]));
    fs::write(&a.out, csv)?;
    write_manifest(
        &sibling_manifest(&a.out),
        Map::from_iter([
            ("command".into(), json!("eval")),
            ("data".into(), path_value(&a.data)),
            ("ckpt".into(), path_value(&a.ckpt)),
            ("samples".into(), json!(rows.len())),
            ("mean_psnr_fbp".into(), json!(m[0])),
            ("mean_psnr_model".into(), json!(m[1])),
            ("mean_ssim_fbp".into(), json!(m[2])),
            ("mean_ssim_model".into(), json!(m[3])),
            ("mean_rmse_fbp".into(), json!(m[4])),
            ("mean_rmse_model".into(), json!(m[5])),
        ]),
    )?;
    println!("psnr fbp {:.3} model {:.3} | ssim fbp {:.4} model {:.4} | rmse fbp {:.5} model {:.5}", m[0], m[1], m[2], m[3], m[4], m[5]);
    Ok(())
}

fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let raw = a.out.with_extension("gdi");
    if raw == a.out {
        return Err(CliError::usage("--out names the PGM image; the .gdi copy is written beside it"));
    }
    let mut model = load_model(&a.ckpt)?;
    let image = with_path(&a.input, read_image(&a.input))?;
    let out = model.reconstruct(&image)?;
    fs::write(&a.out, pgm_bytes(&out)?)?;
    write_image(&raw, &out)?;
    write_manifest(
        &sibling_manifest(&a.out),
        Map::from_iter([
            ("command".into(), json!("reconstruct")),
            ("ckpt".into(), path_value(&a.ckpt)),
            ("in".into(), path_value(&a.input)),
            ("out".into(), path_value(&a.out)),
            ("raw".into(), path_value(&raw)),
        ]),
    )?;
    println!("wrote {} and {}", a.out.display(), raw.display());
    Ok(())
}

fn fbp(a: &FbpArgs) -> Result<()> {
    let filter = parse_filter(&a.filter)?;
    let sino = with_path(&a.sino, read_sinogram(&a.sino))?;
    let n_detectors = sino.n_detectors();
    let geom = ScanGeometry {
        image_size: a.size.unwrap_or(n_detectors * 2 / 3),
        n_detectors,
        n_full_views: sino.n_views(),
        ..ScanGeometry::default()
    };
    let sparse = tomo::subsample_views(&sino, a.views)?;
    let image = tomo::fbp(&sparse, &geom, filter)?;
    image.ensure_finite("reconstruction")?;
    io::write_image(&a.out, &image)?;
    write_manifest(
        &sibling_manifest(&a.out),
        Map::from_iter([
            ("command".into(), json!("fbp")),
            ("sino".into(), path_value(&a.sino)),
            ("views".into(), json!(a.views)),
            ("filter".into(), json!(filter_name(filter))),
            ("size".into(), json!(geom.image_size)),
            ("detectors".into(), json!(n_detectors)),
        ]),
    )?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::from(gloredi::Error::NonFinite("loss".into())).exit_code(), 3);
        assert_eq!(CliError::from(gloredi::Error::InvalidArgument("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(std::io::Error::other("disk")).exit_code(), 2);
    }

    #[test]
    fn log_prefix_keeps_rows_up_to_the_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        assert_eq!(log_prefix(&path, 3).unwrap(), format!("{LOG_HEADER}\n"));
        let rows: String = (1..=5).map(|i| format!("{i},0.001,0.5,,,,\n")).collect();
        fs::write(&path, format!("{LOG_HEADER}\n{rows}")).unwrap();
        let kept = log_prefix(&path, 3).unwrap();
        assert_eq!(kept.lines().count(), 4);
        assert!(kept.ends_with("3,0.001,0.5,,,,\n"));
        fs::write(&path, "not,a,log\n1,2\n").unwrap();
        assert_eq!(log_prefix(&path, 3).unwrap_err().exit_code(), 2);
        fs::write(&path, format!("{LOG_HEADER}\nx,1\n")).unwrap();
        assert!(log_prefix(&path, 3).is_err());
    }
}
