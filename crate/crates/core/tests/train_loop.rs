use gloredi::nn::checkpoint::Checkpoint;
use gloredi::nn::Module;
use gloredi::phantom::{build_dataset, DatasetConfig, SampleTriplet};
use gloredi::train::{eval_means, log_csv, train_freenet, TrainConfig, TrainedModel, Trainer, Variant, EVAL_STATS_PREFIX};
use gloredi::tomo::ScanGeometry;
use gloredi::Grid;

fn tiny_data(count: usize) -> Vec<SampleTriplet> {
    build_dataset(&DatasetConfig { count, geometry: ScanGeometry::with_size(32), n_sparse: 18, seed: 5, ..Default::default() }).unwrap()
}

fn tiny_config(iterations: usize) -> TrainConfig {
    let mut cfg = TrainConfig { iterations, batch_size: 2, bank_capacity: 6, ..Default::default() };
    cfg.model.encoder_blocks = 1;
    cfg.model.decoder_blocks = 1;
    cfg
}

fn buffers(m: &TrainedModel) -> Vec<Grid> {
    m.encoder.params().into_iter().chain(m.decoder.params()).filter(|p| !p.is_trainable()).map(|p| p.value.clone()).collect()
}

fn weights(m: &TrainedModel) -> Vec<Grid> {
    m.encoder.params().into_iter().chain(m.decoder.params()).filter(|p| p.is_trainable()).map(|p| p.value.clone()).collect()
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let data = tiny_data(4);
    let run = || {
        let mut t = Trainer::new(tiny_config(3), Variant::GloReDi, &data).unwrap();
        let rows = t.run(&data, |_| {}).unwrap();
        (log_csv(&rows), t.checkpoint().unwrap().to_bytes())
    };
    assert_eq!(run(), run());
}

#[test]
fn log_rows_and_bank_growth() {
    let data = tiny_data(4);
    let mut t = Trainer::new(tiny_config(5), Variant::GloReDi, &data).unwrap();
    let mut lens = Vec::new();
    for _ in 0..5 {
        let row = t.step(&data).unwrap();
        assert!(row.pixel_s.is_finite() && row.pixel_t.unwrap().is_finite());
        let rdd = row.rdd.unwrap();
        assert!((0.0..=2.0).contains(&rdd));
        assert!((row.cos_mean.unwrap() - (1.0 - rdd)).abs() < 1e-12);
        lens.push(t.bank().unwrap().len());
    }
    // Two teacher embeddings per iteration until the capacity of six is reached.
    assert_eq!(lens, [2, 4, 6, 6, 6]);
    assert_eq!(t.iteration(), 5);
}

#[test]
fn baseline_has_no_teacher() {
    let data = tiny_data(4);
    let (_, rows) = train_freenet(&data, &tiny_config(2)).unwrap();
    assert!(rows.iter().all(|r| r.pixel_t.is_none() && r.rdd.is_none() && r.bcd.is_none()));
    let mut t = Trainer::new(tiny_config(2), Variant::FreeNet, &data).unwrap();
    assert!(t.bank().is_none() && t.teacher_encoder_mut().is_none());
}

#[test]
fn zero_distillation_weights_reproduce_the_baseline() {
    let data = tiny_data(4);
    let cfg = TrainConfig { alpha: 0.0, beta: 0.0, ..tiny_config(3) };
    let mut full = Trainer::new(cfg.clone(), Variant::GloReDi, &data).unwrap();
    let mut base = Trainer::new(cfg, Variant::FreeNet, &data).unwrap();
    // The teacher encoder draws from the shared generator after the student,
    // so both students start from the same weights.
    let a = full.run(&data, |_| {}).unwrap();
    let b = base.run(&data, |_| {}).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.pixel_s, y.pixel_s);
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = tiny_data(4);
    let mut straight = Trainer::new(tiny_config(4), Variant::GloReDi, &data).unwrap();
    let all = straight.run(&data, |_| {}).unwrap();
    let mut first = Trainer::new(tiny_config(2), Variant::GloReDi, &data).unwrap();
    first.run(&data, |_| {}).unwrap();
    let ck = Checkpoint::from_bytes(&first.checkpoint().unwrap().to_bytes()).unwrap();
    let mut resumed = Trainer::resume(&ck, &data, Some(4)).unwrap();
    assert_eq!(resumed.iteration(), 2);
    assert_eq!(resumed.bank().unwrap().len(), 4);
    let rest = resumed.run(&data, |_| {}).unwrap();
    assert_eq!(rest.len(), 2);
    // Checkpoints hold f32 values, so the continuation agrees to rounding.
    for (a, b) in all[2..].iter().zip(&rest) {
        assert_eq!(a.iter, b.iter);
        assert!((a.pixel_s - b.pixel_s).abs() < 1e-4 * a.pixel_s, "{} vs {}", a.pixel_s, b.pixel_s);
    }
}

#[test]
fn recalibration_changes_statistics_only() {
    let data = tiny_data(4);
    let mut t = Trainer::new(tiny_config(3), Variant::GloReDi, &data).unwrap();
    t.run(&data, |_| {}).unwrap();
    let plain = t.export_model(&[]).unwrap();
    let recal = t.export_model(&data).unwrap();
    assert_eq!(weights(&plain), weights(&recal));
    assert_ne!(buffers(&plain), buffers(&recal));
    let trained = t.into_model();
    assert_eq!(buffers(&plain), buffers(&trained));
    assert_eq!(weights(&plain), weights(&trained));
}

#[test]
fn recalibration_reaches_a_fixed_point() {
    let data = tiny_data(4);
    let mut t = Trainer::new(tiny_config(2), Variant::FreeNet, &data).unwrap();
    t.run(&data, |_| {}).unwrap();
    let mut m = t.export_model(&[]).unwrap();
    m.recalibrate(&data, 200).unwrap();
    let settled = buffers(&m);
    m.recalibrate(&data, 1).unwrap();
    for (a, b) in settled.iter().zip(buffers(&m)) {
        assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    }
}

#[test]
fn recalibrated_statistics_survive_checkpoints() {
    let data = tiny_data(4);
    let mut t = Trainer::new(tiny_config(3), Variant::GloReDi, &data).unwrap();
    t.run(&data, |_| {}).unwrap();
    let mut recal = t.export_model(&data).unwrap();
    let mut ck = t.checkpoint().unwrap();
    let plain_ck = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    recal.insert_statistics(&mut ck).unwrap();
    assert!(ck.names().any(|n| n.starts_with(&format!("{EVAL_STATS_PREFIX}."))));
    let ck = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();

    let mut loaded = TrainedModel::from_checkpoint(&ck).unwrap();
    for (a, b) in buffers(&recal).iter().zip(buffers(&loaded)) {
        assert!(a.max_abs_diff(&b).unwrap() < 1e-5 * (1.0 + a.max_abs()));
    }
    let x = &data[0].student_input;
    let (ya, yb) = (recal.reconstruct(x).unwrap(), loaded.reconstruct(x).unwrap());
    assert!(ya.max_abs_diff(&yb).unwrap() < 1e-4);

    // Without the extra entries the training-time statistics are used.
    let mut plain = TrainedModel::from_checkpoint(&plain_ck).unwrap();
    assert_ne!(buffers(&plain), buffers(&loaded));
    assert!(eval_means(&plain.evaluate(&data).unwrap())[1].is_finite());

    // Resuming ignores the inference statistics.
    let resumed = Trainer::resume(&ck, &data, Some(4)).unwrap();
    let model = resumed.export_model(&[]).unwrap();
    for (a, b) in buffers(&model).iter().zip(buffers(&plain)) {
        assert_eq!(a, &b);
    }
}

#[test]
fn mismatched_statistics_are_rejected() {
    let data = tiny_data(4);
    let t = Trainer::new(tiny_config(1), Variant::FreeNet, &data).unwrap();
    let mut ck = t.checkpoint().unwrap();
    let name = t.export_model(&[]).unwrap().encoder.params().into_iter().find(|p| !p.is_trainable()).unwrap().name.clone();
    ck.insert(format!("{EVAL_STATS_PREFIX}.{name}"), Grid::zeros(&[3])).unwrap();
    assert!(TrainedModel::from_checkpoint(&ck).is_err());
}

#[test]
fn config_validation() {
    let data = tiny_data(4);
    for bad in [
        TrainConfig { batch_size: 0, ..tiny_config(1) },
        TrainConfig { lr: 0.0, ..tiny_config(1) },
        TrainConfig { mask_low: 0.6, mask_up: 0.5, ..tiny_config(1) },
        TrainConfig { momentum: 1.5, ..tiny_config(1) },
        TrainConfig { alpha: f64::NAN, ..tiny_config(1) },
    ] {
        assert!(Trainer::new(bad, Variant::GloReDi, &data).is_err());
    }
    let mut t = Trainer::new(tiny_config(1), Variant::GloReDi, &data).unwrap();
    assert!(t.step(&data[..3]).is_err());
    let text = TrainConfig { bn_recalibration_passes: 7, ..tiny_config(9) }.to_text();
    assert_eq!(TrainConfig::parse(&text).unwrap().bn_recalibration_passes, 7);
}
