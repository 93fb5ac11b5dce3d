use gloredi::io::{read_dataset, read_manifest, write_dataset};
use gloredi::metrics::psnr;
use gloredi::phantom::{build_dataset, random_ellipses, random_phantom, sample_rng, shepp_logan, DatasetConfig};
use gloredi::Grid;

fn downsample2(g: &Grid) -> Grid {
    let (h, w) = g.dims2().unwrap();
    Grid::from_fn2(h / 2, w / 2, |r, c| {
        (g.at2(2 * r, 2 * c) + g.at2(2 * r + 1, 2 * c) + g.at2(2 * r, 2 * c + 1) + g.at2(2 * r + 1, 2 * c + 1)) / 4.0
    })
}

#[test]
fn shepp_logan_is_normalized_and_deterministic() {
    let a = shepp_logan(64).unwrap();
    assert_eq!(a.min(), 0.0);
    assert_eq!(a.max(), 1.0);
    assert_eq!(a, shepp_logan(64).unwrap());
    // The skull ring is the brightest structure: it appears on the centre column near the top.
    let top = (0..16).map(|r| a.at2(r, 32)).fold(0.0, f64::max);
    assert!(top > 0.5, "skull boundary missing, top column max {top}");
}

#[test]
fn shepp_logan_is_resolution_consistent() {
    let coarse = shepp_logan(64).unwrap();
    let fine = downsample2(&shepp_logan(128).unwrap());
    let diff = coarse.max_abs_diff(&fine).unwrap();
    assert!(diff < 0.1, "max abs diff {diff}");
}

#[test]
fn random_phantoms_are_reproducible_and_clipped() {
    let a = random_phantom(64, &mut sample_rng(5, 3)).unwrap();
    assert_eq!(a, random_phantom(64, &mut sample_rng(5, 3)).unwrap());
    assert_ne!(a, random_phantom(64, &mut sample_rng(5, 4)).unwrap());
    for id in 0..20 {
        let p = random_phantom(32, &mut sample_rng(1, id)).unwrap();
        assert!(p.min() >= 0.0 && p.max() <= 1.0);
    }
}

#[test]
fn random_ellipse_count_in_range() {
    for id in 0..200 {
        let n = random_ellipses(&mut sample_rng(0, id)).len();
        assert!((4..=12).contains(&n), "sample {id}: {n} ellipses");
    }
}

#[test]
fn random_phantom_mean_intensity() {
    let mean = (0..100)
        .map(|id| random_phantom(32, &mut sample_rng(11, id)).unwrap().mean())
        .sum::<f64>()
        / 100.0;
    assert!(mean > 0.05 && mean < 0.6, "mean intensity {mean}");
}

#[test]
fn unit_multiplier_shares_inputs() {
    let cfg = DatasetConfig { count: 3, teacher_multiplier: 1, ..DatasetConfig::default() };
    for s in build_dataset(&cfg).unwrap() {
        assert_eq!(s.teacher_input, s.student_input);
    }
}

#[test]
fn teacher_inputs_beat_student_inputs() {
    let cfg = DatasetConfig { count: 100, seed: 21, ..DatasetConfig::default() };
    let data = build_dataset(&cfg).unwrap();
    let wins = data
        .iter()
        .filter(|s| psnr(&s.teacher_input, &s.full, 1.0).unwrap() > psnr(&s.student_input, &s.full, 1.0).unwrap())
        .count();
    assert!(wins >= 95, "teacher better on {wins}/100");
}

#[test]
fn empty_and_invalid_datasets() {
    assert!(build_dataset(&DatasetConfig { count: 0, ..DatasetConfig::default() }).unwrap().is_empty());
    assert!(build_dataset(&DatasetConfig { n_sparse: 7, ..DatasetConfig::default() }).is_err());
    assert!(build_dataset(&DatasetConfig { n_sparse: 18, teacher_multiplier: 4, ..DatasetConfig::default() }).is_err());
}

#[test]
fn dataset_is_a_pure_function_of_config() {
    let cfg = DatasetConfig { count: 4, seed: 8, ..DatasetConfig::default() };
    let a = build_dataset(&cfg).unwrap();
    assert_eq!(a, build_dataset(&cfg).unwrap());
    // Samples do not depend on how many siblings were generated.
    let shorter = build_dataset(&DatasetConfig { count: 2, ..cfg.clone() }).unwrap();
    assert_eq!(&a[..2], &shorter[..]);
    for s in &a {
        assert_eq!(s.full.shape(), &[64, 64]);
        assert_eq!(s.teacher_input.shape(), &[64, 64]);
        assert_eq!(s.student_input.shape(), &[64, 64]);
    }
}

#[test]
fn dataset_directory_round_trip() {
    let cfg = DatasetConfig { count: 3, seed: 2, ..DatasetConfig::default() };
    let data = build_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &cfg, &data).unwrap();
    let manifest = read_manifest(dir.path()).unwrap();
    assert_eq!(manifest.len(), 3);
    assert!(manifest.iter().enumerate().all(|(i, e)| e.id == i && e.seed == 2 && e.n_sparse == 18 && e.multiplier == 2));
    let back = read_dataset(dir.path()).unwrap();
    for (a, b) in data.iter().zip(&back) {
        // Images are stored as f32.
        assert!(a.full.max_abs_diff(&b.full).unwrap() < 1e-6);
        assert!(a.student_input.max_abs_diff(&b.student_input).unwrap() < 1e-6);
        assert!(a.teacher_input.max_abs_diff(&b.teacher_input).unwrap() < 1e-6);
    }
}
