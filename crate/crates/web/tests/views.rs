use gloredi::phantom::shepp_logan;
use gloredi::spectral::dct2;
use gloredi::Grid;
use gloredi_web::{idct2, try_band_pass, Scan};

#[test]
fn head_scan_shapes() {
    let scan = Scan::try_head(32, 0.0).unwrap();
    assert_eq!((scan.size(), scan.detectors(), scan.full_views()), (32, 48, 180));
    assert_eq!(scan.phantom().len(), 32 * 32);
    assert_eq!(scan.sinogram().len(), 180 * 48);
}

#[test]
fn more_views_score_higher() {
    let scan = Scan::try_head(64, 0.0).unwrap();
    let sparse = scan.try_reconstruct(12, "ram-lak").unwrap();
    let full = scan.try_reconstruct(180, "ram-lak").unwrap();
    assert_eq!(sparse.image().len(), 64 * 64);
    assert!(full.psnr() > sparse.psnr() + 5.0);
    assert!(full.ssim() > sparse.ssim());
    assert!(scan.try_reconstruct(7, "ram-lak").is_err());
    assert!(scan.try_reconstruct(12, "cosine").is_err());
}

#[test]
fn random_scans_are_seeded() {
    let a = Scan::try_random(32, 5, 1e5).unwrap();
    let b = Scan::try_random(32, 5, 1e5).unwrap();
    let c = Scan::try_random(32, 6, 1e5).unwrap();
    assert_eq!(a.sinogram(), b.sinogram());
    assert_ne!(a.phantom(), c.phantom());
}

#[test]
fn idct_inverts_dct() {
    let g = Grid::from_fn2(9, 9, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
    let back = idct2(&dct2(&g).unwrap()).unwrap();
    assert!(back.max_abs_diff(&g).unwrap() < 1e-10);
}

#[test]
fn full_band_reproduces_image() {
    let img: Vec<f32> = shepp_logan(16).unwrap().data().iter().map(|&v| v as f32).collect();
    let view = try_band_pass(&img, 16, 0.0, 1.0).unwrap();
    assert_eq!(view.kept(), 256);
    for (a, b) in view.filtered().iter().zip(&img) {
        assert!((a - b).abs() < 1e-5);
    }
    let mid = try_band_pass(&img, 16, 0.2, 0.5).unwrap();
    assert_eq!(mid.kept(), 25);
    assert_eq!(mid.mask().iter().filter(|&&m| m == 1.0).count(), 25);
    // A band without the DC term removes the mean.
    let mean: f32 = mid.filtered().iter().sum::<f32>() / 256.0;
    assert!(mean.abs() < 1e-5);
    assert!(try_band_pass(&img, 16, 0.5, 0.2).is_err());
}
