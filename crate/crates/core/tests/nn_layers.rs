//! Finite-difference gradient checks and structural contracts for the layers.

use gloredi::nn::{
    BatchNorm2d, Conv2d, ConvTranspose2d, Decoder, Encoder, EncoderDecoderConfig, FeaturePair, FfcBlock, FourierUnit,
    Mode, Module, ReflectionPad2d, Relu,
};
use gloredi::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-3;
const PROBES: usize = 24;

fn random_grid(shape: &[usize], rng: &mut ChaCha8Rng) -> Grid {
    let n = shape.iter().product();
    Grid::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Relative error; differences below `1e-7` count as exact agreement so
/// mathematically zero gradients compare against roundoff cleanly.
fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d < 1e-7 {
        return 0.0;
    }
    d / a.abs().max(b.abs())
}

/// `L = <r, f(x)>`; compares analytic input and parameter gradients against
/// central differences on a sample of coordinates. Returns the worst error.
fn grad_check(layer: &mut dyn Module, x: &Grid, mode: Mode, seed: u64) -> f64 {
    grad_check_step(layer, x, mode, seed, H)
}

fn grad_check_step(layer: &mut dyn Module, x: &Grid, mode: Mode, seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = layer.forward(x, mode).unwrap();
    let r = random_grid(y.shape(), &mut rng);
    layer.zero_grad();
    let dx = layer.backward(&r).unwrap();
    assert_eq!(dx.shape(), x.shape());
    let analytic_params: Vec<Grid> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let objective = |layer: &mut dyn Module, x: &Grid| layer.forward(x, mode).unwrap().dot(&r).unwrap();
    let mut worst: f64 = 0.0;

    for _ in 0..PROBES {
        let i = rng.gen_range(0..x.len());
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let fp = objective(layer, &xp);
        xp.data_mut()[i] -= 2.0 * h;
        let fm = objective(layer, &xp);
        worst = worst.max(rel_err(dx.data()[i], (fp - fm) / (2.0 * h)));
    }

    let trainable: Vec<usize> =
        layer.params().iter().enumerate().filter(|(_, p)| p.is_trainable()).map(|(k, _)| k).collect();
    for k in trainable {
        let len = layer.params()[k].value.len();
        for _ in 0..PROBES.min(len) {
            let i = rng.gen_range(0..len);
            let orig = layer.params()[k].value.data()[i];
            layer.params_mut()[k].value.data_mut()[i] = orig + h;
            let fp = objective(layer, x);
            layer.params_mut()[k].value.data_mut()[i] = orig - h;
            let fm = objective(layer, x);
            layer.params_mut()[k].value.data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let e = rel_err(analytic_params[k].data()[i], numeric);
            assert!(e < TOL, "{}[{i}]: analytic {} numeric {numeric}", layer.params()[k].name, analytic_params[k].data()[i]);
            worst = worst.max(e);
        }
    }
    worst
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randomize_biases(layer: &mut dyn Module, rng: &mut ChaCha8Rng) {
    for p in layer.params_mut() {
        if p.name.ends_with(".bias") || p.name.ends_with(".beta") {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
}

#[test]
fn conv2d_gradients() {
    let mut r = rng(1);
    for &(cin, cout, k, s, p, hw) in &[(3, 4, 3, 1, 1, 8), (2, 3, 3, 2, 1, 7), (4, 2, 1, 1, 0, 5), (1, 2, 7, 1, 0, 8)] {
        let mut conv = Conv2d::new("c", cin, cout, k, s, p, &mut r);
        randomize_biases(&mut conv, &mut r);
        let x = random_grid(&[2, cin, hw, hw], &mut r);
        let e = grad_check(&mut conv, &x, Mode::Train, 10);
        assert!(e < TOL, "conv k{k} s{s}: {e}");
    }
}

#[test]
fn conv_transpose_gradients() {
    let mut r = rng(2);
    for &(cin, cout, k, s, p, op, hw) in &[(3, 2, 3, 2, 1, 1, 4), (2, 3, 3, 1, 1, 0, 5), (2, 2, 4, 2, 1, 0, 3)] {
        let mut up = ConvTranspose2d::new("u", cin, cout, k, s, p, op, &mut r);
        randomize_biases(&mut up, &mut r);
        let x = random_grid(&[2, cin, hw, hw], &mut r);
        let e = grad_check(&mut up, &x, Mode::Train, 11);
        assert!(e < TOL, "conv transpose k{k} s{s}: {e}");
    }
}

#[test]
fn batch_norm_gradients_all_modes() {
    let mut r = rng(3);
    for mode in [Mode::Train, Mode::TrainFrozenStats, Mode::Eval] {
        let mut bn = BatchNorm2d::new("bn", 3);
        for p in bn.params_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(0.5..1.5));
        }
        let x = random_grid(&[2, 3, 4, 5], &mut r);
        let e = grad_check(&mut bn, &x, mode, 12);
        assert!(e < TOL, "{mode:?}: {e}");
    }
}

#[test]
fn relu_and_pad_gradients() {
    let mut r = rng(4);
    let x = random_grid(&[2, 3, 6, 5], &mut r);
    assert!(grad_check(&mut Relu::new(), &x, Mode::Train, 13) < TOL);
    assert!(grad_check(&mut ReflectionPad2d::new(3), &x, Mode::Train, 14) < TOL);
}

#[test]
fn fourier_unit_gradients() {
    let mut r = rng(5);
    for &(c, h, w) in &[(4, 8, 8), (6, 6, 7), (4, 5, 4)] {
        let mut fu = FourierUnit::new("f", c, &mut r).unwrap();
        randomize_biases(&mut fu, &mut r);
        let x = random_grid(&[2, c, h, w], &mut r);
        let e = grad_check(&mut fu, &x, Mode::Train, 15);
        assert!(e < TOL, "fourier {c}x{h}x{w}: {e}");
    }
}

#[test]
fn ffc_block_gradients() {
    let mut r = rng(6);
    let mut block = FfcBlock::new("b", 2, 4, &mut r).unwrap();
    randomize_biases(&mut block, &mut r);
    let x = random_grid(&[2, 6, 8, 8], &mut r);
    let e = grad_check(&mut block, &x, Mode::Train, 16);
    assert!(e < TOL, "ffc block: {e}");
}

fn tiny_config() -> EncoderDecoderConfig {
    EncoderDecoderConfig { base_channels: 16, width_multiplier: 0.25, encoder_blocks: 1, decoder_blocks: 1, ..Default::default() }
}

/// Whole networks stack many BN+ReLU stages, so a step of `1e-4` on a stem
/// weight moves some activation across a ReLU kink; a smaller step keeps
/// every probe on one linear piece.
#[test]
fn encoder_decoder_gradients() {
    let mut r = rng(7);
    let cfg = tiny_config();
    let mut enc = Encoder::new(&cfg, &mut r).unwrap();
    let x = random_grid(&[2, 1, 8, 8], &mut r);
    assert!(grad_check_step(&mut enc, &x, Mode::Train, 17, 1e-6) < TOL);
    let mut dec = Decoder::new(&cfg, &mut r).unwrap();
    let z = random_grid(&[2, 16, 2, 2], &mut r);
    assert!(grad_check_step(&mut dec, &z, Mode::Train, 18, 1e-6) < TOL);
}

#[test]
fn fourier_unit_zero_in_zero_out() {
    let mut r = rng(8);
    let mut fu = FourierUnit::new("f", 8, &mut r).unwrap();
    for p in fu.params_mut() {
        if p.name.ends_with("running_mean") {
            p.value.fill(0.0);
        }
    }
    let y = fu.forward(&Grid::zeros(&[1, 8, 6, 6]), Mode::Eval).unwrap();
    assert_eq!(y.max_abs(), 0.0);
}

#[test]
fn fourier_unit_constant_in_constant_out() {
    let mut r = rng(9);
    let mut fu = FourierUnit::new("f", 6, &mut r).unwrap();
    let vals: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut x = Grid::zeros(&[1, 6, 8, 8]);
    for (c, v) in vals.iter().enumerate() {
        x.plane_mut(0, c).fill(*v);
    }
    let y = fu.forward(&x, Mode::Eval).unwrap();
    for c in 0..6 {
        let plane = y.plane(0, c);
        let spread = plane.iter().fold(0.0f64, |m, v| m.max((v - plane[0]).abs()));
        assert!(spread < 1e-12, "channel {c} varies by {spread}");
    }
}

#[test]
fn zeroed_block_is_identity() {
    let mut r = rng(10);
    let mut block = FfcBlock::new("b", 4, 12, &mut r).unwrap();
    for p in block.params_mut() {
        if p.name.ends_with(".weight") {
            p.value.fill(0.0);
        }
    }
    let x = random_grid(&[2, 16, 6, 6], &mut r);
    assert_eq!(block.forward(&x, Mode::Train).unwrap(), x);
    let p = FeaturePair::split(&x, 4).unwrap();
    assert_eq!(block.forward_pair(&p, Mode::Eval).unwrap(), p);
}

#[test]
fn linear_block_is_homogeneous() {
    let mut r = rng(11);
    let mut block = FfcBlock::new("b", 4, 12, &mut r).unwrap();
    block.set_linear(true);
    let x = random_grid(&[1, 16, 8, 8], &mut r);
    let y1 = block.forward(&x, Mode::Train).unwrap();
    let y2 = block.forward(&x.scale(2.0), Mode::Train).unwrap();
    assert!(y2.max_abs_diff(&y1.scale(2.0)).unwrap() < 1e-12 * y1.max_abs().max(1.0));
    block.set_linear(false);
    let y3 = block.forward(&x.scale(2.0), Mode::Train).unwrap();
    assert!(y3.max_abs_diff(&y1.scale(2.0)).unwrap() > 1e-6);
}

#[test]
fn desk_scale_shapes() {
    let mut r = rng(12);
    let cfg = EncoderDecoderConfig { encoder_blocks: 1, decoder_blocks: 1, ..Default::default() };
    let mut enc = Encoder::new(&cfg, &mut r).unwrap();
    let mut dec = Decoder::new(&cfg, &mut r).unwrap();
    let x = random_grid(&[1, 1, 64, 64], &mut r);
    let z = enc.forward(&x, Mode::Eval).unwrap();
    assert_eq!(z.shape(), &[1, 64, 16, 16]);
    let y = dec.forward(&z, Mode::Eval).unwrap();
    assert_eq!(y.shape(), &[1, 1, 64, 64]);
    y.ensure_finite("decoder output").unwrap();
    for n in [4, 12, 20] {
        let x = random_grid(&[2, 1, n, n], &mut r);
        let y = dec.forward(&enc.forward(&x, Mode::Train).unwrap(), Mode::Train).unwrap();
        assert_eq!(y.shape(), &[2, 1, n, n]);
    }
    assert!(enc.forward(&random_grid(&[1, 1, 10, 10], &mut r), Mode::Eval).is_err());
    assert!(enc.forward(&random_grid(&[1, 2, 8, 8], &mut r), Mode::Eval).is_err());
}

fn conv_count(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

fn layer_count(l: usize, g: usize) -> usize {
    let fourier = conv_count(g, g / 2, 1) + g + conv_count(g, g, 1) + 2 * g + conv_count(g / 2, g, 1);
    conv_count(l, l, 3) + conv_count(g, l, 3) + conv_count(l, g, 3) + fourier + 2 * l + 2 * g
}

#[test]
fn parameter_count_matches_closed_form() {
    for (cfg, s) in [
        (EncoderDecoderConfig::default(), 16),
        (EncoderDecoderConfig { encoder_blocks: 2, decoder_blocks: 1, width_multiplier: 0.5, ..Default::default() }, 32),
    ] {
        let (d, t) = (2 * s, 4 * s);
        let (l, g) = (t / 4, 3 * t / 4);
        let block = 2 * layer_count(l, g);
        let encoder = conv_count(1, s, 7) + 2 * s + conv_count(s, d, 3) + 2 * d
            + conv_count(d, l, 3) + 2 * l + conv_count(d, g, 3) + 2 * g
            + cfg.encoder_blocks * block;
        let decoder = conv_count(t, l, 3) + 2 * l + conv_count(t, g, 3) + 2 * g
            + cfg.decoder_blocks * block
            + conv_count(t, d, 3) + 2 * d + conv_count(d, s, 3) + 2 * s + conv_count(s, 1, 7);
        let mut r = rng(13);
        assert_eq!(Encoder::new(&cfg, &mut r).unwrap().num_trainable(), encoder);
        assert_eq!(Decoder::new(&cfg, &mut r).unwrap().num_trainable(), decoder);
    }
}

#[test]
fn same_seed_same_weights() {
    let cfg = tiny_config();
    let a = Encoder::new(&cfg, &mut rng(14)).unwrap();
    let b = Encoder::new(&cfg, &mut rng(14)).unwrap();
    let c = Encoder::new(&cfg, &mut rng(15)).unwrap();
    let values = |e: &Encoder| e.params().iter().map(|p| p.value.clone()).collect::<Vec<_>>();
    assert_eq!(values(&a), values(&b));
    assert_ne!(values(&a), values(&c));
}

#[test]
fn every_parameter_receives_gradient() {
    let mut r = rng(16);
    let cfg = EncoderDecoderConfig { encoder_blocks: 2, decoder_blocks: 1, ..Default::default() };
    let mut enc = Encoder::new(&cfg, &mut r).unwrap();
    let mut dec = Decoder::new(&cfg, &mut r).unwrap();
    let x = random_grid(&[2, 1, 16, 16], &mut r);
    let y = dec.forward(&enc.forward(&x, Mode::Train).unwrap(), Mode::Train).unwrap();
    let g = random_grid(y.shape(), &mut r);
    enc.backward(&dec.backward(&g).unwrap()).unwrap();
    for p in enc.params().into_iter().chain(dec.params()).filter(|p| p.is_trainable()) {
        assert!(p.grad.max_abs() > 0.0, "{} has no gradient", p.name);
    }
}

#[test]
fn parameter_names_are_unique() {
    let mut r = rng(17);
    let cfg = EncoderDecoderConfig::default();
    let enc = Encoder::new(&cfg, &mut r).unwrap();
    let dec = Decoder::new(&cfg, &mut r).unwrap();
    for names in [enc.params(), dec.params()].map(|ps| ps.iter().map(|p| p.name.clone()).collect::<Vec<_>>()) {
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }
}
