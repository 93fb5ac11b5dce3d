use rand::Rng;

use super::{gemm, kaiming_uniform, Mode, Module, Param, ParamKind};
use crate::error::{invalid, Error, Result};
use crate::tensor::Grid;

/// Output extent of a strided window sweep.
fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Unfolds a `[C, H, W]` plane stack into `[C*k*k, Ho*Wo]` columns.
#[allow(clippy::too_many_arguments)]
fn im2col(src: &[f64], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, ho: usize, wo: usize, cols: &mut [f64]) {
    let hw = ho * wo;
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = &mut cols[((ci * k + kh) * k + kw) * hw..][..hw];
                for oh in 0..ho {
                    let ih = (oh * s + kh) as isize - p as isize;
                    let dst = &mut row[oh * wo..(oh + 1) * wo];
                    if ih < 0 || ih >= h as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src_row = &plane[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * s + kw) as isize - p as isize;
                        *d = if iw < 0 || iw >= w as isize { 0.0 } else { src_row[iw as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `[C, H, W]`.
#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, ho: usize, wo: usize, dst: &mut [f64]) {
    let hw = ho * wo;
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = &cols[((ci * k + kh) * k + kw) * hw..][..hw];
                for oh in 0..ho {
                    let ih = (oh * s + kh) as isize - p as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let out_row = &mut plane[ih as usize * w..(ih as usize + 1) * w];
                    for ow in 0..wo {
                        let iw = (ow * s + kw) as isize - p as isize;
                        if iw >= 0 && iw < w as isize {
                            out_row[iw as usize] += row[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

fn missing_forward(layer: &str) -> Error {
    Error::State(format!("{layer}: backward called before forward"))
}

/// 2-D convolution with zero padding. Weight `[C_out, C_in, k, k]`, bias `[C_out]`.
pub struct Conv2d {
    weight: Param,
    bias: Param,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    input: Option<Grid>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let shape = [out_ch, in_ch, kernel, kernel];
        Self {
            weight: Param::new(format!("{name}.weight"), ParamKind::Weight, kaiming_uniform(&shape, in_ch * kernel * kernel, rng)),
            bias: Param::new(format!("{name}.bias"), ParamKind::Weight, Grid::zeros(&[out_ch])),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            input: None,
        }
    }

    pub fn weight_mut(&mut self) -> &mut Grid {
        &mut self.weight.value
    }

    pub fn bias_mut(&mut self) -> &mut Grid {
        &mut self.bias.value
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    fn geometry(&self, x: &Grid) -> Result<(usize, usize, usize, usize, usize)> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.in_ch {
            return invalid(format!("{}: expected {} input channels, got {c}", self.weight.name, self.in_ch));
        }
        match (conv_out(h, self.kernel, self.stride, self.pad), conv_out(w, self.kernel, self.stride, self.pad)) {
            (Some(ho), Some(wo)) => Ok((b, h, w, ho, wo)),
            _ => invalid(format!("{}: input {h}x{w} smaller than kernel", self.weight.name)),
        }
    }
}

impl Module for Conv2d {
    fn forward(&mut self, x: &Grid, _mode: Mode) -> Result<Grid> {
        let (b, h, w, ho, wo) = self.geometry(x)?;
        let (cin, cout, k) = (self.in_ch, self.out_ch, self.kernel);
        let ckk = cin * k * k;
        let mut out = vec![0.0; b * cout * ho * wo];
        let mut cols = if self.is_pointwise() { Vec::new() } else { vec![0.0; ckk * ho * wo] };
        for n in 0..b {
            let xs = &x.data()[n * cin * h * w..(n + 1) * cin * h * w];
            let ys = &mut out[n * cout * ho * wo..(n + 1) * cout * ho * wo];
            let cols_ref: &[f64] = if self.is_pointwise() {
                xs
            } else {
                im2col(xs, cin, h, w, k, self.stride, self.pad, ho, wo, &mut cols);
                &cols
            };
            gemm(cout, ckk, ho * wo, self.weight.value.data(), false, cols_ref, false, 0.0, ys);
            for (co, bias) in self.bias.value.data().iter().enumerate() {
                ys[co * ho * wo..(co + 1) * ho * wo].iter_mut().for_each(|v| *v += bias);
            }
        }
        self.input = Some(x.clone());
        Ok(Grid::from_parts(vec![b, cout, ho, wo], out))
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let x = self.input.take().ok_or_else(|| missing_forward(&self.weight.name))?;
        let (b, h, w, ho, wo) = self.geometry(&x)?;
        if grad_out.shape() != [b, self.out_ch, ho, wo] {
            return invalid(format!("{}: gradient shape {:?}", self.weight.name, grad_out.shape()));
        }
        let (cin, cout, k) = (self.in_ch, self.out_ch, self.kernel);
        let ckk = cin * k * k;
        let hw = ho * wo;
        let mut dx = vec![0.0; x.len()];
        let mut cols = vec![0.0; ckk * hw];
        let mut dcols = vec![0.0; ckk * hw];
        for n in 0..b {
            let xs = &x.data()[n * cin * h * w..(n + 1) * cin * h * w];
            let dy = &grad_out.data()[n * cout * hw..(n + 1) * cout * hw];
            let cols_ref: &[f64] = if self.is_pointwise() {
                xs
            } else {
                im2col(xs, cin, h, w, k, self.stride, self.pad, ho, wo, &mut cols);
                &cols
            };
            // dW += dY cols^T
            gemm(cout, hw, ckk, dy, false, cols_ref, true, 1.0, self.weight.grad.data_mut());
            for (co, g) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *g += dy[co * hw..(co + 1) * hw].iter().sum::<f64>();
            }
            let dxs = &mut dx[n * cin * h * w..(n + 1) * cin * h * w];
            if self.is_pointwise() {
                gemm(ckk, cout, hw, self.weight.value.data(), true, dy, false, 0.0, dxs);
            } else {
                gemm(ckk, cout, hw, self.weight.value.data(), true, dy, false, 0.0, &mut dcols);
                col2im(&dcols, cin, h, w, k, self.stride, self.pad, ho, wo, dxs);
            }
        }
        Ok(Grid::from_parts(x.shape().to_vec(), dx))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed convolution. Weight `[C_in, C_out, k, k]`, bias `[C_out]`;
/// output extent `(H - 1) s - 2p + k + output_padding`.
pub struct ConvTranspose2d {
    weight: Param,
    bias: Param,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output_padding: usize,
    input: Option<Grid>,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_padding: usize,
        rng: &mut R,
    ) -> Self {
        let shape = [in_ch, out_ch, kernel, kernel];
        Self {
            weight: Param::new(format!("{name}.weight"), ParamKind::Weight, kaiming_uniform(&shape, out_ch * kernel * kernel, rng)),
            bias: Param::new(format!("{name}.bias"), ParamKind::Weight, Grid::zeros(&[out_ch])),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            output_padding,
            input: None,
        }
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        ((len - 1) * self.stride + self.kernel + self.output_padding).checked_sub(2 * self.pad)
    }

    fn geometry(&self, x: &Grid) -> Result<(usize, usize, usize, usize, usize)> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.in_ch {
            return invalid(format!("{}: expected {} input channels, got {c}", self.weight.name, self.in_ch));
        }
        if self.output_padding >= self.stride {
            return invalid("output padding must be smaller than the stride");
        }
        match (self.output_len(h), self.output_len(w)) {
            (Some(ho), Some(wo)) if ho > 0 && wo > 0 => Ok((b, h, w, ho, wo)),
            _ => invalid(format!("{}: degenerate output for {h}x{w}", self.weight.name)),
        }
    }
}

impl Module for ConvTranspose2d {
    fn forward(&mut self, x: &Grid, _mode: Mode) -> Result<Grid> {
        let (b, h, w, ho, wo) = self.geometry(x)?;
        let (cin, cout, k) = (self.in_ch, self.out_ch, self.kernel);
        let ckk = cout * k * k;
        let mut out = vec![0.0; b * cout * ho * wo];
        let mut cols = vec![0.0; ckk * h * w];
        for n in 0..b {
            let xs = &x.data()[n * cin * h * w..(n + 1) * cin * h * w];
            gemm(ckk, cin, h * w, self.weight.value.data(), true, xs, false, 0.0, &mut cols);
            let ys = &mut out[n * cout * ho * wo..(n + 1) * cout * ho * wo];
            col2im(&cols, cout, ho, wo, k, self.stride, self.pad, h, w, ys);
            for (co, bias) in self.bias.value.data().iter().enumerate() {
                ys[co * ho * wo..(co + 1) * ho * wo].iter_mut().for_each(|v| *v += bias);
            }
        }
        self.input = Some(x.clone());
        Ok(Grid::from_parts(vec![b, cout, ho, wo], out))
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let x = self.input.take().ok_or_else(|| missing_forward(&self.weight.name))?;
        let (b, h, w, ho, wo) = self.geometry(&x)?;
        if grad_out.shape() != [b, self.out_ch, ho, wo] {
            return invalid(format!("{}: gradient shape {:?}", self.weight.name, grad_out.shape()));
        }
        let (cin, cout, k) = (self.in_ch, self.out_ch, self.kernel);
        let ckk = cout * k * k;
        let mut dx = vec![0.0; x.len()];
        let mut cols = vec![0.0; ckk * h * w];
        for n in 0..b {
            let dy = &grad_out.data()[n * cout * ho * wo..(n + 1) * cout * ho * wo];
            im2col(dy, cout, ho, wo, k, self.stride, self.pad, h, w, &mut cols);
            for (co, g) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *g += dy[co * ho * wo..(co + 1) * ho * wo].iter().sum::<f64>();
            }
            let xs = &x.data()[n * cin * h * w..(n + 1) * cin * h * w];
            // dW[Cin, CoutKK] += x[Cin, HW] cols^T
            gemm(cin, h * w, ckk, xs, false, &cols, true, 1.0, self.weight.grad.data_mut());
            let dxs = &mut dx[n * cin * h * w..(n + 1) * cin * h * w];
            gemm(cin, ckk, h * w, self.weight.value.data(), false, &cols, false, 0.0, dxs);
        }
        Ok(Grid::from_parts(x.shape().to_vec(), dx))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

struct BnCache {
    xhat: Grid,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

/// Per-channel batch normalization over `(B, H, W)`.
pub struct BatchNorm2d {
    gamma: Param,
    beta: Param,
    running_mean: Param,
    running_var: Param,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), ParamKind::Weight, Grid::filled(&[channels], 1.0)),
            beta: Param::new(format!("{name}.beta"), ParamKind::Weight, Grid::zeros(&[channels])),
            running_mean: Param::new(format!("{name}.running_mean"), ParamKind::Buffer, Grid::zeros(&[channels])),
            running_var: Param::new(format!("{name}.running_var"), ParamKind::Buffer, Grid::filled(&[channels], 1.0)),
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl Module for BatchNorm2d {
    fn forward(&mut self, x: &Grid, mode: Mode) -> Result<Grid> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return invalid(format!("{}: expected {} channels, got {c}", self.gamma.name, self.channels()));
        }
        let hw = h * w;
        let count = (b * hw) as f64;
        let batch_stats = mode != Mode::Eval;
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let (mean, var) = if batch_stats {
                let mut s = 0.0;
                for n in 0..b {
                    s += x.plane(n, ch).iter().sum::<f64>();
                }
                let mean = s / count;
                let mut v = 0.0;
                for n in 0..b {
                    v += x.plane(n, ch).iter().map(|t| (t - mean) * (t - mean)).sum::<f64>();
                }
                let var = v / count;
                if mode == Mode::Train {
                    let unbiased = if count > 1.0 { v / (count - 1.0) } else { var };
                    let rm = &mut self.running_mean.value.data_mut()[ch];
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean;
                    let rv = &mut self.running_var.value.data_mut()[ch];
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * unbiased;
                }
                (mean, var)
            } else {
                (self.running_mean.value.data()[ch], self.running_var.value.data()[ch])
            };
            let is = 1.0 / (var + BN_EPS).sqrt();
            inv_std[ch] = is;
            let (g, bt) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for n in 0..b {
                let off = (n * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (x.data()[i] - mean) * is;
                    xhat[i] = xh;
                    out[i] = g * xh + bt;
                }
            }
        }
        self.cache = Some(BnCache { xhat: Grid::from_parts(x.shape().to_vec(), xhat), inv_std, batch_stats });
        Ok(Grid::from_parts(x.shape().to_vec(), out))
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let cache = self.cache.take().ok_or_else(|| missing_forward(&self.gamma.name))?;
        grad_out.ensure_same_shape(&cache.xhat, &self.gamma.name)?;
        let (b, c, h, w) = grad_out.dims4()?;
        let hw = h * w;
        let count = (b * hw) as f64;
        let mut dx = vec![0.0; grad_out.len()];
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for n in 0..b {
                let off = (n * c + ch) * hw;
                for i in off..off + hw {
                    sum_dy += grad_out.data()[i];
                    sum_dy_xhat += grad_out.data()[i] * cache.xhat.data()[i];
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
            self.beta.grad.data_mut()[ch] += sum_dy;
            let g = self.gamma.value.data()[ch];
            let is = cache.inv_std[ch];
            for n in 0..b {
                let off = (n * c + ch) * hw;
                for i in off..off + hw {
                    let dy = grad_out.data()[i];
                    dx[i] = if cache.batch_stats {
                        g * is / count * (count * dy - sum_dy - cache.xhat.data()[i] * sum_dy_xhat)
                    } else {
                        g * is * dy
                    };
                }
            }
        }
        Ok(Grid::from_parts(grad_out.shape().to_vec(), dx))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Module for Relu {
    fn forward(&mut self, x: &Grid, _mode: Mode) -> Result<Grid> {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        Ok(x.map(|v| v.max(0.0)))
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let mask = self.mask.take().ok_or_else(|| missing_forward("relu"))?;
        if mask.len() != grad_out.len() {
            return invalid("relu: gradient shape differs from forward input");
        }
        let data = grad_out.data().iter().zip(&mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
        Ok(Grid::from_parts(grad_out.shape().to_vec(), data))
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

/// Mirror padding without edge repetition (`c b | a b c d | c b`).
pub struct ReflectionPad2d {
    pad: usize,
    input_shape: Option<Vec<usize>>,
}

impl ReflectionPad2d {
    pub fn new(pad: usize) -> Self {
        Self { pad, input_shape: None }
    }

    fn source(&self, i: usize, n: usize) -> usize {
        let j = i as isize - self.pad as isize;
        let last = n as isize - 1;
        let r = if j < 0 {
            -j
        } else if j > last {
            2 * last - j
        } else {
            j
        };
        r as usize
    }
}

impl Module for ReflectionPad2d {
    fn forward(&mut self, x: &Grid, _mode: Mode) -> Result<Grid> {
        let (b, c, h, w) = x.dims4()?;
        if self.pad >= h || self.pad >= w {
            return invalid(format!("reflection pad {} needs input larger than {h}x{w}", self.pad));
        }
        let (ho, wo) = (h + 2 * self.pad, w + 2 * self.pad);
        let mut out = Vec::with_capacity(b * c * ho * wo);
        for n in 0..b {
            for ch in 0..c {
                let plane = x.plane(n, ch);
                for r in 0..ho {
                    let sr = self.source(r, h);
                    for col in 0..wo {
                        out.push(plane[sr * w + self.source(col, w)]);
                    }
                }
            }
        }
        self.input_shape = Some(x.shape().to_vec());
        Ok(Grid::from_parts(vec![b, c, ho, wo], out))
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        let shape = self.input_shape.take().ok_or_else(|| missing_forward("reflection pad"))?;
        let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (ho, wo) = (h + 2 * self.pad, w + 2 * self.pad);
        if grad_out.shape() != [b, c, ho, wo] {
            return invalid("reflection pad: gradient shape mismatch");
        }
        let mut dx = Grid::zeros(&shape);
        for n in 0..b {
            for ch in 0..c {
                let src = grad_out.plane(n, ch).to_vec();
                let dst = dx.plane_mut(n, ch);
                for r in 0..ho {
                    let sr = self.source(r, h);
                    for col in 0..wo {
                        dst[sr * w + self.source(col, w)] += src[r * wo + col];
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<Box<dyn Module>>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, layer: impl Module + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Runs only the first `n` layers.
    pub fn forward_prefix(&mut self, x: &Grid, mode: Mode, n: usize) -> Result<Grid> {
        let mut h = x.clone();
        for layer in self.layers.iter_mut().take(n) {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Backward through the first `n` layers; pairs with [`Self::forward_prefix`].
    pub fn backward_prefix(&mut self, grad_out: &Grid, n: usize) -> Result<Grid> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().take(n).rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }
}

impl Module for Sequential {
    fn forward(&mut self, x: &Grid, mode: Mode) -> Result<Grid> {
        self.forward_prefix(x, mode, self.layers.len())
    }

    fn backward(&mut self, grad_out: &Grid) -> Result<Grid> {
        self.backward_prefix(grad_out, self.layers.len())
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_pointwise_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new("c", 3, 3, 1, 1, 0, &mut rng);
        let w = conv.weight_mut();
        w.fill(0.0);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let x = Grid::from_parts(vec![2, 3, 4, 5], (0..120).map(|v| v as f64 * 0.1).collect());
        assert_eq!(conv.forward(&x, Mode::Train).unwrap(), x);
    }

    #[test]
    fn transpose_conv_doubles_extent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut up = ConvTranspose2d::new("u", 2, 3, 3, 2, 1, 1, &mut rng);
        let y = up.forward(&Grid::zeros(&[1, 2, 8, 8]), Mode::Train).unwrap();
        assert_eq!(y.shape(), &[1, 3, 16, 16]);
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::new("c", 1, 1, 3, 1, 1, &mut rng);
        assert!(matches!(conv.backward(&Grid::zeros(&[1, 1, 4, 4])), Err(Error::State(_))));
        let mut relu = Relu::new();
        assert!(relu.backward(&Grid::zeros(&[1])).is_err());
    }

    #[test]
    fn relu_gradient_gates() {
        let mut relu = Relu::new();
        let x = Grid::new(&[4], vec![-1.0, 2.0, -0.5, 3.0]).unwrap();
        relu.forward(&x, Mode::Train).unwrap();
        let g = relu.backward(&Grid::filled(&[4], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn reflection_pad_layout() {
        let mut pad = ReflectionPad2d::new(2);
        let x = Grid::from_parts(vec![1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]);
        assert!(pad.forward(&x, Mode::Eval).is_err());
        let x = Grid::from_parts(vec![1, 1, 3, 4], (1..=12).map(f64::from).collect());
        let y = pad.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1, 7, 8]);
        // centre row of the padded output is the original middle row, mirrored
        let row: Vec<f64> = y.plane(0, 0)[3 * 8..4 * 8].to_vec();
        assert_eq!(row, vec![7.0, 6.0, 5.0, 6.0, 7.0, 8.0, 7.0, 6.0]);
    }

    #[test]
    fn batch_norm_train_and_eval() {
        let mut bn = BatchNorm2d::new("bn", 1);
        let x = Grid::from_parts(vec![2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.mean().abs() < 1e-12);
        // running stats moved 10% toward (2.5, 5/3)
        let rm = bn.params()[2].value.data()[0];
        let rv = bn.params()[3].value.data()[0];
        assert!((rm - 0.25).abs() < 1e-12);
        assert!((rv - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        bn.forward(&x, Mode::TrainFrozenStats).unwrap();
        assert!((bn.params()[2].value.data()[0] - 0.25).abs() < 1e-12);
        let e = bn.forward(&x, Mode::Eval).unwrap();
        assert!((e.data()[0] - (1.0 - 0.25) / (rv + BN_EPS).sqrt()).abs() < 1e-12);
    }
}
