//! Distillation objectives, the FIFO negative bank and the EMA teacher.
//!
//! Every loss returns its value together with the gradient with respect to
//! the student-side argument; teacher-side arguments are constants.

use std::collections::VecDeque;

use crate::error::{invalid, Result};
use crate::nn::Module;
use crate::spectral::SpectralEmbedding;
use crate::tensor::Grid;

pub const RDD_EPS: f64 = 1e-8;

/// Mean absolute error and its subgradient `sign(pred - target) / count`.
pub fn l1_pixel_loss(pred: &Grid, target: &Grid) -> Result<(f64, Grid)> {
    pred.ensure_same_shape(target, "l1 loss")?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, Grid::new(pred.shape(), grad)?))
}

/// Directional distillation: mean over spatial positions of
/// `1 - cos(Z_S[:, i, j], Z_T[:, i, j])` with the product of norms floored at
/// [`RDD_EPS`]. Rank-4 inputs `[B, C, W, H]` are averaged over the batch too.
pub fn rdd_loss(zs: &Grid, zt: &Grid) -> Result<(f64, Grid)> {
    zs.ensure_same_shape(zt, "rdd loss")?;
    let (b, c, plane) = match zs.shape()[..] {
        [c, w, h] => (1, c, w * h),
        [b, c, w, h] => (b, c, w * h),
        _ => return invalid(format!("rdd loss needs [C, W, H] or [B, C, W, H], got {:?}", zs.shape())),
    };
    let count = (b * plane) as f64;
    let (s, t) = (zs.data(), zt.data());
    let mut grad = vec![0.0; zs.len()];
    let mut loss = 0.0;
    for n in 0..b {
        let base = n * c * plane;
        for p in 0..plane {
            let idx = |k: usize| base + k * plane + p;
            let (mut dot, mut ss, mut tt) = (0.0, 0.0, 0.0);
            for k in 0..c {
                let (a, bv) = (s[idx(k)], t[idx(k)]);
                dot += a * bv;
                ss += a * a;
                tt += bv * bv;
            }
            let (na, nb) = (ss.sqrt(), tt.sqrt());
            let denom = na * nb;
            if denom > RDD_EPS {
                let cos = dot / denom;
                loss += 1.0 - cos;
                for k in 0..c {
                    let dcos = t[idx(k)] / denom - cos * s[idx(k)] / ss;
                    grad[idx(k)] = -dcos / count;
                }
            } else {
                loss += 1.0 - dot / RDD_EPS;
                for k in 0..c {
                    grad[idx(k)] = -t[idx(k)] / RDD_EPS / count;
                }
            }
        }
    }
    Ok((loss / count, Grid::new(zs.shape(), grad)?))
}

/// Which logits enter the contrastive normalizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BcdDenominator {
    /// Positive pair plus every bank entry; the loss is non-negative.
    #[default]
    WithPositive,
    /// Bank entries only; the loss may go negative.
    NegativesOnly,
}

/// FIFO queue of detached embeddings, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    entries: VecDeque<SpectralEmbedding>,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return invalid("memory bank capacity must be positive");
        }
        Ok(Self { capacity, entries: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SpectralEmbedding> {
        self.entries.iter()
    }

    /// Embedding length shared by all entries, if any are stored.
    pub fn dim(&self) -> Option<usize> {
        self.entries.front().map(|e| e.len())
    }

    pub fn push(&mut self, e: SpectralEmbedding) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != e.len() {
                return invalid(format!("bank holds length-{d} embeddings, got {}", e.len()));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
        Ok(())
    }

    /// Appends in slice order, evicting the oldest overflow.
    pub fn push_batch(&mut self, batch: &[SpectralEmbedding]) -> Result<()> {
        batch.iter().try_for_each(|e| self.push(e.clone()))
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Band-pass contrastive loss `-log(exp(s.t / tau) / normalizer)` with
/// negatives from `bank`, stabilized by subtracting the largest logit.
/// An empty bank yields zero loss and zero gradient.
pub fn bcd_loss(
    zs: &SpectralEmbedding,
    zt: &SpectralEmbedding,
    bank: &MemoryBank,
    tau: f64,
    denominator: BcdDenominator,
) -> Result<(f64, Vec<f64>)> {
    if !(tau > 0.0) {
        return invalid("temperature must be positive");
    }
    if zs.len() != zt.len() {
        return invalid(format!("embedding lengths differ: {} vs {}", zs.len(), zt.len()));
    }
    if let Some(d) = bank.dim() {
        if d != zs.len() {
            return invalid(format!("bank embeddings have length {d}, student {}", zs.len()));
        }
    }
    if bank.is_empty() {
        return Ok((0.0, vec![0.0; zs.len()]));
    }
    let positive = zs.dot(zt) / tau;
    let negatives: Vec<f64> = bank.iter().map(|z| zs.dot(z) / tau).collect();
    let with_pos = denominator == BcdDenominator::WithPositive;
    let mut max = negatives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if with_pos {
        max = max.max(positive);
    }
    let pos_w = if with_pos { (positive - max).exp() } else { 0.0 };
    let neg_w: Vec<f64> = negatives.iter().map(|l| (l - max).exp()).collect();
    let total = pos_w + neg_w.iter().sum::<f64>();
    let loss = -(positive - max) + total.ln();
    // dL/dzs = (-zt + sum_j p_j z_j) / tau with p the normalized weights
    let mut grad: Vec<f64> = zt.values.iter().map(|t| (pos_w / total - 1.0) * t / tau).collect();
    for (z, w) in bank.iter().zip(&neg_w) {
        let p = w / total / tau;
        for (g, v) in grad.iter_mut().zip(&z.values) {
            *g += p * v;
        }
    }
    Ok((loss, grad))
}

/// Maintains a teacher module as the exponential moving average of a
/// student with identical parameter names and shapes, running statistics
/// included.
pub struct EmaTracker<M> {
    momentum: f64,
    teacher: M,
}

impl<M: Module> EmaTracker<M> {
    pub fn new(momentum: f64, teacher: M) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return invalid(format!("EMA momentum must lie in [0, 1], got {momentum}"));
        }
        Ok(Self { momentum, teacher })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn teacher(&self) -> &M {
        &self.teacher
    }

    pub fn teacher_mut(&mut self) -> &mut M {
        &mut self.teacher
    }

    pub fn into_teacher(self) -> M {
        self.teacher
    }

    /// `teacher = m * teacher + (1 - m) * student`, elementwise.
    pub fn update(&mut self, student: &dyn Module) -> Result<()> {
        let src = student.params();
        let dst = self.teacher.params_mut();
        if src.len() != dst.len() {
            return invalid(format!("teacher has {} tensors, student {}", dst.len(), src.len()));
        }
        for (t, s) in dst.iter().zip(&src) {
            if t.name != s.name || t.value.shape() != s.value.shape() {
                return invalid(format!("teacher {} {:?} vs student {} {:?}", t.name, t.value.shape(), s.name, s.value.shape()));
            }
        }
        let m = self.momentum;
        for (t, s) in dst.into_iter().zip(src) {
            for (a, b) in t.value.data_mut().iter_mut().zip(s.value.data()) {
                *a = m * *a + (1.0 - m) * b;
            }
        }
        Ok(())
    }
}
