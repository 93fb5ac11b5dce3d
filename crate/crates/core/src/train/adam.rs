use crate::error::{invalid, Result};
use crate::nn::Param;
use crate::tensor::Grid;

/// Moment estimates for an ordered list of trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: Vec<Grid>,
    pub second: Vec<Grid>,
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, step: 0, first: Vec::new(), second: Vec::new() }
    }
}

/// One bias-corrected Adam update of every trainable parameter in `params`
/// using its accumulated gradient. Buffers are skipped.
pub fn adam_step<'a>(params: impl IntoIterator<Item = &'a mut Param>, state: &mut AdamState, lr: f64) -> Result<()> {
    let trainable: Vec<&mut Param> = params.into_iter().filter(|p| p.is_trainable()).collect();
    if state.first.is_empty() {
        state.first = trainable.iter().map(|p| Grid::zeros(p.value.shape())).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != trainable.len()
        || trainable.iter().zip(&state.first).any(|(p, m)| p.value.shape() != m.shape())
    {
        return invalid("optimizer state does not match the parameter list");
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    for ((p, m), v) in trainable.into_iter().zip(&mut state.first).zip(&mut state.second) {
        let g = p.grad.data();
        let (m, v) = (m.data_mut(), v.data_mut());
        for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            *theta -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Step decay: `lr0 * 0.5^floor(epoch / period)`.
pub fn lr_at(epoch: usize, lr0: f64, period: usize) -> f64 {
    lr0 * 0.5f64.powi((epoch / period.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamKind;

    fn scalar(v: f64) -> Param {
        Param::new("theta", ParamKind::Weight, Grid::from_parts(vec![1], vec![v]))
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.7);
        let mut st = AdamState::new(0.5, 0.999, 1e-8);
        for _ in 0..5 {
            adam_step([&mut p], &mut st, 1e-2).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.7);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(0.5, 0.999, 1e-8);
        let mut steps = 0;
        while p.value.data()[0].abs() >= 1e-2 {
            p.grad.data_mut()[0] = 2.0 * p.value.data()[0];
            adam_step([&mut p], &mut st, 1e-2).unwrap();
            steps += 1;
            assert!(steps <= 500, "no convergence, theta = {}", p.value.data()[0]);
        }
    }

    #[test]
    fn buffers_are_not_optimized() {
        let mut w = scalar(1.0);
        let mut b = Param::new("running_mean", ParamKind::Buffer, Grid::from_parts(vec![1], vec![1.0]));
        w.grad.data_mut()[0] = 1.0;
        b.grad.data_mut()[0] = 1.0;
        let mut st = AdamState::new(0.9, 0.999, 1e-8);
        adam_step([&mut w, &mut b], &mut st, 0.1).unwrap();
        assert!(w.value.data()[0] < 1.0);
        assert_eq!(b.value.data()[0], 1.0);
        assert_eq!(st.first.len(), 1);
    }

    #[test]
    fn schedule() {
        assert_eq!(lr_at(0, 1e-3, 40), 1e-3);
        assert_eq!(lr_at(39, 1e-3, 40), 1e-3);
        assert_eq!(lr_at(40, 1e-3, 40), 5e-4);
        assert_eq!(lr_at(85, 1e-3, 40), 2.5e-4);
    }
}
