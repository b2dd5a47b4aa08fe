use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.shape().to_vec()), Tensor::zeros(p.shape().to_vec())))
            .unzip();
        Self { step: 0, m, v }
    }
}

impl Adam {
    /// One bias-corrected Adam update. Fails without touching anything if a
    /// gradient is non-finite or shapes disagree.
    pub fn step(&self, params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.m.len() {
            return Err(TensorError::Invalid(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || state.m[i].shape() != g.shape() {
                return Err(TensorError::shape("adam", p.shape(), g.shape()));
            }
            if !g.all_finite() {
                return Err(TensorError::NonFiniteGradient(i));
            }
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let adam = Adam {
            lr: 0.1,
            ..Adam::default()
        };
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamState::new([&p]);
        adam.step(&mut [&mut p], &[Tensor::scalar(1.0)], &mut state).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + eps).
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.item().unwrap() - expected).abs() < 1e-15);
        assert!((p.item().unwrap() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let adam = Adam::default();
        let mut p = Tensor::row(vec![1.0, -2.0]);
        let mut state = AdamState::new([&p]);
        adam.step(&mut [&mut p], &[Tensor::zeros(vec![1, 2])], &mut state).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let adam = Adam::default();
        let mut p = Tensor::scalar(0.0);
        let mut state = AdamState::new([&p]);
        adam.step(&mut [&mut p], &[Tensor::scalar(1.0)], &mut state).unwrap();
        let (m1, v1) = (state.m[0].item().unwrap(), state.v[0].item().unwrap());
        adam.step(&mut [&mut p], &[Tensor::scalar(0.0)], &mut state).unwrap();
        assert!((state.m[0].item().unwrap() - 0.9 * m1).abs() < 1e-15);
        assert!((state.v[0].item().unwrap() - 0.999 * v1).abs() < 1e-15);
    }

    #[test]
    fn identical_calls_are_deterministic() {
        let adam = Adam::default();
        let run = || {
            let mut p = Tensor::row(vec![0.3, -0.7, 1.1]);
            let mut s = AdamState::new([&p]);
            let g = Tensor::row(vec![0.5, -0.25, 2.0]);
            adam.step(&mut [&mut p], &[g.clone()], &mut s).unwrap();
            adam.step(&mut [&mut p], &[g], &mut s).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let adam = Adam::default();
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamState::new([&p]);
        let err = adam.step(&mut [&mut p], &[Tensor::scalar(f64::NAN)], &mut state);
        assert!(matches!(err, Err(TensorError::NonFiniteGradient(0))));
        assert_eq!(p.item().unwrap(), 1.0);
        assert_eq!(state.step, 0);
    }
}
