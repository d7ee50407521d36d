//! Adam optimizer with bias-corrected moments.

use crate::error::{Error, Result};

/// Per-parameter moment accumulators and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update in place. The step counter is incremented before the bias
/// correction, so the first call uses t = 1.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adam gradients".into()));
    }
    state.t += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let mut p = vec![0.5, -0.25, 1.0];
        let before = p.clone();
        let mut st = AdamState::new(3, 1e-3);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0, 0.0, 0.0], &mut st).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Hand trace: m_hat = 1, v_hat = 1 for g = 1 at t = 1, so the update
        // is -lr / (1 + eps).
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, 1e-3);
        adam_step(&mut p, &[1.0], &mut st).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_bounded_by_lr() {
        let grads = [0.01, -3.0, 100.0, -0.5];
        let mut p = vec![0.0; 4];
        let mut st = AdamState::new(4, 1e-3);
        adam_step(&mut p, &grads, &mut st).unwrap();
        for (&dp, &g) in p.iter().zip(&grads) {
            assert!(dp.abs() <= 1e-3 * (1.0 + 1e-6));
            assert!(dp.signum() == -g.signum());
        }
    }

    #[test]
    fn trajectories_are_deterministic() {
        let run = || {
            let mut p = vec![1.0, -1.0];
            let mut st = AdamState::new(2, 5e-3);
            for k in 0..200 {
                let g = [p[0] * 2.0 + k as f64 * 1e-4, p[1] - 0.5];
                adam_step(&mut p, &g, &mut st).unwrap();
            }
            (p, st)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, 1e-3);
        assert!(adam_step(&mut p, &[f64::NAN], &mut st).is_err());
        assert!(adam_step(&mut p, &[f64::INFINITY], &mut st).is_err());
    }
}
