//! Adam with bias correction, operating on the trainable arrays of a
//! parameter bank.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::nets::{Grads, NetParams};

/// Default Adam epsilon.
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators for one parameter bank.
#[derive(Debug, Clone)]
pub struct OptimState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(params: &NetParams, lr: f64, betas: (f64, f64)) -> Self {
        let shapes: Vec<usize> =
            params.trainable_indices().iter().map(|&i| params.array(i).len()).collect();
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: ADAM_EPS,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update on a single array. The moment buffers are updated in
/// place; `t` is the post-increment step count.
pub fn adam_update_array(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
) {
    let bc1 = 1.0 - libm::pow(beta1, t as f64);
    let bc2 = 1.0 - libm::pow(beta2, t as f64);
    for i in 0..w.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        w[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
    }
}

/// Applies one Adam step to every trainable array of `params`.
///
/// Rejects the whole batch if any gradient is non-finite, leaving both the
/// parameters and the optimizer state untouched.
pub fn adam_step(
    params: &mut NetParams,
    grads: &Grads,
    state: &mut OptimState,
) -> Result<(), CoreError> {
    let trainable = params.trainable_indices();
    if grads.arrays.len() != trainable.len() || state.m.len() != trainable.len() {
        return Err(CoreError::ShapeMismatch {
            context: "adam gradient arrays",
            expected: trainable.len(),
            got: grads.arrays.len(),
        });
    }
    for (gi, &pi) in trainable.iter().enumerate() {
        if grads.arrays[gi].len() != params.array(pi).len() {
            return Err(CoreError::ShapeMismatch {
                context: "adam gradient length",
                expected: params.array(pi).len(),
                got: grads.arrays[gi].len(),
            });
        }
    }
    if !grads.is_finite() {
        return Err(CoreError::NonFiniteGradient);
    }
    state.step += 1;
    let (lr, b1, b2, eps, t) = (state.lr, state.beta1, state.beta2, state.eps, state.step);
    for (gi, &pi) in trainable.iter().enumerate() {
        adam_update_array(
            params.array_mut(pi),
            &grads.arrays[gi],
            &mut state.m[gi],
            &mut state.v[gi],
            lr,
            b1,
            b2,
            eps,
            t,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_hand_evaluation() {
        // w=0, g=1, lr=0.001, betas (0.5, 0.9): m_hat = v_hat = 1, so the
        // update is -lr / (1 + eps).
        let mut w = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adam_update_array(&mut w, &[1.0], &mut m, &mut v, 0.001, 0.5, 0.9, 1e-8, 1);
        assert!((w[0] + 0.001).abs() < 1e-9, "got {}", w[0]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = NetParams::classifier(3, 1).unwrap();
        let before = params.clone();
        let mut state = OptimState::new(&params, 0.01, (0.5, 0.9));
        let grads = Grads::zeros_like(&params);
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn non_finite_gradient_rejects_batch() {
        let mut params = NetParams::classifier(3, 1).unwrap();
        let before = params.clone();
        let mut state = OptimState::new(&params, 0.01, (0.5, 0.9));
        let mut grads = Grads::zeros_like(&params);
        grads.arrays[0][0] = f64::NAN;
        let err = adam_step(&mut params, &grads, &mut state).unwrap_err();
        assert_eq!(err, CoreError::NonFiniteGradient);
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut params = NetParams::classifier(4, 9).unwrap();
            let mut state = OptimState::new(&params, 0.005, (0.5, 0.9));
            for step in 0..10 {
                let mut grads = Grads::zeros_like(&params);
                for (ai, arr) in grads.arrays.iter_mut().enumerate() {
                    for (i, g) in arr.iter_mut().enumerate() {
                        *g = ((step + ai + i) % 7) as f64 * 0.1 - 0.3;
                    }
                }
                adam_step(&mut params, &grads, &mut state).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }
}
