use crate::error::{Error, Result};

use super::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<T: Real>(param: &mut [T], grad: &[T], state: &mut AdamState<T>) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: param {} grad {} state {}",
            param.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let c = state.config;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let bias1 = T::lit(1.0 - c.beta1.powi(state.t as i32));
    let bias2 = T::lit(1.0 - c.beta2.powi(state.t as i32));
    let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let init = vec![0.3f32, -1.7, 0.0, -0.0, 12.5];
        let mut p = init.clone();
        let mut s = AdamState::new(p.len(), AdamConfig::default());
        adam_step(&mut p, &[0.0; 5], &mut s).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&init));
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        // With m_hat = g and v_hat = g^2 the step is lr * g / (|g| + eps).
        for g in [0.5f64, -3.0, 1e-2] {
            let mut p = vec![1.0f64];
            let cfg = AdamConfig { lr: 1e-3, ..Default::default() };
            let mut s = AdamState::new(1, cfg);
            adam_step(&mut p, &[g], &mut s).unwrap();
            let expected = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!(((p[0] - 1.0).abs() - 1e-3).abs() < 1e-8);
            assert_eq!((p[0] - 1.0).signum(), -g.signum());
        }
    }

    #[test]
    fn counter_and_second_moment() {
        let mut p = vec![0.0f32; 3];
        let mut s = AdamState::new(3, AdamConfig::default());
        for i in 0..7 {
            adam_step(&mut p, &[i as f32 - 3.0, 1.0, -2.0], &mut s).unwrap();
        }
        assert_eq!(s.t, 7);
        assert!(s.v.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::<f32>::new(2, AdamConfig::default());
        assert!(adam_step(&mut [0.0; 2], &[0.0; 3], &mut s).is_err());
    }
}
