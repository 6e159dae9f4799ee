use crate::error::{Error, Result};

/// Adam hyper-parameters (Kingma and Ba 2015 defaults).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; returns the new parameters and state.
pub fn adam_step(
    params: &[f64],
    grads: &[f64],
    state: &AdamState,
    config: &AdamConfig,
) -> Result<(Vec<f64>, AdamState)> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(format!(
            "adam: {n} parameters, {} gradients, state of {}/{}",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    let AdamConfig {
        learning_rate: lr,
        beta1,
        beta2,
        epsilon,
    } = *config;
    let t = state.t + 1;
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    let mut next = AdamState {
        m: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        t,
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = grads[i];
        let m = beta1 * state.m[i] + (1.0 - beta1) * g;
        let v = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        out.push(params[i] - lr * (m / c1) / ((v / c2).sqrt() + epsilon));
        next.m.push(m);
        next.v.push(v);
    }
    Ok((out, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let p = [1.0, -2.0, 3.5];
        let (q, s) = adam_step(&p, &[0.0; 3], &AdamState::new(3), &AdamConfig::default()).unwrap();
        assert_eq!(q, p);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.25, 1e-3] {
            let (q, _) = adam_step(&[0.0], &[g], &AdamState::new(1), &cfg).unwrap();
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((q[0] - expected).abs() <= 1e-15, "g={g}: {} vs {expected}", q[0]);
        }
    }

    #[test]
    fn shape_mismatch() {
        let r = adam_step(&[0.0; 2], &[0.0; 3], &AdamState::new(2), &AdamConfig::default());
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
