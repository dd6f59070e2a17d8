use serde::{Deserialize, Serialize};

use super::config::OptimConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step that ascends `grad`, then clips to [0, 1].
pub fn adam_step(amps: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &OptimConfig) -> Result<()> {
    if amps.len() != grad.len() || amps.len() != state.m.len() || state.v.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            left: amps.len(),
            right: grad.len(),
        });
    }
    state.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..amps.len() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        amps[i] = (amps[i] + cfg.lr_eta * m_hat / (v_hat.sqrt() + cfg.adam_eps)).clamp(0.0, 1.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_eta() {
        let cfg = OptimConfig::default();
        let mut a = vec![0.5; 3];
        let mut st = AdamState::new(3);
        adam_step(&mut a, &[2.0, -0.3, 1e-3], &mut st, &cfg).unwrap();
        // |Δ| = η·|g| / (|g| + ε)
        for (x, g) in a.iter().zip([2.0f64, -0.3, 1e-3]) {
            let expect = 0.5 + cfg.lr_eta * g / (g.abs() + cfg.adam_eps);
            assert!((x - expect).abs() < 1e-15);
            assert!(((x - 0.5).abs() - cfg.lr_eta).abs() <= cfg.lr_eta * cfg.adam_eps / g.abs());
        }
    }

    #[test]
    fn clip_and_zero_gradient() {
        let cfg = OptimConfig::default();
        let mut a = vec![1.0, 0.0, 0.4];
        let mut st = AdamState::new(3);
        adam_step(&mut a, &[5.0, -5.0, 0.0], &mut st, &cfg).unwrap();
        assert_eq!(a, vec![1.0, 0.0, 0.4]);
        assert!(adam_step(&mut a, &[1.0], &mut st, &cfg).is_err());
    }
}
