//! ADAM with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use super::params::LstmParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a list of flat parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// State shaped like every tensor of `params`.
    pub fn for_params(config: AdamConfig, params: &LstmParams) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        AdamState::new(config, &sizes)
    }

    /// One update over matching lists of parameter and gradient buffers.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[k].len() || g.len() != self.m[k].len() {
                return Err(Error::Shape(format!(
                    "tensor {k}: state {} params {} grads {}",
                    self.m[k].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.t += 1;
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.t as f64);
        let bc2 = 1.0 - beta2.powf(self.t as f64);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_params(&mut self, params: &mut LstmParams, grads: &LstmParams) -> Result<()> {
        if params.dims != grads.dims {
            return Err(Error::Shape("parameter and gradient dims differ".into()));
        }
        let mut p: Vec<&mut [f64]> = params
            .tensors_mut()
            .into_iter()
            .map(|(_, t)| t.as_mut_slice())
            .collect();
        let g: Vec<&[f64]> = grads
            .tensors()
            .into_iter()
            .map(|(_, t)| t.as_slice())
            .collect();
        self.step(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_step(g: f64) -> f64 {
        let mut s = AdamState::new(AdamConfig::default(), &[1]);
        let mut theta = [0.0];
        s.step(&mut [&mut theta[..]], &[&[g][..]]).unwrap();
        theta[0]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(AdamConfig::default(), &[3]);
        let mut theta = [1.0, -2.0, 0.5];
        s.step(&mut [&mut theta[..]], &[&[0.0; 3][..]]).unwrap();
        assert_eq!(theta, [1.0, -2.0, 0.5]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_alpha() {
        assert!((first_step(1.0) + 0.001).abs() < 1e-6);
        assert!((first_step(100.0) + 0.001).abs() < 1e-6);
        assert!((first_step(-0.01) - 0.001).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(AdamConfig::default(), &[2]);
        let mut theta = [0.0; 3];
        assert!(s.step(&mut [&mut theta[..]], &[&[0.0; 3][..]]).is_err());
        assert!(s.step(&mut [], &[]).is_err());
    }
}
