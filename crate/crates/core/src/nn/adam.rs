//! Adam with optional global-norm gradient clipping.

use super::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the gradient when its L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            t: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    /// Applies one update; returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> f64 {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        let norm = grad.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt();
        let scale = match self.cfg.clip_norm {
            Some(c) if norm > c && norm > 0.0 => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.t.min(i32::MAX as u64) as i32);
        let step = T::of(self.cfg.lr * c2.sqrt() / c1);
        let eps = T::of(self.cfg.eps * c2.sqrt());
        let (b1t, b2t, s) = (T::of(b1), T::of(b2), T::of(scale));
        for i in 0..params.len() {
            let g = grad[i] * s;
            self.m[i] = b1t * self.m[i] + (T::one() - b1t) * g;
            self.v[i] = b2t * self.v[i] + (T::one() - b2t) * g * g;
            params[i] = params[i] - step * self.m[i] / (self.v[i].sqrt() + eps);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut a = Adam::<f64>::new(AdamConfig { lr: 0.1, clip_norm: None, ..Default::default() }, 2);
        let mut p = [1.0, -1.0];
        a.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut a = Adam::<f64>::new(AdamConfig { lr: 0.05, ..Default::default() }, 1);
        let mut p = [4.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            a.step(&mut p, &g);
        }
        assert!((p[0] - 1.5).abs() < 1e-3);
    }
}
