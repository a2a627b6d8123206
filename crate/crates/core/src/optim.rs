//! Adam and the training hyperparameters.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Triplet margin γ.
    pub margin: f64,
    /// L2 coefficient λ on the triplet group.
    pub l2: f64,
    pub lr_triplet: f64,
    pub lr_regression: f64,
    pub lr_sparsity: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Common clip length every query and proposal is resampled to.
    pub timesteps: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            margin: 0.5,
            l2: 5e-3,
            lr_triplet: 1e-4,
            lr_regression: 1e-1,
            lr_sparsity: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 64,
            timesteps: 40,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidInput(m));
        if !(self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.l2 >= 0.0) {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        for (name, lr) in [
            ("lr_triplet", self.lr_triplet),
            ("lr_regression", self.lr_regression),
            ("lr_sparsity", self.lr_sparsity),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epoch count must be positive".into());
        }
        if self.timesteps < 2 {
            return bad(format!("timesteps must be ≥ 2, got {}", self.timesteps));
        }
        Ok(())
    }
}

/// Adam with bias correction over an ordered list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First moments, one per tensor.
    pub m: Vec<Matrix>,
    /// Second moments, one per tensor.
    pub v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, params: &[&Matrix]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect()
        };
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(shape_err(
                    "adam_step",
                    format!(
                        "param {:?}, grad {:?}, moment {:?}",
                        p.shape(),
                        g.shape(),
                        m.shape()
                    ),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let (ps, gs) = (p.as_mut_slice(), g.as_slice());
            for (((pi, &gi), mi), vi) in ps
                .iter_mut()
                .zip(gs)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Matrix::from_rows(&[[1.0, -2.0]]).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8, &[&p]);
        adam.m[0] = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        adam.step(&mut [&mut p], &[&Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(adam.step, 1);
        // moments decay, parameters move only by the decayed first moment
        assert_eq!(adam.m[0].as_slice(), &[0.45, 0.45]);
        let mut q = before.clone();
        let mut fresh = Adam::new(0.1, 0.9, 0.999, 1e-8, &[&q]);
        fresh.step(&mut [&mut q], &[&Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(q, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.01, 250.0] {
            let mut p = Matrix::zeros(1, 1);
            let mut adam = Adam::new(1e-2, 0.9, 0.999, 1e-8, &[&p]);
            adam.step(&mut [&mut p], &[&Matrix::filled(1, 1, g)])
                .unwrap();
            let expected = -1e-2 * g.signum();
            assert!(
                (p[(0, 0)] - expected).abs() < 1e-3 * 1e-2,
                "g={g}: {}",
                p[(0, 0)]
            );
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Matrix::zeros(2, 2);
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8, &[&p]);
        assert!(adam.step(&mut [&mut p], &[&Matrix::zeros(1, 2)]).is_err());
        assert!(adam.step(&mut [], &[]).is_err());
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let run = || {
            let mut rng = crate::rng::SeededRng::new(99);
            let mut p = Matrix::from_fn(3, 3, |_, _| rng.normal());
            let mut adam = Adam::new(1e-2, 0.9, 0.999, 1e-8, &[&p]);
            for _ in 0..10 {
                let g = Matrix::from_fn(3, 3, |_, _| rng.normal());
                adam.step(&mut [&mut p], &[&g]).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn defaults_validate() {
        Hyperparameters::default().validate().unwrap();
        let bad = Hyperparameters {
            margin: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
