use serde::{Deserialize, Serialize};

use super::{NumericError, ParamStore};

/// Learning-rate multiplier applied on top of the base rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupSchedule {
    /// `min(1, t / warmup_steps)`, flat afterwards.
    LinearThenConstant,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub warmup_steps: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub schedule: WarmupSchedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            warmup_steps: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            schedule: WarmupSchedule::LinearThenConstant,
        }
    }
}

/// Adam with bias correction and a warmup-scaled learning rate.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f32>>,
    second_moment: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        Self {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self) -> (&[Vec<f32>], &[Vec<f32>]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Learning rate in effect at (1-based) step `t`.
    pub fn lr_at(&self, t: u64) -> f32 {
        let base = self.config.lr;
        match self.config.schedule {
            WarmupSchedule::Constant => base,
            WarmupSchedule::LinearThenConstant if self.config.warmup_steps == 0 => base,
            WarmupSchedule::LinearThenConstant => base * (t as f32 / self.config.warmup_steps as f32).min(1.0),
        }
    }

    /// Applies one update. Gradients are left in place; clear them with
    /// [`ParamStore::zero_grads`] before the next accumulation.
    pub fn step(&mut self, params: &mut ParamStore<f32>) -> Result<(), NumericError> {
        if params.len() != self.first_moment.len() {
            return Err(NumericError::Contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        if let Some((_, name, _)) = params.iter().find(|(_, _, t)| t.grad().is_none()) {
            return Err(NumericError::Contract(format!("parameter {name:?} has no gradient")));
        }
        self.step_count += 1;
        let t = self.step_count;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let lr = self.lr_at(t);
        let c1 = 1.0 - beta1.powi(t as i32);
        let c2 = 1.0 - beta2.powi(t as i32);
        for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
            let grad = tensor.grad().expect("checked above").to_vec();
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (j, w) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn store(vals: &[f32], grad: Option<&[f32]>) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::new(vec![vals.len()], vals.to_vec()).unwrap()).unwrap();
        if let Some(g) = grad {
            s.get_mut(id).accumulate_grad(g);
        }
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut s = store(&[0.5, -1.0], Some(&[0.0, 0.0]));
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for _ in 0..5 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.by_name("w").unwrap().data(), &[0.5, -1.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let g = [0.3f32, -2.0, 1e-3];
        let mut s = store(&[0.0; 3], Some(&g));
        let mut adam = Adam::new(cfg.clone(), &s);
        adam.step(&mut s).unwrap();
        // closed form after one step: m_hat = g, v_hat = g^2
        for (w, &gi) in s.by_name("w").unwrap().data().iter().zip(&g) {
            let expected = -(cfg.lr as f64) * gi as f64 / ((gi as f64).abs() + cfg.epsilon as f64);
            assert!((*w as f64 - expected).abs() < 1e-7, "{w} vs {expected}");
        }
    }

    #[test]
    fn warmup_is_linear_then_flat() {
        let s = store(&[0.0], None);
        let adam = Adam::new(
            AdamConfig {
                lr: 1.0,
                warmup_steps: 10,
                ..AdamConfig::default()
            },
            &s,
        );
        assert_eq!(adam.lr_at(5), 0.5);
        assert_eq!(adam.lr_at(10), 1.0);
        assert_eq!(adam.lr_at(50), 1.0);
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut s = store(&[1.0], None);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        assert!(matches!(adam.step(&mut s), Err(NumericError::Contract(_))));
        assert_eq!(adam.step_count(), 0);
    }
}
