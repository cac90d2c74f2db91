use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamGroup};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Learning rate per parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLrs {
    pub trunk: f64,
    pub view_branch: f64,
    pub experts: f64,
}

impl GroupLrs {
    pub fn uniform(lr: f64) -> Self {
        Self {
            trunk: lr,
            view_branch: lr,
            experts: lr,
        }
    }

    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Trunk => self.trunk,
            ParamGroup::ViewBranch => self.view_branch,
            ParamGroup::Expert(_) => self.experts,
        }
    }
}

/// Adam moments for every parameter array, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub hyper: AdamConfig,
}

impl OptimState {
    pub fn new(params: &ModelParams, hyper: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            hyper,
        }
    }

    /// One bias-corrected Adam update. Groups whose rate is zero are left
    /// untouched, moments included.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &[Tensor],
        lrs: &GroupLrs,
    ) -> Result<()> {
        let groups = params.groups();
        let mut tensors = params.tensors_mut();
        if grads.len() != tensors.len() || self.m.len() != tensors.len() {
            return Err(Error::Contract(format!(
                "adam step over {} parameters with {} gradients and {} moments",
                tensors.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.hyper;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for (i, theta) in tensors.iter_mut().enumerate() {
            let g = &grads[i];
            if g.shape() != theta.shape() || self.m[i].shape() != theta.shape() {
                return Err(Error::Contract(format!(
                    "adam shape mismatch at parameter {i}: {:?} vs {:?}",
                    theta.shape(),
                    g.shape()
                )));
            }
            let lr = lrs.get(groups[i]);
            if lr == 0.0 {
                continue;
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((p, &g), m), v) in theta.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};

    fn small() -> Model {
        let mut cfg = ModelConfig::new(3, 2);
        cfg.trunk_widths = vec![4, 4];
        cfg.view_branch_widths = vec![2];
        cfg.expert_widths = vec![3];
        Model::init(cfg, 1).unwrap()
    }

    fn filled_grads(p: &ModelParams, value: f64) -> Vec<Tensor> {
        p.tensors()
            .iter()
            .map(|t| Tensor::filled(t.shape(), value))
            .collect()
    }

    #[test]
    fn first_step_closed_form() {
        let mut model = small();
        let before = model.params.clone();
        let mut st = OptimState::new(&model.params, AdamConfig::default());
        st.step(
            &mut model.params,
            &filled_grads(&before, 1.0),
            &GroupLrs::uniform(0.001),
        )
        .unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        for (a, b) in model.params.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut model = small();
        let before = model.params.clone();
        let mut st = OptimState::new(&model.params, AdamConfig::default());
        for _ in 0..5 {
            st.step(
                &mut model.params,
                &filled_grads(&before, 0.0),
                &GroupLrs::uniform(0.01),
            )
            .unwrap();
        }
        assert_eq!(model.params, before);
    }

    #[test]
    fn frozen_group_is_bitwise_unchanged() {
        let mut model = small();
        let before = model.params.clone();
        let mut st = OptimState::new(&model.params, AdamConfig::default());
        let lrs = GroupLrs {
            view_branch: 0.0,
            ..GroupLrs::uniform(0.01)
        };
        for _ in 0..10 {
            st.step(&mut model.params, &filled_grads(&before, 0.3), &lrs)
                .unwrap();
        }
        assert_eq!(model.params.view_branch, before.view_branch);
        assert_ne!(model.params.trunk, before.trunk);
    }

    #[test]
    fn huge_gradients_stay_finite() {
        let mut model = small();
        let g = filled_grads(&model.params, 1e6);
        let mut st = OptimState::new(&model.params, AdamConfig::default());
        for k in 0..20 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let g: Vec<Tensor> = g.iter().map(|t| t.map(|x| sign * x)).collect();
            st.step(&mut model.params, &g, &GroupLrs::uniform(2e-4))
                .unwrap();
        }
        assert!(model.params.tensors().iter().all(|t| t.all_finite()));
        assert!(st.v.iter().all(|t| t.data().iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut model = small();
        let mut st = OptimState::new(&model.params, AdamConfig::default());
        assert!(matches!(
            st.step(&mut model.params, &[], &GroupLrs::uniform(0.1)),
            Err(Error::Contract(_))
        ));
    }
}
