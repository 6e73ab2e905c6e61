//! Adam and rectified Adam (RAdam).
//!
//! Adam keeps exponential moving averages of the gradient and its square and applies the
//! bias-corrected update `θ ← θ − lr · m̂ / (√v̂ + ε)`.
//!
//! RAdam additionally tracks the length of the approximated simple moving average,
//! `ρ_t = ρ_∞ − 2 t β₂ᵗ / (1 − β₂ᵗ)` with `ρ_∞ = 2 / (1 − β₂) − 1`. While `ρ_t ≤ 4` the
//! variance of the adaptive learning rate is intractable and the step falls back to
//! un-adapted momentum `θ ← θ − lr · m̂`; afterwards the adaptive step is scaled by
//! `r_t = √( (ρ_t − 4)(ρ_t − 2) ρ_∞ / ((ρ_∞ − 4)(ρ_∞ − 2) ρ_t) )`.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    #[serde(rename = "radam")]
    RAdam,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::RAdam => "radam",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "radam" => Ok(Self::RAdam),
            _ => Err(Error::Invalid(format!("unknown optimizer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("optimizer hyperparameters {self:?}")))
        }
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step_count: u64,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, param: &Tensor) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: Tensor::zeros(param.shape()),
            second_moment: Tensor::zeros(param.shape()),
        }
    }

    /// Dispatches on `config.kind`.
    pub fn step(&mut self, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        match self.config.kind {
            OptimizerKind::Adam => adam_step(param, grad, self),
            OptimizerKind::RAdam => radam_step(param, grad, self),
        }
    }

    fn update_moments(&mut self, param: &Tensor, grad: &Tensor) -> Result<()> {
        if !grad.same_shape(param) || !self.first_moment.same_shape(param) {
            return Err(Error::dim(format!(
                "optimizer: param {:?}, grad {:?}, moments {:?}",
                param.shape(),
                grad.shape(),
                self.first_moment.shape()
            )));
        }
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        for ((m, v), g) in self
            .first_moment
            .data_mut()
            .iter_mut()
            .zip(self.second_moment.data_mut().iter_mut())
            .zip(grad.data())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
        self.step_count += 1;
        Ok(())
    }
}

fn require(state: &OptimizerState, kind: OptimizerKind) -> Result<()> {
    if state.config.kind != kind {
        return Err(Error::Invalid(format!(
            "optimizer state is {:?}, expected {kind:?}",
            state.config.kind
        )));
    }
    Ok(())
}

pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut OptimizerState) -> Result<()> {
    require(state, OptimizerKind::Adam)?;
    state.update_moments(param, grad)?;
    let c = state.config;
    let t = state.step_count as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for ((p, m), v) in param
        .data_mut()
        .iter_mut()
        .zip(state.first_moment.data())
        .zip(state.second_moment.data())
    {
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        let denom = v_hat.sqrt() + c.epsilon;
        // m̂ = 0 with ε = 0 would be 0/0
        if m_hat != 0.0 {
            *p -= c.learning_rate * m_hat / denom;
        }
    }
    Ok(())
}

/// `ρ_t` for RAdam; `None` when the rectifier is intractable (`ρ_t ≤ 4`), otherwise `r_t`.
pub fn radam_rectifier(beta2: f64, t: u64) -> Option<f64> {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powi(t as i32);
    let rho_t = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
    if rho_t <= 4.0 {
        return None;
    }
    let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
        / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
        .sqrt();
    Some(r)
}

pub fn radam_step(param: &mut Tensor, grad: &Tensor, state: &mut OptimizerState) -> Result<()> {
    require(state, OptimizerKind::RAdam)?;
    state.update_moments(param, grad)?;
    let c = state.config;
    let t = state.step_count;
    let bc1 = 1.0 - c.beta1.powi(t as i32);
    let bc2 = 1.0 - c.beta2.powi(t as i32);
    let rect = radam_rectifier(c.beta2, t);
    for ((p, m), v) in param
        .data_mut()
        .iter_mut()
        .zip(state.first_moment.data())
        .zip(state.second_moment.data())
    {
        let m_hat = m / bc1;
        if m_hat == 0.0 {
            continue;
        }
        match rect {
            None => *p -= c.learning_rate * m_hat,
            Some(r) => {
                let v_hat = v / bc2;
                *p -= c.learning_rate * r * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(kind: OptimizerKind, lr: f64, eps: f64, p: &Tensor) -> OptimizerState {
        let mut cfg = OptimizerConfig::new(kind, lr);
        cfg.epsilon = eps;
        OptimizerState::new(cfg, p)
    }

    #[test]
    fn adam_first_step_is_sign_step() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let mut s = state(OptimizerKind::Adam, 0.1, 0.0, &p);
        adam_step(&mut p, &Tensor::vector(vec![1.0, -3.0, 0.25]), &mut s).unwrap();
        assert_eq!(p.data(), &[0.9, -1.9, 0.4]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for kind in [OptimizerKind::Adam, OptimizerKind::RAdam] {
            let mut p = Tensor::vector(vec![1.0, -2.0]);
            let mut s = state(kind, 0.1, 1e-8, &p);
            for _ in 0..10 {
                s.step(&mut p, &Tensor::zeros(&[2])).unwrap();
            }
            assert_eq!(p.data(), &[1.0, -2.0]);
            assert_eq!(s.step_count, 10);
        }
    }

    #[test]
    fn adam_two_steps_on_square() {
        // f(θ) = θ², g = 2θ; hand-unrolled recurrence.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut p = Tensor::scalar(1.0);
        let mut s = state(OptimizerKind::Adam, lr, eps, &p);
        let mut theta = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 2.0 * theta;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
            let grad = Tensor::scalar(2.0 * p.data()[0]);
            adam_step(&mut p, &grad, &mut s).unwrap();
            assert!((p.data()[0] - theta).abs() < 1e-12);
        }
        // θ₁ = 0.9 (sign step), θ₂ computed above
        assert!((theta - 0.8).abs() < 1e-3);
    }

    #[test]
    fn radam_first_step_momentum() {
        let mut p = Tensor::scalar(1.0);
        let mut s = state(OptimizerKind::RAdam, 0.1, 1e-8, &p);
        radam_step(&mut p, &Tensor::scalar(1.0), &mut s).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn radam_rectified_step_matches_hand_formula() {
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let mut p = Tensor::scalar(0.5);
        let mut s = state(OptimizerKind::RAdam, lr, eps, &p);
        let grads = [0.3, -0.1, 0.2, 0.05, 0.4, -0.2, 0.1, 0.3];
        let mut theta = 0.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let mut saw_rectified = false;
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let rho_t = rho_inf - 2.0 * t as f64 * b2.powi(t) / (1.0 - b2.powi(t));
            if rho_t > 4.0 {
                saw_rectified = true;
                let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                    / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                    .sqrt();
                let vh = v / (1.0 - b2.powi(t));
                theta -= lr * r * mh / (vh.sqrt() + eps);
            } else {
                theta -= lr * mh;
            }
            radam_step(&mut p, &Tensor::scalar(*g), &mut s).unwrap();
            assert!((p.data()[0] - theta).abs() < 1e-12, "step {t}");
        }
        assert!(saw_rectified);
        assert!(radam_rectifier(b2, 4).is_none());
        assert!(radam_rectifier(b2, 5).is_some());
    }

    #[test]
    fn shape_and_kind_errors() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut s = state(OptimizerKind::Adam, 0.1, 0.0, &p);
        assert!(adam_step(&mut p, &Tensor::zeros(&[3]), &mut s).is_err());
        assert!(radam_step(&mut p, &Tensor::zeros(&[2]), &mut s).is_err());
        assert_eq!(s.step_count, 0);
    }
}
