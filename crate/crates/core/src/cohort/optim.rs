use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoders::EncoderParams;
use crate::error::{Error, Result};
use crate::numcore::{Gradients, Matrix};

/// Adam with fixed constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub steps: u64,
    pub first: BTreeMap<String, Matrix>,
    pub second: BTreeMap<String, Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Anchor,
    Target,
    /// Intermediate branch `m` of a cohort (`0 < m < M - 1`).
    Cohort(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub params: EncoderParams,
    pub optimizer: AdamState,
    pub role: Role,
}

impl Branch {
    pub fn new(params: EncoderParams, role: Role) -> Self {
        Branch {
            params,
            optimizer: AdamState::default(),
            role,
        }
    }
}

/// One Adam update of every parameter that has a gradient.
pub fn optimizer_step(branch: &mut Branch, grads: &Gradients, lr: f64, cfg: &AdamConfig) -> Result<()> {
    for (name, p) in branch.params.named() {
        let Some(g) = grads.get(name) else {
            continue;
        };
        if g.shape() != p.shape() {
            return Err(Error::shape(
                "optimizer_step",
                format!("gradient for `{name}` is {:?}, parameter is {:?}", g.shape(), p.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for `{name}`")));
        }
    }
    let st = &mut branch.optimizer;
    st.steps += 1;
    let t = st.steps as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (name, p) in branch.params.named_mut() {
        let Some(g) = grads.get(name) else {
            continue;
        };
        let (r, c) = g.shape();
        let m = st.first.entry(name.to_string()).or_insert_with(|| Matrix::zeros(r, c));
        let v = st.second.entry(name.to_string()).or_insert_with(|| Matrix::zeros(r, c));
        let moments = m.data_mut().iter_mut().zip(v.data_mut().iter_mut());
        for ((pk, &gk), (mk, vk)) in p.data_mut().iter_mut().zip(g.data()).zip(moments) {
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
            *pk -= lr * (*mk / c1) / ((*vk / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// `θ_a ← β θ_a + (1 − β) θ_t`, elementwise.
pub fn ema_update(anchor: &mut EncoderParams, target: &EncoderParams, beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("EMA beta must lie in [0, 1], got {beta}")));
    }
    if anchor.config != target.config {
        return Err(Error::shape("ema_update", "anchor and target encoders differ"));
    }
    let src = target.named();
    for ((_, a), (_, t)) in anchor.named_mut().into_iter().zip(src) {
        if a.shape() != t.shape() {
            return Err(Error::shape("ema_update", "parameter shapes differ"));
        }
        a.data_mut()
            .iter_mut()
            .zip(t.data())
            .for_each(|(x, &y)| *x = beta * *x + (1.0 - beta) * y);
    }
    Ok(())
}
