//! Soft-adaptive margins.
//!
//! A fixed margin `γ` can ask the target for more separation than is feasible:
//! scores live in `[-d_y, d_y]`, so a triplet gap lives in `[-d_x, d_x]` with
//! `d_x = 2 d_y`. The soft margin is a scaled logistic curve that equals `γ` deep
//! inside the range and falls to exactly 0 at the extreme, with sharpness
//! `ε = 2/γ` so that its slope at the extreme is -1 (the slope of the remaining
//! headroom `d_x - x`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin `γ` and its split into the positive part `γ1 = αγ` and the negative
/// part `γ2 = γ - αγ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginConfig {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            gamma: 0.2,
            alpha: 0.5,
        }
    }
}

impl MarginConfig {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        let cfg = MarginConfig { gamma, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("margin.gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "margin.alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn gamma1(&self) -> f64 {
        self.alpha * self.gamma
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma - self.alpha * self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftMarginConfig {
    /// Extreme of a relative gap.
    pub d_x: f64,
    /// Extreme of an absolute score.
    pub d_y: f64,
}

impl Default for SoftMarginConfig {
    fn default() -> Self {
        SoftMarginConfig { d_x: 2.0, d_y: 1.0 }
    }
}

impl SoftMarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_y.is_finite() && self.d_y > 0.0) || (self.d_x - 2.0 * self.d_y).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "soft margins need d_y > 0 and d_x = 2 d_y, got d_x={} d_y={}",
                self.d_x, self.d_y
            )));
        }
        Ok(())
    }

    /// `ε = 2 / margin`; matches the curve's slope to -1 at the extreme.
    pub fn sharpness(margin: f64) -> f64 {
        2.0 / margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginKind {
    /// Keyed on a relative gap `S_pos - S_neg` in `[-d_x, d_x]`, full margin `γ`.
    Relative,
    /// Keyed on a positive-pair score in `[-d_y, d_y]`, full margin `γ1`.
    AbsPos,
    /// Keyed on a negative-pair score in `[-d_y, d_y]`, full margin `γ2`; vanishes at `-d_y`.
    AbsNeg,
}

impl MarginKind {
    pub fn domain(self, soft: &SoftMarginConfig) -> (f64, f64) {
        let d = match self {
            MarginKind::Relative => soft.d_x,
            MarginKind::AbsPos | MarginKind::AbsNeg => soft.d_y,
        };
        (-d, d)
    }

    pub fn full_margin(self, cfg: &MarginConfig) -> f64 {
        match self {
            MarginKind::Relative => cfg.gamma,
            MarginKind::AbsPos => cfg.gamma1(),
            MarginKind::AbsNeg => cfg.gamma2(),
        }
    }
}

/// Soft margin at `x`. Inputs outside the kind's domain are clamped to it.
pub fn gamma_sa(x: f64, kind: MarginKind, cfg: &MarginConfig, soft: &SoftMarginConfig) -> f64 {
    let (lo, hi) = kind.domain(soft);
    gamma_sa_unclamped(x.clamp(lo, hi), kind, cfg, soft)
}

/// Same curve without clamping; only meaningful inside the domain.
pub fn gamma_sa_unclamped(x: f64, kind: MarginKind, cfg: &MarginConfig, soft: &SoftMarginConfig) -> f64 {
    let g = kind.full_margin(cfg);
    let eps = SoftMarginConfig::sharpness(g);
    let exponent = match kind {
        MarginKind::Relative => eps * (x - soft.d_x),
        MarginKind::AbsPos => eps * (x - soft.d_y),
        MarginKind::AbsNeg => -eps * (x + soft.d_y),
    };
    2.0 * g / (1.0 + exponent.exp()) - g
}

/// `γ - γ^SA(x)`, evaluated without cancellation. Always strictly positive for
/// finite `x`, even where `γ^SA(x)` itself rounds to `γ`.
pub fn margin_deficit(x: f64, kind: MarginKind, cfg: &MarginConfig, soft: &SoftMarginConfig) -> f64 {
    let (lo, hi) = kind.domain(soft);
    let x = x.clamp(lo, hi);
    let g = kind.full_margin(cfg);
    let eps = SoftMarginConfig::sharpness(g);
    let exponent = match kind {
        MarginKind::Relative => eps * (x - soft.d_x),
        MarginKind::AbsPos => eps * (x - soft.d_y),
        MarginKind::AbsNeg => -eps * (x + soft.d_y),
    };
    // γ - (2γ/(1+e^u) - γ) = 2γ e^u / (1 + e^u) = 2γ / (1 + e^-u)
    2.0 * g / (1.0 + (-exponent).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: MarginConfig = MarginConfig {
        gamma: 0.2,
        alpha: 0.5,
    };
    const SOFT: SoftMarginConfig = SoftMarginConfig { d_x: 2.0, d_y: 1.0 };

    #[test]
    fn relative_vanishes_at_extreme() {
        assert_eq!(gamma_sa(2.0, MarginKind::Relative, &CFG, &SOFT), 0.0);
    }

    #[test]
    fn abs_neg_vanishes_at_negative_extreme() {
        assert_eq!(gamma_sa(-1.0, MarginKind::AbsNeg, &CFG, &SOFT), 0.0);
    }

    #[test]
    fn relative_at_one_point_eight() {
        // 0.4 / (1 + e^{-2}) - 0.2
        let want = 0.4 / (1.0 + (-2.0f64).exp()) - 0.2;
        let got = gamma_sa(1.8, MarginKind::Relative, &CFG, &SOFT);
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.152318).abs() < 1e-6);
    }

    #[test]
    fn relative_at_zero_is_nearly_full() {
        let got = gamma_sa(0.0, MarginKind::Relative, &CFG, &SOFT);
        assert!((got - 0.2).abs() < 1e-8);
    }

    #[test]
    fn clamps_out_of_domain() {
        assert_eq!(
            gamma_sa(2.5, MarginKind::Relative, &CFG, &SOFT),
            gamma_sa(2.0, MarginKind::Relative, &CFG, &SOFT)
        );
        assert_eq!(
            gamma_sa(-1.3, MarginKind::AbsNeg, &CFG, &SOFT),
            gamma_sa(-1.0, MarginKind::AbsNeg, &CFG, &SOFT)
        );
    }

    #[test]
    fn deficit_is_consistent_and_positive() {
        for k in 0..=100 {
            let x = -2.0 + 4.0 * k as f64 / 100.0;
            let v = gamma_sa(x, MarginKind::Relative, &CFG, &SOFT);
            let d = margin_deficit(x, MarginKind::Relative, &CFG, &SOFT);
            assert!(d > 0.0);
            assert!((v + d - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        assert!(MarginConfig::new(0.0, 0.5).is_err());
        assert!(MarginConfig::new(0.2, 1.0).is_err());
        let c = MarginConfig::new(0.2, 0.3).unwrap();
        assert!((c.gamma1() + c.gamma2() - 0.2).abs() < 1e-16);
        assert!(SoftMarginConfig { d_x: 3.0, d_y: 1.0 }.validate().is_err());
    }
}
