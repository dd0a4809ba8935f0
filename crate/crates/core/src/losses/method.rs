use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Baseline,
    Entropy,
    Skl,
    CodistillL1,
    CodistillSkl,
    CodistillCeIndependent,
    Combined,
    EnsembleDistill,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Entropy => "entropy",
            Self::Skl => "skl",
            Self::CodistillL1 => "codistill_l1",
            Self::CodistillSkl => "codistill_skl",
            Self::CodistillCeIndependent => "codistill_ce_independent",
            Self::Combined => "combined",
            Self::EnsembleDistill => "ensemble_distill",
        }
    }

    /// True for objectives that train two models together.
    pub fn is_two_model(self) -> bool {
        matches!(
            self,
            Self::CodistillL1 | Self::CodistillSkl | Self::CodistillCeIndependent | Self::Combined
        )
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    Entropy,
    Skl,
}

impl FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Self::Entropy),
            "skl" => Ok(Self::Skl),
            other => Err(Error::Usage(format!("unknown reg_kind {other:?} (expected entropy or skl)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampStyleSpec {
    Linear,
    Step,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_n_teachers() -> usize {
    2
}

fn default_stale_t() -> usize {
    1
}

fn default_reg_kind() -> RegKind {
    RegKind::Entropy
}

fn default_ramp() -> RampStyleSpec {
    RampStyleSpec::Linear
}

/// Training objective and its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSpec {
    pub kind: MethodKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    /// Ramp slope for β; defaults to saturating after 10% of training.
    #[serde(default)]
    pub ramp_c: Option<f64>,
    #[serde(default = "default_ramp")]
    pub ramp: RampStyleSpec,
    /// Start step for the step-style ramp.
    #[serde(default)]
    pub ramp_start: usize,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_n_teachers")]
    pub n_teachers: usize,
    /// Teacher staleness in steps for independent-update co-distillation.
    #[serde(default = "default_stale_t")]
    pub stale_t: usize,
    #[serde(default = "default_reg_kind")]
    pub reg_kind: RegKind,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self::new(MethodKind::Baseline)
    }
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            alpha: 0.0,
            beta: 0.0,
            ramp_c: None,
            ramp: default_ramp(),
            ramp_start: 0,
            top_k: None,
            temperature: default_temperature(),
            n_teachers: default_n_teachers(),
            stale_t: default_stale_t(),
            reg_kind: default_reg_kind(),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("method.alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("method.beta must be ≥ 0, got {}", self.beta));
        }
        if let Some(c) = self.ramp_c {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("method.ramp_c must be > 0, got {c}"));
            }
        }
        if let Some(t) = self.top_k {
            if t < 2 || t > k {
                return bad(format!("method.top_k must lie in [2, {k}], got {t}"));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!("method.temperature must be > 0, got {}", self.temperature));
        }
        if self.kind == MethodKind::EnsembleDistill && self.n_teachers < 2 {
            return bad(format!("method.n_teachers must be ≥ 2, got {}", self.n_teachers));
        }
        if self.stale_t < 1 {
            return bad("method.stale_t must be ≥ 1".into());
        }
        Ok(())
    }

    /// Training cost relative to one baseline run.
    pub fn train_cost(&self) -> usize {
        match self.kind {
            k if k.is_two_model() => 2,
            MethodKind::EnsembleDistill => self.n_teachers + 1,
            _ => 1,
        }
    }

    /// Short label such as `entropy(α=0.3)` for tables.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        match self.kind {
            MethodKind::Entropy | MethodKind::Skl => parts.push(format!("α={}", self.alpha)),
            MethodKind::CodistillL1 | MethodKind::CodistillSkl | MethodKind::CodistillCeIndependent => {
                parts.push(format!("β={}", self.beta))
            }
            MethodKind::Combined => {
                parts.push(format!("α={}", self.alpha));
                parts.push(format!("β={}", self.beta));
            }
            MethodKind::EnsembleDistill => {
                parts.push(format!("n={}", self.n_teachers));
                parts.push(format!("τ={}", self.temperature));
            }
            MethodKind::Baseline => {}
        }
        if let Some(k) = self.top_k {
            parts.push(format!("top{k}"));
        }
        if parts.is_empty() {
            self.kind.name().to_string()
        } else {
            format!("{}({})", self.kind, parts.join(","))
        }
    }
}
