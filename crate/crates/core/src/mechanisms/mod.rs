//! Tolerance-to-privacy translation.
//!
//! Each query type comes with an `(alpha, beta)` accuracy contract. The
//! translators here pick the least-private Laplace mechanism that still
//! honors it and report what was spent as a [`MechanismRecord`].

mod laplace;
mod noise_down;
mod run;
mod translate;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use laplace::{sample_laplace, Laplace};
pub use noise_down::noise_down;
pub use run::{run_lcm, run_lcmmp, run_lcmp, run_lm, run_ltm, Comparison, Mechanism};
pub use translate::{
    derived_lcc_tolerance, derived_lct_tolerance, lcm_scale, lcmmp_max_epsilon, lcmp_epsilons,
    lm_scale, ltm_scale, translate_lcm, translate_lm, translate_ltm,
};

/// `ln(1/beta)` used when a request does not set beta.
pub const DEFAULT_LN_INV_BETA: f64 = 15.0;

/// `e^-15`
pub fn default_beta() -> f64 {
    (-DEFAULT_LN_INV_BETA).exp()
}

/// `(alpha, beta)` accuracy requirement: the answer misses by `alpha` or
/// more with probability at most `beta`. `alpha` is in count units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub alpha: f64,
    pub beta: f64,
}

impl Tolerance {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn with_default_beta(alpha: f64) -> Result<Self> {
        Self::new(alpha, default_beta())
    }

    /// Exact for the default beta, so that e.g. `alpha = 150` spends
    /// exactly `0.1` rather than one ulp more.
    pub fn ln_inv_beta(&self) -> f64 {
        if self.beta == default_beta() {
            DEFAULT_LN_INV_BETA
        } else {
            -self.beta.ln()
        }
    }
}

/// One Laplace noise draw of scale `scale` on a query of the given
/// sensitivity; `epsilon = sensitivity / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSpec {
    pub scale: f64,
    pub epsilon: f64,
}

impl LaplaceSpec {
    pub fn new(scale: f64, sensitivity: u32) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!(
                "noise scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            scale,
            epsilon: sensitivity as f64 / scale,
        })
    }

    /// Scale normalized to sensitivity one, `1 / epsilon`.
    pub fn unit_scale(&self) -> f64 {
        1.0 / self.epsilon
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MechanismKind {
    /// Laplace mechanism for counts.
    Lm,
    /// Laplace comparison mechanism.
    Lcm,
    /// Laplace top-k mechanism.
    Ltm,
    /// Comparison with a single cheap poke before escalating.
    Lcmp,
    /// Comparison with repeated pokes over correlated noise.
    Lcmmp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MechanismMeta {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    /// Poke index at which a multi-poking run stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_at: Option<u32>,
}

/// What a mechanism run costs. `worst_case` covers every execution path and
/// gates admission; `executed` is the path actually taken and is what the
/// ledger charges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MechanismRecord {
    pub kind: MechanismKind,
    pub worst_case: Vec<LaplaceSpec>,
    pub executed: Vec<LaplaceSpec>,
    /// Number of i.i.d. copies of each spec (`L` for top-k, 1 otherwise).
    pub components: u32,
    pub meta: MechanismMeta,
}

/// Which spec list of a record to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostPath {
    WorstCase,
    Executed,
}

impl MechanismRecord {
    pub fn specs(&self, path: CostPath) -> &[LaplaceSpec] {
        match path {
            CostPath::WorstCase => &self.worst_case,
            CostPath::Executed => &self.executed,
        }
    }

    /// Pure-DP epsilon of the record under basic composition. Top-k counts
    /// `k / b` rather than one unit per component.
    pub fn epsilon(&self, path: CostPath) -> f64 {
        let per_spec = match self.kind {
            MechanismKind::Ltm => self.meta.k.unwrap_or(1) as f64,
            _ => 1.0,
        };
        self.specs(path).iter().map(|s| s.epsilon * per_spec).sum()
    }

    /// The record as it would be charged before running: executed path set
    /// to the worst case.
    pub fn as_preview(&self) -> Self {
        Self {
            executed: self.worst_case.clone(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = "<")]
    Less,
    #[serde(rename = ">=")]
    GreaterEq,
    #[serde(rename = "<=")]
    LessEq,
}

impl Direction {
    /// Sign that maps `q - c` onto the `>` form.
    pub fn orientation(self) -> f64 {
        match self {
            Direction::Greater | Direction::GreaterEq => 1.0,
            Direction::Less | Direction::LessEq => -1.0,
        }
    }

    pub fn holds(self, count: f64, threshold: f64) -> bool {
        match self {
            Direction::Greater => count > threshold,
            Direction::Less => count < threshold,
            Direction::GreaterEq => count >= threshold,
            Direction::LessEq => count <= threshold,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    Largest,
    Smallest,
}
