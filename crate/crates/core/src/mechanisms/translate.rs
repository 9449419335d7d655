//! Closed-form tolerance translations. All scales are in count units and
//! do not depend on the data.

use super::{LaplaceSpec, Tolerance};
use crate::error::{invalid, Result};

/// Laplace scale for counts: `alpha / ln(1/beta)`.
pub fn lm_scale(tol: &Tolerance) -> f64 {
    tol.alpha / tol.ln_inv_beta()
}

pub fn translate_lm(tol: &Tolerance, sensitivity: u32) -> Result<LaplaceSpec> {
    LaplaceSpec::new(lm_scale(tol), sensitivity)
}

/// Comparison scale: `alpha / ln(1/(2 beta))`; needs `beta < 1/2`.
pub fn lcm_scale(tol: &Tolerance) -> Result<f64> {
    if tol.beta >= 0.5 {
        return Err(invalid("comparison tolerance needs beta < 1/2"));
    }
    Ok(tol.alpha / (1.0 / (2.0 * tol.beta)).ln())
}

pub fn translate_lcm(tol: &Tolerance, sensitivity: u32) -> Result<LaplaceSpec> {
    LaplaceSpec::new(lcm_scale(tol)?, sensitivity)
}

/// Top-k scale over `l` counts: `alpha / (2 (ln L + ln(k/beta)))`.
pub fn ltm_scale(tol: &Tolerance, l: usize, k: usize) -> Result<f64> {
    if k == 0 || k > l {
        return Err(invalid(format!(
            "top-k needs 1 <= k <= L, got k={k}, L={l}"
        )));
    }
    let denom = 2.0 * ((l as f64).ln() + (k as f64 / tol.beta).ln());
    Ok(tol.alpha / denom)
}

/// Per-component spec of the top-k mechanism. Its epsilon is `k` times the
/// spec's.
pub fn translate_ltm(tol: &Tolerance, l: usize, k: usize, sensitivity: u32) -> Result<LaplaceSpec> {
    LaplaceSpec::new(ltm_scale(tol, l, k)?, sensitivity)
}

/// `(eps_0, eps_escalation)` of the single-poke comparison: the poke costs
/// `f · eps_LCM`; escalation runs a comparison at `beta/2`.
pub fn lcmp_epsilons(tol: &Tolerance, fraction: f64, sensitivity: u32) -> Result<(f64, f64)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!(
            "poking fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let s = sensitivity as f64;
    let eps_lcm = s / lcm_scale(tol)?;
    let escalation = Tolerance::new(tol.alpha, tol.beta / 2.0)?;
    Ok((fraction * eps_lcm, s / lcm_scale(&escalation)?))
}

/// `eps_max = ln(m / (2 beta)) / alpha` (times sensitivity).
pub fn lcmmp_max_epsilon(tol: &Tolerance, steps: u32, sensitivity: u32) -> Result<f64> {
    if steps < 2 {
        return Err(invalid(format!("multi-poking needs m >= 2, got {steps}")));
    }
    let log_term = (steps as f64 / (2.0 * tol.beta)).ln();
    if log_term <= 0.0 {
        return Err(invalid("multi-poking needs m / (2 beta) > 1"));
    }
    Ok(sensitivity as f64 * log_term / tol.alpha)
}

/// Tolerance actually achieved on a comparison answered by thresholding a
/// Laplace-mechanism count: `(1 - ln 2 / ln(1/beta)) alpha`.
pub fn derived_lcc_tolerance(tol: &Tolerance) -> Result<f64> {
    if tol.beta >= 0.5 {
        return Err(invalid("derived comparison tolerance needs beta < 1/2"));
    }
    Ok((1.0 - 2f64.ln() / tol.ln_inv_beta()) * tol.alpha)
}

/// Tolerance achieved on a top-k query answered from `l` Laplace-mechanism
/// counts: `(1 + 2 ln(L k) / ln(1/beta)) alpha`.
pub fn derived_lct_tolerance(tol: &Tolerance, l: usize, k: usize) -> Result<f64> {
    if l * k < 1 {
        return Err(invalid("derived top-k tolerance needs L·k >= 1"));
    }
    Ok((1.0 + 2.0 * ((l * k) as f64).ln() / tol.ln_inv_beta()) * tol.alpha)
}
