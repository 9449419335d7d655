use rand::Rng;

use super::laplace::sample_exponential;
use crate::error::{invalid, Result};

/// Resamples Laplace noise to a tighter privacy level.
///
/// Given `eta ~ Lap(1/eps)`, returns a draw whose marginal is
/// `Lap(1/eps_new)` and that is correlated with `eta` so that releasing both
/// costs only `eps_new`. The conditional law is a four-part mixture: keep
/// `eta`; a draw of opposite sign; a draw in `[0, |eta|]`; a draw beyond
/// `|eta|`.
pub fn noise_down<R: Rng + ?Sized>(eta: f64, eps: f64, eps_new: f64, rng: &mut R) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("old epsilon must be positive, got {eps}")));
    }
    if !(eps_new > eps && eps_new.is_finite()) {
        return Err(invalid(format!(
            "new epsilon {eps_new} must exceed old epsilon {eps}"
        )));
    }
    let gap = eps_new - eps;
    let sum = eps_new + eps;
    let mag = eta.abs();
    let decay = (-gap * mag).exp();
    let one_minus_decay = -(-gap * mag).exp_m1();

    let keep = eps / eps_new * decay;
    let flip = gap / (2.0 * eps_new);
    let inner = sum / (2.0 * eps_new) * one_minus_decay;

    let sign = if eta < 0.0 { -1.0 } else { 1.0 };
    let p: f64 = rng.random();
    if p <= keep {
        return Ok(eta);
    }
    let z = if p <= keep + flip {
        // density ∝ exp(sum·z) on z <= 0
        -sample_exponential(sum, rng)
    } else if p <= keep + flip + inner {
        // density ∝ exp(-gap·z) on [0, |eta|], by inverse CDF
        let u: f64 = rng.random();
        -(-u * one_minus_decay).ln_1p() / gap
    } else {
        // density ∝ exp(-sum·z) on z >= |eta|
        mag + sample_exponential(sum, rng)
    };
    Ok(sign * z)
}
