//! Browser bindings for a few engine operations. Every function returns a
//! JSON string so that the page needs no generated type glue.

use privclean_core::accountant::{analyze_loss, AccountantMode};
use privclean_core::mechanisms::{noise_down, sample_laplace, CostPath, Mechanism, Tolerance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurvePoint {
    pub alpha: f64,
    pub lm: f64,
    pub lcm: f64,
    pub ltm: f64,
    pub lcmmp: f64,
}

/// Worst-case epsilon of each translator for `points` log-spaced alphas
/// between `alpha_min` and `alpha_max`.
pub fn translation_curve(
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
    beta: f64,
    formulas: usize,
    k: usize,
) -> privclean_core::Result<Vec<CurvePoint>> {
    let steps = points.saturating_sub(1);
    let ratio = (alpha_max / alpha_min).ln();
    (0..points)
        .map(|i| {
            let alpha = alpha_min * (ratio * i as f64 / steps.max(1) as f64).exp();
            let tol = Tolerance::new(alpha, beta)?;
            let eps = |m: Mechanism| m.preview(&tol, 1).map(|r| r.epsilon(CostPath::WorstCase));
            Ok(CurvePoint {
                alpha,
                lm: eps(Mechanism::Laplace)?,
                lcm: eps(Mechanism::Comparison)?,
                ltm: eps(Mechanism::TopK {
                    components: formulas,
                    k,
                })?,
                lcmmp: eps(Mechanism::MultiPoking { steps: 5 })?,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u32>,
    /// Expected count per bin under `Lap(1/eps_new)`.
    pub expected: Vec<f64>,
}

/// Draws `eta ~ Lap(1/eps)`, moves each draw down to `eps_new`, and bins
/// the result over `[-range, range]`.
pub fn noise_down_histogram(
    eps: f64,
    eps_new: f64,
    draws: usize,
    bins: usize,
    range: f64,
    seed: u64,
) -> privclean_core::Result<Histogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 2.0 * range / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| -range + i as f64 * width).collect();
    let mut counts = vec![0u32; bins];
    for _ in 0..draws {
        let eta = sample_laplace(1.0 / eps, &mut rng)?;
        let x = noise_down(eta, eps, eps_new, &mut rng)?;
        let bin = ((x + range) / width).floor();
        if bin >= 0.0 && (bin as usize) < bins {
            counts[bin as usize] += 1;
        }
    }
    let cdf = |x: f64| {
        if x < 0.0 {
            0.5 * (x * eps_new).exp()
        } else {
            1.0 - 0.5 * (-x * eps_new).exp()
        }
    };
    let expected = edges
        .windows(2)
        .map(|w| draws as f64 * (cdf(w[1]) - cdf(w[0])))
        .collect();
    Ok(Histogram {
        edges,
        counts,
        expected,
    })
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Contrast {
    pub queries: usize,
    pub sequential: f64,
    pub moments: f64,
}

/// Total loss of `queries` identical Laplace counts at unit-sensitivity
/// scale `scale`, under both accountants.
pub fn accountant_contrast(
    queries: usize,
    scale: f64,
    delta: f64,
) -> privclean_core::Result<Contrast> {
    // alpha = scale * ln(1/beta) gives exactly this scale.
    let tol = Tolerance::with_default_beta(scale * 15.0)?;
    let records = vec![Mechanism::Laplace.preview(&tol, 1)?; queries];
    Ok(Contrast {
        queries,
        sequential: analyze_loss(&records, delta, &AccountantMode::Sequential)?,
        moments: analyze_loss(&records, delta, &AccountantMode::moments())?,
    })
}

fn to_js<T: Serialize>(r: privclean_core::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = translationCurve)]
pub fn translation_curve_js(
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
    beta: f64,
    formulas: usize,
    k: usize,
) -> Result<String, JsError> {
    to_js(translation_curve(
        alpha_min, alpha_max, points, beta, formulas, k,
    ))
}

#[wasm_bindgen(js_name = noiseDownHistogram)]
pub fn noise_down_histogram_js(
    eps: f64,
    eps_new: f64,
    draws: usize,
    bins: usize,
    range: f64,
    seed: u32,
) -> Result<String, JsError> {
    to_js(noise_down_histogram(
        eps,
        eps_new,
        draws,
        bins,
        range,
        seed as u64,
    ))
}

#[wasm_bindgen(js_name = accountantContrast)]
pub fn accountant_contrast_js(queries: usize, scale: f64, delta: f64) -> Result<String, JsError> {
    to_js(accountant_contrast(queries, scale, delta))
}
