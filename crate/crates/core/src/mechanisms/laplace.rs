use rand::distr::Distribution;
use rand::Rng;

use crate::error::{invalid, Result};

/// Zero-mean Laplace distribution with scale `b`, density
/// `exp(-|z|/b) / 2b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Laplace {
    scale: f64,
}

impl Laplace {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!(
                "Laplace scale must be positive, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Draws from `Exp(rate)`; `1 - U` keeps the log argument in `(0, 1]`.
pub(crate) fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

impl Distribution<f64> for Laplace {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let magnitude = sample_exponential(1.0 / self.scale, rng);
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    Ok(Laplace::new(scale)?.sample(rng))
}
