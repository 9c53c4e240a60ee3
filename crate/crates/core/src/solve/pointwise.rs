//! Pointwise maximisation of `∫ u(φ) − α∫ φ q` over increasing `φ`: the
//! optimum picks, for each `x`, the level whose superdifferential contains
//! `α q(x)`.

use crate::error::{Error, Result};
use crate::market::PricingKernel;
use crate::quantile::{ParametricPayoff, QuantilePayoff};
use crate::utility::UtilitySpec;

/// `argmax_{v ∈ [lo, hi]} u(v) − e^{ln_y}·v`, with the power families
/// solved in log space so that extreme slopes neither overflow nor
/// underflow prematurely.
pub(crate) fn argmax_log_slope(u: &UtilitySpec, ln_y: f64, lo: f64, hi: f64) -> f64 {
    match *u {
        UtilitySpec::PowerLoss { gamma } if hi <= 0.0 => {
            let v = -((ln_y - gamma.ln()) / (gamma - 1.0)).exp();
            v.clamp(lo, hi)
        }
        UtilitySpec::PowerGain { gamma } if lo >= 0.0 => {
            let v = ((ln_y - gamma.ln()) / (gamma - 1.0)).exp();
            v.clamp(lo, hi)
        }
        _ => {
            let y = ln_y.exp();
            if y == 0.0 {
                return hi;
            }
            if y == f64::INFINITY {
                return lo;
            }
            u.argmax_linear(y, lo, hi).unwrap_or(f64::NAN)
        }
    }
}

/// `φ*(x) = argmax_{v ∈ range} u(v) − α q(x) v` on `[a, b]`, zero outside.
/// Increasing in `x` because `q` decreases and the argmax decreases in the
/// slope.
pub fn pointwise_concave_solve<K: PricingKernel + Clone + 'static>(
    u: &UtilitySpec,
    k: &K,
    alpha: f64,
    a: f64,
    b: f64,
    range: (f64, f64),
) -> Result<QuantilePayoff> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("multiplier must be positive, got {alpha}")));
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::invalid("range", format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if !u.is_concave_on(lo, hi) {
        return Err(Error::NotConcave {
            utility: u.to_string(),
            lo,
            hi,
        });
    }
    let u = u.clone();
    let k = k.clone();
    let ln_alpha = alpha.ln();
    let label = format!("argmax {u} at multiplier {alpha}");
    let map = move |z: f64| argmax_log_slope(&u, ln_alpha + k.ln_q_normal(z), lo, hi);
    Ok(QuantilePayoff::Parametric(ParametricPayoff::from_score(map, a, b, label)?))
}
