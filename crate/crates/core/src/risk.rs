//! Price, expected utility, value at risk and expected shortfall of payoffs
//! in quantile form, and constraint checks.
//!
//! Expected shortfall is the lower-tail average `(1/p)∫₀^p φ`, constrained
//! from below by a floor `L`. The loss-convention figure is its negation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{extended_f64, extended_f64_opt};
use crate::market::PricingKernel;
use crate::quadrature::normal_score_integral;
use crate::quantile::{ParametricPayoff, QuantilePayoff};
use crate::special::{exact_diff, norm_ln_pdf, norm_ppf, Compensated};
use crate::utility::UtilitySpec;

/// Tolerance used by [`check_feasible`] for its pass/fail flags.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Constraint {
    /// `(1/p)∫₀^p φ ≥ level`.
    ExpectedShortfall { p: f64, level: f64 },
    /// `∫₀¹ u(φ) ≥ level` with `level < 0`.
    UtilityFloor { utility: UtilitySpec, level: f64 },
    None,
}

/// Budget plus at most one risk constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub budget: f64,
    pub constraint: Constraint,
}

impl RiskSpec {
    pub fn new(budget: f64, constraint: Constraint) -> Result<Self> {
        let spec = Self { budget, constraint };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.budget.is_finite() {
            return Err(Error::invalid("budget", "must be finite"));
        }
        match &self.constraint {
            Constraint::ExpectedShortfall { p, level } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::invalid("p", format!("must lie in (0, 1), got {p}")));
                }
                if !level.is_finite() {
                    return Err(Error::invalid("L", "must be finite"));
                }
            }
            Constraint::UtilityFloor { utility, level } => {
                utility.validate()?;
                if !(*level < 0.0) {
                    return Err(Error::invalid("L", format!("utility floors must be negative, got {level}")));
                }
            }
            Constraint::None => {}
        }
        Ok(())
    }
}

/// Price at time 0 (`discounted`) and in forward units (`undiscounted`,
/// `∫₀¹ φ q`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    #[serde(with = "extended_f64")]
    pub discounted: f64,
    #[serde(with = "extended_f64")]
    pub undiscounted: f64,
}

fn score_range(lo: f64, hi: f64) -> (f64, f64) {
    (norm_ppf(lo), norm_ppf(hi))
}

/// `∫ h(φ(x)) w(x) dx` over the parametric support, split into positive and
/// negative parts so that each side can diverge independently.
fn parametric_parts(
    phi: &ParametricPayoff,
    lo: f64,
    hi: f64,
    h: impl Fn(f64) -> f64,
    ln_weight: impl Fn(f64) -> f64,
) -> Result<(f64, f64)> {
    let part = |sign: f64| -> Result<f64> {
        let mut total = 0.0;
        for (a, b) in phi.pieces(lo, hi) {
            let (za, zb) = score_range(a, b);
            total += normal_score_integral(
                |z| {
                    let v = sign * h(phi.at_score(z));
                    if v <= 0.0 {
                        0.0
                    } else {
                        v * (ln_weight(z) + norm_ln_pdf(z)).exp()
                    }
                },
                za,
                zb,
            )?;
        }
        Ok(total)
    };
    Ok((part(1.0)?, part(-1.0)?))
}

fn combine(pos: f64, neg: f64, undefined: Error) -> Result<f64> {
    match (pos.is_finite(), neg.is_finite()) {
        (true, true) => Ok(pos - neg),
        (false, true) => Ok(f64::INFINITY),
        (true, false) => Ok(f64::NEG_INFINITY),
        (false, false) => Err(undefined),
    }
}

/// `∫₀¹ φ q` in forward units and discounted by the kernel's compounding.
/// `−inf` is allowed; `+inf` means the payoff cannot be bought.
pub fn price<K: PricingKernel + ?Sized>(phi: &QuantilePayoff, k: &K) -> Result<Price> {
    let undiscounted = match phi {
        QuantilePayoff::Parametric(p) => {
            let (lo, hi) = p.support();
            let (pos, neg) = parametric_parts(p, lo, hi, |v| v, |z| k.ln_q_normal(z))?;
            if !pos.is_finite() && neg.is_finite() {
                return Err(Error::UnboundedPrice);
            }
            combine(pos, neg, Error::UndefinedPrice)?
        }
        _ => {
            let mut acc = Compensated::new();
            for (lo, hi, v) in phi.segments().expect("piecewise payoff") {
                if hi > lo && v != 0.0 {
                    acc.add_product(v, k.integral(lo, hi)?);
                }
            }
            acc.value()
        }
    };
    Ok(Price {
        discounted: undiscounted / k.compounding(),
        undiscounted,
    })
}

/// `∫₀¹ u(φ(x)) dx`; for two-piece payoffs exactly `αu(k2) + (1−α)u(k1)`.
pub fn expected_utility(phi: &QuantilePayoff, u: &UtilitySpec) -> Result<f64> {
    match phi {
        QuantilePayoff::TwoPiece { alpha, k2, k1 } => Ok(alpha * u.evaluate(*k2) + (1.0 - alpha) * u.evaluate(*k1)),
        QuantilePayoff::Step(_) => {
            let mut acc = Compensated::new();
            for (lo, hi, v) in phi.segments().expect("piecewise payoff") {
                acc.add_product(hi - lo, u.evaluate(v));
            }
            Ok(acc.value())
        }
        QuantilePayoff::Parametric(p) => {
            let (lo, hi) = p.support();
            let (pos, neg) = parametric_parts(p, lo, hi, |v| u.evaluate(v), |_| 0.0)?;
            let inside = combine(pos, neg, Error::UndefinedExpectation("expected utility"))?;
            Ok(inside + (1.0 - (hi - lo)) * u.evaluate(0.0))
        }
    }
}

fn check_level(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "p",
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// Lower-tail average `(1/p)∫₀^p φ`. Piecewise payoffs are summed in
/// double-double so that the binding two-piece construction reproduces its
/// floor to the last few ulps.
pub fn expected_shortfall_avg(phi: &QuantilePayoff, p: f64) -> Result<f64> {
    check_level(p)?;
    match phi {
        QuantilePayoff::Parametric(f) => {
            let (lo, hi) = f.support();
            if lo >= p {
                return Ok(0.0);
            }
            let (pos, neg) = parametric_parts(f, lo, hi.min(p), |v| v, |_| 0.0)?;
            Ok(combine(pos, neg, Error::UndefinedExpectation("expected shortfall"))? / p)
        }
        _ => {
            let mut acc = Compensated::new();
            for (lo, hi, v) in phi.segments().expect("piecewise payoff") {
                let top = hi.min(p);
                if top <= lo {
                    break;
                }
                let (d, e) = exact_diff(top, lo);
                acc.add_product(d, v);
                acc.add_product(e, v);
            }
            Ok(acc.value() / p)
        }
    }
}

/// `φ(p)`, with the right-segment value at a jump.
pub fn value_at_risk(phi: &QuantilePayoff, p: f64) -> Result<f64> {
    check_level(p)?;
    Ok(phi.evaluate(p))
}

/// Signed slacks of both constraints; positive means room to spare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub price: Price,
    #[serde(with = "extended_f64")]
    pub budget_slack: f64,
    #[serde(with = "extended_f64_opt")]
    pub risk_value: Option<f64>,
    #[serde(with = "extended_f64_opt")]
    pub risk_slack: Option<f64>,
    pub price_ok: bool,
    pub risk_ok: bool,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.price_ok && self.risk_ok
    }
}

/// Evaluates the budget (in time-0 money) and the risk constraint.
pub fn check_feasible<K: PricingKernel + ?Sized>(phi: &QuantilePayoff, k: &K, spec: &RiskSpec) -> Result<FeasibilityReport> {
    let price = price(phi, k)?;
    let budget_slack = spec.budget - price.discounted;
    let risk_value = match &spec.constraint {
        Constraint::ExpectedShortfall { p, .. } => Some(expected_shortfall_avg(phi, *p)?),
        Constraint::UtilityFloor { utility, .. } => Some(expected_utility(phi, utility)?),
        Constraint::None => None,
    };
    let risk_slack = match &spec.constraint {
        Constraint::ExpectedShortfall { level, .. } | Constraint::UtilityFloor { level, .. } => {
            risk_value.map(|v| v - level)
        }
        Constraint::None => None,
    };
    Ok(FeasibilityReport {
        price,
        budget_slack,
        risk_value,
        risk_slack,
        price_ok: budget_slack >= -FEASIBILITY_TOL,
        risk_ok: risk_slack.is_none_or(|s| s >= -FEASIBILITY_TOL),
    })
}
