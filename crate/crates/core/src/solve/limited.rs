//! Two-stage solver for a limited-liability investor under a concave
//! utility floor.
//!
//! For a split point `p`, the left stage buys the cheapest loss profile on
//! `[0, p)` meeting `∫ u_R(f₁) ≥ L`; what it earns, `C₂ = e^{rT}C − C₁`,
//! funds the best gain profile on `[p, 1]`. The optimum is the supremum of
//! `V(p)` over `p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{extended_f64, extended_f64_opt, extended_pairs};
use crate::market::{q_power_integral, PricingKernel};
use crate::quantile::{ParametricPayoff, QuantilePayoff};
use crate::risk::{expected_utility, price};
use crate::search::golden_section_max;
use crate::utility::UtilitySpec;

use super::pointwise::pointwise_concave_solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitedOptions {
    /// Coarse grid size on `[p_lo, p_hi]`.
    pub grid: usize,
    pub p_lo: f64,
    pub p_hi: f64,
    /// Golden-section tolerance in `p`.
    pub p_tol: f64,
    /// Generic loss utilities: `f₁` is kept at or below `−clamp`.
    pub clamp: f64,
}

impl Default for LimitedOptions {
    fn default() -> Self {
        Self {
            grid: 64,
            p_lo: 1e-4,
            p_hi: 1.0 - 1e-4,
            p_tol: 1e-6,
            clamp: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeftSolution {
    pub p: f64,
    /// `C₁(p)`, the forward cost of the cheapest admissible loss profile.
    #[serde(with = "extended_f64")]
    pub c1: f64,
    #[serde(with = "extended_f64_opt")]
    pub multiplier: Option<f64>,
    /// Whether the utility floor limits how negative `C₁` can go.
    pub binding: bool,
    #[serde(skip)]
    pub payoff: Option<QuantilePayoff>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RightSolution {
    pub p: f64,
    #[serde(with = "extended_f64")]
    pub c2: f64,
    /// `V = sup ∫_p^1 u_I(f₂)`.
    #[serde(with = "extended_f64")]
    pub value: f64,
    #[serde(with = "extended_f64_opt")]
    pub multiplier: Option<f64>,
    #[serde(skip)]
    pub payoff: Option<QuantilePayoff>,
}

fn check_split(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            what: "p",
            value: p,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

/// `inf ∫₀^p f₁ q` subject to `∫₀^p u_R(f₁) ≥ L`, `f₁ < 0` increasing.
pub fn left_problem<K: PricingKernel + Clone + 'static>(
    k: &K,
    u_r: &UtilitySpec,
    level: f64,
    p: f64,
    opts: &LimitedOptions,
) -> Result<LeftSolution> {
    check_split(p)?;
    if !(level < 0.0) {
        return Err(Error::invalid("L", format!("loss level must be negative, got {level}")));
    }
    if p == 0.0 {
        return Ok(LeftSolution {
            p,
            c1: 0.0,
            multiplier: None,
            binding: false,
            payoff: None,
        });
    }
    match *u_r {
        UtilitySpec::PowerLoss { gamma } => {
            let i1 = q_power_integral(k, gamma, 0.0, p)?;
            if !i1.is_finite() {
                return Ok(LeftSolution {
                    p,
                    c1: f64::NEG_INFINITY,
                    multiplier: None,
                    binding: false,
                    payoff: None,
                });
            }
            let e = (gamma - 1.0) / gamma;
            let ratio = -level / i1;
            let multiplier = gamma * ratio.powf(e);
            let c1 = -(-level).powf(1.0 / gamma) * i1.powf(e);
            // f₁ = i₁(α q) = −(−L/I₁)^{1/γ} q^{1/(γ−1)}
            let scale = ratio.powf(1.0 / gamma).ln();
            let kk = k.clone();
            let map = move |z: f64| -(scale + kk.ln_q_normal(z) / (gamma - 1.0)).exp();
            let payoff = ParametricPayoff::from_score(map, 0.0, p, "left power-loss optimum")?;
            Ok(LeftSolution {
                p,
                c1,
                multiplier: Some(multiplier),
                binding: true,
                payoff: Some(QuantilePayoff::Parametric(payoff)),
            })
        }
        _ => generic_left(k, u_r, level, p, opts),
    }
}

fn generic_left<K: PricingKernel + Clone + 'static>(
    k: &K,
    u_r: &UtilitySpec,
    level: f64,
    p: f64,
    opts: &LimitedOptions,
) -> Result<LeftSolution> {
    let range = (f64::NEG_INFINITY, -opts.clamp);
    let utility_at = |ln_a: f64| -> Result<(f64, QuantilePayoff)> {
        let phi = pointwise_concave_solve(u_r, k, ln_a.exp(), 0.0, p, range)?;
        // outside [0, p) the payoff is zero, and u_R(0) = 0
        let eu = expected_utility(&phi, u_r)? - (1.0 - p) * u_r.evaluate(0.0);
        Ok((eu, phi))
    };
    // utility falls as the multiplier grows
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let (u_hi, _) = utility_at(hi)?;
    if u_hi > level {
        return Ok(LeftSolution {
            p,
            c1: f64::NEG_INFINITY,
            multiplier: None,
            binding: false,
            payoff: None,
        });
    }
    let (u_lo, _) = utility_at(lo)?;
    if u_lo < level {
        return Err(Error::Infeasible(format!(
            "loss floor {level} is unreachable on [0, {p}) even with f1 near -{}",
            opts.clamp
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-13 {
            break;
        }
        if utility_at(mid)?.0 >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, phi) = utility_at(lo)?;
    let c1 = price(&phi, k)?.undiscounted;
    Ok(LeftSolution {
        p,
        c1,
        multiplier: Some(lo.exp()),
        binding: true,
        payoff: Some(phi),
    })
}

/// `sup ∫_p^1 u_I(f₂)` subject to `∫_p^1 f₂ q ≤ C₂`, `f₂ ≥ 0` increasing.
pub fn right_problem<K: PricingKernel + Clone + 'static>(
    k: &K,
    u_i: &UtilitySpec,
    c2: f64,
    p: f64,
) -> Result<RightSolution> {
    check_split(p)?;
    if c2 < 0.0 {
        return Err(Error::Infeasible(format!("negative right-stage budget C2 = {c2}")));
    }
    if c2 == f64::INFINITY {
        return Ok(RightSolution {
            p,
            c2,
            value: u_i.sup_value(),
            multiplier: None,
            payoff: None,
        });
    }
    if c2 == 0.0 || p == 1.0 {
        return Ok(RightSolution {
            p,
            c2,
            value: (1.0 - p) * u_i.evaluate(0.0),
            multiplier: None,
            payoff: None,
        });
    }
    match *u_i {
        UtilitySpec::PowerGain { gamma } => {
            let i2 = q_power_integral(k, gamma, p, 1.0)?;
            if !i2.is_finite() {
                return Ok(RightSolution {
                    p,
                    c2,
                    value: f64::INFINITY,
                    multiplier: None,
                    payoff: None,
                });
            }
            let value = c2.powf(gamma) * i2.powf(1.0 - gamma);
            let multiplier = gamma * (c2 / i2).powf(gamma - 1.0);
            // f₂ = (C₂/I₂) q^{1/(γ−1)}
            let scale = (c2 / i2).ln();
            let kk = k.clone();
            let map = move |z: f64| (scale + kk.ln_q_normal(z) / (gamma - 1.0)).exp();
            let payoff = ParametricPayoff::from_score(map, p, 1.0, "right power-gain optimum")?;
            Ok(RightSolution {
                p,
                c2,
                value,
                multiplier: Some(multiplier),
                payoff: Some(QuantilePayoff::Parametric(payoff)),
            })
        }
        _ => generic_right(k, u_i, c2, p),
    }
}

fn generic_right<K: PricingKernel + Clone + 'static>(k: &K, u_i: &UtilitySpec, c2: f64, p: f64) -> Result<RightSolution> {
    let range = (0.0, f64::INFINITY);
    let cost_at = |ln_a: f64| -> Result<(f64, QuantilePayoff)> {
        let phi = pointwise_concave_solve(u_i, k, ln_a.exp(), p, 1.0, range)?;
        Ok((price(&phi, k)?.undiscounted, phi))
    };
    // cost falls as the multiplier grows
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    if cost_at(lo)?.0 < c2 {
        return Ok(RightSolution {
            p,
            c2,
            value: f64::INFINITY,
            multiplier: None,
            payoff: None,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-13 {
            break;
        }
        if cost_at(mid)?.0 > c2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, phi) = cost_at(hi)?;
    let value = expected_utility(&phi, u_i)? - p * u_i.evaluate(0.0);
    Ok(RightSolution {
        p,
        c2,
        value,
        multiplier: Some(hi.exp()),
        payoff: Some(phi),
    })
}

/// Value of the split at `p`; `−inf` if the left stage costs more than the
/// whole budget.
fn split_value<K: PricingKernel + Clone + 'static>(
    k: &K,
    u_r: &UtilitySpec,
    u_i: &UtilitySpec,
    level: f64,
    forward_budget: f64,
    p: f64,
    opts: &LimitedOptions,
) -> Result<(LeftSolution, Option<RightSolution>, f64)> {
    let left = left_problem(k, u_r, level, p, opts)?;
    let c2 = forward_budget - left.c1;
    if c2 < 0.0 {
        return Ok((left, None, f64::NEG_INFINITY));
    }
    let right = right_problem(k, u_i, c2, p)?;
    let v = right.value;
    Ok((left, Some(right), v))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub p_star: f64,
    #[serde(with = "extended_f64")]
    pub c1: f64,
    #[serde(with = "extended_f64")]
    pub c2: f64,
    #[serde(with = "extended_f64")]
    pub value: f64,
    /// Whether the utility floor keeps `V` below the unconstrained supremum.
    pub binding: bool,
    pub left: LeftSolution,
    pub right: Option<RightSolution>,
    /// `(p, V(p))` on the coarse grid, endpoints included.
    #[serde(with = "extended_pairs")]
    pub curve: Vec<(f64, f64)>,
}

impl SolveReport {
    /// The concatenated payoff `f₁` on `[0, p*)`, `f₂` on `[p*, 1]`.
    pub fn payoff(&self) -> Option<QuantilePayoff> {
        let zero = |lo: f64, hi: f64| ParametricPayoff::from_score(|_| 0.0, lo, hi, "zero").ok();
        let as_param = |q: &Option<QuantilePayoff>| match q {
            Some(QuantilePayoff::Parametric(p)) => Some(p.clone()),
            _ => None,
        };
        let left = as_param(&self.left.payoff).or_else(|| zero(0.0, self.p_star))?;
        let right = self
            .right
            .as_ref()
            .and_then(|r| as_param(&r.payoff))
            .or_else(|| zero(self.p_star, 1.0))?;
        ParametricPayoff::concat(&left, &right, "two-stage optimum")
            .ok()
            .map(QuantilePayoff::Parametric)
    }
}

/// `sup_p V(p)`: a coarse grid (evaluated in parallel), the endpoints
/// `p ∈ {0, 1}`, then golden-section refinement around the best grid cell.
pub fn solve_limited_liability<K: PricingKernel + Clone + 'static>(
    k: &K,
    u_r: &UtilitySpec,
    u_i: &UtilitySpec,
    level: f64,
    budget: f64,
    opts: &LimitedOptions,
) -> Result<SolveReport> {
    if opts.grid < 3 || !(0.0 < opts.p_lo && opts.p_lo < opts.p_hi && opts.p_hi < 1.0) {
        return Err(Error::invalid("grid", "need at least 3 points inside (0, 1)"));
    }
    let forward_budget = budget * k.compounding();
    let n = opts.grid;
    let mut ps: Vec<f64> = (0..n)
        .map(|i| opts.p_lo + (opts.p_hi - opts.p_lo) * i as f64 / (n - 1) as f64)
        .collect();
    ps.insert(0, 0.0);
    ps.push(1.0);
    let values: Vec<f64> = ps
        .par_iter()
        .map(|&p| split_value(k, u_r, u_i, level, forward_budget, p, opts).map(|r| r.2))
        .collect::<Result<Vec<_>>>()?;
    let curve: Vec<(f64, f64)> = ps.iter().copied().zip(values.iter().copied()).collect();

    let best = (0..values.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))
        .expect("grid is nonempty");
    let mut p_star = ps[best];
    if values[best].is_finite() && best > 0 && best + 1 < ps.len() {
        let (a, b) = (ps[best - 1], ps[best + 1]);
        let f = |p: f64| {
            split_value(k, u_r, u_i, level, forward_budget, p, opts)
                .map(|r| r.2)
                .unwrap_or(f64::NEG_INFINITY)
        };
        let (p, v) = golden_section_max(f, a, b, opts.p_tol);
        if v > values[best] {
            p_star = p;
        }
    }
    let (left, right, value) = split_value(k, u_r, u_i, level, forward_budget, p_star, opts)?;
    if value == f64::NEG_INFINITY {
        return Err(Error::Infeasible(format!(
            "the loss floor L = {level} costs more than the budget at every split"
        )));
    }
    let c2 = right.as_ref().map_or(forward_budget - left.c1, |r| r.c2);
    Ok(SolveReport {
        p_star,
        c1: left.c1,
        c2,
        value,
        binding: value < u_i.sup_value(),
        left,
        right,
        curve,
    })
}

/// Whether a power-loss floor binds: it does iff
/// `e(γ_R) = ∫ q^{γ_R/(γ_R−1)}` is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BindingCriterion {
    #[serde(with = "extended_f64")]
    pub e_value: f64,
    pub binding: bool,
}

pub fn binding_criterion<K: PricingKernel + ?Sized>(k: &K, gamma_r: f64) -> Result<BindingCriterion> {
    if !(gamma_r > 1.0) {
        return Err(Error::invalid("gamma_R", format!("must exceed 1, got {gamma_r}")));
    }
    let e_value = crate::market::e_gamma(k, gamma_r)?;
    Ok(BindingCriterion {
        e_value,
        binding: e_value.is_finite(),
    })
}
