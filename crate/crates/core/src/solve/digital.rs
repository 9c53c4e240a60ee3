//! Bond-plus-digital payoffs that meet an expected-shortfall floor exactly
//! while pushing expected S-shaped utility past any finite target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::extended_f64;
use crate::market::PricingKernel;
use crate::quantile::QuantilePayoff;
use crate::risk::{expected_shortfall_avg, price, Price};
use crate::search::bisect;
use crate::special::{exact_diff, Compensated};
use crate::utility::{verify_tail_certificate, GridPlan, TailCertificate, TailSide, UtilitySpec};

/// Expected-shortfall floor: `(1/p)∫₀^p φ ≥ level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsFloor {
    pub p: f64,
    pub level: f64,
}

impl EsFloor {
    pub fn new(p: f64, level: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid("p", format!("must lie in (0, 1), got {p}")));
        }
        if !level.is_finite() {
            return Err(Error::invalid("L", "must be finite"));
        }
        Ok(Self { p, level })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitalOptions {
    /// Utility headroom: `k1` is chosen with `u(k1) = target + margin`.
    pub margin: f64,
    pub certificate: TailCertificate,
    pub grid: GridPlan,
    /// Smallest α tried before giving up.
    pub alpha_floor: f64,
    /// Number of neighbouring `k1` values (one ulp apart) searched for the
    /// most exact expected-shortfall identity.
    pub refine_steps: usize,
}

impl DigitalOptions {
    pub fn new(certificate: TailCertificate) -> Self {
        Self {
            margin: 1.0,
            certificate,
            grid: GridPlan::default(),
            alpha_floor: 1e-300,
            refine_steps: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalConstruction {
    pub alpha: f64,
    pub k1: f64,
    pub k2: f64,
    /// `αu(k2) + (1−α)u(k1)`.
    pub objective: f64,
    /// The lower bound on the objective implied by the tail certificate.
    pub certified_bound: f64,
    /// `C − price`, in time-0 money.
    pub budget_slack: f64,
    /// `ES − L`.
    pub es_slack: f64,
    pub price: Price,
    /// Whether probing found `q(x) → ∞` as `x → 0`.
    pub kernel_unbounded: bool,
    pub halvings: u32,
    #[serde(with = "extended_f64")]
    pub target: f64,
}

impl DigitalConstruction {
    pub fn payoff(&self) -> QuantilePayoff {
        QuantilePayoff::TwoPiece {
            alpha: self.alpha,
            k2: self.k2,
            k1: self.k1,
        }
    }
}

struct Candidate {
    k2: f64,
    num: f64,
    slack_forward: f64,
    guard: f64,
    objective: f64,
    bound: f64,
}

fn evaluate<K: PricingKernel + ?Sized>(
    k: &K,
    u: &UtilitySpec,
    es: EsFloor,
    cert: &TailCertificate,
    forward_budget: f64,
    alpha: f64,
    k1: f64,
) -> Result<Candidate> {
    let qa = k.integral(0.0, alpha)?;
    let rest = k.integral(alpha, 1.0)?;
    // pL − (p − α)k1, with p − α kept exact
    let mut acc = Compensated::new();
    acc.add_product(es.p, es.level);
    let (d, e) = exact_diff(es.p, alpha);
    acc.add_product(-d, k1);
    acc.add_product(-e, k1);
    let num = acc.value();
    let mut k2 = num / alpha;
    // round k2 up until αk2 + (p − α)k1 ≥ pL holds to the precision of pL
    let floor = -f64::EPSILON * (es.p * es.level).abs();
    for _ in 0..8 {
        let mut r = Compensated::new();
        r.add_product(alpha, k2);
        r.add_product(d, k1);
        r.add_product(e, k1);
        r.add_product(-es.p, es.level);
        if !k2.is_finite() || r.value() >= floor {
            break;
        }
        k2 = k2.next_up();
    }
    let mut cost = Compensated::new();
    cost.add_product(k2, qa);
    cost.add_product(k1, rest);
    let slack_forward = forward_budget - cost.value();
    let guard = 1e-10 * (k1.abs() * rest + k2.abs() * qa) + 1e-12;
    let tail = (1.0 - alpha) * u.evaluate(k1);
    let objective = alpha * u.evaluate(k2) + tail;
    let bound = if k2 <= cert.threshold {
        -cert.c * alpha.powf(1.0 - cert.eta) * num.abs().powf(cert.eta) + tail
    } else {
        objective
    };
    Ok(Candidate {
        k2,
        num,
        slack_forward,
        guard,
        objective,
        bound,
    })
}

/// Level `k1` with `u(k1) = y`, by bisection on the increasing `u`.
fn level_for_utility(u: &UtilitySpec, y: f64) -> Result<f64> {
    let mut hi = 1.0;
    while u.evaluate(hi) < y {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::TargetUnreachable {
                target: y,
                sup: u.sup_value(),
            });
        }
    }
    let mut lo = -1.0;
    while u.evaluate(lo) > y {
        lo *= 2.0;
        if !lo.is_finite() {
            return Ok(f64::MIN);
        }
    }
    let root = bisect(|x| u.evaluate(x) - y, lo, hi, 0.0, 2000).unwrap_or(hi);
    // the bisection may land a hair below the level
    let mut k1 = root;
    while u.evaluate(k1) < y {
        k1 = k1.next_up();
    }
    Ok(k1)
}

/// Builds `φ = k2·1[0,α) + k1·1[α,1]` with `u(k1) = target + margin` and
/// `k2 = (pL − (p−α)k1)/α`, so that the shortfall floor binds exactly,
/// halving `α` from `p/2` until the budget holds and the certified
/// objective reaches `target`.
pub fn digital_for_target<K: PricingKernel + ?Sized>(
    k: &K,
    u: &UtilitySpec,
    es: EsFloor,
    budget: f64,
    target: f64,
    opts: &DigitalOptions,
) -> Result<DigitalConstruction> {
    EsFloor::new(es.p, es.level)?;
    let cert = &opts.certificate;
    if cert.side != TailSide::LeftRiskSeeking {
        return Err(Error::invalid("certificate", "needs a left-tail (risk-seeking) certificate"));
    }
    let verdict = verify_tail_certificate(u, cert, opts.grid);
    if let Some(v) = verdict.first_violation {
        return Err(Error::CertificateFailed {
            at: v.x,
            value: v.value,
            bound: v.bound,
        });
    }
    let sup = u.sup_value();
    if !(target < sup) {
        return Err(Error::TargetUnreachable { target, sup });
    }
    let level = if target + opts.margin < sup {
        target + opts.margin
    } else {
        0.5 * (target + sup)
    };
    let mut k1 = level_for_utility(u, level)?;
    if k1 <= es.level {
        k1 = es.level + es.level.abs().max(1.0) * 1e-3;
    }

    let forward_budget = budget * k.compounding();
    let mut alpha = 0.5 * es.p;
    let mut halvings = 0;
    let mut last = None;
    while alpha >= opts.alpha_floor {
        let c = evaluate(k, u, es, cert, forward_budget, alpha, k1)?;
        if c.k2.is_finite() && c.k2 < k1 && c.slack_forward >= c.guard && c.bound >= target {
            let k1 = refine_k1(k, u, es, cert, forward_budget, alpha, k1, target, opts.refine_steps)?;
            return finish(k, u, es, cert, budget, alpha, k1, target, halvings);
        }
        last = Some((c.slack_forward / k.compounding(), c.objective));
        if !c.k2.is_finite() {
            break;
        }
        alpha *= 0.5;
        halvings += 1;
    }
    let (budget_slack, objective) = last.unwrap_or((f64::NAN, f64::NAN));
    Err(Error::AlphaUnderflow {
        alpha,
        budget_slack,
        objective,
    })
}

#[allow(clippy::too_many_arguments)]
fn refine_k1<K: PricingKernel + ?Sized>(
    k: &K,
    u: &UtilitySpec,
    es: EsFloor,
    cert: &TailCertificate,
    forward_budget: f64,
    alpha: f64,
    k1: f64,
    target: f64,
    steps: usize,
) -> Result<f64> {
    // signed ES − L, or None when the candidate breaks another constraint
    let slack = |k1: f64| -> Result<Option<f64>> {
        let c = evaluate(k, u, es, cert, forward_budget, alpha, k1)?;
        let es_value = expected_shortfall_avg(&QuantilePayoff::TwoPiece { alpha, k2: c.k2, k1 }, es.p)?;
        let ok = c.k2 < k1 && c.slack_forward >= c.guard && c.bound >= target;
        Ok(ok.then_some(es_value - es.level))
    };
    let tol = 1e-13 * es.level.abs().max(1.0);
    // smallest nonnegative slack wins; the smallest |slack| is the fallback
    let mut best = (f64::INFINITY, k1);
    let mut fallback = (f64::INFINITY, k1);
    let consider = |best: &mut (f64, f64), fallback: &mut (f64, f64), cand: f64, s: Option<f64>| {
        if let Some(s) = s {
            if s >= 0.0 && s < best.0 {
                *best = (s, cand);
            }
            if s.abs() < fallback.0 {
                *fallback = (s.abs(), cand);
            }
        }
    };
    consider(&mut best, &mut fallback, k1, slack(k1)?);
    let (mut up, mut down) = (k1, k1);
    for _ in 0..steps {
        if best.0 <= tol {
            break;
        }
        up = up.next_up();
        consider(&mut best, &mut fallback, up, slack(up)?);
        down = down.next_down();
        consider(&mut best, &mut fallback, down, slack(down)?);
    }
    if best.0.is_finite() {
        return Ok(best.1);
    }
    Ok(fallback.1)
}

#[allow(clippy::too_many_arguments)]
fn finish<K: PricingKernel + ?Sized>(
    k: &K,
    u: &UtilitySpec,
    es: EsFloor,
    cert: &TailCertificate,
    budget: f64,
    alpha: f64,
    k1: f64,
    target: f64,
    halvings: u32,
) -> Result<DigitalConstruction> {
    let c = evaluate(k, u, es, cert, budget * k.compounding(), alpha, k1)?;
    let payoff = QuantilePayoff::two_piece(alpha, c.k2, k1)?;
    let price = price(&payoff, k)?;
    let es_value = expected_shortfall_avg(&payoff, es.p)?;
    debug_assert!(c.num.is_finite());
    Ok(DigitalConstruction {
        alpha,
        k1,
        k2: c.k2,
        objective: c.objective,
        certified_bound: c.bound,
        budget_slack: budget - price.discounted,
        es_slack: es_value - es.level,
        price,
        kernel_unbounded: k.is_unbounded_at_zero(),
        halvings,
        target,
    })
}
