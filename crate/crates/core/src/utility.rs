//! Utility families, their superdifferentials and inverse marginals, and
//! grid checks for the tail-behaviour definitions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One piece of a [`PiecewiseUtility`]:
/// `u(x) = offset + scale · sign(x − pivot) · |x − pivot|^exponent`
/// on `[from, next.from)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: f64,
    pub offset: f64,
    pub scale: f64,
    pub pivot: f64,
    pub exponent: f64,
}

impl Segment {
    fn value(&self, x: f64) -> f64 {
        let d = x - self.pivot;
        self.offset + self.scale * d.signum() * d.abs().powf(self.exponent)
    }

    fn slope(&self, x: f64) -> f64 {
        let d = (x - self.pivot).abs();
        if self.scale == 0.0 {
            return 0.0;
        }
        if self.exponent == 1.0 {
            return self.scale;
        }
        self.scale * self.exponent * d.powf(self.exponent - 1.0)
    }
}

/// Utility assembled from closed-form segments; the first segment must
/// start at `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseUtility {
    segments: Vec<Segment>,
}

impl PiecewiseUtility {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() || segments[0].from != f64::NEG_INFINITY {
            return Err(Error::invalid("segments", "first segment must start at -inf"));
        }
        if segments.windows(2).any(|w| w[1].from <= w[0].from) {
            return Err(Error::invalid("segments", "breakpoints must be strictly increasing"));
        }
        if segments.iter().any(|s| !(s.exponent > 0.0) || !s.scale.is_finite() || !s.offset.is_finite()) {
            return Err(Error::invalid("segments", "need finite scale/offset and positive exponent"));
        }
        Ok(Self { segments })
    }

    fn index(&self, x: f64) -> usize {
        self.segments.partition_point(|s| s.from <= x).saturating_sub(1)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().skip(1).map(|s| s.from)
    }
}

/// Tagged utility family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum UtilitySpec {
    /// `x^γ` for gains, `−λ(−x)^γ` for losses.
    KahnemanTversky { gamma: f64, lambda: f64 },
    /// `x^γ` for `x ≥ 0`, zero on losses (limited liability).
    PowerGain { gamma: f64 },
    /// `−(−x)^γ` for `x ≤ 0`, zero on gains.
    PowerLoss { gamma: f64 },
    Piecewise(PiecewiseUtility),
}

impl UtilitySpec {
    pub fn kahneman_tversky(gamma: f64, lambda: f64) -> Result<Self> {
        let u = UtilitySpec::KahnemanTversky { gamma, lambda };
        u.validate()?;
        Ok(u)
    }

    pub fn power_gain(gamma: f64) -> Result<Self> {
        let u = UtilitySpec::PowerGain { gamma };
        u.validate()?;
        Ok(u)
    }

    pub fn power_loss(gamma: f64) -> Result<Self> {
        let u = UtilitySpec::PowerLoss { gamma };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UtilitySpec::KahnemanTversky { gamma, lambda } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::invalid("gamma", format!("KT exponent must lie in (0, 1], got {gamma}")));
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
                }
            }
            UtilitySpec::PowerGain { gamma } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::invalid("gamma", format!("gain exponent must lie in (0, 1), got {gamma}")));
                }
            }
            UtilitySpec::PowerLoss { gamma } => {
                if !(gamma > 1.0 && gamma.is_finite()) {
                    return Err(Error::invalid("gamma", format!("loss exponent must exceed 1, got {gamma}")));
                }
            }
            UtilitySpec::Piecewise(ref p) => {
                PiecewiseUtility::new(p.segments.clone())?;
            }
        }
        Ok(())
    }

    /// `u(x)`.
    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::KahnemanTversky { gamma, lambda } => {
                if x >= 0.0 {
                    x.powf(gamma)
                } else {
                    -lambda * (-x).powf(gamma)
                }
            }
            UtilitySpec::PowerGain { gamma } => {
                if x > 0.0 {
                    x.powf(gamma)
                } else {
                    0.0
                }
            }
            UtilitySpec::PowerLoss { gamma } => {
                if x < 0.0 {
                    -(-x).powf(gamma)
                } else {
                    0.0
                }
            }
            UtilitySpec::Piecewise(ref p) => p.segments[p.index(x)].value(x),
        }
    }

    /// Right derivative `u'(x⁺)`; `+inf` where the slope blows up.
    pub fn right_slope(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::KahnemanTversky { gamma, lambda } => {
                if x >= 0.0 {
                    power_slope(1.0, gamma, x)
                } else {
                    power_slope(lambda, gamma, -x)
                }
            }
            UtilitySpec::PowerGain { gamma } => {
                if x >= 0.0 {
                    power_slope(1.0, gamma, x)
                } else {
                    0.0
                }
            }
            UtilitySpec::PowerLoss { gamma } => {
                if x >= 0.0 {
                    0.0
                } else {
                    power_slope(1.0, gamma, -x)
                }
            }
            UtilitySpec::Piecewise(ref p) => p.segments[p.index(x)].slope(x),
        }
    }

    /// Left derivative `u'(x⁻)`.
    pub fn left_slope(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::KahnemanTversky { gamma, lambda } => {
                if x > 0.0 {
                    power_slope(1.0, gamma, x)
                } else {
                    power_slope(lambda, gamma, -x)
                }
            }
            UtilitySpec::PowerGain { gamma } => {
                if x > 0.0 {
                    power_slope(1.0, gamma, x)
                } else {
                    0.0
                }
            }
            UtilitySpec::PowerLoss { gamma } => {
                if x > 0.0 {
                    0.0
                } else {
                    power_slope(1.0, gamma, -x)
                }
            }
            UtilitySpec::Piecewise(ref p) => {
                let i = p.segments.partition_point(|s| s.from < x).saturating_sub(1);
                p.segments[i].slope(x)
            }
        }
    }

    /// `sup_x u(x)` (the limit at `+inf`).
    pub fn sup_value(&self) -> f64 {
        match *self {
            UtilitySpec::KahnemanTversky { .. } | UtilitySpec::PowerGain { .. } => f64::INFINITY,
            UtilitySpec::PowerLoss { .. } => 0.0,
            UtilitySpec::Piecewise(ref p) => {
                let last = p.segments[p.segments.len() - 1];
                if last.scale > 0.0 {
                    f64::INFINITY
                } else {
                    last.offset
                }
            }
        }
    }

    /// Whether `u` is concave on `[lo, hi]`. Closed forms are decided
    /// analytically, piecewise utilities by a midpoint test on a grid.
    pub fn is_concave_on(&self, lo: f64, hi: f64) -> bool {
        match *self {
            UtilitySpec::KahnemanTversky { gamma, lambda } => {
                lo >= 0.0 || (gamma == 1.0 && (hi <= 0.0 || lambda >= 1.0))
            }
            UtilitySpec::PowerGain { .. } => lo >= 0.0 || hi <= 0.0,
            UtilitySpec::PowerLoss { .. } => true,
            UtilitySpec::Piecewise(_) => midpoint_concave(self, lo, hi),
        }
    }

    /// Superdifferential of `u` at `x` relative to the domain `[lo, hi]`:
    /// the slopes `y ≥ 0` with `u(x') ≤ u(x) + y(x' − x)` for every `x'` in
    /// the domain. Interior points give `[u'(x⁺), u'(x⁻)]`; the endpoints
    /// extend to `+inf` at `lo` and down to `0` at `hi`.
    pub fn subdifferential(&self, x: f64, lo: f64, hi: f64) -> Result<SlopeInterval> {
        if !(lo <= x && x <= hi) {
            return Err(Error::Domain {
                what: "x",
                value: x,
                domain: "the queried domain",
            });
        }
        if !self.is_concave_on(lo, hi) {
            return Err(Error::NotConcave {
                utility: self.to_string(),
                lo,
                hi,
            });
        }
        let lower = if x == hi { 0.0 } else { self.right_slope(x).max(0.0) };
        let upper = if x == lo { f64::INFINITY } else { self.left_slope(x).max(0.0) };
        let lower = if x == lo && x != hi { self.right_slope(x).max(0.0) } else { lower };
        Ok(SlopeInterval { lower, upper })
    }

    /// Inverse of the marginal utility on the strictly concave branch.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain {
                what: "y",
                value: y,
                domain: "(0, inf)",
            });
        }
        match *self {
            UtilitySpec::PowerLoss { gamma } => Ok(-(y / gamma).powf(1.0 / (gamma - 1.0))),
            UtilitySpec::PowerGain { gamma } => Ok((y / gamma).powf(1.0 / (gamma - 1.0))),
            _ => Err(Error::Unsupported {
                operation: "inverse_marginal",
                utility: self.to_string(),
            }),
        }
    }

    /// `argmax_{v ∈ [lo, hi]} u(v) − y·v` for `u` concave on `[lo, hi]`,
    /// i.e. the point whose superdifferential contains `y`.
    pub fn argmax_linear(&self, y: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain {
                what: "y",
                value: y,
                domain: "(0, inf)",
            });
        }
        match *self {
            UtilitySpec::PowerLoss { .. } if hi <= 0.0 || lo >= -f64::MAX => {
                let v = self.inverse_marginal(y)?;
                Ok(v.clamp(lo, hi.min(0.0).max(lo)))
            }
            UtilitySpec::PowerGain { .. } if lo >= 0.0 => {
                let v = self.inverse_marginal(y)?;
                Ok(v.clamp(lo, hi))
            }
            _ => {
                if !self.is_concave_on(lo, hi) {
                    return Err(Error::NotConcave {
                        utility: self.to_string(),
                        lo,
                        hi,
                    });
                }
                Ok(bisect_slope(self, y, lo, hi))
            }
        }
    }
}

fn power_slope(scale: f64, gamma: f64, d: f64) -> f64 {
    if gamma == 1.0 {
        scale
    } else {
        scale * gamma * d.powf(gamma - 1.0)
    }
}

fn bisect_slope(u: &UtilitySpec, y: f64, lo: f64, hi: f64) -> f64 {
    // slope is nonincreasing on a concave domain; find where it crosses y
    if u.right_slope(lo) <= y {
        return lo;
    }
    if hi.is_finite() && u.left_slope(hi) >= y {
        return hi;
    }
    let mut a = if lo.is_finite() { lo } else { -1.0 };
    let mut b = if hi.is_finite() { hi } else { a.abs().max(1.0) };
    while !lo.is_finite() && u.right_slope(a) < y {
        a = 2.0 * a - 1.0;
    }
    while !hi.is_finite() && u.left_slope(b) > y {
        b = 2.0 * b + 1.0;
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if u.right_slope(m) > y {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn probe_grid(u: &UtilitySpec, lo: f64, hi: f64) -> Vec<f64> {
    let lo = if lo.is_finite() { lo } else { -1e6 };
    let hi = if hi.is_finite() { hi } else { 1e6 };
    let mut pts: Vec<f64> = Vec::new();
    let n = 400;
    for i in 0..=n {
        pts.push(lo + (hi - lo) * i as f64 / n as f64);
    }
    // geometric refinement around zero and breakpoints
    let mut anchors = vec![0.0];
    if let UtilitySpec::Piecewise(p) = u {
        anchors.extend(p.breakpoints());
    }
    for a in anchors {
        for k in -12..=6 {
            let d = 10f64.powi(k);
            for x in [a - d, a + d, a] {
                if x >= lo && x <= hi {
                    pts.push(x);
                }
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn midpoint_concave(u: &UtilitySpec, lo: f64, hi: f64) -> bool {
    let pts = probe_grid(u, lo, hi);
    for stride in [1usize, 2, 8, 32] {
        for w in pts.windows(stride + 1) {
            let (a, b) = (w[0], w[stride]);
            let m = 0.5 * (a + b);
            let (ua, ub, um) = (u.evaluate(a), u.evaluate(b), u.evaluate(m));
            let tol = 1e-10 * (ua.abs() + ub.abs() + 1.0);
            if um < 0.5 * (ua + ub) - tol {
                return false;
            }
        }
    }
    true
}

/// Grid check that `u` is nondecreasing on `[lo, hi]`.
pub fn is_nondecreasing_on(u: &UtilitySpec, lo: f64, hi: f64, points: usize) -> bool {
    let n = points.max(2);
    let mut prev = u.evaluate(lo);
    for i in 1..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let v = u.evaluate(x);
        if v < prev {
            return false;
        }
        prev = v;
    }
    true
}

impl fmt::Display for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilitySpec::KahnemanTversky { gamma, lambda } => write!(f, "kt:{gamma}:{lambda}"),
            UtilitySpec::PowerGain { gamma } => write!(f, "powgain:{gamma}"),
            UtilitySpec::PowerLoss { gamma } => write!(f, "powloss:{gamma}"),
            UtilitySpec::Piecewise(p) => write!(f, "piecewise[{} segments]", p.segments.len()),
        }
    }
}

impl FromStr for UtilitySpec {
    type Err = Error;

    /// `kt:GAMMA:LAMBDA`, `powgain:GAMMA` or `powloss:GAMMA`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Format(format!("utility `{s}`: missing parameter {i}")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("utility `{s}`: {e}")))
        };
        let spec = match parts[0].to_ascii_lowercase().as_str() {
            "kt" if parts.len() == 3 => UtilitySpec::KahnemanTversky {
                gamma: num(1)?,
                lambda: num(2)?,
            },
            "powgain" if parts.len() == 2 => UtilitySpec::PowerGain { gamma: num(1)? },
            "powloss" if parts.len() == 2 => UtilitySpec::PowerLoss { gamma: num(1)? },
            _ => {
                return Err(Error::Format(format!(
                    "unrecognised utility `{s}` (expected kt:G:L, powgain:G or powloss:G)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Closed interval of slopes; `upper` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeInterval {
    pub lower: f64,
    pub upper: f64,
}

impl SlopeInterval {
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailSide {
    /// `u(x) > −c|x|^η` for all `x ≤ N`.
    LeftRiskSeeking,
    /// `u(x) < c|x|^η` for all `x ≥ N`.
    RightRiskAverse,
}

/// Constants witnessing one of the tail-behaviour definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCertificate {
    pub threshold: f64,
    pub eta: f64,
    pub c: f64,
    pub side: TailSide,
}

impl TailCertificate {
    pub fn new(threshold: f64, eta: f64, c: f64, side: TailSide) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid("eta", format!("must lie in (0, 1), got {eta}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("c", format!("must be positive, got {c}")));
        }
        match side {
            TailSide::LeftRiskSeeking if threshold > 0.0 => {
                Err(Error::invalid("threshold", "left-tail certificates need N <= 0"))
            }
            TailSide::RightRiskAverse if threshold < 0.0 => {
                Err(Error::invalid("threshold", "right-tail certificates need N >= 0"))
            }
            _ => Ok(Self {
                threshold,
                eta,
                c,
                side,
            }),
        }
    }

    pub fn left(threshold: f64, eta: f64, c: f64) -> Result<Self> {
        Self::new(threshold, eta, c, TailSide::LeftRiskSeeking)
    }

    pub fn right(threshold: f64, eta: f64, c: f64) -> Result<Self> {
        Self::new(threshold, eta, c, TailSide::RightRiskAverse)
    }

    /// The certified bound `∓c|x|^η` at `x`.
    pub fn bound(&self, x: f64) -> f64 {
        let b = self.c * x.abs().powf(self.eta);
        match self.side {
            TailSide::LeftRiskSeeking => -b,
            TailSide::RightRiskAverse => b,
        }
    }

    fn holds_at(&self, u: &UtilitySpec, x: f64) -> bool {
        match self.side {
            TailSide::LeftRiskSeeking => u.evaluate(x) > self.bound(x),
            TailSide::RightRiskAverse => u.evaluate(x) < self.bound(x),
        }
    }
}

/// Sampling plan for certificate checks: geometric in `|x|` from the
/// threshold out to `far`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub far: f64,
    pub points: usize,
}

impl Default for GridPlan {
    fn default() -> Self {
        Self { far: 1e12, points: 4000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    pub holds: bool,
    pub first_violation: Option<Violation>,
    pub points_checked: usize,
}

/// Checks the certificate's inequality on a geometric grid from the
/// threshold outwards; reports the violation closest to the threshold.
pub fn verify_tail_certificate(u: &UtilitySpec, cert: &TailCertificate, plan: GridPlan) -> CertificateVerdict {
    let sign = match cert.side {
        TailSide::LeftRiskSeeking => -1.0,
        TailSide::RightRiskAverse => 1.0,
    };
    let start = cert.threshold.abs();
    let mut mags = Vec::with_capacity(plan.points + 1);
    if start == 0.0 {
        mags.push(0.0);
    }
    let first = if start > 0.0 { start } else { 1e-12 };
    let far = plan.far.max(first);
    let n = plan.points.max(2);
    let ratio = (far / first).ln() / (n - 1) as f64;
    for i in 0..n {
        mags.push(first * (ratio * i as f64).exp());
    }
    for (checked, m) in mags.iter().enumerate() {
        let x = sign * m;
        if !cert.holds_at(u, x) {
            return CertificateVerdict {
                holds: false,
                first_violation: Some(Violation {
                    x,
                    value: u.evaluate(x),
                    bound: cert.bound(x),
                }),
                points_checked: checked + 1,
            };
        }
    }
    CertificateVerdict {
        holds: true,
        first_violation: None,
        points_checked: mags.len(),
    }
}

/// Grid verdicts for the six clauses of the S-shaped definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SShapeCheck {
    pub increasing: bool,
    pub nonpositive_on_losses: bool,
    pub nonnegative_on_gains: bool,
    pub concave_on_gains: bool,
    pub left_tail: bool,
    pub right_tail: bool,
}

impl SShapeCheck {
    pub fn all(&self) -> bool {
        self.increasing
            && self.nonpositive_on_losses
            && self.nonnegative_on_gains
            && self.concave_on_gains
            && self.left_tail
            && self.right_tail
    }
}

/// Checks a utility against the S-shaped definition given tail certificates
/// for both sides.
pub fn check_s_shaped(u: &UtilitySpec, left: &TailCertificate, right: &TailCertificate, plan: GridPlan) -> SShapeCheck {
    let span = 1e4;
    let n = 10_001;
    let grid: Vec<f64> = (0..n).map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64).collect();
    SShapeCheck {
        increasing: is_nondecreasing_on(u, -span, span, n),
        nonpositive_on_losses: grid.iter().filter(|x| **x <= 0.0).all(|&x| u.evaluate(x) <= 0.0),
        nonnegative_on_gains: grid.iter().filter(|x| **x >= 0.0).all(|&x| u.evaluate(x) >= 0.0),
        concave_on_gains: midpoint_concave(u, 0.0, span),
        left_tail: left.side == TailSide::LeftRiskSeeking && verify_tail_certificate(u, left, plan).holds,
        right_tail: right.side == TailSide::RightRiskAverse && verify_tail_certificate(u, right, plan).holds,
    }
}
