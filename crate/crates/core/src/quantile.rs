//! Payoffs in quantile form and the rearrangement machinery on discrete
//! random variables.
//!
//! A payoff is an increasing map `φ` on `[0, 1]`; the random payoff is
//! `φ(U)` for `U` uniform and comonotone with the state price ordering.
//! Discrete random variables stand in for the non-atomic probability space:
//! "continuous distribution" becomes "all values distinct", with scenario
//! ids breaking ties.

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_csv, write_csv};
use crate::special::{norm_cdf, norm_ppf};

/// Step quantile function. Segment `i` is `[x_i, x_{i+1})`, the last one
/// closes at 1; at a breakpoint the right segment's value applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPayoff {
    breakpoints: Vec<(f64, f64)>,
}

impl StepPayoff {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints[0].0 != 0.0 {
            return Err(Error::invalid("breakpoints", "the first segment must start at 0"));
        }
        if breakpoints.iter().any(|&(x, v)| !(0.0..1.0).contains(&x) || v.is_nan()) {
            return Err(Error::invalid("breakpoints", "positions must lie in [0, 1) and values be numbers"));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("breakpoints", "positions must be strictly increasing"));
        }
        if breakpoints.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::invalid("breakpoints", "values must be nondecreasing"));
        }
        Ok(Self { breakpoints })
    }

    /// `n` equal cells with the given values.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let n = values.len() as f64;
        Self::new(values.iter().enumerate().map(|(i, &v)| (i as f64 / n, v)).collect())
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|b| b.0 <= x).saturating_sub(1);
        self.breakpoints[i].1
    }

    /// `(lo, hi, value)` for each segment.
    pub fn segments(&self) -> Vec<(f64, f64, f64)> {
        let n = self.breakpoints.len();
        (0..n)
            .map(|i| {
                let hi = if i + 1 < n { self.breakpoints[i + 1].0 } else { 1.0 };
                (self.breakpoints[i].0, hi, self.breakpoints[i].1)
            })
            .collect()
    }

    /// CSV with columns `x_or_prob,value`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.breakpoints.iter().map(|&(x, v)| vec![x, v]).collect();
        write_csv(out, &["x_or_prob", "value"], &rows)
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Self> {
        let (_, rows) = read_csv(input)?;
        let pts = rows
            .into_iter()
            .map(|r| match r.as_slice() {
                [x, v, ..] => Ok((*x, *v)),
                _ => Err(Error::Format("step payoff rows need x_or_prob and value".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pts)
    }
}

type ScoreMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form increasing payoff, stored as a function of the normal score
/// `z = Φ⁻¹(x)` so that both ends of `(0, 1)` keep full resolution. Zero
/// outside its support `[lo, hi]`.
#[derive(Clone)]
pub struct ParametricPayoff {
    map: ScoreMap,
    lo: f64,
    hi: f64,
    /// Interior jump locations in `x`; integrals are split there.
    breaks: Vec<f64>,
    label: String,
}

impl ParametricPayoff {
    /// From `z ↦ φ(Φ(z))`.
    pub fn from_score(map: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64, label: impl Into<String>) -> Result<Self> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("support", format!("need 0 <= lo <= hi <= 1, got [{lo}, {hi}]")));
        }
        Ok(Self {
            map: Arc::new(map),
            lo,
            hi,
            breaks: Vec::new(),
            label: label.into(),
        })
    }

    /// From `x ↦ φ(x)`.
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64, label: impl Into<String>) -> Result<Self> {
        Self::from_score(move |z| f(norm_cdf(z)), lo, hi, label)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// `[a, b]` cut at the jumps strictly inside it.
    pub fn pieces(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![a];
        cuts.extend(self.breaks.iter().copied().filter(|&c| a < c && c < b));
        cuts.push(b);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn at_score(&self, z: f64) -> f64 {
        let x = norm_cdf(z);
        if x < self.lo || x > self.hi {
            0.0
        } else {
            (self.map)(z)
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            (self.map)(norm_ppf(x))
        }
    }

    /// Joins `self` on its support with `other` on the rest of `[0, 1]`.
    pub fn concat(left: &ParametricPayoff, right: &ParametricPayoff, label: impl Into<String>) -> Result<Self> {
        let split = left.hi;
        let zs = norm_ppf(split);
        let (l, r) = (left.map.clone(), right.map.clone());
        let mut joined = Self::from_score(move |z| if z < zs { l(z) } else { r(z) }, left.lo, right.hi, label)?;
        joined.breaks = left.breaks.iter().copied().chain([split]).chain(right.breaks.iter().copied()).collect();
        Ok(joined)
    }
}

impl fmt::Debug for ParametricPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricPayoff")
            .field("label", &self.label)
            .field("support", &(self.lo, self.hi))
            .finish()
    }
}

/// An increasing payoff `φ: [0, 1] → ℝ` in quantile form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "representation")]
pub enum QuantilePayoff {
    Step(StepPayoff),
    /// `k2` on `[0, α)`, `k1` on `[α, 1]`: bond plus a digital option.
    TwoPiece { alpha: f64, k2: f64, k1: f64 },
    #[serde(skip)]
    Parametric(ParametricPayoff),
}

impl QuantilePayoff {
    pub fn constant(c: f64) -> Self {
        QuantilePayoff::Step(StepPayoff { breakpoints: vec![(0.0, c)] })
    }

    pub fn two_piece(alpha: f64, k2: f64, k1: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !(k2 < k1) {
            return Err(Error::invalid("k2", format!("need k2 < k1, got k2 = {k2}, k1 = {k1}")));
        }
        Ok(QuantilePayoff::TwoPiece { alpha, k2, k1 })
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            QuantilePayoff::Step(s) => s.evaluate(x),
            QuantilePayoff::TwoPiece { alpha, k2, k1 } => {
                if x < *alpha {
                    *k2
                } else {
                    *k1
                }
            }
            QuantilePayoff::Parametric(p) => p.evaluate(x),
        }
    }

    /// Piecewise-constant segments `(lo, hi, value)`; `None` for parametric
    /// payoffs.
    pub fn segments(&self) -> Option<Vec<(f64, f64, f64)>> {
        match self {
            QuantilePayoff::Step(s) => Some(s.segments()),
            QuantilePayoff::TwoPiece { alpha, k2, k1 } => Some(vec![(0.0, *alpha, *k2), (*alpha, 1.0, *k1)]),
            QuantilePayoff::Parametric(_) => None,
        }
    }

    /// `(x, φ(x))` at `n` cell midpoints.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                (x, self.evaluate(x))
            })
            .collect()
    }

    /// Grid check that the payoff is nondecreasing.
    pub fn is_increasing(&self, n: usize) -> bool {
        if let Some(seg) = self.segments() {
            return seg.windows(2).all(|w| w[1].2 >= w[0].2);
        }
        let s = self.sample(n);
        s.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

/// One scenario of a [`DiscreteRV`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub id: u64,
    pub prob: f64,
    pub value: f64,
}

/// A random variable on finitely many scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct DiscreteRV {
    atoms: Vec<Atom>,
}

impl TryFrom<Vec<Atom>> for DiscreteRV {
    type Error = Error;
    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        DiscreteRV::new(atoms)
    }
}

impl From<DiscreteRV> for Vec<Atom> {
    fn from(rv: DiscreteRV) -> Self {
        rv.atoms
    }
}

impl DiscreteRV {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atoms", "need at least one atom"));
        }
        if atoms.iter().any(|a| !(a.prob > 0.0) || !a.value.is_finite()) {
            return Err(Error::invalid("atoms", "probabilities must be positive and values finite"));
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("atoms", format!("probabilities sum to {total}")));
        }
        let mut ids: Vec<u64> = atoms.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("atoms", "scenario ids must be unique"));
        }
        Ok(Self { atoms })
    }

    /// Equally likely scenarios with ids `0..n`.
    pub fn equally_likely(values: &[f64]) -> Result<Self> {
        let p = 1.0 / values.len() as f64;
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| Atom {
                    id: i as u64,
                    prob: p,
                    value: v,
                })
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn value_of(&self, id: u64) -> Option<f64> {
        self.atoms.iter().find(|a| a.id == id).map(|a| a.value)
    }

    /// Applies `f` scenario-wise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| Atom { value: f(a.value), ..*a }).collect(),
        }
    }

    /// Combines two variables on the same scenarios.
    pub fn zip_with(&self, other: &DiscreteRV, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let other_by_id = same_scenarios(self, other)?;
        Ok(Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    value: f(a.value, other_by_id[&a.id]),
                    ..*a
                })
                .collect(),
        })
    }

    pub fn expectation(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.value).sum()
    }

    /// Atoms sorted by value, ties by id.
    fn sorted(&self) -> Vec<Atom> {
        let mut s = self.atoms.clone();
        s.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.id.cmp(&b.id)));
        s
    }

    /// Distinct values with `F` at each, accumulated in ascending order.
    fn cumulative(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut acc = 0.0;
        for a in self.sorted() {
            acc += a.prob;
            match out.last_mut() {
                Some(last) if last.0 == a.value => last.1 = acc,
                _ => out.push((a.value, acc)),
            }
        }
        out
    }

    /// `F(x) = P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.cumulative().iter().take_while(|c| c.0 <= x).last().map_or(0.0, |c| c.1)
    }

    /// `F⁻¹(p) = inf{x : F(x) ≥ p}` for `p ∈ (0, 1]`.
    pub fn generalized_inverse(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain {
                what: "p",
                value: p,
                domain: "(0, 1]",
            });
        }
        let cum = self.cumulative();
        Ok(cum.iter().find(|c| c.1 >= p).unwrap_or(&cum[cum.len() - 1]).0)
    }

    /// `(1 − F)⁻¹(p) = inf{x : 1 − F(x) ≤ p}` for `p ∈ [0, 1]`; `−inf` at
    /// `p = 1`.
    pub fn complementary_quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain {
                what: "p",
                value: p,
                domain: "[0, 1]",
            });
        }
        if p == 1.0 {
            return Ok(f64::NEG_INFINITY);
        }
        // survival P(X > v), accumulated from the top
        let mut masses: Vec<(f64, f64)> = Vec::new();
        for a in self.sorted() {
            match masses.last_mut() {
                Some(last) if last.0 == a.value => last.1 += a.prob,
                _ => masses.push((a.value, a.prob)),
            }
        }
        let mut survival = vec![0.0; masses.len()];
        let mut acc = 0.0;
        for i in (0..masses.len()).rev() {
            survival[i] = acc;
            acc += masses[i].1;
        }
        let i = survival.iter().position(|&s| s <= p).expect("the largest value has survival 0");
        Ok(masses[i].0)
    }

    /// Ranks of the atoms when sorted by value with ties broken by
    /// `tie_break` (a list of ids, earlier ranks lower). Without a
    /// tie-break, tied values are rejected.
    fn order(&self, tie_break: Option<&[u64]>) -> Result<Vec<Atom>> {
        let pos: Option<HashMap<u64, usize>> = tie_break.map(|t| t.iter().enumerate().map(|(i, id)| (*id, i)).collect());
        if let Some(p) = &pos {
            if self.atoms.iter().any(|a| !p.contains_key(&a.id)) {
                return Err(Error::ScenarioMismatch("tie-break order does not cover every scenario".into()));
            }
        }
        let mut s = self.atoms.clone();
        s.sort_by(|a, b| {
            a.value.total_cmp(&b.value).then_with(|| match &pos {
                Some(p) => p[&a.id].cmp(&p[&b.id]),
                None => std::cmp::Ordering::Equal,
            })
        });
        if pos.is_none() {
            if let Some(w) = s.windows(2).find(|w| w[0].value == w[1].value) {
                return Err(Error::TiedValues { value: w[0].value });
            }
        }
        Ok(s)
    }

    /// `F_X(X(ω))` per scenario under the given ordering.
    fn ranked_levels(&self, tie_break: Option<&[u64]>) -> Result<HashMap<u64, f64>> {
        let mut acc = 0.0;
        let mut out = HashMap::with_capacity(self.len());
        for a in self.order(tie_break)? {
            acc += a.prob;
            out.insert(a.id, acc);
        }
        Ok(out)
    }

    /// JSON array of atoms.
    pub fn to_json(&self) -> Result<String> {
        crate::io::to_json(self)
    }

    /// CSV with columns `x_or_prob,value,id`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.atoms.iter().map(|a| vec![a.prob, a.value, a.id as f64]).collect();
        write_csv(out, &["x_or_prob", "value", "id"], &rows)
    }

    /// Reads `x_or_prob,value[,id]`; ids default to the row index.
    pub fn read_csv<R: io::Read>(input: R) -> Result<Self> {
        let (_, rows) = read_csv(input)?;
        let atoms = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| match r.as_slice() {
                [p, v] => Ok(Atom { id: i as u64, prob: *p, value: *v }),
                [p, v, id, ..] => Ok(Atom { id: *id as u64, prob: *p, value: *v }),
                _ => Err(Error::Format("rows need x_or_prob and value".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }
}

fn same_scenarios(a: &DiscreteRV, b: &DiscreteRV) -> Result<HashMap<u64, f64>> {
    let by_id: HashMap<u64, (f64, f64)> = b.atoms.iter().map(|x| (x.id, (x.prob, x.value))).collect();
    if by_id.len() != a.len() {
        return Err(Error::ScenarioMismatch(format!("{} vs {} scenarios", a.len(), by_id.len())));
    }
    let mut out = HashMap::with_capacity(a.len());
    for atom in &a.atoms {
        match by_id.get(&atom.id) {
            Some(&(p, v)) if p == atom.prob => {
                out.insert(atom.id, v);
            }
            Some(_) => return Err(Error::ScenarioMismatch(format!("scenario {} has different probabilities", atom.id))),
            None => return Err(Error::ScenarioMismatch(format!("scenario {} missing", atom.id))),
        }
    }
    Ok(out)
}

/// `f^X(ω) = F_f⁻¹(F_X(X(ω)))`: the version of `f` comonotone with `X`.
/// `X` must take distinct values unless a tie-break order is given.
pub fn x_rearrangement(f: &DiscreteRV, x: &DiscreteRV, tie_break: Option<&[u64]>) -> Result<DiscreteRV> {
    same_scenarios(f, x)?;
    let levels = x.ranked_levels(tie_break)?;
    let cum = f.cumulative();
    let atoms = f
        .atoms
        .iter()
        .map(|a| {
            let level = levels[&a.id];
            let v = cum.iter().find(|c| c.1 >= level).unwrap_or(&cum[cum.len() - 1]).0;
            Atom { value: v, ..*a }
        })
        .collect();
    Ok(DiscreteRV { atoms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyLittlewood {
    /// `E[f·g]`.
    pub lhs: f64,
    /// `E[f^X·g^X]`.
    pub rhs: f64,
    pub holds: bool,
}

/// Compares `E[f g]` with `E[f^X g^X]` for `g ≥ 0`.
pub fn check_hardy_littlewood(f: &DiscreteRV, g: &DiscreteRV, x: &DiscreteRV) -> Result<HardyLittlewood> {
    if g.atoms.iter().any(|a| a.value < 0.0) {
        return Err(Error::invalid("g", "must be nonnegative"));
    }
    let lhs = f.zip_with(g, |a, b| a * b)?.expectation();
    let fx = x_rearrangement(f, x, None)?;
    let gx = x_rearrangement(g, x, None)?;
    let rhs = fx.zip_with(&gx, |a, b| a * b)?.expectation();
    Ok(HardyLittlewood {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12,
    })
}

/// An `X` with `F_Q⁻¹(X(ω)) = Q(ω)`: scenarios sorted by `(value, id)` and
/// `X` set to the cumulative probability. Equally likely scenarios give `X`
/// uniform on `{1/n, …, 1}`.
pub fn uniformize(q: &DiscreteRV) -> DiscreteRV {
    let mut acc = 0.0;
    let mut levels = HashMap::with_capacity(q.len());
    for a in q.sorted() {
        acc += a.prob;
        levels.insert(a.id, acc);
    }
    DiscreteRV {
        atoms: q.atoms.iter().map(|a| Atom { value: levels[&a.id], ..*a }).collect(),
    }
}

/// The `(value, id)` order used by [`uniformize`], as a tie-break list.
pub fn uniformize_order(q: &DiscreteRV) -> Vec<u64> {
    q.sorted().iter().map(|a| a.id).collect()
}

/// Outcome of reducing a payoff to quantile form against kernel atoms `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// `−(−f)^X` with `X = uniformize(Q)`: same law as `f`, antitone in `Q`.
    pub rearranged: DiscreteRV,
    /// `U`, with `F_f⁻¹(U) = −(−f)^X` on equally likely scenarios and `Q`
    /// nonincreasing in `U`.
    pub u: DiscreteRV,
    /// `E[f Q]`.
    pub price_original: f64,
    /// `E[−(−f)^X Q]`, never above `price_original`.
    pub price_rearranged: f64,
}

/// Rearranges `f` to be antitone in the state-price density `Q` and
/// exposes the uniform variable `U` that turns it into a quantile function.
/// `U(ω)` is the probability of scenarios ranking at or above `ω` in the
/// `(Q, id)` order.
pub fn quantile_reduction(f: &DiscreteRV, q: &DiscreteRV) -> Result<Reduction> {
    if q.atoms.iter().any(|a| a.value < 0.0) {
        return Err(Error::invalid("q", "state-price density must be nonnegative"));
    }
    same_scenarios(f, q)?;
    let x = uniformize(q);
    let order = uniformize_order(q);
    let neg = f.map(|v| -v);
    let rearranged = x_rearrangement(&neg, &x, Some(&order))?.map(|v| -v);

    let mut acc = 0.0;
    let mut u_levels = HashMap::with_capacity(q.len());
    for id in order.iter().rev() {
        let atom = q.atoms.iter().find(|a| a.id == *id).expect("order lists every scenario");
        acc += atom.prob;
        u_levels.insert(*id, acc);
    }
    let u = DiscreteRV {
        atoms: f.atoms.iter().map(|a| Atom { value: u_levels[&a.id], ..*a }).collect(),
    };
    let price_original = f.zip_with(q, |a, b| a * b)?.expectation();
    let price_rearranged = rearranged.zip_with(q, |a, b| a * b)?.expectation();
    Ok(Reduction {
        rearranged,
        u,
        price_original,
        price_rearranged,
    })
}

/// Pass/fail flags for the rearrangement identities on one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RearrangementChecks {
    /// `f^X` has the law of `f` (sorted values agree exactly).
    pub distribution: bool,
    /// `E[f g] ≤ E[f^X g^X]`.
    pub hardy_littlewood: bool,
    /// `(max{f,k})^X = max{f^X,k}` and likewise for `min`.
    pub max_min: bool,
    /// `f^X = (f⁺)^X + (min{f,0})^X`.
    pub parts: bool,
    /// `(f^X)^X = f^X`.
    pub idempotent: bool,
    /// `price(−(−f)^X) ≤ price(f)` against the kernel atoms.
    pub reduction_price: bool,
    /// `F_f⁻¹(U) = −(−f)^X`.
    pub reduction_u: bool,
}

impl RearrangementChecks {
    pub fn all(&self) -> bool {
        self.distribution
            && self.hardy_littlewood
            && self.max_min
            && self.parts
            && self.idempotent
            && self.reduction_price
            && self.reduction_u
    }
}

fn sorted_values(rv: &DiscreteRV) -> Vec<f64> {
    let mut v: Vec<f64> = rv.atoms.iter().map(|a| a.value).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Runs every rearrangement identity on one instance. `x` must take
/// distinct values, `g` and `q` must be nonnegative, and the last two
/// identities assume equally likely scenarios.
pub fn audit_rearrangement(f: &DiscreteRV, g: &DiscreteRV, x: &DiscreteRV, q: &DiscreteRV, k: f64) -> Result<RearrangementChecks> {
    let fx = x_rearrangement(f, x, None)?;
    let distribution = sorted_values(&fx) == sorted_values(f);
    let hardy_littlewood = check_hardy_littlewood(f, g, x)?.holds;
    let max_ok = x_rearrangement(&f.map(|v| v.max(k)), x, None)? == fx.map(|v| v.max(k));
    let min_ok = x_rearrangement(&f.map(|v| v.min(k)), x, None)? == fx.map(|v| v.min(k));
    let pos = x_rearrangement(&f.map(|v| v.max(0.0)), x, None)?;
    let neg = x_rearrangement(&f.map(|v| v.min(0.0)), x, None)?;
    let parts = pos.zip_with(&neg, |a, b| a + b)? == fx;
    let idempotent = x_rearrangement(&fx, x, None)? == fx;
    let red = quantile_reduction(f, q)?;
    let reduction_price = red.price_rearranged <= red.price_original + 1e-12 * (1.0 + red.price_original.abs());
    let through_u = red.u.map(|u| f.generalized_inverse(u.min(1.0)).expect("levels lie in (0, 1]"));
    let reduction_u = through_u == red.rearranged;
    Ok(RearrangementChecks {
        distribution,
        hardy_littlewood,
        max_min: max_ok && min_ok,
        parts,
        idempotent,
        reduction_price,
        reduction_u,
    })
}
