//! Complete-market model.
//!
//! A market is summarised by its pricing kernel dℚ/dℙ. Payoffs are priced in
//! quantile form, so what the solvers need is the *decreasing* quantile
//! function `q` of the kernel on `(0, 1)`: `q(x) = (1 − F_{dℚ/dℙ})⁻¹(x)`.
//! [`PricingKernel`] abstracts over that function; [`KernelQuantile`] is the
//! Black–Scholes instance with closed forms for every integral, and
//! [`StepKernel`] / [`FnKernel`] cover tabulated and user-supplied kernels
//! through exact sums or adaptive quadrature.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::normal_score_integral;
use crate::special::{norm_cdf, norm_interval, norm_ln_pdf, norm_ppf, norm_sf};

/// Black–Scholes market constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket")]
pub struct MarketParams {
    /// Drift of the stock, per year.
    pub mu: f64,
    /// Continuously compounded risk-free rate, per year.
    pub r: f64,
    /// Volatility, per √year.
    pub sigma: f64,
    /// Horizon in years.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Initial log-price.
    pub s0: f64,
}

#[derive(Deserialize)]
struct RawMarket {
    mu: f64,
    r: f64,
    sigma: f64,
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(default)]
    s0: f64,
}

impl TryFrom<RawMarket> for MarketParams {
    type Error = Error;

    fn try_from(raw: RawMarket) -> Result<Self> {
        MarketParams::new(raw.mu, raw.r, raw.sigma, raw.horizon, raw.s0)
    }
}

impl MarketParams {
    pub fn new(mu: f64, r: f64, sigma: f64, horizon: f64, s0: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive and finite, got {sigma}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("T", format!("must be positive and finite, got {horizon}")));
        }
        for (name, v) in [("mu", mu), ("r", r), ("s0", s0)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        let m = Self {
            mu,
            r,
            sigma,
            horizon,
            s0,
        };
        if !m.theta().is_finite() {
            return Err(Error::invalid("mu", "market price of risk is not finite"));
        }
        Ok(m)
    }

    /// Market with a prescribed market price of risk θ and horizon, σ = 1,
    /// r = 0 and s₀ = 0.
    pub fn with_theta(theta: f64, horizon: f64) -> Result<Self> {
        Self::new(theta, 0.0, 1.0, horizon, 0.0)
    }

    /// Market price of risk θ = (μ − r)/σ.
    pub fn theta(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }

    /// Forward growth factor e^{rT}.
    pub fn compounding(&self) -> f64 {
        (self.r * self.horizon).exp()
    }

    fn log_sd(&self) -> f64 {
        self.sigma * self.horizon.sqrt()
    }

    /// Mean of s_T under ℙ.
    pub fn physical_mean(&self) -> f64 {
        self.s0 + (self.mu - 0.5 * self.sigma * self.sigma) * self.horizon
    }

    /// Mean of s_T under ℚ.
    pub fn risk_neutral_mean(&self) -> f64 {
        self.s0 + (self.r - 0.5 * self.sigma * self.sigma) * self.horizon
    }

    /// ℙ-quantile of the terminal log-price.
    pub fn physical_quantile(&self, u: f64) -> f64 {
        self.physical_mean() + self.log_sd() * norm_ppf(u)
    }
}

fn normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Density of s_T = ln S_T under the physical measure ℙ.
pub fn p_density(m: &MarketParams, x: f64) -> f64 {
    normal_density(x, m.physical_mean(), m.log_sd())
}

/// Density of s_T under the risk-neutral measure ℚ.
pub fn q_density(m: &MarketParams, x: f64) -> f64 {
    normal_density(x, m.risk_neutral_mean(), m.log_sd())
}

/// A positive, nonincreasing function `q` on `(0, 1)` with unit integral:
/// the complementary quantile function of dℚ/dℙ.
///
/// Only `ln_q` is required. The integral defaults integrate in normal-score
/// space (`x = Φ(z)`), which tames the blow-up of `q` at `x → 0`.
pub trait PricingKernel: Send + Sync + fmt::Debug {
    /// `ln q(x)` for `x ∈ (0, 1)`.
    fn ln_q(&self, x: f64) -> f64;

    /// `ln q(Φ(z))`. Override when the kernel is naturally expressed in `z`.
    fn ln_q_normal(&self, z: f64) -> f64 {
        let x = norm_cdf(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        self.ln_q(x)
    }

    fn q(&self, x: f64) -> f64 {
        self.ln_q(x).exp()
    }

    /// `∫_a^b q(x) dx`.
    fn integral(&self, a: f64, b: f64) -> Result<f64> {
        self.power_integral(1.0, a, b)
    }

    /// `∫_a^b q(x)^β dx`; `+∞` when the integral diverges.
    fn power_integral(&self, beta: f64, a: f64, b: f64) -> Result<f64> {
        quadrature_power_integral(self, beta, a, b)
    }

    /// e^{rT}: converts a time-0 budget into the forward budget the
    /// quantile-form constraints use.
    fn compounding(&self) -> f64 {
        1.0
    }

    /// Whether `q(x) → ∞` as `x → 0⁺`, judged by probing.
    fn is_unbounded_at_zero(&self) -> bool {
        let probes = [1e-4, 1e-12, 1e-40, 1e-120, 1e-300];
        let vals: Vec<f64> = probes.iter().map(|&x| self.ln_q(x)).collect();
        vals.windows(2).all(|w| w[1] > w[0]) && vals[vals.len() - 1] > vals[0] + 1.0
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain {
            what: "a",
            value: a,
            domain: "[0, 1]",
        });
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::Domain {
            what: "b",
            value: b,
            domain: "[0, 1]",
        });
    }
    if a > b {
        return Err(Error::Domain {
            what: "a - b",
            value: a - b,
            domain: "(-inf, 0] (need a <= b)",
        });
    }
    Ok(())
}

/// `∫_a^b q^β` by adaptive quadrature after substituting `x = Φ(z)`.
pub fn quadrature_power_integral<K: PricingKernel + ?Sized>(k: &K, beta: f64, a: f64, b: f64) -> Result<f64> {
    check_interval(a, b)?;
    if a == b {
        return Ok(0.0);
    }
    let integrand = |z: f64| (beta * k.ln_q_normal(z) + norm_ln_pdf(z)).exp();
    normal_score_integral(integrand, norm_ppf(a), norm_ppf(b))
}

fn gamma_exponent(gamma: f64) -> Result<f64> {
    if gamma == 1.0 || !gamma.is_finite() {
        return Err(Error::invalid("gamma", format!("must be finite and != 1, got {gamma}")));
    }
    Ok(gamma / (gamma - 1.0))
}

/// `q(x)`, rejecting `x ∉ (0, 1)`.
pub fn kernel_quantile<K: PricingKernel + ?Sized>(k: &K, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(0, 1)",
        });
    }
    Ok(k.q(x))
}

/// `∫_a^b q(x) dx` for `0 ≤ a ≤ b ≤ 1`.
pub fn q_integral<K: PricingKernel + ?Sized>(k: &K, a: f64, b: f64) -> Result<f64> {
    check_interval(a, b)?;
    k.integral(a, b)
}

/// `I(a, b) = ∫_a^b q(x)^{γ/(γ−1)} dx`.
pub fn q_power_integral<K: PricingKernel + ?Sized>(k: &K, gamma: f64, a: f64, b: f64) -> Result<f64> {
    let beta = gamma_exponent(gamma)?;
    check_interval(a, b)?;
    k.power_integral(beta, a, b)
}

/// `e(γ) = E_ℙ[(dℚ/dℙ)^{γ/(γ−1)}] = ∫_0^1 q^{γ/(γ−1)}`.
pub fn e_gamma<K: PricingKernel + ?Sized>(k: &K, gamma: f64) -> Result<f64> {
    q_power_integral(k, gamma, 0.0, 1.0)
}

/// Which end of the ℙ-uniform scale of s_T the kernel blows up at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// μ ≥ r: dℚ/dℙ is nonincreasing in U = F_{s_T}(s_T).
    DecreasingInU,
    /// μ < r: dℚ/dℙ is increasing in U and blows up as U → 1.
    IncreasingInU,
}

/// Pricing kernel of European claims on s_T in the Black–Scholes market.
///
/// `q` is always exposed in its decreasing form; for μ < r the stored
/// orientation records that the ℙ-uniform index has been reflected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelQuantile {
    pub market: MarketParams,
    pub orientation: Orientation,
}

impl KernelQuantile {
    pub fn new(market: MarketParams) -> Self {
        let orientation = if market.mu >= market.r {
            Orientation::DecreasingInU
        } else {
            Orientation::IncreasingInU
        };
        Self { market, orientation }
    }

    /// `|θ|√T`, the log-standard-deviation of dℚ/dℙ.
    pub fn spread(&self) -> f64 {
        self.market.theta().abs() * self.market.horizon.sqrt()
    }

    /// dℚ/dℙ as a function of the ℙ-uniform `U = F_{s_T}(s_T)`, without
    /// re-indexing.
    pub fn density_ratio_at_uniform(&self, u: f64) -> f64 {
        let theta = self.market.theta();
        let t = self.market.horizon;
        (theta * (-theta * t / 2.0 - t.sqrt() * norm_ppf(u))).exp()
    }

    /// Position in the decreasing index of the scenario with ℙ-uniform `u`.
    pub fn decreasing_index(&self, u: f64) -> f64 {
        match self.orientation {
            Orientation::DecreasingInU => u,
            Orientation::IncreasingInU => 1.0 - u,
        }
    }

    /// `ln q(x)`, finite for `x ∈ (0, 1)` even where `q` overflows.
    pub fn ln_kernel_quantile(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain {
                what: "x",
                value: x,
                domain: "(0, 1)",
            });
        }
        Ok(self.ln_q(x))
    }
}

impl PricingKernel for KernelQuantile {
    fn ln_q(&self, x: f64) -> f64 {
        self.ln_q_normal(norm_ppf(x))
    }

    fn ln_q_normal(&self, z: f64) -> f64 {
        let s = self.spread();
        -0.5 * s * s - s * z
    }

    fn integral(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        let s = self.spread();
        Ok(norm_interval(norm_ppf(a) + s, norm_ppf(b) + s))
    }

    fn power_integral(&self, beta: f64, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        if a == b {
            return Ok(0.0);
        }
        let s = self.spread();
        let shift = beta * s;
        let ln_scale = 0.5 * beta * (beta - 1.0) * s * s;
        let za = norm_ppf(a) + shift;
        let zb = norm_ppf(b) + shift;
        let mass = norm_interval(za, zb);
        if mass == 0.0 {
            return Ok(0.0);
        }
        Ok((ln_scale + mass.ln()).exp())
    }

    fn compounding(&self) -> f64 {
        self.market.compounding()
    }

    fn is_unbounded_at_zero(&self) -> bool {
        self.spread() > 0.0
    }
}

impl KernelQuantile {
    /// `ln e(γ)`; finite for every γ ≠ 1 even when `e(γ)` overflows.
    pub fn ln_e_gamma(&self, gamma: f64) -> Result<f64> {
        let beta = gamma_exponent(gamma)?;
        let s = self.spread();
        Ok(0.5 * beta * (beta - 1.0) * s * s)
    }
}

/// Piecewise-constant kernel: `q = values[i]` on `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepKernel {
    edges: Vec<f64>,
    values: Vec<f64>,
    compounding: f64,
}

impl StepKernel {
    /// `edges` runs from 0 to 1 strictly increasing; `values` are positive and
    /// nonincreasing, one per cell. The values are rescaled to unit integral
    /// when `normalize` is set.
    pub fn new(edges: Vec<f64>, mut values: Vec<f64>, normalize: bool) -> Result<Self> {
        if edges.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::invalid("edges", "need one more edge than values"));
        }
        if edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
            return Err(Error::invalid("edges", "must start at 0 and end at 1"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("edges", "must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("values", "must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("values", "must be nonincreasing"));
        }
        if normalize {
            let total: f64 = values.iter().zip(edges.windows(2)).map(|(v, w)| v * (w[1] - w[0])).sum();
            values.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Self {
            edges,
            values,
            compounding: 1.0,
        })
    }

    /// Equal-width cells.
    pub fn uniform(values: Vec<f64>, normalize: bool) -> Result<Self> {
        let n = values.len();
        let edges = (0..=n).map(|i| i as f64 / n as f64).collect();
        Self::new(edges, values, normalize)
    }

    pub fn with_compounding(mut self, compounding: f64) -> Self {
        self.compounding = compounding;
        self
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn cell(&self, x: f64) -> usize {
        let i = self.edges.partition_point(|&e| e <= x);
        i.saturating_sub(1).min(self.values.len() - 1)
    }
}

impl PricingKernel for StepKernel {
    fn ln_q(&self, x: f64) -> f64 {
        self.values[self.cell(x)].ln()
    }

    fn power_integral(&self, beta: f64, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        let mut total = 0.0;
        for (i, w) in self.edges.windows(2).enumerate() {
            let lo = w[0].max(a);
            let hi = w[1].min(b);
            if hi > lo {
                total += self.values[i].powf(beta) * (hi - lo);
            }
        }
        Ok(total)
    }

    fn compounding(&self) -> f64 {
        self.compounding
    }

    fn is_unbounded_at_zero(&self) -> bool {
        false
    }
}

type LnQ = dyn Fn(f64) -> f64 + Send + Sync;

/// Kernel given by an arbitrary `ln q`; every integral goes through
/// adaptive quadrature.
#[derive(Clone)]
pub struct FnKernel {
    ln_q: Arc<LnQ>,
    compounding: f64,
}

impl FnKernel {
    pub fn new(ln_q: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            ln_q: Arc::new(ln_q),
            compounding: 1.0,
        }
    }

    pub fn with_compounding(mut self, compounding: f64) -> Self {
        self.compounding = compounding;
        self
    }
}

impl fmt::Debug for FnKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnKernel").field("compounding", &self.compounding).finish_non_exhaustive()
    }
}

impl PricingKernel for FnKernel {
    fn ln_q(&self, x: f64) -> f64 {
        (self.ln_q)(x)
    }

    fn compounding(&self) -> f64 {
        self.compounding
    }
}

/// `1 − Φ(z)` is occasionally handy to callers working in score space.
pub fn upper_tail(z: f64) -> f64 {
    norm_sf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> MarketParams {
        MarketParams::new(0.07, 0.02, 0.2, 1.0, 0.0).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MarketParams::new(0.07, 0.02, 0.0, 1.0, 0.0).is_err());
        assert!(MarketParams::new(0.07, 0.02, 0.2, -1.0, 0.0).is_err());
        assert!(MarketParams::new(f64::NAN, 0.02, 0.2, 1.0, 0.0).is_err());
    }

    #[test]
    fn theta_of_reference_market() {
        assert_relative_eq!(reference().theta(), 0.25, max_relative = 1e-14);
    }

    #[test]
    fn p_density_peak() {
        let sigma: f64 = 0.3;
        let m = MarketParams::new(sigma * sigma / 2.0, 0.0, sigma, 2.0, 0.0).unwrap();
        let peak = 1.0 / (sigma * (2.0 * std::f64::consts::PI * 2.0).sqrt());
        assert_relative_eq!(p_density(&m, 0.0), peak, max_relative = 1e-14);
    }

    #[test]
    fn densities_coincide_without_risk_premium() {
        let m = MarketParams::new(0.03, 0.03, 0.25, 1.5, 0.1).unwrap();
        for i in 0..20 {
            let x = -1.0 + 0.1 * i as f64;
            assert_eq!(p_density(&m, x), q_density(&m, x));
        }
    }

    #[test]
    fn kernel_is_one_at_vanishing_exponent() {
        let k = KernelQuantile::new(reference());
        let s = k.spread();
        let x = norm_cdf(-s / 2.0);
        assert_relative_eq!(k.q(x), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn flat_kernel_without_risk_premium() {
        let k = KernelQuantile::new(MarketParams::new(0.02, 0.02, 0.2, 1.0, 0.0).unwrap());
        for &x in &[1e-9, 0.1, 0.5, 0.99] {
            assert_eq!(k.q(x), 1.0);
        }
        assert!(!k.is_unbounded_at_zero());
    }

    #[test]
    fn kernel_domain_errors() {
        let k = KernelQuantile::new(reference());
        assert!(kernel_quantile(&k, 0.0).is_err());
        assert!(kernel_quantile(&k, 1.0).is_err());
        assert!(q_integral(&k, 0.6, 0.5).is_err());
        assert!(q_power_integral(&k, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn log_space_survives_overflow() {
        let k = KernelQuantile::new(MarketParams::with_theta(30.0, 5.0).unwrap());
        let s = k.spread();
        let ln = k.ln_kernel_quantile(1e-300).unwrap();
        assert_relative_eq!(ln, -0.5 * s * s - s * norm_ppf(1e-300), max_relative = 1e-12);
        let le = k.ln_e_gamma(1.0001).unwrap();
        assert!(le.is_finite() && le > 710.0);
    }

    #[test]
    fn negative_premium_flips_orientation() {
        let m = MarketParams::new(0.0, 0.05, 0.2, 1.0, 0.0).unwrap();
        let k = KernelQuantile::new(m);
        assert_eq!(k.orientation, Orientation::IncreasingInU);
        for &u in &[0.01, 0.3, 0.8, 0.999] {
            let x = k.decreasing_index(u);
            assert_relative_eq!(k.q(x), k.density_ratio_at_uniform(u), max_relative = 1e-9);
        }
        assert!(k.density_ratio_at_uniform(0.999) > k.density_ratio_at_uniform(0.5));
    }

    #[test]
    fn e_gamma_flat_market() {
        let k = KernelQuantile::new(MarketParams::with_theta(0.0, 1.0).unwrap());
        for &g in &[0.5, 1.5, 2.0, 7.0] {
            assert_relative_eq!(e_gamma(&k, g).unwrap(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn e_gamma_large_gamma_limit() {
        let k = KernelQuantile::new(reference());
        let far = e_gamma(&k, 1e8).unwrap();
        assert_relative_eq!(far, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn step_kernel_integrals_are_exact() {
        let k = StepKernel::new(vec![0.0, 0.25, 1.0], vec![3.0, 1.0 / 3.0], false).unwrap();
        assert_relative_eq!(k.integral(0.0, 1.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(k.integral(0.1, 0.5).unwrap(), 3.0 * 0.15 + 0.25 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(k.power_integral(2.0, 0.0, 1.0).unwrap(), 9.0 * 0.25 + 0.75 / 9.0, max_relative = 1e-15);
        assert!(StepKernel::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0], false).is_err());
    }

    #[test]
    fn fn_kernel_defaults_match_closed_form() {
        let bs = KernelQuantile::new(reference());
        let generic = FnKernel::new(move |x| bs.ln_q(x));
        for &(a, b) in &[(0.0, 0.05), (0.2, 0.7), (0.0, 1.0)] {
            assert_relative_eq!(generic.integral(a, b).unwrap(), bs.integral(a, b).unwrap(), max_relative = 1e-8);
        }
        assert!(generic.is_unbounded_at_zero());
    }

    #[test]
    fn fn_kernel_reports_divergence() {
        // q(x) = x^{-0.9}/10 is integrable, q^2 is not
        let k = FnKernel::new(|x: f64| -0.9 * x.ln() - 10f64.ln());
        assert!(k.integral(0.0, 1.0).unwrap().is_finite());
        assert_eq!(k.power_integral(2.0, 0.0, 1.0).unwrap(), f64::INFINITY);
    }
}
