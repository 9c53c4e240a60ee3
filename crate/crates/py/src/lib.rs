//! Python bindings: markets, utilities, payoffs and the two optimisers.

use std::str::FromStr;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use tailbound::market::{e_gamma, kernel_quantile, q_integral, q_power_integral, KernelQuantile, MarketParams, PricingKernel};
use tailbound::quantile::{audit_rearrangement, DiscreteRV, QuantilePayoff, StepPayoff};
use tailbound::risk::{expected_shortfall_avg, expected_utility, price, value_at_risk};
use tailbound::solve::{self, DigitalConstruction, DigitalOptions, EsFloor, LimitedOptions, SolveReport};
use tailbound::utility::{TailCertificate, UtilitySpec};
use tailbound::Error;

create_exception!(tailbound_py, TailboundError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::Domain { .. } | Error::Format(_) => PyValueError::new_err(e.to_string()),
        _ => TailboundError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for tailbound::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Black–Scholes market and its kernel quantile `Q(x)`.
#[pyclass(frozen, name = "Market")]
struct PyMarket {
    k: KernelQuantile,
}

#[pymethods]
impl PyMarket {
    #[new]
    #[pyo3(signature = (mu, r, sigma, horizon, s0 = 0.0))]
    fn new(mu: f64, r: f64, sigma: f64, horizon: f64, s0: f64) -> PyResult<Self> {
        Ok(Self {
            k: KernelQuantile::new(MarketParams::new(mu, r, sigma, horizon, s0).py()?),
        })
    }

    /// Market with market price of risk `theta` and zero rate.
    #[staticmethod]
    fn with_theta(theta: f64, horizon: f64) -> PyResult<Self> {
        Ok(Self {
            k: KernelQuantile::new(MarketParams::with_theta(theta, horizon).py()?),
        })
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.k.market.theta()
    }

    /// `|θ|√T`.
    #[getter]
    fn spread(&self) -> f64 {
        self.k.spread()
    }

    #[getter]
    fn compounding(&self) -> f64 {
        self.k.compounding()
    }

    fn kernel_quantile(&self, x: f64) -> PyResult<f64> {
        kernel_quantile(&self.k, x).py()
    }

    /// `∫_a^b Q`.
    fn integral(&self, a: f64, b: f64) -> PyResult<f64> {
        q_integral(&self.k, a, b).py()
    }

    /// `∫_a^b Q^{γ/(γ−1)}`.
    fn power_integral(&self, gamma: f64, a: f64, b: f64) -> PyResult<f64> {
        q_power_integral(&self.k, gamma, a, b).py()
    }

    fn e_gamma(&self, gamma: f64) -> PyResult<f64> {
        e_gamma(&self.k, gamma).py()
    }

    fn __repr__(&self) -> String {
        let m = self.k.market;
        format!("Market(mu={}, r={}, sigma={}, horizon={}, s0={})", m.mu, m.r, m.sigma, m.horizon, m.s0)
    }
}

/// A utility in text form, e.g. `kt:0.5:2.25`, `powgain:0.5`, `powloss:2`.
#[pyclass(frozen, name = "Utility")]
struct PyUtility {
    u: UtilitySpec,
}

#[pymethods]
impl PyUtility {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            u: UtilitySpec::from_str(spec).py()?,
        })
    }

    fn __call__(&self, x: f64) -> f64 {
        self.u.evaluate(x)
    }

    fn sup_value(&self) -> f64 {
        self.u.sup_value()
    }

    fn __str__(&self) -> String {
        self.u.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Utility('{}')", self.u)
    }
}

/// A payoff given by its quantile function on `[0, 1]`.
#[pyclass(frozen, name = "Payoff")]
struct PyPayoff {
    phi: QuantilePayoff,
}

#[pymethods]
impl PyPayoff {
    #[staticmethod]
    fn constant(c: f64) -> Self {
        Self {
            phi: QuantilePayoff::constant(c),
        }
    }

    /// `k2` on `[0, alpha)`, `k1` on `[alpha, 1]`.
    #[staticmethod]
    fn two_piece(alpha: f64, k2: f64, k1: f64) -> PyResult<Self> {
        Ok(Self {
            phi: QuantilePayoff::two_piece(alpha, k2, k1).py()?,
        })
    }

    /// Nondecreasing steps from `(x, value)` pairs; the first `x` must be 0.
    #[staticmethod]
    fn step(breakpoints: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            phi: QuantilePayoff::Step(StepPayoff::new(breakpoints).py()?),
        })
    }

    fn __call__(&self, x: f64) -> f64 {
        self.phi.evaluate(x)
    }

    /// `(discounted, undiscounted)` price.
    fn price(&self, market: &PyMarket) -> PyResult<(f64, f64)> {
        let p = price(&self.phi, &market.k).py()?;
        Ok((p.discounted, p.undiscounted))
    }

    fn expected_utility(&self, u: &PyUtility) -> PyResult<f64> {
        expected_utility(&self.phi, &u.u).py()
    }

    fn expected_shortfall(&self, p: f64) -> PyResult<f64> {
        expected_shortfall_avg(&self.phi, p).py()
    }

    fn value_at_risk(&self, p: f64) -> PyResult<f64> {
        value_at_risk(&self.phi, p).py()
    }

    #[pyo3(signature = (n = 1000))]
    fn is_increasing(&self, n: usize) -> bool {
        self.phi.is_increasing(n)
    }

    /// `(x, φ(x))` at `n` cell midpoints.
    fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        self.phi.sample(n)
    }
}

#[pyclass(frozen, name = "Digital")]
struct PyDigital {
    d: DigitalConstruction,
}

#[pymethods]
impl PyDigital {
    #[getter]
    fn alpha(&self) -> f64 {
        self.d.alpha
    }
    #[getter]
    fn k1(&self) -> f64 {
        self.d.k1
    }
    #[getter]
    fn k2(&self) -> f64 {
        self.d.k2
    }
    #[getter]
    fn objective(&self) -> f64 {
        self.d.objective
    }
    #[getter]
    fn certified_bound(&self) -> f64 {
        self.d.certified_bound
    }
    #[getter]
    fn budget_slack(&self) -> f64 {
        self.d.budget_slack
    }
    #[getter]
    fn es_slack(&self) -> f64 {
        self.d.es_slack
    }

    fn payoff(&self) -> PyPayoff {
        PyPayoff { phi: self.d.payoff() }
    }

    fn to_json(&self) -> PyResult<String> {
        tailbound::io::to_json(&self.d).py()
    }
}

#[pyclass(frozen, name = "LimitedSolution")]
struct PyLimited {
    r: SolveReport,
}

#[pymethods]
impl PyLimited {
    #[getter]
    fn p_star(&self) -> f64 {
        self.r.p_star
    }
    #[getter]
    fn c1(&self) -> f64 {
        self.r.c1
    }
    #[getter]
    fn c2(&self) -> f64 {
        self.r.c2
    }
    #[getter]
    fn value(&self) -> f64 {
        self.r.value
    }
    #[getter]
    fn binding(&self) -> bool {
        self.r.binding
    }
    /// `(p, V(p))` on the coarse grid.
    #[getter]
    fn curve(&self) -> Vec<(f64, f64)> {
        self.r.curve.clone()
    }

    fn payoff(&self) -> Option<PyPayoff> {
        self.r.payoff().map(|phi| PyPayoff { phi })
    }

    fn to_json(&self) -> PyResult<String> {
        tailbound::io::to_json(&self.r).py()
    }
}

/// Two-piece payoff reaching `target` under an ES floor `(p, level)`.
#[pyfunction]
#[pyo3(signature = (market, utility, p, level, budget, target, certificate = (-2.0, 0.75, 2.25), margin = 1.0))]
#[allow(clippy::too_many_arguments)]
fn digital_for_target(
    market: &PyMarket,
    utility: &PyUtility,
    p: f64,
    level: f64,
    budget: f64,
    target: f64,
    certificate: (f64, f64, f64),
    margin: f64,
) -> PyResult<PyDigital> {
    let (n, eta, c) = certificate;
    let mut opts = DigitalOptions::new(TailCertificate::left(n, eta, c).py()?);
    opts.margin = margin;
    let es = EsFloor::new(p, level).py()?;
    let d = solve::digital_for_target(&market.k, &utility.u, es, budget, target, &opts).py()?;
    Ok(PyDigital { d })
}

/// Maximises `∫u_I(φ)` under a budget and the floor `∫u_R(φ) ≥ level`.
#[pyfunction]
#[pyo3(signature = (market, loss_utility, utility, level, budget, grid = 64))]
fn solve_limited_liability(
    py: Python<'_>,
    market: &PyMarket,
    loss_utility: &PyUtility,
    utility: &PyUtility,
    level: f64,
    budget: f64,
    grid: usize,
) -> PyResult<PyLimited> {
    let opts = LimitedOptions {
        grid,
        ..LimitedOptions::default()
    };
    let (k, ur, ui) = (market.k, loss_utility.u.clone(), utility.u.clone());
    let r = py
        .detach(move || solve::solve_limited_liability(&k, &ur, &ui, level, budget, &opts))
        .py()?;
    Ok(PyLimited { r })
}

/// Rearrangement laws for equally likely scenarios; returns the name of each
/// check and whether it held.
#[pyfunction]
fn rearrangement_audit(f: Vec<f64>, g: Vec<f64>, x: Vec<f64>, q: Vec<f64>, k: f64) -> PyResult<Vec<(&'static str, bool)>> {
    let rv = |v: &[f64]| DiscreteRV::equally_likely(v).py();
    let c = audit_rearrangement(&rv(&f)?, &rv(&g)?, &rv(&x)?, &rv(&q)?, k).py()?;
    Ok(vec![
        ("distribution", c.distribution),
        ("hardy_littlewood", c.hardy_littlewood),
        ("max_min", c.max_min),
        ("parts", c.parts),
        ("idempotent", c.idempotent),
        ("reduction_price", c.reduction_price),
        ("reduction_u", c.reduction_u),
    ])
}

#[pymodule]
fn tailbound_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TailboundError", m.py().get_type::<TailboundError>())?;
    m.add_class::<PyMarket>()?;
    m.add_class::<PyUtility>()?;
    m.add_class::<PyPayoff>()?;
    m.add_class::<PyDigital>()?;
    m.add_class::<PyLimited>()?;
    m.add_function(wrap_pyfunction!(digital_for_target, m)?)?;
    m.add_function(wrap_pyfunction!(solve_limited_liability, m)?)?;
    m.add_function(wrap_pyfunction!(rearrangement_audit, m)?)?;
    Ok(())
}
