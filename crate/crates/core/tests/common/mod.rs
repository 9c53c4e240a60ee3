#![allow(dead_code)]

use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use tailbound::market::{KernelQuantile, MarketParams};

pub fn normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// `∫_a^b q` for a kernel with spread `s`, from the normal CDF alone.
pub fn kernel_mass(s: f64, a: f64, b: f64) -> f64 {
    let n = normal();
    let shift = |x: f64| {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            n.cdf(n.inverse_cdf(x) + s)
        }
    };
    shift(b) - shift(a)
}

pub fn reference() -> KernelQuantile {
    KernelQuantile::new(MarketParams::new(0.07, 0.02, 0.2, 1.0, 0.0).unwrap())
}

pub fn market() -> impl Strategy<Value = MarketParams> {
    (-0.1f64..0.2, 0.0f64..0.06, 0.1f64..0.5, 0.1f64..3.0, -1.0f64..5.0)
        .prop_map(|(mu, r, sigma, t, s0)| MarketParams::new(mu, r, sigma, t, s0).unwrap())
}

pub fn theta_market() -> impl Strategy<Value = MarketParams> {
    (-1.0f64..1.0, 0.1f64..5.0).prop_map(|(theta, t)| MarketParams::with_theta(theta, t).unwrap())
}

/// Strictly increasing step values.
pub fn increasing_steps(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(0.01f64..2.0, n), -5.0f64..5.0).prop_map(|(incs, start)| {
        let mut v = start;
        incs.iter()
            .map(|d| {
                v += d;
                v
            })
            .collect()
    })
}
