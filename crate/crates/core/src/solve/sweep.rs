//! Target sweeps showing that ever higher S-shaped utility under an
//! expected-shortfall floor drives a concave loss utility to `−inf`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::extended_f64;
use crate::market::PricingKernel;
use crate::utility::UtilitySpec;

use super::digital::{digital_for_target, DigitalOptions, EsFloor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target: f64,
    /// Expected `u_I` utility of the constructed payoff.
    pub achieved: f64,
    /// `∫ u_R(min(φ, 0))`.
    #[serde(with = "extended_f64")]
    pub loss_utility: f64,
    pub alpha: f64,
    pub k1: f64,
    pub k2: f64,
    /// The target is met by the bond alone, without taking losses.
    pub bond_only: bool,
}

/// Builds one construction per target (in parallel) and evaluates the loss
/// utility of each. Targets must be strictly increasing.
pub fn divergence_sweep<K: PricingKernel + ?Sized>(
    k: &K,
    u_i: &UtilitySpec,
    u_r: &UtilitySpec,
    es: EsFloor,
    budget: f64,
    targets: &[f64],
    opts: &DigitalOptions,
) -> Result<Vec<SweepRow>> {
    if targets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("targets", "must be strictly increasing"));
    }
    let bond = budget * k.compounding();
    targets
        .par_iter()
        .map(|&target| {
            if u_i.evaluate(bond) >= target && bond >= es.level {
                return Ok(SweepRow {
                    target,
                    achieved: u_i.evaluate(bond),
                    loss_utility: u_r.evaluate(bond.min(0.0)),
                    alpha: 0.0,
                    k1: bond,
                    k2: bond,
                    bond_only: true,
                });
            }
            let d = digital_for_target(k, u_i, es, budget, target, opts)?;
            let loss_utility = d.alpha * u_r.evaluate(d.k2.min(0.0)) + (1.0 - d.alpha) * u_r.evaluate(d.k1.min(0.0));
            Ok(SweepRow {
                target,
                achieved: d.objective,
                loss_utility,
                alpha: d.alpha,
                k1: d.k1,
                k2: d.k2,
                bond_only: false,
            })
        })
        .collect()
}

/// Whether the achieved column is nondecreasing and the loss column
/// strictly decreasing.
pub fn is_divergent(rows: &[SweepRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].achieved >= w[0].achieved && w[1].loss_utility < w[0].loss_utility)
}
