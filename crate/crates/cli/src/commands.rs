use std::fs::{self, File};
use std::io::BufWriter;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tailbound::io::{extended_f64, from_json, to_json};
use tailbound::market::{quadrature_power_integral, KernelQuantile};
use tailbound::quantile::{audit_rearrangement, check_hardy_littlewood, DiscreteRV, QuantilePayoff, StepPayoff};
use tailbound::risk::{check_feasible, expected_utility, Constraint, FeasibilityReport};
use tailbound::solve::{
    digital_for_target, divergence_sweep, is_divergent, solve_limited_liability, DigitalOptions, EsFloor, LimitedOptions, SolveReport,
};

use crate::config::{Format, RunConfig};
use crate::output::{read_table, write_json, Table};

/// A run that finished but whose result fails its own audit.
#[derive(Debug)]
pub struct AuditFailure(pub String);

impl std::fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "audit failed: {}", self.0)
    }
}

impl std::error::Error for AuditFailure {}

/// Usage errors in the risk flag are reported as such, before any solving.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn es_floor(cfg: &RunConfig) -> Result<EsFloor> {
    match cfg.risk.constraint {
        Constraint::ExpectedShortfall { p, level } => Ok(EsFloor::new(p, level)?),
        _ => Err(UsageError("this command needs --risk es:p:L".into()).into()),
    }
}

fn digital_options(cfg: &RunConfig) -> DigitalOptions {
    let mut opts = DigitalOptions::new(cfg.certificate);
    opts.margin = cfg.margin;
    opts
}

#[derive(Serialize)]
struct TargetAudit {
    target: f64,
    objective: f64,
    objective_ok: bool,
    feasibility: FeasibilityReport,
}

#[derive(Serialize)]
struct RoundTrip {
    file: String,
    objective: f64,
    feasibility: FeasibilityReport,
    identical: bool,
}

#[derive(Serialize)]
struct EsAudit {
    constructions: Vec<TargetAudit>,
    round_trip: RoundTrip,
    passed: bool,
}

fn payoff_file(phi: &QuantilePayoff, cfg: &RunConfig) -> Result<std::path::PathBuf> {
    let QuantilePayoff::TwoPiece { alpha, k2, k1 } = *phi else {
        bail!("expected a two-piece payoff");
    };
    match cfg.format {
        Format::Csv => {
            let path = cfg.out.join("payoff_curve.csv");
            let step = StepPayoff::new(vec![(0.0, k2), (alpha, k1)])?;
            step.write_csv(BufWriter::new(File::create(&path)?))?;
            Ok(path)
        }
        Format::Json => write_json(&cfg.out, "payoff_curve", phi),
    }
}

fn load_payoff(path: &std::path::Path) -> Result<QuantilePayoff> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(from_json(&fs::read_to_string(path)?)?)
    } else {
        let step = StepPayoff::read_csv(File::open(path)?)?;
        match step.breakpoints() {
            [(_, k2), (alpha, k1)] => Ok(QuantilePayoff::two_piece(*alpha, *k2, *k1)?),
            _ => Ok(QuantilePayoff::Step(step)),
        }
    }
}

pub fn es_demo(cfg: &RunConfig) -> Result<()> {
    let k = KernelQuantile::new(cfg.market);
    let es = es_floor(cfg)?;
    let opts = digital_options(cfg);
    let mut table = Table::new(
        "digital_table",
        &[
            "target",
            "alpha",
            "k1",
            "k2",
            "objective",
            "certified_bound",
            "price",
            "budget_slack",
            "es_slack",
            "halvings",
        ],
    );
    let mut audits = Vec::new();
    let mut last = None;
    for &target in &cfg.targets {
        let d = digital_for_target(&k, &cfg.utility, es, cfg.risk.budget, target, &opts)?;
        table.push(vec![
            target,
            d.alpha,
            d.k1,
            d.k2,
            d.objective,
            d.certified_bound,
            d.price.discounted,
            d.budget_slack,
            d.es_slack,
            d.halvings as f64,
        ]);
        let phi = d.payoff();
        let objective = expected_utility(&phi, &cfg.utility)?;
        audits.push(TargetAudit {
            target,
            objective,
            objective_ok: objective >= target,
            feasibility: check_feasible(&phi, &k, &cfg.risk)?,
        });
        println!(
            "target {target:>12.4e}  alpha {:.3e}  k1 {:.6e}  k2 {:.6e}  objective {:.6e}",
            d.alpha, d.k1, d.k2, d.objective
        );
        last = Some(phi);
    }
    let table_path = table.write(&cfg.out, cfg.format)?;
    let phi = last.expect("targets are nonempty");
    let path = payoff_file(&phi, cfg)?;
    let loaded = load_payoff(&path)?;
    let round_trip = RoundTrip {
        file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        objective: expected_utility(&loaded, &cfg.utility)?,
        feasibility: check_feasible(&loaded, &k, &cfg.risk)?,
        identical: loaded.segments() == phi.segments(),
    };
    let passed = audits.iter().all(|a| a.objective_ok && a.feasibility.feasible())
        && round_trip.identical
        && round_trip.feasibility.feasible()
        && round_trip.objective >= *cfg.targets.last().expect("targets are nonempty");
    let audit = EsAudit {
        constructions: audits,
        round_trip,
        passed,
    };
    write_json(&cfg.out, "audit", &audit)?;
    println!("wrote {} and {}", table_path.display(), path.display());
    if !passed {
        return Err(AuditFailure("a construction violates its budget, floor or target; see audit.json".into()).into());
    }
    println!("audit passed");
    Ok(())
}

#[derive(Serialize)]
struct SolveAudit {
    feasibility: FeasibilityReport,
    #[serde(with = "extended_f64")]
    utility: f64,
    #[serde(with = "extended_f64")]
    reported_value: f64,
    report_round_trip: bool,
    payoff_increasing: bool,
    passed: bool,
}

pub fn ll_solve(cfg: &RunConfig) -> Result<()> {
    let Constraint::UtilityFloor { utility: u_r, level } = &cfg.risk.constraint else {
        return Err(UsageError("ll-solve needs --risk ufloor:gammaR:L".into()).into());
    };
    let k = KernelQuantile::new(cfg.market);
    let opts = LimitedOptions {
        grid: cfg.grid,
        ..LimitedOptions::default()
    };
    let report = solve_limited_liability(&k, u_r, &cfg.utility, *level, cfg.risk.budget, &opts)?;
    println!(
        "p* {:.8}  C1 {:.6e}  C2 {:.6e}  V {:.10e}  binding {}",
        report.p_star, report.c1, report.c2, report.value, report.binding
    );
    let report_path = write_json(&cfg.out, "solve_report", &report)?;

    let mut curve = Table::new("value_curve", &["p", "value"]);
    for &(p, v) in &report.curve {
        curve.push(vec![p, v]);
    }
    curve.write(&cfg.out, cfg.format)?;

    let phi = report.payoff().context("the optimum has no payoff representation")?;
    let mut payoff = Table::new("payoff", &["x", "value"]);
    for (x, v) in phi.sample(1000) {
        payoff.push(vec![x, v]);
    }
    let payoff_path = payoff.write(&cfg.out, cfg.format)?;

    let loaded: SolveReport = from_json(&fs::read_to_string(&report_path)?)?;
    let report_round_trip = to_json(&loaded)? == to_json(&report)?;
    let (header, rows) = read_table(&payoff_path)?;
    let col = header.iter().position(|h| h == "value").context("payoff table has no value column")?;
    let payoff_increasing = rows.windows(2).all(|w| w[1][col] >= w[0][col]);
    let feasibility = check_feasible(&phi, &k, &cfg.risk)?;
    let utility = expected_utility(&phi, &cfg.utility)?;
    let value_ok = (utility - report.value).abs() <= 1e-6 * report.value.abs().max(1.0);
    let passed = report_round_trip && payoff_increasing && feasibility.feasible() && value_ok;
    write_json(
        &cfg.out,
        "audit",
        &SolveAudit {
            feasibility,
            utility,
            reported_value: report.value,
            report_round_trip,
            payoff_increasing,
            passed,
        },
    )?;
    if !passed {
        return Err(AuditFailure("the two-stage optimum fails its re-audit; see audit.json".into()).into());
    }
    println!("audit passed");
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let k = KernelQuantile::new(cfg.market);
    let es = es_floor(cfg)?;
    let rows = divergence_sweep(
        &k,
        &cfg.utility,
        &cfg.loss_utility,
        es,
        cfg.risk.budget,
        &cfg.targets,
        &digital_options(cfg),
    )?;
    let mut table = Table::new(
        "sweep_table",
        &["target", "achieved", "loss_utility", "alpha", "k1", "k2", "bond_only"],
    );
    for r in &rows {
        table.push(vec![
            r.target,
            r.achieved,
            r.loss_utility,
            r.alpha,
            r.k1,
            r.k2,
            if r.bond_only { 1.0 } else { 0.0 },
        ]);
        println!(
            "target {:>12.4e}  achieved {:.6e}  loss utility {:.6e}",
            r.target, r.achieved, r.loss_utility
        );
    }
    let path = table.write(&cfg.out, cfg.format)?;
    println!("wrote {}; loss utility strictly falling: {}", path.display(), is_divergent(&rows));
    Ok(())
}

pub fn egamma(cfg: &RunConfig) -> Result<()> {
    let k = KernelQuantile::new(cfg.market);
    let mut table = Table::new("egamma", &["gamma", "closed_form", "quadrature", "rel_error"]);
    for &g in &cfg.gammas {
        let closed = k.ln_e_gamma(g)?.exp();
        let quad = quadrature_power_integral(&k, g / (g - 1.0), 0.0, 1.0)?;
        let rel = if closed.is_finite() {
            (quad - closed).abs() / closed
        } else if quad == closed {
            0.0
        } else {
            f64::INFINITY
        };
        println!("gamma {g:>8.4}  closed {closed:.12e}  quadrature {quad:.12e}  rel {rel:.2e}");
        table.push(vec![g, closed, quad, rel]);
    }
    let path = table.write(&cfg.out, cfg.format)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct Violations {
    distribution: usize,
    hardy_littlewood: usize,
    max_min: usize,
    parts: usize,
    idempotent: usize,
    reduction_price: usize,
    reduction_u: usize,
}

impl Violations {
    fn total(&self) -> usize {
        self.distribution + self.hardy_littlewood + self.max_min + self.parts + self.idempotent + self.reduction_price + self.reduction_u
    }

    fn rows(&self) -> [(&'static str, usize); 7] {
        [
            ("distribution", self.distribution),
            ("hardy_littlewood", self.hardy_littlewood),
            ("max_min", self.max_min),
            ("parts", self.parts),
            ("idempotent", self.idempotent),
            ("reduction_price", self.reduction_price),
            ("reduction_u", self.reduction_u),
        ]
    }
}

#[derive(Serialize)]
struct RearrangeSummary {
    seed: u64,
    trials: usize,
    atoms: usize,
    violations: Violations,
    /// Smallest `E[f^X g^X] − E[f g]` seen.
    min_hardy_littlewood_margin: f64,
}

/// Values on a coarse lattice half the time, so that ties are common.
fn draw(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, lattice: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if lattice {
                rng.random_range(lo as i64..=hi as i64) as f64
            } else {
                rng.random_range(lo..hi)
            }
        })
        .collect()
}

pub fn rearrange_check(cfg: &RunConfig) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.atoms;
    let mut v = Violations::default();
    let mut min_margin = f64::INFINITY;
    for trial in 0..cfg.trials {
        let lattice = trial % 2 == 0;
        let f = DiscreteRV::equally_likely(&draw(&mut rng, n, -5.0, 5.0, lattice))?;
        let g = DiscreteRV::equally_likely(&draw(&mut rng, n, 0.0, 5.0, lattice))?;
        let mut order: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        order.shuffle(&mut rng);
        let x = DiscreteRV::equally_likely(&order)?;
        let q = DiscreteRV::equally_likely(&draw(&mut rng, n, 1.0, 4.0, lattice))?;
        let level = rng.random_range(-3i64..=3) as f64;
        let c = audit_rearrangement(&f, &g, &x, &q, level)?;
        let hl = check_hardy_littlewood(&f, &g, &x)?;
        min_margin = min_margin.min(hl.rhs - hl.lhs);
        v.distribution += usize::from(!c.distribution);
        v.hardy_littlewood += usize::from(!c.hardy_littlewood);
        v.max_min += usize::from(!c.max_min);
        v.parts += usize::from(!c.parts);
        v.idempotent += usize::from(!c.idempotent);
        v.reduction_price += usize::from(!c.reduction_price);
        v.reduction_u += usize::from(!c.reduction_u);
    }
    for (name, count) in v.rows() {
        println!("{name:<18} {count} violations in {} trials", cfg.trials);
    }
    let total = v.total();
    let summary = RearrangeSummary {
        seed: cfg.seed,
        trials: cfg.trials,
        atoms: n,
        violations: v,
        min_hardy_littlewood_margin: min_margin,
    };
    match cfg.format {
        Format::Json => {
            write_json(&cfg.out, "rearrange_summary", &summary)?;
        }
        Format::Csv => {
            let mut text = String::from("check,violations,trials\n");
            for (name, count) in summary.violations.rows() {
                text.push_str(&format!("{name},{count},{}\n", cfg.trials));
            }
            fs::write(cfg.out.join("rearrange_summary.csv"), text)?;
        }
    }
    if total > 0 {
        return Err(AuditFailure(format!("{total} rearrangement identities failed")).into());
    }
    Ok(())
}
