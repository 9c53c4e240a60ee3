//! Run configuration: a TOML file of flat keys, overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;
use tailbound::io::parse_num;
use tailbound::market::MarketParams;
use tailbound::risk::{Constraint, RiskSpec};
use tailbound::utility::{TailCertificate, UtilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Flags shared by every subcommand. Anything left unset falls back to the
/// config file, then to the command's defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with flat keys (mu, r, sigma, T, s0, utility, risk, ...).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// mu,r,sigma,T[,s0]
    #[arg(long, global = true)]
    pub market: Option<String>,
    /// Investor utility, e.g. kt:0.5:2.25, powgain:0.5.
    #[arg(long, global = true)]
    pub utility: Option<String>,
    /// Regulator's loss utility, e.g. powloss:2.
    #[arg(long, global = true)]
    pub loss_utility: Option<String>,
    /// es:p:L, ufloor:gammaR:L or none.
    #[arg(long, global = true)]
    pub risk: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub budget: Option<f64>,
    /// Comma-separated utility targets.
    #[arg(long, global = true)]
    pub targets: Option<String>,
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Left-tail certificate N:eta:c with u(x) ≥ −c|x|^eta for x ≤ N.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub certificate: Option<String>,
    /// Utility headroom of the digital construction.
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Atoms per random instance.
    #[arg(long, global = true)]
    pub atoms: Option<usize>,
    /// Comma-separated exponents for egamma.
    #[arg(long, global = true)]
    pub gammas: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mu: Option<f64>,
    r: Option<f64>,
    sigma: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    s0: Option<f64>,
    utility: Option<String>,
    loss_utility: Option<String>,
    risk: Option<String>,
    budget: Option<f64>,
    targets: Option<Vec<f64>>,
    grid: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    certificate: Option<String>,
    margin: Option<f64>,
    trials: Option<usize>,
    atoms: Option<usize>,
    gammas: Option<Vec<f64>>,
}

/// Per-command fallbacks.
pub struct Defaults {
    pub utility: &'static str,
    pub risk: &'static str,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub market: MarketParams,
    /// `u_I`.
    pub utility: UtilitySpec,
    /// `u_R`.
    pub loss_utility: UtilitySpec,
    pub risk: RiskSpec,
    pub targets: Vec<f64>,
    pub grid: usize,
    pub seed: u64,
    pub trials: usize,
    pub atoms: usize,
    pub gammas: Vec<f64>,
    pub certificate: TailCertificate,
    pub margin: f64,
    pub out: PathBuf,
    pub format: Format,
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| parse_num(t).map_err(|e| anyhow!("{e}")))
        .collect()
}

fn parse_fields(s: &str, sep: char) -> Result<Vec<f64>> {
    s.split(sep)
        .map(|t| parse_num(t).map_err(|e| anyhow!("{e}")))
        .collect()
}

pub fn parse_market(s: &str) -> Result<MarketParams> {
    let v = parse_fields(s, ',').with_context(|| format!("--market `{s}`"))?;
    let s0 = match v.len() {
        4 => 0.0,
        5 => v[4],
        n => bail!("--market expects mu,r,sigma,T[,s0], got {n} fields"),
    };
    Ok(MarketParams::new(v[0], v[1], v[2], v[3], s0)?)
}

pub fn parse_utility(s: &str) -> Result<UtilitySpec> {
    UtilitySpec::from_str(s).map_err(|e| anyhow!("utility `{s}`: {e}"))
}

pub fn parse_risk(s: &str, budget: f64) -> Result<RiskSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| parse_num(t).map_err(|e| anyhow!("risk `{s}`: {e}"));
    let constraint = match parts.as_slice() {
        ["none"] => Constraint::None,
        ["es", p, l] => Constraint::ExpectedShortfall { p: num(p)?, level: num(l)? },
        ["ufloor", g, l] => Constraint::UtilityFloor {
            utility: UtilitySpec::power_loss(num(g)?)?,
            level: num(l)?,
        },
        _ => bail!("risk `{s}`: expected es:p:L, ufloor:gammaR:L or none"),
    };
    Ok(RiskSpec::new(budget, constraint)?)
}

pub fn parse_certificate(s: &str) -> Result<TailCertificate> {
    let v = parse_fields(s, ':').with_context(|| format!("--certificate `{s}`"))?;
    if v.len() != 3 {
        bail!("--certificate expects N:eta:c, got `{s}`");
    }
    Ok(TailCertificate::left(v[0], v[1], v[2])?)
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl RunConfig {
    pub fn resolve(o: &Overrides, d: &Defaults) -> Result<Self> {
        let file = match &o.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };

        let market = match &o.market {
            Some(s) => parse_market(s)?,
            None => MarketParams::new(
                file.mu.unwrap_or(0.07),
                file.r.unwrap_or(0.02),
                file.sigma.unwrap_or(0.2),
                file.horizon.unwrap_or(1.0),
                file.s0.unwrap_or(0.0),
            )?,
        };
        let utility = parse_utility(o.utility.as_deref().or(file.utility.as_deref()).unwrap_or(d.utility))?;
        let loss_utility = parse_utility(o.loss_utility.as_deref().or(file.loss_utility.as_deref()).unwrap_or("powloss:2"))?;
        let budget = o.budget.or(file.budget).unwrap_or(1.0);
        let risk = parse_risk(o.risk.as_deref().or(file.risk.as_deref()).unwrap_or(d.risk), budget)?;
        let targets = match &o.targets {
            Some(s) => parse_list(s)?,
            None => file.targets.unwrap_or_else(|| vec![10.0, 100.0, 1000.0, 10000.0]),
        };
        let gammas = match &o.gammas {
            Some(s) => parse_list(s)?,
            None => file.gammas.unwrap_or_else(|| vec![1.1, 1.5, 2.0, 3.0, 5.0, 10.0]),
        };
        let certificate = parse_certificate(o.certificate.as_deref().or(file.certificate.as_deref()).unwrap_or("-2:0.75:2.25"))?;

        let cfg = RunConfig {
            market,
            utility,
            loss_utility,
            risk,
            targets,
            grid: o.grid.or(file.grid).unwrap_or(64),
            seed: o.seed.or(file.seed).unwrap_or(42),
            trials: o.trials.or(file.trials).unwrap_or(10_000),
            atoms: o.atoms.or(file.atoms).unwrap_or(8),
            gammas,
            certificate,
            margin: o.margin.or(file.margin).unwrap_or(1.0),
            out: o.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("tailbound_out")),
            format: o.format.or(file.format).unwrap_or(Format::Csv),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.targets.is_empty() || self.targets.iter().any(|t| !t.is_finite()) {
            bail!("targets must be a nonempty list of finite numbers");
        }
        if self.targets.windows(2).any(|w| !(w[0] < w[1])) {
            bail!("targets must be strictly increasing");
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|&g| !(g > 0.0 && g != 1.0 && g.is_finite())) {
            bail!("gammas must be positive, finite and different from 1");
        }
        if self.grid < 3 {
            bail!("grid must be at least 3, got {}", self.grid);
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            bail!("margin must be positive, got {}", self.margin);
        }
        if self.trials == 0 {
            bail!("trials must be positive");
        }
        if self.atoms < 2 {
            bail!("atoms must be at least 2, got {}", self.atoms);
        }
        fs::create_dir_all(&self.out).with_context(|| format!("creating output directory {}", self.out.display()))?;
        Ok(())
    }
}
