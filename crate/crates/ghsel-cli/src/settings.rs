//! Run settings: built-in defaults, overridden by a flat `key=value` file,
//! overridden in turn by command-line flags.

use ghsel::baseline::BaselineKernel;
use ghsel::marglik::MarglikConfig;
use ghsel::modelspace::{Gamma, HazardClass, ModelPriorConfig};
use ghsel::priors::{CoefficientPrior, CommonPrior, GMode};
use ghsel::sampler::{ChainConfig, InitStrategy};
use ghsel::simulate::{BaselineFamily, SimConfig, Truth};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SettingsError {
    #[error("config line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("bad value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Keys accepted in a config file, in documentation order.
pub const KEYS: &[&str] = &[
    "prior", "g", "gct", "gch", "robust_g", "baseline", "iters", "burnin", "thin", "chains", "seed", "level",
    "standardize", "init", "warm_start", "max_p", "n", "p", "rho", "class", "truth", "censoring", "sim_baseline",
    "reps", "workers",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Lcm,
    Product,
}

/// Every tunable of every subcommand, already resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub prior: PriorKind,
    pub g: f64,
    pub gct: f64,
    pub gch: f64,
    pub robust_g: bool,
    pub baseline: BaselineKernel,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub level: f64,
    pub standardize: bool,
    pub init: InitStrategy,
    pub warm_start: bool,
    pub max_p: usize,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub class: HazardClass,
    /// Explicit truth indicator; overrides `class` when set.
    pub truth: Option<Gamma>,
    pub censoring: f64,
    pub sim_baseline: BaselineFamily,
    pub reps: usize,
    pub workers: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let chain = ChainConfig::default();
        Settings {
            prior: PriorKind::Lcm,
            g: 1.0,
            gct: 1.0,
            gch: 1.0,
            robust_g: false,
            baseline: BaselineKernel::Normal,
            iters: chain.iterations,
            burnin: chain.burn_in,
            thin: chain.thin,
            chains: chain.n_chains,
            seed: chain.seed,
            level: 0.95,
            standardize: true,
            init: InitStrategy::Null,
            warm_start: false,
            max_p: ghsel::modelspace::ENUMERATION_CAP,
            n: 1000,
            p: 10,
            rho: 0.7,
            class: HazardClass::PH,
            truth: None,
            censoring: 0.25,
            sim_baseline: BaselineFamily::LogNormal { mu: 1.55, sigma: 0.7 },
            reps: 20,
            workers: 1,
        }
    }
}

fn bad(key: &str, value: &str, reason: impl ToString) -> SettingsError {
    SettingsError::Value { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SettingsError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| bad(key, value, e))
}

fn flag(key: &str, value: &str) -> Result<bool, SettingsError> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// Parses `lognormal:MU,SIGMA` or `pgw:SCALE,SHAPE,POWER`.
pub fn parse_sim_baseline(value: &str) -> Result<BaselineFamily, SettingsError> {
    let (family, args) = value.split_once(':').unwrap_or((value, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',').map(|a| num("sim_baseline", a)).collect::<Result<_, _>>()?
    };
    let fam = match (family.trim(), nums.as_slice()) {
        ("lognormal", []) => BaselineFamily::LogNormal { mu: 1.55, sigma: 0.7 },
        ("lognormal", &[mu, sigma]) => BaselineFamily::LogNormal { mu, sigma },
        ("pgw", &[scale, shape, power]) => BaselineFamily::Pgw { scale, shape, power },
        _ => return Err(bad("sim_baseline", value, "use lognormal:MU,SIGMA or pgw:SCALE,SHAPE,POWER")),
    };
    fam.validate().map_err(|e| bad("sim_baseline", value, e))?;
    Ok(fam)
}

pub fn parse_class(value: &str) -> Result<HazardClass, SettingsError> {
    HazardClass::ALL
        .into_iter()
        .find(|c| c.label().eq_ignore_ascii_case(value.trim()))
        .ok_or_else(|| bad("class", value, "expected null, AH, PH, AFT or GH"))
}

pub fn parse_baseline(value: &str) -> Result<BaselineKernel, SettingsError> {
    BaselineKernel::from_label(value.trim()).ok_or_else(|| bad("baseline", value, "expected normal, logistic, sech or t2"))
}

pub fn parse_prior(value: &str) -> Result<PriorKind, SettingsError> {
    match value.trim() {
        "lcm" => Ok(PriorKind::Lcm),
        "product" => Ok(PriorKind::Product),
        _ => Err(bad("prior", value, "expected lcm or product")),
    }
}

fn parse_init(value: &str) -> Result<InitStrategy, SettingsError> {
    match value.trim() {
        "null" => Ok(InitStrategy::Null),
        "screening" => Ok(InitStrategy::Screening),
        key => key.parse().map(InitStrategy::Given).map_err(|e: ghsel::modelspace::ModelError| bad("init", value, e)),
    }
}

impl Settings {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SettingsError> {
        match key {
            "prior" => self.prior = parse_prior(value)?,
            "g" => self.g = num(key, value)?,
            "gct" => self.gct = num(key, value)?,
            "gch" => self.gch = num(key, value)?,
            "robust_g" => self.robust_g = flag(key, value)?,
            "baseline" => self.baseline = parse_baseline(value)?,
            "iters" => self.iters = num(key, value)?,
            "burnin" => self.burnin = num(key, value)?,
            "thin" => self.thin = num(key, value)?,
            "chains" => self.chains = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "level" => self.level = num(key, value)?,
            "standardize" => self.standardize = flag(key, value)?,
            "init" => self.init = parse_init(value)?,
            "warm_start" => self.warm_start = flag(key, value)?,
            "max_p" => self.max_p = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "class" => self.class = parse_class(value)?,
            "truth" => {
                self.truth = Some(value.trim().parse().map_err(|e: ghsel::modelspace::ModelError| bad(key, value, e))?)
            }
            "censoring" => self.censoring = num(key, value)?,
            "sim_baseline" => self.sim_baseline = parse_sim_baseline(value)?,
            "reps" => self.reps = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            _ => return Err(bad(key, value, "unknown key")),
        }
        Ok(())
    }

    /// Applies a config file body. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), SettingsError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(SettingsError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(SettingsError::UnknownKey { line: i + 1, key: k.to_string() });
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), SettingsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SettingsError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        self.apply_text(&text)
    }

    /// Checks ranges that the library would otherwise reject mid-run.
    pub fn validate(&self) -> Result<(), SettingsError> {
        for (k, v) in [("g", self.g), ("gct", self.gct), ("gch", self.gch)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(k, &v.to_string(), "must be positive"));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(bad("level", &self.level.to_string(), "must lie in (0, 1)"));
        }
        if self.robust_g && self.prior == PriorKind::Product {
            return Err(bad("robust_g", "true", "the robust hyper-g prior applies to the lcm prior only"));
        }
        if !(0.0..1.0).contains(&self.censoring) {
            return Err(bad("censoring", &self.censoring.to_string(), "must lie in [0, 1)"));
        }
        if self.workers == 0 {
            return Err(bad("workers", "0", "need at least one worker"));
        }
        self.chain().validate().map_err(|e| bad("iters", &self.iters.to_string(), e))
    }

    pub fn marglik(&self) -> MarglikConfig {
        let prior = match self.prior {
            PriorKind::Lcm => CoefficientPrior::Lcm {
                g_e: self.g,
                mode: if self.robust_g { GMode::RobustHyper } else { GMode::Fixed },
            },
            PriorKind::Product => CoefficientPrior::Product { g_ct: self.gct, g_ch: self.gch },
        };
        MarglikConfig { kernel: self.baseline, prior, common: CommonPrior::default(), ..Default::default() }
    }

    pub fn chain(&self) -> ChainConfig {
        ChainConfig {
            iterations: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            n_chains: self.chains,
            seed: self.seed,
            init: self.init.clone(),
            warm_start: self.warm_start,
        }
    }

    pub fn model_prior(&self) -> ModelPriorConfig {
        ModelPriorConfig::default()
    }

    /// Simulation settings; an explicit truth indicator keeps the preset
    /// effect sizes of its class on the columns it selects.
    pub fn simulation(&self) -> Result<SimConfig, SettingsError> {
        let mut cfg = SimConfig::standard(self.n, self.p, self.class);
        cfg.rho = self.rho;
        cfg.target_censoring = self.censoring;
        cfg.baseline = self.sim_baseline;
        if let Some(t) = &self.truth {
            if t.p() != self.p {
                return Err(bad("truth", &t.key(), format!("has {} codes but p = {}", t.p(), self.p)));
            }
            cfg.truth = truth_from_gamma(t);
        }
        Ok(cfg)
    }
}

/// Coefficients for an arbitrary indicator: the k-th active column takes the
/// k-th preset effect (cycling), on the levels its code names.
pub fn truth_from_gamma(gamma: &Gamma) -> Truth {
    use ghsel::simulate::{EFFECTS, GH_ALPHA, GH_BETA};
    let p = gamma.p();
    let (mut alpha, mut beta) = (vec![0.0; p], vec![0.0; p]);
    let mut k = 0;
    for (j, &c) in gamma.codes().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let e = EFFECTS[k % 4];
        match c {
            1 => alpha[j] = e,
            2 => beta[j] = e,
            3 => {
                alpha[j] = GH_ALPHA[k % 4];
                beta[j] = GH_BETA[k % 4];
            }
            _ => {
                alpha[j] = e;
                beta[j] = e;
            }
        }
        k += 1;
    }
    Truth { gamma: gamma.clone(), alpha, beta }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut s = Settings::default();
        s.apply_text("# study\nprior = product\ngct=2.5\n\nseed=9 # trailing\nsim_baseline=pgw:1,1,2\n").unwrap();
        assert_eq!(s.prior, PriorKind::Product);
        assert_eq!(s.gct, 2.5);
        assert_eq!(s.seed, 9);
        assert_eq!(s.sim_baseline, BaselineFamily::Pgw { scale: 1.0, shape: 1.0, power: 2.0 });
        s.set("seed", "3").unwrap();
        assert_eq!(s.seed, 3);
    }

    #[test]
    fn file_errors_name_lines() {
        let mut s = Settings::default();
        assert_eq!(
            s.apply_text("seed=1\nbogus=2\n"),
            Err(SettingsError::UnknownKey { line: 2, key: "bogus".into() })
        );
        assert!(matches!(s.apply_text("seed 1"), Err(SettingsError::Syntax { line: 1, .. })));
        assert!(s.apply_text("thin=two").is_err());
    }

    #[test]
    fn validation() {
        let s = Settings { robust_g: true, prior: PriorKind::Product, ..Default::default() };
        assert!(s.validate().is_err());
        let s = Settings { burnin: 20_000, ..Default::default() };
        assert!(s.validate().is_err());
        assert!(Settings::default().validate().is_ok());
    }

    #[test]
    fn explicit_truth() {
        let t = truth_from_gamma(&"0201".parse().unwrap());
        assert_eq!(t.beta, vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.alpha, vec![0.0, 0.0, 0.0, -1.0]);
        let t = truth_from_gamma(&"4400".parse().unwrap());
        assert_eq!(t.alpha, t.beta);
    }
}
