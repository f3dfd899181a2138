//! Serialisable report types and their JSON / CSV writers.

use ghsel::ghlik::{Design, Psi};
use ghsel::sampler::ChainTrace;
use ghsel::simulate::BaselineFamily;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One line of the JSON-lines trace.
#[derive(Debug, Serialize)]
pub struct TraceLine<'a> {
    pub chain: usize,
    pub iter: usize,
    pub gamma: &'a str,
    pub class: &'static str,
    pub log_ml: f64,
    pub log_prior: f64,
}

pub fn write_trace<W: Write>(trace: &ChainTrace, mut w: W) -> std::io::Result<()> {
    for s in &trace.samples {
        let line = TraceLine {
            chain: s.chain,
            iter: s.iter,
            gamma: &s.gamma,
            class: s.class.label(),
            log_ml: s.log_ml,
            log_prior: s.log_prior,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ModelRow {
    pub gamma: String,
    pub class: String,
    /// Renormalised over the visited models.
    pub prob: f64,
    /// Share of retained samples.
    pub prob_frequency: f64,
    pub log_ml: f64,
    pub log_prior: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PipRow {
    pub variable: String,
    pub any: f64,
    pub time_level: f64,
    pub hazard_level: f64,
    pub both: f64,
    pub tied: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Coef {
    pub variable: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PsiReport {
    pub nu: f64,
    pub theta0: f64,
    pub theta: Vec<Coef>,
    pub eta: Vec<Coef>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct NaturalReport {
    pub mu: f64,
    pub sigma: f64,
    pub alpha: Vec<Coef>,
    pub beta: Vec<Coef>,
}

/// Point estimate behind the top model's score (the MLE under the LCM
/// prior, the MAP under the product prior), in both parametrisations.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Estimates {
    pub gamma: String,
    pub estimator: String,
    pub status: String,
    pub psi: PsiReport,
    pub natural: NaturalReport,
}

impl Estimates {
    pub fn new(gamma: &str, estimator: &str, status: &str, psi: &Psi, design: &Design, names: &[String]) -> Self {
        let coefs =
            |cols: &[usize], vals: &[f64]| cols.iter().zip(vals).map(|(&c, &v)| Coef { variable: names[c].clone(), value: v }).collect();
        let nat = psi.natural(design);
        let beta_cols = if design.aft { &design.time_cols } else { &design.haz_cols };
        Estimates {
            gamma: gamma.to_string(),
            estimator: estimator.to_string(),
            status: status.to_string(),
            psi: PsiReport {
                nu: psi.nu,
                theta0: psi.theta0,
                theta: coefs(&design.time_cols, &psi.theta),
                eta: coefs(&design.haz_cols, &psi.eta),
            },
            natural: NaturalReport {
                mu: nat.mu,
                sigma: nat.sigma,
                alpha: coefs(&design.time_cols, &nat.alpha),
                beta: coefs(beta_cols, &nat.beta),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChainReport {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub retained: usize,
    pub models_visited: usize,
    pub acceptance_rate: f64,
    pub failed_proposals: usize,
    /// Proposed and accepted counts by move kind.
    pub moves: BTreeMap<String, [usize; 2]>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HpmReport {
    pub level: f64,
    pub models: Vec<ModelRow>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub p: usize,
    pub events: usize,
    pub covariates: Vec<String>,
    pub standardized: bool,
    pub baseline: String,
    pub prior: String,
    pub method: String,
    pub chain: ChainReport,
    pub model_probs: Vec<ModelRow>,
    pub hazard_probs: BTreeMap<String, f64>,
    pub pip: Vec<PipRow>,
    pub hpm: HpmReport,
    pub top_model: Option<Estimates>,
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct ClassRow<'a> {
    class: &'a str,
    prob: f64,
}

#[derive(Serialize)]
struct CoefRow<'a> {
    parametrisation: &'a str,
    parameter: String,
    value: f64,
}

/// Writes `summary.json` plus the CSV tables into `dir`.
pub fn write_summary(dir: &Path, s: &Summary) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(s)?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    write_rows(&dir.join("model_probs.csv"), &s.model_probs)?;
    let classes: Vec<ClassRow> = s.hazard_probs.iter().map(|(c, p)| ClassRow { class: c, prob: *p }).collect();
    write_rows(&dir.join("hazard_probs.csv"), &classes)?;
    write_rows(&dir.join("pip.csv"), &s.pip)?;
    write_rows(&dir.join("hpm.csv"), &s.hpm.models)?;
    let mut coefs = Vec::new();
    if let Some(e) = &s.top_model {
        let psi = [("nu", e.psi.nu), ("theta0", e.psi.theta0)];
        coefs.extend(psi.iter().map(|(k, v)| CoefRow { parametrisation: "psi", parameter: k.to_string(), value: *v }));
        coefs.extend(e.psi.theta.iter().map(|c| CoefRow {
            parametrisation: "psi",
            parameter: format!("theta[{}]", c.variable),
            value: c.value,
        }));
        coefs.extend(e.psi.eta.iter().map(|c| CoefRow {
            parametrisation: "psi",
            parameter: format!("eta[{}]", c.variable),
            value: c.value,
        }));
        let nat = [("mu", e.natural.mu), ("sigma", e.natural.sigma)];
        coefs.extend(nat.iter().map(|(k, v)| CoefRow { parametrisation: "natural", parameter: k.to_string(), value: *v }));
        coefs.extend(e.natural.alpha.iter().map(|c| CoefRow {
            parametrisation: "natural",
            parameter: format!("alpha[{}]", c.variable),
            value: c.value,
        }));
        coefs.extend(e.natural.beta.iter().map(|c| CoefRow {
            parametrisation: "natural",
            parameter: format!("beta[{}]", c.variable),
            value: c.value,
        }));
    }
    write_rows(&dir.join("coefficients.csv"), &coefs)
}

/// One row of the exact posterior table.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EnumRow {
    pub gamma: String,
    pub class: String,
    pub log_ml: f64,
    pub log_prior: f64,
    pub posterior: f64,
}

pub fn write_enumeration<W: Write>(rows: &[EnumRow], w: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()
}

/// Baseline description for the truth sidecar.
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BaselineReport {
    LogNormal { mu: f64, sigma: f64 },
    Pgw { scale: f64, shape: f64, power: f64 },
}

impl From<&BaselineFamily> for BaselineReport {
    fn from(b: &BaselineFamily) -> Self {
        match *b {
            BaselineFamily::LogNormal { mu, sigma } => BaselineReport::LogNormal { mu, sigma },
            BaselineFamily::Pgw { scale, shape, power } => BaselineReport::Pgw { scale, shape, power },
        }
    }
}

/// Sidecar written next to a simulated data set.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TruthSidecar {
    pub gamma: String,
    pub class: String,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub baseline: BaselineReport,
    pub n: usize,
    pub rho: f64,
    pub target_censoring: f64,
    pub observed_censoring: f64,
    pub cutoff: f64,
    pub seed: u64,
}

/// Per-replicate scores of a simulation study.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReplicateRow {
    pub rep: usize,
    pub hpm: String,
    pub modal_class: String,
    pub hazard_correct: bool,
    pub sensitivity: f64,
    pub specificity: f64,
    pub prob_true_class: f64,
    pub prob_true_model: f64,
    pub prob_null: f64,
    pub prob_ah: f64,
    pub prob_ph: f64,
    pub prob_aft: f64,
    pub prob_gh: f64,
    pub acceptance_rate: f64,
}

/// Means over completed replicates; undefined scores are skipped.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AggregateRow {
    pub n: usize,
    pub p: usize,
    pub truth: String,
    pub truth_class: String,
    pub reps: usize,
    pub completed: usize,
    pub failed: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub hazard_accuracy: f64,
    pub prob_true_class: f64,
    pub prob_null: f64,
    pub prob_ah: f64,
    pub prob_ph: f64,
    pub prob_aft: f64,
    pub prob_gh: f64,
}

pub fn write_replicates(dir: &Path, rows: &[ReplicateRow], agg: &AggregateRow) -> std::io::Result<()> {
    write_rows(&dir.join("replicates.csv"), rows)?;
    write_rows(&dir.join("aggregate.csv"), std::slice::from_ref(agg))
}
