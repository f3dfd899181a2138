//! The four subcommands as library functions, free of argument parsing.

use crate::report::{
    AggregateRow, ChainReport, EnumRow, Estimates, HpmReport, ModelRow, PipRow, ReplicateRow, Summary, TruthSidecar,
};
use crate::settings::{PriorKind, Settings, SettingsError};
use ghsel::ghlik::{Dataset, Design};
use ghsel::marglik::{MarglikCache, Method, Scorer};
use ghsel::modelspace::{enumerate_models_capped, log_model_prior, Gamma, HazardClass, ModelError};
use ghsel::sampler::{run_chain, ChainError, ChainTrace};
use ghsel::simulate::{simulate_dataset, SimError};
use ghsel::summarize::{normalise_logs, score_selection, PosteriorSummary, SummaryError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Settings(#[from] SettingsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("data set rejected: {0}")]
    Data(#[from] ghsel::ghlik::DataError),
    #[error("{p} covariates exceed the enumeration cap of {cap}; raise it with --max-p")]
    EnumerationCap { p: usize, cap: usize },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Standardises covariates when the settings ask for it.
pub fn prepare(data: Dataset, s: &Settings) -> Result<Dataset, CommandError> {
    Ok(if s.standardize { data.standardized()? } else { data })
}

fn prior_label(s: &Settings) -> String {
    match s.prior {
        PriorKind::Lcm if s.robust_g => "lcm (robust hyper-g)".into(),
        PriorKind::Lcm => format!("lcm (g = {})", s.g),
        PriorKind::Product => format!("product (g_ct = {}, g_ch = {})", s.gct, s.gch),
    }
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Ila => "ILA",
        Method::IlaRobustG => "ILA, robust hyper-g",
        Method::La => "LA",
    }
}

/// Runs the sampler and builds every summary.
pub fn select(data: &Dataset, s: &Settings) -> Result<(Summary, ChainTrace), CommandError> {
    s.validate()?;
    let cache = MarglikCache::new();
    let cfg = s.marglik();
    let scorer = Scorer::new(data, cfg, &cache);
    let chain = s.chain();
    let trace = run_chain(&scorer, data.p(), &s.model_prior(), &chain)?;
    let post = PosteriorSummary::from_trace(&trace, data.p(), s.level)?;

    let row = |gamma: &str, prob: f64| {
        let (log_ml, log_prior) = trace.visited.get(gamma).copied().unwrap_or((f64::NAN, f64::NAN));
        let class = gamma.parse::<Gamma>().map(|g| g.classify().label()).unwrap_or("?");
        ModelRow {
            gamma: gamma.to_string(),
            class: class.to_string(),
            prob,
            prob_frequency: post.model_probs_frequency.get(gamma).copied().unwrap_or(0.0),
            log_ml,
            log_prior,
        }
    };
    let model_probs: Vec<ModelRow> = ghsel::summarize::ranked(&post.model_probs).iter().map(|(k, p)| row(k, *p)).collect();
    let hpm = HpmReport { level: s.level, models: post.hpm_set.iter().map(|(k, p)| row(k, *p)).collect() };
    let pip = data
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let r = post.pip_by_role[j];
            PipRow { variable: name.clone(), any: post.pip_any[j], time_level: r[0], hazard_level: r[1], both: r[2], tied: r[3] }
        })
        .collect();
    let top_model = post.top_model().and_then(|g| {
        let rec = scorer.record(&g, None).ok()?;
        let estimator = if s.prior == PriorKind::Product { "MAP" } else { "MLE" };
        let design = Design::from_gamma(&g);
        Some(Estimates::new(&g.key(), estimator, &format!("{:?}", rec.fit.status), &rec.fit.psi_opt, &design, data.names()))
    });
    let summary = Summary {
        n: data.n(),
        p: data.p(),
        events: data.n_events(),
        covariates: data.names().to_vec(),
        standardized: s.standardize,
        baseline: s.baseline.label().to_string(),
        prior: prior_label(s),
        method: method_label(cfg.method()).to_string(),
        chain: ChainReport {
            iterations: chain.iterations,
            burn_in: chain.burn_in,
            thin: chain.thin,
            chains: chain.n_chains,
            seed: chain.seed,
            retained: trace.samples.len(),
            models_visited: trace.visited.len(),
            acceptance_rate: trace.acceptance_rate(),
            failed_proposals: trace.failed,
            moves: trace.moves.iter().map(|(k, m)| (k.label().to_string(), [m.proposed, m.accepted])).collect(),
        },
        model_probs,
        hazard_probs: post.hazard_probs.iter().map(|(c, p)| (c.label().to_string(), *p)).collect(),
        pip,
        hpm,
        top_model,
    };
    Ok((summary, trace))
}

/// Exact posterior over every model, sorted by decreasing probability.
pub fn enumerate(data: &Dataset, s: &Settings) -> Result<Vec<EnumRow>, CommandError> {
    s.validate()?;
    if data.p() > s.max_p {
        return Err(CommandError::EnumerationCap { p: data.p(), cap: s.max_p });
    }
    let models = enumerate_models_capped(data.p(), s.max_p)?;
    let cache = MarglikCache::new();
    let scorer = Scorer::new(data, s.marglik(), &cache);
    let prior = s.model_prior();
    let scored: Vec<(Gamma, f64, f64)> = models
        .par_iter()
        .map(|m| {
            use ghsel::marglik::ModelScore;
            (m.clone(), scorer.log_ml(m, None), log_model_prior(m, &prior))
        })
        .collect();
    let logs: BTreeMap<String, f64> = scored.iter().map(|(m, ml, pr)| (m.key(), ml + pr)).collect();
    let post = normalise_logs(&logs);
    let mut rows: Vec<EnumRow> = scored
        .iter()
        .map(|(m, ml, pr)| EnumRow {
            gamma: m.key(),
            class: m.classify().label().to_string(),
            log_ml: *ml,
            log_prior: *pr,
            posterior: post[&m.key()],
        })
        .collect();
    rows.sort_by(|a, b| b.posterior.total_cmp(&a.posterior).then_with(|| a.gamma.cmp(&b.gamma)));
    Ok(rows)
}

/// Simulates one data set (unstandardised) and its truth sidecar.
pub fn simulate(s: &Settings) -> Result<(Dataset, TruthSidecar), CommandError> {
    simulate_with_seed(s, s.seed, 0)
}

fn simulate_with_seed(s: &Settings, seed: u64, stream: u64) -> Result<(Dataset, TruthSidecar), CommandError> {
    let cfg = s.simulation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let sim = simulate_dataset(&cfg, &mut rng)?;
    let censored = sim.data.status().iter().filter(|&&d| d == 0.0).count();
    let truth = TruthSidecar {
        gamma: cfg.truth.gamma.key(),
        class: cfg.truth.gamma.classify().label().to_string(),
        alpha: cfg.truth.alpha.clone(),
        beta: cfg.truth.beta.clone(),
        baseline: (&cfg.baseline).into(),
        n: cfg.n,
        rho: cfg.rho,
        target_censoring: cfg.target_censoring,
        observed_censoring: censored as f64 / cfg.n as f64,
        cutoff: sim.cutoff,
        seed,
    };
    Ok((sim.data, truth))
}

fn one_replicate(s: &Settings, rep: usize, truth: &Gamma) -> Result<ReplicateRow, CommandError> {
    let (data, _) = simulate_with_seed(s, s.seed, rep as u64 + 1)?;
    let data = prepare(data, s)?;
    let cache = MarglikCache::new();
    let scorer = Scorer::new(&data, s.marglik(), &cache);
    let mut chain = s.chain();
    chain.seed = s.seed.wrapping_add(rep as u64 + 1);
    let trace = run_chain(&scorer, data.p(), &s.model_prior(), &chain)?;
    let post = PosteriorSummary::from_trace(&trace, data.p(), s.level)?;
    let hpm = post.top_model().unwrap_or_else(|| Gamma::null(data.p()));
    let (sensitivity, specificity) = score_selection(&hpm, truth)?;
    let class = truth.classify();
    let modal = post.modal_class();
    let hp = |c: HazardClass| post.hazard_probs[&c];
    Ok(ReplicateRow {
        rep,
        hpm: hpm.key(),
        modal_class: modal.label().to_string(),
        hazard_correct: modal == class,
        sensitivity,
        specificity,
        prob_true_class: hp(class),
        prob_true_model: post.model_probs.get(&truth.key()).copied().unwrap_or(0.0),
        prob_null: hp(HazardClass::Null),
        prob_ah: hp(HazardClass::AH),
        prob_ph: hp(HazardClass::PH),
        prob_aft: hp(HazardClass::AFT),
        prob_gh: hp(HazardClass::GH),
        acceptance_rate: trace.acceptance_rate(),
    })
}

/// Mean of the finite entries; NaN when there are none.
fn finite_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Averages per-replicate rows into one aggregate row.
pub fn aggregate(s: &Settings, truth: &Gamma, rows: &[ReplicateRow], failed: usize) -> AggregateRow {
    let m = |f: fn(&ReplicateRow) -> f64| finite_mean(rows.iter().map(f));
    AggregateRow {
        n: s.n,
        p: s.p,
        truth: truth.key(),
        truth_class: truth.classify().label().to_string(),
        reps: s.reps,
        completed: rows.len(),
        failed,
        sensitivity: m(|r| r.sensitivity),
        specificity: m(|r| r.specificity),
        hazard_accuracy: m(|r| f64::from(u8::from(r.hazard_correct))),
        prob_true_class: m(|r| r.prob_true_class),
        prob_null: m(|r| r.prob_null),
        prob_ah: m(|r| r.prob_ah),
        prob_ph: m(|r| r.prob_ph),
        prob_aft: m(|r| r.prob_aft),
        prob_gh: m(|r| r.prob_gh),
    }
}

/// Simulate, select and score `s.reps` times on a pool of `s.workers`
/// threads. A failing replicate is reported on stderr and skipped.
pub fn replicate(s: &Settings) -> Result<(Vec<ReplicateRow>, AggregateRow), CommandError> {
    s.validate()?;
    let truth = s.simulation()?.truth.gamma;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(s.workers)
        .build()
        .map_err(|e| CommandError::Pool(e.to_string()))?;
    let results: Vec<Result<ReplicateRow, CommandError>> =
        pool.install(|| (0..s.reps).into_par_iter().map(|r| one_replicate(s, r, &truth)).collect());
    let mut rows = Vec::new();
    let mut failed = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                eprintln!("replicate {r} failed: {e}");
            }
        }
    }
    let agg = aggregate(s, &truth, &rows, failed);
    Ok((rows, agg))
}
