//! `ghsel`: Bayesian variable and hazard-structure selection for survival data.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ghsel_cli::commands::{self, prepare};
use ghsel_cli::data::{read_dataset_file, write_dataset};
use ghsel_cli::report::{write_enumeration, write_replicates, write_summary, write_trace};
use ghsel_cli::settings::Settings;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ghsel", version, about = "Variable and hazard-structure selection under the general hazard model")]
struct Cli {
    /// Flat key=value config file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the model-space sampler on a data set and summarise the posterior.
    Select {
        /// CSV with columns time,status,<covariates...>.
        data: PathBuf,
        /// Directory for the trace and summary files.
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Score every model exactly (small p only).
    Enumerate {
        data: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Largest p to enumerate.
        #[arg(long)]
        max_p: Option<usize>,
    },
    /// Simulate a data set and write it with a truth sidecar.
    Simulate {
        /// Output CSV; the truth goes to the same path with .truth.json.
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo study: simulate, select and score repeatedly.
    Replicate {
        /// Directory for replicates.csv and aggregate.csv.
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Coefficient prior: lcm or product.
    #[arg(long)]
    prior: Option<String>,
    /// g of the LCM prior.
    #[arg(long)]
    g: Option<f64>,
    /// g of the product prior on time-level effects.
    #[arg(long)]
    gct: Option<f64>,
    /// g of the product prior on hazard-level effects.
    #[arg(long)]
    gch: Option<f64>,
    /// Mix the LCM evidence over the robust hyper-g prior.
    #[arg(long)]
    robust_g: bool,
    /// Baseline kernel: normal, logistic, sech or t2.
    #[arg(long)]
    baseline: Option<String>,
    /// Keep covariates on their original scale.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Credible level of the HPM set.
    #[arg(long)]
    level: Option<f64>,
    /// Starting model: null, screening or an indicator such as 0200.
    #[arg(long)]
    init: Option<String>,
    /// Start each fit from the current model's optimum.
    #[arg(long)]
    warm_start: bool,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Correlation decay between neighbouring covariates.
    #[arg(long)]
    rho: Option<f64>,
    /// Hazard structure of the preset truth: null, AH, PH, AFT or GH.
    #[arg(long)]
    class: Option<String>,
    /// Explicit truth indicator such as 0202020200.
    #[arg(long)]
    truth: Option<String>,
    /// Target censoring rate.
    #[arg(long)]
    censoring: Option<f64>,
    /// lognormal:MU,SIGMA or pgw:SCALE,SHAPE,POWER.
    #[arg(long)]
    sim_baseline: Option<String>,
}

/// Collects `(key, value)` pairs for every flag that was given.
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn opt<T: ToString>(&mut self, key: &'static str, v: &Option<T>) {
        if let Some(v) = v {
            self.0.push((key, v.to_string()));
        }
    }

    fn on(&mut self, key: &'static str, set: bool, value: &str) {
        if set {
            self.0.push((key, value.to_string()));
        }
    }

    fn model(&mut self, m: &ModelArgs) {
        self.opt("prior", &m.prior);
        self.opt("g", &m.g);
        self.opt("gct", &m.gct);
        self.opt("gch", &m.gch);
        self.on("robust_g", m.robust_g, "true");
        self.opt("baseline", &m.baseline);
        self.on("standardize", m.no_standardize, "false");
    }

    fn chain(&mut self, c: &ChainArgs) {
        self.opt("iters", &c.iters);
        self.opt("burnin", &c.burnin);
        self.opt("thin", &c.thin);
        self.opt("chains", &c.chains);
        self.opt("seed", &c.seed);
        self.opt("level", &c.level);
        self.opt("init", &c.init);
        self.on("warm_start", c.warm_start, "true");
    }

    fn sim(&mut self, s: &SimArgs) {
        self.opt("n", &s.n);
        self.opt("p", &s.p);
        self.opt("rho", &s.rho);
        self.opt("class", &s.class);
        self.opt("truth", &s.truth);
        self.opt("censoring", &s.censoring);
        self.opt("sim_baseline", &s.sim_baseline);
    }
}

fn resolve(config: Option<&Path>, flags: Overrides) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = config {
        s.apply_file(path)?;
    }
    for (k, v) in flags.0 {
        s.set(k, &v).with_context(|| format!("--{}", k.replace('_', "-")))?;
    }
    s.validate()?;
    Ok(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let mut flags = Overrides(Vec::new());
    match &cli.command {
        Command::Select { data, out, model, chain } => {
            flags.model(model);
            flags.chain(chain);
            let s = resolve(config, flags)?;
            let raw = read_dataset_file(data).with_context(|| format!("reading {}", data.display()))?;
            let ds = prepare(raw, &s)?;
            let (summary, trace) = commands::select(&ds, &s)?;
            std::fs::create_dir_all(out)?;
            write_trace(&trace, create(&out.join("trace.jsonl"))?)?;
            write_summary(out, &summary)?;
            eprintln!(
                "{} models visited, acceptance {:.3}; top model {}",
                summary.chain.models_visited,
                summary.chain.acceptance_rate,
                summary.model_probs.first().map_or("-", |m| m.gamma.as_str())
            );
        }
        Command::Enumerate { data, out, model, max_p } => {
            flags.model(model);
            flags.opt("max_p", max_p);
            let s = resolve(config, flags)?;
            let raw = read_dataset_file(data).with_context(|| format!("reading {}", data.display()))?;
            let rows = commands::enumerate(&prepare(raw, &s)?, &s)?;
            match out {
                Some(path) => write_enumeration(&rows, create(path)?)?,
                None => write_enumeration(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Simulate { out, sim, seed } => {
            flags.sim(sim);
            flags.opt("seed", seed);
            let s = resolve(config, flags)?;
            let (ds, truth) = commands::simulate(&s)?;
            write_dataset(&ds, create(out)?)?;
            let side = out.with_extension("truth.json");
            std::fs::write(&side, serde_json::to_string_pretty(&truth)? + "\n")?;
        }
        Command::Replicate { out, sim, model, chain, reps, workers } => {
            flags.sim(sim);
            flags.model(model);
            flags.chain(chain);
            flags.opt("reps", reps);
            flags.opt("workers", workers);
            let s = resolve(config, flags)?;
            let (rows, agg) = commands::replicate(&s)?;
            std::fs::create_dir_all(out)?;
            write_replicates(out, &rows, &agg)?;
            eprintln!(
                "{}/{} replicates; sensitivity {:.3}, specificity {:.3}, hazard accuracy {:.3}",
                agg.completed, agg.reps, agg.sensitivity, agg.specificity, agg.hazard_accuracy
            );
        }
    }
    Ok(())
}
