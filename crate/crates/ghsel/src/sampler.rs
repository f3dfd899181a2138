//! Extended add-delete-swap Metropolis–Hastings over model indicators.
//!
//! Every proposal draws, in order: the move, then the index (or indices),
//! then the new code. Randomness is routed through [`Chooser`] so the same
//! code path can be driven by an RNG or enumerated exhaustively.

use crate::marglik::ModelScore;
use crate::modelspace::{get_valid_idx, log_model_prior, Gamma, HazardClass, ModelPriorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("burn-in {burn_in} must be below the number of iterations {iterations}")]
    BurnIn { burn_in: usize, iterations: usize },
    #[error("thinning interval must be at least 1")]
    Thin,
    #[error("at least one chain is required")]
    NoChains,
    #[error("initial model has {got} variables, data has {want}")]
    InitLength { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MoveKind {
    ANull,
    AD,
    ADGh,
    Swap,
    Change,
    ChangeAll,
}

impl MoveKind {
    pub const ALL: [MoveKind; 6] =
        [MoveKind::ANull, MoveKind::AD, MoveKind::ADGh, MoveKind::Swap, MoveKind::Change, MoveKind::ChangeAll];

    pub fn label(self) -> &'static str {
        match self {
            MoveKind::ANull => "A_null",
            MoveKind::AD => "A/D",
            MoveKind::ADGh => "A/D_GH",
            MoveKind::Swap => "S",
            MoveKind::Change => "C",
            MoveKind::ChangeAll => "C^A",
        }
    }
}

/// Move-selection probabilities for a state, indexed like [`MoveKind::ALL`].
///
/// "All equal" means every position carries the same code (no zeros);
/// "mixed" means some positions are zero. For GH, "all 3s" means every
/// position is 3 and "mixed" means codes in {0, 3} with at least one zero.
pub fn move_probs(gamma: &Gamma) -> [f64; 6] {
    let c = gamma.counts();
    let p = gamma.p();
    let all_same = c.contains(&p) && c[0] != p;
    match gamma.classify() {
        HazardClass::Null => [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        HazardClass::AH | HazardClass::PH if all_same => [0.0, 0.5, 0.0, 0.0, 0.25, 0.25],
        HazardClass::AH | HazardClass::PH => [0.0, 0.5, 0.0, 0.1, 0.2, 0.2],
        HazardClass::AFT if all_same => [0.0, 0.6, 0.0, 0.0, 0.0, 0.4],
        HazardClass::AFT => [0.0, 0.6, 0.0, 0.2, 0.0, 0.2],
        HazardClass::GH => {
            if c[0] + c[3] == p {
                if c[3] == p {
                    [0.0, 0.0, 0.5, 0.0, 0.25, 0.25]
                } else {
                    [0.0, 0.0, 0.5, 0.15, 0.15, 0.2]
                }
            } else {
                [0.0, 0.0, 0.5, 0.25, 0.25, 0.0]
            }
        }
    }
}

fn move_prob(gamma: &Gamma, m: MoveKind) -> f64 {
    move_probs(gamma)[m as usize]
}

/// Source of the discrete choices a proposal makes.
pub trait Chooser {
    /// Index in `0..n`, uniformly.
    fn uniform(&mut self, n: usize) -> usize;
    /// Index with probability proportional to `w`.
    fn weighted(&mut self, w: &[f64]) -> usize;
}

/// RNG-backed chooser.
pub struct RngChooser<'r, R: Rng>(pub &'r mut R);

impl<R: Rng> Chooser for RngChooser<'_, R> {
    fn uniform(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
    fn weighted(&mut self, w: &[f64]) -> usize {
        let total: f64 = w.iter().sum();
        let mut u = self.0.random::<f64>() * total;
        let mut last = 0;
        for (i, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                last = i;
                if u < wi {
                    return i;
                }
                u -= wi;
            }
        }
        last
    }
}

/// A proposed move with its path densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub gamma: Gamma,
    pub kind: MoveKind,
    pub log_q_fwd: f64,
    pub log_q_rev: f64,
}

impl Proposal {
    pub fn log_hastings(&self) -> f64 {
        self.log_q_rev - self.log_q_fwd
    }
}

fn valid_idx(g: &Gamma) -> Vec<usize> {
    get_valid_idx(g).expect("GH state")
}

/// Density of the A_null move that would re-create `g` from the null model.
fn a_null_density(p: f64) -> f64 {
    1.0 / (4.0 * p)
}

/// Draw a proposal from `gamma`.
pub fn propose<C: Chooser>(gamma: &Gamma, ch: &mut C) -> Proposal {
    let probs = move_probs(gamma);
    let kind = MoveKind::ALL[ch.weighted(&probs)];
    let p = gamma.p();
    let pf = p as f64;
    let pm = probs[kind as usize];
    let codes = gamma.codes();
    let (next, q_fwd, q_rev) = match kind {
        MoveKind::ANull => {
            let j = ch.uniform(p);
            let v = 1 + ch.uniform(4) as u8;
            let g2 = gamma.with(j, v);
            let rev = if g2.classify() == HazardClass::GH {
                move_prob(&g2, MoveKind::ADGh) / valid_idx(&g2).len() as f64
            } else {
                move_prob(&g2, MoveKind::AD) / pf
            };
            (g2, a_null_density(pf), rev)
        }
        MoveKind::AD => {
            let j = ch.uniform(p);
            let add = match gamma.classify() {
                HazardClass::AH => 1,
                HazardClass::PH => 2,
                HazardClass::AFT => 4,
                other => unreachable!("A/D drawn in class {other}"),
            };
            let g2 = gamma.with(j, if codes[j] > 0 { 0 } else { add });
            let rev = if g2.is_null() { a_null_density(pf) } else { move_prob(&g2, MoveKind::AD) / pf };
            (g2, pm / pf, rev)
        }
        MoveKind::ADGh => {
            let v_set = valid_idx(gamma);
            if v_set.is_empty() {
                // nothing may be added or removed without leaving GH
                (gamma.clone(), pm, pm)
            } else {
                let nv = v_set.len() as f64;
                let j = v_set[ch.uniform(v_set.len())];
                if codes[j] > 0 {
                    let g2 = gamma.with(j, 0);
                    let rev = if g2.is_null() {
                        a_null_density(pf)
                    } else {
                        move_prob(&g2, MoveKind::ADGh) / valid_idx(&g2).len() as f64 / 3.0
                    };
                    (g2, pm / nv, rev)
                } else {
                    let v = 1 + ch.uniform(3) as u8;
                    let g2 = gamma.with(j, v);
                    let rev = move_prob(&g2, MoveKind::ADGh) / valid_idx(&g2).len() as f64;
                    (g2, pm / nv / 3.0, rev)
                }
            }
        }
        MoveKind::Change => {
            let nz: Vec<usize> = (0..p).filter(|&j| codes[j] != 0).collect();
            let j = nz[ch.uniform(nz.len())];
            let choices: Vec<u8> = [1u8, 2, 3].into_iter().filter(|&v| v != codes[j]).collect();
            let g2 = gamma.with(j, choices[ch.uniform(2)]);
            let n = nz.len() as f64;
            let rev = move_prob(&g2, MoveKind::Change) / n / 2.0;
            (g2, pm / n / 2.0, rev)
        }
        MoveKind::Swap => {
            let j1 = ch.uniform(p);
            let v1 = codes[j1];
            let others: Vec<usize> = (0..p).filter(|&j| codes[j] != v1).collect();
            assert!(!others.is_empty(), "swap drawn in an all-equal state");
            let j2 = others[ch.uniform(others.len())];
            let v2 = codes[j2];
            let mut new = codes.to_vec();
            let special = v1 + v2 == 3;
            if !special {
                new[j1] = v2;
                new[j2] = v1;
            } else {
                let pair = if v1 == 1 || v1 == 2 { [(0, 3), (3, 0)] } else { [(1, 2), (2, 1)] };
                let (a, b) = pair[ch.uniform(2)];
                new[j1] = a;
                new[j2] = b;
            }
            let g2 = Gamma::new(new).expect("swap keeps codes valid");
            let nc = g2.codes();
            let p_o_new = (0..p).filter(|&j| nc[j] != nc[j1]).count() as f64;
            let mut fwd = pm / pf / others.len() as f64;
            let mut rev = move_prob(&g2, MoveKind::Swap) / pf / p_o_new;
            if special {
                fwd /= 2.0;
            }
            if nc[j1] + nc[j2] == 3 {
                rev /= 2.0;
            }
            (g2, fwd, rev)
        }
        MoveKind::ChangeAll => match gamma.classify() {
            HazardClass::AFT => {
                let v = 1 + ch.uniform(3) as u8;
                let g2 = Gamma::new(codes.iter().map(|&c| if c == 4 { v } else { c }).collect())
                    .expect("relabelled AFT model");
                let rev = if g2.classify() == HazardClass::GH {
                    move_prob(&g2, MoveKind::ChangeAll)
                } else {
                    move_prob(&g2, MoveKind::ChangeAll) / 2.0
                };
                (g2, pm / 3.0, rev)
            }
            HazardClass::GH => {
                let g2 = Gamma::new(codes.iter().map(|&c| if c == 3 { 4 } else { c }).collect())
                    .expect("GH model in {0,3} relabels to AFT");
                let rev = move_prob(&g2, MoveKind::ChangeAll) / 3.0;
                (g2, pm, rev)
            }
            _ => {
                let old = codes.iter().copied().find(|&c| c != 0).expect("non-null state");
                let choices: Vec<u8> = [1u8, 2, 4].into_iter().filter(|&v| v != old).collect();
                let v = choices[ch.uniform(2)];
                let g2 = Gamma::new(codes.iter().map(|&c| if c != 0 { v } else { 0 }).collect())
                    .expect("relabelled AH/PH model");
                let rev = if g2.classify() == HazardClass::AFT {
                    move_prob(&g2, MoveKind::ChangeAll) / 3.0
                } else {
                    move_prob(&g2, MoveKind::ChangeAll) / 2.0
                };
                (g2, pm / 2.0, rev)
            }
        },
    };
    Proposal { gamma: next, kind, log_q_fwd: q_fwd.ln(), log_q_rev: q_rev.ln() }
}

/// One enumerated proposal path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub proposal: Proposal,
    /// Product of the branch probabilities along the path.
    pub path_prob: f64,
}

/// One decision point of an enumerated path: the options with positive
/// probability, their probabilities, and which one is taken.
#[derive(Debug, Clone)]
struct Branch {
    options: Vec<(usize, f64)>,
    at: usize,
}

/// Replays a fixed choice script, extending it with first choices.
struct ScriptChooser {
    script: Vec<Branch>,
    pos: usize,
    prob: f64,
}

impl ScriptChooser {
    fn take(&mut self, options: Vec<(usize, f64)>) -> usize {
        if self.pos == self.script.len() {
            self.script.push(Branch { options, at: 0 });
        }
        let b = &self.script[self.pos];
        let (choice, pr) = b.options[b.at];
        self.pos += 1;
        self.prob *= pr;
        choice
    }
}

impl Chooser for ScriptChooser {
    fn uniform(&mut self, n: usize) -> usize {
        self.take((0..n).map(|i| (i, 1.0 / n as f64)).collect())
    }
    fn weighted(&mut self, w: &[f64]) -> usize {
        let total: f64 = w.iter().sum();
        self.take(w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, &x)| (i, x / total)).collect())
    }
}

/// Every positive-probability proposal path from `gamma`, by depth-first
/// enumeration of the choice tree.
pub fn enumerate_proposals(gamma: &Gamma) -> Vec<PathRecord> {
    let mut out = Vec::new();
    let mut script: Vec<Branch> = Vec::new();
    loop {
        let mut ch = ScriptChooser { script, pos: 0, prob: 1.0 };
        let proposal = propose(gamma, &mut ch);
        out.push(PathRecord { proposal, path_prob: ch.prob });
        script = ch.script;
        script.truncate(ch.pos);
        // odometer step
        loop {
            match script.last_mut() {
                None => return out,
                Some(b) if b.at + 1 < b.options.len() => {
                    b.at += 1;
                    break;
                }
                Some(_) => {
                    script.pop();
                }
            }
        }
    }
}

/// Whether the directed proposal graph over `models` is strongly connected.
pub fn proposal_graph_strongly_connected(models: &[Gamma]) -> bool {
    let index: BTreeMap<&Gamma, usize> = models.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let mut fwd = vec![BTreeSet::new(); models.len()];
    let mut back = vec![BTreeSet::new(); models.len()];
    for (i, g) in models.iter().enumerate() {
        for path in enumerate_proposals(g) {
            let Some(&k) = index.get(&path.proposal.gamma) else { return false };
            fwd[i].insert(k);
            back[k].insert(i);
        }
    }
    let reach = |adj: &[BTreeSet<usize>]| {
        let mut seen = vec![false; adj.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    !models.is_empty() && reach(&fwd) && reach(&back)
}

/// Current position of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub gamma: Gamma,
    pub log_ml: f64,
    pub log_prior: f64,
    pub iteration: usize,
}

/// How a chain picks its first model.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitStrategy {
    #[default]
    Null,
    /// Rank variables by the score gain of single-variable PH models and
    /// start from the PH model on the best `min(5, p)`.
    Screening,
    Given(Gamma),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub init: InitStrategy,
    /// Start each fit from the current model's optimum. Off by default
    /// because cached scores would then depend on visiting order.
    pub warm_start: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 20_000,
            burn_in: 10_000,
            thin: 2,
            n_chains: 1,
            seed: 1,
            init: InitStrategy::Null,
            warm_start: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.burn_in >= self.iterations {
            return Err(ChainError::BurnIn { burn_in: self.burn_in, iterations: self.iterations });
        }
        if self.thin == 0 {
            return Err(ChainError::Thin);
        }
        if self.n_chains == 0 {
            return Err(ChainError::NoChains);
        }
        Ok(())
    }

    /// Number of samples each chain keeps.
    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One retained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub chain: usize,
    pub iter: usize,
    pub gamma: String,
    pub class: HazardClass,
    pub log_ml: f64,
    pub log_prior: f64,
}

/// Proposal and acceptance counts for one move kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MoveStats {
    pub proposed: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub samples: Vec<TraceRecord>,
    /// Every model scored by the chain: key to `(log_ml, log_prior)`.
    pub visited: BTreeMap<String, (f64, f64)>,
    pub moves: BTreeMap<MoveKind, MoveStats>,
    /// Proposals rejected because the proposed model could not be scored.
    pub failed: usize,
    pub iterations: usize,
}

impl ChainTrace {
    pub fn acceptance_rate(&self) -> f64 {
        let (a, p) = self.moves.values().fold((0, 0), |(a, p), m| (a + m.accepted, p + m.proposed));
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }

    /// Pool chains in index order.
    pub fn merge(traces: Vec<ChainTrace>) -> ChainTrace {
        let mut out = ChainTrace::default();
        for t in traces {
            out.samples.extend(t.samples);
            out.visited.extend(t.visited);
            for (k, m) in t.moves {
                let e = out.moves.entry(k).or_default();
                e.proposed += m.proposed;
                e.accepted += m.accepted;
            }
            out.failed += t.failed;
            out.iterations += t.iterations;
        }
        out
    }
}

/// Outcome of one Metropolis–Hastings step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ChainState,
    pub kind: MoveKind,
    pub accepted: bool,
    /// The proposed model had no finite score.
    pub failed: bool,
    pub proposed: Gamma,
    pub proposed_log_ml: f64,
    pub proposed_log_prior: f64,
}

/// One Metropolis–Hastings update.
pub fn mh_step<S: ModelScore + ?Sized, R: Rng>(
    state: &ChainState,
    score: &S,
    prior: &ModelPriorConfig,
    rng: &mut R,
    warm_start: bool,
) -> StepOutcome {
    let prop = propose(&state.gamma, &mut RngChooser(rng));
    let hint = if warm_start {
        score.optimum(&state.gamma).map(|psi| {
            let from = crate::ghlik::Design::from_gamma(&state.gamma);
            let to = crate::ghlik::Design::from_gamma(&prop.gamma);
            psi.project(&from, &to)
        })
    } else {
        None
    };
    let log_ml = score.log_ml(&prop.gamma, hint.as_ref());
    let log_prior = log_model_prior(&prop.gamma, prior);
    let failed = !log_ml.is_finite();
    let log_acc = log_ml + log_prior - state.log_ml - state.log_prior + prop.log_hastings();
    let accepted = !failed && (log_acc >= 0.0 || rng.random::<f64>().ln() < log_acc);
    let next = if accepted {
        ChainState { gamma: prop.gamma.clone(), log_ml, log_prior, iteration: state.iteration + 1 }
    } else {
        ChainState { iteration: state.iteration + 1, ..state.clone() }
    };
    StepOutcome {
        state: next,
        kind: prop.kind,
        accepted,
        failed,
        proposed: prop.gamma,
        proposed_log_ml: log_ml,
        proposed_log_prior: log_prior,
    }
}

fn screening_init<S: ModelScore + ?Sized>(score: &S, p: usize) -> Gamma {
    let base = score.log_ml(&Gamma::null(p), None);
    let mut gains: Vec<(f64, usize)> = (0..p)
        .map(|j| {
            let g = Gamma::null(p).with(j, 2);
            (score.log_ml(&g, None) - base, j)
        })
        .filter(|(v, _)| v.is_finite())
        .collect();
    gains.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut g = Gamma::null(p);
    for &(_, j) in gains.iter().take(p.min(5)) {
        g = g.with(j, 2);
    }
    g
}

/// Runs one chain with its own stream of the seeded generator.
pub fn run_single_chain<S: ModelScore + ?Sized>(
    score: &S,
    p: usize,
    prior: &ModelPriorConfig,
    config: &ChainConfig,
    chain: usize,
) -> Result<ChainTrace, ChainError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let init = match &config.init {
        InitStrategy::Null => Gamma::null(p),
        InitStrategy::Screening => screening_init(score, p),
        InitStrategy::Given(g) => {
            if g.p() != p {
                return Err(ChainError::InitLength { got: g.p(), want: p });
            }
            g.clone()
        }
    };
    let mut trace = ChainTrace { iterations: config.iterations, ..Default::default() };
    let mut state = ChainState {
        log_ml: score.log_ml(&init, None),
        log_prior: log_model_prior(&init, prior),
        gamma: init,
        iteration: 0,
    };
    trace.visited.insert(state.gamma.key(), (state.log_ml, state.log_prior));
    for t in 1..=config.iterations {
        let out = mh_step(&state, score, prior, &mut rng, config.warm_start);
        let stats = trace.moves.entry(out.kind).or_default();
        stats.proposed += 1;
        if out.accepted {
            stats.accepted += 1;
        }
        if out.failed {
            trace.failed += 1;
        } else {
            trace.visited.insert(out.proposed.key(), (out.proposed_log_ml, out.proposed_log_prior));
        }
        state = out.state;
        if t > config.burn_in && (t - config.burn_in).is_multiple_of(config.thin) {
            trace.samples.push(TraceRecord {
                chain,
                iter: t,
                gamma: state.gamma.key(),
                class: state.gamma.classify(),
                log_ml: state.log_ml,
                log_prior: state.log_prior,
            });
        }
    }
    Ok(trace)
}

/// Runs `config.n_chains` chains on separate threads and merges them in
/// chain order.
pub fn run_chain<S: ModelScore + ?Sized>(
    score: &S,
    p: usize,
    prior: &ModelPriorConfig,
    config: &ChainConfig,
) -> Result<ChainTrace, ChainError> {
    config.validate()?;
    if config.n_chains == 1 {
        return run_single_chain(score, p, prior, config, 0);
    }
    let traces: Vec<Result<ChainTrace, ChainError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.n_chains)
            .map(|c| s.spawn(move || run_single_chain(score, p, prior, config, c)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    Ok(ChainTrace::merge(traces.into_iter().collect::<Result<_, _>>()?))
}
