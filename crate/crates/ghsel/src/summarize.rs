//! Posterior summaries of sampler output: model probabilities (visit
//! frequencies or renormalised scores), hazard-structure probabilities,
//! inclusion probabilities, credible sets and selection scoring.

use crate::modelspace::{Gamma, HazardClass};
use crate::sampler::{ChainTrace, TraceRecord};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("trace has no retained samples")]
    EmptyTrace,
    #[error("no cached score for visited model {0}")]
    MissingScore(String),
    #[error("models have {got} variables, expected {want}")]
    Length { got: usize, want: usize },
    #[error("credible level {0} must lie in (0, 1)")]
    Level(f64),
    #[error("model key {0} is not a valid indicator")]
    BadKey(String),
}

pub type ModelProbs = BTreeMap<String, f64>;

/// Share of retained samples in each model.
pub fn probs_frequency(samples: &[TraceRecord]) -> Result<ModelProbs, SummaryError> {
    if samples.is_empty() {
        return Err(SummaryError::EmptyTrace);
    }
    let mut out = ModelProbs::new();
    for s in samples {
        *out.entry(s.gamma.clone()).or_default() += 1.0;
    }
    let n = samples.len() as f64;
    out.values_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// `exp(log_ml + log_prior)` normalised over the set of sampled models.
pub fn probs_renormalized(
    samples: &[TraceRecord],
    scores: &BTreeMap<String, (f64, f64)>,
) -> Result<ModelProbs, SummaryError> {
    if samples.is_empty() {
        return Err(SummaryError::EmptyTrace);
    }
    let mut logs = BTreeMap::new();
    for s in samples {
        if !logs.contains_key(&s.gamma) {
            let (ml, pr) = scores.get(&s.gamma).ok_or_else(|| SummaryError::MissingScore(s.gamma.clone()))?;
            logs.insert(s.gamma.clone(), ml + pr);
        }
    }
    Ok(normalise_logs(&logs))
}

/// Softmax of log weights; entries at `-inf` get probability zero.
pub fn normalise_logs(logs: &BTreeMap<String, f64>) -> ModelProbs {
    let top = logs.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.values().map(|v| (v - top).exp()).sum();
    logs.iter().map(|(k, v)| (k.clone(), (v - top).exp() / total)).collect()
}

fn parse(key: &str) -> Result<Gamma, SummaryError> {
    key.parse().map_err(|_| SummaryError::BadKey(key.to_string()))
}

/// Posterior mass of each hazard structure; every class is present.
pub fn hazard_posterior(probs: &ModelProbs) -> Result<BTreeMap<HazardClass, f64>, SummaryError> {
    let mut out: BTreeMap<HazardClass, f64> = HazardClass::ALL.iter().map(|&c| (c, 0.0)).collect();
    for (k, pr) in probs {
        *out.entry(parse(k)?.classify()).or_default() += pr;
    }
    Ok(out)
}

/// Inclusion probabilities: overall, and split by role code 1 to 4.
pub fn pip(probs: &ModelProbs, p: usize) -> Result<(Vec<f64>, Vec<[f64; 4]>), SummaryError> {
    let mut any = vec![0.0; p];
    let mut by_role = vec![[0.0; 4]; p];
    for (k, pr) in probs {
        let g = parse(k)?;
        if g.p() != p {
            return Err(SummaryError::Length { got: g.p(), want: p });
        }
        for (j, &c) in g.codes().iter().enumerate() {
            if c != 0 {
                any[j] += pr;
                by_role[j][c as usize - 1] += pr;
            }
        }
    }
    Ok((any, by_role))
}

/// Models sorted by decreasing probability, ties by key.
pub fn ranked(probs: &ModelProbs) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = probs.iter().map(|(k, p)| (k.clone(), *p)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Smallest top-ranked prefix whose mass reaches `level`.
pub fn hpm_credible_set(probs: &ModelProbs, level: f64) -> Result<Vec<(String, f64)>, SummaryError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SummaryError::Level(level));
    }
    let mut out = Vec::new();
    let mut cum = 0.0;
    for (k, p) in ranked(probs) {
        out.push((k, p));
        cum += p;
        // guard against summation rounding just below the level
        if cum >= level - 1e-12 {
            break;
        }
    }
    Ok(out)
}

/// Sensitivity and specificity of the inclusion pattern of `selected`.
/// Either is `NaN` when the truth has no positives (or negatives).
pub fn score_selection(selected: &Gamma, truth: &Gamma) -> Result<(f64, f64), SummaryError> {
    if selected.p() != truth.p() {
        return Err(SummaryError::Length { got: selected.p(), want: truth.p() });
    }
    let (mut tp, mut fnn, mut tn, mut fp) = (0, 0, 0, 0);
    for (&s, &t) in selected.codes().iter().zip(truth.codes()) {
        match (s != 0, t != 0) {
            (true, true) => tp += 1,
            (false, true) => fnn += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { f64::NAN } else { a as f64 / (a + b) as f64 };
    Ok((ratio(tp, fnn), ratio(tn, fp)))
}

/// Total-variation distance between two distributions over model keys.
pub fn total_variation(a: &ModelProbs, b: &ModelProbs) -> f64 {
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|k| (a.get(*k).unwrap_or(&0.0) - b.get(*k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// All summaries for one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub model_probs: ModelProbs,
    pub model_probs_frequency: ModelProbs,
    pub hazard_probs: BTreeMap<HazardClass, f64>,
    pub pip_any: Vec<f64>,
    pub pip_by_role: Vec<[f64; 4]>,
    pub hpm_set: Vec<(String, f64)>,
    pub level: f64,
}

impl PosteriorSummary {
    /// Summaries with the renormalised estimator as the headline.
    pub fn from_trace(trace: &ChainTrace, p: usize, level: f64) -> Result<Self, SummaryError> {
        let model_probs = probs_renormalized(&trace.samples, &trace.visited)?;
        let model_probs_frequency = probs_frequency(&trace.samples)?;
        let hazard_probs = hazard_posterior(&model_probs)?;
        let (pip_any, pip_by_role) = pip(&model_probs, p)?;
        let hpm_set = hpm_credible_set(&model_probs, level)?;
        Ok(PosteriorSummary { model_probs, model_probs_frequency, hazard_probs, pip_any, pip_by_role, hpm_set, level })
    }

    /// The highest-probability model.
    pub fn top_model(&self) -> Option<Gamma> {
        ranked(&self.model_probs).first().and_then(|(k, _)| k.parse().ok())
    }

    /// The hazard structure with the largest posterior mass.
    pub fn modal_class(&self) -> HazardClass {
        self.hazard_probs
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(c, _)| *c)
            .unwrap_or(HazardClass::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(key: &str) -> TraceRecord {
        let g: Gamma = key.parse().unwrap();
        TraceRecord { chain: 0, iter: 0, gamma: key.into(), class: g.classify(), log_ml: 0.0, log_prior: 0.0 }
    }

    fn probs(items: &[(&str, f64)]) -> ModelProbs {
        items.iter().map(|(k, p)| (k.to_string(), *p)).collect()
    }

    #[test]
    fn frequency_examples() {
        assert_eq!(probs_frequency(&[rec("10"), rec("10")]).unwrap(), probs(&[("10", 1.0)]));
        assert_eq!(probs_frequency(&[rec("10"), rec("02")]).unwrap(), probs(&[("10", 0.5), ("02", 0.5)]));
        assert_eq!(probs_frequency(&[]), Err(SummaryError::EmptyTrace));
    }

    #[test]
    fn renormalised_ignores_duplicates() {
        let scores: BTreeMap<String, (f64, f64)> =
            [("10".to_string(), (-1.0, -2.0)), ("02".to_string(), (-3.0, -1.0))].into_iter().collect();
        let a = probs_renormalized(&[rec("10"), rec("02")], &scores).unwrap();
        let b = probs_renormalized(&[rec("10"), rec("10"), rec("10"), rec("02")], &scores).unwrap();
        assert_eq!(a, b);
        assert!((a["10"] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert_ne!(probs_frequency(&[rec("10"), rec("02")]), probs_frequency(&[rec("10"), rec("10"), rec("02")]));
        assert_eq!(probs_renormalized(&[rec("11")], &scores), Err(SummaryError::MissingScore("11".into())));
    }

    #[test]
    fn hazard_uniform_over_p1() {
        let pr = probs(&[("0", 0.2), ("1", 0.2), ("2", 0.2), ("3", 0.2), ("4", 0.2)]);
        let h = hazard_posterior(&pr).unwrap();
        for c in HazardClass::ALL {
            assert!((h[&c] - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn pip_single_model() {
        let (any, role) = pip(&probs(&[("20", 1.0)]), 2).unwrap();
        assert_eq!(any, vec![1.0, 0.0]);
        assert_eq!(role[0], [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn credible_sets() {
        let pr = probs(&[("a0", 0.7), ("b0", 0.2), ("c0", 0.1)]);
        assert_eq!(hpm_credible_set(&pr, 0.9).unwrap().len(), 2);
        assert_eq!(hpm_credible_set(&pr, 0.95).unwrap().len(), 3);
        let tie = probs(&[("12", 0.5), ("02", 0.5)]);
        assert_eq!(hpm_credible_set(&tie, 0.5).unwrap(), vec![("02".to_string(), 0.5)]);
        assert!(hpm_credible_set(&pr, 1.0).is_err());
    }

    #[test]
    fn selection_scores() {
        let g = |s: &str| s.parse::<Gamma>().unwrap();
        assert_eq!(score_selection(&g("1203"), &g("1203")).unwrap(), (1.0, 1.0));
        assert_eq!(score_selection(&g("2000"), &g("1020")).unwrap(), (0.5, 1.0));
        assert_eq!(score_selection(&Gamma::null(10), &g("0202020200")).unwrap(), (0.0, 1.0));
        assert!(score_selection(&g("20"), &g("200")).is_err());
    }
}
