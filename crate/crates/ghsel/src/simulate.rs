//! Data generation under the general hazard model: AR(1) Gaussian
//! covariates, survival times by inverting the cumulative hazard, and
//! administrative censoring to a target rate.

use crate::baseline::BaselineKernel;
use crate::ghlik::{DataError, Dataset};
use crate::modelspace::{Gamma, HazardClass};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("correlation {0} must lie strictly inside (-1, 1)")]
    Rho(f64),
    #[error("censoring rate {0} must lie in [0, 1)")]
    CensoringRate(f64),
    #[error("baseline parameter {name} = {value} must be positive")]
    Baseline { name: &'static str, value: f64 },
    #[error("coefficient vectors have length {got}, expected {want}")]
    Length { got: usize, want: usize },
    #[error("need at least one row and one column, got n = {n}, p = {p}")]
    Size { n: usize, p: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Baseline lifetime distribution used for generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineFamily {
    /// `log T ~ N(mu, sigma^2)`.
    LogNormal { mu: f64, sigma: f64 },
    /// Power generalised Weibull with
    /// `H0(t) = (1 + (t / scale)^shape)^(1 / power) - 1`.
    Pgw { scale: f64, shape: f64, power: f64 },
}

impl BaselineFamily {
    pub fn validate(&self) -> Result<(), SimError> {
        let check = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(SimError::Baseline { name, value })
            }
        };
        match *self {
            BaselineFamily::LogNormal { sigma, .. } => check("sigma", sigma),
            BaselineFamily::Pgw { scale, shape, power } => {
                check("scale", scale)?;
                check("shape", shape)?;
                check("power", power)
            }
        }
    }

    /// Baseline cumulative hazard.
    pub fn cum_hazard(&self, t: f64) -> f64 {
        match *self {
            BaselineFamily::LogNormal { mu, sigma } => -BaselineKernel::Normal.log_f_neg((t.ln() - mu) / sigma),
            BaselineFamily::Pgw { scale, shape, power } => {
                ((t / scale).powf(shape).ln_1p() / power).exp_m1()
            }
        }
    }

    /// Baseline hazard.
    pub fn hazard(&self, t: f64) -> f64 {
        match *self {
            BaselineFamily::LogNormal { mu, sigma } => {
                let z = (t.ln() - mu) / sigma;
                BaselineKernel::Normal.ratio_f_over_fneg(z) / (sigma * t)
            }
            BaselineFamily::Pgw { scale, shape, power } => {
                let r = (t / scale).powf(shape);
                shape / (power * t) * r * (1.0 + r).powf(1.0 / power - 1.0)
            }
        }
    }

    /// `log H0^{-1}(w)` for `w > 0`, stable for very large `w`.
    pub fn log_inverse_cum_hazard(&self, w: f64) -> f64 {
        match *self {
            BaselineFamily::LogNormal { mu, sigma } => mu + sigma * normal_upper_quantile_log(-w),
            BaselineFamily::Pgw { scale, shape, power } => {
                scale.ln() + (power * w.ln_1p()).exp_m1().ln() / shape
            }
        }
    }
}

/// The `u` with `log Phi(-u) = log_s`, valid far into the tail.
fn normal_upper_quantile_log(log_s: f64) -> f64 {
    let k = BaselineKernel::Normal;
    if log_s > -700.0 {
        return k.upper_quantile(log_s.exp()).expect("survival probability in (0, 1)");
    }
    // Newton on log Phi(-u) from the leading-order tail solution
    let mut u = (-2.0 * log_s).sqrt();
    for _ in 0..50 {
        let step = (k.log_f_neg(u) - log_s) / k.ratio_f_over_fneg(u);
        u += step;
        if step.abs() < 1e-14 * u {
            break;
        }
    }
    u
}

/// True model: indicator plus natural-scale coefficients (length `p`,
/// zero where a column does not enter that level).
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub gamma: Gamma,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Effect sizes of the four active variables.
pub const EFFECTS: [f64; 4] = [1.0, -1.0, 0.25, -0.25];
/// Time-level and hazard-level effects of the GH truth.
pub const GH_ALPHA: [f64; 4] = [1.0, 0.25, -1.0, -0.25];
pub const GH_BETA: [f64; 4] = [0.25, -1.0, -0.25, 1.0];

impl Truth {
    /// Preset truth of class `class` on the active columns `active` (at
    /// most four), using the standard effect sizes.
    pub fn preset(class: HazardClass, p: usize, active: &[usize]) -> Truth {
        let mut codes = vec![0u8; p];
        let mut alpha = vec![0.0; p];
        let mut beta = vec![0.0; p];
        for (k, &j) in active.iter().take(4).enumerate() {
            match class {
                HazardClass::Null => {}
                HazardClass::AH => {
                    codes[j] = 1;
                    alpha[j] = EFFECTS[k];
                }
                HazardClass::PH => {
                    codes[j] = 2;
                    beta[j] = EFFECTS[k];
                }
                HazardClass::AFT => {
                    codes[j] = 4;
                    alpha[j] = EFFECTS[k];
                    beta[j] = EFFECTS[k];
                }
                HazardClass::GH => {
                    codes[j] = 3;
                    alpha[j] = GH_ALPHA[k];
                    beta[j] = GH_BETA[k];
                }
            }
        }
        Truth { gamma: Gamma::new(codes).expect("preset codes are valid"), alpha, beta }
    }

    /// Default active columns: every other column from the second when
    /// `p >= 8`, otherwise the leading columns.
    pub fn default_active(p: usize) -> Vec<usize> {
        if p >= 8 {
            vec![1, 3, 5, 7]
        } else {
            (0..p.min(4)).collect()
        }
    }
}

/// Full simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub truth: Truth,
    pub baseline: BaselineFamily,
    pub target_censoring: f64,
}

impl SimConfig {
    /// `n` rows, `p` columns, a preset truth of `class`, log-normal(1.55,
    /// 0.7) baseline and 25% censoring.
    pub fn standard(n: usize, p: usize, class: HazardClass) -> Self {
        SimConfig {
            n,
            p,
            rho: 0.7,
            truth: Truth::preset(class, p, &Truth::default_active(p)),
            baseline: BaselineFamily::LogNormal { mu: 1.55, sigma: 0.7 },
            target_censoring: 0.25,
        }
    }
}

/// Rows of zero-mean Gaussian vectors with `corr(x_i, x_j) = rho^|i-j|`.
pub fn simulate_covariates<R: Rng>(n: usize, p: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>, SimError> {
    if !(rho.abs() < 1.0) {
        return Err(SimError::Rho(rho));
    }
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            prev = if j == 0 { z } else { rho * prev + innov * z };
            x[(i, j)] = prev;
        }
    }
    Ok(x)
}

fn linear(x: &DMatrix<f64>, i: usize, coef: &[f64]) -> f64 {
    coef.iter().enumerate().map(|(j, c)| if *c == 0.0 { 0.0 } else { x[(i, j)] * c }).sum()
}

/// Event times by inversion: with `E ~ Exp(1)` and
/// `w = E exp(x'alpha - x'beta)`, `t = H0^{-1}(w) exp(-x'alpha)`.
pub fn simulate_gh_times<R: Rng>(
    x: &DMatrix<f64>,
    truth: &Truth,
    baseline: &BaselineFamily,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    baseline.validate()?;
    let p = x.ncols();
    for v in [&truth.alpha, &truth.beta] {
        if v.len() != p {
            return Err(SimError::Length { got: v.len(), want: p });
        }
    }
    Ok((0..x.nrows())
        .map(|i| {
            let e: f64 = Exp1.sample(rng);
            let xa = linear(x, i, &truth.alpha);
            let xb = linear(x, i, &truth.beta);
            let log_w = e.ln() + xa - xb;
            (baseline.log_inverse_cum_hazard(log_w.exp()) - xa).exp()
        })
        .collect())
}

/// Cumulative hazard of the truth at `t` for row `i`.
pub fn truth_cum_hazard(x: &DMatrix<f64>, i: usize, truth: &Truth, baseline: &BaselineFamily, t: f64) -> f64 {
    let xa = linear(x, i, &truth.alpha);
    let xb = linear(x, i, &truth.beta);
    baseline.cum_hazard(t * xa.exp()) * (xb - xa).exp()
}

/// Type-7 sample quantile of `v` at probability `q`.
pub fn quantile_type7(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Censor at the common cut-off equal to the `(1 - rate)` sample quantile.
/// Returns observed times, event indicators and the cut-off.
pub fn apply_administrative_censoring(times: &[f64], rate: f64) -> Result<(Vec<f64>, Vec<f64>, f64), SimError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SimError::CensoringRate(rate));
    }
    let cut = if rate == 0.0 || times.is_empty() { f64::INFINITY } else { quantile_type7(times, 1.0 - rate) };
    let t = times.iter().map(|&o| o.min(cut)).collect();
    let d = times.iter().map(|&o| if o <= cut { 1.0 } else { 0.0 }).collect();
    Ok((t, d, cut))
}

/// A simulated data set with the quantities behind it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub event_times: Vec<f64>,
    pub cutoff: f64,
}

/// Covariates, times and censoring in one go. Columns are named `x1..xp`
/// and left unstandardised.
pub fn simulate_dataset<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<Simulated, SimError> {
    if cfg.n == 0 || cfg.p == 0 {
        return Err(SimError::Size { n: cfg.n, p: cfg.p });
    }
    let x = simulate_covariates(cfg.n, cfg.p, cfg.rho, rng)?;
    let times = simulate_gh_times(&x, &cfg.truth, &cfg.baseline, rng)?;
    let (t, d, cutoff) = apply_administrative_censoring(&times, cfg.target_censoring)?;
    let names = (1..=cfg.p).map(|j| format!("x{j}")).collect();
    Ok(Simulated { data: Dataset::new(t, d, x, names)?, event_times: times, cutoff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pgw_matches_calibration_and_derivative() {
        let b = BaselineFamily::Pgw { scale: 1.0, shape: 1.0, power: 2.0 };
        assert!(((-b.cum_hazard(15.0)).exp() - (-3.0f64).exp()).abs() < 1e-14);
        for t in [0.1, 1.0, 4.0, 20.0] {
            let h = 1e-6 * t;
            let fd = (b.cum_hazard(t + h) - b.cum_hazard(t - h)) / (2.0 * h);
            assert!((fd - b.hazard(t)).abs() < 1e-7 * b.hazard(t).max(1.0));
            let w = b.cum_hazard(t);
            assert!((b.log_inverse_cum_hazard(w) - t.ln()).abs() < 1e-12);
        }
        let ln = BaselineFamily::LogNormal { mu: 1.55, sigma: 0.7 };
        assert!(((-ln.cum_hazard(15.0)).exp() - 0.049).abs() < 0.001);
        for t in [0.5, 3.0, 30.0] {
            assert!((ln.log_inverse_cum_hazard(ln.cum_hazard(t)) - t.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn lognormal_far_tail_inverse() {
        let ln = BaselineFamily::LogNormal { mu: 0.0, sigma: 1.0 };
        let u = ln.log_inverse_cum_hazard(2000.0);
        assert!((BaselineKernel::Normal.log_f_neg(u) + 2000.0).abs() < 1e-9);
    }

    #[test]
    fn censoring_examples() {
        let (t, d, c) = apply_administrative_censoring(&[3.0, 1.0, 2.0], 0.0).unwrap();
        assert_eq!((t, d, c), (vec![3.0, 1.0, 2.0], vec![1.0; 3], f64::INFINITY));
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        let (_, d, c) = apply_administrative_censoring(&v, 0.5).unwrap();
        assert_eq!(c, 5.0);
        assert_eq!(d.iter().sum::<f64>(), 5.0);
        assert!(apply_administrative_censoring(&v, 1.0).is_err());
    }

    #[test]
    fn covariate_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let x = simulate_covariates(n, 3, 0.7, &mut rng).unwrap();
        let c0 = x.column(0);
        let c2 = x.column(2);
        let m0 = c0.mean();
        let m2 = c2.mean();
        let cov = c0.iter().zip(c2.iter()).map(|(a, b)| (a - m0) * (b - m2)).sum::<f64>() / n as f64;
        let corr = cov / (c0.variance() * c2.variance()).sqrt();
        assert!((corr - 0.49).abs() < 0.01, "{corr}");
        assert!(m0.abs() < 3.0 / (n as f64).sqrt());
        assert!(simulate_covariates(2, 2, 1.0, &mut rng).is_err());
    }

    #[test]
    fn presets() {
        let t = Truth::preset(HazardClass::PH, 10, &Truth::default_active(10));
        assert_eq!(t.gamma.key(), "0202020200");
        assert_eq!(t.beta[3], -1.0);
        let g = Truth::preset(HazardClass::GH, 4, &Truth::default_active(4));
        assert_eq!(g.gamma.key(), "3333");
        assert_eq!(g.alpha[2], -1.0);
        assert_eq!(g.beta[3], 1.0);
    }
}
