//! Maximum-likelihood and maximum-a-posteriori fits of a single model.
//!
//! Both fits run dense BFGS with an Armijo backtracking line search, seeded
//! with the exact inverse curvature when it is positive definite, then take
//! up to two Newton polishing steps and report the exact Hessian.

use crate::baseline::BaselineKernel;
use crate::ghlik::{Dataset, Design, GhLikelihood, LikError, Order, Psi};
use crate::modelspace::Gamma;
use crate::priors::{grad_common_prior, hess_common_prior, log_common_prior, CommonPrior, PriorError, ProductPrior};
use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Likelihood(#[from] LikError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// Optimizer controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Stop once `max |grad| <= grad_tol * (1 + |objective|)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    /// Largest coordinate change allowed in one step.
    pub max_step: f64,
    /// Extra starts from deterministic perturbations of the initial point.
    pub restarts: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { grad_tol: 1e-6, max_iter: 500, armijo_c: 1e-4, max_step: 5.0, restarts: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIter,
    Boundary,
    SingularHessian,
}

/// Result of one fit.
#[derive(Debug, Clone)]
pub struct FitRecord {
    pub design: Design,
    pub psi_opt: Psi,
    /// Log-likelihood (MLE) or penalised log-posterior (MAP) at the optimum.
    pub objective: f64,
    /// Log-likelihood at the optimum.
    pub loglik: f64,
    /// Negated exact Hessian of the objective at the optimum.
    pub fisher: DMatrix<f64>,
    pub status: FitStatus,
    pub n_evals: usize,
    pub grad_max: f64,
}

impl FitRecord {
    pub fn is_usable(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

/// `|nu|` beyond this is reported as a boundary solution.
pub const NU_BOUND: f64 = 20.0;

/// A smooth objective to be maximised.
trait Objective {
    fn value_grad(&self, x: &[f64]) -> Option<(f64, DVector<f64>, bool)>;
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>>;
}

struct Outcome {
    x: Vec<f64>,
    f: f64,
    grad: DVector<f64>,
    hit_iter_cap: bool,
    boundary: bool,
    n_evals: usize,
}

fn spd_inverse(neg_h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(neg_h.clone()).map(|c| c.inverse())
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn maximise<O: Objective>(obj: &O, x0: &[f64], opts: &OptimOptions) -> Option<Outcome> {
    let n = x0.len();
    let mut n_evals = 1;
    let (mut f, mut g, mut boundary) = obj.value_grad(x0)?;
    let mut x = DVector::from_column_slice(x0);
    let identity = DMatrix::<f64>::identity(n, n);
    // inverse of the curvature of -f
    let mut hinv = obj
        .hessian(x0)
        .and_then(|h| spd_inverse(&-h))
        .unwrap_or_else(|| identity.clone() / (1.0 + max_abs(&g)));
    let mut iter = 0;
    let converged = |f: f64, g: &DVector<f64>| max_abs(g) <= opts.grad_tol * (1.0 + f.abs());
    while !converged(f, &g) && iter < opts.max_iter {
        iter += 1;
        let mut dir = &hinv * &g;
        if dir.dot(&g) <= 0.0 {
            hinv = identity.clone() / (1.0 + max_abs(&g));
            dir = &hinv * &g;
        }
        let big = max_abs(&dir);
        if big > opts.max_step {
            dir *= opts.max_step / big;
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            n_evals += 1;
            if let Some((ft, gt, bt)) = obj.value_grad(trial.as_slice()) {
                if ft.is_finite() && ft >= f + opts.armijo_c * step * slope {
                    accepted = Some((trial, ft, gt, bt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn, bn)) = accepted else {
            break;
        };
        // BFGS on the minimisation of -f
        let s = &xn - &x;
        let y = -(&gn - &g);
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let a = &identity - &s * y.transpose() * rho;
            hinv = &a * &hinv * a.transpose() + &s * s.transpose() * rho;
        }
        x = xn;
        f = fnew;
        g = gn;
        boundary = bn;
    }
    let hit_iter_cap = !converged(f, &g);
    // Newton polish with the exact curvature
    for _ in 0..2 {
        let Some(h) = obj.hessian(x.as_slice()) else { break };
        let Some(c) = Cholesky::new(-h) else { break };
        let trial = &x + c.solve(&g);
        n_evals += 1;
        match obj.value_grad(trial.as_slice()) {
            Some((ft, gt, bt)) if ft >= f - 1e-12 * (1.0 + f.abs()) && max_abs(&gt) < max_abs(&g) => {
                x = trial;
                f = ft;
                g = gt;
                boundary = bt;
            }
            _ => break,
        }
    }
    Some(Outcome {
        x: x.as_slice().to_vec(),
        f,
        hit_iter_cap: hit_iter_cap && !converged(f, &g),
        grad: g,
        boundary,
        n_evals,
    })
}

struct MleObjective<'a> {
    lik: GhLikelihood<'a>,
}

impl Objective for MleObjective<'_> {
    fn value_grad(&self, x: &[f64]) -> Option<(f64, DVector<f64>, bool)> {
        let ev = self.lik.evaluate(x, Order::Gradient).ok()?;
        ev.value.is_finite().then(|| (ev.value, ev.grad.expect("gradient requested"), ev.boundary))
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.lik.hessian(x).ok()
    }
}

struct MapObjective<'a> {
    lik: GhLikelihood<'a>,
    prior: ProductPrior,
    cp: CommonPrior,
}

impl MapObjective<'_> {
    fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], &'x [f64]) {
        let q = self.prior.q();
        (&x[2..2 + q], &x[2 + q..])
    }
    fn log_prior(&self, x: &[f64]) -> f64 {
        let (t, e) = self.split(x);
        self.prior.logpdf(t, e) + log_common_prior(x[0], x[1], &self.cp)
    }
}

impl Objective for MapObjective<'_> {
    fn value_grad(&self, x: &[f64]) -> Option<(f64, DVector<f64>, bool)> {
        let ev = self.lik.evaluate(x, Order::Gradient).ok()?;
        let mut g = ev.grad.expect("gradient requested");
        let (t, e) = self.split(x);
        let gp = self.prior.grad(t, e);
        for (k, v) in gp.iter().enumerate() {
            g[2 + k] += v;
        }
        let gc = grad_common_prior(x[0], x[1], &self.cp);
        g[0] += gc[0];
        g[1] += gc[1];
        let f = ev.value + self.log_prior(x);
        f.is_finite().then_some((f, g, ev.boundary))
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let mut h = self.lik.hessian(x).ok()?;
        let d = self.prior.q() + self.prior.r();
        let mut block = h.view_mut((2, 2), (d, d));
        block += self.prior.hess();
        let hc = hess_common_prior(x[0], &self.cp);
        h[(0, 0)] += hc[0];
        h[(1, 1)] += hc[1];
        Some(h)
    }
}

/// Moment-matched null start: `theta0 = mean/sd`, `nu = -log sd` of the log
/// event times (all times when there are no events), coefficients zero.
pub fn default_init(data: &Dataset, design: &Design) -> Psi {
    let events: Vec<f64> = data
        .log_times()
        .iter()
        .zip(data.status())
        .filter(|(_, &d)| d > 0.5)
        .map(|(l, _)| *l)
        .collect();
    let pool: &[f64] = if events.is_empty() { data.log_times() } else { &events };
    let m = pool.len() as f64;
    let mean = pool.iter().sum::<f64>() / m;
    let var = pool.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / m;
    let sd = if var > 1e-12 { var.sqrt() } else { 1.0 };
    Psi {
        nu: -sd.ln(),
        theta0: mean / sd,
        theta: vec![0.0; design.q()],
        eta: vec![0.0; if design.aft { 0 } else { design.r() }],
    }
}

/// Deterministic perturbation for restart `k`.
fn jitter(x: &[f64], k: usize) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, v)| v + 0.5 * if (i + k).is_multiple_of(2) { 1.0 } else { -1.0 } * (k as f64))
        .collect()
}

fn run<O: Objective>(
    obj: &O,
    lik: &GhLikelihood,
    init: Vec<f64>,
    opts: &OptimOptions,
) -> Result<FitRecord, FitError> {
    let design = lik.design().clone();
    let mut best: Option<Outcome> = None;
    let mut evals = 0;
    for k in 0..=opts.restarts {
        let start = if k == 0 { init.clone() } else { jitter(&init, k) };
        if let Some(out) = maximise(obj, &start, opts) {
            evals += out.n_evals;
            if best.as_ref().is_none_or(|b| out.f > b.f) {
                best = Some(out);
            }
        }
    }
    let Some(out) = best else {
        return Ok(FitRecord {
            psi_opt: Psi::from_slice(&design, &init)?,
            design,
            objective: f64::NEG_INFINITY,
            loglik: f64::NEG_INFINITY,
            fisher: DMatrix::zeros(init.len(), init.len()),
            status: FitStatus::SingularHessian,
            n_evals: evals,
            grad_max: f64::INFINITY,
        });
    };
    let fisher = -obj.hessian(&out.x).unwrap_or_else(|| DMatrix::from_element(out.x.len(), out.x.len(), f64::NAN));
    let pd = fisher.iter().all(|v| v.is_finite()) && Cholesky::new(fisher.clone()).is_some();
    let status = if out.boundary || out.x[0].abs() > NU_BOUND {
        FitStatus::Boundary
    } else if out.hit_iter_cap {
        FitStatus::MaxIter
    } else if !pd {
        FitStatus::SingularHessian
    } else {
        FitStatus::Converged
    };
    Ok(FitRecord {
        psi_opt: Psi::from_slice(&design, &out.x)?,
        design,
        objective: out.f,
        loglik: lik.value(&out.x)?,
        fisher,
        status,
        n_evals: evals,
        grad_max: max_abs(&out.grad),
    })
}

fn start_vector(data: &Dataset, design: &Design, init: Option<&Psi>) -> Result<Vec<f64>, FitError> {
    let psi = init.cloned().unwrap_or_else(|| default_init(data, design));
    let v = psi.to_vector();
    if v.len() != design.dim() {
        return Err(LikError::Dimension { got: v.len(), want: design.dim() }.into());
    }
    Ok(v.as_slice().to_vec())
}

/// Maximum-likelihood fit of model `gamma`.
pub fn fit_mle(
    gamma: &Gamma,
    data: &Dataset,
    k: BaselineKernel,
    init: Option<&Psi>,
    opts: &OptimOptions,
) -> Result<FitRecord, FitError> {
    let lik = GhLikelihood::new(data, gamma, k)?;
    let x0 = start_vector(data, lik.design(), init)?;
    let obj = MleObjective { lik: lik.clone() };
    run(&obj, &lik, x0, opts)
}

/// Maximum-a-posteriori fit under the product prior and the common priors.
#[allow(clippy::too_many_arguments)]
pub fn fit_map(
    gamma: &Gamma,
    data: &Dataset,
    k: BaselineKernel,
    g_ct: f64,
    g_ch: f64,
    cp: &CommonPrior,
    init: Option<&Psi>,
    opts: &OptimOptions,
) -> Result<FitRecord, FitError> {
    let lik = GhLikelihood::new(data, gamma, k)?;
    let prior = ProductPrior::new(data, lik.design(), g_ct, g_ch)?;
    let x0 = start_vector(data, lik.design(), init)?;
    let obj = MapObjective { lik: lik.clone(), prior, cp: *cp };
    run(&obj, &lik, x0, opts)
}

/// The penalised objective used by [`fit_map`], for external checks.
pub fn map_objective(
    gamma: &Gamma,
    data: &Dataset,
    k: BaselineKernel,
    g_ct: f64,
    g_ch: f64,
    cp: &CommonPrior,
    x: &[f64],
) -> Result<f64, FitError> {
    let lik = GhLikelihood::new(data, gamma, k)?;
    let prior = ProductPrior::new(data, lik.design(), g_ct, g_ch)?;
    let obj = MapObjective { lik: lik.clone(), prior, cp: *cp };
    Ok(lik.value(x)? + obj.log_prior(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_like_quadratic() {
        struct Quad;
        impl Objective for Quad {
            fn value_grad(&self, x: &[f64]) -> Option<(f64, DVector<f64>, bool)> {
                let (a, b) = (x[0] - 1.0, x[1] + 2.0);
                Some((-(a * a + 10.0 * b * b + a * b), DVector::from_vec(vec![-(2.0 * a + b), -(20.0 * b + a)]), false))
            }
            fn hessian(&self, _: &[f64]) -> Option<DMatrix<f64>> {
                None
            }
        }
        let out = maximise(&Quad, &[5.0, 5.0], &OptimOptions::default()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn lognormal_null_closed_form() {
        let t: Vec<f64> = [0.3, 1.1, 2.5, 0.8, 4.0, 1.7, 0.5].to_vec();
        let n = t.len();
        let data = Dataset::new(t.clone(), vec![1.0; n], DMatrix::zeros(n, 0), vec![]).unwrap();
        let fit = fit_mle(&Gamma::null(0), &data, BaselineKernel::Normal, None, &OptimOptions::default()).unwrap();
        let logs: Vec<f64> = t.iter().map(|v| v.ln()).collect();
        let mu = logs.iter().sum::<f64>() / n as f64;
        let sd = (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert_eq!(fit.status, FitStatus::Converged);
        assert!((fit.psi_opt.nu + sd.ln()).abs() < 1e-9);
        assert!((fit.psi_opt.theta0 - mu / sd).abs() < 1e-9);
    }
}
