//! Log-likelihood of the general hazard model in the `(nu, theta0, theta, eta)`
//! coordinates, with analytic first and second derivatives.
//!
//! The per-observation contribution depends on the parameters only through
//! `nu`, `theta0`, the time-level predictor `a = x~'theta` and the hazard-level
//! predictor `b = x'eta`. Derivatives are taken with respect to those four
//! scalars and then pushed through the (linear) design.

use crate::baseline::BaselineKernel;
use crate::modelspace::{Gamma, HazardClass};
use nalgebra::{DMatrix, DVector};
use std::hash::{Hash, Hasher};
use thiserror::Error;

/// Bound on `|e^{-nu} a - b|` before exponentiation.
pub const LINPRED_CLAMP: f64 = 500.0;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("dataset must contain at least one observation")]
    Empty,
    #[error("length mismatch: {what} has {got} entries, expected {want}")]
    Length { what: &'static str, got: usize, want: usize },
    #[error("time at row {row} is {value}; times must be positive and finite")]
    BadTime { row: usize, value: f64 },
    #[error("status at row {row} is {value}; must be 0 or 1")]
    BadStatus { row: usize, value: f64 },
    #[error("covariate `{name}` at row {row} is not finite")]
    BadCovariate { row: usize, name: String },
    #[error("covariate `{0}` has zero variance and cannot be standardised")]
    ConstantColumn(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum LikError {
    #[error("parameter vector has length {got}, model needs {want}")]
    Dimension { got: usize, want: usize },
    #[error("model has {got} variables but the data have {want}")]
    ModelSize { got: usize, want: usize },
}

/// Right-censored sample with a shared covariate matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    t: Vec<f64>,
    log_t: Vec<f64>,
    delta: Vec<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
}

impl Dataset {
    /// `delta` entries must be exactly 0 or 1.
    pub fn new(
        t: Vec<f64>,
        delta: Vec<f64>,
        x: DMatrix<f64>,
        names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = t.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if delta.len() != n {
            return Err(DataError::Length { what: "status", got: delta.len(), want: n });
        }
        if x.nrows() != n {
            return Err(DataError::Length { what: "covariate rows", got: x.nrows(), want: n });
        }
        if names.len() != x.ncols() {
            return Err(DataError::Length { what: "names", got: names.len(), want: x.ncols() });
        }
        for (row, &v) in t.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DataError::BadTime { row, value: v });
            }
        }
        for (row, &d) in delta.iter().enumerate() {
            if d != 0.0 && d != 1.0 {
                return Err(DataError::BadStatus { row, value: d });
            }
        }
        for j in 0..x.ncols() {
            for row in 0..n {
                if !x[(row, j)].is_finite() {
                    return Err(DataError::BadCovariate { row, name: names[j].clone() });
                }
            }
        }
        let log_t = t.iter().map(|v| v.ln()).collect();
        Ok(Dataset { t, log_t, delta, x, names })
    }

    /// Same data with every covariate column centred and scaled to unit
    /// (sample, n-1) standard deviation.
    pub fn standardized(&self) -> Result<Self, DataError> {
        let n = self.n();
        let mut x = self.x.clone();
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mean = col.mean();
            let var = if n > 1 {
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            if !(var > 0.0) {
                return Err(DataError::ConstantColumn(self.names[j].clone()));
            }
            let sd = var.sqrt();
            x.column_mut(j).iter_mut().for_each(|v| *v = (*v - mean) / sd);
        }
        Dataset::new(self.t.clone(), self.delta.clone(), x, self.names.clone())
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn times(&self) -> &[f64] {
        &self.t
    }
    pub fn log_times(&self) -> &[f64] {
        &self.log_t
    }
    pub fn status(&self) -> &[f64] {
        &self.delta
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn n_events(&self) -> usize {
        self.delta.iter().filter(|&&d| d == 1.0).count()
    }

    /// Rows reordered by `perm` (`perm[i]` is the source row of row `i`).
    pub fn permuted_rows(&self, perm: &[usize]) -> Self {
        let t = perm.iter().map(|&i| self.t[i]).collect();
        let delta = perm.iter().map(|&i| self.delta[i]).collect();
        let x = DMatrix::from_fn(self.n(), self.p(), |i, j| self.x[(perm[i], j)]);
        Dataset::new(t, delta, x, self.names.clone()).expect("permutation of valid data")
    }

    /// Stable hash of the numeric content, used in cache keys.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.n().hash(&mut h);
        self.p().hash(&mut h);
        for v in self.t.iter().chain(&self.delta).chain(self.x.iter()) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Column selections implied by a model indicator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    /// Columns of the time-level design (codes 1, 3, or 4 for AFT).
    pub time_cols: Vec<usize>,
    /// Columns of the hazard-level design (codes 2, 3). Empty for AFT.
    pub haz_cols: Vec<usize>,
    /// Hazard-level coefficients are tied to `e^{-nu} theta` on the time columns.
    pub aft: bool,
}

impl Design {
    pub fn from_gamma(gamma: &Gamma) -> Self {
        let codes = gamma.codes();
        let aft = gamma.classify() == HazardClass::AFT;
        let pick = |f: &dyn Fn(u8) -> bool| (0..codes.len()).filter(|&j| f(codes[j])).collect();
        if aft {
            Design { time_cols: pick(&|c| c == 4), haz_cols: vec![], aft }
        } else {
            Design {
                time_cols: pick(&|c| c == 1 || c == 3),
                haz_cols: pick(&|c| c == 2 || c == 3),
                aft,
            }
        }
    }

    pub fn q(&self) -> usize {
        self.time_cols.len()
    }
    pub fn r(&self) -> usize {
        self.haz_cols.len()
    }
    /// Number of regression coefficients (`d_gamma`).
    pub fn d(&self) -> usize {
        self.q() + self.r()
    }
    /// Length of the full parameter vector.
    pub fn dim(&self) -> usize {
        2 + self.d()
    }
}

/// Parameters in the reparametrised coordinates:
/// `e^nu = 1/sigma`, `theta0 = mu/sigma`, `theta = -alpha/sigma`, `eta = -beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Psi {
    pub nu: f64,
    pub theta0: f64,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Parameters on the original hazard scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub mu: f64,
    pub sigma: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Psi {
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(2 + self.theta.len() + self.eta.len());
        v.push(self.nu);
        v.push(self.theta0);
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.eta);
        DVector::from_vec(v)
    }

    pub fn from_slice(design: &Design, v: &[f64]) -> Result<Self, LikError> {
        if v.len() != design.dim() {
            return Err(LikError::Dimension { got: v.len(), want: design.dim() });
        }
        let q = design.q();
        Ok(Psi {
            nu: v[0],
            theta0: v[1],
            theta: v[2..2 + q].to_vec(),
            eta: v[2 + q..].to_vec(),
        })
    }

    /// `(mu, sigma, alpha, beta)`. For AFT models `beta` repeats `alpha`.
    pub fn natural(&self, design: &Design) -> NaturalParams {
        let sigma = (-self.nu).exp();
        let alpha: Vec<f64> = self.theta.iter().map(|t| -t * sigma).collect();
        let beta = if design.aft {
            alpha.clone()
        } else {
            self.eta.iter().map(|e| -e).collect()
        };
        NaturalParams { mu: self.theta0 * sigma, sigma, alpha, beta }
    }

    /// Starting point for `to`, copying coefficients of columns shared with
    /// `from` and zeroing new ones.
    pub fn project(&self, from: &Design, to: &Design) -> Psi {
        let carry = |cols_from: &[usize], vals: &[f64], cols_to: &[usize]| -> Vec<f64> {
            cols_to
                .iter()
                .map(|c| cols_from.iter().position(|d| d == c).map_or(0.0, |k| vals[k]))
                .collect()
        };
        Psi {
            nu: self.nu,
            theta0: self.theta0,
            theta: carry(&from.time_cols, &self.theta, &to.time_cols),
            eta: if to.aft { vec![] } else { carry(&from.haz_cols, &self.eta, &to.haz_cols) },
        }
    }
}

/// Value and optional derivatives of the log-likelihood at one point.
#[derive(Debug, Clone)]
pub struct LikEval {
    pub value: f64,
    pub grad: Option<DVector<f64>>,
    pub hess: Option<DMatrix<f64>>,
    /// Set when a linear predictor hit the overflow clamp.
    pub boundary: bool,
}

/// Derivative order requested from the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// The log-likelihood for a fixed data set, design and kernel.
#[derive(Debug, Clone)]
pub struct GhLikelihood<'a> {
    data: &'a Dataset,
    design: Design,
    kernel: BaselineKernel,
}

impl<'a> GhLikelihood<'a> {
    pub fn new(data: &'a Dataset, gamma: &Gamma, kernel: BaselineKernel) -> Result<Self, LikError> {
        if gamma.p() != data.p() {
            return Err(LikError::ModelSize { got: gamma.p(), want: data.p() });
        }
        Ok(Self::with_design(data, Design::from_gamma(gamma), kernel))
    }

    /// Arbitrary column selections, e.g. an untied design that shares columns
    /// between the two levels.
    pub fn with_design(data: &'a Dataset, design: Design, kernel: BaselineKernel) -> Self {
        GhLikelihood { data, design, kernel }
    }

    pub fn design(&self) -> &Design {
        &self.design
    }
    pub fn data(&self) -> &Dataset {
        self.data
    }
    pub fn kernel(&self) -> BaselineKernel {
        self.kernel
    }
    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    pub fn value(&self, psi: &[f64]) -> Result<f64, LikError> {
        Ok(self.evaluate(psi, Order::Value)?.value)
    }

    pub fn gradient(&self, psi: &[f64]) -> Result<DVector<f64>, LikError> {
        Ok(self.evaluate(psi, Order::Gradient)?.grad.expect("gradient requested"))
    }

    pub fn hessian(&self, psi: &[f64]) -> Result<DMatrix<f64>, LikError> {
        Ok(self.evaluate(psi, Order::Hessian)?.hess.expect("hessian requested"))
    }

    /// Value specialised to tied (AFT) designs, where every `v_i` equals one.
    pub fn aft_value(&self, psi: &[f64]) -> Result<f64, LikError> {
        self.check_dim(psi)?;
        let k = self.kernel;
        let (nu, theta0) = (psi[0], psi[1]);
        let big_e = nu.exp();
        let theta = &psi[2..2 + self.design.q()];
        let mut total = 0.0;
        for i in 0..self.data.n() {
            let a = self.predictor(i, &self.design.time_cols, theta);
            let u = big_e * self.data.log_t[i] - a - theta0;
            let d = self.data.delta[i];
            total += d * (nu - self.data.log_t[i] + k.log_f(u)) + (1.0 - d) * k.log_f_neg(u);
        }
        Ok(total)
    }

    fn check_dim(&self, psi: &[f64]) -> Result<(), LikError> {
        if psi.len() != self.dim() {
            return Err(LikError::Dimension { got: psi.len(), want: self.dim() });
        }
        Ok(())
    }

    fn predictor(&self, i: usize, cols: &[usize], coef: &[f64]) -> f64 {
        cols.iter().zip(coef).map(|(&c, &b)| self.data.x[(i, c)] * b).sum()
    }

    /// Single pass over the observations computing whatever `order` asks for.
    pub fn evaluate(&self, psi: &[f64], order: Order) -> Result<LikEval, LikError> {
        self.check_dim(psi)?;
        let design = &self.design;
        let (q, r) = (design.q(), design.r());
        let dim = design.dim();
        let (nu, theta0) = (psi[0], psi[1]);
        let theta = &psi[2..2 + q];
        let eta = &psi[2 + q..];
        let big_e = nu.exp();
        let e = (-nu).exp();
        let k = self.kernel;
        let want_grad = order >= Order::Gradient;
        let want_hess = order >= Order::Hessian;

        let mut value = 0.0;
        let mut boundary = false;
        let mut grad = DVector::zeros(if want_grad { dim } else { 0 });
        let mut hess = DMatrix::zeros(if want_hess { dim } else { 0 }, if want_hess { dim } else { 0 });
        let mut xt = vec![0.0; q];
        let mut xh = vec![0.0; r];

        for i in 0..self.data.n() {
            let d = self.data.delta[i];
            let lt = self.data.log_t[i];
            for (slot, &c) in xt.iter_mut().zip(&design.time_cols) {
                *slot = self.data.x[(i, c)];
            }
            for (slot, &c) in xh.iter_mut().zip(&design.haz_cols) {
                *slot = self.data.x[(i, c)];
            }
            let a: f64 = xt.iter().zip(theta).map(|(x, t)| x * t).sum();
            let b: f64 = if design.aft {
                e * a
            } else {
                xh.iter().zip(eta).map(|(x, t)| x * t).sum()
            };
            let u = big_e * lt - a - theta0;
            let (lp, v) = if design.aft {
                (0.0, 1.0)
            } else {
                let raw = e * a - b;
                let lp = if raw.abs() > LINPRED_CLAMP {
                    boundary = true;
                    raw.signum() * LINPRED_CLAMP
                } else {
                    raw
                };
                (lp, lp.exp())
            };
            let log_fneg = k.log_f_neg(u);
            value += d * (nu - lt + lp + k.log_f(u)) + log_fneg * (v - d);
            if !want_grad {
                continue;
            }

            // Derivatives of the contribution in z = (nu, theta0, a, b).
            let big_l = log_fneg;
            let ratio = k.ratio_f_over_fneg(u);
            let g1 = k.ratio_fprime_over_f(u);
            let dl = -ratio; // d/du log F(-u)
            let u_nu = big_e * lt;
            let lp_nu = -e * a;
            let w = v - d;

            let z_nu = d * (1.0 - e * a + g1 * u_nu) + dl * u_nu * w + big_l * v * lp_nu;
            let z_t0 = -d * g1 - dl * w;
            let z_a = d * (e - g1) - dl * w + big_l * v * e;
            let z_b = -d - big_l * v;

            let mut h = [[0.0; 4]; 4];
            if want_hess {
                let d2 = k.ratio_fsecond_over_f(u) - g1 * g1; // (log f)''
                let ddl = -ratio * (g1 + ratio); // d^2/du^2 log F(-u)
                let v_nu = v * lp_nu;
                let v_nunu = v * (lp_nu * lp_nu + e * a);
                h[0][0] = d * (e * a + d2 * u_nu * u_nu + g1 * u_nu)
                    + ddl * u_nu * u_nu * w
                    + dl * u_nu * w
                    + 2.0 * dl * u_nu * v_nu
                    + big_l * v_nunu;
                h[0][1] = -d * d2 * u_nu - ddl * u_nu * w - dl * v_nu;
                h[0][2] = -d * e - d * d2 * u_nu - ddl * u_nu * w + dl * u_nu * v * e - dl * v_nu
                    + big_l * v * e * lp_nu
                    - big_l * v * e;
                h[0][3] = -dl * u_nu * v - big_l * v_nu;
                h[1][1] = d * d2 + ddl * w;
                h[1][2] = d * d2 + ddl * w - dl * v * e;
                h[1][3] = dl * v;
                h[2][2] = d * d2 + ddl * w - 2.0 * dl * v * e + big_l * v * e * e;
                h[2][3] = dl * v - big_l * v * e;
                h[3][3] = big_l * v;
                #[allow(clippy::needless_range_loop)]
                for r in 1..4 {
                    for c in 0..r {
                        h[r][c] = h[c][r];
                    }
                }
            }

            if design.aft {
                // b = e^{-nu} a: push the b-derivatives onto nu and a.
                let b_nu = -e * a;
                let g_nu = z_nu + z_b * b_nu;
                let g_a = z_a + z_b * e;
                grad[0] += g_nu;
                grad[1] += z_t0;
                for (jj, x) in xt.iter().enumerate() {
                    grad[2 + jj] += g_a * x;
                }
                if want_hess {
                    let hnn = h[0][0] + 2.0 * h[0][3] * b_nu + h[3][3] * b_nu * b_nu + z_b * e * a;
                    let hn0 = h[0][1] + h[1][3] * b_nu;
                    let hna = h[0][2] + h[0][3] * e + h[2][3] * b_nu + h[3][3] * b_nu * e - z_b * e;
                    let h00 = h[1][1];
                    let h0a = h[1][2] + h[1][3] * e;
                    let haa = h[2][2] + 2.0 * h[2][3] * e + h[3][3] * e * e;
                    accumulate(&mut hess, q, 0, &xt, &[], hnn, hn0, hna, 0.0, h00, h0a, 0.0, haa, 0.0, 0.0);
                }
            } else {
                grad[0] += z_nu;
                grad[1] += z_t0;
                for (jj, x) in xt.iter().enumerate() {
                    grad[2 + jj] += z_a * x;
                }
                for (jj, x) in xh.iter().enumerate() {
                    grad[2 + q + jj] += z_b * x;
                }
                if want_hess {
                    accumulate(
                        &mut hess, q, r, &xt, &xh, h[0][0], h[0][1], h[0][2], h[0][3], h[1][1],
                        h[1][2], h[1][3], h[2][2], h[2][3], h[3][3],
                    );
                }
            }
        }
        if want_hess {
            for r_ in 0..dim {
                for c_ in 0..r_ {
                    hess[(r_, c_)] = hess[(c_, r_)];
                }
            }
        }
        if !value.is_finite() {
            value = f64::NEG_INFINITY;
        }
        Ok(LikEval {
            value,
            grad: want_grad.then_some(grad),
            hess: want_hess.then_some(hess),
            boundary,
        })
    }
}

/// Adds one observation's curvature to the upper triangle of `hess`.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    hess: &mut DMatrix<f64>,
    q: usize,
    r: usize,
    xt: &[f64],
    xh: &[f64],
    hnn: f64,
    hn0: f64,
    hna: f64,
    hnb: f64,
    h00: f64,
    h0a: f64,
    h0b: f64,
    haa: f64,
    hab: f64,
    hbb: f64,
) {
    hess[(0, 0)] += hnn;
    hess[(0, 1)] += hn0;
    hess[(1, 1)] += h00;
    for j in 0..q {
        hess[(0, 2 + j)] += hna * xt[j];
        hess[(1, 2 + j)] += h0a * xt[j];
        for l in j..q {
            hess[(2 + j, 2 + l)] += haa * xt[j] * xt[l];
        }
        for l in 0..r {
            hess[(2 + j, 2 + q + l)] += hab * xt[j] * xh[l];
        }
    }
    for j in 0..r {
        hess[(0, 2 + q + j)] += hnb * xh[j];
        hess[(1, 2 + q + j)] += h0b * xh[j];
        for l in j..r {
            hess[(2 + q + j, 2 + q + l)] += hbb * xh[j] * xh[l];
        }
    }
}

/// `l_n(Psi)` for model `gamma`.
pub fn loglik(psi: &Psi, gamma: &Gamma, data: &Dataset, k: BaselineKernel) -> Result<f64, LikError> {
    let lik = GhLikelihood::new(data, gamma, k)?;
    let v = psi.to_vector();
    if lik.design().aft {
        lik.aft_value(v.as_slice())
    } else {
        lik.value(v.as_slice())
    }
}

/// Gradient in the order `(nu, theta0, theta, eta)`.
pub fn grad_loglik(
    psi: &Psi,
    gamma: &Gamma,
    data: &Dataset,
    k: BaselineKernel,
) -> Result<DVector<f64>, LikError> {
    GhLikelihood::new(data, gamma, k)?.gradient(psi.to_vector().as_slice())
}

pub fn hess_loglik(
    psi: &Psi,
    gamma: &Gamma,
    data: &Dataset,
    k: BaselineKernel,
) -> Result<DMatrix<f64>, LikError> {
    GhLikelihood::new(data, gamma, k)?.hessian(psi.to_vector().as_slice())
}

/// Negated Hessian with named block accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedFisher {
    pub matrix: DMatrix<f64>,
}

impl ObservedFisher {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        ObservedFisher { matrix }
    }
    pub fn d(&self) -> usize {
        self.matrix.nrows() - 2
    }
    /// The 2x2 `(nu, theta0)` block.
    pub fn common(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (2, 2)).into_owned()
    }
    /// The `d x d` coefficient block.
    pub fn coef(&self) -> DMatrix<f64> {
        let d = self.d();
        self.matrix.view((2, 2), (d, d)).into_owned()
    }
    /// The `d x 2` cross block between coefficients and `(nu, theta0)`.
    pub fn cross(&self) -> DMatrix<f64> {
        let d = self.d();
        self.matrix.view((2, 0), (d, 2)).into_owned()
    }
}

pub fn observed_fisher(
    psi: &Psi,
    gamma: &Gamma,
    data: &Dataset,
    k: BaselineKernel,
) -> Result<ObservedFisher, LikError> {
    Ok(ObservedFisher::new(-hess_loglik(psi, gamma, data, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_obs(t: f64, d: f64) -> Dataset {
        Dataset::new(vec![t], vec![d], DMatrix::zeros(1, 0), vec![]).unwrap()
    }

    #[test]
    fn single_event_at_one() {
        let data = one_obs(1.0, 1.0);
        let g = Gamma::null(0);
        let psi = Psi { nu: 0.0, theta0: 0.0, theta: vec![], eta: vec![] };
        let l = loglik(&psi, &g, &data, BaselineKernel::Normal).unwrap();
        assert!((l + 0.918_938_533_204_672_7).abs() < 1e-14);
        let gr = grad_loglik(&psi, &g, &data, BaselineKernel::Normal).unwrap();
        assert!((gr[0] - 1.0).abs() < 1e-14);
        assert!(gr[1].abs() < 1e-14);
    }

    #[test]
    fn single_censored_at_e() {
        let data = one_obs(std::f64::consts::E, 0.0);
        let psi = Psi { nu: 0.0, theta0: 0.0, theta: vec![], eta: vec![] };
        let l = loglik(&psi, &Gamma::null(0), &data, BaselineKernel::Normal).unwrap();
        assert!((l - (-1.841_021_645_009_264)).abs() < 1e-9, "{l}");
    }

    #[test]
    fn rejects_bad_data() {
        let x = DMatrix::zeros(2, 0);
        assert!(matches!(
            Dataset::new(vec![1.0, -1.0], vec![1.0, 0.0], x.clone(), vec![]),
            Err(DataError::BadTime { row: 1, .. })
        ));
        assert!(matches!(
            Dataset::new(vec![1.0, 1.0], vec![1.0, 2.0], x.clone(), vec![]),
            Err(DataError::BadStatus { row: 1, .. })
        ));
        assert!(matches!(Dataset::new(vec![], vec![], DMatrix::zeros(0, 0), vec![]), Err(DataError::Empty)));
    }

    #[test]
    fn dimension_errors() {
        let data = one_obs(1.0, 1.0);
        let lik = GhLikelihood::new(&data, &Gamma::null(0), BaselineKernel::Normal).unwrap();
        assert_eq!(lik.value(&[0.0]), Err(LikError::Dimension { got: 1, want: 2 }));
        assert!(GhLikelihood::new(&data, &Gamma::null(2), BaselineKernel::Normal).is_err());
    }

    #[test]
    fn design_from_gamma() {
        let g: Gamma = "0312".parse().unwrap();
        let d = Design::from_gamma(&g);
        assert_eq!(d.time_cols, vec![1, 2]);
        assert_eq!(d.haz_cols, vec![1, 3]);
        assert_eq!(d.dim(), 6);
        let g: Gamma = "404".parse().unwrap();
        let d = Design::from_gamma(&g);
        assert!(d.aft);
        assert_eq!(d.time_cols, vec![0, 2]);
        assert_eq!(d.dim(), 4);
    }

    #[test]
    fn projection_keeps_shared_columns() {
        let from = Design::from_gamma(&"31".parse().unwrap());
        let to = Design::from_gamma(&"32".parse().unwrap());
        let psi = Psi { nu: 0.1, theta0: 0.2, theta: vec![1.0, 2.0], eta: vec![3.0] };
        let p = psi.project(&from, &to);
        assert_eq!(p.theta, vec![1.0]);
        assert_eq!(p.eta, vec![3.0, 0.0]);
    }

    #[test]
    fn natural_round_trip() {
        let d = Design::from_gamma(&"12".parse().unwrap());
        let psi = Psi { nu: 0.5, theta0: 1.0, theta: vec![-2.0], eta: vec![0.3] };
        let nat = psi.natural(&d);
        let sigma = (-0.5f64).exp();
        assert!((nat.sigma - sigma).abs() < 1e-15);
        assert!((nat.mu - sigma).abs() < 1e-15);
        assert!((nat.alpha[0] - 2.0 * sigma).abs() < 1e-15);
        assert_eq!(nat.beta, vec![-0.3]);
    }
}
