//! Parameter priors: the common `(nu, theta0)` priors, the Gram-matrix
//! (product) g-prior, the curvature-matched g-prior and the robust hyper-g
//! density.

use crate::ghlik::{Dataset, Design};
use libm::lgamma;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("{block} Gram matrix is not positive definite")]
    RankDeficient { block: &'static str },
    #[error("coefficient block of the observed information is not positive definite")]
    NotPositiveDefinite,
    #[error("hyperparameter {name} = {value} must be positive")]
    NonPositive { name: &'static str, value: f64 },
}

/// Priors on the common parameters.
///
/// `nu` gets `log` of a Gamma(`alpha_nu`, `beta_nu`) density on `e^nu` (with
/// Jacobian) in the Laplace route, and the normal `N(nu_mean, nu_sd^2)`
/// stand-in in the integrated Laplace route. `theta0 ~ N(0, k)` in both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommonPrior {
    pub alpha_nu: f64,
    pub beta_nu: f64,
    pub k: f64,
    pub nu_mean: f64,
    pub nu_sd: f64,
}

impl Default for CommonPrior {
    fn default() -> Self {
        CommonPrior { alpha_nu: 0.01, beta_nu: 0.01, k: 1e6, nu_mean: 9.34, nu_sd: 41.15 }
    }
}

impl CommonPrior {
    pub fn validate(&self) -> Result<(), PriorError> {
        for (name, value) in [
            ("alpha_nu", self.alpha_nu),
            ("beta_nu", self.beta_nu),
            ("K", self.k),
            ("nu_sd", self.nu_sd),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PriorError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// Gamma hyperparameters with the normal stand-in for `nu` set by
    /// matching the mean and variance of `log tau`, `tau ~ Gamma(alpha, beta)`.
    pub fn moment_matched(alpha_nu: f64, beta_nu: f64, k: f64) -> Self {
        CommonPrior {
            alpha_nu,
            beta_nu,
            k,
            nu_mean: digamma(alpha_nu) - beta_nu.ln(),
            nu_sd: trigamma(alpha_nu).sqrt(),
        }
    }

    /// `log pi(nu)` for the Gamma prior on `e^nu`.
    pub fn log_nu_gamma(&self, nu: f64) -> f64 {
        let (a, b) = (self.alpha_nu, self.beta_nu);
        a * b.ln() + a * nu - b * nu.exp() - lgamma(a)
    }

    /// `log N(theta0; 0, K)`.
    pub fn log_theta0(&self, theta0: f64) -> f64 {
        -0.5 * (2.0 * PI * self.k).ln() - 0.5 * theta0 * theta0 / self.k
    }

    /// `log N(nu; nu_mean, nu_sd^2)`.
    pub fn log_nu_normal(&self, nu: f64) -> f64 {
        let z = (nu - self.nu_mean) / self.nu_sd;
        -0.5 * (2.0 * PI).ln() - self.nu_sd.ln() - 0.5 * z * z
    }
}

/// Log density of the common priors (Gamma on `e^nu`, normal on `theta0`).
pub fn log_common_prior(nu: f64, theta0: f64, cp: &CommonPrior) -> f64 {
    cp.log_nu_gamma(nu) + cp.log_theta0(theta0)
}

/// Gradient of [`log_common_prior`] in `(nu, theta0)`.
pub fn grad_common_prior(nu: f64, theta0: f64, cp: &CommonPrior) -> [f64; 2] {
    [cp.alpha_nu - cp.beta_nu * nu.exp(), -theta0 / cp.k]
}

/// Diagonal Hessian of [`log_common_prior`] in `(nu, theta0)`.
pub fn hess_common_prior(nu: f64, cp: &CommonPrior) -> [f64; 2] {
    [-cp.beta_nu * nu.exp(), -1.0 / cp.k]
}

/// How `g_E` enters the curvature-matched prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GMode {
    Fixed,
    RobustHyper,
}

/// Which coefficient prior, with its g hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientPrior {
    Lcm { g_e: f64, mode: GMode },
    Product { g_ct: f64, g_ch: f64 },
}

impl Default for CoefficientPrior {
    fn default() -> Self {
        CoefficientPrior::Lcm { g_e: 1.0, mode: GMode::Fixed }
    }
}

/// Independent g-priors on `theta` and `eta` built from the two Gram matrices.
///
/// For tied (AFT) designs only the `theta` factor is present.
#[derive(Debug, Clone)]
pub struct ProductPrior {
    gram_t: DMatrix<f64>,
    gram_h: DMatrix<f64>,
    g_ct: f64,
    g_ch: f64,
    n: f64,
    log_norm: f64,
}

fn chol_logdet(m: &DMatrix<f64>) -> Option<f64> {
    Cholesky::new(m.clone()).map(|c| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

fn gram(data: &Dataset, cols: &[usize]) -> DMatrix<f64> {
    let sub = data.x().select_columns(cols);
    sub.transpose() * sub
}

impl ProductPrior {
    pub fn new(data: &Dataset, design: &Design, g_ct: f64, g_ch: f64) -> Result<Self, PriorError> {
        if !(g_ct > 0.0) {
            return Err(PriorError::NonPositive { name: "g_ct", value: g_ct });
        }
        if !(g_ch > 0.0) {
            return Err(PriorError::NonPositive { name: "g_ch", value: g_ch });
        }
        let n = data.n() as f64;
        let gram_t = gram(data, &design.time_cols);
        let gram_h = gram(data, &design.haz_cols);
        let (q, r) = (design.q() as f64, design.r() as f64);
        let ld_t = if design.q() == 0 {
            0.0
        } else {
            chol_logdet(&gram_t).ok_or(PriorError::RankDeficient { block: "time-level" })?
        };
        let ld_h = if design.r() == 0 {
            0.0
        } else {
            chol_logdet(&gram_h).ok_or(PriorError::RankDeficient { block: "hazard-level" })?
        };
        // -(k/2) log 2pi - (1/2) log|g n G^{-1}| for each block
        let log_norm = -0.5 * (q + r) * (2.0 * PI).ln() - 0.5 * (q * (g_ct * n).ln() - ld_t)
            - 0.5 * (r * (g_ch * n).ln() - ld_h);
        Ok(ProductPrior { gram_t, gram_h, g_ct, g_ch, n, log_norm })
    }

    pub fn q(&self) -> usize {
        self.gram_t.nrows()
    }
    pub fn r(&self) -> usize {
        self.gram_h.nrows()
    }

    pub fn logpdf(&self, theta: &[f64], eta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        let e = DVector::from_column_slice(eta);
        let qt = t.dot(&(&self.gram_t * &t)) / (self.g_ct * self.n);
        let qe = e.dot(&(&self.gram_h * &e)) / (self.g_ch * self.n);
        self.log_norm - 0.5 * (qt + qe)
    }

    /// Gradient in `(theta, eta)`.
    pub fn grad(&self, theta: &[f64], eta: &[f64]) -> DVector<f64> {
        let t = DVector::from_column_slice(theta);
        let e = DVector::from_column_slice(eta);
        let gt = -(&self.gram_t * t) / (self.g_ct * self.n);
        let ge = -(&self.gram_h * e) / (self.g_ch * self.n);
        DVector::from_iterator(gt.len() + ge.len(), gt.iter().chain(ge.iter()).copied())
    }

    /// Constant block-diagonal Hessian in `(theta, eta)`.
    pub fn hess(&self) -> DMatrix<f64> {
        let (q, r) = (self.q(), self.r());
        let mut h = DMatrix::zeros(q + r, q + r);
        h.view_mut((0, 0), (q, q)).copy_from(&(-&self.gram_t / (self.g_ct * self.n)));
        h.view_mut((q, q), (r, r)).copy_from(&(-&self.gram_h / (self.g_ch * self.n)));
        h
    }
}

/// Log density of the product prior at `(theta, eta)` for `design`.
pub fn product_prior_logpdf(
    theta: &[f64],
    eta: &[f64],
    design: &Design,
    data: &Dataset,
    g_ct: f64,
    g_ch: f64,
) -> Result<f64, PriorError> {
    Ok(ProductPrior::new(data, design, g_ct, g_ch)?.logpdf(theta, eta))
}

/// Covariance `n g_E J^{-1}` of the curvature-matched prior, from the
/// coefficient block `J` of the observed information at the MLE.
pub fn lcm_prior_cov(coef_fisher: &DMatrix<f64>, n: usize, g_e: f64) -> Result<DMatrix<f64>, PriorError> {
    if !(g_e > 0.0) {
        return Err(PriorError::NonPositive { name: "g_E", value: g_e });
    }
    let chol = Cholesky::<f64, Dyn>::new(coef_fisher.clone()).ok_or(PriorError::NotPositiveDefinite)?;
    let mut cov = chol.inverse() * (n as f64 * g_e);
    // symmetrise away rounding
    let t = cov.transpose();
    cov = (cov + t) * 0.5;
    Ok(cov)
}

/// Lower edge of the robust hyper-g support.
pub fn robust_g_lower(n: usize, d: usize) -> f64 {
    let n = n as f64;
    (1.0 + n) / (n * (d as f64 + 1.0)) - 1.0 / n
}

/// Log density of the robust hyper-g prior; `-inf` outside its support.
pub fn robust_g_logpdf(g: f64, n: usize, d: usize) -> f64 {
    if !(g > robust_g_lower(n, d)) {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    let s_lo = (1.0 + nf) / (nf * (d as f64 + 1.0));
    (0.5 * s_lo.sqrt()).ln() - 1.5 * (g + 1.0 / nf).ln()
}

/// Digamma by upward recurrence and the asymptotic series.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x
        - x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 / 132.0))))
}

/// Trigamma by upward recurrence and the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + 0.5 * x2
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}
