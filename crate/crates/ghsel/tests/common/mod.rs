//! Helpers shared by the integration tests.
#![allow(dead_code)]

use ghsel::baseline::BaselineKernel;
use ghsel::ghlik::{Dataset, GhLikelihood};
use ghsel::marglik::{ila_log_marglik, la_log_marglik, LaNormalisation, MarglikConfig};
use ghsel::modelspace::{enumerate_models, Gamma, HazardClass};
use ghsel::sampler::{enumerate_proposals, proposal_graph_strongly_connected, PathRecord};
use ghsel::priors::{log_common_prior, CommonPrior, ProductPrior};
use ghsel::quad::gauss_hermite;
use ghsel::simulate::{simulate_dataset, SimConfig};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Log of `int exp(f(x)) dx` over R^D by a tensor Gauss–Hermite rule in
/// coordinates whitened at `mode` with curvature `neg_hess`, stretched by
/// `stretch` to cover skewed tails.
pub fn log_integral<F: Fn(&[f64]) -> f64>(f: F, mode: &[f64], neg_hess: &DMatrix<f64>, nodes: usize, stretch: f64) -> f64 {
    let dim = mode.len();
    let cov = neg_hess.clone().cholesky().expect("PD curvature").inverse();
    let l = cov.cholesky().expect("PD covariance").l() * stretch;
    let log_jac = l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let (z, w) = gauss_hermite(nodes);
    let mut idx = vec![0usize; dim];
    let mut terms = Vec::with_capacity(nodes.pow(dim as u32));
    let centre = DVector::from_column_slice(mode);
    loop {
        let zv = DVector::from_iterator(dim, idx.iter().map(|&k| z[k]));
        let x = &centre + &l * &zv;
        let lw: f64 = idx.iter().map(|&k| w[k].ln()).sum();
        terms.push(f(x.as_slice()) + 0.5 * zv.norm_squared() + lw);
        let mut k = 0;
        loop {
            if k == dim {
                let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = terms.iter().map(|t| (t - top).exp()).sum();
                return top + s.ln() + log_jac;
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Mode of `l(x) - (x - m)' Q (x - m) / 2` by damped Newton from `start`.
pub fn gaussian_posterior_mode(lik: &GhLikelihood, m: &DVector<f64>, q: &DMatrix<f64>, start: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let obj = |x: &DVector<f64>| lik.value(x.as_slice()).unwrap() - 0.5 * (x - m).dot(&(q * (x - m)));
    let mut x = DVector::from_column_slice(start);
    for _ in 0..100 {
        let g = lik.gradient(x.as_slice()).unwrap() - q * (&x - m);
        let h = lik.hessian(x.as_slice()).unwrap() - q;
        let step = (-h).cholesky().expect("concave near the mode").solve(&g);
        let f0 = obj(&x);
        let mut t = 1.0;
        while obj(&(&x + &step * t)) < f0 - 1e-12 && t > 1e-8 {
            t *= 0.5;
        }
        x += &step * t;
        if g.amax() < 1e-10 {
            break;
        }
    }
    let h = lik.hessian(x.as_slice()).unwrap() - q;
    (x.as_slice().to_vec(), -h)
}

/// Log-density of the Gaussian prior with precision `q` and mean `m`.
pub fn gaussian_log_density(m: &DVector<f64>, q: &DMatrix<f64>) -> impl Fn(&[f64]) -> f64 {
    let logdet: f64 = 2.0 * q.clone().cholesky().unwrap().l().diagonal().map(|v| v.ln()).sum();
    let c = -0.5 * m.len() as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * logdet;
    let (m, q) = (m.clone(), q.clone());
    move |x: &[f64]| {
        let d = DVector::from_column_slice(x) - &m;
        c - 0.5 * d.dot(&(&q * &d))
    }
}

/// Prior precision and mean of the ILA route: normal stand-in on `nu`,
/// `N(0, K)` on `theta0`, `N(0, n g J^{-1})` on the coefficients.
pub fn ila_prior(cp: &CommonPrior, coef_fisher: &DMatrix<f64>, n: usize, g: f64) -> (DVector<f64>, DMatrix<f64>) {
    let d = coef_fisher.nrows();
    let mut q = DMatrix::zeros(d + 2, d + 2);
    q[(0, 0)] = 1.0 / cp.nu_sd.powi(2);
    q[(1, 1)] = 1.0 / cp.k;
    q.view_mut((2, 2), (d, d)).copy_from(&(coef_fisher / (n as f64 * g)));
    let mut m = DVector::zeros(d + 2);
    m[0] = cp.nu_mean;
    (m, q)
}

/// Standardised simulated data set.
pub fn sim_data(cfg: &SimConfig, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_dataset(cfg, &mut rng).unwrap().data.standardized().unwrap()
}

pub fn g(key: &str) -> Gamma {
    key.parse().unwrap()
}

pub const NORMAL: BaselineKernel = BaselineKernel::Normal;

/// Sorted `(q_fwd, q_rev)` pairs of the paths in `paths` landing on `b`.
fn landing_pairs(paths: &[PathRecord], b: &Gamma) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = paths
        .iter()
        .filter(|r| &r.proposal.gamma == b)
        .map(|r| (r.proposal.log_q_fwd.exp(), r.proposal.log_q_rev.exp()))
        .collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    v
}

/// Exhaustive check of the proposal kernel over every model with `p`
/// variables: path masses sum to one, each attached forward density equals
/// its path probability, every reverse density is matched by a forward path
/// out of the target, and the move graph is strongly connected.
pub fn audit_proposals(p: usize) -> Result<usize, String> {
    let models = enumerate_models(p).map_err(|e| e.to_string())?;
    let all: BTreeMap<Gamma, Vec<PathRecord>> = models.iter().map(|g| (g.clone(), enumerate_proposals(g))).collect();
    let mut checked = 0;
    for (g, paths) in &all {
        let total: f64 = paths.iter().map(|r| r.path_prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("{g}: path mass {total}"));
        }
        for r in paths {
            let q = r.proposal.log_q_fwd.exp();
            if (q - r.path_prob).abs() > 1e-12 || !r.proposal.log_q_rev.is_finite() {
                return Err(format!("{g} -> {}: attached {q}, path {}", r.proposal.gamma, r.path_prob));
            }
            // Ratios hold per path: a swap reaches its target through two
            // index orders with different reverse densities, so the paired
            // multisets are what must agree.
            let g2 = &r.proposal.gamma;
            let here = landing_pairs(paths, g2);
            let mut back: Vec<(f64, f64)> = landing_pairs(&all[g2], g).into_iter().map(|(f, b)| (b, f)).collect();
            back.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
            if here.len() != back.len() {
                return Err(format!("{g} <-> {g2}: path counts differ"));
            }
            for (a, b) in here.iter().zip(&back) {
                if (a.0 - b.0).abs() > 1e-12 || (a.1 - b.1).abs() > 1e-12 {
                    return Err(format!("{g} <-> {g2}: {a:?} vs {b:?}"));
                }
            }
            checked += 1;
        }
    }
    if !proposal_graph_strongly_connected(&models) {
        return Err(format!("p={p}: proposal graph not strongly connected"));
    }
    Ok(checked)
}

/// Exact evidence when the log-likelihood is the quadratic
/// `lhat - (x - psi)' J (x - psi) / 2` and the prior is the ILA Gaussian.
pub fn gaussian_evidence(lhat: f64, psi: &[f64], j: &DMatrix<f64>, n: usize, g: f64, cp: &CommonPrior) -> f64 {
    let dim = psi.len();
    let coef = j.view((2, 2), (dim - 2, dim - 2)).into_owned();
    let (m, q) = ila_prior(cp, &coef, n, g);
    let prior = gaussian_log_density(&m, &q);
    let psi = DVector::from_column_slice(psi);
    // exp(lhat - r'Jr/2 + log prior(x)) is Gaussian in x; integrate exactly
    let prec = j + &q;
    let b = j * &psi + &q * &m;
    let chol = prec.clone().cholesky().expect("PD precision");
    let mode = chol.solve(&b);
    let at_mode = lhat - 0.5 * (&mode - &psi).dot(&(j * (&mode - &psi))) + prior(mode.as_slice());
    let logdet: f64 = 2.0 * chol.l().diagonal().map(|v| v.ln()).sum();
    at_mode + 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet
}

/// One small problem scored by the closed forms and by quadrature.
#[derive(Debug, Clone)]
pub struct OracleRow {
    pub key: String,
    pub ila: f64,
    pub ila_quad: f64,
    pub la: f64,
    pub la_quad: f64,
    /// Largest change between the coarse and fine quadrature rules.
    pub quad_drift: f64,
}

/// Ten simulated problems with n = 30, two covariates and at most four
/// parameters, each scored by ILA, LA and brute-force integration.
pub fn marglik_oracle_rows() -> Vec<OracleRow> {
    let cp = CommonPrior::default();
    let cfg = MarglikConfig { la_norm: LaNormalisation::Full, ..Default::default() };
    let models = ["22", "12", "30", "04", "20", "44", "10", "02", "21", "03"];
    let mut rows = Vec::new();
    for (i, key) in models.iter().enumerate() {
        let data = sim_data(&SimConfig::standard(30, 2, HazardClass::PH), 100 + i as u64);
        let gamma = g(key);
        let lik = GhLikelihood::new(&data, &gamma, NORMAL).unwrap();

        let rec = ila_log_marglik(&gamma, &data, 1.0, &cfg, None).unwrap();
        let d = rec.fit.design.d();
        let coef = rec.fit.fisher.view((2, 2), (d, d)).into_owned();
        let (m, q) = ila_prior(&cp, &coef, data.n(), 1.0);
        let start = rec.fit.psi_opt.to_vector();
        let (mode, h) = gaussian_posterior_mode(&lik, &m, &q, start.as_slice());
        let prior = gaussian_log_density(&m, &q);
        let f = |x: &[f64]| lik.value(x).unwrap() + prior(x);
        let ila_quad = log_integral(f, &mode, &h, 12, 1.2);
        let ila_fine = log_integral(f, &mode, &h, 16, 1.4);

        let la = la_log_marglik(&gamma, &data, 1.0, 1.0, &cfg, None).unwrap();
        let pp = ProductPrior::new(&data, lik.design(), 1.0, 1.0).unwrap();
        let q_t = lik.design().q();
        let fm = |x: &[f64]| {
            lik.value(x).unwrap() + pp.logpdf(&x[2..2 + q_t], &x[2 + q_t..]) + log_common_prior(x[0], x[1], &cp)
        };
        let mode_la = la.fit.psi_opt.to_vector();
        let la_quad = log_integral(fm, mode_la.as_slice(), &la.fit.fisher, 12, 1.2);
        let la_fine = log_integral(fm, mode_la.as_slice(), &la.fit.fisher, 16, 1.4);

        rows.push(OracleRow {
            key: key.to_string(),
            ila: rec.log_ml,
            ila_quad,
            la: la.log_ml,
            la_quad,
            quad_drift: (ila_quad - ila_fine).abs().max((la_quad - la_fine).abs()),
        });
    }
    rows
}
