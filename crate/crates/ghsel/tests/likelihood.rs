//! Likelihood checks against an independent hazard-scale formulation and
//! finite differences.

use ghsel::baseline::BaselineKernel;
use ghsel::ghlik::{loglik, Dataset, Design, GhLikelihood, Psi};
use ghsel::modelspace::Gamma;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.5..1.5));
    let t = (0..n).map(|_| rng.random_range(0.2..4.0)).collect();
    let d = (0..n).map(|_| if rng.random::<f64>() < 0.7 { 1.0 } else { 0.0 }).collect();
    Dataset::new(t, d, x, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-0.6..0.6)).collect()
}

/// Log-likelihood from `h(t)^delta exp(-H(t))`, with
/// `h(t) = h0(t e^{x~'alpha}) e^{x'beta}` and `H(t) = H0(t e^{x~'alpha}) e^{x'beta - x~'alpha}`.
fn hazard_form(data: &Dataset, design: &Design, psi: &Psi, k: BaselineKernel) -> f64 {
    let nat = psi.natural(design);
    let beta_cols = if design.aft { &design.time_cols } else { &design.haz_cols };
    let mut total = 0.0;
    for i in 0..data.n() {
        let xa: f64 = design.time_cols.iter().zip(&nat.alpha).map(|(&c, a)| data.x()[(i, c)] * a).sum();
        let xb: f64 = beta_cols.iter().zip(&nat.beta).map(|(&c, b)| data.x()[(i, c)] * b).sum();
        let s = data.times()[i] * xa.exp();
        let z = (s.ln() - nat.mu) / nat.sigma;
        let log_h0 = k.log_f(z) - nat.sigma.ln() - s.ln() - k.log_f_neg(z);
        let cum_h0 = -k.log_f_neg(z);
        let log_h = log_h0 + xb;
        let cum_h = cum_h0 * (xb - xa).exp();
        total += data.status()[i] * log_h - cum_h;
    }
    total
}

#[test]
fn matches_hazard_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in BaselineKernel::ALL {
        for key in ["0000", "0120", "3000", "1102", "0330", "2222", "1111", "4040"] {
            let data = random_data(&mut rng, 20, 4);
            let gamma: Gamma = key.parse().unwrap();
            let design = Design::from_gamma(&gamma);
            let v = random_point(&mut rng, design.dim());
            let psi = Psi::from_slice(&design, &v).unwrap();
            let a = loglik(&psi, &gamma, &data, k).unwrap();
            let b = hazard_form(&data, &design, &psi, k);
            assert!((a - b).abs() <= 1e-10 * b.abs(), "{k:?} {key}: {a} vs {b}");
        }
    }
}

#[test]
fn central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in BaselineKernel::ALL {
        for key in ["000", "120", "300", "312", "222", "111", "404", "033"] {
            let data = random_data(&mut rng, 50, 3);
            let gamma: Gamma = key.parse().unwrap();
            let lik = GhLikelihood::new(&data, &gamma, k).unwrap();
            let x = random_point(&mut rng, lik.dim());
            let g = lik.gradient(&x).unwrap();
            let h = lik.hessian(&x).unwrap();
            for j in 0..x.len() {
                let step = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let fd = (lik.value(&xp).unwrap() - lik.value(&xm).unwrap()) / (2.0 * step);
                assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()), "{k:?} {key} grad {j}: {fd} vs {}", g[j]);
                let gp = lik.gradient(&xp).unwrap();
                let gm = lik.gradient(&xm).unwrap();
                for l in 0..x.len() {
                    let fd = (gp[l] - gm[l]) / (2.0 * step);
                    assert!(
                        (fd - h[(l, j)]).abs() <= 1e-4 * (1.0 + h[(l, j)].abs()),
                        "{k:?} {key} hess ({l},{j}): {fd} vs {}",
                        h[(l, j)]
                    );
                }
            }
        }
    }
}

#[test]
fn eta_block_closed_form() {
    // With every delta = 1 the eta block is sum log F(-u_i) v_i x_i x_i'.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 30;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let t = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let data = Dataset::new(t, vec![1.0; n], x, vec!["a".into(), "b".into()]).unwrap();
    let gamma: Gamma = "32".parse().unwrap();
    let k = BaselineKernel::Logistic;
    let lik = GhLikelihood::new(&data, &gamma, k).unwrap();
    let p = [0.2, -0.1, 0.3, 0.4, -0.2];
    let h = lik.hessian(&p).unwrap();
    let e = (-p[0]).exp();
    let mut want = DMatrix::zeros(2, 2);
    for i in 0..n {
        let xi = [data.x()[(i, 0)], data.x()[(i, 1)]];
        let a = xi[0] * p[2];
        let b = xi[0] * p[3] + xi[1] * p[4];
        let u = p[0].exp() * data.log_times()[i] - a - p[1];
        let v = (e * a - b).exp();
        let w = k.log_f_neg(u) * v;
        for r in 0..2 {
            for c in 0..2 {
                want[(r, c)] += w * xi[r] * xi[c];
            }
        }
    }
    let got = h.view((3, 3), (2, 2));
    assert!((got - want).abs().max() < 1e-10);
}

#[test]
fn row_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let data = random_data(&mut rng, 25, 3);
    let mut perm: Vec<usize> = (0..25).collect();
    perm.reverse();
    perm.swap(3, 17);
    let shuffled = data.permuted_rows(&perm);
    let gamma: Gamma = "312".parse().unwrap();
    let lik_a = GhLikelihood::new(&data, &gamma, BaselineKernel::StudentT2).unwrap();
    let lik_b = GhLikelihood::new(&shuffled, &gamma, BaselineKernel::StudentT2).unwrap();
    let x = random_point(&mut rng, lik_a.dim());
    let (a, b) = (lik_a.value(&x).unwrap(), lik_b.value(&x).unwrap());
    assert!((a - b).abs() < 1e-10 * a.abs());
}

#[test]
fn clamp_flags_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let data = random_data(&mut rng, 10, 1);
    let gamma: Gamma = "2".parse().unwrap();
    let lik = GhLikelihood::new(&data, &gamma, BaselineKernel::Normal).unwrap();
    let ev = lik.evaluate(&[0.0, 0.0, -1e4], ghsel::ghlik::Order::Value).unwrap();
    assert!(ev.boundary);
    let ev = lik.evaluate(&[0.0, 0.0, 0.1], ghsel::ghlik::Order::Value).unwrap();
    assert!(!ev.boundary);
}
