//! Symmetric kernels for log-location-scale baselines.
//!
//! Every evaluator is written so that the tails stay finite: the likelihood
//! only ever needs `log f`, `log F(-u)` and a handful of ratios of `f`, `f'`,
//! `f''` and `F(-u)`, so those are what this module exposes.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI, LN_2, PI};
use thiserror::Error;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Above this point the normal tail switches to the Mills-ratio continued fraction.
const NORMAL_TAIL_SWITCH: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("quantile level {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
}

/// Symmetric density `f` of the standardised log-time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKernel {
    Normal,
    Logistic,
    HyperbolicSecant,
    StudentT2,
}

impl BaselineKernel {
    pub const ALL: [BaselineKernel; 4] = [
        BaselineKernel::Normal,
        BaselineKernel::Logistic,
        BaselineKernel::HyperbolicSecant,
        BaselineKernel::StudentT2,
    ];

    /// Short lowercase label used by the CLI.
    pub fn label(self) -> &'static str {
        match self {
            BaselineKernel::Normal => "normal",
            BaselineKernel::Logistic => "logistic",
            BaselineKernel::HyperbolicSecant => "sech",
            BaselineKernel::StudentT2 => "t2",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }

    /// `log f(u)`. NaN in, NaN out.
    pub fn log_f(self, u: f64) -> f64 {
        match self {
            BaselineKernel::Normal => -0.5 * u * u - LN_SQRT_2PI,
            BaselineKernel::Logistic => {
                let a = u.abs();
                -a - 2.0 * (-a).exp().ln_1p()
            }
            BaselineKernel::HyperbolicSecant => -LN_2 - log_cosh(0.5 * PI * u),
            BaselineKernel::StudentT2 => -1.5 * (u * u + 2.0).ln(),
        }
    }

    /// Distribution function `F(u)`.
    pub fn cdf(self, u: f64) -> f64 {
        self.log_f_neg(-u).exp()
    }

    /// `log F(-u)`, the log survivor of the standardised log-time.
    pub fn log_f_neg(self, u: f64) -> f64 {
        match self {
            BaselineKernel::Normal => normal_log_sf(u),
            BaselineKernel::Logistic => -softplus(u),
            BaselineKernel::HyperbolicSecant => {
                let s = 0.5 * PI * u;
                if s > 0.0 {
                    FRAC_2_PI.ln() + ln_atan_exp_neg(s)
                } else {
                    (-FRAC_2_PI * s.exp().atan()).ln_1p()
                }
            }
            BaselineKernel::StudentT2 => {
                let w = (u * u + 2.0).sqrt();
                if u >= 0.0 {
                    -w.ln() - (w + u).ln()
                } else {
                    ((w - u) / (2.0 * w)).ln()
                }
            }
        }
    }

    /// `f(u) / F(-u)`, the hazard of the standardised kernel.
    pub fn ratio_f_over_fneg(self, u: f64) -> f64 {
        match self {
            BaselineKernel::Normal => {
                if u > NORMAL_TAIL_SWITCH {
                    1.0 / mills_ratio_cf(u)
                } else {
                    (self.log_f(u) - normal_log_sf(u)).exp()
                }
            }
            BaselineKernel::Logistic => logistic(u),
            BaselineKernel::HyperbolicSecant => (self.log_f(u) - self.log_f_neg(u)).exp(),
            BaselineKernel::StudentT2 => {
                let w2 = u * u + 2.0;
                let w = w2.sqrt();
                if u >= 0.0 {
                    (w + u) / w2
                } else {
                    2.0 / (w2 * (w - u))
                }
            }
        }
    }

    /// `f'(u) / f(u)`, the score of the kernel.
    pub fn ratio_fprime_over_f(self, u: f64) -> f64 {
        match self {
            BaselineKernel::Normal => -u,
            BaselineKernel::Logistic => -(0.5 * u).tanh(),
            BaselineKernel::HyperbolicSecant => -0.5 * PI * (0.5 * PI * u).tanh(),
            BaselineKernel::StudentT2 => -3.0 * u / (u * u + 2.0),
        }
    }

    /// `f''(u) / f(u)`.
    pub fn ratio_fsecond_over_f(self, u: f64) -> f64 {
        match self {
            BaselineKernel::Normal => u * u - 1.0,
            BaselineKernel::Logistic => 1.0 - 3.0 / (u.cosh() + 1.0),
            BaselineKernel::HyperbolicSecant => {
                // (pi^2/8)(cosh(pi u) - 3) sech^2(pi u / 2), rearranged to avoid overflow
                let sech = 1.0 / (0.5 * PI * u).cosh();
                0.25 * PI * PI * (1.0 - 2.0 * sech * sech)
            }
            BaselineKernel::StudentT2 => {
                let w2 = u * u + 2.0;
                6.0 * (2.0 * u * u - 1.0) / (w2 * w2)
            }
        }
    }

    /// `f'(u) / F(-u)`.
    pub fn ratio_fprime_over_fneg(self, u: f64) -> f64 {
        match self {
            BaselineKernel::Logistic => -(0.5 * u).tanh() * logistic(u),
            _ => self.ratio_fprime_over_f(u) * self.ratio_f_over_fneg(u),
        }
    }

    /// Inverse of `F`.
    pub fn quantile(self, p: f64) -> Result<f64, BaselineError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(BaselineError::ProbabilityOutOfRange(p));
        }
        Ok(match self {
            BaselineKernel::Normal => normal_quantile(p),
            BaselineKernel::Logistic => p.ln() - (-p).ln_1p(),
            BaselineKernel::HyperbolicSecant => FRAC_2_PI * (0.5 * PI * p).tan().ln(),
            BaselineKernel::StudentT2 => {
                std::f64::consts::SQRT_2 * (p - 0.5) / (p * (1.0 - p)).sqrt()
            }
        })
    }

    /// Quantile of the upper tail: the `u` with `F(-u) = s`.
    ///
    /// Stays accurate when `s` is far below machine epsilon, which is what the
    /// simulator needs when the cumulative hazard is large.
    pub fn upper_quantile(self, s: f64) -> Result<f64, BaselineError> {
        if s < 0.5 {
            return self.quantile(s).map(|q| -q);
        }
        self.quantile(1.0 - s)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `ln(atan(exp(-s)))` for `s > 0`.
fn ln_atan_exp_neg(s: f64) -> f64 {
    if s > 20.0 {
        let x = (-s).exp();
        // atan(x)/x = 1 - x^2/3 + ..., negligible past s = 20 but kept for symmetry
        -s + (-x * x / 3.0).ln_1p()
    } else {
        (-s).exp().atan().ln()
    }
}

/// Mills ratio `Phi(-u) / phi(u)` by backward evaluation of its continued fraction.
///
/// Only used for `u > 8`, where 60 levels are far more than enough for full
/// double precision.
fn mills_ratio_cf(u: f64) -> f64 {
    let mut t = u;
    for k in (1..=60).rev() {
        t = u + k as f64 / t;
    }
    1.0 / t
}

fn normal_log_sf(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u > NORMAL_TAIL_SWITCH {
        -0.5 * u * u - LN_SQRT_2PI + mills_ratio_cf(u).ln()
    } else if u > -1.0 {
        (0.5 * erfc(u * FRAC_1_SQRT_2)).ln()
    } else {
        (-0.5 * erfc(-u * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// Standard normal quantile: rational starting point refined by Newton steps on
/// the log scale of whichever tail is smaller.
fn normal_quantile(p: f64) -> f64 {
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    // Acklam's approximation for the lower half.
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let mut x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Newton on g(x) = log Phi(x) - log p; g'(x) = phi(x)/Phi(x).
    let lp = p.ln();
    for _ in 0..4 {
        let log_cdf = normal_log_sf(-x);
        let hazard = BaselineKernel::Normal.ratio_f_over_fneg(-x);
        let step = (log_cdf - lp) / hazard;
        x -= step;
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}
