//! Model indicators, hazard classes, the model-space prior and enumeration.

use libm::lgamma;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("role code {code} at position {index} is outside 0..=4")]
    InvalidCode { index: usize, code: u8 },
    #[error("code 4 (tied time/hazard effect) cannot be mixed with codes 1, 2 or 3")]
    MixedAft,
    #[error("cannot parse model key `{0}`")]
    BadKey(String),
    #[error("enumeration of p = {p} exceeds the cap of {cap} variables")]
    CapExceeded { p: usize, cap: usize },
    #[error("valid-index filter is only defined for GH models, got {0}")]
    NotGh(HazardClass),
}

/// Hazard structure encoded by a model indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HazardClass {
    Null,
    AH,
    PH,
    AFT,
    GH,
}

impl HazardClass {
    pub const ALL: [HazardClass; 5] = [
        HazardClass::Null,
        HazardClass::AH,
        HazardClass::PH,
        HazardClass::AFT,
        HazardClass::GH,
    ];

    pub fn label(self) -> &'static str {
        match self {
            HazardClass::Null => "Null",
            HazardClass::AH => "AH",
            HazardClass::PH => "PH",
            HazardClass::AFT => "AFT",
            HazardClass::GH => "GH",
        }
    }
}

impl fmt::Display for HazardClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-variable role codes: 0 absent, 1 time level, 2 hazard level,
/// 3 both at different scales, 4 both tied (AFT).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gamma {
    codes: Vec<u8>,
}

impl Gamma {
    /// Validates code range and AFT purity.
    pub fn new(codes: Vec<u8>) -> Result<Self, ModelError> {
        let mut has4 = false;
        let mut has123 = false;
        for (index, &code) in codes.iter().enumerate() {
            match code {
                0 => {}
                1..=3 => has123 = true,
                4 => has4 = true,
                _ => return Err(ModelError::InvalidCode { index, code }),
            }
        }
        if has4 && has123 {
            return Err(ModelError::MixedAft);
        }
        Ok(Gamma { codes })
    }

    pub fn null(p: usize) -> Self {
        Gamma { codes: vec![0; p] }
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn p(&self) -> usize {
        self.codes.len()
    }

    /// Canonical digit-string key, e.g. `"01203"`.
    pub fn key(&self) -> String {
        self.codes.iter().map(|c| char::from(b'0' + c)).collect()
    }

    /// `counts()[k]` is the number of positions holding code `k`.
    pub fn counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for &v in &self.codes {
            c[v as usize] += 1;
        }
        c
    }

    /// Number of included variables.
    pub fn n_active(&self) -> usize {
        self.codes.iter().filter(|&&c| c != 0).count()
    }

    pub fn is_null(&self) -> bool {
        self.codes.iter().all(|&c| c == 0)
    }

    pub fn classify(&self) -> HazardClass {
        let c = self.counts();
        let active = self.p() - c[0];
        if active == 0 {
            HazardClass::Null
        } else if c[4] == active {
            HazardClass::AFT
        } else if c[1] == active {
            HazardClass::AH
        } else if c[2] == active {
            HazardClass::PH
        } else {
            HazardClass::GH
        }
    }

    /// Number of effects: included variables plus the extra effect of each code 3.
    pub fn effect_count(&self) -> usize {
        let c = self.counts();
        self.n_active() + c[3]
    }

    /// Copy with position `j` set to `v`. Panics if the result is invalid,
    /// which the sampler's moves never produce.
    pub(crate) fn with(&self, j: usize, v: u8) -> Gamma {
        let mut codes = self.codes.clone();
        codes[j] = v;
        Gamma::new(codes).expect("move produced an invalid model")
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Gamma {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let codes: Option<Vec<u8>> = s
            .chars()
            .map(|ch| ch.to_digit(10).map(|d| d as u8))
            .collect();
        match codes {
            Some(c) if !c.is_empty() => Gamma::new(c),
            _ => Err(ModelError::BadKey(s.to_string())),
        }
    }
}

/// How the effect-count factor of the GH prior is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaNormalisation {
    /// Divide by the model-count-weighted sum so the factor averages to one
    /// over the GH configurations of a given support.
    #[default]
    CountWeighted,
    /// Divide by the plain sum of inverse weights over effect counts.
    InverseSum,
}

/// Hyperparameters of the model-space prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPriorConfig {
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub h_ah: f64,
    pub h_ph: f64,
    pub h_aft: f64,
    pub h_gh: f64,
    pub q: f64,
    pub omega_norm: OmegaNormalisation,
}

impl Default for ModelPriorConfig {
    fn default() -> Self {
        ModelPriorConfig {
            a_lambda: 1.0,
            b_lambda: 1.0,
            h_ah: 1.0,
            h_ph: 1.0,
            h_aft: 1.0,
            h_gh: 1.0,
            q: 1.0 / 3.0,
            omega_norm: OmegaNormalisation::CountWeighted,
        }
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    lgamma(a) + lgamma(b) - lgamma(a + b)
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    lgamma(n as f64 + 1.0) - lgamma(k as f64 + 1.0) - lgamma((n - k) as f64 + 1.0)
}

/// Number of GH configurations on a fixed support of size `l` with `k` codes equal to 3.
pub fn gh_count_on_support(l: usize, k: usize) -> f64 {
    let base = ln_binomial(l as u64, k as u64).exp() * 2f64.powi((l - k) as i32);
    if k == 0 {
        base - 2.0
    } else {
        base
    }
}

/// Inverse-probability weight attached to `k` extra effects on a support of size `l`.
fn omega_weight(l: usize, k: usize, q: f64) -> f64 {
    let ln_pmf = ln_binomial(l as u64, k as u64)
        + k as f64 * q.ln()
        + (l - k) as f64 * (-q).ln_1p();
    let correction = if k == 0 {
        1.0 - 2f64.powi(1 - l as i32)
    } else {
        1.0
    };
    1.0 / (ln_pmf.exp() * correction)
}

/// Unnormalised log prior mass of a model.
pub fn log_model_prior(gamma: &Gamma, cfg: &ModelPriorConfig) -> f64 {
    let p = gamma.p();
    let l = gamma.n_active();
    let base = ln_beta(cfg.a_lambda + l as f64, cfg.b_lambda + (p - l) as f64);
    let class = match gamma.classify() {
        HazardClass::Null => 0.0,
        HazardClass::AH => cfg.h_ah.ln(),
        HazardClass::PH => cfg.h_ph.ln(),
        HazardClass::AFT => cfg.h_aft.ln(),
        HazardClass::GH => {
            let mut v = cfg.h_gh.ln() - (3f64.powi(l as i32) - 2.0).ln();
            if l > 1 {
                let k = gamma.effect_count() - l;
                let norm: f64 = (0..=l)
                    .map(|i| {
                        let w = omega_weight(l, i, cfg.q);
                        match cfg.omega_norm {
                            OmegaNormalisation::InverseSum => w,
                            OmegaNormalisation::CountWeighted => {
                                w * gh_count_on_support(l, i) / (3f64.powi(l as i32) - 2.0)
                            }
                        }
                    })
                    .sum();
                v += omega_weight(l, k, cfg.q).ln() - norm.ln();
            }
            v
        }
    };
    base + class
}

/// Largest `p` that `enumerate_models` accepts without an explicit override.
pub const ENUMERATION_CAP: usize = 8;

/// Every valid model for `p` variables, the null model first, in increasing
/// base-5 order of the code vector (first position most significant).
pub fn enumerate_models(p: usize) -> Result<Vec<Gamma>, ModelError> {
    enumerate_models_capped(p, ENUMERATION_CAP)
}

pub fn enumerate_models_capped(p: usize, cap: usize) -> Result<Vec<Gamma>, ModelError> {
    if p > cap {
        return Err(ModelError::CapExceeded { p, cap });
    }
    let mut out = Vec::new();
    let mut codes = vec![0u8; p];
    loop {
        if let Ok(g) = Gamma::new(codes.clone()) {
            out.push(g);
        }
        // odometer increment, last position fastest
        let mut i = p;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if codes[i] < 4 {
                codes[i] += 1;
                break;
            }
            codes[i] = 0;
        }
    }
}

/// Indices a GH add/delete move may touch without leaving the GH class
/// (other than by reaching the null model).
pub fn get_valid_idx(gamma: &Gamma) -> Result<Vec<usize>, ModelError> {
    let class = gamma.classify();
    if class != HazardClass::GH {
        return Err(ModelError::NotGh(class));
    }
    let c = gamma.counts();
    let codes = gamma.codes();
    let select = |keep: &dyn Fn(u8) -> bool| -> Vec<usize> {
        (0..codes.len()).filter(|&j| keep(codes[j])).collect()
    };
    // The remaining codes "form AH/PH" only when some remain; a lone 3 may be
    // deleted to reach the null model.
    let rest_ah_ph = (c[1] > 0 && c[2] == 0) || (c[2] > 0 && c[1] == 0);
    Ok(if c[3] == 1 && rest_ah_ph {
        select(&|v| v != 3)
    } else if c[3] == 0 && c[1] > 1 && c[2] == 1 {
        select(&|v| v != 2)
    } else if c[3] == 0 && c[2] > 1 && c[1] == 1 {
        select(&|v| v != 1)
    } else if c[3] == 0 && c[1] == 1 && c[2] == 1 {
        select(&|v| v == 0)
    } else {
        (0..codes.len()).collect()
    })
}
