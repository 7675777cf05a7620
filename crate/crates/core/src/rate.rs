//! Computation rates of lattice-coded servers and the per-server ML
//! decoding-error bound built on the Poltyrev exponent.
//!
//! Rates are in bits (base-2 logarithms). The exponent uses natural
//! logarithms and enters the error bound through `exp(-n * E_r)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|mu - 2|` below which the `mu = 2` case of the error bound is used.
pub const MU_TWO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Per-symbol transmit power `P`.
    pub power: f64,
    /// Noise variance `N0`.
    pub noise_var: f64,
    /// User transmission rate in bits per channel use.
    pub rate: f64,
    /// Prime of the user's message field.
    pub user_prime: u32,
}

impl ChannelParams {
    pub fn new(power: f64, noise_var: f64, rate: f64, user_prime: u32) -> Result<Self> {
        let ch = Self {
            power,
            noise_var,
            rate,
            user_prime,
        };
        ch.validate()?;
        Ok(ch)
    }

    /// Unit noise variance with `P = 10^(snr_db / 10)`.
    pub fn from_snr_db(snr_db: f64, rate: f64, user_prime: u32) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::config("channel.snr_db", "must be finite"));
        }
        Self::new(db_to_linear(snr_db), 1.0, rate, user_prime)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(Error::config("channel.power", "must be finite and > 0"));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return Err(Error::config("channel.noise_var", "must be finite and > 0"));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(Error::config("frame.R", "rate must be finite and >= 0"));
        }
        if !crate::code_analysis::is_prime(self.user_prime) {
            return Err(Error::config(
                "frame.p",
                format!("{} is not a prime", self.user_prime),
            ));
        }
        Ok(())
    }

    pub fn snr(&self) -> f64 {
        self.power / self.noise_var
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn half_log2_plus(x: f64) -> f64 {
    0.5 * x.log2().max(0.0)
}

/// `1/2 log+ (P / (||g||^2 N0 (alpha^2 + SNR (alpha - 1)^2)))`.
pub fn computation_rate_at_alpha(ch: &ChannelParams, sq_norm: u64, alpha: f64) -> f64 {
    half_log2_plus(ch.power / equivalent_noise_variance(ch, sq_norm, alpha))
}

/// MMSE scaling `SNR / (1 + SNR)`.
pub fn mmse_alpha(ch: &ChannelParams) -> f64 {
    let snr = ch.snr();
    snr / (1.0 + snr)
}

/// `1/2 log+ ((1 + SNR) / ||g||^2)`, the supremum over `alpha` of
/// [`computation_rate_at_alpha`]. Exactly zero once `||g||^2 >= 1 + SNR`.
pub fn optimal_computation_rate(ch: &ChannelParams, sq_norm: u64) -> f64 {
    half_log2_plus((1.0 + ch.snr()) / sq_norm as f64)
}

/// `||g||^2 N0 (alpha^2 + SNR (alpha - 1)^2)`.
pub fn equivalent_noise_variance(ch: &ChannelParams, sq_norm: u64, alpha: f64) -> f64 {
    let snr = ch.snr();
    sq_norm as f64 * ch.noise_var * (alpha * alpha + snr * (alpha - 1.0) * (alpha - 1.0))
}

/// The three pieces of the Poltyrev random-coding exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoltyrevBranch {
    /// `mu >= 2`: `1/2 [ln mu + ln(e/4)]`
    High,
    /// `1 <= mu <= 2`: `1/2 [mu - 1 - ln mu]`
    Middle,
    /// `mu <= 1`: 0
    Zero,
}

impl PoltyrevBranch {
    pub fn for_mu(mu: f64) -> Self {
        if mu >= 2.0 {
            PoltyrevBranch::High
        } else if mu >= 1.0 {
            PoltyrevBranch::Middle
        } else {
            PoltyrevBranch::Zero
        }
    }

    pub fn evaluate(self, mu: f64) -> f64 {
        match self {
            PoltyrevBranch::High => 0.5 * (mu.ln() + 1.0 - 4f64.ln()),
            PoltyrevBranch::Middle => 0.5 * (mu - 1.0 - mu.ln()),
            PoltyrevBranch::Zero => 0.0,
        }
    }
}

pub fn poltyrev_exponent(mu: f64) -> f64 {
    PoltyrevBranch::for_mu(mu).evaluate(mu)
}

/// Which case of the ML error bound produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorRegime {
    /// `mu <= 1`: no positive gap, bound set to 1.
    NoGap,
    /// `1 < mu < 2`
    NearCapacity,
    /// `mu = 2` (within [`MU_TWO_TOL`])
    Boundary,
    /// `mu > 2`
    WideGap,
}

/// ML decoding-error bound for one server.
///
/// The bound is an asymptotic equivalence used as an equality at finite
/// `n`; `ln_value` keeps the magnitude when `value` underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlErrorBound {
    pub value: f64,
    pub ln_value: f64,
    pub regime: ErrorRegime,
    /// The raw expression exceeded 1, or there was no gap.
    pub clamped: bool,
}

/// Error bound for a server whose rate gap gives `mu = 2^(2 Delta)`.
pub fn ml_error_bound_for_mu(mu: f64, n: usize) -> MlErrorBound {
    let nf = n as f64;
    if mu <= 1.0 {
        return MlErrorBound {
            value: 1.0,
            ln_value: 0.0,
            regime: ErrorRegime::NoGap,
            clamped: true,
        };
    }
    let exponent = -nf * poltyrev_exponent(mu);
    let (raw, regime) = if (mu - 2.0).abs() < MU_TWO_TOL {
        (exponent - 0.5 * (8.0 * PI * nf).ln(), ErrorRegime::Boundary)
    } else if mu > 2.0 {
        (exponent - 0.5 * (2.0 * PI * nf).ln(), ErrorRegime::WideGap)
    } else {
        (
            exponent - 0.5 * mu * (nf * PI).ln() - ((2.0 - mu) * (mu - 1.0)).ln(),
            ErrorRegime::NearCapacity,
        )
    };
    let clamped = raw > 0.0;
    let ln_value = raw.min(0.0);
    MlErrorBound {
        value: ln_value.exp(),
        ln_value,
        regime,
        clamped,
    }
}

/// Rate gap `Delta = R*(g) - R` of a server.
pub fn rate_gap(ch: &ChannelParams, sq_norm: u64) -> f64 {
    optimal_computation_rate(ch, sq_norm) - ch.rate
}

pub fn p_e_ml(ch: &ChannelParams, sq_norm: u64, n: usize) -> MlErrorBound {
    let mu = (2.0 * rate_gap(ch, sq_norm)).exp2();
    ml_error_bound_for_mu(mu, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerError {
    pub sq_norm: u64,
    pub comp_rate: f64,
    pub gap: f64,
    pub mu: f64,
    pub p_e_ml: f64,
    pub ln_p_e_ml: f64,
    pub regime: ErrorRegime,
    pub clamped: bool,
}

/// Per-server computation rates and ML error bounds for one code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerErrorProfile {
    pub n: usize,
    pub servers: Vec<ServerError>,
    /// The error bound is an asymptotic equivalence taken as equality.
    pub asymptotic_approximation: bool,
}

impl ServerErrorProfile {
    pub fn compute(ch: &ChannelParams, sq_norms: &[u64], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n", "block length must be >= 1"));
        }
        if let Some(i) = sq_norms.iter().position(|&s| s == 0) {
            return Err(Error::config(
                format!("column[{i}]"),
                "zero column norm",
            ));
        }
        let servers = sq_norms
            .iter()
            .map(|&sq_norm| {
                let comp_rate = optimal_computation_rate(ch, sq_norm);
                let gap = comp_rate - ch.rate;
                let mu = (2.0 * gap).exp2();
                let bound = ml_error_bound_for_mu(mu, n);
                ServerError {
                    sq_norm,
                    comp_rate,
                    gap,
                    mu,
                    p_e_ml: bound.value,
                    ln_p_e_ml: bound.ln_value,
                    regime: bound.regime,
                    clamped: bound.clamped,
                }
            })
            .collect();
        Ok(Self {
            n,
            servers,
            asymptotic_approximation: true,
        })
    }

    /// Profile with prescribed error probabilities, bypassing the channel model.
    pub fn from_probabilities(probs: &[f64], n: usize) -> Result<Self> {
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config(
                format!("p_e[{i}]"),
                format!("{} is not a probability", probs[i]),
            ));
        }
        let servers = probs
            .iter()
            .map(|&p| ServerError {
                sq_norm: 1,
                comp_rate: f64::NAN,
                gap: f64::NAN,
                mu: f64::NAN,
                p_e_ml: p,
                ln_p_e_ml: p.ln(),
                regime: ErrorRegime::NoGap,
                clamped: false,
            })
            .collect();
        Ok(Self {
            n,
            servers,
            asymptotic_approximation: false,
        })
    }

    pub fn len(&self) -> usize {
        self.servers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.servers.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.servers.iter().map(|s| s.p_e_ml).collect()
    }

    pub fn ln_probabilities(&self) -> Vec<f64> {
        self.servers.iter().map(|s| s.ln_p_e_ml).collect()
    }

    pub fn any_clamped(&self) -> bool {
        self.servers.iter().any(|s| s.clamped)
    }

    /// Reorders servers; `perm[i]` is the old index placed at position `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            n: self.n,
            servers: perm.iter().map(|&i| self.servers[i].clone()).collect(),
            asymptotic_approximation: self.asymptotic_approximation,
        }
    }
}
