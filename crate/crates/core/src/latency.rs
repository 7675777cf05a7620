//! Per-server decoding time `T = T1 + T2` with `T1 ~ Exp(mu1)` (server
//! unavailability) and `T2 = a + Exp(mu2 / n)` (runtime growing with the
//! block length `n`).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rate gap below which the equal-rate (Erlang) branch is used.
const EQUAL_RATE_TOL: f64 = 1e-9;

/// Scheme-independent part of the latency model; the block length comes
/// from the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyRates {
    pub mu1: f64,
    pub mu2: f64,
    pub a: f64,
}

impl LatencyRates {
    pub fn with_block_length(&self, n: usize) -> Result<LatencyParams> {
        LatencyParams::new(self.mu1, self.mu2, self.a, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    /// Rate of the unavailability exponential.
    pub mu1: f64,
    /// Per-symbol service rate.
    pub mu2: f64,
    /// Runtime shift.
    pub a: f64,
    /// Block length in symbols.
    pub n: usize,
}

impl LatencyParams {
    pub fn new(mu1: f64, mu2: f64, a: f64, n: usize) -> Result<Self> {
        let p = Self { mu1, mu2, a, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1.is_finite() && self.mu1 > 0.0) {
            return Err(Error::config("latency.mu1", "must be finite and > 0"));
        }
        if !(self.mu2.is_finite() && self.mu2 > 0.0) {
            return Err(Error::config("latency.mu2", "must be finite and > 0"));
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::config("latency.a", "must be finite and >= 0"));
        }
        if self.n == 0 {
            return Err(Error::config("latency.n", "block length must be >= 1"));
        }
        Ok(())
    }

    /// Effective runtime rate `mu2 / n`.
    pub fn runtime_rate(&self) -> f64 {
        self.mu2 / self.n as f64
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.mu1 + self.a + self.n as f64 / self.mu2
    }

    /// Draws one `T1 + T2`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t1 = Exp::new(self.mu1).expect("validated rate").sample(rng);
        let t2 = Exp::new(self.runtime_rate()).expect("validated rate").sample(rng);
        t1 + self.a + t2
    }
}

/// `Pr(T > t)`, evaluated directly so that tiny tails keep full precision.
pub fn survival(params: &LatencyParams, t: f64) -> f64 {
    let s = t - params.a;
    if s.is_nan() {
        return f64::NAN;
    }
    if s <= 0.0 {
        return 1.0;
    }
    let mu1 = params.mu1;
    let lambda2 = params.runtime_rate();
    let value = if ((lambda2 - mu1) / mu1).abs() < EQUAL_RATE_TOL {
        let rate = 0.5 * (mu1 + lambda2);
        (1.0 + rate * s) * (-rate * s).exp()
    } else {
        (lambda2 * (-mu1 * s).exp() - mu1 * (-lambda2 * s).exp()) / (lambda2 - mu1)
    };
    value.clamp(0.0, 1.0)
}

/// `F(t) = Pr(T1 + T2 <= t)`.
pub fn cdf(params: &LatencyParams, t: f64) -> f64 {
    let s = t - params.a;
    if s <= 0.0 {
        return 0.0;
    }
    let mu1 = params.mu1;
    let lambda2 = params.runtime_rate();
    // For small s the survival form loses digits to cancellation; use the
    // expm1 form of the same convolution there.
    let value = if ((lambda2 - mu1) / mu1).abs() < EQUAL_RATE_TOL {
        let rate = 0.5 * (mu1 + lambda2);
        let x = rate * s;
        -(-x).exp_m1() - x * (-x).exp()
    } else {
        let e1 = -(-mu1 * s).exp_m1();
        let e2 = -(-lambda2 * s).exp_m1();
        (lambda2 * e1 - mu1 * e2) / (lambda2 - mu1)
    };
    value.clamp(0.0, 1.0)
}

/// Probability that one given set of `l` out of `n_servers` servers has
/// finished by `t` and the other `n_servers - l` have not.
pub fn set_completion_prob(params: &LatencyParams, l: usize, n_servers: usize, t: f64) -> Result<f64> {
    if l > n_servers {
        return Err(Error::config(
            "l",
            format!("{l} finished servers out of {n_servers}"),
        ));
    }
    let f = cdf(params, t);
    let fbar = survival(params, t);
    Ok(f.powi(l as i32) * fbar.powi((n_servers - l) as i32))
}

/// `n_servers` independent decoding times from a stream seeded by `seed`.
pub fn sample_times(params: &LatencyParams, n_servers: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_servers).map(|_| params.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_servers(n: usize) -> LatencyParams {
        LatencyParams::new(50.0, 10.0, 1.0, n).unwrap()
    }

    #[test]
    fn cdf_endpoints() {
        let p = quick_servers(126);
        assert_eq!(cdf(&p, p.a), 0.0);
        assert_eq!(cdf(&p, -3.0), 0.0);
        assert_eq!(survival(&p, p.a), 1.0);
        assert!((cdf(&p, 1e6) - 1.0).abs() < 1e-15);
        assert_eq!(survival(&p, 1e6), 0.0);
    }

    #[test]
    fn cdf_and_survival_are_complementary() {
        let p = LatencyParams::new(1.0 / 30.0, 10.0, 0.1, 252).unwrap();
        for i in 0..200 {
            let t = 0.1 + i as f64 * 2.5;
            assert!((cdf(&p, t) + survival(&p, t) - 1.0).abs() < 1e-14, "t={t}");
        }
    }

    #[test]
    fn equal_rate_branch_is_the_limit() {
        // lambda2 = mu2 / n = 0.5
        let base = LatencyParams::new(0.5, 5.0, 0.3, 10).unwrap();
        let near = LatencyParams { mu1: 0.5 * (1.0 + 1e-8), ..base };
        for i in 1..100 {
            let t = 0.3 + i as f64 * 0.2;
            assert!((cdf(&base, t) - cdf(&near, t)).abs() < 1e-6);
            assert!((survival(&base, t) - survival(&near, t)).abs() < 1e-6);
        }
    }

    #[test]
    fn cdf_monotone_bounded_continuous() {
        let p = quick_servers(126);
        let mut prev = 0.0;
        for i in 0..20_000 {
            let t = i as f64 * 0.005;
            let f = cdf(&p, t);
            assert!((0.0..=1.0).contains(&f));
            assert!(f >= prev);
            assert!(f - prev < 1e-2, "jump at t={t}");
            prev = f;
        }
    }

    #[test]
    fn set_completion_cases() {
        let p = quick_servers(126);
        assert_eq!(set_completion_prob(&p, 0, 8, 0.5).unwrap(), 1.0);
        assert!((set_completion_prob(&p, 8, 8, 1e6).unwrap() - 1.0).abs() < 1e-12);
        assert!(set_completion_prob(&p, 9, 8, 1.0).is_err());

        // find t with F(t) = 1/2 by bisection, then l=1, N=2 gives 1/4
        let (mut lo, mut hi) = (1.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(&p, mid) < 0.5 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((set_completion_prob(&p, 1, 2, lo).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn per_set_probabilities_need_binomial_weights() {
        let p = LatencyParams::new(1.0 / 30.0, 10.0, 0.1, 252).unwrap();
        for &t in &[0.05, 3.0, 40.0, 300.0] {
            let total: f64 = (0..=8)
                .map(|l| binomial(8, l) * set_completion_prob(&p, l, 8, t).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "t={t} total={total}");
        }
    }

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn sampling_contract() {
        let p = quick_servers(126);
        let a = sample_times(&p, 1000, 7);
        assert_eq!(a, sample_times(&p, 1000, 7));
        assert_ne!(a, sample_times(&p, 1000, 8));
        assert!(a.iter().all(|&t| t >= p.a));
    }

    #[test]
    fn sample_mean_matches_moment() {
        let p = quick_servers(126);
        let draws = sample_times(&p, 100_000, 11);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean / p.mean() - 1.0).abs() < 0.01, "mean={mean} expected={}", p.mean());
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(LatencyParams::new(0.0, 1.0, 0.0, 1).is_err());
        assert!(LatencyParams::new(1.0, -1.0, 0.0, 1).is_err());
        assert!(LatencyParams::new(1.0, 1.0, -0.1, 1).is_err());
        assert!(LatencyParams::new(1.0, 1.0, 0.0, 0).is_err());
    }
}
