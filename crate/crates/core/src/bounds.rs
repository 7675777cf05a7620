//! Upper bounds on the frame error rate as a function of latency.
//!
//! Two bounds are provided: a large-deviation bound over all servers with a
//! chromatic-number dependence penalty, and a union bound that enumerates
//! every set of finished servers. Both are evaluated with `ln P_e` carried
//! alongside `P_e`, so servers whose error bound underflows still contribute
//! a finite exponent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code_analysis::{chromatic_number, dependency_graph, CodeMetrics, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::latency::{cdf, survival, LatencyParams, LatencyRates};
use crate::rate::ServerErrorProfile;
use crate::schemes::AnalyzedScheme;
use crate::simulate::{McCurve, McMetadata};

/// Largest server count for the subset enumeration of the union bound.
pub const MAX_UNION_SERVERS: usize = 20;

/// `ln(e^a + e^b)`.
pub(crate) fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln sum e^x_i` in iteration order.
pub(crate) fn ln_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, ln_add_exp)
}

/// `phi(x) = (1 + x) ln(1 + x) - x`.
pub fn phi(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 / 2.0 - x2 * x / 6.0 + x2 * x2 / 12.0 - x2 * x2 * x / 20.0
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

/// `S * phi(w / S)` for `w > 0`, given `ln S`.
///
/// For `w / S` beyond about `1e8` the product is rewritten as
/// `(S + w) ln(1 + w/S) - w`, which stays finite when `S` underflows.
pub(crate) fn scaled_phi(ln_s: f64, w: f64) -> f64 {
    debug_assert!(w > 0.0);
    let ln_x = w.ln() - ln_s;
    if ln_x > 18.0 {
        let s = ln_s.exp();
        (s + w) * (ln_x + (-ln_x).exp().ln_1p()) - w
    } else {
        ln_s.exp() * phi(ln_x.exp())
    }
}

/// Which rate divides the logarithm in the large-deviation bound's validity
/// threshold `t >= n (a - ln(r) / rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRate {
    /// Per-symbol service rate `mu2`.
    #[default]
    Service,
    /// Unavailability rate `mu1`.
    Unavailability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LdbFlag {
    /// No server can have finished (`S(t) = 0`); the bound is set to 1.
    NoCompletions,
    /// Too few expected successes for the concentration argument; set to 1.
    Vacuous,
}

/// Large-deviation bound at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LdbOutcome {
    Bound { value: f64, flag: Option<LdbFlag> },
    /// `t` lies below the validity threshold.
    BelowThreshold { threshold: f64 },
    /// `sum P_e >= d_min`: the threshold's logarithm is undefined.
    Inapplicable,
}

impl LdbOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LdbOutcome::Bound { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, LdbOutcome::Bound { .. })
    }
}

/// Earliest time at which the large-deviation bound holds, or `None` when
/// it is inapplicable.
pub fn ldb_threshold(
    metrics: &CodeMetrics,
    profile: &ServerErrorProfile,
    lat: &LatencyParams,
    rate: ThresholdRate,
) -> Option<f64> {
    let n_servers = profile.len() as f64;
    let d_min = metrics.d_min as f64;
    let total: f64 = profile.probabilities().iter().sum();
    if d_min <= total {
        return None;
    }
    let divisor = match rate {
        ThresholdRate::Service => lat.mu2,
        ThresholdRate::Unavailability => lat.mu1,
    };
    let ratio = (d_min - total) / (n_servers - total);
    Some(lat.n as f64 * (lat.a - ratio.ln() / divisor))
}

/// Large-deviation bound at time `t`.
pub fn ldb(
    metrics: &CodeMetrics,
    profile: &ServerErrorProfile,
    lat: &LatencyParams,
    t: f64,
    rate: ThresholdRate,
) -> LdbOutcome {
    let Some(threshold) = ldb_threshold(metrics, profile, lat, rate) else {
        return LdbOutcome::Inapplicable;
    };
    if t < threshold {
        return LdbOutcome::BelowThreshold { threshold };
    }
    ldb_at(metrics, profile, cdf(lat, t), survival(lat, t))
}

/// Large-deviation bound for completion probability `f` (`fbar = 1 - f`),
/// ignoring the validity threshold.
pub fn ldb_at(metrics: &CodeMetrics, profile: &ServerErrorProfile, f: f64, fbar: f64) -> LdbOutcome {
    if f <= 0.0 {
        return LdbOutcome::Bound {
            value: 1.0,
            flag: Some(LdbFlag::NoCompletions),
        };
    }
    let probs = profile.probabilities();
    let ln_probs = profile.ln_probabilities();
    let n_servers = probs.len() as f64;
    let total: f64 = probs.iter().sum();
    let p_min = probs.iter().copied().fold(1.0, f64::min);

    // N F - F sum P - N + d_min, arranged to avoid cancellation near F = 1.
    let margin = metrics.d_min as f64 - n_servers * fbar - f * total;
    if margin <= 0.0 {
        return LdbOutcome::Bound {
            value: 1.0,
            flag: Some(LdbFlag::Vacuous),
        };
    }

    // q_i = F (1 - P_i), 1 - q_i = (1 - F) + F P_i.
    let ln_f = f.ln();
    let ln_fbar = fbar.ln();
    let ln_s = ln_sum_exp(probs.iter().zip(&ln_probs).map(|(&p, &lp)| {
        let ln_q = ln_f + (-p).ln_1p();
        let ln_not_q = ln_add_exp(ln_fbar, ln_f + lp);
        ln_q + ln_not_q
    }));
    let b = f * (1.0 - p_min);
    if ln_s == f64::NEG_INFINITY || b <= 0.0 {
        return LdbOutcome::Bound {
            value: 1.0,
            flag: Some(LdbFlag::NoCompletions),
        };
    }
    let w = 4.0 * b * margin / 5.0;
    let exponent = scaled_phi(ln_s, w) / (b * b * metrics.chromatic_number as f64);
    LdbOutcome::Bound {
        value: (-exponent).exp().clamp(0.0, 1.0),
        flag: None,
    }
}

/// Union bound with its time-independent part precomputed.
///
/// For every server set `A` of size `l >= N - d_min + 1` the term
/// `E_A = exp(-S_A / (b_A^2 chi(G_A)) phi(...))` does not depend on `t`, so
/// the bound reduces to a polynomial in `F(t)`:
///
/// `UB = sum_{l <= N - d_min} C(N,l) F^l (1-F)^(N-l) + sum_{l > N - d_min} F^l (1-F)^(N-l) sum_{|A|=l} E_A`
///
/// which equals `1 - sum_l Pr(l,t) sum_A (1 - E_A)` but has no cancellation
/// when the bound is tiny.
#[derive(Debug, Clone)]
pub struct UnionBound {
    n_servers: usize,
    d_min: usize,
    /// `sum_{|A| = l} E_A`, indexed by `l`.
    subset_sums: Vec<f64>,
    /// Subsets whose `S_A` was zero.
    degenerate_subsets: usize,
}

impl UnionBound {
    pub fn new(code: &GeneratorMatrix, metrics: &CodeMetrics, profile: &ServerErrorProfile) -> Result<Self> {
        let n = code.n();
        if n > MAX_UNION_SERVERS {
            return Err(Error::SizeGuard {
                what: "union bound",
                detail: format!("{n} servers exceeds {MAX_UNION_SERVERS} for subset enumeration"),
            });
        }
        if profile.len() != n {
            return Err(Error::config(
                "profile",
                format!("{} server errors for {n} servers", profile.len()),
            ));
        }
        let d_min = metrics.d_min;
        let graph = dependency_graph(code);
        let probs = profile.probabilities();
        let ln_probs = profile.ln_probabilities();
        let first = n + 1 - d_min.min(n);

        let masks: Vec<u32> = (1u32..(1u32 << n))
            .filter(|m| m.count_ones() as usize >= first)
            .collect();
        let terms: Vec<(usize, Result<(f64, bool)>)> = masks
            .par_iter()
            .map(|&mask| {
                let members: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
                let term = chromatic_number(&graph.induced_subgraph(&members))
                    .map(|chi| subset_term(&members, chi, n, d_min, &probs, &ln_probs));
                (members.len(), term)
            })
            .collect();

        let mut subset_sums = vec![0.0; n + 1];
        let mut degenerate_subsets = 0;
        for (l, term) in terms {
            let (e, degenerate) = term?;
            subset_sums[l] += e;
            degenerate_subsets += usize::from(degenerate);
        }
        Ok(Self {
            n_servers: n,
            d_min,
            subset_sums,
            degenerate_subsets,
        })
    }

    /// Bound for completion probability `f` with `fbar = 1 - f` supplied
    /// separately for precision.
    pub fn eval(&self, f: f64, fbar: f64) -> f64 {
        let n = self.n_servers;
        let first = n + 1 - self.d_min.min(n);
        let mut total = 0.0;
        let mut binom = 1.0;
        for l in 0..=n {
            let pr = f.powi(l as i32) * fbar.powi((n - l) as i32);
            if l < first {
                total += binom * pr;
            } else {
                total += pr * self.subset_sums[l];
            }
            binom = binom * (n - l) as f64 / (l + 1) as f64;
        }
        total.clamp(0.0, 1.0)
    }

    pub fn at_time(&self, lat: &LatencyParams, t: f64) -> f64 {
        self.eval(cdf(lat, t), survival(lat, t))
    }

    /// Limit of the bound as `t -> infinity`.
    pub fn floor(&self) -> f64 {
        self.eval(1.0, 0.0)
    }

    pub fn degenerate_subsets(&self) -> usize {
        self.degenerate_subsets
    }
}

/// `(E_A, S_A == 0)` for one server set.
fn subset_term(
    members: &[usize],
    chi: usize,
    n: usize,
    d_min: usize,
    probs: &[f64],
    ln_probs: &[f64],
) -> (f64, bool) {
    let l = members.len();
    let p_sum: f64 = members.iter().map(|&i| probs[i]).sum();
    let margin = l as f64 - n as f64 + d_min as f64 - p_sum;
    // Nonpositive margin: the subset certifies nothing.
    if margin <= 0.0 {
        return (1.0, false);
    }
    let ln_s = ln_sum_exp(
        members
            .iter()
            .filter(|&&i| probs[i] < 1.0)
            .map(|&i| ln_probs[i] + (-probs[i]).ln_1p()),
    );
    if ln_s == f64::NEG_INFINITY {
        return (0.0, true);
    }
    let p_min = members.iter().map(|&i| probs[i]).fold(1.0, f64::min);
    let b = 1.0 - p_min;
    let w = 4.0 * b * margin / 5.0;
    let exponent = scaled_phi(ln_s, w) / (b * b * chi as f64);
    ((-exponent).exp().clamp(0.0, 1.0), false)
}

/// Union bound at a single time point.
pub fn ub(
    code: &GeneratorMatrix,
    metrics: &CodeMetrics,
    profile: &ServerErrorProfile,
    lat: &LatencyParams,
    t: f64,
) -> Result<f64> {
    Ok(UnionBound::new(code, metrics, profile)?.at_time(lat, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundOptions {
    #[serde(default)]
    pub ldb_threshold_rate: ThresholdRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    pub fer: f64,
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub f_t: f64,
    pub ldb: LdbOutcome,
    /// `None` when the union bound could not be evaluated for this scheme.
    pub ub: Option<f64>,
    pub mc: Option<McPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub scheme: String,
    pub k: usize,
    pub n_servers: usize,
    pub n: usize,
    pub d_min: usize,
    pub chi: usize,
    pub column_sq_norms: Vec<u64>,
    pub p_e_ml: Vec<f64>,
    pub ln_p_e_ml: Vec<f64>,
    pub p_e_clamped: bool,
    pub asymptotic_approximation: bool,
    pub ldb_threshold_rate: ThresholdRate,
    pub ldb_threshold: Option<f64>,
    pub ub_floor: Option<f64>,
    pub ub_degenerate_subsets: usize,
    pub ub_error: Option<String>,
    pub notes: Vec<String>,
}

/// Bound values of one scheme over a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerCurve {
    pub metadata: CurveMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McMetadata>,
    pub points: Vec<CurvePoint>,
}

impl FerCurve {
    /// Adds Monte Carlo estimates computed on the same grid.
    pub fn attach_mc(&mut self, mc: McCurve) -> Result<()> {
        if mc.points.len() != self.points.len() {
            return Err(Error::config(
                "mc",
                format!("{} estimates for {} grid points", mc.points.len(), self.points.len()),
            ));
        }
        for (p, m) in self.points.iter_mut().zip(mc.points) {
            p.mc = Some(m);
        }
        self.mc = Some(mc.metadata);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn ub_values(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.ub).collect()
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("time_grid", "empty grid"));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::config("time_grid", "non-finite time"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("time_grid", "times must be strictly increasing"));
    }
    Ok(())
}

/// Evaluates both bounds over `grid`. A union-bound failure is recorded in
/// the metadata and leaves `ub` empty instead of failing the sweep.
pub fn sweep(
    scheme: &AnalyzedScheme,
    rates: &LatencyRates,
    grid: &[f64],
    options: &BoundOptions,
) -> Result<FerCurve> {
    validate_grid(grid)?;
    let lat = rates.with_block_length(scheme.scheme.n)?;
    let metrics = &scheme.metrics;
    let profile = &scheme.profile;
    let union = UnionBound::new(&scheme.scheme.code, metrics, profile);
    let rate = options.ldb_threshold_rate;

    let points: Vec<CurvePoint> = grid
        .par_iter()
        .map(|&t| CurvePoint {
            t,
            f_t: cdf(&lat, t),
            ldb: ldb(metrics, profile, &lat, t, rate),
            ub: union.as_ref().ok().map(|u| u.at_time(&lat, t)),
            mc: None,
        })
        .collect();

    let metadata = CurveMetadata {
        scheme: scheme.name().to_string(),
        k: scheme.scheme.k,
        n_servers: scheme.n_servers(),
        n: scheme.scheme.n,
        d_min: metrics.d_min,
        chi: metrics.chromatic_number,
        column_sq_norms: metrics.column_sq_norms.clone(),
        p_e_ml: profile.probabilities(),
        ln_p_e_ml: profile.ln_probabilities(),
        p_e_clamped: profile.any_clamped(),
        asymptotic_approximation: profile.asymptotic_approximation,
        ldb_threshold_rate: rate,
        ldb_threshold: ldb_threshold(metrics, profile, &lat, rate),
        ub_floor: union.as_ref().ok().map(UnionBound::floor),
        ub_degenerate_subsets: union.as_ref().map_or(0, UnionBound::degenerate_subsets),
        ub_error: union.as_ref().err().map(ToString::to_string),
        notes: scheme.scheme.notes.clone(),
    };
    Ok(FerCurve {
        metadata,
        mc: None,
        points,
    })
}
