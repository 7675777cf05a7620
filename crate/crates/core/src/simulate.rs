//! Monte Carlo estimate of the frame error rate.
//!
//! Each trial draws every server's completion time and decodability once and
//! reuses them across the whole time grid. A trial fails at `t` when fewer
//! than `N - d_min + 1` servers have both finished by `t` and decoded
//! correctly, so each trial reduces to a single failure horizon `tau` and
//! the grid is scored with an integer histogram. Counts are exact integers,
//! which keeps results identical for any thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{validate_grid, McPoint};
use crate::code_analysis::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::latency::{LatencyParams, LatencyRates};
use crate::rate::{mmse_alpha, ChannelParams};
use crate::schemes::AnalyzedScheme;

/// Trials per parallel work unit.
const BATCH: u64 = 2048;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McMode {
    /// `D_i ~ Bernoulli(1 - P_e_i)`, independent across servers.
    #[default]
    IndependentBernoulli,
    /// Shared Gaussian noise combined through the code's columns.
    CorrelatedGaussianSurrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// Noise vector length for the surrogate; defaults to the scheme's `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dim: Option<usize>,
    #[serde(default)]
    pub mode: McMode,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("mc.trials", "must be >= 1"));
        }
        if self.noise_dim == Some(0) {
            return Err(Error::config("mc.noise_dim", "must be >= 1"));
        }
        Ok(())
    }
}

/// Random source for trial `trial`: one ChaCha stream per trial index.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Surrogate decodability of every server.
///
/// The effective noise of server `i` is `sum_j g_ji u_j` where each `u_j`
/// stands for `alpha z_j + (alpha - 1) x_j` with the self-noise replaced by
/// a Gaussian of the same variance. Server `i` succeeds when the empirical
/// second moment of its noise is below `P 2^(-2R)`.
pub fn sample_decodability<R: Rng + ?Sized>(
    code: &GeneratorMatrix,
    ch: &ChannelParams,
    noise_dim: usize,
    rng: &mut R,
) -> Vec<bool> {
    let alpha = mmse_alpha(ch);
    let std_u = ((alpha - 1.0).powi(2) * ch.power + alpha * alpha * ch.noise_var).sqrt();
    let threshold = ch.power * (-2.0 * ch.rate).exp2() * noise_dim as f64;
    let (k, n) = (code.k(), code.n());

    let mut energy = vec![0.0; n];
    let mut u = vec![0.0; k];
    for _ in 0..noise_dim {
        for uj in u.iter_mut() {
            *uj = std_u * rng.sample::<f64, _>(StandardNormal);
        }
        for (i, e) in energy.iter_mut().enumerate() {
            let z: f64 = (0..k).map(|j| code.entry(j, i) as f64 * u[j]).sum();
            *e += z * z;
        }
    }
    energy.into_iter().map(|e| e < threshold).collect()
}

/// Pairwise Pearson correlation of the surrogate decodability indicators
/// over `trials` draws. Pairs where either indicator is constant get 0.
pub fn decodability_correlation(
    code: &GeneratorMatrix,
    ch: &ChannelParams,
    noise_dim: usize,
    trials: u64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = code.n();
    let batches = trials.div_ceil(BATCH);
    // Integer co-occurrence counts: ones[i], both[i][j].
    let (ones, both) = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut ones = vec![0u64; n];
            let mut both = vec![vec![0u64; n]; n];
            for trial in b * BATCH..((b + 1) * BATCH).min(trials) {
                let d = sample_decodability(code, ch, noise_dim, &mut trial_rng(seed, trial));
                for i in 0..n {
                    if d[i] {
                        ones[i] += 1;
                        for j in 0..n {
                            both[i][j] += u64::from(d[j]);
                        }
                    }
                }
            }
            (ones, both)
        })
        .reduce(
            || (vec![0u64; n], vec![vec![0u64; n]; n]),
            |(mut oa, mut ba), (ob, bb)| {
                for i in 0..n {
                    oa[i] += ob[i];
                    for j in 0..n {
                        ba[i][j] += bb[i][j];
                    }
                }
                (oa, ba)
            },
        );

    let m = trials as f64;
    let mean: Vec<f64> = ones.iter().map(|&c| c as f64 / m).collect();
    let mut corr = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let var_i = mean[i] * (1.0 - mean[i]);
            let var_j = mean[j] * (1.0 - mean[j]);
            if var_i > 0.0 && var_j > 0.0 {
                let cov = both[i][j] as f64 / m - mean[i] * mean[j];
                corr[i][j] = cov / (var_i * var_j).sqrt();
            }
        }
    }
    corr
}

/// 95% confidence half-width for `failures` out of `trials` (Agresti-Coull).
/// A single trial carries no spread information and gets the full width 1.
pub fn ci_halfwidth(failures: u64, trials: u64) -> f64 {
    if trials <= 1 {
        return 1.0;
    }
    let z2 = Z95 * Z95;
    let n = trials as f64 + z2;
    let p = (failures as f64 + z2 / 2.0) / n;
    (Z95 * (p * (1.0 - p) / n).sqrt()).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMetadata {
    pub trials: u64,
    pub seed: u64,
    pub mode: McMode,
    /// Noise length actually used by the surrogate.
    pub noise_dim: Option<usize>,
    /// Set when the interval is the uninformative single-trial width.
    pub degenerate_ci: bool,
    pub surrogate_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCurve {
    pub metadata: McMetadata,
    pub failures: Vec<u64>,
    pub points: Vec<McPoint>,
}

/// Everything one trial needs, fixed for a whole run.
struct TrialModel<'a> {
    code: &'a GeneratorMatrix,
    probs: Vec<f64>,
    ch: &'a ChannelParams,
    lat: LatencyParams,
    /// Servers that must be ready: `N - d_min + 1`.
    needed: usize,
    mode: McMode,
    noise_dim: usize,
}

impl TrialModel<'_> {
    /// Earliest time at which the trial succeeds, or infinity.
    fn horizon(&self, rng: &mut ChaCha8Rng) -> f64 {
        let times: Vec<f64> = (0..self.code.n()).map(|_| self.lat.sample(rng)).collect();
        let decoded: Vec<bool> = match self.mode {
            McMode::IndependentBernoulli => self.probs.iter().map(|&p| rng.gen::<f64>() >= p).collect(),
            McMode::CorrelatedGaussianSurrogate => {
                sample_decodability(self.code, self.ch, self.noise_dim, rng)
            }
        };
        let mut ready: Vec<f64> = times
            .into_iter()
            .zip(decoded)
            .filter_map(|(t, ok)| ok.then_some(t))
            .collect();
        if ready.len() < self.needed {
            return f64::INFINITY;
        }
        ready.sort_by(f64::total_cmp);
        ready[self.needed - 1]
    }
}

/// Estimates the frame error rate of `scheme` at every grid time.
pub fn run_mc(
    scheme: &AnalyzedScheme,
    ch: &ChannelParams,
    rates: &LatencyRates,
    mc: &McConfig,
    grid: &[f64],
) -> Result<McCurve> {
    mc.validate()?;
    validate_grid(grid)?;
    let code = &scheme.scheme.code;
    let n_servers = code.n();
    let noise_dim = mc.noise_dim.unwrap_or(scheme.scheme.n);
    let model = TrialModel {
        code,
        probs: scheme.profile.probabilities(),
        ch,
        lat: rates.with_block_length(scheme.scheme.n)?,
        needed: n_servers + 1 - scheme.metrics.d_min.min(n_servers),
        mode: mc.mode,
        noise_dim,
    };
    let trials = mc.trials;
    let batches = trials.div_ceil(BATCH);

    // hist[j]: trials whose horizon falls in (grid[j-1], grid[j]];
    // hist[grid.len()]: trials still failing at the last grid time.
    let hist = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut hist = vec![0u64; grid.len() + 1];
            for trial in b * BATCH..((b + 1) * BATCH).min(trials) {
                let mut rng = trial_rng(mc.seed, trial);
                let tau = model.horizon(&mut rng);
                hist[grid.partition_point(|&t| t < tau)] += 1;
            }
            hist
        })
        .reduce(
            || vec![0u64; grid.len() + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    // A trial fails at grid[k] iff its horizon lies beyond grid[k].
    let mut failures = vec![0u64; grid.len()];
    let mut beyond = hist[grid.len()];
    for k in (0..grid.len()).rev() {
        failures[k] = beyond;
        beyond += hist[k];
    }
    let points = failures
        .iter()
        .map(|&f| McPoint {
            fer: f as f64 / trials as f64,
            ci_halfwidth: ci_halfwidth(f, trials),
        })
        .collect();

    let surrogate = mc.mode == McMode::CorrelatedGaussianSurrogate;
    Ok(McCurve {
        metadata: McMetadata {
            trials,
            seed: mc.seed,
            mode: mc.mode,
            noise_dim: surrogate.then_some(noise_dim),
            degenerate_ci: trials == 1,
            surrogate_note: surrogate.then(|| {
                "correlated Gaussian surrogate: Gaussianized self-noise, success iff mean noise energy < P 2^(-2R)"
                    .to_string()
            }),
        },
        failures,
        points,
    })
}
