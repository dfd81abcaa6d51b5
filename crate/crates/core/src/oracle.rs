//! Exact computations on finite discrete loss distributions and Monte Carlo
//! checks of large-deviation asymptotics against them.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`. Work is
//! split into fixed blocks and block `b` draws from ChaCha stream `b`, so
//! results do not depend on how many threads run the blocks.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::cumulant_at;
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::loss_data::{LossDataset, LossProfile, LossRecord};

const PROB_SUM_TOLERANCE: f64 = 1e-12;
const RATIONAL_TOLERANCE: f64 = 1e-9;
/// λ range scanned by the brute-force rate oracle.
pub const EXACT_RATE_LAMBDA_RANGE: (f64, f64) = (1e-6, 1e6);
/// Grid size used by [`cramer_tail`] when it evaluates the exact rate.
pub const EXACT_RATE_RESOLUTION: usize = 100_000;
/// Trials per RNG stream in [`cramer_tail`].
pub const TRIALS_PER_BLOCK: u64 = 4096;

/// Loss levels (nats) with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct DiscreteLossDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteLossDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        Self::new(raw.values, raw.probs)
    }
}

impl DiscreteLossDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        if values.is_empty() {
            return bad("at least one atom is required".into());
        }
        if values.len() != probs.len() {
            return bad(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("loss value {v} must be finite and >= 0"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return bad(format!("probability {p} must be positive"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            return bad(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { values, probs })
    }

    /// Point mass at `value`.
    pub fn atom(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Expected loss `L = Σ p_i v_i`.
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v * p)
            .sum()
    }

    /// `L − min v`, accumulated over excesses.
    pub fn loss_gap(&self) -> f64 {
        let m = self.min_value();
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| (v - m) * p)
            .sum()
    }

    /// Probability of the minimum loss.
    pub fn min_mass(&self) -> f64 {
        let m = self.min_value();
        self.values
            .iter()
            .zip(&self.probs)
            .filter(|(v, _)| **v == m)
            .map(|(_, p)| p)
            .sum()
    }

    /// Law of `(X + Y) / 2` for independent `X, Y` drawn from `self`: the
    /// loss of a two-view augmentation with i.i.d. views.
    pub fn pair_average(&self) -> Self {
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(self.values.len().pow(2));
        for (vi, pi) in self.values.iter().zip(&self.probs) {
            for (vj, pj) in self.values.iter().zip(&self.probs) {
                atoms.push(((vi + vj) / 2.0, pi * pj));
            }
        }
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut values: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (v, p) in atoms {
            if values.last() == Some(&v) {
                *probs.last_mut().unwrap() += p;
            } else {
                values.push(v);
                probs.push(p);
            }
        }
        // renormalise away product round-off
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self { values, probs }
    }

    fn sampler(&self) -> InverseCdf {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = f64::INFINITY;
        InverseCdf {
            cumulative,
            values: self.values.clone(),
        }
    }
}

struct InverseCdf {
    cumulative: Vec<f64>,
    values: Vec<f64>,
}

impl InverseCdf {
    #[inline]
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.values[self.cumulative.partition_point(|&c| c <= u)]
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// `J(λ) = ln Σ p_i e^{−λ v_i} + λL`, shifted by the smallest loss.
pub fn exact_cumulant(dist: &DiscreteLossDistribution, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let m = dist.min_value();
    let sum: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .map(|(v, p)| p * (-lambda * (v - m)).exp())
        .sum();
    Ok((lambda * dist.loss_gap() + sum.ln()).max(0.0))
}

fn exact_derivative(dist: &DiscreteLossDistribution, lambda: f64) -> f64 {
    let m = dist.min_value();
    let (mut w_sum, mut wv_sum) = (0.0, 0.0);
    for (v, p) in dist.values.iter().zip(&dist.probs) {
        let w = p * (-lambda * (v - m)).exp();
        w_sum += w;
        wv_sum += w * (v - m);
    }
    dist.loss_gap() - wv_sum / w_sum
}

/// Brute-force Legendre transform: the best of `resolution` log-spaced λ in
/// [`EXACT_RATE_LAMBDA_RANGE`], refined by bisection on `J'` between the
/// neighbours of the best point.
///
/// Returns `+∞` for `a > L − min v`. At `a = L − min v` it returns the finite
/// `−ln P(ℓ = min v)`.
pub fn exact_rate(dist: &DiscreteLossDistribution, a: f64, resolution: usize) -> Result<Extended> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidA(a));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be >= 2".into()));
    }
    let gap = dist.loss_gap();
    if gap <= 0.0 {
        return Ok(Extended::Infinite);
    }
    let boundary_tol = 1e-12 * gap.max(1.0);
    if a > gap + boundary_tol {
        return Ok(Extended::Infinite);
    }
    if (a - gap).abs() <= boundary_tol {
        return Ok(Extended::Finite(-dist.min_mass().ln()));
    }

    let (lo, hi) = EXACT_RATE_LAMBDA_RANGE;
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let lambda_at = |k: usize| (ln_lo + (ln_hi - ln_lo) * k as f64 / (resolution - 1) as f64).exp();
    let objective = |lambda: f64| -> Result<f64> { Ok(lambda * a - exact_cumulant(dist, lambda)?) };

    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..resolution {
        let v = objective(lambda_at(k))?;
        if v > best {
            best = v;
            best_k = k;
        }
    }

    let mut left = lambda_at(best_k.saturating_sub(1));
    let mut right = lambda_at((best_k + 1).min(resolution - 1));
    if exact_derivative(dist, left) <= a && exact_derivative(dist, right) >= a {
        for _ in 0..200 {
            let mid = 0.5 * (left + right);
            if mid <= left || mid >= right {
                break;
            }
            if exact_derivative(dist, mid) < a {
                left = mid;
            } else {
                right = mid;
            }
        }
        best = best.max(objective(0.5 * (left + right))?);
    }
    Ok(Extended::Finite(best.max(0.0)))
}

/// `n` i.i.d. draws by inverse CDF, reproducible from `seed`.
pub fn sample_dataset(dist: &DiscreteLossDistribution, n: usize, seed: u64) -> Result<LossDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let sampler = dist.sampler();
    let mut rng = stream_rng(seed, 0);
    let records = (0..n)
        .map(|i| LossRecord::new(format!("s{}", i + 1), sampler.draw(&mut rng)))
        .collect();
    LossDataset::new(format!("sample-{seed}"), records)
}

/// Dataset holding exactly `p_i · denominator` copies of each `v_i`.
pub fn expand_to_dataset(dist: &DiscreteLossDistribution, denominator: u64) -> Result<LossDataset> {
    if denominator == 0 {
        return Err(Error::InvalidArgument("denominator must be >= 1".into()));
    }
    let mut losses = Vec::new();
    for (&v, &p) in dist.values.iter().zip(&dist.probs) {
        let scaled = p * denominator as f64;
        let count = scaled.round();
        if (scaled - count).abs() > RATIONAL_TOLERANCE || count < 1.0 {
            return Err(Error::NonRationalProbs {
                prob: p,
                denominator,
            });
        }
        losses.extend(std::iter::repeat_n(v, count as usize));
    }
    LossDataset::from_losses("expanded", &losses)
}

/// Monte Carlo estimate of `P(L − L̂ ≥ a)` for samples of size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerReport {
    pub n: u64,
    pub a: f64,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    /// `−(1/n) ln p̂`; `+∞` when no trial hit.
    pub neg_log_rate: Extended,
    /// Delta-method standard error of `neg_log_rate`,
    /// `√((1 − p̂)/(p̂ · trials)) / n`.
    pub neg_log_rate_stderr: Extended,
    pub exact_rate: Extended,
    pub seed: u64,
}

pub fn cramer_tail(
    dist: &DiscreteLossDistribution,
    n: u64,
    a: f64,
    trials: u64,
    seed: u64,
) -> Result<CramerReport> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("n and trials must be >= 1".into()));
    }
    let gap = dist.loss_gap();
    if !(a.is_finite() && a > 0.0 && a < gap) {
        return Err(Error::InvalidA(a));
    }
    let mean = dist.mean();
    let sampler = dist.sampler();
    let blocks = trials.div_ceil(TRIALS_PER_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream_rng(seed, block);
            let start = block * TRIALS_PER_BLOCK;
            let count = TRIALS_PER_BLOCK.min(trials - start);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut sum = 0.0;
                for _ in 0..n {
                    sum += sampler.draw(&mut rng);
                }
                if mean - sum / n as f64 >= a {
                    hits += 1;
                }
            }
            hits
        })
        .sum();

    let p_hat = hits as f64 / trials as f64;
    let (neg_log_rate, stderr) = if hits == 0 {
        (Extended::Infinite, Extended::Infinite)
    } else {
        let rate = (-p_hat.ln() / n as f64).max(0.0);
        let se = ((1.0 - p_hat) / (p_hat * trials as f64)).sqrt() / n as f64;
        (Extended::Finite(rate), Extended::Finite(se))
    };
    Ok(CramerReport {
        n,
        a,
        trials,
        hits,
        p_hat,
        neg_log_rate,
        neg_log_rate_stderr: stderr,
        exact_rate: exact_rate(dist, a, EXACT_RATE_RESOLUTION)?,
        seed,
    })
}

/// Spread of `Ĵ(λ)` over independent datasets against the exact `J(λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub n: usize,
    pub lambda: f64,
    pub replicates: usize,
    pub mean_estimate: f64,
    pub std_error: f64,
    pub exact: f64,
    pub bias: f64,
    /// `mean_estimate ≤ exact + 3 · std_error`.
    pub underestimates: bool,
    pub seed: u64,
}

pub const MIN_BIAS_REPLICATES: usize = 30;

pub fn estimator_bias_probe(
    dist: &DiscreteLossDistribution,
    n: usize,
    lambda: f64,
    replicates: usize,
    seed: u64,
) -> Result<BiasReport> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if replicates < MIN_BIAS_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "replicates must be >= {MIN_BIAS_REPLICATES}, got {replicates}"
        )));
    }
    let sampler = dist.sampler();
    let estimates: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let profile = LossProfile::from_losses((0..n).map(|_| sampler.draw(&mut rng)))?;
            cumulant_at(&profile, lambda)
        })
        .collect::<Result<_>>()?;

    let r = replicates as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let std_error = (var / r).sqrt();
    let exact = exact_cumulant(dist, lambda)?;
    Ok(BiasReport {
        n,
        lambda,
        replicates,
        mean_estimate: mean,
        std_error,
        exact,
        bias: mean - exact,
        underestimates: mean <= exact + 3.0 * std_error,
        seed,
    })
}
