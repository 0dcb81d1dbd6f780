//! Expected recall of the first stage under uniformly random placement of the
//! true top-`K` elements.
//!
//! Every bucket's count of true top-`K` elements is `Hypergeometric(N, K,
//! N/B)`, and each count above `K'` is lost. Expected recall is therefore
//! `1 - B * E[max(0, X - K')] / K`. This module evaluates that expectation
//! exactly, estimates it by Monte Carlo, and provides the closed-form `K' = 1`
//! bounds together with the bucket counts they imply.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hypergeom::{neumaier_sum, Hypergeometric, PmfTable};
use crate::params::AlgoParams;

/// Trials per independently seeded Monte-Carlo stream.
pub const MC_CHUNK: u64 = 4096;
/// Starting trial count of [`mc_expected_recall_adaptive`].
pub const ADAPTIVE_START_TRIALS: u64 = 4096;
/// [`mc_expected_recall_adaptive`] stops once `3 * std_error` is at most this.
pub const ADAPTIVE_TOLERANCE: f64 = 0.005;
const ADAPTIVE_MAX_TRIALS: u64 = 1 << 34;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RecallMethod {
    Exact,
    MonteCarlo,
    BoundImproved,
    BoundOriginal,
    BoundQuartic,
}

impl RecallMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecallMethod::Exact => "exact",
            RecallMethod::MonteCarlo => "monte_carlo",
            RecallMethod::BoundImproved => "bound_improved",
            RecallMethod::BoundOriginal => "bound_original",
            RecallMethod::BoundQuartic => "bound_quartic",
        }
    }
}

impl fmt::Display for RecallMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An expected-recall value and how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecallEstimate {
    pub value: f64,
    pub method: RecallMethod,
    /// Standard error of the mean (Monte Carlo only).
    pub std_error: Option<f64>,
    /// Sample count (Monte Carlo only).
    pub trials: Option<u64>,
}

impl RecallEstimate {
    fn analytic(value: f64, method: RecallMethod) -> Self {
        RecallEstimate {
            value: value.clamp(0.0, 1.0),
            method,
            std_error: None,
            trials: None,
        }
    }
}

/// `E[max(0, X - local_k)]` for `X ~ Hypergeometric(n, k, bucket_size)`.
fn expected_excess(n: u64, bucket_size: u64, k: u64, local_k: u64) -> f64 {
    if local_k >= k.min(bucket_size) {
        return 0.0;
    }
    let table = Hypergeometric::new(n, k, bucket_size)
        .expect("validated parameters")
        .table();
    neumaier_sum(
        table
            .iter()
            .filter(|&(x, _)| x > local_k)
            .map(|(x, p)| (x - local_k) as f64 * p),
    )
}

/// Exact expected recall.
///
/// Returns exactly `1.0` when no bucket can hold more than `K'` of the true
/// top-`K` (`K' >= min(K, N/B)`).
pub fn exact_expected_recall(params: &AlgoParams) -> Result<RecallEstimate> {
    let value = exact_expected_recall_strided(
        params.n(),
        params.num_buckets(),
        params.global_k(),
        params.local_k(),
    )?;
    Ok(RecallEstimate::analytic(value, RecallMethod::Exact))
}

/// Exact expected recall for strided buckets when `B` need not divide `N`:
/// `N mod B` buckets hold `ceil(N/B)` elements and the rest `floor(N/B)`.
/// Reduces to the equal-bucket expression when `B | N`.
pub fn exact_expected_recall_strided(n: u64, num_buckets: u64, k: u64, local_k: u64) -> Result<f64> {
    if n == 0 || k == 0 || k > n || num_buckets == 0 || num_buckets > n || local_k == 0 {
        return Err(Error::InvalidParams(format!(
            "need 1 <= k <= n, 1 <= num_buckets <= n, local_k >= 1 (n={n}, num_buckets={num_buckets}, k={k}, local_k={local_k})"
        )));
    }
    let q = n / num_buckets;
    let big = n % num_buckets;
    let mut excess = (num_buckets - big) as f64 * expected_excess(n, q, k, local_k);
    if big > 0 {
        excess += big as f64 * expected_excess(n, q + 1, k, local_k);
    }
    if excess == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - excess / k as f64).clamp(0.0, 1.0))
}

/// Running sums of the per-trial excess `e = max(0, X - K')`.
#[derive(Clone, Copy, Debug, Default)]
struct ExcessSums {
    trials: u64,
    sum: u128,
    sum_sq: u128,
}

impl ExcessSums {
    fn merge(&mut self, other: ExcessSums) {
        self.trials += other.trials;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    /// Mean recall and its standard error, where each trial's recall is
    /// `1 - scale * e`.
    fn estimate(&self, scale: f64) -> RecallEstimate {
        let t = self.trials as f64;
        let mean_e = self.sum as f64 / t;
        let std_error = if self.trials < 2 {
            f64::INFINITY
        } else {
            // (T * sum_sq - sum^2) / (T (T - 1)), exact in integers when it fits
            let num = (self.trials as u128)
                .checked_mul(self.sum_sq)
                .and_then(|a| self.sum.checked_mul(self.sum).map(|b| (a - b) as f64))
                .unwrap_or_else(|| {
                    (self.sum_sq as f64 - self.sum as f64 * mean_e).max(0.0) * t
                });
            let var_e = num / (t * (t - 1.0));
            scale * (var_e / t).sqrt()
        };
        RecallEstimate {
            value: (1.0 - scale * mean_e).clamp(0.0, 1.0),
            method: RecallMethod::MonteCarlo,
            std_error: Some(std_error),
            trials: Some(self.trials),
        }
    }
}

struct McSampler {
    table: Option<PmfTable>,
    local_k: u64,
    seed: u64,
}

impl McSampler {
    fn new(params: &AlgoParams, seed: u64) -> Self {
        let (n, k, size) = (params.n(), params.global_k(), params.bucket_size());
        let table = (params.local_k() < k.min(size)).then(|| {
            Hypergeometric::new(n, k, size)
                .expect("validated parameters")
                .table()
        });
        McSampler {
            table,
            local_k: params.local_k(),
            seed,
        }
    }

    /// Sums over trials `[chunk * MC_CHUNK, chunk * MC_CHUNK + len)`. Each
    /// chunk draws from its own ChaCha stream, so results do not depend on
    /// how chunks are scheduled.
    fn chunk(&self, chunk: u64, len: u64) -> ExcessSums {
        let mut sums = ExcessSums {
            trials: len,
            ..Default::default()
        };
        let Some(table) = &self.table else {
            return sums;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chunk);
        for _ in 0..len {
            let e = table.sample(&mut rng).saturating_sub(self.local_k) as u128;
            sums.sum += e;
            sums.sum_sq += e * e;
        }
        sums
    }

    fn range(&self, first_chunk: u64, trials: u64, exec: Exec) -> ExcessSums {
        let chunks = trials.div_ceil(MC_CHUNK);
        let parts = exec.map(chunks as usize, |c| {
            let len = MC_CHUNK.min(trials - c as u64 * MC_CHUNK);
            self.chunk(first_chunk + c as u64, len)
        });
        let mut total = ExcessSums::default();
        for p in parts {
            total.merge(p);
        }
        total
    }
}

fn recall_scale(params: &AlgoParams) -> f64 {
    params.num_buckets() as f64 / params.global_k() as f64
}

/// Monte-Carlo estimate from `trials` hypergeometric draws: the mean of
/// `1 - B * max(0, X - K') / K` with its standard error (sample standard
/// deviation with one degree of freedom removed, over `sqrt(trials)`).
pub fn mc_expected_recall(params: &AlgoParams, trials: u64, seed: u64) -> Result<RecallEstimate> {
    mc_expected_recall_with(params, trials, seed, Exec::default())
}

pub fn mc_expected_recall_with(
    params: &AlgoParams,
    trials: u64,
    seed: u64,
    exec: Exec,
) -> Result<RecallEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    let sampler = McSampler::new(params, seed);
    Ok(sampler.range(0, trials, exec).estimate(recall_scale(params)))
}

/// Monte Carlo starting at 4096 trials and doubling until `3 * std_error <=
/// 0.005`. Earlier draws are kept when doubling, so the result equals
/// [`mc_expected_recall`] at the final trial count.
pub fn mc_expected_recall_adaptive(params: &AlgoParams, seed: u64) -> Result<RecallEstimate> {
    mc_expected_recall_adaptive_with(params, seed, Exec::default())
}

pub fn mc_expected_recall_adaptive_with(
    params: &AlgoParams,
    seed: u64,
    exec: Exec,
) -> Result<RecallEstimate> {
    let sampler = McSampler::new(params, seed);
    let scale = recall_scale(params);
    let mut sums = sampler.range(0, ADAPTIVE_START_TRIALS, exec);
    loop {
        let est = sums.estimate(scale);
        let se = est.std_error.unwrap_or(f64::INFINITY);
        if 3.0 * se <= ADAPTIVE_TOLERANCE || sums.trials >= ADAPTIVE_MAX_TRIALS {
            if 3.0 * se > ADAPTIVE_TOLERANCE {
                log::warn!(
                    "adaptive Monte Carlo stopped at {} trials with std_error {se}",
                    sums.trials
                );
            }
            return Ok(est);
        }
        let more = sampler.range(sums.trials / MC_CHUNK, sums.trials, exec);
        sums.merge(more);
    }
}

fn require_single_local_k(params: &AlgoParams) -> Result<()> {
    if params.local_k() != 1 {
        return Err(Error::InvalidParams(format!(
            "closed-form bounds exist only for local_k = 1 (got {})",
            params.local_k()
        )));
    }
    Ok(())
}

/// `1 - (K/2)(1/B - 1/N)`, a lower bound on expected recall for `K' = 1`.
pub fn recall_bound_improved(params: &AlgoParams) -> Result<RecallEstimate> {
    require_single_local_k(params)?;
    let (n, b, k) = (
        params.n() as f64,
        params.num_buckets() as f64,
        params.global_k() as f64,
    );
    Ok(RecallEstimate::analytic(
        1.0 - 0.5 * k * (1.0 / b - 1.0 / n),
        RecallMethod::BoundImproved,
    ))
}

/// The `K' = 1` lower bound with `(1 - K/N)^(N/B)` expanded through the
/// quartic term instead of the quadratic one.
///
/// With `s = N/B` and `p = K/N` the expected excess per bucket is bounded by
/// `C(s,2) p^2 - C(s,3) p^3 + C(s,4) p^4` (the linear terms cancel).
pub fn recall_bound_quartic(params: &AlgoParams) -> Result<RecallEstimate> {
    require_single_local_k(params)?;
    let s = params.bucket_size() as f64;
    let p = params.global_k() as f64 / params.n() as f64;
    let c2 = s * (s - 1.0) / 2.0;
    let c3 = c2 * (s - 2.0) / 3.0;
    let c4 = c3 * (s - 3.0) / 4.0;
    let excess = p * p * (c2 - p * (c3 - p * c4));
    let value = 1.0 - recall_scale(params) * excess;
    Ok(RecallEstimate::analytic(value, RecallMethod::BoundQuartic))
}

/// `(1 - 1/B)^(K-1)`: the original birthday-problem recall estimate for
/// `K' = 1`, the inverse of [`buckets_original`].
pub fn recall_bound_original(params: &AlgoParams) -> Result<RecallEstimate> {
    require_single_local_k(params)?;
    let b = params.num_buckets() as f64;
    let km1 = (params.global_k() - 1) as f64;
    Ok(RecallEstimate::analytic(
        (km1 * (-1.0 / b).ln_1p()).exp(),
        RecallMethod::BoundOriginal,
    ))
}

fn check_target(recall_target: f64) -> Result<()> {
    if !(recall_target > 0.0 && recall_target < 1.0) {
        return Err(Error::Domain(format!(
            "recall target {recall_target} must lie strictly between 0 and 1"
        )));
    }
    Ok(())
}

/// Buckets sufficient for expected recall `r` with `K' = 1`:
/// `ceil(K / (2 (1 - r + K/(2N))))`, at least 1. No lane or divisor rounding.
pub fn buckets_improved(k: u64, n: u64, recall_target: f64) -> Result<u64> {
    check_target(recall_target)?;
    if k == 0 || k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n (k={k}, n={n})")));
    }
    let (k, n) = (k as f64, n as f64);
    let b = k / (2.0 * (1.0 - recall_target + k / (2.0 * n)));
    Ok((b.ceil() as u64).max(1))
}

/// The original bucket count `ceil(1 / (1 - r^(1/(K-1))))`.
pub fn buckets_original(k: u64, recall_target: f64) -> Result<u64> {
    check_target(recall_target)?;
    if k < 2 {
        return Err(Error::Domain(format!("need k >= 2 (k={k})")));
    }
    let root_gap = -(recall_target.ln() / (k - 1) as f64).exp_m1();
    Ok((1.0 / root_gap).ceil() as u64)
}

/// The first-order approximation `ceil((K - 1) / (1 - r))` of
/// [`buckets_original`].
pub fn buckets_original_approx(k: u64, recall_target: f64) -> Result<u64> {
    check_target(recall_target)?;
    if k < 2 {
        return Err(Error::Domain(format!("need k >= 2 (k={k})")));
    }
    Ok(((k - 1) as f64 / (1.0 - recall_target)).ceil() as u64)
}
