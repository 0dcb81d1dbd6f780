//! Choosing `(K', B)` for a recall target, and reduction-factor grids.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::params::{AlgoParams, DEFAULT_LANE_MULTIPLE};
use crate::recall::{exact_expected_recall, mc_expected_recall_adaptive_with, RecallEstimate};

/// Targets at or above this are flagged: the Monte-Carlo tolerance of
/// 0.005 is too coarse to separate candidates reliably.
pub const UNRELIABLE_TARGET: f64 = 0.995;

/// The winner is re-checked with the exact expression when
/// `min(K, N/B)` is at most this.
pub const EXACT_REVALIDATION_LIMIT: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PlanRequest {
    pub n: u64,
    pub k: u64,
    pub recall_target: f64,
    /// Ascending `K'` candidates.
    pub allowed_local_k: Vec<u64>,
    pub lane_multiple: u64,
    pub seed: u64,
}

impl PlanRequest {
    /// Request with `K' in {1, 2, 3, 4}`, lane multiple 128 and seed 0.
    pub fn new(n: u64, k: u64, recall_target: f64) -> Self {
        PlanRequest {
            n,
            k,
            recall_target,
            allowed_local_k: vec![1, 2, 3, 4],
            lane_multiple: DEFAULT_LANE_MULTIPLE,
            seed: 0,
        }
    }

    pub fn with_max_local_k(mut self, max_local_k: u64) -> Self {
        self.allowed_local_k = (1..=max_local_k).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.recall_target > 0.0 && self.recall_target < 1.0) {
            return bad(format!(
                "recall_target must be in (0, 1), got {}",
                self.recall_target
            ));
        }
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return bad(format!("need 1 <= k <= n (k={}, n={})", self.k, self.n));
        }
        if self.lane_multiple == 0 {
            return bad("lane_multiple must be positive".into());
        }
        if self.allowed_local_k.is_empty()
            || self.allowed_local_k[0] == 0
            || self.allowed_local_k.windows(2).any(|w| w[0] >= w[1])
        {
            return bad(format!(
                "allowed_local_k must be non-empty, positive and ascending: {:?}",
                self.allowed_local_k
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanResult {
    pub local_k: u64,
    pub num_buckets: u64,
    /// `B * K'`.
    pub num_elements: u64,
    pub estimated_recall: RecallEstimate,
}

/// A configuration that passed the Monte-Carlo sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub local_k: u64,
    pub num_buckets: u64,
    pub num_elements: u64,
    pub estimate: RecallEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanReport {
    pub result: PlanResult,
    /// Every passing configuration, ordered by element count then `K'`.
    pub candidates: Vec<Candidate>,
    pub warnings: Vec<String>,
}

/// Divisors of `n` that are multiples of `lane_multiple`, largest first.
pub fn legal_bucket_counts(n: u64, lane_multiple: u64) -> Vec<u64> {
    if n == 0 || lane_multiple == 0 {
        return Vec::new();
    }
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            small.push(d);
            if d != n / d {
                large.push(n / d);
            }
        }
        d += 1;
    }
    let mut out: Vec<u64> = large
        .into_iter()
        .chain(small.into_iter().rev())
        .filter(|d| d % lane_multiple == 0)
        .collect();
    out.dedup();
    out
}

/// SplitMix64 finalizer, used to derive independent per-candidate seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn candidate_seed(seed: u64, local_k: u64, num_buckets: u64) -> u64 {
    mix(mix(mix(seed) ^ local_k) ^ num_buckets)
}

/// For each `K'`, walks the legal bucket counts from largest to smallest and
/// stops at the first one with `B * K' < K` or an estimate below target.
fn sweep(req: &PlanRequest, exec: Exec) -> Result<Vec<Candidate>> {
    let buckets = legal_bucket_counts(req.n, req.lane_multiple);
    let mut passing = Vec::new();
    for &local_k in &req.allowed_local_k {
        for &b in &buckets {
            if b.saturating_mul(local_k) < req.k {
                break;
            }
            let params = AlgoParams::with_lane_multiple(req.n, b, local_k, req.k, req.lane_multiple)?;
            let est = mc_expected_recall_adaptive_with(
                &params,
                candidate_seed(req.seed, local_k, b),
                exec,
            )?;
            if est.value < req.recall_target {
                break;
            }
            passing.push(Candidate {
                local_k,
                num_buckets: b,
                num_elements: b * local_k,
                estimate: est,
            });
        }
    }
    passing.sort_by_key(|c| (c.num_elements, c.local_k));
    Ok(passing)
}

/// Re-checks candidates in preference order with the exact expression where
/// it is cheap; the first that holds up wins.
fn pick(req: &PlanRequest, candidates: &[Candidate]) -> Result<PlanResult> {
    for c in candidates {
        let mut estimate = c.estimate;
        if req.k.min(req.n / c.num_buckets) <= EXACT_REVALIDATION_LIMIT {
            let params =
                AlgoParams::with_lane_multiple(req.n, c.num_buckets, c.local_k, req.k, req.lane_multiple)?;
            estimate = exact_expected_recall(&params)?;
            if estimate.value < req.recall_target {
                log::debug!(
                    "K'={} B={} passed Monte Carlo but exact recall {} is below target",
                    c.local_k,
                    c.num_buckets,
                    estimate.value
                );
                continue;
            }
        }
        return Ok(PlanResult {
            local_k: c.local_k,
            num_buckets: c.num_buckets,
            num_elements: c.num_elements,
            estimated_recall: estimate,
        });
    }
    Err(Error::NoFeasibleConfig {
        n: req.n,
        k: req.k,
        recall_target: req.recall_target,
    })
}

/// The passing configuration with the fewest candidate elements, ties going
/// to the smaller `K'`.
pub fn select_parameters(req: &PlanRequest) -> Result<PlanResult> {
    plan(req, Exec::default()).map(|r| r.result)
}

/// [`select_parameters`] together with every passing configuration and any
/// warnings.
pub fn plan(req: &PlanRequest, exec: Exec) -> Result<PlanReport> {
    req.validate()?;
    let mut warnings = Vec::new();
    if req.recall_target >= UNRELIABLE_TARGET {
        let w = format!(
            "recall_target {} is too high for reliable selection (>= {UNRELIABLE_TARGET})",
            req.recall_target
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    let candidates = sweep(req, exec)?;
    let result = pick(req, &candidates)?;
    Ok(PlanReport {
        result,
        candidates,
        warnings,
    })
}

/// `K / N` values of the default grid. `0.00390625` is `K = 1024` at
/// `N = 2^18`.
pub const DEFAULT_K_FRACTIONS: [f64; 8] = [0.001, 0.00390625, 0.005, 0.01, 0.02, 0.05, 0.10, 0.25];

/// `2^8, 2^10, ..., 2^32`.
pub fn default_n_values() -> Vec<u64> {
    (8..=32).step_by(2).map(|e| 1u64 << e).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub k_fraction: f64,
    pub requested_n: u64,
    /// `requested_n` rounded down to a multiple of the lane width.
    pub n: u64,
    pub k: u64,
    /// Best plan restricted to `K' = 1`.
    pub baseline: Option<PlanResult>,
    /// Best plan over `K' <= kprime_max`.
    pub best: Option<PlanResult>,
}

impl GridCell {
    /// Baseline elements over best elements; `None` when either plan is
    /// missing.
    pub fn ratio(&self) -> Option<f64> {
        match (&self.baseline, &self.best) {
            (Some(a), Some(b)) => Some(a.num_elements as f64 / b.num_elements as f64),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridRequest {
    pub k_fractions: Vec<f64>,
    pub n_values: Vec<u64>,
    pub recall_target: f64,
    pub kprime_max: u64,
    pub lane_multiple: u64,
    pub seed: u64,
}

impl GridRequest {
    pub fn new(recall_target: f64) -> Self {
        GridRequest {
            k_fractions: DEFAULT_K_FRACTIONS.to_vec(),
            n_values: default_n_values(),
            recall_target,
            kprime_max: 4,
            lane_multiple: DEFAULT_LANE_MULTIPLE,
            seed: 0,
        }
    }
}

fn grid_cell(g: &GridRequest, k_fraction: f64, requested_n: u64, cell_seed: u64) -> Result<GridCell> {
    let n = requested_n - requested_n % g.lane_multiple;
    let k = ((k_fraction * n as f64).round() as u64).max(1);
    let mut cell = GridCell {
        k_fraction,
        requested_n,
        n,
        k,
        baseline: None,
        best: None,
    };
    if n == 0 || k > n {
        return Ok(cell);
    }
    let req = PlanRequest {
        n,
        k,
        recall_target: g.recall_target,
        allowed_local_k: (1..=g.kprime_max).collect(),
        lane_multiple: g.lane_multiple,
        seed: cell_seed,
    };
    // One sweep serves both plans: the K' = 1 candidates are the baseline's.
    let candidates = sweep(&req, Exec::Sequential)?;
    let ones: Vec<Candidate> = candidates.iter().filter(|c| c.local_k == 1).copied().collect();
    let absent = |r: Result<PlanResult>| match r {
        Ok(p) => Ok(Some(p)),
        Err(Error::NoFeasibleConfig { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    cell.baseline = absent(pick(&req, &ones))?;
    cell.best = absent(pick(&req, &candidates))?;
    Ok(cell)
}

/// Reduction in stage-1 output elements of the best `K' <= kprime_max` plan
/// over the best `K' = 1` plan, for every `(fraction, N)` pair in row-major
/// order (fractions outer). `K = max(1, round(fraction * N))`. Cells without
/// a feasible plan have `None` entries.
pub fn reduction_factor_grid(g: &GridRequest, exec: Exec) -> Result<Vec<GridCell>> {
    if !(g.recall_target > 0.0 && g.recall_target < 1.0) {
        return Err(Error::InvalidParams(format!(
            "recall_target must be in (0, 1), got {}",
            g.recall_target
        )));
    }
    if let Some(f) = g.k_fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(Error::InvalidParams(format!("k fraction {f} outside (0, 1)")));
    }
    if g.n_values.contains(&0) || g.kprime_max == 0 || g.lane_multiple == 0 {
        return Err(Error::InvalidParams(
            "n values, kprime_max and lane_multiple must be positive".into(),
        ));
    }
    let cells: Vec<(f64, u64)> = g
        .k_fractions
        .iter()
        .flat_map(|&f| g.n_values.iter().map(move |&n| (f, n)))
        .collect();
    exec.map(cells.len(), |i| {
        let (f, n) = cells[i];
        grid_cell(g, f, n, mix(g.seed ^ mix(i as u64)))
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_counts() {
        let pow2: Vec<u64> = (7..=18).rev().map(|e| 1 << e).collect();
        assert_eq!(legal_bucket_counts(262_144, 128), pow2);
        assert!(legal_bucket_counts(100, 128).is_empty());
        let brute: Vec<u64> = (1..=430_080u64)
            .rev()
            .filter(|d| 430_080 % d == 0 && d % 128 == 0)
            .collect();
        assert_eq!(legal_bucket_counts(430_080, 128), brute);
        assert!(brute.contains(&26_880) && brute.contains(&7168));
        assert_eq!(legal_bucket_counts(36, 1), [36, 18, 12, 9, 6, 4, 3, 2, 1]);
    }

    #[test]
    fn request_validation() {
        assert!(PlanRequest::new(10, 11, 0.9).validate().is_err());
        assert!(PlanRequest::new(10, 1, 1.0).validate().is_err());
        let mut r = PlanRequest::new(10, 1, 0.9);
        r.allowed_local_k = vec![2, 1];
        assert!(r.validate().is_err());
    }

    #[test]
    fn infeasible_without_legal_buckets() {
        let r = PlanRequest::new(100, 10, 0.9);
        assert!(matches!(
            select_parameters(&r),
            Err(Error::NoFeasibleConfig { n: 100, k: 10, .. })
        ));
    }

    #[test]
    fn tiny_n_high_target_is_infeasible() {
        // 192 has no divisor that is a multiple of 128.
        let r = PlanRequest::new(192, 10, 0.999_999);
        assert!(matches!(
            plan(&r, Exec::Sequential),
            Err(Error::NoFeasibleConfig { .. })
        ));
    }

    #[test]
    fn warning_for_high_target() {
        let mut r = PlanRequest::new(1024, 4, 0.999);
        r.lane_multiple = 1;
        let rep = plan(&r, Exec::Sequential).unwrap();
        assert_eq!(rep.warnings.len(), 1);
        assert!(rep.result.estimated_recall.value >= 0.999);
    }

    #[test]
    fn trivially_exact_configuration() {
        // k = 1 never collides, so the smallest legal bucket count wins.
        let r = PlanRequest::new(1024, 1, 0.9);
        let p = select_parameters(&r).unwrap();
        assert_eq!((p.local_k, p.num_buckets, p.num_elements), (1, 128, 128));
        assert_eq!(p.estimated_recall.value, 1.0);
    }

    #[test]
    fn seeds_are_distinct() {
        let a = candidate_seed(0, 1, 128);
        assert_ne!(a, candidate_seed(0, 2, 128));
        assert_ne!(a, candidate_seed(0, 1, 256));
        assert_ne!(a, candidate_seed(1, 1, 128));
    }
}
