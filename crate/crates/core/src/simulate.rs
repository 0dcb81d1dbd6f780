//! Empirical recall of the full pipeline on random permutations.

use crate::dataset::synth_distinct_row;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::params::AlgoParams;
use crate::topk::{approx_top_k_with, TopKResult};

pub const DEFAULT_RUNS: u64 = 1024;

/// Recall statistics over independent runs.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSummary {
    pub params: AlgoParams,
    pub runs: u64,
    pub mean: f64,
    /// Sample standard deviation across runs (one degree of freedom removed).
    pub std_dev: f64,
    /// `std_dev / sqrt(runs)`.
    pub std_error: f64,
}

/// Indicator of the true top-`k` positions of `row`, ties going to the
/// smaller index.
fn top_k_mask(row: &[f32], k: usize) -> Vec<bool> {
    let mut pairs: Vec<(f32, u32)> = row.iter().copied().zip(0u32..).collect();
    pairs.select_nth_unstable_by(k - 1, |a, b| {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
    });
    let mut mask = vec![false; row.len()];
    for &(_, i) in &pairs[..k] {
        mask[i as usize] = true;
    }
    mask
}

fn recall_against(approx: &TopKResult, mask: &[bool], k: usize) -> f64 {
    let hits = approx.indices.iter().filter(|&&i| mask[i as usize]).count();
    hits as f64 / k as f64
}

fn summarize(params: AlgoParams, recalls: impl Iterator<Item = f64> + Clone, runs: u64) -> SimulationSummary {
    let t = runs as f64;
    let mean = recalls.clone().sum::<f64>() / t;
    let std_dev = if runs < 2 {
        0.0
    } else {
        (recalls.map(|r| (r - mean) * (r - mean)).sum::<f64>() / (t - 1.0)).sqrt()
    };
    SimulationSummary {
        params,
        runs,
        mean,
        std_dev,
        std_error: std_dev / t.sqrt(),
    }
}

/// Runs every configuration on the same `runs` rows, row `r` being
/// [`synth_distinct_row`]`(n, seed, r)`. All configurations must share `n`
/// and `K`.
pub fn simulate_recall_many(
    configs: &[AlgoParams],
    runs: u64,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SimulationSummary>> {
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    if runs == 0 {
        return Err(Error::InvalidParams("runs must be positive".into()));
    }
    let (n, k) = (first.n(), first.global_k());
    if let Some(p) = configs.iter().find(|p| p.n() != n || p.global_k() != k) {
        return Err(Error::InvalidParams(format!(
            "all configurations must share n={n} and k={k}, got {p:?}"
        )));
    }
    let per_run: Vec<Result<Vec<f64>>> = exec.map(runs as usize, |r| {
        let row = synth_distinct_row(n as usize, seed, r as u64)?;
        let mask = top_k_mask(&row, k as usize);
        configs
            .iter()
            .map(|p| {
                let approx = approx_top_k_with(&row, p, Exec::Sequential)?;
                Ok(recall_against(&approx, &mask, k as usize))
            })
            .collect()
    });
    let per_run: Vec<Vec<f64>> = per_run.into_iter().collect::<Result<_>>()?;
    Ok(configs
        .iter()
        .enumerate()
        .map(|(c, p)| summarize(*p, per_run.iter().map(move |v| v[c]), runs))
        .collect())
}

pub fn simulate_recall(params: &AlgoParams, runs: u64, seed: u64) -> Result<SimulationSummary> {
    simulate_recall_with(params, runs, seed, Exec::default())
}

pub fn simulate_recall_with(
    params: &AlgoParams,
    runs: u64,
    seed: u64,
    exec: Exec,
) -> Result<SimulationSummary> {
    Ok(simulate_recall_many(std::slice::from_ref(params), runs, seed, exec)?.remove(0))
}
