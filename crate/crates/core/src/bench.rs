//! Wall-clock timing of the two stages and of the exact baseline.

use std::hint::black_box;
use std::time::Instant;

use crate::dataset::synth_distinct;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::params::AlgoParams;
use crate::topk::{exact_top_k, stage1_partial_reduce_batch, stage2_top_k};

pub const DEFAULT_WARMUP: usize = 3;
pub const DEFAULT_REPEATS: usize = 10;

/// Median and quartiles of a set of timings, in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingStats {
    pub samples: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl TimingStats {
    /// Quartiles by linear interpolation between order statistics.
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty(), "no timing samples");
        samples.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (samples.len() - 1) as f64;
            let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
            samples[lo] + (h - lo as f64) * (samples[hi] - samples[lo])
        };
        let (q1, median, q3) = (q(0.25), q(0.5), q(0.75));
        TimingStats {
            samples,
            median,
            q1,
            q3,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub batch: usize,
    pub params: AlgoParams,
    pub warmup: usize,
    pub repeats: usize,
    /// Also time exact top-`K` by full sort.
    pub exact_baseline: bool,
    pub seed: u64,
    pub exec: Exec,
}

impl BenchConfig {
    pub fn new(batch: usize, params: AlgoParams) -> Self {
        BenchConfig {
            batch,
            params,
            warmup: DEFAULT_WARMUP,
            repeats: DEFAULT_REPEATS,
            exact_baseline: false,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub stage1: TimingStats,
    pub stage2: TimingStats,
    /// Per-repeat sum of the two stages.
    pub total: TimingStats,
    pub exact: Option<TimingStats>,
}

/// Times both stages over `batch` random-permutation rows. Each repeat runs
/// stage 1 on the whole batch, then stage 2 on the whole batch.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.batch == 0 || cfg.repeats == 0 {
        return Err(Error::InvalidParams("batch and repeats must be positive".into()));
    }
    let n = cfg.params.n() as usize;
    let k = cfg.params.global_k() as usize;
    let data = synth_distinct(cfg.batch, n, cfg.seed)?.into_data();

    let (mut s1, mut s2, mut tot) = (Vec::new(), Vec::new(), Vec::new());
    for rep in 0..cfg.warmup + cfg.repeats {
        let t0 = Instant::now();
        let cands = stage1_partial_reduce_batch(&data, &cfg.params, cfg.exec)?;
        let t1 = Instant::now();
        let out = cfg.exec.map(cands.len(), |r| stage2_top_k(&cands[r], k));
        let t2 = Instant::now();
        black_box(out);
        if rep >= cfg.warmup {
            let (a, b) = ((t1 - t0).as_secs_f64(), (t2 - t1).as_secs_f64());
            s1.push(a);
            s2.push(b);
            tot.push(a + b);
        }
    }

    let exact = if cfg.exact_baseline {
        let mut ts = Vec::new();
        for rep in 0..cfg.warmup + cfg.repeats {
            let t0 = Instant::now();
            let out = cfg.exec.map(cfg.batch, |r| exact_top_k(&data[r * n..(r + 1) * n], k));
            let dt = t0.elapsed().as_secs_f64();
            for r in out {
                black_box(r?);
            }
            if rep >= cfg.warmup {
                ts.push(dt);
            }
        }
        Some(TimingStats::from_samples(ts))
    } else {
        None
    };

    Ok(BenchReport {
        stage1: TimingStats::from_samples(s1),
        stage2: TimingStats::from_samples(s2),
        total: TimingStats::from_samples(tot),
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles() {
        let s = TimingStats::from_samples(vec![4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        let s = TimingStats::from_samples(vec![1.0, 2.0]);
        assert_eq!(s.median, 1.5);
        assert_eq!(TimingStats::from_samples(vec![7.0]).iqr(), 0.0);
    }

    #[test]
    fn single_repeat_no_warmup() {
        let p = AlgoParams::new(4096, 256, 2, 64).unwrap();
        let mut cfg = BenchConfig::new(2, p);
        cfg.repeats = 1;
        cfg.warmup = 0;
        cfg.exact_baseline = true;
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.stage1.samples.len(), 1);
        assert!(r.exact.unwrap().median > 0.0);
    }
}
