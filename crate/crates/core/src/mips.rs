//! Maximum inner-product search: scores of every query against every
//! database row, reduced to the top `K` per query.
//!
//! [`mips_unfused`] materializes the whole `[queries, n]` score matrix and
//! then runs both stages. [`mips_fused`] computes scores one column block at
//! a time and feeds each block straight into the stage-1 state, so only
//! `queries * block_cols` scores exist at once. Both paths compute every
//! score with the same [`dot`] and produce bit-identical results.
//!
//! When `B` does not divide `n` the score rows are logically padded to the
//! next multiple of `B` with `-inf`. Padding positions are dropped before
//! stage 2, so they are never returned; a query can then get fewer than `K`
//! results only if fewer than `K` real candidates survive stage 1.

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::params::AlgoParams;
use crate::topk::{
    check_finite_or_inf, exact_top_k, measure_recall, stage1_partial_reduce_with, stage2_top_k,
    Stage1State, TopKResult, MAX_LEN,
};

/// Inner product accumulated in `f32` in ascending index order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[derive(Clone, Copy, Debug)]
pub struct MipsRequest<'a> {
    database: &'a VectorDataset,
    queries: &'a VectorDataset,
    params: AlgoParams,
}

impl<'a> MipsRequest<'a> {
    /// `params.n()` must be the database size rounded up to a multiple of
    /// `params.num_buckets()` (see [`padded_len`]), and `params.global_k()`
    /// at most the database size.
    pub fn new(
        database: &'a VectorDataset,
        queries: &'a VectorDataset,
        params: AlgoParams,
    ) -> Result<Self> {
        if database.dims() != queries.dims() {
            return Err(Error::ShapeMismatch(format!(
                "database has {} dims, queries have {}",
                database.dims(),
                queries.dims()
            )));
        }
        let n = database.rows() as u64;
        if n == 0 {
            return Err(Error::ShapeMismatch("empty database".into()));
        }
        let padded = padded_len(n, params.num_buckets());
        if params.n() != padded {
            return Err(Error::ShapeMismatch(format!(
                "params.n={} but {n} database rows pad to {padded} for {} buckets",
                params.n(),
                params.num_buckets()
            )));
        }
        if params.global_k() > n {
            return Err(Error::InvalidParams(format!(
                "k={} exceeds database size {n}",
                params.global_k()
            )));
        }
        if padded > MAX_LEN {
            return Err(Error::InvalidParams(format!(
                "padded database size {padded} exceeds the 32-bit index range"
            )));
        }
        Ok(MipsRequest {
            database,
            queries,
            params,
        })
    }

    /// Builds the parameters for a database of `database.rows()` rows with
    /// lane multiple `lane_multiple`.
    pub fn with_config(
        database: &'a VectorDataset,
        queries: &'a VectorDataset,
        num_buckets: u64,
        local_k: u64,
        k: u64,
        lane_multiple: u64,
    ) -> Result<Self> {
        let n = padded_len(database.rows() as u64, num_buckets.max(1));
        let params = AlgoParams::with_lane_multiple(n, num_buckets, local_k, k, lane_multiple)?;
        Self::new(database, queries, params)
    }

    pub fn params(&self) -> &AlgoParams {
        &self.params
    }

    pub fn database(&self) -> &VectorDataset {
        self.database
    }

    pub fn queries(&self) -> &VectorDataset {
        self.queries
    }
}

/// `n` rounded up to a multiple of `num_buckets`.
pub fn padded_len(n: u64, num_buckets: u64) -> u64 {
    n.div_ceil(num_buckets) * num_buckets
}

/// Scores of `query` against database columns `[start, start + out.len())`,
/// `-inf` past the end of the database.
fn score_block(db: &VectorDataset, query: &[f32], start: usize, out: &mut [f32]) {
    for (j, s) in out.iter_mut().enumerate() {
        let col = start + j;
        *s = if col < db.rows() {
            dot(query, db.row(col))
        } else {
            f32::NEG_INFINITY
        };
    }
}

fn finish(stage1: &TopKResult, n: usize, k: usize) -> TopKResult {
    let (values, indices) = stage1
        .filled()
        .filter(|&(_, i)| (i as usize) < n)
        .unzip();
    stage2_top_k(&TopKResult { values, indices }, k)
}

/// Materializes all scores, then runs both stages on every query row.
pub fn mips_unfused(req: &MipsRequest, exec: Exec) -> Result<Vec<TopKResult>> {
    let n_pad = req.params.n() as usize;
    let n = req.database.rows();
    let b = req.queries.rows();
    let mut scores = vec![0.0f32; b * n_pad];
    exec.for_each_chunk_mut(&mut scores, n_pad.max(1), |q, row| {
        score_block(req.database, req.queries.row(q), 0, row)
    });
    check_finite_or_inf(&scores)?;
    let k = req.params.global_k() as usize;
    exec.map(b, |q| {
        let row = &scores[q * n_pad..(q + 1) * n_pad];
        let stage1 = stage1_partial_reduce_with(row, &req.params, Exec::Sequential)?;
        Ok(finish(&stage1, n, k))
    })
    .into_iter()
    .collect()
}

/// Score-buffer accounting of one fused run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusedStats {
    pub block_cols: usize,
    /// Scores allocated for all block buffers together.
    pub score_buffer_elems: usize,
    /// What the unfused path materializes: `queries * padded n`.
    pub unfused_score_elems: usize,
}

/// Computes scores in blocks of `block_cols` columns and feeds each block to
/// the stage-1 state as soon as it is produced.
///
/// `block_cols` must be a positive multiple or divisor of `B`.
pub fn mips_fused(req: &MipsRequest, block_cols: usize, exec: Exec) -> Result<Vec<TopKResult>> {
    mips_fused_with_stats(req, block_cols, exec).map(|r| r.0)
}

pub fn mips_fused_with_stats(
    req: &MipsRequest,
    block_cols: usize,
    exec: Exec,
) -> Result<(Vec<TopKResult>, FusedStats)> {
    let num_buckets = req.params.num_buckets() as usize;
    if block_cols == 0 || (!block_cols.is_multiple_of(num_buckets) && !num_buckets.is_multiple_of(block_cols)) {
        return Err(Error::BlockSize {
            block_cols,
            num_buckets,
        });
    }
    let n_pad = req.params.n() as usize;
    let n = req.database.rows();
    let b = req.queries.rows();
    let local_k = req.params.local_k() as usize;
    let k = req.params.global_k() as usize;
    let width = block_cols.min(n_pad);

    struct Lane {
        buf: Vec<f32>,
        out: Result<TopKResult>,
    }
    let mut lanes: Vec<Lane> = (0..b)
        .map(|_| Lane {
            buf: vec![0.0; width],
            out: Ok(TopKResult::default()),
        })
        .collect();
    let stats = FusedStats {
        block_cols,
        score_buffer_elems: lanes.iter().map(|l| l.buf.len()).sum(),
        unfused_score_elems: b * n_pad,
    };

    exec.for_each_chunk_mut(&mut lanes, 1, |q, lane| {
        let lane = &mut lane[0];
        let query = req.queries.row(q);
        let mut state = Stage1State::new(num_buckets, local_k);
        let mut start = 0;
        while start < n_pad {
            let w = width.min(n_pad - start);
            let block = &mut lane.buf[..w];
            score_block(req.database, query, start, block);
            if let Err(e) = check_finite_or_inf(block) {
                let Error::NanInput { index } = e else { unreachable!() };
                lane.out = Err(Error::NanInput {
                    index: q * n_pad + start + index,
                });
                return;
            }
            state.feed(block);
            start += w;
        }
        lane.out = Ok(finish(&state.into_result(), n, k));
    });
    let results = lanes.into_iter().map(|l| l.out).collect::<Result<Vec<_>>>()?;
    Ok((results, stats))
}

/// Exact top-`k` database rows for every query by full sort of the scores.
pub fn exact_mips(
    database: &VectorDataset,
    queries: &VectorDataset,
    k: usize,
    exec: Exec,
) -> Result<Vec<TopKResult>> {
    if database.dims() != queries.dims() {
        return Err(Error::ShapeMismatch(format!(
            "database has {} dims, queries have {}",
            database.dims(),
            queries.dims()
        )));
    }
    exec.map(queries.rows(), |q| {
        let mut scores = vec![0.0; database.rows()];
        score_block(database, queries.row(q), 0, &mut scores);
        exact_top_k(&scores, k)
    })
    .into_iter()
    .collect()
}

/// Recall of every query's result against the exact one.
pub fn per_query_recall(approx: &[TopKResult], exact: &[TopKResult]) -> Result<Vec<f64>> {
    if approx.len() != exact.len() {
        return Err(Error::LengthMismatch {
            expected: exact.len(),
            actual: approx.len(),
        });
    }
    approx
        .iter()
        .zip(exact)
        .map(|(a, e)| {
            if a.len() == e.len() {
                measure_recall(a, e)
            } else {
                // Only possible with padding; count what was returned.
                let idx: std::collections::HashSet<u32> = a.indices.iter().copied().collect();
                Ok(e.indices.iter().filter(|i| idx.contains(i)).count() as f64 / e.len() as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_gaussian;

    fn bits(r: &[TopKResult]) -> Vec<(Vec<u32>, Vec<u32>)> {
        r.iter()
            .map(|t| (t.values.iter().map(|v| v.to_bits()).collect(), t.indices.clone()))
            .collect()
    }

    #[test]
    fn self_match_ranks_first() {
        let mut data = vec![0.0f32; 16 * 16];
        for i in 0..16 {
            data[i * 16 + i] = 1.0;
        }
        let db = VectorDataset::new(16, 16, data).unwrap();
        let q = VectorDataset::new(1, 16, db.row(5).to_vec()).unwrap();
        let req = MipsRequest::with_config(&db, &q, 4, 1, 1, 4).unwrap();
        let r = mips_unfused(&req, Exec::Sequential).unwrap();
        assert_eq!(r[0].indices, [5]);
        assert_eq!(bits(&mips_fused(&req, 8, Exec::Sequential).unwrap()), bits(&r));
    }

    #[test]
    fn fused_matches_unfused_with_padding() {
        let db = synth_gaussian(37, 8, 1);
        let q = synth_gaussian(5, 8, 2);
        let req = MipsRequest::with_config(&db, &q, 8, 2, 6, 4).unwrap();
        assert_eq!(req.params().n(), 40);
        let un = mips_unfused(&req, Exec::Sequential).unwrap();
        for bc in [1, 2, 4, 8, 16, 40, 48] {
            let (f, stats) = mips_fused_with_stats(&req, bc, Exec::Parallel).unwrap();
            assert_eq!(bits(&f), bits(&un), "block_cols={bc}");
            assert_eq!(stats.score_buffer_elems, 5 * bc.min(40));
        }
        for r in &un {
            assert!(r.indices.iter().all(|&i| i < 37));
            assert_eq!(r.len(), 6);
        }
    }

    #[test]
    fn bad_block_size() {
        let db = synth_gaussian(32, 4, 1);
        let q = synth_gaussian(1, 4, 2);
        let req = MipsRequest::with_config(&db, &q, 8, 1, 2, 8).unwrap();
        assert!(matches!(
            mips_fused(&req, 12, Exec::Sequential),
            Err(Error::BlockSize { block_cols: 12, num_buckets: 8 })
        ));
        assert!(mips_fused(&req, 0, Exec::Sequential).is_err());
    }

    #[test]
    fn shape_errors() {
        let db = synth_gaussian(32, 4, 1);
        let q = synth_gaussian(1, 3, 2);
        assert!(matches!(
            MipsRequest::with_config(&db, &q, 8, 1, 2, 8),
            Err(Error::ShapeMismatch(_))
        ));
        let q = synth_gaussian(1, 4, 2);
        let p = AlgoParams::with_lane_multiple(40, 8, 1, 2, 8).unwrap();
        assert!(MipsRequest::new(&db, &q, p).is_err());
    }

    #[test]
    fn exact_when_buckets_are_tiny() {
        let db = synth_gaussian(64, 8, 3);
        let q = synth_gaussian(3, 8, 4);
        let req = MipsRequest::with_config(&db, &q, 32, 2, 10, 32).unwrap();
        let approx = mips_fused(&req, 32, Exec::Sequential).unwrap();
        let exact = exact_mips(&db, &q, 10, Exec::Sequential).unwrap();
        assert_eq!(bits(&approx), bits(&exact));
        assert!(per_query_recall(&approx, &exact).unwrap().iter().all(|&r| r == 1.0));
    }
}
