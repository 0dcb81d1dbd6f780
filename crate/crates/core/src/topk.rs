//! The two-stage algorithm: strided bucketing, per-bucket top-`K'` tracking,
//! and the final exact sort over the surviving candidates.
//!
//! State for all buckets is stored bucket-minor: slot `k` of bucket `b` lives
//! at `k * B + b`, so a contiguous run of `B` inputs updates one column of
//! every row and the update loops vectorize along the bucket axis.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::params::AlgoParams;

/// Index stored in slots that never received an input (only possible when a
/// bucket holds fewer than `K'` elements).
pub const EMPTY_SLOT: u32 = u32::MAX;

/// Largest supported array length; indices are 32-bit.
pub const MAX_LEN: u64 = u32::MAX as u64;

/// Parallel value/index lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TopKResult {
    pub values: Vec<f32>,
    pub indices: Vec<u32>,
}

impl TopKResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entries whose slot was filled from the input.
    pub fn filled(&self) -> impl Iterator<Item = (f32, u32)> + '_ {
        self.values
            .iter()
            .copied()
            .zip(self.indices.iter().copied())
            .filter(|&(_, i)| i != EMPTY_SLOT)
    }
}

/// Bucket that element `i` belongs to.
pub fn partition_index(i: u64, params: &AlgoParams) -> u64 {
    i % params.num_buckets()
}

/// Receives the primitive operations performed by [`BucketState::update_counted`].
pub trait OpCounter {
    fn compare(&mut self);
    fn select(&mut self, count: u64);
}

impl OpCounter for () {
    #[inline(always)]
    fn compare(&mut self) {}
    #[inline(always)]
    fn select(&mut self, _count: u64) {}
}

/// Tally of compares and selects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCount {
    pub compares: u64,
    pub selects: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.compares + self.selects
    }
}

impl OpCounter for OpCount {
    fn compare(&mut self) {
        self.compares += 1;
    }
    fn select(&mut self, count: u64) {
        self.selects += count;
    }
}

/// Top-`K'` state of a single bucket, values in non-increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketState {
    values: Vec<f32>,
    indices: Vec<u32>,
}

impl BucketState {
    pub fn new(local_k: usize) -> Self {
        assert!(local_k >= 1, "local_k must be positive");
        BucketState {
            values: vec![f32::NEG_INFINITY; local_k],
            indices: vec![EMPTY_SLOT; local_k],
        }
    }

    /// Builds a state from explicit lists. `values` must be non-increasing.
    pub fn from_parts(values: Vec<f32>, indices: Vec<u32>) -> Self {
        assert_eq!(values.len(), indices.len());
        assert!(!values.is_empty());
        debug_assert!(values.windows(2).all(|w| w[0] >= w[1]));
        BucketState { values, indices }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// Offers one element to the bucket.
    #[inline]
    pub fn update(&mut self, value: f32, index: u32) {
        self.update_counted(value, index, &mut ());
    }

    /// [`update`](Self::update), reporting every compare and select to
    /// `ops`. Counts are independent of the data: the body is written as
    /// unconditional selects.
    #[inline]
    pub fn update_counted<C: OpCounter>(&mut self, value: f32, index: u32, ops: &mut C) {
        let last = self.values.len() - 1;
        let take = value >= self.values[last];
        ops.compare();
        self.values[last] = if take { value } else { self.values[last] };
        self.indices[last] = if take { index } else { self.indices[last] };
        ops.select(2);
        for k in (1..=last).rev() {
            // The incoming value stands in for values[k]: if it beats
            // values[k-1] it must already have bubbled up to slot k.
            let swap = value > self.values[k - 1];
            ops.compare();
            let (lo, hi) = (self.values[k], self.values[k - 1]);
            self.values[k] = if swap { hi } else { lo };
            self.values[k - 1] = if swap { lo } else { hi };
            let (lo, hi) = (self.indices[k], self.indices[k - 1]);
            self.indices[k] = if swap { hi } else { lo };
            self.indices[k - 1] = if swap { lo } else { hi };
            ops.select(4);
        }
    }
}

/// Applies one update step to a contiguous run of buckets.
///
/// `values`/`indices` start at the first bucket of the run; row `k` of the run
/// is `[k * stride, k * stride + xs.len())`. `xs[j]` has global index
/// `base + j`.
#[inline]
fn update_run(
    values: &mut [f32],
    indices: &mut [u32],
    stride: usize,
    local_k: usize,
    xs: &[f32],
    base: u32,
) {
    let w = xs.len();
    let last = local_k - 1;
    {
        let v = &mut values[last * stride..last * stride + w];
        let ix = &mut indices[last * stride..last * stride + w];
        for (((v, ix), &x), off) in v.iter_mut().zip(ix.iter_mut()).zip(xs).zip(0u32..) {
            let take = x >= *v;
            *v = if take { x } else { *v };
            *ix = if take { base.wrapping_add(off) } else { *ix };
        }
    }
    for k in (1..local_k).rev() {
        let (vu, vl) = values.split_at_mut(k * stride);
        let (iu, il) = indices.split_at_mut(k * stride);
        let vu = &mut vu[(k - 1) * stride..(k - 1) * stride + w];
        let iu = &mut iu[(k - 1) * stride..(k - 1) * stride + w];
        let vl = &mut vl[..w];
        let il = &mut il[..w];
        for ((((up, lo), iup), ilo), &x) in vu
            .iter_mut()
            .zip(vl.iter_mut())
            .zip(iu.iter_mut())
            .zip(il.iter_mut())
            .zip(xs)
        {
            let swap = x > *up;
            let (a, b) = (*lo, *up);
            *lo = if swap { b } else { a };
            *up = if swap { a } else { b };
            let (a, b) = (*ilo, *iup);
            *ilo = if swap { b } else { a };
            *iup = if swap { a } else { b };
        }
    }
}

/// Stage-1 state of every bucket, fed in stream order.
///
/// Elements may arrive in runs of any length; the element with global index
/// `i` always updates bucket `i mod B`.
#[derive(Clone, Debug)]
pub struct Stage1State {
    num_buckets: usize,
    local_k: usize,
    values: Vec<f32>,
    indices: Vec<u32>,
    next_index: u64,
}

impl Stage1State {
    pub fn new(num_buckets: usize, local_k: usize) -> Self {
        assert!(num_buckets >= 1 && local_k >= 1);
        Stage1State {
            num_buckets,
            local_k,
            values: vec![f32::NEG_INFINITY; num_buckets * local_k],
            indices: vec![EMPTY_SLOT; num_buckets * local_k],
            next_index: 0,
        }
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    pub fn local_k(&self) -> usize {
        self.local_k
    }

    /// Global index of the next element [`feed`](Self::feed) expects.
    pub fn position(&self) -> u64 {
        self.next_index
    }

    /// Feeds the next elements of the stream.
    ///
    /// Panics if the stream would exceed [`MAX_LEN`] elements. NaN inputs are
    /// not checked here.
    pub fn feed(&mut self, mut xs: &[f32]) {
        assert!(
            self.next_index + xs.len() as u64 <= MAX_LEN,
            "stream exceeds 32-bit index range"
        );
        while !xs.is_empty() {
            let bucket = (self.next_index % self.num_buckets as u64) as usize;
            let run = xs.len().min(self.num_buckets - bucket);
            self.update_buckets(bucket, &xs[..run], self.next_index as u32);
            self.next_index += run as u64;
            xs = &xs[run..];
        }
    }

    /// Updates buckets `first_bucket..first_bucket + xs.len()` with `xs`,
    /// where `xs[j]` has global index `base + j`. Does not move the stream
    /// position.
    pub(crate) fn update_buckets(&mut self, first_bucket: usize, xs: &[f32], base: u32) {
        debug_assert!(first_bucket + xs.len() <= self.num_buckets);
        update_run(
            &mut self.values[first_bucket..],
            &mut self.indices[first_bucket..],
            self.num_buckets,
            self.local_k,
            xs,
            base,
        );
    }

    /// Bucket `b`'s current top-`K'` as (values, indices), best first.
    pub fn bucket(&self, b: usize) -> (Vec<f32>, Vec<u32>) {
        let vals = (0..self.local_k)
            .map(|k| self.values[k * self.num_buckets + b])
            .collect();
        let idx = (0..self.local_k)
            .map(|k| self.indices[k * self.num_buckets + b])
            .collect();
        (vals, idx)
    }

    /// The `B * K'` candidates in bucket-minor layout.
    pub fn into_result(self) -> TopKResult {
        TopKResult {
            values: self.values,
            indices: self.indices,
        }
    }
}

pub(crate) fn check_finite_or_inf(input: &[f32]) -> Result<()> {
    match input.iter().position(|x| x.is_nan()) {
        Some(index) => Err(Error::NanInput { index }),
        None => Ok(()),
    }
}

fn check_input(input: &[f32], params: &AlgoParams) -> Result<()> {
    if params.n() > MAX_LEN {
        return Err(Error::InvalidParams(format!(
            "n={} exceeds the 32-bit index range",
            params.n()
        )));
    }
    if input.len() as u64 != params.n() {
        return Err(Error::LengthMismatch {
            expected: params.n() as usize,
            actual: input.len(),
        });
    }
    check_finite_or_inf(input)
}

/// Buckets per tile so that a tile's state stays around 16 KiB.
fn tile_width(num_buckets: usize, local_k: usize) -> usize {
    let w = (2048 / local_k).max(16);
    let w = w - w % 16;
    w.min(num_buckets)
}

/// Stage 1 over one row without validation. Buckets are processed in tiles,
/// each tile walking the whole row, so per-bucket order is stream order.
fn stage1_row(input: &[f32], num_buckets: usize, local_k: usize, exec: Exec) -> TopKResult {
    let chunks = input.len() / num_buckets;
    let tw = tile_width(num_buckets, local_k);
    let num_tiles = num_buckets.div_ceil(tw);

    let tiles = exec.map(num_tiles, |t| {
        let start = t * tw;
        let w = tw.min(num_buckets - start);
        let mut vals = vec![f32::NEG_INFINITY; local_k * w];
        let mut idx = vec![EMPTY_SLOT; local_k * w];
        for j in 0..chunks {
            let off = j * num_buckets + start;
            update_run(&mut vals, &mut idx, w, local_k, &input[off..off + w], off as u32);
        }
        (vals, idx)
    });

    let mut out = TopKResult {
        values: vec![0.0; num_buckets * local_k],
        indices: vec![0; num_buckets * local_k],
    };
    for (t, (vals, idx)) in tiles.into_iter().enumerate() {
        let start = t * tw;
        let w = vals.len() / local_k;
        for k in 0..local_k {
            let dst = k * num_buckets + start;
            out.values[dst..dst + w].copy_from_slice(&vals[k * w..(k + 1) * w]);
            out.indices[dst..dst + w].copy_from_slice(&idx[k * w..(k + 1) * w]);
        }
    }
    out
}

/// Stage 1: the top `K'` of every bucket.
///
/// Position `k * B + b` holds the `(k+1)`-th best element of bucket `b`.
/// Slots of buckets smaller than `K'` keep value `-inf` and index
/// [`EMPTY_SLOT`].
pub fn stage1_partial_reduce(input: &[f32], params: &AlgoParams) -> Result<TopKResult> {
    stage1_partial_reduce_with(input, params, Exec::default())
}

pub fn stage1_partial_reduce_with(
    input: &[f32],
    params: &AlgoParams,
    exec: Exec,
) -> Result<TopKResult> {
    check_input(input, params)?;
    Ok(stage1_row(
        input,
        params.num_buckets() as usize,
        params.local_k() as usize,
        exec,
    ))
}

fn by_value_desc(a: &(f32, u32), b: &(f32, u32)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

fn sorted_prefix(mut pairs: Vec<(f32, u32)>, k: usize) -> TopKResult {
    pairs.truncate(k);
    pairs.sort_unstable_by(by_value_desc);
    let (values, indices) = pairs.into_iter().unzip();
    TopKResult { values, indices }
}

/// Stage 2: exact top-`k` of the filled stage-1 candidates, best first.
/// Equal values are ordered by index.
///
/// Selects the `k` best with a linear-time partition and sorts only those.
pub fn stage2_top_k(candidates: &TopKResult, k: usize) -> TopKResult {
    let mut pairs: Vec<(f32, u32)> = candidates.filled().collect();
    if k > 0 && k < pairs.len() {
        pairs.select_nth_unstable_by(k - 1, by_value_desc);
    }
    sorted_prefix(pairs, k)
}

/// Both stages: the exact top-`K` of the stage-1 candidates, values
/// non-increasing.
pub fn approx_top_k(input: &[f32], params: &AlgoParams) -> Result<TopKResult> {
    approx_top_k_with(input, params, Exec::default())
}

pub fn approx_top_k_with(input: &[f32], params: &AlgoParams, exec: Exec) -> Result<TopKResult> {
    let stage1 = stage1_partial_reduce_with(input, params, exec)?;
    Ok(stage2_top_k(&stage1, params.global_k() as usize))
}

fn check_batch(rows: &[f32], params: &AlgoParams) -> Result<usize> {
    let n = params.n() as usize;
    if !rows.len().is_multiple_of(n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: rows.len(),
        });
    }
    if params.n() > MAX_LEN {
        return Err(Error::InvalidParams(format!(
            "n={} exceeds the 32-bit index range",
            params.n()
        )));
    }
    check_finite_or_inf(rows)?;
    Ok(rows.len() / n)
}

/// Runs [`stage1_partial_reduce`] on every row of a row-major `[batch, N]`
/// matrix. Rows are distributed over threads; each row runs sequentially.
pub fn stage1_partial_reduce_batch(
    rows: &[f32],
    params: &AlgoParams,
    exec: Exec,
) -> Result<Vec<TopKResult>> {
    let batch = check_batch(rows, params)?;
    let (n, b, lk) = (
        params.n() as usize,
        params.num_buckets() as usize,
        params.local_k() as usize,
    );
    Ok(exec.map(batch, |r| {
        stage1_row(&rows[r * n..(r + 1) * n], b, lk, Exec::Sequential)
    }))
}

/// Runs [`approx_top_k`] on every row of a row-major `[batch, N]` matrix.
pub fn approx_top_k_batch(
    rows: &[f32],
    params: &AlgoParams,
    exec: Exec,
) -> Result<Vec<TopKResult>> {
    let batch = check_batch(rows, params)?;
    let (n, b, lk, k) = (
        params.n() as usize,
        params.num_buckets() as usize,
        params.local_k() as usize,
        params.global_k() as usize,
    );
    Ok(exec.map(batch, |r| {
        let row = &rows[r * n..(r + 1) * n];
        stage2_top_k(&stage1_row(row, b, lk, Exec::Sequential), k)
    }))
}

/// Exact top-`k` by full sort, ties broken by smaller index.
pub fn exact_top_k(input: &[f32], k: usize) -> Result<TopKResult> {
    if k == 0 || k > input.len() {
        return Err(Error::Domain(format!(
            "k={k} must be in 1..={}",
            input.len()
        )));
    }
    if input.len() as u64 > MAX_LEN {
        return Err(Error::InvalidParams("input exceeds the 32-bit index range".into()));
    }
    check_finite_or_inf(input)?;
    let mut pairs: Vec<(f32, u32)> = input.iter().copied().zip(0u32..).collect();
    pairs.sort_unstable_by(by_value_desc);
    Ok(sorted_prefix(pairs, k))
}

/// Fraction of `exact`'s indices that also appear in `approx`.
pub fn measure_recall(approx: &TopKResult, exact: &TopKResult) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(Error::LengthMismatch {
            expected: exact.len(),
            actual: approx.len(),
        });
    }
    if exact.is_empty() {
        return Err(Error::Domain("recall of an empty result".into()));
    }
    let truth: HashSet<u32> = exact.indices.iter().copied().collect();
    let hits = approx
        .indices
        .iter()
        .collect::<HashSet<_>>()
        .into_iter()
        .filter(|i| truth.contains(i))
        .count();
    Ok(hits as f64 / exact.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lane1(n: u64, b: u64, kp: u64, k: u64) -> AlgoParams {
        AlgoParams::with_lane_multiple(n, b, kp, k, 1).unwrap()
    }

    /// Per-bucket oracle: sort each bucket's (value, index) pairs by value
    /// descending, stable in stream order for ties that the insertion rule
    /// lets the later element win.
    fn bucket_oracle(input: &[f32], b: usize, kp: usize) -> Vec<Vec<(f32, u32)>> {
        (0..b)
            .map(|bucket| {
                let mut items: Vec<(f32, u32)> = input
                    .iter()
                    .copied()
                    .zip(0u32..)
                    .filter(|&(_, i)| i as usize % b == bucket)
                    .collect();
                items.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
                items.truncate(kp);
                items
            })
            .collect()
    }

    #[test]
    fn partition_examples() {
        let p = lane1(8, 4, 1, 1);
        assert_eq!(partition_index(5, &p), 1);
        assert_eq!(partition_index(0, &p), 0);
        let p = lane1(20, 4, 1, 3);
        let bucket0: Vec<u64> = (0..20).filter(|&i| partition_index(i, &p) == 0).collect();
        assert_eq!(bucket0, [0, 4, 8, 12, 16]);
    }

    #[test]
    fn update_middle_insertion() {
        let mut s = BucketState::from_parts(vec![9.0, 7.0, 4.0], vec![10, 11, 12]);
        s.update(8.0, 13);
        assert_eq!(s.values(), [9.0, 8.0, 7.0]);
        assert_eq!(s.indices(), [10, 13, 11]);
    }

    #[test]
    fn update_below_minimum_is_noop() {
        let mut s = BucketState::from_parts(vec![9.0, 7.0, 4.0], vec![10, 11, 12]);
        let before = s.clone();
        s.update(3.0, 13);
        assert_eq!(s, before);
    }

    #[test]
    fn update_stream_keeps_top_two() {
        let mut s = BucketState::new(2);
        for (i, x) in [3.0, 1.0, 4.0, 1.0, 5.0].into_iter().enumerate() {
            s.update(x, i as u32);
        }
        assert_eq!(s.values(), [5.0, 4.0]);
        assert_eq!(s.indices(), [4, 2]);
    }

    #[test]
    fn equal_to_minimum_replaces_it() {
        // insertion uses >=, the bubble pass uses >
        let mut s = BucketState::from_parts(vec![5.0, 3.0], vec![0, 1]);
        s.update(3.0, 2);
        assert_eq!(s.indices(), [0, 2]);
        s.update(5.0, 3);
        assert_eq!(s.values(), [5.0, 5.0]);
        assert_eq!(s.indices(), [0, 3]);
    }

    #[test]
    fn op_count_is_five_k_minus_two() {
        for kp in 1..=16u64 {
            let mut s = BucketState::new(kp as usize);
            for (i, x) in [2.0f32, -1.0, 7.0, 7.0, 0.5].into_iter().enumerate() {
                let mut ops = OpCount::default();
                s.update_counted(x, i as u32, &mut ops);
                assert_eq!(ops.compares, kp);
                assert_eq!(ops.selects, 2 + 4 * (kp - 1));
                assert_eq!(ops.total(), 5 * kp - 2);
            }
        }
    }

    #[test]
    fn stage1_small_example() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let r = stage1_partial_reduce(&a, &lane1(8, 2, 1, 1)).unwrap();
        assert_eq!(r.values, [5.0, 9.0]);
        assert_eq!(r.indices, [4, 5]);
    }

    #[test]
    fn stage1_identity_when_one_element_per_bucket() {
        let a: Vec<f32> = (0..256).map(|i| ((i * 37) % 256) as f32).collect();
        let r = stage1_partial_reduce(&a, &AlgoParams::new(256, 256, 1, 10).unwrap()).unwrap();
        assert_eq!(r.values, a);
        assert_eq!(r.indices, (0..256).collect::<Vec<u32>>());
    }

    #[test]
    fn stage1_layout_is_bucket_minor() {
        let a: Vec<f32> = (0..24).map(|i| i as f32).collect();
        let r = stage1_partial_reduce(&a, &lane1(24, 4, 2, 1)).unwrap();
        // bucket b holds b, b+4, ..., b+20: best two are b+20, b+16
        assert_eq!(r.values, [20.0, 21.0, 22.0, 23.0, 16.0, 17.0, 18.0, 19.0]);
    }

    #[test]
    fn stage1_matches_oracle_many_tiles() {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut a: Vec<f32> = (0..4096).map(|i| i as f32).collect();
        a.shuffle(&mut rng);
        for &(b, kp) in &[(1024usize, 3usize), (128, 7), (2048, 1), (256, 16)] {
            let p = AlgoParams::new(4096, b as u64, kp as u64, 1).unwrap();
            for exec in [Exec::Sequential, Exec::Parallel] {
                let r = stage1_partial_reduce_with(&a, &p, exec).unwrap();
                let oracle = bucket_oracle(&a, b, kp);
                for (bucket, expect) in oracle.iter().enumerate() {
                    for (k, &(v, i)) in expect.iter().enumerate() {
                        assert_eq!(r.values[k * b + bucket], v);
                        assert_eq!(r.indices[k * b + bucket], i);
                    }
                }
            }
        }
    }

    #[test]
    fn small_buckets_leave_empty_slots() {
        let a = [5.0, 1.0, 7.0, 3.0, 9.0, 2.0, 8.0, 4.0];
        let r = stage1_partial_reduce(&a, &lane1(8, 4, 3, 3)).unwrap();
        assert_eq!(r.filled().count(), 8);
        assert_eq!(r.indices[8..], [EMPTY_SLOT; 4]);
        let top = approx_top_k(&a, &lane1(8, 4, 3, 3)).unwrap();
        assert_eq!(top.values, [9.0, 8.0, 7.0]);
    }

    #[test]
    fn approx_exact_when_buckets_fit() {
        let a = [5.0, 1.0, 7.0, 3.0, 9.0, 2.0, 8.0, 4.0];
        let r = approx_top_k(&a, &lane1(8, 4, 2, 3)).unwrap();
        assert_eq!(r.values, [9.0, 8.0, 7.0]);
        assert_eq!(r.indices, [4, 6, 2]);
    }

    #[test]
    fn exact_examples() {
        let r = exact_top_k(&[3.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(r.values, [3.0, 2.0]);
        assert_eq!(r.indices, [0, 2]);
        let r = exact_top_k(&[3.0, 1.0, 2.0], 3).unwrap();
        assert_eq!(r.values, [3.0, 2.0, 1.0]);
        let r = exact_top_k(&[7.0, 7.0, 5.0], 1).unwrap();
        assert_eq!(r.indices, [0]);
        assert!(exact_top_k(&[1.0], 0).is_err());
        assert!(exact_top_k(&[1.0], 2).is_err());
    }

    #[test]
    fn recall_examples() {
        let t = |idx: &[u32]| TopKResult {
            values: vec![0.0; idx.len()],
            indices: idx.to_vec(),
        };
        assert_eq!(measure_recall(&t(&[4, 6, 2]), &t(&[4, 6, 2])).unwrap(), 1.0);
        assert_eq!(measure_recall(&t(&[1, 3, 5]), &t(&[4, 6, 2])).unwrap(), 0.0);
        let r = measure_recall(&t(&[4, 6, 0]), &t(&[4, 6, 2])).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            measure_recall(&t(&[1]), &t(&[1, 2])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rejects_nan_and_wrong_length() {
        let p = lane1(4, 2, 1, 1);
        assert!(matches!(
            approx_top_k(&[1.0, f32::NAN, 0.0, 2.0], &p),
            Err(Error::NanInput { index: 1 })
        ));
        assert!(matches!(
            approx_top_k(&[1.0, 2.0], &p),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn streaming_feed_matches_batch() {
        let a: Vec<f32> = (0..600).map(|i| ((i * 7919) % 600) as f32).collect();
        let p = lane1(600, 40, 3, 50);
        let mut s = Stage1State::new(40, 3);
        for piece in a.chunks(17) {
            s.feed(piece);
        }
        assert_eq!(s.position(), 600);
        assert_eq!(s.into_result(), stage1_partial_reduce(&a, &p).unwrap());
    }

    #[test]
    fn batch_rows_are_independent() {
        let rows: Vec<f32> = (0..3 * 256).map(|i| ((i * 131) % 769) as f32).collect();
        let p = AlgoParams::new(256, 128, 2, 16).unwrap();
        let out = approx_top_k_batch(&rows, &p, Exec::default()).unwrap();
        assert_eq!(out.len(), 3);
        for (r, res) in out.iter().enumerate() {
            let single = approx_top_k(&rows[r * 256..(r + 1) * 256], &p).unwrap();
            assert_eq!(res, &single);
        }
    }
}
