#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

/// Expected recall by exhaustive enumeration: every `k`-subset of the `n`
/// positions is equally likely to hold the true top-`k`, and bucket `b`
/// (positions `i` with `i mod buckets == b`) keeps `min(count, kprime)` of
/// them. Exact rational result.
pub fn enumerated_recall(n: u32, buckets: u32, k: u32, kprime: u32) -> BigRational {
    assert!(n <= 20);
    let bucket_masks: Vec<u32> = (0..buckets)
        .map(|b| (0..n).filter(|i| i % buckets == b).map(|i| 1u32 << i).sum())
        .collect();
    let mut kept: u64 = 0;
    let mut subsets: u64 = 0;
    for s in 0u32..(1 << n) {
        if s.count_ones() != k {
            continue;
        }
        subsets += 1;
        kept += bucket_masks
            .iter()
            .map(|m| (s & m).count_ones().min(kprime) as u64)
            .sum::<u64>();
    }
    BigRational::new(BigInt::from(kept), BigInt::from(subsets * k as u64))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite rational")
}

/// Visits every permutation of `v` (Heap's algorithm, iterative).
pub fn for_each_permutation<T: Copy>(v: &mut [T], mut f: impl FnMut(&[T])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Valid `(buckets, k, kprime)` configurations for an array of `n` with lane
/// multiple 1: `buckets | n`, `kprime <= k <= n`, `buckets * kprime >= k`.
pub fn small_configs(n: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for b in (1..=n).filter(|b| n.is_multiple_of(*b)) {
        for k in 1..=n {
            for kp in 1..=k {
                if b * kp >= k {
                    out.push((b, k, kp));
                }
            }
        }
    }
    out
}
