use crate::error::{Error, Result};

/// Bucket counts must be a multiple of this unless every bucket holds one
/// element. Matches a 128-lane vector unit.
pub const DEFAULT_LANE_MULTIPLE: u64 = 128;

/// Parameters of one run of the two-stage algorithm.
///
/// `n` elements are split into `num_buckets` strided buckets, each keeps its
/// top `local_k`, and the final sort returns `global_k` results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AlgoParams {
    n: u64,
    num_buckets: u64,
    local_k: u64,
    global_k: u64,
    lane_multiple: u64,
}

impl AlgoParams {
    pub fn new(n: u64, num_buckets: u64, local_k: u64, global_k: u64) -> Result<Self> {
        Self::with_lane_multiple(n, num_buckets, local_k, global_k, DEFAULT_LANE_MULTIPLE)
    }

    pub fn with_lane_multiple(
        n: u64,
        num_buckets: u64,
        local_k: u64,
        global_k: u64,
        lane_multiple: u64,
    ) -> Result<Self> {
        let p = AlgoParams {
            n,
            num_buckets,
            local_k,
            global_k,
            lane_multiple,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n == 0 || self.num_buckets == 0 || self.local_k == 0 || self.global_k == 0 {
            return bad(format!(
                "n, num_buckets, local_k and global_k must be positive (got {self:?})"
            ));
        }
        if self.lane_multiple == 0 {
            return bad("lane_multiple must be positive".into());
        }
        if self.global_k > self.n {
            return bad(format!("global_k={} exceeds n={}", self.global_k, self.n));
        }
        if !self.n.is_multiple_of(self.num_buckets) {
            return bad(format!(
                "num_buckets={} does not divide n={}",
                self.num_buckets, self.n
            ));
        }
        if self.num_buckets.saturating_mul(self.local_k) < self.global_k {
            return bad(format!(
                "num_buckets*local_k={} is smaller than global_k={}",
                self.num_buckets.saturating_mul(self.local_k),
                self.global_k
            ));
        }
        if !self.num_buckets.is_multiple_of(self.lane_multiple) && self.num_buckets != self.n {
            return bad(format!(
                "num_buckets={} is not a multiple of lane_multiple={}",
                self.num_buckets, self.lane_multiple
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn num_buckets(&self) -> u64 {
        self.num_buckets
    }

    pub fn local_k(&self) -> u64 {
        self.local_k
    }

    pub fn global_k(&self) -> u64 {
        self.global_k
    }

    pub fn lane_multiple(&self) -> u64 {
        self.lane_multiple
    }

    /// Elements per bucket, `N / B`.
    pub fn bucket_size(&self) -> u64 {
        self.n / self.num_buckets
    }

    /// Stage-1 output size, `B * K'`.
    pub fn num_candidates(&self) -> u64 {
        self.num_buckets * self.local_k
    }

    /// Same parameters with a different top-k size.
    pub fn with_global_k(&self, global_k: u64) -> Result<Self> {
        Self::with_lane_multiple(
            self.n,
            self.num_buckets,
            self.local_k,
            global_k,
            self.lane_multiple,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_headline_configuration() {
        let p = AlgoParams::new(262_144, 512, 4, 1024).unwrap();
        assert_eq!(p.bucket_size(), 512);
        assert_eq!(p.num_candidates(), 2048);
    }

    #[test]
    fn rejects_each_invariant() {
        assert!(AlgoParams::new(0, 1, 1, 1).is_err());
        assert!(AlgoParams::new(256, 0, 1, 1).is_err());
        assert!(AlgoParams::new(256, 128, 0, 1).is_err());
        assert!(AlgoParams::new(256, 128, 1, 0).is_err());
        // 100 does not divide 256
        assert!(AlgoParams::with_lane_multiple(256, 100, 1, 1, 1).is_err());
        // too few candidates
        assert!(AlgoParams::new(1024, 128, 1, 129).is_err());
        // lane alignment
        assert!(AlgoParams::new(512, 64, 1, 1).is_err());
        assert!(AlgoParams::with_lane_multiple(512, 64, 1, 1, 64).is_ok());
        // k > n
        assert!(AlgoParams::with_lane_multiple(8, 8, 2, 9, 1).is_err());
    }

    #[test]
    fn one_element_buckets_skip_lane_rule() {
        assert!(AlgoParams::new(8, 8, 1, 3).is_ok());
    }
}
