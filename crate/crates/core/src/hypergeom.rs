//! Hypergeometric occupancy of one bucket: the number of the `K` true top
//! elements among the `n` elements a bucket draws from a population of `N`.

use rand::Rng;

use crate::error::{Error, Result};

/// Weights below this fraction of the mode's weight are dropped from tables.
const TAIL_CUTOFF: f64 = 1e-30;

/// `ln C(n, k)` via log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Parameters of `Hypergeometric(population, successes, draws)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hypergeometric {
    population: u64,
    successes: u64,
    draws: u64,
}

impl Hypergeometric {
    pub fn new(population: u64, successes: u64, draws: u64) -> Result<Self> {
        if population == 0 || successes > population || draws > population {
            return Err(Error::Domain(format!(
                "invalid hypergeometric parameters N={population}, K={successes}, n={draws}"
            )));
        }
        Ok(Hypergeometric {
            population,
            successes,
            draws,
        })
    }

    pub fn min_value(&self) -> u64 {
        (self.draws + self.successes).saturating_sub(self.population)
    }

    pub fn max_value(&self) -> u64 {
        self.successes.min(self.draws)
    }

    pub fn mean(&self) -> f64 {
        self.draws as f64 * self.successes as f64 / self.population as f64
    }

    /// `C(K, x) C(N-K, n-x) / C(N, n)` through log-gamma differences.
    pub fn pmf(&self, x: u64) -> f64 {
        if x < self.min_value() || x > self.max_value() {
            return 0.0;
        }
        let (pop, succ, n) = (self.population, self.successes, self.draws);
        (ln_choose(succ, x) + ln_choose(pop - succ, n - x) - ln_choose(pop, n)).exp()
    }

    fn mode(&self) -> u64 {
        let m = (self.draws as u128 + 1) * (self.successes as u128 + 1)
            / (self.population as u128 + 2);
        (m as u64).clamp(self.min_value(), self.max_value())
    }

    /// `p(x + 1) / p(x)`.
    fn ratio(&self, x: u64) -> f64 {
        let (pop, succ, n) = (
            self.population as f64,
            self.successes as f64,
            self.draws as f64,
        );
        let x = x as f64;
        (succ - x) * (n - x) / ((x + 1.0) * (pop - succ - n + x + 1.0))
    }

    /// Tabulates the pmf over the non-negligible part of the support.
    pub fn table(&self) -> PmfTable {
        let mode = self.mode();
        let mut up = vec![1.0f64];
        let mut x = mode;
        while x < self.max_value() {
            let next = up[up.len() - 1] * self.ratio(x);
            if next < TAIL_CUTOFF {
                break;
            }
            up.push(next);
            x += 1;
        }
        let mut down = Vec::new();
        let mut w = 1.0f64;
        let mut x = mode;
        while x > self.min_value() {
            w /= self.ratio(x - 1);
            if w < TAIL_CUTOFF {
                break;
            }
            down.push(w);
            x -= 1;
        }
        let lo = mode - down.len() as u64;
        down.reverse();
        down.extend(up);
        let total = neumaier_sum(down.iter().copied());
        let pmf: Vec<f64> = down.into_iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        PmfTable { lo, pmf, cdf }
    }
}

/// Normalized pmf over `lo..lo + len`, with its running sum for inverse-CDF
/// sampling.
#[derive(Clone, Debug)]
pub struct PmfTable {
    lo: u64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl PmfTable {
    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.lo + self.pmf.len() as u64 - 1
    }

    pub fn pmf(&self, x: u64) -> f64 {
        if x < self.lo {
            return 0.0;
        }
        self.pmf.get((x - self.lo) as usize).copied().unwrap_or(0.0)
    }

    /// `(x, p(x))` over the tabulated range.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        (self.lo..).zip(self.pmf.iter().copied())
    }

    /// Draws one value by inverting the CDF at a uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let pos = self.cdf.partition_point(|&c| c <= u);
        self.lo + pos.min(self.cdf.len() - 1) as u64
    }
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn pmf_matches_direct_binomials() {
        let h = Hypergeometric::new(20, 7, 12).unwrap();
        for x in 0..=7 {
            let direct = choose(7, x) * choose(13, 12 - x) / choose(20, 12);
            assert!((h.pmf(x) - direct).abs() < 1e-12, "x={x}");
            assert!((h.table().pmf(x) - direct).abs() < 1e-14, "x={x}");
        }
        assert_eq!(h.min_value(), 0);
        assert_eq!(h.pmf(8), 0.0);
    }

    #[test]
    fn support_lower_bound() {
        let h = Hypergeometric::new(10, 8, 5).unwrap();
        assert_eq!(h.min_value(), 3);
        let t = h.table();
        assert_eq!(t.lo(), 3);
        assert_eq!(t.hi(), 5);
        assert!((t.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn large_population_table_is_normalized_and_centered() {
        let h = Hypergeometric::new(1 << 32, 1 << 30, 1 << 25).unwrap();
        let t = h.table();
        let mean: f64 = t.iter().map(|(x, p)| x as f64 * p).sum();
        assert!((mean - h.mean()).abs() / h.mean() < 1e-12);
        assert!(t.iter().count() < 200_000);
    }

    #[test]
    fn degenerate_distributions() {
        let t = Hypergeometric::new(5, 0, 3).unwrap().table();
        assert_eq!((t.lo(), t.hi()), (0, 0));
        let t = Hypergeometric::new(5, 5, 3).unwrap().table();
        assert_eq!((t.lo(), t.hi()), (3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(t.sample(&mut rng), 3);
    }

    #[test]
    fn sampler_empirical_pmf_matches() {
        let h = Hypergeometric::new(30, 9, 10).unwrap();
        let t = h.table();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 400_000;
        let mut counts = [0u64; 11];
        for _ in 0..trials {
            counts[t.sample(&mut rng) as usize] += 1;
        }
        for (x, &c) in counts.iter().enumerate() {
            let p = h.pmf(x as u64);
            let freq = c as f64 / trials as f64;
            let sd = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((freq - p).abs() <= 5.0 * sd + 1e-9, "x={x} freq={freq} p={p}");
        }
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let s = neumaier_sum([1.0, 1e100, 1.0, -1e100]);
        assert_eq!(s, 2.0);
    }
}
