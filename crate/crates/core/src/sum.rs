//! Fixed-order reductions.
//!
//! Every reduction in the crate goes through these helpers so results do not
//! depend on the rayon thread count.

use rayon::prelude::*;

const LEAF: usize = 64;

/// Pairwise (cascade) summation in a fixed tree order.
pub fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise(&values[..mid]) + pairwise(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n`.
pub fn pairwise_map(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &dyn Fn(usize) -> f64) -> f64 {
        if hi - lo <= LEAF {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, &f)
}

/// Sums `f` over `blocks` contiguous chunks of `values`: each chunk is reduced
/// independently (in parallel), then the partial sums are combined pairwise.
pub fn blocked<F>(values: &[f64], block: usize, f: F) -> f64
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    let partial: Vec<f64> = values
        .par_chunks(block)
        .enumerate()
        .map(|(k, chunk)| f(k, chunk))
        .collect();
    pairwise(&partial)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_small_input() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(pairwise(&v), 45.0);
        assert_eq!(pairwise_map(10, |i| i as f64), 45.0);
    }

    #[test]
    fn blocked_is_thread_count_independent() {
        let v: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = blocked(&v, 97, |_, c| pairwise(c));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| blocked(&v, 97, |_, c| pairwise(c)));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
