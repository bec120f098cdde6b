//! Deterministic floating point reductions.
//!
//! [`pairwise_sum`] splits at fixed midpoints, so the association order only
//! depends on the slice length. The two halves of large slices run on the
//! rayon pool, but the tree shape (and therefore every rounding step) is the
//! same for any thread count.

const BLOCK: usize = 32;
const PARALLEL_CUTOFF: usize = 1 << 14;

pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = split_point(values.len());
    let (lo, hi) = values.split_at(mid);
    if values.len() >= PARALLEL_CUTOFF {
        let (a, b) = rayon::join(|| pairwise_sum(lo), || pairwise_sum(hi));
        a + b
    } else {
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

// Midpoint rounded to a multiple of BLOCK so leaves stay full.
fn split_point(len: usize) -> usize {
    let half = len / 2;
    let rounded = half.div_ceil(BLOCK) * BLOCK;
    if rounded >= len {
        half
    } else {
        rounded
    }
}

pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Sum that is invariant to the order of `values`, bit for bit.
///
/// Terms are sorted with `total_cmp` before accumulating. Meant for short
/// lists (expert mixtures, softmax denominators).
pub fn order_invariant_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let mut acc = 0.0;
    for &v in values.iter() {
        acc += v;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_sums_are_exact() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
        let ones = vec![1.0; 100_003];
        assert_eq!(pairwise_sum(&ones), 100_003.0);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let values: Vec<f64> = (0..200_000).map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 1e-9 * i as f64).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let eight = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| pairwise_sum(&values));
        let b = eight.install(|| pairwise_sum(&values));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    proptest! {
        #[test]
        fn order_invariant_sum_ignores_permutation(mut v in proptest::collection::vec(-1e6f64..1e6, 1..12), rot in 0usize..12) {
            let mut w = v.clone();
            let r = rot % w.len();
            w.rotate_left(r);
            w.reverse();
            prop_assert_eq!(order_invariant_sum(&mut v).to_bits(), order_invariant_sum(&mut w).to_bits());
        }

        #[test]
        fn pairwise_close_to_naive(v in proptest::collection::vec(-1e3f64..1e3, 0..500)) {
            let naive: f64 = v.iter().sum();
            prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-9 * (1.0 + v.iter().map(|x| x.abs()).sum::<f64>()));
        }
    }
}
