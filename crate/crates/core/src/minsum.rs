//! Min-sum (tropical) convolution: `c[i] = min_j a[j] + b[i - j]`.
//!
//! Entries are finite or `+∞`; `-∞` and NaN are not allowed.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Kernel selector for callers that want to swap implementations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConvKernel {
    Naive,
    #[default]
    Fast,
}

/// Below this many pairs the quadratic loop beats the heap expansion, so
/// the fast kernel delegates to it.
pub const SMALL_PRODUCT: usize = 1024;

impl ConvKernel {
    pub fn convolve(self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match self {
            ConvKernel::Naive => minsum_naive(a, b),
            ConvKernel::Fast if a.len() * b.len() <= SMALL_PRODUCT => minsum_naive(a, b),
            ConvKernel::Fast => minsum_fast(a, b),
        }
    }
}

/// Quadratic reference kernel.
pub fn minsum_naive(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut c = vec![f64::INFINITY; a.len() + b.len() - 1];
    for (j, &aj) in a.iter().enumerate() {
        if aj == f64::INFINITY {
            continue;
        }
        for (l, &bl) in b.iter().enumerate() {
            let v = aj + bl;
            if v < c[j + l] {
                c[j + l] = v;
            }
        }
    }
    c
}

/// Sorted-expansion kernel with the default candidate budget.
pub fn minsum_fast(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len();
    let log = usize::BITS - n.leading_zeros();
    minsum_fast_with_budget(a, b, 16 * n * (log as usize + 1))
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate(f64, u32, u32);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

/// Both inputs are sorted and index pairs are expanded in nondecreasing
/// sum order; each output index is settled by the first pair that reaches
/// it. Falls back to [`minsum_naive`] once more than `budget` candidates
/// have been popped.
pub fn minsum_fast_with_budget(a: &[f64], b: &[f64], budget: usize) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let len = a.len() + b.len() - 1;
    let sorted_finite = |v: &[f64]| {
        let mut idx: Vec<u32> = (0..v.len() as u32).filter(|&i| v[i as usize] < f64::INFINITY).collect();
        idx.sort_unstable_by(|&x, &y| v[x as usize].total_cmp(&v[y as usize]).then(x.cmp(&y)));
        idx
    };
    let ia = sorted_finite(a);
    let ib = sorted_finite(b);
    let mut c = vec![f64::INFINITY; len];
    if ia.is_empty() || ib.is_empty() {
        return c;
    }

    let reachable = reachable_count(b, &ia, len);
    let mut settled = vec![false; len];
    let mut remaining = reachable;
    let mut heap = BinaryHeap::with_capacity(2 * (ia.len() + ib.len()));
    let sum = |p: u32, q: u32| a[ia[p as usize] as usize] + b[ib[q as usize] as usize];
    heap.push(Reverse(Candidate(sum(0, 0), 0, 0)));
    let mut pops = 0usize;
    while let Some(Reverse(Candidate(v, p, q))) = heap.pop() {
        pops += 1;
        if pops > budget {
            return minsum_naive(a, b);
        }
        let out = (ia[p as usize] + ib[q as usize]) as usize;
        if !settled[out] {
            settled[out] = true;
            c[out] = v;
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        if (q as usize) + 1 < ib.len() {
            heap.push(Reverse(Candidate(sum(p, q + 1), p, q + 1)));
        }
        if q == 0 && (p as usize) + 1 < ia.len() {
            heap.push(Reverse(Candidate(sum(p + 1, 0), p + 1, 0)));
        }
    }
    c
}

/// Number of output indices reachable by a pair of finite entries
/// (size of the sumset of the finite supports).
fn reachable_count(b: &[f64], ia: &[u32], len: usize) -> usize {
    const W: usize = 64;
    let words = len.div_ceil(W);
    let mut bbits = vec![0u64; b.len().div_ceil(W)];
    for (i, &v) in b.iter().enumerate() {
        if v < f64::INFINITY {
            bbits[i / W] |= 1 << (i % W);
        }
    }
    let mut acc = vec![0u64; words + 1];
    for &shift in ia {
        let (ws, bs) = (shift as usize / W, shift as usize % W);
        for (i, &word) in bbits.iter().enumerate() {
            acc[i + ws] |= word << bs;
            if bs != 0 {
                acc[i + ws + 1] |= word >> (W - bs);
            }
        }
    }
    acc.iter().map(|w| w.count_ones() as usize).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn singletons() {
        assert_eq!(minsum_naive(&[0.0], &[0.0]), vec![0.0]);
        assert_eq!(minsum_fast(&[0.0], &[0.0]), vec![0.0]);
    }

    #[test]
    fn small_brute_force_value() {
        // (0,0)->0, (0,1)|(1,0) -> min(2,1)=1, (1,1) -> 3
        assert_eq!(minsum_naive(&[0.0, 1.0], &[0.0, 2.0]), vec![0.0, 1.0, 3.0]);
        assert_eq!(minsum_fast(&[0.0, 1.0], &[0.0, 2.0]), vec![0.0, 1.0, 3.0]);
    }

    #[test]
    fn identity_element_pads_with_infinity() {
        let a = [3.0, -1.0, 2.5];
        let e = [0.0, INF, INF];
        let expect = vec![3.0, -1.0, 2.5, INF, INF];
        assert_eq!(minsum_naive(&a, &e), expect);
        assert_eq!(minsum_fast(&a, &e), expect);
    }

    #[test]
    fn scalar_shift() {
        let b = [4.0, INF, -2.0, 7.0];
        assert_eq!(minsum_fast(&[1.5], &b), vec![5.5, INF, -0.5, 8.5]);
    }

    #[test]
    fn all_equal_inputs() {
        let a = vec![2.0; 50];
        let b = vec![2.0; 37];
        assert_eq!(minsum_fast(&a, &b), minsum_naive(&a, &b));
    }

    #[test]
    fn tight_budget_falls_back() {
        let a: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| ((i * 104729) % 17) as f64).collect();
        assert_eq!(minsum_fast_with_budget(&a, &b, 3), minsum_naive(&a, &b));
    }

    #[test]
    fn all_infinite() {
        assert_eq!(minsum_fast(&[INF, INF], &[0.0]), vec![INF, INF]);
    }

    #[test]
    fn gapped_supports() {
        let a = [0.0, INF, INF, 1.0];
        let b = [INF, 2.0, INF, INF, 0.5];
        assert_eq!(minsum_fast(&a, &b), minsum_naive(&a, &b));
    }

    fn cost_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![
                6 => (-20i32..20).prop_map(f64::from),
                2 => -5.0f64..5.0,
                1 => Just(INF),
            ],
            1..40,
        )
    }

    proptest! {
        #[test]
        fn fast_matches_naive(a in cost_vec(), b in cost_vec()) {
            prop_assert_eq!(minsum_fast(&a, &b), minsum_naive(&a, &b));
        }

        #[test]
        fn commutative(a in cost_vec(), b in cost_vec()) {
            prop_assert_eq!(minsum_naive(&a, &b), minsum_naive(&b, &a));
            prop_assert_eq!(minsum_fast(&a, &b), minsum_fast(&b, &a));
        }

        #[test]
        fn associative_on_integers(
            a in prop::collection::vec(-9i32..9, 1..12),
            b in prop::collection::vec(-9i32..9, 1..12),
            c in prop::collection::vec(-9i32..9, 1..12),
        ) {
            let f = |v: Vec<i32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
            let (a, b, c) = (f(a), f(b), f(c));
            let left = minsum_fast(&minsum_fast(&a, &b), &c);
            let right = minsum_fast(&a, &minsum_fast(&b, &c));
            prop_assert_eq!(left, right);
        }

        #[test]
        fn shift_by_constant(
            a in prop::collection::vec(prop_oneof![4 => (-20i32..20).prop_map(f64::from), 1 => Just(INF)], 1..30),
            b in cost_vec(),
            delta in -10i32..10,
        ) {
            let d = f64::from(delta);
            let shifted: Vec<f64> = a.iter().map(|x| x + d).collect();
            let base = minsum_fast(&a, &b.iter().map(|x| x.round()).collect::<Vec<_>>());
            let moved = minsum_fast(&shifted, &b.iter().map(|x| x.round()).collect::<Vec<_>>());
            for (x, y) in base.iter().zip(&moved) {
                if x.is_finite() {
                    prop_assert_eq!(*x + d, *y);
                } else {
                    prop_assert!(y.is_infinite());
                }
            }
        }
    }
}
