//! One-dimensional tomography: minimize a chain energy subject to a single
//! ray-sum constraint `Σ x = b`.
//!
//! [`solve_chain_tomo_tree`] is the counting-factor message passing
//! solver; [`solve_chain_dp_naive`] is the label × prefix-sum dynamic
//! program that doubles as the source of min-marginals.

mod dp;
mod tree;

use crate::instance::NodeId;

pub use dp::{min_marginals, solve_chain_dp_naive, DpSolution, DpTables, MinMarginals};
pub use tree::{
    counting_space_size, solve_chain_tomo_tree, solve_chain_tomo_tree_with, up_pass, CountingLabel, CountingSpace,
    MessageSet, PartitionTree, TreeNode,
};

/// A chain of `n` nodes with unary costs, consecutive-pair costs and an
/// optional target sum (absent for energy-only chains).
///
/// Unary entries may be `+∞` to forbid a label; pairwise entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSubproblem {
    pub node_ids: Vec<NodeId>,
    k: usize,
    unary: Vec<f64>,
    pairwise: Vec<f64>,
    pub target: Option<u64>,
}

impl ChainSubproblem {
    /// `unary` is `n × k` row-major, `pairwise` is `(n - 1) × k × k` with
    /// table `i` indexed `[a * k + b]` for labels of nodes `i` and `i + 1`.
    pub fn new(node_ids: Vec<NodeId>, k: usize, unary: Vec<f64>, pairwise: Vec<f64>, target: Option<u64>) -> Self {
        let n = node_ids.len();
        assert!(n >= 1, "chain must contain at least one node");
        assert!(k >= 1, "label count must be positive");
        assert_eq!(unary.len(), n * k, "unary table size");
        assert_eq!(pairwise.len(), (n - 1) * k * k, "pairwise table size");
        ChainSubproblem {
            node_ids,
            k,
            unary,
            pairwise,
            target,
        }
    }

    /// Chain with zero costs on nodes `0..n`.
    pub fn zeros(n: usize, k: usize, target: Option<u64>) -> Self {
        Self::new((0..n).collect(), k, vec![0.0; n * k], vec![0.0; (n.max(1) - 1) * k * k], target)
    }

    /// Same pairwise table on every consecutive pair.
    pub fn with_uniform_pairwise(mut self, table: &[f64]) -> Self {
        let kk = self.k * self.k;
        assert_eq!(table.len(), kk);
        for chunk in self.pairwise.chunks_mut(kk) {
            chunk.copy_from_slice(table);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn unary(&self, i: usize, x: usize) -> f64 {
        self.unary[i * self.k + x]
    }

    #[inline]
    pub fn pair(&self, i: usize, a: usize, b: usize) -> f64 {
        self.pairwise[(i * self.k + a) * self.k + b]
    }

    pub fn unary_row(&self, i: usize) -> &[f64] {
        &self.unary[i * self.k..(i + 1) * self.k]
    }

    pub fn unary_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.unary[i * self.k..(i + 1) * self.k]
    }

    pub fn unary_costs(&self) -> &[f64] {
        &self.unary
    }

    pub fn unary_costs_mut(&mut self) -> &mut [f64] {
        &mut self.unary
    }

    pub fn pair_table(&self, i: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.pairwise[i * kk..(i + 1) * kk]
    }

    pub fn pair_table_mut(&mut self, i: usize) -> &mut [f64] {
        let kk = self.k * self.k;
        &mut self.pairwise[i * kk..(i + 1) * kk]
    }

    /// Largest achievable label sum.
    pub fn max_sum(&self) -> u64 {
        (self.len() * (self.k - 1)) as u64
    }

    /// Chain energy of `labels` (no constraint check).
    pub fn energy(&self, labels: &[usize]) -> f64 {
        let u: f64 = labels.iter().enumerate().map(|(i, &x)| self.unary(i, x)).sum();
        let p: f64 = labels.windows(2).enumerate().map(|(i, w)| self.pair(i, w[0], w[1])).sum();
        u + p
    }

    pub fn satisfies_target(&self, labels: &[usize]) -> bool {
        match self.target {
            None => true,
            Some(b) => labels.iter().map(|&x| x as u64).sum::<u64>() == b,
        }
    }
}

/// Optimal value and witness of a chain solve. `labels` is `None` iff the
/// value is `+∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSolution {
    pub value: f64,
    pub labels: Option<Vec<usize>>,
}

impl ChainSolution {
    pub fn infeasible() -> Self {
        ChainSolution {
            value: f64::INFINITY,
            labels: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.labels.is_some()
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::ChainSubproblem;
    use rand::Rng;

    /// Exhaustive minimum over all `k^n` labelings; first optimum in
    /// lexicographic order.
    pub fn brute_force(sub: &ChainSubproblem) -> (f64, Option<Vec<usize>>) {
        let (n, k) = (sub.len(), sub.k());
        let mut labels = vec![0usize; n];
        let mut best = (f64::INFINITY, None);
        loop {
            if sub.satisfies_target(&labels) {
                let e = sub.energy(&labels);
                if e < best.0 {
                    best = (e, Some(labels.clone()));
                }
            }
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                labels[i] += 1;
                if labels[i] < k {
                    break;
                }
                labels[i] = 0;
            }
        }
    }

    /// Random chain with integer costs in `[0, max_cost]` and a target
    /// drawn from a random labeling (always feasible).
    pub fn random_chain(rng: &mut impl Rng, n: usize, k: usize, max_cost: i32) -> ChainSubproblem {
        let unary = (0..n * k).map(|_| rng.gen_range(0..=max_cost) as f64).collect();
        let pairwise = (0..(n - 1) * k * k).map(|_| rng.gen_range(0..=max_cost) as f64).collect();
        let b = (0..n).map(|_| rng.gen_range(0..k) as u64).sum();
        ChainSubproblem::new((0..n).collect(), k, unary, pairwise, Some(b))
    }

    pub fn potts(k: usize, w: f64) -> Vec<f64> {
        (0..k * k).map(|i| if i / k == i % k { 0.0 } else { w }).collect()
    }

    pub fn abs_diff(k: usize, w: f64) -> Vec<f64> {
        (0..k * k).map(|i| w * ((i / k) as f64 - (i % k) as f64).abs()).collect()
    }
}
