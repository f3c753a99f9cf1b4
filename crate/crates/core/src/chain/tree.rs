//! Counting-factor tree for the one-dimensional problem.
//!
//! The chain `u_0..u_{n-1}` is split recursively at `⌊len/2⌋` until
//! intervals have at most two nodes. Every interval `[i, j]` carries a
//! counting factor over labels `(x_i, s, x_j)` where `s` is the sum of the
//! labels strictly inside the interval. A parent `[i, l]` with children
//! `[i, j]` and `[j+1, l]` accepts a child pair iff the endpoints match
//! and `s_parent = s_left + x_j + x_{j+1} + s_right`, where an endpoint
//! term is dropped when the child has a single node (it is then a parent
//! endpoint, not an interior node).
//!
//! The up pass computes, for every interval, the cheapest sub-chain cost
//! per counting label. With the four endpoint labels fixed this is one
//! min-sum convolution over the two children's sum axes.

use super::{ChainSolution, ChainSubproblem};
use crate::minsum::ConvKernel;

const INF: f64 = f64::INFINITY;

/// Number of counting labels of an interval with `len` nodes.
///
/// `k · k · (1 + (len-2)(k-1))` for `len ≥ 2`; `k` for a single node.
pub fn counting_space_size(len: usize, k: usize) -> usize {
    CountingSpace::new(len, k).size()
}

/// `(left label, interior sum, right label)` of an interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CountingLabel {
    pub left: usize,
    pub mid_sum: usize,
    pub right: usize,
}

/// Label space of a counting factor; tables are laid out so that the sum
/// axis is contiguous for fixed endpoints: `(left * k + right) * sums + s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountingSpace {
    pub len: usize,
    pub k: usize,
}

impl CountingSpace {
    pub fn new(len: usize, k: usize) -> Self {
        assert!(len >= 1);
        CountingSpace { len, k }
    }

    /// Number of distinct interior sums.
    pub fn sums(&self) -> usize {
        if self.len <= 2 {
            1
        } else {
            1 + (self.len - 2) * (self.k - 1)
        }
    }

    pub fn size(&self) -> usize {
        if self.len == 1 {
            self.k
        } else {
            self.k * self.k * self.sums()
        }
    }

    /// `None` for labels outside the space (including `left != right` on a
    /// single-node interval).
    pub fn index(&self, l: CountingLabel) -> Option<usize> {
        if l.left >= self.k || l.right >= self.k || l.mid_sum >= self.sums() {
            return None;
        }
        if self.len == 1 {
            return (l.left == l.right).then_some(l.left);
        }
        Some((l.left * self.k + l.right) * self.sums() + l.mid_sum)
    }

    pub fn label(&self, index: usize) -> CountingLabel {
        if self.len == 1 {
            return CountingLabel {
                left: index,
                mid_sum: 0,
                right: index,
            };
        }
        let s = self.sums();
        let ends = index / s;
        CountingLabel {
            left: ends / self.k,
            mid_sum: index % s,
            right: ends % self.k,
        }
    }

    /// Slice of `table` over interior sums with both endpoints fixed.
    fn sum_axis<'t>(&self, table: &'t [f64], left: usize, right: usize) -> &'t [f64] {
        if self.len == 1 {
            &table[left..left + 1]
        } else {
            let s = self.sums();
            let at = (left * self.k + right) * s;
            &table[at..at + s]
        }
    }

    /// Total label sum of the interval for a counting label.
    pub fn total(&self, l: CountingLabel) -> usize {
        if self.len == 1 {
            l.left
        } else {
            l.left + l.mid_sum + l.right
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeNode {
    /// First node of the interval (inclusive).
    pub lo: usize,
    /// Last node of the interval (inclusive).
    pub hi: usize,
    pub children: Option<(usize, usize)>,
}

impl TreeNode {
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Recursive equipartition; nodes are stored children-first, root last.
#[derive(Clone, Debug)]
pub struct PartitionTree {
    nodes: Vec<TreeNode>,
    k: usize,
}

impl PartitionTree {
    pub fn new(n: usize, k: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = Vec::with_capacity(2 * n);
        Self::build(&mut nodes, 0, n - 1);
        PartitionTree { nodes, k }
    }

    fn build(nodes: &mut Vec<TreeNode>, lo: usize, hi: usize) -> usize {
        let len = hi - lo + 1;
        let children = if len <= 2 {
            None
        } else {
            let split = lo + len / 2 - 1;
            let left = Self::build(nodes, lo, split);
            let right = Self::build(nodes, split + 1, hi);
            Some((left, right))
        };
        nodes.push(TreeNode { lo, hi, children });
        nodes.len() - 1
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn space(&self, node: usize) -> CountingSpace {
        CountingSpace::new(self.nodes[node].len(), self.k)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.children.is_none())
    }

    /// Total number of counting-table entries over all intervals.
    pub fn total_counting_entries(&self) -> usize {
        (0..self.nodes.len()).map(|i| self.space(i).size()).sum()
    }
}

/// Factor costs after the up pass, one table per tree node.
///
/// For a leaf this is the initial factor cost (its pairwise term and the
/// unaries of its nodes). For an internal node it is the message sent up
/// from the higher-order factor joining its two children; the left and
/// right messages into that factor are the children's tables.
#[derive(Clone, Debug)]
pub struct MessageSet {
    pub tree: PartitionTree,
    tables: Vec<Vec<f64>>,
}

impl MessageSet {
    pub fn table(&self, node: usize) -> &[f64] {
        &self.tables[node]
    }

    pub fn up_message(&self, node: usize) -> Option<&[f64]> {
        self.tree.nodes[node].children.map(|_| self.tables[node].as_slice())
    }

    pub fn left_message(&self, node: usize) -> Option<&[f64]> {
        self.tree.nodes[node].children.map(|(l, _)| self.tables[l].as_slice())
    }

    pub fn right_message(&self, node: usize) -> Option<&[f64]> {
        self.tree.nodes[node].children.map(|(_, r)| self.tables[r].as_slice())
    }

    pub fn total_entries(&self) -> usize {
        self.tables.iter().map(Vec::len).sum()
    }
}

/// Bottom-up pass over the partition tree.
pub fn up_pass(sub: &ChainSubproblem, kernel: ConvKernel) -> MessageSet {
    let k = sub.k();
    let tree = PartitionTree::new(sub.len(), k);
    let mut tables: Vec<Vec<f64>> = Vec::with_capacity(tree.nodes.len());
    for (idx, node) in tree.nodes.iter().enumerate() {
        let space = tree.space(idx);
        let table = match node.children {
            None if node.len() == 1 => sub.unary_row(node.lo).to_vec(),
            None => {
                let mut t = vec![INF; space.size()];
                for a in 0..k {
                    for b in 0..k {
                        let i = space.index(CountingLabel { left: a, mid_sum: 0, right: b }).unwrap();
                        t[i] = sub.unary(node.lo, a) + sub.unary(node.hi, b) + sub.pair(node.lo, a, b);
                    }
                }
                t
            }
            Some((l, r)) => join_up(sub, &tree, space, (l, &tables[l]), (r, &tables[r]), kernel),
        };
        tables.push(table);
    }
    MessageSet { tree, tables }
}

/// Minimizes over consistent child pairs for every parent counting label.
fn join_up(
    sub: &ChainSubproblem,
    tree: &PartitionTree,
    parent: CountingSpace,
    (li, left): (usize, &[f64]),
    (ri, right): (usize, &[f64]),
    kernel: ConvKernel,
) -> Vec<f64> {
    let k = sub.k();
    let ls = tree.space(li);
    let rs = tree.space(ri);
    let split = tree.nodes[li].hi;
    let psums = parent.sums();
    let mut out = vec![INF; parent.size()];
    for xl in 0..k {
        for xr in 0..k {
            let dst = (xl * k + xr) * psums;
            for xj in 0..k {
                if ls.len == 1 && xj != xl {
                    continue;
                }
                let a = ls.sum_axis(left, xl, xj);
                if a.iter().all(|v| *v == INF) {
                    continue;
                }
                for xj1 in 0..k {
                    if rs.len == 1 && xj1 != xr {
                        continue;
                    }
                    let b = rs.sum_axis(right, xj1, xr);
                    if b.iter().all(|v| *v == INF) {
                        continue;
                    }
                    let shift = if ls.len >= 2 { xj } else { 0 } + if rs.len >= 2 { xj1 } else { 0 };
                    let pw = sub.pair(split, xj, xj1);
                    let c = kernel.convolve(a, b);
                    for (t, v) in c.into_iter().enumerate() {
                        if v == INF {
                            continue;
                        }
                        let slot = &mut out[dst + t + shift];
                        let cand = v + pw;
                        if cand < *slot {
                            *slot = cand;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Exact 1-D solve by counting-factor message passing (fast kernel).
pub fn solve_chain_tomo_tree(sub: &ChainSubproblem) -> ChainSolution {
    solve_chain_tomo_tree_with(sub, ConvKernel::Fast)
}

pub fn solve_chain_tomo_tree_with(sub: &ChainSubproblem, kernel: ConvKernel) -> ChainSolution {
    let msgs = up_pass(sub, kernel);
    let tree = &msgs.tree;
    let root = tree.root();
    let space = tree.space(root);
    let table = msgs.table(root);

    // top factor: zero cost where the total matches the target, +∞ elsewhere
    let mut best: Option<(f64, CountingLabel)> = None;
    for left in 0..space.k {
        for mid_sum in 0..space.sums() {
            for right in 0..space.k {
                let label = CountingLabel { left, mid_sum, right };
                let Some(i) = space.index(label) else { continue };
                if sub.target.is_some_and(|b| space.total(label) as u64 != b) {
                    continue;
                }
                let v = table[i];
                if v < INF && best.is_none_or(|(bv, _)| v < bv) {
                    best = Some((v, label));
                }
            }
        }
    }
    let Some((value, root_label)) = best else {
        return ChainSolution::infeasible();
    };

    let mut labels = vec![usize::MAX; sub.len()];
    let mut stack = vec![(root, root_label)];
    while let Some((node, label)) = stack.pop() {
        let tn = tree.nodes[node];
        match tn.children {
            None => {
                labels[tn.lo] = label.left;
                labels[tn.hi] = label.right;
            }
            Some((l, r)) => {
                let (ll, rl) = split_label(sub, &msgs, node, label);
                stack.push((l, ll));
                stack.push((r, rl));
            }
        }
    }
    debug_assert!(labels.iter().all(|&x| x != usize::MAX));
    ChainSolution {
        value,
        labels: Some(labels),
    }
}

/// Cheapest consistent child pair for a parent label.
fn split_label(sub: &ChainSubproblem, msgs: &MessageSet, node: usize, parent: CountingLabel) -> (CountingLabel, CountingLabel) {
    let tree = &msgs.tree;
    let (li, ri) = tree.nodes[node].children.unwrap();
    let (ls, rs) = (tree.space(li), tree.space(ri));
    let (left, right) = (msgs.table(li), msgs.table(ri));
    let split = tree.nodes[li].hi;
    let k = sub.k();
    let mut best: Option<(f64, CountingLabel, CountingLabel)> = None;
    for xj in 0..k {
        if ls.len == 1 && xj != parent.left {
            continue;
        }
        for xj1 in 0..k {
            if rs.len == 1 && xj1 != parent.right {
                continue;
            }
            let shift = if ls.len >= 2 { xj } else { 0 } + if rs.len >= 2 { xj1 } else { 0 };
            if parent.mid_sum < shift {
                continue;
            }
            let rest = parent.mid_sum - shift;
            for sa in 0..ls.sums().min(rest + 1) {
                let sb = rest - sa;
                if sb >= rs.sums() {
                    continue;
                }
                let a = CountingLabel { left: parent.left, mid_sum: sa, right: xj };
                let b = CountingLabel { left: xj1, mid_sum: sb, right: parent.right };
                let va = left[ls.index(a).unwrap()];
                let vb = right[rs.index(b).unwrap()];
                let v = va + vb + sub.pair(split, xj, xj1);
                if v < INF && best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, a, b));
                }
            }
        }
    }
    let (_, a, b) = best.expect("parent label with finite cost has a finite child pair");
    (a, b)
}
