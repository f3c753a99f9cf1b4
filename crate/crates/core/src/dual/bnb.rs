//! Depth-first branch and bound on top of the dual decomposition.
//!
//! Every node fixes some pixels to single labels (all other labels get
//! `+∞` unary cost) and re-runs the dual ascent from the parent's
//! multipliers. Nodes are pruned by their dual bound against the
//! incumbent; branching picks the pixel whose aggregated min-marginals
//! discriminate most between labels.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ascent::{AscentConfig, AscentStatus, DualAscent, LagrangeState, TraceEntry};
use super::{decompose, OracleKind};
use crate::instance::{Labeling, TomographyInstance};
use crate::primal::{aggregated_min_marginals, recover_primal, PrimalConfig};

const PRUNE_MARGIN: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    /// Ascent settings at the root.
    pub root: AscentConfig,
    /// Iteration cap per non-root node (other settings follow `root`).
    pub node_iters: usize,
    pub node_limit: usize,
    pub time_limit_seconds: Option<f64>,
    pub primal: PrimalConfig,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            root: AscentConfig::default(),
            node_iters: 200,
            node_limit: 100_000,
            time_limit_seconds: None,
            primal: PrimalConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    /// Time or node budget exhausted; the incumbent (if any) is the best
    /// labeling found and `lower_bound` is still valid.
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub best: Option<(f64, Labeling)>,
    pub lower_bound: f64,
    pub root_dual: f64,
    pub nodes_explored: usize,
    /// Bound trace of the root ascent.
    pub root_trace: Vec<TraceEntry>,
}

struct Node {
    forbidden: Vec<bool>,
    lambda: LagrangeState,
    bound: f64,
}

fn prunable(bound: f64, incumbent: Option<f64>, integral: bool) -> bool {
    let Some(inc) = incumbent else { return false };
    if integral {
        (bound - PRUNE_MARGIN).ceil() >= inc
    } else {
        bound >= inc - 1e-9
    }
}

/// Branching pixel and its candidate labels in exploration order, or
/// `None` when every pixel has at most one viable label.
fn choose_branch(k: usize, forbidden: &[bool], agg: &[f64]) -> Option<(usize, Vec<usize>)> {
    let mut pick: Option<(f64, usize)> = None;
    for u in 0..forbidden.len() / k {
        let finite: Vec<f64> = (0..k)
            .filter(|&x| !forbidden[u * k + x] && agg[u * k + x].is_finite())
            .map(|x| agg[u * k + x])
            .collect();
        if finite.len() < 2 {
            continue;
        }
        let spread = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - finite.iter().copied().fold(f64::INFINITY, f64::min);
        if pick.is_none_or(|(s, _)| spread > s) {
            pick = Some((spread, u));
        }
    }
    let (_, u) = pick?;
    let mut labels: Vec<usize> = (0..k)
        .filter(|&x| !forbidden[u * k + x] && agg[u * k + x].is_finite())
        .collect();
    labels.sort_by(|&a, &b| agg[u * k + a].total_cmp(&agg[u * k + b]).then(a.cmp(&b)));
    Some((u, labels))
}

/// The labeling forced by `forbidden` when every pixel has exactly one
/// allowed label.
fn forced_labeling(k: usize, forbidden: &[bool], agg: &[f64]) -> Option<Labeling> {
    let n = forbidden.len() / k;
    let mut labels = Vec::with_capacity(n);
    for u in 0..n {
        let mut allowed = (0..k).filter(|&x| !forbidden[u * k + x] && agg[u * k + x].is_finite());
        let x = allowed.next()?;
        if allowed.next().is_some() {
            return None;
        }
        labels.push(x);
    }
    Some(Labeling(labels))
}

/// Solves the instance to proven optimality (within the budgets).
pub fn branch_and_bound(instance: &TomographyInstance, oracle: OracleKind, config: &BnbConfig) -> BnbResult {
    let started = Instant::now();
    let decomp = decompose(instance);
    let integral = decomp.integral_costs;
    let k = decomp.k;
    let time_left = |cap: Option<f64>| -> Option<f64> {
        config
            .time_limit_seconds
            .map(|t| (t - started.elapsed().as_secs_f64()).max(0.0))
            .map(|t| cap.map_or(t, |c| c.min(t)))
            .or(cap)
    };

    let mut root_cfg = config.root.clone();
    root_cfg.stop_when_certified = true;
    root_cfg.time_limit_seconds = time_left(root_cfg.time_limit_seconds);
    let mut root = DualAscent::new(&decomp, oracle, root_cfg.clone());
    let status = root.run().status;
    let root_dual = root.best_dual();
    let mut incumbent: Option<(f64, Labeling)> = root.best_primal().cloned();
    if status == AscentStatus::Infeasible {
        return BnbResult {
            status: BnbStatus::Infeasible,
            best: None,
            lower_bound: f64::INFINITY,
            root_dual,
            nodes_explored: 1,
            root_trace: root.into_trace().entries,
        };
    }
    let root_lambda = root.best_lambda().clone();
    let root_mms = root.min_marginals(&root_lambda);
    if incumbent.is_none() || !root.is_certified() {
        let rec = recover_primal(instance, &decomp, &root_mms, root_dual, &config.primal);
        if let Some((v, l)) = rec.best {
            if incumbent.as_ref().is_none_or(|(b, _)| v < *b) {
                incumbent = Some((v, l));
            }
        }
    }
    let root_trace = root.into_trace().entries;

    let mut stack = vec![Node {
        forbidden: vec![false; decomp.num_nodes * k],
        lambda: root_lambda,
        bound: root_dual,
    }];
    let mut first = Some((root_dual, root_mms));
    let mut explored = 0usize;
    let mut timed_out = false;
    while let Some(node) = stack.pop() {
        let over_time = config
            .time_limit_seconds
            .is_some_and(|t| started.elapsed().as_secs_f64() >= t);
        if over_time || explored >= config.node_limit {
            stack.push(node);
            timed_out = true;
            break;
        }
        let inc_value = incumbent.as_ref().map(|(v, _)| *v);
        if prunable(node.bound, inc_value, integral) {
            continue;
        }
        explored += 1;
        let (bound, lambda, mms) = match first.take() {
            Some((bound, mms)) => (bound, node.lambda, mms),
            None => {
                let mut cfg = root_cfg.clone();
                cfg.max_iters = config.node_iters;
                cfg.time_limit_seconds = time_left(None);
                let mut asc = DualAscent::new(&decomp, oracle, cfg)
                    .with_lambda(node.lambda)
                    .with_forbidden(node.forbidden.clone());
                if let Some((v, l)) = &incumbent {
                    asc.offer_primal(*v, l.clone());
                }
                let st = asc.run().status;
                if st == AscentStatus::Infeasible {
                    continue;
                }
                if let Some((v, l)) = asc.best_primal() {
                    if incumbent.as_ref().is_none_or(|(b, _)| v < b) {
                        incumbent = Some((*v, l.clone()));
                    }
                }
                // The parent's bound remains valid for the child.
                let bound = asc.best_dual().max(node.bound);
                let lambda = asc.best_lambda().clone();
                if st == AscentStatus::Agreement
                    || prunable(bound, incumbent.as_ref().map(|(v, _)| *v), integral)
                {
                    continue;
                }
                let mms = asc.min_marginals(&lambda);
                (bound, lambda, mms)
            }
        };
        let agg = aggregated_min_marginals(&decomp, &mms);
        match choose_branch(k, &node.forbidden, &agg) {
            Some((u, labels)) => {
                for &x in labels.iter().rev() {
                    let mut forbidden = node.forbidden.clone();
                    for y in (0..k).filter(|&y| y != x) {
                        forbidden[u * k + y] = true;
                    }
                    stack.push(Node {
                        forbidden,
                        lambda: lambda.clone(),
                        bound,
                    });
                }
            }
            None => {
                if let Some(l) = forced_labeling(k, &node.forbidden, &agg) {
                    if instance.is_feasible(&l) {
                        let v = instance.evaluate_energy(&l);
                        if incumbent.as_ref().is_none_or(|(b, _)| v < *b) {
                            incumbent = Some((v, l));
                        }
                    }
                }
            }
        }
    }

    let inc_value = incumbent.as_ref().map(|(v, _)| *v);
    let (status, lower_bound) = if timed_out {
        let open = stack.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        let lb = open.min(inc_value.unwrap_or(f64::INFINITY)).max(root_dual.min(open));
        (BnbStatus::Timeout, lb)
    } else if let Some(v) = inc_value {
        (BnbStatus::Optimal, v)
    } else {
        (BnbStatus::Infeasible, f64::INFINITY)
    };
    BnbResult {
        status,
        best: incumbent,
        lower_bound,
        root_dual,
        nodes_explored: explored.max(1),
        root_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pruning_rounds_up_integral_bounds() {
        assert!(prunable(4.2, Some(5.0), true));
        assert!(!prunable(4.0, Some(5.0), true));
        assert!(!prunable(4.0 + 1e-8, Some(5.0), true));
        assert!(!prunable(4.2, Some(5.0), false));
        assert!(prunable(5.0, Some(5.0), false));
        assert!(!prunable(100.0, None, true));
    }

    #[test]
    fn finds_the_enumerated_optimum() {
        use crate::dual::ascent::tests::{brute_optimum, small_instance};
        use crate::instance::Direction;
        let dirs = [Direction::Horizontal, Direction::Vertical];
        for seed in 0..10 {
            let (inst, _) = small_instance(100 + seed, 3, 3, 3, &dirs);
            let opt = brute_optimum(&inst).unwrap();
            for oracle in [OracleKind::Ctg, OracleKind::Std] {
                let mut cfg = BnbConfig::default();
                cfg.root.max_iters = 60;
                cfg.node_iters = 30;
                cfg.root.parallel = false;
                let res = branch_and_bound(&inst, oracle, &cfg);
                assert_eq!(res.status, BnbStatus::Optimal, "seed {seed} {oracle}");
                let (v, l) = res.best.unwrap();
                assert_eq!(v, opt, "seed {seed} {oracle}");
                assert!(inst.is_feasible(&l));
                assert!(res.root_dual <= opt + 1e-9);
            }
        }
    }

    #[test]
    fn branching_prefers_largest_spread() {
        // Node 0: gaps {0, 1}; node 1: gaps {0, 3, inf}.
        let k = 3;
        let agg = vec![0.0, 1.0, 0.5, 3.0, 0.0, f64::INFINITY];
        let forbidden = vec![false; 6];
        let (u, labels) = choose_branch(k, &forbidden, &agg).unwrap();
        assert_eq!(u, 1);
        assert_eq!(labels, vec![1, 0]);
    }
}
