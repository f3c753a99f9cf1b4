use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::Bundle;
use super::{Decomposition, OracleKind, SubproblemKind};
use crate::chain::{self, ChainSubproblem, MinMarginals};
use crate::instance::Labeling;
use crate::std_oracle::{self, StdRayDual};

const INF: f64 = f64::INFINITY;

/// Certificates demand `primal - dual < 1 - CERT_MARGIN`; the margin
/// absorbs floating-point error in the dual value.
pub const CERT_MARGIN: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `α_t = α_0 / (1 + t / τ)`.
    Diminishing { alpha0: f64, tau: f64 },
    /// `α_t = ρ (UB - f_t) / ‖g_t‖²` once an upper bound is known,
    /// diminishing before that.
    Polyak { rho: f64, alpha0: f64, tau: f64 },
    /// Proximal bundle over the last `size` cuts with prox weight `t`.
    Bundle { size: usize, t: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Diminishing { alpha0: 1.0, tau: 20.0 }
    }
}

impl StepRule {
    pub fn polyak() -> Self {
        StepRule::Polyak {
            rho: 1.0,
            alpha0: 1.0,
            tau: 20.0,
        }
    }

    pub fn bundle() -> Self {
        StepRule::Bundle { size: 20, t: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub max_iters: usize,
    pub step: StepRule,
    /// Stop once the best bound improved by less than `stall_tol` over the
    /// last `stall_window` iterations.
    pub stall_window: usize,
    pub stall_tol: f64,
    pub time_limit_seconds: Option<f64>,
    /// Stop as soon as the duality gap certifies the upper bound
    /// (integral costs only).
    pub stop_when_certified: bool,
    pub parallel: bool,
    /// Accuracy of the per-ray scalar dual of the STD oracle.
    pub std_tol: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            max_iters: 1000,
            step: StepRule::default(),
            stall_window: 50,
            stall_tol: 1e-6,
            time_limit_seconds: None,
            stop_when_certified: true,
            parallel: true,
            std_tol: std_oracle::DEFAULT_TOL,
        }
    }
}

/// Multipliers per subproblem, `n_i × k`, zero on unshared nodes.
///
/// For every node the multipliers of its memberships sum to zero: the
/// last membership always holds the negated sum of the others.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangeState {
    pub lambda: Vec<Vec<f64>>,
}

impl LagrangeState {
    pub fn zeros(decomp: &Decomposition) -> Self {
        LagrangeState {
            lambda: decomp.subproblems.iter().map(|s| vec![0.0; s.len() * decomp.k]).collect(),
        }
    }

    /// Largest `|Σ_i λ_{i,u}(x)|` over nodes and labels.
    pub fn zero_sum_residual(&self, decomp: &Decomposition) -> f64 {
        let k = decomp.k;
        let mut worst = 0.0f64;
        for members in &decomp.node_membership {
            for x in 0..k {
                let mut s = 0.0;
                for m in members {
                    s += self.lambda[m.sub][m.pos * k + x];
                }
                worst = worst.max(s.abs());
            }
        }
        worst
    }

    /// `self + alpha * dir`, re-establishing the zero sum exactly.
    pub(crate) fn moved(&self, decomp: &Decomposition, dir: &[Vec<f64>], alpha: f64) -> LagrangeState {
        let k = decomp.k;
        let mut next = self.clone();
        for members in &decomp.node_membership {
            if members.len() < 2 {
                continue;
            }
            let (last, rest) = members.split_last().unwrap();
            for x in 0..k {
                let mut s = 0.0;
                for m in rest {
                    let idx = m.pos * k + x;
                    let v = self.lambda[m.sub][idx] + alpha * dir[m.sub][idx];
                    next.lambda[m.sub][idx] = v;
                    s += v;
                }
                next.lambda[last.sub][last.pos * k + x] = -s;
            }
        }
        next
    }

    pub(crate) fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
            .sum()
    }
}

/// Solution of one subproblem at given multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct SubResult {
    pub value: f64,
    pub labels: Option<Vec<usize>>,
    /// Node marginals `n_i × k` (one-hot for integral solutions).
    pub marginals: Vec<f64>,
    /// Scalar ray multiplier (STD oracle only; zero otherwise).
    pub gamma: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub subs: Vec<SubResult>,
    pub infeasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub dual: f64,
    pub best_dual: f64,
    pub best_primal: Option<f64>,
    pub elapsed_seconds: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub entries: Vec<TraceEntry>,
    pub infeasible: bool,
}

impl BoundTrace {
    pub fn best_dual(&self) -> f64 {
        self.entries.last().map_or(-INF, |e| e.best_dual)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentStatus {
    MaxIterations,
    Stalled,
    /// Zero supergradient or a vanishing bundle step: the dual optimum.
    Converged,
    /// All subproblems agree on one labeling, which is optimal.
    Agreement,
    Certified,
    TimeLimit,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct AscentOutcome {
    pub status: AscentStatus,
    pub best_dual: f64,
    pub iterations: usize,
}

/// Supergradient / bundle ascent on the decomposition's dual.
pub struct DualAscent<'d> {
    decomp: &'d Decomposition,
    oracle: OracleKind,
    config: AscentConfig,
    lambda: LagrangeState,
    forbidden: Vec<bool>,
    best_lambda: LagrangeState,
    best_dual: f64,
    best_primal: Option<(f64, Labeling)>,
    trace: BoundTrace,
    iteration: usize,
    bundle: Option<Bundle>,
    started: Instant,
}

impl<'d> DualAscent<'d> {
    pub fn new(decomp: &'d Decomposition, oracle: OracleKind, config: AscentConfig) -> Self {
        let lambda = LagrangeState::zeros(decomp);
        let bundle = match config.step {
            StepRule::Bundle { size, t } => Some(Bundle::new(size, t)),
            _ => None,
        };
        DualAscent {
            decomp,
            oracle,
            config,
            best_lambda: lambda.clone(),
            lambda,
            forbidden: vec![false; decomp.num_nodes * decomp.k],
            best_dual: -INF,
            best_primal: None,
            trace: BoundTrace::default(),
            iteration: 0,
            bundle,
            started: Instant::now(),
        }
    }

    pub fn with_lambda(mut self, lambda: LagrangeState) -> Self {
        self.best_lambda = lambda.clone();
        self.lambda = lambda;
        self
    }

    /// Forbidden `(node, label)` pairs, `num_nodes × k`; they get `+∞`
    /// unary cost in every subproblem containing the node.
    pub fn with_forbidden(mut self, forbidden: Vec<bool>) -> Self {
        assert_eq!(forbidden.len(), self.decomp.num_nodes * self.decomp.k);
        self.forbidden = forbidden;
        self
    }

    pub fn decomposition(&self) -> &'d Decomposition {
        self.decomp
    }

    pub fn oracle(&self) -> OracleKind {
        self.oracle
    }

    pub fn config(&self) -> &AscentConfig {
        &self.config
    }

    pub fn lambda(&self) -> &LagrangeState {
        &self.lambda
    }

    pub fn best_lambda(&self) -> &LagrangeState {
        &self.best_lambda
    }

    pub fn best_dual(&self) -> f64 {
        self.best_dual
    }

    pub fn best_primal(&self) -> Option<&(f64, Labeling)> {
        self.best_primal.as_ref()
    }

    pub fn trace(&self) -> &BoundTrace {
        &self.trace
    }

    pub fn into_trace(self) -> BoundTrace {
        self.trace
    }

    pub fn iterations(&self) -> usize {
        self.iteration
    }

    pub fn forbidden(&self) -> &[bool] {
        &self.forbidden
    }

    /// Offers a feasible labeling and its energy as an upper bound.
    pub fn offer_primal(&mut self, value: f64, labeling: Labeling) {
        if self.best_primal.as_ref().is_none_or(|(v, _)| value < *v) {
            self.best_primal = Some((value, labeling));
        }
    }

    pub fn upper_bound(&self) -> Option<f64> {
        self.best_primal.as_ref().map(|(v, _)| *v)
    }

    pub fn is_certified(&self) -> bool {
        self.decomp.integral_costs
            && self
                .upper_bound()
                .is_some_and(|ub| ub - self.best_dual < 1.0 - CERT_MARGIN)
    }

    /// Subproblem `i` with multipliers and forbidden labels applied.
    pub fn subproblem_at(&self, i: usize, lambda: &LagrangeState) -> ChainSubproblem {
        let k = self.decomp.k;
        let mut sub = self.decomp.subproblems[i].clone();
        let lam = &lambda.lambda[i];
        for (pos, &u) in self.decomp.subproblems[i].node_ids.iter().enumerate() {
            let row = sub.unary_row_mut(pos);
            for x in 0..k {
                row[x] += lam[pos * k + x];
                if self.forbidden[u * k + x] {
                    row[x] = INF;
                }
            }
        }
        sub
    }

    fn solve_one(&self, i: usize, lambda: &LagrangeState) -> SubResult {
        let sub = self.subproblem_at(i, lambda);
        let (n, k) = (sub.len(), sub.k());
        let onehot = |labels: &Option<Vec<usize>>| {
            let mut m = vec![0.0; n * k];
            if let Some(l) = labels {
                l.iter().enumerate().for_each(|(p, &x)| m[p * k + x] = 1.0);
            }
            m
        };
        match (self.oracle, self.decomp.kinds[i]) {
            (_, SubproblemKind::EnergyOnly) => {
                let sol = std_oracle::chain_map_dp(&sub);
                SubResult {
                    value: sol.value,
                    marginals: onehot(&sol.labels),
                    labels: sol.labels,
                    gamma: 0.0,
                }
            }
            (OracleKind::Ctg, SubproblemKind::Ray(_)) => {
                let sol = chain::solve_chain_tomo_tree(&sub);
                SubResult {
                    value: sol.value,
                    marginals: onehot(&sol.labels),
                    labels: sol.labels,
                    gamma: 0.0,
                }
            }
            (OracleKind::Std, SubproblemKind::Ray(_)) => {
                let d = std_oracle::std_ray_value(&sub, self.config.std_tol);
                SubResult {
                    value: d.value,
                    labels: d.witness,
                    marginals: d.marginals,
                    gamma: d.gamma,
                }
            }
        }
    }

    /// Solves every subproblem at `lambda`.
    pub fn evaluate(&self, lambda: &LagrangeState) -> Evaluation {
        let m = self.decomp.len();
        let subs: Vec<SubResult> = if self.config.parallel {
            (0..m).into_par_iter().map(|i| self.solve_one(i, lambda)).collect()
        } else {
            (0..m).map(|i| self.solve_one(i, lambda)).collect()
        };
        let infeasible = subs.iter().any(|s| s.value == INF);
        let value = subs.iter().map(|s| s.value).sum();
        Evaluation { value, subs, infeasible }
    }

    /// Projected supergradient: each membership's marginals minus the mean
    /// over the node's memberships.
    pub fn supergradient(&self, eval: &Evaluation) -> Vec<Vec<f64>> {
        let k = self.decomp.k;
        let mut g: Vec<Vec<f64>> = eval.subs.iter().map(|s| vec![0.0; s.marginals.len()]).collect();
        for members in &self.decomp.node_membership {
            if members.len() < 2 {
                continue;
            }
            for x in 0..k {
                let mean = members
                    .iter()
                    .map(|m| eval.subs[m.sub].marginals[m.pos * k + x])
                    .sum::<f64>()
                    / members.len() as f64;
                for m in members {
                    g[m.sub][m.pos * k + x] = eval.subs[m.sub].marginals[m.pos * k + x] - mean;
                }
            }
        }
        g
    }

    /// Common labeling when every subproblem returned an integral solution,
    /// all memberships of every node agree and every ray sum holds.
    pub fn agreement(&self, eval: &Evaluation) -> Option<Labeling> {
        let k = self.decomp.k;
        let mut labeling = vec![usize::MAX; self.decomp.num_nodes];
        for (i, s) in eval.subs.iter().enumerate() {
            let labels = s.labels.as_ref()?;
            let sub = &self.decomp.subproblems[i];
            if !sub.satisfies_target(labels) {
                return None;
            }
            for (pos, &x) in labels.iter().enumerate() {
                if s.marginals[pos * k + x] != 1.0 {
                    return None;
                }
                let u = sub.node_ids[pos];
                if labeling[u] == usize::MAX {
                    labeling[u] = x;
                } else if labeling[u] != x {
                    return None;
                }
            }
        }
        Some(Labeling(labeling))
    }

    fn record(&mut self, dual: f64, step: f64) {
        let entry = TraceEntry {
            iteration: self.iteration,
            dual,
            best_dual: self.best_dual,
            best_primal: self.upper_bound(),
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
            step,
        };
        self.trace.entries.push(entry);
    }

    fn stalled(&self) -> bool {
        let w = self.config.stall_window;
        let e = &self.trace.entries;
        if w == 0 || e.len() <= w {
            return false;
        }
        let then = e[e.len() - 1 - w].best_dual;
        self.best_dual - then < self.config.stall_tol
    }

    fn timed_out(&self) -> bool {
        self.config
            .time_limit_seconds
            .is_some_and(|t| self.started.elapsed().as_secs_f64() >= t)
    }

    /// Runs until a stopping rule fires.
    pub fn run(&mut self) -> AscentOutcome {
        self.run_for(usize::MAX)
    }

    /// Runs at most `budget` further iterations (also bounded by
    /// `max_iters`); later calls continue the same schedule.
    pub fn run_for(&mut self, budget: usize) -> AscentOutcome {
        let mut done = 0;
        loop {
            if let Some(status) = self.step() {
                return self.outcome(status);
            }
            done += 1;
            if self.iteration >= self.config.max_iters {
                return self.outcome(AscentStatus::MaxIterations);
            }
            if self.stalled() {
                return self.outcome(AscentStatus::Stalled);
            }
            if self.timed_out() {
                return self.outcome(AscentStatus::TimeLimit);
            }
            if done >= budget {
                return self.outcome(AscentStatus::MaxIterations);
            }
        }
    }

    fn outcome(&self, status: AscentStatus) -> AscentOutcome {
        AscentOutcome {
            status,
            best_dual: self.best_dual,
            iterations: self.iteration,
        }
    }

    /// One iteration; returns a terminal status when the ascent is done.
    pub fn step(&mut self) -> Option<AscentStatus> {
        if self.bundle.is_some() {
            return self.bundle_step();
        }
        let lambda = self.lambda.clone();
        let eval = self.evaluate(&lambda);
        if eval.infeasible {
            self.trace.infeasible = true;
            self.best_dual = INF;
            self.record(INF, 0.0);
            self.iteration += 1;
            return Some(AscentStatus::Infeasible);
        }
        if eval.value > self.best_dual {
            self.best_dual = eval.value;
            self.best_lambda = lambda;
        }
        if let Some(status) = self.check_agreement(&eval) {
            self.record(eval.value, 0.0);
            self.iteration += 1;
            return Some(status);
        }
        let g = self.supergradient(&eval);
        let norm2 = LagrangeState::dot(&g, &g);
        let t = self.iteration as f64;
        let alpha = match self.config.step {
            StepRule::Diminishing { alpha0, tau } => alpha0 / (1.0 + t / tau),
            StepRule::Polyak { rho, alpha0, tau } => match self.upper_bound() {
                Some(ub) if norm2 > 0.0 && ub > eval.value => rho * (ub - eval.value) / norm2,
                _ => alpha0 / (1.0 + t / tau),
            },
            StepRule::Bundle { .. } => unreachable!(),
        };
        self.record(eval.value, alpha);
        self.iteration += 1;
        if self.config.stop_when_certified && self.is_certified() {
            return Some(AscentStatus::Certified);
        }
        if norm2 == 0.0 {
            return Some(AscentStatus::Converged);
        }
        self.lambda = self.lambda.moved(self.decomp, &g, alpha);
        None
    }

    fn check_agreement(&mut self, eval: &Evaluation) -> Option<AscentStatus> {
        let labeling = self.agreement(eval)?;
        let energy = self.decomp.energy(&labeling);
        self.offer_primal(energy, labeling);
        Some(AscentStatus::Agreement)
    }

    fn bundle_step(&mut self) -> Option<AscentStatus> {
        let mut bundle = self.bundle.take().expect("bundle state");
        let status = self.bundle_iteration(&mut bundle);
        self.bundle = Some(bundle);
        status
    }

    fn bundle_iteration(&mut self, bundle: &mut Bundle) -> Option<AscentStatus> {
        let (trial, predicted) = if bundle.center().is_none() {
            (self.lambda.clone(), INF)
        } else {
            let (dir, scale, predicted) = bundle.direction();
            if predicted < self.config.stall_tol {
                self.record(bundle.center_value(), 0.0);
                self.iteration += 1;
                return Some(AscentStatus::Converged);
            }
            let center = bundle.center().expect("bundle has a center");
            (center.moved(self.decomp, &dir, scale), predicted)
        };
        let eval = self.evaluate(&trial);
        if eval.infeasible {
            self.trace.infeasible = true;
            self.best_dual = INF;
            self.record(INF, 0.0);
            self.iteration += 1;
            return Some(AscentStatus::Infeasible);
        }
        if eval.value > self.best_dual {
            self.best_dual = eval.value;
            self.best_lambda = trial.clone();
        }
        if let Some(status) = self.check_agreement(&eval) {
            self.record(eval.value, 0.0);
            self.iteration += 1;
            return Some(status);
        }
        let g = self.supergradient(&eval);
        let step = bundle.t();
        bundle.add(trial.clone(), eval.value, g, predicted);
        self.lambda = bundle.center().cloned().unwrap_or(trial);
        self.record(eval.value, step);
        self.iteration += 1;
        if self.config.stop_when_certified && self.is_certified() {
            return Some(AscentStatus::Certified);
        }
        None
    }

    /// Per-subproblem min-marginals at `lambda`, under the active oracle.
    pub fn min_marginals(&self, lambda: &LagrangeState) -> Vec<MinMarginals> {
        let m = self.decomp.len();
        let one = |i: usize| -> MinMarginals {
            let sub = self.subproblem_at(i, lambda);
            match (self.oracle, self.decomp.kinds[i]) {
                (_, SubproblemKind::EnergyOnly) => std_oracle::chain_min_marginals(&sub, 0.0),
                (OracleKind::Ctg, SubproblemKind::Ray(_)) => chain::min_marginals(&sub),
                (OracleKind::Std, SubproblemKind::Ray(_)) => {
                    let d: StdRayDual = std_oracle::std_ray_value(&sub, self.config.std_tol);
                    std_oracle::std_min_marginals(&sub, &d)
                }
            }
        };
        if self.config.parallel {
            (0..m).into_par_iter().map(one).collect()
        } else {
            (0..m).map(one).collect()
        }
    }
}
