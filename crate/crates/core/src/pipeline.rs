//! End-to-end solving: dual ascent, primal recovery, certification and
//! optional branch and bound.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dual::{
    branch_and_bound, decompose, AscentConfig, AscentStatus, BnbConfig, BnbStatus, DualAscent, LagrangeState,
    OracleKind, TraceEntry,
};
use crate::error::{Error, Result};
use crate::instance::{Labeling, TomographyInstance};
use crate::primal::{certify, recover_primal, PrimalConfig, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ctg")]
    Ctg,
    #[serde(rename = "std")]
    Std,
    #[serde(rename = "ctg-bb")]
    CtgBb,
    #[serde(rename = "std-bb")]
    StdBb,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ctg, Method::Std, Method::CtgBb, Method::StdBb];

    pub fn oracle(self) -> OracleKind {
        match self {
            Method::Ctg | Method::CtgBb => OracleKind::Ctg,
            Method::Std | Method::StdBb => OracleKind::Std,
        }
    }

    pub fn branches(self) -> bool {
        matches!(self, Method::CtgBb | Method::StdBb)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Ctg => "ctg",
            Method::Std => "std",
            Method::CtgBb => "ctg-bb",
            Method::StdBb => "std-bb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}` (expected ctg, std, ctg-bb or std-bb)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub ascent: AscentConfig,
    pub primal: PrimalConfig,
    /// Ascent iterations per branch-and-bound node below the root.
    pub bnb_node_iters: usize,
    pub bnb_node_limit: usize,
    /// Overall wall-clock budget.
    pub time_limit_seconds: Option<f64>,
    /// Sequential subproblem order and no wall-clock data in results, for
    /// bit-identical output.
    pub deterministic: bool,
    /// Skip the primal heuristic on dual-only methods.
    pub skip_primal: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let bnb = BnbConfig::default();
        SolveConfig {
            ascent: AscentConfig::default(),
            primal: PrimalConfig::default(),
            bnb_node_iters: bnb.node_iters,
            bnb_node_limit: bnb.node_limit,
            time_limit_seconds: None,
            deterministic: false,
            skip_primal: false,
        }
    }
}

impl SolveConfig {
    fn effective_ascent(&self) -> AscentConfig {
        let mut a = self.ascent.clone();
        if self.deterministic {
            a.parallel = false;
        }
        if let Some(t) = self.time_limit_seconds {
            a.time_limit_seconds = Some(a.time_limit_seconds.map_or(t, |s| s.min(t)));
        }
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// The primal value is proven optimal.
    Optimal,
    /// A feasible labeling and a lower bound with an open gap.
    Gap,
    /// Only a lower bound is available.
    BoundOnly,
    Infeasible,
    /// The time or node budget ran out; the result is partial.
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub method: Method,
    pub status: SolveStatus,
    pub lower_bound: f64,
    pub primal_value: Option<f64>,
    pub labeling: Option<Labeling>,
    pub gap: Option<f64>,
    pub certified: bool,
    pub iterations: usize,
    pub ascent_status: Option<AscentStatus>,
    pub nodes: Option<usize>,
    pub wall_time: Option<f64>,
    pub trace: Vec<TraceEntry>,
    /// Multipliers of the best bound (dual-only methods).
    pub lambda: Option<LagrangeState>,
    pub config: SolveConfig,
}

impl SolveResult {
    pub fn timed_out(&self) -> bool {
        self.status == SolveStatus::Timeout
    }
}

/// Runs `method` on `instance`.
pub fn solve(instance: &TomographyInstance, method: Method, config: &SolveConfig) -> SolveResult {
    solve_from(instance, method, config, None)
}

/// Like [`solve`], starting the ascent of a dual-only method from `warm`.
pub fn solve_from(
    instance: &TomographyInstance,
    method: Method,
    config: &SolveConfig,
    warm: Option<LagrangeState>,
) -> SolveResult {
    let started = Instant::now();
    let mut result = if method.branches() {
        solve_bnb(instance, method, config)
    } else {
        solve_dual(instance, method, config, warm)
    };
    result.trace.iter_mut().for_each(|e| {
        if config.deterministic {
            e.elapsed_seconds = 0.0;
        }
    });
    result.wall_time = (!config.deterministic).then(|| started.elapsed().as_secs_f64());
    result
}

fn solve_dual(
    instance: &TomographyInstance,
    method: Method,
    config: &SolveConfig,
    warm: Option<LagrangeState>,
) -> SolveResult {
    let decomp = decompose(instance);
    let mut asc = DualAscent::new(&decomp, method.oracle(), config.effective_ascent());
    if let Some(l) = warm {
        asc = asc.with_lambda(l);
    }
    let outcome = asc.run();
    let lower = asc.best_dual();
    let lambda = asc.best_lambda().clone();
    let mut best = asc.best_primal().cloned();
    let infeasible = outcome.status == AscentStatus::Infeasible;
    if !infeasible && !config.skip_primal && best.is_none() {
        let mms = asc.min_marginals(&lambda);
        best = recover_primal(instance, &decomp, &mms, lower, &config.primal).best;
    }
    let (status, certified, gap) = if infeasible {
        (SolveStatus::Infeasible, false, None)
    } else {
        let verdict = best.as_ref().map(|(v, _)| certify(*v, lower, decomp.integral_costs));
        let gap = best.as_ref().map(|(v, _)| (v - lower).max(0.0));
        let certified = verdict == Some(Verdict::Optimal);
        let status = if certified {
            SolveStatus::Optimal
        } else if outcome.status == AscentStatus::TimeLimit {
            SolveStatus::Timeout
        } else if best.is_some() {
            SolveStatus::Gap
        } else {
            SolveStatus::BoundOnly
        };
        (status, certified, gap)
    };
    SolveResult {
        method,
        status,
        lower_bound: lower,
        primal_value: best.as_ref().map(|(v, _)| *v),
        labeling: best.map(|(_, l)| l),
        gap,
        certified,
        iterations: outcome.iterations,
        ascent_status: Some(outcome.status),
        nodes: None,
        wall_time: None,
        trace: asc.into_trace().entries,
        lambda: Some(lambda),
        config: config.clone(),
    }
}

fn solve_bnb(instance: &TomographyInstance, method: Method, config: &SolveConfig) -> SolveResult {
    let bnb = BnbConfig {
        root: config.effective_ascent(),
        node_iters: config.bnb_node_iters,
        node_limit: config.bnb_node_limit,
        time_limit_seconds: config.time_limit_seconds,
        primal: config.primal.clone(),
    };
    let res = branch_and_bound(instance, method.oracle(), &bnb);
    let status = match res.status {
        BnbStatus::Optimal => SolveStatus::Optimal,
        BnbStatus::Infeasible => SolveStatus::Infeasible,
        BnbStatus::Timeout => SolveStatus::Timeout,
    };
    let gap = res.best.as_ref().map(|(v, _)| (v - res.lower_bound).max(0.0));
    SolveResult {
        method,
        status,
        lower_bound: res.lower_bound,
        primal_value: res.best.as_ref().map(|(v, _)| *v),
        labeling: res.best.map(|(_, l)| l),
        gap,
        certified: status == SolveStatus::Optimal,
        iterations: res.root_trace.len(),
        ascent_status: None,
        nodes: Some(res.nodes_explored),
        wall_time: None,
        trace: res.root_trace,
        lambda: None,
        config: config.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Direction, Pairwise, Ray};

    fn prop1() -> TomographyInstance {
        let rays = vec![Ray {
            nodes: vec![0, 1],
            target: 1,
            direction: Direction::Horizontal,
        }];
        TomographyInstance::new(2, 1, 2, None, Pairwise::Potts(1.0), rays).unwrap()
    }

    #[test]
    fn two_pixel_separation_values() {
        let inst = prop1();
        let cfg = SolveConfig::default();
        let ctg = solve(&inst, Method::Ctg, &cfg);
        assert!((ctg.lower_bound - 1.0).abs() < 1e-9);
        assert_eq!(ctg.primal_value, Some(1.0));
        assert!(ctg.certified);
        let std = solve(&inst, Method::Std, &cfg);
        assert!(std.lower_bound.abs() < 1e-9);
        assert_eq!(std.primal_value, Some(1.0));
        assert!(!std.certified);
        for m in [Method::CtgBb, Method::StdBb] {
            let r = solve(&inst, m, &cfg);
            assert_eq!(r.primal_value, Some(1.0), "{m}");
            assert!(r.certified);
        }
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let (inst, _) = crate::dual::ascent_tests::small_instance(9, 4, 4, 3, &[Direction::Horizontal, Direction::Vertical]);
        let cfg = SolveConfig {
            deterministic: true,
            ..SolveConfig::default()
        };
        let a = solve(&inst, Method::Ctg, &cfg);
        let b = solve(&inst, Method::Ctg, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.wall_time, None);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("cplex".parse::<Method>().is_err());
    }
}
