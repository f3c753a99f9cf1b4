//! Primal heuristic: min-marginal pruning followed by an exact search over
//! the reduced label domains, and optimality certification.

use serde::{Deserialize, Serialize};

use crate::chain::MinMarginals;
use crate::dual::Decomposition;
use crate::instance::{Labeling, TomographyInstance};

/// Pruning thresholds as multiples of the median pairwise weight.
pub const EPSILON_SCHEDULE: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 5.0];

/// Margin below one that a duality gap must respect to certify integral
/// optimality.
pub const CERT_MARGIN: f64 = crate::dual::CERT_MARGIN;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Optimal,
    Gap { gap: f64 },
}

/// Decides whether `primal` is provably optimal given the lower bound
/// `dual`: with integral costs every energy is an integer, so a gap below
/// one closes it. Non-integral costs never certify this way.
pub fn certify(primal: f64, dual: f64, integral_costs: bool) -> Verdict {
    let gap = primal - dual;
    if integral_costs && gap < 1.0 - CERT_MARGIN {
        Verdict::Optimal
    } else {
        Verdict::Gap { gap: gap.max(0.0) }
    }
}

/// Label domain per node: a bitmask over at most 64 labels.
pub type Domains = Vec<u64>;

/// Keeps label `x` at node `u` iff its min-marginal gap is at most `eps` in
/// every subproblem containing `u`, and always keeps every label that is
/// optimal (gap zero) in at least one containing subproblem and feasible
/// (finite) in all of them, so no domain is empty unless the subproblems
/// admit no common label. With `eps = +∞` every
/// label is kept.
pub fn prune_labels(decomp: &Decomposition, mms: &[MinMarginals], eps: f64) -> Domains {
    let k = decomp.k;
    let mut domains = vec![0u64; decomp.num_nodes];
    for (u, members) in decomp.node_membership.iter().enumerate() {
        let mut keep = 0u64;
        for x in 0..k {
            let gaps = members.iter().map(|m| mms[m.sub].gap(m.pos, x));
            let (mut all_within, mut any_optimal, mut finite) = (true, false, true);
            for g in gaps {
                all_within &= g <= eps + 1e-9;
                any_optimal |= g <= 1e-9;
                finite &= g.is_finite();
            }
            if all_within || (any_optimal && finite) {
                keep |= 1 << x;
            }
        }
        domains[u] = keep;
    }
    domains
}

/// Outcome of the reduced exact search.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedSolution {
    pub best: Option<(f64, Labeling)>,
    /// `true` when the search finished, so `best` is optimal over the
    /// domains (or no feasible labeling exists within them).
    pub complete: bool,
    pub nodes_visited: usize,
}

/// Exact depth-first search for the lowest-energy feasible labeling within
/// `domains`, with ray-sum bound propagation and an energy lower bound.
/// Stops after `node_limit` search nodes. `cutoff` discards labelings with
/// energy at or above it.
pub fn solve_reduced(instance: &TomographyInstance, domains: &Domains, cutoff: f64, node_limit: usize) -> ReducedSolution {
    solve_reduced_guided(instance, domains, None, cutoff, node_limit)
}

/// [`solve_reduced`] with a search guide: per `(node, label)` preference
/// costs (`num_nodes × k`, lower is better), typically aggregated
/// min-marginals. The guide only orders the search; the result within a
/// complete search is the same.
pub fn solve_reduced_guided(
    instance: &TomographyInstance,
    domains: &Domains,
    guide: Option<&[f64]>,
    cutoff: f64,
    node_limit: usize,
) -> ReducedSolution {
    let mut search = Search::new(instance, cutoff, node_limit);
    search.guide = guide;
    let mut doms = domains.clone();
    if search.propagate(&mut doms) {
        search.dfs(doms);
    }
    ReducedSolution {
        best: search.best.map(|(v, l)| (v, Labeling(l))),
        complete: !search.aborted,
        nodes_visited: search.visited,
    }
}

struct Search<'a> {
    inst: &'a TomographyInstance,
    k: usize,
    /// Rays containing each node.
    node_rays: Vec<Vec<usize>>,
    /// `(edge index, other endpoint)` per node.
    adjacency: Vec<Vec<(usize, usize)>>,
    edges: Vec<(usize, usize)>,
    guide: Option<&'a [f64]>,
    best: Option<(f64, Vec<usize>)>,
    cutoff: f64,
    visited: usize,
    limit: usize,
    aborted: bool,
}

fn single(d: u64) -> Option<usize> {
    (d.count_ones() == 1).then(|| d.trailing_zeros() as usize)
}

impl<'a> Search<'a> {
    fn new(inst: &'a TomographyInstance, cutoff: f64, limit: usize) -> Self {
        let n = inst.num_nodes();
        let mut node_rays = vec![Vec::new(); n];
        for (r, ray) in inst.rays().iter().enumerate() {
            for &u in &ray.nodes {
                node_rays[u].push(r);
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        let edges: Vec<(usize, usize)> = inst.edges().iter().map(|e| (e.u, e.v)).collect();
        for (e, &(u, v)) in edges.iter().enumerate() {
            adjacency[u].push((e, v));
            adjacency[v].push((e, u));
        }
        Search {
            inst,
            k: inst.k(),
            node_rays,
            adjacency,
            edges,
            guide: None,
            best: None,
            cutoff,
            visited: 0,
            limit,
            aborted: false,
        }
    }

    fn bound(&self) -> f64 {
        self.best.as_ref().map_or(self.cutoff, |(v, _)| v.min(self.cutoff))
    }

    /// Bound-consistency on every ray sum; returns `false` on a wipe-out.
    fn propagate(&self, doms: &mut Domains) -> bool {
        let rays = self.inst.rays();
        let mut queue: Vec<usize> = (0..rays.len()).collect();
        let mut queued = vec![true; rays.len()];
        while let Some(r) = queue.pop() {
            queued[r] = false;
            let ray = &rays[r];
            let (mut lo, mut hi) = (0u64, 0u64);
            for &u in &ray.nodes {
                let d = doms[u];
                if d == 0 {
                    return false;
                }
                lo += d.trailing_zeros() as u64;
                hi += 63 - d.leading_zeros() as u64;
            }
            if lo > ray.target || hi < ray.target {
                return false;
            }
            for &u in &ray.nodes {
                let d = doms[u];
                let (dmin, dmax) = (d.trailing_zeros() as u64, 63 - d.leading_zeros() as u64);
                let (rest_lo, rest_hi) = (lo - dmin, hi - dmax);
                let mut nd = 0u64;
                for x in 0..self.k {
                    if d & (1 << x) != 0 {
                        let x64 = x as u64;
                        if rest_lo + x64 <= ray.target && rest_hi + x64 >= ray.target {
                            nd |= 1 << x;
                        }
                    }
                }
                if nd != d {
                    if nd == 0 {
                        return false;
                    }
                    doms[u] = nd;
                    lo = rest_lo + nd.trailing_zeros() as u64;
                    hi = rest_hi + 63 - nd.leading_zeros() as u64;
                    for &r2 in &self.node_rays[u] {
                        if r2 != r && !queued[r2] {
                            queued[r2] = true;
                            queue.push(r2);
                        }
                    }
                }
            }
        }
        true
    }

    /// Lower bound on the energy of any labeling within `doms`.
    fn energy_bound(&self, doms: &Domains) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for (u, &d) in doms.iter().enumerate() {
            total += (0..k)
                .filter(|x| d & (1 << x) != 0)
                .map(|x| self.inst.unary(u, x))
                .fold(f64::INFINITY, f64::min);
        }
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let (du, dv) = (doms[u], doms[v]);
            let mut best = f64::INFINITY;
            for a in (0..k).filter(|a| du & (1 << a) != 0) {
                for b in (0..k).filter(|b| dv & (1 << b) != 0) {
                    best = best.min(self.inst.pairwise_cost(e, a, b));
                }
            }
            total += best;
        }
        total
    }

    fn dfs(&mut self, doms: Domains) {
        if self.aborted {
            return;
        }
        self.visited += 1;
        if self.visited > self.limit {
            self.aborted = true;
            return;
        }
        let lb = self.energy_bound(&doms);
        if lb >= self.bound() - 1e-12 {
            return;
        }
        // Branch on the smallest open domain; among those, on the node the
        // guide is most decided about.
        let k = self.k;
        let regret = |u: usize, d: u64| -> f64 {
            let Some(g) = self.guide else { return 0.0 };
            let (mut a, mut b) = (f64::INFINITY, f64::INFINITY);
            for x in (0..k).filter(|x| d & (1 << x) != 0) {
                let c = g[u * k + x];
                if c < a {
                    b = a;
                    a = c;
                } else if c < b {
                    b = c;
                }
            }
            if b.is_finite() { b - a } else { f64::INFINITY }
        };
        let mut pick: Option<(u32, f64, usize)> = None;
        for (u, &d) in doms.iter().enumerate() {
            let c = d.count_ones();
            if c < 2 {
                continue;
            }
            let r = regret(u, d);
            let better = match pick {
                None => true,
                Some((pc, pr, _)) => c < pc || (c == pc && r > pr),
            };
            if better {
                pick = Some((c, r, u));
            }
        }
        let pick = pick.map(|(_, _, u)| u);
        let Some(u) = pick else {
            let labels: Vec<usize> = doms.iter().map(|&d| single(d).expect("assigned")).collect();
            let energy = lb;
            if energy < self.bound() {
                self.best = Some((energy, labels));
            }
            return;
        };
        // Try labels in order of their local cost contribution.
        let mut order: Vec<(f64, f64, usize)> = (0..self.k)
            .filter(|x| doms[u] & (1 << x) != 0)
            .map(|x| {
                let mut c = self.inst.unary(u, x);
                for &(e, v) in &self.adjacency[u] {
                    let forward = self.edges[e].0 == u;
                    let dv = doms[v];
                    let m = (0..self.k)
                        .filter(|y| dv & (1 << y) != 0)
                        .map(|y| {
                            if forward {
                                self.inst.pairwise_cost(e, x, y)
                            } else {
                                self.inst.pairwise_cost(e, y, x)
                            }
                        })
                        .fold(f64::INFINITY, f64::min);
                    c += m;
                }
                let g = self.guide.map_or(0.0, |g| g[u * k + x]);
                (g, c, x)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, _, x) in order {
            let mut next = doms.clone();
            next[u] = 1 << x;
            if self.propagate(&mut next) {
                self.dfs(next);
            }
            if self.aborted {
                return;
            }
        }
    }
}

/// Summed min-marginal gaps per `(node, label)` over all memberships.
pub fn aggregated_min_marginals(decomp: &Decomposition, mms: &[MinMarginals]) -> Vec<f64> {
    let k = decomp.k;
    let mut agg = vec![0.0; decomp.num_nodes * k];
    for (u, members) in decomp.node_membership.iter().enumerate() {
        for x in 0..k {
            agg[u * k + x] = members.iter().map(|m| mms[m.sub].gap(m.pos, x)).sum();
        }
    }
    agg
}

/// Large-neighbourhood search: repeatedly re-solves every `window ×
/// window` block exactly with all pixels outside it fixed, accepting strict
/// improvements, until a full sweep changes nothing. Feasibility is kept
/// since every block solve respects all ray sums.
pub fn improve_by_windows(
    instance: &TomographyInstance,
    mut value: f64,
    mut labeling: Labeling,
    window: usize,
    node_limit: usize,
) -> (f64, Labeling) {
    let (w, h, k) = (instance.width(), instance.height(), instance.k());
    if window == 0 {
        return (value, labeling);
    }
    let (ww, wh) = (window.min(w), window.min(h));
    let stride = (window / 2).max(1);
    let starts = |len: usize, win: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..=len - win).step_by(stride).collect();
        if *v.last().unwrap() != len - win {
            v.push(len - win);
        }
        v
    };
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    loop {
        let mut improved = false;
        for &y0 in &starts(h, wh) {
            for &x0 in &starts(w, ww) {
                let mut doms: Domains = labeling.iter().map(|&x| 1u64 << x).collect();
                for y in y0..y0 + wh {
                    for x in x0..x0 + ww {
                        doms[instance.node_id(x, y)] = full;
                    }
                }
                let sol = solve_reduced(instance, &doms, value, node_limit);
                if let Some((v, l)) = sol.best {
                    if v < value {
                        value = v;
                        labeling = l;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            return (value, labeling);
        }
    }
}

/// Tunables of the primal heuristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalConfig {
    pub schedule: Vec<f64>,
    /// Search-node budget per reduced problem.
    pub node_limit: usize,
    /// Keep widening the domains after the first feasible labeling until
    /// the incumbent is certified against the dual bound (or the schedule
    /// ends); otherwise stop at the first feasible threshold.
    pub until_certified: bool,
    /// Side of the square windows re-optimized by local search after each
    /// feasible labeling; zero disables local search.
    pub window: usize,
    /// Search-node budget per window.
    pub window_node_limit: usize,
}

impl Default for PrimalConfig {
    fn default() -> Self {
        PrimalConfig {
            schedule: EPSILON_SCHEDULE.to_vec(),
            node_limit: 20_000,
            until_certified: true,
            window: 4,
            window_node_limit: 5_000,
        }
    }
}

/// Result of the primal heuristic.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalRecovery {
    pub best: Option<(f64, Labeling)>,
    /// Threshold at which `best` was found.
    pub epsilon: Option<f64>,
    pub domain_sizes: Vec<usize>,
}

/// Runs the pruning schedule: each threshold widens the domains and the
/// reduced problem is solved exactly (within the node budget). Stops at the
/// first threshold admitting a feasible labeling, or, with
/// `until_certified`, once the incumbent is certified against `dual`.
pub fn recover_primal(
    instance: &TomographyInstance,
    decomp: &Decomposition,
    mms: &[MinMarginals],
    dual: f64,
    config: &PrimalConfig,
) -> PrimalRecovery {
    let scale = instance.pairwise().median_weight().max(f64::MIN_POSITIVE);
    let integral = instance.has_integral_costs();
    let mut out = PrimalRecovery {
        best: None,
        epsilon: None,
        domain_sizes: Vec::new(),
    };
    let guide = aggregated_min_marginals(decomp, mms);
    let mut last: Option<Domains> = None;
    for &factor in &config.schedule {
        let eps = factor * scale;
        let domains = prune_labels(decomp, mms, eps);
        out.domain_sizes.push(domains.iter().map(|d| d.count_ones() as usize).sum());
        if last.as_ref() == Some(&domains) {
            continue;
        }
        let cutoff = out.best.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        let sol = solve_reduced_guided(instance, &domains, Some(&guide), cutoff, config.node_limit);
        last = Some(domains);
        if let Some((v, l)) = sol.best {
            let (v, l) = improve_by_windows(instance, v, l, config.window, config.window_node_limit);
            out.best = Some((v, l));
            out.epsilon = Some(eps);
        }
        let Some((v, _)) = &out.best else { continue };
        if !config.until_certified || certify(*v, dual, integral) == Verdict::Optimal {
            break;
        }
    }
    out
}
