//! Per-ray oracle for the local-polytope relaxation with the ray sum
//! enforced in expectation.
//!
//! On a chain the local polytope is integral, so the relaxed ray problem
//! equals `max_γ g(γ)` with
//! `g(γ) = min_x E(x) + γ (Σ x - b)`, a concave piecewise-linear function
//! whose slope at `γ` is `Σ x*(γ) - b`.

use crate::chain::{ChainSolution, ChainSubproblem, MinMarginals};

const INF: f64 = f64::INFINITY;

pub const DEFAULT_TOL: f64 = 1e-7;

/// Unconstrained chain optimum (Viterbi), smallest labeling among ties.
/// The target, if any, is ignored.
pub fn chain_map_dp(sub: &ChainSubproblem) -> ChainSolution {
    chain_map_dp_shifted(sub, 0.0)
}

/// Viterbi with every label `x` at every node charged an extra `gamma * x`.
fn chain_map_dp_shifted(sub: &ChainSubproblem, gamma: f64) -> ChainSolution {
    let (n, k) = (sub.len(), sub.k());
    let un = |i: usize, x: usize| sub.unary(i, x) + gamma * x as f64;
    // suffix[i][x]: cheapest nodes i+1.. given x_i = x
    let mut suffix = vec![0.0; n * k];
    for i in (0..n - 1).rev() {
        for x in 0..k {
            let mut best = INF;
            for y in 0..k {
                let v = sub.pair(i, x, y) + un(i + 1, y) + suffix[(i + 1) * k + y];
                if v < best {
                    best = v;
                }
            }
            suffix[i * k + x] = best;
        }
    }
    let mut labels = Vec::with_capacity(n);
    let mut value = 0.0;
    for i in 0..n {
        let mut best = (INF, 0);
        for x in 0..k {
            let step = if i == 0 { 0.0 } else { sub.pair(i - 1, labels[i - 1], x) };
            let v = step + un(i, x) + suffix[i * k + x];
            if v < best.0 {
                best = (v, x);
            }
        }
        if best.0 == INF {
            return ChainSolution::infeasible();
        }
        let step = if i == 0 { 0.0 } else { sub.pair(i - 1, labels[i - 1], best.1) };
        value += step + un(i, best.1);
        labels.push(best.1);
    }
    ChainSolution {
        value,
        labels: Some(labels),
    }
}

/// Unconstrained min-marginals with an extra `gamma * x` per label.
/// `optimum` is the shifted chain optimum.
pub fn chain_min_marginals(sub: &ChainSubproblem, gamma: f64) -> MinMarginals {
    let (n, k) = (sub.len(), sub.k());
    let un = |i: usize, x: usize| sub.unary(i, x) + gamma * x as f64;
    let mut fwd = vec![0.0; n * k];
    for x in 0..k {
        fwd[x] = un(0, x);
    }
    for i in 1..n {
        for x in 0..k {
            let best = (0..k)
                .map(|y| fwd[(i - 1) * k + y] + sub.pair(i - 1, y, x))
                .fold(INF, f64::min);
            fwd[i * k + x] = best + un(i, x);
        }
    }
    let mut bwd = vec![0.0; n * k];
    for i in (0..n - 1).rev() {
        for x in 0..k {
            bwd[i * k + x] = (0..k)
                .map(|y| sub.pair(i, x, y) + un(i + 1, y) + bwd[(i + 1) * k + y])
                .fold(INF, f64::min);
        }
    }
    let values: Vec<f64> = fwd.iter().zip(&bwd).map(|(f, b)| f + b).collect();
    let optimum = values[..k].iter().copied().fold(INF, f64::min);
    MinMarginals::new(k, values, optimum)
}

/// Result of maximizing the scalar dual of one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct StdRayDual {
    /// Best multiplier found.
    pub gamma: f64,
    /// `g(gamma)`: a valid lower bound within `tol` of `max g`.
    pub value: f64,
    /// Chain optimum at `gamma`.
    pub witness: Option<Vec<usize>>,
    /// Node marginals (`n × k`) of the relaxed optimum: a convex
    /// combination of the two witnesses bracketing the maximizer.
    pub marginals: Vec<f64>,
    /// Set when the target lies outside the achievable sum range, in which
    /// case `g` is unbounded and `value` is `+∞`.
    pub unbounded: bool,
}

struct Eval {
    gamma: f64,
    value: f64,
    slope: i64,
    labels: Vec<usize>,
}

/// Maximizes `g(γ)` for a targeted chain.
///
/// The search brackets the maximizer between a point of positive and a
/// point of negative slope and repeatedly evaluates the intersection of
/// the two supporting lines (bisection when that point is degenerate).
/// It stops on a zero slope, when the lines' intersection certifies the
/// best evaluated value to within `tol`, or when
/// `bracket width × max |slope| < tol`.
pub fn std_ray_value(sub: &ChainSubproblem, tol: f64) -> StdRayDual {
    let (n, k) = (sub.len(), sub.k());
    let Some(b) = sub.target else {
        let sol = chain_map_dp(sub);
        let marginals = indicator(sol.labels.as_deref(), n, k);
        return StdRayDual {
            gamma: 0.0,
            value: sol.value,
            witness: sol.labels,
            marginals,
            unbounded: false,
        };
    };

    // achievable range over labels with finite unary cost
    let mut lo_sum = 0u64;
    let mut hi_sum = 0u64;
    for i in 0..n {
        let allowed: Vec<usize> = (0..k).filter(|&x| sub.unary(i, x) < INF).collect();
        let (Some(&mn), Some(&mx)) = (allowed.first(), allowed.last()) else {
            return unbounded(n, k);
        };
        lo_sum += mn as u64;
        hi_sum += mx as u64;
    }
    if b < lo_sum || b > hi_sum {
        return unbounded(n, k);
    }

    let eval = |gamma: f64| -> Eval {
        let sol = chain_map_dp_shifted(sub, gamma);
        let labels = sol.labels.expect("every node has an allowed label");
        let sum: u64 = labels.iter().map(|&x| x as u64).sum();
        Eval {
            gamma,
            value: sol.value - gamma * b as f64,
            slope: sum as i64 - b as i64,
            labels,
        }
    };
    let finish = |best: &Eval, lo: Option<&Eval>, hi: Option<&Eval>| -> StdRayDual {
        let marginals = match (lo, hi) {
            (Some(lo), Some(hi)) if best.slope != 0 && lo.slope > 0 && hi.slope < 0 => {
                // weights with zero expected slope
                let w = -hi.slope as f64 / (lo.slope - hi.slope) as f64;
                let mut m = indicator(Some(&lo.labels), n, k);
                m.iter_mut().for_each(|v| *v *= w);
                for (i, &x) in hi.labels.iter().enumerate() {
                    m[i * k + x] += 1.0 - w;
                }
                m
            }
            _ => indicator(Some(&best.labels), n, k),
        };
        StdRayDual {
            gamma: best.gamma,
            value: best.value,
            witness: Some(best.labels.clone()),
            marginals,
            unbounded: false,
        }
    };

    let zero = eval(0.0);
    if zero.slope == 0 {
        return finish(&zero, None, None);
    }
    let spread = cost_spread(sub);
    let bound = spread * (2 * n) as f64 + 1.0;
    let max_slope = (n * (k - 1)).max(1) as f64;

    let (mut lo, mut hi) = if zero.slope > 0 {
        (zero, eval(bound))
    } else {
        (eval(-bound), zero)
    };
    // the bound makes the extreme slopes sign-definite; widen defensively
    let mut widen = 0;
    while (lo.slope < 0 || hi.slope > 0) && widen < 60 {
        let g = bound * 2f64.powi(widen + 1);
        if lo.slope < 0 {
            lo = eval(-g);
        }
        if hi.slope > 0 {
            hi = eval(g);
        }
        widen += 1;
    }
    for step in 0..200 {
        if lo.slope == 0 {
            return finish(&lo, None, None);
        }
        if hi.slope == 0 {
            return finish(&hi, None, None);
        }
        let best_is_lo = lo.value >= hi.value;
        let best_value = lo.value.max(hi.value);
        let (sl, sh) = (lo.slope as f64, hi.slope as f64);
        let cross = (hi.value - lo.value + sl * lo.gamma - sh * hi.gamma) / (sl - sh);
        let model = lo.value + sl * (cross - lo.gamma);
        if model - best_value <= tol || (hi.gamma - lo.gamma) * max_slope < tol {
            let best = if best_is_lo { &lo } else { &hi };
            return finish(best, Some(&lo), Some(&hi));
        }
        let width = hi.gamma - lo.gamma;
        let trial = if step % 4 == 3 || !(cross > lo.gamma + 1e-3 * width && cross < hi.gamma - 1e-3 * width) {
            0.5 * (lo.gamma + hi.gamma)
        } else {
            cross
        };
        let e = eval(trial);
        if e.slope > 0 {
            lo = e;
        } else if e.slope < 0 {
            hi = e;
        } else {
            return finish(&e, None, None);
        }
    }
    let best = if lo.value >= hi.value { &lo } else { &hi };
    finish(best, Some(&lo), Some(&hi))
}

fn unbounded(n: usize, k: usize) -> StdRayDual {
    StdRayDual {
        gamma: 0.0,
        value: INF,
        witness: None,
        marginals: vec![0.0; n * k],
        unbounded: true,
    }
}

fn indicator(labels: Option<&[usize]>, n: usize, k: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * k];
    if let Some(labels) = labels {
        for (i, &x) in labels.iter().enumerate() {
            m[i * k + x] = 1.0;
        }
    }
    m
}

/// Max minus min over the finite unary and pairwise entries.
fn cost_spread(sub: &ChainSubproblem) -> f64 {
    let (mut lo, mut hi) = (INF, -INF);
    let n = sub.len();
    for &c in sub.unary_costs() {
        if c < INF {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    for i in 0..n.saturating_sub(1) {
        for &c in sub.pair_table(i) {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Min-marginals of the Lagrangian chain at the returned multiplier, with
/// `optimum = g(γ)`; used for pruning and branching under this oracle.
pub fn std_min_marginals(sub: &ChainSubproblem, dual: &StdRayDual) -> MinMarginals {
    let mut mm = chain_min_marginals(sub, dual.gamma);
    if let Some(b) = sub.target {
        let offset = dual.gamma * b as f64;
        let k = mm.k();
        let values = (0..mm.len() * k).map(|i| mm.get(i / k, i % k) - offset).collect();
        mm = MinMarginals::new(k, values, dual.value);
    }
    mm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::solve_chain_dp_naive;
    use crate::chain::testing::{brute_force, potts, random_chain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prop1() -> ChainSubproblem {
        ChainSubproblem::zeros(2, 2, Some(1)).with_uniform_pairwise(&potts(2, 1.0))
    }

    #[test]
    fn map_zero_costs() {
        let sub = ChainSubproblem::zeros(5, 3, None);
        let sol = chain_map_dp(&sub);
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.labels, Some(vec![0; 5]));
    }

    #[test]
    fn map_potts_pair() {
        let mut sub = ChainSubproblem::zeros(2, 2, None).with_uniform_pairwise(&potts(2, 1.0));
        sub.unary_row_mut(0).copy_from_slice(&[0.0, -2.0]);
        let sol = chain_map_dp(&sub);
        assert_eq!(sol.value, -2.0);
        assert_eq!(sol.labels, Some(vec![1, 1]));
    }

    #[test]
    fn map_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let k = rng.gen_range(2..=4);
            let max_n = match k {
                2 => 12,
                3 => 8,
                _ => 6,
            };
            let n = rng.gen_range(1..=max_n);
            let mut sub = random_chain(&mut rng, n, k, 4);
            sub.target = None;
            let (v, lab) = brute_force(&sub);
            let sol = chain_map_dp(&sub);
            assert_eq!(sol.value, v);
            assert_eq!(sol.labels, lab);
        }
    }

    #[test]
    fn separation_example_is_zero() {
        let d = std_ray_value(&prop1(), DEFAULT_TOL);
        assert_eq!(d.value, 0.0);
        assert_eq!(d.gamma, 0.0);
        assert!(!d.unbounded);
    }

    #[test]
    fn fractional_optimum_closed_form() {
        let mut sub = prop1();
        sub.unary_row_mut(0).copy_from_slice(&[0.0, 0.5]);
        let d = std_ray_value(&sub, DEFAULT_TOL);
        assert!((d.value - 0.25).abs() <= 1e-9, "{}", d.value);
        assert!((d.gamma + 0.25).abs() <= 1e-6, "{}", d.gamma);
        assert_eq!(solve_chain_dp_naive(&sub).solution.value, 1.0);
        // marginals are a distribution per node with expected sum b
        let expected: f64 = (0..2).map(|i| d.marginals[i * 2 + 1]).sum();
        assert!((expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_target_forces_top_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sub = random_chain(&mut rng, 5, 3, 7);
        sub.target = Some(10);
        let d = std_ray_value(&sub, DEFAULT_TOL);
        assert!((d.value - sub.energy(&[2; 5])).abs() <= 1e-7);
    }

    #[test]
    fn unreachable_target_is_unbounded() {
        let sub = ChainSubproblem::zeros(3, 2, Some(4));
        let d = std_ray_value(&sub, DEFAULT_TOL);
        assert!(d.unbounded && d.value.is_infinite());
    }

    #[test]
    fn unconstrained_optimum_already_feasible() {
        let mut sub = ChainSubproblem::zeros(4, 3, Some(0)).with_uniform_pairwise(&potts(3, 1.0));
        sub.unary_row_mut(2).copy_from_slice(&[0.0, 1.0, 1.0]);
        let d = std_ray_value(&sub, DEFAULT_TOL);
        assert_eq!((d.value, d.gamma), (0.0, 0.0));
    }

    #[test]
    fn dominated_by_exact_value_and_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let n = rng.gen_range(1..=9);
            let k = rng.gen_range(2..=4);
            let sub = random_chain(&mut rng, n, k, 10);
            let exact = solve_chain_dp_naive(&sub).solution.value;
            let d = std_ray_value(&sub, DEFAULT_TOL);
            assert!(d.value <= exact + 1e-9, "{} > {}", d.value, exact);
            // value is g evaluated at gamma
            let again = chain_map_dp_shifted(&sub, d.gamma).value - d.gamma * sub.target.unwrap() as f64;
            assert!((again - d.value).abs() <= 1e-9);
            // no evaluated point beats it by more than tol
            for t in -40..=40 {
                let g = t as f64 * 0.37;
                let v = chain_map_dp_shifted(&sub, g).value - g * sub.target.unwrap() as f64;
                assert!(v <= d.value + DEFAULT_TOL + 1e-9, "g({g}) = {v} > {}", d.value);
            }
        }
    }

    #[test]
    fn std_min_marginals_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let sub = random_chain(&mut rng, 6, 3, 5);
            let d = std_ray_value(&sub, DEFAULT_TOL);
            let mm = std_min_marginals(&sub, &d);
            for i in 0..6 {
                let row_min = mm.row(i).iter().copied().fold(INF, f64::min);
                assert!((row_min - d.value).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unconstrained_min_marginals_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..60 {
            let mut sub = random_chain(&mut rng, 5, 3, 5);
            sub.target = None;
            let mm = chain_min_marginals(&sub, 0.0);
            for i in 0..5 {
                for x in 0..3 {
                    let mut fixed = sub.clone();
                    (0..3).filter(|&y| y != x).for_each(|y| fixed.unary_row_mut(i)[y] = INF);
                    assert_eq!(mm.get(i, x), brute_force(&fixed).0);
                }
            }
        }
    }
}
