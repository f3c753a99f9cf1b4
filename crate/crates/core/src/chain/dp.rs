use super::{ChainSolution, ChainSubproblem};

const INF: f64 = f64::INFINITY;

/// Forward/backward state costs over (position, label, partial sum).
///
/// `forward(i, x, s)`: cheapest prefix `0..=i` with `x_i = x` and
/// `Σ_{0..=i} x = s`. `backward(i, x, r)`: cheapest suffix `i+1..n` with
/// `x_i = x` fixed and `Σ_{i+1..n} x = r`, including the pair `(i, i+1)`.
/// Sums are capped at `cap` (the target, when one is present).
#[derive(Clone, Debug)]
pub struct DpTables {
    k: usize,
    cap: usize,
    forward: Vec<f64>,
    backward: Vec<f64>,
}

impl DpTables {
    #[inline]
    fn at(&self, i: usize, x: usize, s: usize) -> usize {
        (i * self.k + x) * (self.cap + 1) + s
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn forward(&self, i: usize, x: usize, s: usize) -> f64 {
        self.forward[self.at(i, x, s)]
    }

    pub fn backward(&self, i: usize, x: usize, r: usize) -> f64 {
        self.backward[self.at(i, x, r)]
    }

    fn build(sub: &ChainSubproblem, cap: usize) -> Self {
        let (n, k) = (sub.len(), sub.k());
        let width = cap + 1;
        let mut t = DpTables {
            k,
            cap,
            forward: vec![INF; n * k * width],
            backward: vec![INF; n * k * width],
        };
        for x in 0..k.min(cap + 1) {
            let idx = t.at(0, x, x);
            t.forward[idx] = sub.unary(0, x);
        }
        for i in 1..n {
            for x in 0..k {
                let un = sub.unary(i, x);
                if un == INF {
                    continue;
                }
                for s in x..=cap {
                    let mut best = INF;
                    for xp in 0..k {
                        let prev = t.forward[t.at(i - 1, xp, s - x)];
                        if prev < INF {
                            let v = prev + sub.pair(i - 1, xp, x);
                            if v < best {
                                best = v;
                            }
                        }
                    }
                    if best < INF {
                        let idx = t.at(i, x, s);
                        t.forward[idx] = best + un;
                    }
                }
            }
        }
        for x in 0..k {
            let idx = t.at(n - 1, x, 0);
            t.backward[idx] = 0.0;
        }
        for i in (0..n - 1).rev() {
            for x in 0..k {
                for r in 0..=cap {
                    let mut best = INF;
                    for xn in 0..k.min(r + 1) {
                        let next = t.backward[t.at(i + 1, xn, r - xn)];
                        let un = sub.unary(i + 1, xn);
                        if next < INF && un < INF {
                            let v = sub.pair(i, x, xn) + un + next;
                            if v < best {
                                best = v;
                            }
                        }
                    }
                    let idx = t.at(i, x, r);
                    t.backward[idx] = best;
                }
            }
        }
        t
    }
}

#[derive(Clone, Debug)]
pub struct DpSolution {
    pub solution: ChainSolution,
    pub tables: DpTables,
}

/// `min_{x_i = x}` chain energy subject to the target, per (node, label).
#[derive(Clone, Debug, PartialEq)]
pub struct MinMarginals {
    k: usize,
    values: Vec<f64>,
    pub optimum: f64,
}

impl MinMarginals {
    pub fn new(k: usize, values: Vec<f64>, optimum: f64) -> Self {
        MinMarginals { k, values, optimum }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, x: usize) -> f64 {
        self.values[i * self.k + x]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// `get(i, x) - optimum`, the cost of forcing label `x` at node `i`.
    pub fn gap(&self, i: usize, x: usize) -> f64 {
        self.get(i, x) - self.optimum
    }
}

fn cap_for(sub: &ChainSubproblem) -> Option<usize> {
    let max = sub.max_sum();
    match sub.target {
        Some(b) if b > max => None,
        Some(b) => Some(b as usize),
        None => Some(max as usize),
    }
}

/// Exact optimum by dynamic programming over (label, prefix sum).
///
/// Among optimal labelings the lexicographically smallest is returned.
/// Without a target the sum is unconstrained.
pub fn solve_chain_dp_naive(sub: &ChainSubproblem) -> DpSolution {
    let Some(cap) = cap_for(sub) else {
        return DpSolution {
            solution: ChainSolution::infeasible(),
            tables: DpTables::build(sub, 0),
        };
    };
    let tables = DpTables::build(sub, cap);
    let (n, k) = (sub.len(), sub.k());
    // remaining budget for the suffix after position i: any value when unconstrained
    let suffix = |i: usize, x: usize, r: Option<usize>| -> f64 {
        match r {
            Some(r) => tables.backward(i, x, r),
            None => (0..=cap).map(|r| tables.backward(i, x, r)).fold(INF, f64::min),
        }
    };
    let mut labels = Vec::with_capacity(n);
    let mut used = 0usize;
    let mut value = 0.0;
    for i in 0..n {
        let mut best = (INF, usize::MAX);
        for x in 0..k {
            if used + x > cap {
                break;
            }
            let rem = sub.target.map(|_| cap - used - x);
            let step = if i == 0 { 0.0 } else { sub.pair(i - 1, labels[i - 1], x) };
            let v = step + sub.unary(i, x) + suffix(i, x, rem);
            if v < best.0 {
                best = (v, x);
            }
        }
        if best.0 == INF {
            return DpSolution {
                solution: ChainSolution::infeasible(),
                tables,
            };
        }
        let x = best.1;
        let step = if i == 0 { 0.0 } else { sub.pair(i - 1, labels[i - 1], x) };
        value += step + sub.unary(i, x);
        used += x;
        labels.push(x);
    }
    DpSolution {
        solution: ChainSolution {
            value,
            labels: Some(labels),
        },
        tables,
    }
}

/// Min-marginals from the forward/backward tables of the naive DP.
pub fn min_marginals(sub: &ChainSubproblem) -> MinMarginals {
    let (n, k) = (sub.len(), sub.k());
    let Some(cap) = cap_for(sub) else {
        return MinMarginals::new(k, vec![INF; n * k], INF);
    };
    let t = DpTables::build(sub, cap);
    let mut values = vec![INF; n * k];
    for i in 0..n {
        for x in 0..k {
            let mut best = INF;
            for s in 0..=cap {
                let f = t.forward(i, x, s);
                if f == INF {
                    continue;
                }
                let b = match sub.target {
                    Some(_) => t.backward(i, x, cap - s),
                    None => (0..=cap - s).map(|r| t.backward(i, x, r)).fold(INF, f64::min),
                };
                if f + b < best {
                    best = f + b;
                }
            }
            values[i * k + x] = best;
        }
    }
    let optimum = values[..k].iter().copied().fold(INF, f64::min);
    MinMarginals::new(k, values, optimum)
}
