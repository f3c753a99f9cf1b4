//! Proximal bundle method for the concave dual.
//!
//! Every evaluation yields a cut `f(λ) ≤ b_j + ⟨g_j, λ⟩`. Around the
//! stability center `c` the next trial point maximizes the cutting-plane
//! model minus `‖λ - c‖² / (2t)`; its dual is a quadratic program over the
//! simplex, solved here by accelerated projected gradient.

use super::ascent::LagrangeState;

/// Fraction of the predicted increase a trial must realize to become the
/// new center.
const SERIOUS_FRACTION: f64 = 0.1;
const QP_ITERS: usize = 400;
const QP_TOL: f64 = 1e-12;
const T_MIN: f64 = 1e-4;
/// Consecutive null steps after which the prox step is halved.
const NULLS_BEFORE_SHRINK: usize = 20;
const T_MAX: f64 = 1e4;

struct Cut {
    grad: Vec<Vec<f64>>,
    offset: f64,
    weight: f64,
}

pub(crate) struct Bundle {
    size: usize,
    t: f64,
    cuts: Vec<Cut>,
    /// Convex combination of the cuts active at the last trial point; it
    /// preserves the model's information when cuts are dropped.
    aggregate: Option<Cut>,
    center: Option<(LagrangeState, f64)>,
    nulls: usize,
}

impl Bundle {
    pub fn new(size: usize, t: f64) -> Self {
        Bundle {
            size: size.max(2),
            t: t.clamp(T_MIN, T_MAX),
            cuts: Vec::new(),
            aggregate: None,
            center: None,
            nulls: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn center(&self) -> Option<&LagrangeState> {
        self.center.as_ref().map(|(c, _)| c)
    }

    pub fn center_value(&self) -> f64 {
        self.center.as_ref().map_or(f64::NEG_INFINITY, |(_, v)| *v)
    }

    /// Aggregated direction, step scale and predicted increase of the next
    /// trial point.
    pub fn direction(&mut self) -> (Vec<Vec<f64>>, f64, f64) {
        let (center, fc) = self.center.as_ref().expect("bundle has a center");
        let model: Vec<&Cut> = self.cuts.iter().chain(self.aggregate.as_ref()).collect();
        let gaps: Vec<f64> = model
            .iter()
            .map(|c| (c.offset + LagrangeState::dot(&c.grad, &center.lambda) - fc).max(0.0))
            .collect();
        let m = model.len();
        let mut gram = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = LagrangeState::dot(&model[i].grad, &model[j].grad);
                gram[i * m + j] = v;
                gram[j * m + i] = v;
            }
        }
        let theta = simplex_qp(&gaps, &gram, self.t);
        let mut dir: Vec<Vec<f64>> = model[0].grad.iter().map(|r| vec![0.0; r.len()]).collect();
        let mut offset = 0.0;
        for (c, &w) in model.iter().zip(&theta) {
            if w == 0.0 {
                continue;
            }
            offset += w * c.offset;
            for (d, g) in dir.iter_mut().zip(&c.grad) {
                d.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
            }
        }
        let norm2 = LagrangeState::dot(&dir, &dir);
        let lin: f64 = theta.iter().zip(&gaps).map(|(w, a)| w * a).sum();
        for (c, &w) in self.cuts.iter_mut().zip(&theta) {
            c.weight = w;
        }
        self.aggregate = Some(Cut {
            grad: dir.clone(),
            offset,
            weight: 0.0,
        });
        // `model(c + t·dir) - f(c)` at the QP optimum.
        let predicted = lin + self.t * norm2;
        (dir, self.t, predicted)
    }

    /// Adds the cut from evaluating `trial` and applies the serious/null
    /// step test.
    pub fn add(&mut self, trial: LagrangeState, value: f64, grad: Vec<Vec<f64>>, predicted: f64) {
        let offset = value - LagrangeState::dot(&grad, &trial.lambda);
        if self.cuts.len() >= self.size {
            // Drop the oldest inactive cut, or the oldest if all are active.
            let idx = self.cuts.iter().position(|c| c.weight == 0.0).unwrap_or(0);
            self.cuts.remove(idx);
        }
        self.cuts.push(Cut {
            grad,
            offset,
            weight: 0.0,
        });
        match &self.center {
            None => self.center = Some((trial, value)),
            Some((_, fc)) => {
                let gain = value - fc;
                if gain >= SERIOUS_FRACTION * predicted {
                    if predicted > 0.0 && gain >= 0.8 * predicted {
                        self.t = (self.t * 2.0).min(T_MAX);
                    }
                    self.center = Some((trial, value));
                    self.nulls = 0;
                } else {
                    self.nulls += 1;
                    if self.nulls >= NULLS_BEFORE_SHRINK {
                        self.t = (self.t * 0.5).max(T_MIN);
                        self.nulls = 0;
                    }
                }
            }
        }
    }
}

/// Minimizes `⟨a, θ⟩ + (t/2) θᵀ Q θ` over the probability simplex.
pub(crate) fn simplex_qp(a: &[f64], q: &[f64], t: f64) -> Vec<f64> {
    let m = a.len();
    if m == 1 {
        return vec![1.0];
    }
    let lipschitz = t * (0..m).map(|i| q[i * m + i]).sum::<f64>().max(1e-300);
    let grad = |th: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| a[i] + t * (0..m).map(|j| q[i * m + j] * th[j]).sum::<f64>())
            .collect()
    };
    let objective = |th: &[f64]| -> f64 {
        let lin: f64 = a.iter().zip(th).map(|(x, y)| x * y).sum();
        let quad: f64 = (0..m)
            .map(|i| th[i] * (0..m).map(|j| q[i * m + j] * th[j]).sum::<f64>())
            .sum();
        lin + 0.5 * t * quad
    };
    let mut theta = vec![0.0; m];
    theta[m - 1] = 1.0;
    let mut y = theta.clone();
    let mut s = 1.0f64;
    let mut prev = objective(&theta);
    for _ in 0..QP_ITERS {
        let g = grad(&y);
        let z: Vec<f64> = y.iter().zip(&g).map(|(v, d)| v - d / lipschitz).collect();
        let next = project_simplex(&z);
        let s_next = (1.0 + (1.0 + 4.0 * s * s).sqrt()) / 2.0;
        let beta = (s - 1.0) / s_next;
        y = next
            .iter()
            .zip(&theta)
            .map(|(n, o)| n + beta * (n - o))
            .collect();
        theta = next;
        s = s_next;
        let val = objective(&theta);
        if (prev - val).abs() <= QP_TOL * (1.0 + val.abs()) {
            break;
        }
        prev = val;
    }
    theta
}

/// Euclidean projection onto `{θ ≥ 0, Σθ = 1}`.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cum += x;
        let cand = (cum - 1.0) / (i + 1) as f64;
        if x - cand > 0.0 {
            tau = cand;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        let p = project_simplex(&[0.5, 2.0, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let p = project_simplex(&[0.3, 0.3, 0.3]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn qp_matches_closed_form_on_two_cuts() {
        // Cuts g1 = +1, g2 = -1 (1-D), equal gaps: the optimum balances them.
        let q = [1.0, -1.0, -1.0, 1.0];
        let th = simplex_qp(&[0.0, 0.0], &q, 1.0);
        assert!((th[0] - 0.5).abs() < 1e-6, "{th:?}");
        // A large gap on cut 1 pushes weight onto cut 2.
        let th = simplex_qp(&[10.0, 0.0], &q, 1.0);
        assert!(th[1] > 0.99, "{th:?}");
    }
}
