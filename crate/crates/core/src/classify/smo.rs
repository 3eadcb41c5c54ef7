//! Sequential minimal optimisation for the C-SVC dual
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a   s.t.  y^T a = 0,  0 <= a_i <= C_i
//! ```
//!
//! with `Q_ij = y_i y_j K_ij`, using second-order working-set selection.

use alloc::vec;
use alloc::vec::Vec;

/// Curvature floor for non-positive second derivatives.
const TAU: f64 = 1e-12;

/// Binary problem over a subset of a precomputed Gram matrix.
pub struct BinaryProblem<'a, K: Fn(usize, usize) -> f64> {
    /// Kernel between local indices.
    pub kernel: &'a K,
    pub y: &'a [f64],
    /// Box bound of each sample.
    pub c: &'a [f64],
    pub eps: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// `rho` of the decision `sum a_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    pub objective: f64,
    /// Maximal KKT violation `m(a) - M(a)` at exit.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<K: Fn(usize, usize) -> f64> BinaryProblem<'_, K> {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * (self.kernel)(i, j)
    }

    fn is_upper(&self, alpha: &[f64], i: usize) -> bool {
        alpha[i] >= self.c[i]
    }

    fn is_lower(alpha: &[f64], i: usize) -> bool {
        alpha[i] <= 0.0
    }

    /// Second-order working set; `None` once the gap is below `eps`.
    fn select(&self, alpha: &[f64], g: &[f64], qd: &[f64]) -> (Option<(usize, usize)>, f64) {
        let n = self.y.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = None;
        for t in 0..n {
            if self.y[t] > 0.0 {
                if !self.is_upper(alpha, t) && -g[t] >= gmax {
                    gmax = -g[t];
                    gmax_idx = Some(t);
                }
            } else if !Self::is_lower(alpha, t) && g[t] >= gmax {
                gmax = g[t];
                gmax_idx = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best = None;
        let mut obj_min = f64::INFINITY;
        let i = gmax_idx;
        for j in 0..n {
            let grad_diff = if self.y[j] > 0.0 {
                if Self::is_lower(alpha, j) {
                    continue;
                }
                gmax2 = gmax2.max(g[j]);
                gmax + g[j]
            } else {
                if self.is_upper(alpha, j) {
                    continue;
                }
                gmax2 = gmax2.max(-g[j]);
                gmax - g[j]
            };
            if let (true, Some(i)) = (grad_diff > 0.0, i) {
                // second derivative along the feasible direction
                let quad = qd[i] + qd[j] - 2.0 * (self.kernel)(i, j);
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    best = Some(j);
                }
            }
        }
        let gap = gmax + gmax2;
        match (i, best) {
            (Some(i), Some(j)) if gap >= self.eps => (Some((i, j)), gap),
            _ => (None, gap),
        }
    }

    fn rho(&self, alpha: &[f64], g: &[f64]) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for i in 0..self.y.len() {
            let yg = self.y[i] * g[i];
            if self.is_upper(alpha, i) {
                if self.y[i] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if Self::is_lower(alpha, i) {
                if self.y[i] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        if free > 0 {
            sum_free / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }

    pub fn solve(&self) -> DualSolution {
        let n = self.y.len();
        let qd: Vec<f64> = (0..n).map(|i| (self.kernel)(i, i)).collect();
        let mut alpha = vec![0.0; n];
        let mut g = vec![-1.0; n];
        let mut iterations = 0;
        let mut converged = false;
        let mut gap;
        loop {
            let (ws, current_gap) = self.select(&alpha, &g, &qd);
            gap = current_gap.max(0.0);
            let Some((i, j)) = ws else {
                converged = true;
                break;
            };
            if iterations >= self.max_iter {
                break;
            }
            iterations += 1;
            let (ci, cj) = (self.c[i], self.c[j]);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let kij = (self.kernel)(i, j);
            if self.y[i] != self.y[j] {
                let quad = qd[i] + qd[j] - 2.0 * kij;
                let quad = if quad > 0.0 { quad } else { TAU };
                let delta = (-g[i] - g[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > ci - cj {
                    if alpha[i] > ci {
                        alpha[i] = ci;
                        alpha[j] = ci - diff;
                    }
                } else if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = cj + diff;
                }
            } else {
                let quad = qd[i] + qd[j] - 2.0 * kij;
                let quad = if quad > 0.0 { quad } else { TAU };
                let delta = (g[i] - g[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > ci {
                    if alpha[i] > ci {
                        alpha[i] = ci;
                        alpha[j] = sum - ci;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > cj {
                    if alpha[j] > cj {
                        alpha[j] = cj;
                        alpha[i] = sum - cj;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for (t, gt) in g.iter_mut().enumerate() {
                *gt += self.q(i, t) * di + self.q(j, t) * dj;
            }
        }
        let objective = alpha
            .iter()
            .zip(&g)
            .map(|(a, gi)| a * (gi - 1.0))
            .sum::<f64>()
            / 2.0;
        let rho = self.rho(&alpha, &g);
        DualSolution {
            alpha,
            rho,
            objective,
            gap,
            iterations,
            converged,
        }
    }
}

/// `1/2 a^T Q a - sum a` evaluated directly.
pub fn dual_objective<K: Fn(usize, usize) -> f64>(kernel: &K, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel(i, j);
        }
    }
    quad / 2.0 - alpha.iter().sum::<f64>()
}
