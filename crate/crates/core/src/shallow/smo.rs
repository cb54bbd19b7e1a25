//! RBF kernel and a binary C-SVM dual solver (sequential minimal optimization
//! with maximal-violating-pair working-set selection).

use std::collections::{HashMap, VecDeque};

use log::warn;

use crate::error::{Error, Result};

/// `exp(−γ‖a−b‖²)`.
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Kernel rows computed on demand, most recent rows kept up to a byte budget.
struct KernelCache<'a> {
    rows: &'a [Vec<f64>],
    gamma: f64,
    capacity: usize,
    cached: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
}

const CACHE_BYTES: usize = 256 << 20;

impl<'a> KernelCache<'a> {
    fn new(rows: &'a [Vec<f64>], gamma: f64) -> Self {
        let per_row = rows.len().max(1) * std::mem::size_of::<f64>();
        let capacity = (CACHE_BYTES / per_row).max(2);
        KernelCache { rows, gamma, capacity, cached: HashMap::new(), order: VecDeque::new() }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.cached.contains_key(&i) {
            if self.cached.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.cached.remove(&old);
                }
            }
            let xi = &self.rows[i];
            let r = self.rows.iter().map(|xj| rbf(xi, xj, self.gamma)).collect();
            self.cached.insert(i, r);
            self.order.push_back(i);
        }
        &self.cached[&i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    pub gamma: f64,
    /// Stop once the maximal KKT violation `m(α) − M(α)` drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SmoParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        SmoParams { c, gamma, tolerance: 1e-3, max_iterations: 10_000_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Dual solution of one binary machine. The decision function is
/// `f(x) = Σ αᵢ yᵢ k(xᵢ, x) − ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `Σα − ½ αᵀQα` with `Qᵢⱼ = yᵢyⱼk(xᵢ, xⱼ)`.
    pub dual_objective: f64,
}

impl BinarySolution {
    pub fn decision(&self, rows: &[Vec<f64>], y: &[f64], gamma: f64, x: &[f64]) -> f64 {
        let s: f64 = self
            .alpha
            .iter()
            .zip(rows.iter().zip(y))
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, (xi, yi))| a * yi * rbf(xi, x, gamma))
            .sum();
        s - self.rho
    }
}

/// `Σα − ½ αᵀQα` evaluated directly.
pub fn dual_objective(rows: &[Vec<f64>], y: &[f64], gamma: f64, alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for i in 0..rows.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..rows.len() {
            if alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf(&rows[i], &rows[j], gamma);
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

const TAU: f64 = 1e-12;

/// Solves `max Σα − ½ αᵀQα` s.t. `0 ≤ α ≤ C`, `Σ αᵢyᵢ = 0` for labels `y ∈ {−1, +1}`.
pub fn solve_binary(rows: &[Vec<f64>], y: &[f64], params: &SmoParams) -> Result<BinarySolution> {
    params.validate()?;
    let n = rows.len();
    if n != y.len() {
        return Err(Error::invalid(format!("{n} rows vs {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid("binary labels must be +1 or -1"));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::invalid("binary problem needs both classes"));
    }
    let c = params.c;
    let mut cache = KernelCache::new(rows, params.gamma);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yi: f64| if yi > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yi: f64| if yi > 0.0 { a > 0.0 } else { a < c };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let ki = cache.row(i).to_vec();
        let kj = cache.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let quad = positive(ki[i] + kj[j] + 2.0 * qij);
            let delta = (-grad[i] - grad[j]) / quad;
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
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = positive(ki[i] + kj[j] - 2.0 * qij);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    if !converged {
        warn!("SMO stopped after {iterations} iterations without reaching tolerance {}", params.tolerance);
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    // Σα − ½αᵀQα = Σα − ½ Σ αᵢ (Gᵢ + 1).
    let dual = alpha.iter().zip(&grad).map(|(a, g)| a - 0.5 * a * (g + 1.0)).sum();
    Ok(BinarySolution { alpha, rho, iterations, converged, dual_objective: dual })
}

fn positive(q: f64) -> f64 {
    if q <= 0.0 {
        TAU
    } else {
        q
    }
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum = 0.0;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_are_symmetric() {
        let rows = vec![vec![-1.0], vec![1.0]];
        let y = vec![-1.0, 1.0];
        let s = solve_binary(&rows, &y, &SmoParams::new(50.0, 1.0)).unwrap();
        let f = |x: f64| s.decision(&rows, &y, 1.0, &[x]);
        assert!(f(-1.0) < 0.0 && f(1.0) > 0.0);
        for x in [0.3, 1.0, 2.5] {
            assert!((f(x) + f(-x)).abs() < 1e-12);
        }
        assert!(s.converged);
    }

    #[test]
    fn dual_objective_matches_direct_evaluation() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.2]];
        let y = vec![1.0, 1.0, -1.0, -1.0, 1.0];
        let s = solve_binary(&rows, &y, &SmoParams::new(5.0, 2.0)).unwrap();
        let direct = dual_objective(&rows, &y, 2.0, &s.alpha);
        assert!((direct - s.dual_objective).abs() < 1e-9);
        let balance: f64 = s.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(solve_binary(&rows, &[1.0, 1.0], &SmoParams::new(1.0, 1.0)).is_err());
        assert!(solve_binary(&rows, &[1.0, 0.0], &SmoParams::new(1.0, 1.0)).is_err());
        assert!(solve_binary(&rows, &[1.0, -1.0], &SmoParams::new(0.0, 1.0)).is_err());
        assert!(solve_binary(&rows, &[1.0, -1.0], &SmoParams::new(1.0, -1.0)).is_err());
    }
}
