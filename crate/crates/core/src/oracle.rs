//! Independent reference computations used to check the solver.
//!
//! Everything here is deliberately naive: dense matrices, materialized
//! constraint operators, generic projected-gradient minimization and
//! exhaustive enumeration. Nothing in this module calls into the solver.

use nalgebra::{DMatrix, DVector};

use crate::graph::AffinityMatrix;

/// Projected gradient descent with backtracking on `z ≥ 0`.
///
/// `grad` may return any element of the subdifferential where `f` is not
/// smooth; the backtracking test only uses values of `f`.
pub fn projected_gradient<F, G>(f: F, grad: G, z0: Vec<f64>, max_iter: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut z: Vec<f64> = z0.into_iter().map(|v| v.max(0.0)).collect();
    let mut fz = f(&z);
    let mut step = 1.0;
    let mut stalled = 0;
    for _ in 0..max_iter {
        let g = grad(&z);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| (zi - step * gi).max(0.0)).collect();
            let diff: Vec<f64> = cand.iter().zip(&z).map(|(a, b)| a - b).collect();
            let lin: f64 = g.iter().zip(&diff).map(|(a, b)| a * b).sum();
            let quad: f64 = diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * step);
            let fc = f(&cand);
            if fc <= fz + lin + quad + 1e-16 * fz.abs() {
                let moved = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                stalled = if fc < fz { 0 } else { stalled + 1 };
                z = cand;
                fz = fc;
                step *= 1.5;
                accepted = true;
                if moved <= 1e-15 * (1.0 + norm(&z)) {
                    return z;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || stalled >= 20 {
            break;
        }
    }
    let mut trial = step;
    for _ in 0..8 {
        trial *= 0.25;
        if let Some(p) = polish(&grad, &z, trial) {
            if f(&p) <= fz + 1e-15 * fz.abs() {
                return p;
            }
        }
    }
    z
}

/// Fixed-step projected gradient iterations. Near the minimizer the
/// objective differences drop below rounding, so the line search above can
/// stall; a contraction with a safe step keeps converging in `z` instead.
/// Returns `None` if the iteration does not settle.
fn polish<G>(grad: &G, z: &[f64], step: f64) -> Option<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut z = z.to_vec();
    for _ in 0..200_000 {
        let g = grad(&z);
        let next: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| (zi - step * gi).max(0.0)).collect();
        let moved = next.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = next;
        if moved <= 1e-15 * (1.0 + norm(&z)) {
            return Some(z);
        }
    }
    None
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `½‖z − v‖² + α‖z‖₂` over `z ≥ 0` numerically from several starts.
pub fn prox_by_descent(v: &[f64], alpha: f64, extra_starts: &[Vec<f64>]) -> Vec<f64> {
    let f = |z: &[f64]| {
        0.5 * z.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + alpha * norm(z)
    };
    let grad = |z: &[f64]| {
        let nz = norm(z);
        z.iter()
            .zip(v)
            .map(|(a, b)| a - b + if nz > 0.0 { alpha * a / nz } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let mut starts = vec![v.to_vec(), vec![1.0; v.len()]];
    starts.extend_from_slice(extra_starts);
    let mut best = vec![0.0; v.len()];
    let mut best_f = f(&best);
    for s in starts {
        let z = projected_gradient(f, grad, s, 200_000);
        let fz = f(&z);
        if fz < best_f {
            best_f = fz;
            best = z;
        }
    }
    best
}

/// Dense `tr(A (D − W) Aᵀ)`.
pub fn dense_laplacian_trace(a: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut l = -w.clone();
    for i in 0..n {
        l[(i, i)] = w.row(i).sum();
    }
    (a * l * a.transpose()).trace()
}

/// Materialized `B = [I; 1ᵀ]`, `C = [−I; 0ᵀ]` and `F = [0; 1ᵀ]`.
pub fn constraint_operators(m: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let b = DMatrix::from_fn(m + 1, m, |i, j| if i == m || i == j { 1.0 } else { 0.0 });
    let c = DMatrix::from_fn(m + 1, m, |i, j| if i == j { -1.0 } else { 0.0 });
    let f = DMatrix::from_fn(m + 1, n, |i, _| if i == m { 1.0 } else { 0.0 });
    (b, c, f)
}

/// Augmented Lagrangian terms that depend on `X`, written with dense operators.
#[allow(clippy::too_many_arguments)]
pub fn augmented_lagrangian_in_x(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    v: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    rho: f64,
) -> f64 {
    let (m, n) = x.shape();
    let (b, c, f) = constraint_operators(m, n);
    let cons = &b * x + &c * z - &f;
    0.5 * (s - r * x).norm_squared()
        + (v.transpose() * (x - y)).trace()
        + 0.5 * rho * (x - y).norm_squared()
        + 0.5 * rho * cons.norm_squared()
        + (lambda.transpose() * &cons).trace()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference_gradient<F>(f: F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let fp = f(&probe);
        probe[k] = orig - h;
        let fm = f(&probe);
        probe[k] = orig;
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Per-column `Z` subproblem `μ‖z‖ + tr(Λᵀ C Z) + ρ/2 ‖B x + C z − f‖²`,
/// minimized over `z ≥ 0` by projected gradient with dense operators.
pub fn z_column_by_descent(x: &[f64], lambda_col: &[f64], mu: f64, rho: f64) -> Vec<f64> {
    let m = x.len();
    let (b, c, f) = constraint_operators(m, 1);
    let xv = DVector::from_column_slice(x);
    let lam = DVector::from_column_slice(lambda_col);
    let bx_f = &b * &xv - f.column(0);
    let obj = |z: &[f64]| {
        let zv = DVector::from_column_slice(z);
        let cons = &bx_f + &c * &zv;
        mu * norm(z) + lam.dot(&(&c * &zv)) + 0.5 * rho * cons.norm_squared()
    };
    let grad = |z: &[f64]| {
        let zv = DVector::from_column_slice(z);
        let nz = norm(z);
        let g = c.transpose() * &lam + rho * c.transpose() * (&bx_f + &c * &zv);
        g.iter()
            .zip(z)
            .map(|(gi, zi)| gi + if nz > 0.0 { mu * zi / nz } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let mut best = vec![0.0; m];
    let mut best_f = obj(&best);
    for start in [x.to_vec(), vec![1.0; m]] {
        let z = projected_gradient(obj, grad, start, 200_000);
        let fz = obj(&z);
        if fz < best_f {
            best_f = fz;
            best = z;
        }
    }
    best
}

/// Best fully constrained least-squares objective over the simplex grid of
/// the given step, evaluated pixel by pixel (the objective is separable).
pub fn simplex_grid_fcls(s: &DMatrix<f64>, r: &DMatrix<f64>, step: f64) -> (f64, DMatrix<f64>) {
    let m = r.ncols();
    let ticks = (1.0 / step).round() as usize;
    let mut points = Vec::new();
    let mut current = vec![0usize; m];
    enumerate_compositions(ticks, 0, &mut current, &mut points);
    let grid: Vec<DVector<f64>> = points
        .into_iter()
        .map(|p| DVector::from_iterator(m, p.into_iter().map(|c| c as f64 / ticks as f64)))
        .collect();
    let mut total = 0.0;
    let mut best_a = DMatrix::zeros(m, s.ncols());
    for j in 0..s.ncols() {
        let sj = s.column(j);
        let (best, idx) = grid
            .iter()
            .enumerate()
            .map(|(k, a)| (0.5 * (sj - r * a).norm_squared(), k))
            .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc });
        total += best;
        best_a.set_column(j, &grid[idx]);
    }
    (total, best_a)
}

fn enumerate_compositions(remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let m = current.len();
    if pos + 1 == m {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for c in 0..=remaining {
        current[pos] = c;
        enumerate_compositions(remaining - c, pos + 1, current, out);
    }
}

/// Normalized cut `cut(S, S̄)/vol(S) + cut(S, S̄)/vol(S̄)` of a two-way split.
pub fn normalized_cut(w: &AffinityMatrix, in_first: &[bool]) -> f64 {
    let mut cut = 0.0;
    let mut vol = [0.0, 0.0];
    for i in 0..w.node_count() {
        let (cols, vals) = w.row(i);
        for (&j, &wij) in cols.iter().zip(vals) {
            vol[usize::from(!in_first[i])] += wij;
            if in_first[i] != in_first[j as usize] {
                cut += wij;
            }
        }
    }
    cut /= 2.0;
    if vol[0] == 0.0 || vol[1] == 0.0 {
        return f64::INFINITY;
    }
    cut / vol[0] + cut / vol[1]
}

/// Exhaustive minimum normalized cut over all nontrivial two-way splits
/// (node 0 is fixed in the first side). Feasible up to ~22 nodes.
pub fn brute_force_min_ncut(w: &AffinityMatrix) -> (f64, Vec<bool>) {
    let n = w.node_count();
    assert!(n <= 24, "exhaustive search is exponential");
    let mut best = (f64::INFINITY, vec![true; n]);
    for mask in 0..(1u64 << (n - 1)) {
        let side: Vec<bool> = (0..n)
            .map(|i| i == 0 || (mask >> (i - 1)) & 1 == 0)
            .collect();
        if side.iter().all(|&s| s) {
            continue;
        }
        let value = normalized_cut(w, &side);
        if value < best.0 {
            best = (value, side);
        }
    }
    best
}

/// Sum of dropped edge weights computed by scanning every stored entry.
pub fn cut_weight_by_scan(w: &AffinityMatrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..w.node_count() {
        let (cols, vals) = w.row(i);
        for (&j, &wij) in cols.iter().zip(vals) {
            if labels[i] != labels[j as usize] {
                total += wij;
            }
        }
    }
    total / 2.0
}

/// `(primal, dual)` residuals recomputed with dense operators.
#[allow(clippy::too_many_arguments)]
pub fn residuals_dense(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y_prev: &DMatrix<f64>,
    z_prev: &DMatrix<f64>,
    rho: f64,
) -> (f64, f64) {
    let (m, n) = x.shape();
    let (b, c, f) = constraint_operators(m, n);
    let primal = ((&b * x + &c * z - &f).norm_squared() + (x - y).norm_squared()).sqrt();
    let ctc = c.transpose() * &c;
    let dual = rho * ((&ctc * (z - z_prev)).norm_squared() + (y - y_prev).norm_squared()).sqrt();
    (primal, dual)
}

/// RMSE by explicit double loop.
pub fn rmse_naive(est: &DMatrix<f64>, truth: &DMatrix<f64>, divisor: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..est.nrows() {
        for j in 0..est.ncols() {
            let d = est[(i, j)] - truth[(i, j)];
            acc += d * d;
        }
    }
    (acc / divisor).sqrt()
}
