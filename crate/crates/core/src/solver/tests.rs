use super::*;
use crate::graph::{laplacian, AffinityMatrix};
use crate::oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn random_simplex(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    let mut a = random_matrix(rng, m, n, 0.0, 1.0);
    for mut c in a.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    a
}

fn library(r: DMatrix<f64>) -> EndmemberLibrary {
    let names = (0..r.ncols()).map(|i| format!("e{i}")).collect();
    EndmemberLibrary::new(r, names).unwrap()
}

fn cube(s: DMatrix<f64>) -> HyperCube {
    let n = s.ncols();
    HyperCube::new(s, ImageGeometry::new(1, n).unwrap()).unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> AffinityMatrix {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, rng.random_range(0.1..1.0)));
            }
        }
    }
    AffinityMatrix::from_edges(n, &edges).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, m: usize, n: usize) -> SolverState {
    SolverState {
        x: random_matrix(rng, m, n, -0.5, 1.0),
        y: random_matrix(rng, m, n, -0.5, 1.0),
        z: random_matrix(rng, m, n, 0.0, 1.0),
        v: random_matrix(rng, m, n, -1.0, 1.0),
        lambda: random_matrix(rng, m + 1, n, -1.0, 1.0),
        iter: 0,
    }
}

#[test]
fn objective_of_zero_abundance_is_half_data_energy() {
    let mut g = rng(1);
    let s = random_matrix(&mut g, 6, 4, 0.0, 1.0);
    let r = random_matrix(&mut g, 6, 3, 0.0, 1.0);
    let lap = laplacian(&random_graph(&mut g, 4, 0.6));
    let a = DMatrix::zeros(3, 4);
    let f = objective(&s, &r, &a, &lap, 0.3, 7.0, GroupPenalty::PerPixel).unwrap();
    assert!((f - 0.5 * s.norm_squared()).abs() < 1e-14);
}

#[test]
fn objective_of_exact_fit_is_zero() {
    let mut g = rng(2);
    let r = random_matrix(&mut g, 6, 3, 0.0, 1.0);
    let a = random_simplex(&mut g, 3, 5);
    let s = &r * &a;
    let f = objective(&s, &r, &a, &Laplacian::zero(5), 0.0, 0.0, GroupPenalty::PerPixel).unwrap();
    assert_eq!(f, 0.0);
}

#[test]
fn objective_matches_term_by_term_sum() {
    let mut g = rng(3);
    let (l, m, n) = (6, 3, 5);
    let s = random_matrix(&mut g, l, n, 0.0, 1.0);
    let r = random_matrix(&mut g, l, m, 0.0, 1.0);
    let a = random_matrix(&mut g, m, n, 0.0, 1.0);
    let w = random_graph(&mut g, n, 0.5);
    let lap = laplacian(&w);
    let (mu, lam) = (0.37, 1.3);

    let mut fid = 0.0;
    for b in 0..l {
        for j in 0..n {
            let mut pred = 0.0;
            for k in 0..m {
                pred += r[(b, k)] * a[(k, j)];
            }
            fid += (s[(b, j)] - pred).powi(2);
        }
    }
    let trace = oracle::dense_laplacian_trace(&a, &w.to_dense());
    let mut cols = 0.0;
    for j in 0..n {
        cols += (0..m).map(|k| a[(k, j)].powi(2)).sum::<f64>().sqrt();
    }
    let mut rows = 0.0;
    for k in 0..m {
        rows += (0..n).map(|j| a[(k, j)].powi(2)).sum::<f64>().sqrt();
    }

    let per_pixel = objective(&s, &r, &a, &lap, mu, lam, GroupPenalty::PerPixel).unwrap();
    let expected = 0.5 * fid + lam * trace + mu * cols;
    assert!((per_pixel - expected).abs() <= 1e-12 * expected.abs());
    let per_row = objective(&s, &r, &a, &lap, mu, lam, GroupPenalty::PerEndmember).unwrap();
    let expected = 0.5 * fid + lam * trace + mu * rows;
    assert!((per_row - expected).abs() <= 1e-12 * expected.abs());
}

#[test]
fn objective_rejects_mismatched_shapes() {
    let s = DMatrix::zeros(6, 4);
    let r = DMatrix::zeros(5, 3);
    let a = DMatrix::zeros(3, 4);
    let err = objective(&s, &r, &a, &Laplacian::zero(4), 0.0, 0.0, GroupPenalty::PerPixel);
    assert!(matches!(err, Err(Error::Data(_))));
}

#[test]
fn x_update_approaches_y_for_large_rho() {
    let mut g = rng(4);
    let (m, n) = (4, 6);
    let r = random_matrix(&mut g, 10, m, 0.0, 1.0);
    let s = random_matrix(&mut g, 10, n, 0.0, 1.0);
    let y = random_simplex(&mut g, m, n);
    let state = SolverState {
        x: DMatrix::zeros(m, n),
        y: y.clone(),
        z: y.clone(),
        v: DMatrix::zeros(m, n),
        lambda: DMatrix::zeros(m + 1, n),
        iter: 0,
    };
    let x = x_update(&state, &XOperator::new(&r, &s, 1e6).unwrap());
    assert!((&x - &y).norm() <= 1e-3 * y.norm());
}

#[test]
fn x_update_zeroes_the_augmented_lagrangian_gradient() {
    let mut g = rng(5);
    let (l, m, n) = (8, 3, 4);
    let rho = 0.7;
    let r = random_matrix(&mut g, l, m, 0.0, 1.0);
    let s = random_matrix(&mut g, l, n, 0.0, 1.0);
    let state = random_state(&mut g, m, n);
    let op = XOperator::new(&r, &s, rho).unwrap();
    let x = x_update(&state, &op);
    let f = |x: &DMatrix<f64>| {
        oracle::augmented_lagrangian_in_x(x, &state.y, &state.z, &state.v, &state.lambda, &s, &r, rho)
    };
    let grad = oracle::finite_difference_gradient(f, &x, 1e-6);
    let scale = 1.0 + op.rhs(&state.y, &state.z, &state.v, &state.lambda).norm();
    assert!(grad.norm() <= 1e-4 * scale, "gradient {}", grad.norm());
}

#[test]
fn x_update_single_endmember_by_hand() {
    let r = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
    let s = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 3.0, 2.0, 1.0]);
    let rho = 0.5;
    let state = SolverState {
        x: DMatrix::zeros(1, 2),
        y: DMatrix::from_row_slice(1, 2, &[0.2, 0.4]),
        z: DMatrix::from_row_slice(1, 2, &[0.6, 0.1]),
        v: DMatrix::from_row_slice(1, 2, &[0.3, -0.2]),
        lambda: DMatrix::from_row_slice(2, 2, &[0.1, 0.5, -0.4, 0.2]),
        iter: 0,
    };
    let x = x_update(&state, &XOperator::new(&r, &s, rho).unwrap());
    // (‖r‖² + 3ρ) x = rᵀs − v + ρy − (λ₀ − ρz) − (λ₁ − ρ)
    let rts = [1.0 + 2.0 + 4.0, 0.0 + 6.0 + 2.0];
    for j in 0..2 {
        let rhs = rts[j] - state.v[(0, j)] + rho * state.y[(0, j)]
            - (state.lambda[(0, j)] - rho * state.z[(0, j)])
            - (state.lambda[(1, j)] - rho);
        let expected = rhs / (9.0 + 3.0 * rho);
        assert!((x[(0, j)] - expected).abs() < 1e-14, "{} vs {expected}", x[(0, j)]);
    }
}

#[test]
fn y_update_without_graph_term_is_shifted_x() {
    let mut g = rng(6);
    let (m, n) = (3, 7);
    let x = random_matrix(&mut g, m, n, -1.0, 1.0);
    let v = random_matrix(&mut g, m, n, -1.0, 1.0);
    let rho = 0.05;
    let expected = &x + &v / rho;

    let lap = laplacian(&random_graph(&mut g, n, 0.5));
    let op = YOperator::new(&lap, 0.0, rho).unwrap();
    assert!(!op.is_factored());
    assert_eq!(y_update(&v, &x, &op), expected);

    let op = YOperator::new(&Laplacian::zero(n), 3.0, rho).unwrap();
    assert_eq!(y_update(&v, &x, &op), expected);
}

#[test]
fn y_update_solves_the_sparse_system() {
    let mut g = rng(7);
    let (m, n) = (4, 100);
    let (lam, rho) = (0.8, 0.05);
    let w = random_graph(&mut g, n, 0.05);
    let lap = laplacian(&w);
    let x = random_matrix(&mut g, m, n, -1.0, 1.0);
    let v = random_matrix(&mut g, m, n, -1.0, 1.0);
    let y = y_update(&v, &x, &YOperator::new(&lap, lam, rho).unwrap());

    let mut dense = lap.to_dense() * (2.0 * lam);
    for i in 0..n {
        dense[(i, i)] += rho;
    }
    let rhs = &v + &x * rho;
    let residual = (&y * &dense - &rhs).norm();
    assert!(residual <= 1e-8 * rhs.norm(), "residual {residual}");

    let direct = dense.lu().solve(&rhs.transpose()).unwrap().transpose();
    assert!((&y - direct).norm() <= 1e-8 * y.norm());
}

#[test]
fn prox_matches_numerical_minimization() {
    let v = [4.0, -1.0, 3.0];
    let mut g = rng(8);
    let starts: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..3).map(|_| g.random_range(-5.0..5.0)).collect())
        .collect();
    let reference = oracle::prox_by_descent(&v, 2.5, &starts);
    let z = prox_nonneg_group(&v, 2.5);
    for (a, b) in z.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-8, "{z:?} vs {reference:?}");
    }
}

#[test]
fn z_update_without_penalty_is_positive_part() {
    let mut g = rng(9);
    let (m, n) = (5, 8);
    let x = random_matrix(&mut g, m, n, -1.0, 1.0);
    let config = SolverConfig::default();
    let z = z_update(&x, &DMatrix::zeros(m + 1, n), &config);
    assert_eq!(z, x.map(|v| v.max(0.0)));
}

#[test]
fn z_update_matches_per_column_minimization() {
    let mut g = rng(10);
    for _ in 0..10 {
        let m = g.random_range(1..5);
        let x: Vec<f64> = (0..m).map(|_| g.random_range(-1.0..1.0)).collect();
        let lam: Vec<f64> = (0..=m).map(|_| g.random_range(-0.5..0.5)).collect();
        let config = SolverConfig {
            mu: g.random_range(0.0..0.5),
            rho: g.random_range(0.1..2.0),
            ..SolverConfig::default()
        };
        let z = z_update(
            &DMatrix::from_column_slice(m, 1, &x),
            &DMatrix::from_column_slice(m + 1, 1, &lam),
            &config,
        );
        let reference = oracle::z_column_by_descent(&x, &lam, config.mu, config.rho);
        for (a, b) in z.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-8, "{:?} vs {reference:?}", z.as_slice());
        }
    }
}

#[test]
fn z_update_commutes_with_column_permutation() {
    let mut g = rng(11);
    let (m, n) = (4, 9);
    let x = random_matrix(&mut g, m, n, -1.0, 1.0);
    let lambda = random_matrix(&mut g, m + 1, n, -1.0, 1.0);
    let config = SolverConfig {
        mu: 0.02,
        ..SolverConfig::default()
    };
    let perm = [3, 8, 0, 5, 1, 7, 2, 6, 4];
    let z = z_update(&x, &lambda, &config);
    let xp = DMatrix::from_fn(m, n, |i, j| x[(i, perm[j])]);
    let lp = DMatrix::from_fn(m + 1, n, |i, j| lambda[(i, perm[j])]);
    let zp = z_update(&xp, &lp, &config);
    for j in 0..n {
        assert_eq!(zp.column(j), z.column(perm[j]));
    }
}

#[test]
fn dual_update_leaves_feasible_point_alone() {
    let mut g = rng(12);
    let a = random_simplex(&mut g, 3, 5);
    let lambda = random_matrix(&mut g, 4, 5, -1.0, 1.0);
    let v = random_matrix(&mut g, 3, 5, -1.0, 1.0);
    let (l2, v2) = dual_update(&a, &a, &a, &lambda, &v, 0.7);
    assert!((&l2 - &lambda).amax() < 1e-15);
    assert_eq!(v2, v);
}

#[test]
fn dual_update_with_zero_rho_is_identity() {
    let mut g = rng(13);
    let st = random_state(&mut g, 3, 5);
    let (l2, v2) = dual_update(&st.x, &st.y, &st.z, &st.lambda, &st.v, 0.0);
    assert_eq!(l2, st.lambda);
    assert_eq!(v2, st.v);
}

#[test]
fn dual_update_matches_dense_operators() {
    let mut g = rng(14);
    let (m, n, rho) = (3, 6, 0.4);
    let st = random_state(&mut g, m, n);
    let (l2, v2) = dual_update(&st.x, &st.y, &st.z, &st.lambda, &st.v, rho);
    let (b, c, f) = oracle::constraint_operators(m, n);
    let expected = &st.lambda + (&b * &st.x + &c * &st.z - &f) * rho;
    assert!((&l2 - &expected).amax() < 1e-14);
    for j in 0..n {
        let colsum: f64 = st.x.column(j).sum();
        assert!((l2[(m, j)] - (st.lambda[(m, j)] + rho * (colsum - 1.0))).abs() < 1e-14);
    }
    assert!((&v2 - (&st.v + (&st.x - &st.y) * rho)).amax() < 1e-15);
}

#[test]
fn residuals_vanish_at_a_fixed_point() {
    let mut g = rng(15);
    let a = random_simplex(&mut g, 3, 4);
    let st = SolverState {
        x: a.clone(),
        y: a.clone(),
        z: a,
        v: DMatrix::zeros(3, 4),
        lambda: DMatrix::zeros(4, 4),
        iter: 1,
    };
    let res = residuals(&st, &st, &SolverConfig::default());
    assert!(res.primal < 1e-15);
    assert_eq!(res.dual, 0.0);
    assert!(res.converged());
}

#[test]
fn dual_residual_of_a_z_step_is_scaled_step_norm() {
    let mut g = rng(16);
    let prev = random_state(&mut g, 3, 4);
    let delta = random_matrix(&mut g, 3, 4, -1.0, 1.0);
    let mut next = prev.clone();
    next.z += &delta;
    let config = SolverConfig {
        rho: 0.3,
        ..SolverConfig::default()
    };
    let res = residuals(&next, &prev, &config);
    assert!((res.dual - 0.3 * delta.norm()).abs() < 1e-14);
}

#[test]
fn residuals_match_dense_recomputation() {
    let mut g = rng(17);
    let (m, n, rho) = (4, 5, 0.9);
    let prev = random_state(&mut g, m, n);
    let next = random_state(&mut g, m, n);
    let config = SolverConfig {
        rho,
        ..SolverConfig::default()
    };
    let res = residuals(&next, &prev, &config);
    let (p, d) = oracle::residuals_dense(&next.x, &next.y, &next.z, &prev.y, &prev.z, rho);
    assert!((res.primal - p).abs() <= 1e-13 * p);
    assert!((res.dual - d).abs() <= 1e-13 * d);

    let (b, c, f) = oracle::constraint_operators(m, n);
    let bx = &b * &next.x;
    let cz = &c * &next.z;
    let scale = (bx.norm_squared() + next.x.norm_squared())
        .max(cz.norm_squared() + next.y.norm_squared())
        .max(f.norm_squared())
        .sqrt();
    let eps_pri = (((2 * m + 1) * n) as f64).sqrt() * config.eps_abs + config.eps_rel * scale;
    let aty = b.transpose() * &next.lambda + &next.v;
    let eps_dual = ((m * n) as f64).sqrt() * config.eps_abs + config.eps_rel * aty.norm();
    assert!((res.eps_primal - eps_pri).abs() < 1e-15);
    assert!((res.eps_dual - eps_dual).abs() < 1e-15);
}

/// Tall random library, which has full column rank with probability one.
fn exact_instance(seed: u64, l: usize, m: usize, n: usize) -> (HyperCube, EndmemberLibrary, DMatrix<f64>) {
    let mut g = rng(seed);
    let r = random_matrix(&mut g, l, m, 0.0, 1.0);
    let a = random_simplex(&mut g, m, n);
    (cube(&r * &a), library(r), a)
}

fn tight() -> SolverConfig {
    SolverConfig {
        rho: 1.0,
        max_iter: 20_000,
        eps_abs: 1e-10,
        eps_rel: 1e-10,
        ..SolverConfig::default()
    }
}

#[test]
fn recovers_exact_mixture_without_regularization() {
    let (s, r, a_true) = exact_instance(18, 6, 3, 4);
    let report = glup_lap(&s, &r, &Laplacian::zero(4), &tight()).unwrap();
    assert!(report.converged);
    assert!((report.abundances.data() - &a_true).amax() < 1e-4);
    assert_eq!(report.objective_trace.len(), report.iterations);
    assert_eq!(report.residual_trace.len(), report.iterations);
}

#[test]
fn default_settings_reach_feasibility() {
    let (s, r, _) = exact_instance(19, 20, 4, 30);
    let report = glup_lap(&s, &r, &Laplacian::zero(30), &SolverConfig::default()).unwrap();
    let feas = report.abundances.feasibility();
    assert!(feas.min_entry >= 0.0);
    if report.converged {
        assert!(feas.holds(1e-4));
    }
}

#[test]
fn unregularized_solve_beats_the_simplex_grid() {
    let mut g = rng(20);
    for _ in 0..3 {
        let n = g.random_range(1..=5);
        let r = random_matrix(&mut g, 6, 3, 0.0, 1.0);
        let s = &r * random_simplex(&mut g, 3, n) + random_matrix(&mut g, 6, n, -0.05, 0.05);
        let (grid, _) = oracle::simplex_grid_fcls(&s, &r, 0.01);
        let report = fcls(&cube(s), &library(r), &tight()).unwrap();
        assert!(report.converged);
        let f = *report.objective_trace.last().unwrap();
        assert!(f <= grid + 1e-3, "{f} vs grid {grid}");
    }
}

#[test]
fn heavy_group_penalty_pulls_columns_to_uniform() {
    let (s, r, _) = exact_instance(21, 10, 4, 6);
    let scale = (r.spectra().transpose() * s.data()).norm();
    let mu = 10.0 * scale;
    let config = SolverConfig {
        mu,
        rho: mu,
        max_iter: 20_000,
        eps_abs: 1e-9,
        eps_rel: 1e-9,
        ..SolverConfig::default()
    };
    let heavy = glup_lap(&s, &r, &Laplacian::zero(6), &config).unwrap();
    let plain = fcls(&s, &r, &tight()).unwrap();
    assert!(heavy.converged);
    // With the sum-to-one constraint in force, the minimal-norm column is 1/M.
    for v in heavy.abundances.data().iter() {
        assert!((v - 0.25).abs() < 0.05, "{v}");
    }
    assert_eq!(heavy.active_rows, vec![0, 1, 2, 3]);
    let pen = |a: &DMatrix<f64>| a.column_iter().map(|c| c.norm()).sum::<f64>();
    assert!(pen(heavy.abundances.data()) < pen(plain.abundances.data()));
    let at = |a: &DMatrix<f64>| {
        objective(s.data(), r.spectra(), a, &Laplacian::zero(6), mu, 0.0, GroupPenalty::PerPixel).unwrap()
    };
    assert!(at(heavy.abundances.data()) <= at(plain.abundances.data()) + 1e-9);
}

#[test]
fn row_group_penalty_zeroes_unused_rows() {
    let mut g = rng(22);
    let r = random_matrix(&mut g, 12, 5, 0.0, 1.0);
    let mut a = DMatrix::zeros(5, 8);
    for j in 0..8 {
        let t = g.random_range(0.0..1.0);
        a[(0, j)] = t;
        a[(2, j)] = 1.0 - t;
    }
    let s = cube(&r * &a);
    let config = SolverConfig {
        mu: 0.05,
        group: GroupPenalty::PerEndmember,
        ..tight()
    };
    let report = glup_lap(&s, &library(r), &Laplacian::zero(8), &config).unwrap();
    assert!(report.converged);
    assert_eq!(report.active_rows, vec![0, 2]);
}

#[test]
fn fcls_is_glup_lap_without_regularization() {
    let (s, r, _) = exact_instance(23, 8, 3, 10);
    let config = SolverConfig::default();
    let a = fcls(&s, &r, &config).unwrap();
    let b = glup_lap(&s, &r, &Laplacian::zero(10), &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fcls_recovers_a_pure_pixel() {
    let mut g = rng(24);
    let r = random_matrix(&mut g, 10, 4, 0.0, 1.0);
    let s = cube(DMatrix::from_column_slice(10, 1, r.column(1).as_slice()));
    let report = fcls(&s, &library(r), &tight()).unwrap();
    let expected = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 0.0]);
    assert!((report.abundances.data() - expected).amax() < 1e-4);
}

#[test]
fn fcls_recovers_an_even_mixture() {
    let mut g = rng(25);
    let r = random_matrix(&mut g, 10, 4, 0.0, 1.0);
    let pixel = (r.column(0) + r.column(1)) * 0.5;
    let s = cube(DMatrix::from_column_slice(10, 1, pixel.as_slice()));
    let report = fcls(&s, &library(r), &tight()).unwrap();
    let expected = DMatrix::from_column_slice(4, 1, &[0.5, 0.5, 0.0, 0.0]);
    assert!((report.abundances.data() - expected).amax() < 1e-4);
}

#[test]
fn windowed_residual_maximum_does_not_increase() {
    for seed in 26..30 {
        let mut g = rng(seed);
        let n = 40;
        let r = random_matrix(&mut g, 15, 4, 0.0, 1.0);
        let s = &r * random_simplex(&mut g, 4, n) + random_matrix(&mut g, 15, n, -0.02, 0.02);
        let lap = laplacian(&random_graph(&mut g, n, 0.1));
        let config = SolverConfig {
            mu: 1e-3,
            lambda: 0.1,
            ..SolverConfig::default()
        };
        let report = glup_lap(&cube(s), &library(r), &lap, &config).unwrap();
        let maxima: Vec<f64> = report
            .residual_trace
            .chunks(20)
            .map(|w| w.iter().map(|(p, d)| p.max(*d)).fold(0.0, f64::max))
            .collect();
        for pair in maxima.windows(2) {
            assert!(pair[1] <= pair[0], "seed {seed}: {maxima:?}");
        }
    }
}

#[test]
fn invalid_configuration_is_rejected_before_solving() {
    let (s, r, _) = exact_instance(30, 6, 3, 4);
    for config in [
        SolverConfig { rho: 0.0, ..SolverConfig::default() },
        SolverConfig { mu: -1.0, ..SolverConfig::default() },
        SolverConfig { max_iter: 0, ..SolverConfig::default() },
        SolverConfig { eps_abs: f64::NAN, ..SolverConfig::default() },
    ] {
        assert!(matches!(glup_lap(&s, &r, &Laplacian::zero(4), &config), Err(Error::Config(_))));
    }
}

#[test]
fn dimension_mismatch_is_a_data_error() {
    let (s, r, _) = exact_instance(31, 6, 3, 4);
    let err = glup_lap(&s, &r, &Laplacian::zero(5), &SolverConfig::default());
    assert!(matches!(err, Err(Error::Data(_))));
    let other = library(DMatrix::from_element(7, 3, 0.5));
    assert!(matches!(fcls(&s, &other, &SolverConfig::default()), Err(Error::Data(_))));
}

#[test]
fn overflowing_iterates_are_reported_with_the_iteration() {
    let r = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
    let s = cube(DMatrix::from_column_slice(2, 1, &[1e300, 1e300]));
    let err = fcls(&s, &library(r), &SolverConfig::default()).unwrap_err();
    match err {
        Error::Numerical(msg) => assert!(msg.contains("iteration 1"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

fn block_instance(seed: u64) -> (DMatrix<f64>, EndmemberLibrary, AffinityMatrix, Vec<usize>) {
    let mut g = rng(seed);
    let n = 30;
    let r = random_matrix(&mut g, 12, 4, 0.0, 1.0);
    let s = &r * random_simplex(&mut g, 4, n) + random_matrix(&mut g, 12, n, -0.02, 0.02);
    // Two interleaved blocks: even and odd pixels.
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 2..n).step_by(2) {
            if g.random_bool(0.3) {
                edges.push((i, j, g.random_range(0.2..1.0)));
            }
        }
    }
    let labels = (0..n).map(|i| i % 2).collect();
    (s, library(r), AffinityMatrix::from_edges(n, &edges).unwrap(), labels)
}

#[test]
fn block_solve_reproduces_full_iterates() {
    let (s, r, w, labels) = block_instance(32);
    let full_lap = laplacian(&w);
    let parts: Vec<Vec<usize>> = (0..2)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    let sub_s: Vec<DMatrix<f64>> = parts.iter().map(|p| s.select_columns(p)).collect();
    let sub_l: Vec<Laplacian> = parts.iter().map(|p| laplacian(&w.submatrix(p).unwrap())).collect();

    for group in [GroupPenalty::PerPixel, GroupPenalty::PerEndmember] {
        for iters in [1, 2, 5, 17, 60] {
            let config = SolverConfig {
                mu: 2e-3,
                lambda: 0.5,
                max_iter: iters,
                eps_abs: 1e-12,
                eps_rel: 1e-12,
                group,
                ..SolverConfig::default()
            };
            let full = solve_blocks(&r, &[BlockProblem { spectra: &s, laplacian: &full_lap }], &config).unwrap();
            let blocks: Vec<BlockProblem<'_>> = sub_s
                .iter()
                .zip(&sub_l)
                .map(|(spectra, laplacian)| BlockProblem { spectra, laplacian })
                .collect();
            let split = solve_blocks(&r, &blocks, &config).unwrap();
            assert_eq!(full.iterations, split.iterations);
            let mut diff = 0.0f64;
            for (p, a) in parts.iter().zip(&split.abundances) {
                for (k, &j) in p.iter().enumerate() {
                    diff += (full.abundances[0].column(j) - a.column(k)).norm_squared();
                }
            }
            assert!(diff.sqrt() <= 1e-9, "{group:?} after {iters}: {}", diff.sqrt());
            for (a, b) in full.objective_trace.iter().zip(&split.objective_trace) {
                assert!((a - b).abs() <= 1e-9 * a.abs());
            }
        }
    }
}

#[test]
fn group_penalty_parses() {
    assert_eq!("pixel".parse::<GroupPenalty>().unwrap(), GroupPenalty::PerPixel);
    assert_eq!("endmember".parse::<GroupPenalty>().unwrap(), GroupPenalty::PerEndmember);
    assert!("row".parse::<GroupPenalty>().is_err());
}

#[test]
fn report_labels_the_method() {
    let mut config = SolverConfig::default();
    assert_eq!(method_label(&config), "FCLS");
    config.mu = 1e-4;
    assert_eq!(method_label(&config), "GLUP-Lap");
    config.mu = 0.0;
    config.lambda = 0.5;
    assert_eq!(method_label(&config), "GLUP-Lap");
}

#[test]
fn report_document_carries_traces() {
    let (s, r, _) = exact_instance(33, 6, 3, 4);
    let config = SolverConfig::default();
    let report = fcls(&s, &r, &config).unwrap();
    let doc = ReportDocument::new(&report, &config, "abundances.csv");
    assert_eq!(doc.method, "FCLS");
    assert_eq!(doc.primal_residual_trace.len(), report.iterations);
    let back: ReportDocument = serde_json::from_str(&doc.to_json()).unwrap();
    assert_eq!(back, doc);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn prox_is_scale_covariant(
            v in proptest::collection::vec(-10.0f64..10.0, 1..8),
            alpha in 0.0f64..5.0,
            c in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let lhs = prox_nonneg_group(&scaled, c * alpha);
            let rhs: Vec<f64> = prox_nonneg_group(&v, alpha).iter().map(|x| c * x).collect();
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn prox_output_is_nonnegative_and_shorter(
            v in proptest::collection::vec(-10.0f64..10.0, 1..8),
            alpha in 0.0f64..5.0,
        ) {
            let z = prox_nonneg_group(&v, alpha);
            prop_assert!(z.iter().all(|&x| x >= 0.0));
            let pos: f64 = v.iter().map(|x| x.max(0.0).powi(2)).sum::<f64>().sqrt();
            let nz: f64 = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(nz <= pos + 1e-12);
        }
    }
}
