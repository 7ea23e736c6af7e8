//! ADMM solver for graph Laplacian regularized, group-sparse, fully
//! constrained unmixing:
//!
//! ```text
//! minimize_A  ½‖S − R A‖²_F + λ tr(A L Aᵀ) + μ Σ_g ‖A_g‖₂
//! subject to  A ≥ 0,  1ᵀA = 1ᵀ
//! ```
//!
//! The problem is split into three copies `X`, `Y`, `Z` of `A`: `X` carries
//! the data term and the sum-to-one constraint (through `B X + C Z = F` with
//! `B = [I; 1ᵀ]`, `C = [−I; 0ᵀ]`, `F = [0; 1ᵀ]`), `Y` carries the Laplacian
//! term and `Z` the group penalty with nonnegativity. `V` and `Λ` are the
//! scaled-free Lagrange multipliers of `X = Y` and `B X + C Z = F`.
//!
//! `B`, `C` and `F` are never formed; their action is written out in the
//! update functions. The returned abundance is `Z`, which is exactly
//! nonnegative.

mod prox;
mod report;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};
use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::datamodel::{AbundanceMatrix, EndmemberLibrary, HyperCube, ImageGeometry};
use crate::error::{Error, Result};
use crate::graph::{laplacian_quadratic, Laplacian};

pub use prox::{prox_nonneg_group, prox_nonneg_group_in_place};
pub use report::{method_label, ReportDocument};

/// Threshold on `‖a_k‖₂` above which an endmember row counts as active.
pub const ACTIVE_ROW_EPS: f64 = 1e-8;

/// How the group-lasso penalty groups the abundance entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupPenalty {
    /// One group per pixel column (`N` groups); decouples across pixels.
    #[default]
    PerPixel,
    /// One group per endmember row (`M` groups); couples all pixels.
    PerEndmember,
}

impl std::str::FromStr for GroupPenalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(GroupPenalty::PerPixel),
            "endmember" => Ok(GroupPenalty::PerEndmember),
            other => Err(Error::Config(format!("unknown group penalty {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub mu: f64,
    pub lambda: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub group: GroupPenalty,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 0.0,
            lambda: 0.0,
            rho: 0.05,
            max_iter: 200,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
            group: GroupPenalty::PerPixel,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and ≥ 0, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        nonneg("mu", self.mu)?;
        nonneg("lambda", self.lambda)?;
        positive("rho", self.rho)?;
        positive("eps_abs", self.eps_abs)?;
        positive("eps_rel", self.eps_rel)?;
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// ADMM iterates for one block of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// Multiplier of `X = Y` (`M × N`).
    pub v: DMatrix<f64>,
    /// Multiplier of `B X + C Z = F` (`(M+1) × N`).
    pub lambda: DMatrix<f64>,
    pub iter: usize,
}

impl SolverState {
    /// `X = Y = Z = 1/M`, zero multipliers.
    pub fn initial(m: usize, n: usize) -> Self {
        let uniform = DMatrix::from_element(m, n, 1.0 / m as f64);
        Self {
            x: uniform.clone(),
            y: uniform.clone(),
            z: uniform,
            v: DMatrix::zeros(m, n),
            lambda: DMatrix::zeros(m + 1, n),
            iter: 0,
        }
    }

    pub fn endmember_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn pixel_count(&self) -> usize {
        self.x.ncols()
    }
}

/// Everything a finished solve reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub abundances: AbundanceMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    /// `(primal, dual)` residual per iteration.
    pub residual_trace: Vec<(f64, f64)>,
    pub active_rows: Vec<usize>,
}

/// Objective value of the unmixing problem at `A`.
pub fn objective(
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    a: &DMatrix<f64>,
    laplacian: &Laplacian,
    mu: f64,
    lambda: f64,
    group: GroupPenalty,
) -> Result<f64> {
    check_dims(s, r, a.ncols())?;
    if a.nrows() != r.ncols() {
        return Err(Error::Data(format!(
            "abundance matrix has {} rows, library has {} endmembers",
            a.nrows(),
            r.ncols()
        )));
    }
    let fidelity = 0.5 * (s - r * a).norm_squared();
    let smooth = if lambda == 0.0 {
        0.0
    } else {
        lambda * laplacian_quadratic(a, laplacian)?
    };
    Ok(fidelity + smooth + mu * group_norm(a, group))
}

fn group_norm(a: &DMatrix<f64>, group: GroupPenalty) -> f64 {
    match group {
        GroupPenalty::PerPixel => a.column_iter().map(|c| c.norm()).sum(),
        GroupPenalty::PerEndmember => a.row_iter().map(|r| r.norm()).sum(),
    }
}

fn check_dims(s: &DMatrix<f64>, r: &DMatrix<f64>, n: usize) -> Result<()> {
    if s.nrows() != r.nrows() {
        return Err(Error::Data(format!(
            "cube has {} bands, library has {}",
            s.nrows(),
            r.nrows()
        )));
    }
    if s.ncols() != n {
        return Err(Error::Data(format!("cube has {} pixels, expected {n}", s.ncols())));
    }
    Ok(())
}

/// Prefactored `X`-step: `(RᵀR + ρ(2I + 11ᵀ)) X = rhs`.
#[derive(Debug, Clone)]
pub struct XOperator {
    factor: Cholesky<f64, Dyn>,
    rts: DMatrix<f64>,
    rho: f64,
}

impl XOperator {
    pub fn new(r: &DMatrix<f64>, s: &DMatrix<f64>, rho: f64) -> Result<Self> {
        if s.nrows() != r.nrows() {
            return Err(Error::Data(format!(
                "cube has {} bands, library has {}",
                s.nrows(),
                r.nrows()
            )));
        }
        let m = r.ncols();
        let mut system = r.transpose() * r;
        for i in 0..m {
            for j in 0..m {
                system[(i, j)] += rho * if i == j { 3.0 } else { 1.0 };
            }
        }
        let factor = Cholesky::new(system).ok_or_else(|| {
            Error::Numerical("X-step system RᵀR + ρ(2I + 11ᵀ) is not positive definite".into())
        })?;
        Ok(Self {
            factor,
            rts: r.transpose() * s,
            rho,
        })
    }

    /// Right-hand side `RᵀS − Bᵀ[Λ + ρ(CZ − F)] − V + ρY`.
    pub fn rhs(&self, y: &DMatrix<f64>, z: &DMatrix<f64>, v: &DMatrix<f64>, lambda: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.rts.nrows();
        let rho = self.rho;
        let mut rhs = self.rts.clone();
        for j in 0..rhs.ncols() {
            // Bᵀ[u; w] = u + w·1, and Λ + ρ(CZ − F) = [Λ_top − ρZ; Λ_last − ρ]
            let last = lambda[(m, j)] - rho;
            for i in 0..m {
                rhs[(i, j)] += rho * y[(i, j)] - v[(i, j)] - (lambda[(i, j)] - rho * z[(i, j)]) - last;
            }
        }
        rhs
    }

    pub fn solve(&self, rhs: DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(&rhs)
    }
}

/// `X`-minimization of the augmented Lagrangian.
pub fn x_update(state: &SolverState, op: &XOperator) -> DMatrix<f64> {
    op.solve(op.rhs(&state.y, &state.z, &state.v, &state.lambda))
}

/// Prefactored `Y`-step: `Y (2λL + ρI) = V + ρX`.
pub struct YOperator {
    rho: f64,
    factor: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl std::fmt::Debug for YOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("YOperator")
            .field("rho", &self.rho)
            .field("factored", &self.factor.is_some())
            .finish()
    }
}

impl YOperator {
    pub fn new(laplacian: &Laplacian, lambda: f64, rho: f64) -> Result<Self> {
        if lambda == 0.0 || !laplacian.has_edges() {
            return Ok(Self { rho, factor: None });
        }
        let w = laplacian.affinity();
        let n = laplacian.node_count();
        // Upper triangle of the symmetric matrix in CSC: column j holds rows i ≤ j,
        // which by symmetry are the entries of CSR row j left of the diagonal.
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(w.edge_count() + n);
        let mut values = Vec::with_capacity(w.edge_count() + n);
        col_ptr.push(0usize);
        for j in 0..n {
            let (cols, vals) = w.row(j);
            for (&i, &wij) in cols.iter().zip(vals) {
                if (i as usize) < j {
                    row_idx.push(i as usize);
                    values.push(-2.0 * lambda * wij);
                }
            }
            row_idx.push(j);
            values.push(2.0 * lambda * laplacian.degree()[j] + rho);
            col_ptr.push(row_idx.len());
        }
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let matrix = SparseColMatRef::new(symbolic, &values);
        let factor = matrix
            .sp_cholesky(Side::Upper)
            .map_err(|e| Error::Numerical(format!("factorization of 2λL + ρI failed: {e:?}")))?;
        Ok(Self {
            rho,
            factor: Some(factor),
        })
    }

    pub fn is_factored(&self) -> bool {
        self.factor.is_some()
    }
}

/// `Y`-minimization: `Y = (V + ρX)(2λL + ρI)⁻¹`.
pub fn y_update(v: &DMatrix<f64>, x: &DMatrix<f64>, op: &YOperator) -> DMatrix<f64> {
    match &op.factor {
        None => x + v / op.rho,
        Some(factor) => {
            let (m, n) = x.shape();
            // Solve the transposed system (2λL + ρI) Yᵀ = (V + ρX)ᵀ.
            let mut rhs = Mat::<f64>::from_fn(n, m, |j, i| v[(i, j)] + op.rho * x[(i, j)]);
            factor.solve_in_place(rhs.as_mut());
            DMatrix::from_fn(m, n, |i, j| rhs[(j, i)])
        }
    }
}

/// Computes `(X + Λ_top/ρ)₊` in place of the returned matrix.
fn z_candidate(x: &DMatrix<f64>, lambda: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let m = x.nrows();
    DMatrix::from_fn(m, x.ncols(), |i, j| (x[(i, j)] + lambda[(i, j)] / rho).max(0.0))
}

/// `Z`-minimization: group-wise [`prox_nonneg_group`] of `X + Λ_top/ρ` with `α = μ/ρ`.
pub fn z_update(x: &DMatrix<f64>, lambda: &DMatrix<f64>, config: &SolverConfig) -> DMatrix<f64> {
    let mut blocks = [z_candidate(x, lambda, config.rho)];
    shrink_groups(&mut blocks, config);
    let [z] = blocks;
    z
}

/// Applies the group shrinkage to already projected candidates of every block.
fn shrink_groups(candidates: &mut [DMatrix<f64>], config: &SolverConfig) {
    let alpha = config.mu / config.rho;
    if alpha == 0.0 {
        return;
    }
    match config.group {
        GroupPenalty::PerPixel => {
            for c in candidates.iter_mut() {
                let m = c.nrows();
                for col in c.as_mut_slice().chunks_exact_mut(m) {
                    let norm = prox::positive_norm(col);
                    prox::scale_group(col, norm, alpha);
                }
            }
        }
        GroupPenalty::PerEndmember => {
            let m = candidates.first().map_or(0, |c| c.nrows());
            for i in 0..m {
                let norm = candidates
                    .iter()
                    .map(|c| c.row(i).norm_squared())
                    .sum::<f64>()
                    .sqrt();
                let scale = if norm <= alpha { 0.0 } else { 1.0 - alpha / norm };
                for c in candidates.iter_mut() {
                    c.row_mut(i).iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
    }
}

/// Multiplier ascent: `Λ' = Λ + ρ(BX + CZ − F)`, `V' = V + ρ(X − Y)`.
pub fn dual_update(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    v: &DMatrix<f64>,
    rho: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = x.nrows();
    let mut lambda_next = lambda.clone();
    for j in 0..x.ncols() {
        let mut colsum = 0.0;
        for i in 0..m {
            lambda_next[(i, j)] += rho * (x[(i, j)] - z[(i, j)]);
            colsum += x[(i, j)];
        }
        lambda_next[(m, j)] += rho * (colsum - 1.0);
    }
    let v_next = v + (x - y) * rho;
    (lambda_next, v_next)
}

/// Squared norms needed by the stopping rule; additive over pixel blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ResidualParts {
    primal_sq: f64,
    dual_sq: f64,
    /// ‖[BX; X]‖²
    ax_sq: f64,
    /// ‖[CZ; Y]‖²
    bz_sq: f64,
    /// ‖F‖²
    f_sq: f64,
    /// ‖BᵀΛ + V‖²
    aty_sq: f64,
    constraint_rows: usize,
    variables: usize,
}

impl std::ops::AddAssign for ResidualParts {
    fn add_assign(&mut self, o: Self) {
        self.primal_sq += o.primal_sq;
        self.dual_sq += o.dual_sq;
        self.ax_sq += o.ax_sq;
        self.bz_sq += o.bz_sq;
        self.f_sq += o.f_sq;
        self.aty_sq += o.aty_sq;
        self.constraint_rows += o.constraint_rows;
        self.variables += o.variables;
    }
}

fn residual_parts(state: &SolverState, prev: &SolverState, rho: f64) -> ResidualParts {
    let (m, n) = state.x.shape();
    let mut p = ResidualParts {
        constraint_rows: (2 * m + 1) * n,
        variables: m * n,
        f_sq: n as f64,
        ..Default::default()
    };
    let mut dz = 0.0;
    let mut dy = 0.0;
    for j in 0..n {
        let mut colsum = 0.0;
        let lam_last = state.lambda[(m, j)];
        for i in 0..m {
            let (x, y, z) = (state.x[(i, j)], state.y[(i, j)], state.z[(i, j)]);
            colsum += x;
            p.primal_sq += (x - z) * (x - z) + (x - y) * (x - y);
            p.ax_sq += 2.0 * x * x;
            p.bz_sq += z * z + y * y;
            let aty = state.lambda[(i, j)] + lam_last + state.v[(i, j)];
            p.aty_sq += aty * aty;
            let ddz = z - prev.z[(i, j)];
            let ddy = y - prev.y[(i, j)];
            dz += ddz * ddz;
            dy += ddy * ddy;
        }
        p.primal_sq += (colsum - 1.0) * (colsum - 1.0);
        p.ax_sq += colsum * colsum;
    }
    // CᵀC = I, so the Z contribution is just ‖ΔZ‖².
    p.dual_sq = rho * rho * (dz + dy);
    p
}

/// Primal/dual residuals and the tolerances they are compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
}

impl Residuals {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual
    }

    fn from_parts(p: &ResidualParts, eps_abs: f64, eps_rel: f64) -> Self {
        let scale = p.ax_sq.max(p.bz_sq).max(p.f_sq).sqrt();
        Self {
            primal: p.primal_sq.sqrt(),
            dual: p.dual_sq.sqrt(),
            eps_primal: (p.constraint_rows as f64).sqrt() * eps_abs + eps_rel * scale,
            eps_dual: (p.variables as f64).sqrt() * eps_abs + eps_rel * p.aty_sq.sqrt(),
        }
    }
}

/// Residuals between consecutive states:
/// primal `√(‖BX + CZ − F‖² + ‖X − Y‖²)`, dual `ρ √(‖CᵀC ΔZ‖² + ‖ΔY‖²)`.
pub fn residuals(state: &SolverState, prev: &SolverState, config: &SolverConfig) -> Residuals {
    Residuals::from_parts(&residual_parts(state, prev, config.rho), config.eps_abs, config.eps_rel)
}

/// One independently factorized block of pixels.
pub struct BlockProblem<'a> {
    pub spectra: &'a DMatrix<f64>,
    pub laplacian: &'a Laplacian,
}

/// Result of [`solve_blocks`]: one abundance block per input block plus shared traces.
#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub abundances: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<(f64, f64)>,
}

struct BlockWork<'a> {
    spectra: &'a DMatrix<f64>,
    laplacian: &'a Laplacian,
    x_op: XOperator,
    y_op: YOperator,
    state: SolverState,
}

/// Runs ADMM on a set of pixel blocks whose Laplacians are mutually
/// decoupled, in lockstep with a single global stopping test.
///
/// With per-pixel groups the blocks only interact through the stopping rule,
/// so solving a block-diagonal problem this way reproduces the iterates of
/// the monolithic solve. With per-endmember groups the row norms are
/// accumulated over all blocks before shrinking.
pub fn solve_blocks(
    library: &EndmemberLibrary,
    blocks: &[BlockProblem<'_>],
    config: &SolverConfig,
) -> Result<BlockSolution> {
    config.validate()?;
    let r = library.spectra();
    let m = library.endmember_count();
    let mut work = Vec::with_capacity(blocks.len());
    for b in blocks {
        let n = b.spectra.ncols();
        check_dims(b.spectra, r, n)?;
        if b.laplacian.node_count() != n {
            return Err(Error::Data(format!(
                "Laplacian has {} nodes for a block of {n} pixels",
                b.laplacian.node_count()
            )));
        }
        work.push(BlockWork {
            spectra: b.spectra,
            laplacian: b.laplacian,
            x_op: XOperator::new(r, b.spectra, config.rho).map_err(before_first_iteration)?,
            y_op: YOperator::new(b.laplacian, config.lambda, config.rho).map_err(before_first_iteration)?,
            state: SolverState::initial(m, n),
        });
    }

    let mut objective_trace = Vec::with_capacity(config.max_iter);
    let mut residual_trace = Vec::with_capacity(config.max_iter);
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=config.max_iter {
        let mut candidates = Vec::with_capacity(work.len());
        let mut partial = Vec::with_capacity(work.len());
        for w in work.iter() {
            let x = x_update(&w.state, &w.x_op);
            let y = y_update(&w.state.v, &x, &w.y_op);
            candidates.push(z_candidate(&x, &w.state.lambda, config.rho));
            partial.push((x, y));
        }
        shrink_groups(&mut candidates, config);

        let mut parts = ResidualParts::default();
        for ((w, (x, y)), z) in work.iter_mut().zip(partial).zip(candidates) {
            let (lambda, v) = dual_update(&x, &y, &z, &w.state.lambda, &w.state.v, config.rho);
            let next = SolverState {
                x,
                y,
                z,
                v,
                lambda,
                iter: k,
            };
            parts += residual_parts(&next, &w.state, config.rho);
            w.state = next;
        }

        let objective = blocks_objective(&work, r, config)?;
        let res = Residuals::from_parts(&parts, config.eps_abs, config.eps_rel);
        if !(objective.is_finite() && res.primal.is_finite() && res.dual.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite iterate at iteration {k} (objective {objective}, primal {}, dual {})",
                res.primal, res.dual
            )));
        }
        objective_trace.push(objective);
        residual_trace.push((res.primal, res.dual));
        iterations = k;
        if res.converged() {
            converged = true;
            break;
        }
    }

    Ok(BlockSolution {
        abundances: work.into_iter().map(|w| w.state.z).collect(),
        iterations,
        converged,
        objective_trace,
        residual_trace,
    })
}

fn blocks_objective(work: &[BlockWork<'_>], r: &DMatrix<f64>, config: &SolverConfig) -> Result<f64> {
    let mut total = 0.0;
    for w in work {
        total += objective(
            w.spectra,
            r,
            &w.state.z,
            w.laplacian,
            0.0,
            config.lambda,
            config.group,
        )?;
    }
    if config.mu > 0.0 {
        let penalty: f64 = match config.group {
            GroupPenalty::PerPixel => work
                .iter()
                .map(|w| group_norm(&w.state.z, GroupPenalty::PerPixel))
                .sum(),
            GroupPenalty::PerEndmember => (0..r.ncols())
                .map(|i| {
                    work.iter()
                        .map(|w| w.state.z.row(i).norm_squared())
                        .sum::<f64>()
                        .sqrt()
                })
                .sum(),
        };
        total += config.mu * penalty;
    }
    Ok(total)
}

/// Endmember rows whose abundance map has norm above [`ACTIVE_ROW_EPS`].
pub fn active_rows(a: &DMatrix<f64>) -> Vec<usize> {
    a.row_iter()
        .enumerate()
        .filter(|(_, r)| r.norm() > ACTIVE_ROW_EPS)
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn report_from(solution: BlockSolution, abundances: DMatrix<f64>, geometry: ImageGeometry) -> Result<SolveReport> {
    Ok(SolveReport {
        active_rows: active_rows(&abundances),
        abundances: AbundanceMatrix::new(abundances, geometry)?,
        iterations: solution.iterations,
        converged: solution.converged,
        objective_trace: solution.objective_trace,
        residual_trace: solution.residual_trace,
    })
}

fn before_first_iteration(e: Error) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} (setup, before iteration 1)")),
        other => other,
    }
}

/// Graph Laplacian regularized unmixing of the whole cube.
pub fn glup_lap(
    cube: &HyperCube,
    library: &EndmemberLibrary,
    laplacian: &Laplacian,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let block = BlockProblem {
        spectra: cube.data(),
        laplacian,
    };
    let mut solution = solve_blocks(library, &[block], config)?;
    let z = solution.abundances.pop().expect("one block in, one block out");
    report_from(solution, z, cube.geometry())
}

/// Fully constrained least squares: the solver with `λ = μ = 0` and no graph.
pub fn fcls(cube: &HyperCube, library: &EndmemberLibrary, config: &SolverConfig) -> Result<SolveReport> {
    let config = SolverConfig {
        mu: 0.0,
        lambda: 0.0,
        ..*config
    };
    glup_lap(cube, library, &Laplacian::zero(cube.pixel_count()), &config)
}

#[cfg(test)]
mod tests;
