//! Spectral partitioning of the pixel graph into independently solvable
//! subgraphs.
//!
//! Clustering follows the normalized spectral scheme: the top `k`
//! eigenvectors of `D^{-1/2} W D^{-1/2}` embed the nodes, the embedding
//! rows are normalized to unit length, and k-means groups them. Isolated
//! nodes are set aside into their own cluster before normalization.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datamodel::{AbundanceMatrix, EndmemberLibrary, HyperCube, ImageGeometry};
use crate::error::{Error, Result};
use crate::graph::{AffinityMatrix, Laplacian};
use crate::solver::{self, BlockProblem, SolveReport, SolverConfig};

/// Eigenvector residual `‖W_n v − θ v‖` required of every returned eigenpair.
pub const EIGEN_TOLERANCE: f64 = 1e-8;
const DENSE_LIMIT: usize = 400;
const MAX_RESTARTS: usize = 500;
const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOLERANCE: f64 = 1e-8;

/// Cluster label of every pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionLabels {
    labels: Vec<usize>,
    k: usize,
}

impl PartitionLabels {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Data("a partition needs at least one cluster".into()));
        }
        let mut sizes = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::Data(format!("label {l} of pixel {i} is not below k = {k}")));
            }
            sizes[l] += 1;
        }
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Data(format!("cluster {c} is empty")));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Sorted pixel indices of every cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Normalized spectral clustering of `W` into `k` clusters.
///
/// Deterministic for fixed `(W, k, seed)`. When the graph has at least `k`
/// connected components no component is split.
pub fn spectral_partition(w: &AffinityMatrix, k: usize, seed: u64) -> Result<PartitionLabels> {
    let n = w.node_count();
    if k == 0 {
        return Err(Error::Config("partition k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!("partition k = {k} exceeds the {n} pixels")));
    }
    if k == 1 {
        return PartitionLabels::new(vec![0; n], 1);
    }

    let degree = w.degrees();
    let connected: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    let isolated: Vec<usize> = (0..n).filter(|&i| degree[i] == 0.0).collect();
    let sub = w.submatrix(&connected)?;
    let (_, connected_components) = sub.connected_components();
    let k_graph = if isolated.is_empty() {
        k
    } else if connected_components + isolated.len() >= k {
        // Enough components overall: no connected component needs splitting.
        connected_components.min(k - 1)
    } else {
        (k - 1).min(connected.len())
    };

    let mut labels = vec![usize::MAX; n];
    if k_graph > 0 {
        let local = cluster_connected(&sub, k_graph, seed)?;
        for (&i, l) in connected.iter().zip(local) {
            labels[i] = l;
        }
    }
    // Isolated nodes fill the remaining clusters in contiguous runs.
    let groups = k - k_graph;
    for (pos, &i) in isolated.iter().enumerate() {
        labels[i] = k_graph + pos * groups / isolated.len();
    }
    PartitionLabels::new(canonical(&labels), k)
}

/// Renumbers labels in order of first appearance.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Clusters a graph without isolated nodes.
fn cluster_connected(w: &AffinityMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = w.node_count();
    let inv_sqrt: Vec<f64> = w.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
    let op = NormalizedAffinity { w, inv_sqrt: &inv_sqrt };
    let vectors = if n <= DENSE_LIMIT {
        dense_top_eigenvectors(&op, k)
    } else {
        krylov_top_eigenvectors(&op, k, seed)?
    };

    let (component, components) = w.connected_components();
    let (units, weights): (DMatrix<f64>, Vec<f64>) = if components >= k {
        // Whole components are the clustering units, at their mean embedding.
        let mut sums = DMatrix::zeros(components, k);
        let mut counts = vec![0.0; components];
        for i in 0..n {
            let c = component[i];
            counts[c] += 1.0;
            for j in 0..k {
                sums[(c, j)] += vectors[(i, j)];
            }
        }
        (sums, counts)
    } else {
        (vectors, vec![1.0; n])
    };
    let points = normalize_rows(units);
    let assignment = weighted_kmeans(&points, &weights, k, seed);
    Ok(if components >= k {
        component.iter().map(|&c| assignment[c]).collect()
    } else {
        assignment
    })
}

struct NormalizedAffinity<'a> {
    w: &'a AffinityMatrix,
    inv_sqrt: &'a [f64],
}

impl NormalizedAffinity<'_> {
    fn size(&self) -> usize {
        self.w.node_count()
    }

    /// `D^{-1/2} W D^{-1/2} X` for a column block `X`.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.size();
        let b = x.ncols();
        let scaled = DMatrix::from_fn(n, b, |i, j| x[(i, j)] * self.inv_sqrt[i]);
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.w.row(i);
                let mut acc = vec![0.0; b];
                for (&j, &wij) in cols.iter().zip(vals) {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += wij * scaled[(j as usize, c)];
                    }
                }
                acc.iter_mut().for_each(|a| *a *= self.inv_sqrt[i]);
                acc
            })
            .collect();
        DMatrix::from_fn(n, b, |i, j| rows[i][j])
    }
}

/// Eigenvectors of the `k` largest eigenvalues, by dense decomposition.
fn dense_top_eigenvectors(op: &NormalizedAffinity<'_>, k: usize) -> DMatrix<f64> {
    let dense = op.apply(&DMatrix::identity(op.size(), op.size()));
    let sym = (&dense + dense.transpose()) * 0.5;
    top_pairs(SymmetricEigen::new(sym), k).1
}

/// Sorts an eigendecomposition by decreasing eigenvalue and keeps `k` pairs.
fn top_pairs(eig: SymmetricEigen<f64, nalgebra::Dyn>, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), k, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Restarted block Krylov iteration with full reorthogonalization and
/// Rayleigh–Ritz extraction.
fn krylov_top_eigenvectors(op: &NormalizedAffinity<'_>, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    let n = op.size();
    let block = (k + 6).min(n);
    let depth = 6usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e16e);
    let mut start = DMatrix::from_fn(n, block, |_, _| rng.random_range(-1.0..1.0));
    let mut worst = f64::INFINITY;

    for restart in 0..MAX_RESTARTS {
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(block * (depth + 1));
        let mut current = start.clone();
        for level in 0..=depth {
            let mut added = 0;
            for c in 0..current.ncols() {
                if let Some(v) = orthonormalize(current.column(c).into_owned(), &basis) {
                    basis.push(v);
                    added += 1;
                }
            }
            if added == 0 || basis.len() >= n || level == depth {
                break;
            }
            let tail = DMatrix::from_columns(&basis[basis.len() - added..]);
            current = op.apply(&tail);
        }

        let q = DMatrix::from_columns(&basis);
        let aq = op.apply(&q);
        let t = q.transpose() * &aq;
        let t = (&t + t.transpose()) * 0.5;
        let keep = block.min(q.ncols());
        if keep < k {
            return Err(Error::Numerical(format!(
                "eigensolver basis collapsed to {} vectors at restart {restart}",
                q.ncols()
            )));
        }
        let (theta, coeffs) = top_pairs(SymmetricEigen::new(t), keep);
        let ritz = &q * &coeffs;
        let image = &aq * &coeffs;
        worst = (0..k)
            .map(|c| (image.column(c) - ritz.column(c) * theta[c]).norm())
            .fold(0.0, f64::max);
        if worst <= EIGEN_TOLERANCE {
            return Ok(ritz.columns(0, k).into_owned());
        }
        start = ritz;
    }
    Err(Error::Numerical(format!(
        "eigensolver did not converge in {MAX_RESTARTS} restarts (largest residual {worst:.3e}, target {EIGEN_TOLERANCE:.0e})"
    )))
}

/// Two passes of classical Gram–Schmidt; `None` if `v` lies in the span.
fn orthonormalize(mut v: DVector<f64>, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    let original = v.norm();
    if original == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let p = b.dot(&v);
            v.axpy(-p, b, 1.0);
        }
    }
    let norm = v.norm();
    (norm > 1e-10 * original).then(|| v / norm)
}

fn normalize_rows(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    m
}

fn squared_distance(points: &DMatrix<f64>, i: usize, center: &[f64]) -> f64 {
    center
        .iter()
        .enumerate()
        .map(|(c, v)| (points[(i, c)] - v).powi(2))
        .sum()
}

/// Weighted Lloyd iterations from a k-means++ seeding. Every cluster ends
/// up non-empty as long as there are at least `k` points.
fn weighted_kmeans(points: &DMatrix<f64>, weights: &[f64], k: usize, seed: u64) -> Vec<usize> {
    let (n, dim) = points.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |i: usize| -> Vec<f64> { points.row(i).iter().copied().collect() };

    let total: f64 = weights.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let first = weights
        .iter()
        .position(|&w| {
            pick -= w;
            pick < 0.0
        })
        .unwrap_or(n - 1);
    let mut chosen = vec![first];
    let mut centers = vec![row(first)];
    let mut nearest: Vec<f64> = (0..n).map(|i| squared_distance(points, i, &centers[0])).collect();
    while centers.len() < k {
        let mass: f64 = (0..n).map(|i| weights[i] * nearest[i]).sum();
        let next = if mass > 0.0 {
            let mut pick = rng.random_range(0.0..mass);
            (0..n)
                .find(|&i| {
                    pick -= weights[i] * nearest[i];
                    pick < 0.0 && nearest[i] > 0.0
                })
                .unwrap_or_else(|| (0..n).rev().find(|&i| nearest[i] > 0.0).unwrap())
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("at least k points")
        };
        chosen.push(next);
        centers.push(row(next));
        for i in 0..n {
            nearest[i] = nearest[i].min(squared_distance(points, i, &centers[centers.len() - 1]));
        }
    }

    let mut assignment = vec![0usize; n];
    let mut previous = f64::INFINITY;
    for _ in 0..KMEANS_MAX_ITER {
        let mut inertia = 0.0;
        for i in 0..n {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, center)| (c, squared_distance(points, i, center)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            assignment[i] = best;
            inertia += weights[i] * d;
        }
        fill_empty_clusters(points, weights, &centers, &mut assignment, k);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut mass = vec![0.0; k];
        for i in 0..n {
            let c = assignment[i];
            mass[c] += weights[i];
            for (d, s) in sums[c].iter_mut().enumerate() {
                *s += weights[i] * points[(i, d)];
            }
        }
        for c in 0..k {
            centers[c] = sums[c].iter().map(|s| s / mass[c]).collect();
        }
        let settled = previous.is_finite() && (previous - inertia).abs() <= KMEANS_TOLERANCE * previous.max(f64::MIN_POSITIVE);
        previous = inertia;
        if settled {
            break;
        }
    }
    assignment
}

/// Moves the worst-fitting point of a multi-point cluster into each empty cluster.
fn fill_empty_clusters(
    points: &DMatrix<f64>,
    weights: &[f64],
    centers: &[Vec<f64>],
    assignment: &mut [usize],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..assignment.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .map(|i| (i, weights[i] * squared_distance(points, i, &centers[assignment[i]])))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
            .0;
        assignment[donor] = empty;
    }
}

/// One cluster's share of the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub pixel_indices: Vec<usize>,
    /// `L × n_c` spectra of the cluster's pixels.
    pub sub_cube: DMatrix<f64>,
    /// Rebuilt from the affinity submatrix, so degrees only count kept edges.
    pub sub_laplacian: Laplacian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub subproblems: Vec<Subproblem>,
    /// Total weight of the edges joining different clusters.
    pub cut_weight: f64,
}

pub fn extract_subproblems(
    cube: &HyperCube,
    laplacian: &Laplacian,
    affinity: &AffinityMatrix,
    labels: &PartitionLabels,
) -> Result<Extraction> {
    let n = cube.pixel_count();
    if laplacian.node_count() != n || affinity.node_count() != n || labels.len() != n {
        return Err(Error::Data(format!(
            "partition inputs disagree on the pixel count: cube {n}, Laplacian {}, affinity {}, labels {}",
            laplacian.node_count(),
            affinity.node_count(),
            labels.len()
        )));
    }
    let l = labels.labels();
    let cut_weight = affinity
        .edges()
        .filter(|&(i, j, _)| l[i] != l[j])
        .map(|(_, _, w)| w)
        .sum();
    let subproblems = labels
        .members()
        .into_iter()
        .map(|pixel_indices| {
            let sub_laplacian = Laplacian::from(affinity.submatrix(&pixel_indices)?);
            Ok(Subproblem {
                sub_cube: cube.data().select_columns(&pixel_indices),
                sub_laplacian,
                pixel_indices,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Extraction {
        subproblems,
        cut_weight,
    })
}

/// Scatters per-cluster abundance columns back into image order.
pub fn stitch(parts: &[(Vec<usize>, DMatrix<f64>)], geometry: ImageGeometry) -> Result<AbundanceMatrix> {
    let n = geometry.pixel_count();
    let m = parts.first().map_or(0, |(_, a)| a.nrows());
    let mut out = DMatrix::zeros(m, n);
    let mut seen = vec![false; n];
    for (indices, a) in parts {
        if a.nrows() != m || a.ncols() != indices.len() {
            return Err(Error::Data(format!(
                "block of {} indices carries a {}×{} abundance matrix (expected {m} rows)",
                indices.len(),
                a.nrows(),
                a.ncols()
            )));
        }
        for (k, &j) in indices.iter().enumerate() {
            if j >= n {
                return Err(Error::Data(format!("pixel index {j} outside 0..{n}")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Data(format!("pixel {j} appears in more than one block")));
            }
            out.set_column(j, &a.column(k));
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!("pixel {j} is not covered by any block")));
    }
    AbundanceMatrix::new(out, geometry)
}

/// Solves every subproblem in lockstep and stitches the result.
pub fn solve_partitioned(
    cube: &HyperCube,
    library: &EndmemberLibrary,
    extraction: &Extraction,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let blocks: Vec<BlockProblem<'_>> = extraction
        .subproblems
        .iter()
        .map(|s| BlockProblem {
            spectra: &s.sub_cube,
            laplacian: &s.sub_laplacian,
        })
        .collect();
    let mut solution = solver::solve_blocks(library, &blocks, config)?;
    let parts: Vec<(Vec<usize>, DMatrix<f64>)> = extraction
        .subproblems
        .iter()
        .zip(std::mem::take(&mut solution.abundances))
        .map(|(s, a)| (s.pixel_indices.clone(), a))
        .collect();
    let stitched = stitch(&parts, cube.geometry())?;
    solver::report_from(solution, stitched.into_data(), cube.geometry())
}

/// Writes one label per line.
pub fn save_labels(labels: &PartitionLabels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for l in labels.labels() {
        writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<PartitionLabels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse::<usize>()
                .map_err(|_| Error::Format(format!("{}: line {}: bad label {line:?}", path.display(), n + 1)))?,
        );
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    PartitionLabels::new(labels, k)
}

/// Per-cluster sizes and the cut weight as a plain text table.
pub fn summary_table(extraction: &Extraction) -> String {
    let mut out = String::from("cluster  pixels  edges\n");
    for (c, s) in extraction.subproblems.iter().enumerate() {
        let _ = writeln!(
            out,
            "{c:>7}  {:>6}  {:>5}",
            s.pixel_indices.len(),
            s.sub_laplacian.affinity().edge_count()
        );
    }
    let _ = writeln!(out, "cut weight: {}", extraction.cut_weight);
    out
}
