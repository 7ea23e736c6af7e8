//! Pixel-similarity graphs.
//!
//! An [`AffinityMatrix`] is a symmetric, nonnegative, zero-diagonal sparse
//! matrix stored in compressed sparse row form with sorted column indices.
//! Only strictly positive weights are stored. The [`Laplacian`] `D − W` is
//! represented by the affinity together with its degree vector.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::datamodel::{HyperCube, ImageGeometry};
use crate::error::{Error, Result};

/// Row block size for all-pairs distance scans.
const PAIR_BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl AffinityMatrix {
    /// Graph on `n` nodes without edges.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds the matrix from undirected edges, each listed once in either orientation.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut upper: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Data(format!("edge ({i}, {j}) outside a {n}-node graph")));
            }
            if i == j {
                return Err(Error::Data(format!("self-loop at node {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Data(format!("edge ({i}, {j}) has invalid weight {w}")));
            }
            if w > 0.0 {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                upper[a].push((b as u32, w));
            }
        }
        for (i, row) in upper.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::Data(format!("duplicate edge at node {i}")));
            }
        }
        Self::from_upper_rows(n, upper)
    }

    /// Assembles the symmetric matrix from per-row lists of `(j, w)` with `j > i`, sorted by `j`.
    fn from_upper_rows(n: usize, upper: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        if u32::try_from(n).is_err() {
            return Err(Error::Data(format!("{n} nodes exceed the index range")));
        }
        let mut counts = vec![0usize; n];
        for (i, row) in upper.iter().enumerate() {
            counts[i] += row.len();
            for &(j, _) in row {
                counts[j as usize] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for c in &counts {
            row_ptr.push(row_ptr.last().unwrap() + c);
        }
        let nnz = *row_ptr.last().unwrap();
        let mut col_idx = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = row_ptr[..n].to_vec();
        // Lower parts: node k < i is pushed into row i in increasing k.
        for (k, row) in upper.iter().enumerate() {
            for &(j, w) in row {
                let slot = &mut fill[j as usize];
                col_idx[*slot] = k as u32;
                values[*slot] = w;
                *slot += 1;
            }
        }
        for (i, row) in upper.into_iter().enumerate() {
            for (j, w) in row {
                col_idx[fill[i]] = j;
                values[fill[i]] = w;
                fill[i] += 1;
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Stored entries, i.e. twice the number of undirected edges.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nnz() / 2
    }

    /// Column indices and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .filter(move |(&j, _)| j as usize > i)
                .map(move |(&j, &w)| (i, j as usize, w))
        })
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn max_weight(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &w) in cols.iter().zip(vals) {
                d[(i, j as usize)] = w;
            }
        }
        d
    }

    /// Principal submatrix on the given strictly increasing node indices.
    pub fn submatrix(&self, indices: &[usize]) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("submatrix indices must be strictly increasing".into()));
        }
        let mut local = vec![u32::MAX; self.n];
        for (k, &i) in indices.iter().enumerate() {
            if i >= self.n {
                return Err(Error::Data(format!("node {i} outside a {}-node graph", self.n)));
            }
            local[i] = k as u32;
        }
        let upper = indices
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .filter_map(|(&j, &w)| {
                        let l = local[j as usize];
                        (l != u32::MAX && l as usize > k).then_some((l, w))
                    })
                    .collect()
            })
            .collect();
        Self::from_upper_rows(indices.len(), upper)
    }

    /// Relabels nodes: new node `k` is old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let inverse = inverse_permutation(order, self.n)?;
        let mut upper: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n];
        for (i, j, w) in self.edges() {
            let (a, b) = (inverse[i], inverse[j]);
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            upper[a].push((b as u32, w));
        }
        for row in &mut upper {
            row.sort_by_key(|&(j, _)| j);
        }
        Self::from_upper_rows(self.n, upper)
    }

    /// Connected component label of every node, numbered in order of first node.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(i) = stack.pop() {
                for &j in self.row(i).0 {
                    let j = j as usize;
                    if label[j] == usize::MAX {
                        label[j] = count;
                        stack.push(j);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }
}

/// Checks that `order` is a permutation of `0..n` and returns its inverse.
pub fn inverse_permutation(order: &[usize], n: usize) -> Result<Vec<usize>> {
    if order.len() != n {
        return Err(Error::Data(format!(
            "permutation has length {}, expected {n}",
            order.len()
        )));
    }
    let mut inverse = vec![usize::MAX; n];
    for (k, &i) in order.iter().enumerate() {
        if i >= n || inverse[i] != usize::MAX {
            return Err(Error::Data(format!("invalid permutation entry {i} at position {k}")));
        }
        inverse[i] = k;
    }
    Ok(inverse)
}

/// Graph Laplacian `L = D − W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    affinity: AffinityMatrix,
    degree: Vec<f64>,
}

impl From<AffinityMatrix> for Laplacian {
    fn from(affinity: AffinityMatrix) -> Self {
        let degree = affinity.degrees();
        Self { affinity, degree }
    }
}

impl Laplacian {
    /// Laplacian of the edgeless graph on `n` nodes.
    pub fn zero(n: usize) -> Self {
        AffinityMatrix::empty(n).into()
    }

    pub fn node_count(&self) -> usize {
        self.affinity.n
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn affinity(&self) -> &AffinityMatrix {
        &self.affinity
    }

    pub fn has_edges(&self) -> bool {
        self.affinity.nnz() > 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.degree[i]
        } else {
            -self.affinity.get(i, j)
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut l = -self.affinity.to_dense();
        for (i, d) in self.degree.iter().enumerate() {
            l[(i, i)] = *d;
        }
        l
    }

    /// Row sums of `D − W`; zero up to rounding.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| self.degree[i] - self.affinity.row(i).1.iter().sum::<f64>())
            .collect()
    }
}

/// Builds `L = D − W` from a borrowed affinity.
pub fn laplacian(affinity: &AffinityMatrix) -> Laplacian {
    Laplacian::from(affinity.clone())
}

/// `tr(A L Aᵀ)` evaluated as `Σ_{j<k} W_jk ‖a_j − a_k‖²` over undirected edges,
/// where `a_j` is pixel column `j` of `A`.
pub fn laplacian_quadratic(a: &DMatrix<f64>, laplacian: &Laplacian) -> Result<f64> {
    let w = &laplacian.affinity;
    if a.ncols() != w.n {
        return Err(Error::Data(format!(
            "abundance matrix has {} columns, Laplacian has {} nodes",
            a.ncols(),
            w.n
        )));
    }
    let m = a.nrows();
    let flat = a.as_slice();
    let mut total = 0.0;
    for j in 0..w.n {
        let aj = &flat[j * m..(j + 1) * m];
        let (cols, vals) = w.row(j);
        let start = cols.partition_point(|&k| (k as usize) <= j);
        let mut row_total = 0.0;
        for (&k, &wk) in cols[start..].iter().zip(&vals[start..]) {
            let k = k as usize;
            let ak = &flat[k * m..(k + 1) * m];
            let d2: f64 = aj.iter().zip(ak).map(|(x, y)| (x - y) * (x - y)).sum();
            row_total += wk * d2;
        }
        total += row_total;
    }
    Ok(total)
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Scans all pairs `i < j` in row blocks, keeping those for which `keep`
/// returns a weight.
fn upper_pairs<F>(cube: &HyperCube, keep: F) -> Vec<Vec<(u32, f64)>>
where
    F: Fn(f64) -> Option<f64> + Sync,
{
    let n = cube.pixel_count();
    let l = cube.band_count();
    let flat = cube.data().as_slice();
    let blocks: Vec<usize> = (0..n).step_by(PAIR_BLOCK).collect();
    blocks
        .into_par_iter()
        .flat_map_iter(|start| {
            let end = (start + PAIR_BLOCK).min(n);
            let keep = &keep;
            (start..end).map(move |i| {
                let si = &flat[i * l..(i + 1) * l];
                ((i + 1)..n)
                    .filter_map(|j| {
                        let d2 = squared_distance(si, &flat[j * l..(j + 1) * l]);
                        keep(d2).map(|w| (j as u32, w))
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect()
}

fn require_pixels(cube: &HyperCube) -> Result<()> {
    if cube.pixel_count() == 0 {
        return Err(Error::Data("cube has no pixels".into()));
    }
    Ok(())
}

/// Unit weights between pixels whose squared spectral distance is below `d_min_sq`.
pub fn affinity_threshold(cube: &HyperCube, d_min_sq: f64) -> Result<AffinityMatrix> {
    require_pixels(cube)?;
    if !(d_min_sq > 0.0) {
        return Err(Error::Config(format!("d_min_sq must be positive, got {d_min_sq}")));
    }
    let upper = upper_pairs(cube, |d2| (d2 < d_min_sq).then_some(1.0));
    AffinityMatrix::from_upper_rows(cube.pixel_count(), upper)
}

/// Gaussian-kernel weights `exp(−‖s_i − s_j‖² / 2σ²)`.
///
/// With `k_nn`, an edge is kept when either endpoint has the other among its
/// `k_nn` nearest neighbours (ties broken by index). With `floor`, weights
/// below it are dropped.
pub fn affinity_gaussian(
    cube: &HyperCube,
    sigma: f64,
    k_nn: Option<usize>,
    floor: Option<f64>,
) -> Result<AffinityMatrix> {
    require_pixels(cube)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    if k_nn == Some(0) {
        return Err(Error::Config("k_nn must be at least 1".into()));
    }
    let scale = 1.0 / (2.0 * sigma * sigma);
    let floor = floor.unwrap_or(0.0);
    let weight = move |d2: f64| {
        let w = (-d2 * scale).exp();
        (w > 0.0 && w >= floor).then_some(w)
    };
    let n = cube.pixel_count();
    let Some(k) = k_nn else {
        return AffinityMatrix::from_upper_rows(n, upper_pairs(cube, weight));
    };

    let l = cube.band_count();
    let flat = cube.data().as_slice();
    let neighbours: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let si = &flat[i * l..(i + 1) * l];
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(si, &flat[j * l..(j + 1) * l]), j))
                .collect();
            let take = k.min(d.len());
            if take < d.len() {
                d.select_nth_unstable_by(take, |a, b| a.partial_cmp(b).unwrap());
            }
            d.truncate(take);
            d.into_iter().map(|(d2, j)| (j, d2)).collect()
        })
        .collect();
    let mut upper: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for (i, list) in neighbours.iter().enumerate() {
        for &(j, d2) in list {
            if let Some(w) = weight(d2) {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                upper[a].push((b as u32, w));
            }
        }
    }
    for row in &mut upper {
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by_key(|e| e.0);
    }
    AffinityMatrix::from_upper_rows(n, upper)
}

/// Multiplies every edge by a Gaussian of the pixels' image-plane distance.
pub fn spatial_product(
    affinity: &AffinityMatrix,
    geometry: ImageGeometry,
    bandwidth: f64,
) -> Result<AffinityMatrix> {
    if geometry.pixel_count() != affinity.n {
        return Err(Error::Data("geometry does not match the affinity size".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Config(format!("spatial bandwidth must be positive, got {bandwidth}")));
    }
    let scale = 1.0 / (2.0 * bandwidth * bandwidth);
    let edges: Vec<_> = affinity
        .edges()
        .map(|(i, j, w)| {
            let (ri, ci) = geometry.coords(i);
            let (rj, cj) = geometry.coords(j);
            let dr = ri as f64 - rj as f64;
            let dc = ci as f64 - cj as f64;
            (i, j, w * (-(dr * dr + dc * dc) * scale).exp())
        })
        .collect();
    AffinityMatrix::from_edges(affinity.n, &edges)
}

fn write_mm(
    path: &Path,
    n: usize,
    entries: impl Iterator<Item = (usize, usize, f64)>,
    count: usize,
) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{n} {n} {count}")?;
        for (i, j, v) in entries {
            writeln!(w, "{} {} {v}", i + 1, j + 1)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Lower triangle of `W` in Matrix Market coordinate format.
pub fn write_affinity_mm(affinity: &AffinityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let entries = affinity.edges().map(|(i, j, w)| (j, i, w));
    write_mm(path.as_ref(), affinity.n, entries, affinity.edge_count())
}

/// Reads an affinity written by [`write_affinity_mm`] (any symmetric
/// coordinate file with an empty diagonal).
pub fn read_affinity_mm(path: impl AsRef<Path>) -> Result<AffinityMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    let mut lines = text.lines();
    let banner = lines.next().ok_or_else(|| bad("empty file"))?;
    let banner_fields: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if banner_fields != ["%%matrixmarket", "matrix", "coordinate", "real", "symmetric"] {
        return Err(bad("expected a real symmetric coordinate Matrix Market file"));
    }
    let mut lines = lines.filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty());
    let size: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing size line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad size line")))
        .collect::<Result<_>>()?;
    let [rows, cols, count] = size[..] else {
        return Err(bad("size line needs three fields"));
    };
    if rows != cols {
        return Err(bad("affinity must be square"));
    }
    let mut edges = Vec::with_capacity(count);
    for line in lines {
        let mut t = line.split_whitespace();
        let mut index = || -> Result<usize> {
            let v: usize = t
                .next()
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| bad(&format!("bad entry {line:?}")))?;
            v.checked_sub(1).ok_or_else(|| bad("indices are 1-based"))
        };
        let (i, j) = (index()?, index()?);
        let w: f64 = t
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad(&format!("bad entry {line:?}")))?;
        edges.push((i, j, w));
    }
    if edges.len() != count {
        return Err(bad(&format!("header declares {count} entries, found {}", edges.len())));
    }
    AffinityMatrix::from_edges(rows, &edges)
}

/// Lower triangle of `L` (diagonal included) in Matrix Market coordinate format.
pub fn write_laplacian_mm(laplacian: &Laplacian, path: impl AsRef<Path>) -> Result<()> {
    let w = &laplacian.affinity;
    let entries = (0..w.n).flat_map(|i| {
        let (cols, vals) = w.row(i);
        cols.iter()
            .zip(vals)
            .filter(move |(&j, _)| (j as usize) < i)
            .map(move |(&j, &v)| (i, j as usize, -v))
            .chain(std::iter::once((i, i, laplacian.degree[i])))
    });
    write_mm(path.as_ref(), w.n, entries, w.edge_count() + w.n)
}
