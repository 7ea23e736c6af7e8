//! RMSE scoring, grayscale image export and the sweep results table.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{AbundanceMatrix, ImageGeometry};
use crate::error::{Error, Result};
use crate::graph::{inverse_permutation, AffinityMatrix};

/// What the squared Frobenius error is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divisor {
    /// `N · L`, with `L` the band count of the scene.
    NL { bands: usize },
    /// `N · M`, with `M` the number of abundance rows.
    NM,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseResult {
    pub value: f64,
    pub n_pixels: usize,
    pub divisor: Divisor,
}

/// `sqrt(‖Â − A‖²_F / divisor)`.
pub fn rmse(est: &AbundanceMatrix, truth: &AbundanceMatrix, divisor: Divisor) -> Result<RmseResult> {
    let (a, b) = (est.data(), truth.data());
    if a.shape() != b.shape() {
        return Err(Error::Data(format!(
            "estimate is {}×{}, truth is {}×{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let n = a.ncols();
    let per_pixel = match divisor {
        Divisor::NL { bands: 0 } => return Err(Error::Data("band count must be positive".into())),
        Divisor::NL { bands } => bands,
        Divisor::NM => a.nrows(),
    };
    Ok(RmseResult {
        value: ((a - b).norm_squared() / (n * per_pixel) as f64).sqrt(),
        n_pixels: n,
        divisor,
    })
}

/// Both conventions at once: `(NL, NM)`.
pub fn rmse_both(est: &AbundanceMatrix, truth: &AbundanceMatrix, bands: usize) -> Result<(f64, f64)> {
    Ok((
        rmse(est, truth, Divisor::NL { bands })?.value,
        rmse(est, truth, Divisor::NM)?.value,
    ))
}

/// `round(255 · clamp(v, 0, 1))`, halves rounded away from zero.
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// A decoded 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Writes a binary PGM (P5) with maximum value 255.
pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if image.pixels.len() != image.width * image.height {
        return Err(Error::Data(format!(
            "{} pixels for a {}×{} image",
            image.pixels.len(),
            image.width,
            image.height
        )));
    }
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", image.width, image.height)?;
        w.write_all(&image.pixels)?;
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM with maximum value at most 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("not a binary PGM (magic {:?})", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (width, height, max) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if max == 0 || max > 255 {
        return Err(Error::Format(format!("unsupported PGM maximum {max}")));
    }
    let pixels = bytes.get(pos + 1..).unwrap_or(&[]).to_vec();
    if pixels.len() != width * height {
        return Err(Error::Format(format!(
            "PGM payload has {} bytes, expected {}",
            pixels.len(),
            width * height
        )));
    }
    Ok(GrayImage { width, height, pixels })
}

/// Grayscale image of one endmember's abundance map.
pub fn abundance_map_image(a: &AbundanceMatrix, endmember: usize, geometry: ImageGeometry) -> Result<GrayImage> {
    if endmember >= a.endmember_count() {
        return Err(Error::Data(format!(
            "endmember {endmember} out of range for {} endmembers",
            a.endmember_count()
        )));
    }
    if geometry.pixel_count() != a.pixel_count() {
        return Err(Error::Data(format!(
            "geometry {}×{} does not fit {} pixels",
            geometry.rows(),
            geometry.cols(),
            a.pixel_count()
        )));
    }
    Ok(GrayImage {
        width: geometry.cols(),
        height: geometry.rows(),
        pixels: a.data().row(endmember).iter().map(|&v| quantize(v)).collect(),
    })
}

pub fn export_abundance_map(
    a: &AbundanceMatrix,
    endmember: usize,
    geometry: ImageGeometry,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_pgm(&abundance_map_image(a, endmember, geometry)?, path)
}

/// `N × N` image of `W` with rows and columns taken in `order`; the largest
/// weight maps to 255.
pub fn affinity_heatmap(w: &AffinityMatrix, order: &[usize]) -> Result<GrayImage> {
    let n = w.node_count();
    let permuted = w.permuted(order)?;
    let max = w.max_weight();
    let mut pixels = vec![0u8; n * n];
    if max > 0.0 {
        for i in 0..n {
            let (cols, vals) = permuted.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                pixels[i * n + j as usize] = quantize(v / max);
            }
        }
    }
    Ok(GrayImage {
        width: n,
        height: n,
        pixels,
    })
}

pub fn export_affinity_heatmap(w: &AffinityMatrix, order: &[usize], path: impl AsRef<Path>) -> Result<()> {
    write_pgm(&affinity_heatmap(w, order)?, path)
}

/// Reorders a square heatmap back by the inverse of `order`.
pub fn unpermute_heatmap(image: &GrayImage, order: &[usize]) -> Result<GrayImage> {
    let n = image.width;
    if image.height != n {
        return Err(Error::Data("heatmap is not square".into()));
    }
    let inverse = inverse_permutation(order, n)?;
    let mut pixels = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            pixels[i * n + j] = image.get(inverse[i], inverse[j]);
        }
    }
    Ok(GrayImage {
        width: n,
        height: n,
        pixels,
    })
}

/// Whether a sweep cell produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub snr_db: f64,
    pub method: String,
    pub mu: f64,
    pub lambda: f64,
    pub d_min_sq: f64,
    pub rho: f64,
    pub iterations: usize,
    pub rmse_nl: f64,
    pub rmse_nm: f64,
    pub status: Status,
    pub best: bool,
}

/// Sorts rows by `(dataset, snr_db, method, mu, lambda, d_min_sq)` and
/// flags the lowest `rmse_nl` among successful rows of each
/// `(dataset, snr_db)` group; ties go to the earlier row.
pub fn finalize_results(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.method.cmp(&b.method))
            .then(a.mu.total_cmp(&b.mu))
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.d_min_sq.total_cmp(&b.d_min_sq))
    });
    let mut start = 0;
    while start < rows.len() {
        let mut end = start;
        while end < rows.len() && rows[end].dataset == rows[start].dataset && rows[end].snr_db == rows[start].snr_db {
            end += 1;
        }
        let best = (start..end)
            .filter(|&i| rows[i].status == Status::Ok)
            .min_by(|&a, &b| rows[a].rmse_nl.total_cmp(&rows[b].rmse_nl).then(a.cmp(&b)));
        for i in start..end {
            rows[i].best = Some(i) == best;
        }
        start = end;
    }
}

pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}
