//! Numeric containers for cubes, endmember libraries and abundance matrices,
//! together with their on-disk formats.
//!
//! All matrices are column-major `nalgebra` matrices. A cube is stored as an
//! `L × N` matrix whose column `j` is the spectrum of pixel `j`, where pixels
//! are numbered in row-major image order (`j = r * cols + c`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};

const CUBE_MAGIC: &[u8; 4] = b"HYC1";
const CUBE_HEADER_LEN: usize = 20;

/// Default tolerance for [`AbundanceMatrix::is_feasible`].
pub const DEFAULT_FEASIBILITY_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageGeometry {
    rows: usize,
    cols: usize,
}

impl ImageGeometry {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Data(format!(
                "image geometry must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Column index of pixel `(r, c)`.
    pub fn index(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols);
        r * self.cols + c
    }

    /// Image coordinates `(r, c)` of pixel column `j`.
    pub fn coords(&self, j: usize) -> (usize, usize) {
        (j / self.cols, j % self.cols)
    }
}

/// Hyperspectral image `S`: `L` bands by `N = rows * cols` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    data: DMatrix<f64>,
    geometry: ImageGeometry,
}

impl HyperCube {
    pub fn new(data: DMatrix<f64>, geometry: ImageGeometry) -> Result<Self> {
        let cube = Self { data, geometry };
        cube.validate()?;
        Ok(cube)
    }

    fn validate(&self) -> Result<()> {
        if self.data.nrows() == 0 {
            return Err(Error::Data("cube has zero spectral bands".into()));
        }
        if self.data.ncols() != self.geometry.pixel_count() {
            return Err(Error::Data(format!(
                "cube has {} pixel columns but geometry {}x{} implies {}",
                self.data.ncols(),
                self.geometry.rows,
                self.geometry.cols,
                self.geometry.pixel_count()
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "cube contains a non-finite value at flat index {pos}"
            )));
        }
        Ok(())
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn band_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixel_count(&self) -> usize {
        self.data.ncols()
    }

    /// Spectrum `s_j` of pixel column `j`.
    pub fn spectrum(&self, j: usize) -> DVectorView<'_, f64> {
        self.data.column(j)
    }

    /// Spectrum of the pixel at image position `(r, c)`.
    pub fn pixel(&self, r: usize, c: usize) -> DVectorView<'_, f64> {
        self.data.column(self.geometry.index(r, c))
    }

    /// All `N` values of band `i` (row `i` of `S`).
    pub fn band(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    /// Cube restricted to the given pixel columns, laid out as a single image row.
    pub fn select_pixels(&self, indices: &[usize]) -> Result<HyperCube> {
        let geometry = ImageGeometry::new(1, indices.len())?;
        let data = self.data.select_columns(indices);
        HyperCube::new(data, geometry)
    }
}

/// Endmember library `R`: `L` bands by `M` endmembers.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberLibrary {
    spectra: DMatrix<f64>,
    names: Vec<String>,
}

impl EndmemberLibrary {
    pub fn new(spectra: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if spectra.ncols() == 0 {
            return Err(Error::Data("library has no endmembers".into()));
        }
        if spectra.nrows() == 0 {
            return Err(Error::Data("library has zero spectral bands".into()));
        }
        if names.len() != spectra.ncols() {
            return Err(Error::Data(format!(
                "library has {} spectra but {} names",
                spectra.ncols(),
                names.len()
            )));
        }
        if spectra.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("library contains non-finite values".into()));
        }
        for (i, col) in spectra.column_iter().enumerate() {
            if col.norm() <= 0.0 {
                return Err(Error::Data(format!("endmember {i} has zero norm")));
            }
        }
        Ok(Self { spectra, names })
    }

    pub fn spectra(&self) -> &DMatrix<f64> {
        &self.spectra
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn band_count(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn endmember_count(&self) -> usize {
        self.spectra.ncols()
    }
}

/// Summary of how far an abundance matrix is from the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// Smallest entry of the matrix.
    pub min_entry: f64,
    /// Largest `|sum_i A_ij - 1|` over columns.
    pub max_sum_deviation: f64,
}

impl Feasibility {
    pub fn holds(&self, eps: f64) -> bool {
        self.min_entry >= -eps && self.max_sum_deviation <= eps
    }
}

/// Abundance matrix `A`: `M` endmembers by `N` pixels.
///
/// Feasibility (nonnegativity and unit column sums) is checked on demand
/// rather than enforced, since solver iterates legitimately violate it.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    data: DMatrix<f64>,
    geometry: ImageGeometry,
}

impl AbundanceMatrix {
    pub fn new(data: DMatrix<f64>, geometry: ImageGeometry) -> Result<Self> {
        if data.ncols() != geometry.pixel_count() {
            return Err(Error::Data(format!(
                "abundance matrix has {} columns but geometry implies {}",
                data.ncols(),
                geometry.pixel_count()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::Data("abundance matrix has no endmember rows".into()));
        }
        Ok(Self { data, geometry })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn endmember_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixel_count(&self) -> usize {
        self.data.ncols()
    }

    /// Abundance map of endmember `i` (row `i` of `A`), in pixel order.
    pub fn map(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn feasibility(&self) -> Feasibility {
        let min_entry = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let max_sum_deviation = self
            .data
            .column_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        Feasibility {
            min_entry,
            max_sum_deviation,
        }
    }

    pub fn is_feasible(&self, eps: f64) -> bool {
        self.feasibility().holds(eps)
    }
}

/// Reads a cube in the HYC1 binary layout: magic `HYC1`, little-endian `u32`
/// band count, rows and cols, four zero bytes, then `f64` LE values band by band.
pub fn load_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

fn decode_cube(bytes: &[u8]) -> Result<HyperCube> {
    if bytes.len() < CUBE_HEADER_LEN {
        return Err(Error::Format(format!(
            "HYC1 header needs {CUBE_HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != CUBE_MAGIC {
        return Err(Error::Format("missing HYC1 magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    let (bands, rows, cols) = (word(0) as usize, word(1) as usize, word(2) as usize);
    if bytes[16..20] != [0; 4] {
        return Err(Error::Format("HYC1 reserved bytes are not zero".into()));
    }
    if bands == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format(format!(
            "HYC1 header declares an empty cube ({bands} bands, {rows}x{cols})"
        )));
    }
    let n = rows * cols;
    let expected = bands
        .checked_mul(n)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Format("HYC1 header dimensions overflow".into()))?;
    let payload = &bytes[CUBE_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "HYC1 header declares {} values, payload holds {} bytes",
            bands * n,
            payload.len()
        )));
    }
    let mut data = DMatrix::zeros(bands, n);
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value in HYC1 payload at band {}, pixel {}",
                k / n,
                k % n
            )));
        }
        data[(k / n, k % n)] = v;
    }
    HyperCube::new(data, ImageGeometry::new(rows, cols)?)
}

pub fn save_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<()> {
    cube.validate()?;
    let path = path.as_ref();
    let geometry = cube.geometry();
    let dims = [cube.band_count(), geometry.rows(), geometry.cols()];
    let mut header = Vec::with_capacity(CUBE_HEADER_LEN);
    header.extend_from_slice(CUBE_MAGIC);
    for d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::Data(format!("dimension {d} does not fit the HYC1 header")))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    header.extend_from_slice(&[0; 4]);

    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&header)?;
        let data = cube.data();
        for b in 0..data.nrows() {
            for j in 0..data.ncols() {
                w.write_all(&data[(b, j)].to_le_bytes())?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads an endmember library CSV: a header row of names, then one row per band.
pub fn load_library(path: impl AsRef<Path>) -> Result<EndmemberLibrary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_library(file)
}

fn read_library(reader: impl Read) -> Result<EndmemberLibrary> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Format(format!("library header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Format("library CSV is empty".into()));
    }
    let mut values = Vec::new();
    let mut bands = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("library row {}: {e}", i + 2)))?;
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Format(format!("library row {}: non-numeric cell {cell:?}", i + 2))
            })?;
            values.push(v);
        }
        bands += 1;
    }
    if bands == 0 {
        return Err(Error::Format("library CSV has no band rows".into()));
    }
    let spectra = DMatrix::from_row_slice(bands, names.len(), &values);
    EndmemberLibrary::new(spectra, names)
}

pub fn save_library(library: &EndmemberLibrary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", library.names().join(","))?;
        for row in library.spectra().row_iter() {
            write_csv_row(&mut w, row.iter())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn write_csv_row<'a>(w: &mut impl Write, values: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        // `{}` on f64 is the shortest representation that round-trips exactly.
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")
}

/// Writes `A` as CSV (`M` rows by `N` columns) preceded by a `# rows=R cols=C` line.
pub fn save_abundances(abundances: &AbundanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let g = abundances.geometry();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# rows={} cols={}", g.rows(), g.cols())?;
        for row in abundances.data().row_iter() {
            write_csv_row(&mut w, row.iter())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_abundances(path: impl AsRef<Path>) -> Result<AbundanceMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("abundance CSV is empty".into()))?
        .map_err(|e| Error::io(path, e))?;
    let geometry = parse_geometry_line(&header)?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Format(format!("abundance row {}: non-numeric cell {cell:?}", i + 1))
            })?;
            values.push(v);
        }
        if values.len() - before != geometry.pixel_count() {
            return Err(Error::Format(format!(
                "abundance row {} has {} cells, expected {}",
                i + 1,
                values.len() - before,
                geometry.pixel_count()
            )));
        }
        rows += 1;
    }
    let data = DMatrix::from_row_slice(rows, geometry.pixel_count(), &values);
    AbundanceMatrix::new(data, geometry)
}

fn parse_geometry_line(line: &str) -> Result<ImageGeometry> {
    let bad = || Error::Format(format!("expected '# rows=R cols=C', found {line:?}"));
    let rest = line.strip_prefix('#').ok_or_else(bad)?;
    let mut rows = None;
    let mut cols = None;
    for token in rest.split_whitespace() {
        match token.split_once('=') {
            Some(("rows", v)) => rows = v.parse().ok(),
            Some(("cols", v)) => cols = v.parse().ok(),
            _ => return Err(bad()),
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) => ImageGeometry::new(r, c).map_err(|_| bad()),
        _ => Err(bad()),
    }
}
