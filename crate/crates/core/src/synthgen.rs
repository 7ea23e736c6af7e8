//! Synthetic block scenes with known abundances.
//!
//! A scene is a `g × g` grid of homogeneous squares on a homogeneous
//! background. Each square is centred in its tile of side
//! `square_px + gap_px`, so the image side is `g * (square_px + gap_px)`.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::datamodel::{AbundanceMatrix, EndmemberLibrary, HyperCube, ImageGeometry};
use crate::error::{Error, Result};

/// Background abundances of the five-endmember reference scene, as published.
/// They sum to 0.9999; see [`data1_background`].
pub const DATA1_BACKGROUND: [f64; 5] = [0.1149, 0.0741, 0.2003, 0.2055, 0.4051];

/// [`DATA1_BACKGROUND`] rescaled to sum to one.
pub fn data1_background() -> Vec<f64> {
    let total: f64 = DATA1_BACKGROUND.iter().sum();
    DATA1_BACKGROUND.iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// All squares differ, except the last row whose squares are identical.
    Data1Like,
    /// The squares of each row are identical; rows differ.
    Data2Like,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "data1" | "data1like" => Ok(Layout::Data1Like),
            "data2" | "data2like" => Ok(Layout::Data2Like),
            other => Err(Error::Config(format!("unknown scene layout {other:?}"))),
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layout::Data1Like => "data1",
            Layout::Data2Like => "data2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub grid: usize,
    pub square_px: usize,
    pub gap_px: usize,
    pub endmember_count: usize,
    pub layout: Layout,
    pub background_abundance: Vec<f64>,
    /// Number of endmembers mixed in each distinct square.
    pub mixture_support: usize,
    pub seed: u64,
}

impl SceneConfig {
    /// 75×75 pixels, five endmembers, reference background mixture.
    pub fn data1(seed: u64) -> Self {
        Self {
            grid: 5,
            square_px: 5,
            gap_px: 10,
            endmember_count: 5,
            layout: Layout::Data1Like,
            background_abundance: data1_background(),
            mixture_support: 3,
            seed,
        }
    }

    /// 75×75 pixels, fifteen endmembers, uniform background mixture.
    pub fn data2(seed: u64) -> Self {
        Self {
            grid: 5,
            square_px: 5,
            gap_px: 10,
            endmember_count: 15,
            layout: Layout::Data2Like,
            background_abundance: vec![1.0 / 15.0; 15],
            mixture_support: 3,
            seed,
        }
    }

    pub fn side(&self) -> usize {
        self.grid * (self.square_px + self.gap_px)
    }

    pub fn geometry(&self) -> Result<ImageGeometry> {
        ImageGeometry::new(self.side(), self.side())
    }

    /// Number of distinct square mixtures required by the layout.
    pub fn distinct_mixtures(&self) -> usize {
        match self.layout {
            Layout::Data1Like => self.grid * (self.grid - 1) + 1,
            Layout::Data2Like => self.grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 || self.square_px == 0 {
            return Err(Error::Config("scene grid and square size must be positive".into()));
        }
        if self.endmember_count == 0 {
            return Err(Error::Config("scene needs at least one endmember".into()));
        }
        if self.background_abundance.len() != self.endmember_count {
            return Err(Error::Config(format!(
                "background abundance has {} entries for {} endmembers",
                self.background_abundance.len(),
                self.endmember_count
            )));
        }
        let sum: f64 = self.background_abundance.iter().sum();
        if self.background_abundance.iter().any(|&a| !(a >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "background abundance must lie on the simplex (sum = {sum})"
            )));
        }
        if self.mixture_support == 0 || self.mixture_support > self.endmember_count {
            return Err(Error::Config(format!(
                "{} distinct square mixtures of {} active endmembers need at least {} endmembers, have {}",
                self.distinct_mixtures(),
                self.mixture_support,
                self.mixture_support.max(1),
                self.endmember_count
            )));
        }
        Ok(())
    }

    /// Mixture group of a square; identical squares share a group.
    pub fn square_group(&self, row: usize, col: usize) -> usize {
        match self.layout {
            Layout::Data1Like if row + 1 < self.grid => row * self.grid + col,
            Layout::Data1Like => (self.grid - 1) * self.grid,
            Layout::Data2Like => row,
        }
    }
}

/// What occupies a pixel of a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Background,
    Square { row: usize, col: usize },
}

/// Region of every pixel, in pixel-column order.
pub fn region_map(config: &SceneConfig) -> Vec<Region> {
    let side = config.side();
    let tile = config.square_px + config.gap_px;
    let offset = config.gap_px / 2;
    let mut regions = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let (tr, ir) = (r / tile, r % tile);
            let (tc, ic) = (c / tile, c % tile);
            let inside = |i: usize| i >= offset && i < offset + config.square_px;
            if tr < config.grid && tc < config.grid && inside(ir) && inside(ic) {
                regions.push(Region::Square { row: tr, col: tc });
            } else {
                regions.push(Region::Background);
            }
        }
    }
    regions
}

/// Mixture group per pixel: `Some(group)` for square pixels, `None` for background.
pub fn pixel_groups(config: &SceneConfig) -> Vec<Option<usize>> {
    region_map(config)
        .into_iter()
        .map(|r| match r {
            Region::Square { row, col } => Some(config.square_group(row, col)),
            Region::Background => None,
        })
        .collect()
}

/// Pixel permutation listing square pixels group by group, then the background.
/// `order[k]` is the original pixel shown at position `k`.
pub fn group_order(config: &SceneConfig) -> Vec<usize> {
    let groups = pixel_groups(config);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&j| (groups[j].is_none(), groups[j].unwrap_or(0), j));
    order
}

fn dirichlet_on_support(rng: &mut ChaCha8Rng, m: usize, support: usize) -> Vec<f64> {
    let idx = sample(rng, m, support);
    let mut w = vec![0.0; m];
    let draws: Vec<f64> = (0..support).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    for (i, d) in idx.iter().zip(draws) {
        w[i] = d / total;
    }
    w
}

/// Generates the noiseless cube `S = R A` and its ground-truth abundances.
pub fn generate_scene(
    config: &SceneConfig,
    library: &EndmemberLibrary,
) -> Result<(HyperCube, AbundanceMatrix)> {
    config.validate()?;
    let m = config.endmember_count;
    if library.endmember_count() != m {
        return Err(Error::Config(format!(
            "scene expects {m} endmembers, library has {}",
            library.endmember_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mixtures: Vec<Vec<f64>> = (0..config.distinct_mixtures())
        .map(|_| dirichlet_on_support(&mut rng, m, config.mixture_support))
        .collect();

    let geometry = config.geometry()?;
    let groups = pixel_groups(config);
    let truth = DMatrix::from_fn(m, groups.len(), |i, j| match groups[j] {
        Some(g) => mixtures[g][i],
        None => config.background_abundance[i],
    });
    let cube = HyperCube::new(library.spectra() * &truth, geometry)?;
    Ok((cube, AbundanceMatrix::new(truth, geometry)?))
}

/// Smooth, positive stand-in spectra built from seeded Gaussian bumps.
pub fn surrogate_library(bands: usize, count: usize, seed: u64) -> Result<EndmemberLibrary> {
    if bands == 0 || count == 0 {
        return Err(Error::Config("surrogate library needs bands and endmembers".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectra = DMatrix::zeros(bands, count);
    for m in 0..count {
        let baseline = rng.random_range(0.05..0.2);
        let bumps = rng.random_range(3..=6);
        let params: Vec<(f64, f64, f64)> = (0..bumps)
            .map(|_| {
                (
                    rng.random_range(0.1..0.5),
                    rng.random_range(0.0..bands as f64),
                    rng.random_range(0.04..0.18) * bands as f64,
                )
            })
            .collect();
        let mut col: Vec<f64> = (0..bands)
            .map(|b| {
                baseline
                    + params
                        .iter()
                        .map(|&(amp, centre, width)| {
                            let t = (b as f64 - centre) / width;
                            amp * (-0.5 * t * t).exp()
                        })
                        .sum::<f64>()
            })
            .collect();
        let peak = col.iter().copied().fold(0.0, f64::max);
        let scale = rng.random_range(0.6..0.95) / peak;
        col.iter_mut().for_each(|v| *v *= scale);
        spectra.set_column(m, &nalgebra::DVector::from_vec(col));
    }
    let names = (0..count).map(|m| format!("surrogate_{:02}", m + 1)).collect();
    EndmemberLibrary::new(spectra, names)
}

/// Additive white Gaussian noise at a prescribed whole-cube SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid SNR {snr_db} dB")));
        }
        Ok(Self { snr_db, seed })
    }

    pub fn noiseless(seed: u64) -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed,
        }
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }
}

/// Returns `cube + E` with `E` i.i.d. `N(0, σ²)`, `σ² = ‖S‖²_F / (L N 10^(snr/10))`.
pub fn add_noise(cube: &HyperCube, spec: &NoiseSpec) -> Result<HyperCube> {
    if spec.is_noiseless() {
        return Ok(cube.clone());
    }
    let data = cube.data();
    let count = data.len() as f64;
    let variance = data.norm_squared() / (count * 10f64.powf(spec.snr_db / 10.0));
    let sigma = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noisy = data.clone();
    for v in noisy.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * e;
    }
    HyperCube::new(noisy, cube.geometry())
}

/// `10 log10(‖clean‖² / ‖noisy − clean‖²)`.
pub fn empirical_snr_db(clean: &HyperCube, noisy: &HyperCube) -> f64 {
    let noise = noisy.data() - clean.data();
    10.0 * (clean.data().norm_squared() / noise.norm_squared()).log10()
}
