//! Experiment configuration: flat `key = value` lines with dotted section
//! prefixes. `#` starts a comment line. Lists are comma separated.
//!
//! Component seeds (`scene.seed`, `noise.seed`, `library.seed`,
//! `partition.seed`) default to fixed offsets from the base `seed`, which
//! `--seed` replaces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use glup_core::solver::{GroupPenalty, SolverConfig};
use glup_core::synthgen::{Layout, NoiseSpec, SceneConfig};
use glup_core::{Error, Result};

pub const KEYS: &[&str] = &[
    "seed",
    "dataset",
    "output_dir",
    "scene.layout",
    "scene.grid",
    "scene.square_px",
    "scene.gap_px",
    "scene.endmembers",
    "scene.background",
    "scene.mixture_support",
    "scene.seed",
    "library.path",
    "library.surrogate",
    "library.bands",
    "library.seed",
    "noise.snr_db",
    "noise.seed",
    "affinity.mode",
    "affinity.d_min_sq",
    "affinity.sigma",
    "affinity.k_nn",
    "affinity.floor",
    "affinity.spatial_sigma",
    "partition.k",
    "partition.seed",
    "solver.mu",
    "solver.lambda",
    "solver.rho",
    "solver.max_iter",
    "solver.eps_abs",
    "solver.eps_rel",
    "solver.group",
    "sweep.mu",
    "sweep.lambda",
    "sweep.d_min_sq",
    "sweep.snr_db",
    "export.maps",
    "export.heatmap",
];

const SCENE_SEED_OFFSET: u64 = 0;
const NOISE_SEED_OFFSET: u64 = 1;
const LIBRARY_SEED_OFFSET: u64 = 2;
const PARTITION_SEED_OFFSET: u64 = 3;

/// Parsed but untyped key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", n + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let items = v
            .split(',')
            .map(|s| parse_real(key, s.trim()))
            .collect::<Result<Vec<_>>>()?;
        if items.is_empty() {
            return Err(Error::Config(format!("{key}: list is empty")));
        }
        Ok(Some(items))
    }
}

/// Accepts `inf` / `noiseless` for an infinite SNR.
fn parse_real(key: &str, s: &str) -> Result<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "noiseless" => Ok(f64::INFINITY),
        _ => s
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Config(format!("{key}: cannot parse {s:?} as a number"))),
    }
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {s:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LibrarySource {
    File(PathBuf),
    Surrogate { bands: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AffinityMode {
    Threshold { d_min_sq: f64 },
    Gaussian { sigma: f64, k_nn: Option<usize>, floor: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinitySpec {
    pub mode: AffinityMode,
    pub spatial_sigma: Option<f64>,
}

impl AffinitySpec {
    /// Threshold value for results rows; NaN for kernel graphs.
    pub fn d_min_sq(&self) -> f64 {
        match self.mode {
            AffinityMode::Threshold { d_min_sq } => d_min_sq,
            AffinityMode::Gaussian { .. } => f64::NAN,
        }
    }

    pub fn with_threshold(&self, d_min_sq: f64) -> Self {
        Self {
            mode: AffinityMode::Threshold { d_min_sq },
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub d_min_sq: Vec<f64>,
    pub snr_db: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExportSpec {
    pub maps: bool,
    pub heatmap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: String,
    pub output_dir: PathBuf,
    pub scene: SceneConfig,
    pub library: LibrarySource,
    pub noise: NoiseSpec,
    pub affinity: AffinitySpec,
    pub partition_k: usize,
    pub partition_seed: u64,
    pub solver: SolverConfig,
    pub sweep: Option<SweepSpec>,
    pub export: ExportSpec,
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_raw(&RawConfig::parse(&text)?, base, seed_override)
    }

    pub fn from_raw(raw: &RawConfig, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let seed = match seed_override {
            Some(s) => s,
            None => raw.or("seed", 0u64)?,
        };
        let derived = |offset: u64| seed.wrapping_add(offset);

        let layout: Layout = raw.or("scene.layout", Layout::Data1Like)?;
        let scene_seed = raw.or("scene.seed", derived(SCENE_SEED_OFFSET))?;
        let mut scene = match layout {
            Layout::Data1Like => SceneConfig::data1(scene_seed),
            Layout::Data2Like => SceneConfig::data2(scene_seed),
        };
        scene.grid = raw.or("scene.grid", scene.grid)?;
        scene.square_px = raw.or("scene.square_px", scene.square_px)?;
        scene.gap_px = raw.or("scene.gap_px", scene.gap_px)?;
        scene.mixture_support = raw.or("scene.mixture_support", scene.mixture_support)?;
        if let Some(m) = raw.parsed::<usize>("scene.endmembers")? {
            if m != scene.endmember_count {
                scene.endmember_count = m;
                scene.background_abundance = vec![1.0 / m.max(1) as f64; m];
            }
        }
        match raw.get("scene.background") {
            None => {}
            Some(v) if v.eq_ignore_ascii_case("uniform") => {
                let m = scene.endmember_count;
                scene.background_abundance = vec![1.0 / m.max(1) as f64; m];
            }
            Some(_) => scene.background_abundance = raw.list("scene.background")?.unwrap_or_default(),
        }
        scene.validate()?;

        let surrogate = match raw.get("library.surrogate") {
            Some(v) => parse_bool("library.surrogate", v)?,
            None => raw.get("library.path").is_none(),
        };
        let library = match (surrogate, raw.get("library.path")) {
            (true, None) => LibrarySource::Surrogate {
                bands: raw.or("library.bands", 224usize)?,
                seed: raw.or("library.seed", derived(LIBRARY_SEED_OFFSET))?,
            },
            (false, Some(p)) => LibrarySource::File(base_dir.join(p)),
            (false, None) => {
                return Err(Error::Config(
                    "library.path is required when library.surrogate is off".into(),
                ))
            }
            (true, Some(_)) => {
                return Err(Error::Config(
                    "library.path and library.surrogate = true are mutually exclusive".into(),
                ))
            }
        };
        if let LibrarySource::Surrogate { bands: 0, .. } = library {
            return Err(Error::Config("library.bands must be positive".into()));
        }

        let noise_seed = raw.or("noise.seed", derived(NOISE_SEED_OFFSET))?;
        let snr = match raw.get("noise.snr_db") {
            Some(v) => parse_real("noise.snr_db", v)?,
            None => f64::INFINITY,
        };
        let noise = NoiseSpec::new(snr, noise_seed)?;

        let mode = match raw.get("affinity.mode").unwrap_or("threshold") {
            "threshold" => AffinityMode::Threshold {
                d_min_sq: raw.or("affinity.d_min_sq", 0.5)?,
            },
            "gaussian" => AffinityMode::Gaussian {
                sigma: raw
                    .parsed("affinity.sigma")?
                    .ok_or_else(|| Error::Config("affinity.sigma is required for gaussian mode".into()))?,
                k_nn: raw.parsed("affinity.k_nn")?,
                floor: raw.parsed("affinity.floor")?,
            },
            other => return Err(Error::Config(format!("affinity.mode: unknown mode {other:?}"))),
        };
        match mode {
            AffinityMode::Threshold { d_min_sq } if !(d_min_sq > 0.0 && d_min_sq.is_finite()) => {
                return Err(Error::Config(format!("affinity.d_min_sq must be positive, got {d_min_sq}")))
            }
            AffinityMode::Gaussian { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => {
                return Err(Error::Config(format!("affinity.sigma must be positive, got {sigma}")))
            }
            _ => {}
        }
        let affinity = AffinitySpec {
            mode,
            spatial_sigma: raw.parsed("affinity.spatial_sigma")?,
        };

        let partition_k = raw.or("partition.k", 1usize)?;
        if partition_k == 0 || partition_k > scene.side() * scene.side() {
            return Err(Error::Config(format!(
                "partition.k must be between 1 and the pixel count, got {partition_k}"
            )));
        }

        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            mu: raw.or("solver.mu", defaults.mu)?,
            lambda: raw.or("solver.lambda", defaults.lambda)?,
            rho: raw.or("solver.rho", defaults.rho)?,
            max_iter: raw.or("solver.max_iter", defaults.max_iter)?,
            eps_abs: raw.or("solver.eps_abs", defaults.eps_abs)?,
            eps_rel: raw.or("solver.eps_rel", defaults.eps_rel)?,
            group: raw.or::<GroupPenalty>("solver.group", defaults.group)?,
        };
        solver.validate()?;

        let sweep_keys = ["sweep.mu", "sweep.lambda", "sweep.d_min_sq", "sweep.snr_db"];
        let sweep = if sweep_keys.iter().any(|k| raw.get(k).is_some()) {
            let d_min_sq = match raw.list("sweep.d_min_sq")? {
                Some(d) => {
                    if matches!(affinity.mode, AffinityMode::Gaussian { .. }) {
                        return Err(Error::Config("sweep.d_min_sq requires affinity.mode = threshold".into()));
                    }
                    d
                }
                None => vec![affinity.d_min_sq()],
            };
            let sweep = SweepSpec {
                mu: raw.list("sweep.mu")?.unwrap_or(vec![solver.mu]),
                lambda: raw.list("sweep.lambda")?.unwrap_or(vec![solver.lambda]),
                d_min_sq,
                snr_db: raw.list("sweep.snr_db")?.unwrap_or(vec![noise.snr_db()]),
            };
            for &v in sweep.mu.iter().chain(&sweep.lambda) {
                SolverConfig { mu: v, lambda: v, ..solver }.validate()?;
            }
            for &d in &sweep.d_min_sq {
                if !(d > 0.0) {
                    return Err(Error::Config(format!("sweep.d_min_sq values must be positive, got {d}")));
                }
            }
            for &s in &sweep.snr_db {
                NoiseSpec::new(s, noise_seed)?;
            }
            Some(sweep)
        } else {
            None
        };

        let flag = |key: &str, default: bool| raw.get(key).map_or(Ok(default), |v| parse_bool(key, v));
        let export = ExportSpec {
            maps: flag("export.maps", true)?,
            heatmap: flag("export.heatmap", false)?,
        };

        Ok(Self {
            seed,
            dataset: raw.get("dataset").map_or_else(|| layout.to_string(), str::to_string),
            output_dir: base_dir.join(raw.get("output_dir").unwrap_or("out")),
            scene,
            library,
            noise,
            affinity,
            partition_k,
            partition_seed: raw.or("partition.seed", derived(PARTITION_SEED_OFFSET))?,
            solver,
            sweep,
            export,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_raw(&RawConfig::parse(text)?, Path::new("/cfg"), None)
    }

    #[test]
    fn defaults_follow_the_layout_preset() {
        let c = load("scene.layout = data2\n").unwrap();
        assert_eq!(c.scene, SceneConfig::data2(0));
        assert_eq!(c.dataset, "data2");
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.output_dir, Path::new("/cfg/out"));
        assert!(c.noise.is_noiseless());
        assert_eq!(c.library, LibrarySource::Surrogate { bands: 224, seed: 2 });
    }

    #[test]
    fn seeds_derive_from_the_base_seed() {
        let raw = RawConfig::parse("seed = 10\nnoise.seed = 99\n").unwrap();
        let c = ExperimentConfig::from_raw(&raw, Path::new("."), None).unwrap();
        assert_eq!((c.scene.seed, c.noise.seed, c.partition_seed), (10, 99, 13));
        let c = ExperimentConfig::from_raw(&raw, Path::new("."), Some(20)).unwrap();
        assert_eq!((c.scene.seed, c.noise.seed, c.partition_seed), (20, 99, 23));
    }

    #[test]
    fn comments_blank_lines_and_quotes() {
        let c = load("# header\n\n  solver.mu = 5e-4 \noutput_dir = \"run 1\"\nnoise.snr_db = inf\n").unwrap();
        assert_eq!(c.solver.mu, 5e-4);
        assert_eq!(c.output_dir, Path::new("/cfg/run 1"));
        assert!(c.noise.is_noiseless());
    }

    #[test]
    fn unknown_duplicate_and_malformed_lines_are_config_errors() {
        for text in ["scene.colour = red\n", "seed = 1\nseed = 2\n", "seed\n", "solver.mu = abc\n"] {
            assert!(matches!(load(text), Err(Error::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn library_requires_a_path_without_surrogate() {
        assert!(matches!(load("library.surrogate = false\n"), Err(Error::Config(_))));
        assert!(matches!(
            load("library.surrogate = true\nlibrary.path = lib.csv\n"),
            Err(Error::Config(_))
        ));
        let c = load("library.path = lib.csv\n").unwrap();
        assert_eq!(c.library, LibrarySource::File(PathBuf::from("/cfg/lib.csv")));
    }

    #[test]
    fn nonpositive_rho_is_rejected() {
        assert!(matches!(load("solver.rho = 0\n"), Err(Error::Config(_))));
        assert!(matches!(load("solver.rho = -1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn endmember_override_resets_the_background() {
        let c = load("scene.endmembers = 4\n").unwrap();
        assert_eq!(c.scene.background_abundance, vec![0.25; 4]);
        let c = load("scene.endmembers = 3\nscene.background = 0.5, 0.25, 0.25\n").unwrap();
        assert_eq!(c.scene.background_abundance, vec![0.5, 0.25, 0.25]);
        assert!(matches!(load("scene.background = 0.5, 0.5\n"), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_lists_fall_back_to_single_values() {
        let c = load("solver.mu = 0.1\nnoise.snr_db = 30\nsweep.lambda = 0.01, 1\n").unwrap();
        let s = c.sweep.unwrap();
        assert_eq!(s.mu, vec![0.1]);
        assert_eq!(s.lambda, vec![0.01, 1.0]);
        assert_eq!(s.d_min_sq, vec![0.5]);
        assert_eq!(s.snr_db, vec![30.0]);
        assert!(load("").unwrap().sweep.is_none());
        assert!(matches!(load("sweep.mu = 1,,2\n"), Err(Error::Config(_))));
        assert!(matches!(load("sweep.lambda = -1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn gaussian_mode_needs_sigma() {
        assert!(matches!(load("affinity.mode = gaussian\n"), Err(Error::Config(_))));
        let c = load("affinity.mode = gaussian\naffinity.sigma = 0.3\naffinity.k_nn = 8\n").unwrap();
        assert_eq!(
            c.affinity.mode,
            AffinityMode::Gaussian {
                sigma: 0.3,
                k_nn: Some(8),
                floor: None
            }
        );
        assert!(c.affinity.d_min_sq().is_nan());
        assert!(matches!(
            load("affinity.mode = gaussian\naffinity.sigma = 0.3\nsweep.d_min_sq = 1\n"),
            Err(Error::Config(_))
        ));
    }
}
