//! Batch front end: `generate → graph → partition → unmix → eval`, plus
//! `sweep` over parameter grids and `run` for the whole chain.
//!
//! Every stage reads the experiment config and passes data to the next one
//! through files in the output directory.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use glup_core::datamodel::{load_abundances, load_cube, load_library, save_abundances, save_cube, save_library};
use glup_core::eval::{self, ResultRow, Status};
use glup_core::graph::{self, read_affinity_mm, write_affinity_mm, AffinityMatrix, Laplacian};
use glup_core::partition::{self, PartitionLabels};
use glup_core::solver::{self, method_label, ReportDocument, SolveReport, SolverConfig};
use glup_core::synthgen::{self, NoiseSpec};
use glup_core::{AbundanceMatrix, EndmemberLibrary, Error, HyperCube, Result};
use rayon::prelude::*;

use crate::config::{AffinityMode, AffinitySpec, ExperimentConfig, LibrarySource};

pub const CUBE_NOISELESS: &str = "cube_noiseless.hyc";
pub const CUBE: &str = "cube.hyc";
pub const TRUTH: &str = "truth_abundances.csv";
pub const LIBRARY: &str = "library.csv";
pub const SCENE: &str = "scene.json";
pub const AFFINITY: &str = "affinity.mtx";
pub const HEATMAP: &str = "affinity_heatmap.pgm";
pub const LABELS: &str = "labels.csv";
pub const PARTITION_SUMMARY: &str = "partition_summary.txt";
pub const ABUNDANCES: &str = "abundances.csv";
pub const REPORT: &str = "report.json";
pub const MAPS: &str = "maps";
pub const RESULTS: &str = "results.csv";

#[derive(Debug, Parser)]
#[command(name = "glup", version, about = "Graph Laplacian regularized hyperspectral unmixing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (flat `key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true, value_name = "PATH")]
    pub output_dir: Option<PathBuf>,
    /// Overrides the base `seed` from the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "GLUP_THREADS", value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Synthesize the scene: cubes, ground truth, library.
    Generate,
    /// Build the pixel affinity of the noisy cube.
    Graph,
    /// Spectral partition of the affinity into `partition.k` clusters.
    Partition,
    /// Solve for the abundances and export maps.
    Unmix,
    /// Score the abundances against the ground truth into the results table.
    Eval,
    /// Run the parameter grid and write the results table.
    Sweep,
    /// generate, graph, partition, unmix and eval in sequence.
    Run,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Data(_) => 2,
        Error::Numerical(_) => 3,
        Error::Io { .. } | Error::Format(_) => 4,
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("glup: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(config_path, cli.seed)?;
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    let ctx = Context {
        cfg,
        quiet: cli.quiet,
    };
    pool.install(|| ctx.dispatch(cli.command))
}

pub struct Context {
    pub cfg: ExperimentConfig,
    pub quiet: bool,
}

impl Context {
    fn dispatch(&self, command: Command) -> Result<()> {
        std::fs::create_dir_all(&self.cfg.output_dir).map_err(|e| Error::io(&self.cfg.output_dir, e))?;
        match command {
            Command::Generate => self.generate(),
            Command::Graph => self.graph().map(drop),
            Command::Partition => self.partition().map(drop),
            Command::Unmix => self.unmix(),
            Command::Eval => self.eval(),
            Command::Sweep => self.sweep(),
            Command::Run => {
                self.generate()?;
                if self.needs_graph(&self.cfg.solver) {
                    self.graph()?;
                }
                if self.cfg.partition_k > 1 {
                    self.partition()?;
                }
                self.unmix()?;
                self.eval()
            }
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn needs_graph(&self, solver: &SolverConfig) -> bool {
        solver.lambda > 0.0 || self.cfg.partition_k > 1
    }

    pub fn generate(&self) -> Result<()> {
        let cfg = &self.cfg;
        let m = cfg.scene.endmember_count;
        let library = match &cfg.library {
            LibrarySource::File(p) => load_library(p)?,
            LibrarySource::Surrogate { bands, seed } => synthgen::surrogate_library(*bands, m, *seed)?,
        };
        if library.endmember_count() != m {
            return Err(Error::Config(format!(
                "library has {} endmembers, scene expects {m}",
                library.endmember_count()
            )));
        }
        let (clean, truth) = synthgen::generate_scene(&cfg.scene, &library)?;
        let noisy = synthgen::add_noise(&clean, &cfg.noise)?;
        save_cube(&clean, self.path(CUBE_NOISELESS))?;
        save_cube(&noisy, self.path(CUBE))?;
        save_abundances(&truth, self.path(TRUTH))?;
        save_library(&library, self.path(LIBRARY))?;
        let finite = |v: f64| v.is_finite().then_some(v);
        let scene = serde_json::json!({
            "dataset": cfg.dataset,
            "layout": cfg.scene.layout.to_string(),
            "rows": clean.geometry().rows(),
            "cols": clean.geometry().cols(),
            "bands": clean.band_count(),
            "endmembers": m,
            "grid": cfg.scene.grid,
            "square_px": cfg.scene.square_px,
            "gap_px": cfg.scene.gap_px,
            "background": cfg.scene.background_abundance,
            "mixture_support": cfg.scene.mixture_support,
            "scene_seed": cfg.scene.seed,
            "noise_seed": cfg.noise.seed,
            "snr_db": finite(cfg.noise.snr_db()),
            "empirical_snr_db": finite(synthgen::empirical_snr_db(&clean, &noisy)),
        });
        write_text(&self.path(SCENE), &(serde_json::to_string_pretty(&scene).expect("json value") + "\n"))?;
        self.log(format!(
            "generated {}x{} scene, {} bands, {m} endmembers in {}",
            clean.geometry().rows(),
            clean.geometry().cols(),
            clean.band_count(),
            cfg.output_dir.display()
        ));
        Ok(())
    }

    fn noisy_cube(&self) -> Result<HyperCube> {
        load_cube(self.path(CUBE))
    }

    pub fn graph(&self) -> Result<AffinityMatrix> {
        let cube = self.noisy_cube()?;
        let w = build_affinity(&cube, &self.cfg.affinity)?;
        write_affinity_mm(&w, self.path(AFFINITY))?;
        let (_, components) = w.connected_components();
        self.log(format!(
            "affinity: {} pixels, {} edges, {components} connected components",
            w.node_count(),
            w.edge_count()
        ));
        if self.cfg.export.heatmap {
            let order = synthgen::group_order(&self.cfg.scene);
            if order.len() != w.node_count() {
                return Err(Error::Data(format!(
                    "scene config describes {} pixels but the cube has {}",
                    order.len(),
                    w.node_count()
                )));
            }
            eval::export_affinity_heatmap(&w, &order, self.path(HEATMAP))?;
        }
        Ok(w)
    }

    /// Affinity from an earlier `graph` stage, or built now.
    fn affinity(&self, cube: &HyperCube) -> Result<AffinityMatrix> {
        let path = self.path(AFFINITY);
        if path.exists() {
            let w = read_affinity_mm(&path)?;
            if w.node_count() != cube.pixel_count() {
                return Err(Error::Data(format!(
                    "{} has {} nodes but the cube has {} pixels",
                    path.display(),
                    w.node_count(),
                    cube.pixel_count()
                )));
            }
            return Ok(w);
        }
        let w = build_affinity(cube, &self.cfg.affinity)?;
        write_affinity_mm(&w, &path)?;
        Ok(w)
    }

    pub fn partition(&self) -> Result<PartitionLabels> {
        let cube = self.noisy_cube()?;
        let w = self.affinity(&cube)?;
        let labels = partition::spectral_partition(&w, self.cfg.partition_k, self.cfg.partition_seed)?;
        partition::save_labels(&labels, self.path(LABELS))?;
        let extraction = partition::extract_subproblems(&cube, &graph::laplacian(&w), &w, &labels)?;
        let summary = partition::summary_table(&extraction);
        write_text(&self.path(PARTITION_SUMMARY), &summary)?;
        self.log(summary.trim_end());
        Ok(labels)
    }

    /// Labels from an earlier `partition` stage when they match the config.
    fn labels(&self, w: &AffinityMatrix) -> Result<PartitionLabels> {
        let path = self.path(LABELS);
        if path.exists() {
            let labels = partition::load_labels(&path)?;
            if labels.len() == w.node_count() && labels.k() == self.cfg.partition_k {
                return Ok(labels);
            }
        }
        let labels = partition::spectral_partition(w, self.cfg.partition_k, self.cfg.partition_seed)?;
        partition::save_labels(&labels, &path)?;
        Ok(labels)
    }

    pub fn unmix(&self) -> Result<()> {
        let cube = self.noisy_cube()?;
        let library = load_library(self.path(LIBRARY))?;
        let solver = self.cfg.solver;
        let (w, labels) = if self.needs_graph(&solver) {
            let w = self.affinity(&cube)?;
            let labels = (self.cfg.partition_k > 1).then(|| self.labels(&w)).transpose()?;
            (Some(w), labels)
        } else {
            (None, None)
        };
        let report = solve_cell(&cube, &library, w.as_ref(), labels.as_ref(), &solver)?;
        self.log(format!(
            "{}: {} iterations, converged = {}",
            method_label(&solver),
            report.iterations,
            report.converged
        ));
        save_abundances(&report.abundances, self.path(ABUNDANCES))?;
        let doc = ReportDocument::new(&report, &solver, ABUNDANCES);
        write_text(&self.path(REPORT), &(doc.to_json() + "\n"))?;
        if self.cfg.export.maps {
            let dir = self.path(MAPS);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for i in 0..report.abundances.endmember_count() {
                eval::export_abundance_map(
                    &report.abundances,
                    i,
                    cube.geometry(),
                    dir.join(format!("endmember_{i:02}.pgm")),
                )?;
            }
        }
        Ok(())
    }

    pub fn eval(&self) -> Result<()> {
        let est = load_abundances(self.path(ABUNDANCES))?;
        let truth = load_abundances(self.path(TRUTH))?;
        let library = load_library(self.path(LIBRARY))?;
        let report_path = self.path(REPORT);
        let text = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
        let doc: ReportDocument = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", report_path.display())))?;
        let (rmse_nl, rmse_nm) = eval::rmse_both(&est, &truth, library.band_count())?;
        let solver = SolverConfig {
            mu: doc.mu,
            lambda: doc.lambda,
            ..self.cfg.solver
        };
        let row = ResultRow {
            dataset: self.cfg.dataset.clone(),
            snr_db: self.cfg.noise.snr_db(),
            method: doc.method,
            mu: doc.mu,
            lambda: doc.lambda,
            d_min_sq: if self.needs_graph(&solver) {
                self.cfg.affinity.d_min_sq()
            } else {
                f64::NAN
            },
            rho: doc.rho,
            iterations: doc.iterations,
            rmse_nl,
            rmse_nm,
            status: Status::Ok,
            best: false,
        };
        self.log(format!("{}: rmse_nl = {rmse_nl:.6e}, rmse_nm = {rmse_nm:.6e}", row.method));
        let results = self.path(RESULTS);
        let mut rows = if results.exists() {
            eval::read_results(&results)?
        } else {
            Vec::new()
        };
        rows.push(row);
        eval::finalize_results(&mut rows);
        eval::write_results(&rows, &results)
    }

    pub fn sweep(&self) -> Result<()> {
        let cfg = &self.cfg;
        let sweep = cfg
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("sweep needs at least one sweep.* list".into()))?;
        if [CUBE_NOISELESS, TRUTH, LIBRARY].iter().any(|f| !self.path(f).exists()) {
            self.generate()?;
        }
        let clean = load_cube(self.path(CUBE_NOISELESS))?;
        let truth = load_abundances(self.path(TRUTH))?;
        let library = load_library(self.path(LIBRARY))?;

        let mut rows = Vec::new();
        for &snr in &sweep.snr_db {
            let noisy = synthgen::add_noise(&clean, &NoiseSpec::new(snr, cfg.noise.seed)?)?;
            let cell = |solver: SolverConfig, d_min_sq: f64, graph: Option<(&AffinityMatrix, Option<&PartitionLabels>)>| {
                let outcome = solve_cell(&noisy, &library, graph.map(|g| g.0), graph.and_then(|g| g.1), &solver)
                    .and_then(|r| Ok((eval::rmse_both(&r.abundances, &truth, library.band_count())?, r.iterations)));
                self.result_row(snr, &solver, d_min_sq, outcome)
            };

            let baseline = SolverConfig {
                mu: 0.0,
                lambda: 0.0,
                ..cfg.solver
            };
            rows.push(cell(baseline, f64::NAN, None));

            let grid: Vec<SolverConfig> = sweep
                .mu
                .iter()
                .flat_map(|&mu| sweep.lambda.iter().map(move |&lambda| (mu, lambda)))
                .map(|(mu, lambda)| SolverConfig { mu, lambda, ..cfg.solver })
                .collect();
            for &d in &sweep.d_min_sq {
                let built = build_affinity(&noisy, &cfg.affinity.with_threshold(d)).and_then(|w| {
                    let labels = (cfg.partition_k > 1)
                        .then(|| partition::spectral_partition(&w, cfg.partition_k, cfg.partition_seed))
                        .transpose()?;
                    Ok((w, labels))
                });
                let cells: Vec<ResultRow> = match &built {
                    Ok((w, labels)) => grid
                        .par_iter()
                        .map(|s| cell(*s, d, Some((w, labels.as_ref()))))
                        .collect(),
                    Err(e) => grid
                        .iter()
                        .map(|s| self.result_row(snr, s, d, Err(Error::Data(e.to_string()))))
                        .collect(),
                };
                rows.extend(cells);
            }
        }
        eval::finalize_results(&mut rows);
        eval::write_results(&rows, self.path(RESULTS))?;
        for r in rows.iter().filter(|r| r.best) {
            self.log(format!(
                "{} snr {}: best {} mu = {} lambda = {} d_min_sq = {} rmse_nl = {:.6e}",
                r.dataset, r.snr_db, r.method, r.mu, r.lambda, r.d_min_sq, r.rmse_nl
            ));
        }
        Ok(())
    }

    fn result_row(
        &self,
        snr_db: f64,
        solver: &SolverConfig,
        d_min_sq: f64,
        outcome: Result<((f64, f64), usize)>,
    ) -> ResultRow {
        let ((rmse_nl, rmse_nm), iterations, status) = match outcome {
            Ok((rmse, iters)) => (rmse, iters, Status::Ok),
            Err(e) => {
                self.log(format!(
                    "cell snr = {snr_db} mu = {} lambda = {} d_min_sq = {d_min_sq} failed: {e}",
                    solver.mu, solver.lambda
                ));
                ((f64::NAN, f64::NAN), 0, Status::Failed)
            }
        };
        ResultRow {
            dataset: self.cfg.dataset.clone(),
            snr_db,
            method: method_label(solver).to_string(),
            mu: solver.mu,
            lambda: solver.lambda,
            d_min_sq,
            rho: solver.rho,
            iterations,
            rmse_nl,
            rmse_nm,
            status,
            best: false,
        }
    }
}

pub fn build_affinity(cube: &HyperCube, spec: &AffinitySpec) -> Result<AffinityMatrix> {
    let w = match spec.mode {
        AffinityMode::Threshold { d_min_sq } => graph::affinity_threshold(cube, d_min_sq)?,
        AffinityMode::Gaussian { sigma, k_nn, floor } => graph::affinity_gaussian(cube, sigma, k_nn, floor)?,
    };
    match spec.spatial_sigma {
        Some(s) => graph::spatial_product(&w, cube.geometry(), s),
        None => Ok(w),
    }
}

/// One solve as done by both `unmix` and `sweep`. The graph only enters
/// through `λ > 0` or a partition.
pub fn solve_cell(
    cube: &HyperCube,
    library: &EndmemberLibrary,
    affinity: Option<&AffinityMatrix>,
    labels: Option<&PartitionLabels>,
    solver: &SolverConfig,
) -> Result<SolveReport> {
    let lap = match affinity {
        Some(w) if solver.lambda > 0.0 || labels.is_some() => graph::laplacian(w),
        _ => Laplacian::zero(cube.pixel_count()),
    };
    match (labels, affinity) {
        (Some(labels), Some(w)) if labels.k() > 1 => {
            let extraction = partition::extract_subproblems(cube, &lap, w, labels)?;
            partition::solve_partitioned(cube, library, &extraction, solver)
        }
        _ => solver::glup_lap(cube, library, &lap, solver),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Convenience for tests: the abundances written by `unmix`.
pub fn read_abundances(dir: &Path) -> Result<AbundanceMatrix> {
    load_abundances(dir.join(ABUNDANCES))
}
