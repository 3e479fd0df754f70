//! Config-driven runs, sweeps and certificate reports.
//!
//! A run writes one CSV per seed (`seed_<s>.csv`), the seed average
//! (`mean.csv`) and a `meta.txt` sidecar into its output directory. A sweep
//! writes one such directory per setting (`setting_<k>/`) plus `summary.csv`.

pub mod config;
pub mod fit;
pub mod gamefile;
pub mod output;

use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::algorithm::{AlgorithmError, InitialPoint, NashSeeker, RunFailure, RunOptions, StepSizes, Trajectory};
use crate::analysis::{
    certificate, compute_constants, default_gamma, ne_gap_bound, plateau_bound, solve_ne, AnalysisError,
    ConvergenceCertificate, GameConstants,
};
use crate::game::{build_connectivity_game, Game, QuadraticGame};
use crate::network::CommGraph;
use crate::oracle::SmoothingParams;

pub use config::{ConfigError, GameSource, GraphSource, InitMode, RunConfig, SweepAxis, SweepConfig};
pub use fit::{descent_window, fit_descent, fit_linear_rate, plateau_level, FitError, LinearFit};
pub use output::{mean_trajectory, parse_csv, CsvTable, Sidecar, SummaryRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// A fully resolved problem instance.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub game: QuadraticGame,
    pub graphs: Vec<CommGraph>,
    pub steps: StepSizes,
    pub smoothing: SmoothingParams,
    pub init: InitialPoint,
    pub equilibrium: Vec<f64>,
    pub constants: GameConstants,
}

impl Experiment {
    pub fn prepare(cfg: &RunConfig) -> Result<Self, ConfigError> {
        let game = match &cfg.game {
            GameSource::Connectivity { clusters, agents_per_cluster, dim } => {
                build_connectivity_game(*clusters, *agents_per_cluster, *dim)
                    .map_err(|e| ConfigError::new("clusters", e.to_string()))?
            }
            GameSource::File(path) => gamefile::load_game(path).map_err(|e| ConfigError { key: Some("game_file".into()), ..e })?,
        };
        let layout = game.layout().clone();
        let graphs = match &cfg.graph {
            GraphSource::Ring { self_weight } => (0..layout.clusters())
                .map(|i| CommGraph::ring(layout.agents(i), *self_weight))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ConfigError::new("self_weight", e.to_string()))?,
            GraphSource::Matrices(mats) => {
                if mats.len() != layout.clusters() {
                    return Err(ConfigError::new(
                        "graph_matrices",
                        format!("{} matrices given for {} clusters", mats.len(), layout.clusters()),
                    ));
                }
                mats.iter()
                    .enumerate()
                    .map(|(i, m)| {
                        if m.nrows() != layout.agents(i) {
                            return Err(ConfigError::new(
                                "graph_matrices",
                                format!("matrix {i} is {0}x{0}, cluster has {1} agents", m.nrows(), layout.agents(i)),
                            ));
                        }
                        CommGraph::from_matrix(m.clone())
                            .map_err(|e| ConfigError::new("graph_matrices", format!("matrix {i}: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let steps = StepSizes::new(cfg.alphas.clone(), &layout).map_err(|e| ConfigError::new("alpha", e.to_string()))?;
        let smoothing = SmoothingParams::new(cfg.mu).map_err(|e| ConfigError::new("mu", e.to_string()))?;
        let init = match &cfg.init {
            InitMode::Zeros => InitialPoint::zeros(&layout),
            InitMode::Explicit { action, estimates } => {
                layout.check_action(action).map_err(|e| ConfigError::new("x0", e.to_string()))?;
                if estimates.len() != layout.clusters() {
                    return Err(ConfigError::new("y0", format!("need one estimate matrix per cluster ({})", layout.clusters())));
                }
                let mut mats = Vec::with_capacity(estimates.len());
                for (i, y) in estimates.iter().enumerate() {
                    let (r, c) = (layout.agents(i), layout.cluster_coords(i));
                    if y.len() != r * c {
                        return Err(ConfigError::new("y0", format!("cluster {i} needs {} row-major entries", r * c)));
                    }
                    mats.push(DMatrix::from_row_slice(r, c, y));
                }
                InitialPoint { action: action.clone(), estimates: mats }
            }
        };
        let constants = compute_constants(&game, &graphs, cfg.mu).map_err(|e| ConfigError::new(key_for(&e), e.to_string()))?;
        let equilibrium = solve_ne(&game).map_err(|e| ConfigError::new("game", e.to_string()))?.as_slice().to_vec();
        Ok(Self { game, graphs, steps, smoothing, init, equilibrium, constants })
    }

    /// Same instance with different step-sizes.
    pub fn with_steps(&self, alphas: Vec<f64>) -> Result<Self, ConfigError> {
        let steps = StepSizes::new(alphas, self.game.layout()).map_err(|e| ConfigError::new("alpha", e.to_string()))?;
        Ok(Self { steps, ..self.clone() })
    }

    pub fn certificate(&self) -> Result<ConvergenceCertificate, AnalysisError> {
        certificate(&self.constants, &self.steps)
    }

    pub fn run_seed(&self, seed: u64, iterations: u64, log_positions: bool) -> Result<Trajectory, RunFailure> {
        let mut seeker = NashSeeker::initialize(
            &self.game,
            self.graphs.clone(),
            self.steps.clone(),
            self.smoothing,
            self.init.clone(),
            seed,
        )
        .map_err(|error| RunFailure { error, partial: Trajectory::default() })?;
        seeker.run(&RunOptions { iterations, equilibrium: Some(&self.equilibrium), log_positions })
    }

    /// Independent runs for each seed, in parallel; results keep seed order.
    pub fn run_seeds(&self, seeds: &[u64], iterations: u64, log_positions: bool) -> Vec<Result<Trajectory, RunFailure>> {
        seeds.par_iter().map(|&s| self.run_seed(s, iterations, log_positions)).collect()
    }
}

fn key_for(e: &AnalysisError) -> &'static str {
    match e {
        AnalysisError::Network(_) => "graph",
        _ => "game",
    }
}

/// Seeds `seed, seed + 1, ..., seed + count - 1`.
pub fn seed_list(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| seed.wrapping_add(k)).collect()
}

/// `E[err_gap^2]` across runs, averaged over the final `fraction` of iterations.
pub fn squared_error_plateau(runs: &[Trajectory], fraction: f64) -> f64 {
    let mean_sq: Vec<f64> = mean_trajectory(runs)
        .rows
        .iter()
        .enumerate()
        .map(|(t, _)| {
            runs.iter().map(|r| r.rows[t].err_gap.unwrap_or(f64::NAN).powi(2)).sum::<f64>() / runs.len() as f64
        })
        .collect();
    plateau_level(&mean_sq, fraction)
}

/// First divergence among the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub seed: u64,
    pub error: AlgorithmError,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<u64>,
    pub runs: Vec<Trajectory>,
    pub mean: Trajectory,
    pub divergence: Option<Divergence>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    output::write_atomic(path, contents).map_err(io_err(path))
}

fn run_sidecar(exp: &Experiment, cfg: &RunConfig, mean: &Trajectory, divergence: Option<&Divergence>) -> Sidecar {
    let mut meta = Sidecar::new();
    meta.push_values("x_star", &exp.equilibrium);
    match exp.certificate() {
        Ok(cert) => {
            meta.push("certified", cert.holds() && cert.spectral_radius < 1.0);
            meta.extend_text("certificate.", &cert.to_string());
        }
        Err(e) => {
            meta.push("certified", false);
            meta.push("certificate.error", e);
        }
    }
    meta.extend_text("constants.", &exp.constants.to_string());
    meta.extend_text("config.", &cfg.describe());
    meta.push("rows", mean.rows.len());
    if let Some(err) = mean.err_gaps() {
        if !err.is_empty() {
            meta.push("plateau_err_gap", output::fmt_value(plateau_level(&err, cfg.plateau_fraction)));
        }
    }
    match divergence {
        Some(d) => meta.push("diverged", format!("seed {} ({})", d.seed, d.error)),
        None => meta.push("diverged", "no"),
    }
    meta
}

/// Runs every seed and writes the per-seed CSVs, the mean CSV and the sidecar.
pub fn execute_run(cfg: &RunConfig) -> Result<RunOutcome, ExperimentError> {
    let exp = Experiment::prepare(cfg)?;
    run_prepared(&exp, cfg, &cfg.out)
}

fn run_prepared(exp: &Experiment, cfg: &RunConfig, dir: &Path) -> Result<RunOutcome, ExperimentError> {
    let seeds = seed_list(cfg.seed, cfg.seeds);
    let mut runs = Vec::with_capacity(seeds.len());
    let mut divergence = None;
    for (seed, res) in seeds.iter().zip(exp.run_seeds(&seeds, cfg.iters, cfg.log_positions)) {
        match res {
            Ok(t) => runs.push(t),
            Err(RunFailure { error, partial }) => {
                if divergence.is_none() {
                    divergence = Some(Divergence { seed: *seed, error });
                }
                runs.push(partial);
            }
        }
    }
    let layout = exp.game.layout();
    for (seed, traj) in seeds.iter().zip(&runs) {
        write(&dir.join(format!("seed_{seed}.csv")), &output::trajectory_csv(traj, layout))?;
    }
    let mean = mean_trajectory(&runs);
    write(&dir.join("mean.csv"), &output::trajectory_csv(&mean, layout))?;
    let meta = run_sidecar(exp, cfg, &mean, divergence.as_ref());
    write(&dir.join("meta.txt"), &meta.render())?;
    Ok(RunOutcome { dir: dir.to_path_buf(), seeds, runs, mean, divergence })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub settings: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
    pub divergence: Option<Divergence>,
}

/// Runs every sweep setting into `setting_<k>/` and writes `summary.csv`.
pub fn execute_sweep(sweep: &SweepConfig) -> Result<SweepOutcome, ExperimentError> {
    let base = Experiment::prepare(&sweep.base)?;
    let mut settings = Vec::new();
    let mut summary = Vec::new();
    let mut divergence = None;
    for (k, alphas) in sweep.settings().into_iter().enumerate() {
        let exp = base.with_steps(alphas.clone())?;
        let cfg = RunConfig { alphas, ..sweep.base.clone() };
        let outcome = run_prepared(&exp, &cfg, &sweep.base.out.join(format!("setting_{k}")))?;
        let err = outcome.mean.err_gaps().unwrap_or_default();
        summary.push(SummaryRow {
            setting: k,
            alpha_max: exp.steps.alpha_max(),
            eps_alpha: exp.steps.heterogeneity(),
            fit_rate: fit_descent(&err, cfg.plateau_fraction, cfg.window_factor).ok().map(|f| f.rate),
            plateau: if err.is_empty() { f64::NAN } else { plateau_level(&err, cfg.plateau_fraction) },
        });
        if divergence.is_none() {
            divergence = outcome.divergence.clone();
        }
        settings.push(outcome);
    }
    let path = sweep.base.out.join("summary.csv");
    write(&path, &output::summary_csv(&summary))?;
    Ok(SweepOutcome { settings, summary, divergence })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzeStatus {
    /// Both sufficient conditions hold and `rho(M) < 1`.
    Certified,
    /// The game is admissible but the step-sizes fall outside the certificate.
    Advisory,
    /// `chi <= 0` or the step-size heterogeneity is too large.
    Violation,
}

impl AnalyzeStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Certified => 0,
            Self::Advisory => 1,
            Self::Violation => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub text: String,
    pub status: AnalyzeStatus,
}

/// Game constants, certificate, plateau bound and equilibrium-gap bound.
pub fn analyze(cfg: &RunConfig) -> Result<AnalyzeReport, ConfigError> {
    let exp = match Experiment::prepare(cfg) {
        Ok(exp) => exp,
        Err(e) if e.message.contains("not strongly monotone") => {
            return Ok(AnalyzeReport { text: format!("error: {}\n", e.message), status: AnalyzeStatus::Violation });
        }
        Err(e) => return Err(e),
    };
    let c = &exp.constants;
    let mut meta = Sidecar::new();
    meta.push_values("x_star", &exp.equilibrium);
    meta.extend_text("", &c.to_string());
    let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(c.lipschitz, c.chi, c.n));
    match ne_gap_bound(c.lipschitz, c.chi, c.n, c.mu, gamma) {
        Ok(b) => {
            meta.push("gamma", format!("{gamma:.10e}"));
            meta.push("ne_gap_bound", format!("{b:.10e}"));
        }
        Err(e) => meta.push("ne_gap_bound", format!("unavailable ({e})")),
    }
    let status = match exp.certificate() {
        Err(e) => {
            meta.push("certificate", format!("fail ({e})"));
            AnalyzeStatus::Violation
        }
        Ok(cert) => {
            meta.extend_text("", &cert.to_string());
            if let Ok(p) = plateau_bound(&cert) {
                meta.extend_text("", &p.to_string());
            }
            if !cert.heterogeneity_ok() {
                AnalyzeStatus::Violation
            } else if cert.holds() && cert.spectral_radius < 1.0 {
                AnalyzeStatus::Certified
            } else {
                AnalyzeStatus::Advisory
            }
        }
    };
    Ok(AnalyzeReport { text: meta.render(), status })
}
