//! Run and sweep configuration files.
//!
//! Configs are flat TOML documents (`key = value`, lists in brackets). A
//! `game_file` path is resolved against the config's directory, `out`
//! against the working directory. See the repository README for all keys.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Config key the error refers to, used to find its line.
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: Some(key.into()), line: None, message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self { key: None, line: None, message: message.into() }
    }

    /// Fills in the line number of `key` in `source` when it is not yet known.
    pub fn locate(mut self, source: &str) -> Self {
        if self.line.is_none() {
            if let Some(key) = &self.key {
                self.line = find_key_line(source, key);
            }
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(line), Some(key)) => write!(f, "line {line}: {key}: {}", self.message),
            (Some(line), None) => write!(f, "line {line}: {}", self.message),
            (None, Some(key)) => write!(f, "{key}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn find_key_line(source: &str, key: &str) -> Option<usize> {
    source.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(source: &str) -> Result<T, ConfigError> {
    toml::from_str(source).map_err(|e| ConfigError {
        key: None,
        line: e.span().map(|s| line_of_offset(source, s.start)),
        message: e.message().trim().to_string(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    game: Option<String>,
    game_file: Option<String>,
    clusters: Option<usize>,
    agents_per_cluster: Option<usize>,
    dim: Option<usize>,
    graph: Option<String>,
    self_weight: Option<f64>,
    graph_matrices: Option<Vec<Vec<Vec<f64>>>>,
    mu: Option<f64>,
    alpha: Option<Vec<f64>>,
    iters: Option<u64>,
    seed: Option<u64>,
    seeds: Option<usize>,
    init: Option<String>,
    x0: Option<Vec<f64>>,
    y0: Option<Vec<Vec<f64>>>,
    out: Option<String>,
    log_positions: Option<bool>,
    plateau_fraction: Option<f64>,
    window_factor: Option<f64>,
    gamma: Option<f64>,
    alpha_scale: Option<Vec<f64>>,
    alpha_sets: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameSource {
    Connectivity { clusters: usize, agents_per_cluster: usize, dim: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Ring { self_weight: f64 },
    /// One row-major weight matrix per cluster.
    Matrices(Vec<DMatrix<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    Zeros,
    /// `x0` over the joint action and one row-major `n_i x (n_i d)` estimate per cluster.
    Explicit { action: Vec<f64>, estimates: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub game: GameSource,
    pub graph: GraphSource,
    pub mu: f64,
    pub alphas: Vec<f64>,
    pub iters: u64,
    pub seed: u64,
    pub seeds: usize,
    pub init: InitMode,
    pub out: PathBuf,
    pub log_positions: bool,
    pub plateau_fraction: f64,
    pub window_factor: f64,
    pub gamma: Option<f64>,
}

impl RunConfig {
    pub const DEFAULT_ITERS: u64 = 2000;
    pub const DEFAULT_SEEDS: usize = 20;

    /// The reference setup: connectivity game (3 clusters of 4 planar
    /// sensors), rings with self weight 0.5, `mu = 1e-4`, steps 0.1/0.08/0.06.
    pub fn baseline() -> Self {
        Self {
            game: GameSource::Connectivity { clusters: 3, agents_per_cluster: 4, dim: 2 },
            graph: GraphSource::Ring { self_weight: 0.5 },
            mu: 1e-4,
            alphas: vec![0.1, 0.08, 0.06],
            iters: Self::DEFAULT_ITERS,
            seed: 1,
            seeds: Self::DEFAULT_SEEDS,
            init: InitMode::Zeros,
            out: PathBuf::from("out"),
            log_positions: false,
            plateau_fraction: 0.1,
            window_factor: 2.0,
            gamma: None,
        }
    }

    pub fn parse(source: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = parse_toml(source)?;
        if raw.alpha_scale.is_some() || raw.alpha_sets.is_some() {
            let key = if raw.alpha_scale.is_some() { "alpha_scale" } else { "alpha_sets" };
            return Err(ConfigError::new(key, "sweep axis is only valid for the sweep command").locate(source));
        }
        resolve(raw, base_dir).map_err(|e| e.locate(source))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = read_source(path)?;
        Self::parse(&source, path.parent().unwrap_or(Path::new(".")))
    }

    /// Resolved settings as `key: value` lines.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        match &self.game {
            GameSource::Connectivity { clusters, agents_per_cluster, dim } => {
                s += &format!("game: connectivity\nclusters: {clusters}\nagents_per_cluster: {agents_per_cluster}\ndim: {dim}\n");
            }
            GameSource::File(p) => s += &format!("game: file\ngame_file: {}\n", p.display()),
        }
        match &self.graph {
            GraphSource::Ring { self_weight } => s += &format!("graph: ring\nself_weight: {self_weight}\n"),
            GraphSource::Matrices(m) => s += &format!("graph: matrix\ngraph_clusters: {}\n", m.len()),
        }
        s += &format!("mu: {:e}\n", self.mu);
        s += &format!("alpha: {}\n", join(&self.alphas));
        s += &format!("iters: {}\nseed: {}\nseeds: {}\n", self.iters, self.seed, self.seeds);
        s += match self.init {
            InitMode::Zeros => "init: zeros\n",
            InitMode::Explicit { .. } => "init: explicit\n",
        };
        s += &format!("out: {}\n", self.out.display());
        s += &format!("log_positions: {}\n", self.log_positions);
        s += &format!("plateau_fraction: {}\nwindow_factor: {}\n", self.plateau_fraction, self.window_factor);
        if let Some(g) = self.gamma {
            s += &format!("gamma: {g:e}\n");
        }
        s
    }
}

pub(crate) fn join(v: &[f64]) -> String {
    v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

fn read_source(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Multiply the base step-sizes by each factor (fixed heterogeneity).
    AlphaScale(Vec<f64>),
    /// Explicit step-size lists.
    AlphaSets(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub axis: SweepAxis,
}

impl SweepConfig {
    pub fn parse(source: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut raw: RawConfig = parse_toml(source)?;
        let scale = raw.alpha_scale.take();
        let sets = raw.alpha_sets.take();
        let axis = match (scale, sets) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("alpha_sets", "give either alpha_scale or alpha_sets, not both")
                    .locate(source))
            }
            (Some(s), None) => {
                if s.is_empty() || s.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(ConfigError::new("alpha_scale", "factors must be positive and non-empty").locate(source));
                }
                SweepAxis::AlphaScale(s)
            }
            (None, Some(s)) => {
                if s.is_empty() {
                    return Err(ConfigError::new("alpha_sets", "at least one setting is required").locate(source));
                }
                SweepAxis::AlphaSets(s)
            }
            (None, None) => {
                return Err(ConfigError::general("sweep needs alpha_scale or alpha_sets"));
            }
        };
        if raw.alpha.is_none() {
            if let SweepAxis::AlphaSets(sets) = &axis {
                raw.alpha = Some(sets[0].clone());
            }
        }
        let base = resolve(raw, base_dir).map_err(|e| e.locate(source))?;
        let sweep = Self { base, axis };
        for (k, alphas) in sweep.settings().iter().enumerate() {
            if alphas.len() != sweep.base.alphas.len() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                let key = match sweep.axis {
                    SweepAxis::AlphaScale(_) => "alpha_scale",
                    SweepAxis::AlphaSets(_) => "alpha_sets",
                };
                return Err(ConfigError::new(key, format!("setting {k} has invalid step-sizes")).locate(source));
            }
        }
        Ok(sweep)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = read_source(path)?;
        Self::parse(&source, path.parent().unwrap_or(Path::new(".")))
    }

    /// Step-size list of every setting, in order.
    pub fn settings(&self) -> Vec<Vec<f64>> {
        match &self.axis {
            SweepAxis::AlphaScale(f) => f
                .iter()
                .map(|a| self.base.alphas.iter().map(|b| b * a).collect())
                .collect(),
            SweepAxis::AlphaSets(s) => s.clone(),
        }
    }
}

fn resolve(raw: RawConfig, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let defaults = RunConfig::baseline();
    let game = match raw.game.as_deref().unwrap_or("connectivity") {
        "connectivity" => {
            if raw.game_file.is_some() {
                return Err(ConfigError::new("game_file", "only valid with game = \"file\""));
            }
            GameSource::Connectivity {
                clusters: raw.clusters.unwrap_or(3),
                agents_per_cluster: raw.agents_per_cluster.unwrap_or(4),
                dim: raw.dim.unwrap_or(2),
            }
        }
        "file" => {
            let path = raw
                .game_file
                .ok_or_else(|| ConfigError::new("game", "game = \"file\" needs game_file"))?;
            for (key, v) in [("clusters", raw.clusters), ("agents_per_cluster", raw.agents_per_cluster), ("dim", raw.dim)] {
                if v.is_some() {
                    return Err(ConfigError::new(key, "structure comes from the game file"));
                }
            }
            GameSource::File(base_dir.join(path))
        }
        other => return Err(ConfigError::new("game", format!("unknown game {other:?}"))),
    };

    let graph = match raw.graph.as_deref().unwrap_or("ring") {
        "ring" => {
            if raw.graph_matrices.is_some() {
                return Err(ConfigError::new("graph_matrices", "only valid with graph = \"matrix\""));
            }
            let w = raw.self_weight.unwrap_or(0.5);
            if !(w > 0.0 && w < 1.0) {
                return Err(ConfigError::new("self_weight", format!("{w} must lie in (0, 1)")));
            }
            GraphSource::Ring { self_weight: w }
        }
        "matrix" => {
            let mats = raw
                .graph_matrices
                .ok_or_else(|| ConfigError::new("graph", "graph = \"matrix\" needs graph_matrices"))?;
            let mut out = Vec::with_capacity(mats.len());
            for (i, rows) in mats.into_iter().enumerate() {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(ConfigError::new("graph_matrices", format!("matrix {i} is not square")));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                out.push(DMatrix::from_row_slice(n, n, &flat));
            }
            GraphSource::Matrices(out)
        }
        other => return Err(ConfigError::new("graph", format!("unknown graph {other:?}"))),
    };

    let mu = raw.mu.unwrap_or(defaults.mu);
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ConfigError::new("mu", format!("{mu} must be positive")));
    }
    let alphas = raw.alpha.ok_or_else(|| ConfigError::new("alpha", "step-size list is required"))?;
    if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(ConfigError::new("alpha", "step-sizes must be positive"));
    }
    let seeds = raw.seeds.unwrap_or(defaults.seeds);
    if seeds == 0 {
        return Err(ConfigError::new("seeds", "at least one seed is required"));
    }
    let init = match raw.init.as_deref().unwrap_or("zeros") {
        "zeros" => {
            if raw.x0.is_some() || raw.y0.is_some() {
                let key = if raw.x0.is_some() { "x0" } else { "y0" };
                return Err(ConfigError::new(key, "only valid with init = \"explicit\""));
            }
            InitMode::Zeros
        }
        "explicit" => InitMode::Explicit {
            action: raw.x0.ok_or_else(|| ConfigError::new("init", "explicit init needs x0"))?,
            estimates: raw.y0.ok_or_else(|| ConfigError::new("init", "explicit init needs y0"))?,
        },
        other => return Err(ConfigError::new("init", format!("unknown init mode {other:?}"))),
    };
    let plateau_fraction = raw.plateau_fraction.unwrap_or(defaults.plateau_fraction);
    if !(plateau_fraction > 0.0 && plateau_fraction <= 1.0) {
        return Err(ConfigError::new("plateau_fraction", "must lie in (0, 1]"));
    }
    let window_factor = raw.window_factor.unwrap_or(defaults.window_factor);
    if !(window_factor >= 1.0 && window_factor.is_finite()) {
        return Err(ConfigError::new("window_factor", "must be at least 1"));
    }
    if let Some(g) = raw.gamma {
        if !(g > 0.0) {
            return Err(ConfigError::new("gamma", "must be positive"));
        }
    }
    Ok(RunConfig {
        game,
        graph,
        mu,
        alphas,
        iters: raw.iters.unwrap_or(defaults.iters),
        seed: raw.seed.unwrap_or(defaults.seed),
        seeds,
        init,
        out: raw.out.map(PathBuf::from).unwrap_or(defaults.out),
        log_positions: raw.log_positions.unwrap_or(false),
        plateau_fraction,
        window_factor,
        gamma: raw.gamma,
    })
}
