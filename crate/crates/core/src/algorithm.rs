//! Gradient-tracking Nash-equilibrium seeking with per-cluster step-sizes.
//!
//! Each cluster `i` keeps two `n_i x (n_i d)` matrices: `Y^i`, whose row `j`
//! is agent `j`'s estimate of every in-cluster coordinate, and the tracker
//! `Phi^i`. One synchronous round is
//!
//! ```text
//! Y^i   <- A^i Y^i - alpha^i Phi^i
//! x     <- coordinate-owner entries of the new Y
//! Phi^i <- A^i Phi^i + G^i(x_{t+1}) - G^i(x_t)
//! ```
//!
//! where row `j` of `G^i(x)` is agent `j`'s two-point oracle. The oracle
//! matrix of the current step is cached and reused as the subtracted term of
//! the next tracker update, so the column means of `Phi^i` always equal those
//! of the latest oracle matrix.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::game::{ClusterLayout, Game, GameError};
use crate::network::CommGraph;
use crate::oracle::{gradient_oracle, OracleError, PerturbationStream, SmoothingParams};

/// Any state entry above this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgorithmError {
    #[error("step-size list has {got} entries for {expected} clusters")]
    StepCount { expected: usize, got: usize },
    #[error("step-size {value} of cluster {cluster} must be positive and finite")]
    InvalidStep { cluster: usize, value: f64 },
    #[error("{got} communication graphs for {expected} clusters")]
    GraphCount { expected: usize, got: usize },
    #[error("graph of cluster {cluster} has {got} nodes, cluster has {expected} agents")]
    GraphSize { cluster: usize, expected: usize, got: usize },
    #[error("initial estimate of cluster {cluster} must be {rows}x{cols}")]
    InitialShape { cluster: usize, rows: usize, cols: usize },
    #[error("iterates diverged at step {step}")]
    Diverged { step: u64 },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Per-cluster constant step-sizes and their summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizes {
    alphas: Vec<f64>,
    alpha_max: f64,
    alpha_bar: f64,
    heterogeneity: f64,
}

impl StepSizes {
    pub fn new(alphas: Vec<f64>, layout: &ClusterLayout) -> Result<Self, AlgorithmError> {
        if alphas.len() != layout.clusters() {
            return Err(AlgorithmError::StepCount { expected: layout.clusters(), got: alphas.len() });
        }
        if let Some((cluster, &value)) =
            alphas.iter().enumerate().find(|(_, a)| !(**a > 0.0 && a.is_finite()))
        {
            return Err(AlgorithmError::InvalidStep { cluster, value });
        }
        let nd = layout.total_coords() as f64;
        let alpha_max = alphas.iter().copied().fold(0.0, f64::max);
        let alpha_bar = alphas
            .iter()
            .enumerate()
            .map(|(i, a)| layout.cluster_coords(i) as f64 * a)
            .sum::<f64>()
            / nd;
        let spread: f64 = alphas
            .iter()
            .enumerate()
            .map(|(i, a)| layout.cluster_coords(i) as f64 * (a - alpha_bar).powi(2))
            .sum();
        let heterogeneity = spread.sqrt() / (alpha_bar * nd.sqrt());
        Ok(Self { alphas, alpha_max, alpha_bar, heterogeneity })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha(&self, cluster: usize) -> f64 {
        self.alphas[cluster]
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    /// Coordinate-weighted mean step-size.
    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }

    /// `|alpha - alpha_bar 1| / |alpha_bar 1|` over the stacked coordinate vector.
    pub fn heterogeneity(&self) -> f64 {
        self.heterogeneity
    }
}

/// Iterates of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Row `j`: agent `j`'s estimate of all in-cluster coordinates.
    pub estimates: DMatrix<f64>,
    /// Row `j`: agent `j`'s gradient trackers.
    pub trackers: DMatrix<f64>,
    /// Oracle matrix `G^i(x_t)` evaluated at the current joint action.
    pub oracle: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmState {
    pub step: u64,
    pub action: Vec<f64>,
    pub clusters: Vec<ClusterState>,
}

/// Starting point; `x_0` and `Y_0` are arbitrary.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub action: Vec<f64>,
    pub estimates: Vec<DMatrix<f64>>,
}

impl InitialPoint {
    pub fn zeros(layout: &ClusterLayout) -> Self {
        Self {
            action: vec![0.0; layout.total_coords()],
            estimates: (0..layout.clusters())
                .map(|i| DMatrix::zeros(layout.agents(i), layout.cluster_coords(i)))
                .collect(),
        }
    }
}

/// Error metrics at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    /// `|x_t - x*|`, when the equilibrium is known.
    pub err_gap: Option<f64>,
    /// `sum_i sum_k |y^i_k - 1 ybar^i_k|^2`.
    pub consensus: f64,
    /// `|ybar_t - x*|^2`, when the equilibrium is known.
    pub opt_gap: Option<f64>,
    /// `sum_i sum_k |phi^i_k - 1 phibar^i_k|^2`.
    pub tracking: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<MetricsRow>,
    /// Joint action at every recorded step; empty unless position logging is on.
    pub positions: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn err_gaps(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.err_gap).collect()
    }
}

/// A run that stopped early, with everything recorded up to that point.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("run aborted: {error}")]
pub struct RunFailure {
    pub error: AlgorithmError,
    pub partial: Trajectory,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    pub iterations: u64,
    pub equilibrium: Option<&'a [f64]>,
    pub log_positions: bool,
}

/// The NE-seeking iteration bound to one game, network and step-size choice.
#[derive(Debug, Clone)]
pub struct NashSeeker<G> {
    game: G,
    graphs: Vec<CommGraph>,
    steps: StepSizes,
    smoothing: SmoothingParams,
    stream: PerturbationStream,
    state: AlgorithmState,
}

impl<G: Game> NashSeeker<G> {
    /// Sets `Y_0`, `x_0`, and seeds the trackers with the oracle at `x_0`.
    pub fn initialize(
        game: G,
        graphs: Vec<CommGraph>,
        steps: StepSizes,
        smoothing: SmoothingParams,
        init: InitialPoint,
        seed: u64,
    ) -> Result<Self, AlgorithmError> {
        let layout = game.layout();
        if graphs.len() != layout.clusters() {
            return Err(AlgorithmError::GraphCount { expected: layout.clusters(), got: graphs.len() });
        }
        for (i, g) in graphs.iter().enumerate() {
            if g.size() != layout.agents(i) {
                return Err(AlgorithmError::GraphSize {
                    cluster: i,
                    expected: layout.agents(i),
                    got: g.size(),
                });
            }
        }
        if steps.alphas().len() != layout.clusters() {
            return Err(AlgorithmError::StepCount {
                expected: layout.clusters(),
                got: steps.alphas().len(),
            });
        }
        layout.check_action(&init.action)?;
        if init.estimates.len() != layout.clusters() {
            return Err(AlgorithmError::InitialShape {
                cluster: init.estimates.len().min(layout.clusters()),
                rows: 0,
                cols: 0,
            });
        }
        for (i, y) in init.estimates.iter().enumerate() {
            let (rows, cols) = (layout.agents(i), layout.cluster_coords(i));
            if y.shape() != (rows, cols) {
                return Err(AlgorithmError::InitialShape { cluster: i, rows, cols });
            }
        }
        let stream = PerturbationStream::new(seed);
        let oracles = oracle_matrices(&game, &stream, 0, &init.action, smoothing.mu())
            .map_err(|e| divergence_or(e, 0))?;
        let clusters = init
            .estimates
            .into_iter()
            .zip(oracles)
            .map(|(estimates, oracle)| ClusterState {
                estimates,
                trackers: oracle.clone(),
                oracle,
            })
            .collect();
        let state = AlgorithmState { step: 0, action: init.action, clusters };
        Ok(Self { game, graphs, steps, smoothing, stream, state })
    }

    pub fn state(&self) -> &AlgorithmState {
        &self.state
    }

    pub fn game(&self) -> &G {
        &self.game
    }

    pub fn steps(&self) -> &StepSizes {
        &self.steps
    }

    pub fn graphs(&self) -> &[CommGraph] {
        &self.graphs
    }

    /// One synchronous round over all clusters.
    pub fn step(&mut self) -> Result<(), AlgorithmError> {
        let next_step = self.state.step + 1;
        let layout = self.game.layout();
        let mut new_estimates = Vec::with_capacity(layout.clusters());
        let mut action = vec![0.0; layout.total_coords()];
        for (i, cluster) in self.state.clusters.iter().enumerate() {
            let a = self.graphs[i].weights();
            let y = a * &cluster.estimates - &cluster.trackers * self.steps.alpha(i);
            let offset = layout.cluster_offset(i);
            for k in 0..layout.cluster_coords(i) {
                action[offset + k] = y[(layout.owner(k), k)];
            }
            new_estimates.push(y);
        }
        let oracles = oracle_matrices(&self.game, &self.stream, next_step, &action, self.smoothing.mu())
            .map_err(|e| divergence_or(e, next_step))?;

        for (i, ((cluster, y), g)) in self
            .state
            .clusters
            .iter_mut()
            .zip(new_estimates)
            .zip(oracles)
            .enumerate()
        {
            let a = self.graphs[i].weights();
            let trackers = a * &cluster.trackers + &g - &cluster.oracle;
            cluster.estimates = y;
            cluster.trackers = trackers;
            cluster.oracle = g;
        }
        self.state.action = action;
        self.state.step = next_step;

        if !self.state_is_bounded() {
            return Err(AlgorithmError::Diverged { step: next_step });
        }
        Ok(())
    }

    fn state_is_bounded(&self) -> bool {
        let ok = |v: &f64| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT;
        self.state.action.iter().all(ok)
            && self
                .state
                .clusters
                .iter()
                .all(|c| c.estimates.iter().all(ok) && c.trackers.iter().all(ok))
    }

    pub fn metrics(&self, equilibrium: Option<&[f64]>) -> MetricsRow {
        compute_metrics(&self.state, self.game.layout(), equilibrium)
    }

    /// Runs `iterations` rounds, recording metrics at `t = 0..=iterations`.
    pub fn run(&mut self, opts: &RunOptions<'_>) -> Result<Trajectory, RunFailure> {
        let mut traj = Trajectory::default();
        let record = |seeker: &Self, traj: &mut Trajectory| {
            traj.rows.push(seeker.metrics(opts.equilibrium));
            if opts.log_positions {
                traj.positions.push(seeker.state.action.clone());
            }
        };
        record(self, &mut traj);
        for _ in 0..opts.iterations {
            if let Err(error) = self.step() {
                return Err(RunFailure { error, partial: traj });
            }
            record(self, &mut traj);
        }
        Ok(traj)
    }
}

fn divergence_or(e: OracleError, step: u64) -> AlgorithmError {
    match e {
        OracleError::NonFinite { .. } => AlgorithmError::Diverged { step },
        other => other.into(),
    }
}

/// Oracle matrices `G^i(x)` of every cluster at step `step`.
fn oracle_matrices<G: Game>(
    game: &G,
    stream: &PerturbationStream,
    step: u64,
    x: &[f64],
    mu: f64,
) -> Result<Vec<DMatrix<f64>>, OracleError> {
    let layout = game.layout();
    let nd = layout.total_coords();
    (0..layout.clusters())
        .map(|i| {
            let mut g = DMatrix::zeros(layout.agents(i), layout.cluster_coords(i));
            for j in 0..layout.agents(i) {
                let zeta = stream.sample(step, i, j, nd);
                let est = gradient_oracle(game, i, j, x, &zeta.values, mu)?;
                for (k, v) in est.gradient.into_iter().enumerate() {
                    g[(j, k)] = v;
                }
            }
            Ok(g)
        })
        .collect()
}

/// Column means of a cluster matrix.
pub fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let rows = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / rows).collect()
}

fn disagreement(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| {
            let mean = c.mean();
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Stacked column means `ybar_t` of all clusters' estimates.
pub fn average_estimate(state: &AlgorithmState) -> Vec<f64> {
    state.clusters.iter().flat_map(|c| column_means(&c.estimates)).collect()
}

pub fn compute_metrics(
    state: &AlgorithmState,
    layout: &ClusterLayout,
    equilibrium: Option<&[f64]>,
) -> MetricsRow {
    debug_assert_eq!(state.action.len(), layout.total_coords());
    let consensus = state.clusters.iter().map(|c| disagreement(&c.estimates)).sum();
    let tracking = state.clusters.iter().map(|c| disagreement(&c.trackers)).sum();
    let (err_gap, opt_gap) = match equilibrium {
        Some(star) => {
            let err = state
                .action
                .iter()
                .zip(star)
                .map(|(x, s)| (x - s).powi(2))
                .sum::<f64>()
                .sqrt();
            let opt = average_estimate(state)
                .iter()
                .zip(star)
                .map(|(y, s)| (y - s).powi(2))
                .sum::<f64>();
            (Some(err), Some(opt))
        }
        None => (None, None),
    };
    MetricsRow { step: state.step, err_gap, consensus, opt_gap, tracking }
}
