//! Gaussian smoothing and the two-point gradient-free oracle.
//!
//! Agent `(i, j)` perturbs the whole joint action with its own standard
//! Gaussian draw `zeta`, measures its cost twice and scales the single
//! difference quotient by the in-cluster coordinates of `zeta`:
//!
//! ```text
//! g^i_{jk}(x) = (f^i_j(x + mu zeta) - f^i_j(x)) / mu * zeta[offset_i + k]
//! ```
//!
//! Draws come from counter-addressed ChaCha streams keyed by
//! `(seed, t, i, j)`, so a run is reproducible no matter in which order the
//! agents are evaluated.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::game::{Game, GameError, QuadraticGame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("smoothing parameter must be positive, got {0}")]
    InvalidSmoothing(f64),
    #[error("perturbation has length {got}, expected {expected}")]
    PerturbationShape { expected: usize, got: usize },
    #[error("non-finite cost measured by agent ({cluster}, {agent})")]
    NonFinite { cluster: usize, agent: usize },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Smoothing radius `mu` of the Gaussian surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    mu: f64,
}

impl SmoothingParams {
    pub fn new(mu: f64) -> Result<Self, OracleError> {
        if mu > 0.0 && mu.is_finite() {
            Ok(Self { mu })
        } else {
            Err(OracleError::InvalidSmoothing(mu))
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Where a perturbation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub step: u64,
    pub cluster: usize,
    pub agent: usize,
}

/// A standard Gaussian vector drawn by one agent at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSample {
    pub key: StreamKey,
    pub values: Vec<f64>,
}

/// Root of all perturbation streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbationStream {
    seed: u64,
}

impl PerturbationStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for `(step, cluster, agent)`.
    ///
    /// The ChaCha stream id packs the step into the high 32 bits and the
    /// cluster/agent pair into 16 bits each.
    pub fn rng(&self, step: u64, cluster: usize, agent: usize) -> ChaCha8Rng {
        assert!(step < 1 << 32, "step counter exceeds stream address space");
        assert!(cluster < 1 << 16 && agent < 1 << 16, "agent index exceeds stream address space");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((step << 32) | ((cluster as u64) << 16) | agent as u64);
        rng
    }

    pub fn sample(&self, step: u64, cluster: usize, agent: usize, len: usize) -> PerturbationSample {
        let mut rng = self.rng(step, cluster, agent);
        let values = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        PerturbationSample {
            key: StreamKey { seed: self.seed, step, cluster, agent },
            values,
        }
    }
}

/// One oracle output with the two measurements that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    /// `g^i_{jk}` for every in-cluster coordinate `k`.
    pub gradient: Vec<f64>,
    pub base_value: f64,
    pub perturbed_value: f64,
}

/// Two-point estimate of agent `(i, j)`'s partial gradient with respect to
/// all of cluster `i`'s coordinates.
pub fn gradient_oracle<G: Game + ?Sized>(
    game: &G,
    cluster: usize,
    agent: usize,
    x: &[f64],
    zeta: &[f64],
    mu: f64,
) -> Result<OracleEstimate, OracleError> {
    if !(mu > 0.0) {
        return Err(OracleError::InvalidSmoothing(mu));
    }
    let layout = game.layout();
    layout.check_agent(cluster, agent)?;
    layout.check_action(x)?;
    if zeta.len() != x.len() {
        return Err(OracleError::PerturbationShape { expected: x.len(), got: zeta.len() });
    }
    let shifted: Vec<f64> = x.iter().zip(zeta).map(|(xi, z)| xi + mu * z).collect();
    let perturbed_value = game.cost(cluster, agent, &shifted);
    let base_value = game.cost(cluster, agent, x);
    if !perturbed_value.is_finite() || !base_value.is_finite() {
        return Err(OracleError::NonFinite { cluster, agent });
    }
    let quotient = (perturbed_value - base_value) / mu;
    let gradient = zeta[layout.cluster_range(cluster)]
        .iter()
        .map(|z| quotient * z)
        .collect();
    Ok(OracleEstimate { gradient, base_value, perturbed_value })
}

/// Closed-form Gaussian smoothing of a quadratic cost: `f(x) + mu^2 tr(Q)`.
pub fn smoothed_value(
    game: &QuadraticGame,
    cluster: usize,
    agent: usize,
    x: &[f64],
    mu: f64,
) -> Result<f64, GameError> {
    let f = game.evaluate_local(cluster, agent, x)?;
    Ok(f + mu * mu * game.local(cluster, agent).q().trace())
}

/// Exact total gradient of `f^i_j`, which equals the smoothed gradient for
/// every `mu` when the cost is quadratic.
pub fn smoothed_gradient_reference(
    game: &QuadraticGame,
    cluster: usize,
    agent: usize,
    x: &[f64],
) -> Result<DVector<f64>, GameError> {
    game.layout().check_agent(cluster, agent)?;
    game.layout().check_action(x)?;
    Ok(game.local(cluster, agent).gradient(x))
}
