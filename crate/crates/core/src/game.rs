//! N-cluster game structure and cost evaluation.
//!
//! Every agent `(i, j)` owns `dim` scalar coordinates of the joint action.
//! Within cluster `i` the coordinates are numbered `0..n_i * dim`, with agent
//! `j` owning `j * dim .. (j + 1) * dim`. The joint action stacks clusters in
//! order, so the global offset of in-cluster coordinate `k` of cluster `i` is
//! `sum_{l < i} n_l * dim + k`.
//!
//! All indices in this crate are zero-based.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid cluster layout: {0}")]
    InvalidLayout(String),
    #[error("agent ({cluster}, {agent}) out of range")]
    AgentOutOfRange { cluster: usize, agent: usize },
    #[error("cluster {0} out of range")]
    ClusterOutOfRange(usize),
    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("game mapping is not strongly monotone (chi = {chi:e})")]
    NotStronglyMonotone { chi: f64 },
}

/// Cluster sizes and per-agent action dimension, with precomputed offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLayout {
    sizes: Vec<usize>,
    dim: usize,
    offsets: Vec<usize>,
    total: usize,
}

/// Position of one scalar coordinate in the joint action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoordinateIndex {
    pub cluster: usize,
    /// In-cluster coordinate, `0..n_i * dim`.
    pub coord: usize,
    /// Offset into the flat joint-action vector.
    pub global: usize,
}

impl ClusterLayout {
    pub fn new(sizes: Vec<usize>, dim: usize) -> Result<Self, GameError> {
        if sizes.is_empty() {
            return Err(GameError::InvalidLayout("at least one cluster is required".into()));
        }
        if let Some(i) = sizes.iter().position(|&n| n == 0) {
            return Err(GameError::InvalidLayout(format!("cluster {i} has no agents")));
        }
        if dim == 0 {
            return Err(GameError::InvalidLayout("action dimension must be at least 1".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &n in &sizes {
            offsets.push(total);
            total += n * dim;
        }
        Ok(Self { sizes, dim, offsets, total })
    }

    pub fn uniform(clusters: usize, agents_per_cluster: usize, dim: usize) -> Result<Self, GameError> {
        Self::new(vec![agents_per_cluster; clusters], dim)
    }

    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agents(&self, cluster: usize) -> usize {
        self.sizes[cluster]
    }

    /// Total number of agents `n`.
    pub fn total_agents(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Length of the joint action, `n * dim`.
    pub fn total_coords(&self) -> usize {
        self.total
    }

    /// Number of scalar coordinates controlled by cluster `i`, `n_i * dim`.
    pub fn cluster_coords(&self, cluster: usize) -> usize {
        self.sizes[cluster] * self.dim
    }

    pub fn cluster_offset(&self, cluster: usize) -> usize {
        self.offsets[cluster]
    }

    pub fn cluster_range(&self, cluster: usize) -> Range<usize> {
        let start = self.offsets[cluster];
        start..start + self.cluster_coords(cluster)
    }

    /// Agent that owns in-cluster coordinate `coord`.
    pub fn owner(&self, coord: usize) -> usize {
        coord / self.dim
    }

    pub fn index(&self, cluster: usize, coord: usize) -> Result<CoordinateIndex, GameError> {
        if cluster >= self.clusters() {
            return Err(GameError::ClusterOutOfRange(cluster));
        }
        let width = self.cluster_coords(cluster);
        if coord >= width {
            return Err(GameError::ShapeMismatch { expected: width, got: coord + 1 });
        }
        Ok(CoordinateIndex { cluster, coord, global: self.offsets[cluster] + coord })
    }

    /// Inverse of [`ClusterLayout::index`].
    pub fn locate(&self, global: usize) -> Option<CoordinateIndex> {
        if global >= self.total {
            return None;
        }
        let cluster = match self.offsets.binary_search(&global) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Some(CoordinateIndex { cluster, coord: global - self.offsets[cluster], global })
    }

    pub fn check_cluster(&self, cluster: usize) -> Result<(), GameError> {
        if cluster < self.clusters() {
            Ok(())
        } else {
            Err(GameError::ClusterOutOfRange(cluster))
        }
    }

    pub fn check_agent(&self, cluster: usize, agent: usize) -> Result<(), GameError> {
        if cluster < self.clusters() && agent < self.sizes[cluster] {
            Ok(())
        } else {
            Err(GameError::AgentOutOfRange { cluster, agent })
        }
    }

    pub fn check_action(&self, x: &[f64]) -> Result<(), GameError> {
        if x.len() == self.total {
            Ok(())
        } else {
            Err(GameError::ShapeMismatch { expected: self.total, got: x.len() })
        }
    }
}

/// A game whose local costs can be measured at any joint action.
///
/// Implementors provide unchecked [`Game::cost`]; the `evaluate_*` methods
/// validate indices and shapes first.
pub trait Game: Send + Sync {
    fn layout(&self) -> &ClusterLayout;

    /// Value of `f^i_j(x)`. Callers guarantee valid indices and `x.len() == n * dim`.
    fn cost(&self, cluster: usize, agent: usize, x: &[f64]) -> f64;

    fn evaluate_local(&self, cluster: usize, agent: usize, x: &[f64]) -> Result<f64, GameError> {
        self.layout().check_agent(cluster, agent)?;
        self.layout().check_action(x)?;
        Ok(self.cost(cluster, agent, x))
    }

    /// Cluster-level cost `(1/n_i) sum_j f^i_j(x)`.
    fn evaluate_cluster(&self, cluster: usize, x: &[f64]) -> Result<f64, GameError> {
        self.layout().check_cluster(cluster)?;
        self.layout().check_action(x)?;
        let n = self.layout().agents(cluster);
        let sum: f64 = (0..n).map(|j| self.cost(cluster, j, x)).sum();
        Ok(sum / n as f64)
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn layout(&self) -> &ClusterLayout {
        (**self).layout()
    }

    fn cost(&self, cluster: usize, agent: usize, x: &[f64]) -> f64 {
        (**self).cost(cluster, agent, x)
    }
}

pub type CostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Game with opaque cost evaluators, one per agent.
#[derive(Clone)]
pub struct GameSpec {
    layout: ClusterLayout,
    costs: Vec<Vec<CostFn>>,
}

impl GameSpec {
    pub fn new(layout: ClusterLayout, costs: Vec<Vec<CostFn>>) -> Result<Self, GameError> {
        if costs.len() != layout.clusters() {
            return Err(GameError::InvalidGame(format!(
                "{} cost families for {} clusters",
                costs.len(),
                layout.clusters()
            )));
        }
        for (i, family) in costs.iter().enumerate() {
            if family.len() != layout.agents(i) {
                return Err(GameError::InvalidGame(format!(
                    "cluster {i}: {} cost functions for {} agents",
                    family.len(),
                    layout.agents(i)
                )));
            }
        }
        Ok(Self { layout, costs })
    }
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec").field("layout", &self.layout).finish_non_exhaustive()
    }
}

impl Game for GameSpec {
    fn layout(&self) -> &ClusterLayout {
        &self.layout
    }

    fn cost(&self, cluster: usize, agent: usize, x: &[f64]) -> f64 {
        (self.costs[cluster][agent])(x)
    }
}

/// `f(x) = x^T Q x + b^T x + c` over the full joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    q: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl QuadraticCost {
    /// `q` is replaced by its symmetric part.
    pub fn new(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self, GameError> {
        let n = b.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(GameError::ShapeMismatch { expected: n * n, got: q.nrows() * q.ncols() });
        }
        let q = (&q + q.transpose()) * 0.5;
        Ok(Self { q, b, c })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.b.len();
        let mut quad = 0.0;
        for (col, &xc) in self.q.as_slice().chunks_exact(n).zip(x) {
            if xc != 0.0 {
                let dot: f64 = col.iter().zip(x).map(|(q, xr)| q * xr).sum();
                quad += xc * dot;
            }
        }
        let lin: f64 = self.b.iter().zip(x).map(|(b, xi)| b * xi).sum();
        quad + lin + self.c
    }

    /// Total gradient `2 Q x + b`.
    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(x);
        &self.q * x * 2.0 + &self.b
    }

    /// Spectral norm of the Hessian `2 Q`, the Lipschitz constant of the gradient.
    pub fn gradient_lipschitz(&self) -> f64 {
        let eig = SymmetricEigen::new(&self.q * 2.0);
        eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Game whose local costs are all quadratic, with analytic game mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    layout: ClusterLayout,
    costs: Vec<Vec<QuadraticCost>>,
}

impl QuadraticGame {
    pub fn new(layout: ClusterLayout, costs: Vec<Vec<QuadraticCost>>) -> Result<Self, GameError> {
        if costs.len() != layout.clusters() {
            return Err(GameError::InvalidGame(format!(
                "{} cost families for {} clusters",
                costs.len(),
                layout.clusters()
            )));
        }
        for (i, family) in costs.iter().enumerate() {
            if family.len() != layout.agents(i) {
                return Err(GameError::InvalidGame(format!(
                    "cluster {i}: {} cost functions for {} agents",
                    family.len(),
                    layout.agents(i)
                )));
            }
            for c in family {
                if c.dim() != layout.total_coords() {
                    return Err(GameError::ShapeMismatch {
                        expected: layout.total_coords(),
                        got: c.dim(),
                    });
                }
            }
        }
        Ok(Self { layout, costs })
    }

    pub fn local(&self, cluster: usize, agent: usize) -> &QuadraticCost {
        &self.costs[cluster][agent]
    }

    pub fn costs(&self) -> &[Vec<QuadraticCost>] {
        &self.costs
    }

    /// Opaque-evaluator view of the same game.
    pub fn to_spec(&self) -> GameSpec {
        let costs = self
            .costs
            .iter()
            .map(|family| {
                family
                    .iter()
                    .map(|c| {
                        let c = c.clone();
                        Arc::new(move |x: &[f64]| c.value(x)) as CostFn
                    })
                    .collect()
            })
            .collect();
        GameSpec { layout: self.layout.clone(), costs }
    }

    /// Constant Jacobian of the game mapping.
    ///
    /// Rows of cluster `i` are `(1/n_i) sum_j 2 Q^i_j` restricted to that cluster's rows.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let nd = self.layout.total_coords();
        let mut jac = DMatrix::zeros(nd, nd);
        for (i, family) in self.costs.iter().enumerate() {
            let scale = 2.0 / family.len() as f64;
            for r in self.layout.cluster_range(i) {
                for c in family {
                    let mut row = jac.row_mut(r);
                    row += c.q.row(r) * scale;
                }
            }
        }
        jac
    }

    /// Game mapping at the origin, i.e. the affine offset of `Phi`.
    pub fn mapping_offset(&self) -> DVector<f64> {
        let nd = self.layout.total_coords();
        let mut off = DVector::zeros(nd);
        for (i, family) in self.costs.iter().enumerate() {
            let scale = 1.0 / family.len() as f64;
            for r in self.layout.cluster_range(i) {
                off[r] = family.iter().map(|c| c.b[r]).sum::<f64>() * scale;
            }
        }
        off
    }

    /// Stacked partial gradients of each cluster cost with respect to its own block.
    pub fn game_mapping(&self, x: &[f64]) -> Result<DVector<f64>, GameError> {
        self.layout.check_action(x)?;
        let nd = self.layout.total_coords();
        let mut phi = DVector::zeros(nd);
        for (i, family) in self.costs.iter().enumerate() {
            let range = self.layout.cluster_range(i);
            let scale = 1.0 / family.len() as f64;
            for c in family {
                let g = c.gradient(x);
                for r in range.clone() {
                    phi[r] += scale * g[r];
                }
            }
        }
        Ok(phi)
    }

    /// Strong-monotonicity constant: smallest eigenvalue of the symmetric part of the Jacobian.
    pub fn monotonicity(&self) -> f64 {
        let jac = self.jacobian();
        let sym = (&jac + jac.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    /// Largest gradient Lipschitz constant over all agents.
    pub fn lipschitz(&self) -> f64 {
        self.costs
            .iter()
            .flatten()
            .map(QuadraticCost::gradient_lipschitz)
            .fold(0.0, f64::max)
    }
}

impl Game for QuadraticGame {
    fn layout(&self) -> &ClusterLayout {
        &self.layout
    }

    fn cost(&self, cluster: usize, agent: usize, x: &[f64]) -> f64 {
        self.costs[cluster][agent].value(x)
    }
}

/// Sensor-network connectivity control game.
///
/// Agent `j` of cluster `i` (one-based in the formulas) pays
/// `i * (|x^i_j|^2 + 1^T x^i_j + j) + |x^i_j - x^{i+1}_j|^2`, where cluster
/// `i + 1` wraps around to the first cluster.
pub fn build_connectivity_game(
    clusters: usize,
    agents_per_cluster: usize,
    dim: usize,
) -> Result<QuadraticGame, GameError> {
    if clusters < 2 {
        return Err(GameError::InvalidGame(
            "connectivity game needs at least two clusters to couple".into(),
        ));
    }
    let layout = ClusterLayout::uniform(clusters, agents_per_cluster, dim)?;
    let nd = layout.total_coords();
    let mut costs = Vec::with_capacity(clusters);
    for i in 0..clusters {
        let weight = (i + 1) as f64;
        let next = (i + 1) % clusters;
        let mut family = Vec::with_capacity(agents_per_cluster);
        for j in 0..agents_per_cluster {
            let mut q = DMatrix::zeros(nd, nd);
            let mut b = DVector::zeros(nd);
            for s in 0..dim {
                let own = layout.cluster_offset(i) + j * dim + s;
                let other = layout.cluster_offset(next) + j * dim + s;
                q[(own, own)] += weight + 1.0;
                q[(other, other)] += 1.0;
                q[(own, other)] -= 1.0;
                q[(other, own)] -= 1.0;
                b[own] = weight;
            }
            let c = weight * (j + 1) as f64;
            family.push(QuadraticCost::new(q, b, c)?);
        }
        costs.push(family);
    }
    QuadraticGame::new(layout, costs)
}
