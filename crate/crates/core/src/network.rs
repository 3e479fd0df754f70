//! Per-cluster communication digraphs with doubly-stochastic weights.

use nalgebra::DMatrix;
use thiserror::Error;

/// Tolerance for row and column sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("self weight {0} must lie strictly between 0 and 1")]
    InvalidSelfWeight(f64),
    #[error("graph needs at least one node")]
    Empty,
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("weight matrix violates graph assumptions: {0}")]
    Invalid(ValidationReport),
    #[error("cluster {cluster}: sigma = {sigma} is not below 1")]
    NotContracting { cluster: usize, sigma: f64 },
}

/// Result of checking a weight matrix against the graph assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub square: bool,
    pub min_entry: f64,
    pub max_row_residual: f64,
    pub max_col_residual: f64,
    pub min_diagonal: f64,
    pub strongly_connected: bool,
    /// Spectral norm of `A - (1/n) 1 1^T`; `NaN` when the matrix is not square.
    pub sigma: f64,
}

impl ValidationReport {
    pub fn nonnegative(&self) -> bool {
        self.min_entry >= 0.0
    }

    pub fn row_stochastic(&self) -> bool {
        self.max_row_residual <= STOCHASTIC_TOL
    }

    pub fn column_stochastic(&self) -> bool {
        self.max_col_residual <= STOCHASTIC_TOL
    }

    pub fn doubly_stochastic(&self) -> bool {
        self.nonnegative() && self.row_stochastic() && self.column_stochastic()
    }

    pub fn positive_diagonal(&self) -> bool {
        self.min_diagonal > 0.0
    }

    pub fn contracting(&self) -> bool {
        self.sigma < 1.0
    }

    pub fn passed(&self) -> bool {
        self.square
            && self.doubly_stochastic()
            && self.positive_diagonal()
            && self.strongly_connected
            && self.contracting()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let flag = |ok: bool| if ok { "pass" } else { "FAIL" };
        write!(
            f,
            "nonnegative={} (min {:e}), rows={} (res {:e}), cols={} (res {:e}), diagonal={} (min {:e}), \
             strongly_connected={}, sigma={} ({})",
            flag(self.nonnegative()),
            self.min_entry,
            flag(self.row_stochastic()),
            self.max_row_residual,
            flag(self.column_stochastic()),
            self.max_col_residual,
            flag(self.positive_diagonal()),
            self.min_diagonal,
            flag(self.strongly_connected),
            flag(self.contracting()),
            self.sigma,
        )
    }
}

/// Checks a candidate weight matrix; never fails, reports each invariant.
pub fn validate(weights: &DMatrix<f64>) -> ValidationReport {
    let (rows, cols) = weights.shape();
    let square = rows == cols && rows > 0;
    let min_entry = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let max_row_residual = weights
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let max_col_residual = weights
        .column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_diagonal = (0..rows.min(cols)).map(|k| weights[(k, k)]).fold(f64::INFINITY, f64::min);
    let (strongly_connected, sigma) = if square {
        (strongly_connected(weights), deflated_norm(weights))
    } else {
        (false, f64::NAN)
    };
    ValidationReport {
        square,
        min_entry,
        max_row_residual,
        max_col_residual,
        min_diagonal,
        strongly_connected,
        sigma,
    }
}

/// Reachability closure over the positive-entry pattern.
fn strongly_connected(weights: &DMatrix<f64>) -> bool {
    let n = weights.nrows();
    let reach_all = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { weights[(u, v)] } else { weights[(v, u)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(true) && reach_all(false)
}

/// Largest singular value of `A - (1/n) 1 1^T`.
fn deflated_norm(weights: &DMatrix<f64>) -> f64 {
    let n = weights.nrows();
    let deflated = weights.map(|a| a - 1.0 / n as f64);
    deflated
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Validated doubly-stochastic weight matrix of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    weights: DMatrix<f64>,
    sigma: f64,
}

impl CommGraph {
    pub fn from_matrix(weights: DMatrix<f64>) -> Result<Self, NetworkError> {
        let (rows, cols) = weights.shape();
        if rows == 0 {
            return Err(NetworkError::Empty);
        }
        if rows != cols {
            return Err(NetworkError::NotSquare { rows, cols });
        }
        let report = validate(&weights);
        if !report.passed() {
            return Err(NetworkError::Invalid(report));
        }
        Ok(Self { sigma: report.sigma, weights })
    }

    /// Directed ring with self-loops: `a_jj = w`, `a_{j, j+1 mod n} = 1 - w`.
    pub fn ring(n: usize, self_weight: f64) -> Result<Self, NetworkError> {
        if !(self_weight > 0.0 && self_weight < 1.0) {
            return Err(NetworkError::InvalidSelfWeight(self_weight));
        }
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut weights = DMatrix::zeros(n, n);
        for j in 0..n {
            weights[(j, j)] += self_weight;
            weights[(j, (j + 1) % n)] += 1.0 - self_weight;
        }
        Self::from_matrix(weights)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    /// `sigma_A = |A - (1/n) 1 1^T|`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.weights)
    }
}

/// Contraction quantities across all clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub sigmas: Vec<f64>,
    /// Largest per-cluster sigma.
    pub sigma_bar: f64,
    /// `max_i (1 + sigma_i^2) / (1 - sigma_i^2)`.
    pub varsigma: f64,
}

pub fn spectral_quantities(graphs: &[CommGraph]) -> Result<SpectralSummary, NetworkError> {
    let sigmas: Vec<f64> = graphs.iter().map(CommGraph::sigma).collect();
    if let Some((cluster, &sigma)) = sigmas.iter().enumerate().find(|(_, s)| !(**s < 1.0)) {
        return Err(NetworkError::NotContracting { cluster, sigma });
    }
    let sigma_bar = sigmas.iter().copied().fold(0.0, f64::max);
    let varsigma = sigmas
        .iter()
        .map(|s| (1.0 + s * s) / (1.0 - s * s))
        .fold(1.0, f64::max);
    Ok(SpectralSummary { sigmas, sigma_bar, varsigma })
}
