//! Equilibrium solve for quadratic games and the convergence certificate.
//!
//! The error triple `Psi_t = (consensus, |ybar - x*|^2, tracking)` obeys
//! `Psi_{t+1} <= M Psi_t + Upsilon` in expectation. The entries of `M` and
//! `Upsilon` are built from fifteen constants `m_1..m_15` that depend on the
//! game (`n`, `L`, `chi`, `G`, `mu`), the networks (`sigma_bar`, `varsigma`)
//! and the step-sizes. A positive vector `nu` with `M nu < nu` certifies
//! `rho(M) < 1`, and the steady-state bound is `(I - M)^{-1} Upsilon`.
//!
//! Counting constants treat every scalar coordinate as one agent
//! coordinate: `n = sum_i n_i d`, `n_s = sum_i (n_i d)^2`, `n_c = sum_i (n_i d)^3`.

use std::fmt;

use nalgebra::{DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::algorithm::StepSizes;
use crate::game::{Game, GameError, QuadraticGame};
use crate::network::{spectral_quantities, CommGraph, NetworkError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("game mapping is not strongly monotone (chi = {chi:e})")]
    NotStronglyMonotone { chi: f64 },
    #[error("gamma = {gamma:e} outside (0, {max:e}]")]
    InvalidGamma { gamma: f64, max: f64 },
    #[error("step-size heterogeneity {eps:.6} is not below chi / (2 sqrt(n) L) = {bound:.6e}")]
    HeterogeneityViolation { eps: f64, bound: f64 },
    #[error("spectral radius {rho} of M is not below 1")]
    NoCertificate { rho: f64 },
    #[error("equilibrium residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Residual tolerance on `|Phi(x*)|`.
pub const NE_RESIDUAL_TOL: f64 = 1e-10;

/// Unique equilibrium of a strongly monotone quadratic game, i.e. the root of
/// the affine game mapping `J x + Phi(0)`.
pub fn solve_ne(game: &QuadraticGame) -> Result<DVector<f64>, AnalysisError> {
    let chi = game.monotonicity();
    if !(chi > 0.0) {
        return Err(AnalysisError::NotStronglyMonotone { chi });
    }
    let jac = game.jacobian();
    let offset = game.mapping_offset();
    let lu = jac.clone().lu();
    let mut x = lu.solve(&(-&offset)).ok_or(AnalysisError::NotStronglyMonotone { chi })?;
    // one refinement pass
    let residual = &jac * &x + &offset;
    if let Some(dx) = lu.solve(&residual) {
        x -= dx;
    }
    let residual = game.game_mapping(x.as_slice())?.norm();
    let scale = offset.norm().max(1.0);
    if residual > NE_RESIDUAL_TOL * scale {
        return Err(AnalysisError::Residual(residual));
    }
    Ok(x)
}

/// Upper bound on the distance between the equilibria of the smoothed and the
/// original game: `n (n+3)^{3/2} L gamma mu / (2 (1 - sqrt(1 - gamma chi)))`.
pub fn ne_gap_bound(lipschitz: f64, chi: f64, n: usize, mu: f64, gamma: f64) -> Result<f64, AnalysisError> {
    let n = n as f64;
    let max = chi / (n * n * lipschitz * lipschitz);
    if !(gamma > 0.0 && gamma <= max) {
        return Err(AnalysisError::InvalidGamma { gamma, max });
    }
    let denom = 2.0 * (1.0 - (1.0 - gamma * chi).max(0.0).sqrt());
    Ok(n * (n + 3.0).powf(1.5) * lipschitz * gamma * mu / denom)
}

/// Largest admissible `gamma` for [`ne_gap_bound`].
pub fn default_gamma(lipschitz: f64, chi: f64, n: usize) -> f64 {
    let n = n as f64;
    chi / (n * n * lipschitz * lipschitz)
}

/// Problem constants entering the certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConstants {
    /// Total number of scalar coordinates.
    pub n: usize,
    pub n_s: usize,
    pub n_c: usize,
    pub lipschitz: f64,
    pub chi: f64,
    /// `max_{i,j} |grad f^i_j(x*)|`.
    pub g: f64,
    pub sigma_bar: f64,
    pub varsigma: f64,
    pub mu: f64,
}

pub fn compute_constants(
    game: &QuadraticGame,
    graphs: &[CommGraph],
    mu: f64,
) -> Result<GameConstants, AnalysisError> {
    let layout = game.layout();
    let chi = game.monotonicity();
    if !(chi > 0.0) {
        return Err(AnalysisError::NotStronglyMonotone { chi });
    }
    let star = solve_ne(game)?;
    let g = game
        .costs()
        .iter()
        .flatten()
        .map(|c| c.gradient(star.as_slice()).norm())
        .fold(0.0, f64::max);
    let spectral = spectral_quantities(graphs)?;
    let widths = (0..layout.clusters()).map(|i| layout.cluster_coords(i));
    Ok(GameConstants {
        n: layout.total_coords(),
        n_s: widths.clone().map(|w| w * w).sum(),
        n_c: widths.map(|w| w * w * w).sum(),
        lipschitz: game.lipschitz(),
        chi,
        g,
        sigma_bar: spectral.sigma_bar,
        varsigma: spectral.varsigma,
        mu,
    })
}

/// The constants `m_1..m_15`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m5: f64,
    pub m6: f64,
    pub m7: f64,
    pub m8: f64,
    pub m9: f64,
    pub m10: f64,
    pub m11: f64,
    pub m12: f64,
    pub m13: f64,
    pub m14: f64,
    pub m15: f64,
}

impl MConstants {
    pub fn new(c: &GameConstants, heterogeneity: f64) -> Self {
        let n = c.n as f64;
        let ns = c.n_s as f64;
        let nc = c.n_c as f64;
        let (l2, s, sb2) = (c.lipschitz.powi(2), c.varsigma, c.sigma_bar.powi(2));
        let g2 = c.g * c.g;
        let mu2l2 = c.mu * c.mu * l2;
        let n4 = n + 4.0;
        let n4c = n4.powi(3);

        let m1 = (1.0 - sb2) / 2.0;
        let m2 = 24.0 * n4 * nc * s * l2;
        let m3 = 2.0 * s;
        let m4 = n * n * l2 / c.chi;
        let m5 = 12.0 * n * n4 * l2;
        let m6 = c.chi - 2.0 * n.sqrt() * c.lipschitz * heterogeneity;
        let base = 24.0 * n4 * ns * s * l2;
        let m7 = 12.0 * n4 * ns * s * l2 * (3.0 + sb2);
        let m8 = base * m4;
        let m9 = base * (m2 + m5);
        let m10 = 48.0 * n4 * ns * s * l2;
        let m11 = s * m10;
        let m12 = 24.0 * n4 * nc * s * g2 + 6.0 * n4c * nc * s * mu2l2;
        let m13 = 12.0 * n * n4 * g2 + 3.0 * n * n4c * mu2l2;
        let m14 = 48.0 * n4 * ns * s * g2 + 12.0 * n4c * ns * s * mu2l2;
        let m15 = base * (m12 + m13);
        Self { m1, m2, m3, m4, m5, m6, m7, m8, m9, m10, m11, m12, m13, m14, m15 }
    }

    pub fn as_array(&self) -> [f64; 15] {
        [
            self.m1, self.m2, self.m3, self.m4, self.m5, self.m6, self.m7, self.m8, self.m9, self.m10,
            self.m11, self.m12, self.m13, self.m14, self.m15,
        ]
    }
}

/// Everything needed to decide whether a step-size configuration is covered
/// by the linear-convergence guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCertificate {
    pub m: MConstants,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// `min(alpha1, alpha2, alpha3, 1/m6, 1)`.
    pub alpha_bound: f64,
    /// `chi / (2 sqrt(n) L)`.
    pub eps_bound: f64,
    pub alpha_max: f64,
    pub alpha_bar: f64,
    pub heterogeneity: f64,
    pub nu: Vector3<f64>,
    pub matrix: Matrix3<f64>,
    pub upsilon: Vector3<f64>,
    pub spectral_radius: f64,
}

impl ConvergenceCertificate {
    pub fn step_ok(&self) -> bool {
        self.alpha_max < self.alpha_bound
    }

    pub fn heterogeneity_ok(&self) -> bool {
        self.heterogeneity < self.eps_bound
    }

    /// Both sufficient conditions hold.
    pub fn holds(&self) -> bool {
        self.step_ok() && self.heterogeneity_ok()
    }

    /// `M nu` divided elementwise by `nu`.
    pub fn nu_ratios(&self) -> Vector3<f64> {
        (self.matrix * self.nu).component_div(&self.nu)
    }

    pub fn matrix_nonnegative(&self) -> bool {
        self.matrix.iter().all(|v| *v >= 0.0)
    }
}

pub fn certificate(constants: &GameConstants, steps: &StepSizes) -> Result<ConvergenceCertificate, AnalysisError> {
    let n = constants.n as f64;
    let eps = steps.heterogeneity();
    let eps_bound = constants.chi / (2.0 * n.sqrt() * constants.lipschitz);
    let m = MConstants::new(constants, eps);
    if !(m.m6 > 0.0) {
        return Err(AnalysisError::HeterogeneityViolation { eps, bound: eps_bound });
    }
    let MConstants { m1, m2, m3, m4, m5, m6, m7, m8, m9, m10, m11, m12, m13, m14, m15 } = m;

    let d1 = 4.0 * n * m4 * m10 + 2.0 * m6 * m7 + 2.0 * m6 * m8;
    let nu1 = m1 * m6 / d1;
    let nu2 = 2.0 * n * m1 * m4 / d1;

    let alpha1 = (m1 * m1 * m6
        / (m1 * m2 * m6 + 2.0 * n * m1 * m2 * m4 + m3 * d1))
        .sqrt();
    let alpha2 = m1 * m4 * m6 / (m1 * m5 * m6 + 2.0 * n * m1 * m4 * m5);
    let alpha3 = (m1 * (2.0 * n * m4 * m10 + m6 * m7 + m6 * m8)
        / (m1 * m6 * m9 + 2.0 * n * m1 * m4 * m9 + m11 * d1))
        .sqrt();
    let alpha_bound = [alpha1, alpha2, alpha3, 1.0 / m6, 1.0].into_iter().fold(f64::INFINITY, f64::min);

    let a = steps.alpha_max();
    let abar = steps.alpha_bar();
    let a2 = a * a;
    #[rustfmt::skip]
    let matrix = Matrix3::new(
        1.0 - m1 + m2 * a2,            m2 * a2,              m3 * a2,
        m4 * a + m5 * a2,              1.0 - m6 * abar + m5 * a2, 0.0,
        m7 + m8 * a + m9 * a2,         m10 + m9 * a2,        1.0 - m1 + m11 * a2,
    );
    let upsilon = Vector3::new(m12 * a2, m13 * a2, m14 + m15 * a2);

    Ok(ConvergenceCertificate {
        m,
        alpha1,
        alpha2,
        alpha3,
        alpha_bound,
        eps_bound,
        alpha_max: a,
        alpha_bar: abar,
        heterogeneity: eps,
        nu: Vector3::new(nu1, nu2, 1.0),
        matrix,
        upsilon,
        spectral_radius: spectral_radius(&matrix),
    })
}

/// Largest eigenvalue modulus.
///
/// Entries of `M` span more than thirty orders of magnitude, so the matrix is
/// balanced by a diagonal similarity before the eigenvalue solve.
pub fn spectral_radius(m: &Matrix3<f64>) -> f64 {
    balance(m).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn balance(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut b = *m;
    for _ in 0..50 {
        let mut changed = false;
        for i in 0..3 {
            let (mut r, mut c) = (0.0, 0.0);
            for j in (0..3).filter(|&j| j != i) {
                r += b[(i, j)].abs();
                c += b[(j, i)].abs();
            }
            if r == 0.0 || c == 0.0 {
                continue;
            }
            let f = (r / c).sqrt();
            if (f - 1.0).abs() > 1e-3 {
                changed = true;
                for j in 0..3 {
                    b[(j, i)] *= f;
                    b[(i, j)] /= f;
                }
            }
        }
        if !changed {
            break;
        }
    }
    b
}

/// Classical adjugate of a 3x3 matrix.
pub fn adjugate(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
    #[rustfmt::skip]
    let adj = Matrix3::new(
         c(1, 2, 1, 2), -c(0, 2, 1, 2),  c(0, 1, 1, 2),
        -c(1, 2, 0, 2),  c(0, 2, 0, 2), -c(0, 1, 0, 2),
         c(1, 2, 0, 1), -c(0, 2, 0, 1),  c(0, 1, 0, 1),
    );
    adj
}

/// Steady-state bounds on the three error components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauBound {
    pub consensus: f64,
    pub opt_gap: f64,
    pub tracking: f64,
}

impl PlateauBound {
    /// Bound on `limsup E|x_t - x*_mu|^2 <= 2 consensus + 2 opt_gap`.
    pub fn action_gap_sq(&self) -> f64 {
        2.0 * self.consensus + 2.0 * self.opt_gap
    }
}

/// `(I - M)^{-1} Upsilon`, written through the adjugate of `I - M`.
pub fn plateau_bound(cert: &ConvergenceCertificate) -> Result<PlateauBound, AnalysisError> {
    if !(cert.spectral_radius < 1.0) {
        return Err(AnalysisError::NoCertificate { rho: cert.spectral_radius });
    }
    let b = Matrix3::identity() - cert.matrix;
    let adj = adjugate(&b);
    let det = (b.row(0) * adj.column(0))[(0, 0)];
    let v = adj * cert.upsilon / det;
    Ok(PlateauBound { consensus: v[0], opt_gap: v[1], tracking: v[2] })
}

impl fmt::Display for GameConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n: {}", self.n)?;
        writeln!(f, "n_s: {}", self.n_s)?;
        writeln!(f, "n_c: {}", self.n_c)?;
        writeln!(f, "L: {:.10e}", self.lipschitz)?;
        writeln!(f, "chi: {:.10e}", self.chi)?;
        writeln!(f, "G: {:.10e}", self.g)?;
        writeln!(f, "sigma_bar: {:.10e}", self.sigma_bar)?;
        writeln!(f, "varsigma: {:.10e}", self.varsigma)?;
        writeln!(f, "mu: {:.10e}", self.mu)
    }
}

impl fmt::Display for ConvergenceCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |ok: bool| if ok { "pass" } else { "fail" };
        for (k, v) in self.m.as_array().iter().enumerate() {
            writeln!(f, "m{}: {:.10e}", k + 1, v)?;
        }
        writeln!(f, "alpha1: {:.10e}", self.alpha1)?;
        writeln!(f, "alpha2: {:.10e}", self.alpha2)?;
        writeln!(f, "alpha3: {:.10e}", self.alpha3)?;
        writeln!(f, "alpha_bound: {:.10e}", self.alpha_bound)?;
        writeln!(f, "alpha_max: {:.10e}", self.alpha_max)?;
        writeln!(f, "alpha_bar: {:.10e}", self.alpha_bar)?;
        writeln!(f, "alpha_check: {}", flag(self.step_ok()))?;
        writeln!(f, "eps_alpha: {:.4}", self.heterogeneity)?;
        writeln!(f, "eps_bound: {:.10e}", self.eps_bound)?;
        writeln!(f, "eps_check: {}", flag(self.heterogeneity_ok()))?;
        writeln!(f, "nu: {:.10e}, {:.10e}, {:.10e}", self.nu[0], self.nu[1], self.nu[2])?;
        let r = self.nu_ratios();
        writeln!(f, "m_nu_ratio: {:.10e}, {:.10e}, {:.10e}", r[0], r[1], r[2])?;
        writeln!(f, "rho_m: {:.10e}", self.spectral_radius)?;
        writeln!(f, "certificate: {}", flag(self.holds()))
    }
}

impl fmt::Display for PlateauBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "plateau_consensus: {:.10e}", self.consensus)?;
        writeln!(f, "plateau_opt_gap: {:.10e}", self.opt_gap)?;
        writeln!(f, "plateau_tracking: {:.10e}", self.tracking)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{build_connectivity_game, ClusterLayout, QuadraticCost};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn baseline_constants() -> GameConstants {
        let game = build_connectivity_game(3, 4, 2).unwrap();
        compute_constants(&game, &vec![CommGraph::ring(4, 0.5).unwrap(); 3], 1e-4).unwrap()
    }

    fn random_game(rng: &mut ChaCha8Rng, sizes: Vec<usize>) -> QuadraticGame {
        let layout = ClusterLayout::new(sizes, 1).unwrap();
        let nd = layout.total_coords();
        let costs = layout
            .sizes()
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|_| {
                        let p = DMatrix::from_fn(nd, nd, |_, _| rng.random_range(-0.3..0.3));
                        let q = &p * p.transpose() / nd as f64 + DMatrix::identity(nd, nd);
                        let b = DVector::from_fn(nd, |_, _| rng.random_range(-1.0..1.0));
                        QuadraticCost::new(q, b, rng.random_range(-1.0..1.0)).unwrap()
                    })
                    .collect()
            })
            .collect();
        QuadraticGame::new(layout, costs).unwrap()
    }

    #[test]
    fn connectivity_equilibrium_is_minus_half() {
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let x = solve_ne(&game).unwrap();
        assert!(x.iter().all(|v| (v + 0.5).abs() < 1e-12));
        assert!(game.game_mapping(x.as_slice()).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn decoupled_equilibrium_is_per_agent_minimum() {
        // f = |x_j - c_j|^2 expands to Q = e_j e_j^T, b = -2 c_j e_j.
        let layout = ClusterLayout::new(vec![2, 1], 2).unwrap();
        let target = [0.3, -1.0, 2.0, 0.5, -0.7, 1.1];
        let mut costs = vec![];
        for i in 0..2 {
            let mut family = vec![];
            for j in 0..layout.agents(i) {
                let mut q = DMatrix::zeros(6, 6);
                let mut b = DVector::zeros(6);
                let mut c = 0.0;
                for s in 0..2 {
                    let g = layout.cluster_offset(i) + j * 2 + s;
                    q[(g, g)] = 1.0;
                    b[g] = -2.0 * target[g];
                    c += target[g] * target[g];
                }
                family.push(QuadraticCost::new(q, b, c).unwrap());
            }
            costs.push(family);
        }
        let game = QuadraticGame::new(layout, costs).unwrap();
        let x = solve_ne(&game).unwrap();
        for (a, b) in x.iter().zip(target) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_games_solve_to_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let sizes = (0..rng.random_range(2..5)).map(|_| rng.random_range(1..5)).collect();
            let game = random_game(&mut rng, sizes);
            let x = solve_ne(&game).unwrap();
            assert!(game.game_mapping(x.as_slice()).unwrap().norm() <= 1e-10);
        }
    }

    #[test]
    fn indefinite_game_is_rejected() {
        let layout = ClusterLayout::new(vec![1, 1], 1).unwrap();
        let neg = QuadraticCost::new(-DMatrix::identity(2, 2), DVector::zeros(2), 0.0).unwrap();
        let game = QuadraticGame::new(layout, vec![vec![neg.clone()], vec![neg]]).unwrap();
        assert!(matches!(solve_ne(&game), Err(AnalysisError::NotStronglyMonotone { .. })));
    }

    #[test]
    fn ne_gap_bound_properties() {
        let (l, chi, n) = (8.6, 0.85, 24);
        let gamma = default_gamma(l, chi, n);
        assert_eq!(ne_gap_bound(l, chi, n, 0.0, gamma).unwrap(), 0.0);
        let b1 = ne_gap_bound(l, chi, n, 1e-4, gamma).unwrap();
        let b2 = ne_gap_bound(l, chi, n, 2e-4, gamma).unwrap();
        assert!(b1 > 0.0 && b1.is_finite());
        assert!((b2 - 2.0 * b1).abs() < 1e-12 * b2);
        assert!(matches!(ne_gap_bound(l, chi, n, 1e-4, 0.0), Err(AnalysisError::InvalidGamma { .. })));
        assert!(ne_gap_bound(l, chi, n, 1e-4, gamma * 1.01).is_err());
    }

    #[test]
    fn baseline_constants_values() {
        let c = baseline_constants();
        assert_eq!(c.n, 24);
        assert_eq!(c.n_s, 3 * 64);
        assert_eq!(c.n_c, 3 * 512);
        assert!((c.lipschitz - (5.0 + 13f64.sqrt())).abs() < 1e-12);
        let sym = DMatrix::<f64>::from_row_slice(3, 3, &[4.0, -1.0, -1.0, -1.0, 6.0, -1.0, -1.0, -1.0, 8.0]) / 4.0;
        assert!((c.chi - sym.symmetric_eigenvalues().min()).abs() < 1e-12);
        assert!(c.g < 1e-12);
        assert!((c.varsigma - 3.0).abs() < 1e-10);
    }

    #[test]
    fn scalar_counting_constants() {
        let game = build_connectivity_game(3, 4, 1).unwrap();
        let c = compute_constants(&game, &vec![CommGraph::ring(4, 0.5).unwrap(); 3], 1e-4).unwrap();
        assert_eq!((c.n, c.n_s, c.n_c), (12, 48, 192));
    }

    #[test]
    fn identity_game_constants() {
        let layout = ClusterLayout::new(vec![3, 3], 1).unwrap();
        let id = QuadraticCost::new(DMatrix::identity(6, 6), DVector::zeros(6), 0.0).unwrap();
        let game = QuadraticGame::new(layout, vec![vec![id.clone(); 3], vec![id; 3]]).unwrap();
        let c = compute_constants(&game, &vec![CommGraph::ring(3, 0.5).unwrap(); 2], 0.0).unwrap();
        assert!((c.lipschitz - 2.0).abs() < 1e-12);
        assert!((c.chi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_heterogeneity_violates_region() {
        let c = baseline_constants();
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let steps = StepSizes::new(vec![0.1, 0.08, 0.06], game.layout()).unwrap();
        match certificate(&c, &steps) {
            Err(AnalysisError::HeterogeneityViolation { eps, bound }) => {
                assert!((eps - 0.2041).abs() < 5e-5);
                assert!((bound - c.chi / (2.0 * 24f64.sqrt() * c.lipschitz)).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_steps_reduce_m6_to_chi() {
        let c = baseline_constants();
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let steps = StepSizes::new(vec![1e-9; 3], game.layout()).unwrap();
        let cert = certificate(&c, &steps).unwrap();
        assert!((cert.m.m6 - c.chi).abs() < 1e-12);
        assert!(cert.heterogeneity_ok());
        assert!(cert.step_ok(), "alpha_bound {}", cert.alpha_bound);
        assert!(cert.spectral_radius < 1.0);
        assert!(cert.nu_ratios().iter().all(|r| *r < 1.0));
    }

    #[test]
    fn m6_decreases_in_heterogeneity() {
        let c = baseline_constants();
        let bound = c.chi / (2.0 * (c.n as f64).sqrt() * c.lipschitz);
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let eps = 2.0 * bound * k as f64 / 49.0;
            let m6 = MConstants::new(&c, eps).m6;
            assert!(m6 < prev);
            assert_eq!(m6 > 0.0, eps < bound);
            prev = m6;
        }
    }

    #[test]
    fn constants_follow_their_definitions() {
        let c = GameConstants {
            n: 2,
            n_s: 2,
            n_c: 2,
            lipschitz: 1.0,
            chi: 0.5,
            g: 0.0,
            sigma_bar: 0.0,
            varsigma: 1.0,
            mu: 0.0,
        };
        let m = MConstants::new(&c, 0.0);
        assert_eq!(m.m1, 0.5);
        assert_eq!(m.m2, 24.0 * 6.0 * 2.0);
        assert_eq!(m.m3, 2.0);
        assert_eq!(m.m4, 8.0);
        assert_eq!(m.m5, 12.0 * 2.0 * 6.0);
        assert_eq!(m.m6, 0.5);
        assert_eq!(m.m7, 12.0 * 6.0 * 2.0 * 3.0);
        assert_eq!(m.m8, 24.0 * 6.0 * 2.0 * 8.0);
        assert_eq!(m.m10, 48.0 * 6.0 * 2.0);
        assert_eq!(m.m11, m.m10);
        assert_eq!([m.m12, m.m13, m.m14, m.m15], [0.0; 4]);
    }

    #[test]
    fn upsilon_vanishes_without_gradient_or_smoothing() {
        let mut c = baseline_constants();
        c.g = 0.0;
        c.mu = 0.0;
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let steps = StepSizes::new(vec![1e-9; 3], game.layout()).unwrap();
        let cert = certificate(&c, &steps).unwrap();
        let p = plateau_bound(&cert).unwrap();
        assert_eq!((p.consensus, p.opt_gap, p.tracking), (0.0, 0.0, 0.0));
    }

    #[test]
    fn plateau_matches_linear_solve_and_closed_form_adjugate() {
        let mut c = baseline_constants();
        c.g = 0.5;
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let steps = StepSizes::new(vec![2e-9, 2e-9, 1.99e-9], game.layout()).unwrap();
        let cert = certificate(&c, &steps).unwrap();
        assert!(cert.holds());
        let p = plateau_bound(&cert).unwrap();
        let b = Matrix3::identity() - cert.matrix;
        // I - M has a diagonal entry of order alpha, so about eight digits are
        // lost to cancellation in either solve
        let direct = b.lu().solve(&cert.upsilon).unwrap();
        for (a, e) in [p.consensus, p.opt_gap, p.tracking].iter().zip(direct.iter()) {
            assert!((a - e).abs() <= 1e-6 * e.abs(), "{a} vs {e}");
        }
        // entries of the adjugate written out in closed form
        let MConstants { m1, m2, m3, m4, m5, m6, m7, m8, m9, m10, m11, .. } = cert.m;
        let (a, abar) = (cert.alpha_max, cert.alpha_bar);
        let a2 = a * a;
        let adj = adjugate(&b);
        let rel = |x: f64, y: f64| (x - y).abs() <= 1e-6 * y.abs().max(1e-300);
        assert!(rel(adj[(0, 0)], (m1 - m11 * a2) * (m6 * abar - m5 * a2)));
        assert!(rel(adj[(0, 1)], a2 * (m2 * (m1 - m11 * a2) + m3 * (m10 + m9 * a2))));
        assert!(rel(adj[(0, 2)], m3 * a2 * (m6 * abar - m5 * a2)));
        assert!(rel(adj[(1, 0)], a * (m1 - m11 * a2) * (m4 + m5 * a)));
        assert!(rel(
            adj[(1, 1)],
            (m1 - m2 * a2) * (m1 - m11 * a2) - m3 * a2 * (m7 + m8 * a + m9 * a2)
        ));
        assert!(rel(adj[(1, 2)], m3 * a2 * a * (m4 + m5 * a)));
    }

    #[test]
    fn radius_is_below_collatz_wielandt_bound() {
        // for a nonnegative matrix rho(M) <= max_k (M nu)_k / nu_k
        let c = baseline_constants();
        let game = build_connectivity_game(3, 4, 2).unwrap();
        for a in [1e-11, 1e-10, 1e-9, 4e-9] {
            let cert = certificate(&c, &StepSizes::new(vec![a; 3], game.layout()).unwrap()).unwrap();
            assert!(cert.matrix_nonnegative());
            let bound = cert.nu_ratios().max();
            assert!(bound < 1.0);
            assert!(cert.spectral_radius <= bound * (1.0 + 1e-12), "{a}: {} > {bound}", cert.spectral_radius);
        }
    }

    #[test]
    fn plateau_order_in_step_size() {
        let mut c = baseline_constants();
        c.g = 1.0;
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let at = |a: f64| {
            let steps = StepSizes::new(vec![a; 3], game.layout()).unwrap();
            plateau_bound(&certificate(&c, &steps).unwrap()).unwrap()
        };
        let (hi, lo) = (at(1e-10), at(5e-11));
        let r1 = lo.consensus / hi.consensus;
        let r2 = lo.opt_gap / hi.opt_gap;
        assert!((r1 - 0.25).abs() < 0.05, "consensus ratio {r1}");
        assert!(r2 <= 0.5 + 1e-3, "opt gap ratio {r2}");
    }

    #[test]
    fn plateau_requires_certificate() {
        let c = baseline_constants();
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let steps = StepSizes::new(vec![0.5; 3], game.layout()).unwrap();
        let cert = certificate(&c, &steps).unwrap();
        assert!(!cert.step_ok());
        assert!(cert.spectral_radius >= 1.0);
        assert!(matches!(plateau_bound(&cert), Err(AnalysisError::NoCertificate { .. })));
    }

    #[test]
    fn spectral_radius_of_known_matrices() {
        let m = Matrix3::new(0.5, 0.0, 0.0, 0.0, -0.9, 0.0, 0.0, 0.0, 0.1);
        assert!((spectral_radius(&m) - 0.9).abs() < 1e-12);
        let rot = Matrix3::new(0.0, -0.8, 0.0, 0.8, 0.0, 0.0, 0.0, 0.0, 0.2);
        assert!((spectral_radius(&rot) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn report_lists_every_constant() {
        let c = baseline_constants();
        let game = build_connectivity_game(3, 4, 2).unwrap();
        let steps = StepSizes::new(vec![1e-9; 3], game.layout()).unwrap();
        let text = certificate(&c, &steps).unwrap().to_string();
        for k in 1..=15 {
            assert!(text.contains(&format!("m{k}: ")));
        }
        assert!(text.contains("rho_m: "));
        assert!(text.contains("certificate: pass"));
        assert!(c.to_string().contains("chi: "));
    }
}
