//! Quadratic games stored as TOML.
//!
//! ```toml
//! sizes = [2, 1]
//! dim = 1
//!
//! [[agent]]
//! cluster = 0
//! index = 0
//! q = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]   # row-major, (nd) x (nd)
//! b = [1.0, 0.0, 0.0]
//! c = 0.0
//! ```
//!
//! Cluster and agent indices are zero-based. Every agent must appear exactly once.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::config::{parse_toml, ConfigError};
use crate::game::{ClusterLayout, Game, QuadraticCost, QuadraticGame};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    sizes: Vec<usize>,
    dim: usize,
    agent: Vec<RawAgent>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    cluster: usize,
    index: usize,
    q: Vec<f64>,
    b: Vec<f64>,
    #[serde(default)]
    c: f64,
}

pub fn parse_game(source: &str) -> Result<QuadraticGame, ConfigError> {
    let raw: RawGame = parse_toml(source)?;
    let layout = ClusterLayout::new(raw.sizes.clone(), raw.dim)
        .map_err(|e| ConfigError::new("sizes", e.to_string()).locate(source))?;
    let nd = layout.total_coords();
    let mut slots: Vec<Vec<Option<QuadraticCost>>> =
        raw.sizes.iter().map(|&n| (0..n).map(|_| None).collect()).collect();
    for (k, a) in raw.agent.into_iter().enumerate() {
        let at = |msg: String| ConfigError::general(format!("agent entry {k}: {msg}"));
        layout.check_agent(a.cluster, a.index).map_err(|e| at(e.to_string()))?;
        if a.q.len() != nd * nd || a.b.len() != nd {
            return Err(at(format!("q needs {} entries and b needs {nd}", nd * nd)));
        }
        let cost = QuadraticCost::new(
            DMatrix::from_row_slice(nd, nd, &a.q),
            DVector::from_vec(a.b),
            a.c,
        )
        .map_err(|e| at(e.to_string()))?;
        let slot = &mut slots[a.cluster][a.index];
        if slot.is_some() {
            return Err(at(format!("agent ({}, {}) given twice", a.cluster, a.index)));
        }
        *slot = Some(cost);
    }
    let mut costs = Vec::with_capacity(slots.len());
    for (i, cluster) in slots.into_iter().enumerate() {
        let mut row = Vec::with_capacity(cluster.len());
        for (j, c) in cluster.into_iter().enumerate() {
            row.push(c.ok_or_else(|| ConfigError::general(format!("agent ({i}, {j}) is missing")))?);
        }
        costs.push(row);
    }
    QuadraticGame::new(layout, costs).map_err(|e| ConfigError::general(e.to_string()))
}

pub fn load_game(path: &std::path::Path) -> Result<QuadraticGame, ConfigError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
    parse_game(&source).map_err(|e| ConfigError {
        message: format!("{}: {}", path.display(), e.message),
        ..e
    })
}

/// Serializes a game; `parse_game` reads it back exactly.
pub fn write_game(game: &QuadraticGame) -> String {
    let layout = game.layout();
    let list = |v: &mut dyn Iterator<Item = f64>| {
        v.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
    };
    let mut s = String::new();
    let sizes: Vec<String> = layout.sizes().iter().map(|n| n.to_string()).collect();
    let _ = writeln!(s, "sizes = [{}]\ndim = {}", sizes.join(", "), layout.dim());
    for (i, cluster) in game.costs().iter().enumerate() {
        for (j, c) in cluster.iter().enumerate() {
            let q = c.q();
            let rows = (0..q.nrows()).flat_map(|r| (0..q.ncols()).map(move |k| q[(r, k)]));
            let _ = writeln!(s, "\n[[agent]]\ncluster = {i}\nindex = {j}");
            let _ = writeln!(s, "q = [{}]", list(&mut rows.into_iter()));
            let _ = writeln!(s, "b = [{}]", list(&mut c.b().iter().copied()));
            let _ = writeln!(s, "c = {:?}", c.c());
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::build_connectivity_game;

    #[test]
    fn round_trip_is_exact() {
        let game = build_connectivity_game(3, 2, 2).unwrap();
        let back = parse_game(&write_game(&game)).unwrap();
        assert_eq!(back.layout(), game.layout());
        for (a, b) in back.costs().iter().flatten().zip(game.costs().iter().flatten()) {
            assert_eq!(a.q(), b.q());
            assert_eq!(a.b(), b.b());
            assert_eq!(a.c(), b.c());
        }
    }

    #[test]
    fn rejects_missing_and_duplicate_agents() {
        let one = "[[agent]]\ncluster = 0\nindex = 0\nq = [1.0, 0.0, 0.0, 1.0]\nb = [0.0, 0.0]\n";
        let src = format!("sizes = [1, 1]\ndim = 1\n{one}");
        assert!(parse_game(&src).unwrap_err().message.contains("missing"));
        let src = format!("sizes = [1, 1]\ndim = 1\n{one}{one}");
        assert!(parse_game(&src).unwrap_err().message.contains("twice"));
    }

    #[test]
    fn rejects_wrong_sizes() {
        let src = "sizes = [1]\ndim = 1\n[[agent]]\ncluster = 0\nindex = 0\nq = [1.0, 0.0]\nb = [0.0]\n";
        assert!(parse_game(src).is_err());
        let src = "sizes = [1]\ndim = 1\n[[agent]]\ncluster = 0\nindex = 3\nq = [1.0]\nb = [0.0]\n";
        assert!(parse_game(src).is_err());
    }
}
