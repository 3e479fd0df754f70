//! Trajectory CSVs, metadata sidecars and sweep summaries.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::algorithm::{MetricsRow, Trajectory};
use crate::game::ClusterLayout;

pub const CSV_HEADER: &str = "t,err_gap,consensus,opt_gap,tracking";
pub const SUMMARY_HEADER: &str = "setting,alpha_max,eps_alpha,fit_rate,plateau";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), fmt_value)
}

/// Position column names `x_<cluster>_<agent>_<component>`, all zero-based.
pub fn position_columns(layout: &ClusterLayout) -> Vec<String> {
    let d = layout.dim();
    (0..layout.total_coords())
        .map(|g| {
            let idx = layout.locate(g).expect("coordinate in range");
            format!("x_{}_{}_{}", idx.cluster, idx.coord / d, idx.coord % d)
        })
        .collect()
}

/// Renders a trajectory; positions are appended when present.
pub fn trajectory_csv(traj: &Trajectory, layout: &ClusterLayout) -> String {
    let with_pos = !traj.positions.is_empty();
    let mut s = String::from(CSV_HEADER);
    if with_pos {
        for c in position_columns(layout) {
            s.push(',');
            s.push_str(&c);
        }
    }
    s.push('\n');
    for (k, r) in traj.rows.iter().enumerate() {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            r.step,
            fmt_opt(r.err_gap),
            fmt_value(r.consensus),
            fmt_opt(r.opt_gap),
            fmt_value(r.tracking)
        );
        if with_pos {
            for v in &traj.positions[k] {
                s.push(',');
                s.push_str(&fmt_value(*v));
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Parses a numeric CSV with a header row.
pub fn parse_csv(text: &str) -> Result<CsvTable, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or("empty file")?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("row {}: {e}", k + 1))?;
        if row.len() != header.len() {
            return Err(format!("row {} has {} fields, expected {}", k + 1, row.len(), header.len()));
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

/// Pointwise mean over runs, truncated to the shortest run.
pub fn mean_trajectory(runs: &[Trajectory]) -> Trajectory {
    let len = runs.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    let count = runs.len() as f64;
    let mean_opt = |f: &dyn Fn(&MetricsRow) -> Option<f64>, t: usize| -> Option<f64> {
        runs.iter()
            .map(|r| f(&r.rows[t]))
            .sum::<Option<f64>>()
            .map(|s| s / count)
    };
    let rows = (0..len)
        .map(|t| MetricsRow {
            step: runs[0].rows[t].step,
            err_gap: mean_opt(&|r| r.err_gap, t),
            consensus: runs.iter().map(|r| r.rows[t].consensus).sum::<f64>() / count,
            opt_gap: mean_opt(&|r| r.opt_gap, t),
            tracking: runs.iter().map(|r| r.rows[t].tracking).sum::<f64>() / count,
        })
        .collect();
    Trajectory { rows, positions: Vec::new() }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub setting: usize,
    pub alpha_max: f64,
    pub eps_alpha: f64,
    pub fit_rate: Option<f64>,
    pub plateau: f64,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.setting,
            fmt_value(r.alpha_max),
            fmt_value(r.eps_alpha),
            fmt_opt(r.fit_rate),
            fmt_value(r.plateau)
        );
    }
    s
}

/// `key: value` metadata lines.
#[derive(Debug, Clone, Default)]
pub struct Sidecar {
    lines: Vec<(String, String)>,
}

impl Sidecar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn push_values(&mut self, key: impl Into<String>, values: &[f64]) {
        let joined: Vec<String> = values.iter().map(|v| fmt_value(*v)).collect();
        self.push(key, joined.join(" "));
    }

    /// Appends `key: value` lines from another rendering, prefixing the keys.
    pub fn extend_text(&mut self, prefix: &str, text: &str) {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once(':') {
                self.push(format!("{prefix}{}", k.trim()), v.trim());
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let mut s = Self::new();
        s.extend_text("", text);
        s
    }
}
