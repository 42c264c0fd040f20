//! AUC table: one row per code, one column per feature configuration, and a
//! mean row.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::eval::CellResult;
use crate::features::FeatureConfig;
use crate::ingestion::SsrlCode;
use crate::metrics::bootstrap_mean_ci;

pub const MEAN_ROW: &str = "Mean AUC";

/// `"0.8247 [0.7396, 0.9008]"`.
pub fn format_cell(auc: f64, lo: f64, hi: f64) -> String {
    format!("{auc:.4} [{lo:.4}, {hi:.4}]")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Cell {
    Ok { auc: f64, lo: f64, hi: f64 },
    Unavailable { reason: String },
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Ok { auc, lo, hi } => format_cell(*auc, *lo, *hi),
            Cell::Unavailable { reason } => format!("n/a({reason})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub configs: Vec<FeatureConfig>,
    pub rows: Vec<ReportRow>,
}

fn unavailable(reason: &str) -> Cell {
    Cell::Unavailable { reason: reason.into() }
}

impl ReportTable {
    /// Lays `results` out over all seven codes and five configurations;
    /// cells absent from `results` read `n/a(not_run)`. The mean row averages
    /// the available codes per configuration, with a bootstrap interval that
    /// resamples segments jointly across codes.
    pub fn from_results(results: &[CellResult], resamples: usize, seed: u64) -> Self {
        let configs = FeatureConfig::ALL.to_vec();
        let find = |code: SsrlCode, config: FeatureConfig| results.iter().find(|r| r.code == code && r.config == config);
        let mut rows: Vec<ReportRow> = SsrlCode::ALL
            .iter()
            .map(|&code| ReportRow {
                label: code.display_name().into(),
                cells: configs
                    .iter()
                    .map(|&config| match find(code, config).map(|r| &r.outcome) {
                        Some(Ok(r)) => Cell::Ok { auc: r.auc, lo: r.ci.lo, hi: r.ci.hi },
                        Some(Err(e)) => unavailable(e.reason()),
                        None => unavailable("not_run"),
                    })
                    .collect(),
            })
            .collect();

        let mean_cells = configs
            .iter()
            .map(|&config| {
                let ok: Vec<_> = SsrlCode::ALL
                    .iter()
                    .filter_map(|&code| match find(code, config).map(|r| &r.outcome) {
                        Some(Ok(r)) => Some(r),
                        _ => None,
                    })
                    .collect();
                if ok.is_empty() {
                    return unavailable(if results.iter().any(|r| r.config == config) { "no_results" } else { "not_run" });
                }
                let aligned = ok.iter().all(|r| {
                    r.predictions.len() == ok[0].predictions.len()
                        && r.predictions.iter().zip(&ok[0].predictions).all(|(a, b)| a.key == b.key)
                });
                if !aligned {
                    return unavailable("misaligned_rows");
                }
                let columns: Vec<(Vec<f64>, Vec<bool>)> = ok
                    .iter()
                    .map(|r| (r.predictions.iter().map(|p| p.score).collect(), r.predictions.iter().map(|p| p.label).collect()))
                    .collect();
                let refs: Vec<(&[f64], &[bool])> = columns.iter().map(|(s, l)| (s.as_slice(), l.as_slice())).collect();
                match bootstrap_mean_ci(&refs, resamples, seed) {
                    Ok((auc, ci)) => Cell::Ok { auc, lo: ci.lo, hi: ci.hi },
                    Err(_) => unavailable("degenerate_bootstrap"),
                }
            })
            .collect();
        rows.push(ReportRow { label: MEAN_ROW.into(), cells: mean_cells });
        ReportTable { configs, rows }
    }

    fn header(&self) -> Vec<String> {
        core::iter::once(String::from("code")).chain(self.configs.iter().map(|c| c.as_str().into())).collect()
    }

    pub fn to_csv(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.into()
            }
        };
        let mut out = String::new();
        let lines = core::iter::once(self.header())
            .chain(self.rows.iter().map(|r| core::iter::once(r.label.clone()).chain(r.cells.iter().map(Cell::render)).collect()));
        for line in lines {
            let fields: Vec<String> = line.iter().map(|f| quote(f)).collect();
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    /// Space-padded columns, left aligned.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = alloc::vec![self.header()];
        for r in &self.rows {
            grid.push(core::iter::once(r.label.clone()).chain(r.cells.iter().map(Cell::render)).collect());
        }
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &grid {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c > 0 {
                    line.push_str("  ");
                }
                line.push_str(cell);
                line.extend(core::iter::repeat_n(' ', widths[c] - cell.chars().count()));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out
    }
}
