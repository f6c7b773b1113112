use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{CellResult, Method};
use crate::error::{Error, Result};

/// Rendering of a failed cell.
pub const FAILED: &str = "—";

/// Observation horizon of the prediction table.
pub const PREDICTION_HORIZON: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Percentage with two decimals: `0.9030` → `"90.30"`.
pub fn format_accuracy(accuracy: f64) -> String {
    format!("{:.2}", 100.0 * accuracy)
}

/// Accuracies of one table cell across seeds; `None` if any seed failed.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStat {
    pub values: Option<Vec<f64>>,
}

impl CellStat {
    pub fn mean(&self) -> Option<f64> {
        let v = self.values.as_ref()?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Sample standard deviation; zero for a single seed.
    pub fn std(&self) -> Option<f64> {
        let v = self.values.as_ref()?;
        let m = self.mean()?;
        if v.len() < 2 {
            return Some(0.0);
        }
        Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
    }
}

/// Accuracy table: rows are (method, horizon or TTE), columns ROI scales.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    /// Header of the second key column.
    pub row_axis: String,
    pub rows: Vec<(Method, usize)>,
    pub scales: Vec<u32>,
    pub cells: Vec<Vec<CellStat>>,
    /// More than one seed per cell: values carry a spread.
    pub replicated: bool,
}

fn ordered<T: PartialEq + Copy>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in it {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn build(
    title: &str,
    row_axis: &str,
    results: &[&CellResult],
    row_key: impl Fn(&CellResult) -> usize,
) -> Option<Table> {
    if results.is_empty() {
        return None;
    }
    let rows = ordered(results.iter().map(|r| (r.cell.method, row_key(r))));
    let scales = ordered(results.iter().map(|r| r.cell.roi_scale));
    let seeds = ordered(results.iter().map(|r| r.cell.seed));
    let cells = rows
        .iter()
        .map(|&(m, k)| {
            scales
                .iter()
                .map(|&s| {
                    let hits: Vec<&&CellResult> = results
                        .iter()
                        .filter(|r| r.cell.method == m && row_key(r) == k && r.cell.roi_scale == s)
                        .collect();
                    let values = if hits.is_empty() || hits.iter().any(|r| !r.succeeded()) {
                        None
                    } else {
                        Some(hits.iter().map(|r| r.report.as_ref().expect("succeeded").accuracy).collect())
                    };
                    CellStat { values }
                })
                .collect()
        })
        .collect();
    Some(Table {
        title: title.to_string(),
        row_axis: row_axis.to_string(),
        rows,
        scales,
        cells,
        replicated: seeds.len() > 1,
    })
}

/// Classification accuracy: TTE 0 cells, rows method × observation horizon.
pub fn classification_table(results: &[CellResult]) -> Option<Table> {
    let sel: Vec<&CellResult> = results.iter().filter(|r| r.cell.tte == 0).collect();
    build("Classification accuracy (%)", "Obs. Horizon", &sel, |r| r.cell.horizon)
}

/// Prediction accuracy at a fixed observation horizon: TTE > 0 cells, rows
/// method × TTE.
pub fn prediction_table(results: &[CellResult], horizon: usize) -> Option<Table> {
    let sel: Vec<&CellResult> = results
        .iter()
        .filter(|r| r.cell.tte > 0 && r.cell.horizon == horizon)
        .collect();
    build(
        &format!("Prediction accuracy (%). Observation horizon = {horizon}"),
        "TTE",
        &sel,
        |r| r.cell.tte,
    )
}

impl Table {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["Method".to_string(), self.row_axis.clone()];
        for s in &self.scales {
            if self.replicated {
                h.push(format!("x{s}_mean"));
                h.push(format!("x{s}_std"));
            } else {
                h.push(format!("x{s}"));
            }
        }
        h
    }

    fn csv_fields(&self, stat: &CellStat) -> Vec<String> {
        match (stat.mean(), stat.std()) {
            (Some(m), Some(s)) if self.replicated => vec![format_accuracy(m), format_accuracy(s)],
            (Some(m), _) => vec![format_accuracy(m)],
            _ if self.replicated => vec![FAILED.into(), FAILED.into()],
            _ => vec![FAILED.into()],
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![row.0.to_string(), row.1.to_string()];
            for c in cells {
                rec.extend(self.csv_fields(c));
            }
            w.write_record(rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Markdown table; replicated cells read `mean ± std`.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("**{}**\n\n| Method | {} |", self.title, self.row_axis);
        for sc in &self.scales {
            write!(s, " x{sc} |").expect("string write");
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---:|".repeat(self.scales.len()));
        s.push('\n');
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            write!(s, "| {} | {} |", row.0, row.1).expect("string write");
            for c in cells {
                let v = match (c.mean(), c.std()) {
                    (Some(m), Some(sd)) if self.replicated => {
                        format!("{} ± {}", format_accuracy(m), format_accuracy(sd))
                    }
                    (Some(m), _) => format_accuracy(m),
                    _ => FAILED.to_string(),
                };
                write!(s, " {v} |").expect("string write");
            }
            s.push('\n');
        }
        s
    }
}

/// Per-cell confusion matrices, one row per cell, rows of the matrix are
/// true classes.
pub fn cells_csv(results: &[CellResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method", "horizon", "tte", "roi_scale", "seed", "status", "accuracy", "samples"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for t in ["nlc", "llc", "rlc"] {
        for p in ["nlc", "llc", "rlc"] {
            header.push(format!("{t}_as_{p}"));
        }
    }
    header.push("wall_clock_secs".into());
    w.write_record(&header)?;
    for r in results {
        let c = &r.cell;
        let mut rec = vec![
            c.method.to_string(),
            c.horizon.to_string(),
            c.tte.to_string(),
            c.roi_scale.to_string(),
            c.seed.to_string(),
        ];
        match &r.report {
            Some(m) => {
                rec.push("ok".into());
                rec.push(format_accuracy(m.accuracy));
                rec.push(m.samples.to_string());
                rec.extend(m.confusion.iter().flatten().map(u64::to_string));
                rec.push(format!("{:.1}", m.wall_clock_secs));
            }
            None => {
                rec.push("failed".into());
                rec.extend(std::iter::repeat_n(FAILED.to_string(), 12));
            }
        }
        w.write_record(rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Writes the classification table (if any TTE 0 cells), the prediction
/// table (if any TTE > 0 cells at the prediction horizon) and the per-cell
/// confusion CSV into `dir`. Returns the written paths.
pub fn emit_report(results: &[CellResult], dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::Contract("no cell results to report".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let tables = [
        ("classification", classification_table(results)),
        ("prediction", prediction_table(results, PREDICTION_HORIZON)),
    ];
    for (name, table) in tables {
        let Some(t) = table else { continue };
        let (path, body) = match format {
            ReportFormat::Csv => (dir.join(format!("{name}.csv")), t.to_csv()?),
            ReportFormat::Markdown => (dir.join(format!("{name}.md")), t.to_markdown()),
        };
        std::fs::write(&path, body)?;
        written.push(path);
    }
    let path = dir.join("cells.csv");
    std::fs::write(&path, cells_csv(results)?)?;
    written.push(path);
    Ok(written)
}
