use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MetricError;

/// One model's line in a comparison table. Column order matches the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub mse: Option<f64>,
    pub emo3d: f64,
    pub k: usize,
    pub n: usize,
    pub backend: String,
    pub rig: String,
    pub failures: usize,
}

/// Best (lowest Emo3D) first; equal scores ordered by model name.
pub fn rank_rows(rows: &[ReportRow]) -> Result<Vec<ReportRow>, MetricError> {
    if rows.is_empty() {
        return Err(MetricError::Parameter("nothing to report".into()));
    }
    let mut ranked = rows.to_vec();
    ranked.sort_by(|a, b| a.emo3d.total_cmp(&b.emo3d).then_with(|| a.model.cmp(&b.model)));
    Ok(ranked)
}

/// Aligned plain-text table with Model, MSE and Emo3D columns, ranked.
pub fn format_table(rows: &[ReportRow]) -> Result<String, MetricError> {
    let ranked = rank_rows(rows)?;
    let cells: Vec<[String; 3]> = ranked
        .iter()
        .map(|r| {
            [r.model.clone(), r.mse.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()), format!("{:.3}", r.emo3d)]
        })
        .collect();
    let header = ["Model".to_string(), "MSE".to_string(), "Emo3D".to_string()];
    let mut widths = header.clone().map(|h| h.len());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[String; 3]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}",
            row[0],
            row[1],
            row[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        );
    };
    line(&mut out, &header);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 4));
    for row in &cells {
        line(&mut out, row);
    }
    Ok(out)
}

pub fn write_report_csv<W: Write>(writer: W, rows: &[ReportRow]) -> Result<(), MetricError> {
    let ranked = rank_rows(rows)?;
    let mut w = csv::Writer::from_writer(writer);
    for r in &ranked {
        w.serialize(r).map_err(|e| MetricError::Parameter(format!("csv write: {e}")))?;
    }
    w.flush().map_err(|e| MetricError::Parameter(format!("csv write: {e}")))?;
    Ok(())
}

pub fn read_report_csv<R: Read>(reader: R) -> Result<Vec<ReportRow>, MetricError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<Vec<ReportRow>, _>>()
        .map_err(|e| MetricError::Parameter(format!("csv read: {e}")))
}
