//! Plot data of a completed run, as CSV files for external plotting.

use std::path::{Path, PathBuf};

use riskgraph_core::classify::EvaluationReport;

use crate::error::{Result, RunError};
use crate::stages::{write_csv, LabelsFile};

/// Width of the acceleration histogram bins (m/s²).
pub const AX_BIN: f64 = 0.25;

/// Writes `rss_sc.csv`, `ax_histogram.csv`, `accuracy.csv` and one
/// `confusion_{model}.csv` per evaluation into `dir`; returns the paths.
pub fn emit_figure_data(
    dir: &Path,
    labels: &LabelsFile,
    evaluations: &[EvaluationReport],
    digest: &str,
) -> Result<Vec<PathBuf>> {
    if labels.scenes.is_empty() {
        return Err(RunError::data(dir, "labels hold no scenes"));
    }
    let mut written = Vec::new();

    let p = dir.join("rss_sc.csv");
    let rows = labels
        .table
        .iter()
        .map(|s| vec![s.k.to_string(), s.rss.to_string(), s.silhouette.to_string()]);
    write_csv(&p, digest, &["k", "rss", "silhouette"], rows)?;
    written.push(p);

    let p = dir.join("ax_histogram.csv");
    write_csv(
        &p,
        digest,
        &["level", "bin_start", "bin_end", "count"],
        ax_histogram(labels),
    )?;
    written.push(p);

    for e in evaluations {
        let p = dir.join(format!("confusion_{}.csv", e.model));
        let c = &e.confusion;
        let rows = c.classes.iter().enumerate().flat_map(|(t, target)| {
            c.classes.iter().enumerate().map(move |(o, output)| {
                vec![
                    target.to_string(),
                    output.to_string(),
                    c.counts[t][o].to_string(),
                ]
            })
        });
        write_csv(&p, digest, &["target", "output", "count"], rows)?;
        written.push(p);
    }

    let p = dir.join("accuracy.csv");
    let folds = evaluations.iter().map(|e| e.folds).max().unwrap_or(0);
    let mut header = vec![
        String::from("model"),
        "overall_accuracy".into(),
        "mean_accuracy".into(),
    ];
    header.extend((0..folds).map(|f| format!("fold{f}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = evaluations.iter().map(|e| {
        let mut row = vec![
            e.model.clone(),
            e.overall_accuracy.to_string(),
            e.mean_accuracy.to_string(),
        ];
        row.extend(e.fold_accuracies.iter().map(f64::to_string));
        row.resize(3 + folds, String::new());
        row
    });
    write_csv(&p, digest, &header, rows)?;
    written.push(p);
    Ok(written)
}

/// Rows `level, bin_start, bin_end, count` over a common bin range, so
/// every level has the same bins.
fn ax_histogram(labels: &LabelsFile) -> Vec<Vec<String>> {
    let ax = labels.scenes.iter().map(|s| s.response_ax);
    let lo = (ax.clone().fold(f64::INFINITY, f64::min) / AX_BIN).floor() as i64;
    let hi = (ax.fold(f64::NEG_INFINITY, f64::max) / AX_BIN).floor() as i64;
    let bins = (hi - lo + 1) as usize;
    let mut counts = vec![vec![0u64; bins]; labels.level_count as usize];
    for s in &labels.scenes {
        let b = ((s.response_ax / AX_BIN).floor() as i64 - lo) as usize;
        counts[s.level as usize - 1][b] += 1;
    }
    let mut rows = Vec::new();
    for (l, per_level) in counts.iter().enumerate() {
        for (b, &c) in per_level.iter().enumerate() {
            let start = (lo + b as i64) as f64 * AX_BIN;
            rows.push(vec![
                (l + 1).to_string(),
                start.to_string(),
                (start + AX_BIN).to_string(),
                c.to_string(),
            ]);
        }
    }
    rows
}
