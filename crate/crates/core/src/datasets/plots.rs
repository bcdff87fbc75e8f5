use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::orchestrator::{MetricsRow, RunDir, RunReport, METRICS_FILE, REPORT_FILE};
use crate::{Error, Result};

pub const PLOTS_DIR: &str = "plots";
pub const CUMULATIVE_CSV: &str = "cumulative.csv";
pub const LOSS_CSV: &str = "loss.csv";
pub const VALIDATION_CSV: &str = "validation.csv";

/// One fine-tuning step in the concatenated loss series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossPoint {
    /// Position in the concatenated series.
    pub step: usize,
    pub iteration: usize,
    pub local_step: usize,
    pub loss: f64,
    /// First step of its iteration.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CumulativeRow {
    iteration: usize,
    cumulative_valid: u64,
    cumulative_attempts: u64,
    val_metric: f64,
    #[serde(rename = "mean_J2")]
    mean_j2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ValidationRow {
    iteration: usize,
    val_metric: f64,
    best: bool,
    early_stop: bool,
}

/// Files written by [`export_plot_data`] and anything that had to be skipped.
#[derive(Debug, Clone, Default)]
pub struct PlotExport {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Every iteration's fine-tuning losses back to back.
pub fn concatenated_losses(report: &RunReport) -> Vec<LossPoint> {
    let mut out = Vec::new();
    for it in &report.iterations {
        for (local_step, &loss) in it.losses.iter().enumerate() {
            out.push(LossPoint {
                step: out.len(),
                iteration: it.iteration,
                local_step,
                loss,
                boundary: local_step == 0,
            });
        }
    }
    out
}

/// For each iteration after the first, whether its first loss exceeds the
/// last loss of the iteration before.
pub fn loss_spikes(report: &RunReport) -> Vec<(usize, bool)> {
    report
        .iterations
        .windows(2)
        .filter_map(|w| {
            let prev = w[0].losses.last()?;
            let first = w[1].losses.first()?;
            Some((w[1].iteration, first > prev))
        })
        .collect()
}

/// Writes plot series under `<run>/plots/`. Missing inputs produce a partial
/// export and warnings rather than an error.
pub fn export_plot_data(run_dir: &Path) -> Result<PlotExport> {
    let rd = RunDir::open(run_dir)?;
    let out_dir = rd.path(PLOTS_DIR);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut export = PlotExport::default();

    let metrics: Option<Vec<MetricsRow>> = match rd.read_metrics() {
        Ok(m) => Some(m),
        Err(e) => {
            export.warnings.push(format!(
                "{METRICS_FILE} unreadable, skipping cumulative and validation series: {e}"
            ));
            None
        }
    };
    let report: Option<RunReport> = match rd.read_report() {
        Ok(r) => Some(r.report),
        Err(e) => {
            export.warnings.push(format!(
                "{REPORT_FILE} unreadable, skipping loss series and early-stop marker: {e}"
            ));
            None
        }
    };

    if let Some(rows) = &metrics {
        let cumulative: Vec<CumulativeRow> = rows
            .iter()
            .map(|r| CumulativeRow {
                iteration: r.iteration,
                cumulative_valid: r.cumulative_valid,
                cumulative_attempts: r.cumulative_attempts,
                val_metric: r.val_metric,
                mean_j2: r.mean_j2,
            })
            .collect();
        export
            .files
            .push(write_csv(&out_dir.join(CUMULATIVE_CSV), &cumulative)?);

        let best = rows
            .iter()
            .fold(None::<&MetricsRow>, |b, r| match b {
                Some(b) if b.val_metric >= r.val_metric => Some(b),
                _ => Some(r),
            })
            .map(|r| r.iteration);
        let stop = report.as_ref().and_then(|r| r.early_stop_iteration);
        let validation: Vec<ValidationRow> = rows
            .iter()
            .map(|r| ValidationRow {
                iteration: r.iteration,
                val_metric: r.val_metric,
                best: Some(r.iteration) == best,
                early_stop: Some(r.iteration) == stop,
            })
            .collect();
        export
            .files
            .push(write_csv(&out_dir.join(VALIDATION_CSV), &validation)?);
    }

    if let Some(report) = &report {
        let losses = concatenated_losses(report);
        if losses.is_empty() {
            export.warnings.push("report holds no fine-tuning losses".into());
        }
        export.files.push(write_csv(&out_dir.join(LOSS_CSV), &losses)?);
    }
    Ok(export)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
