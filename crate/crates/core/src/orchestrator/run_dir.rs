use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunConfig, RunReport};
use crate::datasets::{append_jsonl, SampleRecord};
use crate::judges::JudgeVerdict;
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINTS_DIR: &str = "checkpoints";

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub cumulative_valid: u64,
    pub cumulative_attempts: u64,
    pub val_metric: f64,
    pub test_metric: Option<f64>,
    #[serde(rename = "mean_J2")]
    pub mean_j2: Option<f64>,
    pub batch_size: usize,
}

/// One line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub iteration: usize,
    pub episode: u64,
    #[serde(flatten)]
    pub verdict: JudgeVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub digest: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub digest: String,
    pub report: RunReport,
}

/// Files of one run. Every writer stays inside `root`.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates the directory; refuses one that already holds a run.
    pub fn create(root: &Path) -> Result<Self> {
        if root.join(CONFIG_FILE).exists() || root.join(SAMPLES_FILE).exists() {
            return Err(Error::Config(format!("{} already contains a run", root.display())));
        }
        let checkpoints = root.join(CHECKPOINTS_DIR);
        fs::create_dir_all(&checkpoints).map_err(|e| Error::io(&checkpoints, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Config(format!("{} is not a directory", root.display())));
        }
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoint_dir(&self, label: &str) -> PathBuf {
        self.root.join(CHECKPOINTS_DIR).join(label)
    }

    pub fn write_config(&self, config: &RunConfig) -> Result<String> {
        let digest = config.digest()?;
        let body = ResolvedConfig {
            digest: digest.clone(),
            config: config.clone(),
        };
        write_json(&self.path(CONFIG_FILE), &body)?;
        Ok(digest)
    }

    pub fn read_config(&self) -> Result<ResolvedConfig> {
        read_json(&self.path(CONFIG_FILE))
    }

    pub fn append_samples(&self, records: &[SampleRecord]) -> Result<()> {
        append_jsonl(&self.path(SAMPLES_FILE), records)
    }

    pub fn append_verdicts(&self, lines: &[VerdictLine]) -> Result<()> {
        append_jsonl(&self.path(VERDICTS_FILE), lines)
    }

    pub fn write_metrics(&self, rows: &[MetricsRow]) -> Result<()> {
        let path = self.path(METRICS_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn read_metrics(&self) -> Result<Vec<MetricsRow>> {
        let mut r = csv::Reader::from_path(self.path(METRICS_FILE))?;
        Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
    }

    pub fn write_report(&self, report: &RunReport) -> Result<String> {
        let digest = report.digest()?;
        write_json(
            &self.path(REPORT_FILE),
            &ReportFile {
                digest: digest.clone(),
                report: report.clone(),
            },
        )?;
        Ok(digest)
    }

    pub fn read_report(&self) -> Result<ReportFile> {
        read_json(&self.path(REPORT_FILE))
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_columns_are_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let rd = RunDir::create(dir.path()).unwrap();
        let rows = vec![
            MetricsRow {
                iteration: 0,
                cumulative_valid: 0,
                cumulative_attempts: 0,
                val_metric: 2.5,
                test_metric: None,
                mean_j2: None,
                batch_size: 0,
            },
            MetricsRow {
                iteration: 1,
                cumulative_valid: 80,
                cumulative_attempts: 120,
                val_metric: 3.0,
                test_metric: Some(2.9),
                mean_j2: Some(4.0),
                batch_size: 40,
            },
        ];
        rd.write_metrics(&rows).unwrap();
        let text = fs::read_to_string(rd.path(METRICS_FILE)).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "iteration,cumulative_valid,cumulative_attempts,val_metric,test_metric,mean_J2,batch_size"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,0,2.5,,,0");
        assert_eq!(rd.read_metrics().unwrap(), rows);
    }

    #[test]
    fn create_refuses_existing_run() {
        let dir = tempfile::tempdir().unwrap();
        let rd = RunDir::create(dir.path()).unwrap();
        rd.write_config(&RunConfig::desk()).unwrap();
        assert!(RunDir::create(dir.path()).is_err());
        assert!(rd.path(CHECKPOINTS_DIR).is_dir());
        assert_eq!(rd.read_config().unwrap().config, RunConfig::desk());
    }
}
