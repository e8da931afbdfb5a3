//! Machine-readable experiment reports: JSON plus two CSV tables carrying
//! the same values.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::ParticipantOutcome;

pub const SCHEMA_VERSION: u32 = 1;

/// `git describe` of the build, or "unknown" outside a checkout.
pub fn build_id() -> &'static str {
    env!("GRPCOLL_BUILD_ID")
}

/// Accuracies are reported to four decimal places.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub build_id: String,
    /// Full configuration echo.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub runs: Vec<RunRecord>,
    pub participants: Vec<ParticipantRecord>,
    /// Files written alongside the report (image grids).
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Row label, unique within a report (e.g. "grp-dnn/n=40").
    pub run: String,
    pub dataset: String,
    pub scheme: String,
    pub participants: usize,
    pub k: usize,
    pub rho: f64,
    pub epsilon: Option<f64>,
    pub noise_scale: Option<f64>,
    pub condition: Option<f64>,
    pub accuracy: Option<f64>,
    pub min_accuracy: Option<f64>,
    pub mean_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
    pub train_secs: f64,
    pub obfuscation_secs: f64,
    pub bytes_on_wire: u64,
    /// Experiment-specific scalars.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub run: String,
    pub index: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub accuracy: f64,
    pub obfuscation_secs: f64,
    pub bytes_sent: u64,
}

impl ParticipantRecord {
    pub fn from_outcome(run: &str, p: &ParticipantOutcome) -> Self {
        Self {
            run: run.to_string(),
            index: p.index,
            train_samples: p.train_samples,
            test_samples: p.test_samples,
            accuracy: round4(p.accuracy),
            obfuscation_secs: p.obfuscation_secs,
            bytes_sent: p.bytes_sent,
        }
    }
}

const RUN_COLUMNS: [&str; 16] = [
    "run",
    "dataset",
    "scheme",
    "participants",
    "k",
    "rho",
    "epsilon",
    "noise_scale",
    "condition",
    "accuracy",
    "min_accuracy",
    "mean_accuracy",
    "max_accuracy",
    "train_secs",
    "obfuscation_secs",
    "bytes_on_wire",
];

const PARTICIPANT_COLUMNS: [&str; 7] = [
    "run",
    "index",
    "train_samples",
    "test_samples",
    "accuracy",
    "obfuscation_secs",
    "bytes_sent",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Output(e.to_string())
}

impl ExperimentReport {
    pub fn new(
        experiment: &str,
        config: &impl Serialize,
        seeds: BTreeMap<String, u64>,
    ) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            build_id: build_id().to_string(),
            config: serde_json::to_value(config).map_err(|e| Error::Output(e.to_string()))?,
            seeds,
            runs: Vec::new(),
            participants: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn run(&self, label: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.run == label)
    }

    /// Sorted union of metric names over all runs.
    fn metric_names(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self.runs.iter().flat_map(|r| r.metrics.keys()).collect();
        names.into_iter().cloned().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Output(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// One row per run; metrics become `metric:<name>` columns.
    pub fn runs_csv(&self) -> Result<String> {
        let metrics = self.metric_names();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = RUN_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(metrics.iter().map(|m| format!("metric:{m}")));
        w.write_record(header).map_err(csv_err)?;
        for r in &self.runs {
            let mut row = vec![
                r.run.clone(),
                r.dataset.clone(),
                r.scheme.clone(),
                r.participants.to_string(),
                r.k.to_string(),
                r.rho.to_string(),
                opt(r.epsilon),
                opt(r.noise_scale),
                opt(r.condition),
                opt(r.accuracy),
                opt(r.min_accuracy),
                opt(r.mean_accuracy),
                opt(r.max_accuracy),
                r.train_secs.to_string(),
                r.obfuscation_secs.to_string(),
                r.bytes_on_wire.to_string(),
            ];
            row.extend(metrics.iter().map(|m| opt(r.metrics.get(m).copied())));
            w.write_record(&row).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Output(e.to_string()))?)
            .map_err(|e| Error::Output(e.to_string()))
    }

    pub fn participants_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(PARTICIPANT_COLUMNS).map_err(csv_err)?;
        for p in &self.participants {
            w.write_record([
                p.run.clone(),
                p.index.to_string(),
                p.train_samples.to_string(),
                p.test_samples.to_string(),
                p.accuracy.to_string(),
                p.obfuscation_secs.to_string(),
                p.bytes_sent.to_string(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Output(e.to_string()))?)
            .map_err(|e| Error::Output(e.to_string()))
    }

    /// Writes `<experiment>.json`, `<experiment>.csv` and, when there are
    /// per-participant rows, `<experiment>.participants.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = dir.join(format!("{}.json", self.experiment));
        fs::write(&json, self.to_json()?)?;
        written.push(json);
        let csv = dir.join(format!("{}.csv", self.experiment));
        fs::write(&csv, self.runs_csv()?)?;
        written.push(csv);
        if !self.participants.is_empty() {
            let p = dir.join(format!("{}.participants.csv", self.experiment));
            fs::write(&p, self.participants_csv()?)?;
            written.push(p);
        }
        Ok(written)
    }
}

fn parse_opt(cell: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("bad number {cell:?}")))
}

fn parse<T: std::str::FromStr>(cell: &str) -> Result<T> {
    cell.parse()
        .map_err(|_| Error::Format(format!("bad value {cell:?}")))
}

/// Reads back the table written by [`ExperimentReport::runs_csv`].
pub fn runs_from_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    if header.len() < RUN_COLUMNS.len() || header[..RUN_COLUMNS.len()] != RUN_COLUMNS {
        return Err(Error::Format("unexpected run table header".into()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let c = |i: usize| rec.get(i).unwrap_or("");
        let mut metrics = BTreeMap::new();
        for (i, name) in header.iter().enumerate().skip(RUN_COLUMNS.len()) {
            let key = name.strip_prefix("metric:").unwrap_or(name).to_string();
            if let Some(v) = parse_opt(c(i))? {
                metrics.insert(key, v);
            }
        }
        out.push(RunRecord {
            run: c(0).to_string(),
            dataset: c(1).to_string(),
            scheme: c(2).to_string(),
            participants: parse(c(3))?,
            k: parse(c(4))?,
            rho: parse(c(5))?,
            epsilon: parse_opt(c(6))?,
            noise_scale: parse_opt(c(7))?,
            condition: parse_opt(c(8))?,
            accuracy: parse_opt(c(9))?,
            min_accuracy: parse_opt(c(10))?,
            mean_accuracy: parse_opt(c(11))?,
            max_accuracy: parse_opt(c(12))?,
            train_secs: parse(c(13))?,
            obfuscation_secs: parse(c(14))?,
            bytes_on_wire: parse(c(15))?,
            metrics,
        });
    }
    Ok(out)
}

/// Reads back the table written by [`ExperimentReport::participants_csv`].
pub fn participants_from_csv(text: &str) -> Result<Vec<ParticipantRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let c = |i: usize| rec.get(i).unwrap_or("");
        out.push(ParticipantRecord {
            run: c(0).to_string(),
            index: parse(c(1))?,
            train_samples: parse(c(2))?,
            test_samples: parse(c(3))?,
            accuracy: parse(c(4))?,
            obfuscation_secs: parse(c(5))?,
            bytes_sent: parse(c(6))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round4(0.968_749), 0.9687);
        assert_eq!(round4(0.5), 0.5);
        assert_eq!(round4(1.0 / 3.0).to_string(), "0.3333");
    }
}
