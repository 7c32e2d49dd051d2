use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::train::{EpochLog, MetricsReport};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const RESULTS_FILE: &str = "results.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    /// Over the seeds whose test set admitted an AUC.
    pub auc: Option<MeanStd>,
}

impl Summary {
    pub fn of(runs: &[SeedRun]) -> Result<Self> {
        let pick = |f: fn(&MetricsReport) -> f64| runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>();
        let none = || Error::Contract("summary of zero runs".into());
        Ok(Self {
            accuracy: MeanStd::of(&pick(|m| m.accuracy)).ok_or_else(none)?,
            macro_f1: MeanStd::of(&pick(|m| m.macro_f1)).ok_or_else(none)?,
            auc: MeanStd::of(&runs.iter().filter_map(|r| r.metrics.auc).collect::<Vec<_>>()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub minority_classes: Vec<usize>,
    pub metrics: MetricsReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub learning_rate: f64,
    pub synthetic_nodes: usize,
    pub seconds: f64,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomophilyStats {
    pub node: f64,
    pub edge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// With the seed list filled in.
    pub config: ExperimentConfig,
    pub homophily: HomophilyStats,
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

/// `0.7773` → `"77.73"`.
pub fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| io_error(path, e))
}

const METRIC_HEADER: [&str; 6] = ["seed", "accuracy", "macro_f1", "auc", "best_epoch", "epochs_run"];

fn metric_row(r: &SeedRun) -> Vec<String> {
    vec![
        r.seed.to_string(),
        percent(r.metrics.accuracy),
        percent(r.metrics.macro_f1),
        r.metrics.auc.map(percent).unwrap_or_default(),
        r.best_epoch.to_string(),
        r.epochs_run.to_string(),
    ]
}

/// Writes `results.json`, `metrics.csv` (one row per seed, percentages with
/// two decimals) and `epochs_seed<k>.csv` per seed into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write_json(&dir.join(RESULTS_FILE), report)?;
    let path = dir.join(METRICS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(METRIC_HEADER).map_err(|e| io_error(&path, e))?;
    for r in &report.runs {
        w.write_record(metric_row(r)).map_err(|e| io_error(&path, e))?;
    }
    w.flush().map_err(|e| io_error(&path, e))?;
    for r in &report.runs {
        write_epoch_log(&dir.join(format!("epochs_seed{}.csv", r.seed)), &r.log)?;
    }
    Ok(())
}

fn write_epoch_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in log {
        w.serialize(row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Writes `results.json`, `sweep.csv` (one row per point with mean and std
/// per metric) and `metrics.csv` (one row per point and seed).
pub fn emit_sweep(report: &SweepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write_json(&dir.join(RESULTS_FILE), report)?;

    let path = dir.join(SWEEP_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record([
        report.parameter.as_str(),
        "acc_mean",
        "acc_std",
        "f1_mean",
        "f1_std",
        "auc_mean",
        "auc_std",
    ])
    .map_err(|e| io_error(&path, e))?;
    for p in &report.points {
        let s = &p.report.summary;
        let (auc_m, auc_s) = s
            .auc
            .map(|a| (percent(a.mean), percent(a.std)))
            .unwrap_or_default();
        w.write_record([
            p.value.clone(),
            percent(s.accuracy.mean),
            percent(s.accuracy.std),
            percent(s.macro_f1.mean),
            percent(s.macro_f1.std),
            auc_m,
            auc_s,
        ])
        .map_err(|e| io_error(&path, e))?;
    }
    w.flush().map_err(|e| io_error(&path, e))?;

    let path = dir.join(METRICS_FILE);
    let mut w = csv_writer(&path)?;
    let header: Vec<&str> = std::iter::once(report.parameter.as_str()).chain(METRIC_HEADER).collect();
    w.write_record(header).map_err(|e| io_error(&path, e))?;
    for p in &report.points {
        for r in &p.report.runs {
            let row: Vec<String> = std::iter::once(p.value.clone()).chain(metric_row(r)).collect();
            w.write_record(row).map_err(|e| io_error(&path, e))?;
        }
    }
    w.flush().map_err(|e| io_error(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let m = MeanStd::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m.mean, 5.0);
        // sum of squared deviations is 32 over 7 degrees of freedom
        assert!((m.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[0.3]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn percent_has_two_decimals() {
        assert_eq!(percent(0.7773), "77.73");
        assert_eq!(percent(1.0), "100.00");
        assert_eq!(percent(0.0), "0.00");
        assert_eq!(percent(0.12345), "12.35");
    }
}
