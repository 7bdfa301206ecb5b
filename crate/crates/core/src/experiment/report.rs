use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, ExperimentReport, ModelKind, ModelSummary, RepetitionRecord};

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: ModelKind,
    pub repetitions: usize,
    pub mean_r2: f64,
    pub std_r2: f64,
    pub mean_k: f64,
    pub mean_fit_seconds: f64,
    pub mean_inference_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub csv: PathBuf,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; zero for fewer than two values.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Per-model means and spreads over the repetitions, in `models` order.
pub fn summarize(models: &[ModelKind], repetitions: &[RepetitionRecord]) -> Vec<ModelSummary> {
    models
        .iter()
        .map(|&model| {
            let results: Vec<_> = repetitions.iter().filter_map(|r| r.results.get(&model)).collect();
            let pick = |f: &dyn Fn(&super::ModelResult) -> f64| results.iter().map(|r| f(r)).collect::<Vec<_>>();
            let r2 = pick(&|r| r.r2_test);
            ModelSummary {
                model,
                mean_r2: mean(&r2),
                std_r2: std_dev(&r2),
                mean_k: mean(&pick(&|r| r.k as f64)),
                mean_fit_seconds: mean(&pick(&|r| r.fit_seconds)),
                mean_inference_seconds: mean(&pick(&|r| r.inference_seconds)),
            }
        })
        .collect()
}

/// Writes `report.json` (every record) and `summary.csv` (one row per model)
/// into `dir`, creating it if needed.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<ReportPaths, ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.to_path_buf(), source })?;
    let json = dir.join("report.json");
    let file = fs::File::create(&json).map_err(|source| ExperimentError::Io { path: json.clone(), source })?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)
        .map_err(|source| ExperimentError::Json { path: json.clone(), source })?;

    let csv_path = dir.join("summary.csv");
    let csv_err = |source| ExperimentError::Csv { path: csv_path.clone(), source };
    let mut writer = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    for s in &report.summary {
        let row = SummaryRow {
            dataset: report.config.dataset.clone(),
            model: s.model,
            repetitions: report.r2_series(s.model).len(),
            mean_r2: s.mean_r2,
            std_r2: s.std_r2,
            mean_k: s.mean_k,
            mean_fit_seconds: s.mean_fit_seconds,
            mean_inference_seconds: s.mean_inference_seconds,
        };
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| ExperimentError::Io { path: csv_path.clone(), source })?;
    Ok(ReportPaths { json, csv: csv_path })
}

pub fn load_report(path: &Path) -> Result<ExperimentReport, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_statistics() {
        assert_eq!(mean(&[]), 0.0);
        assert_eq!(std_dev(&[3.0]), 0.0);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
