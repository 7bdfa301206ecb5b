//! Repeated comparison of a centralized model (CenPLS), a model trained only
//! on the label holder's own block (LocalPLS) and the federated model (P3LS).
//!
//! Data assignment: CenPLS reads every block and Y; the label contributor
//! owns the last feature block together with Y, so LocalPLS reads exactly
//! those two; in P3LS every block is read only by its owner.

mod access;
mod report;
mod split;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use access::{AccessLog, AccessRecord, Instrumented};
pub use report::{emit_report, load_report, summarize, ReportPaths, SummaryRow};
pub use split::{split_dataset, split_indices, Split, MIN_SPLIT_ROWS};

use crate::federation::{Federation, FederationConfig, FederationError, PartyId};
use crate::linalg::{hstack, mean_squared_distance, vsplit};
use crate::masking::OrthogonalMethod;
use crate::pls::{choose_k, max_components, r2_score, validation_curve, PlsError, PlsModel};
use crate::simulator::{LoadedDataset, SimulatedDataset};
use crate::{rng, RealMatrix};

/// Paper-scale repetition count.
pub const DEFAULT_REPETITIONS: usize = 100;
/// Repetition count of the quick mode.
pub const QUICK_REPETITIONS: usize = 10;
pub const DEFAULT_K_MAX: usize = 20;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{rows} rows is too few to split (need at least {min})")]
    TooFewRows { rows: usize, min: usize },
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("repetition {index} failed during {stage}: {source}")]
    Repetition {
        index: usize,
        stage: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: std::path::PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cen,
    Local,
    P3ls,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Cen, ModelKind::Local, ModelKind::P3ls];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cen => "cen",
            ModelKind::Local => "local",
            ModelKind::P3ls => "p3ls",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown model {s:?} (expected cen, local or p3ls)"))
    }
}

/// Vertically partitioned data: feature blocks in party order plus Y.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub name: String,
    pub blocks: Vec<RealMatrix>,
    pub y: RealMatrix,
}

impl ExperimentData {
    pub fn new(name: impl Into<String>, blocks: Vec<RealMatrix>, y: RealMatrix) -> Result<Self, ExperimentError> {
        if blocks.is_empty() {
            return Err(ExperimentError::InvalidConfig("at least one feature block is required".into()));
        }
        if let Some(i) = blocks.iter().position(|b| b.nrows() != y.nrows()) {
            return Err(ExperimentError::InvalidConfig(format!(
                "block X{} has {} rows but Y has {}",
                i + 1,
                blocks[i].nrows(),
                y.nrows()
            )));
        }
        Ok(Self { name: name.into(), blocks, y })
    }

    pub fn from_simulated(name: impl Into<String>, data: &SimulatedDataset) -> Self {
        Self { name: name.into(), blocks: data.x_blocks.clone(), y: data.y.clone() }
    }

    pub fn from_loaded(name: impl Into<String>, data: LoadedDataset) -> Self {
        Self { name: name.into(), blocks: data.x_blocks, y: data.y }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.ncols()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Label echoed into the report.
    pub dataset: String,
    pub repetitions: usize,
    pub seed: u64,
    pub k_max: usize,
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub mask_method: OrthogonalMethod,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, repetitions: usize, seed: u64) -> Self {
        Self {
            dataset: dataset.into(),
            repetitions,
            seed,
            k_max: DEFAULT_K_MAX,
            models: ModelKind::ALL.to_vec(),
            mask_method: OrthogonalMethod::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.repetitions == 0 {
            return Err(ExperimentError::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.k_max == 0 {
            return Err(ExperimentError::InvalidConfig("k_max must be at least 1".into()));
        }
        Ok(())
    }

    fn runs(&self, model: ModelKind) -> bool {
        self.models.contains(&model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    /// Selected number of components.
    pub k: usize,
    /// Validation R² for each scanned `k`.
    pub validation: Vec<(usize, f64)>,
    pub r2_test: f64,
    pub fit_seconds: f64,
    pub inference_seconds: f64,
}

/// Mean squared distances between sign-aligned federated and centralized
/// components. `w`, `p` and `b` hold one value per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDistances {
    pub t: f64,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub q: f64,
    pub b: Vec<f64>,
}

impl ComponentDistances {
    pub fn max(&self) -> f64 {
        [self.t, self.q].into_iter().chain(self.w.iter().chain(&self.p).chain(&self.b).copied()).fold(0.0, f64::max)
    }

    fn mean(all: &[&ComponentDistances]) -> Option<ComponentDistances> {
        let first = all.first()?;
        let n = all.len() as f64;
        let avg = |f: &dyn Fn(&ComponentDistances) -> f64| all.iter().map(|d| f(d)).sum::<f64>() / n;
        let per_block = |f: &dyn Fn(&ComponentDistances) -> &Vec<f64>| {
            (0..f(first).len()).map(|i| all.iter().map(|d| f(d)[i]).sum::<f64>() / n).collect()
        };
        Some(ComponentDistances {
            t: avg(&|d| d.t),
            w: per_block(&|d| &d.w),
            p: per_block(&|d| &d.p),
            q: avg(&|d| d.q),
            b: per_block(&|d| &d.b),
        })
    }
}

/// Per-block contribution scores of the final federated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockContribution {
    pub block: usize,
    /// Share of the total X variance explained through the block.
    pub r2_x: f64,
    /// Fraction of Y the block predicts alone.
    pub r2_xy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub index: usize,
    pub seed: u64,
    /// Training, validation and test sizes.
    pub split: [usize; 3],
    pub results: BTreeMap<ModelKind, ModelResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<ComponentDistances>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contributions: Vec<BlockContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub mean_r2: f64,
    pub std_r2: f64,
    pub mean_k: f64,
    pub mean_fit_seconds: f64,
    pub mean_inference_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub widths: Vec<usize>,
    pub l: usize,
    pub repetitions: Vec<RepetitionRecord>,
    pub summary: Vec<ModelSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_distances: Option<ComponentDistances>,
    pub access: Vec<AccessRecord>,
}

impl ExperimentReport {
    pub fn summary_for(&self, model: ModelKind) -> Option<&ModelSummary> {
        self.summary.iter().find(|s| s.model == model)
    }

    /// Test R² of `model` in every repetition.
    pub fn r2_series(&self, model: ModelKind) -> Vec<f64> {
        self.repetitions.iter().filter_map(|r| r.results.get(&model).map(|m| m.r2_test)).collect()
    }
}

fn stage_err<E: std::error::Error + Send + Sync + 'static>(
    index: usize,
    stage: &'static str,
) -> impl FnOnce(E) -> ExperimentError {
    move |e| ExperimentError::Repetition { index, stage, source: Box::new(e) }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Centralized-style model on the given feature matrix: choose `k` on the
/// validation rows, refit, score on the test rows.
fn run_plain_model(x: [&RealMatrix; 3], y: [&RealMatrix; 3], k_max: usize) -> Result<ModelResult, PlsError> {
    let validation = validation_curve(x[0], y[0], x[1], y[1], k_max)?;
    let k = choose_k(&validation).expect("validation curve is non-empty");
    let (model, fit_seconds) = timed(|| PlsModel::fit(x[0], y[0], k));
    let model = model?;
    let (y_hat, inference_seconds) = timed(|| model.predict(x[2]));
    let r2_test = r2_score(y[2], &y_hat?)?;
    Ok(ModelResult { k, validation, r2_test, fit_seconds, inference_seconds })
}

struct Parts<'a> {
    train: Instrumented<'a>,
    val: Instrumented<'a>,
    test: Instrumented<'a>,
}

impl<'a> Parts<'a> {
    fn all(&self) -> [&Instrumented<'a>; 3] {
        [&self.train, &self.val, &self.test]
    }
}

fn run_cen(parts: &Parts, k_max: usize) -> Result<ModelResult, PlsError> {
    let g = parts.train.g();
    let xs =
        parts.all().map(|p| hstack(&(1..=g).map(|i| p.x(ModelKind::Cen, "central", i).clone()).collect::<Vec<_>>()));
    let ys = parts.all().map(|p| p.y(ModelKind::Cen, "central"));
    run_plain_model([&xs[0], &xs[1], &xs[2]], ys, k_max)
}

fn run_local(parts: &Parts, k_max: usize) -> Result<ModelResult, PlsError> {
    let g = parts.train.g();
    let lc = PartyId::Lc.to_string();
    let xs = parts.all().map(|p| p.x(ModelKind::Local, &lc, g));
    let ys = parts.all().map(|p| p.y(ModelKind::Local, &lc));
    run_plain_model(xs, ys, k_max)
}

/// Each FC reads its own block; the LC reads Y.
fn p3ls_inputs(part: &Instrumented) -> (Vec<RealMatrix>, RealMatrix) {
    let blocks = (1..=part.g()).map(|i| part.x(ModelKind::P3ls, &PartyId::Fc(i).to_string(), i).clone()).collect();
    (blocks, part.y(ModelKind::P3ls, &PartyId::Lc.to_string()).clone())
}

struct P3lsOutcome {
    result: ModelResult,
    federation: Federation,
    contributions: Vec<BlockContribution>,
}

fn run_p3ls(
    parts: &Parts,
    cfg: &ExperimentConfig,
    rep_seed: u64,
    index: usize,
) -> Result<P3lsOutcome, ExperimentError> {
    let (train_x, train_y) = p3ls_inputs(&parts.train);
    let (val_x, val_y) = p3ls_inputs(&parts.val);
    let (test_x, test_y) = p3ls_inputs(&parts.test);
    let widths: Vec<usize> = train_x.iter().map(|b| b.ncols()).collect();
    let (m, l) = train_y.shape();
    let fed_config = |k: usize, label: &str| {
        let mut c = FederationConfig::new(widths.clone(), m, l, k, rng::derive_seed(rep_seed, label));
        c.mask_method = cfg.mask_method;
        c
    };

    let cap = max_components(m, widths.iter().sum());
    let mut validation = Vec::new();
    for k in 1..=cfg.k_max.min(cap) {
        let mut fed = Federation::new(fed_config(k, &format!("p3ls/select/{k}")), train_x.clone(), train_y.clone())
            .map_err(stage_err(index, "p3ls selection"))?;
        match fed.train() {
            Ok(()) => {}
            Err(FederationError::Pls { source: PlsError::RankDeficient { .. }, .. }) if k > 1 => break,
            Err(e) => return Err(stage_err(index, "p3ls selection")(e)),
        }
        let out = fed.infer(&val_x).map_err(stage_err(index, "p3ls selection"))?;
        validation.push((k, r2_score(&val_y, &out.predictions).map_err(stage_err(index, "p3ls selection"))?));
    }
    let k = choose_k(&validation).ok_or_else(|| {
        stage_err(index, "p3ls selection")(PlsError::InvalidComponentCount { requested: cfg.k_max, max: cap })
    })?;

    let mut federation =
        Federation::new(fed_config(k, "p3ls/final"), train_x, train_y).map_err(stage_err(index, "p3ls training"))?;
    let (trained, fit_seconds) = timed(|| federation.train());
    trained.map_err(stage_err(index, "p3ls training"))?;
    federation.contribution().map_err(stage_err(index, "p3ls contribution"))?;
    let contributions = federation
        .fc_shares()
        .and_then(|shares| {
            shares
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let r2_xy = s.r2_xy.ok_or(FederationError::NotTrained)?;
                    Ok(BlockContribution { block: i + 1, r2_x: s.r2_x, r2_xy })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(stage_err(index, "p3ls contribution"))?;
    let (out, inference_seconds) = timed(|| federation.infer(&test_x));
    let out = out.map_err(stage_err(index, "p3ls inference"))?;
    let r2_test = r2_score(&test_y, &out.predictions).map_err(stage_err(index, "p3ls inference"))?;
    Ok(P3lsOutcome {
        result: ModelResult { k, validation, r2_test, fit_seconds, inference_seconds },
        federation,
        contributions,
    })
}

/// Compares the federated shares with a centralized fit at the same `k`,
/// after aligning each component's sign through the scores.
pub fn component_distances(federation: &Federation, central: &PlsModel) -> Result<ComponentDistances, FederationError> {
    let shares = federation.fc_shares()?;
    let lc = federation.lc_share()?;
    let c = central.components();
    let t = &shares[0].t;
    let signs: Vec<f64> =
        (0..t.ncols()).map(|j| if t.column(j).dot(&c.x_scores.column(j)) < 0.0 { -1.0 } else { 1.0 }).collect();
    let align = |m: &RealMatrix| {
        let mut out = m.clone();
        for (j, s) in signs.iter().enumerate() {
            out.column_mut(j).scale_mut(*s);
        }
        out
    };
    let widths: Vec<usize> = shares.iter().map(|s| s.w.nrows()).collect();
    let (w, p, b) = (vsplit(&c.weights, &widths), vsplit(&c.x_loadings, &widths), vsplit(&c.coefficients, &widths));
    Ok(ComponentDistances {
        t: mean_squared_distance(&align(t), &c.x_scores),
        w: shares.iter().zip(&w).map(|(s, w)| mean_squared_distance(&align(&s.w), w)).collect(),
        p: shares.iter().zip(&p).map(|(s, p)| mean_squared_distance(&align(&s.p), p)).collect(),
        q: mean_squared_distance(&align(&lc.q), &c.y_loadings),
        b: shares.iter().zip(&b).map(|(s, b)| mean_squared_distance(&s.b, b)).collect(),
    })
}

fn run_repetition(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    index: usize,
    log: &AccessLog,
    observe: &mut dyn FnMut(usize, &Federation),
) -> Result<RepetitionRecord, ExperimentError> {
    let seed = rng::derive_seed(cfg.seed, &format!("repetition/{index}"));
    let split = split_indices(data.y.nrows(), seed)?;
    let [train, val, test] = [&split.train, &split.validation, &split.test].map(|rows| data.rows(rows));
    let parts = Parts {
        train: Instrumented::new(&train, log),
        val: Instrumented::new(&val, log),
        test: Instrumented::new(&test, log),
    };

    let mut results = BTreeMap::new();
    if cfg.runs(ModelKind::Cen) {
        results.insert(ModelKind::Cen, run_cen(&parts, cfg.k_max).map_err(stage_err(index, "cen"))?);
    }
    if cfg.runs(ModelKind::Local) {
        results.insert(ModelKind::Local, run_local(&parts, cfg.k_max).map_err(stage_err(index, "local"))?);
    }
    let mut distances = None;
    let mut contributions = Vec::new();
    if cfg.runs(ModelKind::P3ls) {
        let outcome = run_p3ls(&parts, cfg, seed, index)?;
        // Reference fit at the federated k; reads all blocks, like CenPLS.
        let g = parts.train.g();
        let x = hstack(&(1..=g).map(|i| parts.train.x(ModelKind::Cen, "central", i).clone()).collect::<Vec<_>>());
        let central = PlsModel::fit(&x, parts.train.y(ModelKind::Cen, "central"), outcome.result.k)
            .map_err(stage_err(index, "distances"))?;
        distances = Some(component_distances(&outcome.federation, &central).map_err(stage_err(index, "distances"))?);
        observe(index, &outcome.federation);
        contributions = outcome.contributions;
        results.insert(ModelKind::P3ls, outcome.result);
    }
    log::info!(
        "repetition {index}: {}",
        results.iter().map(|(m, r)| format!("{m} k={} r2={:.4}", r.k, r.r2_test)).collect::<Vec<_>>().join(", ")
    );
    Ok(RepetitionRecord { index, seed, split: split.sizes(), results, distances, contributions })
}

/// Runs every repetition and aggregates the results. Each repetition uses
/// its own split and protocol seeds derived from the master seed.
pub fn run_experiment(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentReport, ExperimentError> {
    run_experiment_with(cfg, data, &mut |_, _| {})
}

/// [`run_experiment`], handing each repetition's final P3LS federation to
/// `observe` after all four protocol phases have run.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    observe: &mut dyn FnMut(usize, &Federation),
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let log = AccessLog::new();
    let repetitions =
        (0..cfg.repetitions).map(|i| run_repetition(cfg, data, i, &log, observe)).collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&cfg.models, &repetitions);
    let mean_distances =
        ComponentDistances::mean(&repetitions.iter().filter_map(|r| r.distances.as_ref()).collect::<Vec<_>>());
    Ok(ExperimentReport {
        config: cfg.clone(),
        widths: data.widths(),
        l: data.y.ncols(),
        repetitions,
        summary,
        mean_distances,
        access: log.records(),
    })
}

#[cfg(test)]
mod tests;
