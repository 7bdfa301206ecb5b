//! Multistage manufacturing process simulator.
//!
//! Each stage maps its own process variables `X_i` plus a few responses
//! carried over from the previous stage through a sparse quadratic model:
//!
//! ```text
//! Y_i = U_lin A_i + U_qd B_i + V_i,   U_lin = [X_i | Ý_{i−1}]
//! ```
//!
//! `U_qd` holds every square and pairwise product of the `U_lin` columns; it is
//! never materialized, only the non-zero rows of `B_i` are evaluated. Process
//! variables are low rank with a bell-shaped singular spectrum.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::RealMatrix;

/// Fraction of total variance the leading components should carry.
pub const TARGET_EXPLAINED: f64 = 0.90;
/// Number of leading components the target refers to.
pub const TARGET_COMPONENTS: usize = 4;
/// Std of the isotropic noise added to low-rank process variables.
pub const PROCESS_NOISE_STD: f64 = 0.01;
/// Samples per builtin dataset.
pub const BUILTIN_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("invalid dimension: {0}")]
    InvalidDim(String),
    #[error("invalid stage {stage} config: {reason}")]
    InvalidStage { stage: usize, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown dataset {0}, builtin datasets are 1..=5")]
    UnknownDataset(u32),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("manifest error on {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed data in {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

/// One stage of the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Process variables owned by this stage.
    pub n_vars: usize,
    /// Measured responses.
    pub n_resp: usize,
    /// Responses of the previous stage fed into this one.
    pub n_carry: usize,
    pub lin_range: (f64, f64),
    pub quad_range: (f64, f64),
    /// Probability that a linear coefficient is zero.
    pub lin_sparsity: f64,
    /// Probability that a quadratic coefficient is zero.
    pub quad_sparsity: f64,
    pub noise_std: f64,
}

impl StageConfig {
    fn validate(&self, stage: usize, prev_resp: Option<usize>) -> Result<(), SimulatorError> {
        let fail = |reason: String| Err(SimulatorError::InvalidStage { stage, reason });
        if self.n_vars == 0 || self.n_resp == 0 {
            return fail("n_vars and n_resp must be positive".into());
        }
        for (name, (lo, hi)) in [("lin_range", self.lin_range), ("quad_range", self.quad_range)] {
            if !(lo < hi) {
                return fail(format!("{name} requires low < high, got ({lo}, {hi})"));
            }
        }
        for (name, p) in [("lin_sparsity", self.lin_sparsity), ("quad_sparsity", self.quad_sparsity)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return fail(format!("noise_std must be finite and non-negative, got {}", self.noise_std));
        }
        match prev_resp {
            None if self.n_carry > 0 => fail("the first stage has nothing to carry".into()),
            Some(prev) if self.n_carry > prev => {
                fail(format!("n_carry {} exceeds previous stage's {prev} responses", self.n_carry))
            }
            _ => Ok(()),
        }
    }
}

/// A full process description: sample count plus the stage chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub m: usize,
    pub stages: Vec<StageConfig>,
}

impl SimulatorConfig {
    pub fn builtin(dataset_id: u32) -> Result<Self, SimulatorError> {
        Ok(Self { m: BUILTIN_SAMPLES, stages: builtin_config(dataset_id)? })
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        if self.stages.is_empty() {
            return Err(SimulatorError::InvalidDim("at least one stage is required".into()));
        }
        let mut prev = None;
        for (i, stage) in self.stages.iter().enumerate() {
            stage.validate(i + 1, prev)?;
            prev = Some(stage.n_resp);
        }
        Ok(())
    }
}

/// The five three-stage benchmark configurations. Process-variable counts
/// are 10/20/20 scaled by 1, 2, 5, 10 and 20.
pub fn builtin_config(dataset_id: u32) -> Result<Vec<StageConfig>, SimulatorError> {
    let factor = match dataset_id {
        1 => 1,
        2 => 2,
        3 => 5,
        4 => 10,
        5 => 20,
        other => return Err(SimulatorError::UnknownDataset(other)),
    };
    // V_i ~ N(0, 0.001) read as a variance.
    let noise_std = 0.001_f64.sqrt();
    let stage = |n_vars, n_resp, n_carry, lin_range, quad_range, lin_sparsity| StageConfig {
        n_vars,
        n_resp,
        n_carry,
        lin_range,
        quad_range,
        lin_sparsity,
        quad_sparsity: 0.999,
        noise_std,
    };
    Ok(vec![
        stage(10 * factor, 5, 0, (-1.0, 2.0), (-0.01, 0.02), 0.15),
        stage(20 * factor, 6, 3, (-3.0, 3.0), (-0.03, 0.03), 0.2),
        stage(20 * factor, 7, 3, (-3.0, 2.0), (-0.03, 0.02), 0.25),
    ])
}

/// Fraction of `Σσ²` held by the leading `TARGET_COMPONENTS` values of the
/// profile `σ_j² ∝ exp(−(j−1)²/τ²)`.
fn bell_share(n: usize, tau: f64) -> f64 {
    let weights: Vec<f64> = (0..n).map(|j| (-((j * j) as f64) / (tau * tau)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().take(TARGET_COMPONENTS).sum::<f64>() / total
}

/// Width of the bell-shaped profile putting [`TARGET_EXPLAINED`] of the
/// variance into the leading components.
pub fn calibrate_bell_width(n: usize) -> f64 {
    if n <= TARGET_COMPONENTS {
        return TARGET_COMPONENTS as f64;
    }
    // share decreases monotonically in tau
    let (mut lo, mut hi) = (1e-3, n as f64 * 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bell_share(n, mid) > TARGET_EXPLAINED {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> RealMatrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Zero-mean `m × n` matrix `U diag(σ) Vᵀ + ε` with a calibrated bell-shaped
/// spectrum. Columns have unit variance on average.
pub fn generate_low_rank_x(m: usize, n: usize, seed: u64) -> Result<RealMatrix, SimulatorError> {
    if n == 0 || m <= n {
        return Err(SimulatorError::InvalidDim(format!("low-rank block needs m > n >= 1, got {m}x{n}")));
    }
    let tau = calibrate_bell_width(n);
    let profile: Vec<f64> = (0..n).map(|j| (-((j * j) as f64) / (2.0 * tau * tau)).exp()).collect();
    let norm = ((m - 1) as f64 * n as f64 / profile.iter().map(|s| s * s).sum::<f64>()).sqrt();
    let sigma = DVector::from_iterator(n, profile.iter().map(|s| s * norm));

    let mut left = gaussian(m, n, &mut rng::stream(seed, "lowrank/left"));
    for mut col in left.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let u = left.qr().q();
    let v = {
        let qr = gaussian(n, n, &mut rng::stream(seed, "lowrank/right")).qr();
        qr.q()
    };
    let signal = u * DMatrix::from_diagonal(&sigma) * v.transpose();
    let noise = gaussian(m, n, &mut rng::stream(seed, "lowrank/noise")) * PROCESS_NOISE_STD;
    Ok(signal + noise)
}

/// Coefficients drawn for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    /// `A_i`, (n_vars + n_carry) × n_resp.
    pub linear: RealMatrix,
    /// `B_i`, one row per quadratic term × n_resp.
    pub quadratic: RealMatrix,
    /// Column pairs `(a, b)`, `a ≤ b`, of `U_lin` forming each quadratic term.
    pub terms: Vec<(usize, usize)>,
}

fn sparse_uniform(rows: usize, cols: usize, range: (f64, f64), sparsity: f64, rng: &mut impl Rng) -> RealMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        let zero = rng.random::<f64>() < sparsity;
        let value = rng.random_range(range.0..range.1);
        if zero {
            0.0
        } else {
            value
        }
    })
}

/// Simulates one stage and returns its responses (m × n_resp).
pub fn simulate_stage(
    x_i: &RealMatrix,
    carry: &RealMatrix,
    cfg: &StageConfig,
    seed: u64,
) -> Result<RealMatrix, SimulatorError> {
    simulate_stage_with_model(x_i, carry, cfg, seed).map(|(y, _)| y)
}

/// [`simulate_stage`], also returning the drawn coefficients.
pub fn simulate_stage_with_model(
    x_i: &RealMatrix,
    carry: &RealMatrix,
    cfg: &StageConfig,
    seed: u64,
) -> Result<(RealMatrix, StageModel), SimulatorError> {
    let m = x_i.nrows();
    if x_i.ncols() != cfg.n_vars {
        return Err(SimulatorError::DimensionMismatch(format!(
            "stage expects {} process variables, got {}",
            cfg.n_vars,
            x_i.ncols()
        )));
    }
    if carry.nrows() != m || carry.ncols() != cfg.n_carry {
        return Err(SimulatorError::DimensionMismatch(format!(
            "stage expects a {m}x{} carry block, got {}x{}",
            cfg.n_carry,
            carry.nrows(),
            carry.ncols()
        )));
    }
    let prev = if cfg.n_carry > 0 { Some(cfg.n_carry) } else { None };
    cfg.validate(0, prev)?;

    let inputs = crate::linalg::hstack(&[x_i.clone(), carry.clone()]);
    let p = inputs.ncols();
    let r = cfg.n_resp;
    let terms: Vec<(usize, usize)> = (0..p).flat_map(|a| (a..p).map(move |b| (a, b))).collect();

    let linear = sparse_uniform(p, r, cfg.lin_range, cfg.lin_sparsity, &mut rng::stream(seed, "stage/linear"));
    let quadratic =
        sparse_uniform(terms.len(), r, cfg.quad_range, cfg.quad_sparsity, &mut rng::stream(seed, "stage/quadratic"));

    let mut y = &inputs * &linear;
    for (row, &(a, b)) in terms.iter().enumerate() {
        for c in 0..r {
            let coef = quadratic[(row, c)];
            if coef != 0.0 {
                for s in 0..m {
                    y[(s, c)] += coef * inputs[(s, a)] * inputs[(s, b)];
                }
            }
        }
    }
    if cfg.noise_std > 0.0 {
        y += gaussian(m, r, &mut rng::stream(seed, "stage/noise")) * cfg.noise_std;
    }
    Ok((y, StageModel { linear, quadratic, terms }))
}

/// A generated multistage dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    /// Process variables of each stage, the vertically partitioned features.
    pub x_blocks: Vec<RealMatrix>,
    /// Responses measured at each stage.
    pub stage_responses: Vec<RealMatrix>,
    /// Final-stage responses, the federation target.
    pub y: RealMatrix,
    pub seed: u64,
    pub config: SimulatorConfig,
}

/// Chains the stages: each stage gets fresh low-rank process variables and
/// the first `n_carry` responses of the stage before it.
pub fn generate_dataset(stages: &[StageConfig], m: usize, seed: u64) -> Result<SimulatedDataset, SimulatorError> {
    let config = SimulatorConfig { m, stages: stages.to_vec() };
    config.validate()?;
    let mut x_blocks = Vec::with_capacity(stages.len());
    let mut stage_responses: Vec<RealMatrix> = Vec::with_capacity(stages.len());
    for (i, stage) in stages.iter().enumerate() {
        let x = generate_low_rank_x(m, stage.n_vars, rng::derive_seed(seed, &format!("dataset/x/{i}")))?;
        let carry = match stage_responses.last() {
            Some(prev) => prev.columns(0, stage.n_carry).into_owned(),
            None => DMatrix::zeros(m, 0),
        };
        let y = simulate_stage(&x, &carry, stage, rng::derive_seed(seed, &format!("dataset/stage/{i}")))?;
        x_blocks.push(x);
        stage_responses.push(y);
    }
    let y = stage_responses.last().cloned().expect("at least one stage");
    Ok(SimulatedDataset { x_blocks, stage_responses, y, seed, config })
}

/// Contents of `manifest.json` next to the exported CSV blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SimulatorConfig,
    pub seed: u64,
    /// Feature block file names, in party order.
    pub blocks: Vec<String>,
    pub target: String,
    /// `[rows, cols]` per file, keyed by file name.
    pub shapes: std::collections::BTreeMap<String, [usize; 2]>,
}

/// Feature blocks and target read back from an exported directory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub x_blocks: Vec<RealMatrix>,
    pub y: RealMatrix,
    pub manifest: DatasetManifest,
}

fn write_csv(path: &Path, m: &RealMatrix) -> Result<(), SimulatorError> {
    let csv_err = |source| SimulatorError::Csv { path: path.to_path_buf(), source };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record((1..=m.ncols()).map(|j| format!("v{j}"))).map_err(csv_err)?;
    for row in m.row_iter() {
        writer.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| SimulatorError::Io { path: path.to_path_buf(), source })
}

fn read_csv(path: &Path) -> Result<RealMatrix, SimulatorError> {
    let csv_err = |source| SimulatorError::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let cols = reader.headers().map_err(csv_err)?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| SimulatorError::Malformed {
                path: path.to_path_buf(),
                reason: format!("row {}: not a number: {field:?}", rows + 1),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Writes `x1.csv … xg.csv`, `y.csv` and `manifest.json` into `dir`.
pub fn write_dataset(dataset: &SimulatedDataset, dir: &Path) -> Result<DatasetManifest, SimulatorError> {
    fs::create_dir_all(dir).map_err(|source| SimulatorError::Io { path: dir.to_path_buf(), source })?;
    let mut shapes = std::collections::BTreeMap::new();
    let mut blocks = Vec::new();
    for (i, x) in dataset.x_blocks.iter().enumerate() {
        let name = format!("x{}.csv", i + 1);
        write_csv(&dir.join(&name), x)?;
        shapes.insert(name.clone(), [x.nrows(), x.ncols()]);
        blocks.push(name);
    }
    let target = "y.csv".to_string();
    write_csv(&dir.join(&target), &dataset.y)?;
    shapes.insert(target.clone(), [dataset.y.nrows(), dataset.y.ncols()]);
    let manifest = DatasetManifest { config: dataset.config.clone(), seed: dataset.seed, blocks, target, shapes };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|source| SimulatorError::Manifest { path: path.clone(), source })?;
    fs::write(&path, json).map_err(|source| SimulatorError::Io { path, source })?;
    Ok(manifest)
}

/// Reads a directory produced by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<LoadedDataset, SimulatorError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|source| SimulatorError::Io { path: path.clone(), source })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| SimulatorError::Manifest { path: path.clone(), source })?;
    let load = |name: &String| -> Result<RealMatrix, SimulatorError> {
        let file = dir.join(name);
        let m = read_csv(&file)?;
        if let Some(&[rows, cols]) = manifest.shapes.get(name) {
            if m.shape() != (rows, cols) {
                return Err(SimulatorError::Malformed {
                    path: file,
                    reason: format!("manifest says {rows}x{cols}, file holds {}x{}", m.nrows(), m.ncols()),
                });
            }
        }
        Ok(m)
    };
    let x_blocks = manifest.blocks.iter().map(load).collect::<Result<Vec<_>, _>>()?;
    let y = load(&manifest.target)?;
    if x_blocks.is_empty() || x_blocks.iter().any(|x| x.nrows() != y.nrows()) {
        return Err(SimulatorError::Malformed { path, reason: "blocks must share the target's row count".into() });
    }
    Ok(LoadedDataset { x_blocks, y, manifest })
}

/// Share of centered variance captured by the leading `k` principal components.
pub fn leading_variance_share(x: &RealMatrix, k: usize) -> f64 {
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let sv = crate::linalg::singular_values(&centered);
    let total: f64 = sv.iter().map(|s| s * s).sum();
    sv.iter().take(k).map(|s| s * s).sum::<f64>() / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn linear_only(n_vars: usize, n_resp: usize, n_carry: usize) -> StageConfig {
        StageConfig {
            n_vars,
            n_resp,
            n_carry,
            lin_range: (-1.0, 2.0),
            quad_range: (-0.01, 0.02),
            lin_sparsity: 0.15,
            quad_sparsity: 1.0,
            noise_std: 0.0,
        }
    }

    #[test]
    fn low_rank_blocks_hit_the_variance_target() {
        let x = generate_low_rank_x(1000, 10, 1).unwrap();
        assert_eq!(x.shape(), (1000, 10));
        let share = leading_variance_share(&x, 4);
        assert!((0.87..=0.93).contains(&share), "share {share}");
        assert_eq!(x, generate_low_rank_x(1000, 10, 1).unwrap());
    }

    #[test]
    fn single_column_block_is_fully_explained() {
        let x = generate_low_rank_x(50, 1, 3).unwrap();
        assert_eq!(x.ncols(), 1);
        assert!((leading_variance_share(&x, 1) - 1.0).abs() < 1e-12);
        assert!(generate_low_rank_x(5, 5, 1).is_err());
    }

    #[test]
    fn noiseless_linear_stage_is_recoverable() {
        let x = generate_low_rank_x(200, 6, 4).unwrap();
        let carry = generate_low_rank_x(200, 2, 5).unwrap();
        let cfg = linear_only(6, 3, 2);
        let (y, model) = simulate_stage_with_model(&x, &carry, &cfg, 9).unwrap();
        assert!(model.quadratic.iter().all(|v| *v == 0.0));
        let inputs = crate::linalg::hstack(&[x, carry]);
        let solved = (inputs.transpose() * &inputs).lu().solve(&(inputs.transpose() * &y)).unwrap();
        assert!(max_abs_diff(&solved, &model.linear) < 1e-8);
    }

    #[test]
    fn full_quadratic_sparsity_matches_linear_only_output() {
        let x = generate_low_rank_x(100, 4, 1).unwrap();
        let carry = DMatrix::zeros(100, 0);
        let mut cfg = linear_only(4, 2, 0);
        cfg.noise_std = 0.1;
        let base = simulate_stage(&x, &carry, &cfg, 3).unwrap();
        let mut dense = cfg.clone();
        dense.quad_sparsity = 0.0;
        let with_quad = simulate_stage(&x, &carry, &dense, 3).unwrap();
        assert_ne!(base, with_quad);
        // only the quadratic stream differs
        let (_, m_base) = simulate_stage_with_model(&x, &carry, &cfg, 3).unwrap();
        let (_, m_dense) = simulate_stage_with_model(&x, &carry, &dense, 3).unwrap();
        assert_eq!(m_base.linear, m_dense.linear);
    }

    #[test]
    fn builtin_stage_one_shape() {
        let stages = builtin_config(1).unwrap();
        let x = generate_low_rank_x(1000, 10, 2).unwrap();
        let y = simulate_stage(&x, &DMatrix::zeros(1000, 0), &stages[0], 5).unwrap();
        assert_eq!(y.shape(), (1000, 5));
    }

    #[test]
    fn quadratic_sparsity_is_realized() {
        // 10 + 3 inputs → 91 terms; 91 × 120 responses > 10⁴ coefficients
        let x = generate_low_rank_x(20, 10, 1).unwrap();
        let carry = generate_low_rank_x(20, 3, 2).unwrap();
        for sparsity in [0.5, 0.9, 0.999] {
            let cfg = StageConfig { quad_sparsity: sparsity, n_carry: 3, n_resp: 120, ..linear_only(10, 120, 3) };
            let (_, model) = simulate_stage_with_model(&x, &carry, &cfg, 7).unwrap();
            assert!(model.quadratic.len() >= 10_000);
            let zeros = model.quadratic.iter().filter(|v| **v == 0.0).count() as f64;
            let frac = zeros / model.quadratic.len() as f64;
            assert!((frac - sparsity).abs() <= 0.02, "sparsity {sparsity}: realized {frac}");
        }
    }

    #[test]
    fn builtin_configs() {
        let one = builtin_config(1).unwrap();
        assert_eq!(one.iter().map(|s| s.n_vars).collect::<Vec<_>>(), vec![10, 20, 20]);
        assert_eq!(one.iter().map(|s| s.n_carry).collect::<Vec<_>>(), vec![0, 3, 3]);
        assert_eq!(one.iter().map(|s| s.n_resp).collect::<Vec<_>>(), vec![5, 6, 7]);
        let three = builtin_config(3).unwrap();
        assert_eq!(three.iter().map(|s| s.n_vars).collect::<Vec<_>>(), vec![50, 100, 100]);
        let five = builtin_config(5).unwrap();
        assert_eq!(five.iter().map(|s| s.n_vars).collect::<Vec<_>>(), vec![200, 400, 400]);
        assert!(matches!(builtin_config(0), Err(SimulatorError::UnknownDataset(0))));
        assert!(matches!(builtin_config(6), Err(SimulatorError::UnknownDataset(6))));
    }

    #[test]
    fn dataset_shapes_and_reproducibility() {
        let one = generate_dataset(&builtin_config(1).unwrap(), 1000, 11).unwrap();
        let shapes: Vec<_> = one.x_blocks.iter().map(|x| x.shape()).collect();
        assert_eq!(shapes, vec![(1000, 10), (1000, 20), (1000, 20)]);
        assert_eq!(one.y.shape(), (1000, 7));
        assert_eq!(one, generate_dataset(&builtin_config(1).unwrap(), 1000, 11).unwrap());
        assert_ne!(one.y, generate_dataset(&builtin_config(1).unwrap(), 1000, 12).unwrap().y);

        let two = generate_dataset(&builtin_config(2).unwrap(), 1000, 11).unwrap();
        let shapes: Vec<_> = two.x_blocks.iter().map(|x| x.shape()).collect();
        assert_eq!(shapes, vec![(1000, 20), (1000, 40), (1000, 40)]);
    }

    #[test]
    fn invalid_chains_are_rejected() {
        let mut stages = builtin_config(1).unwrap();
        stages[1].n_carry = 9;
        assert!(matches!(generate_dataset(&stages, 100, 1), Err(SimulatorError::InvalidStage { stage: 2, .. })));
        let mut stages = builtin_config(1).unwrap();
        stages[0].lin_range = (1.0, 1.0);
        assert!(generate_dataset(&stages, 100, 1).is_err());
        let mut stages = builtin_config(1).unwrap();
        stages[0].n_carry = 1;
        assert!(generate_dataset(&stages, 100, 1).is_err());
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stages = vec![linear_only(3, 2, 0), StageConfig { n_carry: 1, ..linear_only(2, 2, 1) }];
        let ds = generate_dataset(&stages, 30, 5).unwrap();
        let manifest = write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(manifest.blocks, vec!["x1.csv", "x2.csv"]);
        let header = std::fs::read_to_string(dir.path().join("x1.csv")).unwrap();
        assert!(header.starts_with("v1,v2,v3\n"));
        let loaded = read_dataset(dir.path()).unwrap();
        assert_eq!(loaded.x_blocks, ds.x_blocks);
        assert_eq!(loaded.y, ds.y);
        assert_eq!(loaded.manifest, manifest);
    }
}
