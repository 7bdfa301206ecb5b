use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ExperimentData, ExperimentError};
use crate::linalg::select_rows;
use crate::rng;

/// Smallest sample count that leaves every partition non-empty.
pub const MIN_SPLIT_ROWS: usize = 10;

/// Disjoint row indices for training (60%), validation (20%) and test (the
/// remainder).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }
}

pub fn split_indices(m: usize, seed: u64) -> Result<Split, ExperimentError> {
    if m < MIN_SPLIT_ROWS {
        return Err(ExperimentError::TooFewRows { rows: m, min: MIN_SPLIT_ROWS });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng::stream(seed, "split"));
    let n_train = m * 6 / 10;
    let n_val = m * 2 / 10;
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(Split { train: idx, validation, test })
}

/// Applies one seeded row partition to every block and to Y.
pub fn split_dataset(data: &ExperimentData, seed: u64) -> Result<[ExperimentData; 3], ExperimentError> {
    let split = split_indices(data.y.nrows(), seed)?;
    Ok([&split.train, &split.validation, &split.test].map(|rows| data.rows(rows)))
}

impl ExperimentData {
    pub(crate) fn rows(&self, rows: &[usize]) -> ExperimentData {
        ExperimentData {
            name: self.name.clone(),
            blocks: self.blocks.iter().map(|b| select_rows(b, rows)).collect(),
            y: select_rows(&self.y, rows),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn partition_sizes() {
        assert_eq!(split_indices(1000, 1).unwrap().sizes(), [600, 200, 200]);
        assert_eq!(split_indices(10, 1).unwrap().sizes(), [6, 2, 2]);
        assert_eq!(split_indices(17, 1).unwrap().sizes(), [10, 3, 4]);
        assert!(matches!(split_indices(9, 1), Err(ExperimentError::TooFewRows { rows: 9, .. })));
    }

    #[test]
    fn partition_is_disjoint_and_deterministic() {
        let a = split_indices(50, 7).unwrap();
        assert_eq!(a, split_indices(50, 7).unwrap());
        assert_ne!(a, split_indices(50, 8).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn same_rows_for_every_block() {
        let m = 12;
        let data = ExperimentData {
            name: "t".into(),
            blocks: vec![DMatrix::from_fn(m, 2, |i, _| i as f64), DMatrix::from_fn(m, 1, |i, _| 100.0 + i as f64)],
            y: DMatrix::from_fn(m, 1, |i, _| -(i as f64)),
        };
        for part in split_dataset(&data, 3).unwrap() {
            for r in 0..part.y.nrows() {
                let i = part.blocks[0][(r, 0)];
                assert_eq!(part.blocks[1][(r, 0)], 100.0 + i);
                assert_eq!(part.y[(r, 0)], -i);
            }
        }
    }
}
