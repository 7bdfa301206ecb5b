//! Shared fixtures for the criterion benches.

use p3ls_core::experiment::{split_dataset, ExperimentData};
use p3ls_core::simulator::{builtin_config, generate_dataset, BUILTIN_SAMPLES};
use p3ls_core::{Federation, FederationConfig, RealMatrix};

/// Training and test partitions of a builtin dataset.
pub struct Fixture {
    pub train: ExperimentData,
    pub test: ExperimentData,
}

impl Fixture {
    pub fn builtin(dataset: u32, seed: u64) -> Self {
        let sim = generate_dataset(&builtin_config(dataset).expect("builtin dataset"), BUILTIN_SAMPLES, seed)
            .expect("simulation succeeds");
        let data = ExperimentData::from_simulated(format!("dataset-{dataset}"), &sim);
        let [train, _, test] = split_dataset(&data, seed).expect("enough rows");
        Self { train, test }
    }

    pub fn x_train(&self) -> RealMatrix {
        p3ls_core::linalg::hstack(&self.train.blocks)
    }

    pub fn federation(&self, k: usize, seed: u64) -> Federation {
        let (m, l) = self.train.y.shape();
        let config = FederationConfig::new(self.train.widths(), m, l, k, seed);
        Federation::new(config, self.train.blocks.clone(), self.train.y.clone()).expect("valid fixture")
    }

    pub fn trained(&self, k: usize, seed: u64) -> Federation {
        let mut fed = self.federation(k, seed);
        fed.train().expect("training succeeds");
        fed
    }
}
