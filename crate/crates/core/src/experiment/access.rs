//! Records which reader touched which data block, so the assignment of
//! blocks to models and parties can be checked after a run.

use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExperimentData, ModelKind};
use crate::RealMatrix;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AccessRecord {
    pub model: ModelKind,
    /// `central`, or the party label of the reader.
    pub reader: String,
    /// `X<i>` (1-based) or `Y`.
    pub block: String,
    pub reads: usize,
}

#[derive(Debug, Default)]
pub struct AccessLog {
    reads: RefCell<BTreeMap<(ModelKind, String, String), usize>>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn note(&self, model: ModelKind, reader: &str, block: String) {
        *self.reads.borrow_mut().entry((model, reader.to_string(), block)).or_default() += 1;
    }

    pub fn records(&self) -> Vec<AccessRecord> {
        self.reads
            .borrow()
            .iter()
            .map(|((model, reader, block), &reads)| AccessRecord {
                model: *model,
                reader: reader.clone(),
                block: block.clone(),
                reads,
            })
            .collect()
    }
}

/// Read access to one data partition that logs every block handed out.
pub struct Instrumented<'a> {
    data: &'a ExperimentData,
    log: &'a AccessLog,
}

impl<'a> Instrumented<'a> {
    pub fn new(data: &'a ExperimentData, log: &'a AccessLog) -> Self {
        Self { data, log }
    }

    /// Feature block `i`, counted from 1.
    pub fn x(&self, model: ModelKind, reader: &str, i: usize) -> &'a RealMatrix {
        self.log.note(model, reader, format!("X{i}"));
        &self.data.blocks[i - 1]
    }

    pub fn y(&self, model: ModelKind, reader: &str) -> &'a RealMatrix {
        self.log.note(model, reader, "Y".into());
        &self.data.y
    }

    pub fn g(&self) -> usize {
        self.data.blocks.len()
    }
}
