//! The privacy-preserving protocol between a trusted authority (TA), a
//! computation service provider (CSP), `g` feature contributors (FC) and one
//! label contributor (LC).
//!
//! Each data holder standardizes its own columns, masks them with keys from
//! the TA and uploads the result. The CSP fits on the aggregated masked data
//! and hands every party back exactly the components it is entitled to, still
//! masked, which the party then unmasks locally. The same organisation may act
//! as FC-g and as LC; it then simply runs both roles, each with its own keys.
//!
//! All messages go through a [`Transport`], whose transcript records every
//! delivery for [`audit_views`].

mod audit;
mod message;
mod parties;
pub mod recovery;
mod transport;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{audit_views, check_delivery, AuditReport, PartyView, Rule, Violation};
pub use message::{
    Message, MessageRecord, PartyId, Payload, PayloadTag, Phase, Protection, ProtocolTranscript, TranscriptParseError,
};
pub use parties::{
    secure_aggregate, ComputationServiceProvider, FcModelShare, FeatureContributor, LabelContributor, LcModelShare,
    MaskedModel, RecoveryMasks, TrustedAuthority,
};
pub use transport::{InMemoryTransport, Transport};

use crate::masking::{MaskingError, OrthogonalMethod};
use crate::pls::{self, PlsError};
use crate::{rng, RealMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederationError {
    #[error("invalid federation config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} feature blocks, found {found}")]
    WrongBlockCount { expected: usize, found: usize },
    #[error("dimension mismatch at {party}: {detail}")]
    DimensionMismatch { party: PartyId, detail: String },
    #[error("{party}: {source}")]
    Pls {
        party: PartyId,
        #[source]
        source: PlsError,
    },
    #[error("{party}: {source}")]
    Masking {
        party: PartyId,
        #[source]
        source: MaskingError,
    },
    #[error("{party}: could not draw an invertible local recovery mask")]
    SingularLocalMask { party: PartyId },
    #[error("{party}: received {tag} key is not invertible")]
    SingularKey { party: PartyId, tag: PayloadTag },
    #[error("{to} may not receive {tag} ({rule:?})")]
    VisibilityViolation { to: PartyId, tag: PayloadTag, rule: Rule },
    #[error("{0} is only delivered through the recovery protocol")]
    NotServable(PayloadTag),
    #[error("the federation has not been trained")]
    NotTrained,
    #[error("{party} expected {tag} from {from} in the {phase:?} phase")]
    MissingMessage { party: PartyId, from: PartyId, tag: PayloadTag, phase: Phase },
    #[error("{count} messages left undelivered after the {phase:?} phase")]
    UndeliveredMessages { phase: Phase, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    /// Widths `n_1..n_g` of the feature blocks; `g` is their count.
    pub block_widths: Vec<usize>,
    /// Shared sample count `m`.
    pub m: usize,
    /// Response count `l`.
    pub l: usize,
    /// Number of latent components `k`.
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub mask_method: OrthogonalMethod,
    #[serde(default)]
    pub recovery_masks: RecoveryMasks,
}

impl FederationConfig {
    pub fn new(block_widths: Vec<usize>, m: usize, l: usize, k: usize, seed: u64) -> Self {
        Self {
            block_widths,
            m,
            l,
            k,
            seed,
            mask_method: OrthogonalMethod::default(),
            recovery_masks: RecoveryMasks::default(),
        }
    }

    pub fn g(&self) -> usize {
        self.block_widths.len()
    }

    pub fn n(&self) -> usize {
        self.block_widths.iter().sum()
    }

    pub fn validate(&self) -> Result<(), FederationError> {
        let bad = |msg: String| Err(FederationError::InvalidConfig(msg));
        if self.block_widths.is_empty() {
            return bad("at least one feature block is required".into());
        }
        if let Some(i) = self.block_widths.iter().position(|&w| w == 0) {
            return bad(format!("block {} has width 0", i + 1));
        }
        if self.m < 2 {
            return bad(format!("m = {} but at least 2 samples are required", self.m));
        }
        if self.l == 0 {
            return bad("l must be at least 1".into());
        }
        let cap = pls::max_components(self.m, self.n());
        if self.k == 0 || self.k > cap {
            return bad(format!("k = {} outside 1..={cap}", self.k));
        }
        Ok(())
    }
}

/// What inference hands back: the scores each FC recovered and the LC's
/// predictions in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    pub scores: Vec<RealMatrix>,
    pub predictions: RealMatrix,
}

/// Shares and transcript of a completed training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub fc_shares: Vec<FcModelShare>,
    pub lc_share: LcModelShare,
    pub transcript: ProtocolTranscript,
}

/// All parties of one federation wired to a transport.
#[derive(Debug)]
pub struct Federation<T: Transport = InMemoryTransport> {
    config: FederationConfig,
    transport: T,
    ta: TrustedAuthority,
    csp: ComputationServiceProvider,
    fcs: Vec<FeatureContributor>,
    lc: LabelContributor,
    trained: bool,
}

impl Federation<InMemoryTransport> {
    /// Sets up the parties from raw data. Each owner standardizes its block.
    pub fn new(config: FederationConfig, blocks: Vec<RealMatrix>, y: RealMatrix) -> Result<Self, FederationError> {
        Self::with_transport(config, blocks, y, InMemoryTransport::new())
    }
}

impl<T: Transport> Federation<T> {
    pub fn with_transport(
        config: FederationConfig,
        blocks: Vec<RealMatrix>,
        y: RealMatrix,
        transport: T,
    ) -> Result<Self, FederationError> {
        config.validate()?;
        if blocks.len() != config.g() {
            return Err(FederationError::WrongBlockCount { expected: config.g(), found: blocks.len() });
        }
        let mut fcs = Vec::with_capacity(blocks.len());
        for (i, (x, &width)) in blocks.into_iter().zip(&config.block_widths).enumerate() {
            let party = PartyId::Fc(i + 1);
            if x.shape() != (config.m, width) {
                return Err(FederationError::DimensionMismatch {
                    party,
                    detail: format!("block is {}x{}, expected {}x{width}", x.nrows(), x.ncols(), config.m),
                });
            }
            let (xs, params) = pls::standardize(&x).map_err(|source| FederationError::Pls { party, source })?;
            let seed = rng::derive_seed(config.seed, &format!("fc/{}", i + 1));
            fcs.push(FeatureContributor::new(i + 1, seed, xs, params));
        }
        if y.shape() != (config.m, config.l) {
            return Err(FederationError::DimensionMismatch {
                party: PartyId::Lc,
                detail: format!("Y is {}x{}, expected {}x{}", y.nrows(), y.ncols(), config.m, config.l),
            });
        }
        let (ys, y_params) =
            pls::standardize(&y).map_err(|source| FederationError::Pls { party: PartyId::Lc, source })?;
        let ta = TrustedAuthority::new(rng::derive_seed(config.seed, "ta"), config.mask_method, config.recovery_masks);
        Ok(Self {
            config,
            transport,
            ta,
            csp: ComputationServiceProvider::default(),
            fcs,
            lc: LabelContributor::new(ys, y_params),
            trained: false,
        })
    }

    pub fn config(&self) -> &FederationConfig {
        &self.config
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn authority(&self) -> &TrustedAuthority {
        &self.ta
    }

    pub fn service_provider(&self) -> &ComputationServiceProvider {
        &self.csp
    }

    /// Feature contributor `i`, counted from 1.
    pub fn feature_contributor(&self, i: usize) -> Option<&FeatureContributor> {
        i.checked_sub(1).and_then(|i| self.fcs.get(i))
    }

    pub fn feature_contributors(&self) -> &[FeatureContributor] {
        &self.fcs
    }

    pub fn label_contributor(&self) -> &LabelContributor {
        &self.lc
    }

    pub fn transcript(&self) -> &ProtocolTranscript {
        self.transport.transcript()
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Direct access to the bus, e.g. to inject messages in tests.
    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn fc_shares(&self) -> Result<Vec<&FcModelShare>, FederationError> {
        self.fcs.iter().map(|fc| fc.share().ok_or(FederationError::NotTrained)).collect()
    }

    pub fn lc_share(&self) -> Result<&LcModelShare, FederationError> {
        self.lc.share().ok_or(FederationError::NotTrained)
    }

    fn barrier(&self, phase: Phase) -> Result<(), FederationError> {
        match self.transport.pending() {
            0 => Ok(()),
            count => Err(FederationError::UndeliveredMessages { phase, count }),
        }
    }

    /// Masked training followed by recovery of every party's share.
    pub fn train(&mut self) -> Result<(), FederationError> {
        self.trained = false;
        let g = self.config.g();
        let (m, l, k, n) = (self.config.m, self.config.l, self.config.k, self.config.n());
        let bus: &mut dyn Transport = &mut self.transport;

        self.ta.issue_training_keys(bus, m, &self.config.block_widths, l)?;
        for fc in &mut self.fcs {
            fc.upload_masked_block(bus)?;
        }
        self.lc.upload_masked_targets(bus)?;
        self.csp.fit(bus, g, k)?;
        self.barrier(Phase::Training)?;

        let bus: &mut dyn Transport = &mut self.transport;
        self.ta.issue_recovery_key(bus, g, l)?;
        for fc in &mut self.fcs {
            fc.upload_masked_key(bus, self.config.recovery_masks)?;
        }
        self.lc.upload_masked_key(bus)?;
        self.csp.recover(bus, g)?;
        for fc in &mut self.fcs {
            fc.recover_share(bus, n)?;
        }
        self.lc.recover_share(bus)?;
        self.barrier(Phase::Recovery)?;
        self.trained = true;
        log::info!("federated training finished: g={g}, m={m}, n={n}, l={l}, k={k}");
        Ok(())
    }

    /// Scores how well each block predicts Y on its own. Returns one value
    /// per FC, which is also stored in that FC's share.
    pub fn contribution(&mut self) -> Result<Vec<f64>, FederationError> {
        if !self.trained {
            return Err(FederationError::NotTrained);
        }
        let (g, m, l) = (self.config.g(), self.config.m, self.config.l);
        let bus: &mut dyn Transport = &mut self.transport;
        self.ta.issue_contribution_keys(bus, g, m, l)?;
        for fc in &self.fcs {
            fc.upload_contribution(bus)?;
        }
        self.lc.upload_contribution(bus)?;
        self.csp.score_contributions(bus, g)?;
        let scores = self.fcs.iter_mut().map(|fc| fc.finish_contribution(bus, l)).collect::<Result<Vec<_>, _>>()?;
        self.barrier(Phase::Contribution)?;
        Ok(scores)
    }

    /// Scores and predicts new raw samples, one block per FC.
    pub fn infer(&mut self, new_blocks: &[RealMatrix]) -> Result<InferenceOutput, FederationError> {
        if !self.trained {
            return Err(FederationError::NotTrained);
        }
        let g = self.config.g();
        if new_blocks.len() != g {
            return Err(FederationError::WrongBlockCount { expected: g, found: new_blocks.len() });
        }
        let m_new = new_blocks[0].nrows();
        for (fc, x) in self.fcs.iter_mut().zip(new_blocks) {
            if x.nrows() != m_new {
                return Err(FederationError::DimensionMismatch {
                    party: fc.id(),
                    detail: format!("new block has {} rows, FC-1 has {m_new}", x.nrows()),
                });
            }
            fc.prepare_inference(x)?;
        }
        let bus: &mut dyn Transport = &mut self.transport;
        self.ta.issue_inference_key(bus, g, m_new)?;
        let inverses = self.fcs.iter_mut().map(|fc| fc.upload_inference(bus)).collect::<Result<Vec<_>, _>>()?;
        let lc_inverse = self.lc.accept_inference_key(bus)?;
        self.csp.infer(bus, g)?;
        let scores = self
            .fcs
            .iter()
            .zip(&inverses)
            .map(|(fc, m_inv)| fc.finish_inference(bus, m_inv))
            .collect::<Result<Vec<_>, _>>()?;
        let predictions = self.lc.finish_inference(bus, &lc_inverse)?;
        self.barrier(Phase::Inference)?;
        Ok(InferenceOutput { scores, predictions })
    }
}

/// Sets up a federation, trains it and returns the recovered shares.
pub fn run_training(
    config: FederationConfig,
    blocks: Vec<RealMatrix>,
    y: RealMatrix,
) -> Result<TrainingOutcome, FederationError> {
    let mut fed = Federation::new(config, blocks, y)?;
    fed.train()?;
    Ok(TrainingOutcome {
        fc_shares: fed.fc_shares()?.into_iter().cloned().collect(),
        lc_share: fed.lc_share()?.clone(),
        transcript: fed.transcript().clone(),
    })
}
