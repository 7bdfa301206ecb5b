//! The four protocol roles. Each party only touches its own state and what
//! arrives through the transport.

use serde::{Deserialize, Serialize};

use super::audit::check_delivery;
use super::message::{Message, PartyId, Payload, PayloadTag, Phase};
use super::recovery;
use super::transport::Transport;
use super::FederationError;
use crate::masking::{
    self, generate_invertible, generate_keys_with, generate_orthogonal, InvertibleMask, OrthogonalMethod,
};
use crate::pls::{self, explained_variance_x, explained_variance_y, PlsComponents, StandardizationParams};
use crate::{rng, RealMatrix};

/// Which one-time masks the recovery phase uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryMasks {
    #[default]
    Random,
    /// `C_i = I` and `N = I`. Only useful for checking the recovery algebra.
    Identity,
}

fn take(
    bus: &mut dyn Transport,
    me: PartyId,
    from: PartyId,
    tag: PayloadTag,
    phase: Phase,
) -> Result<Payload, FederationError> {
    match bus.recv(me, from, tag) {
        Some(msg) if msg.phase == phase => Ok(msg.body),
        _ => Err(FederationError::MissingMessage { party: me, from, tag, phase }),
    }
}

fn take_matrix(
    bus: &mut dyn Transport,
    me: PartyId,
    from: PartyId,
    tag: PayloadTag,
    phase: Phase,
) -> Result<RealMatrix, FederationError> {
    match take(bus, me, from, tag, phase)? {
        Payload::Matrix(m) => Ok(m),
        Payload::Scalar(_) => Err(FederationError::MissingMessage { party: me, from, tag, phase }),
    }
}

fn expect_shape(party: PartyId, what: &str, m: &RealMatrix, shape: (usize, usize)) -> Result<(), FederationError> {
    if m.shape() == shape {
        Ok(())
    } else {
        Err(FederationError::DimensionMismatch {
            party,
            detail: format!("{what}: expected {}x{}, found {}x{}", shape.0, shape.1, m.nrows(), m.ncols()),
        })
    }
}

fn invert_key(party: PartyId, tag: PayloadTag, key: &RealMatrix) -> Result<RealMatrix, FederationError> {
    key.clone().try_inverse().ok_or(FederationError::SingularKey { party, tag })
}

/// Issues every key and never receives anything.
#[derive(Debug, Clone)]
pub struct TrustedAuthority {
    seed: u64,
    method: OrthogonalMethod,
    recovery_masks: RecoveryMasks,
    rounds: u64,
}

impl TrustedAuthority {
    pub(crate) fn new(seed: u64, method: OrthogonalMethod, recovery_masks: RecoveryMasks) -> Self {
        Self { seed, method, recovery_masks, rounds: 0 }
    }

    /// Number of key issues so far; every issue draws fresh keys.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    fn next_seed(&mut self, label: &str) -> u64 {
        self.rounds += 1;
        rng::derive_seed(self.seed, &format!("{label}/{}", self.rounds))
    }

    fn send_key(bus: &mut dyn Transport, to: PartyId, phase: Phase, tag: PayloadTag, key: &RealMatrix) {
        let msg = Message::matrix(PartyId::Ta, to, phase, tag, key.clone());
        bus.send(if tag == PayloadTag::KeyHi { msg.about(to) } else { msg });
    }

    /// `A` to every data holder, `H_iᵀ` to FC-i and `G` to the label
    /// contributor.
    pub(crate) fn issue_training_keys(
        &mut self,
        bus: &mut dyn Transport,
        m: usize,
        widths: &[usize],
        l: usize,
    ) -> Result<(), FederationError> {
        let seed = self.next_seed("training");
        let keys = generate_keys_with(m, widths, l, seed, self.method)
            .map_err(|source| FederationError::Masking { party: PartyId::Ta, source })?;
        let phase = Phase::Training;
        for (i, split) in keys.h_splits().iter().enumerate() {
            let fc = PartyId::Fc(i + 1);
            Self::send_key(bus, fc, phase, PayloadTag::KeyA, keys.a().matrix());
            Self::send_key(bus, fc, phase, PayloadTag::KeyHi, split);
        }
        Self::send_key(bus, PartyId::Lc, phase, PayloadTag::KeyA, keys.a().matrix());
        Self::send_key(bus, PartyId::Lc, phase, PayloadTag::KeyG, keys.g().matrix());
        Ok(())
    }

    /// The common target-side recovery key `N` (l×l).
    pub(crate) fn issue_recovery_key(
        &mut self,
        bus: &mut dyn Transport,
        g: usize,
        l: usize,
    ) -> Result<(), FederationError> {
        let seed = self.next_seed("recovery/N");
        let n = match self.recovery_masks {
            RecoveryMasks::Random => generate_invertible(l, seed)
                .map_err(|source| FederationError::Masking { party: PartyId::Ta, source })?,
            RecoveryMasks::Identity => InvertibleMask::identity(l),
        };
        for to in (1..=g).map(PartyId::Fc).chain([PartyId::Lc]) {
            Self::send_key(bus, to, Phase::Recovery, PayloadTag::KeyN, n.matrix());
        }
        Ok(())
    }

    /// Orthogonal `M` (m×m) and `N` (l×l) for residual scoring.
    pub(crate) fn issue_contribution_keys(
        &mut self,
        bus: &mut dyn Transport,
        g: usize,
        m: usize,
        l: usize,
    ) -> Result<(), FederationError> {
        let err = |source| FederationError::Masking { party: PartyId::Ta, source };
        let m_seed = self.next_seed("contribution/M");
        let n_seed = self.next_seed("contribution/N");
        let m_key = generate_orthogonal(m, m_seed, self.method).map_err(err)?;
        let n_key = generate_orthogonal(l, n_seed, self.method).map_err(err)?;
        let phase = Phase::Contribution;
        for to in (1..=g).map(PartyId::Fc).chain([PartyId::Lc]) {
            Self::send_key(bus, to, phase, PayloadTag::KeyM, m_key.matrix());
            Self::send_key(bus, to, phase, PayloadTag::KeyN, n_key.matrix());
        }
        Ok(())
    }

    /// A general invertible `M` (m_new×m_new) for one inference round.
    pub(crate) fn issue_inference_key(
        &mut self,
        bus: &mut dyn Transport,
        g: usize,
        m_new: usize,
    ) -> Result<(), FederationError> {
        let seed = self.next_seed("inference/M");
        let m_key = generate_invertible(m_new, seed)
            .map_err(|source| FederationError::Masking { party: PartyId::Ta, source })?;
        for to in (1..=g).map(PartyId::Fc).chain([PartyId::Lc]) {
            Self::send_key(bus, to, Phase::Inference, PayloadTag::KeyM, m_key.matrix());
        }
        Ok(())
    }
}

/// Components of the fit on masked data, held by the service provider.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedModel {
    components: PlsComponents,
}

impl MaskedModel {
    pub fn weights(&self) -> &RealMatrix {
        &self.components.weights
    }

    pub fn x_scores(&self) -> &RealMatrix {
        &self.components.x_scores
    }

    pub fn x_loadings(&self) -> &RealMatrix {
        &self.components.x_loadings
    }

    pub fn y_loadings(&self) -> &RealMatrix {
        &self.components.y_loadings
    }

    pub fn y_scores(&self) -> &RealMatrix {
        &self.components.y_scores
    }

    pub fn rotations(&self) -> &RealMatrix {
        &self.components.rotations
    }

    pub fn coefficients(&self) -> &RealMatrix {
        &self.components.coefficients
    }

    pub fn n_components(&self) -> usize {
        self.components.n_components()
    }
}

/// Entrywise sum of the masked feature blocks, `X′ = Σ X′_i = A X H`.
pub fn secure_aggregate(masked_blocks: &[RealMatrix]) -> Result<RealMatrix, FederationError> {
    let (first, rest) =
        masked_blocks.split_first().ok_or(FederationError::WrongBlockCount { expected: 1, found: 0 })?;
    let mut sum = first.clone();
    for (i, block) in rest.iter().enumerate() {
        expect_shape(PartyId::Fc(i + 2), "masked block", block, first.shape())?;
        sum += block;
    }
    Ok(sum)
}

/// Fits the model on masked data and serves masked components. Sees only
/// masked payloads.
#[derive(Debug, Clone, Default)]
pub struct ComputationServiceProvider {
    masked_x: Option<RealMatrix>,
    model: Option<MaskedModel>,
}

impl ComputationServiceProvider {
    pub fn model(&self) -> Option<&MaskedModel> {
        self.model.as_ref()
    }

    /// The aggregated masked feature matrix of the last training run.
    pub fn masked_features(&self) -> Option<&RealMatrix> {
        self.masked_x.as_ref()
    }

    fn trained(&self) -> Result<&MaskedModel, FederationError> {
        self.model.as_ref().ok_or(FederationError::NotTrained)
    }

    fn release(&self, bus: &mut dyn Transport, msg: Message) -> Result<(), FederationError> {
        check_delivery(msg.from, msg.to, msg.tag, msg.protection, msg.subject)
            .map_err(|rule| FederationError::VisibilityViolation { to: msg.to, tag: msg.tag, rule })?;
        bus.send(msg);
        Ok(())
    }

    /// Serves a shared masked component on request. Requests outside the
    /// visibility policy are refused.
    pub fn request(&self, requester: PartyId, tag: PayloadTag) -> Result<RealMatrix, FederationError> {
        check_delivery(PartyId::Csp, requester, tag, tag.expected_protection(), Some(requester))
            .map_err(|rule| FederationError::VisibilityViolation { to: requester, tag, rule })?;
        let model = self.trained()?;
        match tag {
            PayloadTag::MaskedT => Ok(model.x_scores().clone()),
            PayloadTag::MaskedQ => Ok(model.y_loadings().clone()),
            PayloadTag::MaskedU => Ok(model.y_scores().clone()),
            _ => Err(FederationError::NotServable(tag)),
        }
    }

    pub(crate) fn fit(&mut self, bus: &mut dyn Transport, g: usize, k: usize) -> Result<(), FederationError> {
        let me = PartyId::Csp;
        let blocks = (1..=g)
            .map(|i| take_matrix(bus, me, PartyId::Fc(i), PayloadTag::MaskedX, Phase::Training))
            .collect::<Result<Vec<_>, _>>()?;
        let y = take_matrix(bus, me, PartyId::Lc, PayloadTag::MaskedY, Phase::Training)?;
        let x = secure_aggregate(&blocks)?;
        let components = pls::fit_components(&x, &y, k).map_err(|source| FederationError::Pls { party: me, source })?;
        log::debug!("CSP fitted {k} components on masked {}x{} data", x.nrows(), x.ncols());
        self.masked_x = Some(x);
        self.model = Some(MaskedModel { components });
        Ok(())
    }

    pub(crate) fn recover(&self, bus: &mut dyn Transport, g: usize) -> Result<(), FederationError> {
        let me = PartyId::Csp;
        let phase = Phase::Recovery;
        let model = self.trained()?;
        for to in (1..=g).map(PartyId::Fc).chain([PartyId::Lc]) {
            self.release(bus, Message::matrix(me, to, phase, PayloadTag::MaskedT, model.x_scores().clone()))?;
        }
        let masked_gt = take_matrix(bus, me, PartyId::Lc, PayloadTag::MaskedGt, phase)?;
        for i in 1..=g {
            let fc = PartyId::Fc(i);
            let masked_h = take_matrix(bus, me, fc, PayloadTag::MaskedHi, phase)?;
            if masked_h.ncols() != model.weights().nrows() {
                return Err(FederationError::DimensionMismatch {
                    party: fc,
                    detail: format!(
                        "masked key has {} columns, model has {} features",
                        masked_h.ncols(),
                        model.weights().nrows()
                    ),
                });
            }
            let shares = [
                (PayloadTag::MaskedWI, recovery::masked_local_share(&masked_h, model.weights())),
                (PayloadTag::MaskedPI, recovery::masked_local_share(&masked_h, model.x_loadings())),
                (
                    PayloadTag::MaskedBI,
                    recovery::masked_local_coefficients(&masked_h, model.coefficients(), &masked_gt),
                ),
            ];
            for (tag, share) in shares {
                self.release(bus, Message::matrix(me, fc, phase, tag, share).about(fc))?;
            }
        }
        self.release(bus, Message::matrix(me, PartyId::Lc, phase, PayloadTag::MaskedQ, model.y_loadings().clone()))?;
        self.release(bus, Message::matrix(me, PartyId::Lc, phase, PayloadTag::MaskedU, model.y_scores().clone()))?;
        Ok(())
    }

    pub(crate) fn score_contributions(&self, bus: &mut dyn Transport, g: usize) -> Result<(), FederationError> {
        let me = PartyId::Csp;
        let phase = Phase::Contribution;
        let y = take_matrix(bus, me, PartyId::Lc, PayloadTag::MaskedY, phase)?;
        for i in 1..=g {
            let fc = PartyId::Fc(i);
            let y_hat = take_matrix(bus, me, fc, PayloadTag::MaskedYhat, phase)?;
            expect_shape(fc, "masked prediction", &y_hat, y.shape())?;
            let ss = recovery::masked_residual_ss(&y, &y_hat);
            self.release(bus, Message::new(me, fc, phase, PayloadTag::SsResidual, Payload::Scalar(ss)).about(fc))?;
        }
        Ok(())
    }

    pub(crate) fn infer(&self, bus: &mut dyn Transport, g: usize) -> Result<(), FederationError> {
        let me = PartyId::Csp;
        let phase = Phase::Inference;
        let model = self.trained()?;
        let mut y_hats = Vec::with_capacity(g);
        let mut xs = Vec::with_capacity(g);
        for i in 1..=g {
            y_hats.push(take_matrix(bus, me, PartyId::Fc(i), PayloadTag::MaskedYhat, phase)?);
            xs.push(take_matrix(bus, me, PartyId::Fc(i), PayloadTag::MaskedX, phase)?);
        }
        let y_hat = secure_aggregate(&y_hats)?;
        let x = secure_aggregate(&xs)?;
        let t = x * model.rotations();
        for i in 1..=g {
            self.release(bus, Message::matrix(me, PartyId::Fc(i), phase, PayloadTag::MaskedT, t.clone()))?;
        }
        self.release(bus, Message::matrix(me, PartyId::Lc, phase, PayloadTag::MaskedYhat, y_hat))
    }
}

/// What feature contributor `i` holds after recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct FcModelShare {
    /// Shared X-scores `T` (m×k).
    pub t: RealMatrix,
    /// Local weights `W_i` (n_i×k).
    pub w: RealMatrix,
    /// Local loadings `P_i` (n_i×k).
    pub p: RealMatrix,
    /// Local coefficients `B_i` (n_i×l).
    pub b: RealMatrix,
    /// Local residuals `Θ_i = X_i − T P_iᵀ`.
    pub theta: RealMatrix,
    /// Share of the total X variance explained through this block.
    pub r2_x: f64,
    /// Fraction of Y this block predicts alone; set by the contribution phase.
    pub r2_xy: Option<f64>,
}

/// What the label contributor holds after recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct LcModelShare {
    pub t: RealMatrix,
    /// Y-loadings `Q` (l×k).
    pub q: RealMatrix,
    /// Y-scores `U` (m×k).
    pub u: RealMatrix,
    /// Y residuals `Φ = Y − T Qᵀ`.
    pub phi: RealMatrix,
    pub r2_y: f64,
}

/// Owner of one standardized feature block.
#[derive(Debug, Clone)]
pub struct FeatureContributor {
    id: PartyId,
    seed: u64,
    x: RealMatrix,
    params: StandardizationParams,
    a: Option<RealMatrix>,
    h_i_t: Option<RealMatrix>,
    c: Option<InvertibleMask>,
    share: Option<FcModelShare>,
    inference_x: Option<RealMatrix>,
}

impl FeatureContributor {
    pub(crate) fn new(index: usize, seed: u64, x: RealMatrix, params: StandardizationParams) -> Self {
        Self { id: PartyId::Fc(index), seed, x, params, a: None, h_i_t: None, c: None, share: None, inference_x: None }
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    /// The locally standardized block.
    pub fn block(&self) -> &RealMatrix {
        &self.x
    }

    pub fn standardization(&self) -> &StandardizationParams {
        &self.params
    }

    /// The issued key split `H_iᵀ` (n×n_i), once training has started.
    pub fn feature_key(&self) -> Option<&RealMatrix> {
        self.h_i_t.as_ref()
    }

    pub fn share(&self) -> Option<&FcModelShare> {
        self.share.as_ref()
    }

    fn trained(&self) -> Result<&FcModelShare, FederationError> {
        self.share.as_ref().ok_or(FederationError::NotTrained)
    }

    pub(crate) fn upload_masked_block(&mut self, bus: &mut dyn Transport) -> Result<(), FederationError> {
        let phase = Phase::Training;
        let a = take_matrix(bus, self.id, PartyId::Ta, PayloadTag::KeyA, phase)?;
        let h_i_t = take_matrix(bus, self.id, PartyId::Ta, PayloadTag::KeyHi, phase)?;
        let masked = masking::mask_features(&self.x, &a, &h_i_t)
            .map_err(|source| FederationError::Masking { party: self.id, source })?;
        bus.send(Message::matrix(self.id, PartyId::Csp, phase, PayloadTag::MaskedX, masked));
        self.a = Some(a);
        self.h_i_t = Some(h_i_t);
        self.share = None;
        Ok(())
    }

    pub(crate) fn upload_masked_key(
        &mut self,
        bus: &mut dyn Transport,
        masks: RecoveryMasks,
    ) -> Result<(), FederationError> {
        let h_i_t = self.h_i_t.as_ref().ok_or(FederationError::NotTrained)?;
        let n_i = h_i_t.ncols();
        let c = match masks {
            RecoveryMasks::Random => {
                let seed = rng::derive_seed(self.seed, "recovery/C");
                generate_invertible(n_i, seed).map_err(|_| FederationError::SingularLocalMask { party: self.id })?
            }
            RecoveryMasks::Identity => InvertibleMask::identity(n_i),
        };
        let masked = recovery::mask_local_key(c.matrix(), h_i_t);
        bus.send(Message::matrix(self.id, PartyId::Csp, Phase::Recovery, PayloadTag::MaskedHi, masked));
        self.c = Some(c);
        Ok(())
    }

    pub(crate) fn recover_share(&mut self, bus: &mut dyn Transport, n_total: usize) -> Result<(), FederationError> {
        let (me, phase) = (self.id, Phase::Recovery);
        let n_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyN, phase)?;
        let t_masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedT, phase)?;
        let w_masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedWI, phase)?;
        let p_masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedPI, phase)?;
        let b_masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedBI, phase)?;
        let a = self.a.as_ref().ok_or(FederationError::NotTrained)?;
        let c = self.c.take().ok_or(FederationError::NotTrained)?;
        let n_inv = invert_key(me, PayloadTag::KeyN, &n_key)?;

        let t = recovery::unmask_scores(a, &t_masked);
        let w = recovery::unmask_local(c.inverse(), &w_masked);
        let p = recovery::unmask_local(c.inverse(), &p_masked);
        let b = recovery::unmask_local_coefficients(c.inverse(), &b_masked, &n_inv);
        let theta = &self.x - &t * p.transpose();
        let r2_x = explained_variance_x(&p, self.x.nrows(), n_total)
            .map_err(|source| FederationError::Pls { party: me, source })?;
        self.share = Some(FcModelShare { t, w, p, b, theta, r2_x, r2_xy: None });
        Ok(())
    }

    pub(crate) fn upload_contribution(&self, bus: &mut dyn Transport) -> Result<(), FederationError> {
        let (me, phase) = (self.id, Phase::Contribution);
        let share = self.trained()?;
        let m_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyM, phase)?;
        let n_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyN, phase)?;
        let masked = m_key * (&self.x * &share.b) * n_key;
        bus.send(Message::matrix(me, PartyId::Csp, phase, PayloadTag::MaskedYhat, masked));
        Ok(())
    }

    pub(crate) fn finish_contribution(&mut self, bus: &mut dyn Transport, l: usize) -> Result<f64, FederationError> {
        let (me, phase) = (self.id, Phase::Contribution);
        let ss = match take(bus, me, PartyId::Csp, PayloadTag::SsResidual, phase)? {
            Payload::Scalar(v) => v,
            Payload::Matrix(_) => {
                return Err(FederationError::MissingMessage {
                    party: me,
                    from: PartyId::Csp,
                    tag: PayloadTag::SsResidual,
                    phase,
                })
            }
        };
        let r2 = recovery::residual_r2(ss, self.x.nrows(), l);
        self.share.as_mut().ok_or(FederationError::NotTrained)?.r2_xy = Some(r2);
        Ok(r2)
    }

    /// Checks and standardizes a new raw block with the training parameters.
    pub(crate) fn prepare_inference(&mut self, x_new: &RealMatrix) -> Result<(), FederationError> {
        self.trained()?;
        if x_new.ncols() != self.width() || x_new.nrows() == 0 {
            return Err(FederationError::DimensionMismatch {
                party: self.id,
                detail: format!("new block is {}x{}, expected m_new x {}", x_new.nrows(), x_new.ncols(), self.width()),
            });
        }
        let xs = self.params.apply(x_new).map_err(|source| FederationError::Pls { party: self.id, source })?;
        self.inference_x = Some(xs);
        Ok(())
    }

    /// Sends `M X_i B_i` and `M X_i H_i`; returns `M⁻¹` for unmasking.
    pub(crate) fn upload_inference(&mut self, bus: &mut dyn Transport) -> Result<RealMatrix, FederationError> {
        let (me, phase) = (self.id, Phase::Inference);
        let x = self.inference_x.take().ok_or(FederationError::NotTrained)?;
        let share = self.trained()?;
        let h_i_t = self.h_i_t.as_ref().ok_or(FederationError::NotTrained)?;
        let m_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyM, phase)?;
        expect_shape(me, "inference key", &m_key, (x.nrows(), x.nrows()))?;
        let y_hat = &m_key * (&x * &share.b);
        let masked_x = masking::mask_features(&x, &m_key, h_i_t)
            .map_err(|source| FederationError::Masking { party: me, source })?;
        bus.send(Message::matrix(me, PartyId::Csp, phase, PayloadTag::MaskedYhat, y_hat));
        bus.send(Message::matrix(me, PartyId::Csp, phase, PayloadTag::MaskedX, masked_x));
        invert_key(me, PayloadTag::KeyM, &m_key)
    }

    pub(crate) fn finish_inference(
        &self,
        bus: &mut dyn Transport,
        m_inv: &RealMatrix,
    ) -> Result<RealMatrix, FederationError> {
        let t = take_matrix(bus, self.id, PartyId::Csp, PayloadTag::MaskedT, Phase::Inference)?;
        Ok(m_inv * t)
    }
}

/// Owner of the standardized response block.
#[derive(Debug, Clone)]
pub struct LabelContributor {
    y: RealMatrix,
    params: StandardizationParams,
    a: Option<RealMatrix>,
    g: Option<RealMatrix>,
    share: Option<LcModelShare>,
}

impl LabelContributor {
    pub(crate) fn new(y: RealMatrix, params: StandardizationParams) -> Self {
        Self { y, params, a: None, g: None, share: None }
    }

    /// The locally standardized responses.
    pub fn targets(&self) -> &RealMatrix {
        &self.y
    }

    pub fn standardization(&self) -> &StandardizationParams {
        &self.params
    }

    pub fn share(&self) -> Option<&LcModelShare> {
        self.share.as_ref()
    }

    pub(crate) fn upload_masked_targets(&mut self, bus: &mut dyn Transport) -> Result<(), FederationError> {
        let (me, phase) = (PartyId::Lc, Phase::Training);
        let a = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyA, phase)?;
        let g = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyG, phase)?;
        let masked =
            masking::mask_targets(&self.y, &a, &g).map_err(|source| FederationError::Masking { party: me, source })?;
        bus.send(Message::matrix(me, PartyId::Csp, phase, PayloadTag::MaskedY, masked));
        self.a = Some(a);
        self.g = Some(g);
        self.share = None;
        Ok(())
    }

    pub(crate) fn upload_masked_key(&self, bus: &mut dyn Transport) -> Result<(), FederationError> {
        let (me, phase) = (PartyId::Lc, Phase::Recovery);
        let n_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyN, phase)?;
        let g = self.g.as_ref().ok_or(FederationError::NotTrained)?;
        expect_shape(me, "recovery key", &n_key, g.shape())?;
        bus.send(Message::matrix(me, PartyId::Csp, phase, PayloadTag::MaskedGt, recovery::mask_target_key(g, &n_key)));
        Ok(())
    }

    pub(crate) fn recover_share(&mut self, bus: &mut dyn Transport) -> Result<(), FederationError> {
        let (me, phase) = (PartyId::Lc, Phase::Recovery);
        let t_masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedT, phase)?;
        let q_masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedQ, phase)?;
        let u_masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedU, phase)?;
        let (a, g) = match (&self.a, &self.g) {
            (Some(a), Some(g)) => (a, g),
            _ => return Err(FederationError::NotTrained),
        };
        let t = recovery::unmask_scores(a, &t_masked);
        let q = recovery::unmask_y_loadings(g, &q_masked);
        let u = recovery::unmask_scores(a, &u_masked);
        let phi = &self.y - &t * q.transpose();
        let r2_y = explained_variance_y(&q, self.y.nrows(), self.y.ncols())
            .map_err(|source| FederationError::Pls { party: me, source })?;
        self.share = Some(LcModelShare { t, q, u, phi, r2_y });
        Ok(())
    }

    pub(crate) fn upload_contribution(&self, bus: &mut dyn Transport) -> Result<(), FederationError> {
        let (me, phase) = (PartyId::Lc, Phase::Contribution);
        let m_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyM, phase)?;
        let n_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyN, phase)?;
        bus.send(Message::matrix(me, PartyId::Csp, phase, PayloadTag::MaskedY, m_key * &self.y * n_key));
        Ok(())
    }

    /// Receives the inference key and returns its inverse.
    pub(crate) fn accept_inference_key(&self, bus: &mut dyn Transport) -> Result<RealMatrix, FederationError> {
        let me = PartyId::Lc;
        let m_key = take_matrix(bus, me, PartyId::Ta, PayloadTag::KeyM, Phase::Inference)?;
        invert_key(me, PayloadTag::KeyM, &m_key)
    }

    /// Unmasks the aggregated prediction and maps it back to raw units.
    pub(crate) fn finish_inference(
        &self,
        bus: &mut dyn Transport,
        m_inv: &RealMatrix,
    ) -> Result<RealMatrix, FederationError> {
        let me = PartyId::Lc;
        let masked = take_matrix(bus, me, PartyId::Csp, PayloadTag::MaskedYhat, Phase::Inference)?;
        let y_std: RealMatrix = m_inv * masked;
        self.params.invert(&y_std).map_err(|source| FederationError::Pls { party: me, source })
    }
}
