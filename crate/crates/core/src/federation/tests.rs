use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::linalg::{hstack, max_abs_diff, singular_values, sum_of_squares, vsplit};
use crate::pls::{standardize, PlsModel};
use crate::simulator::{builtin_config, generate_dataset};

fn gaussian(r: usize, c: usize, seed: u64) -> RealMatrix {
    let mut g = rng::from_seed(seed);
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut g))
}

fn random_blocks(m: usize, widths: &[usize], seed: u64) -> Vec<RealMatrix> {
    widths.iter().enumerate().map(|(i, &w)| gaussian(m, w, seed * 31 + i as u64)).collect()
}

fn stack_rows(parts: &[RealMatrix]) -> RealMatrix {
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.nrows()).copy_from(p);
        r += p.nrows();
    }
    out
}

fn trained(widths: &[usize], m: usize, l: usize, k: usize, seed: u64) -> (Federation, Vec<RealMatrix>, RealMatrix) {
    let blocks = random_blocks(m, widths, seed);
    let y = &hstack(&blocks).columns(0, 1).into_owned() * DMatrix::from_element(1, l, 1.0) + gaussian(m, l, seed + 99);
    let mut fed =
        Federation::new(FederationConfig::new(widths.to_vec(), m, l, k, seed), blocks.clone(), y.clone()).unwrap();
    fed.train().unwrap();
    (fed, blocks, y)
}

/// Per-component signs that align `a` to `b`, from column dot products.
fn signs(a: &RealMatrix, b: &RealMatrix) -> Vec<f64> {
    (0..a.ncols()).map(|j| a.column(j).dot(&b.column(j)).signum()).collect()
}

fn flip(a: &RealMatrix, s: &[f64]) -> RealMatrix {
    let mut out = a.clone();
    for (j, sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(*sj);
    }
    out
}

#[test]
fn single_block_coefficients_match_centralized_fit() {
    let x = gaussian(8, 3, 1);
    let y = gaussian(8, 1, 2) + x.columns(0, 1) * 0.5;
    let out = run_training(FederationConfig::new(vec![3], 8, 1, 2, 7), vec![x.clone()], y.clone()).unwrap();
    let central = PlsModel::fit(&x, &y, 2).unwrap();
    assert!(max_abs_diff(&out.fc_shares[0].b, central.coefficients()) < 1e-8);
}

#[test]
fn dataset_one_shape_loadings_match_up_to_sign() {
    let data = generate_dataset(&builtin_config(1).unwrap(), 120, 3).unwrap();
    let widths: Vec<usize> = data.x_blocks.iter().map(|b| b.ncols()).collect();
    let l = data.y.ncols();
    let out =
        run_training(FederationConfig::new(widths, 120, l, 4, 11), data.x_blocks.clone(), data.y.clone()).unwrap();
    let central = PlsModel::fit(&hstack(&data.x_blocks), &data.y, 4).unwrap();
    let c = central.components();
    let s = signs(&out.fc_shares[0].t, &c.x_scores);
    let p = stack_rows(&out.fc_shares.iter().map(|sh| sh.p.clone()).collect::<Vec<_>>());
    assert!(max_abs_diff(&flip(&p, &s), &c.x_loadings) < 1e-8);
}

#[test]
fn oversized_k_fails_before_any_message() {
    let cfg = FederationConfig::new(vec![2, 1], 10, 1, 4, 0);
    let err = Federation::new(cfg, random_blocks(10, &[2, 1], 1), gaussian(10, 1, 2)).unwrap_err();
    assert!(matches!(err, FederationError::InvalidConfig(_)));
    let cfg = FederationConfig::new(vec![3], 3, 1, 3, 0);
    assert!(cfg.validate().is_err());
}

#[test]
fn input_validation() {
    let cfg = FederationConfig::new(vec![2, 3], 10, 1, 2, 0);
    let err = Federation::new(cfg.clone(), random_blocks(10, &[2], 1), gaussian(10, 1, 2)).unwrap_err();
    assert_eq!(err, FederationError::WrongBlockCount { expected: 2, found: 1 });
    let err = Federation::new(cfg.clone(), random_blocks(10, &[2, 4], 1), gaussian(10, 1, 2)).unwrap_err();
    assert!(matches!(err, FederationError::DimensionMismatch { party: PartyId::Fc(2), .. }));
    let err = Federation::new(cfg.clone(), random_blocks(10, &[2, 3], 1), gaussian(9, 1, 2)).unwrap_err();
    assert!(matches!(err, FederationError::DimensionMismatch { party: PartyId::Lc, .. }));
    let mut blocks = random_blocks(10, &[2, 3], 1);
    blocks[1].column_mut(2).fill(4.0);
    let err = Federation::new(cfg, blocks, gaussian(10, 1, 2)).unwrap_err();
    assert!(matches!(err, FederationError::Pls { party: PartyId::Fc(2), source: PlsError::ZeroVarianceColumn(2) }));
}

#[test]
fn identity_recovery_masks_expose_plain_key_products() {
    let blocks = random_blocks(9, &[2, 3], 5);
    let y = gaussian(9, 2, 6);
    let mut cfg = FederationConfig::new(vec![2, 3], 9, 2, 2, 4);
    cfg.recovery_masks = RecoveryMasks::Identity;
    let mut fed = Federation::new(cfg, blocks, y).unwrap();
    fed.train().unwrap();
    let model = fed.service_provider().model().unwrap();
    for fc in fed.feature_contributors() {
        let h_i = fc.feature_key().unwrap().transpose();
        assert_eq!(fc.share().unwrap().w, &h_i * model.weights());
        assert_eq!(fc.share().unwrap().p, &h_i * model.x_loadings());
    }
}

#[test]
fn random_masks_recover_centralized_coefficients() {
    let (fed, blocks, y) = trained(&[2, 3], 10, 2, 3, 21);
    let central = PlsModel::fit(&hstack(&blocks), &y, 3).unwrap();
    let b = stack_rows(&fed.fc_shares().unwrap().iter().map(|s| s.b.clone()).collect::<Vec<_>>());
    assert!(max_abs_diff(&b, central.coefficients()) < 1e-8);
}

#[test]
fn service_provider_refuses_out_of_policy_requests() {
    let (fed, _, _) = trained(&[2, 3], 10, 2, 2, 22);
    let csp = fed.service_provider();
    let err = csp.request(PartyId::Fc(1), PayloadTag::MaskedQ).unwrap_err();
    assert!(matches!(err, FederationError::VisibilityViolation { to: PartyId::Fc(1), tag: PayloadTag::MaskedQ, .. }));
    assert!(matches!(csp.request(PartyId::Ta, PayloadTag::MaskedT), Err(FederationError::VisibilityViolation { .. })));
    assert!(matches!(csp.request(PartyId::Lc, PayloadTag::MaskedX), Err(FederationError::VisibilityViolation { .. })));
    assert!(csp.request(PartyId::Fc(2), PayloadTag::MaskedT).is_ok());
    assert!(csp.request(PartyId::Lc, PayloadTag::MaskedQ).is_ok());
}

#[test]
fn shares_satisfy_their_residual_identities() {
    let (fed, _, _) = trained(&[3, 2, 4], 15, 2, 3, 23);
    let shares = fed.fc_shares().unwrap();
    for (fc, share) in fed.feature_contributors().iter().zip(&shares) {
        assert!(max_abs_diff(&share.t, &shares[0].t) < 1e-10);
        assert!(max_abs_diff(&share.theta, &(fc.block() - &share.t * share.p.transpose())) < 1e-9);
        assert!(share.r2_xy.is_none());
    }
    let lc = fed.lc_share().unwrap();
    let y = fed.label_contributor().targets();
    assert!(max_abs_diff(&lc.phi, &(y - &lc.t * lc.q.transpose())) < 1e-9);
    assert!(max_abs_diff(&lc.t, &shares[0].t) < 1e-10);
}

#[test]
fn label_contributor_recovers_y_scores() {
    let (fed, blocks, y) = trained(&[2, 2], 12, 2, 2, 24);
    let central = PlsModel::fit(&hstack(&blocks), &y, 2).unwrap();
    let lc = fed.lc_share().unwrap();
    let s = signs(&lc.t, &central.components().x_scores);
    assert!(max_abs_diff(&flip(&lc.u, &s), &central.components().y_scores) < 1e-8);
}

#[test]
fn masked_features_keep_the_singular_values() {
    let (fed, _, _) = trained(&[3, 2], 14, 1, 2, 25);
    let plain: Vec<RealMatrix> = fed.feature_contributors().iter().map(|fc| fc.block().clone()).collect();
    let sv_plain = singular_values(&hstack(&plain));
    let sv_masked = singular_values(fed.service_provider().masked_features().unwrap());
    for (a, b) in sv_plain.iter().zip(&sv_masked) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn contribution_of_exact_linear_block_is_one() {
    let x = gaussian(12, 3, 31);
    let y = &x * DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
    let mut fed = Federation::new(FederationConfig::new(vec![3], 12, 1, 3, 1), vec![x], y).unwrap();
    fed.train().unwrap();
    let r2 = fed.contribution().unwrap();
    assert!((r2[0] - 1.0).abs() < 1e-9);
}

#[test]
fn contribution_matches_plaintext_recomputation() {
    let (mut fed, _, _) = trained(&[2, 3, 1], 16, 2, 3, 32);
    let r2 = fed.contribution().unwrap();
    let y = fed.label_contributor().targets().clone();
    let (m, l) = y.shape();
    for (i, fc) in fed.feature_contributors().iter().enumerate() {
        let share = fc.share().unwrap();
        let plain = 1.0 - sum_of_squares(&(&y - fc.block() * &share.b)) / (m * l) as f64;
        assert!((r2[i] - plain).abs() < 1e-8);
        assert_eq!(share.r2_xy, Some(r2[i]));
    }
}

#[test]
fn inference_on_training_rows_reproduces_training_outputs() {
    let (mut fed, blocks, y) = trained(&[2, 3], 14, 2, 2, 41);
    let central = PlsModel::fit(&hstack(&blocks), &y, 2).unwrap();
    let out = fed.infer(&blocks).unwrap();
    let t = &fed.fc_shares().unwrap()[0].t;
    for scores in &out.scores {
        assert!(max_abs_diff(scores, t) < 1e-8);
    }
    assert!(max_abs_diff(&out.predictions, &central.predict(&hstack(&blocks)).unwrap()) < 1e-8);
}

#[test]
fn inference_on_a_single_sample() {
    let (mut fed, blocks, y) = trained(&[2, 3], 14, 2, 2, 42);
    let central = PlsModel::fit(&hstack(&blocks), &y, 2).unwrap();
    let one: Vec<RealMatrix> = random_blocks(1, &[2, 3], 43);
    let out = fed.infer(&one).unwrap();
    assert_eq!(out.predictions.shape(), (1, 2));
    assert!(max_abs_diff(&out.predictions, &central.predict(&hstack(&one)).unwrap()) < 1e-8);
    let t_central = central.transform(&hstack(&one)).unwrap();
    let s = signs(&fed.fc_shares().unwrap()[0].t, &central.components().x_scores);
    assert!(max_abs_diff(&flip(&out.scores[0], &s), &t_central) < 1e-8);
}

#[test]
fn inference_rejects_wrong_widths_and_untrained_models() {
    let (mut fed, _, _) = trained(&[2, 3], 10, 1, 2, 44);
    let err = fed.infer(&random_blocks(4, &[2, 4], 1)).unwrap_err();
    assert!(matches!(err, FederationError::DimensionMismatch { party: PartyId::Fc(2), .. }));
    assert!(matches!(fed.infer(&random_blocks(4, &[2], 1)), Err(FederationError::WrongBlockCount { .. })));
    // A rejected request leaves the federation usable.
    fed.infer(&random_blocks(4, &[2, 3], 1)).unwrap();

    let cfg = FederationConfig::new(vec![2], 6, 1, 1, 0);
    let mut fresh = Federation::new(cfg, vec![gaussian(6, 2, 1)], gaussian(6, 1, 2)).unwrap();
    assert_eq!(fresh.infer(&[gaussian(2, 2, 3)]).unwrap_err(), FederationError::NotTrained);
    assert_eq!(fresh.contribution().unwrap_err(), FederationError::NotTrained);
    assert_eq!(fresh.lc_share().unwrap_err(), FederationError::NotTrained);
}

#[test]
fn honest_runs_pass_the_audit() {
    let (mut fed, blocks, _) = trained(&[2, 3, 2], 12, 2, 2, 51);
    assert!(audit_views(fed.transcript()).passed());
    fed.contribution().unwrap();
    fed.infer(&blocks).unwrap();
    let report = audit_views(fed.transcript());
    assert!(report.passed(), "{:?}", report.violations);
    let ta = &report.views[&PartyId::Ta];
    assert!(ta.received.is_empty());
    assert!(ta.sent.iter().all(|t| t.expected_protection() == Protection::Key));
    let lc = &report.views[&PartyId::Lc];
    assert!(!lc.received.iter().any(|t| matches!(
        t,
        PayloadTag::MaskedX | PayloadTag::MaskedWI | PayloadTag::MaskedPI | PayloadTag::MaskedBI
    )));
}

#[test]
fn injected_leak_is_flagged() {
    let (mut fed, _, _) = trained(&[2, 3], 10, 2, 2, 52);
    let q = fed.service_provider().model().unwrap().y_loadings().clone();
    let bus = fed.transport_mut();
    bus.send(Message::matrix(PartyId::Csp, PartyId::Fc(1), Phase::Recovery, PayloadTag::MaskedQ, q));
    let report = audit_views(fed.transcript());
    assert_eq!(report.violations.len(), 1);
    let v = &report.violations[0];
    assert_eq!((v.to, v.tag, v.rule), (PartyId::Fc(1), PayloadTag::MaskedQ, Rule::NotEntitled));
}

#[test]
fn every_protocol_message_appears_once() {
    let g = 3;
    let (mut fed, blocks, _) = trained(&[2, 1, 2], 10, 2, 2, 53);
    let count = |phase| fed.transcript().in_phase(phase).count();
    // Keys A and H_i per FC, A and G for the LC, g + 1 uploads.
    assert_eq!(count(Phase::Training), 2 * g + 2 + g + 1);
    // N and T' to everyone, masked keys from everyone, 3 shares per FC, Q' and U'.
    assert_eq!(count(Phase::Recovery), 2 * (g + 1) + (g + 1) + 3 * g + 2);
    fed.contribution().unwrap();
    assert_eq!(fed.transcript().in_phase(Phase::Contribution).count(), 2 * (g + 1) + (g + 1) + g);
    fed.infer(&blocks).unwrap();
    assert_eq!(fed.transcript().in_phase(Phase::Inference).count(), (g + 1) + 2 * g + g + 1);
    let mut seen = std::collections::HashSet::new();
    for r in fed.transcript().records() {
        assert!(seen.insert((r.phase, r.from, r.to, r.tag)), "duplicate {r:?}");
    }
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let (mut fed, blocks, _) = trained(&[2, 3], 11, 2, 2, 61);
        fed.contribution().unwrap();
        let out = fed.infer(&blocks).unwrap();
        let shares: Vec<FcModelShare> = fed.fc_shares().unwrap().into_iter().cloned().collect();
        (fed.transcript().to_jsonl(), shares, fed.lc_share().unwrap().clone(), out)
    };
    assert_eq!(run(), run());
}

#[test]
fn transcript_round_trips_through_jsonl() {
    let (fed, _, _) = trained(&[2, 2], 8, 1, 2, 62);
    let text = fed.transcript().to_jsonl();
    assert_eq!(&ProtocolTranscript::read_jsonl(text.as_bytes()).unwrap(), fed.transcript());
}

#[test]
fn fc_explained_variance_shares_sum_to_the_centralized_total() {
    let (fed, blocks, y) = trained(&[2, 3, 2], 20, 2, 3, 63);
    let central = PlsModel::fit(&hstack(&blocks), &y, 3).unwrap();
    let total: f64 = fed.fc_shares().unwrap().iter().map(|s| s.r2_x).sum();
    let expected = crate::pls::explained_variance_x(&central.components().x_loadings, 20, 7).unwrap();
    assert!((total - expected).abs() < 1e-10);
    let y_ev = crate::pls::explained_variance_y(&central.components().y_loadings, 20, 2).unwrap();
    assert!((fed.lc_share().unwrap().r2_y - y_ev).abs() < 1e-10);
}

#[test]
fn block_based_keys_give_the_same_model() {
    let blocks = random_blocks(30, &[3, 4], 71);
    let y = gaussian(30, 2, 72);
    let mut cfg = FederationConfig::new(vec![3, 4], 30, 2, 3, 5);
    cfg.mask_method = crate::masking::OrthogonalMethod::BlockBased { block_size: 8 };
    let out = run_training(cfg, blocks.clone(), y.clone()).unwrap();
    let central = PlsModel::fit(&hstack(&blocks), &y, 3).unwrap();
    let b = stack_rows(&out.fc_shares.iter().map(|s| s.b.clone()).collect::<Vec<_>>());
    assert!(max_abs_diff(&b, central.coefficients()) < 1e-8);
}

fn federation_case() -> impl Strategy<Value = (Vec<usize>, usize, usize, usize, u64)> {
    (prop::collection::vec(1usize..=6, 1..=3), 1usize..=3, 1usize..=3, any::<u64>()).prop_flat_map(
        |(widths, l, k, seed)| {
            let n: usize = widths.iter().sum();
            let k = k.min(n);
            let min_m = (n + 2).max(k + 2).max(6);
            (Just(widths), min_m..=40, Just(l), Just(k), Just(seed))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recovery_is_lossless((widths, m, l, k, seed) in federation_case()) {
        let blocks = random_blocks(m, &widths, seed % 1_000_000);
        let y = gaussian(m, l, seed.wrapping_add(17));
        let cfg = FederationConfig::new(widths.clone(), m, l, k, seed);
        let out = run_training(cfg, blocks.clone(), y.clone()).unwrap();
        let central = PlsModel::fit(&hstack(&blocks), &y, k).unwrap();
        let c = central.components();
        let s = signs(&out.fc_shares[0].t, &c.x_scores);
        let n_parts: Vec<usize> = widths.clone();
        let w_parts = vsplit(&c.weights, &n_parts);
        let p_parts = vsplit(&c.x_loadings, &n_parts);
        let b_parts = vsplit(&c.coefficients, &n_parts);
        for (i, share) in out.fc_shares.iter().enumerate() {
            prop_assert!(max_abs_diff(&flip(&share.t, &s), &c.x_scores) < 1e-8);
            prop_assert!(max_abs_diff(&flip(&share.w, &s), &w_parts[i]) < 1e-8);
            prop_assert!(max_abs_diff(&flip(&share.p, &s), &p_parts[i]) < 1e-8);
            prop_assert!(max_abs_diff(&share.b, &b_parts[i]) < 1e-8);
        }
        prop_assert!(max_abs_diff(&flip(&out.lc_share.q, &s), &c.y_loadings) < 1e-8);
        prop_assert!(audit_views(&out.transcript).passed());
    }
}

#[test]
fn standardization_is_local_and_matches_global() {
    let blocks = random_blocks(10, &[2, 3], 81);
    let fed =
        Federation::new(FederationConfig::new(vec![2, 3], 10, 1, 1, 0), blocks.clone(), gaussian(10, 1, 1)).unwrap();
    let (global, _) = standardize(&hstack(&blocks)).unwrap();
    let local: Vec<RealMatrix> = fed.feature_contributors().iter().map(|fc| fc.block().clone()).collect();
    assert_eq!(hstack(&local), global);
}
