mod common;

use common::*;
use mscnn::fusion::FusionMode;
use mscnn::network::{DecoderVariant, FusionPoint};

const PRIMITIVE_TOL: f64 = 1e-6;
const NETWORK_TOL: f64 = 1e-5;

#[test]
fn primitives_match_finite_differences() {
    for (name, err) in primitive_gradient_errors() {
        assert!(err < PRIMITIVE_TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn fusion_block_matches_finite_differences() {
    for mode in [FusionMode::Additive, FusionMode::Multiplicative] {
        let err = fusion_gradient_error(mode);
        assert!(err < PRIMITIVE_TOL, "{mode:?}: relative error {err:e}");
    }
}

#[test]
fn single_branch_matches_finite_differences() {
    for variant in [DecoderVariant::Full, DecoderVariant::PaddingUpsampling, DecoderVariant::AverageUpPooling] {
        let cfg = tiny_config(variant, FusionPoint::Reconstruction, FusionMode::Additive);
        let err = branch_gradient_error(&cfg, 7);
        assert!(err < NETWORK_TOL, "{variant}: relative error {err:e}");
    }
}

#[test]
fn every_decoder_matches_finite_differences() {
    for (i, variant) in all_decoders().into_iter().enumerate() {
        let cfg = slim_config(variant, FusionPoint::Reconstruction, FusionMode::Additive);
        let err = network_gradient_error(cfg, 1e-4, 5e-4, 30 + i as u64);
        assert!(err < NETWORK_TOL, "{variant}: relative error {err:e}");
    }
}

#[test]
fn fusion_points_and_modes_match_finite_differences() {
    for point in [FusionPoint::Reconstruction, FusionPoint::Features] {
        for mode in [FusionMode::Additive, FusionMode::Multiplicative] {
            let cfg = tiny_config(DecoderVariant::Full, point, mode);
            let err = network_gradient_error(cfg, 1e-3, 5e-4, 11);
            assert!(err < NETWORK_TOL, "{point:?}/{mode:?}: relative error {err:e}");
        }
    }
}

#[test]
fn feature_penalty_gradient_is_exact_without_data_term_noise() {
    // Large penalty weight makes the regulariser dominate the objective.
    let cfg = tiny_config(DecoderVariant::AverageUpPooling, FusionPoint::Reconstruction, FusionMode::Additive);
    let err = network_gradient_error(cfg, 10.0, 0.0, 5);
    assert!(err < NETWORK_TOL, "relative error {err:e}");
}
