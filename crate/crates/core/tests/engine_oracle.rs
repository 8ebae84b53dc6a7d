mod common;

use common::*;
use tp_core::engine::{
    extract_embedding, extract_embedding_vanilla, multi_prompt_embedding, Extractor,
};
use tp_core::model::{embed_tokens, forward_range, AttentionMask};
use tp_core::numerics::rms_norm;
use tp_core::prompts::{builtin, render};
use tp_core::{synth, PstInit, TpConfig};

#[test]
fn four_layer_model_matches_reference_pipeline() {
    let w = small_model(7);
    let v = small_vocab();
    let t = builtin("prompteol").unwrap();
    let tp = TpConfig {
        end_layer: 3,
        exit_layer: 4,
        ..TpConfig::defaults_for(4)
    };
    for s in synth::sentences(7, 10) {
        let r = render(&t, &s, 1, v).unwrap();
        let got = extract_embedding(&w, &r, &tp).unwrap();
        let want = reference_embedding(&w, &r, &tp);
        assert_eq!(max_abs_diff(&got.vector, &want), 0.0);
        assert_eq!(bits(&got.vector), bits(&want));
    }
}

#[test]
fn every_init_and_mask_matches_reference() {
    let w = small_model(3);
    let v = small_vocab();
    let inits = [
        PstInit::Zero,
        PstInit::One,
        PstInit::Uniform01,
        PstInit::Gaussian,
        PstInit::ExistingToken(100),
    ];
    let s = &synth::sentences(8, 1)[0];
    for init in inits {
        for mask in [
            tp_core::model::MaskKind::Causal,
            tp_core::model::MaskKind::BidirLastToken,
            tp_core::model::MaskKind::BidirInputSentence,
        ] {
            let tp = TpConfig {
                pst_init: init,
                mask,
                n_pst: 2,
                end_layer: 3,
                resume_layer: Some(4),
                exit_layer: 4,
                ..TpConfig::defaults_for(4)
            };
            let r = render(&builtin("pretended-cot").unwrap(), s, 2, v).unwrap();
            let got = extract_embedding(&w, &r, &tp).unwrap();
            assert_eq!(bits(&got.vector), bits(&reference_embedding(&w, &r, &tp)), "{init:?} {mask:?}");
        }
    }
}

#[test]
fn vanilla_at_last_layer_is_normed_final_row() {
    let w = small_model(5);
    let v = small_vocab();
    let r = render(&builtin("prompteol").unwrap(), "The cat sleeps.", 0, v).unwrap();
    let h0 = embed_tokens(&w, &r.seq, None).unwrap();
    let h = forward_range(&w, &h0, 0, 4, &AttentionMask::causal(), None).unwrap();
    let want = rms_norm(h.states.row(r.set_index), &w.final_norm, w.config.norm_eps).unwrap();
    let got = extract_embedding_vanilla(&w, &r, 4).unwrap();
    assert_eq!(bits(&got.vector), bits(&want));
    assert_eq!(bits(&got.vector), bits(&extract_embedding_vanilla(&w, &r, 4).unwrap().vector));
}

#[test]
fn two_template_mean_matches_separate_extractions() {
    let w = small_model(9);
    let v = small_vocab();
    let ts = [builtin("prompteol").unwrap(), builtin("prompt-b").unwrap()];
    let tp = TpConfig::defaults_for(4);
    let s = "The quiet owl waits near the river.";
    let got = multi_prompt_embedding(&w, v, s, &ts, &tp).unwrap();
    let a = extract_embedding(&w, &render(&ts[0], s, 1, v).unwrap(), &tp).unwrap();
    let b = extract_embedding(&w, &render(&ts[1], s, 1, v).unwrap(), &tp).unwrap();
    for ((g, x), y) in got.vector.iter().zip(&a.vector).zip(&b.vector) {
        assert_eq!(*g, (x + y) / 2.0);
    }
    assert_eq!(got.position, None);
}

#[test]
fn rendered_length_grows_by_placeholder_count() {
    let v = small_vocab();
    let t = builtin("prompteol").unwrap();
    for s in synth::sentences(4, 20) {
        let base = render(&t, &s, 0, v).unwrap().len();
        for n in 1..=3 {
            assert_eq!(render(&t, &s, n, v).unwrap().len(), base + n);
        }
    }
}

#[test]
fn extractor_uses_the_template_prefix_cache() {
    let w = small_model(2);
    let v = small_vocab();
    let t = builtin("prompteol").unwrap();
    let tp = TpConfig::defaults_for(4);
    let ex = Extractor::new(&w, v, t.clone(), tp.clone(), true).unwrap();
    let s = "The brave pilot crosses the bridge.";
    let r = render(&t, s, 1, v).unwrap();
    assert_eq!(ex.cache().unwrap().prefix_len(), r.pst_positions()[0]);
    assert_eq!(bits(&ex.embed(s).unwrap().vector), bits(&reference_embedding(&w, &r, &tp)));
}
