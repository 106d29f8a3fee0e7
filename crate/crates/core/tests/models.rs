//! Architecture-level properties and analytic cost scaling.

mod common;

use common::{jitter, rng, uniform};
use proptest::prelude::*;
use volformer::arch::{build_model, Family, Model, ModelConfig, StackShape, Views};
use volformer::data::View;
use volformer::nn::{Forward, ParamStore};
use volformer::profile::{count_macs, profile_config, time_inference, Timing};
use volformer::Tensor;

fn sag_views(cfg: &ModelConfig, seed: u64) -> Views {
    let s = cfg.input(View::Sag).unwrap();
    Views::from([(View::Sag, uniform(&mut rng(seed), &[s.slices, 1, s.height, s.width], 0.0, 1.0))])
}

fn logits(model: &Model, views: &Views) -> Vec<f64> {
    model.logits(&Forward::eval(&model.store), std::slice::from_ref(views)).unwrap().to_vec()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Moves the rows of a `[k, d]` table so that row `i` lands at `perm[i]`'s
/// source position, matching `index_select(perm)` on the slices.
fn permute_rows(store: &mut ParamStore, name: &str, perm: &[usize]) {
    let id = store.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let d = store.spec(id).shape[1];
    let old = store.value(id).to_vec();
    let new: Vec<f64> = perm.iter().flat_map(|&src| old[src * d..(src + 1) * d].to_vec()).collect();
    store.set_value(id, new).unwrap();
}

#[test]
fn trf_logits_follow_slices_only_with_their_positions() {
    let cfg = ModelConfig::toy(Family::Trf2d);
    let mut model = build_model(&cfg, 4).unwrap();
    jitter(&mut model.store, 4, 0.05);
    let views = sag_views(&cfg, 9);
    let base = logits(&model, &views);

    let k = cfg.input(View::Sag).unwrap().slices;
    let perm: Vec<usize> = (0..k).map(|i| (i * 3 + 1) % k).collect();
    let shuffled = Views::from([(View::Sag, views[&View::Sag].index_select(&perm).unwrap())]);
    let alone = logits(&model, &shuffled);
    assert!(max_diff(&base, &alone) > 1e-6, "slice order should matter without the positions");

    let name = model
        .store
        .specs()
        .iter()
        .map(|s| s.name.clone())
        .find(|n| n.contains("pos_embed"))
        .unwrap();
    permute_rows(&mut model.store, &name, &perm);
    let both = logits(&model, &shuffled);
    assert!(max_diff(&base, &both) < 1e-10, "{base:?} vs {both:?}");
}

#[test]
fn build_is_deterministic_and_seed_dependent() {
    for family in [Family::Trf2d, Family::BiLstm2d, Family::Conv3d] {
        let cfg = ModelConfig::toy(family);
        let a = build_model(&cfg, 7).unwrap().store.to_checkpoint();
        assert_eq!(a, build_model(&cfg, 7).unwrap().store.to_checkpoint());
        assert_ne!(a, build_model(&cfg, 8).unwrap().store.to_checkpoint());
    }
}

#[test]
fn costs_do_not_depend_on_parameter_values() {
    for family in [Family::Fc2d, Family::MultiviewIndividual, Family::Conv2Plus1d] {
        let cfg = ModelConfig::toy(family);
        let planned = profile_config(&cfg).unwrap();
        let mut built = build_model(&cfg, 1).unwrap();
        jitter(&mut built.store, 1, 1.0);
        let counted = count_macs(&built).unwrap();
        assert_eq!((planned.total_macs, planned.total_params), (counted.total_macs, counted.total_params));
        assert_eq!(counted.total_params, built.store.trainable_count());
    }
}

fn with_slices(cfg: &ModelConfig, k: usize) -> ModelConfig {
    let mut c = cfg.clone();
    let s = c.input(View::Sag).unwrap();
    c.inputs.insert(View::Sag, StackShape::new(k, s.height, s.width));
    c
}

fn encoder_macs(cfg: &ModelConfig) -> u64 {
    profile_config(cfg).unwrap().layers.iter().filter(|l| l.name.starts_with("encoder")).map(|l| l.macs).sum()
}

#[test]
fn doubling_slices_doubles_encoder_and_quadruples_scores() {
    for base in [ModelConfig::toy(Family::Trf2d), ModelConfig::full_scale(Family::Trf2d)] {
        let k = base.input(View::Sag).unwrap().slices;
        let (one, two) = (with_slices(&base, k), with_slices(&base, 2 * k));
        assert!(encoder_macs(&one) > 0);
        assert_eq!(encoder_macs(&two), 2 * encoder_macs(&one));
        let (r1, r2) = (profile_config(&one).unwrap(), profile_config(&two).unwrap());
        // the class token makes the sequence k + 1 long
        let (l1, l2) = (k as u64 + 1, 2 * k as u64 + 1);
        assert_eq!(r1.attention_score_macs % (l1 * l1), 0);
        assert_eq!(r2.attention_score_macs * l1 * l1, r1.attention_score_macs * l2 * l2);
        let ratio = r2.attention_score_macs as f64 / r1.attention_score_macs as f64;
        assert!((3.5..=4.0).contains(&ratio), "score growth {ratio}");
    }
}

#[test]
fn toy_timing_grows_with_slices() {
    let base = ModelConfig::toy(Family::Trf2d);
    let median = |k: usize| match time_inference(&with_slices(&base, k), 2, 9, 0).unwrap() {
        Timing::Measured { median_ms, iqr_ms, .. } => {
            assert!(iqr_ms >= 0.0 && iqr_ms.is_finite());
            median_ms
        }
        Timing::NotRunnable { reason } => panic!("toy model not timed: {reason}"),
    };
    let (a, b) = (median(4), median(16));
    assert!(b > a, "k=16 median {b} ms not above k=4 median {a} ms");
}

fn invalid_config() -> impl Strategy<Value = ModelConfig> {
    (0usize..6, 1usize..5).prop_map(|(what, n)| {
        let mut c = ModelConfig::toy(Family::Trf2d);
        match what {
            0 => c.trf_heads = c.trf_dim + n,
            1 => c.trf_dim = 4 * n + 1,
            2 => c.num_classes = 0,
            3 => c.views = vec![],
            4 => c.inputs.clear(),
            _ => c.trf_mlp_ratio = -(n as f64),
        }
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn invalid_configs_never_build(cfg in invalid_config()) {
        prop_assert!(build_model(&cfg, 0).is_err());
        prop_assert!(Model::plan(&cfg).is_err());
    }

    #[test]
    fn softmax_probabilities_sum_to_one(seed in 0u64..1000) {
        let cfg = ModelConfig::toy(Family::Fc2d);
        let model = build_model(&cfg, seed).unwrap();
        let p = model.probabilities(&Forward::eval(&model.store), &[sag_views(&cfg, seed)]).unwrap();
        let sum: f64 = p.to_vec().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert_eq!(p.shape(), &[1, 3][..]);
    }
}

#[test]
fn shape_mismatch_is_rejected_before_forward() {
    let cfg = ModelConfig::toy(Family::Trf2d);
    let model = build_model(&cfg, 0).unwrap();
    let wrong = Views::from([(View::Sag, Tensor::zeros(&[3, 1, 32, 32]))]);
    assert!(model.logits(&Forward::eval(&model.store), &[wrong]).is_err());
}
