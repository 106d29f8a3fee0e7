#![allow(dead_code)]

pub mod cohort;
pub mod grad_cases;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volformer::gradcheck::GradCheck;
use volformer::nn::ParamStore;
use volformer::Tensor;

pub const INSTANCES: u64 = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape).unwrap()
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape, -1.0, 1.0)
}

/// Runs `check` on `INSTANCES` seeds and asserts every instance passes.
pub fn suite(name: &str, check: impl Fn(u64) -> GradCheck) -> GradCheck {
    let mut worst: Option<GradCheck> = None;
    for seed in 0..INSTANCES {
        let r = check(seed);
        assert!(r.passed(), "{name} seed {seed}: {r:?}");
        if worst.as_ref().is_none_or(|w| r.max_rel_err > w.max_rel_err) {
            worst = Some(r);
        }
    }
    let w = worst.unwrap();
    eprintln!("{name}: worst rel-err {:.2e} ({} checked, {} skipped)", w.max_rel_err, w.checked, w.skipped);
    w
}

/// Store with a deterministic random fill, including zero-initialized
/// tensors, so that every parameter has a generic gradient.
pub fn jitter(store: &mut ParamStore, seed: u64, scale: f64) {
    let mut r = rng(seed ^ 0xa11);
    let ids: Vec<_> = store.ids().filter(|&id| store.spec(id).trainable).collect();
    for id in ids {
        for v in store.value_mut(id) {
            *v += r.random_range(-scale..scale);
        }
    }
}
