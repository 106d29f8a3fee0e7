use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// One forward evaluation over a parameter store.
///
/// Parameter leaves are created lazily, once per id, so a weight shared by
/// several layers accumulates all of its gradient contributions.
pub struct Forward<'a> {
    params: &'a ParamStore,
    train: bool,
    track_grads: bool,
    leaves: RefCell<Vec<Option<Tensor>>>,
    rng: RefCell<ChaCha8Rng>,
    bn_updates: RefCell<Vec<BnUpdate>>,
}

impl<'a> Forward<'a> {
    /// Training mode: batch statistics, dropout active, gradients tracked.
    pub fn train(params: &'a ParamStore, seed: u64) -> Self {
        Self::new(params, true, true, seed)
    }

    /// Inference mode: running statistics, no dropout, no history.
    pub fn eval(params: &'a ParamStore) -> Self {
        Self::new(params, false, false, 0)
    }

    pub fn new(params: &'a ParamStore, train: bool, track_grads: bool, seed: u64) -> Self {
        Forward {
            params,
            train,
            track_grads,
            leaves: RefCell::new(vec![None; params.len()]),
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            bn_updates: RefCell::new(Vec::new()),
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn store(&self) -> &ParamStore {
        self.params
    }

    pub fn param(&self, id: ParamId) -> Tensor {
        let mut leaves = self.leaves.borrow_mut();
        leaves[id.index()]
            .get_or_insert_with(|| {
                let spec = self.params.spec(id);
                let value = self.params.value(id);
                assert_eq!(value.len(), spec.numel(), "parameter {} is not materialized", spec.name);
                Tensor::leaf(value.to_vec(), &spec.shape, self.track_grads && spec.trainable)
                    .expect("parameter shapes are validated at registration")
            })
            .clone()
    }

    /// Running statistics are read straight from the store.
    pub fn buffer(&self, id: ParamId) -> &[f64] {
        self.params.value(id)
    }

    pub fn dropout(&self, x: &Tensor, rate: f64) -> Tensor {
        if !self.train || rate <= 0.0 {
            return x.clone();
        }
        x.dropout(rate, &mut *self.rng.borrow_mut())
    }

    pub(crate) fn push_bn_update(&self, update: BnUpdate) {
        self.bn_updates.borrow_mut().push(update);
    }

    pub fn take_bn_updates(&self) -> Vec<BnUpdate> {
        std::mem::take(&mut *self.bn_updates.borrow_mut())
    }

    /// Gradients of every parameter leaf touched in this pass, by id.
    pub fn gradients(&self) -> Vec<(ParamId, Vec<f64>)> {
        self.leaves
            .borrow()
            .iter()
            .enumerate()
            .filter_map(|(i, leaf)| {
                let g = leaf.as_ref()?.grad()?;
                Some((ParamId(i), g))
            })
            .collect()
    }
}

/// Folds batch statistics into running estimates:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate], momentum: f64) {
    for u in updates {
        for (id, batch) in [(u.running_mean, &u.mean), (u.running_var, &u.var)] {
            for (r, b) in store.value_mut(id).iter_mut().zip(batch) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
    }
}
