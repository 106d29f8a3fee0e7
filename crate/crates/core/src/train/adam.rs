use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam moments for every trainable tensor of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.specs().iter().map(|s| vec![0.0; s.numel()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. Weight decay is decoupled: every trainable tensor first
    /// shrinks by `lr * weight_decay * p`, then tensors with a gradient take
    /// the bias-corrected Adam step. A non-finite gradient aborts before any
    /// parameter changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Vec<f64>)], lr: f64, weight_decay: f64) -> Result<()> {
        for (id, g) in grads {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence(format!("non-finite gradient in {}", store.spec(*id).name)));
            }
        }
        self.t += 1;
        if weight_decay != 0.0 {
            let ids: Vec<ParamId> = store.ids().filter(|&id| store.spec(id).trainable).collect();
            for id in ids {
                store.value_mut(id).iter_mut().for_each(|p| *p -= lr * weight_decay * *p);
            }
        }
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for (id, g) in grads {
            if !store.spec(*id).trainable {
                continue;
            }
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (((p, gi), mi), vi) in store.value_mut(*id).iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPS);
            }
        }
        Ok(())
    }
}

/// Scales gradients so their global L2 norm is at most `max_norm`; returns
/// the norm before scaling.
pub fn clip_gradients(grads: &mut [(ParamId, Vec<f64>)], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|(_, g)| g.iter_mut().for_each(|x| *x *= s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;

    fn store(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.register("w".into(), vec![1], Init::Zeros, true).unwrap();
        s.materialize(0);
        s.set_value(id, vec![v]).unwrap();
        (s, id)
    }

    #[test]
    fn first_step_is_minus_lr() {
        let (mut s, id) = store(0.5);
        let mut adam = Adam::new(&s);
        adam.step(&mut s, &[(id, vec![1.0])], 1e-3, 0.0).unwrap();
        assert!((s.value(id)[0] - (0.5 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn zero_grads_and_decay_only() {
        let (mut s, id) = store(2.0);
        let mut adam = Adam::new(&s);
        adam.step(&mut s, &[(id, vec![0.0])], 1e-2, 0.0).unwrap();
        assert_eq!(s.value(id)[0], 2.0);
        for _ in 0..3 {
            adam.step(&mut s, &[(id, vec![0.0])], 1e-2, 0.5).unwrap();
        }
        assert!((s.value(id)[0] - 2.0 * (1.0 - 5e-3f64).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_names_the_tensor() {
        let (mut s, id) = store(1.0);
        let err = Adam::new(&s).step(&mut s, &[(id, vec![f64::NAN])], 1e-3, 0.0).unwrap_err();
        assert!(err.to_string().contains("w"), "{err}");
        assert_eq!(s.value(id)[0], 1.0);
    }
}
