#![allow(dead_code)]

//! Named finite-difference cases over ops, blocks and toy architectures.
//! Each case maps an instance seed to a [`GradCheck`].

use rand::Rng;
use volformer::arch::{build_model, Family, ModelConfig, Views};
use volformer::gradcheck::{check_fn, check_params, random_projection, GradCheck};
use volformer::nn::{
    AttentionConfig, BatchNorm, BiLstm, Bottleneck, Conv, Forward, LayerNorm, Linear, MultiHeadAttention,
    ParamStore, ResidualConv2Plus1d, Scope, TransformerBlock,
};
use volformer::tensor::PoolKind;
use volformer::train::focal_loss;
use volformer::{Result, Tensor};

use super::{jitter, randn, rng, uniform};

pub type Case = (&'static str, Box<dyn Fn(u64) -> GradCheck>);

fn op(inputs: &[Tensor], seed: u64, f: impl Fn(&[Tensor]) -> Result<Tensor>) -> GradCheck {
    check_fn(inputs, |xs| random_projection(&f(xs)?, seed + 100)).unwrap()
}

fn unary(seed: u64, lo: f64, hi: f64, f: fn(&Tensor) -> Tensor) -> GradCheck {
    op(&[uniform(&mut rng(seed), &[7], lo, hi)], seed, |x| Ok(f(&x[0])))
}

/// Primitive tensor ops and small composites.
pub fn op_cases() -> Vec<Case> {
    vec![
        ("matmul 3x4.4x2", Box::new(|s| {
            let mut r = rng(s);
            op(&[randn(&mut r, &[3, 4]), randn(&mut r, &[4, 2])], s, |x| x[0].matmul(&x[1]))
        })),
        ("conv1d strided + bias", Box::new(|s| {
            let mut r = rng(s);
            let (x, w, b) = (randn(&mut r, &[2, 7]), randn(&mut r, &[3, 2, 3]), randn(&mut r, &[3]));
            op(&[x, w, b], s, |x| x[0].conv(&x[1], Some(&x[2]), &[2], &[1]))
        })),
        ("conv2d 2x5x5 -> 3", Box::new(|s| {
            let mut r = rng(s);
            let (x, w) = (randn(&mut r, &[2, 5, 5]), randn(&mut r, &[3, 2, 3, 3]));
            op(&[x, w], s, |x| x[0].conv(&x[1], None, &[1, 1], &[0, 0]))
        })),
        ("conv2d batched strided padded", Box::new(|s| {
            let mut r = rng(s);
            let (x, w, b) = (randn(&mut r, &[2, 2, 6, 5]), randn(&mut r, &[3, 2, 3, 3]), randn(&mut r, &[3]));
            op(&[x, w, b], s, |x| x[0].conv(&x[1], Some(&x[2]), &[2, 2], &[1, 1]))
        })),
        ("conv3d padded", Box::new(|s| {
            let mut r = rng(s);
            let (x, w) = (randn(&mut r, &[2, 3, 4, 4]), randn(&mut r, &[2, 2, 3, 3, 3]));
            op(&[x, w], s, |x| x[0].conv(&x[1], None, &[1, 1, 1], &[1, 1, 1]))
        })),
        ("softmax length 5", Box::new(|s| {
            op(&[uniform(&mut rng(s), &[5], -3.0, 3.0)], s, |x| x[0].softmax(0))
        })),
        ("softmax 3x4 either axis", Box::new(|s| {
            let axis = s as usize % 2;
            op(&[uniform(&mut rng(s), &[3, 4], -3.0, 3.0)], s, move |x| x[0].softmax(axis))
        })),
        ("layer_norm affine", Box::new(|s| {
            let mut r = rng(s);
            let (x, g, b) = (randn(&mut r, &[3, 6]), uniform(&mut r, &[6], 0.5, 1.5), randn(&mut r, &[6]));
            op(&[x, g, b], s, |x| x[0].layer_norm(1, Some(&x[1]), Some(&x[2]), 1e-5))
        })),
        ("batch_norm train", Box::new(|s| {
            let mut r = rng(s);
            let (x, g, b) = (randn(&mut r, &[3, 2, 4]), uniform(&mut r, &[2], 0.5, 1.5), randn(&mut r, &[2]));
            op(&[x, g, b], s, |x| Ok(x[0].batch_norm(&x[1], &x[2], 1e-5)?.0))
        })),
        ("batch_norm eval", Box::new(|s| {
            let mut r = rng(s);
            let (x, g, b) = (randn(&mut r, &[2, 3, 3]), randn(&mut r, &[3]), randn(&mut r, &[3]));
            op(&[x, g, b], s, |x| x[0].batch_norm_eval(&x[1], &x[2], &[0.1, -0.2, 0.3], &[1.0, 0.5, 2.0], 1e-5))
        })),
        ("avg_pool 2x2", Box::new(|s| {
            op(&[randn(&mut rng(s), &[2, 6, 6])], s, |x| x[0].pool(PoolKind::Avg, &[2, 2], &[2, 2], &[0, 0]))
        })),
        ("avg_pool 3x3 padded", Box::new(|s| {
            op(&[randn(&mut rng(s), &[1, 2, 5, 5])], s, |x| x[0].pool(PoolKind::Avg, &[3, 3], &[2, 2], &[1, 1]))
        })),
        ("max_pool 3x3 padded", Box::new(|s| {
            op(&[randn(&mut rng(s), &[2, 6, 6])], s, |x| x[0].pool(PoolKind::Max, &[3, 3], &[2, 2], &[1, 1]))
        })),
        ("max_pool 3d", Box::new(|s| {
            op(&[randn(&mut rng(s), &[1, 4, 4, 4])], s, |x| {
                x[0].pool(PoolKind::Max, &[2, 2, 2], &[2, 2, 2], &[0, 0, 0])
            })
        })),
        ("global_avg_pool", Box::new(|s| {
            op(&[randn(&mut rng(s), &[2, 3, 4, 4])], s, |x| x[0].global_avg_pool(2))
        })),
        ("relu", Box::new(|s| unary(s, -1.0, 1.0, |t| t.relu()))),
        ("gelu", Box::new(|s| unary(s, -3.0, 3.0, |t| t.gelu()))),
        ("sigmoid", Box::new(|s| unary(s, -4.0, 4.0, |t| t.sigmoid()))),
        ("tanh", Box::new(|s| unary(s, -2.0, 2.0, |t| t.tanh()))),
        ("exp", Box::new(|s| unary(s, -2.0, 2.0, |t| t.exp()))),
        ("ln", Box::new(|s| unary(s, 0.2, 3.0, |t| t.ln()))),
        ("powf 2.5", Box::new(|s| unary(s, 0.2, 2.0, |t| t.powf(2.5)))),
        ("scale + add_scalar", Box::new(|s| unary(s, -1.0, 1.0, |t| t.scale(-1.7).add_scalar(0.3)))),
        ("add / sub / mul", Box::new(|s| {
            let mut r = rng(s);
            op(&[randn(&mut r, &[2, 3]), randn(&mut r, &[2, 3])], s, |x| {
                x[0].add(&x[1])?.mul(&x[0].sub(&x[1])?)
            })
        })),
        ("add_row", Box::new(|s| {
            let mut r = rng(s);
            op(&[randn(&mut r, &[3, 4]), randn(&mut r, &[4])], s, |x| x[0].add_row(&x[1]))
        })),
        ("sum / mean", Box::new(|s| {
            op(&[randn(&mut rng(s), &[3, 3])], s, |x| x[0].mean().mul(&x[0].sum()))
        })),
        ("transpose / reshape", Box::new(|s| {
            op(&[randn(&mut rng(s), &[3, 4])], s, |x| x[0].transpose()?.reshape(&[2, 6]))
        })),
        ("concat / slice", Box::new(|s| {
            let mut r = rng(s);
            op(&[randn(&mut r, &[2, 3]), randn(&mut r, &[2, 2])], s, |x| {
                Tensor::concat(&[x[0].clone(), x[1].clone()], 1)?.slice(1, 1, 4)
            })
        })),
        ("index_select with repeats", Box::new(|s| {
            op(&[randn(&mut rng(s), &[4, 3])], s, |x| x[0].index_select(&[2, 0, 2]))
        })),
        ("dropout fixed mask", Box::new(|s| {
            op(&[randn(&mut rng(s), &[10])], s, move |x| Ok(x[0].dropout(0.3, &mut rng(s + 7))))
        })),
        ("conv -> relu -> matmul -> softmax -> log-loss", Box::new(|s| {
            let mut r = rng(s);
            let (x, w, m) = (randn(&mut r, &[1, 2, 5, 5]), randn(&mut r, &[3, 2, 3, 3]), randn(&mut r, &[27, 4]));
            let target = r.random_range(0..4);
            check_fn(&[x, w, m], |x| {
                let h = x[0].conv(&x[1], None, &[1, 1], &[0, 0])?.relu().reshape(&[1, 27])?;
                let p = h.matmul(&x[2])?.softmax(1)?;
                Ok(p.slice(1, target, target + 1)?.ln().scale(-1.0).sum())
            })
            .unwrap()
        })),
        ("focal loss gamma=2 through softmax", Box::new(|s| focal_case(s, 2.0))),
        ("focal loss gamma=0 through softmax", Box::new(|s| focal_case(s, 0.0))),
    ]
}

fn focal_case(s: u64, gamma: f64) -> GradCheck {
    let mut r = rng(s);
    let logits = uniform(&mut r, &[4, 3], -2.0, 2.0);
    let targets: Vec<usize> = (0..4).map(|_| r.random_range(0..3)).collect();
    check_fn(&[logits], |x| Ok(focal_loss(&x[0].softmax(1)?, &targets, gamma)?.0)).unwrap()
}

/// Builds a block into a fresh store, jitters every trainable tensor off its
/// initial value and checks a random projection of the output.
fn block<B>(
    s: u64,
    build: impl FnOnce(&mut Scope) -> Result<B>,
    input: Tensor,
    fwd: impl Fn(&B, &Forward, &Tensor) -> Result<Tensor>,
) -> GradCheck {
    let mut store = ParamStore::new();
    let b = build(&mut Scope::root(&mut store)).unwrap();
    store.materialize(s);
    jitter(&mut store, s, 0.05);
    check_params(&mut store, true, 6, s, |f| random_projection(&fwd(&b, f, &input)?, s + 100)).unwrap()
}

/// Composite neural blocks.
pub fn block_cases() -> Vec<Case> {
    vec![
        ("linear", Box::new(|s| {
            block(s, |sc| Linear::new(sc, "fc", 5, 4), randn(&mut rng(s), &[3, 5]), |b, f, x| b.forward(f, x))
        })),
        ("layer_norm module", Box::new(|s| {
            block(s, |sc| LayerNorm::new(sc, "ln", 5), randn(&mut rng(s), &[3, 5]), |b, f, x| b.forward(f, x))
        })),
        ("conv + batch_norm modules", Box::new(|s| {
            block(
                s,
                |sc| Ok((Conv::new(sc, "c", 2, 3, &[3, 3], &[1, 1], &[1, 1])?, BatchNorm::new(sc, "bn", 3)?)),
                randn(&mut rng(s), &[2, 2, 5, 5]),
                |(c, bn), f, x| bn.forward(f, &c.forward(f, x)?),
            )
        })),
        ("multi-head attention k=3 d=8 h=2", Box::new(|s| {
            let x = randn(&mut rng(s), &[3, 8]);
            block(s, |sc| MultiHeadAttention::new(sc, "mha", 8, 2), x, |b, f, x| b.forward(f, x))
        })),
        ("transformer block d=8 k=4", Box::new(|s| {
            let cfg = AttentionConfig {
                dim: 8,
                heads: 2,
                mlp_ratio: 1.0,
                dropout: 0.1,
            };
            let x = randn(&mut rng(s), &[4, 8]);
            block(s, |sc| TransformerBlock::new(sc, "blk", &cfg), x, |b, f, x| b.forward(f, x))
        })),
        ("bottleneck 4x8x8 stride 1", Box::new(|s| {
            let x = randn(&mut rng(s), &[1, 4, 8, 8]);
            block(s, |sc| Bottleneck::new(sc, "b", 4, 2, 4, 1, 2), x, |b, f, x| b.forward(f, x))
        })),
        ("bottleneck 4x8x8 stride 2", Box::new(|s| {
            let x = randn(&mut rng(s), &[1, 4, 8, 8]);
            block(s, |sc| Bottleneck::new(sc, "b", 4, 2, 4, 2, 2), x, |b, f, x| b.forward(f, x))
        })),
        ("bilstm k=3 f=4 hidden=5", Box::new(|s| {
            let x = randn(&mut rng(s), &[3, 4]);
            block(s, |sc| BiLstm::new(sc, "lstm", 4, 5, 1), x, |b, f, x| b.forward(f, x))
        })),
        ("bilstm two layers", Box::new(|s| {
            let x = randn(&mut rng(s), &[3, 4]);
            block(s, |sc| BiLstm::new(sc, "lstm", 4, 3, 2), x, |b, f, x| b.forward(f, x))
        })),
        ("(2+1)D residual block 2x3x6x6", Box::new(|s| {
            let x = randn(&mut rng(s), &[1, 2, 3, 6, 6]);
            block(s, |sc| ResidualConv2Plus1d::new(sc, "r", 2, 4, 1), x, |b, f, x| b.forward(f, x))
        })),
    ]
}

fn random_views(cfg: &ModelConfig, seed: u64) -> Views {
    let mut r = rng(seed);
    cfg.views
        .iter()
        .map(|&v| {
            let s = cfg.input(v).unwrap();
            (v, uniform(&mut r, &[s.slices, 1, s.height, s.width], 0.0, 1.0))
        })
        .collect()
}

/// Toy model of `family` end to end through focal loss, one sampled
/// element per parameter tensor.
pub fn model_case(family: Family, s: u64) -> GradCheck {
    let cfg = ModelConfig::toy(family);
    let mut model = build_model(&cfg, s).unwrap();
    jitter(&mut model.store, s, 0.02);
    let batch = [random_views(&cfg, s)];
    let targets = [s as usize % 3];
    let mut store = std::mem::replace(&mut model.store, ParamStore::new());
    check_params(&mut store, true, 1, s, |f| Ok(focal_loss(&model.probabilities(f, &batch)?, &targets, 2.0)?.0))
        .unwrap()
}

pub const FAMILIES: [Family; 7] = [
    Family::Trf2d,
    Family::Fc2d,
    Family::BiLstm2d,
    Family::MultiviewShared,
    Family::MultiviewIndividual,
    Family::Conv2Plus1d,
    Family::Conv3d,
];
