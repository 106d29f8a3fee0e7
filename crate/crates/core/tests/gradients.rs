//! Finite-difference gradient suite: every differentiable op, every block and
//! every toy architecture, 20 random instances each, 64-bit.

mod common;

use common::grad_cases::{block_cases, model_case, op_cases};
use common::{randn, rng, suite, uniform};
use volformer::arch::Family;
use volformer::gradcheck::{check_fn_with, random_projection, Scheme};
use volformer::tensor::PoolKind;
use volformer::Tensor;

#[test]
fn ops() {
    for (name, case) in op_cases() {
        suite(name, case);
    }
}

#[test]
fn blocks() {
    for (name, case) in block_cases() {
        suite(name, case);
    }
}

/// The plain central difference on layer norm converges as `h^2` towards
/// the analytic gradient, so its residual at `h = 1e-3` is truncation.
#[test]
fn layer_norm_plain_central_difference_converges_quadratically() {
    let mut r = rng(17);
    let inputs = [randn(&mut r, &[3, 6]), uniform(&mut r, &[6], 0.5, 1.5), randn(&mut r, &[6])];
    let err = |h: f64| {
        check_fn_with(&inputs, h, Scheme::Central, |x| {
            random_projection(&x[0].layer_norm(1, Some(&x[1]), Some(&x[2]), 1e-5)?, 117)
        })
        .unwrap()
        .max_rel_err
    };
    let (e2, e3, e4) = (err(1e-2), err(1e-3), err(1e-4));
    eprintln!("plain central layer_norm: {e2:.2e} {e3:.2e} {e4:.2e}");
    assert!((50.0..200.0).contains(&(e2 / e3)) && (50.0..200.0).contains(&(e3 / e4)));
}

#[test]
fn avg_pool_gradient_is_one_over_window() {
    let x = Tensor::param(vec![0.5; 16], &[1, 4, 4]).unwrap();
    x.pool(PoolKind::Avg, &[2, 2], &[2, 2], &[0, 0]).unwrap().sum().backward().unwrap();
    assert!(x.grad().unwrap().iter().all(|&g| (g - 0.25).abs() < 1e-15));
}

#[test]
fn shared_subexpressions_accumulate() {
    // (x * y) with x used twice: d/dx = 2xy-style accumulation through a DAG.
    let x = Tensor::param(vec![1.5, -0.5], &[2]).unwrap();
    let y = Tensor::param(vec![2.0, 3.0], &[2]).unwrap();
    let h = x.mul(&y).unwrap();
    h.add(&h.mul(&x).unwrap()).unwrap().sum().backward().unwrap();
    // d/dx (xy + x²y) = y + 2xy; d/dy = x + x².
    assert_eq!(x.grad().unwrap(), vec![2.0 + 2.0 * 1.5 * 2.0, 3.0 + 2.0 * -0.5 * 3.0]);
    assert_eq!(y.grad().unwrap(), vec![1.5 + 2.25, -0.5 + 0.25]);
}

fn model_check(family: Family) {
    suite(&family.to_string(), |s| model_case(family, s));
}

#[test]
fn model_2d_trf() {
    model_check(Family::Trf2d);
}

#[test]
fn model_2d_fc() {
    model_check(Family::Fc2d);
}

#[test]
fn model_2d_bilstm() {
    model_check(Family::BiLstm2d);
}

#[test]
fn model_multiview_shared() {
    model_check(Family::MultiviewShared);
}

#[test]
fn model_multiview_individual() {
    model_check(Family::MultiviewIndividual);
}

#[test]
fn model_conv2plus1d() {
    model_check(Family::Conv2Plus1d);
}

#[test]
fn model_conv3d() {
    model_check(Family::Conv3d);
}
