//! Compares reverse-mode gradients with finite differences on a small
//! composite function and on every parameter tensor of a toy transformer.

use volformer::arch::{build_model, Family, ModelConfig, Views};
use volformer::data::View;
use volformer::gradcheck::{check_fn, check_params, random_projection};
use volformer::nn::{Forward, ParamStore};
use volformer::train::focal_loss;
use volformer::Tensor;

fn main() -> volformer::Result<()> {
    let x = Tensor::new((0..12).map(|i| (f64::from(i) * 0.7).sin()).collect(), &[3, 4])?;
    let w = Tensor::new((0..8).map(|i| (f64::from(i) * 1.3).cos()).collect(), &[4, 2])?;
    let r = check_fn(&[x, w], |xs| random_projection(&xs[0].matmul(&xs[1])?.softmax(1)?, 1))?;
    println!("softmax(x w): {} elements, max rel err {:.2e}, passed {}", r.checked, r.max_rel_err, r.passed());

    let cfg = ModelConfig::toy(Family::Trf2d);
    let mut model = build_model(&cfg, 0)?;
    let s = cfg.input(View::Sag)?;
    let n = s.slices * s.height * s.width;
    let stack = Tensor::new((0..n).map(|i| (i % 17) as f64 / 17.0).collect(), &[s.slices, 1, s.height, s.width])?;
    let batch = [Views::from([(View::Sag, stack)])];
    let mut store = std::mem::replace(&mut model.store, ParamStore::new());
    let r = check_params(&mut store, true, 2, 0, |f: &Forward| {
        Ok(focal_loss(&model.probabilities(f, &batch)?, &[2], 2.0)?.0)
    })?;
    println!(
        "toy 2d_trf focal loss: {} coordinates ({} skipped at kinks), max rel err {:.2e} at {}, passed {}",
        r.checked,
        r.skipped,
        r.max_rel_err,
        r.worst,
        r.passed()
    );
    Ok(())
}
