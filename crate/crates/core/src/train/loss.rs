use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to the true-class probability before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean over the batch of `-(1 - p_t)^gamma * ln p_t` with uniform class
/// weights. Returns the loss and how many `p_t` values were raised to
/// [`PROB_FLOOR`]; the floor is a constant offset, so gradients pass
/// through unchanged.
pub fn focal_loss(probs: &Tensor, targets: &[usize], gamma: f64) -> Result<(Tensor, usize)> {
    let (b, c) = match probs.shape() {
        &[b, c] => (b, c),
        s => {
            return Err(Error::Shape {
                op: "focal_loss",
                lhs: s.to_vec(),
                rhs: vec![targets.len(), 3],
            })
        }
    };
    if b != targets.len() || b == 0 {
        return Err(Error::Shape {
            op: "focal_loss",
            lhs: probs.shape().to_vec(),
            rhs: vec![targets.len()],
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::data(format!("target class {t} out of range for {c} classes")));
    }
    let mut onehot = vec![0.0; b * c];
    for (i, &t) in targets.iter().enumerate() {
        onehot[i * c + t] = 1.0;
    }
    let picked = probs.mul(&Tensor::new(onehot, &[b, c])?)?;
    let p_t = picked.matmul(&Tensor::new(vec![1.0; c], &[c, 1])?)?;
    let mut clamped = 0;
    let lift: Vec<f64> = p_t
        .data()
        .iter()
        .map(|&p| {
            if p < PROB_FLOOR {
                clamped += 1;
                PROB_FLOOR - p
            } else {
                0.0
            }
        })
        .collect();
    let p_t = if clamped > 0 { p_t.add(&Tensor::new(lift, &[b, 1])?)? } else { p_t };
    let modulator = p_t.scale(-1.0).add_scalar(1.0).powf(gamma);
    let loss = modulator.mul(&p_t.ln())?.mean().scale(-1.0);
    Ok((loss, clamped))
}

/// Plain cross-entropy on probabilities, for comparison.
pub fn cross_entropy(probs: &[[f64; 3]], targets: &[usize]) -> f64 {
    probs.iter().zip(targets).map(|(p, &t)| -p[t].ln()).sum::<f64>() / targets.len() as f64
}

/// Linear warmup from `lr_start` to `lr_main` over `warmup_epochs`, then
/// constant.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch < cfg.warmup_epochs {
        cfg.lr_start + (cfg.lr_main - cfg.lr_start) * (epoch as f64 / cfg.warmup_epochs as f64)
    } else {
        cfg.lr_main
    }
}
