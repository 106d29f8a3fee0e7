use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::AugmentPolicy;
use crate::error::{Error, Result};
use crate::kv::{KvEntries, KvWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lr_start: f64,
    pub lr_main: f64,
    pub weight_decay: f64,
    pub focal_gamma: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm cap; off when `None`.
    pub grad_clip: Option<f64>,
    pub augment_shift: f64,
    pub augment_rotation_deg: f64,
    pub augment_gamma: (f64, f64),
    /// Truncates each balanced epoch to this many samples when set.
    pub epoch_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AugmentPolicy::default();
        TrainConfig {
            epochs: 100,
            warmup_epochs: 5,
            lr_start: 1e-5,
            lr_main: 1e-4,
            weight_decay: 1e-4,
            focal_gamma: 2.0,
            batch_size: 4,
            seed: 0,
            grad_clip: None,
            augment_shift: a.max_shift,
            augment_rotation_deg: a.max_rotation_deg,
            augment_gamma: a.gamma,
            epoch_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn augment_policy(&self) -> AugmentPolicy {
        AugmentPolicy {
            max_shift: self.augment_shift,
            max_rotation_deg: self.augment_rotation_deg,
            gamma: self.augment_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return Err(Error::config(format!(
                "need 0 <= warmup_epochs < epochs, got {} and {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.lr_start > 0.0 && self.lr_main > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.weight_decay < 0.0 || self.focal_gamma < 0.0 {
            return Err(Error::config("weight_decay and focal_gamma must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::config("grad_clip must be positive"));
        }
        if self.epoch_samples == Some(0) {
            return Err(Error::config("epoch_samples must be positive"));
        }
        self.augment_policy().validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvEntries::parse(text)?;
        let mut c = TrainConfig::default();
        kv.set("epochs", &mut c.epochs)?;
        kv.set("warmup_epochs", &mut c.warmup_epochs)?;
        kv.set("lr_start", &mut c.lr_start)?;
        kv.set("lr_main", &mut c.lr_main)?;
        kv.set("weight_decay", &mut c.weight_decay)?;
        kv.set("focal_gamma", &mut c.focal_gamma)?;
        kv.set("batch_size", &mut c.batch_size)?;
        kv.set("seed", &mut c.seed)?;
        kv.set("augment_shift", &mut c.augment_shift)?;
        kv.set("augment_rotation_deg", &mut c.augment_rotation_deg)?;
        if let Some(v) = kv.take("augment_gamma") {
            let (lo, hi) = v
                .split_once(',')
                .ok_or_else(|| Error::config(format!("augment_gamma must be 'lo,hi', got '{v}'")))?;
            c.augment_gamma = (
                crate::kv::parse_value("augment_gamma", lo.trim())?,
                crate::kv::parse_value("augment_gamma", hi.trim())?,
            );
        }
        c.grad_clip = optional(&mut kv, "grad_clip")?;
        c.epoch_samples = optional(&mut kv, "epoch_samples")?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::default();
        w.put("epochs", self.epochs);
        w.put("warmup_epochs", self.warmup_epochs);
        w.put("lr_start", self.lr_start);
        w.put("lr_main", self.lr_main);
        w.put("weight_decay", self.weight_decay);
        w.put("focal_gamma", self.focal_gamma);
        w.put("batch_size", self.batch_size);
        w.put("seed", self.seed);
        w.put("augment_shift", self.augment_shift);
        w.put("augment_rotation_deg", self.augment_rotation_deg);
        w.put("augment_gamma", format!("{},{}", self.augment_gamma.0, self.augment_gamma.1));
        w.put("grad_clip", self.grad_clip.map(|c| c.to_string()).unwrap_or_else(|| "none".into()));
        w.put(
            "epoch_samples",
            self.epoch_samples.map(|c| c.to_string()).unwrap_or_else(|| "none".into()),
        );
        w.finish()
    }
}

fn optional<T: std::str::FromStr>(kv: &mut KvEntries, key: &str) -> Result<Option<T>> {
    match kv.take(key).as_deref() {
        None | Some("none") => Ok(None),
        Some(v) => crate::kv::parse_value(key, v).map(Some),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig {
            epochs: 12,
            grad_clip: Some(5.0),
            seed: 3,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        c.epoch_samples = Some(60);
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(TrainConfig::parse("").unwrap(), TrainConfig::default());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(TrainConfig::parse("epochs = 5\nwarmup_epochs = 5").is_err());
        assert!(TrainConfig::parse("lr_main = 0").is_err());
        assert!(TrainConfig::parse("momentum = 0.9").is_err());
    }
}
