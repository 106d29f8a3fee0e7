use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::ModelConfig;
use crate::data::View;
use crate::error::{Error, Result};
use crate::kv::{KvEntries, KvWriter};
use crate::train::TrainConfig;

/// Everything a training run needs. Relative paths resolve against the
/// directory of the file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cohort: PathBuf,
    pub volumes: PathBuf,
    pub output: PathBuf,
    pub model_config: PathBuf,
    /// Defaults apply when absent.
    pub train_config: Option<PathBuf>,
    /// Overrides the model's view list when set.
    pub views: Option<Vec<View>>,
    pub holdout: String,
    pub folds: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = KvEntries::parse(text)?;
        let path = |kv: &mut KvEntries, key: &str| -> Result<PathBuf> {
            let v = kv
                .take(key)
                .ok_or_else(|| Error::config(format!("missing required key '{key}'")))?;
            Ok(base.join(v))
        };
        let cohort = path(&mut kv, "cohort")?;
        let volumes = path(&mut kv, "volumes")?;
        let output = path(&mut kv, "output")?;
        let model_config = path(&mut kv, "model_config")?;
        let train_config = kv.take("train_config").map(|v| base.join(v));
        let views = kv
            .take("views")
            .map(|v| v.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<View>>>())
            .transpose()?;
        let holdout = kv
            .take("holdout")
            .ok_or_else(|| Error::config("missing required key 'holdout'"))?;
        let mut folds = 5;
        let mut seed = 0;
        kv.set("folds", &mut folds)?;
        kv.set("seed", &mut seed)?;
        kv.finish()?;
        if folds < 2 {
            return Err(Error::config(format!("folds must be at least 2, got {folds}")));
        }
        Ok(ExperimentConfig {
            cohort,
            volumes,
            output,
            model_config,
            train_config,
            views,
            holdout,
            folds,
            seed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::default();
        w.put("cohort", self.cohort.display());
        w.put("volumes", self.volumes.display());
        w.put("output", self.output.display());
        w.put("model_config", self.model_config.display());
        if let Some(t) = &self.train_config {
            w.put("train_config", t.display());
        }
        if let Some(v) = &self.views {
            w.put("views", v.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","));
        }
        w.put("holdout", &self.holdout);
        w.put("folds", self.folds);
        w.put("seed", self.seed);
        w.finish()
    }

    /// Model configuration restricted to the overriding views, which must
    /// be a subset of the model's own.
    pub fn model(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::load(&self.model_config)?;
        if let Some(views) = &self.views {
            if let Some(v) = views.iter().find(|v| !cfg.views.contains(v)) {
                return Err(Error::config(format!(
                    "view {v} is not configured in {}",
                    self.model_config.display()
                )));
            }
            cfg.views = views.clone();
            cfg.inputs.retain(|v, _| views.contains(v));
            cfg.validate()?;
        }
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        match &self.train_config {
            Some(p) => TrainConfig::load(p),
            None => Ok(TrainConfig::default()),
        }
    }

    /// Existence check for every referenced input.
    pub fn check_inputs(&self) -> Result<()> {
        for p in [&self.cohort, &self.model_config].into_iter().chain(self.train_config.as_ref()) {
            if !p.is_file() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        if !self.volumes.is_dir() {
            return Err(Error::io(
                self.volumes.clone(),
                std::io::Error::new(std::io::ErrorKind::NotFound, "volume directory not found"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_resolves_relative_paths() {
        let text = "cohort = c.csv\nvolumes = vols\noutput = out\nmodel_config = m.cfg\nholdout = INST1\nseed = 3\n";
        let e = ExperimentConfig::parse(text, Path::new("/exp")).unwrap();
        assert_eq!(e.cohort, Path::new("/exp/c.csv"));
        assert_eq!((e.folds, e.seed), (5, 3));
        assert_eq!(ExperimentConfig::parse(&e.to_text(), Path::new("/elsewhere")).unwrap(), e);
        assert!(ExperimentConfig::parse("cohort = c.csv", Path::new(".")).is_err());
    }
}
