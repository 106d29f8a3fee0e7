use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::arch::{ModelConfig, Views};
use crate::cohort::{LabeledKnee, ProgressionClass};
use crate::data::{augment, load_volume, AugmentPolicy, SliceStack, View};
use crate::error::{Error, Result};
use crate::parallel::{par_map, thread_count};
use rand::Rng;

/// One knee ready for a model: a slice stack per view and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: ProgressionClass,
    pub stacks: BTreeMap<View, SliceStack>,
}

impl Sample {
    pub fn views(&self) -> Result<Views> {
        self.stacks.iter().map(|(&v, s)| Ok((v, s.to_tensor()?))).collect()
    }

    /// Independent augmentation draw per view.
    pub fn augmented_views(&self, rng: &mut impl Rng, policy: &AugmentPolicy) -> Result<Views> {
        self.stacks
            .iter()
            .map(|(&v, s)| Ok((v, augment(s, rng, policy).to_tensor()?)))
            .collect()
    }
}

pub fn volume_path(dir: &Path, knee_id: &str) -> PathBuf {
    dir.join(format!("{knee_id}.vvol"))
}

/// Loads each knee's preprocessed volume from `dir` and cuts the stacks the
/// model needs, checking them against its configured input shapes.
pub fn load_samples(knees: &[LabeledKnee], dir: &Path, cfg: &ModelConfig) -> Result<Vec<Sample>> {
    par_map(knees.len(), thread_count(), |i| {
        let k = &knees[i];
        let id = k.record.knee_id();
        let path = volume_path(dir, &id);
        let vol = load_volume(&path)?;
        let mut stacks = BTreeMap::new();
        for &view in &cfg.views {
            let s = SliceStack::from_volume(&vol, view, &id)?;
            let want = cfg.input(view)?;
            if (s.slices, s.height, s.width) != (want.slices, want.height, want.width) {
                return Err(Error::data(format!(
                    "{}: {view} stack is {}x{}x{}, model expects {want}",
                    path.display(),
                    s.slices,
                    s.height,
                    s.width
                )));
            }
            stacks.insert(view, s);
        }
        Ok(Sample {
            id,
            label: k.label.class,
            stacks,
        })
    })
    .into_iter()
    .collect()
}
