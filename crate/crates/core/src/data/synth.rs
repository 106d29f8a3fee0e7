//! Synthetic knee cohort with a planted structural progression signal.
//!
//! Each knee is a femur/tibia phantom with a cartilage layer on both joint
//! surfaces. Progressing knees lose cartilage in one compartment (one half of
//! the sagittal slices), more for fast than for slow progression. The KL
//! trajectory is drawn so that the cohort labeling rules recover the planted
//! class.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::volume::{save_volume, Volume, Voxels};
use crate::cohort::{write_cohort, KneeRecord, ProgressionClass, Sex, Side, FAST_WINDOW, HORIZON, VISITS};
use crate::error::{Error, Result};
use crate::parallel::{par_map, thread_count};

/// Class shares (none, slow, fast) of the reference cohort.
pub const DEFAULT_PROPORTIONS: [f64; 3] = [0.730, 0.193, 0.077];
/// Raw grid: twice the toy grid plus a margin that the default crop removes.
pub const SYNTH_DIMS: [usize; 3] = [80, 80, 20];
pub const SYNTH_SPACING: [f64; 3] = [0.37, 0.37, 0.7];
pub const SYNTH_CROP: [usize; 3] = [64, 64, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub seed: u64,
    pub proportions: [f64; 3],
    pub institutions: usize,
    /// Per-knee probability of a missing BMI, and separately of a baseline TKA.
    pub exclusion_rate: f64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Healthy cartilage thickness in mm.
    pub cartilage_mm: f64,
    /// Thickness lost per class step in the affected compartment, in mm.
    pub thinning_mm: f64,
    /// Gaussian intensity noise standard deviation.
    pub noise: f64,
}

impl SynthConfig {
    pub fn new(n_subjects: usize, seed: u64) -> Self {
        SynthConfig {
            n_subjects,
            seed,
            proportions: DEFAULT_PROPORTIONS,
            institutions: 5,
            exclusion_rate: 0.02,
            dims: SYNTH_DIMS,
            spacing: SYNTH_SPACING,
            cartilage_mm: 2.6,
            thinning_mm: 0.6,
            noise: 15.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::config("synth needs at least one subject"));
        }
        if self.institutions == 0 {
            return Err(Error::config("synth needs at least one institution"));
        }
        let sum: f64 = self.proportions.iter().sum();
        if self.proportions.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::config(format!("class proportions must sum to 1, got {:?}", self.proportions)));
        }
        if !(0.0..=1.0).contains(&self.exclusion_rate) {
            return Err(Error::config("exclusion rate must lie in [0, 1]"));
        }
        if self.cartilage_mm - 2.0 * self.thinning_mm <= 0.0 {
            return Err(Error::config("thinning removes the whole cartilage layer"));
        }
        Ok(())
    }

    pub fn institution_name(i: usize) -> String {
        format!("INST{}", i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthKnee {
    pub record: KneeRecord,
    pub planted: ProgressionClass,
    /// 0 = first half of the sagittal slices, 1 = second half.
    pub compartment: usize,
    pub volume: Volume,
}

/// Generates `2 * n_subjects` knees. Subject `s` draws everything from a
/// stream seeded by `(seed, s)`, so output does not depend on thread count.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<SynthKnee>> {
    cfg.validate()?;
    let per_subject = par_map(cfg.n_subjects, thread_count(), |s| subject(cfg, s));
    let mut out = Vec::with_capacity(2 * cfg.n_subjects);
    for knees in per_subject {
        out.extend(knees?);
    }
    Ok(out)
}

fn subject(cfg: &SynthConfig, s: usize) -> Result<Vec<SynthKnee>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(s as u64 + 1);
    let subject_id = format!("S{:05}", s + 1);
    let institution_id = SynthConfig::institution_name(s % cfg.institutions);
    let age = Normal::<f64>::new(61.0, 9.0).unwrap().sample(&mut rng).clamp(45.0, 79.0).round();
    let sex = if rng.random_bool(0.58) { Sex::F } else { Sex::M };
    let bmi = Normal::<f64>::new(28.5, 4.5).unwrap().sample(&mut rng).clamp(17.0, 45.0);
    let bmi = (bmi * 10.0).round() / 10.0;
    let mut knees = Vec::with_capacity(2);
    for side in [Side::L, Side::R] {
        let u: f64 = rng.random();
        let planted = if u < cfg.proportions[0] {
            ProgressionClass::None
        } else if u < cfg.proportions[0] + cfg.proportions[1] {
            ProgressionClass::Slow
        } else {
            ProgressionClass::Fast
        };
        let klg = trajectory(&mut rng, planted);
        let missing_bmi = rng.random_bool(cfg.exclusion_rate);
        let tka_baseline = rng.random_bool(cfg.exclusion_rate);
        let compartment = rng.random_range(0..2);
        let volume = phantom(cfg, &mut rng, planted, compartment)?;
        knees.push(SynthKnee {
            record: KneeRecord {
                subject_id: subject_id.clone(),
                side,
                institution_id: institution_id.clone(),
                age,
                sex,
                bmi: (!missing_bmi).then_some(bmi),
                tka_baseline,
                klg,
            },
            planted,
            compartment,
            volume,
        });
    }
    Ok(knees)
}

/// Nondecreasing KL grades on the default visit grid whose label is
/// `class`. Intermediate visits before the event may be missing.
fn trajectory(rng: &mut impl Rng, class: ProgressionClass) -> BTreeMap<u32, u8> {
    let base: u8 = match rng.random_range(0..100) {
        0..35 => 0,
        35..65 => 1,
        65..90 => 2,
        _ => 3,
    };
    // KL0 -> KL1 is not progression, so the first counted step from KL0 is KL2
    let step = if base == 0 { 2 } else { base + 1 };
    let event = match class {
        ProgressionClass::None => None,
        ProgressionClass::Slow => Some(HORIZON),
        ProgressionClass::Fast => {
            let early: Vec<u32> = VISITS.iter().copied().filter(|&m| m > 0 && m <= FAST_WINDOW).collect();
            Some(early[rng.random_range(0..early.len())])
        }
    };
    // a non-progressing KL0 knee may still drift to KL1
    let drift = (base == 0 && class == ProgressionClass::None && rng.random_bool(0.3))
        .then(|| VISITS[rng.random_range(1..VISITS.len())]);
    let mut klg = BTreeMap::new();
    for &m in &VISITS {
        let grade = match (event, drift) {
            (Some(e), _) if m >= e => step,
            (None, Some(d)) if m >= d => 1,
            _ => base,
        };
        let required = m == 0 || m == HORIZON || Some(m) == event;
        if required || !rng.random_bool(0.1) {
            klg.insert(m, grade);
        }
    }
    klg
}

fn phantom(cfg: &SynthConfig, rng: &mut impl Rng, class: ProgressionClass, compartment: usize) -> Result<Volume> {
    let [n0, n1, n2] = cfg.dims;
    let [s0, s1, _] = cfg.spacing;
    let jitter = Normal::new(0.0, 1.0).unwrap();
    let mut z = || jitter.sample(rng);
    // physical frame: axis 0 runs superior to inferior, axis 1 anterior to posterior
    let joint = n0 as f64 * s0 / 2.0 + 0.8 * z();
    let center1 = n1 as f64 * s1 / 2.0 + 0.8 * z();
    let gap = (1.0 + 0.15 * z()).max(0.5);
    let healthy = cfg.cartilage_mm + 0.15 * z();
    let thin = healthy - class.index() as f64 * cfg.thinning_mm;
    let femur_r = [11.0 + 0.6 * z(), 12.5 + 0.6 * z()];
    let tibia_half = 12.0 + 0.5 * z();
    let bias = 0.08 * z();
    let noise = Normal::new(0.0, cfg.noise).unwrap();

    let mut data = Vec::with_capacity(n0 * n1 * n2);
    for i in 0..n0 {
        let x0 = (i as f64 + 0.5) * s0;
        let gain = 1.0 + bias * (x0 / (n0 as f64 * s0) - 0.5);
        for j in 0..n1 {
            let x1 = (j as f64 + 0.5) * s1 - center1;
            for k in 0..n2 {
                let in_affected = (k * 2 / n2) == compartment;
                let t = if in_affected { thin } else { healthy };
                let femur_bottom = joint - gap / 2.0;
                // femoral condyle: ellipse resting on the cartilage layer
                let c0 = femur_bottom - t - femur_r[0];
                let e = ((x0 - c0) / femur_r[0]).powi(2) + (x1 / femur_r[1]).powi(2);
                let e_outer = ((x0 - c0) / (femur_r[0] + t)).powi(2) + (x1 / (femur_r[1] + t)).powi(2);
                let tibia_top = joint + gap / 2.0;
                let intensity = if e <= 1.0 {
                    75.0
                } else if e_outer <= 1.0 && x0 > c0 {
                    190.0
                } else if x0 >= tibia_top && x1.abs() <= tibia_half {
                    if x0 < tibia_top + t {
                        190.0
                    } else {
                        80.0
                    }
                } else if x0 > femur_bottom - 0.5 && x0 < tibia_top + 0.5 && x1.abs() <= tibia_half {
                    115.0
                } else {
                    40.0
                };
                data.push((intensity * gain + noise.sample(rng)) as f32);
            }
        }
    }
    Volume::new(cfg.dims, cfg.spacing, Voxels::F32(data))
}

/// Writes `{knee_id}.vvol` per knee and `cohort.csv` into `dir`.
pub fn write_synth(knees: &[SynthKnee], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for k in knees {
        save_volume(&k.volume, &dir.join(format!("{}.vvol", k.record.knee_id())))?;
    }
    let records: Vec<KneeRecord> = knees.iter().map(|k| k.record.clone()).collect();
    let path = dir.join("cohort.csv");
    std::fs::write(&path, write_cohort(&records)).map_err(|e| Error::io(&path, e))
}
