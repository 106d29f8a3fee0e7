use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::experiment::ExperimentConfig;
use super::manifest::{digest_file, digest_inputs, digest_manifest, digest_relative, Manifest, MANIFEST_FILE};
use super::{CurvesArgs, EvaluateArgs, LabelArgs, PreprocessArgs, ProfileArgs, SplitArgs, SynthArgs, TrainArgs};
use crate::arch::{parse_dims, Family, ModelConfig, StackShape};
use crate::checkpoint;
use crate::cohort::{apply_exclusions, load_cohort, split_dataset, Excluded, LabeledKnee, ProgressionClass, Splits};
use crate::data::{
    load_volume, preprocess, reproject, save_volume, synth_generate, write_synth, SynthConfig, View, DEFAULT_CROP,
    DEFAULT_FACTORS,
};
use crate::error::{Error, Result};
use crate::eval::{ensemble_predict, evaluate, export_curves, pooled_ap, EvalReport, PredictionSet};
use crate::parallel::{par_map, thread_count};
use crate::profile::{profile_config, reconcile_hidden, time_inference, FC_PARAM_TARGET, LSTM_PARAM_TARGET};
use crate::train::{
    fold_seed, load_samples, model_from_tensors, predict, train_fold, volume_path, SNAPSHOT_FILE,
};

pub const LABELS_FILE: &str = "labels.csv";
pub const EXCLUDED_FILE: &str = "excluded.csv";
pub const SPLITS_FILE: &str = "splits.json";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MODEL_CONFIG_FILE: &str = "model.cfg";
pub const TRAIN_CONFIG_FILE: &str = "train.cfg";
const COHORT_FILE: &str = "cohort.csv";
const RECONCILE_TOL: f64 = 0.10;

/// What `evaluate` needs to know about a `train` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub volumes: PathBuf,
    pub holdout: String,
    pub folds: usize,
    pub seed: u64,
}

/// Fold assignment by knee id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitsFile {
    pub holdout_institution: String,
    pub seed: u64,
    pub eval: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl SplitsFile {
    fn new(splits: &Splits, knees: &[LabeledKnee], seed: u64) -> Self {
        let ids = |idx: &[usize]| idx.iter().map(|&i| knees[i].record.knee_id()).collect::<Vec<_>>();
        SplitsFile {
            holdout_institution: splits.holdout_institution.clone(),
            seed,
            eval: ids(&splits.eval),
            folds: splits.folds.iter().map(|f| ids(f)).collect(),
        }
    }
}

/// Output directory written under a hidden `.partial` sibling and renamed
/// into place on success, so a failed run never looks complete.
struct Staged {
    target: PathBuf,
    work: PathBuf,
}

impl Staged {
    fn begin(target: &Path) -> Result<Self> {
        if target.exists() {
            if !target.is_dir() {
                return Err(Error::config(format!("{} exists and is not a directory", target.display())));
            }
            return Ok(Staged {
                target: target.to_path_buf(),
                work: target.to_path_buf(),
            });
        }
        let name = target
            .file_name()
            .ok_or_else(|| Error::config(format!("{} has no directory name", target.display())))?;
        let work = target.with_file_name(format!(".{}.partial", name.to_string_lossy()));
        if work.exists() {
            std::fs::remove_dir_all(&work).map_err(|e| Error::io(&work, e))?;
        }
        std::fs::create_dir_all(&work).map_err(|e| Error::io(&work, e))?;
        Ok(Staged {
            target: target.to_path_buf(),
            work,
        })
    }

    fn dir(&self) -> &Path {
        &self.work
    }

    fn commit(self) -> Result<()> {
        if self.work != self.target {
            std::fs::rename(&self.work, &self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).expect("values serialize");
    write_file(path, body + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Every regular file under `dir` except the manifest, sorted.
fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn finish_manifest(mut m: Manifest, dir: &Path, start: Instant) -> Result<()> {
    m.outputs = digest_relative(dir, &files_under(dir)?)?;
    m.wall_clock_s = start.elapsed().as_secs_f64();
    m.write(dir)?;
    Ok(())
}

fn triple(text: Option<&str>, default: [usize; 3], what: &str) -> Result<[usize; 3]> {
    match text {
        None => Ok(default),
        Some(t) => {
            let v = parse_dims(t)?;
            <[usize; 3]>::try_from(v.as_slice())
                .map_err(|_| Error::config(format!("{what} needs three extents, got '{t}'")))
        }
    }
}

fn volume_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vvol"))
        .collect();
    out.sort();
    Ok(out)
}

/// Cohort rows with labels, excluding knees without a volume in `volumes`.
fn labeled_cohort(cohort: &Path, volumes: &Path) -> Result<(Vec<LabeledKnee>, Vec<Excluded>)> {
    let records = load_cohort(cohort)?;
    if !volumes.is_dir() {
        return Err(Error::io(
            volumes,
            std::io::Error::new(std::io::ErrorKind::NotFound, "volume directory not found"),
        ));
    }
    Ok(apply_exclusions(&records, |r| volume_path(volumes, &r.knee_id()).is_file()))
}

fn class_counts(knees: &[LabeledKnee]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = ProgressionClass::ALL.iter().map(|c| (c.to_string(), 0)).collect();
    for k in knees {
        *counts.entry(k.label.class.to_string()).or_default() += 1;
    }
    counts
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = SynthConfig::new(a.subjects, a.seed);
    cfg.institutions = a.institutions;
    if let Some(r) = a.exclusion_rate {
        cfg.exclusion_rate = r;
    }
    if let Some(t) = a.thinning_mm {
        cfg.thinning_mm = t;
    }
    if let Some(n) = a.noise {
        cfg.noise = n;
    }
    let knees = synth_generate(&cfg)?;
    let staged = Staged::begin(&a.out)?;
    write_synth(&knees, staged.dir())?;
    let config = json!({
        "subjects": cfg.n_subjects,
        "seed": cfg.seed,
        "proportions": cfg.proportions,
        "institutions": cfg.institutions,
        "exclusion_rate": cfg.exclusion_rate,
        "dims": cfg.dims,
        "spacing": cfg.spacing,
        "cartilage_mm": cfg.cartilage_mm,
        "thinning_mm": cfg.thinning_mm,
        "noise": cfg.noise,
    });
    finish_manifest(Manifest::new("synth", config, vec![cfg.seed]), staged.dir(), start)?;
    staged.commit()?;
    println!("synth: {} knees from {} subjects -> {}", knees.len(), cfg.n_subjects, a.out.display());
    Ok(())
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let start = Instant::now();
    let files = volume_files(&a.input)?;
    if files.is_empty() {
        return Err(Error::data(format!("no .vvol files in {}", a.input.display())));
    }
    let factors = triple(a.factors.as_deref(), DEFAULT_FACTORS, "--factors")?;
    let view: Option<View> = a.view.as_deref().map(str::parse).transpose()?;
    let crop_arg = a.crop.as_deref().map(|c| triple(Some(c), DEFAULT_CROP, "--crop")).transpose()?;
    let staged = Staged::begin(&a.out)?;
    let out_dir = staged.dir().to_path_buf();
    let results = par_map(files.len(), thread_count(), |i| -> Result<[usize; 3]> {
        let src = &files[i];
        let vol = load_volume(src)?;
        // Without --crop, the default crop shrinks to fit smaller scans.
        let crop = crop_arg.unwrap_or_else(|| std::array::from_fn(|k| DEFAULT_CROP[k].min(vol.dims[k])));
        let mut out = preprocess(&vol, crop, factors).map_err(|e| match e {
            Error::Config(m) => Error::data(format!("{}: {m}", src.display())),
            other => other,
        })?;
        if let Some(v) = view {
            out = reproject(&out, v)?;
        }
        save_volume(&out, &out_dir.join(src.file_name().expect("listed files have names")))?;
        Ok(out.dims)
    });
    let dims = results.into_iter().collect::<Result<Vec<_>>>()?;
    let cohort = a.input.join(COHORT_FILE);
    if cohort.is_file() {
        std::fs::copy(&cohort, out_dir.join(COHORT_FILE)).map_err(|e| Error::io(&cohort, e))?;
    }
    let config = json!({
        "crop": crop_arg,
        "factors": factors,
        "view": view.map(|v| v.as_str()),
    });
    let mut m = Manifest::new("preprocess", config, vec![]);
    m.inputs = digest_inputs(&files)?;
    let upstream = a.input.join(MANIFEST_FILE);
    if upstream.is_file() {
        m.upstream_manifests.push(digest_manifest(&upstream, MANIFEST_FILE.to_string())?);
    }
    finish_manifest(m, &out_dir, start)?;
    staged.commit()?;
    println!("preprocess: {} volumes -> {} ({:?})", dims.len(), a.out.display(), dims[0]);
    Ok(())
}

pub fn cmd_label(a: &LabelArgs) -> Result<()> {
    let start = Instant::now();
    let (kept, excluded) = labeled_cohort(&a.cohort, &a.volumes)?;
    let staged = Staged::begin(&a.out)?;
    let dir = staged.dir();

    let path = dir.join(LABELS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    w.write_record(["knee_id", "subject_id", "side", "institution_id", "class", "event_month", "rule_trace"])
        .map_err(csv_err)?;
    for k in &kept {
        let r = &k.record;
        w.write_record([
            r.knee_id(),
            r.subject_id.clone(),
            r.side.to_string(),
            r.institution_id.clone(),
            k.label.class.to_string(),
            k.label.event_month.map(|m| m.to_string()).unwrap_or_default(),
            k.label.rule_trace.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(EXCLUDED_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    w.write_record(["knee_id", "reason"]).map_err(csv_err)?;
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for x in &excluded {
        w.write_record([x.record.knee_id().as_str(), x.reason.as_str()]).map_err(csv_err)?;
        *reasons.entry(x.reason.as_str()).or_default() += 1;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let counts = class_counts(&kept);
    let config = json!({ "classes": counts, "excluded": reasons });
    let mut m = Manifest::new("label", config, vec![]);
    m.inputs = digest_inputs(std::slice::from_ref(&a.cohort))?;
    finish_manifest(m, dir, start)?;
    staged.commit()?;
    println!("label: {} labeled {:?}, {} excluded -> {}", kept.len(), counts, excluded.len(), a.out.display());
    Ok(())
}

pub fn cmd_split(a: &SplitArgs) -> Result<()> {
    let start = Instant::now();
    let (kept, _) = labeled_cohort(&a.cohort, &a.volumes)?;
    let splits = split_dataset(&kept, &a.holdout, a.folds, a.seed)?;
    let staged = Staged::begin(&a.out)?;
    write_json(&staged.dir().join(SPLITS_FILE), &SplitsFile::new(&splits, &kept, a.seed))?;
    let config = json!({ "holdout": a.holdout, "folds": a.folds, "seed": a.seed });
    let mut m = Manifest::new("split", config, vec![a.seed]);
    m.inputs = digest_inputs(std::slice::from_ref(&a.cohort))?;
    finish_manifest(m, staged.dir(), start)?;
    staged.commit()?;
    let sizes: Vec<usize> = splits.folds.iter().map(Vec::len).collect();
    println!("split: {} eval knees, folds {:?} -> {}", splits.eval.len(), sizes, a.out.display());
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let exp = ExperimentConfig::load(&a.config)?;
    exp.check_inputs()?;
    let seed = a.seed.unwrap_or(exp.seed);
    let out = a.out.clone().unwrap_or_else(|| exp.output.clone());
    let model_cfg = exp.model()?;
    let mut train_cfg = exp.train()?;
    if let Some(e) = a.epochs {
        train_cfg.epochs = e;
        train_cfg.warmup_epochs = train_cfg.warmup_epochs.min(e.saturating_sub(1));
    }
    train_cfg.validate()?;
    let folds: Vec<usize> = match a.fold {
        Some(f) if f >= exp.folds => {
            return Err(Error::config(format!("fold {f} out of range for {} folds", exp.folds)));
        }
        Some(f) => vec![f],
        None => (0..exp.folds).collect(),
    };
    if a.parallel_folds == 0 {
        return Err(Error::config("--parallel-folds must be at least 1"));
    }

    let (kept, _) = labeled_cohort(&exp.cohort, &exp.volumes)?;
    if kept.is_empty() {
        return Err(Error::data(format!("no labeled knees with imaging in {}", exp.cohort.display())));
    }
    let splits = split_dataset(&kept, &exp.holdout, exp.folds, seed)?;
    // Only development knees are loaded; fold indices are remapped onto them.
    let dev = splits.all_training();
    let position: HashMap<usize, usize> = dev.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let dev_knees: Vec<LabeledKnee> = dev.iter().map(|&i| kept[i].clone()).collect();
    let samples = load_samples(&dev_knees, &exp.volumes, &model_cfg)?;
    let remap = |idx: &[usize]| idx.iter().map(|i| position[i]).collect::<Vec<_>>();

    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_file(&out.join(MODEL_CONFIG_FILE), model_cfg.to_text())?;
    write_file(&out.join(TRAIN_CONFIG_FILE), train_cfg.to_text())?;
    write_json(&out.join(SPLITS_FILE), &SplitsFile::new(&splits, &kept, seed))?;
    let volumes = std::fs::canonicalize(&exp.volumes).map_err(|e| Error::io(&exp.volumes, e))?;
    let run = RunInfo {
        volumes,
        holdout: exp.holdout.clone(),
        folds: exp.folds,
        seed,
    };
    write_json(&out.join(RUN_FILE), &run)?;

    let mut inputs = vec![exp.cohort.clone(), exp.model_config.clone()];
    inputs.extend(exp.train_config.clone());
    let input_digests = digest_inputs(&inputs)?;

    let results = par_map(folds.len(), a.parallel_folds, |j| -> Result<(usize, usize, Option<f64>)> {
        let start = Instant::now();
        let fold = folds[j];
        let mut cfg = train_cfg.clone();
        cfg.seed = fold_seed(seed, fold);
        let target = out.join(format!("fold{fold}"));
        let staged = Staged::begin(&target)?;
        let outcome = train_fold(
            &model_cfg,
            &samples,
            &remap(&splits.training(fold)),
            &remap(splits.validation(fold)),
            &cfg,
            Some(staged.dir()),
        )
        .map_err(|e| match e {
            Error::Divergence(m) => Error::Divergence(format!(
                "fold {fold}: {m}; history kept in {}",
                staged.dir().display()
            )),
            other => other,
        })?;
        let config = json!({
            "fold": fold,
            "run_seed": seed,
            "holdout": exp.holdout,
            "folds": exp.folds,
            "model": model_cfg.to_text(),
            "train": cfg.to_text(),
        });
        let mut m = Manifest::new("train", config, vec![seed, cfg.seed]);
        m.inputs = input_digests.clone();
        finish_manifest(m, staged.dir(), start)?;
        staged.commit()?;
        Ok((fold, outcome.snapshot.epoch, outcome.snapshot.val_ap))
    });
    let mut first_err = None;
    for r in results {
        match r {
            Ok((fold, epoch, ap)) => {
                let ap = ap.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into());
                println!("train: fold {fold} best epoch {epoch} val AP {ap}");
            }
            Err(e) => {
                eprintln!("train: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => {
            println!("train: outputs in {}", out.display());
            Ok(())
        }
    }
}

/// Fold directories under a `train` output that hold a snapshot, by fold.
fn fold_dirs(root: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        let fold = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("fold"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(f) = fold {
            if path.join(SNAPSHOT_FILE).is_file() {
                out.push((f, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn predictions_csv(p: &PredictionSet) -> String {
    let mut out = String::from("knee_id,label,p_none,p_slow,p_fast,p_progression\n");
    for i in 0..p.len() {
        let [a, b, c] = p.probs[i];
        out.push_str(&format!("{},{},{a},{b},{c},{}\n", p.knee_ids[i], p.labels[i], b + c));
    }
    out
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let start = Instant::now();
    let run: RunInfo = read_json(&a.snapshots.join(RUN_FILE))?;
    let model_cfg = ModelConfig::load(&a.snapshots.join(MODEL_CONFIG_FILE))?;
    let split: SplitsFile = read_json(&a.snapshots.join(SPLITS_FILE))?;
    let volumes = a.volumes.clone().unwrap_or_else(|| run.volumes.clone());
    let (kept, _) = labeled_cohort(&a.cohort, &volumes)?;
    let by_id: HashMap<String, &LabeledKnee> = kept.iter().map(|k| (k.record.knee_id(), k)).collect();
    let eval_knees = split
        .eval
        .iter()
        .map(|id| {
            by_id.get(id).map(|&k| k.clone()).ok_or_else(|| {
                Error::data(format!("evaluation knee {id} is missing from {} or has no label", a.cohort.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if eval_knees.is_empty() {
        return Err(Error::data(format!("no evaluation knees for {}", split.holdout_institution)));
    }
    let samples = load_samples(&eval_knees, &volumes, &model_cfg)?;
    let idx: Vec<usize> = (0..samples.len()).collect();

    let folds = fold_dirs(&a.snapshots)?;
    if folds.is_empty() {
        return Err(Error::data(format!("no fold snapshots under {}", a.snapshots.display())));
    }
    let mut members = Vec::with_capacity(folds.len());
    let mut member_ap = Vec::with_capacity(folds.len());
    let mut upstream = Vec::with_capacity(folds.len());
    for (fold, dir) in &folds {
        let tensors = checkpoint::load(&dir.join(SNAPSHOT_FILE))?;
        let model = model_from_tensors(&model_cfg, &tensors)?;
        let preds = predict(&model, &samples, &idx, 8)?;
        member_ap.push(json!({ "fold": fold, "ap": pooled_ap(&preds).ok() }));
        members.push(preds);
        let mpath = dir.join(MANIFEST_FILE);
        if mpath.is_file() {
            upstream.push(digest_manifest(&mpath, format!("fold{fold}/{MANIFEST_FILE}"))?);
        }
    }
    let ensemble = ensemble_predict(&members)?;
    let report = evaluate(&ensemble, a.n_boot, a.seed)?;

    let staged = Staged::begin(&a.out)?;
    let dir = staged.dir();
    write_json(&dir.join(REPORT_FILE), &report)?;
    write_file(&dir.join(PREDICTIONS_FILE), predictions_csv(&ensemble))?;
    export_curves(&report, dir)?;
    let config = json!({
        "n_boot": a.n_boot,
        "seed": a.seed,
        "holdout": split.holdout_institution,
        "folds": folds.iter().map(|(f, _)| f).collect::<Vec<_>>(),
        "members": member_ap,
    });
    let mut m = Manifest::new("evaluate", config, vec![a.seed]);
    m.inputs = digest_inputs(std::slice::from_ref(&a.cohort))?;
    m.upstream_manifests = upstream;
    finish_manifest(m, dir, start)?;
    staged.commit()?;
    println!(
        "evaluate: {} knees, prevalence {:.3}, AP {:.4} ± {:.4}, ROC AUC {:.4} ± {:.4}, balanced accuracy {:.4}",
        report.n_knees,
        report.prevalence,
        report.ap,
        report.ap_spread,
        report.roc_auc,
        report.roc_auc_spread,
        report.balanced_accuracy
    );
    Ok(())
}

pub fn cmd_profile(a: &ProfileArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = match (&a.config, &a.family) {
        (Some(path), _) => ModelConfig::load(path)?,
        (None, Some(f)) => {
            let family: Family = f.parse()?;
            match a.preset.as_str() {
                "full" => ModelConfig::full_scale(family),
                "toy" => ModelConfig::toy(family),
                p => return Err(Error::config(format!("unknown preset '{p}' (expected full or toy)"))),
            }
        }
        (None, None) => return Err(Error::config("profile needs --family or --config")),
    };
    if let Some(text) = &a.input {
        let shape: StackShape = text.parse()?;
        for s in cfg.inputs.values_mut() {
            *s = shape;
        }
        cfg.validate()?;
    }
    let mut report = profile_config(&cfg)?;
    if a.config.is_none() && a.preset == "full" {
        let target = match cfg.family {
            Family::Fc2d => Some(FC_PARAM_TARGET),
            Family::BiLstm2d => Some(LSTM_PARAM_TARGET),
            _ => None,
        };
        if let Some(t) = target {
            report.reconciliation.push(reconcile_hidden(&cfg, t, RECONCILE_TOL)?);
        }
    }
    if a.timing {
        report.timing = Some(time_inference(&cfg, a.warmup, a.runs, 0)?);
    }
    let name = a
        .out
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", a.out.display())))?
        .to_string_lossy()
        .into_owned();
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let partial = dir.join(format!(".{name}.partial"));
    write_json(&partial, &report)?;
    std::fs::rename(&partial, &a.out).map_err(|e| Error::io(&a.out, e))?;

    let config = json!({
        "model": cfg.to_text(),
        "timing": a.timing,
        "runs": a.runs,
        "warmup": a.warmup,
    });
    let mut m = Manifest::new("profile", config, vec![0]);
    m.inputs = digest_inputs(&a.config.iter().cloned().collect::<Vec<_>>())?;
    m.outputs = vec![digest_file(&a.out, name.clone())?];
    m.wall_clock_s = start.elapsed().as_secs_f64();
    let mpath = dir.join(format!("{name}.{MANIFEST_FILE}"));
    write_json(&mpath, &m)?;
    println!(
        "profile: {} params {} MACs {} ({} in attention scores)",
        cfg.family, report.total_params, report.total_macs, report.attention_score_macs
    );
    Ok(())
}

pub fn cmd_curves(a: &CurvesArgs) -> Result<()> {
    let start = Instant::now();
    let report: EvalReport = read_json(&a.report)?;
    let staged = Staged::begin(&a.out)?;
    export_curves(&report, staged.dir())?;
    let mut m = Manifest::new("curves", json!({}), vec![]);
    m.inputs = digest_inputs(std::slice::from_ref(&a.report))?;
    finish_manifest(m, staged.dir(), start)?;
    staged.commit()?;
    println!("curves: {} -> {}", a.report.display(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_dir_appears_only_on_commit() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("out");
        let s = Staged::begin(&target).unwrap();
        write_file(&s.dir().join("a.txt"), "x").unwrap();
        assert!(!target.exists());
        s.commit().unwrap();
        assert!(target.join("a.txt").is_file());
        assert_eq!(files_under(&target).unwrap().len(), 1);
    }

    #[test]
    fn triples_parse_and_reject() {
        assert_eq!(triple(Some("64x64x16"), DEFAULT_CROP, "c").unwrap(), [64, 64, 16]);
        assert_eq!(triple(None, DEFAULT_CROP, "c").unwrap(), DEFAULT_CROP);
        assert!(triple(Some("64x64"), DEFAULT_CROP, "c").is_err());
    }

}
