//! Runs the whole command-line pipeline in a temporary directory: synth,
//! preprocess, label, split, train, evaluate, curves and profile.

use std::path::Path;

use volformer::cli::run;

fn cli(args: &[&str]) {
    println!("$ volformer {}", args.join(" "));
    let code = run(std::iter::once("volformer").chain(args.iter().copied()));
    assert_eq!(code, 0, "exit code {code}");
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn main() -> std::io::Result<()> {
    let root = std::env::temp_dir().join(format!("volformer-pipeline-{}", std::process::id()));
    let (raw, prep) = (root.join("raw"), root.join("prep"));
    let cohort = prep.join("cohort.csv");
    cli(&["synth", "--subjects", "40", "--seed", "7", "--out", s(&raw)]);
    cli(&["preprocess", "--input", s(&raw), "--out", s(&prep), "--crop", "64x64x16"]);
    cli(&["label", "--cohort", s(&cohort), "--volumes", s(&prep), "--out", s(&root.join("labels"))]);
    cli(&["split", "--cohort", s(&cohort), "--volumes", s(&prep), "--holdout", "INST1", "--folds", "3", "--seed", "7", "--out", s(&root.join("split"))]);

    std::fs::write(root.join("model.cfg"), "family = 2d_fc\npreset = toy\n")?;
    std::fs::write(root.join("train.cfg"), "epochs = 3\nwarmup_epochs = 1\nbatch_size = 4\n")?;
    std::fs::write(
        root.join("experiment.cfg"),
        "cohort = prep/cohort.csv\nvolumes = prep\noutput = runs/fc\nmodel_config = model.cfg\n\
         train_config = train.cfg\nholdout = INST1\nfolds = 3\nseed = 7\n",
    )?;
    cli(&["train", "--config", s(&root.join("experiment.cfg"))]);
    let eval = root.join("eval");
    cli(&["evaluate", "--snapshots", s(&root.join("runs/fc")), "--cohort", s(&cohort), "--out", s(&eval), "--n-boot", "200"]);
    cli(&["curves", "--report", s(&eval.join("report.json")), "--out", s(&root.join("curves"))]);
    cli(&["profile", "--family", "2d_trf", "--preset", "toy", "--out", s(&root.join("profile.json"))]);

    println!("outputs in {}", root.display());
    Ok(())
}
