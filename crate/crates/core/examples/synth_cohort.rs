//! Generates a small synthetic cohort and writes it in the on-disk layout
//! the command-line pipeline reads.
//!
//! `cargo run --release --example synth_cohort -- [out_dir]`

use volformer::data::{synth_generate, write_synth, SynthConfig};

fn main() -> volformer::Result<()> {
    let mut cfg = SynthConfig::new(25, 3);
    cfg.dims = [40, 40, 12];
    let knees = synth_generate(&cfg)?;

    let mut counts = [0usize; 3];
    for k in &knees {
        counts[k.planted.index()] += 1;
    }
    println!("{} knees, planted none/slow/fast = {:?}", knees.len(), counts);
    for k in knees.iter().take(4) {
        let r = &k.record;
        println!("  {} {} age {:.0} klg {:?} -> {}", r.knee_id(), r.institution_id, r.age, r.klg, k.planted);
    }

    if let Some(dir) = std::env::args().nth(1) {
        write_synth(&knees, dir.as_ref())?;
        println!("wrote cohort.csv and {} volumes to {dir}", knees.len());
    }
    Ok(())
}
