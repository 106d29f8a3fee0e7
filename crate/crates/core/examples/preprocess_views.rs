//! Crops, quantizes and downsamples a volume, reprojects it into the three
//! anatomical views and applies a random augmentation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use volformer::data::{augment, preprocess, synth_generate, AugmentPolicy, SliceStack, SynthConfig, View, SYNTH_CROP};

fn main() -> volformer::Result<()> {
    let knee = synth_generate(&SynthConfig::new(1, 5))?.remove(0);
    let raw = &knee.volume;
    println!("raw {:?} at {:.2?} mm", raw.dims, raw.spacing);

    let vol = preprocess(raw, SYNTH_CROP, [2, 2, 2])?;
    println!("preprocessed {:?} at {:.2?} mm, {:?}", vol.dims, vol.spacing, vol.voxels.dtype());

    for view in [View::Sag, View::Cor, View::Ax] {
        let s = SliceStack::from_volume(&vol, view, &knee.record.knee_id())?;
        let mean = s.data.iter().map(|&x| f64::from(x)).sum::<f64>() / s.data.len() as f64;
        println!("{view}: {} slices of {}x{}, mean intensity {mean:.1}", s.slices, s.height, s.width);
    }

    let sag = SliceStack::from_volume(&vol, View::Sag, &knee.record.knee_id())?;
    let aug = augment(&sag, &mut ChaCha8Rng::seed_from_u64(1), &AugmentPolicy::default());
    println!("augmented: {}", aug.provenance.join(" -> "));
    Ok(())
}
