//! Builds every architecture family, runs a toy-sized forward pass and
//! lists full-scale parameter and MAC counts.

use volformer::arch::{build_model, Family, ModelConfig};
use volformer::nn::Forward;
use volformer::profile::{profile_config, random_input};

fn main() -> volformer::Result<()> {
    println!("{:<28} {:>10} {:>30} {:>10} {:>10}", "family", "toy params", "toy probabilities", "params", "GMACs");
    for family in Family::ALL {
        let toy = ModelConfig::toy(family);
        let model = build_model(&toy, 0)?;
        let views = random_input(&toy, 0)?;
        let p = model.probabilities(&Forward::eval(&model.store), &[views])?.to_vec();
        let full = profile_config(&ModelConfig::full_scale(family))?;
        println!(
            "{:<28} {:>10} {:>30} {:>9.1}M {:>10.1}",
            family.to_string(),
            model.param_count(),
            format!("[{:.3}, {:.3}, {:.3}]", p[0], p[1], p[2]),
            full.total_params as f64 / 1e6,
            full.total_macs as f64 / 1e9,
        );
    }
    Ok(())
}
