//! Two-phase synthesis against the offline simulator: new instructions from
//! seed examples, then a trajectory for each, validated and retried.
//!
//!     cargo run --release --example synthetic_pipeline [-- TARGET]

use textnav::gateway::{SimulatedGateway, SimulationConfig};
use textnav::render::Source;
use textnav::synth::{mix_datasets, run_pipeline, seed_entries_from_episodes, PipelineConfig, SeedBank};
use textnav::teacher::{build_dataset, DatasetConfig};
use textnav::worldgen::random_world;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target: usize = std::env::args().nth(1).map_or(Ok(50), |s| s.parse())?;
    let (scenes, episodes) = random_world(21, 2, 8..=14, 5);
    let gateway = SimulatedGateway::new(SimulationConfig { seed: 4, malformed_rate: 0.3, echo_rate: 0.2, ..Default::default() });

    let bank = SeedBank::new(seed_entries_from_episodes(&scenes, &episodes, true)?, &gateway)?;
    println!("seed bank: {} instruction/trajectory pairs", bank.len());

    let output = run_pipeline(&gateway, &bank, &PipelineConfig::new(target, 4))?;
    println!("{} trajectories accepted, {} instructions rejected", output.records.len(), output.rejects.len());
    if let Some(r) = output.rejects.first() {
        println!("example rejection: {:?}\n  {}", r.instruction, r.reasons.join("\n  "));
    }
    let first = &output.records[0];
    let p = first.provenance.as_ref().expect("synthetic records carry provenance");
    println!("\n{} (model {}, seed {}, attempt {}):\n{}", first.episode_id, p.model, p.seed_id, p.attempt, first.text);

    let real: Vec<_> = build_dataset(&scenes, &episodes, &DatasetConfig::default())?.iter().map(|d| d.to_record(true)).collect();
    let mixed = mix_datasets(output.records, real, 9);
    let n_syn = mixed.iter().filter(|r| r.source == Source::Synthetic).count();
    println!("mixed dataset: {} records, {n_syn} synthetic", mixed.len());
    Ok(())
}
