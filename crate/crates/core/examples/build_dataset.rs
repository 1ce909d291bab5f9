//! Build teacher demonstrations with random perturbation on a generated
//! world and report how often the teacher was overridden.
//!
//!     cargo run --release --example build_dataset [-- RHO]

use textnav::render::records_to_jsonl;
use textnav::teacher::{build_dataset, DatasetConfig};
use textnav::worldgen::random_world;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rho: f64 = std::env::args().nth(1).map_or(Ok(0.2), |s| s.parse())?;
    let (scenes, episodes) = random_world(11, 8, 10..=25, 10);
    let config = DatasetConfig { rho, seed: 7, repeats: 3, ..DatasetConfig::default() };
    let demos = build_dataset(&scenes, &episodes, &config)?;

    let steps: usize = demos.iter().map(|d| d.steps.len()).sum();
    let random: usize = demos.iter().map(|d| d.random_steps()).sum();
    let detours = demos.iter().filter(|d| d.random_steps() > 0).count();
    println!("{} episodes x {} repeats = {} demonstrations", episodes.len(), config.repeats, demos.len());
    println!("{steps} decisions, {random} random ({:.1}% of decisions)", 100.0 * random as f64 / steps as f64);
    println!("{detours} demonstrations contain at least one detour");

    let records: Vec<_> = demos.iter().map(|d| d.to_record(true)).collect();
    let jsonl = records_to_jsonl(&records);
    println!("{} bytes of JSONL; first record's action spans:", jsonl.len());
    for span in &records[0].action_spans {
        println!("  {:>5}..{:<5} random={} {:?}", span.start, span.end, span.is_random, records[0].span_text(span).unwrap_or(""));
    }
    Ok(())
}
