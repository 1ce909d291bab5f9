//! Turn household-simulator trajectories into panoramic navigation
//! demonstrations: keep the navigation segments, merge small moves, jitter
//! headings and mask part of the panorama.
//!
//!     cargo run --example alfred_transfer

use textnav::alfred::{consolidate_moves, split_goto_segments, to_demonstrations, transfer_all, TransferConfig};
use textnav::seeding::rng_from;
use textnav::worldgen::random_sim_trajectory;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rng_from(5, &[]);
    let trajs: Vec<_> = (0..20).map(|_| random_sim_trajectory(&mut rng, 5)).collect();

    let first = &trajs[0];
    println!("trajectory 0: {} low-level steps", first.steps.len());
    for seg in split_goto_segments(first) {
        let merged = consolidate_moves(&seg);
        let metres: f64 = merged.steps.iter().map(|s| s.displacement_m()).sum();
        println!("  {:?}: {} steps -> {} macro steps, {metres:.2} m", seg.instruction, seg.steps.len(), merged.steps.len());
    }

    let config = TransferConfig { seed: 5, ..TransferConfig::default() };
    let segments = transfer_all(&trajs, &config)?;
    let records = to_demonstrations(&segments, config.include_objects);
    println!("\n{} trajectories -> {} demonstrations", trajs.len(), records.len());
    println!("{}", records[0].text);
    Ok(())
}
