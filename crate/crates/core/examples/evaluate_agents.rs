//! Compare the oracle, a random walk and a random walk that never stops
//! early on the same generated episodes.
//!
//!     cargo run --release --example evaluate_agents

use textnav::agents::{Agent, OracleAgent, RandomAgent};
use textnav::runner::{aggregate, run_all, RunConfig};
use textnav::seeding::derive_seed;
use textnav::worldgen::random_world;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (scenes, episodes) = random_world(3, 10, 15..=30, 20);
    let config = RunConfig::default();

    println!("{:<22} {:>6} {:>6} {:>6} {:>6} {:>6}", "agent", "TL", "NE", "SR", "OSR", "SPL");
    let agents: [(&str, &(dyn Fn(usize) -> Box<dyn Agent> + Sync)); 3] = [
        ("oracle", &|_| Box::new(OracleAgent)),
        ("random walk", &|i| Box::new(RandomAgent::new(derive_seed(1, &[i as u64])))),
        ("random, p(stop)=0.05", &|i| Box::new(RandomAgent::with_stop_probability(derive_seed(1, &[i as u64]), 0.05))),
    ];
    for (name, make) in agents {
        let results = run_all(&scenes, &episodes, |_, i| make(i), &config, None)?;
        let a = aggregate(&results)?;
        println!("{name:<22} {:>6.1} {:>6.1} {:>6.1} {:>6.1} {:>6.1}", a.tl, a.ne, a.sr, a.osr, a.spl);
    }
    Ok(())
}
