//! Drive the language-model agent through the gateway interface. The
//! offline simulator answers with a caption from the prompt, so this runs
//! without network access; with `--gateway http` it uses LM_BASE_URL and
//! LM_API_KEY instead.
//!
//!     cargo run --example lm_agent [-- --gateway http]

use std::sync::Arc;

use textnav::agents::LmAgent;
use textnav::gateway::{GatewayConfig, HttpGateway, LmGateway, SimulatedGateway, SimulationConfig};
use textnav::render::PromptProfile;
use textnav::runner::{run_all, EvalReport, RunConfig};
use textnav::worldgen::random_world;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let http = std::env::args().skip_while(|a| a != "--gateway").nth(1).is_some_and(|g| g == "http");
    let gateway: Arc<dyn LmGateway> = if http {
        Arc::new(HttpGateway::new(GatewayConfig::from_env()?))
    } else {
        Arc::new(SimulatedGateway::new(SimulationConfig::default()))
    };
    let (scenes, episodes) = random_world(8, 2, 8..=12, 3);
    let config = RunConfig { profile: PromptProfile::zero_shot(), max_steps: 8, ..RunConfig::default() };
    let results = run_all(&scenes, &episodes, |_, _| Box::new(LmAgent::new(gateway.clone())), &config, None)?;

    let first = &results[0];
    println!("{} final prompt:\n{}\n", first.episode_id, first.prompts.last().map_or("", String::as_str));
    for d in &first.decisions {
        println!("  answered {:?} -> {} ({:?})", d.raw_text, d.action, d.matched_by);
    }
    let report = EvalReport::new("", gateway.model_id(), results)?;
    println!("\n{}", serde_json::to_string_pretty(&report.aggregate)?);
    Ok(())
}
