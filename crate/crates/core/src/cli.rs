//! The `textnav` command line: one subcommand per stage.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 gateway error.
//! Diagnostics go to standard error; primary outputs go to `--out` or, when
//! that is absent, to standard output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{load_replay_scripts, Agent, LmAgent, OracleAgent, RandomAgent, ReplayAgent};
use crate::alfred::{load_sim_trajectories, to_demonstrations, transfer_all, TransferConfig};
use crate::config::{existing, existing_all, merge, require, ConfigError, ConfigFile, GatewayArgs};
use crate::episode::{load_episodes, sample_few_shot, Episode, SceneSet};
use crate::gateway::LmGateway;
use crate::observation::CaptionOverrides;
use crate::render::{records_from_jsonl, records_to_jsonl, PromptMode, PromptProfile, TrajectoryRecord};
use crate::runner::{run_all, EvalReport, NoMatchPolicy, RunConfig, RunError};
use crate::seeding::derive_seed;
use crate::synth::{
    load_seed_entries, mix_datasets, rejects_to_jsonl, run_pipeline, seed_entries_from_episodes, seed_entries_to_jsonl,
    PipelineConfig, SeedBank, SynthError,
};
use crate::teacher::{build_dataset, DatasetConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Gateway(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Gateway(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(_) | ConfigError::Missing(_) => CliError::Usage(e.to_string()),
            ConfigError::Io { .. } | ConfigError::NoSuchFile(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        if e.is_gateway() {
            CliError::Gateway(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Gateway(_) => CliError::Gateway(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "textnav", version, about = "Text-only navigation: evaluation, dataset building and data synthesis")]
pub struct Cli {
    /// TOML config file; flags given on the command line override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads [default: number of logical cores]
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Base random seed [default: 0]
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an agent over episodes and write a metrics report
    Eval(EvalArgs),
    /// Roll out teacher demonstrations (with random perturbation) to JSONL
    BuildDataset(BuildArgs),
    /// Generate synthetic instructions and trajectories from a seed bank
    Synth(SynthArgs),
    /// Convert simulator trajectories into panoramic text demonstrations
    Transfer(TransferArgs),
    /// Play back scripted actions, optionally with edited captions
    Replay(ReplayArgs),
    /// Shuffle synthetic and real records into one dataset
    Mix(MixArgs),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Eval(_) => "eval",
            Command::BuildDataset(_) => "build_dataset",
            Command::Synth(_) => "synth",
            Command::Transfer(_) => "transfer",
            Command::Replay(_) => "replay",
            Command::Mix(_) => "mix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// Shortest-path teacher
    Oracle,
    /// Uniform random walk
    Random,
    /// Actions from a script file
    Replay,
    /// Language model through the gateway
    Lm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PromptArg {
    Finetune,
    ZeroShot,
    FewShot,
}

impl From<PromptArg> for PromptMode {
    fn from(p: PromptArg) -> Self {
        match p {
            PromptArg::Finetune => PromptMode::Finetune,
            PromptArg::ZeroShot => PromptMode::ZeroShot,
            PromptArg::FewShot => PromptMode::FewShot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NoMatchArg {
    /// End the episode without stopping
    Abort,
    /// Treat the answer as stop
    ForceStop,
}

impl From<NoMatchArg> for NoMatchPolicy {
    fn from(p: NoMatchArg) -> Self {
        match p {
            NoMatchArg::Abort => NoMatchPolicy::Abort,
            NoMatchArg::ForceStop => NoMatchPolicy::ForceStop,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    /// Scene graph JSON files
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub scenes: Option<Vec<PathBuf>>,
    /// Episode JSONL file
    #[arg(long, value_name = "FILE")]
    pub episodes: Option<PathBuf>,
    /// Which agent to run [default: oracle]
    #[arg(long, value_enum)]
    pub agent: Option<AgentKind>,
    /// Replay script JSONL (for --agent replay)
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// Random agent: fixed stop probability [default: 1 / (candidates + 1)]
    #[arg(long)]
    pub stop_probability: Option<f64>,
    /// Decision limit per episode [default: 15]
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Prompt token budget [default: 2048]
    #[arg(long)]
    pub token_budget: Option<usize>,
    /// Task description style [default: finetune]
    #[arg(long, value_enum)]
    pub prompt: Option<PromptArg>,
    /// Rendered example trajectory for --prompt few-shot
    #[arg(long, value_name = "FILE")]
    pub demonstration: Option<PathBuf>,
    /// Show detected objects under each caption [default: true]
    #[arg(long, value_name = "BOOL")]
    pub include_objects: Option<bool>,
    /// What to do when an answer matches no candidate [default: force-stop]
    #[arg(long, value_enum)]
    pub no_match: Option<NoMatchArg>,
    /// Which of the episode's instructions to use [default: 0]
    #[arg(long)]
    pub instruction_index: Option<usize>,
    /// Success radius in meters [default: 3]
    #[arg(long)]
    pub success_threshold: Option<f64>,
    /// Caption override JSON
    #[arg(long, value_name = "FILE")]
    pub overrides: Option<PathBuf>,
    /// Report JSON path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-episode CSV path
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct BuildArgs {
    /// Scene graph JSON files
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub scenes: Option<Vec<PathBuf>>,
    /// Episode JSONL file
    #[arg(long, value_name = "FILE")]
    pub episodes: Option<PathBuf>,
    /// Probability of replacing a teacher move with a random one [default: 0]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Demonstrations per episode [default: 1]
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Decision budget per demonstration [default: 2 x hops + 5]
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Redraws for a demonstration that runs out of budget [default: 5]
    #[arg(long)]
    pub retries: Option<usize>,
    /// Use only this many episodes, sampled over --shot-scenes scans
    #[arg(long)]
    pub shots: Option<usize>,
    /// Number of scans the --shots episodes come from [default: 1]
    #[arg(long)]
    pub shot_scenes: Option<usize>,
    /// Show detected objects under each caption [default: true]
    #[arg(long, value_name = "BOOL")]
    pub include_objects: Option<bool>,
    /// Output JSONL path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    /// Seed bank JSONL (instruction + rendered trajectory per line)
    #[arg(long, value_name = "FILE")]
    pub seed_bank: Option<PathBuf>,
    /// Build the seed bank from these scenes instead
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub scenes: Option<Vec<PathBuf>>,
    /// Episodes for building the seed bank
    #[arg(long, value_name = "FILE")]
    pub episodes: Option<PathBuf>,
    /// Also write the seed bank that was used
    #[arg(long, value_name = "FILE")]
    pub save_bank: Option<PathBuf>,
    /// Number of validated trajectories to produce
    #[arg(long)]
    pub target: Option<usize>,
    /// Example instructions per generation call [default: 3]
    #[arg(long)]
    pub k_examples: Option<usize>,
    /// Instructions requested per call [default: 10]
    #[arg(long)]
    pub n_per_call: Option<usize>,
    /// Extra attempts for a trajectory that fails validation [default: 3]
    #[arg(long)]
    pub retries: Option<usize>,
    /// Minimum trajectory length [default: 5]
    #[arg(long)]
    pub min_steps: Option<usize>,
    /// Maximum trajectory length [default: 7]
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Show detected objects when building the seed bank [default: true]
    #[arg(long, value_name = "BOOL")]
    pub include_objects: Option<bool>,
    /// Output JSONL path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Rejected instructions with reasons
    #[arg(long, value_name = "FILE")]
    pub rejects: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub gateway: GatewayArgs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct TransferArgs {
    /// Simulator trajectory JSONL
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Fewest masked slots per panorama [default: 0]
    #[arg(long)]
    pub mask_min: Option<usize>,
    /// Most masked slots per panorama [default: 8]
    #[arg(long)]
    pub mask_max: Option<usize>,
    /// Rotate headings by a random offset [default: true]
    #[arg(long, value_name = "BOOL")]
    pub jitter: Option<bool>,
    /// Show detected objects under each caption [default: true]
    #[arg(long, value_name = "BOOL")]
    pub include_objects: Option<bool>,
    /// Output JSONL path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct ReplayArgs {
    /// Scene graph JSON files
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub scenes: Option<Vec<PathBuf>>,
    /// Episode JSONL file
    #[arg(long, value_name = "FILE")]
    pub episodes: Option<PathBuf>,
    /// Replay script JSONL, one line per episode
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// Caption override JSON
    #[arg(long, value_name = "FILE")]
    pub overrides: Option<PathBuf>,
    /// Decision limit per episode [default: 15]
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Prompt token budget [default: 2048]
    #[arg(long)]
    pub token_budget: Option<usize>,
    /// Show detected objects under each caption [default: true]
    #[arg(long, value_name = "BOOL")]
    pub include_objects: Option<bool>,
    /// Which of the episode's instructions to use [default: 0]
    #[arg(long)]
    pub instruction_index: Option<usize>,
    /// Write every prompt shown, step by step
    #[arg(long, value_name = "FILE")]
    pub transcript: Option<PathBuf>,
    /// Report JSON path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-episode CSV path
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct MixArgs {
    /// Synthetic records JSONL
    #[arg(long, value_name = "FILE")]
    pub synthetic: Option<PathBuf>,
    /// Real records JSONL
    #[arg(long, value_name = "FILE")]
    pub real: Option<PathBuf>,
    /// Output JSONL path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Settings shared by every subcommand.
struct Context {
    file: ConfigFile,
    seed: u64,
    section: &'static str,
}

impl Context {
    /// Merge flags into the file's section and render the effective settings.
    fn merge<T: Serialize + serde::de::DeserializeOwned>(&self, flags: &T) -> Result<(T, String), CliError> {
        let (merged, mut table) = merge(flags, self.file.section(self.section)?)?;
        table.retain(|_, v| !matches!(v, toml::Value::Table(t) if t.is_empty()));
        let mut root = toml::Table::new();
        root.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        root.insert(self.section.into(), toml::Value::Table(table));
        let rendered = toml::to_string(&root).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((merged, rendered))
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(existing(p)?)?,
        None => ConfigFile::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => file.top("seed")?.unwrap_or(0),
    };
    let jobs = match cli.jobs {
        Some(j) => Some(j),
        None => file.top("jobs")?,
    };
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let ctx = Context { file, seed, section: cli.command.section() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Eval(a) => eval(&ctx, &a),
        Command::BuildDataset(a) => build(&ctx, &a),
        Command::Synth(a) => synth(&ctx, &a),
        Command::Transfer(a) => transfer(&ctx, &a),
        Command::Replay(a) => replay(&ctx, &a),
        Command::Mix(a) => mix(&ctx, &a),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(data),
    }
}

fn load_world(scenes: Option<&Vec<PathBuf>>, episodes: Option<&PathBuf>) -> Result<(SceneSet, Vec<Episode>), CliError> {
    let scenes = require(scenes, "scenes")?;
    let episodes = require(episodes, "episodes")?;
    existing_all(scenes)?;
    existing(episodes)?;
    let set = SceneSet::load(scenes).map_err(data)?;
    let eps = load_episodes(episodes).map_err(data)?;
    set.validate(&eps).map_err(data)?;
    Ok((set, eps))
}

fn load_overrides(path: Option<&PathBuf>, scenes: &SceneSet) -> Result<Option<CaptionOverrides>, CliError> {
    let Some(p) = path else { return Ok(None) };
    let o = CaptionOverrides::load(existing(p)?).map_err(data)?;
    o.validate_in(scenes.graphs()).map_err(data)?;
    Ok(Some(o))
}

fn scripts_by_episode(path: &Path, episodes: &[Episode]) -> Result<BTreeMap<String, ReplayAgent>, CliError> {
    let scripts = load_replay_scripts(existing(path)?).map_err(data)?;
    let mut by_id = BTreeMap::new();
    for s in &scripts {
        if by_id.insert(s.episode_id.clone(), ReplayAgent::from_script(s)).is_some() {
            return Err(CliError::Data(format!("two scripts for episode `{}`", s.episode_id)));
        }
    }
    if let Some(ep) = episodes.iter().find(|e| !by_id.contains_key(&e.id)) {
        return Err(CliError::Data(format!("no script for episode `{}`", ep.id)));
    }
    Ok(by_id)
}

fn write_report(report: &EvalReport, out: Option<&PathBuf>, csv: Option<&PathBuf>) -> Result<(), CliError> {
    emit(out.map(PathBuf::as_path), &report.to_json())?;
    if let Some(p) = csv {
        emit(Some(p), &report.to_csv().map_err(data)?)?;
    }
    let a = &report.aggregate;
    eprintln!(
        "{} episodes: TL {:.1}  NE {:.1}  SR {:.1}  OSR {:.1}  SPL {:.1}",
        a.episodes, a.tl, a.ne, a.sr, a.osr, a.spl
    );
    Ok(())
}

fn eval(ctx: &Context, flags: &EvalArgs) -> Result<(), CliError> {
    let (a, settings) = ctx.merge(flags)?;
    let (scenes, episodes) = load_world(a.scenes.as_ref(), a.episodes.as_ref())?;
    let overrides = load_overrides(a.overrides.as_ref(), &scenes)?;
    let demonstration = match &a.demonstration {
        Some(p) => Some(std::fs::read_to_string(existing(p)?).map_err(data)?),
        None => None,
    };
    let mode = PromptMode::from(a.prompt.unwrap_or(PromptArg::Finetune));
    let profile = PromptProfile::for_mode(mode, demonstration).map_err(|e| CliError::Usage(e.to_string()))?;
    let defaults = RunConfig::default();
    let config = RunConfig {
        max_steps: a.max_steps.unwrap_or(defaults.max_steps),
        include_objects: a.include_objects.unwrap_or(true),
        token_budget: a.token_budget.unwrap_or(defaults.token_budget),
        profile,
        instruction_index: a.instruction_index.unwrap_or(0),
        no_match: a.no_match.map_or(defaults.no_match, NoMatchPolicy::from),
        success_threshold: a.success_threshold.unwrap_or(defaults.success_threshold),
        ..defaults
    };
    let kind = a.agent.unwrap_or(AgentKind::Oracle);
    let seed = ctx.seed;
    let results = match kind {
        AgentKind::Oracle => run_all(&scenes, &episodes, |_, _| Box::new(OracleAgent), &config, overrides.as_ref())?,
        AgentKind::Random => {
            let p = a.stop_probability;
            if p.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
                return Err(CliError::Usage("--stop-probability must lie in [0, 1]".into()));
            }
            run_all(
                &scenes,
                &episodes,
                |_, i| {
                    let s = derive_seed(seed, &[i as u64]);
                    let agent = match p {
                        Some(p) => RandomAgent::with_stop_probability(s, p),
                        None => RandomAgent::new(s),
                    };
                    Box::new(agent) as Box<dyn Agent>
                },
                &config,
                overrides.as_ref(),
            )?
        }
        AgentKind::Replay => {
            let script = require(a.script.as_ref(), "script")?;
            let agents = scripts_by_episode(script, &episodes)?;
            run_all(&scenes, &episodes, |ep, _| Box::new(agents[&ep.id].clone()), &config, overrides.as_ref())?
        }
        AgentKind::Lm => {
            let gw: Arc<dyn LmGateway> = Arc::from(a.gateway.build(seed).map_err(|e| CliError::Gateway(e.to_string()))?);
            run_all(&scenes, &episodes, |_, _| Box::new(LmAgent::new(gw.clone())), &config, overrides.as_ref())?
        }
    };
    let name = kind.to_possible_value().expect("no skipped variants").get_name().to_string();
    let report = EvalReport::new(ctx.file.text.clone(), name, results)?.with_settings(settings);
    write_report(&report, a.out.as_ref(), a.csv.as_ref())
}

fn replay(ctx: &Context, flags: &ReplayArgs) -> Result<(), CliError> {
    let (a, settings) = ctx.merge(flags)?;
    let (scenes, episodes) = load_world(a.scenes.as_ref(), a.episodes.as_ref())?;
    let overrides = load_overrides(a.overrides.as_ref(), &scenes)?;
    let agents = scripts_by_episode(require(a.script.as_ref(), "script")?, &episodes)?;
    let defaults = RunConfig::default();
    let config = RunConfig {
        max_steps: a.max_steps.unwrap_or(defaults.max_steps),
        include_objects: a.include_objects.unwrap_or(true),
        token_budget: a.token_budget.unwrap_or(defaults.token_budget),
        instruction_index: a.instruction_index.unwrap_or(0),
        ..defaults
    };
    let results = run_all(&scenes, &episodes, |ep, _| Box::new(agents[&ep.id].clone()), &config, overrides.as_ref())?;
    if let Some(p) = &a.transcript {
        let mut text = String::new();
        for r in &results {
            for (t, prompt) in r.prompts.iter().enumerate() {
                text.push_str(&format!("===== {} step {} =====\n{}\n", r.episode_id, t + 1, prompt.trim_end()));
                if let Some(d) = r.decisions.get(t) {
                    text.push_str(&format!("> {}\n", d.raw_text));
                }
            }
        }
        emit(Some(p), &text)?;
    }
    let report = EvalReport::new(ctx.file.text.clone(), "replay", results)?.with_settings(settings);
    write_report(&report, a.out.as_ref(), a.csv.as_ref())
}

fn build(ctx: &Context, flags: &BuildArgs) -> Result<(), CliError> {
    let (a, _) = ctx.merge(flags)?;
    let (scenes, mut episodes) = load_world(a.scenes.as_ref(), a.episodes.as_ref())?;
    if let Some(shots) = a.shots {
        episodes = sample_few_shot(&episodes, shots, a.shot_scenes.unwrap_or(1), ctx.seed).map_err(data)?;
    }
    let defaults = DatasetConfig::default();
    let rho = a.rho.unwrap_or(defaults.rho);
    if !(0.0..=1.0).contains(&rho) {
        return Err(CliError::Usage("--rho must lie in [0, 1]".into()));
    }
    let config = DatasetConfig {
        rho,
        seed: ctx.seed,
        repeats: a.repeats.unwrap_or(defaults.repeats),
        max_steps: a.max_steps.or(defaults.max_steps),
        retries: a.retries.unwrap_or(defaults.retries),
    };
    let demos = build_dataset(&scenes, &episodes, &config).map_err(data)?;
    let include_objects = a.include_objects.unwrap_or(true);
    let records: Vec<TrajectoryRecord> = demos.iter().map(|d| d.to_record(include_objects)).collect();
    let random: usize = demos.iter().map(|d| d.random_steps()).sum();
    eprintln!("{} demonstrations, {random} random steps", records.len());
    emit(a.out.as_deref(), &records_to_jsonl(&records))
}

fn synth(ctx: &Context, flags: &SynthArgs) -> Result<(), CliError> {
    let (a, _) = ctx.merge(flags)?;
    let target = require(a.target, "target")?;
    let entries = match (&a.seed_bank, &a.scenes) {
        (Some(p), None) => load_seed_entries(existing(p)?)?,
        (None, Some(_)) => {
            let (scenes, episodes) = load_world(a.scenes.as_ref(), a.episodes.as_ref())?;
            seed_entries_from_episodes(&scenes, &episodes, a.include_objects.unwrap_or(true))?
        }
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --seed-bank or --scenes, not both".into())),
        (None, None) => return Err(ConfigError::Missing("seed_bank").into()),
    };
    if let Some(p) = &a.save_bank {
        emit(Some(p), &seed_entries_to_jsonl(&entries))?;
    }
    let gateway = a.gateway.build(ctx.seed).map_err(|e| CliError::Gateway(e.to_string()))?;
    let bank = SeedBank::new(entries, gateway.as_ref())?;
    let mut config = PipelineConfig::new(target, ctx.seed);
    if let Some(k) = a.k_examples {
        config.instructions.k_examples = k;
    }
    if let Some(n) = a.n_per_call {
        config.instructions.n_per_call = n;
    }
    if let Some(r) = a.retries {
        config.trajectories.retries = r;
    }
    if let Some(m) = a.min_steps {
        config.trajectories.min_steps = m;
    }
    if let Some(m) = a.max_steps {
        config.trajectories.max_steps = m;
    }
    if config.trajectories.min_steps > config.trajectories.max_steps || config.instructions.n_per_call == 0 {
        return Err(CliError::Usage("need min-steps <= max-steps and n-per-call >= 1".into()));
    }
    let output = run_pipeline(gateway.as_ref(), &bank, &config)?;
    eprintln!("{} trajectories accepted, {} instructions rejected", output.records.len(), output.rejects.len());
    if let Some(p) = &a.rejects {
        emit(Some(p), &rejects_to_jsonl(&output.rejects))?;
    }
    emit(a.out.as_deref(), &records_to_jsonl(&output.records))
}

fn transfer(ctx: &Context, flags: &TransferArgs) -> Result<(), CliError> {
    let (a, _) = ctx.merge(flags)?;
    let input = require(a.input.as_ref(), "input")?;
    let trajs = load_sim_trajectories(existing(input)?).map_err(data)?;
    let defaults = TransferConfig::default();
    let config = TransferConfig {
        seed: ctx.seed,
        mask_min: a.mask_min.unwrap_or(defaults.mask_min),
        mask_max: a.mask_max.unwrap_or(defaults.mask_max),
        jitter: a.jitter.unwrap_or(defaults.jitter),
        include_objects: a.include_objects.unwrap_or(defaults.include_objects),
    };
    let segments = transfer_all(&trajs, &config).map_err(|e| CliError::Usage(e.to_string()))?;
    let records = to_demonstrations(&segments, config.include_objects);
    eprintln!("{} trajectories -> {} navigation segments", trajs.len(), records.len());
    emit(a.out.as_deref(), &records_to_jsonl(&records))
}

fn read_records(path: Option<&PathBuf>) -> Result<Vec<TrajectoryRecord>, CliError> {
    let Some(p) = path else { return Ok(Vec::new()) };
    let text = std::fs::read_to_string(existing(p)?).map_err(data)?;
    records_from_jsonl(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn mix(ctx: &Context, flags: &MixArgs) -> Result<(), CliError> {
    let (a, _) = ctx.merge(flags)?;
    if a.synthetic.is_none() && a.real.is_none() {
        return Err(CliError::Usage("give --synthetic, --real, or both".into()));
    }
    let mixed = mix_datasets(read_records(a.synthetic.as_ref())?, read_records(a.real.as_ref())?, ctx.seed);
    emit(a.out.as_deref(), &records_to_jsonl(&mixed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            for arg in sub.get_arguments() {
                assert!(arg.get_help().is_some(), "{} --{} has no help", sub.get_name(), arg.get_id());
                assert!(!arg.is_hide_set());
            }
        }
    }

    #[test]
    fn unset_flags_do_not_clobber_the_file() {
        let flags = EvalArgs { max_steps: Some(4), ..EvalArgs::default() };
        let ctx = Context {
            file: ConfigFile::parse("[eval]\nagent = \"random\"\nmax_steps = 9\n[eval.gateway]\nkind = \"mock\"\n").unwrap(),
            seed: 1,
            section: "eval",
        };
        let (merged, rendered) = ctx.merge(&flags).unwrap();
        assert_eq!(merged.agent, Some(AgentKind::Random));
        assert_eq!(merged.max_steps, Some(4));
        assert!(rendered.contains("max_steps = 4"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_from(["textnav", "eval", "--bogus"]), 1);
        assert_eq!(main_from(["textnav", "--help"]), 0);
        assert_eq!(main_from(["textnav", "eval", "--agent", "oracle"]), 1);
        assert_eq!(main_from(["textnav", "eval", "--scenes", "/nonexistent.json", "--episodes", "/nonexistent.jsonl"]), 2);
    }
}
