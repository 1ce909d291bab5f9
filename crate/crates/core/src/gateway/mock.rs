use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finish_completion, l2_normalize, CompletionRequest, EmbeddingRequest, GatewayError, LmGateway};
use crate::seeding::{derive_seed, hash_text};
use crate::synth::{PHASE_ONE_MARKER, PHASE_TWO_MARKER};

/// Feature-hashing bag-of-words embedder. A pure function of the text:
/// each lowercase token contributes a fixed pseudo-random vector, and the
/// sum is normalized. Texts sharing words land close together.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64 }
    }
}

impl HashEmbedder {
    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0f32; self.dim];
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        let keys: Vec<u64> =
            if tokens.is_empty() { vec![hash_text(text)] } else { tokens.iter().map(|t| hash_text(t)).collect() };
        for key in keys {
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            for x in acc.iter_mut() {
                *x += rng.random_range(-1.0f32..1.0);
            }
        }
        if l2_normalize(&mut acc).is_err() {
            acc = vec![0.0; self.dim];
            acc[0] = 1.0;
        }
        acc
    }

    pub fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError> {
        request.validate()?;
        Ok(request.texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// Replays a fixed queue of completions; records every prompt it sees.
pub struct ScriptedGateway {
    responses: Mutex<VecDeque<Result<String, GatewayError>>>,
    prompts: Mutex<Vec<String>>,
    embedder: HashEmbedder,
}

impl ScriptedGateway {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::with_results(responses.into_iter().map(|s| Ok(s.into())))
    }

    pub fn with_results(responses: impl IntoIterator<Item = Result<String, GatewayError>>) -> Self {
        ScriptedGateway {
            responses: Mutex::new(responses.into_iter().collect()),
            prompts: Mutex::new(vec![]),
            embedder: HashEmbedder::default(),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("poisoned").clone()
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("poisoned").len()
    }
}

impl LmGateway for ScriptedGateway {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.validate()?;
        self.prompts.lock().expect("poisoned").push(request.prompt.clone());
        let next = self.responses.lock().expect("poisoned").pop_front().ok_or(GatewayError::Exhausted)?;
        finish_completion(&next?, request)
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError> {
        self.embedder.embed(request)
    }

    fn model_id(&self) -> String {
        "scripted".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub seed: u64,
    /// Probability that a generated trajectory is deliberately malformed.
    pub malformed_rate: f64,
    /// Probability that an instruction list echoes one of its examples.
    pub echo_rate: f64,
    /// Navigation prompts at or beyond this step answer "Stop".
    pub stop_after_step: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { seed: 0, malformed_rate: 0.0, echo_rate: 0.0, stop_after_step: 6 }
    }
}

/// Offline stand-in for a generative model. Recognizes the instruction
/// expansion prompt, the trajectory generation prompt and navigation
/// prompts, and answers each with plausible text derived only from the
/// prompt, the configured seed, and how many times that same prompt was
/// asked before. Output is therefore reproducible under any thread schedule.
pub struct SimulatedGateway {
    config: SimulationConfig,
    embedder: HashEmbedder,
    asked: Mutex<HashMap<u64, u64>>,
}

const ROOMS: &[&str] = &[
    "kitchen", "living room", "bedroom", "bathroom", "hallway", "dining room", "office", "laundry room",
    "staircase", "foyer", "den", "garage", "patio", "closet", "nursery",
];
const OBJECTS: &[&str] = &[
    "couch", "fireplace", "refrigerator", "bed", "dresser", "mirror", "sink", "bathtub", "dining table",
    "bookshelf", "piano", "television", "rug", "lamp", "armchair", "potted plant", "window", "painting",
    "washing machine", "desk",
];
const VERBS: &[&str] = &["Walk past", "Go through", "Head towards", "Exit past", "Continue past"];
const DIRECTIONS: &[&str] = &[
    "straight ahead", "30 degree right", "60 degree right", "90 degree right", "120 degree right",
    "150 degree right", "back", "150 degree left", "120 degree left", "90 degree left", "60 degree left",
    "30 degree left", "straight ahead and 30 degree down", "back and 30 degree up",
];

impl SimulatedGateway {
    pub fn new(config: SimulationConfig) -> Self {
        SimulatedGateway { config, embedder: HashEmbedder::default(), asked: Mutex::new(HashMap::new()) }
    }

    fn rng_for(&self, prompt: &str) -> ChaCha8Rng {
        let key = hash_text(prompt);
        let attempt = {
            let mut asked = self.asked.lock().expect("poisoned");
            let n = asked.entry(key).or_insert(0);
            *n += 1;
            *n
        };
        ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[key, attempt]))
    }

    fn instructions(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let examples: Vec<&str> = prompt.lines().filter_map(|l| l.strip_prefix("- ")).collect();
        let mut lines = Vec::with_capacity(10);
        for i in 0..10 {
            let text = match examples.choose(rng) {
                Some(echo) if rng.random_bool(self.config.echo_rate) => echo.to_string(),
                _ => format!(
                    "{} the {} in the {}, then turn {} into the {}. Stop next to the {}.",
                    VERBS.choose(rng).unwrap(),
                    OBJECTS.choose(rng).unwrap(),
                    ROOMS.choose(rng).unwrap(),
                    if rng.random_bool(0.5) { "left" } else { "right" },
                    ROOMS.choose(rng).unwrap(),
                    OBJECTS.choose(rng).unwrap(),
                ),
            };
            // vary list markers the way real models do
            lines.push(match i % 3 {
                0 => format!("{}. {text}", i + 1),
                1 => format!("- {text}"),
                _ => format!("• {text}"),
            });
        }
        format!("Here are 10 more instructions:\n\n{}\n", lines.join("\n"))
    }

    fn caption(rng: &mut ChaCha8Rng, room: &str) -> String {
        format!("a {room} with a {} and a {}", OBJECTS.choose(rng).unwrap(), OBJECTS.choose(rng).unwrap())
    }

    fn trajectory(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let instruction = prompt.rsplit("### Instruction:").next().unwrap_or("").trim().to_lowercase();
        let mentioned: Vec<&str> = ROOMS.iter().copied().filter(|r| instruction.contains(r)).collect();
        let fault = rng.random_bool(self.config.malformed_rate).then(|| rng.random_range(0..4u8));
        let n_steps = match fault {
            Some(0) => 4,
            Some(2) => 8,
            _ => rng.random_range(5..=7),
        };
        let mut out = String::new();
        for step in 1..=n_steps {
            let bold = rng.random_bool(0.2);
            out.push_str(&if bold { format!("**Step {step}:**\n\n") } else { format!("Step {step}:\n\n") });
            let n_blocks = rng.random_range(2..=4);
            let dirs: Vec<&&str> = DIRECTIONS.choose_multiple(rng, n_blocks).collect();
            let mut captions = Vec::with_capacity(n_blocks);
            for (b, dir) in dirs.iter().enumerate() {
                let room = if b == 0 && !mentioned.is_empty() {
                    mentioned[(step - 1) % mentioned.len()]
                } else {
                    ROOMS.choose(rng).unwrap()
                };
                let caption = Self::caption(rng, room);
                out.push_str(&format!("To your {dir} is,\n{caption}\n"));
                if rng.random_bool(0.3) {
                    let pair: Vec<&str> = OBJECTS.choose_multiple(rng, 2).copied().collect();
                    out.push_str(&format!("Details:  {}\n", pair.join(", ")));
                }
                out.push('\n');
                captions.push(caption);
            }
            let last = step == n_steps;
            let chosen = if last && fault != Some(3) {
                "Stop".to_string()
            } else if fault == Some(1) && step == 2 {
                "a mysterious corridor that nobody described".to_string()
            } else {
                captions.choose(rng).unwrap().clone()
            };
            out.push_str(&format!("You chose:\n{chosen}\n\n"));
        }
        out
    }

    fn navigate(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let step_no = prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Step ").and_then(|r| r.strip_suffix(':')).and_then(|n| n.parse::<usize>().ok()))
            .unwrap_or(1);
        let tail = prompt.rsplit_once(&format!("Step {step_no}:\n")).map_or(prompt, |(_, t)| t);
        let mut captions = Vec::new();
        let mut lines = tail.lines();
        while let Some(line) = lines.next() {
            if line.starts_with("To your ") && line.ends_with("is,") {
                if let Some(c) = lines.next() {
                    captions.push(c.to_string());
                }
            }
        }
        if captions.is_empty() || step_no >= self.config.stop_after_step {
            return "Stop\n".into();
        }
        let pick = rng.random_range(0..=captions.len());
        match captions.get(pick) {
            Some(c) => format!("{c}\nStep {}:", step_no + 1),
            None => "Stop\n".into(),
        }
    }
}

impl LmGateway for SimulatedGateway {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let mut rng = self.rng_for(&request.prompt);
        let raw = if request.prompt.contains(PHASE_ONE_MARKER) {
            self.instructions(&request.prompt, &mut rng)
        } else if request.prompt.contains(PHASE_TWO_MARKER) {
            self.trajectory(&request.prompt, &mut rng)
        } else {
            self.navigate(&request.prompt, &mut rng)
        };
        finish_completion(&raw, request)
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f32>>, GatewayError> {
        self.embedder.embed(request)
    }

    fn model_id(&self) -> String {
        format!("simulated-{}", self.config.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::dot;

    #[test]
    fn scripted_replays_in_order() {
        let gw = ScriptedGateway::new(["hello", "line1\nline2"]);
        assert_eq!(gw.complete(&CompletionRequest::sampling("a", 4)).unwrap(), "hello");
        assert_eq!(gw.complete(&CompletionRequest::greedy_line("b", 4)).unwrap(), "line1");
        assert_eq!(gw.complete(&CompletionRequest::sampling("c", 4)), Err(GatewayError::Exhausted));
        assert_eq!(gw.prompts(), ["a", "b", "c"]);
    }

    #[test]
    fn hash_embeddings() {
        let e = HashEmbedder::default();
        let v = e.embed(&EmbeddingRequest::new(["abc", "abc", "walk to the kitchen", "!!!"])).unwrap();
        for x in &v {
            assert!((dot(x, x).sqrt() - 1.0).abs() < 1e-6);
            assert_eq!(x.len(), 64);
        }
        assert_eq!(v[0], v[1]);
        assert!((dot(&v[0], &v[1]) - 1.0).abs() < 1e-6);
        let near = e.embed_text("walk into the kitchen");
        let far = e.embed_text("purple elephants sing loudly");
        assert!(dot(&v[2], &near) > dot(&v[2], &far));
    }

    #[test]
    fn simulated_is_reproducible_per_prompt_sequence() {
        let a = SimulatedGateway::new(SimulationConfig::default());
        let b = SimulatedGateway::new(SimulationConfig::default());
        let req = CompletionRequest::sampling(format!("x {PHASE_ONE_MARKER}\n- seed one"), 512);
        let a1 = a.complete(&req).unwrap();
        let a2 = a.complete(&req).unwrap();
        assert_ne!(a1, a2);
        assert_eq!(b.complete(&req).unwrap(), a1);
        assert_eq!(b.complete(&req).unwrap(), a2);
    }

    #[test]
    fn simulated_navigation_answers_a_caption_or_stop() {
        let gw = SimulatedGateway::new(SimulationConfig::default());
        let prompt = "D\n\n### Trajectory:\nStep 2:\n\nTo your back is,\na hall\n\nTo your 30 degree left is,\na den\n\nYou chose:\n";
        for _ in 0..10 {
            let out = gw.complete(&CompletionRequest::greedy_line(prompt, 32)).unwrap();
            assert!(["a hall", "a den", "Stop"].contains(&out.as_str()), "{out}");
        }
    }
}
