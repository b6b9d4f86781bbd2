//! Raw-corpus generation through a chat-completion backend.
//!
//! Each request renders a freshly sampled prompt (rule count drawn from the
//! treebank's length distribution, length bounds drawn around it), asks for
//! one sentence, and the responses are length-filtered and deduplicated into
//! the iteration's candidate corpus. The mock backend samples from a weighted
//! grammar instead of calling out, which keeps end-to-end runs offline and
//! reproducible.

use std::collections::HashSet;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{GrammarRule, RuleDistribution};
use crate::sampling::{SampleError, ToyGrammar};
use crate::Scalar;

/// Bumped when the rendered prompt layout changes.
pub const PROMPT_TEMPLATE_VERSION: u32 = 1;

const PROMPT_TEMPLATE: &str = include_str!("prompt_template.txt");
const PROMPT_TEMPLATE_DOMAIN: &str = include_str!("prompt_template_domain.txt");

/// Hard bounds for requested sentence lengths.
pub const PROMPT_MIN_LEN: usize = 3;
pub const PROMPT_MAX_LEN: usize = 100;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("rule distribution is empty")]
    EmptyRules,
    #[error("average length must be positive, got {0}")]
    BadAvgLen(Scalar),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion: {0}")]
    Malformed(String),
}

impl BackendError {
    /// Transport failures and server-side statuses are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Malformed(_) => false,
        }
    }
}

/// One prompt's parameters: which rules to show, how many example
/// sentences, and the requested length window.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub n_rules: usize,
    pub rules: Vec<GrammarRule>,
    pub m_sentences: usize,
    pub sample_sentences: Vec<String>,
    pub len_lo: usize,
    pub len_hi: usize,
}

impl PromptSpec {
    pub fn with_sentences(mut self, sentences: Vec<String>) -> PromptSpec {
        self.m_sentences = sentences.len();
        self.sample_sentences = sentences;
        self
    }
}

/// Standard deviations of the two sampling stages. Zero makes the draws
/// degenerate at their means, which the tests use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptSampling {
    pub len_std: Scalar,
    pub bound_std: Scalar,
}

impl Default for PromptSampling {
    fn default() -> Self {
        PromptSampling {
            len_std: 6.0,
            bound_std: 3.0,
        }
    }
}

/// Draw prompt parameters: the rule count comes from a normal around the
/// treebank's average sentence length, the rules are sampled
/// count-weighted without replacement, and the two length bounds are drawn
/// around the rule count and sorted.
pub fn sample_prompt_params(
    rule_dist: &RuleDistribution,
    avg_len: Scalar,
    rng: &mut impl Rng,
) -> Result<PromptSpec, GenerationError> {
    sample_prompt_params_with(rule_dist, avg_len, PromptSampling::default(), rng)
}

pub fn sample_prompt_params_with(
    rule_dist: &RuleDistribution,
    avg_len: Scalar,
    sampling: PromptSampling,
    rng: &mut impl Rng,
) -> Result<PromptSpec, GenerationError> {
    let distinct = rule_dist.counts().len();
    if distinct == 0 {
        return Err(GenerationError::EmptyRules);
    }
    if !(avg_len > 0.0) {
        return Err(GenerationError::BadAvgLen(avg_len));
    }
    let n_draw = Normal::new(avg_len, sampling.len_std)
        .expect("finite mean and std")
        .sample(rng);
    let n_rules = (n_draw.round() as i64).clamp(1, distinct as i64) as usize;

    let rules = sample_rules_weighted(rule_dist, n_rules, rng);

    let bound = Normal::new(n_rules as Scalar, sampling.bound_std).expect("finite mean and std");
    let clamp_len = |draw: Scalar| {
        (draw.round() as i64).clamp(PROMPT_MIN_LEN as i64, PROMPT_MAX_LEN as i64) as usize
    };
    let a = clamp_len(bound.sample(rng));
    let b = clamp_len(bound.sample(rng));
    let (len_lo, len_hi) = if a <= b { (a, b) } else { (b, a) };

    Ok(PromptSpec {
        n_rules,
        rules,
        m_sentences: 0,
        sample_sentences: Vec::new(),
        len_lo,
        len_hi,
    })
}

/// Count-weighted sampling without replacement over the rule support.
fn sample_rules_weighted(
    rule_dist: &RuleDistribution,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<GrammarRule> {
    let mut items: Vec<(&GrammarRule, u64)> = rule_dist.support().collect();
    let mut picked = Vec::with_capacity(n);
    for _ in 0..n.min(items.len()) {
        let total: u64 = items.iter().map(|(_, c)| c).sum();
        let mut target = rng.random_range(0..total);
        let mut chosen = items.len() - 1;
        for (i, (_, count)) in items.iter().enumerate() {
            if target < *count {
                chosen = i;
                break;
            }
            target -= count;
        }
        picked.push(items.remove(chosen).0.clone());
    }
    picked
}

fn rule_for_prompt(rule: &GrammarRule) -> String {
    format!("{}\u{2192}{}", rule.lhs, rule.rhs.join(" "))
}

/// Render the prompt for one request. When the spec carries no example
/// sentences the `Snts` block is replaced by a domain-name line.
pub fn build_prompt(spec: &PromptSpec, domain_name: &str) -> String {
    let rules = spec
        .rules
        .iter()
        .map(rule_for_prompt)
        .collect::<Vec<_>>()
        .join(", ");
    if spec.sample_sentences.is_empty() {
        return PROMPT_TEMPLATE_DOMAIN
            .replace("{N}", &spec.n_rules.to_string())
            .replace("{L1}", &spec.len_lo.to_string())
            .replace("{L2}", &spec.len_hi.to_string())
            .replace("{RULES}", &rules)
            .replace("{DOMAIN}", domain_name);
    }
    let sentences = spec
        .sample_sentences
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s))
        .collect::<Vec<_>>()
        .join("\n");
    PROMPT_TEMPLATE
        .replace("{N}", &spec.n_rules.to_string())
        .replace("{M}", &spec.m_sentences.to_string())
        .replace("{L1}", &spec.len_lo.to_string())
        .replace("{L2}", &spec.len_hi.to_string())
        .replace("{RULES}", &rules)
        .replace("{SENTENCES}", &sentences)
}

/// One completion request. `iteration` and `prompt_id` never go over the
/// wire; they let the mock backend derive a stable per-request stream.
#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub temperature: Scalar,
    pub prompt: &'a str,
    pub iteration: u32,
    pub prompt_id: u64,
}

/// A chat-completion provider. Implementations must be safe to call from
/// several worker threads at once.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
    fn name(&self) -> &str;
}

/// Offline backend: samples sentences from a weighted grammar, optionally
/// interpolating between two grammars across iterations.
pub struct MockBackend {
    seed: u64,
    grammars: Vec<ToyGrammar>,
    /// Per-iteration weight of the *last* grammar; earlier iterations use
    /// earlier entries, later iterations clamp to the final entry.
    schedule: Vec<Scalar>,
}

impl MockBackend {
    pub fn new(grammar: ToyGrammar, seed: u64) -> MockBackend {
        MockBackend {
            seed,
            grammars: vec![grammar],
            schedule: vec![1.0],
        }
    }

    /// Interpolate from `from` toward `to`: at iteration `i` (1-based) the
    /// probability of sampling from `to` is `schedule[min(i-1, len-1)]`.
    pub fn mixture(
        from: ToyGrammar,
        to: ToyGrammar,
        schedule: Vec<Scalar>,
        seed: u64,
    ) -> MockBackend {
        assert!(!schedule.is_empty(), "mixture schedule cannot be empty");
        MockBackend {
            seed,
            grammars: vec![from, to],
            schedule,
        }
    }

    fn request_rng(&self, iteration: u32, prompt_id: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix(
            splitmix(self.seed ^ (iteration as u64).wrapping_mul(0x9E3779B97F4A7C15)) ^ prompt_id,
        ))
    }

    fn grammar_for(&self, iteration: u32, rng: &mut ChaCha8Rng) -> &ToyGrammar {
        if self.grammars.len() == 1 {
            return &self.grammars[0];
        }
        let idx = (iteration.max(1) as usize - 1).min(self.schedule.len() - 1);
        let to_weight = self.schedule[idx];
        if rng.random_range(0.0..1.0) < to_weight {
            &self.grammars[1]
        } else {
            &self.grammars[0]
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut rng = self.request_rng(request.iteration, request.prompt_id);
        let grammar = self.grammar_for(request.iteration, &mut rng);
        for _ in 0..8 {
            match grammar.sample_sentence(&mut rng) {
                Ok(tokens) => return Ok(tokens.join(" ")),
                Err(SampleError::Oversized(_)) => continue,
                Err(e) => return Err(BackendError::Malformed(e.to_string())),
            }
        }
        Err(BackendError::Malformed(
            "sampler exceeded its expansion budget".to_string(),
        ))
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Chat-completions HTTP backend: POSTs `{model, temperature, messages}`
/// and reads the first choice's message content.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> HttpBackend {
        HttpBackend {
            url: url.into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("client builds"),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: Scalar,
    messages: Vec<WireMessage<'a>>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = WireRequest {
            model: request.model,
            temperature: request.temperature,
            messages: vec![WireMessage {
                role: "user",
                content: request.prompt,
            }],
        };
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: response.text().unwrap_or_default(),
            });
        }
        let parsed: WireResponse = response
            .json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| BackendError::Malformed("no non-empty message content".to_string()))
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model: String,
    pub temperature: Scalar,
    /// Target number of surviving sentences per iteration.
    pub corpus_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Example sentences shown per prompt.
    pub m_sentences: usize,
    pub seed: u64,
    /// Requests in flight at once.
    pub concurrency: usize,
    /// Attempt budget as a multiple of `corpus_size`.
    pub attempt_factor: usize,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    /// Used in the prompt when no target sentences are available.
    pub domain_name: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model: "mock".to_string(),
            temperature: 0.0,
            corpus_size: 10_000,
            min_len: 3,
            max_len: 100,
            m_sentences: 5,
            seed: 0,
            concurrency: 4,
            attempt_factor: 3,
            max_retries: 3,
            retry_base_ms: 100,
            domain_name: "target".to_string(),
        }
    }
}

/// A surviving generated sentence plus the prompt metadata that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSentence {
    pub text: String,
    pub iteration: u32,
    pub prompt_id: u64,
    pub n_rules: usize,
    pub len_bounds: (usize, usize),
}

impl GeneratedSentence {
    pub fn tokens(&self) -> Vec<String> {
        self.text.split_whitespace().map(|t| t.to_string()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub requested: usize,
    pub attempts: usize,
    pub transport_failures: usize,
    pub malformed: usize,
    pub length_filtered: usize,
    pub duplicates: usize,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub sentences: Vec<GeneratedSentence>,
    pub stats: GenerationStats,
}

/// Generate a candidate corpus: one sentence per request with a freshly
/// sampled prompt, filtered to `[min_len, max_len]` tokens and exact-match
/// deduplicated, until `corpus_size` survivors or the attempt budget runs
/// out (a partial corpus is returned with a warning, never an error).
pub fn generate_corpus(
    backend: &dyn ChatBackend,
    cfg: &GenerationConfig,
    rule_dist: &RuleDistribution,
    avg_len: Scalar,
    target_samples: &[String],
    iteration: u32,
    rng: &mut impl Rng,
) -> Result<GeneratedCorpus, GenerationError> {
    let mut stats = GenerationStats {
        requested: cfg.corpus_size,
        ..Default::default()
    };
    let mut seen: HashSet<String> = HashSet::new();
    let mut survivors: Vec<GeneratedSentence> = Vec::with_capacity(cfg.corpus_size);
    let budget = cfg.attempt_factor.max(1) * cfg.corpus_size;
    let mut prompt_id: u64 = 0;

    while survivors.len() < cfg.corpus_size && stats.attempts < budget {
        let batch = cfg
            .concurrency
            .max(1)
            .min(budget - stats.attempts)
            .min(cfg.corpus_size - survivors.len());
        // sample all prompts on this coordinator thread, in order
        let mut prompts: Vec<(u64, PromptSpec, String)> = Vec::with_capacity(batch);
        for _ in 0..batch {
            let spec = sample_prompt_params(rule_dist, avg_len, rng)?
                .with_sentences(pick_examples(target_samples, cfg.m_sentences, rng));
            let text = build_prompt(&spec, &cfg.domain_name);
            prompts.push((prompt_id, spec, text));
            prompt_id += 1;
        }
        stats.attempts += batch;

        let outcomes: Vec<Result<String, BackendError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = prompts
                .iter()
                .map(|(id, _, text)| {
                    let request = ChatRequest {
                        model: &cfg.model,
                        temperature: cfg.temperature,
                        prompt: text,
                        iteration,
                        prompt_id: *id,
                    };
                    let cfg = &cfg;
                    scope.spawn(move || complete_with_retry(backend, &request, cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("generation worker panicked"))
                .collect()
        });

        for ((id, spec, _), outcome) in prompts.iter().zip(outcomes) {
            if survivors.len() >= cfg.corpus_size {
                break;
            }
            let raw = match outcome {
                Ok(raw) => raw,
                Err(BackendError::Malformed(detail)) => {
                    log::debug!("prompt {id}: malformed completion: {detail}");
                    stats.malformed += 1;
                    continue;
                }
                Err(err) => {
                    log::debug!("prompt {id}: giving up after retries: {err}");
                    stats.transport_failures += 1;
                    continue;
                }
            };
            let tokens: Vec<&str> = raw.split_whitespace().collect();
            if tokens.is_empty() {
                stats.malformed += 1;
                continue;
            }
            if tokens.len() < cfg.min_len || tokens.len() > cfg.max_len {
                stats.length_filtered += 1;
                continue;
            }
            let text = tokens.join(" ");
            if !seen.insert(text.clone()) {
                stats.duplicates += 1;
                continue;
            }
            survivors.push(GeneratedSentence {
                text,
                iteration,
                prompt_id: *id,
                n_rules: spec.n_rules,
                len_bounds: (spec.len_lo, spec.len_hi),
            });
        }
    }

    if survivors.len() < cfg.corpus_size {
        stats.budget_exhausted = true;
        log::warn!(
            "generation budget exhausted: {} of {} sentences after {} attempts",
            survivors.len(),
            cfg.corpus_size,
            stats.attempts
        );
    }
    Ok(GeneratedCorpus {
        sentences: survivors,
        stats,
    })
}

fn pick_examples(pool: &[String], m: usize, rng: &mut impl Rng) -> Vec<String> {
    if pool.is_empty() || m == 0 {
        return Vec::new();
    }
    if pool.len() <= m {
        return pool.to_vec();
    }
    rand::seq::index::sample(rng, pool.len(), m)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect()
}

fn complete_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    cfg: &GenerationConfig,
) -> Result<String, BackendError> {
    let mut attempt = 0u32;
    loop {
        match backend.complete(request) {
            Ok(text) => return Ok(text),
            Err(err) if err.is_retryable() && attempt < cfg.max_retries => {
                let delay = cfg.retry_base_ms.saturating_mul(1 << attempt.min(16));
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}
