//! Self-training toolkit for cross-domain constituency parsing.
//!
//! The pipeline iterates: generate raw target-domain sentences from grammar
//! rules through a chat-completion backend, parse them with a trainable
//! PCFG chart parser, select high-quality pseudo trees by distributional and
//! confidence criteria, and fold the selections back into training.

pub mod binarize;
pub mod bracketed;
pub mod divergence;
pub mod generation;
pub mod grammar;
pub mod evaluation;
pub mod fixtures;
pub mod orchestrator;
pub mod parser;
pub mod pcfg;
pub mod sampling;
pub mod selection;
pub mod tree;

/// Float type used throughout the pipeline. The divergence kernel stays
/// generic over `num_traits::Float`; everything else is concrete.
pub type Scalar = f64;

pub use binarize::{binarize, debinarize};
pub use bracketed::{
    load_treebank, parse_bracketed, save_treebank, tree_to_string, write_bracketed, Provenance,
    Treebank,
};
pub use evaluation::{score_trees, score_trees_with_gaps, BracketScore};
pub use divergence::{distance_to_source, js_counts, js_divergence};
pub use grammar::{
    avg_sentence_length, build_rule_distribution, build_token_distribution, extract_rules,
    GrammarRule, RuleDistribution, TokenDistribution,
};
pub use orchestrator::{measure_domain_distance, run_self_training, IterationState, Mode, RunConfig};
pub use parser::{parse_pool, parse_sentence, train, ChartParser, ParseResult, PoolParse};
pub use sampling::ToyGrammar;
pub use selection::{rank_and_select, Criterion, PseudoInstance, SelectionConfig};
pub use generation::{build_prompt, generate_corpus, sample_prompt_params, ChatBackend, GenerationConfig, MockBackend, PromptSpec};
pub use pcfg::{estimate_pcfg, estimate_pcfg_with, token_signature, Pcfg};
pub use tree::{ConstTree, NodeChildren, Span, TreeNode};
