//! Probabilistic grammar estimation: relative-frequency probabilities over
//! binarized rules, plus a signature-class model for out-of-vocabulary
//! tokens so sentences with new words stay parseable.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binarize::{binarize, UNARY_JOIN};
use crate::bracketed::Treebank;
use crate::tree::{ConstTree, NodeChildren, TreeNode};
use crate::Scalar;

/// Bumped whenever the persisted model layout changes.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Tokens with training count at or below this are used to estimate the
/// unknown-word model.
pub const DEFAULT_RARE_THRESHOLD: u64 = 1;

#[derive(Debug, Error)]
pub enum PcfgError {
    #[error("cannot estimate a grammar from an empty treebank")]
    EmptyTreebank,
    #[error("treebank roots do not share a start symbol (saw {0:?}); wrap trees in ROOT")]
    MixedStartSymbols(Vec<String>),
    #[error("per-lhs probabilities for '{lhs}' sum to {sum}, not 1")]
    NotNormalized { lhs: String, sum: Scalar },
    #[error("probability {p} for rule of '{lhs}' outside (0, 1]")]
    BadProbability { lhs: String, p: Scalar },
    #[error("unsupported model format version {0} (expected {MODEL_FORMAT_VERSION})")]
    FormatVersion(u32),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
}

/// A trained grammar over binarized trees.
///
/// Probabilities are conditional on the left-hand side across all three rule
/// kinds, so for every lhs the outgoing mass sums to one. The unknown model
/// sits outside that normalized space and is consulted only for tokens the
/// lexicon has never seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    start_symbol: String,
    binary_rules: BTreeMap<(String, String, String), Scalar>,
    unary_rules: BTreeMap<(String, String), Scalar>,
    lexical_rules: BTreeMap<(String, String), Scalar>,
    unknown_model: BTreeMap<(String, String), Scalar>,
    known_tokens: std::collections::BTreeSet<String>,
    rare_threshold: u64,
}

impl Pcfg {
    pub fn start_symbol(&self) -> &str {
        &self.start_symbol
    }

    pub fn binary_rules(&self) -> &BTreeMap<(String, String, String), Scalar> {
        &self.binary_rules
    }

    pub fn unary_rules(&self) -> &BTreeMap<(String, String), Scalar> {
        &self.unary_rules
    }

    pub fn lexical_rules(&self) -> &BTreeMap<(String, String), Scalar> {
        &self.lexical_rules
    }

    pub fn unknown_model(&self) -> &BTreeMap<(String, String), Scalar> {
        &self.unknown_model
    }

    pub fn rare_threshold(&self) -> u64 {
        self.rare_threshold
    }

    /// True if the token appears anywhere in the lexicon.
    pub fn knows_token(&self, token: &str) -> bool {
        self.known_tokens.contains(token)
    }

    /// The lexical log-probability used at parse time: the trained rule for
    /// known tokens, the signature model for unknown ones.
    pub fn lexical_log_prob(&self, pos: &str, token: &str) -> Option<Scalar> {
        if self.knows_token(token) {
            return self
                .lexical_rules
                .get(&(pos.to_string(), token.to_string()))
                .map(|p| p.ln());
        }
        let sig = token_signature(token);
        self.unknown_model
            .get(&(pos.to_string(), sig))
            .or_else(|| self.unknown_model.get(&(pos.to_string(), GENERIC_SIGNATURE.to_string())))
            .map(|p| p.ln())
    }

    /// Verify the per-lhs normalization invariant within `tol`.
    pub fn check_normalization(&self, tol: Scalar) -> Result<(), PcfgError> {
        let mut sums: BTreeMap<&str, Scalar> = BTreeMap::new();
        for ((lhs, _, _), p) in &self.binary_rules {
            *sums.entry(lhs).or_insert(0.0) += p;
        }
        for ((lhs, _), p) in &self.unary_rules {
            *sums.entry(lhs).or_insert(0.0) += p;
        }
        for ((lhs, _), p) in &self.lexical_rules {
            *sums.entry(lhs).or_insert(0.0) += p;
        }
        for (lhs, sum) in sums {
            if (sum - 1.0).abs() > tol {
                return Err(PcfgError::NotNormalized {
                    lhs: lhs.to_string(),
                    sum,
                });
            }
        }
        Ok(())
    }

    /// Build a grammar from explicit probabilities. Used for hand-crafted and
    /// randomly generated grammars in tests and tools.
    pub fn from_rules(
        start_symbol: impl Into<String>,
        binary: Vec<(String, String, String, Scalar)>,
        unary: Vec<(String, String, Scalar)>,
        lexical: Vec<(String, String, Scalar)>,
    ) -> Result<Pcfg, PcfgError> {
        let mut pcfg = Pcfg {
            start_symbol: start_symbol.into(),
            binary_rules: BTreeMap::new(),
            unary_rules: BTreeMap::new(),
            lexical_rules: BTreeMap::new(),
            unknown_model: BTreeMap::new(),
            known_tokens: Default::default(),
            rare_threshold: DEFAULT_RARE_THRESHOLD,
        };
        for (lhs, l, r, p) in binary {
            check_prob(&lhs, p)?;
            pcfg.binary_rules.insert((lhs, l, r), p);
        }
        for (lhs, c, p) in unary {
            check_prob(&lhs, p)?;
            pcfg.unary_rules.insert((lhs, c), p);
        }
        for (pos, tok, p) in lexical {
            check_prob(&pos, p)?;
            pcfg.lexical_rules.insert((pos, tok), p);
        }
        pcfg.known_tokens = known_tokens(&pcfg.lexical_rules);
        pcfg.check_normalization(1e-9)?;
        Ok(pcfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), PcfgError> {
        let file = ModelFile::from(self);
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(|e| PcfgError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Pcfg, PcfgError> {
        let text = std::fs::read_to_string(path).map_err(|e| PcfgError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(PcfgError::FormatVersion(file.format_version));
        }
        Ok(file.into())
    }
}

fn check_prob(lhs: &str, p: Scalar) -> Result<(), PcfgError> {
    if p <= 0.0 || p > 1.0 || !p.is_finite() {
        return Err(PcfgError::BadProbability {
            lhs: lhs.to_string(),
            p,
        });
    }
    Ok(())
}

fn known_tokens(
    lexical_rules: &BTreeMap<(String, String), Scalar>,
) -> std::collections::BTreeSet<String> {
    lexical_rules.keys().map(|(_, tok)| tok.clone()).collect()
}

/// Signature used when a token's exact signature was never seen in training.
pub const GENERIC_SIGNATURE: &str = "UNK";

/// Map a token to its unknown-word signature class: capitalization, digit
/// and hyphen flags plus a short lowercased suffix.
pub fn token_signature(token: &str) -> String {
    let mut sig = String::from(GENERIC_SIGNATURE);
    if token.chars().next().is_some_and(|c| c.is_uppercase()) {
        sig.push_str("-C");
    }
    if token.chars().any(|c| c.is_ascii_digit()) {
        sig.push_str("-D");
    }
    if token.contains('-') {
        sig.push_str("-H");
    }
    let suffix: String = token
        .chars()
        .rev()
        .take(2)
        .filter(|c| c.is_alphabetic())
        .flat_map(|c| c.to_lowercase())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if !suffix.is_empty() {
        sig.push('-');
        sig.push_str(&suffix);
    }
    sig
}

/// Estimate a grammar by relative frequency over the binarized treebank,
/// with the default rare-token threshold.
pub fn estimate_pcfg(bank: &Treebank) -> Result<Pcfg, PcfgError> {
    estimate_pcfg_with(bank, DEFAULT_RARE_THRESHOLD)
}

pub fn estimate_pcfg_with(bank: &Treebank, rare_threshold: u64) -> Result<Pcfg, PcfgError> {
    if bank.is_empty() {
        return Err(PcfgError::EmptyTreebank);
    }
    let mut roots: Vec<String> = bank
        .trees()
        .iter()
        .map(|t| first_chain_label(t.root()).to_string())
        .collect();
    roots.sort();
    roots.dedup();
    if roots.len() != 1 {
        return Err(PcfgError::MixedStartSymbols(roots));
    }
    let start_symbol = roots.pop().expect("one root label");

    let mut binary_counts: BTreeMap<(String, String, String), u64> = BTreeMap::new();
    let mut unary_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut lexical_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut lhs_totals: BTreeMap<String, u64> = BTreeMap::new();

    for (tree, _) in bank.iter() {
        let binarized = binarize(tree);
        count_node(
            binarized.root(),
            &mut binary_counts,
            &mut unary_counts,
            &mut lexical_counts,
            &mut lhs_totals,
        );
    }

    // unknown model from rare tokens; the threshold widens until rare types
    // cover a fifth of the vocabulary, since a closed vocabulary with no
    // hapax tokens would otherwise leave new words unparseable
    let mut token_totals: BTreeMap<&str, u64> = BTreeMap::new();
    for ((_, token), count) in &lexical_counts {
        *token_totals.entry(token).or_insert(0) += count;
    }
    let mut sorted_counts: Vec<u64> = token_totals.values().copied().collect();
    sorted_counts.sort_unstable();
    let need = sorted_counts.len().div_ceil(5);
    let effective_threshold = rare_threshold.max(sorted_counts[need - 1]);
    let mut unknown_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for ((pos, token), count) in &lexical_counts {
        if token_totals[token.as_str()] <= effective_threshold {
            let sig = token_signature(token);
            *unknown_counts.entry((pos.clone(), sig)).or_insert(0) += count;
            *unknown_counts
                .entry((pos.clone(), GENERIC_SIGNATURE.to_string()))
                .or_insert(0) += count;
        }
    }
    // every tag that emits tokens keeps a minimal generic entry, so unknown
    // words never lose a tag outright when the rare set misses it
    for (pos, _) in lexical_counts.keys() {
        unknown_counts
            .entry((pos.clone(), GENERIC_SIGNATURE.to_string()))
            .or_insert(1);
    }

    let to_prob = |counts: BTreeMap<(String, String), u64>| -> BTreeMap<(String, String), Scalar> {
        counts
            .into_iter()
            .map(|((lhs, rhs), c)| {
                let p = c as Scalar / lhs_totals[&lhs] as Scalar;
                ((lhs, rhs), p)
            })
            .collect()
    };

    let binary_rules = binary_counts
        .into_iter()
        .map(|((lhs, l, r), c)| {
            let p = c as Scalar / lhs_totals[&lhs] as Scalar;
            ((lhs, l, r), p)
        })
        .collect();

    let lexical_rules = to_prob(lexical_counts);
    Ok(Pcfg {
        start_symbol,
        binary_rules,
        unary_rules: to_prob(unary_counts),
        known_tokens: known_tokens(&lexical_rules),
        lexical_rules,
        unknown_model: to_prob(unknown_counts),
        rare_threshold,
    })
}

/// The goal label for a binarized root: the first component of a collapsed
/// chain, e.g. `ROOT` for `ROOT+S+VP`.
pub fn first_chain_label(node: &TreeNode) -> &str {
    node.label().split(UNARY_JOIN).next().expect("non-empty label")
}

fn count_node(
    node: &TreeNode,
    binary: &mut BTreeMap<(String, String, String), u64>,
    unary: &mut BTreeMap<(String, String), u64>,
    lexical: &mut BTreeMap<(String, String), u64>,
    lhs_totals: &mut BTreeMap<String, u64>,
) {
    match node.children() {
        NodeChildren::Leaf(token) => {
            *lexical
                .entry((node.label().to_string(), token.clone()))
                .or_insert(0) += 1;
            *lhs_totals.entry(node.label().to_string()).or_insert(0) += 1;
        }
        NodeChildren::Internal(kids) => {
            match kids.len() {
                1 => {
                    *unary
                        .entry((node.label().to_string(), kids[0].label().to_string()))
                        .or_insert(0) += 1;
                }
                2 => {
                    *binary
                        .entry((
                            node.label().to_string(),
                            kids[0].label().to_string(),
                            kids[1].label().to_string(),
                        ))
                        .or_insert(0) += 1;
                }
                n => unreachable!("binarized node with {n} children"),
            }
            *lhs_totals.entry(node.label().to_string()).or_insert(0) += 1;
            for kid in kids {
                count_node(kid, binary, unary, lexical, lhs_totals);
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RuleRecord {
    lhs: String,
    rhs: Vec<String>,
    p: Scalar,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    start_symbol: String,
    rare_threshold: u64,
    binary: Vec<RuleRecord>,
    unary: Vec<RuleRecord>,
    lexical: Vec<RuleRecord>,
    unknown: Vec<RuleRecord>,
}

impl From<&Pcfg> for ModelFile {
    fn from(pcfg: &Pcfg) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            start_symbol: pcfg.start_symbol.clone(),
            rare_threshold: pcfg.rare_threshold,
            binary: pcfg
                .binary_rules
                .iter()
                .map(|((lhs, l, r), p)| RuleRecord {
                    lhs: lhs.clone(),
                    rhs: vec![l.clone(), r.clone()],
                    p: *p,
                })
                .collect(),
            unary: pcfg
                .unary_rules
                .iter()
                .map(|((lhs, c), p)| RuleRecord {
                    lhs: lhs.clone(),
                    rhs: vec![c.clone()],
                    p: *p,
                })
                .collect(),
            lexical: pcfg
                .lexical_rules
                .iter()
                .map(|((pos, tok), p)| RuleRecord {
                    lhs: pos.clone(),
                    rhs: vec![tok.clone()],
                    p: *p,
                })
                .collect(),
            unknown: pcfg
                .unknown_model
                .iter()
                .map(|((pos, sig), p)| RuleRecord {
                    lhs: pos.clone(),
                    rhs: vec![sig.clone()],
                    p: *p,
                })
                .collect(),
        }
    }
}

impl From<ModelFile> for Pcfg {
    fn from(file: ModelFile) -> Pcfg {
        let pair = |r: RuleRecord| ((r.lhs, r.rhs.into_iter().next().unwrap_or_default()), r.p);
        let lexical_rules: BTreeMap<(String, String), Scalar> =
            file.lexical.into_iter().map(pair).collect();
        Pcfg {
            start_symbol: file.start_symbol,
            rare_threshold: file.rare_threshold,
            binary_rules: file
                .binary
                .into_iter()
                .map(|r| {
                    let mut rhs = r.rhs.into_iter();
                    let l = rhs.next().unwrap_or_default();
                    let right = rhs.next().unwrap_or_default();
                    ((r.lhs, l, right), r.p)
                })
                .collect(),
            unary_rules: file.unary.into_iter().map(pair).collect(),
            known_tokens: known_tokens(&lexical_rules),
            lexical_rules,
            unknown_model: file.unknown.into_iter().map(pair).collect(),
        }
    }
}

/// Check that a tree is derivable rule-for-rule under the grammar and return
/// its log-probability, mirroring the parser's lexical lookup for unknowns.
pub fn rescore(pcfg: &Pcfg, original_tree: &ConstTree) -> Option<Scalar> {
    let binarized = binarize(original_tree);
    rescore_node(pcfg, binarized.root())
}

fn rescore_node(pcfg: &Pcfg, node: &TreeNode) -> Option<Scalar> {
    match node.children() {
        NodeChildren::Leaf(token) => pcfg.lexical_log_prob(node.label(), token),
        NodeChildren::Internal(kids) => match kids.len() {
            1 => {
                let rule_lp = pcfg
                    .unary_rules
                    .get(&(node.label().to_string(), kids[0].label().to_string()))?
                    .ln();
                Some(rescore_node(pcfg, &kids[0])? + rule_lp)
            }
            2 => {
                let rule_lp = pcfg
                    .binary_rules
                    .get(&(
                        node.label().to_string(),
                        kids[0].label().to_string(),
                        kids[1].label().to_string(),
                    ))?
                    .ln();
                let left = rescore_node(pcfg, &kids[0])?;
                let right = rescore_node(pcfg, &kids[1])?;
                Some(left + right + rule_lp)
            }
            _ => None,
        },
    }
}
