//! Grammar rules read off trees, and the empirical distributions built from
//! them: the raw material for prompt construction and distance scoring.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::bracketed::Treebank;
use crate::tree::{ConstTree, NodeChildren};

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("cannot build a distribution from empty input")]
    EmptyInput,
    #[error("malformed rule line {line}: {detail}")]
    RuleSyntax { line: usize, detail: String },
}

/// A production read off one tree node. Lexical rules rewrite a pre-terminal
/// to its single terminal token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GrammarRule {
    pub lhs: String,
    pub rhs: Vec<String>,
    pub is_lexical: bool,
}

impl GrammarRule {
    pub fn lexical(lhs: impl Into<String>, token: impl Into<String>) -> GrammarRule {
        GrammarRule {
            lhs: lhs.into(),
            rhs: vec![token.into()],
            is_lexical: true,
        }
    }

    pub fn nonterminal(lhs: impl Into<String>, rhs: Vec<String>) -> GrammarRule {
        GrammarRule {
            lhs: lhs.into(),
            rhs,
            is_lexical: false,
        }
    }
}

impl fmt::Display for GrammarRule {
    /// Renders as `LHS -> RHS1 RHS2`, quoting terminals: `NN -> "dog"`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        if self.is_lexical {
            write!(f, " \"{}\"", self.rhs[0])
        } else {
            for sym in &self.rhs {
                write!(f, " {sym}")?;
            }
            Ok(())
        }
    }
}

/// Read one rule per internal node, in pre-order. Pre-terminals contribute
/// lexical rules, so the rule count equals the internal-node count.
pub fn extract_rules(tree: &ConstTree) -> Vec<GrammarRule> {
    tree.root()
        .walk()
        .map(|node| match node.children() {
            NodeChildren::Leaf(token) => GrammarRule::lexical(node.label(), token.clone()),
            NodeChildren::Internal(kids) => GrammarRule::nonterminal(
                node.label(),
                kids.iter().map(|k| k.label().to_string()).collect(),
            ),
        })
        .collect()
}

/// Empirical counts over grammar rules.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleDistribution {
    counts: BTreeMap<GrammarRule, u64>,
    total: u64,
}

impl RuleDistribution {
    pub fn from_treebank(bank: &Treebank) -> Result<RuleDistribution, GrammarError> {
        if bank.is_empty() {
            return Err(GrammarError::EmptyInput);
        }
        let mut dist = RuleDistribution::default();
        for (tree, _) in bank.iter() {
            dist.add_tree(tree);
        }
        Ok(dist)
    }

    pub fn from_tree(tree: &ConstTree) -> RuleDistribution {
        let mut dist = RuleDistribution::default();
        dist.add_tree(tree);
        dist
    }

    pub fn add_tree(&mut self, tree: &ConstTree) {
        for rule in extract_rules(tree) {
            self.add(rule, 1);
        }
    }

    pub fn add(&mut self, rule: GrammarRule, count: u64) {
        *self.counts.entry(rule).or_insert(0) += count;
        self.total += count;
    }

    pub fn merge(&mut self, other: &RuleDistribution) {
        for (rule, count) in &other.counts {
            self.add(rule.clone(), *count);
        }
    }

    pub fn counts(&self) -> &BTreeMap<GrammarRule, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn probability(&self, rule: &GrammarRule) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.get(rule).unwrap_or(&0) as f64 / self.total as f64
    }

    /// Distinct rules, in sorted order.
    pub fn support(&self) -> impl Iterator<Item = (&GrammarRule, u64)> {
        self.counts.iter().map(|(r, c)| (r, *c))
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, u64> = self
            .counts
            .iter()
            .map(|(r, c)| (r.to_string(), *c))
            .collect();
        serde_json::to_string_pretty(&map).expect("count map serializes")
    }
}

/// Build the rule distribution of a whole treebank (original, non-binarized
/// trees).
pub fn build_rule_distribution(bank: &Treebank) -> Result<RuleDistribution, GrammarError> {
    RuleDistribution::from_treebank(bank)
}

/// Empirical counts over surface tokens, case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenDistribution {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl TokenDistribution {
    pub fn from_treebank(bank: &Treebank) -> Result<TokenDistribution, GrammarError> {
        if bank.is_empty() {
            return Err(GrammarError::EmptyInput);
        }
        let mut dist = TokenDistribution::default();
        for (tree, _) in bank.iter() {
            dist.add_tokens(tree.tokens().iter().map(|t| t.as_str()));
        }
        Ok(dist)
    }

    pub fn from_sentences<'a, I, S>(sentences: I) -> Result<TokenDistribution, GrammarError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        let mut dist = TokenDistribution::default();
        let mut seen_any = false;
        for sentence in sentences {
            seen_any = true;
            dist.add_tokens(sentence);
        }
        if !seen_any {
            return Err(GrammarError::EmptyInput);
        }
        Ok(dist)
    }

    pub fn add_tokens<'a, I: IntoIterator<Item = &'a str>>(&mut self, tokens: I) {
        for token in tokens {
            self.add(token, 1);
        }
    }

    pub fn add(&mut self, token: &str, count: u64) {
        *self.counts.entry(token.to_string()).or_insert(0) += count;
        self.total += count;
    }

    pub fn merge(&mut self, other: &TokenDistribution) {
        for (token, count) in &other.counts {
            self.add(token, *count);
        }
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.counts).expect("count map serializes")
    }
}

/// Build the token distribution of a treebank's yields.
pub fn build_token_distribution(bank: &Treebank) -> Result<TokenDistribution, GrammarError> {
    TokenDistribution::from_treebank(bank)
}

/// Arithmetic mean yield length of a treebank.
pub fn avg_sentence_length(bank: &Treebank) -> Result<f64, GrammarError> {
    if bank.is_empty() {
        return Err(GrammarError::EmptyInput);
    }
    let total: usize = bank.trees().iter().map(|t| t.len()).sum();
    Ok(total as f64 / bank.len() as f64)
}

/// Serialize rules one per line in `LHS -> RHS` form.
pub fn write_rules(dist: &RuleDistribution) -> String {
    let mut out = String::new();
    for (rule, count) in dist.support() {
        out.push_str(&format!("{rule} : {count}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bracketed::parse_bracketed;

    const DOG: &str = "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))";

    fn tree(text: &str) -> ConstTree {
        parse_bracketed(text).unwrap().remove(0)
    }

    #[test]
    fn extract_rules_matches_hand_reading() {
        let rules = extract_rules(&tree(DOG));
        let rendered: Vec<String> = rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            rendered,
            vec![
                "S -> NP VP",
                "NP -> DT NN",
                "DT -> \"the\"",
                "NN -> \"dog\"",
                "VP -> VBZ",
                "VBZ -> \"barks\"",
            ]
        );
    }

    #[test]
    fn single_pre_terminal_tree() {
        let rules = extract_rules(&tree("(NN dog)"));
        assert_eq!(rules, vec![GrammarRule::lexical("NN", "dog")]);
    }

    #[test]
    fn rule_count_equals_internal_node_count() {
        let t = tree("(S (NP (DT the) (NN dog)) (VP (VBZ chased) (NP (DT a) (NN cat))))");
        // pre-terminals count as internal nodes here; leaves are tokens
        assert_eq!(extract_rules(&t).len(), t.root().walk().count());
        assert_eq!(t.len(), 5);
    }

    #[test]
    fn duplicate_trees_double_counts() {
        let t = tree(DOG);
        let mut bank = Treebank::new();
        bank.push(t.clone(), crate::bracketed::Provenance::Source);
        bank.push(t, crate::bracketed::Provenance::Source);
        let dist = build_rule_distribution(&bank).unwrap();
        assert_eq!(dist.total(), 12);
        for (_, count) in dist.support() {
            assert_eq!(count, 2);
        }
    }

    #[test]
    fn merge_is_order_invariant() {
        let a = tree(DOG);
        let b = tree("(S (NP (NN cats)) (VP (VBP sleep)))");
        let mut ab = RuleDistribution::from_tree(&a);
        ab.merge(&RuleDistribution::from_tree(&b));
        let mut ba = RuleDistribution::from_tree(&b);
        ba.merge(&RuleDistribution::from_tree(&a));
        assert_eq!(ab, ba);
    }

    #[test]
    fn empty_treebank_is_an_error() {
        assert_eq!(
            build_rule_distribution(&Treebank::new()).unwrap_err(),
            GrammarError::EmptyInput
        );
        assert_eq!(
            build_token_distribution(&Treebank::new()).unwrap_err(),
            GrammarError::EmptyInput
        );
    }

    #[test]
    fn token_distribution_counts_sentences() {
        let dist = TokenDistribution::from_sentences(vec![
            "the dog".split_whitespace(),
            "the cat".split_whitespace(),
        ])
        .unwrap();
        assert_eq!(dist.total(), 4);
        assert_eq!(dist.counts().get("the"), Some(&2));
        assert_eq!(dist.counts().get("dog"), Some(&1));
        assert_eq!(dist.counts().get("cat"), Some(&1));
    }

    #[test]
    fn treebank_token_distribution_equals_yield_distribution() {
        let t = tree(DOG);
        let mut bank = Treebank::new();
        bank.push(t.clone(), crate::bracketed::Provenance::Source);
        let from_bank = build_token_distribution(&bank).unwrap();
        let from_yield = TokenDistribution::from_sentences(vec![t
            .tokens()
            .iter()
            .map(|s| s.as_str())])
        .unwrap();
        assert_eq!(from_bank, from_yield);
    }

    #[test]
    fn avg_length_is_mean_of_yields() {
        let mut bank = Treebank::new();
        bank.push(tree(DOG), crate::bracketed::Provenance::Source);
        bank.push(
            tree("(S (NP (DT the) (NN cat)) (VP (VBZ sits) (ADVP (RB here) (RB now))))"),
            crate::bracketed::Provenance::Source,
        );
        assert_eq!(avg_sentence_length(&bank).unwrap(), 4.0);
        let mut single = Treebank::new();
        single.push(
            tree("(S (A a) (B b) (C c) (D d) (E e) (F f) (G g))"),
            crate::bracketed::Provenance::Source,
        );
        assert_eq!(avg_sentence_length(&single).unwrap(), 7.0);
    }
}
