//! Weighted CFG sentence/tree sampling.
//!
//! Powers the mock generation backend and the synthetic treebanks used in
//! tests. Rules are either all-non-terminal or a single terminal, matching
//! what rule extraction reads off real trees.

use rand::Rng;
use thiserror::Error;

use crate::tree::{ConstTree, TreeNode};

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("grammar line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("non-terminal '{0}' has no rules")]
    DeadEnd(String),
    #[error("expansion exceeded {0} nodes; grammar may be divergent")]
    Oversized(usize),
    #[error("grammar has no rules")]
    Empty,
}

/// Right-hand-side symbol of a weighted rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    NonTerminal(String),
    Terminal(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRule {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
    pub weight: f64,
}

/// A small weighted grammar for sampling synthetic sentences and gold trees.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGrammar {
    pub start: String,
    pub rules: Vec<WeightedRule>,
}

/// Expansion budget per sampled tree; recursion past this aborts the draw.
pub const MAX_SAMPLE_NODES: usize = 4096;

/// Maximum expansion depth; divergent grammars abort the draw here well
/// before the node budget.
pub const MAX_SAMPLE_DEPTH: usize = 96;

impl ToyGrammar {
    pub fn new(start: impl Into<String>, rules: Vec<WeightedRule>) -> Result<ToyGrammar, SampleError> {
        let grammar = ToyGrammar {
            start: start.into(),
            rules,
        };
        grammar.validate()?;
        Ok(grammar)
    }

    fn validate(&self) -> Result<(), SampleError> {
        if self.rules.is_empty() {
            return Err(SampleError::Empty);
        }
        if !self.rules.iter().any(|r| r.lhs == self.start) {
            return Err(SampleError::DeadEnd(self.start.clone()));
        }
        for rule in &self.rules {
            for sym in &rule.rhs {
                if let Symbol::NonTerminal(nt) = sym {
                    if !self.rules.iter().any(|r| &r.lhs == nt) {
                        return Err(SampleError::DeadEnd(nt.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parse the text grammar format: one rule per line,
    /// `LHS -> SYM SYM : weight`, terminals double-quoted, weight optional
    /// (default 1). `#` lines are comments.
    pub fn parse_text(text: &str) -> Result<ToyGrammar, SampleError> {
        let mut rules = Vec::new();
        let mut start: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |detail: &str| SampleError::Syntax {
                line: lineno + 1,
                detail: detail.to_string(),
            };
            let (lhs, rest) = line
                .split_once("->")
                .ok_or_else(|| syntax("missing '->'"))?;
            let lhs = lhs.trim();
            if lhs.is_empty() {
                return Err(syntax("empty left-hand side"));
            }
            let (rhs_text, weight) = match rest.rsplit_once(':') {
                Some((r, w)) => {
                    let weight: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| syntax("weight is not a number"))?;
                    if weight <= 0.0 {
                        return Err(syntax("weight must be positive"));
                    }
                    (r, weight)
                }
                None => (rest, 1.0),
            };
            let mut rhs = Vec::new();
            for part in rhs_text.split_whitespace() {
                if let Some(stripped) = part.strip_prefix('"') {
                    let term = stripped
                        .strip_suffix('"')
                        .ok_or_else(|| syntax("unterminated quote"))?;
                    rhs.push(Symbol::Terminal(term.to_string()));
                } else {
                    rhs.push(Symbol::NonTerminal(part.to_string()));
                }
            }
            if rhs.is_empty() {
                return Err(syntax("empty right-hand side"));
            }
            let has_terminal = rhs.iter().any(|s| matches!(s, Symbol::Terminal(_)));
            if has_terminal && rhs.len() > 1 {
                return Err(syntax("terminal rules must have exactly one symbol"));
            }
            if start.is_none() {
                start = Some(lhs.to_string());
            }
            rules.push(WeightedRule {
                lhs: lhs.to_string(),
                rhs,
                weight,
            });
        }
        let start = start.ok_or(SampleError::Empty)?;
        ToyGrammar::new(start, rules)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for rule in &self.rules {
            out.push_str(&rule.lhs);
            out.push_str(" ->");
            for sym in &rule.rhs {
                match sym {
                    Symbol::NonTerminal(nt) => {
                        out.push(' ');
                        out.push_str(nt);
                    }
                    Symbol::Terminal(t) => {
                        out.push_str(" \"");
                        out.push_str(t);
                        out.push('"');
                    }
                }
            }
            out.push_str(&format!(" : {}\n", rule.weight));
        }
        out
    }

    fn pick_rule(&self, lhs: &str, rng: &mut impl Rng) -> Result<&WeightedRule, SampleError> {
        let options: Vec<&WeightedRule> = self.rules.iter().filter(|r| r.lhs == lhs).collect();
        if options.is_empty() {
            return Err(SampleError::DeadEnd(lhs.to_string()));
        }
        let total: f64 = options.iter().map(|r| r.weight).sum();
        let mut target = rng.random_range(0.0..total);
        for rule in &options {
            if target < rule.weight {
                return Ok(rule);
            }
            target -= rule.weight;
        }
        Ok(options.last().expect("non-empty options"))
    }

    fn expand(
        &self,
        lhs: &str,
        rng: &mut impl Rng,
        budget: &mut usize,
        depth: usize,
    ) -> Result<TreeNode, SampleError> {
        if *budget == 0 || depth > MAX_SAMPLE_DEPTH {
            return Err(SampleError::Oversized(MAX_SAMPLE_NODES));
        }
        *budget -= 1;
        let rule = self.pick_rule(lhs, rng)?.clone();
        if let [Symbol::Terminal(token)] = rule.rhs.as_slice() {
            return Ok(TreeNode::pre_terminal(lhs, token.clone()));
        }
        let mut kids = Vec::with_capacity(rule.rhs.len());
        for sym in &rule.rhs {
            match sym {
                Symbol::NonTerminal(nt) => kids.push(self.expand(nt, rng, budget, depth + 1)?),
                Symbol::Terminal(_) => unreachable!("mixed rules rejected at construction"),
            }
        }
        Ok(TreeNode::internal(lhs, kids))
    }

    /// Sample one tree top-down. Fails only if the expansion budget runs out.
    pub fn sample_tree(&self, rng: &mut impl Rng) -> Result<ConstTree, SampleError> {
        let mut budget = MAX_SAMPLE_NODES;
        let node = self.expand(&self.start, rng, &mut budget, 0)?;
        Ok(ConstTree::new(node).expect("sampled trees are well-formed"))
    }

    /// Sample one sentence (the yield of a sampled tree).
    pub fn sample_sentence(&self, rng: &mut impl Rng) -> Result<Vec<String>, SampleError> {
        Ok(self.sample_tree(rng)?.tokens().to_vec())
    }
}
