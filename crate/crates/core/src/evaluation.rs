//! Labeled-bracket precision/recall/F1 scoring.
//!
//! Brackets are (label, span) pairs over internal nodes; pre-terminals and a
//! `ROOT` wrapper at the top are excluded. Counts aggregate over the corpus
//! before computing the micro-averaged scores, and duplicate brackets match
//! with multiset semantics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::ConstTree;
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("gold has {gold} trees but prediction has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("yield mismatch at index {index}")]
    YieldMismatch { index: usize },
}

/// Corpus-level bracket counts and the scores derived from them, on a
/// 0..=100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketScore {
    pub matched: u64,
    pub gold_total: u64,
    pub pred_total: u64,
    pub precision: Scalar,
    pub recall: Scalar,
    pub f1: Scalar,
}

impl BracketScore {
    fn from_counts(matched: u64, gold_total: u64, pred_total: u64) -> BracketScore {
        let precision = if pred_total == 0 {
            0.0
        } else {
            100.0 * matched as Scalar / pred_total as Scalar
        };
        let recall = if gold_total == 0 {
            0.0
        } else {
            100.0 * matched as Scalar / gold_total as Scalar
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BracketScore {
            matched,
            gold_total,
            pred_total,
            precision,
            recall,
            f1,
        }
    }
}

type BracketBag = BTreeMap<(String, usize, usize), u64>;

/// The scored brackets of one tree: internal nodes excluding pre-terminals,
/// and excluding the node itself when it is a `ROOT` wrapper at the top.
fn brackets(tree: &ConstTree) -> BracketBag {
    let mut bag = BracketBag::new();
    let root = tree.root();
    for node in root.walk() {
        if node.is_pre_terminal() {
            continue;
        }
        if std::ptr::eq(node, root) && node.label() == "ROOT" {
            continue;
        }
        let key = (
            node.label().to_string(),
            node.span().start,
            node.span().end,
        );
        *bag.entry(key).or_insert(0) += 1;
    }
    bag
}

fn intersection_size(a: &BracketBag, b: &BracketBag) -> u64 {
    a.iter()
        .map(|(key, count)| count.min(b.get(key).unwrap_or(&0)))
        .sum()
}

/// Score predictions against gold trees pairwise and aggregate.
pub fn score_trees(gold: &[ConstTree], pred: &[ConstTree]) -> Result<BracketScore, EvalError> {
    let options: Vec<Option<&ConstTree>> = pred.iter().map(Some).collect();
    score_trees_with_gaps(gold, &options)
}

/// Like [`score_trees`] but tolerant of missing predictions: a `None` entry
/// contributes its full gold count and zero predicted brackets, which is how
/// failed parses are penalized.
pub fn score_trees_with_gaps(
    gold: &[ConstTree],
    pred: &[Option<&ConstTree>],
) -> Result<BracketScore, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut matched = 0;
    let mut gold_total = 0;
    let mut pred_total = 0;
    for (index, (g, p)) in gold.iter().zip(pred.iter()).enumerate() {
        let gold_bag = brackets(g);
        gold_total += gold_bag.values().sum::<u64>();
        let Some(p) = p else { continue };
        if g.tokens() != p.tokens() {
            return Err(EvalError::YieldMismatch { index });
        }
        let pred_bag = brackets(p);
        pred_total += pred_bag.values().sum::<u64>();
        matched += intersection_size(&gold_bag, &pred_bag);
    }
    Ok(BracketScore::from_counts(matched, gold_total, pred_total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bracketed::parse_bracketed;

    fn trees(text: &str) -> Vec<ConstTree> {
        parse_bracketed(text).unwrap()
    }

    #[test]
    fn identical_trees_score_hundred() {
        let g = trees("(S (NP (DT the) (NN dog)) (VP (VBZ barks)))");
        let score = score_trees(&g, &g).unwrap();
        assert_eq!(score.precision, 100.0);
        assert_eq!(score.recall, 100.0);
        assert_eq!(score.f1, 100.0);
    }

    #[test]
    fn hand_enumerated_case() {
        // gold brackets {S[0,3], NP[0,2], VP[2,3]}, pred {S[0,3], NP[0,2]}
        let gold = trees("(S (NP (DT the) (NN dog)) (VP (VBZ barks)))");
        let pred = trees("(S (NP (DT the) (NN dog)) (VBZ barks))");
        let score = score_trees(&gold, &pred).unwrap();
        assert_eq!(score.matched, 2);
        assert_eq!(score.gold_total, 3);
        assert_eq!(score.pred_total, 2);
        assert_eq!(score.precision, 100.0);
        assert!((score.recall - 66.67).abs() < 0.01);
        assert!((score.f1 - 80.0).abs() < 0.01);
    }

    #[test]
    fn all_no_parse_scores_zero() {
        let gold = trees("(S (NP (NN dogs)) (VP (VBP bark)))\n(S (NN cats))");
        let pred: Vec<Option<&ConstTree>> = vec![None, None];
        let score = score_trees_with_gaps(&gold, &pred).unwrap();
        assert_eq!(score.precision, 0.0);
        assert_eq!(score.recall, 0.0);
        assert_eq!(score.f1, 0.0);
        assert!(score.gold_total > 0);
        assert_eq!(score.pred_total, 0);
    }

    #[test]
    fn root_wrapper_and_pre_terminals_are_excluded() {
        let gold = trees("(ROOT (S (NP (NN dogs)) (VP (VBP bark))))");
        let score = score_trees(&gold, &gold).unwrap();
        // S, NP, VP only
        assert_eq!(score.gold_total, 3);
        // a non-wrapper S root does count
        let bare = trees("(S (NP (NN dogs)) (VP (VBP bark)))");
        assert_eq!(score_trees(&bare, &bare).unwrap().gold_total, 3);
    }

    #[test]
    fn match_is_symmetric() {
        let a = trees("(S (NP (NN dogs)) (VP (VBP bark)))");
        let b = trees("(S (NP (NN dogs)) (VBP bark))");
        let ab = score_trees(&a, &b).unwrap();
        let ba = score_trees(&b, &a).unwrap();
        assert_eq!(ab.matched, ba.matched);
        assert_ne!(ab.precision, ba.precision);
    }

    #[test]
    fn duplicate_brackets_match_as_a_multiset() {
        // (X (X a b)) style duplicates: same (label, span) twice in gold,
        // once in prediction
        let gold = trees("(S (NP (NP (DT the) (NN dog))))");
        let pred = trees("(S (NP (DT the) (NN dog)))");
        let score = score_trees(&gold, &pred).unwrap();
        // gold: S[0,2], NP[0,2] x2; pred: S[0,2], NP[0,2]
        assert_eq!(score.gold_total, 3);
        assert_eq!(score.pred_total, 2);
        assert_eq!(score.matched, 2);
    }

    #[test]
    fn yield_mismatch_names_the_index() {
        let gold = trees("(S (A a))\n(S (B b))");
        let pred = trees("(S (A a))\n(S (B c))");
        assert_eq!(
            score_trees(&gold, &pred).unwrap_err(),
            EvalError::YieldMismatch { index: 1 }
        );
    }

    #[test]
    fn order_permutation_applied_to_both_sides_is_invariant() {
        let gold = trees("(S (NP (NN a)) (VP (VB b)))\n(S (NP (DT c) (NN d)))");
        let pred = trees("(S (NP (NN a)) (VP (VB b)))\n(S (NP (DT c)) (NN d))");
        let fwd = score_trees(&gold, &pred).unwrap();
        let rev_gold: Vec<ConstTree> = gold.iter().rev().cloned().collect();
        let rev_pred: Vec<ConstTree> = pred.iter().rev().cloned().collect();
        let rev = score_trees(&rev_gold, &rev_pred).unwrap();
        assert_eq!(fwd, rev);
    }
}
