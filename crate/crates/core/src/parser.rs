//! Viterbi CKY over a binarized PCFG.
//!
//! The combination loop is strictly binary; unary rules only ever sit
//! directly above pre-terminals after binarization, so they are applied in
//! one pass while seeding the width-1 cells. Ties are broken toward the
//! smaller split point, then the lexicographically smaller rule, which makes
//! the output deterministic across runs and thread counts.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::binarize::{debinarize, is_intermediate_label, UNARY_JOIN};
use crate::bracketed::Treebank;
use crate::pcfg::{estimate_pcfg, token_signature, Pcfg, PcfgError, GENERIC_SIGNATURE};
use crate::tree::{ConstTree, TreeNode};
use crate::Scalar;

/// A successful parse: the debinarized tree, the Viterbi derivation
/// log-probability, and its per-token normalization used as confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseResult {
    pub tree: ConstTree,
    pub log_prob: Scalar,
    pub confidence: Scalar,
}

/// Batch outcome: parses keyed by input index, no-parse indices separately.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoolParse {
    pub parses: Vec<(usize, ParseResult)>,
    pub no_parse: Vec<usize>,
}

/// Train a parser on a treebank. Stateless: training on a concatenation
/// equals training on the parts merged in any order.
pub fn train(bank: &Treebank) -> Result<Pcfg, PcfgError> {
    estimate_pcfg(bank)
}

type LabelId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Back {
    Lexical,
    Unary { child: LabelId },
    Binary { split: usize, left: LabelId, right: LabelId },
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    lp: Scalar,
    back: Back,
}

/// A `Pcfg` compiled into integer-indexed tables for chart parsing.
/// Label ids are assigned in sorted label order, so id comparisons agree
/// with lexicographic tie-breaking.
pub struct ChartParser<'g> {
    pcfg: &'g Pcfg,
    labels: Vec<String>,
    /// binary rules grouped by left child, each group sorted by (right, lhs)
    binary_by_left: Vec<Vec<(LabelId, LabelId, Scalar)>>,
    /// unary rules grouped by child, each group sorted by lhs
    unary_by_child: Vec<Vec<(LabelId, Scalar)>>,
    lexical_by_token: HashMap<String, Vec<(LabelId, Scalar)>>,
    unknown_by_signature: HashMap<String, Vec<(LabelId, Scalar)>>,
    goal_ids: Vec<LabelId>,
}

impl<'g> ChartParser<'g> {
    pub fn new(pcfg: &'g Pcfg) -> ChartParser<'g> {
        let mut label_set: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
        for (lhs, l, r) in pcfg.binary_rules().keys() {
            label_set.insert(lhs);
            label_set.insert(l);
            label_set.insert(r);
        }
        for (lhs, c) in pcfg.unary_rules().keys() {
            label_set.insert(lhs);
            label_set.insert(c);
        }
        for (pos, _) in pcfg.lexical_rules().keys() {
            label_set.insert(pos);
        }
        for (pos, _) in pcfg.unknown_model().keys() {
            label_set.insert(pos);
        }
        let labels: Vec<String> = label_set.into_iter().map(|s| s.to_string()).collect();
        let id_of: HashMap<&str, LabelId> = labels
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as LabelId))
            .collect();

        let mut binary_by_left: Vec<Vec<(LabelId, LabelId, Scalar)>> =
            vec![Vec::new(); labels.len()];
        for ((lhs, l, r), p) in pcfg.binary_rules() {
            binary_by_left[id_of[l.as_str()] as usize].push((
                id_of[r.as_str()],
                id_of[lhs.as_str()],
                p.ln(),
            ));
        }
        for group in &mut binary_by_left {
            group.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        }

        let mut unary_by_child: Vec<Vec<(LabelId, Scalar)>> = vec![Vec::new(); labels.len()];
        for ((lhs, c), p) in pcfg.unary_rules() {
            unary_by_child[id_of[c.as_str()] as usize].push((id_of[lhs.as_str()], p.ln()));
        }
        for group in &mut unary_by_child {
            group.sort_unstable_by_key(|(lhs, _)| *lhs);
        }

        let mut lexical_by_token: HashMap<String, Vec<(LabelId, Scalar)>> = HashMap::new();
        for ((pos, token), p) in pcfg.lexical_rules() {
            lexical_by_token
                .entry(token.clone())
                .or_default()
                .push((id_of[pos.as_str()], p.ln()));
        }
        for group in lexical_by_token.values_mut() {
            group.sort_unstable_by_key(|(pos, _)| *pos);
        }

        let mut unknown_by_signature: HashMap<String, Vec<(LabelId, Scalar)>> = HashMap::new();
        for ((pos, sig), p) in pcfg.unknown_model() {
            unknown_by_signature
                .entry(sig.clone())
                .or_default()
                .push((id_of[pos.as_str()], p.ln()));
        }
        for group in unknown_by_signature.values_mut() {
            group.sort_unstable_by_key(|(pos, _)| *pos);
        }

        // goal labels: the start symbol itself or a chain collapsed onto it
        let start = pcfg.start_symbol();
        let goal_ids = labels
            .iter()
            .enumerate()
            .filter(|(_, label)| {
                !is_intermediate_label(label)
                    && label.split(UNARY_JOIN).next() == Some(start)
            })
            .map(|(i, _)| i as LabelId)
            .collect();

        ChartParser {
            pcfg,
            labels,
            binary_by_left,
            unary_by_child,
            lexical_by_token,
            unknown_by_signature,
            goal_ids,
        }
    }

    fn lexical_candidates(&self, token: &str) -> &[(LabelId, Scalar)] {
        if let Some(group) = self.lexical_by_token.get(token) {
            return group;
        }
        let sig = token_signature(token);
        if let Some(group) = self.unknown_by_signature.get(&sig) {
            return group;
        }
        self.unknown_by_signature
            .get(GENERIC_SIGNATURE)
            .map(|g| g.as_slice())
            .unwrap_or(&[])
    }

    /// Parse one sentence; `None` when no derivation reaches the start symbol.
    pub fn parse(&self, tokens: &[&str]) -> Option<ParseResult> {
        let n = tokens.len();
        if n == 0 {
            return None;
        }
        let label_count = self.labels.len();
        let cell = |i: usize, j: usize| i * (n + 1) + j;
        let mut chart: Vec<Vec<Option<Entry>>> = vec![Vec::new(); (n + 1) * (n + 1)];

        // width-1: lexical seeding, then one unary pass
        for (i, token) in tokens.iter().enumerate() {
            let mut col: Vec<Option<Entry>> = vec![None; label_count];
            for &(pos, lp) in self.lexical_candidates(token) {
                update(&mut col[pos as usize], lp, Back::Lexical);
            }
            let seeded: Vec<(LabelId, Scalar)> = col
                .iter()
                .enumerate()
                .filter_map(|(id, e)| e.map(|e| (id as LabelId, e.lp)))
                .collect();
            for (child, child_lp) in seeded {
                for &(lhs, rule_lp) in &self.unary_by_child[child as usize] {
                    let cand = child_lp + rule_lp;
                    update(&mut col[lhs as usize], cand, Back::Unary { child });
                }
            }
            chart[cell(i, i + 1)] = col;
        }

        // binary combinations, width ascending, split ascending
        for width in 2..=n {
            for i in 0..=(n - width) {
                let j = i + width;
                let mut col: Vec<Option<Entry>> = vec![None; label_count];
                for k in (i + 1)..j {
                    let left_col = &chart[cell(i, k)];
                    let right_col = &chart[cell(k, j)];
                    if left_col.is_empty() || right_col.is_empty() {
                        continue;
                    }
                    for (left_id, left_entry) in left_col.iter().enumerate() {
                        let Some(left_entry) = left_entry else { continue };
                        let group = &self.binary_by_left[left_id];
                        if group.is_empty() {
                            continue;
                        }
                        for &(right_id, lhs, rule_lp) in group {
                            let Some(right_entry) = right_col[right_id as usize] else {
                                continue;
                            };
                            let cand = left_entry.lp + right_entry.lp + rule_lp;
                            update(
                                &mut col[lhs as usize],
                                cand,
                                Back::Binary {
                                    split: k,
                                    left: left_id as LabelId,
                                    right: right_id,
                                },
                            );
                        }
                    }
                }
                chart[cell(i, j)] = col;
            }
        }

        // pick the best goal entry; smaller label id wins exact ties
        let top = &chart[cell(0, n)];
        if top.is_empty() {
            return None;
        }
        let mut best: Option<(LabelId, Scalar)> = None;
        for &goal in &self.goal_ids {
            if let Some(entry) = top[goal as usize] {
                if best.is_none_or(|(_, lp)| entry.lp > lp) {
                    best = Some((goal, entry.lp));
                }
            }
        }
        let (goal, log_prob) = best?;
        let node = self.recover(&chart, cell, 0, n, goal, tokens);
        let binarized = ConstTree::new(node).expect("chart produces a valid tree");
        let tree = debinarize(&binarized).expect("chart trees have no dangling intermediates");
        Some(ParseResult {
            tree,
            log_prob,
            confidence: log_prob / n as Scalar,
        })
    }

    fn recover(
        &self,
        chart: &[Vec<Option<Entry>>],
        cell: impl Fn(usize, usize) -> usize + Copy,
        i: usize,
        j: usize,
        label: LabelId,
        tokens: &[&str],
    ) -> TreeNode {
        let entry = chart[cell(i, j)][label as usize].expect("backpointer into filled cell");
        let name = self.labels[label as usize].clone();
        match entry.back {
            Back::Lexical => TreeNode::pre_terminal(name, tokens[i]),
            Back::Unary { child } => {
                let kid = self.recover(chart, cell, i, j, child, tokens);
                TreeNode::internal(name, vec![kid])
            }
            Back::Binary { split, left, right } => {
                let l = self.recover(chart, cell, i, split, left, tokens);
                let r = self.recover(chart, cell, split, j, right, tokens);
                TreeNode::internal(name, vec![l, r])
            }
        }
    }

    /// Parse a pool of sentences in parallel; output order and content are
    /// identical to a sequential map.
    pub fn parse_pool(&self, sentences: &[Vec<String>]) -> PoolParse {
        let outcomes: Vec<Option<ParseResult>> = sentences
            .par_iter()
            .map(|sentence| {
                let tokens: Vec<&str> = sentence.iter().map(|s| s.as_str()).collect();
                self.parse(&tokens)
            })
            .collect();
        let mut pool = PoolParse::default();
        for (index, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Some(result) => pool.parses.push((index, result)),
                None => pool.no_parse.push(index),
            }
        }
        pool
    }

    pub fn pcfg(&self) -> &Pcfg {
        self.pcfg
    }
}

/// Replace when strictly better. Candidates for one (span, lhs) arrive in
/// ascending (split, left, right) order, so keeping the incumbent on exact
/// ties implements the documented tie-break.
fn update(slot: &mut Option<Entry>, lp: Scalar, back: Back) {
    match slot {
        Some(entry) if entry.lp >= lp => {}
        _ => *slot = Some(Entry { lp, back }),
    }
}

/// One-shot convenience over [`ChartParser::parse`].
pub fn parse_sentence(pcfg: &Pcfg, tokens: &[&str]) -> Option<ParseResult> {
    ChartParser::new(pcfg).parse(tokens)
}

/// One-shot convenience over [`ChartParser::parse_pool`].
pub fn parse_pool(pcfg: &Pcfg, sentences: &[Vec<String>]) -> PoolParse {
    ChartParser::new(pcfg).parse_pool(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bracketed::{parse_bracketed, tree_to_string, Provenance};
    use crate::pcfg::rescore;

    fn bank(texts: &[&str]) -> Treebank {
        let mut bank = Treebank::new();
        for text in texts {
            for tree in parse_bracketed(text).unwrap() {
                bank.push(tree, Provenance::Source);
            }
        }
        bank
    }

    #[test]
    fn all_probability_one_grammar_has_log_prob_zero() {
        let g = train(&bank(&["(S (A a) (B b))"])).unwrap();
        let result = parse_sentence(&g, &["a", "b"]).unwrap();
        assert_eq!(tree_to_string(&result.tree), "(S (A a) (B b))");
        assert_eq!(result.log_prob, 0.0);
        assert_eq!(result.confidence, 0.0);
    }

    #[test]
    fn ambiguous_grammar_matches_hand_computed_max() {
        // S -> S S : 0.4, S -> "a" : 0.6; best derivation for "a a a"
        // has probability 0.4^2 * 0.6^3 = 0.03456
        let g = Pcfg::from_rules(
            "S",
            vec![("S".into(), "S".into(), "S".into(), 0.4)],
            vec![],
            vec![("S".into(), "a".into(), 0.6)],
        )
        .unwrap();
        let result = parse_sentence(&g, &["a", "a", "a"]).unwrap();
        let expected = (0.4f64.powi(2) * 0.6f64.powi(3)).ln();
        assert!((result.log_prob - expected).abs() < 1e-12);
        // smaller top split preferred: [0,1)+[1,3)
        assert_eq!(tree_to_string(&result.tree), "(S (S a) (S (S a) (S a)))");
    }

    #[test]
    fn coverage_gap_gives_no_parse() {
        let g = train(&bank(&["(S (A a) (B b))"])).unwrap();
        assert!(parse_sentence(&g, &["b", "a"]).is_none());
        assert!(parse_sentence(&g, &[]).is_none());
    }

    #[test]
    fn unary_above_pre_terminal_parses() {
        let g = train(&bank(&["(S (NP (NN dogs)) (VP (VBP bark)))"])).unwrap();
        let result = parse_sentence(&g, &["dogs", "bark"]).unwrap();
        assert_eq!(
            tree_to_string(&result.tree),
            "(S (NP (NN dogs)) (VP (VBP bark)))"
        );
        assert_eq!(result.log_prob, 0.0);
    }

    #[test]
    fn collapsed_unary_chain_is_restored() {
        let g = train(&bank(&["(ROOT (S (VP (VB go))))"])).unwrap();
        let result = parse_sentence(&g, &["go"]).unwrap();
        assert_eq!(tree_to_string(&result.tree), "(ROOT (S (VP (VB go))))");
    }

    #[test]
    fn log_prob_matches_rescoring_audit() {
        let b = bank(&[
            "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))",
            "(S (NP (DT a) (NN cat)) (VP (VBZ sleeps)))",
            "(S (NP (DT the) (NN cat)) (VP (VBZ barks)))",
        ]);
        let g = train(&b).unwrap();
        let result = parse_sentence(&g, &["the", "dog", "sleeps"]).unwrap();
        let audit = rescore(&g, &result.tree).unwrap();
        assert!((audit - result.log_prob).abs() <= 1e-9 * result.log_prob.abs().max(1.0));
        assert!(result.log_prob <= 0.0);
        assert!(result.confidence <= 0.0);
        assert_eq!(result.confidence, result.log_prob / 3.0);
    }

    #[test]
    fn unknown_tokens_parse_through_signatures() {
        let b = bank(&[
            "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))",
            "(S (NP (DT a) (NN cat)) (VP (VBZ sleeps)))",
        ]);
        let g = train(&b).unwrap();
        // "wolf" unseen; rare tokens ("dog", "cat", ...) back its signature
        let result = parse_sentence(&g, &["the", "wolf", "barks"]);
        assert!(result.is_some());
        let tree = result.unwrap().tree;
        assert_eq!(tree.tokens()[1], "wolf");
    }

    #[test]
    fn pool_matches_sequential_and_preserves_order() {
        let b = bank(&[
            "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))",
            "(S (NP (DT a) (NN cat)) (VP (VBZ sleeps)))",
        ]);
        let g = train(&b).unwrap();
        let sentences: Vec<Vec<String>> = vec![
            vec!["the".into(), "dog".into(), "barks".into()],
            vec!["zzz".into(), "qqq".into(), "###".into(), "%%%".into(), "@@".into(), "!!".into(), "??".into(), "..".into()],
            vec!["a".into(), "cat".into(), "sleeps".into()],
        ];
        let parser = ChartParser::new(&g);
        let pooled = parser.parse_pool(&sentences);
        let sequential: Vec<Option<ParseResult>> = sentences
            .iter()
            .map(|s| {
                let toks: Vec<&str> = s.iter().map(|t| t.as_str()).collect();
                parser.parse(&toks)
            })
            .collect();
        let mut expected = PoolParse::default();
        for (i, r) in sequential.into_iter().enumerate() {
            match r {
                Some(r) => expected.parses.push((i, r)),
                None => expected.no_parse.push(i),
            }
        }
        assert_eq!(pooled, expected);
        assert_eq!(pooled.parses.len() + pooled.no_parse.len(), 3);
    }

    #[test]
    fn training_is_stateless_and_order_free() {
        let a = bank(&["(S (A a) (B b))", "(S (B b) (A a))"]);
        let b2 = bank(&["(S (B b) (A a))", "(S (A a) (B b))"]);
        assert_eq!(train(&a).unwrap(), train(&b2).unwrap());
    }
}
