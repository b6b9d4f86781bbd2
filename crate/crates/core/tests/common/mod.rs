//! Independent oracles shared by the oracle tests and the acceptance suite.
//!
//! Nothing here calls into the chart parser's or selector's internals: the
//! CKY oracle enumerates every derivation a binarized grammar licenses, and
//! the selection oracle re-implements the criteria as repeated sort-free
//! argmin/argmax scans.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::Rng;

use bootparse::pcfg::Pcfg;
use bootparse::selection::Criterion;
use bootparse::Scalar;

/// A derivation tree in the binarized grammar space.
#[derive(Debug, Clone, PartialEq)]
pub enum DerivNode {
    Lexical {
        label: String,
    },
    Unary {
        label: String,
        child: Box<DerivNode>,
    },
    Binary {
        label: String,
        split: usize,
        left: Box<DerivNode>,
        right: Box<DerivNode>,
    },
}

#[derive(Debug, Clone)]
pub struct Derivation {
    pub node: DerivNode,
    pub log_prob: Scalar,
}

fn kind_rank(node: &DerivNode) -> u8 {
    match node {
        DerivNode::Lexical { .. } => 0,
        DerivNode::Unary { .. } => 1,
        DerivNode::Binary { .. } => 2,
    }
}

/// The documented tie order: smaller split point first, then the
/// lexicographically smaller rule, applied recursively.
fn structure_cmp(a: &DerivNode, b: &DerivNode) -> Ordering {
    kind_rank(a).cmp(&kind_rank(b)).then_with(|| match (a, b) {
        (DerivNode::Lexical { .. }, DerivNode::Lexical { .. }) => Ordering::Equal,
        (
            DerivNode::Unary { child: ca, .. },
            DerivNode::Unary { child: cb, .. },
        ) => label_of(ca)
            .cmp(label_of(cb))
            .then_with(|| structure_cmp(ca, cb)),
        (
            DerivNode::Binary {
                split: sa,
                left: la,
                right: ra,
                ..
            },
            DerivNode::Binary {
                split: sb,
                left: lb,
                right: rb,
                ..
            },
        ) => sa
            .cmp(sb)
            .then_with(|| label_of(la).cmp(label_of(lb)))
            .then_with(|| label_of(ra).cmp(label_of(rb)))
            .then_with(|| structure_cmp(la, lb))
            .then_with(|| structure_cmp(ra, rb)),
        _ => unreachable!("kinds already equal"),
    })
}

fn label_of(node: &DerivNode) -> &str {
    match node {
        DerivNode::Lexical { label } => label,
        DerivNode::Unary { label, .. } => label,
        DerivNode::Binary { label, .. } => label,
    }
}

/// Render the derivation the way the parser's binarized output looks when
/// serialized, for direct comparison.
pub fn deriv_to_bracketed(node: &DerivNode, tokens: &[&str], start: usize) -> String {
    match node {
        DerivNode::Lexical { label } => format!("({} {})", label, tokens[start]),
        DerivNode::Unary { label, child } => {
            format!("({} {})", label, deriv_to_bracketed(child, tokens, start))
        }
        DerivNode::Binary {
            label,
            split,
            left,
            right,
        } => format!(
            "({} {} {})",
            label,
            deriv_to_bracketed(left, tokens, start),
            deriv_to_bracketed(right, tokens, *split)
        ),
    }
}

/// Enumerate every derivation of `label` over `tokens[i..j]`.
///
/// The derivation space mirrors what training produces: lexical rules at
/// width one, a single unary step directly above a pre-terminal, binary
/// rules everywhere else. Log-probabilities are accumulated in the same
/// expression shape the chart parser uses so identical derivations carry
/// bit-identical scores.
pub fn enumerate_derivations<'a>(
    pcfg: &Pcfg,
    tokens: &[&str],
    i: usize,
    j: usize,
    label: &'a str,
    memo: &mut HashMap<(usize, usize, String), Vec<Derivation>>,
) -> Vec<Derivation> {
    let key = (i, j, label.to_string());
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let mut out = Vec::new();
    if j == i + 1 {
        if let Some(lp) = pcfg.lexical_log_prob(label, tokens[i]) {
            out.push(Derivation {
                node: DerivNode::Lexical {
                    label: label.to_string(),
                },
                log_prob: lp,
            });
        }
        for ((lhs, child), p) in pcfg.unary_rules() {
            if lhs != label {
                continue;
            }
            if let Some(child_lp) = pcfg.lexical_log_prob(child, tokens[i]) {
                out.push(Derivation {
                    node: DerivNode::Unary {
                        label: label.to_string(),
                        child: Box::new(DerivNode::Lexical {
                            label: child.clone(),
                        }),
                    },
                    log_prob: child_lp + p.ln(),
                });
            }
        }
    }
    for ((lhs, left_label, right_label), p) in pcfg.binary_rules() {
        if lhs != label {
            continue;
        }
        for split in (i + 1)..j {
            let lefts = enumerate_derivations(pcfg, tokens, i, split, left_label, memo);
            if lefts.is_empty() {
                continue;
            }
            let rights = enumerate_derivations(pcfg, tokens, split, j, right_label, memo);
            for l in &lefts {
                for r in &rights {
                    out.push(Derivation {
                        node: DerivNode::Binary {
                            label: label.to_string(),
                            split,
                            left: Box::new(l.node.clone()),
                            right: Box::new(r.node.clone()),
                        },
                        log_prob: l.log_prob + r.log_prob + p.ln(),
                    });
                }
            }
        }
    }
    memo.insert(key, out.clone());
    out
}

/// The best derivation over the whole sentence: maximum log-probability,
/// ties broken by goal label then the documented structural order.
pub fn best_derivation(pcfg: &Pcfg, tokens: &[&str]) -> Option<Derivation> {
    let mut memo = HashMap::new();
    let mut goals: Vec<String> = pcfg
        .binary_rules()
        .keys()
        .map(|(lhs, _, _)| lhs.clone())
        .chain(pcfg.unary_rules().keys().map(|(lhs, _)| lhs.clone()))
        .chain(pcfg.lexical_rules().keys().map(|(pos, _)| pos.clone()))
        .collect();
    goals.sort();
    goals.dedup();
    goals.retain(|label| {
        !label.contains('|') && label.split('+').next() == Some(pcfg.start_symbol())
    });
    let mut best: Option<Derivation> = None;
    for goal in &goals {
        for deriv in enumerate_derivations(pcfg, tokens, 0, tokens.len(), goal, &mut memo) {
            let replace = match &best {
                None => true,
                Some(cur) => match deriv.log_prob.partial_cmp(&cur.log_prob) {
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Equal) => {
                        // goals are visited in ascending label order, so on a
                        // cross-goal tie the earlier goal stands
                        label_of(&deriv.node) == label_of(&cur.node)
                            && structure_cmp(&deriv.node, &cur.node) == Ordering::Less
                    }
                    _ => false,
                },
            };
            if replace {
                best = Some(deriv);
            }
        }
    }
    best
}

/// Generate a random grammar of the shape training produces: binary rules
/// over a small non-terminal set, optional unary rules directly above the
/// pre-terminals, and a lexicon over `terminals`.
pub fn random_pcfg(rng: &mut impl Rng, terminals: &[&str]) -> Pcfg {
    let nts = ["S", "A", "B"];
    let poses = ["X", "Y"];

    let mut lexical: Vec<(String, String, Scalar)> = Vec::new();
    let mut by_lhs: HashMap<String, Vec<usize>> = HashMap::new();

    // every pos tags every terminal with a random weight
    let mut weights: HashMap<String, Vec<(String, Scalar)>> = HashMap::new();
    for pos in poses {
        for term in terminals {
            weights
                .entry(pos.to_string())
                .or_default()
                .push((term.to_string(), rng.random_range(0.2..1.0)));
        }
    }
    for (pos, entries) in &weights {
        let total: Scalar = entries.iter().map(|(_, w)| w).sum();
        for (term, w) in entries {
            lexical.push((pos.clone(), term.clone(), w / total));
        }
    }

    // random binary (and sometimes unary) rules; rule count capped at 20
    let n_binary = rng.random_range(4..=12usize);
    let n_unary = rng.random_range(0..=3usize);
    let mut binary_raw: Vec<(String, String, String, Scalar)> = Vec::new();
    let mut unary_raw: Vec<(String, String, Scalar)> = Vec::new();
    let child_pool: Vec<&str> = nts.iter().chain(poses.iter()).copied().collect();
    for k in 0..n_binary {
        // keep S productive so some sentence parses
        let lhs = if k == 0 {
            "S"
        } else {
            nts[rng.random_range(0..nts.len())]
        };
        let l = child_pool[rng.random_range(0..child_pool.len())];
        let r = child_pool[rng.random_range(0..child_pool.len())];
        binary_raw.push((
            lhs.to_string(),
            l.to_string(),
            r.to_string(),
            rng.random_range(0.2..1.0),
        ));
    }
    for _ in 0..n_unary {
        let lhs = nts[rng.random_range(0..nts.len())];
        let child = poses[rng.random_range(0..poses.len())];
        unary_raw.push((lhs.to_string(), child.to_string(), rng.random_range(0.2..1.0)));
    }

    // normalize per lhs over binary + unary mass
    let mut totals: HashMap<String, Scalar> = HashMap::new();
    for (lhs, _, _, w) in &binary_raw {
        *totals.entry(lhs.clone()).or_insert(0.0) += w;
        by_lhs.entry(lhs.clone()).or_default();
    }
    for (lhs, _, w) in &unary_raw {
        *totals.entry(lhs.clone()).or_insert(0.0) += w;
    }
    // deduplicate identical rule identities by keeping the first
    binary_raw.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
    binary_raw.dedup_by(|a, b| (&a.0, &a.1, &a.2) == (&b.0, &b.1, &b.2));
    unary_raw.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    unary_raw.dedup_by(|a, b| (&a.0, &a.1) == (&b.0, &b.1));
    // recompute totals after dedup
    let mut totals2: HashMap<String, Scalar> = HashMap::new();
    for (lhs, _, _, w) in &binary_raw {
        *totals2.entry(lhs.clone()).or_insert(0.0) += w;
    }
    for (lhs, _, w) in &unary_raw {
        *totals2.entry(lhs.clone()).or_insert(0.0) += w;
    }
    let _ = totals;
    let binary: Vec<(String, String, String, Scalar)> = binary_raw
        .into_iter()
        .map(|(lhs, l, r, w)| {
            let t = totals2[&lhs];
            (lhs, l, r, w / t)
        })
        .collect();
    let unary: Vec<(String, String, Scalar)> = unary_raw
        .into_iter()
        .map(|(lhs, c, w)| {
            let t = totals2[&lhs];
            (lhs, c, w / t)
        })
        .collect();

    Pcfg::from_rules("S", binary, unary, lexical).expect("random grammar is well-formed")
}

/// Reference selection: repeated argmin/argmax scans, no sorting.
pub fn oracle_select(
    scores: &[(Scalar, Scalar, Scalar)],
    criterion: Criterion,
    top_k: usize,
    pool_factor: Scalar,
) -> Vec<usize> {
    let all: Vec<usize> = (0..scores.len()).collect();
    match criterion {
        Criterion::Token => scan(&all, top_k, |i| scores[i].1, true),
        Criterion::Conf => scan(&all, top_k, |i| scores[i].0, false),
        Criterion::Grs => scan(&all, top_k, |i| scores[i].2, true),
        Criterion::GrsConf => {
            let m = (pool_factor * top_k as Scalar).ceil() as usize;
            let pool = scan(&all, m, |i| scores[i].2, true);
            scan(&pool, top_k, |i| scores[i].0, false)
        }
    }
}

/// Pick up to `k` items by repeatedly scanning for the extremum; the
/// smaller original candidate index wins ties.
fn scan(pool: &[usize], k: usize, key: impl Fn(usize) -> Scalar, minimize: bool) -> Vec<usize> {
    let mut remaining: Vec<usize> = pool.to_vec();
    let mut picked = Vec::new();
    while picked.len() < k && !remaining.is_empty() {
        let mut best_at = 0usize;
        for at in 1..remaining.len() {
            let better = match key(remaining[at]).total_cmp(&key(remaining[best_at])) {
                Ordering::Less => minimize,
                Ordering::Greater => !minimize,
                Ordering::Equal => remaining[at] < remaining[best_at],
            };
            if better {
                best_at = at;
            }
        }
        picked.push(remaining.remove(best_at));
    }
    picked
}
