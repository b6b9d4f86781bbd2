//! Pseudo-data selection: score parsed candidates against the source
//! distributions and keep the top-K under one of four criteria.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{distance_to_source, DivergenceError};
use crate::grammar::{RuleDistribution, TokenDistribution};
use crate::parser::ParseResult;
use crate::tree::ConstTree;
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("unknown criterion '{0}' (expected token, conf, grs, or grsconf)")]
    UnknownCriterion(String),
    #[error("distance computation failed: {0}")]
    Distance(#[from] DivergenceError),
}

/// The four §-style selection criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Smallest token-distribution distance to the source first.
    Token,
    /// Highest parser confidence first.
    Conf,
    /// Smallest grammar-rule-distribution distance to the source first.
    Grs,
    /// Pre-filter by grammar-rule distance, then pick by confidence.
    GrsConf,
}

impl Criterion {
    pub fn parse(text: &str) -> Result<Criterion, SelectionError> {
        match text.to_ascii_lowercase().as_str() {
            "token" => Ok(Criterion::Token),
            "conf" => Ok(Criterion::Conf),
            "grs" => Ok(Criterion::Grs),
            "grsconf" => Ok(Criterion::GrsConf),
            other => Err(SelectionError::UnknownCriterion(other.to_string())),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Criterion::Token => "token",
            Criterion::Conf => "conf",
            Criterion::Grs => "grs",
            Criterion::GrsConf => "grsconf",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub criterion: Criterion,
    pub top_k: usize,
    /// GrsConf pre-filter size as a multiple of `top_k`.
    pub grsconf_pool_factor: Scalar,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            criterion: Criterion::GrsConf,
            top_k: 2000,
            grsconf_pool_factor: 2.0,
        }
    }
}

/// A scored candidate: sentence, predicted tree, parser confidence, and the
/// two set-to-instance distances.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInstance {
    pub sentence: Vec<String>,
    pub tree: ConstTree,
    pub confidence: Scalar,
    pub token_distance: Scalar,
    pub grs_distance: Scalar,
}

/// Score one parse against the source token and rule distributions. The
/// candidate's rule counts come from its predicted tree.
pub fn score_instance(
    sentence: Vec<String>,
    parse: &ParseResult,
    source_tokens: &TokenDistribution,
    source_rules: &RuleDistribution,
) -> Result<PseudoInstance, SelectionError> {
    let candidate_tokens = {
        let mut d = TokenDistribution::default();
        d.add_tokens(sentence.iter().map(|t| t.as_str()));
        d
    };
    let candidate_rules = RuleDistribution::from_tree(&parse.tree);
    let token_distance = distance_to_source(candidate_tokens.counts(), source_tokens.counts())?;
    let grs_distance = distance_to_source(candidate_rules.counts(), source_rules.counts())?;
    Ok(PseudoInstance {
        sentence,
        tree: parse.tree.clone(),
        confidence: parse.confidence,
        token_distance,
        grs_distance,
    })
}

/// The partition produced by [`rank_and_select`]: `selected` in rank order,
/// `rejected` in original candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: Vec<PseudoInstance>,
    pub rejected: Vec<PseudoInstance>,
    /// Original candidate index of each entry in `selected`.
    pub selected_indices: Vec<usize>,
    /// True when the pool was smaller than `top_k` and everything was kept.
    pub saturated: bool,
}

/// Rank scored candidates under the configured criterion and split off the
/// top-K. Ties break toward earlier input order.
pub fn rank_and_select(
    candidates: Vec<PseudoInstance>,
    cfg: &SelectionConfig,
) -> Result<Selection, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let n = candidates.len();
    let saturated = cfg.top_k >= n;
    if saturated && cfg.top_k > n {
        log::warn!(
            "top_k={} exceeds candidate pool of {}; selecting all",
            cfg.top_k,
            n
        );
    }

    let chosen: Vec<usize> = match cfg.criterion {
        Criterion::Token => {
            take_by(0..n, cfg.top_k, |i| Asc(candidates[*i].token_distance))
        }
        Criterion::Conf => take_by(0..n, cfg.top_k, |i| Desc(candidates[*i].confidence)),
        Criterion::Grs => take_by(0..n, cfg.top_k, |i| Asc(candidates[*i].grs_distance)),
        Criterion::GrsConf => {
            let pool_size = (cfg.grsconf_pool_factor * cfg.top_k as Scalar).ceil() as usize;
            let pool = take_by(0..n, pool_size, |i| Asc(candidates[*i].grs_distance));
            take_by(pool.into_iter(), cfg.top_k, |i| {
                Desc(candidates[*i].confidence)
            })
        }
    };

    let mut slots: Vec<Option<PseudoInstance>> = candidates.into_iter().map(Some).collect();
    let selected: Vec<PseudoInstance> = chosen
        .iter()
        .map(|&i| slots[i].take().expect("selected index appears once"))
        .collect();
    let rejected: Vec<PseudoInstance> = slots.into_iter().flatten().collect();
    Ok(Selection {
        selected,
        rejected,
        selected_indices: chosen,
        saturated,
    })
}

struct Asc(Scalar);
struct Desc(Scalar);

trait RankKey {
    fn cmp_key(&self, other: &Self) -> std::cmp::Ordering;
}

impl RankKey for Asc {
    fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl RankKey for Desc {
    fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// Indices of the best `k` items by `key`, ties resolved by index order.
fn take_by<K, I>(indices: I, k: usize, key: impl Fn(&usize) -> K) -> Vec<usize>
where
    K: RankKey,
    I: IntoIterator<Item = usize>,
{
    let mut order: Vec<usize> = indices.into_iter().collect();
    order.sort_by(|a, b| key(a).cmp_key(&key(b)).then(a.cmp(b)));
    order.truncate(k);
    order
}

/// One line of the selection report consumed by the `report` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub id: usize,
    pub iteration: u32,
    pub criterion: Criterion,
    pub confidence: Scalar,
    pub token_distance: Scalar,
    pub grs_distance: Scalar,
    /// Same distances measured against the original source treebank rather
    /// than the current (grown) one.
    pub token_distance_original: Scalar,
    pub grs_distance_original: Scalar,
    pub selected: bool,
}
