//! Jensen-Shannon divergence and the set-to-instance distance built on it.
//!
//! The kernel is generic over the float type; the rest of the crate uses it
//! at [`crate::Scalar`]. Base-2 logarithms keep every divergence in `[0, 1]`.

use std::collections::BTreeMap;

use num_traits::Float;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DivergenceError {
    #[error("distribution has zero total mass")]
    ZeroMass,
    #[error("weight vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

fn normalize<F: Float>(weights: &[F]) -> Result<Vec<F>, DivergenceError> {
    let total = weights.iter().fold(F::zero(), |acc, &w| acc + w);
    if total <= F::zero() {
        return Err(DivergenceError::ZeroMass);
    }
    Ok(weights.iter().map(|&w| w / total).collect())
}

/// Jensen-Shannon divergence of two aligned non-negative weight vectors.
///
/// Inputs are normalized internally, so raw counts work directly. Zero
/// entries contribute nothing on their own side; the mixture is positive
/// wherever either side is, so no smoothing is needed.
pub fn js_divergence<F: Float>(p: &[F], q: &[F]) -> Result<F, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch(p.len(), q.len()));
    }
    let p = normalize(p)?;
    let q = normalize(q)?;
    let half = F::from(0.5).expect("0.5 representable");
    let mut acc = F::zero();
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        let m = half * (pi + qi);
        if pi > F::zero() {
            acc = acc + half * pi * (pi / m).log2();
        }
        if qi > F::zero() {
            acc = acc + half * qi * (qi / m).log2();
        }
    }
    // clamp away tiny negative rounding
    Ok(acc.max(F::zero()))
}

fn aligned_counts<K: Ord>(
    p: &BTreeMap<K, u64>,
    q: &BTreeMap<K, u64>,
) -> (Vec<Scalar>, Vec<Scalar>) {
    let mut pv = Vec::new();
    let mut qv = Vec::new();
    let mut pi = p.iter().peekable();
    let mut qi = q.iter().peekable();
    loop {
        match (pi.peek(), qi.peek()) {
            (Some((pk, pc)), Some((qk, qc))) => match pk.cmp(qk) {
                std::cmp::Ordering::Less => {
                    pv.push(**pc as Scalar);
                    qv.push(0.0);
                    pi.next();
                }
                std::cmp::Ordering::Greater => {
                    pv.push(0.0);
                    qv.push(**qc as Scalar);
                    qi.next();
                }
                std::cmp::Ordering::Equal => {
                    pv.push(**pc as Scalar);
                    qv.push(**qc as Scalar);
                    pi.next();
                    qi.next();
                }
            },
            (Some((_, pc)), None) => {
                pv.push(**pc as Scalar);
                qv.push(0.0);
                pi.next();
            }
            (None, Some((_, qc))) => {
                pv.push(0.0);
                qv.push(**qc as Scalar);
                qi.next();
            }
            (None, None) => break,
        }
    }
    (pv, qv)
}

/// JS divergence between two count maps over the union of their supports.
pub fn js_counts<K: Ord>(
    p: &BTreeMap<K, u64>,
    q: &BTreeMap<K, u64>,
) -> Result<Scalar, DivergenceError> {
    let (pv, qv) = aligned_counts(p, q);
    js_divergence(&pv, &qv)
}

/// Distance from a candidate instance to a source set: the JS divergence
/// between the source distribution and the distribution of source plus
/// candidate, with the candidate's raw counts added in before normalizing.
pub fn distance_to_source<K: Ord + Clone>(
    candidate_counts: &BTreeMap<K, u64>,
    source_counts: &BTreeMap<K, u64>,
) -> Result<Scalar, DivergenceError> {
    if source_counts.values().all(|&c| c == 0) {
        return Err(DivergenceError::ZeroMass);
    }
    if candidate_counts.values().all(|&c| c == 0) {
        return Err(DivergenceError::ZeroMass);
    }
    let mut union = source_counts.clone();
    for (key, count) in candidate_counts {
        *union.entry(key.clone()).or_insert(0) += count;
    }
    js_counts(source_counts, &union)
}
