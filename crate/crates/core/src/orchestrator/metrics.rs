//! Per-iteration metrics and the tabular report derived from them.

use serde::{Deserialize, Serialize};

use crate::generation::GenerationStats;
use crate::Scalar;

/// Everything recorded about one loop turn. The mean fields describe the
/// selected batch; the `js_to_*` distances compare that batch's rule
/// distribution against the original source treebank and the configured
/// target reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: u32,
    pub pool_size: usize,
    pub parsed: usize,
    pub no_parse: usize,
    pub selected: usize,
    pub treebank_size: usize,
    pub mean_confidence: Scalar,
    pub mean_token_distance: Scalar,
    pub mean_grs_distance: Scalar,
    pub js_to_source: Option<Scalar>,
    pub js_to_target: Option<Scalar>,
    pub f1: Option<Scalar>,
    pub generation: Option<GenerationStats>,
}

fn fmt_opt(v: Option<Scalar>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".to_string())
}

/// Render the metrics trail as CSV, one row per iteration.
pub fn metrics_to_csv(metrics: &[IterationMetrics]) -> String {
    let mut out = String::from(
        "iteration,pool_size,parsed,no_parse,selected,treebank_size,\
         mean_confidence,mean_token_distance,mean_grs_distance,\
         js_to_source,js_to_target,f1\n",
    );
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{}\n",
            m.iteration,
            m.pool_size,
            m.parsed,
            m.no_parse,
            m.selected,
            m.treebank_size,
            m.mean_confidence,
            m.mean_token_distance,
            m.mean_grs_distance,
            fmt_opt(m.js_to_source),
            fmt_opt(m.js_to_target),
            fmt_opt(m.f1),
        ));
    }
    out
}

/// Render a fixed-width text table of the same rows.
pub fn metrics_to_table(metrics: &[IterationMetrics]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>4} {:>9} {:>7} {:>8} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
        "iter",
        "pool",
        "parsed",
        "no_parse",
        "selected",
        "treebank",
        "mean_conf",
        "tok_dist",
        "grs_dist",
        "js_source",
        "js_target",
        "f1"
    ));
    for m in metrics {
        out.push_str(&format!(
            "{:>4} {:>9} {:>7} {:>8} {:>8} {:>9} {:>10.4} {:>10.4} {:>10.4} {:>10} {:>10} {:>8}\n",
            m.iteration,
            m.pool_size,
            m.parsed,
            m.no_parse,
            m.selected,
            m.treebank_size,
            m.mean_confidence,
            m.mean_token_distance,
            m.mean_grs_distance,
            m.js_to_source
                .map(|x| format!("{x:.4}"))
                .unwrap_or_else(|| "-".to_string()),
            m.js_to_target
                .map(|x| format!("{x:.4}"))
                .unwrap_or_else(|| "-".to_string()),
            m.f1.map(|x| format!("{x:.2}"))
                .unwrap_or_else(|| "-".to_string()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> IterationMetrics {
        IterationMetrics {
            iteration: 1,
            pool_size: 500,
            parsed: 480,
            no_parse: 20,
            selected: 50,
            treebank_size: 350,
            mean_confidence: -1.25,
            mean_token_distance: 0.02,
            mean_grs_distance: 0.015,
            js_to_source: Some(0.1),
            js_to_target: Some(0.4),
            f1: None,
            generation: None,
        }
    }

    #[test]
    fn csv_has_one_row_per_iteration_plus_header() {
        let rows = vec![sample(), IterationMetrics { iteration: 2, ..sample() }];
        let csv = metrics_to_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,500,480,20,50,350"));
        assert!(csv.contains(",-\n") || csv.ends_with(",-"));
    }

    #[test]
    fn table_renders_every_iteration() {
        let rows = vec![sample()];
        let table = metrics_to_table(&rows);
        assert_eq!(table.lines().count(), 2);
        assert!(table.contains("js_target"));
    }

    #[test]
    fn json_round_trip() {
        let m = sample();
        let text = serde_json::to_string(&m).unwrap();
        let back: IterationMetrics = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
