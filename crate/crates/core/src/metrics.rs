//! Ranked-list and set metrics for Markov-boundary predictions: binary
//! relevance nDCG with the 1/log2(rank+2) discount, average precision, and
//! set F1, macro-averaged over targets.
//!
//! Conventions for degenerate inputs (fixed here for reproducibility):
//! an empty truth scores 1 against an empty prediction and 0 against a
//! non-empty one; a non-empty truth scores 0 against an empty prediction.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::{markov_boundary_of, Dag};

/// Per-target metric values, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub target: usize,
    pub ndcg: f64,
    pub avep: f64,
    pub f1: f64,
}

/// Unweighted means over targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroAverages {
    pub ndcg: f64,
    pub avep: f64,
    pub f1: f64,
}

fn check_no_duplicates(ranked: &[usize]) -> Result<()> {
    let set: BTreeSet<usize> = ranked.iter().copied().collect();
    if set.len() != ranked.len() {
        return Err(CoreError::InvalidParameter {
            name: "ranked",
            reason: "duplicate entries in ranked list".into(),
        });
    }
    Ok(())
}

/// Normalized discounted cumulative gain with binary relevance:
/// `DCG = Σ_{r: ranked[r] ∈ truth} 1/log2(r+2)` (r zero-based), normalized
/// by the ideal DCG of `|truth|` relevant items at the top.
pub fn ndcg(ranked: &[usize], truth: &BTreeSet<usize>) -> Result<f64> {
    check_no_duplicates(ranked)?;
    if truth.is_empty() {
        return Ok(if ranked.is_empty() { 1.0 } else { 0.0 });
    }
    if ranked.is_empty() {
        return Ok(0.0);
    }
    let dcg: f64 = ranked
        .iter()
        .enumerate()
        .filter(|(_, v)| truth.contains(v))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..truth.len())
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    Ok(dcg / idcg)
}

/// Average precision: mean of precision@(r+1) over the ranks r that hit a
/// truth member, divided by `|truth|`.
pub fn avep(ranked: &[usize], truth: &BTreeSet<usize>) -> Result<f64> {
    check_no_duplicates(ranked)?;
    if truth.is_empty() {
        return Ok(if ranked.is_empty() { 1.0 } else { 0.0 });
    }
    if ranked.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (r, v) in ranked.iter().enumerate() {
        if truth.contains(v) {
            hits += 1;
            acc += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(acc / truth.len() as f64)
}

/// Set F1: harmonic mean of precision and recall; 1 when both sets are
/// empty, 0 when exactly one is.
pub fn f1(predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> f64 {
    match (predicted.is_empty(), truth.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => {
            let tp = predicted.intersection(truth).count() as f64;
            if tp == 0.0 {
                return 0.0;
            }
            let precision = tp / predicted.len() as f64;
            let recall = tp / truth.len() as f64;
            2.0 * precision * recall / (precision + recall)
        }
    }
}

/// Scores a predicted MB map against the ground-truth DAG. Truth per target
/// comes from [`markov_boundary_of`]; every target in `0..d` must be present
/// in the map.
pub fn evaluate_run(
    mb_map: &std::collections::BTreeMap<usize, Vec<usize>>,
    dag: &Dag,
) -> Result<(Vec<MetricRow>, MacroAverages)> {
    let d = dag.d();
    let mut rows = Vec::with_capacity(d);
    for target in 0..d {
        let ranked = mb_map.get(&target).ok_or(CoreError::InvalidParameter {
            name: "mb_map",
            reason: format!("missing target {target}"),
        })?;
        for &m in ranked {
            if m >= d {
                return Err(CoreError::IndexOutOfRange { index: m, d });
            }
        }
        let truth = markov_boundary_of(dag, target)?;
        let predicted: BTreeSet<usize> = ranked.iter().copied().collect();
        rows.push(MetricRow {
            target,
            ndcg: ndcg(ranked, &truth)?,
            avep: avep(ranked, &truth)?,
            f1: f1(&predicted, &truth),
        });
    }
    let nf = d as f64;
    let macros = MacroAverages {
        ndcg: rows.iter().map(|r| r.ndcg).sum::<f64>() / nf,
        avep: rows.iter().map(|r| r.avep).sum::<f64>() / nf,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / nf,
    };
    Ok((rows, macros))
}

/// Writes `target,ndcg,avep,f1` rows plus a trailing `macro` row.
pub fn write_metrics_csv(
    rows: &[MetricRow],
    macros: &MacroAverages,
    names: &[String],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("target,ndcg,avep,f1\n");
    for r in rows {
        let name = names
            .get(r.target)
            .cloned()
            .unwrap_or_else(|| r.target.to_string());
        out.push_str(&format!("{name},{},{},{}\n", r.ndcg, r.avep, r.f1));
    }
    out.push_str(&format!(
        "macro,{},{},{}\n",
        macros.ndcg, macros.avep, macros.f1
    ));
    let mut f =
        std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Console table with aligned columns.
pub fn format_metrics_table(rows: &[MetricRow], macros: &MacroAverages, names: &[String]) -> String {
    let mut out = format!("{:<12} {:>8} {:>8} {:>8}\n", "target", "ndcg", "avep", "f1");
    for r in rows {
        let name = names
            .get(r.target)
            .cloned()
            .unwrap_or_else(|| r.target.to_string());
        out.push_str(&format!(
            "{:<12} {:>8.4} {:>8.4} {:>8.4}\n",
            name, r.ndcg, r.avep, r.f1
        ));
    }
    out.push_str(&format!(
        "{:<12} {:>8.4} {:>8.4} {:>8.4}\n",
        "macro", macros.ndcg, macros.avep, macros.f1
    ));
    out
}
