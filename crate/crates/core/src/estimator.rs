//! Monte-Carlo conditional entropy from a trained flow.
//!
//! `H(T|S)` is estimated as the sample mean of
//! `Σ_{i∈S} logderiv_i under mask S  −  Σ_{j∈{T}∪S} logderiv_j under mask {T}∪S`
//! plus one standard-normal entropy term for the extra T dimension (the
//! base-entropy terms of the shared dimensions cancel). Evaluation rows are
//! drawn once per seed and shared across queries so that entropy differences
//! benefit from common random numbers.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::flow::FansModel;
use crate::gauss::STD_NORMAL_ENTROPY;
use crate::rng::{streams, substream};
use crate::synth::Dataset;

/// A conditional-entropy estimate with its Monte-Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub k: usize,
    pub subset: Vec<usize>,
    pub target: usize,
}

/// Indices of the evaluation rows for `(data, K, seed)`: drawn without
/// replacement when `K <= N`, with replacement otherwise.
pub fn eval_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(CoreError::InvalidParameter {
            name: "k",
            reason: "need at least one Monte-Carlo sample".into(),
        });
    }
    let mut rng = substream(seed, streams::MC_EVAL);
    if k <= n {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(k);
        Ok(idx)
    } else {
        Ok((0..k).map(|_| rng.gen_range(0..n)).collect())
    }
}

pub(crate) fn gather_rows(data: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), data.ncols()), |(i, j)| data[(rows[i], j)])
}

fn check_query(model: &FansModel, data_d: usize, target: usize, cond: &[usize]) -> Result<()> {
    let d = model.config().d;
    if data_d != d {
        return Err(CoreError::InvalidConfig(format!(
            "dataset has {data_d} variables, model d={d}"
        )));
    }
    if target >= d {
        return Err(CoreError::IndexOutOfRange { index: target, d });
    }
    for &c in cond {
        if c >= d {
            return Err(CoreError::IndexOutOfRange { index: c, d });
        }
        if c == target {
            return Err(CoreError::InvalidParameter {
                name: "cond",
                reason: format!("conditioning set contains the target {target}"),
            });
        }
    }
    if cond.len() + 1 > model.config().m {
        return Err(CoreError::InvalidConfig(format!(
            "subset {{T}}∪S has {} variables but the model caps observed subsets at M={}",
            cond.len() + 1,
            model.config().m
        )));
    }
    Ok(())
}

/// Estimates `H(target | cond)` over `K` rows drawn by `seed`. With
/// `cond = ∅` this reduces to the marginal entropy of the target.
pub fn estimate_cond_entropy(
    model: &FansModel,
    data: &Dataset,
    target: usize,
    cond: &[usize],
    k: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    let idx = eval_indices(data.n(), k, seed)?;
    let rows = gather_rows(&data.data, &idx);
    estimate_on_rows(model, &rows, target, cond)
}

/// Estimates `H(target | cond)` on an already-gathered evaluation matrix.
pub(crate) fn estimate_on_rows(
    model: &FansModel,
    rows: &Array2<f64>,
    target: usize,
    cond: &[usize],
) -> Result<EntropyEstimate> {
    check_query(model, rows.ncols(), target, cond)?;
    let k = rows.nrows();
    let mut ts: Vec<usize> = Vec::with_capacity(cond.len() + 1);
    ts.extend_from_slice(cond);
    ts.push(target);
    ts.sort_unstable();
    let ld_ts = crate::flow::forward_logderivs(model, rows, &ts)?;
    let per_sample: Vec<f64> = if cond.is_empty() {
        ld_ts.iter().map(|&v| -v).collect()
    } else {
        let ld_s = crate::flow::forward_logderivs(model, rows, cond)?;
        ld_s.iter().zip(ld_ts.iter()).map(|(s, t)| s - t).collect()
    };
    let mean = per_sample.iter().sum::<f64>() / k as f64;
    let var = if k > 1 {
        per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0)
    } else {
        0.0
    };
    Ok(EntropyEstimate {
        value: mean + STD_NORMAL_ENTROPY,
        std_error: (var / k as f64).sqrt(),
        k,
        subset: cond.to_vec(),
        target,
    })
}

/// Scores every candidate extension `cond ∪ {c}` of a base set against the
/// same `K` evaluation rows, so that candidate comparisons share samples.
pub fn batch_candidate_scores(
    model: &FansModel,
    data: &Dataset,
    target: usize,
    base_set: &[usize],
    candidates: &[usize],
    k: usize,
    seed: u64,
) -> Result<std::collections::BTreeMap<usize, EntropyEstimate>> {
    for &c in candidates {
        if base_set.contains(&c) || c == target {
            return Err(CoreError::InvalidParameter {
                name: "candidates",
                reason: format!("candidate {c} overlaps base set or target"),
            });
        }
    }
    let idx = eval_indices(data.n(), k, seed)?;
    let rows = gather_rows(&data.data, &idx);
    let mut out = std::collections::BTreeMap::new();
    for &c in candidates {
        let mut cond: Vec<usize> = base_set.to_vec();
        cond.push(c);
        let est = estimate_on_rows(model, &rows, target, &cond)?;
        out.insert(c, est);
    }
    Ok(out)
}
