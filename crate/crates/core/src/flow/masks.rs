//! Dynamic weight masking: per-subset connectivity masks over a shared dense
//! parameter set.
//!
//! For a subset S the 1-based positions form a strictly increasing order
//! π_S. Masking happens in two steps: first only nodes whose scores belong
//! to the selected score set are connected (input/output nodes score by
//! variable position, hidden nodes carry all scores except the last subset
//! position), then connections are restricted autoregressively: into hidden
//! nodes `s_l <= s_h`, into output nodes strictly `s_l < s_h`. In compact
//! mode positions are first rescaled from d-scale to M-scale with greedy
//! collider resolution.

use ndarray::Array2;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::rng::{streams, substream};

use super::FansConfig;

/// Strictly increasing 1-based subset positions π_S.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetOrder {
    indices: Vec<usize>,
}

impl SubsetOrder {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The 0-based variable ids, ascending.
    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|&i| i - 1)
    }
}

/// Sorts a 0-based subset and converts it to 1-based positions.
pub fn build_subset_order(subset: &[usize], d: usize) -> Result<SubsetOrder> {
    if subset.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "subset",
            reason: "empty subset (S = ∅ is handled analytically by callers)".into(),
        });
    }
    let mut sorted: Vec<usize> = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != subset.len() {
        return Err(CoreError::InvalidParameter {
            name: "subset",
            reason: "duplicate variable".into(),
        });
    }
    if let Some(&max) = sorted.last() {
        if max >= d {
            return Err(CoreError::IndexOutOfRange { index: max, d });
        }
    }
    Ok(SubsetOrder {
        indices: sorted.into_iter().map(|v| v + 1).collect(),
    })
}

/// Rescales π_S from d-scale to M-scale: `i_j -> ceil((M-1) i_j / (d-1))`,
/// then resolves colliders by the two-sided greedy adjustment. The result is
/// strictly increasing with all but the last element inside `[1, M-1]`.
pub fn compact_rescale(order: &SubsetOrder, m: usize, d: usize) -> Result<SubsetOrder> {
    let n = order.len();
    if n > m {
        return Err(CoreError::InvalidParameter {
            name: "order",
            reason: format!("subset size {n} exceeds M={m}"),
        });
    }
    if m < 2 || m > d {
        return Err(CoreError::InvalidParameter {
            name: "m",
            reason: format!("need 2 <= M <= d, got M={m}, d={d}"),
        });
    }
    if m == d {
        return Ok(order.clone());
    }
    let cap = m - 1;
    let mut v: Vec<usize> = order
        .indices()
        .iter()
        .map(|&i| div_ceil(cap * i, d - 1).max(1))
        .collect();
    // Left pass: push duplicates up, parking at the cap when no room
    // remains (keeps the sequence non-decreasing for the right pass).
    for j in 1..n {
        if v[j] <= v[j - 1] {
            v[j] = (v[j - 1] + 1).min(cap);
        }
    }
    // Right pass: pull remaining duplicates down into gaps, never below the
    // smallest value feasible at that position (values stay >= 1 and
    // strictly increasing from the left).
    for j in (0..n.saturating_sub(1)).rev() {
        if v[j] >= v[j + 1] && v[j + 1] >= j + 2 {
            v[j] = v[j + 1] - 1;
        }
    }
    // Only the last element may exceed the cap; push it up if still tied
    // after the bounded passes.
    for j in 1..n {
        if v[j] <= v[j - 1] {
            v[j] = v[j - 1] + 1;
        }
    }
    for (j, &val) in v.iter().enumerate() {
        let in_range = val >= 1 && (j + 1 == n || val <= cap);
        let increasing = j == 0 || v[j - 1] < val;
        if !in_range || !increasing {
            return Err(CoreError::InvalidParameter {
                name: "order",
                reason: format!("collider resolution failed: {v:?} (M={m}, d={d})"),
            });
        }
    }
    Ok(SubsetOrder { indices: v })
}

fn div_ceil(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Binary connectivity masks for one subset, over every layer transition of
/// the conditioner, plus the score bookkeeping used to build them.
#[derive(Debug, Clone)]
pub struct MaskSet {
    /// H×d input-to-hidden mask.
    pub input: Array2<f64>,
    /// (hidden_layers - 1) H×H hidden-to-hidden masks.
    pub hidden: Vec<Array2<f64>>,
    /// P×H hidden-to-output mask, P = d * 3 * dsf_dim.
    pub output: Array2<f64>,
    /// 0-based subset variables, ascending.
    pub subset_vars: Vec<usize>,
    /// Score assigned to each subset position (compact scale when enabled).
    pub position_scores: Vec<usize>,
    /// Score of every hidden node (identical across hidden layers).
    pub hidden_scores: Vec<usize>,
}

impl FansConfig {
    /// Range of hidden scores: `1..=d-1`, or `1..=M-1` in compact mode.
    pub fn hidden_score_range(&self) -> usize {
        if self.compact {
            self.m - 1
        } else {
            self.d - 1
        }
    }

    /// Nodes per hidden block: one node per score when non-compact, `2M`
    /// nodes in compact mode.
    pub fn hidden_block_size(&self) -> usize {
        if self.compact {
            2 * self.m
        } else {
            self.d - 1
        }
    }

    /// Total width of each hidden layer.
    pub fn hidden_width(&self) -> usize {
        self.blocks_per_hidden * self.hidden_block_size()
    }

    /// Output scalars: 3 dsf_dim-sized heads per variable.
    pub fn output_width(&self) -> usize {
        self.d * 3 * self.dsf_dim
    }

    /// Head slot ranges `(w̃, ã, b)` for a variable's output rows.
    pub fn head_ranges(
        &self,
        var: usize,
    ) -> (
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        std::ops::Range<usize>,
    ) {
        let k = self.dsf_dim;
        let base = var * 3 * k;
        (base..base + k, base + k..base + 2 * k, base + 2 * k..base + 3 * k)
    }
}

/// Deterministic hidden score assignment: scores cycle `1..=range` within
/// each block, so every block covers every score.
pub(crate) fn hidden_scores(config: &FansConfig) -> Vec<usize> {
    let range = config.hidden_score_range();
    let block = config.hidden_block_size();
    let mut scores = Vec::with_capacity(config.hidden_width());
    for _ in 0..config.blocks_per_hidden {
        for u in 0..block {
            scores.push(u % range + 1);
        }
    }
    scores
}

/// Builds the connectivity masks for a subset order (d-scale positions).
/// Compact rescaling is applied internally when the config enables it.
pub fn build_masks(order: &SubsetOrder, config: &FansConfig) -> Result<MaskSet> {
    if order.len() > config.m {
        return Err(CoreError::InvalidParameter {
            name: "order",
            reason: format!("subset size {} exceeds M={}", order.len(), config.m),
        });
    }
    if let Some(&max) = order.indices().last() {
        if max > config.d {
            return Err(CoreError::IndexOutOfRange {
                index: max - 1,
                d: config.d,
            });
        }
    }
    let scores = if config.compact {
        compact_rescale(order, config.m, config.d)?
    } else {
        order.clone()
    };
    let position_scores: Vec<usize> = scores.indices().to_vec();
    let subset_vars: Vec<usize> = order.variables().collect();
    let n = order.len();

    let h = config.hidden_width();
    let d = config.d;
    let p = config.output_width();
    let node_scores = hidden_scores(config);

    // Selected hidden scores: every subset position except the last.
    let selected: std::collections::BTreeSet<usize> =
        position_scores[..n - 1].iter().copied().collect();

    let mut input = Array2::<f64>::zeros((h, d));
    for (hi, &sh) in node_scores.iter().enumerate() {
        if !selected.contains(&sh) {
            continue;
        }
        for (j, &var) in subset_vars.iter().enumerate() {
            if position_scores[j] <= sh {
                input[(hi, var)] = 1.0;
            }
        }
    }

    let mut hidden_masks = Vec::with_capacity(config.hidden_layers.saturating_sub(1));
    for _ in 1..config.hidden_layers {
        let mut mh = Array2::<f64>::zeros((h, h));
        for (hi, &sh) in node_scores.iter().enumerate() {
            if !selected.contains(&sh) {
                continue;
            }
            for (lo, &sl) in node_scores.iter().enumerate() {
                if selected.contains(&sl) && sl <= sh {
                    mh[(hi, lo)] = 1.0;
                }
            }
        }
        hidden_masks.push(mh);
    }

    let mut output = Array2::<f64>::zeros((p, h));
    for (j, &var) in subset_vars.iter().enumerate() {
        let sv = position_scores[j];
        let (wr, ar, br) = config.head_ranges(var);
        for (lo, &sl) in node_scores.iter().enumerate() {
            if selected.contains(&sl) && sl < sv {
                for row in wr.clone().chain(ar.clone()).chain(br.clone()) {
                    output[(row, lo)] = 1.0;
                }
            }
        }
    }

    Ok(MaskSet {
        input,
        hidden: hidden_masks,
        output,
        subset_vars,
        position_scores,
        hidden_scores: node_scores,
    })
}

/// Samples a leaf mask: a subset size uniform in `[1, M]`, then a uniform
/// subset of that size, returned as a 0/1 vector of length d.
pub fn sample_leaf_mask(d: usize, m: usize, seed: u64) -> Result<Vec<u8>> {
    if m < 1 || m > d {
        return Err(CoreError::InvalidParameter {
            name: "m",
            reason: format!("need 1 <= M <= d, got M={m}, d={d}"),
        });
    }
    let mut rng = substream(seed, streams::MASK_SAMPLE);
    Ok(sample_leaf_mask_with(&mut rng, d, m))
}

/// RNG-driven variant used inside the training loop.
pub(crate) fn sample_leaf_mask_with(rng: &mut impl Rng, d: usize, m: usize) -> Vec<u8> {
    let size = rng.gen_range(1..=m);
    let mut picked = vec![0u8; d];
    // Floyd's algorithm for a uniform size-`size` subset of 0..d.
    for j in (d - size)..d {
        let t = rng.gen_range(0..=j);
        if picked[t] == 0 {
            picked[t] = 1;
        } else {
            picked[j] = 1;
        }
    }
    picked
}

pub(crate) fn mask_to_subset(mask: &[u8]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m != 0)
        .map(|(i, _)| i)
        .collect()
}
