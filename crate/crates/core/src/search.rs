//! Greedy grow/shrink Markov boundary search with symmetry correction.
//!
//! The growing phase repeatedly adds the candidate minimizing
//! `H(target | MB ∪ {X_m})`; a drop larger than ε_g resets the patience
//! counter, otherwise patience increments, and the chosen candidate is added
//! either way. The shrinking phase removes the member whose deletion costs
//! the least until that cost exceeds ε_s. Targets are searched independently
//! and in parallel; results are deterministic for a fixed seed regardless of
//! the worker count.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::estimator::{estimate_on_rows, eval_indices, gather_rows};
use crate::flow::FansModel;
use crate::gauss::{gaussian_cond_entropy, sample_covariance, CovMatrix};
use crate::synth::Dataset;

/// Conditional-entropy oracle used by the search. Implementations must be
/// deterministic for fixed inputs within a run.
pub trait Scorer: Sync {
    fn d(&self) -> usize;
    /// `H(target | cond)` in nats; `cond` is duplicate-free and excludes the
    /// target.
    fn cond_entropy(&self, target: usize, cond: &[usize]) -> Result<f64>;
    /// Largest `{T} ∪ S` the scorer can evaluate, when bounded.
    fn max_observed_subset(&self) -> Option<usize> {
        None
    }
    fn kind(&self) -> &'static str;
}

/// Closed-form Gaussian scorer over a covariance matrix (Eq.-1 path).
pub struct GaussianScorer {
    cov: CovMatrix,
}

impl GaussianScorer {
    pub fn from_covariance(cov: CovMatrix) -> Self {
        GaussianScorer { cov }
    }

    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        Ok(GaussianScorer {
            cov: sample_covariance(dataset)?,
        })
    }

    pub fn covariance(&self) -> &CovMatrix {
        &self.cov
    }
}

impl Scorer for GaussianScorer {
    fn d(&self) -> usize {
        self.cov.d()
    }

    fn cond_entropy(&self, target: usize, cond: &[usize]) -> Result<f64> {
        gaussian_cond_entropy(&self.cov, target, cond)
    }

    fn kind(&self) -> &'static str {
        "gaussian"
    }
}

/// Monte-Carlo scorer over a trained flow. The evaluation rows are drawn
/// once at construction (common random numbers across every query of the
/// run).
pub struct FansScorer {
    model: FansModel,
    rows: Array2<f64>,
}

impl FansScorer {
    pub fn new(model: FansModel, dataset: &Dataset, k: usize, seed: u64) -> Result<Self> {
        if dataset.d() != model.config().d {
            return Err(CoreError::InvalidConfig(format!(
                "dataset has {} variables, model d={}",
                dataset.d(),
                model.config().d
            )));
        }
        let idx = eval_indices(dataset.n(), k, seed)?;
        let rows = gather_rows(&dataset.data, &idx);
        Ok(FansScorer { model, rows })
    }
}

impl Scorer for FansScorer {
    fn d(&self) -> usize {
        self.model.config().d
    }

    fn cond_entropy(&self, target: usize, cond: &[usize]) -> Result<f64> {
        Ok(estimate_on_rows(&self.model, &self.rows, target, cond)?.value)
    }

    fn max_observed_subset(&self) -> Option<usize> {
        Some(self.model.config().m)
    }

    fn kind(&self) -> &'static str {
        "fans"
    }
}

/// Wrapper that counts scorer calls; used to assert complexity bounds.
pub struct CountingScorer<'a, S: Scorer> {
    inner: &'a S,
    calls: AtomicUsize,
}

impl<'a, S: Scorer> CountingScorer<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        CountingScorer {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<S: Scorer> Scorer for CountingScorer<'_, S> {
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn cond_entropy(&self, target: usize, cond: &[usize]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.cond_entropy(target, cond)
    }

    fn max_observed_subset(&self) -> Option<usize> {
        self.inner.max_observed_subset()
    }

    fn kind(&self) -> &'static str {
        self.inner.kind()
    }
}

/// How the per-target boundaries are reconciled into a symmetric relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryRule {
    Union,
    Intersection,
    None,
}

/// Search hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Growing stop threshold ε_g.
    pub eps_grow: f64,
    /// Shrinking stop threshold ε_s.
    pub eps_shrink: f64,
    /// Patience coefficient ρ.
    pub patience: usize,
    /// Subset-size cap M.
    pub max_subset: usize,
    /// Monte-Carlo sample count K (flow scorer only).
    pub mc_samples: usize,
    pub symmetry_rule: SymmetryRule,
    pub seed: u64,
}

impl SearchConfig {
    /// Defaults for sparse graphs: ε_g = 0.005, ε_s = 0.002, ρ = 15
    /// (50 from d = 5000), K = 1000, union symmetry.
    pub fn sparse_defaults(d: usize) -> Self {
        SearchConfig {
            eps_grow: 0.005,
            eps_shrink: 0.002,
            patience: if d >= 5000 { 50 } else { 15 },
            max_subset: d,
            mc_samples: 1000,
            symmetry_rule: SymmetryRule::Union,
            seed: 0,
        }
    }

    /// Dense-graph thresholds: ε_g = ε_s = 0.001.
    pub fn dense_defaults(d: usize) -> Self {
        SearchConfig {
            eps_grow: 0.001,
            eps_shrink: 0.001,
            ..SearchConfig::sparse_defaults(d)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.eps_grow < 0.0 || self.eps_shrink < 0.0 {
            return Err(CoreError::InvalidParameter {
                name: "eps",
                reason: "thresholds must be non-negative".into(),
            });
        }
        if self.max_subset < 1 {
            return Err(CoreError::InvalidParameter {
                name: "max_subset",
                reason: "M must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Per-target search outcome: the ranked members plus both phase traces
/// (`(variable, entropy-after)` pairs). Members appended later by union
/// symmetry correction appear in `members` but not in the traces.
#[derive(Debug, Clone, PartialEq)]
pub struct MbResult {
    pub target: usize,
    pub members: Vec<usize>,
    pub grow_trace: Vec<(usize, f64)>,
    pub shrink_trace: Vec<(usize, f64)>,
}

fn scorer_err(target: usize, candidate: Option<usize>, e: CoreError) -> CoreError {
    CoreError::ScorerFailed {
        target,
        candidate,
        source: Box::new(e),
    }
}

/// Growing phase: returns the inflated boundary MB⁺ in insertion order with
/// its trace.
///
/// Patience works like early stopping: after the last addition whose
/// entropy drop exceeded ε_g, up to ρ+1 further candidates are explored
/// (each added to the working set so deeper subsets get scored), and when
/// no drop resumes the search rolls back to the best point seen. The
/// returned MB⁺ is therefore the improving prefix; exploration beyond it
/// shows up only in the scorer-call count.
pub fn grow<S: Scorer>(
    target: usize,
    scorer: &S,
    cfg: &SearchConfig,
    d: usize,
) -> Result<(Vec<usize>, Vec<(usize, f64)>)> {
    cfg.validate()?;
    if target >= d {
        return Err(CoreError::IndexOutOfRange { index: target, d });
    }
    let m_eff = cfg
        .max_subset
        .min(scorer.max_observed_subset().unwrap_or(usize::MAX));
    let cap = m_eff.saturating_sub(1).min(d.saturating_sub(1));
    let mut members: Vec<usize> = Vec::new();
    let mut trace: Vec<(usize, f64)> = Vec::new();
    if cap == 0 {
        return Ok((members, trace));
    }
    let mut patience = 0usize;
    let mut kept = 0usize;
    let mut h_cur = scorer
        .cond_entropy(target, &[])
        .map_err(|e| scorer_err(target, None, e))?;
    loop {
        if patience > cfg.patience || members.len() >= cap {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut cond: Vec<usize> = members.clone();
        cond.push(0);
        for c in 0..d {
            if c == target || members.contains(&c) {
                continue;
            }
            *cond.last_mut().unwrap() = c;
            let h = scorer
                .cond_entropy(target, &cond)
                .map_err(|e| scorer_err(target, Some(c), e))?;
            // Ascending candidate order plus strict `<` implements the
            // lowest-index tie break.
            if best.map_or(true, |(_, hb)| h < hb) {
                best = Some((c, h));
            }
        }
        let Some((x_m, h_new)) = best else {
            break;
        };
        if h_cur - h_new > cfg.eps_grow {
            patience = 0;
            kept = members.len() + 1;
        } else {
            patience += 1;
        }
        members.push(x_m);
        trace.push((x_m, h_new));
        h_cur = h_new;
    }
    members.truncate(kept);
    trace.truncate(kept);
    Ok((members, trace))
}

/// Shrinking phase: removes the member whose deletion least increases the
/// entropy while that increase stays within ε_s. Returns the surviving
/// members (growing-phase order preserved) and the removal trace.
pub fn shrink<S: Scorer>(
    mb_plus: &[usize],
    target: usize,
    scorer: &S,
    cfg: &SearchConfig,
) -> Result<(Vec<usize>, Vec<(usize, f64)>)> {
    cfg.validate()?;
    let mut members: Vec<usize> = mb_plus.to_vec();
    let mut trace: Vec<(usize, f64)> = Vec::new();
    if members.is_empty() {
        return Ok((members, trace));
    }
    let sorted = |v: &[usize]| {
        let mut s = v.to_vec();
        s.sort_unstable();
        s
    };
    let mut h_cur = scorer
        .cond_entropy(target, &sorted(&members))
        .map_err(|e| scorer_err(target, None, e))?;
    while !members.is_empty() {
        let mut best: Option<(usize, usize, f64)> = None; // (pos, var, h_without)
        for (pos, &m) in members.iter().enumerate() {
            let mut without = members.clone();
            without.remove(pos);
            let h = scorer
                .cond_entropy(target, &sorted(&without))
                .map_err(|e| scorer_err(target, Some(m), e))?;
            let better = match best {
                None => true,
                Some((_, bv, bh)) => h < bh || (h == bh && m < bv),
            };
            if better {
                best = Some((pos, m, h));
            }
        }
        let (pos, var, h_without) = best.expect("members nonempty");
        let delta = h_without - h_cur;
        if delta > cfg.eps_shrink {
            break;
        }
        members.remove(pos);
        trace.push((var, h_without));
        h_cur = h_without;
    }
    Ok((members, trace))
}

/// Enforces `j ∈ MB(i) ⇔ i ∈ MB(j)` over ranked member lists. Union appends
/// missing counterparts at rank end (ascending); intersection drops
/// one-sided members; `None` is the identity.
pub fn symmetry_correct(
    mb_map: &BTreeMap<usize, Vec<usize>>,
    rule: SymmetryRule,
) -> BTreeMap<usize, Vec<usize>> {
    match rule {
        SymmetryRule::None => mb_map.clone(),
        SymmetryRule::Union => {
            let mut out = mb_map.clone();
            let keys: Vec<usize> = mb_map.keys().copied().collect();
            for &i in &keys {
                for &j in &keys {
                    if mb_map[&j].contains(&i) {
                        let entry = out.get_mut(&i).expect("key present");
                        if !entry.contains(&j) {
                            entry.push(j);
                        }
                    }
                }
            }
            out
        }
        SymmetryRule::Intersection => {
            let mut out = BTreeMap::new();
            for (&i, members) in mb_map {
                let kept: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&j| mb_map.get(&j).is_some_and(|mj| mj.contains(&i)))
                    .collect();
                out.insert(i, kept);
            }
            out
        }
    }
}

/// Runs grow + shrink for every target (in parallel across targets), then
/// applies the configured symmetry correction to the member lists.
pub fn discover_all<S: Scorer>(
    scorer: &S,
    cfg: &SearchConfig,
    workers: usize,
) -> Result<BTreeMap<usize, MbResult>> {
    cfg.validate()?;
    let d = scorer.d();
    let run = |target: usize| -> Result<MbResult> {
        let (mb_plus, grow_trace) = grow(target, scorer, cfg, d)?;
        let (members, shrink_trace) = shrink(&mb_plus, target, scorer, cfg)?;
        Ok(MbResult {
            target,
            members,
            grow_trace,
            shrink_trace,
        })
    };
    let outcomes: Vec<Result<MbResult>> = if workers <= 1 {
        (0..d).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CoreError::InvalidParameter {
                name: "workers",
                reason: e.to_string(),
            })?;
        pool.install(|| (0..d).into_par_iter().map(run).collect())
    };
    let mut failures = Vec::new();
    let mut results = BTreeMap::new();
    for (t, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(res) => {
                results.insert(t, res);
            }
            Err(e) => failures.push((t, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(CoreError::DiscoveryFailed { failures });
    }
    let member_map: BTreeMap<usize, Vec<usize>> = results
        .iter()
        .map(|(&t, r)| (t, r.members.clone()))
        .collect();
    let corrected = symmetry_correct(&member_map, cfg.symmetry_rule);
    for (t, members) in corrected {
        results.get_mut(&t).expect("target present").members = members;
    }
    Ok(results)
}

/// A completed discovery run plus everything needed to serialize it.
#[derive(Debug, Clone)]
pub struct MbRun {
    pub names: Vec<String>,
    pub scorer_kind: String,
    pub config: SearchConfig,
    pub results: BTreeMap<usize, MbResult>,
}

impl MbRun {
    /// Member lists re-keyed by variable index.
    pub fn member_map(&self) -> BTreeMap<usize, Vec<usize>> {
        self.results
            .iter()
            .map(|(&t, r)| (t, r.members.clone()))
            .collect()
    }
}

/// Writes the MB result file: a JSON map from variable name to the ranked
/// member names, plus a metadata block (names, scorer kind, seed, config
/// echo, per-target entropy traces).
pub fn write_mb_json(run: &MbRun, path: &Path) -> Result<()> {
    let name_of = |i: usize| run.names[i].clone();
    let mut boundaries = serde_json::Map::new();
    let mut traces = serde_json::Map::new();
    for (&t, res) in &run.results {
        let members: Vec<String> = res.members.iter().map(|&m| name_of(m)).collect();
        boundaries.insert(name_of(t), serde_json::json!(members));
        let grow: Vec<serde_json::Value> = res
            .grow_trace
            .iter()
            .map(|&(v, h)| serde_json::json!([name_of(v), h]))
            .collect();
        let shrink: Vec<serde_json::Value> = res
            .shrink_trace
            .iter()
            .map(|&(v, h)| serde_json::json!([name_of(v), h]))
            .collect();
        traces.insert(
            name_of(t),
            serde_json::json!({ "grow": grow, "shrink": shrink }),
        );
    }
    let doc = serde_json::json!({
        "markov_boundaries": boundaries,
        "metadata": {
            "names": run.names,
            "scorer": run.scorer_kind,
            "seed": run.config.seed,
            "config": run.config,
            "traces": traces,
        }
    });
    let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    let mut f =
        std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Reads an MB result file back. Traces are restored when present.
pub fn read_mb_json(path: &Path) -> Result<MbRun> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(&p, e))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CoreError::malformed(&p, e.to_string()))?;
    let meta = &doc["metadata"];
    let names: Vec<String> = serde_json::from_value(meta["names"].clone())
        .map_err(|e| CoreError::malformed(&p, format!("bad names: {e}")))?;
    let index_of = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CoreError::malformed(&p, format!("unknown variable {name:?}")))
    };
    let scorer_kind = meta["scorer"].as_str().unwrap_or("unknown").to_string();
    let config: SearchConfig = serde_json::from_value(meta["config"].clone())
        .map_err(|e| CoreError::malformed(&p, format!("bad config: {e}")))?;
    let boundaries = doc["markov_boundaries"]
        .as_object()
        .ok_or_else(|| CoreError::malformed(&p, "missing markov_boundaries map"))?;
    let mut results = BTreeMap::new();
    for (name, members) in boundaries {
        let t = index_of(name)?;
        let member_names: Vec<String> = serde_json::from_value(members.clone())
            .map_err(|e| CoreError::malformed(&p, format!("bad member list: {e}")))?;
        let mut member_ids = Vec::with_capacity(member_names.len());
        for m in &member_names {
            member_ids.push(index_of(m)?);
        }
        let mut res = MbResult {
            target: t,
            members: member_ids,
            grow_trace: Vec::new(),
            shrink_trace: Vec::new(),
        };
        if let Some(tr) = meta["traces"].get(name) {
            for phase in ["grow", "shrink"] {
                if let Some(arr) = tr[phase].as_array() {
                    let dst = if phase == "grow" {
                        &mut res.grow_trace
                    } else {
                        &mut res.shrink_trace
                    };
                    for pair in arr {
                        let v = index_of(pair[0].as_str().unwrap_or_default())?;
                        let h = pair[1].as_f64().unwrap_or(f64::NAN);
                        dst.push((v, h));
                    }
                }
            }
        }
        results.insert(t, res);
    }
    Ok(MbRun {
        names,
        scorer_kind,
        config,
        results,
    })
}
