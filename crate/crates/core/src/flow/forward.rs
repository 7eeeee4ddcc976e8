//! Conditioner forward pass, masked log-likelihood, and the fused
//! forward/backward used by training.
//!
//! The conditioner is a tanh MLP whose weights are multiplied by the
//! subset's connectivity masks at use time. Stages are composed without
//! permuting the variable order, so the joint Jacobian stays triangular
//! under π_S across the whole stack.

use ndarray::{Array1, Array2, Axis};

use crate::error::{CoreError, Result};

use super::dsf::{dsf_backward, dsf_forward, DsfCache};
use super::masks::{build_masks, build_subset_order, mask_to_subset, MaskSet};
use super::{FansConfig, FansModel, StageParams};

pub(crate) const LOG_2PI: f64 = 1.8378770664093453;

/// Post-activation values per layer plus the head matrix, for one stage.
pub(crate) struct StageForward {
    pub acts: Vec<Array2<f64>>, // hidden_layers × (B × H)
    pub heads: Array2<f64>,     // B × P
}

pub(crate) fn stage_forward(
    stage: &StageParams,
    masks: &MaskSet,
    x: &Array2<f64>,
) -> StageForward {
    let w_in_eff = &stage.w_in * &masks.input;
    let mut a = x.dot(&w_in_eff.t()) + &stage.b_in;
    a.mapv_inplace(f64::tanh);
    let mut acts = vec![a];
    for (w, b) in stage.w_hid.iter().zip(&stage.b_hid) {
        let w_eff = w * &masks.hidden[acts.len() - 1];
        let mut nxt = acts.last().unwrap().dot(&w_eff.t()) + b;
        nxt.mapv_inplace(f64::tanh);
        acts.push(nxt);
    }
    let w_out_eff = &stage.w_out * &masks.output;
    let heads = acts.last().unwrap().dot(&w_out_eff.t()) + &stage.b_out;
    StageForward { acts, heads }
}

/// Head parameters `(w̃, ã, b)` for every subset variable, from the first
/// stage's conditioner. `x` must be zero at masked-out positions. Slice a
/// variable's heads out of the result with [`FansConfig::head_ranges`].
pub fn conditioner_forward(
    model: &FansModel,
    x: &Array1<f64>,
    masks: &MaskSet,
) -> Result<Array1<f64>> {
    let config = model.config();
    if x.len() != config.d {
        return Err(CoreError::InvalidConfig(format!(
            "input has {} entries, model d={}",
            x.len(),
            config.d
        )));
    }
    if masks.input.dim() != (config.hidden_width(), config.d) {
        return Err(CoreError::InvalidConfig(
            "mask shape does not match model configuration".into(),
        ));
    }
    let row = x.view().insert_axis(Axis(0)).to_owned();
    let fwd = stage_forward(&model.stages[0], masks, &row);
    Ok(fwd.heads.row(0).to_owned())
}

struct SampleDsf {
    ld: f64,
    cache: DsfCache,
}

/// Runs one stage's transformer over the batch for the subset variables.
/// Returns per-sample caches and the next stage input (masked u values).
fn stage_transform(
    config: &FansConfig,
    masks: &MaskSet,
    x: &Array2<f64>,
    heads: &Array2<f64>,
) -> (Vec<Vec<SampleDsf>>, Array2<f64>) {
    let b = x.nrows();
    let mut next = Array2::<f64>::zeros((b, config.d));
    let mut all = Vec::with_capacity(b);
    for bi in 0..b {
        let hrow = heads.row(bi);
        let slice = hrow.as_slice().expect("row of standard-layout matrix");
        let mut row = Vec::with_capacity(masks.subset_vars.len());
        for &var in &masks.subset_vars {
            let (wr, ar, br) = config.head_ranges(var);
            let (u, ld, cache) = dsf_forward(x[(bi, var)], &slice[wr], &slice[ar], &slice[br]);
            next[(bi, var)] = u;
            row.push(SampleDsf { ld, cache });
        }
        all.push(row);
    }
    (all, next)
}

/// Mean masked log-likelihood of a batch under a binary subset mask:
/// `1/B Σ_b Σ_{i∈S} [ log N(u_i; 0, 1) + logderiv_i ]` with `x ⊙ M_S` as
/// input. Positions outside S contribute nothing.
pub fn masked_log_likelihood(model: &FansModel, batch: &Array2<f64>, mask: &[u8]) -> Result<f64> {
    let config = model.config();
    if batch.nrows() == 0 {
        return Err(CoreError::InvalidDataset("empty batch".into()));
    }
    if batch.ncols() != config.d || mask.len() != config.d {
        return Err(CoreError::InvalidConfig(format!(
            "batch/mask dimension mismatch: batch {}x{}, mask {}, d={}",
            batch.nrows(),
            batch.ncols(),
            mask.len(),
            config.d
        )));
    }
    let subset = mask_to_subset(mask);
    if subset.is_empty() {
        return Ok(0.0);
    }
    let order = build_subset_order(&subset, config.d)?;
    let masks = build_masks(&order, config)?;
    let mut x = apply_mask(batch, mask);
    let mut total = 0.0;
    for stage in &model.stages {
        let fwd = stage_forward(stage, &masks, &x);
        let (dsfs, next) = stage_transform(config, &masks, &x, &fwd.heads);
        for row in &dsfs {
            for s in row {
                total += s.ld;
            }
        }
        x = next;
    }
    // Base density on the final u values of the subset coordinates.
    for bi in 0..x.nrows() {
        for &var in &masks.subset_vars {
            let u = x[(bi, var)];
            total += -0.5 * u * u - 0.5 * LOG_2PI;
        }
    }
    let ll = total / batch.nrows() as f64;
    if !ll.is_finite() {
        return Err(CoreError::NonFiniteLoss {
            mask: mask.to_vec(),
        });
    }
    Ok(ll)
}

fn apply_mask(batch: &Array2<f64>, mask: &[u8]) -> Array2<f64> {
    let mut x = batch.clone();
    for (j, &m) in mask.iter().enumerate() {
        if m == 0 {
            x.column_mut(j).fill(0.0);
        }
    }
    x
}

/// Per-sample log|det Jacobian| of the subset transform:
/// `Σ_{i∈subset} logderiv_i` summed across stages. This is the inner sum of
/// the Monte-Carlo entropy estimator. `subset` must be nonempty.
pub fn forward_logderivs(
    model: &FansModel,
    rows: &Array2<f64>,
    subset: &[usize],
) -> Result<Vec<f64>> {
    let config = model.config();
    let order = build_subset_order(subset, config.d)?;
    let masks = build_masks(&order, config)?;
    let mut mask = vec![0u8; config.d];
    for &v in subset {
        mask[v] = 1;
    }
    let mut x = apply_mask(rows, &mask);
    let mut sums = vec![0.0; rows.nrows()];
    for stage in &model.stages {
        let fwd = stage_forward(stage, &masks, &x);
        let (dsfs, next) = stage_transform(config, &masks, &x, &fwd.heads);
        for (bi, row) in dsfs.iter().enumerate() {
            for s in row {
                sums[bi] += s.ld;
            }
        }
        x = next;
    }
    Ok(sums)
}

/// Gradient accumulators mirroring [`StageParams`].
pub(crate) struct StageGrads {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub w_hid: Vec<Array2<f64>>,
    pub b_hid: Vec<Array1<f64>>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl StageGrads {
    fn zeros_like(s: &StageParams) -> Self {
        StageGrads {
            w_in: Array2::zeros(s.w_in.dim()),
            b_in: Array1::zeros(s.b_in.len()),
            w_hid: s.w_hid.iter().map(|w| Array2::zeros(w.dim())).collect(),
            b_hid: s.b_hid.iter().map(|b| Array1::zeros(b.len())).collect(),
            w_out: Array2::zeros(s.w_out.dim()),
            b_out: Array1::zeros(s.b_out.len()),
        }
    }
}

/// Flattens stage gradients in the canonical parameter order.
fn grads_to_vector(grads: &[StageGrads]) -> Vec<f64> {
    let mut v = Vec::new();
    for g in grads {
        v.extend(g.w_in.iter());
        v.extend(g.b_in.iter());
        for (w, b) in g.w_hid.iter().zip(&g.b_hid) {
            v.extend(w.iter());
            v.extend(b.iter());
        }
        v.extend(g.w_out.iter());
        v.extend(g.b_out.iter());
    }
    v
}

/// The latent coordinates of the subset transform: u values per sample at
/// the subset columns (zero elsewhere), after all stages.
pub fn forward_latents(
    model: &FansModel,
    rows: &Array2<f64>,
    subset: &[usize],
) -> Result<Array2<f64>> {
    let config = model.config();
    let order = build_subset_order(subset, config.d)?;
    let masks = build_masks(&order, config)?;
    let mut mask = vec![0u8; config.d];
    for &v in subset {
        mask[v] = 1;
    }
    let mut x = apply_mask(rows, &mask);
    for stage in &model.stages {
        let fwd = stage_forward(stage, &masks, &x);
        let (_, next) = stage_transform(config, &masks, &x, &fwd.heads);
        x = next;
    }
    Ok(x)
}

/// Mean masked log-likelihood and its gradient with respect to every
/// parameter, in the canonical flat order (see
/// [`FansModel::param_vector`]).
pub fn masked_log_likelihood_grad(
    model: &FansModel,
    batch: &Array2<f64>,
    mask: &[u8],
) -> Result<(f64, Vec<f64>)> {
    let config = *model.config();
    let subset = mask_to_subset(mask);
    let b = batch.nrows();
    if b == 0 {
        return Err(CoreError::InvalidDataset("empty batch".into()));
    }
    let mut grads: Vec<StageGrads> = model.stages.iter().map(StageGrads::zeros_like).collect();
    if subset.is_empty() {
        return Ok((0.0, grads_to_vector(&grads)));
    }
    let order = build_subset_order(&subset, config.d)?;
    let masks = build_masks(&order, &config)?;

    // Forward, keeping per-stage inputs, activations and transformer caches.
    let mut stage_inputs: Vec<Array2<f64>> = Vec::with_capacity(model.stages.len());
    let mut stage_fwds: Vec<StageForward> = Vec::with_capacity(model.stages.len());
    let mut stage_dsfs: Vec<Vec<Vec<SampleDsf>>> = Vec::with_capacity(model.stages.len());
    let mut x = apply_mask(batch, mask);
    let mut total = 0.0;
    for stage in &model.stages {
        let fwd = stage_forward(stage, &masks, &x);
        let (dsfs, next) = stage_transform(&config, &masks, &x, &fwd.heads);
        for row in &dsfs {
            for s in row {
                total += s.ld;
            }
        }
        stage_inputs.push(x);
        stage_fwds.push(fwd);
        stage_dsfs.push(dsfs);
        x = next;
    }
    for bi in 0..b {
        for &var in &masks.subset_vars {
            let u = x[(bi, var)];
            total += -0.5 * u * u - 0.5 * LOG_2PI;
        }
    }
    let ll = total / b as f64;
    if !ll.is_finite() {
        return Err(CoreError::NonFiniteLoss {
            mask: mask.to_vec(),
        });
    }

    // Backward. `du` carries ∂(total LL)/∂u^{(stage)} per sample/variable.
    let mut du = Array2::<f64>::zeros((b, config.d));
    for bi in 0..b {
        for &var in &masks.subset_vars {
            du[(bi, var)] = -x[(bi, var)];
        }
    }
    let k = config.dsf_dim;
    for (si, stage) in model.stages.iter().enumerate().rev() {
        let fwd = &stage_fwds[si];
        let dsfs = &stage_dsfs[si];
        let g = &mut grads[si];

        // Transformer backward: heads gradient plus direct x contribution.
        let mut dheads = Array2::<f64>::zeros((b, config.output_width()));
        let mut dx_dsf = Array2::<f64>::zeros((b, config.d));
        for bi in 0..b {
            let mut hrow = dheads.row_mut(bi);
            let slice = hrow.as_slice_mut().expect("row of standard-layout matrix");
            for (j, &var) in masks.subset_vars.iter().enumerate() {
                let sd = &dsfs[bi][j];
                let (wr, _, _) = config.head_ranges(var);
                let (_, rest) = slice.split_at_mut(wr.start);
                let (gw, rest) = rest.split_at_mut(k);
                let (ga, rest) = rest.split_at_mut(k);
                let gb = &mut rest[..k];
                dx_dsf[(bi, var)] = dsf_backward(&sd.cache, du[(bi, var)], 1.0, gw, ga, gb);
            }
        }

        // Conditioner backward through masked dense layers.
        let w_out_eff = &stage.w_out * &masks.output;
        let last = fwd.acts.len() - 1;
        g.w_out += &(dheads.t().dot(&fwd.acts[last]) * &masks.output);
        g.b_out += &dheads.sum_axis(Axis(0));
        let mut dh = dheads.dot(&w_out_eff);
        for l in (0..fwd.acts.len()).rev() {
            let act = &fwd.acts[l];
            let da = dh * (1.0 - act * act);
            let below: &Array2<f64> = if l == 0 {
                &stage_inputs[si]
            } else {
                &fwd.acts[l - 1]
            };
            if l == 0 {
                g.w_in += &(da.t().dot(below) * &masks.input);
                g.b_in += &da.sum_axis(Axis(0));
                let w_in_eff = &stage.w_in * &masks.input;
                dh = da.dot(&w_in_eff);
            } else {
                let m = &masks.hidden[l - 1];
                g.w_hid[l - 1] += &(da.t().dot(below) * m);
                g.b_hid[l - 1] += &da.sum_axis(Axis(0));
                let w_eff = &stage.w_hid[l - 1] * m;
                dh = da.dot(&w_eff);
            }
        }
        // dh is now ∂L/∂(stage input) via the conditioner path; add the
        // transformer's direct x path to form ∂L/∂u^{(stage-1)}.
        du = dh + dx_dsf;
    }

    let scale = 1.0 / b as f64;
    let mut flat = grads_to_vector(&grads);
    for v in &mut flat {
        *v *= scale;
    }
    Ok((ll, flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn toy_model(d: usize, flow_layers: usize, hidden_layers: usize, seed: u64) -> FansModel {
        let cfg = FansConfig {
            m: d,
            flow_layers,
            hidden_layers,
            ..FansConfig::defaults_for(d)
        };
        FansModel::init(cfg, seed).unwrap()
    }

    fn random_batch(b: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = substream(seed, "fwd_test");
        Array2::from_shape_fn((b, d), |_| rng.gen_range(-1.5..1.5))
    }

    #[test]
    fn all_zero_input_gives_bias_path_heads() {
        let model = toy_model(5, 1, 1, 0);
        let order = build_subset_order(&[0, 2, 3], 5).unwrap();
        let masks = build_masks(&order, model.config()).unwrap();
        let heads = conditioner_forward(&model, &Array1::zeros(5), &masks).unwrap();
        // Hidden biases are zero at init, so tanh(0) = 0 and the heads
        // reduce to b_out exactly.
        for (i, &v) in heads.iter().enumerate() {
            assert_eq!(v, model.stages[0].b_out[i], "head {i}");
        }
    }

    #[test]
    fn heads_invariant_to_later_and_masked_positions() {
        let mut rng = substream(8, "leak_test");
        for trial in 0..40u64 {
            let d = rng.gen_range(3..9usize);
            let model = toy_model(d, 1, 1 + (trial % 2) as usize, 100 + trial);
            let size = rng.gen_range(1..=d);
            let mut vars: Vec<usize> = (0..d).collect();
            vars.shuffle(&mut rng);
            vars.truncate(size);
            vars.sort_unstable();
            let order = build_subset_order(&vars, d).unwrap();
            let masks = build_masks(&order, model.config()).unwrap();
            let mut x = Array1::zeros(d);
            for &v in &vars {
                x[v] = rng.gen_range(-1.0..1.0);
            }
            let base = conditioner_forward(&model, &x, &masks).unwrap();
            // Perturbing a subset position must leave heads at or before it
            // bit-identical.
            for (j, &var) in vars.iter().enumerate() {
                let mut xp = x.clone();
                xp[var] += 0.731;
                let pert = conditioner_forward(&model, &xp, &masks).unwrap();
                for (jj, &v2) in vars.iter().enumerate().take(j + 1) {
                    let (wr, ar, br) = model.config().head_ranges(v2);
                    for idx in wr.chain(ar).chain(br) {
                        assert_eq!(base[idx], pert[idx], "leak into head {jj} from {j}");
                    }
                }
            }
            // Perturbing a masked-out coordinate must leave every head
            // unchanged.
            if let Some(out) = (0..d).find(|v| !vars.contains(v)) {
                let mut xp = x.clone();
                xp[out] = 3.3;
                let pert = conditioner_forward(&model, &xp, &masks).unwrap();
                assert_eq!(base, pert);
            }
        }
    }

    #[test]
    fn masked_ll_singleton_equals_standalone_dsf() {
        // Under a singleton mask the objective is the 1-D flow likelihood of
        // that column with bias-path heads.
        let model = toy_model(4, 1, 1, 3);
        let batch = random_batch(16, 4, 4);
        let mask = [0u8, 0, 1, 0];
        let ll = masked_log_likelihood(&model, &batch, &mask).unwrap();
        let (wr, ar, br) = model.config().head_ranges(2);
        let b_out = &model.stages[0].b_out;
        let wt: Vec<f64> = wr.map(|i| b_out[i]).collect();
        let at: Vec<f64> = ar.map(|i| b_out[i]).collect();
        let bb: Vec<f64> = br.map(|i| b_out[i]).collect();
        let mut expected = 0.0;
        for bi in 0..batch.nrows() {
            let (u, ld) = super::super::dsf::dsf_transform(batch[(bi, 2)], &wt, &at, &bb);
            expected += -0.5 * u * u - 0.5 * LOG_2PI + ld;
        }
        expected /= batch.nrows() as f64;
        approx::assert_abs_diff_eq!(ll, expected, epsilon = 1e-12);
    }

    #[test]
    fn masked_ll_finite_on_untrained_model() {
        let model = toy_model(6, 2, 2, 9);
        let batch = random_batch(32, 6, 10);
        let mask = [1u8, 1, 0, 1, 0, 1];
        let ll = masked_log_likelihood(&model, &batch, &mask).unwrap();
        assert!(ll.is_finite());
    }

    #[test]
    fn loss_and_grad_matches_finite_differences() {
        // Central-difference check over parameters of a d=3 toy model,
        // including stacked flow layers and two hidden layers.
        for (fl, hl) in [(1usize, 1usize), (2, 2)] {
            let mut model = toy_model(3, fl, hl, 21);
            let batch = random_batch(5, 3, 22);
            let mask = [1u8, 0, 1];
            let (_, grad) = masked_log_likelihood_grad(&model, &batch, &mask).unwrap();
            let params = model.param_vector();
            let h = 1e-5;
            let mut rng = substream(23, "fd_pick");
            for _ in 0..120 {
                let i = rng.gen_range(0..params.len());
                let mut pp = params.clone();
                pp[i] += h;
                model.set_param_vector(&pp).unwrap();
                let lp = masked_log_likelihood(&model, &batch, &mask).unwrap();
                pp[i] -= 2.0 * h;
                model.set_param_vector(&pp).unwrap();
                let lm = masked_log_likelihood(&model, &batch, &mask).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(1e-3);
                assert!(
                    (grad[i] - fd).abs() / denom < 1e-4,
                    "fl={fl} hl={hl} param {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn jacobian_is_lower_triangular_under_subset_order() {
        // Perturbing x at subset position j must not change u at earlier
        // positions: the joint Jacobian is triangular under π_S.
        let mut rng = substream(31, "jac_test");
        for trial in 0..30u64 {
            let d = rng.gen_range(3..8usize);
            let model = toy_model(d, 1 + (trial % 2) as usize, 1, 200 + trial);
            let size = rng.gen_range(2..=d);
            let mut vars: Vec<usize> = (0..d).collect();
            vars.shuffle(&mut rng);
            vars.truncate(size);
            vars.sort_unstable();
            let order = build_subset_order(&vars, d).unwrap();
            let masks = build_masks(&order, model.config()).unwrap();
            let mut mask = vec![0u8; d];
            for &v in &vars {
                mask[v] = 1;
            }
            let x0 = apply_mask(&random_batch(1, d, 300 + trial), &mask);
            let u_of = |x: &Array2<f64>| {
                let mut cur = x.clone();
                for stage in &model.stages {
                    let fwd = stage_forward(stage, &masks, &cur);
                    let (_, next) = stage_transform(model.config(), &masks, &cur, &fwd.heads);
                    cur = next;
                }
                cur
            };
            let base = u_of(&x0);
            for (j, &vj) in vars.iter().enumerate() {
                let mut xp = x0.clone();
                xp[(0, vj)] += 0.37;
                let pert = u_of(&xp);
                for &vi in vars.iter().take(j) {
                    assert_eq!(base[(0, vi)], pert[(0, vi)], "upper-triangular leak");
                }
            }
        }
    }
}
