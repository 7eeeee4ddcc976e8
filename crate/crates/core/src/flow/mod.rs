//! FANS: an any-subset masked autoregressive flow.
//!
//! One dense parameter set serves every conditioning subset: connectivity
//! masks are applied multiplicatively at forward time, so a single trained
//! model can evaluate the autoregressive decomposition of any marginal
//! `p(x_S)` and, from it, any conditional entropy. The scalar transformer is
//! a deep sigmoidal flow; the base distribution is a fixed standard normal.

mod checkpoint;
mod dsf;
mod forward;
mod masks;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use dsf::{dsf_backward, dsf_forward, dsf_transform, DsfCache, LOGIT_CLAMP};
pub use forward::{
    conditioner_forward, forward_latents, forward_logderivs, masked_log_likelihood,
    masked_log_likelihood_grad,
};
pub use masks::{
    build_masks, build_subset_order, compact_rescale, sample_leaf_mask, MaskSet, SubsetOrder,
};
pub use train::{train, TrainConfig};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::{streams, substream};

/// Architecture hyperparameters.
///
/// `output_blocks` groups the per-variable head rows for mask construction;
/// head scalars are assigned to blocks round-robin. Since a row's mask
/// depends only on its variable's score, the grouping does not change the
/// connectivity itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FansConfig {
    /// Variable count.
    pub d: usize,
    /// Maximum observed-subset size.
    pub m: usize,
    pub hidden_layers: usize,
    /// Blocks per hidden layer (α_B).
    pub blocks_per_hidden: usize,
    pub output_blocks: usize,
    /// Rescale subset positions to M-scale and shrink hidden blocks.
    pub compact: bool,
    /// Size of each of the w, a, b transformer parameter heads.
    pub dsf_dim: usize,
    /// Number of stacked conditioner+transformer stages.
    pub flow_layers: usize,
}

impl FansConfig {
    /// Defaults for a given dimension: one hidden layer with 6 blocks, DSF
    /// heads of size 4, one flow layer; `M = d-1` (min 2) for `d <= 20`,
    /// 20 for `d < 100`, 30 above; compact mode and 16 output blocks from
    /// `d >= 100`.
    pub fn defaults_for(d: usize) -> Self {
        let m = if d <= 20 {
            (d.saturating_sub(1)).clamp(2, d.max(2))
        } else if d < 100 {
            20
        } else {
            30
        };
        FansConfig {
            d,
            m,
            hidden_layers: 1,
            blocks_per_hidden: 6,
            output_blocks: if d < 100 { 20 } else { 16 },
            compact: d >= 100,
            dsf_dim: 4,
            flow_layers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(CoreError::InvalidConfig(reason));
        if self.d < 2 {
            return fail(format!("d={} must be >= 2", self.d));
        }
        if self.m < 2 || self.m > self.d {
            return fail(format!("need 2 <= M <= d, got M={}, d={}", self.m, self.d));
        }
        if self.hidden_layers < 1 {
            return fail("need at least one hidden layer".into());
        }
        if self.blocks_per_hidden < 1 {
            return fail("need at least one hidden block".into());
        }
        if self.output_blocks < 1 {
            return fail("need at least one output block".into());
        }
        if self.dsf_dim < 1 {
            return fail("dsf_dim must be >= 1".into());
        }
        if self.flow_layers < 1 {
            return fail("flow_layers must be >= 1".into());
        }
        Ok(())
    }

    /// Appendix-style batch size default: 64 below d=100, 256 above.
    pub fn default_batch_size(&self) -> usize {
        if self.d < 100 {
            64
        } else {
            256
        }
    }
}

/// One conditioner stage: dense parameters, masked at use time.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StageParams {
    pub w_in: Array2<f64>,       // H × d
    pub b_in: Array1<f64>,       // H
    pub w_hid: Vec<Array2<f64>>, // (hidden_layers - 1) × (H × H)
    pub b_hid: Vec<Array1<f64>>,
    pub w_out: Array2<f64>, // P × H
    pub b_out: Array1<f64>, // P
}

/// The trained (or initialized) flow model. Immutable during inference;
/// training takes `&mut`.
#[derive(Debug, Clone, PartialEq)]
pub struct FansModel {
    config: FansConfig,
    pub(crate) stages: Vec<StageParams>,
}

fn inv_softplus(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

impl FansModel {
    /// Initializes a model: variance-scaled uniform dense weights, head
    /// biases set so each transformer starts near the identity (w̃ small
    /// uniform, ã = softplus⁻¹(1), b = 0), output weights down-scaled so the
    /// initial log-determinant stays near zero.
    pub fn init(config: FansConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(seed, streams::INIT);
        let h = config.hidden_width();
        let d = config.d;
        let p = config.output_width();
        let k = config.dsf_dim;
        let mut stages = Vec::with_capacity(config.flow_layers);
        for _ in 0..config.flow_layers {
            let w_in = xavier(&mut rng, h, d, 1.0);
            let b_in = Array1::zeros(h);
            let mut w_hid = Vec::new();
            let mut b_hid = Vec::new();
            for _ in 1..config.hidden_layers {
                w_hid.push(xavier(&mut rng, h, h, 1.0));
                b_hid.push(Array1::zeros(h));
            }
            let w_out = xavier(&mut rng, p, h, 0.01);
            let mut b_out = Array1::zeros(p);
            for var in 0..d {
                let (wr, ar, _br) = config.head_ranges(var);
                for i in wr {
                    b_out[i] = rng.gen_range(-0.01..0.01);
                }
                for i in ar {
                    b_out[i] = inv_softplus(1.0);
                }
                debug_assert_eq!(_br.len(), k);
            }
            stages.push(StageParams {
                w_in,
                b_in,
                w_hid,
                b_hid,
                w_out,
                b_out,
            });
        }
        Ok(FansModel { config, stages })
    }

    pub fn config(&self) -> &FansConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.stages
            .iter()
            .map(|s| {
                s.w_in.len()
                    + s.b_in.len()
                    + s.w_hid.iter().map(|w| w.len()).sum::<usize>()
                    + s.b_hid.iter().map(|b| b.len()).sum::<usize>()
                    + s.w_out.len()
                    + s.b_out.len()
            })
            .sum()
    }

    /// All parameters flattened in declared order (the checkpoint order):
    /// per stage `w_in, b_in, [w_hid, b_hid].., w_out, b_out`, matrices
    /// row-major.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for s in &self.stages {
            v.extend(s.w_in.iter());
            v.extend(s.b_in.iter());
            for (w, b) in s.w_hid.iter().zip(&s.b_hid) {
                v.extend(w.iter());
                v.extend(b.iter());
            }
            v.extend(s.w_out.iter());
            v.extend(s.b_out.iter());
        }
        v
    }

    /// Writes back a flat parameter vector in the [`param_vector`] order.
    ///
    /// [`param_vector`]: FansModel::param_vector
    pub fn set_param_vector(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(CoreError::InvalidConfig(format!(
                "parameter vector has {} entries, model needs {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut it = params.iter().copied();
        let fill2 = |m: &mut Array2<f64>, it: &mut dyn Iterator<Item = f64>| {
            for v in m.iter_mut() {
                *v = it.next().expect("length checked");
            }
        };
        for s in &mut self.stages {
            fill2(&mut s.w_in, &mut it);
            for v in s.b_in.iter_mut() {
                *v = it.next().expect("length checked");
            }
            for (w, b) in s.w_hid.iter_mut().zip(&mut s.b_hid) {
                fill2(w, &mut it);
                for v in b.iter_mut() {
                    *v = it.next().expect("length checked");
                }
            }
            fill2(&mut s.w_out, &mut it);
            for v in s.b_out.iter_mut() {
                *v = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

fn xavier(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    let limit = scale * (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}
