//! Deep sigmoidal transformer: the monotone scalar map
//! `u = logit(w^T sigmoid(a x + b))` with `w = softmax(w̃)` and
//! `a = softplus(ã)`, plus its analytic log-derivative and backward pass.

/// Clamp applied to the inner convex combination before the outer logit.
pub const LOGIT_CLAMP: f64 = 1e-7;

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Intermediates cached by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct DsfCache {
    pub x: f64,
    w: Vec<f64>,
    a: Vec<f64>,
    at_sig: Vec<f64>, // σ(ã_k), the softplus derivative
    sig: Vec<f64>,    // σ(z_k)
    s: f64,           // clamped convex combination
    dd: f64,          // Σ w_k a_k σ'(z_k) = (du/dx)·s(1-s)
    clamped: bool,
}

/// Forward evaluation: returns `(u, logderiv)` where
/// `logderiv = log(du/dx)` computed analytically; `du/dx > 0` always.
pub fn dsf_transform(x: f64, w_tilde: &[f64], a_tilde: &[f64], b: &[f64]) -> (f64, f64) {
    let (u, ld, _) = dsf_forward(x, w_tilde, a_tilde, b);
    (u, ld)
}

/// Forward evaluation keeping the cache needed for [`dsf_backward`].
pub fn dsf_forward(x: f64, w_tilde: &[f64], a_tilde: &[f64], b: &[f64]) -> (f64, f64, DsfCache) {
    let k = w_tilde.len();
    debug_assert!(k == a_tilde.len() && k == b.len());
    // softmax with max-subtraction
    let wmax = w_tilde.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = w_tilde.iter().map(|&v| (v - wmax).exp()).collect();
    let wsum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= wsum;
    }
    let a: Vec<f64> = a_tilde.iter().map(|&v| softplus(v)).collect();
    let at_sig: Vec<f64> = a_tilde.iter().map(|&v| sigmoid(v)).collect();
    let sig: Vec<f64> = (0..k).map(|i| sigmoid(a[i] * x + b[i])).collect();
    let mut s = 0.0;
    let mut dd = 0.0;
    for i in 0..k {
        s += w[i] * sig[i];
        dd += w[i] * a[i] * sig[i] * (1.0 - sig[i]);
    }
    let s_raw = s;
    let s = s.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    let clamped = s != s_raw;
    let u = s.ln() - (1.0 - s).ln();
    let ld = dd.ln() - s.ln() - (1.0 - s).ln();
    (
        u,
        ld,
        DsfCache {
            x,
            w,
            a,
            at_sig,
            sig,
            s,
            dd,
            clamped,
        },
    )
}

/// Backward pass. Given upstream gradients `cu = ∂L/∂u` and
/// `cl = ∂L/∂logderiv`, accumulates parameter gradients into the head slices
/// and returns `∂L/∂x`.
pub fn dsf_backward(
    cache: &DsfCache,
    cu: f64,
    cl: f64,
    grad_w_tilde: &mut [f64],
    grad_a_tilde: &mut [f64],
    grad_b: &mut [f64],
) -> f64 {
    let k = cache.w.len();
    let s = cache.s;
    let g = 1.0 / (s * (1.0 - s));
    // ∂u/∂s = g; ∂ld/∂s = (2s-1)g; both frozen when the clamp is active.
    let cs = if cache.clamped {
        0.0
    } else {
        cu * g + cl * (2.0 * s - 1.0) * g
    };
    let cd = cl / cache.dd;
    let mut grad_w = vec![0.0; k];
    let mut dx = 0.0;
    for i in 0..k {
        let sp = cache.sig[i] * (1.0 - cache.sig[i]);
        let spp = sp * (1.0 - 2.0 * cache.sig[i]);
        grad_w[i] = cs * cache.sig[i] + cd * cache.a[i] * sp;
        // ∂L/∂z_k through both s and D
        let dz = cs * cache.w[i] * sp + cd * cache.w[i] * cache.a[i] * spp;
        let da = dz * cache.x + cd * cache.w[i] * sp;
        grad_b[i] += dz;
        grad_a_tilde[i] += da * cache.at_sig[i];
        dx += dz * cache.a[i];
    }
    // softmax Jacobian: ∂L/∂w̃_k = w_k (∂L/∂w_k - Σ_j ∂L/∂w_j w_j)
    let dot: f64 = grad_w.iter().zip(cache.w.iter()).map(|(g, w)| g * w).sum();
    for i in 0..k {
        grad_w_tilde[i] += cache.w[i] * (grad_w[i] - dot);
    }
    dx
}
