//! Cycle matching between the instances of two frames.
//!
//! Given instance embeddings `U` (N0×D, frame t0) and `V` (N1×D, frame t1),
//! the cycle is
//!
//! 1. squared distances `s[i][j] = ||u_i - v_j||²`,
//! 2. forward weights `α[i] = softmax(±s[i] / T)`,
//! 3. soft targets `v̂_i = Σ_j α[i][j] v_j`,
//! 4. backward logits `b[k][i] = ±||u_k - v̂_i||² / T`,
//! 5. loss `(1/N0) Σ_i -log softmax_k(b[·][i])_i`.
//!
//! With the `+` sign (cycle confusion) every instance is pushed towards the
//! *most different* instances of the other frame before it has to find its way
//! back; with the `-` sign (cycle consistency) it is the usual nearest
//! neighbour cycle. Every softmax subtracts the row (or column) maximum first.
//!
//! The whole cycle is differentiated: gradients flow through the forward
//! weights, the soft targets and the backward logits into both `U` and `V`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{gemm, Op};
use crate::tensor::Mat;
use crate::{Error, Real, Result};

/// Encoded ROI features of one frame, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceEmbeddings<F> {
    pub values: Mat<F>,
    pub frame_id: i64,
}

impl<F: Real> InstanceEmbeddings<F> {
    pub fn new(values: Mat<F>, frame_id: i64) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::contract("embedding dimension must be at least 1"));
        }
        if !values.is_finite() {
            return Err(Error::non_finite(format!("embeddings of frame {frame_id}")));
        }
        Ok(Self { values, frame_id })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// `N0×N1` squared Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<F>(pub Mat<F>);

/// Row-stochastic `N0×N1` forward matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchWeights<F>(pub Mat<F>);

/// `N0×D` weighted averages of the target frame's embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTargets<F>(pub Mat<F>);

/// Which way the forward and backward logits point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Logits are `+distance`: weight goes to the most different instance.
    Confusion,
    /// Logits are `-distance`: weight goes to the nearest instance.
    Consistency,
}

impl Polarity {
    fn sign<F: Real>(self) -> F {
        match self {
            Polarity::Confusion => F::one(),
            Polarity::Consistency => -F::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleConfig {
    /// Logits are divided by this; 1 reproduces the plain formulation.
    pub temperature: f64,
    /// Also add the t1 → t0 → t1 cycle to the loss.
    pub symmetric: bool,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self { temperature: 1.0, symmetric: false }
    }
}

/// Loss and gradients of one cycle evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SslLossResult<F> {
    pub loss: F,
    pub grads_u: Mat<F>,
    pub grads_v: Mat<F>,
    /// Set when either frame had no instances; loss and gradients are zero.
    pub skipped: bool,
    /// Forward weights of the t0 → t1 direction, kept for diagnostics.
    pub forward_weights: Option<MatchWeights<F>>,
}

impl<F: Real> SslLossResult<F> {
    fn skipped(n0: usize, n1: usize, d: usize) -> Self {
        Self {
            loss: F::zero(),
            grads_u: Mat::zeros(n0, d),
            grads_v: Mat::zeros(n1, d),
            skipped: true,
            forward_weights: None,
        }
    }
}

fn check_dims<F: Real>(u: &Mat<F>, v: &Mat<F>) -> Result<()> {
    if u.cols() != v.cols() {
        return Err(Error::contract(format!(
            "embedding dimensions differ: {} vs {}",
            u.cols(),
            v.cols()
        )));
    }
    Ok(())
}

fn sq_dist<F: Real>(u: &Mat<F>, v: &Mat<F>) -> Mat<F> {
    let mut out = Mat::zeros(u.rows(), v.rows());
    for i in 0..u.rows() {
        let ui = u.row(i);
        for j in 0..v.rows() {
            let d: F = ui.iter().zip(v.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum();
            out.set(i, j, d);
        }
    }
    out
}

/// Squared Euclidean distance between every row of `u` and every row of `v`.
pub fn pairwise_sq_dist<F: Real>(
    u: &InstanceEmbeddings<F>,
    v: &InstanceEmbeddings<F>,
) -> Result<DistanceMatrix<F>> {
    check_dims(&u.values, &v.values)?;
    Ok(DistanceMatrix(sq_dist(&u.values, &v.values)))
}

/// Row-wise softmax of `scale * logits` with max subtraction.
fn softmax_rows<F: Real>(logits: &Mat<F>, scale: F) -> Mat<F> {
    let mut out = Mat::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let m = row.iter().map(|&x| x * scale).fold(F::neg_infinity(), F::max);
        let o = out.row_mut(i);
        let mut z = F::zero();
        for (oj, &x) in o.iter_mut().zip(row) {
            *oj = (x * scale - m).exp();
            z += *oj;
        }
        for oj in o.iter_mut() {
            *oj /= z;
        }
    }
    out
}

/// Forward matching weights with the cycle-confusion sign and unit temperature.
pub fn forward_match_weights<F: Real>(s: &DistanceMatrix<F>) -> Result<MatchWeights<F>> {
    forward_match_weights_with(s, Polarity::Confusion, 1.0)
}

pub fn forward_match_weights_with<F: Real>(
    s: &DistanceMatrix<F>,
    polarity: Polarity,
    temperature: f64,
) -> Result<MatchWeights<F>> {
    if s.0.cols() == 0 {
        return Err(Error::EmptyTargets);
    }
    if !s.0.is_finite() {
        return Err(Error::non_finite("distance matrix"));
    }
    if !(temperature > 0.0) {
        return Err(Error::contract("temperature must be positive"));
    }
    let scale = polarity.sign::<F>() / F::lit(temperature);
    Ok(MatchWeights(softmax_rows(&s.0, scale)))
}

/// `v̂ = α · V`.
pub fn soft_targets<F: Real>(
    alpha: &MatchWeights<F>,
    v: &InstanceEmbeddings<F>,
) -> Result<SoftTargets<F>> {
    let (n0, n1, d) = (alpha.0.rows(), alpha.0.cols(), v.dim());
    if n1 != v.len() {
        return Err(Error::contract(format!(
            "weights have {n1} columns but there are {} target instances",
            v.len()
        )));
    }
    let mut out = Mat::zeros(n0, d);
    gemm(Op::N, Op::N, n0, n1, d, alpha.0.as_slice(), v.values.as_slice(), F::zero(), out.as_mut_slice());
    Ok(SoftTargets(out))
}

/// `out[k][i] = ||u_k - v̂_i||²`; column `i` holds the backward logits of
/// soft target `i` before the polarity sign is applied.
pub fn backward_logits<F: Real>(u: &InstanceEmbeddings<F>, vhat: &SoftTargets<F>) -> Result<Mat<F>> {
    check_dims(&u.values, &vhat.0)?;
    Ok(sq_dist(&u.values, &vhat.0))
}

/// Mean Shannon entropy of the rows of `alpha`, with `0·log 0 = 0`.
pub fn matching_entropy<F: Real>(alpha: &MatchWeights<F>) -> Result<F> {
    let a = &alpha.0;
    if a.as_slice().iter().any(|&x| x < F::zero()) {
        return Err(Error::contract("match weights must be nonnegative"));
    }
    if a.rows() == 0 {
        return Ok(F::zero());
    }
    let mut h = F::zero();
    for &x in a.as_slice() {
        if x > F::zero() {
            h -= x * x.ln();
        }
    }
    Ok(h / F::lit(a.rows() as f64))
}

/// Cycle confusion loss (`+distance` logits, unit temperature, one direction).
pub fn cycle_confusion_loss<F: Real>(
    u: &InstanceEmbeddings<F>,
    v: &InstanceEmbeddings<F>,
) -> Result<SslLossResult<F>> {
    cycle_loss(u, v, Polarity::Confusion, &CycleConfig::default())
}

/// Cycle consistency baseline (`-distance` logits, unit temperature).
pub fn cycle_consistency_loss<F: Real>(
    u: &InstanceEmbeddings<F>,
    v: &InstanceEmbeddings<F>,
) -> Result<SslLossResult<F>> {
    cycle_loss(u, v, Polarity::Consistency, &CycleConfig::default())
}

pub fn cycle_loss<F: Real>(
    u: &InstanceEmbeddings<F>,
    v: &InstanceEmbeddings<F>,
    polarity: Polarity,
    config: &CycleConfig,
) -> Result<SslLossResult<F>> {
    check_dims(&u.values, &v.values)?;
    if !(config.temperature > 0.0) {
        return Err(Error::contract("temperature must be positive"));
    }
    let (n0, n1, d) = (u.len(), v.len(), u.dim());
    if n0 == 0 || n1 == 0 {
        return Ok(SslLossResult::skipped(n0, n1, d));
    }
    let scale = polarity.sign::<F>() / F::lit(config.temperature);
    let fwd = one_direction(&u.values, &v.values, scale)?;
    let mut result = SslLossResult {
        loss: fwd.loss,
        grads_u: fwd.grad_a,
        grads_v: fwd.grad_b,
        skipped: false,
        forward_weights: Some(MatchWeights(fwd.alpha)),
    };
    if config.symmetric {
        let bwd = one_direction(&v.values, &u.values, scale)?;
        result.loss += bwd.loss;
        add_into(&mut result.grads_u, &bwd.grad_b);
        add_into(&mut result.grads_v, &bwd.grad_a);
    }
    Ok(result)
}

fn add_into<F: Real>(dst: &mut Mat<F>, src: &Mat<F>) {
    for (a, &b) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *a += b;
    }
}

struct Direction<F> {
    loss: F,
    grad_a: Mat<F>,
    grad_b: Mat<F>,
    alpha: Mat<F>,
}

/// Accumulates the gradient of `Σ_ij w[i][j] ||a_i - b_j||²` into `ga`, `gb`:
/// `ga += 2 (diag(rowsum w) A - w B)` and `gb += 2 (diag(colsum w) B - wᵀ A)`.
fn sq_dist_backward<F: Real>(w: &Mat<F>, a: &Mat<F>, b: &Mat<F>, ga: &mut Mat<F>, gb: &mut Mat<F>) {
    let (na, nb, d) = (a.rows(), b.rows(), a.cols());
    let two = F::lit(2.0);
    let mut wb = vec![F::zero(); na * d];
    gemm(Op::N, Op::N, na, nb, d, w.as_slice(), b.as_slice(), F::zero(), &mut wb);
    let mut wta = vec![F::zero(); nb * d];
    gemm(Op::T, Op::N, nb, na, d, w.as_slice(), a.as_slice(), F::zero(), &mut wta);
    for i in 0..na {
        let rs: F = w.row(i).iter().copied().sum();
        let (ai, gai) = (a.row(i), &mut ga.as_mut_slice()[i * d..(i + 1) * d]);
        for x in 0..d {
            gai[x] += two * (rs * ai[x] - wb[i * d + x]);
        }
    }
    let mut cs = vec![F::zero(); nb];
    for i in 0..na {
        for (c, &x) in cs.iter_mut().zip(w.row(i)) {
            *c += x;
        }
    }
    for j in 0..nb {
        let (bj, gbj) = (b.row(j), &mut gb.as_mut_slice()[j * d..(j + 1) * d]);
        for x in 0..d {
            gbj[x] += two * (cs[j] * bj[x] - wta[j * d + x]);
        }
    }
}

fn one_direction<F: Real>(u: &Mat<F>, v: &Mat<F>, scale: F) -> Result<Direction<F>> {
    let (n0, n1, d) = (u.rows(), v.rows(), u.cols());
    let s = sq_dist(u, v);
    let alpha = softmax_rows(&s, scale);
    let mut vhat = Mat::zeros(n0, d);
    gemm(Op::N, Op::N, n0, n1, d, alpha.as_slice(), v.as_slice(), F::zero(), vhat.as_mut_slice());
    // t[k][i]: u_k against soft target i. Column i is one classification problem.
    let t = sq_dist(u, &vhat);

    let inv_n0 = F::one() / F::lit(n0 as f64);
    let mut loss = F::zero();
    // dL/dt, already including the polarity/temperature scale.
    let mut gt = Mat::zeros(n0, n0);
    let mut col = vec![F::zero(); n0];
    for i in 0..n0 {
        for k in 0..n0 {
            col[k] = scale * t.get(k, i);
        }
        let m = col.iter().copied().fold(F::neg_infinity(), F::max);
        let z: F = col.iter().map(|&x| (x - m).exp()).sum();
        loss += (m - col[i]) + z.ln();
        for k in 0..n0 {
            let p = (col[k] - m).exp() / z;
            let target = if k == i { F::one() } else { F::zero() };
            gt.set(k, i, scale * (p - target) * inv_n0);
        }
    }
    loss = loss * inv_n0;
    if !loss.is_finite() {
        return Err(Error::non_finite("cycle loss"));
    }

    let mut grad_u = Mat::zeros(n0, d);
    let mut grad_vhat = Mat::zeros(n0, d);
    sq_dist_backward(&gt, u, &vhat, &mut grad_u, &mut grad_vhat);

    // v̂ = α V
    let mut grad_v = Mat::zeros(n1, d);
    gemm(Op::T, Op::N, n1, n0, d, alpha.as_slice(), grad_vhat.as_slice(), F::zero(), grad_v.as_mut_slice());
    let mut grad_alpha = Mat::zeros(n0, n1);
    gemm(Op::N, Op::T, n0, d, n1, grad_vhat.as_slice(), v.as_slice(), F::zero(), grad_alpha.as_mut_slice());

    // softmax backward, then the logit scale, into dL/ds
    let mut gs = Mat::zeros(n0, n1);
    for i in 0..n0 {
        let (a, ga) = (alpha.row(i), grad_alpha.row(i));
        let dot: F = a.iter().zip(ga).map(|(&x, &y)| x * y).sum();
        for j in 0..n1 {
            gs.set(i, j, scale * a[j] * (ga[j] - dot));
        }
    }
    sq_dist_backward(&gs, u, v, &mut grad_u, &mut grad_v);

    if !grad_u.is_finite() || !grad_v.is_finite() {
        return Err(Error::non_finite("cycle loss gradient"));
    }
    Ok(Direction { loss, grad_a: grad_u, grad_b: grad_v, alpha })
}

/// Per-instance backward cross-entropy terms (the summands of the mean loss).
pub fn per_instance_losses<F: Real>(
    u: &InstanceEmbeddings<F>,
    v: &InstanceEmbeddings<F>,
    polarity: Polarity,
    temperature: f64,
) -> Result<Vec<F>> {
    check_dims(&u.values, &v.values)?;
    let (n0, n1, d) = (u.len(), v.len(), u.dim());
    if n0 == 0 || n1 == 0 {
        return Ok(Vec::new());
    }
    let scale = polarity.sign::<F>() / F::lit(temperature);
    let alpha = softmax_rows(&sq_dist(&u.values, &v.values), scale);
    let mut vhat = Mat::zeros(n0, d);
    gemm(Op::N, Op::N, n0, n1, d, alpha.as_slice(), v.values.as_slice(), F::zero(), vhat.as_mut_slice());
    let t = sq_dist(&u.values, &vhat);
    let mut out = Vec::with_capacity(n0);
    for i in 0..n0 {
        let col: Vec<F> = (0..n0).map(|k| scale * t.get(k, i)).collect();
        let m = col.iter().copied().fold(F::neg_infinity(), F::max);
        let z: F = col.iter().map(|&x| (x - m).exp()).sum();
        out.push((m - col[i]) + z.ln());
    }
    Ok(out)
}
