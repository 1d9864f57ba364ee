//! Polynomial and softmax attention.
//!
//! Two families of entry points live here:
//!
//! * the score-vector form, where a single positive vector `s = Ax` is raised
//!   entrywise to the power β and normalized ([`score_attention`]);
//! * the blockwise self-attention form over `A1 = A2 = A3`, where row `j0` of
//!   the attention matrix is `g((A1)_{j0} · QKᵀ · A2ᵀ)` ([`block_attention`],
//!   [`c_poly`]), plus the full dense forward pass ([`attention_forward`]).
//!
//! All normalizations divide every weight by the largest one before
//! exponentiating, so `(a+1)^{2β}`-sized intermediates never overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, kron, pow_log, vectorize, LogScalar, LogVector, Matrix, Vector};

/// Largest sequence length for which an `n × n` attention matrix may be
/// materialized.
pub const DENSE_LIMIT: usize = 4096;

/// Largest `n²·d²` for which [`tensor_trick_check`] builds the Kronecker product.
pub const TENSOR_TRICK_LIMIT: usize = 1_000_000;

/// Tolerance on `Σ f = 1` for every [`ProbVector`].
pub const PROB_SUM_TOL: f64 = 1e-12;

/// The product `QKᵀ` (stored directly) and the value matrix `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    qk: Matrix,
    v: Matrix,
}

impl AttentionWeights {
    pub fn new(qk: Matrix, v: Matrix) -> Result<Self> {
        if !qk.is_square() || !v.is_square() || qk.rows() != v.rows() {
            return Err(Error::Size(format!(
                "QKᵀ {:?} and V {:?} must be square of equal size",
                qk.shape(),
                v.shape()
            )));
        }
        Ok(Self { qk, v })
    }

    /// `QKᵀ = 𝟙_{d×d}`, `V = I_d`: the weights every lemma fixes.
    pub fn ones_identity(d: usize) -> Result<Self> {
        Self::new(Matrix::ones(d, d)?, Matrix::identity(d)?)
    }

    pub fn dim(&self) -> usize {
        self.qk.rows()
    }

    pub fn qk(&self) -> &Matrix {
        &self.qk
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    /// Whether the structured row-sum path applies.
    pub fn has_all_ones_qk(&self) -> bool {
        self.qk.is_all_ones()
    }
}

/// Nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Normalize positive weights given by their logs. Ties for the maximum
    /// resolve to the first index.
    pub fn from_log_weights(logs: &[f64]) -> Result<Self> {
        let (imax, max) =
            logs.iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, l)| if l > acc.1 { (i, l) } else { acc },
                );
        if !max.is_finite() {
            return Err(Error::Domain("no finite log weight to normalize".into()));
        }
        let shifted: Vec<f64> = logs
            .iter()
            .enumerate()
            .map(|(i, &l)| if i == imax { 1.0 } else { (l - max).exp() })
            .collect();
        Self::from_unnormalized(shifted)
    }

    fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        let total = neumaier_sum(&weights);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("attention weights sum to {total}")));
        }
        let p: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        Self::new(p)
    }

    /// Validating constructor.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Size("probability vector must be nonempty".into()));
        }
        if let Some(i) = p.iter().position(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Domain(format!(
                "entry {i} = {} outside [0, 1]",
                p[i]
            )));
        }
        let total = neumaier_sum(&p);
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        Ok(Self(p))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

/// Compensated summation.
pub(crate) fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `u`, `α` and `f` for one score vector.
#[derive(Clone, Debug)]
pub struct ScoreAttention {
    pub u: LogVector,
    pub alpha: LogScalar,
    pub f: ProbVector,
}

/// `u = s^β`, `α = ⟨u, 1⟩`, `f = u / α` for a strictly positive score vector.
///
/// `f` is computed from the ratios `s_i / max(s)`, so scaling `s` by a power
/// of two leaves `f` bit-identical.
pub fn score_attention(scores: &[f64], beta: f64) -> Result<ScoreAttention> {
    let u = pow_log(scores, beta)?;
    let alpha = u.sum();
    let f = normalize_powers(scores, beta)?;
    Ok(ScoreAttention { u, alpha, f })
}

/// `z^β / Σ z^β` through ratios to the maximum entry. `z` must be positive.
fn normalize_powers(z: &[f64], beta: f64) -> Result<ProbVector> {
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(zmax > 0.0) {
        return Err(Error::Domain("scores must be strictly positive".into()));
    }
    let logs: Vec<f64> = z.iter().map(|&x| beta * (x / zmax).ln()).collect();
    ProbVector::from_log_weights(&logs)
}

/// Row access to a token matrix `A ∈ ℝ^{n×d}`, used for `A1 = A2 = A3`.
///
/// Implemented densely by [`Matrix`] and structurally by
/// [`SelfAttnInstance`](crate::dataset::SelfAttnInstance).
pub trait TokenRows {
    fn n_rows(&self) -> usize;

    fn n_cols(&self) -> usize;

    /// Write row `j` into `out` (length `n_cols`).
    fn row_into(&self, j: usize, out: &mut [f64]);

    /// `A·1_d`.
    fn row_sums(&self) -> Vec<f64>;

    /// `wᵀA` for a length-`n` weight vector.
    fn weighted_row_sum(&self, w: &[f64]) -> Vec<f64>;
}

impl TokenRows for Matrix {
    fn n_rows(&self) -> usize {
        self.rows()
    }

    fn n_cols(&self) -> usize {
        self.cols()
    }

    fn row_into(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(j));
    }

    fn row_sums(&self) -> Vec<f64> {
        Matrix::row_sums(self)
    }

    fn weighted_row_sum(&self, w: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols()];
        for (i, &wi) in w.iter().enumerate() {
            for (a, &x) in acc.iter_mut().zip(self.row(i)) {
                *a += wi * x;
            }
        }
        acc
    }
}

/// One row `j0` of the blockwise attention: `u_{j0}` and `f_{j0}`.
#[derive(Clone, Debug)]
pub struct BlockRow {
    pub u: LogVector,
    pub f: ProbVector,
}

fn check_block_inputs<M: TokenRows + ?Sized>(
    src: &M,
    w: &AttentionWeights,
    j0: usize,
) -> Result<()> {
    if j0 >= src.n_rows() {
        return Err(Error::Index {
            index: j0,
            len: src.n_rows(),
        });
    }
    if w.dim() != src.n_cols() {
        return Err(Error::Size(format!(
            "weights are {}x{} but tokens have {} columns",
            w.dim(),
            w.dim(),
            src.n_cols()
        )));
    }
    Ok(())
}

/// Row `j0` of `g(A1·QKᵀ·A2ᵀ)` with `A1 = A2 = src`, and its normalization.
///
/// Uses [`block_attention_structured`] when `QKᵀ` is all ones, otherwise
/// [`block_attention_dense`].
pub fn block_attention<M: TokenRows + ?Sized>(
    src: &M,
    w: &AttentionWeights,
    j0: usize,
    beta: f64,
) -> Result<BlockRow> {
    if w.has_all_ones_qk() {
        block_attention_structured(src, w, j0, beta)
    } else {
        block_attention_dense(src, w, j0, beta)
    }
}

/// Dense evaluation: `z_{j1} = ⟨(A1)_{j0} QKᵀ, (A2)_{j1}⟩`, `u = z^β`.
pub fn block_attention_dense<M: TokenRows + ?Sized>(
    src: &M,
    w: &AttentionWeights,
    j0: usize,
    beta: f64,
) -> Result<BlockRow> {
    check_block_inputs(src, w, j0)?;
    let d = src.n_cols();
    let mut row = vec![0.0; d];
    src.row_into(j0, &mut row);
    // q = (A1)_{j0} · QKᵀ
    let mut q = vec![0.0; d];
    for (k, &x) in row.iter().enumerate() {
        for (qi, &m) in q.iter_mut().zip(w.qk().row(k)) {
            *qi += x * m;
        }
    }
    let z: Vec<f64> = (0..src.n_rows())
        .map(|j1| {
            src.row_into(j1, &mut row);
            dot(&q, &row)
        })
        .collect();
    if let Some(j1) = z.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Domain(format!(
            "pre-activation at ({j0}, {j1}) is {} (real powers need positive values)",
            z[j1]
        )));
    }
    let u = pow_log(&z, beta)?;
    let f = normalize_powers(&z, beta)?;
    Ok(BlockRow { u, f })
}

/// Structured evaluation for `QKᵀ = 𝟙`: `u_{j0,j1} = (r_{j0}·r_{j1})^β` with
/// `r = A·1`.
///
/// `f_{j0}` does not depend on `j0`: the factor `r_{j0}^β` cancels.
pub fn block_attention_structured<M: TokenRows + ?Sized>(
    src: &M,
    w: &AttentionWeights,
    j0: usize,
    beta: f64,
) -> Result<BlockRow> {
    check_block_inputs(src, w, j0)?;
    if !w.has_all_ones_qk() {
        return Err(Error::Config("structured path requires QKᵀ = 𝟙".into()));
    }
    let r = positive_row_sums(src)?;
    let base = r[j0].ln();
    let u = LogVector::new(
        r.iter()
            .map(|&x| LogScalar::from_ln(beta * (base + x.ln())))
            .collect(),
    )?;
    let f = normalize_powers(&r, beta)?;
    Ok(BlockRow { u, f })
}

fn positive_row_sums<M: TokenRows + ?Sized>(src: &M) -> Result<Vec<f64>> {
    let r = src.row_sums();
    if let Some(i) = r.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Domain(format!(
            "row sum {} of row {i} is not positive (real powers need positive values)",
            r[i]
        )));
    }
    Ok(r)
}

/// The attention row shared by every `j0` when `QKᵀ = 𝟙`.
pub(crate) fn shared_structured_row<M: TokenRows + ?Sized>(
    src: &M,
    beta: f64,
) -> Result<ProbVector> {
    normalize_powers(&positive_row_sums(src)?, beta)
}

/// `(fᵀ A3) V`.
pub(crate) fn mix_values<M: TokenRows + ?Sized>(
    src: &M,
    w: &AttentionWeights,
    f: &ProbVector,
) -> Vector {
    let fa = src.weighted_row_sum(f.as_slice());
    let v = w.v();
    let out = (0..v.cols())
        .map(|i0| fa.iter().enumerate().map(|(k, &x)| x * v.get(k, i0)).sum())
        .collect();
    Vector::new(out).expect("finite inputs give a finite mix")
}

/// `c_{j0,i0} = ⟨f_{j0}, (A3 V)_{*,i0}⟩` for every `i0`.
pub fn c_poly<M: TokenRows + ?Sized>(
    src: &M,
    w: &AttentionWeights,
    j0: usize,
    beta: f64,
) -> Result<Vector> {
    let row = block_attention(src, w, j0, beta)?;
    Ok(mix_values(src, w, &row.f))
}

/// Entrywise nonlinearity of an attention layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttentionKind {
    Softmax,
    Poly { beta: f64 },
}

/// Row-stochastic attention matrix `D⁻¹ g(A QKᵀ Aᵀ)`.
pub fn attention_matrix(a: &Matrix, w: &AttentionWeights, kind: AttentionKind) -> Result<Matrix> {
    let n = a.rows();
    if n > DENSE_LIMIT {
        return Err(Error::Size(format!(
            "dense attention limited to n ≤ {DENSE_LIMIT}, got {n}"
        )));
    }
    if a.cols() != w.dim() {
        return Err(Error::Size(format!(
            "A has {} columns but weights are {}x{}",
            a.cols(),
            w.dim(),
            w.dim()
        )));
    }
    let scores = a.matmul(w.qk())?.matmul(&a.transpose())?;
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        let row = scores.row(i);
        let p = match kind {
            AttentionKind::Softmax => ProbVector::from_log_weights(row)?,
            AttentionKind::Poly { beta } => {
                if let Some(j) = row.iter().position(|&x| !(x > 0.0)) {
                    return Err(Error::Domain(format!(
                        "pre-activation at ({i}, {j}) is {} (real powers need positive values)",
                        row[j]
                    )));
                }
                normalize_powers(row, beta)?
            }
        };
        data.extend_from_slice(p.as_slice());
    }
    Matrix::new(n, n, data)
}

/// `Att(A, Q, K, V) = D⁻¹ g(A QKᵀ Aᵀ) A V`.
pub fn attention_forward(a: &Matrix, w: &AttentionWeights, kind: AttentionKind) -> Result<Matrix> {
    let p = attention_matrix(a, w, kind)?;
    p.matmul(&a.matmul(w.v())?)
}

/// Largest relative gap between `vec(g(A1 QKᵀ A2ᵀ))` and
/// `g((A1 ⊗ A2) vec(QKᵀ))` with `g(z) = z^β`, scaled by `max(1, |lhs|)`.
pub fn tensor_trick_check(
    a1: &Matrix,
    a2: &Matrix,
    w: &AttentionWeights,
    beta: f64,
) -> Result<f64> {
    let d = w.dim();
    if a1.cols() != d || a2.cols() != d {
        return Err(Error::Size("A1, A2 and QKᵀ disagree on d".into()));
    }
    let size = a1
        .rows()
        .checked_mul(a2.rows())
        .and_then(|x| x.checked_mul(d * d))
        .filter(|&s| s <= TENSOR_TRICK_LIMIT)
        .ok_or_else(|| {
            Error::Size(format!(
                "n1·n2·d² exceeds the {TENSOR_TRICK_LIMIT} entry limit"
            ))
        })?;
    debug_assert!(size <= TENSOR_TRICK_LIMIT);

    let g = |z: f64, at: usize| -> Result<f64> {
        if z > 0.0 {
            Ok(z.powf(beta))
        } else {
            Err(Error::Domain(format!(
                "pre-activation {z} at index {at} is not positive"
            )))
        }
    };

    let direct = vectorize(&a1.matmul(w.qk())?.matmul(&a2.transpose())?);
    let via_kron = kron(a1, a2)?.mul_vec(&vectorize(w.qk()))?;

    let mut worst = 0.0f64;
    for (i, (&p, &q)) in direct
        .as_slice()
        .iter()
        .zip(via_kron.as_slice())
        .enumerate()
    {
        let lhs = g(p, i)?;
        let rhs = g(q, i)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    Ok(worst)
}
