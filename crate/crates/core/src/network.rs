//! The thresholded readout `F = φ(Σ φ_τ(⟨·, y_l⟩))` and its Rademacher weights.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::attention::{
    block_attention_dense, mix_values, score_attention, shared_structured_row, AttentionWeights,
    TokenRows, DENSE_LIMIT,
};
use crate::dataset::ScoreVector;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// `φ(z) = max{z, 0}`.
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// `φ_τ(z) = max{z − τ, 0}`; exactly zero whenever `z ≤ τ`.
pub fn shifted_relu(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else {
        0.0
    }
}

/// A `dim × m` matrix of ±1 entries, stored column by column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignMatrix {
    dim: usize,
    m: usize,
    seed: u64,
    data: Vec<i8>,
}

impl SignMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn column(&self, l: usize) -> &[i8] {
        &self.data[l * self.dim..(l + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[i8]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.m)
    }

    /// `⟨x, y_l⟩`.
    pub fn inner(&self, l: usize, x: &[f64]) -> f64 {
        signed_sum(x, self.column(l))
    }
}

pub(crate) fn signed_sum(x: &[f64], signs: &[i8]) -> f64 {
    debug_assert_eq!(x.len(), signs.len());
    x.iter()
        .zip(signs)
        .map(|(&v, &s)| if s > 0 { v } else { -v })
        .sum()
}

/// Draw a `dim × m` Rademacher matrix.
///
/// Entries are read from successive `next_u64` outputs of a ChaCha8 stream
/// seeded with `seed`, one bit per entry starting from the least significant
/// bit; bit 1 gives `+1`. Entries fill column 0 first.
pub fn sample_signs(dim: usize, m: usize, seed: u64) -> SignMatrix {
    let mut rng = rng_from_seed(seed);
    let data = fill_signs(&mut rng, dim * m);
    SignMatrix { dim, m, seed, data }
}

/// `len` fair ±1 draws from `rng`, 64 per word.
pub(crate) fn fill_signs<R: RngCore>(rng: &mut R, len: usize) -> Vec<i8> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let word = rng.next_u64();
        let take = (len - out.len()).min(64);
        out.extend((0..take).map(|b| if (word >> b) & 1 == 1 { 1i8 } else { -1i8 }));
    }
    out
}

/// Threshold, column count, degree and failure probability of one network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub tau: f64,
    pub m: usize,
    pub beta: f64,
    pub delta: f64,
}

impl NetworkParams {
    pub fn new(tau: f64, m: usize, beta: f64, delta: f64) -> Result<Self> {
        let p = Self {
            tau,
            m,
            beta,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::Validation(format!(
                "τ must be finite, got {}",
                self.tau
            )));
        }
        if self.m == 0 {
            return Err(Error::Validation("m ≥ 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation(format!(
                "β must be a finite nonnegative real, got {}",
                self.beta
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.1) {
            return Err(Error::Validation(format!(
                "δ ∈ (0, 0.1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// `m = ⌈C · log_base(n/δ)⌉`.
pub fn columns_for(n: usize, delta: f64, c: f64, log_base: f64) -> Result<usize> {
    if !(delta > 0.0) || !(c > 0.0) || !(log_base > 1.0) || n == 0 {
        return Err(Error::Config(format!(
            "cannot size the sign matrix from n={n}, δ={delta}, C={c}, base={log_base}"
        )));
    }
    let m = (c * ((n as f64 / delta).ln() / log_base.ln())).ceil();
    if !(m >= 1.0 && m < 1e9) {
        return Err(Error::Config(format!("sign matrix width {m} out of range")));
    }
    Ok(m as usize)
}

fn sum_thresholded(x: &[f64], y: &SignMatrix, tau: f64) -> f64 {
    (0..y.m()).map(|l| shifted_relu(y.inner(l, x), tau)).sum()
}

fn check_dim(y: &SignMatrix, expected: usize) -> Result<()> {
    if y.dim() != expected {
        return Err(Error::Size(format!(
            "sign matrix has dim {} but input has {}",
            y.dim(),
            expected
        )));
    }
    Ok(())
}

/// `F = φ(Σ_l φ_τ(⟨f, y_l⟩))` with `f` the normalized `s^β`.
pub fn f_network_score(s: &ScoreVector, y: &SignMatrix, p: &NetworkParams) -> Result<f64> {
    f_network_from_scores(s.entries(), y, p)
}

/// As [`f_network_score`] on an unvalidated positive score slice.
pub fn f_network_from_scores(scores: &[f64], y: &SignMatrix, p: &NetworkParams) -> Result<f64> {
    check_dim(y, scores.len())?;
    let f = score_attention(scores, p.beta)?.f;
    Ok(relu(sum_thresholded(f.as_slice(), y, p.tau)))
}

/// `F = φ(Σ_{j0} Σ_l φ_τ(⟨c_{j0}, y_l⟩))` over the rows of a self-attention input.
///
/// With `QKᵀ = 𝟙` every `c_{j0}` coincides, so the double sum is `n` times a
/// single row's sum. Otherwise each row is evaluated densely (`n ≤ 4096`).
pub fn f_network_selfattn<M: TokenRows + ?Sized>(
    src: &M,
    w: &AttentionWeights,
    y: &SignMatrix,
    p: &NetworkParams,
) -> Result<f64> {
    check_dim(y, src.n_cols())?;
    if w.dim() != src.n_cols() {
        return Err(Error::Size(format!(
            "weights are {0}x{0} but tokens have {1} columns",
            w.dim(),
            src.n_cols()
        )));
    }
    let n = src.n_rows();
    if w.has_all_ones_qk() {
        let f = shared_structured_row(src, p.beta)?;
        let c = mix_values(src, w, &f);
        return Ok(relu(n as f64 * sum_thresholded(c.as_slice(), y, p.tau)));
    }
    if n > DENSE_LIMIT {
        return Err(Error::Size(format!(
            "general QKᵀ needs the dense path, limited to n ≤ {DENSE_LIMIT} (got {n})"
        )));
    }
    let mut total = 0.0;
    for j0 in 0..n {
        let row = block_attention_dense(src, w, j0, p.beta)?;
        let c = mix_values(src, w, &row.f);
        total += sum_thresholded(c.as_slice(), y, p.tau);
    }
    Ok(relu(total))
}
