use crate::error::{Error, Result};

/// `min(1, 2·exp(−2t² / Σ(hi−lo)²))` for a sum of independent variables with
/// the given ranges.
pub fn hoeffding_bound(ranges: &[(f64, f64)], t: f64) -> Result<f64> {
    if ranges.is_empty() {
        return Err(Error::Domain(
            "Hoeffding bound needs at least one range".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!(
            "Hoeffding deviation must be positive, got {t}"
        )));
    }
    let mut width2 = 0.0;
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        if !(hi >= lo) {
            return Err(Error::Domain(format!("range {i} = [{lo}, {hi}] is empty")));
        }
        width2 += (hi - lo) * (hi - lo);
    }
    if width2 == 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * (-2.0 * t * t / width2).exp()).min(1.0))
}

/// `k·√(p(1−p)/N)`: `k` standard deviations of a binomial frequency.
pub fn binomial_allowance(p: f64, trials: usize, k: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    k * (p * (1.0 - p) / trials as f64).sqrt()
}
