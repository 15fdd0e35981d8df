//! Rank selection via the Gaussian profile-likelihood elbow on the spectra
//! of the diagonal-deleted Gram matrices.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{gram_mode, hollow};
use crate::tensor::Tensor3;

/// Elbow position (as a rank, `1..=n-1`) maximizing the two-segment Gaussian
/// profile log-likelihood with a common variance.
///
/// Returns `None` when the spectrum is degenerate (fewer than two values, or
/// all values equal so the pooled variance vanishes).
pub fn profile_likelihood_elbow(values: &[f64]) -> Option<usize> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = values.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
    if spread <= 1e-12 * scale.max(1e-300) {
        return None;
    }
    let mut best_q = 1usize;
    let mut best_ll = f64::NEG_INFINITY;
    for q in 1..n {
        let (head, tail) = values.split_at(q);
        let mu1: f64 = head.iter().sum::<f64>() / q as f64;
        let mu2: f64 = tail.iter().sum::<f64>() / (n - q) as f64;
        let ss: f64 = head.iter().map(|v| (v - mu1).powi(2)).sum::<f64>()
            + tail.iter().map(|v| (v - mu2).powi(2)).sum::<f64>();
        // Pooled MLE variance with a floor so a perfect split still scores
        // finitely and comparably.
        let var = (ss / n as f64).max(1e-24 * scale * scale + 1e-300);
        let ll = -0.5 * n as f64 * (var.ln() + 1.0 + (2.0 * std::f64::consts::PI).ln());
        if ll > best_ll {
            best_ll = ll;
            best_q = q;
        }
    }
    Some(best_q)
}

/// Per-mode rank selection report.
#[derive(Debug, Clone)]
pub struct RankSelection {
    pub ranks: [usize; 3],
    /// Per-mode: true when the hollowed-Gram spectrum had fewer than three
    /// nonnegative eigenvalues and plain singular values were used instead.
    pub used_plain_singular_values: [bool; 3],
    /// Per-mode: true when the spectrum was degenerate and rank 1 was
    /// reported by fallback.
    pub degenerate: [bool; 3],
}

fn full_spectrum_desc(g: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::try_new(g.clone(), f64::EPSILON, 100_000)
        .ok_or(Error::Convergence { residual: f64::NAN })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(vals)
}

/// Selects `(r1, r2, r3)` by the elbow method on the square roots of the
/// nonnegative eigenvalues of the hollowed Gram matrix of each matricization,
/// falling back to plain singular values when fewer than three nonnegative
/// eigenvalues exist.
pub fn rank_select(that: &Tensor3, max_rank: usize) -> Result<RankSelection> {
    let dims = that.dims();
    if max_rank == 0 || max_rank > *dims.iter().min().unwrap() {
        return Err(Error::Argument(format!(
            "max_rank {max_rank} must be in 1..={} for dims {dims:?}",
            dims.iter().min().unwrap()
        )));
    }
    let mut ranks = [1usize; 3];
    let mut used_plain = [false; 3];
    let mut degenerate = [false; 3];
    for k in 0..3 {
        let gram = gram_mode(that, k + 1)?;
        let hollowed_vals = full_spectrum_desc(&hollow(&gram)?)?;
        let nonneg: Vec<f64> = hollowed_vals.iter().filter(|&&v| v >= 0.0).map(|v| v.sqrt()).collect();
        let spectrum: Vec<f64> = if nonneg.len() < 3 {
            used_plain[k] = true;
            full_spectrum_desc(&gram)?
                .into_iter()
                .map(|v| v.max(0.0).sqrt())
                .collect()
        } else {
            nonneg
        };
        let truncated: Vec<f64> = spectrum.into_iter().take(max_rank + 1).collect();
        match profile_likelihood_elbow(&truncated) {
            Some(q) => ranks[k] = q.min(max_rank),
            None => {
                degenerate[k] = true;
                ranks[k] = 1;
            }
        }
    }
    Ok(RankSelection { ranks, used_plain_singular_values: used_plain, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elbow_on_gapped_spectrum() {
        let vals = [10.0, 9.5, 9.0, 0.1, 0.05, 0.04, 0.03];
        assert_eq!(profile_likelihood_elbow(&vals), Some(3));
    }

    #[test]
    fn elbow_degenerate_flat_spectrum() {
        let vals = [2.0, 2.0, 2.0, 2.0];
        assert_eq!(profile_likelihood_elbow(&vals), None);
        assert_eq!(profile_likelihood_elbow(&[1.0]), None);
    }

    #[test]
    fn rank_select_validates_max_rank() {
        let t = Tensor3::zeros([3, 3, 3]);
        assert!(rank_select(&t, 0).is_err());
        assert!(rank_select(&t, 4).is_err());
    }
}
