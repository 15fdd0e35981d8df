//! Successive projection corner finding on estimated factor rows and
//! membership-matrix reconstruction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hooi::{dd_init, hooi, FactorSet, HooiOptions};
use crate::model::Membership;
use crate::tensor::Tensor3;

/// Row indices picked by the successive projection loop, in pick order.
#[derive(Debug, Clone)]
pub struct CornerSet {
    pub indices: Vec<usize>,
    /// Euclidean norm of the residual row at each pick.
    pub residual_norms: Vec<f64>,
}

/// Membership estimate before and after threshold-and-renormalize cleaning.
#[derive(Debug, Clone)]
pub struct EstimatedMembership {
    pub cleaned: Membership,
    pub raw: DMatrix<f64>,
    pub corners: CornerSet,
    /// Rows whose sum vanished and were replaced by the uniform row.
    pub degenerate_rows: usize,
}

/// Greedy corner finding: repeatedly pick the max-squared-norm row of the
/// residual matrix (exact ties to the smallest index), then project all rows
/// onto the orthogonal complement of the pick.
pub fn spa_corners(u: &DMatrix<f64>) -> Result<CornerSet> {
    let (p, r) = (u.nrows(), u.ncols());
    if p < r || r == 0 {
        return Err(Error::Argument(format!("need p >= r >= 1, got {p}x{r}")));
    }
    let mut residual = u.clone();
    let mut norms2: Vec<f64> = (0..p).map(|i| residual.row(i).norm_squared()).collect();
    let initial_max = norms2.iter().cloned().fold(0.0f64, f64::max);
    let zero_tol = 1e-24 * initial_max.max(1e-300);

    let mut indices = Vec::with_capacity(r);
    let mut residual_norms = Vec::with_capacity(r);
    for _ in 0..r {
        // Strict `>` keeps the earliest maximum, so exact ties go to the
        // smallest index.
        let mut best = 0usize;
        let mut best_val = norms2[0];
        for (i, &v) in norms2.iter().enumerate().skip(1) {
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        if best_val <= zero_tol {
            return Err(Error::RankDeficient(format!(
                "residual vanished after {} of {} picks (indices {:?})",
                indices.len(),
                r,
                indices
            )));
        }
        let v = residual.row(best).clone_owned();
        indices.push(best);
        residual_norms.push(best_val.sqrt());
        // R <- R (I - v v^T / ||v||^2)
        let coeffs = &residual * v.transpose() / best_val;
        residual -= coeffs * v;
        for i in 0..p {
            norms2[i] = residual.row(i).norm_squared();
        }
    }
    Ok(CornerSet { indices, residual_norms })
}

const CORNER_COND_LIMIT: f64 = 1e10;

/// Raw membership estimate `u * u[J, :]^{-1}`.
pub fn memberships_from_factors(u: &DMatrix<f64>, corners: &CornerSet) -> Result<DMatrix<f64>> {
    let r = u.ncols();
    if corners.indices.len() != r {
        return Err(Error::Argument(format!(
            "corner set has {} indices, expected {}",
            corners.indices.len(),
            r
        )));
    }
    let mut block = DMatrix::zeros(r, r);
    for (row, &idx) in corners.indices.iter().enumerate() {
        if idx >= u.nrows() {
            return Err(Error::Argument(format!("corner index {idx} out of range")));
        }
        block.set_row(row, &u.row(idx));
    }
    let svd = block.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if cond > CORNER_COND_LIMIT {
        return Err(Error::IllConditioned { cond });
    }
    let inv = block
        .try_inverse()
        .ok_or(Error::IllConditioned { cond })?;
    Ok(u * inv)
}

/// Threshold-and-renormalize: negatives are floored at zero, then each row is
/// divided by its sum; rows with a vanishing sum become uniform.
pub fn clean_memberships(raw: &DMatrix<f64>, corners: CornerSet) -> Result<EstimatedMembership> {
    let (p, r) = (raw.nrows(), raw.ncols());
    let mut cleaned = DMatrix::zeros(p, r);
    let mut degenerate_rows = 0usize;
    for i in 0..p {
        let mut sum = 0.0;
        for j in 0..r {
            let v = raw[(i, j)].max(0.0);
            cleaned[(i, j)] = v;
            sum += v;
        }
        if sum <= 1e-12 {
            degenerate_rows += 1;
            for j in 0..r {
                cleaned[(i, j)] = 1.0 / r as f64;
            }
        } else {
            for j in 0..r {
                cleaned[(i, j)] /= sum;
            }
            // Guard the row-sum invariant against rounding.
            let s: f64 = (0..r).map(|j| cleaned[(i, j)]).sum();
            for j in 0..r {
                cleaned[(i, j)] /= s;
            }
        }
    }
    Ok(EstimatedMembership {
        cleaned: Membership::try_new(cleaned)?,
        raw: raw.clone(),
        corners,
        degenerate_rows,
    })
}

/// Full pipeline output: three per-mode membership estimates plus the HOOI
/// factor set and diagnostics.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub memberships: [EstimatedMembership; 3],
    pub factors: FactorSet,
}

fn mode_context<T>(res: Result<T>, mode: usize) -> Result<T> {
    res.map_err(|e| match e {
        Error::Argument(m) => Error::Argument(format!("mode {mode}: {m}")),
        Error::RankDeficient(m) => Error::RankDeficient(format!("mode {mode}: {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("mode {mode}: {m}")),
        other => other,
    })
}

/// Diagonal-deletion init, HOOI, then per-mode corner finding and cleaning.
pub fn estimate_all(that: &Tensor3, ranks: [usize; 3], opts: &HooiOptions) -> Result<EstimateOutput> {
    let init = dd_init(that, ranks, false)?;
    let factors = hooi(that, ranks, (&init.u2, &init.u3), opts)?;
    let mut memberships = Vec::with_capacity(3);
    for k in 0..3 {
        let u = factors.factors[k].matrix();
        let corners = mode_context(spa_corners(u), k + 1)?;
        let raw = mode_context(memberships_from_factors(u, &corners), k + 1)?;
        memberships.push(mode_context(clean_memberships(&raw, corners), k + 1)?);
    }
    let memberships: [EstimatedMembership; 3] = memberships.try_into().expect("three modes");
    Ok(EstimateOutput { memberships, factors })
}
