//! Diagonal-deletion spectral initialization and higher-order orthogonal
//! iteration (HOOI).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{gram_mode, hollow, sin_theta, svd_left_top, sym_eig_top, FactorMatrix};
use crate::tensor::{matricize, mode_product, Tensor3};

/// Estimated per-mode factors plus per-sweep diagnostics.
#[derive(Debug, Clone)]
pub struct FactorSet {
    pub factors: [FactorMatrix; 3],
    pub ranks: [usize; 3],
    pub iterations_run: usize,
    pub diagnostics: Vec<SweepDiag>,
}

/// One per-mode update record within a sweep.
#[derive(Debug, Clone)]
pub struct SweepDiag {
    pub sweep: usize,
    /// Mode updated, in `1..=3`.
    pub mode: usize,
    /// Sin-theta change from the previous estimate of this mode, when one
    /// existed.
    pub subspace_change: Option<f64>,
    /// Top singular values of the projected matricization.
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct HooiOptions {
    pub t_max: usize,
    /// Stop when the max per-mode successive sin-theta change drops below
    /// this threshold.
    pub tol: f64,
}

impl Default for HooiOptions {
    fn default() -> Self {
        Self { t_max: 20, tol: 1e-9 }
    }
}

impl HooiOptions {
    pub fn validate(&self) -> Result<()> {
        if self.t_max < 1 {
            return Err(Error::Argument("t_max must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Argument("tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Diagonal-deletion initialization output.
#[derive(Debug, Clone)]
pub struct DdInit {
    /// Mode-1 factor, computed only when requested for diagnostics.
    pub u1: Option<FactorMatrix>,
    pub u2: FactorMatrix,
    pub u3: FactorMatrix,
    /// Per-mode flag set when the leading eigenvalue of the hollowed Gram is
    /// numerically zero and the returned basis is arbitrary.
    pub degenerate: [bool; 3],
}

fn dd_init_mode(that: &Tensor3, mode: usize, rank: usize) -> Result<(FactorMatrix, bool)> {
    let gram = hollow(&gram_mode(that, mode)?)?;
    let (vals, vecs) = sym_eig_top(&gram, rank)?;
    let scale = gram.amax();
    let degenerate = vals.values()[0].abs() <= 1e-12 * scale.max(1e-300) || scale == 0.0;
    Ok((vecs, degenerate))
}

/// Top-`r_k` eigenvectors of the hollowed Gram matrix of each requested
/// matricization.  Modes 2 and 3 are always computed; mode 1 on request.
pub fn dd_init(that: &Tensor3, ranks: [usize; 3], with_mode1: bool) -> Result<DdInit> {
    let dims = that.dims();
    for k in 0..3 {
        if ranks[k] == 0 || ranks[k] > dims[k] {
            return Err(Error::Argument(format!(
                "rank {} invalid for mode {} of dimension {}",
                ranks[k],
                k + 1,
                dims[k]
            )));
        }
    }
    let (u2, d2) = dd_init_mode(that, 2, ranks[1])?;
    let (u3, d3) = dd_init_mode(that, 3, ranks[2])?;
    let (u1, d1) = if with_mode1 {
        let (u, d) = dd_init_mode(that, 1, ranks[0])?;
        (Some(u), d)
    } else {
        (None, false)
    };
    Ok(DdInit { u1, u2, u3, degenerate: [d1, d2, d3] })
}

/// One power sweep updates mode `k` from the matricization of the tensor
/// projected along the other two modes by the current factor transposes.
fn projected_matricization(
    that: &Tensor3,
    factors: &[Option<DMatrix<f64>>; 3],
    k: usize,
) -> Result<DMatrix<f64>> {
    let mut t = that.clone();
    for j in 0..3 {
        if j == k {
            continue;
        }
        let u = factors[j]
            .as_ref()
            .ok_or_else(|| Error::Argument(format!("missing factor for mode {}", j + 1)))?;
        t = mode_product(&t, &u.transpose(), j + 1)?;
    }
    matricize(&t, k + 1)
}

/// Higher-order orthogonal iteration.
///
/// At sweep `t`, modes are updated in order `k = 1, 2, 3`, each using the
/// already-updated factors for modes before `k` and the previous sweep's
/// factors after `k`.  Stops when the max per-mode successive sin-theta
/// change drops below `opts.tol` or after `opts.t_max` sweeps.
pub fn hooi(
    that: &Tensor3,
    ranks: [usize; 3],
    init: (&FactorMatrix, &FactorMatrix),
    opts: &HooiOptions,
) -> Result<FactorSet> {
    opts.validate()?;
    let dims = that.dims();
    let (u2, u3) = init;
    if u2.nrows() != dims[1] || u2.ncols() != ranks[1] || u3.nrows() != dims[2] || u3.ncols() != ranks[2]
    {
        return Err(Error::Argument(format!(
            "initialization shapes ({}x{}, {}x{}) do not match dims {:?} ranks {:?}",
            u2.nrows(),
            u2.ncols(),
            u3.nrows(),
            u3.ncols(),
            dims,
            ranks
        )));
    }

    let mut current: [Option<DMatrix<f64>>; 3] =
        [None, Some(u2.matrix().clone()), Some(u3.matrix().clone())];
    let mut wrapped: [Option<FactorMatrix>; 3] = [None, Some(u2.clone()), Some(u3.clone())];
    let mut diagnostics = Vec::new();
    let mut sweeps = 0;

    for t in 1..=opts.t_max {
        sweeps = t;
        let mut max_change: f64 = 0.0;
        let mut any_previous = false;
        for k in 0..3 {
            let m = projected_matricization(that, &current, k)?;
            let (vals, u_new) = svd_left_top(&m, ranks[k])?;
            let (s1, sr) = (vals.values()[0], vals.values()[ranks[k] - 1]);
            if sr <= 1e-12 * s1 || s1 == 0.0 {
                return Err(Error::Degenerate(format!(
                    "rank collapse in mode {} at sweep {} (sigma_{} = {:.3e}, sigma_1 = {:.3e})",
                    k + 1,
                    t,
                    ranks[k],
                    sr,
                    s1
                )));
            }
            let change = match &wrapped[k] {
                Some(prev) => {
                    any_previous = true;
                    let c = sin_theta(prev, &u_new)?;
                    max_change = max_change.max(c);
                    Some(c)
                }
                None => None,
            };
            diagnostics.push(SweepDiag {
                sweep: t,
                mode: k + 1,
                subspace_change: change,
                singular_values: vals.values().to_vec(),
            });
            current[k] = Some(u_new.matrix().clone());
            wrapped[k] = Some(u_new);
        }
        if any_previous && max_change < opts.tol {
            break;
        }
    }

    let factors: [FactorMatrix; 3] = [
        wrapped[0].take().unwrap(),
        wrapped[1].take().unwrap(),
        wrapped[2].take().unwrap(),
    ];
    Ok(FactorSet { factors, ranks, iterations_run: sweeps, diagnostics })
}

/// Iteration-count rule: `max(1, ceil(ln(max(arg, 1)))) + 2` safety sweeps,
/// with `arg = kappa * p * sqrt(r1 r2 r3) / ((delta/sigma) * sqrt(p1 p2 p3))`.
pub fn default_iters(
    dims: [usize; 3],
    ranks: [usize; 3],
    delta_over_sigma: f64,
    kappa: f64,
) -> usize {
    let p = dims.iter().copied().max().unwrap_or(1) as f64;
    let r_prod = ranks.iter().map(|&r| r as f64).product::<f64>();
    let p_prod = dims.iter().map(|&d| d as f64).product::<f64>();
    if delta_over_sigma <= 0.0 || !delta_over_sigma.is_finite() {
        // Zero or unknown noise: the floor applies.
        return 3;
    }
    let arg = kappa * p * r_prod.sqrt() / (delta_over_sigma * p_prod.sqrt());
    let t = arg.max(1.0).ln().ceil().max(1.0) as usize;
    t + 2
}

/// Iteration count estimated from the data alone.
///
/// The mode-1 Gram spectrum supplies a plug-in signal level (the `r1`-th
/// singular value), condition number, and noise level (root mean residual
/// energy per entry past the top `r1` values); these feed the same `log`
/// rule as [`default_iters`] through the identity
/// `kappa p sqrt(r1 r2 r3) sigma / (delta sqrt(p1 p2 p3)) ~= kappa p sigma / lambda_min`.
pub fn auto_iters(that: &Tensor3, ranks: [usize; 3]) -> Result<usize> {
    let dims = that.dims();
    if ranks[0] == 0 || ranks[0] > dims[0] {
        return Err(Error::Argument(format!(
            "rank {} invalid for mode 1 of dimension {}",
            ranks[0], dims[0]
        )));
    }
    let gram = gram_mode(that, 1)?;
    let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::try_new(gram, f64::EPSILON, 100_000)
        .ok_or(Error::Convergence { residual: f64::NAN })?
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lambda_min = eigs[ranks[0] - 1].sqrt();
    let lambda_max = eigs[0].sqrt();
    if lambda_min <= 1e-12 * lambda_max.max(1e-300) {
        return Err(Error::RankDeficient(format!(
            "mode-1 spectrum collapses at rank {}",
            ranks[0]
        )));
    }
    let kappa = lambda_max / lambda_min;
    let entries = dims.iter().map(|&d| d as f64).product::<f64>();
    let residual: f64 = eigs.iter().skip(ranks[0]).sum();
    let sigma = (residual / entries).sqrt();
    let p = dims.iter().copied().max().unwrap() as f64;
    let arg = kappa * p * sigma / lambda_min;
    let t = arg.max(1.0).ln().ceil().max(1.0) as usize;
    Ok(t + 2)
}

/// Tucker core `that x1 U1^T x2 U2^T x3 U3^T` for the estimated factors.
pub fn core_estimate(that: &Tensor3, fs: &FactorSet) -> Result<Tensor3> {
    let mut t = that.clone();
    for k in 0..3 {
        t = mode_product(&t, &fs.factors[k].matrix().transpose(), k + 1)?;
    }
    Ok(t)
}
