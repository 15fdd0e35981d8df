//! Symmetric eigensolver front-end, truncated left singular vectors via the
//! Gram route, hollowing, subspace distances, Procrustes alignment, and
//! spectral diagnostics of a tensor.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::{matricize, Tensor3};

/// Matrix with orthonormal columns.
#[derive(Debug, Clone)]
pub struct FactorMatrix {
    m: DMatrix<f64>,
}

impl FactorMatrix {
    /// Wraps a matrix after checking `max|U^T U - I| <= 1e-10`.
    pub fn try_new(m: DMatrix<f64>) -> Result<Self> {
        let gram = m.transpose() * &m;
        let r = gram.nrows();
        let dev = (gram - DMatrix::identity(r, r)).amax();
        if dev > 1e-10 {
            return Err(Error::Argument(format!(
                "columns are not orthonormal (max deviation {dev:.3e})"
            )));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn nrows(&self) -> usize {
        self.m.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.m.ncols()
    }
}

/// Nonincreasing sequence of eigen- or singular values.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("spectrum entries must be finite".into()));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Argument("spectrum must be nonincreasing".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Deterministic sign fix: the largest-magnitude entry of each column is made
/// positive; exact ties go to the lowest index.
fn sign_fix_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Top-`r` algebraically-largest eigenpairs of a symmetric matrix.
///
/// Deterministic: fixed solver plus the sign convention of
/// [`sign_fix_columns`].  Fails if the input is not symmetric to
/// `1e-8 * max|a|` or if the per-pair residual exceeds `1e-8 * ||a||`.
pub fn sym_eig_top(a: &DMatrix<f64>, r: usize) -> Result<(Spectrum, FactorMatrix)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Argument(format!("matrix is {}x{}, expected square", n, a.ncols())));
    }
    if r == 0 || r > n {
        return Err(Error::Argument(format!("requested {r} eigenpairs of a {n}x{n} matrix")));
    }
    let amax = a.amax();
    let asym = (a - a.transpose()).amax();
    if asym > 1e-8 * amax.max(1e-300) {
        return Err(Error::Argument(format!(
            "matrix is not symmetric (asymmetry {asym:.3e}, scale {amax:.3e})"
        )));
    }
    // Symmetrize exactly before handing off.
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or(Error::Convergence { residual: f64::NAN })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    let mut vectors = DMatrix::zeros(n, r);
    let mut values = Vec::with_capacity(r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        values.push(eig.eigenvalues[src]);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    sign_fix_columns(&mut vectors);

    // Residual check against the original matrix.
    let norm_a = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for j in 0..r {
        let v = vectors.column(j);
        let resid = (a * v - values[j] * v).norm();
        if resid > 1e-8 * norm_a.max(1e-300) {
            return Err(Error::Convergence { residual: resid });
        }
    }

    Ok((Spectrum::new(values)?, FactorMatrix::try_new(vectors)?))
}

/// Orthonormalizes `m` in place with modified Gram-Schmidt, replacing any
/// numerically dependent column by the first standard basis vector orthogonal
/// to the columns already kept.  Returns true if any column was replaced.
fn orthonormalize_with_completion(m: &mut DMatrix<f64>) -> bool {
    let (n, r) = (m.nrows(), m.ncols());
    let mut replaced = false;
    for j in 0..r {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let col_i = m.column(i).clone_owned();
                let mut col_j = m.column_mut(j);
                col_j.axpy(-proj, &col_i, 1.0);
            }
        }
        let norm = m.column(j).norm();
        if norm > 1e-12 {
            m.column_mut(j).scale_mut(1.0 / norm);
        } else {
            replaced = true;
            // Find a basis vector with small overlap with the kept columns.
            let mut filled = false;
            for e in 0..n {
                let mut cand = DMatrix::zeros(n, 1);
                cand[(e, 0)] = 1.0;
                for i in 0..j {
                    let proj = m.column(i)[e];
                    let col_i = m.column(i).clone_owned();
                    cand.column_mut(0).axpy(-proj, &col_i, 1.0);
                }
                let cn = cand.column(0).norm();
                if cn > 0.5 {
                    cand.scale_mut(1.0 / cn);
                    m.set_column(j, &cand.column(0));
                    filled = true;
                    break;
                }
            }
            debug_assert!(filled, "failed to complete orthonormal basis");
        }
    }
    replaced
}

/// Leading `r` left singular vectors and singular values, computed through
/// the Gram matrix of the smaller side.  Negative Gram eigenvalues are
/// clamped at zero before the square root.
pub fn svd_left_top(m: &DMatrix<f64>, r: usize) -> Result<(Spectrum, FactorMatrix)> {
    let (rows, cols) = (m.nrows(), m.ncols());
    if r == 0 || r > rows.min(cols) {
        return Err(Error::Argument(format!(
            "requested {r} singular vectors of a {rows}x{cols} matrix"
        )));
    }
    if rows <= cols {
        let gram = m * m.transpose();
        let (vals, vecs) = sym_eig_top(&gram, r)?;
        let sing: Vec<f64> = vals.values().iter().map(|&v| v.max(0.0).sqrt()).collect();
        Ok((Spectrum::new(sing)?, vecs))
    } else {
        let gram = m.transpose() * m;
        let (vals, right) = sym_eig_top(&gram, r)?;
        let sing: Vec<f64> = vals.values().iter().map(|&v| v.max(0.0).sqrt()).collect();
        let scale = sing.first().copied().unwrap_or(0.0);
        let mut left = DMatrix::zeros(rows, r);
        for j in 0..r {
            if sing[j] > 1e-14 * scale.max(1e-300) {
                let u = m * right.matrix().column(j) / sing[j];
                left.set_column(j, &u);
            }
            // Zero columns are filled in by the completion below.
        }
        orthonormalize_with_completion(&mut left);
        sign_fix_columns(&mut left);
        Ok((Spectrum::new(sing)?, FactorMatrix::try_new(left)?))
    }
}

/// Zeroes the diagonal of a square matrix.
pub fn hollow(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Argument(format!(
            "hollowing requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut out = a.clone();
    for i in 0..out.nrows() {
        out[(i, i)] = 0.0;
    }
    Ok(out)
}

/// Spectral sin-theta distance `||(I - U U^T) V||` between the column spaces
/// of two orthonormal matrices of equal shape.
pub fn sin_theta(u: &FactorMatrix, v: &FactorMatrix) -> Result<f64> {
    if u.nrows() != v.nrows() || u.ncols() != v.ncols() {
        return Err(Error::Argument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let um = u.matrix();
    let vm = v.matrix();
    let b = vm - um * (um.transpose() * vm);
    let btb = b.transpose() * &b;
    let (vals, _) = sym_eig_top(&btb, 1)?;
    let s = vals.values()[0].max(0.0).sqrt();
    Ok(s.min(1.0))
}

/// Orthogonal Procrustes alignment via the matrix sign function.
#[derive(Debug, Clone)]
pub struct ProcrustesResult {
    /// Orthogonal `r x r` matrix minimizing `||u_ref W - u_hat||_F`.
    pub w: DMatrix<f64>,
    /// True when the cross-Gram was numerically zero and `w` is the identity.
    pub degenerate: bool,
}

/// `W = A B^T` where `A S B^T` is the SVD of `u_ref^T u_hat`.
pub fn procrustes_sign(u_ref: &FactorMatrix, u_hat: &FactorMatrix) -> Result<ProcrustesResult> {
    if u_ref.nrows() != u_hat.nrows() || u_ref.ncols() != u_hat.ncols() {
        return Err(Error::Argument("procrustes inputs must have matching shapes".into()));
    }
    let r = u_ref.ncols();
    let cross = u_ref.matrix().transpose() * u_hat.matrix();
    if cross.amax() < 1e-300 {
        return Ok(ProcrustesResult { w: DMatrix::identity(r, r), degenerate: true });
    }
    let svd = cross.svd(true, true);
    let a = svd.u.as_ref().expect("svd with u");
    let b = svd.v_t.as_ref().expect("svd with v_t");
    Ok(ProcrustesResult { w: a * b, degenerate: false })
}

/// Maximum Euclidean row norm.
pub fn two_inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).norm())
        .fold(0.0f64, f64::max)
}

/// Incoherence `mu_0 = max_k sqrt(p_k / r_k) * ||U_k||_{2,inf}`.
pub fn incoherence(factors: &[FactorMatrix; 3]) -> f64 {
    factors
        .iter()
        .map(|u| ((u.nrows() as f64) / (u.ncols() as f64)).sqrt() * two_inf_norm(u.matrix()))
        .fold(0.0f64, f64::max)
}

/// Gram matrix `M_k(t) M_k(t)^T` of the mode-`k` matricization.
pub fn gram_mode(t: &Tensor3, mode: usize) -> Result<DMatrix<f64>> {
    let m = matricize(t, mode)?;
    Ok(&m * m.transpose())
}

/// Top-`r` singular values and left singular vectors of a matricization,
/// recovered from its precomputed Gram matrix.
pub fn top_factors_from_gram(gram: &DMatrix<f64>, r: usize) -> Result<(Spectrum, FactorMatrix)> {
    let (vals, vecs) = sym_eig_top(gram, r)?;
    let sing: Vec<f64> = vals.values().iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok((Spectrum::new(sing)?, vecs))
}

fn mode_top_singular_values(t: &Tensor3, mode: usize, r: usize) -> Result<Vec<f64>> {
    let gram = gram_mode(t, mode)?;
    let (vals, _) = sym_eig_top(&gram, r)?;
    Ok(vals.values().iter().map(|&v| v.max(0.0).sqrt()).collect())
}

fn check_ranks(t: &Tensor3, ranks: [usize; 3]) -> Result<()> {
    let dims = t.dims();
    for k in 0..3 {
        let p_other = dims[(k + 1) % 3] * dims[(k + 2) % 3];
        if ranks[k] == 0 || ranks[k] > dims[k].min(p_other) {
            return Err(Error::Argument(format!(
                "rank {} invalid for mode {} of a {:?} tensor",
                ranks[k],
                k + 1,
                dims
            )));
        }
    }
    Ok(())
}

/// Smallest `r_k`-th singular value across the three matricizations.
pub fn tensor_lambda_min(t: &Tensor3, ranks: [usize; 3]) -> Result<f64> {
    check_ranks(t, ranks)?;
    let mut lambda = f64::INFINITY;
    for k in 0..3 {
        let sv = mode_top_singular_values(t, k + 1, ranks[k])?;
        let (s1, sr) = (sv[0], sv[ranks[k] - 1]);
        if sr <= 1e-12 * s1 {
            return Err(Error::RankDeficient(format!(
                "mode {} matricization has sigma_{} = {:.3e} vs sigma_1 = {:.3e}",
                k + 1,
                ranks[k],
                sr,
                s1
            )));
        }
        lambda = lambda.min(sr);
    }
    Ok(lambda)
}

/// Condition number `max_k sigma_1 / sigma_{r_k}` over the matricizations.
pub fn tensor_kappa(t: &Tensor3, ranks: [usize; 3]) -> Result<f64> {
    check_ranks(t, ranks)?;
    let mut kappa = 1.0f64;
    for k in 0..3 {
        let sv = mode_top_singular_values(t, k + 1, ranks[k])?;
        let (s1, sr) = (sv[0], sv[ranks[k] - 1]);
        if sr <= 1e-12 * s1 {
            return Err(Error::RankDeficient(format!(
                "mode {} matricization has sigma_{} = {:.3e} vs sigma_1 = {:.3e}",
                k + 1,
                ranks[k],
                sr,
                s1
            )));
        }
        kappa = kappa.max(s1 / sr);
    }
    Ok(kappa)
}
