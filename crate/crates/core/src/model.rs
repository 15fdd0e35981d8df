//! Ground-truth mixed-membership tensor models and the synthetic
//! heteroskedastic Gaussian noise generator.
//!
//! All sampling takes an explicit RNG; independent trials should use
//! independent streams derived from `(seed, trial)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    gram_mode, incoherence, tensor_kappa, tensor_lambda_min, top_factors_from_gram, FactorMatrix,
};
use crate::tensor::{multilinear, Tensor3};

/// Row-stochastic membership matrix with entries in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Membership {
    m: DMatrix<f64>,
}

impl Membership {
    /// Validates nonnegativity and row sums equal to one within `1e-12`.
    pub fn try_new(m: DMatrix<f64>) -> Result<Self> {
        for i in 0..m.nrows() {
            let mut sum = 0.0;
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Argument(format!(
                        "membership entry ({i}, {j}) = {v} is negative or non-finite"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Argument(format!("row {i} sums to {sum}, expected 1")));
            }
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

    /// Indices of rows that equal a standard basis vector within `1e-12`.
    pub fn pure_rows(&self) -> Vec<usize> {
        (0..self.m.nrows())
            .filter(|&i| {
                (0..self.m.ncols()).any(|j| (self.m[(i, j)] - 1.0).abs() <= 1e-12)
            })
            .collect()
    }

    /// True when every row is a standard basis vector.
    pub fn is_discrete(&self) -> bool {
        self.pure_rows().len() == self.m.nrows()
    }

    /// Per-row community labels for a discrete membership matrix.
    pub fn labels(&self) -> Result<Vec<usize>> {
        if !self.is_discrete() {
            return Err(Error::Argument("labels are defined only for discrete memberships".into()));
        }
        Ok((0..self.m.nrows())
            .map(|i| {
                (0..self.m.ncols())
                    .find(|&j| (self.m[(i, j)] - 1.0).abs() <= 1e-12)
                    .unwrap()
            })
            .collect())
    }

    /// Returns a row-permuted copy together with the permutation applied
    /// (`out.row(i) = self.row(perm[i])`).
    pub fn shuffle_rows<R: Rng>(&self, rng: &mut R) -> (Membership, Vec<usize>) {
        let p = self.m.nrows();
        let mut perm: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let mut out = DMatrix::zeros(p, self.m.ncols());
        for (i, &src) in perm.iter().enumerate() {
            out.set_row(i, &self.m.row(src));
        }
        (Membership { m: out }, perm)
    }
}

/// Heteroskedastic noise specification: per-entry standard deviations are
/// `sigma_max * Beta(alpha, alpha)` draws.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub sigma_max: f64,
    pub alpha: f64,
}

impl NoiseSpec {
    pub fn new(sigma_max: f64, alpha: f64) -> Result<Self> {
        if !(sigma_max >= 0.0) {
            return Err(Error::Argument(format!("sigma_max must be >= 0, got {sigma_max}")));
        }
        if !(alpha > 0.0) {
            return Err(Error::Argument(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { sigma_max, alpha })
    }
}

const CORE_RETRIES: usize = 32;

/// Draws an i.i.d. standard normal core and rescales it so that its smallest
/// matricization singular value equals `delta` exactly.  Redraws (up to a
/// bounded retry budget) if any matricization is rank-deficient.
pub fn sample_core<R: Rng>(ranks: [usize; 3], delta: f64, rng: &mut R) -> Result<Tensor3> {
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("delta must be > 0, got {delta}")));
    }
    for _ in 0..CORE_RETRIES {
        let draw = Tensor3::from_fn(ranks, |_, _, _| StandardNormal.sample(rng));
        match tensor_lambda_min(&draw, ranks) {
            Ok(lambda) => return Ok(draw.scale(delta / lambda)),
            Err(Error::RankDeficient(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "failed to draw a full-rank core of ranks {ranks:?} in {CORE_RETRIES} attempts"
    )))
}

/// Samples a membership matrix whose first `r` rows are the pure nodes
/// `e_1..e_r` and whose remaining rows are i.i.d. symmetric Dirichlet draws
/// with the given concentration.
pub fn sample_membership_with<R: Rng>(
    p: usize,
    r: usize,
    concentration: f64,
    rng: &mut R,
) -> Result<Membership> {
    if p < r || r == 0 {
        return Err(Error::Argument(format!("need p >= r >= 1, got p = {p}, r = {r}")));
    }
    if !(concentration > 0.0) {
        return Err(Error::Argument(format!(
            "Dirichlet concentration must be > 0, got {concentration}"
        )));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::Argument(format!("bad Dirichlet concentration: {e}")))?;
    let mut m = DMatrix::zeros(p, r);
    for l in 0..r {
        m[(l, l)] = 1.0;
    }
    for i in r..p {
        // Dirichlet via normalized Gamma draws.
        let mut row = vec![0.0f64; r];
        loop {
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = gamma.sample(rng);
                sum += *v;
            }
            if sum > 0.0 {
                for v in row.iter_mut() {
                    *v /= sum;
                }
                break;
            }
        }
        // Force the row sum to exactly 1 against accumulated rounding.
        let sum: f64 = row.iter().sum();
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = v / sum;
        }
    }
    Membership::try_new(m)
}

/// Uniform-on-the-simplex memberships (`Dirichlet(1, ..., 1)`) with pure
/// nodes at the first `r` rows.
pub fn sample_membership<R: Rng>(p: usize, r: usize, rng: &mut R) -> Result<Membership> {
    sample_membership_with(p, r, 1.0, rng)
}

/// Discrete membership with balanced communities: round-robin assignment
/// shuffled uniformly, so each community has `floor(p/r)` or `ceil(p/r)`
/// members.
pub fn sample_blockmodel_membership<R: Rng>(p: usize, r: usize, rng: &mut R) -> Result<Membership> {
    if p < r || r == 0 {
        return Err(Error::Argument(format!("need p >= r >= 1, got p = {p}, r = {r}")));
    }
    let mut labels: Vec<usize> = (0..p).map(|i| i % r).collect();
    for i in (1..p).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    let mut m = DMatrix::zeros(p, r);
    for (i, &l) in labels.iter().enumerate() {
        m[(i, l)] = 1.0;
    }
    Membership::try_new(m)
}

/// Signal tensor `S x1 Pi1 x2 Pi2 x3 Pi3`.
pub fn synth_tensor(core: &Tensor3, memberships: &[Membership; 3]) -> Result<Tensor3> {
    let ranks = core.dims();
    for (k, pi) in memberships.iter().enumerate() {
        if pi.ncols() != ranks[k] {
            return Err(Error::Argument(format!(
                "membership {} has {} columns but the core has dimension {}",
                k + 1,
                pi.ncols(),
                ranks[k]
            )));
        }
    }
    multilinear(
        core,
        memberships[0].matrix(),
        memberships[1].matrix(),
        memberships[2].matrix(),
    )
}

/// Heteroskedastic Gaussian noise: `sigma_ijk ~ sigma_max * Beta(alpha, alpha)`
/// then `Z_ijk ~ N(0, sigma_ijk^2)`, drawn entrywise in lexicographic order.
pub fn sample_noise<R: Rng>(dims: [usize; 3], spec: &NoiseSpec, rng: &mut R) -> Result<Tensor3> {
    let beta = Beta::new(spec.alpha, spec.alpha)
        .map_err(|e| Error::Argument(format!("bad Beta parameter: {e}")))?;
    Ok(Tensor3::from_fn(dims, |_, _, _| {
        let sigma = spec.sigma_max * beta.sample(rng);
        let g: f64 = StandardNormal.sample(rng);
        sigma * g
    }))
}

/// Ground-truth bundle: core, memberships, signal tensor, and spectral
/// diagnostics.
#[derive(Debug, Clone)]
pub struct MixedModel {
    pub core: Tensor3,
    pub memberships: [Membership; 3],
    pub signal: Tensor3,
    /// Exact leading left singular factors of each matricization of the
    /// signal tensor.
    pub factors: [FactorMatrix; 3],
    pub delta: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub mu0: f64,
}

impl MixedModel {
    pub fn new(core: Tensor3, memberships: [Membership; 3]) -> Result<Self> {
        let ranks = core.dims();
        let signal = synth_tensor(&core, &memberships)?;
        let delta = tensor_lambda_min(&core, ranks)?;

        let mut factors = Vec::with_capacity(3);
        let mut lambda = f64::INFINITY;
        let mut kappa = 1.0f64;
        for k in 0..3 {
            let gram = gram_mode(&signal, k + 1)?;
            let (sv, u) = top_factors_from_gram(&gram, ranks[k])?;
            let (s1, sr) = (sv.values()[0], sv.values()[ranks[k] - 1]);
            if sr <= 1e-12 * s1 {
                return Err(Error::RankDeficient(format!(
                    "signal matricization {} is rank-deficient",
                    k + 1
                )));
            }
            lambda = lambda.min(sr);
            kappa = kappa.max(s1 / sr);
            factors.push(u);
        }
        let factors: [FactorMatrix; 3] = factors.try_into().expect("three factors");
        let mu0 = incoherence(&factors);

        Ok(Self { core, memberships, signal, factors, delta, lambda, kappa, mu0 })
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.signal.dims()
    }

    /// Full diagnostics recomputed from the tensor definition (slower than
    /// the cached fields; used for cross-checks).
    pub fn recompute_kappa(&self) -> Result<f64> {
        tensor_kappa(&self.signal, self.ranks())
    }
}
