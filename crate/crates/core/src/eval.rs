//! Permutation-aligned error metrics, sin-theta reports, and K-medians
//! clustering with perfect-recovery checks.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hooi::FactorSet;
use crate::linalg::{sin_theta, FactorMatrix};
use crate::model::Membership;

/// Best column permutation and the errors it achieves.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// `permutation[l]` is the truth column matched to estimate column `l`,
    /// i.e. the argmin over permutations `P` of the row errors of
    /// `truth - est * P`.
    pub permutation: Vec<usize>,
    /// Minimized max-row Euclidean error.
    pub l2inf_error: f64,
    /// Average row l1 error, minimized independently over the same
    /// permutation family.
    pub avg_l1_error: f64,
}

const EXHAUSTIVE_LIMIT: usize = 8;

fn for_each_permutation(r: usize, mut f: impl FnMut(&[usize])) {
    // Heap's algorithm, iterative.
    let mut perm: Vec<usize> = (0..r).collect();
    let mut c = vec![0usize; r];
    f(&perm);
    let mut i = 0;
    while i < r {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Row errors of `truth - est * P` where `P` maps estimate column `l` to
/// truth column `perm[l]`.
fn perm_errors(est: &DMatrix<f64>, truth: &DMatrix<f64>, perm: &[usize]) -> (f64, f64) {
    let (p, r) = (est.nrows(), est.ncols());
    let mut max_l2 = 0.0f64;
    let mut sum_l1 = 0.0f64;
    for i in 0..p {
        let mut l2 = 0.0;
        let mut l1 = 0.0;
        for l in 0..r {
            let d = truth[(i, perm[l])] - est[(i, l)];
            l2 += d * d;
            l1 += d.abs();
        }
        max_l2 = max_l2.max(l2.sqrt());
        sum_l1 += l1;
    }
    (max_l2, sum_l1 / p as f64)
}

/// Finds the permutation minimizing the max-row Euclidean error between an
/// estimate and the truth; also reports the independently minimized average
/// l1 error.  Exhaustive for `r <= 8`; larger ranks use a linear-assignment
/// relaxation on a column-pairing cost, which may be suboptimal for the
/// max-row objective.
pub fn align_memberships(est: &Membership, truth: &Membership) -> Result<AlignmentResult> {
    align_matrices(est.matrix(), truth.matrix())
}

/// Same as [`align_memberships`] on raw matrices.
pub fn align_matrices(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<AlignmentResult> {
    if est.nrows() != truth.nrows() || est.ncols() != truth.ncols() {
        return Err(Error::Argument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            est.nrows(),
            est.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    let r = est.ncols();
    if r <= EXHAUSTIVE_LIMIT {
        let mut best_perm: Vec<usize> = (0..r).collect();
        let mut best_l2inf = f64::INFINITY;
        let mut best_avg_l1 = f64::INFINITY;
        for_each_permutation(r, |perm| {
            let (l2inf, avg_l1) = perm_errors(est, truth, perm);
            if l2inf < best_l2inf {
                best_l2inf = l2inf;
                best_perm = perm.to_vec();
            }
            if avg_l1 < best_avg_l1 {
                best_avg_l1 = avg_l1;
            }
        });
        Ok(AlignmentResult { permutation: best_perm, l2inf_error: best_l2inf, avg_l1_error: best_avg_l1 })
    } else {
        // Column-pairing cost: sum_i |est_{il} - truth_{im}|.
        let mut cost = vec![vec![0.0f64; r]; r];
        for (l, row) in cost.iter_mut().enumerate() {
            for (m, c) in row.iter_mut().enumerate() {
                *c = (0..est.nrows()).map(|i| (est[(i, l)] - truth[(i, m)]).abs()).sum();
            }
        }
        let perm = hungarian(&cost);
        let (l2inf, avg_l1) = perm_errors(est, truth, &perm);
        Ok(AlignmentResult { permutation: perm, l2inf_error: l2inf, avg_l1_error: avg_l1 })
    }
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)).  Returns `perm` with row `l` assigned to column
/// `perm[l]`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // column -> row (1-based rows, 0 = none)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    perm
}

/// Average row l1 error under a fixed permutation.
pub fn avg_l1_error(est: &Membership, truth: &Membership, perm: &[usize]) -> Result<f64> {
    if est.nrows() != truth.nrows() || est.ncols() != truth.ncols() {
        return Err(Error::Argument("shape mismatch".into()));
    }
    if perm.len() != est.ncols() {
        return Err(Error::Argument("permutation length mismatch".into()));
    }
    let (_, avg) = perm_errors(est.matrix(), truth.matrix(), perm);
    Ok(avg)
}

/// K-medians clustering output.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    /// Per-row community labels in `0..r`.
    pub labels: Vec<usize>,
    /// Coordinate-wise median centers, one row per community.
    pub centers: DMatrix<f64>,
    /// Total l1 distance of rows to their assigned centers.
    pub cost: f64,
}

fn l1_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|c| (a[(i, c)] - b[(j, c)]).abs()).sum()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Lloyd-style K-medians: l1-distance assignment with coordinate-wise median
/// center updates, best of `restarts` seeded starts by total l1 cost.  An
/// emptied cluster is re-seeded at the row farthest from its current center.
pub fn kmedians<R: Rng>(
    rows: &DMatrix<f64>,
    r: usize,
    restarts: usize,
    iters: usize,
    rng: &mut R,
) -> Result<ClusterResult> {
    let p = rows.nrows();
    if p < r || r == 0 {
        return Err(Error::Argument(format!("need p >= r >= 1, got p = {p}, r = {r}")));
    }
    let d = rows.ncols();
    let mut best: Option<ClusterResult> = None;

    for _restart in 0..restarts.max(1) {
        // Distinct random rows as initial centers.
        let mut idx: Vec<usize> = (0..p).collect();
        for i in 0..r {
            let j = rng.gen_range(i..p);
            idx.swap(i, j);
        }
        let mut centers = DMatrix::zeros(r, d);
        for c in 0..r {
            centers.set_row(c, &rows.row(idx[c]));
        }

        let mut labels = vec![0usize; p];
        for _it in 0..iters.max(1) {
            // Assignment.
            let mut changed = false;
            for i in 0..p {
                let mut best_c = 0usize;
                let mut best_d = f64::INFINITY;
                for c in 0..r {
                    let dist = l1_dist(rows, i, &centers, c);
                    if dist < best_d {
                        best_d = dist;
                        best_c = c;
                    }
                }
                if labels[i] != best_c {
                    labels[i] = best_c;
                    changed = true;
                }
            }
            // Center update.
            for c in 0..r {
                let members: Vec<usize> = (0..p).filter(|&i| labels[i] == c).collect();
                if members.is_empty() {
                    // Re-seed at the farthest point from its assigned center.
                    let far = (0..p)
                        .max_by(|&a, &b| {
                            let da = l1_dist(rows, a, &centers, labels[a]);
                            let db = l1_dist(rows, b, &centers, labels[b]);
                            da.partial_cmp(&db).unwrap()
                        })
                        .unwrap();
                    centers.set_row(c, &rows.row(far));
                    labels[far] = c;
                    continue;
                }
                for j in 0..d {
                    let mut vals: Vec<f64> = members.iter().map(|&i| rows[(i, j)]).collect();
                    centers[(c, j)] = median(&mut vals);
                }
            }
            if !changed && _it > 0 {
                break;
            }
        }

        let cost: f64 = (0..p).map(|i| l1_dist(rows, i, &centers, labels[i])).sum();
        if best.as_ref().map_or(true, |b| cost < b.cost) {
            best = Some(ClusterResult { labels, centers, cost });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Misclustering fraction after the best label permutation; perfect recovery
/// iff the fraction is exactly zero.
pub fn perfect_recovery(cluster: &ClusterResult, truth: &Membership) -> Result<(bool, f64)> {
    let truth_labels = truth.labels()?;
    let p = truth_labels.len();
    if cluster.labels.len() != p {
        return Err(Error::Argument("label length mismatch".into()));
    }
    let r = truth.ncols();
    if r > EXHAUSTIVE_LIMIT {
        return Err(Error::Capability(format!(
            "exhaustive label matching supports r <= {EXHAUSTIVE_LIMIT}"
        )));
    }
    let mut best_mismatch = usize::MAX;
    for_each_permutation(r, |perm| {
        let mismatch = (0..p)
            .filter(|&i| {
                let mapped = if cluster.labels[i] < r { perm[cluster.labels[i]] } else { usize::MAX };
                mapped != truth_labels[i]
            })
            .count();
        best_mismatch = best_mismatch.min(mismatch);
    });
    let frac = best_mismatch as f64 / p as f64;
    Ok((frac == 0.0, frac))
}

/// Per-mode sin-theta distances between estimated and true factors.
pub fn sintheta_report(fs: &FactorSet, truth: &[FactorMatrix; 3]) -> Result<[f64; 3]> {
    let mut out = [0.0f64; 3];
    for k in 0..3 {
        out[k] = sin_theta(&truth[k], &fs.factors[k])?;
    }
    Ok(out)
}
