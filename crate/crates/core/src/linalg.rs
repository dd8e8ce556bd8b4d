//! Truncated SVD, energy-based rank selection, PCA and row/column scaling.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{spmm, SparseGraph};

/// Above this many columns PCA switches from an exact to a randomized SVD.
pub const EXACT_PCA_MAX_COLS: usize = 4096;

/// A matrix seen only through products with dense blocks.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A * x` where `x` has `ncols` rows.
    fn apply(&self, x: &DenseMatrix) -> DenseMatrix;
    /// `A^T * x` where `x` has `nrows` rows.
    fn apply_transpose(&self, x: &DenseMatrix) -> DenseMatrix;
}

impl LinearOperator for SparseGraph {
    fn nrows(&self) -> usize {
        self.n()
    }

    fn ncols(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        spmm(self, x).expect("operator shape checked by caller")
    }

    fn apply_transpose(&self, x: &DenseMatrix) -> DenseMatrix {
        if self.is_undirected() {
            return self.apply(x);
        }
        let mut out = DenseMatrix::zeros(self.n(), x.cols());
        for i in 0..self.n() {
            let xi = x.row(i).to_vec();
            for (&j, &v) in self.row_indices(i).iter().zip(self.row_values(i)) {
                for (o, &xv) in out.row_mut(j).iter_mut().zip(&xi) {
                    *o += v * xv;
                }
            }
        }
        out
    }
}

/// Column-centered view of a dense matrix, used by the randomized PCA path.
struct Centered<'a> {
    x: &'a DenseMatrix,
    means: Vec<f64>,
}

impl LinearOperator for Centered<'_> {
    fn nrows(&self) -> usize {
        self.x.rows()
    }

    fn ncols(&self) -> usize {
        self.x.cols()
    }

    fn apply(&self, v: &DenseMatrix) -> DenseMatrix {
        let mut out = self.x.matmul(v).expect("shape");
        // subtract 1 * (means^T v)
        let shift: Vec<f64> = (0..v.cols())
            .map(|k| (0..v.rows()).map(|j| self.means[j] * v.get(j, k)).sum())
            .collect();
        for i in 0..out.rows() {
            for (o, s) in out.row_mut(i).iter_mut().zip(&shift) {
                *o -= s;
            }
        }
        out
    }

    fn apply_transpose(&self, u: &DenseMatrix) -> DenseMatrix {
        let mut out = self.x.transpose().matmul(u).expect("shape");
        let colsum: Vec<f64> = (0..u.cols())
            .map(|k| (0..u.rows()).map(|i| u.get(i, k)).sum())
            .collect();
        for j in 0..out.rows() {
            let m = self.means[j];
            for (o, s) in out.row_mut(j).iter_mut().zip(&colsum) {
                *o -= m * s;
            }
        }
        out
    }
}

/// Rank-`r` singular triples, singular values in non-increasing order.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `n x r` left singular vectors.
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    /// `m x r` right singular vectors.
    pub v: DenseMatrix,
}

/// Subspace-iteration settings. Power iterations run at least
/// `power_iterations` times and continue, up to `max_power_iterations`, until
/// the leading `r` singular-value estimates change by less than `tolerance`
/// (relative) between sweeps.
#[derive(Clone, Copy, Debug)]
pub struct SvdConfig {
    pub oversampling: usize,
    pub power_iterations: usize,
    pub max_power_iterations: usize,
    pub tolerance: f64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        SvdConfig {
            oversampling: 10,
            power_iterations: 2,
            max_power_iterations: 40,
            tolerance: 1e-10,
        }
    }
}

/// Rows per chunk in the Gram reduction; fixed so the summation order does
/// not depend on the thread count.
const GRAM_CHUNK: usize = 4096;

/// Smallest Cholesky pivot ratio accepted before falling back to Householder.
const CHOLESKY_QR_MIN_RATIO: f64 = 1e-5;

fn householder_orthonormalize(y: &DenseMatrix) -> DenseMatrix {
    let q = y.to_nalgebra().qr().q();
    DenseMatrix::from_nalgebra(&q)
}

/// `Y^T Y` summed over fixed row chunks in chunk order.
fn gram(y: &DenseMatrix) -> DMatrix<f64> {
    let l = y.cols();
    let partials: Vec<Vec<f64>> = y
        .as_slice()
        .par_chunks(GRAM_CHUNK * l.max(1))
        .map(|chunk| {
            let mut g = vec![0.0; l * l];
            for row in chunk.chunks_exact(l) {
                for a in 0..l {
                    let ra = row[a];
                    if ra == 0.0 {
                        continue;
                    }
                    for (gv, &rb) in g[a * l + a..(a + 1) * l].iter_mut().zip(&row[a..]) {
                        *gv += ra * rb;
                    }
                }
            }
            g
        })
        .collect();
    let mut g = DMatrix::<f64>::zeros(l, l);
    for p in &partials {
        for a in 0..l {
            for b in a..l {
                g[(a, b)] += p[a * l + b];
            }
        }
    }
    for a in 0..l {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// One Cholesky-QR pass: `Y R^{-1}` with `R^T R = Y^T Y`. `None` when the Gram
/// matrix is too ill-conditioned for the result to be trusted.
fn cholesky_qr_pass(y: &DenseMatrix) -> Option<DenseMatrix> {
    let l = y.cols();
    let chol = gram(y).cholesky()?;
    let lower = chol.l();
    let diag: Vec<f64> = (0..l).map(|i| lower[(i, i)]).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0 && min / max >= CHOLESKY_QR_MIN_RATIO) {
        return None;
    }
    let lt: Vec<f64> = (0..l * l).map(|k| lower[(k / l, k % l)]).collect();
    let mut q = y.clone();
    // each row solves L q^T = y^T by forward substitution
    q.as_mut_slice().par_chunks_mut(l).for_each(|row| {
        for i in 0..l {
            let mut acc = row[i];
            for (k, &lv) in lt[i * l..i * l + i].iter().enumerate() {
                acc -= lv * row[k];
            }
            row[i] = acc / lt[i * l + i];
        }
    });
    Some(q)
}

/// Orthonormal basis of the columns of `y`: two Cholesky-QR passes, or
/// Householder QR when `y` is close to rank deficient.
fn orthonormalize(y: &DenseMatrix) -> DenseMatrix {
    if y.rows() < y.cols() || y.cols() == 0 {
        return householder_orthonormalize(y);
    }
    match cholesky_qr_pass(y).and_then(|q| cholesky_qr_pass(&q)) {
        Some(q) => q,
        None => householder_orthonormalize(y),
    }
}

/// Top `r` singular values of a tall matrix from the eigenvalues of its Gram
/// matrix. Only used to monitor convergence.
fn gram_singular_values(w: &DenseMatrix, r: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = gram(w)
        .symmetric_eigenvalues()
        .iter()
        .map(|&e| e.max(0.0).sqrt())
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev.truncate(r);
    ev
}

/// Flips column `k` of `u` (and `v`) so the largest-magnitude entry of `u`'s
/// column is positive. The first index wins ties.
fn fix_signs(u: &mut DenseMatrix, v: &mut DenseMatrix) {
    for k in 0..u.cols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..u.rows() {
            let x = u.get(i, k);
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..u.rows() {
                u.set(i, k, -u.get(i, k));
            }
            for i in 0..v.rows() {
                v.set(i, k, -v.get(i, k));
            }
        }
    }
}

/// Randomized subspace-iteration SVD of any linear operator.
pub fn randomized_svd(
    op: &dyn LinearOperator,
    r: usize,
    seed: u64,
    cfg: &SvdConfig,
) -> Result<SvdResult> {
    let (m, n) = (op.nrows(), op.ncols());
    if r == 0 || r > m.min(n) {
        return Err(Error::Argument(format!(
            "rank {r} outside 1..={} for a {m}x{n} operator",
            m.min(n)
        )));
    }
    let l = (r + cfg.oversampling).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DenseMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(&op.apply(&omega));
    let mut w = op.apply_transpose(&q);
    let mut prev = gram_singular_values(&w, r);
    let max_iter = cfg.max_power_iterations.max(cfg.power_iterations);
    for it in 1..=max_iter {
        q = orthonormalize(&op.apply(&orthonormalize(&w)));
        w = op.apply_transpose(&q);
        let cur = gram_singular_values(&w, r);
        let scale = cur.first().copied().unwrap_or(0.0);
        let delta = cur
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prev = cur;
        if it >= cfg.power_iterations && delta <= cfg.tolerance * scale {
            break;
        }
    }
    // B = Q^T A = W^T with W = A^T Q; factor the tall W = P S R^T so that
    // B = R S P^T, giving U = Q R and V = P.
    let w = w.to_nalgebra();
    let svd = w.svd(true, true);
    let p = svd.u.expect("requested");
    let r_mat = svd.v_t.expect("requested").transpose();

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(r);

    let qn = q.to_nalgebra();
    let u_full = &qn * &r_mat;
    let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let mut u = DenseMatrix::from_fn(m, r, |i, k| u_full[(i, order[k])]);
    let mut v = DenseMatrix::from_fn(n, r, |i, k| p[(i, order[k])]);
    fix_signs(&mut u, &mut v);
    Ok(SvdResult { u, sigma, v })
}

/// Rank-`r` truncated SVD of a sparse matrix with the default
/// [`SvdConfig`] and a seeded Gaussian test matrix.
pub fn truncated_svd(s: &SparseGraph, r: usize, seed: u64) -> Result<SvdResult> {
    randomized_svd(s, r, seed, &SvdConfig::default())
}

/// Smallest `r` whose leading squared singular values hold at least
/// `threshold` of `||A||_F^2`, clamped to `cap`.
///
/// Candidate ranks double from 16 until the threshold is met or the
/// candidate reaches `min(n, cap)`. A matrix without stored energy gets
/// `min(n, cap)`.
pub fn select_rank_by_energy(
    s: &SparseGraph,
    threshold: f64,
    cap: usize,
    seed: u64,
) -> Result<usize> {
    rank_by_energy_with_svd(s, threshold, cap, seed).map(|(r, _)| r)
}

/// [`select_rank_by_energy`] plus the last SVD it computed, which covers at
/// least the selected rank. `None` for a matrix without stored energy.
pub fn rank_by_energy_with_svd(
    s: &SparseGraph,
    threshold: f64,
    cap: usize,
    seed: u64,
) -> Result<(usize, Option<SvdResult>)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Argument(format!("energy threshold {threshold} not in (0, 1)")));
    }
    if cap == 0 {
        return Err(Error::Argument("rank cap must be at least 1".into()));
    }
    let limit = s.n().min(cap);
    if limit == 0 {
        return Err(Error::Argument("cannot select a rank for an empty matrix".into()));
    }
    let total = s.frobenius_sq();
    if total == 0.0 {
        return Ok((limit, None));
    }
    let mut candidate = 16usize;
    loop {
        let k = candidate.min(limit);
        let svd = truncated_svd(s, k, seed)?;
        let mut acc = 0.0;
        let mut found = None;
        for (i, sv) in svd.sigma.iter().enumerate() {
            acc += sv * sv;
            if acc / total >= threshold {
                found = Some((i + 1).min(cap));
                break;
            }
        }
        if let Some(r) = found {
            return Ok((r, Some(svd)));
        }
        if k == limit {
            return Ok((limit, Some(svd)));
        }
        candidate *= 2;
    }
}

/// Centers the columns of `x` and projects them onto the top `r` principal
/// directions. Each direction is signed so its largest-magnitude entry is
/// positive.
pub fn pca_reduce(x: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let (n, d) = x.shape();
    if r == 0 || r > n.min(d) {
        return Err(Error::Argument(format!(
            "PCA rank {r} outside 1..={} for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    let means = column_means(x);
    let directions = if d <= EXACT_PCA_MAX_COLS {
        let mut xc = x.to_nalgebra();
        for (j, m) in means.iter().enumerate() {
            xc.column_mut(j).add_scalar_mut(-m);
        }
        let svd = xc.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut dirs = DMatrix::<f64>::zeros(d, r);
        for (k, &src) in order.iter().take(r).enumerate() {
            for j in 0..d {
                dirs[(j, k)] = vt[(src, j)];
            }
        }
        DenseMatrix::from_nalgebra(&dirs)
    } else {
        let op = Centered {
            x,
            means: means.clone(),
        };
        randomized_svd(&op, r, 0, &SvdConfig::default())?.v
    };
    let mut dirs = directions;
    let mut scratch = DenseMatrix::zeros(0, r);
    // sign by the direction itself
    fix_signs(&mut dirs, &mut scratch);

    let mut out = DenseMatrix::zeros(n, r);
    let mut centered_row = vec![0.0; d];
    for i in 0..n {
        for ((c, &v), m) in centered_row.iter_mut().zip(x.row(i)).zip(&means) {
            *c = v - m;
        }
        let orow = out.row_mut(i);
        for (k, o) in orow.iter_mut().enumerate() {
            *o = centered_row
                .iter()
                .enumerate()
                .map(|(j, c)| c * dirs.get(j, k))
                .sum();
        }
    }
    Ok(out)
}

fn column_means(x: &DenseMatrix) -> Vec<f64> {
    let (n, d) = x.shape();
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (m, v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    if n > 0 {
        means.iter_mut().for_each(|m| *m /= n as f64);
    }
    means
}

/// Scales each row to unit Euclidean norm. Zero rows stay zero.
pub fn l2_normalize_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Per-column z-scores with the population (1/n) variance. Constant columns
/// map to zero.
pub fn standardize_columns(x: &DenseMatrix) -> DenseMatrix {
    let (n, d) = x.shape();
    let means = column_means(x);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|s| if n > 0 { (s / n as f64).sqrt() } else { 0.0 })
        .collect();
    let mut out = DenseMatrix::zeros(n, d);
    for i in 0..n {
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            let scale = std[j];
            // relative cutoff so that rounding noise in a constant column is not amplified
            *o = if scale > 1e-12 * means[j].abs().max(1.0) {
                (x.get(i, j) - means[j]) / scale
            } else {
                0.0
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthogonality_error(q: &DenseMatrix) -> f64 {
        let g = gram(q);
        (0..q.cols())
            .flat_map(|a| (0..q.cols()).map(move |b| (a, b)))
            .map(|(a, b)| (g[(a, b)] - if a == b { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn orthonormalize_spans_the_input() {
        let y = DenseMatrix::from_fn(9000, 6, |i, j| ((i * 7 + j * 13) % 17) as f64 + (i == j) as u8 as f64);
        let q = orthonormalize(&y);
        assert!(orthogonality_error(&q) < 1e-12);
        // projecting y onto span(q) reproduces y
        let coef = q.transpose().matmul(&y).unwrap();
        let back = q.matmul(&coef).unwrap();
        assert!(back.max_abs_diff(&y) < 1e-9 * y.frobenius_norm());
    }

    #[test]
    fn orthonormalize_falls_back_on_dependent_columns() {
        // third column duplicates the first
        let y = DenseMatrix::from_fn(50, 3, |i, j| if j == 2 { i as f64 } else { (i * (j + 1)) as f64 + (j as f64) });
        assert!(cholesky_qr_pass(&y).is_none());
        let q = orthonormalize(&y);
        assert!(q.is_finite());
        assert!(orthogonality_error(&q) < 1e-10);
    }

    #[test]
    fn identity_singular_values() {
        let svd = truncated_svd(&SparseGraph::identity(4), 2, 7).unwrap();
        for s in &svd.sigma {
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_one_matrix() {
        let n = 6;
        let u: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let v: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -2.0 }).collect();
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                trip.push((i, j, u[i] / nu * v[j] / nv));
            }
        }
        let s = SparseGraph::from_triplets(n, &trip).unwrap();
        let svd = truncated_svd(&s, 3, 1).unwrap();
        assert!((svd.sigma[0] - 1.0).abs() < 1e-6);
        assert!(svd.sigma[1..].iter().all(|&x| x <= 1e-6));
        assert_eq!(select_rank_by_energy(&s, 0.9, 100, 0).unwrap(), 1);
    }

    #[test]
    fn rank_beyond_n_is_rejected() {
        assert!(truncated_svd(&SparseGraph::identity(3), 4, 0).is_err());
        assert!(truncated_svd(&SparseGraph::identity(3), 0, 0).is_err());
    }

    #[test]
    fn identity_energy_rank() {
        assert_eq!(
            select_rank_by_energy(&SparseGraph::identity(10), 0.9, 100, 3).unwrap(),
            9
        );
    }

    #[test]
    fn empty_matrix_energy_rank_is_cap() {
        assert_eq!(select_rank_by_energy(&SparseGraph::empty(5), 0.9, 3, 0).unwrap(), 3);
    }

    #[test]
    fn pca_of_constant_rows_is_zero() {
        let x = DenseMatrix::from_fn(5, 3, |_, j| j as f64 + 0.5);
        let p = pca_reduce(&x, 2).unwrap();
        assert!(p.as_slice().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn pca_on_a_line() {
        // points (t, 2t); the first score is the signed distance along the line
        let ts = [-2.0, -0.5, 0.0, 1.0, 1.5];
        let x = DenseMatrix::from_fn(5, 2, |i, j| ts[i] * if j == 0 { 1.0 } else { 2.0 });
        let p = pca_reduce(&x, 2).unwrap();
        let mean_t = ts.iter().sum::<f64>() / 5.0;
        for (i, t) in ts.iter().enumerate() {
            let want = (t - mean_t) * 5f64.sqrt();
            assert!((p.get(i, 0) - want).abs() < 1e-12, "{} vs {want}", p.get(i, 0));
            assert!(p.get(i, 1).abs() <= 1e-10);
        }
    }

    #[test]
    fn pca_rank_too_large() {
        let x = DenseMatrix::zeros(3, 2);
        assert!(pca_reduce(&x, 3).is_err());
    }

    #[test]
    fn row_normalization() {
        let x = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let y = l2_normalize_rows(&x);
        assert!((y.get(0, 0) - 0.6).abs() < 1e-15 && (y.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(y.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn standardize_examples() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let z = standardize_columns(&x);
        let col = z.column(0);
        let mean = col.iter().sum::<f64>() / 3.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(z.column(1), vec![0.0, 0.0, 0.0]);
    }
}
