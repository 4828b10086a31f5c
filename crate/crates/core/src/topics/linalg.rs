//! Truncated SVD by block subspace iteration with Rayleigh-Ritz extraction.
//!
//! Blocks are stored column-major as `Vec<Vec<f64>>` (one `Vec` per column).
//! The small projected problem is solved with one-sided Jacobi rotations,
//! which are accurate to working precision for every singular value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr_shim::standard_normal;

use super::SparseRows;
use crate::error::{Error, Result};

mod rand_distr_shim {
    use rand::Rng;

    /// Box-Muller standard normal draw.
    pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Debug, Clone)]
pub struct Svd {
    /// Left singular vectors, one column per component (length = rows).
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Right singular vectors, one column per component (length = cols).
    pub v: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Largest residual `||A v_i - sigma_i u_i|| / sigma_1` at exit.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A x for each column x of `block` (len = n_cols).
fn apply(a: &SparseRows, block: &[Vec<f64>]) -> Vec<Vec<f64>> {
    block
        .iter()
        .map(|x| a.iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()).collect())
        .collect()
}

/// A^T y for each column y of `block` (len = n_rows).
fn apply_t(a: &SparseRows, n_cols: usize, block: &[Vec<f64>]) -> Vec<Vec<f64>> {
    block
        .iter()
        .map(|y| {
            let mut out = vec![0.0; n_cols];
            for (r, row) in a.iter().enumerate() {
                let yr = y[r];
                if yr != 0.0 {
                    for &(c, v) in row {
                        out[c] += v * yr;
                    }
                }
            }
            out
        })
        .collect()
}

/// Modified Gram-Schmidt, run twice for stability. Columns that vanish
/// (numerically dependent) are set to zero.
pub fn orthonormalize(block: &mut [Vec<f64>]) {
    let scale = block.iter().map(|c| norm(c)).fold(0.0, f64::max);
    for j in 0..block.len() {
        for _ in 0..2 {
            for i in 0..j {
                let (head, tail) = block.split_at_mut(j);
                let qi = &head[i];
                let r = dot(qi, &tail[0]);
                tail[0].iter_mut().zip(qi).for_each(|(x, q)| *x -= r * q);
            }
        }
        let n = norm(&block[j]);
        if n > 1e-13 * scale.max(f64::MIN_POSITIVE) {
            block[j].iter_mut().for_each(|x| *x /= n);
        } else {
            block[j].iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// One-sided Jacobi SVD of a tall matrix given by its columns.
///
/// Returns `(w, sigma, z)` with `M = W diag(sigma) Z^T`, sigma descending,
/// W columns orthonormal (zero for null directions) and Z orthogonal
/// (`z[j]` is column j).
pub fn jacobi_svd(cols: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let b = cols.len();
    let mut m: Vec<Vec<f64>> = cols.to_vec();
    let mut z: Vec<Vec<f64>> = (0..b)
        .map(|j| (0..b).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..b {
            for q in p + 1..b {
                let alpha = dot(&m[p], &m[p]);
                let beta = dot(&m[q], &m[q]);
                let gamma = dot(&m[p], &m[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut m, &mut z] {
                    let (lo, hi) = mat.split_at_mut(q);
                    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (a, bq) = (*xp, *xq);
                        *xp = c * a - s * bq;
                        *xq = s * a + c * bq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..b).collect();
    let sig: Vec<f64> = m.iter().map(|c| norm(c)).collect();
    order.sort_by(|&i, &j| sig[j].total_cmp(&sig[i]).then(i.cmp(&j)));
    let top = sig.iter().copied().fold(0.0, f64::max);
    let mut w = Vec::with_capacity(b);
    let mut sigma = Vec::with_capacity(b);
    let mut zz = Vec::with_capacity(b);
    for &j in &order {
        let s = sig[j];
        let col = if s > 1e-300 && s > top * 1e-15 {
            m[j].iter().map(|x| x / s).collect()
        } else {
            vec![0.0; m[j].len()]
        };
        w.push(col);
        sigma.push(s);
        zz.push(z[j].clone());
    }
    (w, sigma, zz)
}

/// Rank-`k` SVD of the sparse matrix `a` (rows x `n_cols`).
///
/// Iterates a block of `k + oversample` vectors until the largest relative
/// residual of the leading `k` Ritz triplets drops to `tolerance`, or
/// `max_iter` passes have run. Signs are fixed so the largest-magnitude
/// entry of each right vector is positive.
pub fn truncated_svd(
    a: &SparseRows,
    n_cols: usize,
    k: usize,
    seed: u64,
    tolerance: f64,
    max_iter: usize,
) -> Result<Svd> {
    let n_rows = a.len();
    let full = n_rows.min(n_cols);
    if k == 0 || k > full {
        return Err(Error::RankDeficient {
            requested: k,
            rank: full,
        });
    }
    let block = (k + 10).min(full);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n_cols).map(|_| standard_normal(&mut rng)).collect())
        .collect();
    let mut y = apply(a, &start);

    let mut result = None;
    for it in 1..=max_iter.max(1) {
        let mut u = y;
        orthonormalize(&mut u);
        let m = apply_t(a, n_cols, &u);
        let (w, sigma, z) = jacobi_svd(&m);
        y = apply(a, &w);
        // left Ritz vectors U z_j
        let left: Vec<Vec<f64>> = z
            .iter()
            .map(|zj| {
                let mut col = vec![0.0; n_rows];
                for (ui, &c) in u.iter().zip(zj) {
                    col.iter_mut().zip(ui).for_each(|(o, x)| *o += c * x);
                }
                col
            })
            .collect();
        let s1 = sigma[0].max(f64::MIN_POSITIVE);
        let residual = (0..k)
            .map(|j| {
                let r: Vec<f64> = y[j].iter().zip(&left[j]).map(|(a, b)| a - sigma[j] * b).collect();
                norm(&r) / s1
            })
            .fold(0.0, f64::max);
        let done = residual <= tolerance || it == max_iter.max(1) || block == full;
        result = Some(Svd {
            u: left,
            sigma,
            v: w,
            iterations: it,
            residual,
        });
        if done {
            break;
        }
    }
    let mut svd = result.expect("at least one iteration");
    svd.u.truncate(k);
    svd.v.truncate(k);
    svd.sigma.truncate(k);
    for j in 0..k {
        let v = &svd.v[j];
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            svd.v[j].iter_mut().for_each(|x| *x = -*x);
            svd.u[j].iter_mut().for_each(|x| *x = -*x);
        }
    }
    let s1 = svd.sigma[0];
    let threshold = s1 * n_rows.max(n_cols) as f64 * f64::EPSILON * 10.0;
    let rank = svd.sigma.iter().filter(|&&s| s > threshold).count();
    if s1 == 0.0 || rank < k {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    Ok(svd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse(rows: &[&[f64]]) -> SparseRows {
        rows.iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect())
            .collect()
    }

    #[test]
    fn diagonal_matrix() {
        let a = sparse(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let svd = truncated_svd(&a, 3, 3, 1, 1e-12, 50).unwrap();
        for (got, want) in svd.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let a = sparse(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert!(matches!(truncated_svd(&a, 2, 2, 0, 1e-12, 50), Err(Error::RankDeficient { rank: 1, .. })));
        assert!(matches!(truncated_svd(&a, 2, 3, 0, 1e-12, 50), Err(Error::RankDeficient { .. })));
        assert!(truncated_svd(&a, 2, 1, 0, 1e-12, 50).is_ok());
    }

    #[test]
    fn jacobi_reconstructs() {
        let cols = vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 0.0, 1.0, -1.0], vec![0.5, 0.5, 0.5, 0.5]];
        let (w, s, z) = jacobi_svd(&cols);
        for (j, col) in cols.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                let rec: f64 = (0..3).map(|r| w[r][i] * s[r] * z[r][j]).sum();
                assert!((rec - x).abs() < 1e-12);
            }
        }
        assert!(s.windows(2).all(|p| p[0] >= p[1]));
    }
}
