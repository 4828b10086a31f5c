use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_common, keywords_from_phi, DenseMatrix, DocTermMatrix, ModelFamily, SparseRows, TopicModelResult, TopicModelSpec};
use crate::error::{Error, Result};

/// Output of [`factorize`]: `x ~ w h`.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    /// Squared Frobenius error after each iteration.
    pub trace: Vec<f64>,
}

fn gram_rows(m: &DenseMatrix) -> DenseMatrix {
    // m m^T
    let mut g = DenseMatrix::zeros(m.rows, m.rows);
    for a in 0..m.rows {
        for b in a..m.rows {
            let s: f64 = m.row(a).iter().zip(m.row(b)).map(|(x, y)| x * y).sum();
            g.set(a, b, s);
            g.set(b, a, s);
        }
    }
    g
}

fn gram_cols(m: &DenseMatrix) -> DenseMatrix {
    // m^T m
    let mut g = DenseMatrix::zeros(m.cols, m.cols);
    for r in 0..m.rows {
        let row = m.row(r);
        for a in 0..m.cols {
            for b in a..m.cols {
                g.data[a * m.cols + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..m.cols {
        for b in 0..a {
            g.data[a * m.cols + b] = g.data[b * m.cols + a];
        }
    }
    g
}

/// ||X - WH||_F^2 = ||X||^2 - 2 <X, WH> + <W^T W, H H^T>.
fn objective(x: &SparseRows, x_norm2: f64, w: &DenseMatrix, h: &DenseMatrix) -> f64 {
    let k = w.cols;
    let mut cross = 0.0;
    for (d, row) in x.iter().enumerate() {
        let wd = w.row(d);
        for &(v, val) in row {
            let wh: f64 = (0..k).map(|t| wd[t] * h.get(t, v)).sum();
            cross += val * wh;
        }
    }
    let wtw = gram_cols(w);
    let hht = gram_rows(h);
    let quad: f64 = wtw.data.iter().zip(&hht.data).map(|(a, b)| a * b).sum();
    (x_norm2 - 2.0 * cross + quad).max(0.0)
}

/// Lee-Seung multiplicative updates for the Frobenius objective.
///
/// Stops after `max_iter` iterations or when the relative decrease of the
/// objective falls below `tolerance`.
pub fn factorize(
    x: &SparseRows,
    n_cols: usize,
    rank: usize,
    seed: u64,
    max_iter: usize,
    tolerance: f64,
) -> Result<Factorization> {
    let n_rows = x.len();
    let x_norm2: f64 = x.iter().flatten().map(|(_, v)| v * v).sum();
    if x_norm2 == 0.0 {
        return Err(Error::Degenerate("all-zero matrix".into()));
    }
    let mean = x.iter().flatten().map(|(_, v)| v).sum::<f64>() / (n_rows * n_cols) as f64;
    let scale = (mean / rank as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DenseMatrix::zeros(n_rows, rank);
    let mut h = DenseMatrix::zeros(rank, n_cols);
    // strictly positive start so no entry is stuck at zero
    w.data.iter_mut().for_each(|e| *e = scale * (rng.random::<f64>() + 1e-3));
    h.data.iter_mut().for_each(|e| *e = scale * (rng.random::<f64>() + 1e-3));

    let mut trace = Vec::new();
    let mut prev = objective(x, x_norm2, &w, &h);
    for _ in 0..max_iter {
        // H <- H * (W^T X) / (W^T W H)
        let mut num = DenseMatrix::zeros(rank, n_cols);
        for (d, row) in x.iter().enumerate() {
            let wd = w.row(d);
            for &(v, val) in row {
                for (t, &wdt) in wd.iter().enumerate() {
                    num.data[t * n_cols + v] += wdt * val;
                }
            }
        }
        let wtw = gram_cols(&w);
        for t in 0..rank {
            for v in 0..n_cols {
                let den: f64 = (0..rank).map(|s| wtw.get(t, s) * h.get(s, v)).sum();
                let cur = h.get(t, v);
                h.set(t, v, if den > 0.0 { cur * num.get(t, v) / den } else { 0.0 });
            }
        }

        // W <- W * (X H^T) / (W H H^T)
        let hht = gram_rows(&h);
        for (d, row) in x.iter().enumerate() {
            let mut numw = vec![0.0; rank];
            for &(v, val) in row {
                for (t, n) in numw.iter_mut().enumerate() {
                    *n += val * h.get(t, v);
                }
            }
            let wd: Vec<f64> = w.row(d).to_vec();
            let out = w.row_mut(d);
            for t in 0..rank {
                let den: f64 = (0..rank).map(|s| wd[s] * hht.get(s, t)).sum();
                out[t] = if den > 0.0 { wd[t] * numw[t] / den } else { 0.0 };
            }
        }

        let cur = objective(x, x_norm2, &w, &h);
        trace.push(cur);
        let rel = if prev > 0.0 { (prev - cur) / prev } else { 0.0 };
        prev = cur;
        if cur == 0.0 || rel.abs() < tolerance {
            break;
        }
    }
    Ok(Factorization { w, h, trace })
}

/// NMF on raw counts. theta is W with rows normalized; phi is H as fitted
/// (see [`TopicModelResult::phi_normalized`] for the normalized view).
pub fn fit_nmf(m: &DocTermMatrix, spec: &TopicModelSpec) -> Result<TopicModelResult> {
    check_common(m, spec, ModelFamily::Nmf)?;
    let f = factorize(
        &m.counts_f64(),
        m.n_terms,
        spec.topics,
        spec.seed,
        spec.iterations,
        spec.tolerance,
    )?;
    Ok(TopicModelResult {
        keywords: keywords_from_phi(&f.h, &m.vocabulary, spec.keywords),
        spec: spec.clone(),
        model: "nmf".into(),
        vocab_hash: m.vocab_hash.clone(),
        theta: f.w.row_normalized(),
        phi: f.h,
        objective_trace: f.trace,
        singular_values: None,
        components: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_sparse(rows: &[Vec<f64>]) -> SparseRows {
        rows.iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect())
            .collect()
    }

    fn residual(x: &[Vec<f64>], f: &Factorization) -> f64 {
        let mut s = 0.0;
        for (d, row) in x.iter().enumerate() {
            for (v, &val) in row.iter().enumerate() {
                let wh: f64 = (0..f.w.cols).map(|t| f.w.get(d, t) * f.h.get(t, v)).sum();
                s += (val - wh).powi(2);
            }
        }
        s.sqrt()
    }

    #[test]
    fn rank_one_is_recovered() {
        let u = [1.0, 2.0, 0.5, 3.0];
        let v = [0.2, 1.0, 4.0, 0.0, 2.5];
        let x: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
        let norm = x.iter().flatten().map(|e| e * e).sum::<f64>().sqrt();
        let f = factorize(&dense_to_sparse(&x), 5, 1, 3, 5000, 0.0).unwrap();
        assert!(residual(&x, &f) / norm < 1e-6);
    }

    #[test]
    fn objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..9).map(|_| if rng.random::<f64>() < 0.5 { rng.random_range(1..5) as f64 } else { 0.0 }).collect())
            .collect();
        let f = factorize(&dense_to_sparse(&x), 9, 3, 5, 300, 0.0).unwrap();
        for w in f.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
        // expanded objective agrees with the direct residual
        let last = *f.trace.last().unwrap();
        assert!((last - residual(&x, &f).powi(2)).abs() < 1e-8 * (1.0 + last));
    }

    #[test]
    fn zero_matrix_is_rejected() {
        let x = vec![vec![], vec![]];
        assert!(matches!(factorize(&x, 3, 2, 0, 10, 0.0), Err(Error::Degenerate(_))));
    }
}
