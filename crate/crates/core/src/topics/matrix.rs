use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedCorpus;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Rows scaled to sum to one. All-zero rows become uniform.
    pub fn row_normalized(&self) -> DenseMatrix {
        let mut out = self.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|x| *x /= s);
            } else {
                let u = 1.0 / row.len() as f64;
                row.iter_mut().for_each(|x| *x = u);
            }
        }
        out
    }

    /// Raw little-endian `f64` bytes in row-major order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != rows * cols * 8 {
            return Err(Error::DimensionMismatch {
                expected: rows * cols * 8,
                found: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(DenseMatrix { rows, cols, data })
    }
}

/// Sparse rows of `(column, value)` pairs, each row sorted by column.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

/// Document-term count matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTermMatrix {
    pub n_docs: usize,
    pub n_terms: usize,
    /// Per document, `(term, count)` sorted by term; counts are >= 1.
    pub rows: Vec<Vec<(usize, u32)>>,
    pub vocabulary: Vec<String>,
    pub vocab_hash: String,
}

impl DocTermMatrix {
    pub fn get(&self, doc: usize, term: usize) -> u32 {
        self.rows[doc]
            .binary_search_by_key(&term, |&(t, _)| t)
            .map_or(0, |i| self.rows[doc][i].1)
    }

    pub fn total_count(&self) -> u64 {
        self.rows.iter().flatten().map(|&(_, c)| c as u64).sum()
    }

    pub fn counts_f64(&self) -> SparseRows {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(t, c)| (t, c as f64)).collect())
            .collect()
    }

    /// Number of documents containing each term.
    pub fn document_frequency(&self) -> Vec<usize> {
        let mut df = vec![0; self.n_terms];
        for &(t, _) in self.rows.iter().flatten() {
            df[t] += 1;
        }
        df
    }

    /// tf-idf weights with smoothed idf `ln((1 + N) / (1 + df)) + 1`, rows
    /// scaled to unit L2 norm.
    pub fn tfidf(&self) -> SparseRows {
        let n = self.n_docs as f64;
        let idf: Vec<f64> = self
            .document_frequency()
            .into_iter()
            .map(|df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
            .collect();
        self.rows
            .iter()
            .map(|r| {
                let mut row: Vec<(usize, f64)> =
                    r.iter().map(|&(t, c)| (t, c as f64 * idf[t])).collect();
                let norm = row.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|(_, x)| *x /= norm);
                }
                row
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_docs, self.n_terms);
        for (d, row) in self.rows.iter().enumerate() {
            for &(t, c) in row {
                m.set(d, t, c as f64);
            }
        }
        m
    }
}

pub fn build_matrix(tc: &TokenizedCorpus) -> Result<DocTermMatrix> {
    if tc.n_docs() == 0 || tc.n_tokens() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let rows = tc
        .docs
        .iter()
        .map(|doc| {
            let mut sorted = doc.clone();
            sorted.sort_unstable();
            let mut row: Vec<(usize, u32)> = Vec::new();
            for t in sorted {
                match row.last_mut() {
                    Some((last, c)) if *last == t => *c += 1,
                    _ => row.push((t, 1)),
                }
            }
            row
        })
        .collect();
    Ok(DocTermMatrix {
        n_docs: tc.n_docs(),
        n_terms: tc.n_terms(),
        rows,
        vocabulary: tc.vocabulary.clone(),
        vocab_hash: tc.vocab_hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusRole, MonthKey};

    fn tc(docs: &[&[&str]]) -> TokenizedCorpus {
        let m = MonthKey::new(2020, 1).unwrap();
        TokenizedCorpus::from_tokens(
            docs.iter()
                .enumerate()
                .map(|(i, d)| (format!("d{i}"), m, d.iter().map(|s| s.to_string()).collect()))
                .collect(),
            CorpusRole::User,
        )
        .unwrap()
    }

    #[test]
    fn counts_terms_per_document() {
        let t = tc(&[&["a", "b", "a"]]);
        let m = build_matrix(&t).unwrap();
        assert_eq!(m.rows[0], vec![(0, 2), (1, 1)]);
        assert_eq!(m.get(0, 0), 2);
        assert_eq!(m.get(0, 1), 1);
    }

    #[test]
    fn disjoint_documents_are_block_diagonal() {
        let t = tc(&[&["a", "b"], &["c", "d", "d"]]);
        let m = build_matrix(&t).unwrap();
        let dense = m.to_dense();
        assert_eq!(dense.row(0), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(dense.row(1), &[0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn total_count_is_conserved() {
        let t = tc(&[&["x", "y", "x", "z"], &["y"], &["z", "z"]]);
        let m = build_matrix(&t).unwrap();
        assert_eq!(m.total_count() as usize, t.n_tokens());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let t = tc(&[]);
        assert!(matches!(build_matrix(&t), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn tfidf_rows_have_unit_norm() {
        let t = tc(&[&["a", "b", "a"], &["b", "c"]]);
        let m = build_matrix(&t).unwrap();
        for row in m.tfidf() {
            let n: f64 = row.iter().map(|(_, x)| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn le_bytes_layout() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5]]);
        let bytes = m.to_le_bytes();
        assert_eq!(&bytes[8..16], &2.0f64.to_le_bytes());
        assert_eq!(DenseMatrix::from_le_bytes(2, 2, &bytes).unwrap(), m);
        assert!(DenseMatrix::from_le_bytes(3, 2, &bytes).is_err());
    }
}
