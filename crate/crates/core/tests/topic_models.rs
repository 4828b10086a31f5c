use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use htmodel::corpus::{CorpusRole, MonthKey};
use htmodel::preprocess::TokenizedCorpus;
use htmodel::topics::linalg::truncated_svd;
use htmodel::topics::factorize;
use htmodel::topics::{build_matrix, fit_lda, ModelFamily, SparseRows, TopicModelSpec};

fn two_vocab_corpus(seed: u64) -> (TokenizedCorpus, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let month = MonthKey::new(2021, 6).unwrap();
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for d in 0..200 {
        let g = d % 2;
        let toks = (0..12).map(|_| format!("{}{}", ["alpha", "omega"][g], rng.random_range(0..5))).collect();
        docs.push((format!("d{d}"), month, toks));
        labels.push(g);
    }
    (TokenizedCorpus::from_tokens(docs, CorpusRole::User).unwrap(), labels)
}

#[test]
fn lda_recovers_two_disjoint_vocabularies() {
    let start = Instant::now();
    let mut good = 0;
    for seed in 0..5 {
        let (tc, labels) = two_vocab_corpus(seed);
        let m = build_matrix(&tc).unwrap();
        let spec = TopicModelSpec::new(ModelFamily::Lda, 2, 5).with_iterations(100).with_seed(seed);
        let r = fit_lda(&m, &spec).unwrap();
        let dom = r.dominant_topics();
        let agree = dom.iter().zip(&labels).filter(|(a, b)| a == b).count();
        let purity = agree.max(labels.len() - agree) as f64 / labels.len() as f64;
        if purity >= 0.95 {
            good += 1;
        }
    }
    assert!(good >= 3, "purity >= 0.95 on {good} of 5 seeds");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> (SparseRows, DMatrix<f64>) {
    let mut dense = DMatrix::zeros(rows, cols);
    let mut sparse: SparseRows = vec![Vec::new(); rows];
    for (r, row) in sparse.iter_mut().enumerate() {
        for c in 0..cols {
            if rng.random::<f64>() < density {
                let v = rng.random_range(1..6) as f64;
                dense[(r, c)] = v;
                row.push((c, v));
            }
        }
    }
    (sparse, dense)
}

#[test]
fn nmf_objective_never_increases() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let rows = rng.random_range(5..25);
        let cols = rng.random_range(5..25);
        let (x, _) = random_sparse(&mut rng, rows, cols, 0.4);
        if x.iter().all(|r| r.is_empty()) {
            continue;
        }
        let rank = rng.random_range(1..5);
        let f = factorize(&x, cols, rank, seed, 200, 0.0).unwrap();
        for (i, w) in f.trace.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-9, "fixture {seed}, step {i}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn nmf_rank_one_reconstruction() {
    let u = [0.5, 1.0, 2.0, 3.0, 0.25, 1.5];
    let v = [1.0, 0.0, 2.0, 0.5, 3.0, 1.0, 0.1];
    let x: SparseRows = u
        .iter()
        .map(|a| v.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, b)| (j, a * b)).collect())
        .collect();
    let f = factorize(&x, v.len(), 1, 9, 5000, 0.0).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for (i, a) in u.iter().enumerate() {
        for (j, b) in v.iter().enumerate() {
            let want = a * b;
            let got = f.w.get(i, 0) * f.h.get(0, j);
            err += (want - got) * (want - got);
            norm += want * want;
        }
    }
    assert!((err / norm).sqrt() < 1e-6);
}

#[test]
fn lsa_matches_dense_svd() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let (a, dense) = random_sparse(&mut rng, 20, 30, 0.5);
        let oracle = dense.clone().svd(false, false).singular_values;
        let mut sorted: Vec<f64> = oracle.iter().copied().collect();
        sorted.sort_by(|x, y| y.total_cmp(x));
        for k in [3, 8, 20] {
            let svd = truncated_svd(&a, 30, k, seed, 1e-13, 5000).unwrap();
            assert_eq!(svd.sigma.len(), k);
            for (i, want) in sorted.iter().enumerate().take(k) {
                assert!(
                    (svd.sigma[i] - want).abs() < 1e-8,
                    "seed {seed} k {k} sigma[{i}] {} vs {}",
                    svd.sigma[i],
                    sorted[i]
                );
            }
            for (vecs, len) in [(&svd.u, 20usize), (&svd.v, 30usize)] {
                for i in 0..k {
                    assert_eq!(vecs[i].len(), len);
                    for j in 0..k {
                        let d: f64 = vecs[i].iter().zip(&vecs[j]).map(|(x, y)| x * y).sum();
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((d - want).abs() < 1e-6, "seed {seed} k {k} <{i},{j}> = {d}");
                    }
                }
            }
            // A v_i = sigma_i u_i
            for i in 0..k {
                let av = &dense * nalgebra::DVector::from_column_slice(&svd.v[i]);
                for r in 0..20 {
                    assert!((av[r] - svd.sigma[i] * svd.u[i][r]).abs() < 1e-6);
                }
            }
        }
    }
}
