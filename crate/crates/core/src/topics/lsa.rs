use super::linalg::truncated_svd;
use super::{check_common, keywords_from_phi, DenseMatrix, DocTermMatrix, ModelFamily, TopicModelResult, TopicModelSpec};
use crate::error::Result;

/// LSA: rank-T truncated SVD of the tf-idf matrix.
///
/// Keywords come from the largest absolute loadings of each right singular
/// vector, so `phi` holds those absolute loadings and `components` keeps
/// the signed vectors. theta is the row-normalized absolute document
/// loadings `|U Sigma|`.
pub fn fit_lsa(m: &DocTermMatrix, spec: &TopicModelSpec) -> Result<TopicModelResult> {
    check_common(m, spec, ModelFamily::Lsa)?;
    let svd = truncated_svd(
        &m.tfidf(),
        m.n_terms,
        spec.topics,
        spec.seed,
        spec.tolerance,
        spec.iterations,
    )?;
    let t = spec.topics;
    let mut components = DenseMatrix::zeros(t, m.n_terms);
    for (k, v) in svd.v.iter().enumerate() {
        components.row_mut(k).copy_from_slice(v);
    }
    let mut phi = components.clone();
    phi.data.iter_mut().for_each(|x| *x = x.abs());

    let mut loadings = DenseMatrix::zeros(m.n_docs, t);
    for (k, u) in svd.u.iter().enumerate() {
        for (d, &x) in u.iter().enumerate() {
            loadings.set(d, k, (x * svd.sigma[k]).abs());
        }
    }
    let trace = vec![svd.residual];
    Ok(TopicModelResult {
        keywords: keywords_from_phi(&phi, &m.vocabulary, spec.keywords),
        spec: spec.clone(),
        model: "lsa".into(),
        vocab_hash: m.vocab_hash.clone(),
        phi,
        theta: loadings.row_normalized(),
        objective_trace: trace,
        singular_values: Some(svd.sigma),
        components: Some(components),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusRole, MonthKey};
    use crate::error::Error;
    use crate::preprocess::TokenizedCorpus;
    use crate::topics::build_matrix;

    fn matrix(docs: &[&[&str]]) -> DocTermMatrix {
        let m = MonthKey::new(2020, 1).unwrap();
        let tc = TokenizedCorpus::from_tokens(
            docs.iter()
                .enumerate()
                .map(|(i, d)| (format!("d{i}"), m, d.iter().map(|s| s.to_string()).collect()))
                .collect(),
            CorpusRole::User,
        )
        .unwrap();
        build_matrix(&tc).unwrap()
    }

    #[test]
    fn fits_and_normalizes() {
        let m = matrix(&[
            &["track", "hand", "controller"],
            &["track", "hand"],
            &["price", "refund"],
            &["price", "refund", "cost"],
            &["hand", "controller"],
        ]);
        let spec = TopicModelSpec::new(ModelFamily::Lsa, 2, 2).with_tolerance(1e-10);
        let r = fit_lsa(&m, &spec).unwrap();
        r.validate().unwrap();
        let sv = r.singular_values.as_ref().unwrap();
        assert!(sv[0] >= sv[1]);
        assert_eq!(r.keywords.len(), 2);
    }

    #[test]
    fn too_many_topics_is_rank_error() {
        let m = matrix(&[&["a", "b"], &["a", "b"], &["c", "d"]]);
        let spec = TopicModelSpec::new(ModelFamily::Lsa, 3, 1);
        assert!(matches!(fit_lsa(&m, &spec), Err(Error::RankDeficient { .. })));
    }
}
