use std::path::Path;

use serde::{Deserialize, Serialize};

use super::document::{check_unique, FactorDocument};
use super::embed::{cosine, Embedder, EmbeddingVector};
use super::{Result, StoreError};

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub document: FactorDocument,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Immutable document store searched by exhaustive cosine scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorIndex {
    embedder_id: String,
    dim: usize,
    documents: Vec<FactorDocument>,
    embeddings: Vec<EmbeddingVector>,
}

pub fn build_index(documents: Vec<FactorDocument>, embedder: &dyn Embedder) -> Result<FactorIndex> {
    if documents.is_empty() {
        return Err(StoreError::Corpus("cannot index an empty corpus".into()));
    }
    check_unique(&documents)?;
    let embeddings = documents
        .iter()
        .map(|d| embedder.embed(&d.text))
        .collect::<Result<Vec<_>>>()?;
    let dim = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(StoreError::Index("embedder returned vectors of differing dimension".into()));
    }
    Ok(FactorIndex {
        embedder_id: embedder.id(),
        dim,
        documents,
        embeddings,
    })
}

impl FactorIndex {
    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn documents(&self) -> &[FactorDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn retrieve(&self, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<RetrievalResult>> {
        self.retrieve_in(embedder, query, k, None)
    }

    /// Top-`k` documents by cosine similarity, optionally restricted to one
    /// variable. Ties keep insertion order.
    pub fn retrieve_in(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
        variable: Option<&str>,
    ) -> Result<Vec<RetrievalResult>> {
        if k == 0 {
            return Err(StoreError::Input("k must be at least 1".into()));
        }
        if embedder.id() != self.embedder_id {
            return Err(StoreError::Index(format!(
                "index was built with embedder `{}`, query uses `{}`",
                self.embedder_id,
                embedder.id()
            )));
        }
        let q = embedder.embed(query)?;
        if q.dim() != self.dim {
            return Err(StoreError::Index(format!(
                "query embedding has dimension {}, index has {}",
                q.dim(),
                self.dim
            )));
        }
        let mut scored: Vec<(usize, f64)> = self
            .documents
            .iter()
            .zip(&self.embeddings)
            .enumerate()
            .filter(|(_, (d, _))| variable.is_none_or(|v| d.variable == v))
            .map(|(i, (_, e))| (i, cosine(&q, e)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, (i, score))| RetrievalResult {
                document: self.documents[i].clone(),
                score,
                rank: r + 1,
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let index: FactorIndex = serde_json::from_str(crate::artifact::ArtifactHeader::strip(&text))?;
        if index.documents.len() != index.embeddings.len() {
            return Err(StoreError::Index("documents and embeddings are not aligned".into()));
        }
        if index.embeddings.iter().any(|e| e.dim() != index.dim) {
            return Err(StoreError::Index("stored embeddings have inconsistent dimension".into()));
        }
        check_unique(&index.documents)?;
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;
    use crate::store::{survey_corpus, HashEmbedder, QueryNormalizer};
    use proptest::prelude::*;

    struct OtherEmbedder;

    impl Embedder for OtherEmbedder {
        fn id(&self) -> String {
            "other".into()
        }
        fn embed(&self, text: &str) -> Result<EmbeddingVector> {
            HashEmbedder.embed(text)
        }
    }

    fn index() -> FactorIndex {
        build_index(survey_corpus(), &HashEmbedder).unwrap()
    }

    #[test]
    fn every_document_retrieves_itself_first() {
        let idx = index();
        assert_eq!(idx.len(), 40);
        for d in idx.documents() {
            let top = &idx.retrieve(&HashEmbedder, &d.text, 2).unwrap();
            assert_eq!(&top[0].document, d);
            assert!(top[0].score > top[1].score, "{}", d.text);
        }
    }

    #[test]
    fn income_query_maps_to_bracket_document() {
        let idx = index();
        let q = QueryNormalizer::new(&FeatureSchema::survey()).annotate("annual income $52,000");
        let top = &idx.retrieve(&HashEmbedder, &q, 1).unwrap()[0];
        assert_eq!(top.document.level_label, "$50–74,999");
        assert_eq!(top.document.probability, 0.265);
    }

    #[test]
    fn empty_corpus_and_duplicates_are_rejected() {
        assert!(matches!(build_index(vec![], &HashEmbedder), Err(StoreError::Corpus(_))));
        let mut docs = survey_corpus();
        docs.push(docs[3].clone());
        assert!(matches!(build_index(docs, &HashEmbedder), Err(StoreError::Corpus(_))));
    }

    #[test]
    fn mismatched_embedder_is_refused() {
        let idx = index();
        assert!(matches!(idx.retrieve(&OtherEmbedder, "age", 1), Err(StoreError::Index(_))));
    }

    #[test]
    fn persisted_index_reloads_identically() {
        let idx = index();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        let again = FactorIndex::load(&path).unwrap();
        assert_eq!(again, idx);
        for q in ["college degree", "renter", "on the water", "65 years old"] {
            assert_eq!(
                idx.retrieve(&HashEmbedder, q, 5).unwrap(),
                again.retrieve(&HashEmbedder, q, 5).unwrap()
            );
        }
    }

    #[test]
    fn variable_filter_restricts_results() {
        let idx = index();
        let r = idx.retrieve_in(&HashEmbedder, "Decreased", 10, Some("flood_amount")).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|x| x.document.variable == "flood_amount"));
        assert_eq!(r[0].document.level_label, "Decreased");
    }

    proptest! {
        #[test]
        fn full_ranking_matches_brute_force(query in "[a-z ]{1,12}[a-z]") {
            let idx = index();
            let results = idx.retrieve(&HashEmbedder, &query, 40).unwrap();
            let q = HashEmbedder.embed(&query).unwrap();
            let oracle: Vec<f64> = idx
                .documents()
                .iter()
                .map(|d| {
                    let e = HashEmbedder.embed(&d.text).unwrap();
                    q.values.iter().zip(&e.values).map(|(a, b)| a * b).sum()
                })
                .collect();
            let mut sorted = oracle.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            prop_assert_eq!(results.len(), 40);
            let mut seen = std::collections::HashSet::new();
            for (r, expected) in results.iter().zip(&sorted) {
                let i = idx.documents().iter().position(|d| d == &r.document).unwrap();
                prop_assert!(seen.insert(i));
                prop_assert!((r.score - oracle[i]).abs() < 1e-12);
                prop_assert!((r.score - expected).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r.score));
            }
            prop_assert!(results.windows(2).all(|w| w[0].score >= w[1].score));
            let ranks: Vec<usize> = results.iter().map(|r| r.rank).collect();
            prop_assert_eq!(ranks, (1..=40).collect::<Vec<_>>());
        }
    }
}
