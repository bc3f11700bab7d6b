//! Curated question/SQL pairs and similarity retrieval over them.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::guard::{Origin, QueryCandidate, SqlGuard, ValidationReport};
use crate::provider::{cosine, EmbeddingProvider, EmbeddingVector, ProviderError};

/// Exemplars shipped with the crate.
pub const DEFAULT_EXEMPLARS: &str = include_str!("../data/exemplars.toml");

pub const DEFAULT_K: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ExemplarError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("exemplar file: {0}")]
    Format(String),
    #[error("duplicate exemplar id `{0}`")]
    DuplicateId(String),
    #[error("exemplar `{id}` is invalid: {reason}")]
    InvalidExemplar {
        id: String,
        reason: String,
        report: Option<ValidationReport>,
    },
    #[error("the exemplar store is empty")]
    EmptyStore,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarPair {
    pub id: String,
    pub question: String,
    pub sql: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Deserialize)]
struct ExemplarFile {
    #[serde(default)]
    exemplar: Vec<ExemplarPair>,
}

/// Parses exemplars and validates each query with the guard's read-only and
/// syntax checks.
pub fn parse_exemplars(text: &str, guard: &SqlGuard) -> Result<Vec<ExemplarPair>, ExemplarError> {
    let file: ExemplarFile =
        toml::from_str(text).map_err(|e| ExemplarError::Format(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(file.exemplar.len());
    for mut pair in file.exemplar {
        if !seen.insert(pair.id.clone()) {
            return Err(ExemplarError::DuplicateId(pair.id));
        }
        pair.sql = pair.sql.trim().to_owned();
        if pair.question.trim().is_empty() {
            return Err(ExemplarError::InvalidExemplar {
                id: pair.id,
                reason: "empty question".into(),
                report: None,
            });
        }
        let candidate = QueryCandidate::new(pair.sql.clone(), Origin::Gold).map_err(|e| {
            ExemplarError::InvalidExemplar {
                id: pair.id.clone(),
                reason: e.to_string(),
                report: None,
            }
        })?;
        let report = guard.check(&candidate);
        if report.is_rejected() {
            let reason = report
                .errors()
                .map(|d| d.message.clone())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(ExemplarError::InvalidExemplar {
                id: pair.id,
                reason,
                report: Some(report),
            });
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn load_exemplars(path: &Path, guard: &SqlGuard) -> Result<Vec<ExemplarPair>, ExemplarError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExemplarError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_exemplars(&text, guard)
}

/// Where the prebuilt index of an exemplar file lives.
pub fn index_path_for(exemplars: &Path) -> std::path::PathBuf {
    let mut name = exemplars.file_name().unwrap_or_default().to_os_string();
    name.push(".index.json");
    exemplars.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub vector: EmbeddingVector,
}

/// Exact cosine index, tied to the embedding provider that built it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityIndex {
    pub provider_id: String,
    pub entries: Vec<IndexEntry>,
}

impl SimilarityIndex {
    pub fn build(
        exemplars: &[ExemplarPair],
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Self, ExemplarError> {
        let mut entries = Vec::with_capacity(exemplars.len());
        for ex in exemplars {
            entries.push(IndexEntry {
                id: ex.id.clone(),
                vector: embedder.embed(&ex.question)?,
            });
        }
        if let Some(first) = entries.first() {
            let dim = first.vector.dimension();
            if let Some(bad) = entries.iter().find(|e| e.vector.dimension() != dim) {
                return Err(ExemplarError::Format(format!(
                    "embedding of `{}` has a different dimension",
                    bad.id
                )));
            }
        }
        Ok(Self {
            provider_id: embedder.id(),
            entries,
        })
    }

    /// Entries ranked by descending similarity to `query`, ties by id.
    pub fn rank(&self, query: &EmbeddingVector) -> Vec<(String, f64)> {
        let mut scored: Vec<(String, f64)> = self
            .entries
            .iter()
            .map(|e| (e.id.clone(), cosine(query, &e.vector)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored
    }

    /// True when the index covers exactly these exemplars.
    pub fn matches(&self, exemplars: &[ExemplarPair], provider_id: &str) -> bool {
        self.provider_id == provider_id
            && self.entries.len() == exemplars.len()
            && self
                .entries
                .iter()
                .zip(exemplars)
                .all(|(e, x)| e.id == x.id)
    }

    pub fn save(&self, path: &Path) -> Result<(), ExemplarError> {
        let text = serde_json::to_string(self).map_err(|e| ExemplarError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| ExemplarError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ExemplarError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExemplarError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ExemplarError::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredExemplar {
    pub exemplar: ExemplarPair,
    pub similarity: f64,
}

/// Exemplars plus a lazily built index. The index is rebuilt, and swapped in
/// whole, whenever the embedding provider changes.
#[derive(Debug)]
pub struct ExampleStore {
    exemplars: Vec<ExemplarPair>,
    index: RwLock<Option<Arc<SimilarityIndex>>>,
}

impl ExampleStore {
    pub fn new(exemplars: Vec<ExemplarPair>) -> Self {
        Self {
            exemplars,
            index: RwLock::new(None),
        }
    }

    pub fn with_index(exemplars: Vec<ExemplarPair>, index: SimilarityIndex) -> Self {
        Self {
            exemplars,
            index: RwLock::new(Some(Arc::new(index))),
        }
    }

    pub fn exemplars(&self) -> &[ExemplarPair] {
        &self.exemplars
    }

    pub fn get(&self, id: &str) -> Option<&ExemplarPair> {
        self.exemplars.iter().find(|e| e.id == id)
    }

    /// Current index for `embedder`, building it if missing or stale.
    pub fn index_for(
        &self,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Arc<SimilarityIndex>, ExemplarError> {
        let provider_id = embedder.id();
        if let Some(idx) = self
            .index
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .as_ref()
        {
            if idx.matches(&self.exemplars, &provider_id) {
                return Ok(idx.clone());
            }
        }
        let built = Arc::new(SimilarityIndex::build(&self.exemplars, embedder)?);
        *self.index.write().unwrap_or_else(|p| p.into_inner()) = Some(built.clone());
        Ok(built)
    }

    /// The `k` exemplars most similar to `question`, best first.
    pub fn top_k(
        &self,
        question: &str,
        k: usize,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Vec<ScoredExemplar>, ExemplarError> {
        if self.exemplars.is_empty() {
            return Err(ExemplarError::EmptyStore);
        }
        let index = self.index_for(embedder)?;
        let query = embedder.embed(question)?;
        Ok(index
            .rank(&query)
            .into_iter()
            .take(k)
            .filter_map(|(id, similarity)| {
                self.get(&id).map(|e| ScoredExemplar {
                    exemplar: e.clone(),
                    similarity,
                })
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{describe_database, Annotations};
    use crate::ingest::SCHEMA_SQL;
    use crate::provider::ScriptedProvider;

    fn guard() -> SqlGuard {
        let conn = rusqlite::Connection::open_in_memory().unwrap();
        conn.execute_batch(SCHEMA_SQL).unwrap();
        let (catalog, _) = describe_database(&conn, &Annotations::builtin()).unwrap();
        SqlGuard::new(catalog).unwrap()
    }

    fn embedder() -> ScriptedProvider {
        ScriptedProvider::new(Vec::new(), 42, 256)
    }

    fn file(pairs: &[(&str, &str, &str)]) -> String {
        pairs
            .iter()
            .map(|(id, q, sql)| {
                format!("[[exemplar]]\nid = \"{id}\"\nquestion = \"{q}\"\nsql = \"{sql}\"\n")
            })
            .collect()
    }

    #[test]
    fn shipped_exemplars_pass_the_guard() {
        let ex = parse_exemplars(DEFAULT_EXEMPLARS, &guard()).unwrap();
        for family in ["T1", "T2", "T3"] {
            assert!(
                ex.iter().any(|e| e.tags.contains(family)),
                "no exemplar for {family}"
            );
        }
    }

    #[test]
    fn five_valid_pairs_load() {
        let pairs: Vec<(String, String, String)> = (0..5)
            .map(|i| {
                (
                    format!("e{i}"),
                    format!("question {i}"),
                    format!("select {i}"),
                )
            })
            .collect();
        let refs: Vec<(&str, &str, &str)> = pairs
            .iter()
            .map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str()))
            .collect();
        assert_eq!(parse_exemplars(&file(&refs), &guard()).unwrap().len(), 5);
    }

    #[test]
    fn drop_table_is_invalid() {
        let err = parse_exemplars(&file(&[("bad", "q", "DROP TABLE x")]), &guard()).unwrap_err();
        assert!(
            matches!(err, ExemplarError::InvalidExemplar { ref id, .. } if id == "bad"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = parse_exemplars(
            &file(&[("a", "q", "select 1"), ("a", "r", "select 2")]),
            &guard(),
        )
        .unwrap_err();
        assert!(matches!(err, ExemplarError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn identical_question_ranks_first_and_k_is_capped() {
        let store = ExampleStore::new(
            parse_exemplars(
                &file(&[
                    ("a", "Which routes serve Bologna?", "select 1"),
                    ("b", "How many stops are there?", "select 2"),
                    ("c", "Draw the map of line 18", "select 3"),
                ]),
                &guard(),
            )
            .unwrap(),
        );
        let top = store
            .top_k("How many stops are there?", 10, &embedder())
            .unwrap();
        assert_eq!(top.len(), 3);
        assert_eq!(top[0].exemplar.id, "b");
        assert!((top[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_store_errors() {
        let store = ExampleStore::new(Vec::new());
        assert!(matches!(
            store.top_k("q", 3, &embedder()),
            Err(ExemplarError::EmptyStore)
        ));
    }

    #[test]
    fn index_is_rebuilt_for_a_new_provider() {
        let store = ExampleStore::new(
            parse_exemplars(&file(&[("a", "one two", "select 1")]), &guard()).unwrap(),
        );
        let first = store.index_for(&embedder()).unwrap();
        assert!(Arc::ptr_eq(&first, &store.index_for(&embedder()).unwrap()));
        let other = ScriptedProvider::new(Vec::new(), 7, 64);
        let second = store.index_for(&other).unwrap();
        assert_eq!(second.entries[0].vector.dimension(), 64);
        assert_ne!(first.provider_id, second.provider_id);
    }
}
