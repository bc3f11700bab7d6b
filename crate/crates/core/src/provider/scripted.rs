use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::embedding::{hash_embedding, EmbeddingVector, SCRIPTED_DIMENSION};
use super::{CompletionProvider, CompletionRequest, EmbeddingProvider, ProviderError, Purpose};

#[derive(Debug, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    embedding: EmbeddingSection,
    #[serde(default, rename = "rule")]
    rules: Vec<RawRule>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingSection {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_dimension")]
    dimension: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            dimension: default_dimension(),
        }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_dimension() -> usize {
    SCRIPTED_DIMENSION
}

#[derive(Debug, Deserialize)]
struct RawRule {
    #[serde(default)]
    purpose: Option<Purpose>,
    pattern: String,
    response: String,
}

/// One scripted answer. The pattern is matched against the last user
/// message; capture groups may be referenced in the response as `$1` or
/// `${name}`.
#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub purpose: Option<Purpose>,
    pub pattern: Regex,
    pub response: String,
}

/// Deterministic offline provider.
///
/// Rules are tried in file order and the first whose purpose (if any) and
/// pattern match wins.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    rules: Vec<ScriptRule>,
    seed: u64,
    dimension: usize,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>, seed: u64, dimension: usize) -> Self {
        Self {
            rules,
            seed,
            dimension,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ProviderError> {
        let file: ScriptFile = toml::from_str(text)
            .map_err(|e| ProviderError::InvalidRequest(format!("script file: {e}")))?;
        if file.embedding.dimension == 0 {
            return Err(ProviderError::InvalidRequest(
                "script file: embedding dimension must be positive".into(),
            ));
        }
        let rules = file
            .rules
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let pattern = Regex::new(&r.pattern).map_err(|e| {
                    ProviderError::InvalidRequest(format!("script rule {}: {e}", i + 1))
                })?;
                Ok(ScriptRule {
                    purpose: r.purpose,
                    pattern,
                    response: r.response,
                })
            })
            .collect::<Result<Vec<_>, ProviderError>>()?;
        Ok(Self::new(
            rules,
            file.embedding.seed,
            file.embedding.dimension,
        ))
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ProviderError::InvalidRequest(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    /// Appends rules after the existing ones.
    pub fn extend(&mut self, rules: impl IntoIterator<Item = ScriptRule>) {
        self.rules.extend(rules);
    }
}

impl CompletionProvider for ScriptedProvider {
    fn id(&self) -> String {
        format!("scripted:{}:{}", self.seed, self.dimension)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.validate()?;
        let input = request.last_user_message().unwrap_or_default();
        for rule in &self.rules {
            if rule.purpose.is_some_and(|p| p != request.purpose) {
                continue;
            }
            if let Some(caps) = rule.pattern.captures(input) {
                let mut out = String::new();
                caps.expand(&rule.response, &mut out);
                return Ok(out);
            }
        }
        Err(ProviderError::NoScriptMatch)
    }
}

impl EmbeddingProvider for ScriptedProvider {
    fn id(&self) -> String {
        format!("hashed:{}:{}", self.seed, self.dimension)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        hash_embedding(text, self.seed, self.dimension)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::Message;

    const SCRIPT: &str = r#"
[embedding]
seed = 7
dimension = 32

[[rule]]
purpose = "classify_map"
pattern = "(?i)map"
response = "yes"

[[rule]]
purpose = "generate_sql"
pattern = "(?i)routes of (\\w+)"
response = "select route_id from routes where agency_id = '$1'"

[[rule]]
pattern = ".*"
response = "fallback"
"#;

    fn req(purpose: Purpose, text: &str) -> CompletionRequest {
        CompletionRequest::new(purpose, "sys", vec![Message::user(text)])
    }

    #[test]
    fn first_matching_rule_wins_with_captures() {
        let p = ScriptedProvider::parse(SCRIPT).unwrap();
        let out = p
            .complete(&req(Purpose::GenerateSql, "list the routes of tper"))
            .unwrap();
        assert_eq!(out, "select route_id from routes where agency_id = 'tper'");
        assert_eq!(
            p.complete(&req(Purpose::GenerateSql, "draw a map"))
                .unwrap(),
            "fallback"
        );
        assert_eq!(
            p.complete(&req(Purpose::ClassifyMap, "draw a map"))
                .unwrap(),
            "yes"
        );
    }

    #[test]
    fn same_request_gives_same_answer() {
        let p = ScriptedProvider::parse(SCRIPT).unwrap();
        let r = req(Purpose::Synthesize, "anything");
        assert_eq!(p.complete(&r).unwrap(), p.complete(&r).unwrap());
    }

    #[test]
    fn no_match_is_an_error() {
        let p = ScriptedProvider::parse("[[rule]]\npattern = \"^x$\"\nresponse = \"y\"\n").unwrap();
        assert_eq!(
            p.complete(&req(Purpose::GenerateSql, "z")),
            Err(ProviderError::NoScriptMatch)
        );
    }

    #[test]
    fn empty_request_is_a_precondition_error() {
        let p = ScriptedProvider::parse(SCRIPT).unwrap();
        let r = CompletionRequest::new(Purpose::GenerateSql, "sys", vec![]);
        assert!(matches!(
            p.complete(&r),
            Err(ProviderError::InvalidRequest(_))
        ));
    }

    #[test]
    fn embedding_uses_configured_dimension() {
        let p = ScriptedProvider::parse(SCRIPT).unwrap();
        assert_eq!(p.embed("routes in Bologna").unwrap().dimension(), 32);
        assert_eq!(EmbeddingProvider::id(&p), "hashed:7:32");
    }

    #[test]
    fn bad_regex_is_reported() {
        let err =
            ScriptedProvider::parse("[[rule]]\npattern = \"(\"\nresponse = \"y\"\n").unwrap_err();
        assert!(matches!(err, ProviderError::InvalidRequest(m) if m.contains("rule 1")));
    }
}
