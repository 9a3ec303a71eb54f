//! Knowledge-graph profile and scorer resolution.

use std::fs;
use std::path::Path;

use srtk_core::kgsource::{
    GraphKind, KnowledgeGraphProfile, KnowledgeSource, MemoryStore, ProfileOverrides,
    SparqlSource, TripleStoreFixture,
};
use srtk_core::http::HttpSettings;
use srtk_core::scorer::{EmbeddingScorer, LexicalScorer, Scorer};
use srtk_core::{Error, Result};

/// A built-in profile by name, or a TOML file of field-wise overrides.
///
/// The file may name a `base` profile; fields it does not set come from
/// that base (or from `custom`).
pub fn resolve_profile(name_or_path: &str) -> Result<KnowledgeGraphProfile> {
    if let Ok(kind) = name_or_path.parse::<GraphKind>() {
        return Ok(KnowledgeGraphProfile::builtin(kind));
    }
    let path = Path::new(name_or_path);
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{name_or_path:?} is neither a known knowledge graph (wikidata, freebase, dbpedia, custom) nor a profile file"
        )));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
    let overrides: ProfileOverrides = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = overrides.base.unwrap_or(GraphKind::Custom);
    let profile = KnowledgeGraphProfile::builtin(base).with_overrides(overrides);
    profile.validate()?;
    Ok(profile)
}

/// The profile for a run: `--sparql-endpoint` wins over the profile's own.
/// Without a fixture an endpoint is required.
pub fn run_profile(
    name_or_path: &str,
    endpoint: Option<&str>,
    offline: bool,
) -> Result<KnowledgeGraphProfile> {
    let mut profile = resolve_profile(name_or_path)?;
    if let Some(endpoint) = endpoint {
        profile.sparql_endpoint = Some(endpoint.to_owned());
    }
    profile.validate()?;
    if !offline {
        profile.endpoint()?;
    }
    Ok(profile)
}

pub fn open_source(
    profile: KnowledgeGraphProfile,
    fixture: Option<&Path>,
) -> Result<Box<dyn KnowledgeSource>> {
    match fixture {
        Some(path) => Ok(Box::new(MemoryStore::new(
            TripleStoreFixture::from_file(path)?,
            profile,
        )?)),
        None => Ok(Box::new(SparqlSource::new(profile)?)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScorerSpec {
    Lexical,
    Endpoint(String),
}

impl ScorerSpec {
    pub fn parse(value: &str) -> Result<Self> {
        if value == "lexical" {
            Ok(ScorerSpec::Lexical)
        } else if value.starts_with("http://") || value.starts_with("https://") {
            Ok(ScorerSpec::Endpoint(value.trim_end_matches('/').to_owned()))
        } else {
            Err(Error::Config(format!(
                "scorer {value:?} is not `lexical` or an http(s) URL; \
                 serve the model with the trainer's `serve` mode and pass its URL"
            )))
        }
    }

    pub fn build(&self) -> Result<Box<dyn Scorer>> {
        match self {
            ScorerSpec::Lexical => Ok(Box::new(LexicalScorer)),
            ScorerSpec::Endpoint(url) => Ok(Box::new(EmbeddingScorer::new(url, HttpSettings::default())?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn builtin_names() {
        let p = resolve_profile("wikidata").unwrap();
        assert_eq!(p.sparql_endpoint.as_deref(), Some("https://query.wikidata.org/sparql"));
        assert_eq!(resolve_profile("DBpedia").unwrap().name, GraphKind::Dbpedia);
        assert!(matches!(resolve_profile("yago"), Err(Error::Config(_))));
    }

    #[test]
    fn file_overrides_only_what_it_sets() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "base = \"wikidata\"\nsparql_endpoint = \"http://localhost:9999/sparql\"").unwrap();
        let p = resolve_profile(f.path().to_str().unwrap()).unwrap();
        let mut expect = KnowledgeGraphProfile::builtin(GraphKind::Wikidata);
        expect.sparql_endpoint = Some("http://localhost:9999/sparql".into());
        assert_eq!(p, expect);
    }

    #[test]
    fn unknown_profile_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "endpoint = \"x\"").unwrap();
        assert!(matches!(resolve_profile(f.path().to_str().unwrap()), Err(Error::Config(_))));
    }

    #[test]
    fn custom_needs_an_endpoint() {
        assert!(matches!(run_profile("custom", None, false), Err(Error::Config(_))));
        assert!(run_profile("custom", None, true).is_ok());
        assert!(run_profile("custom", Some("http://h/sparql"), false).is_ok());
    }

    #[test]
    fn scorer_specs() {
        assert_eq!(ScorerSpec::parse("lexical").unwrap(), ScorerSpec::Lexical);
        assert_eq!(
            ScorerSpec::parse("http://localhost:8000/").unwrap(),
            ScorerSpec::Endpoint("http://localhost:8000".into())
        );
        assert!(ScorerSpec::parse("drt/srtk-scorer").is_err());
        assert!(ScorerSpec::parse("artifacts/scorer").is_err());
    }
}
