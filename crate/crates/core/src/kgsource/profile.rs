use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::HttpSettings;

const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Wikidata,
    Freebase,
    Dbpedia,
    Custom,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Wikidata => "wikidata",
            GraphKind::Freebase => "freebase",
            GraphKind::Dbpedia => "dbpedia",
            GraphKind::Custom => "custom",
        })
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wikidata" => Ok(GraphKind::Wikidata),
            "freebase" => Ok(GraphKind::Freebase),
            "dbpedia" => Ok(GraphKind::Dbpedia),
            "custom" => Ok(GraphKind::Custom),
            other => Err(Error::Config(format!("unknown knowledge graph {other:?}"))),
        }
    }
}

/// Everything needed to talk to one knowledge graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraphProfile {
    pub name: GraphKind,
    pub sparql_endpoint: Option<String>,
    /// Stripped from entity IRIs to form short ids such as `Q17`. Empty keeps full IRIs.
    pub entity_prefix: String,
    pub relation_prefix: String,
    pub label_predicate: String,
    /// Regexes matched against full relation IRIs; a match removes the relation.
    pub relation_blocklist: Vec<String>,
    /// Drop relations whose IRI lies outside `relation_prefix`.
    pub restrict_to_relation_prefix: bool,
    pub language: String,
    /// Seconds.
    pub request_timeout: f64,
    pub max_retries: u32,
    /// Milliseconds between request starts.
    pub min_request_interval: u64,
    /// Milliseconds before the first retry.
    pub retry_backoff: u64,
    pub max_in_flight: usize,
    /// Upper bound on relation-valued results; excess is cut after sorting.
    pub result_cap: usize,
}

/// Field-wise overrides, as read from a profile file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverrides {
    /// Built-in profile to start from; `custom` when absent.
    pub base: Option<GraphKind>,
    pub sparql_endpoint: Option<String>,
    pub entity_prefix: Option<String>,
    pub relation_prefix: Option<String>,
    pub label_predicate: Option<String>,
    pub relation_blocklist: Option<Vec<String>>,
    pub restrict_to_relation_prefix: Option<bool>,
    pub language: Option<String>,
    pub request_timeout: Option<f64>,
    pub max_retries: Option<u32>,
    pub min_request_interval: Option<u64>,
    pub retry_backoff: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub result_cap: Option<usize>,
}

impl KnowledgeGraphProfile {
    pub fn builtin(kind: GraphKind) -> Self {
        let base = KnowledgeGraphProfile {
            name: kind,
            sparql_endpoint: None,
            entity_prefix: String::new(),
            relation_prefix: String::new(),
            label_predicate: RDFS_LABEL.to_owned(),
            relation_blocklist: Vec::new(),
            restrict_to_relation_prefix: false,
            language: "en".to_owned(),
            request_timeout: 60.0,
            max_retries: 3,
            min_request_interval: 0,
            retry_backoff: 500,
            max_in_flight: 4,
            result_cap: 2000,
        };
        match kind {
            GraphKind::Wikidata => KnowledgeGraphProfile {
                sparql_endpoint: Some("https://query.wikidata.org/sparql".to_owned()),
                entity_prefix: "http://www.wikidata.org/entity/".to_owned(),
                relation_prefix: "http://www.wikidata.org/prop/direct/".to_owned(),
                restrict_to_relation_prefix: true,
                ..base
            },
            GraphKind::Freebase => KnowledgeGraphProfile {
                sparql_endpoint: Some("http://localhost:8890/sparql".to_owned()),
                entity_prefix: "http://rdf.freebase.com/ns/".to_owned(),
                relation_prefix: "http://rdf.freebase.com/ns/".to_owned(),
                label_predicate: "http://rdf.freebase.com/ns/type.object.name".to_owned(),
                relation_blocklist: vec![
                    r"^http://rdf\.freebase\.com/ns/(type|common|freebase|kg|dataworld)\.".to_owned(),
                    r"^http://www\.w3\.org/".to_owned(),
                ],
                ..base
            },
            GraphKind::Dbpedia => KnowledgeGraphProfile {
                sparql_endpoint: Some("https://dbpedia.org/sparql".to_owned()),
                entity_prefix: "http://dbpedia.org/resource/".to_owned(),
                relation_prefix: "http://dbpedia.org/ontology/".to_owned(),
                relation_blocklist: vec![
                    r"^http://dbpedia\.org/ontology/wikiPageWikiLink$".to_owned(),
                    r"^http://www\.w3\.org/".to_owned(),
                ],
                ..base
            },
            GraphKind::Custom => base,
        }
    }

    pub fn with_overrides(mut self, o: ProfileOverrides) -> Self {
        macro_rules! apply {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field { self.$field = v; }
            )*};
        }
        if o.sparql_endpoint.is_some() {
            self.sparql_endpoint = o.sparql_endpoint;
        }
        apply!(
            entity_prefix,
            relation_prefix,
            label_predicate,
            relation_blocklist,
            restrict_to_relation_prefix,
            language,
            request_timeout,
            max_retries,
            min_request_interval,
            retry_backoff,
            max_in_flight,
            result_cap
        );
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (what, prefix) in [
            ("entity_prefix", &self.entity_prefix),
            ("relation_prefix", &self.relation_prefix),
        ] {
            if !prefix.is_empty() && !prefix.ends_with('/') && !prefix.ends_with('#') {
                return Err(Error::Config(format!(
                    "{what} {prefix:?} must end with '/' or '#'"
                )));
            }
        }
        if !(self.request_timeout > 0.0 && self.request_timeout.is_finite()) {
            return Err(Error::Config("request_timeout must be positive".to_owned()));
        }
        if self.result_cap == 0 {
            return Err(Error::Config("result_cap must be positive".to_owned()));
        }
        RelationFilter::new(self)?;
        Ok(())
    }

    /// The endpoint, or a configuration error when none is set.
    pub fn endpoint(&self) -> Result<&str> {
        self.sparql_endpoint
            .as_deref()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| Error::Config(format!("no SPARQL endpoint configured for {}", self.name)))
    }

    pub fn http_settings(&self) -> HttpSettings {
        HttpSettings {
            timeout: Duration::from_secs_f64(self.request_timeout),
            max_retries: self.max_retries,
            backoff: Duration::from_millis(self.retry_backoff),
            min_interval: Duration::from_millis(self.min_request_interval),
            max_in_flight: self.max_in_flight,
        }
    }

    /// Short form of an IRI: entity prefix stripped first, then relation prefix.
    pub fn shorten(&self, iri: &str) -> String {
        for prefix in [&self.entity_prefix, &self.relation_prefix] {
            if !prefix.is_empty() {
                if let Some(rest) = iri.strip_prefix(prefix.as_str()) {
                    if !rest.is_empty() {
                        return rest.to_owned();
                    }
                }
            }
        }
        iri.to_owned()
    }

    pub fn entity_iri(&self, id: &str) -> String {
        expand(&self.entity_prefix, id)
    }

    pub fn relation_iri(&self, id: &str) -> String {
        expand(&self.relation_prefix, id)
    }
}

fn is_absolute(id: &str) -> bool {
    match id.find(':') {
        Some(i) => {
            id[..i]
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
                && (id[i..].starts_with("://") || id.starts_with("urn:"))
        }
        None => false,
    }
}

fn expand(prefix: &str, id: &str) -> String {
    if prefix.is_empty() || is_absolute(id) {
        id.to_owned()
    } else {
        format!("{prefix}{id}")
    }
}

/// Compiled form of a profile's relation restrictions.
#[derive(Clone, Debug)]
pub struct RelationFilter {
    blocklist: Vec<Regex>,
    required_prefix: Option<String>,
}

impl RelationFilter {
    pub fn new(profile: &KnowledgeGraphProfile) -> Result<Self> {
        let blocklist = profile
            .relation_blocklist
            .iter()
            .map(|p| Regex::new(p).map_err(|e| Error::Config(format!("blocklist pattern {p:?}: {e}"))))
            .collect::<Result<_>>()?;
        let required_prefix = (profile.restrict_to_relation_prefix
            && !profile.relation_prefix.is_empty())
        .then(|| profile.relation_prefix.clone());
        Ok(RelationFilter {
            blocklist,
            required_prefix,
        })
    }

    pub fn allows(&self, relation_iri: &str) -> bool {
        if let Some(prefix) = &self.required_prefix {
            if !relation_iri.starts_with(prefix.as_str()) {
                return false;
            }
        }
        !self.blocklist.iter().any(|re| re.is_match(relation_iri))
    }
}
