use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Deserialize;

use super::{
    cap_paths, cap_relations, check_hops, IdSet, KnowledgeGraphProfile, KnowledgeSource,
    RelationFilter,
};
use crate::error::{Error, Result};
use crate::http::HttpClient;
use crate::kgdata::Triple;

const RESULTS_JSON: &str = "application/sparql-results+json";
/// IRIs per VALUES block.
const VALUES_CHUNK: usize = 100;
/// Relations chained in one terminal-entity query; longer paths are split.
const MAX_CHAIN: usize = 3;

/// One RDF term of a SPARQL JSON result binding.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Term {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: String,
    #[serde(rename = "xml:lang", default)]
    pub lang: Option<String>,
    #[serde(default)]
    pub datatype: Option<String>,
}

impl Term {
    pub fn is_iri(&self) -> bool {
        self.kind == "uri"
    }
}

#[derive(Deserialize)]
struct SelectResults {
    results: Bindings,
}

#[derive(Deserialize)]
struct Bindings {
    bindings: Vec<HashMap<String, Term>>,
}

/// Decodes a SPARQL 1.1 JSON results document into its bindings.
pub fn parse_select_results(body: &str) -> Result<Vec<HashMap<String, Term>>> {
    serde_json::from_str::<SelectResults>(body)
        .map(|r| r.results.bindings)
        .map_err(|e| Error::Protocol(format!("bad SPARQL results document: {e}")))
}

fn check_iri(iri: &str) -> Result<&str> {
    if iri.is_empty()
        || iri
            .chars()
            .any(|c| c.is_whitespace() || "<>\"{}|^`\\".contains(c))
    {
        return Err(Error::InvalidInput(format!("cannot use {iri:?} as an IRI")));
    }
    Ok(iri)
}

fn values(var: &str, iris: &[String]) -> Result<String> {
    let mut out = format!("VALUES ?{var} {{");
    for iri in iris {
        out.push_str(" <");
        out.push_str(check_iri(iri)?);
        out.push('>');
    }
    out.push_str(" }");
    Ok(out)
}

/// Query text for each template the client issues.
pub mod queries {
    use super::*;

    pub fn connected_relations(entities: &[String]) -> Result<String> {
        Ok(format!(
            "SELECT DISTINCT ?r WHERE {{ {} ?e ?r ?x . FILTER(isIRI(?x)) }}",
            values("e", entities)?
        ))
    }

    pub fn terminal_entities(sources: &[String], path: &[String]) -> Result<String> {
        assert!(!path.is_empty() && path.len() <= MAX_CHAIN);
        let mut body = String::new();
        let mut subject = "?e".to_owned();
        for (i, relation) in path.iter().enumerate() {
            let object = if i + 1 == path.len() {
                "?t".to_owned()
            } else {
                format!("?m{}", i + 1)
            };
            body.push_str(&format!("{subject} <{}> {object} . ", check_iri(relation)?));
            subject = object;
        }
        Ok(format!(
            "SELECT DISTINCT ?t WHERE {{ {} {body}FILTER(isIRI(?t)) }}",
            values("e", sources)?
        ))
    }

    pub fn outgoing_triples(subjects: &[String], relation: &str) -> Result<String> {
        Ok(format!(
            "SELECT DISTINCT ?e ?x WHERE {{ {} ?e <{}> ?x . FILTER(isIRI(?x)) }}",
            values("e", subjects)?,
            check_iri(relation)?
        ))
    }

    pub fn one_hop_paths(source: &str, answers: &[String]) -> Result<String> {
        Ok(format!(
            "SELECT DISTINCT ?r1 WHERE {{ {} <{}> ?r1 ?a . }}",
            values("a", answers)?,
            check_iri(source)?
        ))
    }

    pub fn two_hop_paths(source: &str, answers: &[String]) -> Result<String> {
        Ok(format!(
            "SELECT DISTINCT ?r1 ?r2 WHERE {{ {} <{}> ?r1 ?m . ?m ?r2 ?a . FILTER(isIRI(?m)) }}",
            values("a", answers)?,
            check_iri(source)?
        ))
    }

    pub fn labels(iris: &[String], label_predicate: &str, language: &str) -> Result<String> {
        if !language.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(Error::Config(format!("bad language tag {language:?}")));
        }
        Ok(format!(
            "SELECT ?s ?l WHERE {{ {} ?s <{}> ?l . FILTER(LANG(?l) = \"{language}\" || LANG(?l) = \"\") }}",
            values("s", iris)?,
            check_iri(label_predicate)?
        ))
    }
}

/// Knowledge source backed by a remote SPARQL 1.1 query endpoint.
pub struct SparqlSource {
    profile: KnowledgeGraphProfile,
    filter: RelationFilter,
    endpoint: String,
    http: HttpClient,
}

impl SparqlSource {
    pub fn new(profile: KnowledgeGraphProfile) -> Result<Self> {
        profile.validate()?;
        let endpoint = profile.endpoint()?.to_owned();
        Ok(SparqlSource {
            filter: RelationFilter::new(&profile)?,
            http: HttpClient::new(profile.http_settings()),
            endpoint,
            profile,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn select(&self, query: &str) -> Result<Vec<HashMap<String, Term>>> {
        log::trace!("SPARQL: {query}");
        let body = self
            .http
            .post_form(&self.endpoint, &[("query", query)], RESULTS_JSON)?;
        parse_select_results(&body)
    }

    fn entity_iris<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Vec<String> {
        ids.into_iter().map(|id| self.profile.entity_iri(id)).collect()
    }

    fn iri_of<'a>(binding: &'a HashMap<String, Term>, var: &str) -> Result<Option<&'a str>> {
        match binding.get(var) {
            Some(t) if t.is_iri() => Ok(Some(t.value.as_str())),
            Some(_) => Ok(None),
            None => Err(Error::Protocol(format!("binding lacks ?{var}"))),
        }
    }

    fn chained(&self, sources: &IdSet, path: &[String]) -> Result<IdSet> {
        let relations: Vec<String> = path.iter().map(|r| self.profile.relation_iri(r)).collect();
        let mut out = IdSet::new();
        for chunk in self.entity_iris(sources).chunks(VALUES_CHUNK) {
            for row in self.select(&queries::terminal_entities(chunk, &relations)?)? {
                if let Some(iri) = Self::iri_of(&row, "t")? {
                    out.insert(self.profile.shorten(iri));
                }
            }
        }
        Ok(out)
    }
}

impl KnowledgeSource for SparqlSource {
    fn profile(&self) -> &KnowledgeGraphProfile {
        &self.profile
    }

    fn connected_relations(&self, entities: &IdSet) -> Result<IdSet> {
        let mut relations = BTreeSet::new();
        for chunk in self.entity_iris(entities).chunks(VALUES_CHUNK) {
            for row in self.select(&queries::connected_relations(chunk)?)? {
                if let Some(iri) = Self::iri_of(&row, "r")? {
                    if self.filter.allows(iri) {
                        relations.insert(self.profile.shorten(iri));
                    }
                }
            }
        }
        Ok(cap_relations(
            relations,
            self.profile.result_cap,
            "connected relations",
        ))
    }

    fn terminal_entities(&self, sources: &IdSet, path: &[String]) -> Result<IdSet> {
        let mut current = sources.clone();
        for segment in path.chunks(MAX_CHAIN) {
            if current.is_empty() {
                break;
            }
            current = self.chained(&current, segment)?;
        }
        Ok(current)
    }

    fn outgoing_triples(&self, subjects: &IdSet, relation: &str) -> Result<Vec<Triple>> {
        let relation_iri = self.profile.relation_iri(relation);
        let mut triples = BTreeSet::new();
        for chunk in self.entity_iris(subjects).chunks(VALUES_CHUNK) {
            for row in self.select(&queries::outgoing_triples(chunk, &relation_iri)?)? {
                if let (Some(s), Some(o)) = (Self::iri_of(&row, "e")?, Self::iri_of(&row, "x")?) {
                    triples.insert(Triple::new(
                        self.profile.shorten(s),
                        relation,
                        self.profile.shorten(o),
                    ));
                }
            }
        }
        Ok(triples.into_iter().collect())
    }

    fn search_shortest_paths(
        &self,
        source: &str,
        answers: &IdSet,
        max_hop: usize,
    ) -> Result<Vec<Vec<String>>> {
        check_hops(max_hop)?;
        if answers.is_empty() {
            return Err(Error::InvalidInput("answers must not be empty".to_owned()));
        }
        let source_iri = self.profile.entity_iri(source);
        let answer_iris = self.entity_iris(answers);
        let mut paths = Vec::new();
        for chunk in answer_iris.chunks(VALUES_CHUNK) {
            for row in self.select(&queries::one_hop_paths(&source_iri, chunk)?)? {
                if let Some(r1) = Self::iri_of(&row, "r1")? {
                    if self.filter.allows(r1) {
                        paths.push(vec![self.profile.shorten(r1)]);
                    }
                }
            }
        }
        if paths.is_empty() && max_hop >= 2 {
            for chunk in answer_iris.chunks(VALUES_CHUNK) {
                for row in self.select(&queries::two_hop_paths(&source_iri, chunk)?)? {
                    if let (Some(r1), Some(r2)) =
                        (Self::iri_of(&row, "r1")?, Self::iri_of(&row, "r2")?)
                    {
                        if self.filter.allows(r1) && self.filter.allows(r2) {
                            paths.push(vec![self.profile.shorten(r1), self.profile.shorten(r2)]);
                        }
                    }
                }
            }
        }
        Ok(cap_paths(paths, self.profile.result_cap, "shortest paths"))
    }

    fn fetch_labels(&self, ids: &IdSet) -> Result<BTreeMap<String, String>> {
        // Relations may carry their label under the entity namespace (Wikidata)
        // or their own namespace (DBpedia), so both forms are asked for.
        let mut owners: BTreeMap<String, Vec<&String>> = BTreeMap::new();
        for id in ids {
            let entity = self.profile.entity_iri(id);
            let relation = self.profile.relation_iri(id);
            if relation != entity {
                owners.entry(relation).or_default().push(id);
            }
            owners.entry(entity).or_default().push(id);
        }
        let iris: Vec<String> = owners.keys().cloned().collect();
        // (is preferred language, label) per id; preferred language wins.
        let mut found: HashMap<&String, (bool, String)> = HashMap::new();
        for chunk in iris.chunks(VALUES_CHUNK) {
            let query =
                queries::labels(chunk, &self.profile.label_predicate, &self.profile.language)?;
            for row in self.select(&query)? {
                let (Some(s), Some(l)) = (row.get("s"), row.get("l")) else {
                    return Err(Error::Protocol("label binding lacks ?s or ?l".to_owned()));
                };
                let preferred = l.lang.as_deref() == Some(self.profile.language.as_str());
                for id in owners.get(&s.value).into_iter().flatten() {
                    let entry = found.entry(id);
                    entry
                        .and_modify(|cur| {
                            if preferred && !cur.0 {
                                *cur = (true, l.value.clone());
                            }
                        })
                        .or_insert_with(|| (preferred, l.value.clone()));
                }
            }
        }
        Ok(ids
            .iter()
            .map(|id| {
                let label = found.get(id).map(|(_, l)| l.clone()).unwrap_or_else(|| id.clone());
                (id.clone(), label)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_results_document() {
        let body = r#"{"head":{"vars":["r"]},"results":{"bindings":[
            {"r":{"type":"uri","value":"http://www.wikidata.org/prop/direct/P31"}},
            {"r":{"type":"literal","value":"x","xml:lang":"en"}}]}}"#;
        let rows = parse_select_results(body).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0]["r"].is_iri());
        assert_eq!(rows[1]["r"].lang.as_deref(), Some("en"));
        assert!(matches!(
            parse_select_results("{\"boolean\":true}"),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn query_shapes() {
        let q = queries::connected_relations(&["http://e/1".into()]).unwrap();
        assert_eq!(
            q,
            "SELECT DISTINCT ?r WHERE { VALUES ?e { <http://e/1> } ?e ?r ?x . FILTER(isIRI(?x)) }"
        );
        let q = queries::terminal_entities(&["http://e/1".into()], &["http://r/a".into(), "http://r/b".into()])
            .unwrap();
        assert_eq!(
            q,
            "SELECT DISTINCT ?t WHERE { VALUES ?e { <http://e/1> } ?e <http://r/a> ?m1 . ?m1 <http://r/b> ?t . FILTER(isIRI(?t)) }"
        );
        assert!(queries::connected_relations(&["http://e/1> . ?x".into()]).is_err());
    }
}
