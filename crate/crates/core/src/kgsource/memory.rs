use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{
    cap_paths, cap_relations, check_hops, IdSet, KnowledgeGraphProfile, KnowledgeSource,
    RelationFilter,
};
use crate::error::{Error, Result};
use crate::kgdata::{is_valid_id, Triple};

/// A small graph given as identifier triples plus optional labels.
///
/// Text form, one statement per line, `#` starts a comment line:
///
/// ```text
/// E1 Rloc E2 Hakata-ku
/// @label Rloc located in
/// ```
///
/// A fourth column labels the subject; `@label <id> <text>` labels any id,
/// including relations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripleStoreFixture {
    pub triples: BTreeSet<Triple>,
    pub labels: BTreeMap<String, String>,
}

fn split_token(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    if s.is_empty() {
        return None;
    }
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    Some((&s[..end], s[end..].trim()))
}

impl TripleStoreFixture {
    pub fn parse(text: &str) -> Result<Self> {
        let mut fixture = TripleStoreFixture::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let bad = |message: &str| Error::MalformedLine {
                line,
                message: message.to_owned(),
            };
            if let Some(rest) = trimmed.strip_prefix("@label") {
                let (id, label) = split_token(rest).ok_or_else(|| bad("@label needs an id"))?;
                if label.is_empty() {
                    return Err(bad("@label needs a text"));
                }
                fixture.labels.insert(id.to_owned(), label.to_owned());
                continue;
            }
            let (s, rest) = split_token(trimmed).ok_or_else(|| bad("empty statement"))?;
            let (p, rest) = split_token(rest).ok_or_else(|| bad("missing predicate"))?;
            let (o, label) = split_token(rest).ok_or_else(|| bad("missing object"))?;
            fixture.triples.insert(Triple::new(s, p, o));
            if !label.is_empty() {
                fixture
                    .labels
                    .entry(s.to_owned())
                    .or_insert_with(|| label.to_owned());
            }
        }
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading fixture {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.triples
            .iter()
            .flat_map(|t| [t.subject.as_str(), t.predicate.as_str(), t.object.as_str()])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.triples.iter().find(|t| {
            !is_valid_id(&t.subject) || !is_valid_id(&t.predicate) || !is_valid_id(&t.object)
        }) {
            return Err(Error::InvalidInput(format!("invalid id in triple {t:?}")));
        }
        let ids = self.ids();
        if let Some(id) = self.labels.keys().find(|id| !ids.contains(id.as_str())) {
            return Err(Error::InvalidInput(format!(
                "label given for {id}, which appears in no triple"
            )));
        }
        Ok(())
    }

    /// Renders back to the text form accepted by [`TripleStoreFixture::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!("{} {} {}\n", t.subject, t.predicate, t.object));
        }
        for (id, label) in &self.labels {
            out.push_str(&format!("@label {id} {label}\n"));
        }
        out
    }
}

/// In-memory backend over a [`TripleStoreFixture`].
pub struct MemoryStore {
    profile: KnowledgeGraphProfile,
    filter: RelationFilter,
    // subject -> relation -> objects
    out: HashMap<String, BTreeMap<String, BTreeSet<String>>>,
    labels: BTreeMap<String, String>,
}

impl MemoryStore {
    pub fn new(fixture: TripleStoreFixture, profile: KnowledgeGraphProfile) -> Result<Self> {
        profile.validate()?;
        let mut out: HashMap<String, BTreeMap<String, BTreeSet<String>>> = HashMap::new();
        for t in fixture.triples {
            out.entry(t.subject)
                .or_default()
                .entry(t.predicate)
                .or_default()
                .insert(t.object);
        }
        Ok(MemoryStore {
            filter: RelationFilter::new(&profile)?,
            profile,
            out,
            labels: fixture.labels,
        })
    }

    fn objects<'a>(&'a self, subject: &str, relation: &str) -> impl Iterator<Item = &'a String> {
        self.out
            .get(subject)
            .and_then(|rels| rels.get(relation))
            .into_iter()
            .flatten()
    }

    fn step(&self, from: &IdSet, relation: &str) -> IdSet {
        from.iter()
            .flat_map(|e| self.objects(e, relation))
            .cloned()
            .collect()
    }

    fn allowed(&self, relation: &str) -> bool {
        self.filter.allows(&self.profile.relation_iri(relation))
    }
}

impl KnowledgeSource for MemoryStore {
    fn profile(&self) -> &KnowledgeGraphProfile {
        &self.profile
    }

    fn connected_relations(&self, entities: &IdSet) -> Result<IdSet> {
        let relations = entities
            .iter()
            .filter_map(|e| self.out.get(e))
            .flat_map(|rels| rels.keys())
            .filter(|r| self.allowed(r))
            .cloned()
            .collect();
        Ok(cap_relations(
            relations,
            self.profile.result_cap,
            "connected relations",
        ))
    }

    fn terminal_entities(&self, sources: &IdSet, path: &[String]) -> Result<IdSet> {
        let mut current = sources.clone();
        for relation in path {
            if current.is_empty() {
                break;
            }
            current = self.step(&current, relation);
        }
        Ok(current)
    }

    fn outgoing_triples(&self, subjects: &IdSet, relation: &str) -> Result<Vec<Triple>> {
        Ok(subjects
            .iter()
            .flat_map(|s| self.objects(s, relation).map(move |o| Triple::new(s, relation, o)))
            .collect())
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
        let Some(first) = self.out.get(source) else {
            return Ok(Vec::new());
        };
        let mut paths = Vec::new();
        for (r1, objects) in first.iter().filter(|(r, _)| self.allowed(r)) {
            if objects.iter().any(|o| answers.contains(o)) {
                paths.push(vec![r1.clone()]);
            }
        }
        if paths.is_empty() && max_hop >= 2 {
            for (r1, mids) in first.iter().filter(|(r, _)| self.allowed(r)) {
                for m in mids {
                    let Some(second) = self.out.get(m) else { continue };
                    for (r2, objects) in second.iter().filter(|(r, _)| self.allowed(r)) {
                        if objects.iter().any(|o| answers.contains(o)) {
                            paths.push(vec![r1.clone(), r2.clone()]);
                        }
                    }
                }
            }
        }
        Ok(cap_paths(paths, self.profile.result_cap, "shortest paths"))
    }

    fn fetch_labels(&self, ids: &IdSet) -> Result<BTreeMap<String, String>> {
        Ok(ids
            .iter()
            .map(|id| {
                let label = self.labels.get(id).cloned().unwrap_or_else(|| id.clone());
                (id.clone(), label)
            })
            .collect())
    }
}
