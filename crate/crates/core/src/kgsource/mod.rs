//! Graph queries used by retrieval and preprocessing, behind one trait.
//!
//! Two backends implement [`KnowledgeSource`]: [`SparqlSource`] talks to a
//! SPARQL 1.1 endpoint and [`MemoryStore`] answers from an in-memory triple
//! set. Both work on short identifiers (`Q17`, `P31`) and expand them to
//! IRIs through the [`KnowledgeGraphProfile`]. Only outgoing edges are
//! followed.

mod memory;
mod profile;
mod sparql;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kgdata::Triple;

pub use memory::{MemoryStore, TripleStoreFixture};
pub use profile::{GraphKind, KnowledgeGraphProfile, ProfileOverrides, RelationFilter};
pub use sparql::{parse_select_results, SparqlSource, Term};

pub type IdSet = BTreeSet<String>;

pub trait KnowledgeSource: Send + Sync {
    fn profile(&self) -> &KnowledgeGraphProfile;

    /// Distinct predicates of outgoing edges from `entities` that end in an entity.
    fn connected_relations(&self, entities: &IdSet) -> Result<IdSet>;

    /// Entities reached from any of `sources` by following `path` exactly.
    fn terminal_entities(&self, sources: &IdSet, path: &[String]) -> Result<IdSet>;

    /// All `(s, relation, o)` triples with `s` in `subjects` and `o` an entity.
    fn outgoing_triples(&self, subjects: &IdSet, relation: &str) -> Result<Vec<Triple>>;

    /// Relation paths from `source` to any answer: all one-hop paths, or if
    /// there are none and `max_hop` allows it, all two-hop paths.
    fn search_shortest_paths(
        &self,
        source: &str,
        answers: &IdSet,
        max_hop: usize,
    ) -> Result<Vec<Vec<String>>>;

    /// A label for every id; ids without one map to themselves.
    fn fetch_labels(&self, ids: &IdSet) -> Result<BTreeMap<String, String>>;

    /// Up to `n` distinct relations leaving `frontier`, never `exclude`,
    /// chosen deterministically from `seed`.
    fn sample_negative_relations(
        &self,
        frontier: &IdSet,
        exclude: Option<&str>,
        n: usize,
        seed: u64,
    ) -> Result<Vec<String>> {
        if n == 0 || frontier.is_empty() {
            return Ok(Vec::new());
        }
        let pool: Vec<String> = self
            .connected_relations(frontier)?
            .into_iter()
            .filter(|r| Some(r.as_str()) != exclude)
            .collect();
        Ok(seeded_sample(pool, n, seed))
    }
}

impl<S: KnowledgeSource + ?Sized> KnowledgeSource for &S {
    fn profile(&self) -> &KnowledgeGraphProfile {
        (**self).profile()
    }
    fn connected_relations(&self, entities: &IdSet) -> Result<IdSet> {
        (**self).connected_relations(entities)
    }
    fn terminal_entities(&self, sources: &IdSet, path: &[String]) -> Result<IdSet> {
        (**self).terminal_entities(sources, path)
    }
    fn outgoing_triples(&self, subjects: &IdSet, relation: &str) -> Result<Vec<Triple>> {
        (**self).outgoing_triples(subjects, relation)
    }
    fn search_shortest_paths(
        &self,
        source: &str,
        answers: &IdSet,
        max_hop: usize,
    ) -> Result<Vec<Vec<String>>> {
        (**self).search_shortest_paths(source, answers, max_hop)
    }
    fn fetch_labels(&self, ids: &IdSet) -> Result<BTreeMap<String, String>> {
        (**self).fetch_labels(ids)
    }
    fn sample_negative_relations(
        &self,
        frontier: &IdSet,
        exclude: Option<&str>,
        n: usize,
        seed: u64,
    ) -> Result<Vec<String>> {
        (**self).sample_negative_relations(frontier, exclude, n, seed)
    }
}

/// Seeded choice of `n` items from a pool whose order is already canonical.
pub fn seeded_sample(mut pool: Vec<String>, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.min(pool.len());
    let (chosen, _) = pool.partial_shuffle(&mut rng, n);
    chosen.to_vec()
}

/// Cuts a relation set down to `cap` entries in identifier order.
pub(crate) fn cap_relations(relations: IdSet, cap: usize, what: &str) -> IdSet {
    if relations.len() <= cap {
        return relations;
    }
    log::warn!(
        "{what}: {} results exceed the cap of {cap}; keeping the first {cap} by identifier",
        relations.len()
    );
    relations.into_iter().take(cap).collect()
}

pub(crate) fn cap_paths(mut paths: Vec<Vec<String>>, cap: usize, what: &str) -> Vec<Vec<String>> {
    paths.sort();
    paths.dedup();
    if paths.len() > cap {
        log::warn!(
            "{what}: {} paths exceed the cap of {cap}; keeping the first {cap}",
            paths.len()
        );
        paths.truncate(cap);
    }
    paths
}

pub(crate) fn check_hops(max_hop: usize) -> Result<()> {
    if !(1..=2).contains(&max_hop) {
        return Err(crate::Error::InvalidInput(format!(
            "max_hop must be 1 or 2, got {max_hop}"
        )));
    }
    Ok(())
}
