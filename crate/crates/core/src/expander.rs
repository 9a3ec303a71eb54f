//! Beam-search path expansion and fact retrieval.
//!
//! Starting from the linked entities, every step asks the knowledge source
//! which relations leave the current frontier, scores them (plus the
//! reserved `END` relation) against the question and the labels of the
//! relations taken so far, and keeps the `beam_width` best paths by
//! cumulative log-probability. Probabilities come from a softmax over all
//! candidates of one step. Facts along the surviving paths form the
//! subgraph.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::kgdata::{ExpansionPath, QuestionRecord, RetrievalResult, Subgraph, END};
use crate::kgsource::{IdSet, KnowledgeSource};
use crate::scorer::{build_query, softmax_log_probs, ScoreRequest, Scorer};

pub const DEFAULT_FRONTIER_CAP: usize = 10_000;

/// Ranking used everywhere paths are ordered: higher score first, then
/// lexicographically smaller relation sequence, then unterminated first.
pub fn rank_order(a: &ExpansionPath, b: &ExpansionPath) -> Ordering {
    b.log_score
        .total_cmp(&a.log_score)
        .then_with(|| a.relations.cmp(&b.relations))
        .then_with(|| a.terminated.cmp(&b.terminated))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamEntry {
    pub path: ExpansionPath,
    /// Entities reached by the path; unchanged once the path has terminated.
    pub frontier: IdSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Beam {
    entries: Vec<BeamEntry>,
}

impl Beam {
    /// A single empty path whose frontier is all of `entities`.
    pub fn start(entities: IdSet) -> Self {
        Beam {
            entries: vec![BeamEntry {
                path: ExpansionPath::empty(),
                frontier: entities,
            }],
        }
    }

    pub fn from_entries(mut entries: Vec<BeamEntry>) -> Self {
        entries.sort_by(|a, b| rank_order(&a.path, &b.path));
        Beam { entries }
    }

    pub fn entries(&self) -> &[BeamEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all_terminated(&self) -> bool {
        self.entries.iter().all(|e| e.path.terminated)
    }

    pub fn into_paths(self) -> Vec<ExpansionPath> {
        self.entries.into_iter().map(|e| e.path).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpanderConfig {
    pub beam_width: usize,
    pub max_depth: usize,
    pub temperature: f64,
    pub frontier_cap: usize,
}

impl Default for ExpanderConfig {
    fn default() -> Self {
        ExpanderConfig {
            beam_width: 2,
            max_depth: 1,
            temperature: 1.0,
            frontier_cap: DEFAULT_FRONTIER_CAP,
        }
    }
}

impl ExpanderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam width must be at least 1".to_owned()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be positive".to_owned()));
        }
        if self.frontier_cap == 0 {
            return Err(Error::Config("frontier cap must be positive".to_owned()));
        }
        Ok(())
    }
}

// A pooled child whose frontier is only computed if it survives the cut.
enum Candidate<'b> {
    Ready(BeamEntry),
    Pending {
        path: ExpansionPath,
        parent_frontier: &'b IdSet,
    },
}

impl Candidate<'_> {
    fn path(&self) -> &ExpansionPath {
        match self {
            Candidate::Ready(e) => &e.path,
            Candidate::Pending { path, .. } => path,
        }
    }
}

pub struct PathExpander<'a> {
    source: &'a dyn KnowledgeSource,
    scorer: &'a dyn Scorer,
    config: ExpanderConfig,
    labels: RwLock<HashMap<String, String>>,
}

impl<'a> PathExpander<'a> {
    pub fn new(
        source: &'a dyn KnowledgeSource,
        scorer: &'a dyn Scorer,
        config: ExpanderConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(PathExpander {
            source,
            scorer,
            config,
            labels: RwLock::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ExpanderConfig {
        &self.config
    }

    /// Labels for `ids`, fetched once and cached.
    pub fn labels(&self, ids: &[String]) -> Result<Vec<String>> {
        let missing: IdSet = {
            let cache = self.labels.read().unwrap();
            ids.iter().filter(|id| !cache.contains_key(*id)).cloned().collect()
        };
        if !missing.is_empty() {
            let fetched = self.source.fetch_labels(&missing)?;
            let mut cache = self.labels.write().unwrap();
            for id in missing {
                let label = fetched.get(&id).cloned().unwrap_or_else(|| id.clone());
                cache.insert(id, label);
            }
        }
        let cache = self.labels.read().unwrap();
        Ok(ids.iter().map(|id| cache[id].clone()).collect())
    }

    fn cap_frontier(&self, frontier: IdSet) -> IdSet {
        let cap = self.config.frontier_cap;
        if frontier.len() <= cap {
            return frontier;
        }
        log::warn!(
            "frontier of {} entities exceeds the cap of {cap}; keeping the first {cap}",
            frontier.len()
        );
        frontier.into_iter().take(cap).collect()
    }

    /// Log-probabilities of each relation and of END (last element) after `path`.
    fn step_log_probs(
        &self,
        question: &str,
        path: &ExpansionPath,
        relations: &[String],
    ) -> Result<Vec<f64>> {
        let prior = self.labels(&path.relations)?;
        let query = build_query(question, &prior);
        let mut relation_labels = self.labels(relations)?;
        relation_labels.push(END.to_owned());

        // Relations sharing a label are scored once and share the score.
        let mut unique: Vec<String> = Vec::new();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let positions: Vec<usize> = relation_labels
            .iter()
            .map(|label| {
                *slot.entry(label.as_str()).or_insert_with(|| {
                    unique.push(label.clone());
                    unique.len() - 1
                })
            })
            .collect();
        let scored = self.scorer.score(&ScoreRequest::new(query, unique)?)?;
        let per_candidate: Vec<f64> = positions.iter().map(|&i| scored.scores[i]).collect();
        Ok(softmax_log_probs(&per_candidate, self.config.temperature))
    }

    /// Grows every unterminated path by one relation (or END) and keeps the best `beam_width`.
    pub fn expand_step(&self, beam: &Beam, question: &str) -> Result<Beam> {
        let mut pool: Vec<Candidate<'_>> = Vec::new();
        for entry in &beam.entries {
            if entry.path.terminated {
                pool.push(Candidate::Ready(entry.clone()));
                continue;
            }
            let relations: Vec<String> = self
                .source
                .connected_relations(&entry.frontier)
                .map_err(|e| e.with_path(&entry.path.relations))?
                .into_iter()
                .collect();
            if relations.is_empty() {
                // Dead end: END is the only choice, with probability 1.
                pool.push(Candidate::Ready(BeamEntry {
                    path: ExpansionPath {
                        terminated: true,
                        ..entry.path.clone()
                    },
                    frontier: entry.frontier.clone(),
                }));
                continue;
            }
            let log_probs = self
                .step_log_probs(question, &entry.path, &relations)
                .map_err(|e| e.with_path(&entry.path.relations))?;
            for (relation, lp) in relations.iter().zip(&log_probs) {
                let mut child = entry.path.clone();
                child.relations.push(relation.clone());
                child.log_score += lp;
                pool.push(Candidate::Pending {
                    path: child,
                    parent_frontier: &entry.frontier,
                });
            }
            pool.push(Candidate::Ready(BeamEntry {
                path: ExpansionPath {
                    relations: entry.path.relations.clone(),
                    log_score: entry.path.log_score + log_probs[relations.len()],
                    terminated: true,
                },
                frontier: entry.frontier.clone(),
            }));
        }

        pool.sort_by(|a, b| rank_order(a.path(), b.path()));
        pool.truncate(self.config.beam_width);

        let mut entries = Vec::with_capacity(pool.len());
        for candidate in pool {
            match candidate {
                Candidate::Ready(entry) => entries.push(entry),
                Candidate::Pending {
                    path,
                    parent_frontier,
                } => {
                    let last = path.relations[path.relations.len() - 1..].to_vec();
                    let frontier = self
                        .source
                        .terminal_entities(parent_frontier, &last)
                        .map_err(|e| e.with_path(&path.relations))?;
                    entries.push(BeamEntry {
                        frontier: self.cap_frontier(frontier),
                        path,
                    });
                }
            }
        }
        Ok(Beam { entries })
    }

    /// Runs up to `max_depth` expansion steps from `entities`.
    pub fn retrieve_paths(&self, question: &str, entities: &IdSet) -> Result<Vec<ExpansionPath>> {
        if entities.is_empty() {
            return Ok(Vec::new());
        }
        let mut beam = Beam::start(self.cap_frontier(entities.clone()));
        for _ in 0..self.config.max_depth {
            if beam.all_terminated() {
                break;
            }
            beam = self.expand_step(&beam, question)?;
        }
        let mut paths = beam.into_paths();
        paths.sort_by(rank_order);
        Ok(paths)
    }

    /// Paths plus the facts along them for one record.
    pub fn retrieve(&self, record: &QuestionRecord) -> Result<RetrievalResult> {
        let question = record
            .question
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("record has no question".to_owned()))?;
        let entities: IdSet = record.question_entities().iter().cloned().collect();
        let paths = self.retrieve_paths(question, &entities)?;
        let subgraph = materialize_subgraph(self.source, &entities, &paths, self.config.frontier_cap)?;
        Ok(RetrievalResult {
            record: record.clone(),
            paths: Some(paths),
            subgraph,
        })
    }
}

/// Every triple instantiated along `paths` when followed from `entities`.
pub fn materialize_subgraph(
    source: &dyn KnowledgeSource,
    entities: &IdSet,
    paths: &[ExpansionPath],
    frontier_cap: usize,
) -> Result<Subgraph> {
    let mut subgraph = Subgraph::new();
    for path in paths {
        let mut frontier = entities.clone();
        for (i, relation) in path.relations.iter().enumerate() {
            if frontier.is_empty() {
                break;
            }
            let triples = source
                .outgoing_triples(&frontier, relation)
                .map_err(|e| e.with_path(&path.relations[..=i]))?;
            frontier = triples
                .iter()
                .map(|t| t.object.clone())
                .take(frontier_cap)
                .collect();
            for t in triples {
                subgraph.insert(t);
            }
        }
    }
    Ok(subgraph)
}
