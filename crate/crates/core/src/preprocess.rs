//! Training-sample generation for the path scorer.
//!
//! With weak supervision only the question and answer entities are known:
//! shortest relation paths (at most two hops) from each question entity to
//! the answers are searched, scored by how well their terminal entities
//! agree with the answer set, and filtered by a threshold. Each kept path
//! of length K yields K+1 samples (the last one with `END` as the positive),
//! each with negatives sampled from the relations leaving the frontier at
//! that step.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{BuildHasher, Hash};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kgdata::{QuestionRecord, TrainSample, END};
use crate::kgsource::{IdSet, KnowledgeSource};
use crate::scorer::build_query;

/// |a ∩ b| / |a ∪ b|, and 0 when both are empty.
pub fn jaccard<T: Eq + Hash, S: BuildHasher>(a: &HashSet<T, S>, b: &HashSet<T, S>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let common = small.iter().filter(|x| large.contains(*x)).count();
    let union = a.len() + b.len() - common;
    if union == 0 {
        0.0
    } else {
        common as f64 / union as f64
    }
}

/// How well a path's terminal entities agree with the answers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Metric {
    #[default]
    Jaccard,
}

impl Metric {
    pub fn agreement(&self, retrieved: &IdSet, answers: &IdSet) -> f64 {
        match self {
            Metric::Jaccard => {
                let a: HashSet<&String> = retrieved.iter().collect();
                let b: HashSet<&String> = answers.iter().collect();
                jaccard(&a, &b)
            }
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jaccard" => Ok(Metric::Jaccard),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPath {
    pub relations: Vec<String>,
    pub agreement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub threshold: f64,
    pub num_negative: usize,
    pub seed: u64,
    pub metric: Metric,
    /// Search for paths instead of reading gold paths from the record's `paths` field.
    pub search_paths: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            threshold: 0.5,
            num_negative: 2,
            seed: 0,
            metric: Metric::Jaccard,
            search_paths: true,
        }
    }
}

const SEARCH_HOPS: usize = 2;

/// Shortest paths from each question entity to the answers whose agreement reaches `threshold`.
pub fn find_scored_paths(
    record: &QuestionRecord,
    source: &dyn KnowledgeSource,
    threshold: f64,
    metric: Metric,
) -> Result<Vec<ScoredPath>> {
    let (Some(sources), Some(answers)) = (&record.question_entities, &record.answer_entities)
    else {
        return Err(Error::InvalidInput(
            "weak supervision needs question_entities and answer_entities".to_owned(),
        ));
    };
    let sources: IdSet = sources.iter().cloned().collect();
    let answers: IdSet = answers.iter().cloned().collect();
    if answers.is_empty() {
        return Ok(Vec::new());
    }

    let mut best: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    for src in &sources {
        let start = IdSet::from([src.clone()]);
        for path in source.search_shortest_paths(src, &answers, SEARCH_HOPS)? {
            let reached = source.terminal_entities(&start, &path)?;
            let agreement = metric.agreement(&reached, &answers);
            if agreement >= threshold {
                let slot = best.entry(path).or_insert(agreement);
                *slot = slot.max(agreement);
            }
        }
    }
    let mut scored: Vec<ScoredPath> = best
        .into_iter()
        .map(|(relations, agreement)| ScoredPath {
            relations,
            agreement,
        })
        .collect();
    scored.sort_by(|a, b| {
        b.agreement
            .total_cmp(&a.agreement)
            .then_with(|| a.relations.cmp(&b.relations))
    });
    Ok(scored)
}

/// The K+1 `(query, positive)` pairs of a path given by relation labels.
pub fn decompose_path<S: AsRef<str>>(question: &str, labels: &[S]) -> Vec<(String, String)> {
    (0..=labels.len())
        .map(|k| {
            let positive = labels.get(k).map_or(END, |l| l.as_ref()).to_owned();
            (build_query(question, &labels[..k]), positive)
        })
        .collect()
}

/// Gold paths carried by a record in supervised mode.
pub fn gold_paths(record: &QuestionRecord) -> Result<Vec<Vec<String>>> {
    let value = record
        .extra
        .get("paths")
        .ok_or_else(|| Error::InvalidInput("record has no gold `paths`".to_owned()))?;
    serde_json::from_value(value.clone())
        .map_err(|e| Error::InvalidInput(format!("`paths` must be a list of relation lists: {e}")))
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one sampling site, independent of scheduling.
pub fn step_seed(seed: u64, record: usize, path: usize, step: usize) -> u64 {
    mix(mix(mix(seed ^ mix(record as u64)) ^ path as u64) ^ step as u64)
}

struct LabelCache<'a> {
    source: &'a dyn KnowledgeSource,
    labels: HashMap<String, String>,
}

impl LabelCache<'_> {
    fn ensure<'i>(&mut self, ids: impl IntoIterator<Item = &'i String>) -> Result<()> {
        let missing: IdSet = ids
            .into_iter()
            .filter(|id| !self.labels.contains_key(*id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            for (id, label) in self.source.fetch_labels(&missing)? {
                self.labels.insert(id, label);
            }
            for id in missing {
                self.labels.entry(id.clone()).or_insert(id);
            }
        }
        Ok(())
    }

    fn get(&self, id: &str) -> &str {
        &self.labels[id]
    }
}

/// All training samples for one record; `index` is its position in the input.
pub fn generate_samples(
    record: &QuestionRecord,
    index: usize,
    source: &dyn KnowledgeSource,
    config: &PreprocessConfig,
) -> Result<Vec<TrainSample>> {
    let question = record
        .question
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("record has no question".to_owned()))?;
    let paths: Vec<Vec<String>> = if config.search_paths {
        find_scored_paths(record, source, config.threshold, config.metric)?
            .into_iter()
            .map(|p| p.relations)
            .collect()
    } else {
        gold_paths(record)?
    };
    let sources: IdSet = record.question_entities().iter().cloned().collect();

    let mut labels = LabelCache {
        source,
        labels: HashMap::new(),
    };
    labels.ensure(paths.iter().flatten())?;

    let mut samples = Vec::new();
    for (pi, path) in paths.iter().enumerate() {
        let path_labels: Vec<String> = path.iter().map(|r| labels.get(r).to_owned()).collect();
        let mut frontier = sources.clone();
        for (k, (query, positive)) in decompose_path(question, &path_labels).into_iter().enumerate() {
            let exclude = path.get(k).map(String::as_str);
            let mut negatives = Vec::new();
            if config.num_negative > 0 && !frontier.is_empty() {
                let ordered = source.sample_negative_relations(
                    &frontier,
                    exclude,
                    usize::MAX,
                    step_seed(config.seed, index, pi, k),
                )?;
                let mut seen: HashSet<String> = HashSet::from([positive.clone()]);
                for chunk in ordered.chunks(config.num_negative * 2) {
                    labels.ensure(chunk)?;
                    for id in chunk {
                        let label = labels.get(id);
                        if seen.insert(label.to_owned()) {
                            negatives.push(label.to_owned());
                            if negatives.len() == config.num_negative {
                                break;
                            }
                        }
                    }
                    if negatives.len() == config.num_negative {
                        break;
                    }
                }
            }
            samples.push(TrainSample {
                query,
                positive,
                negatives,
            });
            if let Some(relation) = path.get(k) {
                frontier = source.terminal_entities(&frontier, std::slice::from_ref(relation))?;
            }
        }
    }
    Ok(samples)
}
