//! Synthetic datasets with a known gold relation path per question.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srtk_core::kgdata::{QuestionRecord, Triple, END};
use srtk_core::kgsource::TripleStoreFixture;
use srtk_core::scorer::{build_query, Provenance, Scorer};
use srtk_core::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedInstance {
    pub graph: TripleStoreFixture,
    /// Each record carries `question`, one question entity, its answers and
    /// its gold path under `paths`.
    pub records: Vec<QuestionRecord>,
    /// Gold relation path of each record, by position.
    pub gold_paths: Vec<Vec<String>>,
}

impl PlantedInstance {
    pub fn label<'a>(&'a self, id: &'a str) -> &'a str {
        self.graph.labels.get(id).map_or(id, String::as_str)
    }
}

/// Builds `n_records` questions, each with a gold path of 1..=`max_hop`
/// relations from a fresh source entity. Every node on a gold path gets
/// `branching - 1` distractor relations, and the gold relation has exactly
/// one object, so the gold path reaches exactly the answer.
pub fn generate_planted(seed: u64, n_records: usize, max_hop: usize, branching: usize) -> PlantedInstance {
    assert!((1..=3).contains(&max_hop), "max_hop must be 1, 2 or 3");
    assert!(branching >= 2, "branching must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_relations = (branching * 3).max(8);
    let mut graph = TripleStoreFixture::default();
    let mut records = Vec::with_capacity(n_records);
    let mut gold_paths = Vec::with_capacity(n_records);
    let mut next_entity = 0usize;
    fn fresh(counter: &mut usize) -> String {
        *counter += 1;
        format!("N{}", *counter - 1)
    }

    for i in 0..n_records {
        let hops = rng.random_range(1..=max_hop);
        let source = fresh(&mut next_entity);
        let mut current = source.clone();
        let mut gold = Vec::with_capacity(hops);
        for step in 0..=hops {
            // Relations leaving `current`: the gold one (if any hop is left) plus distractors.
            let picks = sample(&mut rng, n_relations, branching).into_vec();
            let (gold_rel, distractors) = if step < hops {
                (Some(format!("R{}", picks[0])), &picks[1..])
            } else {
                (None, &picks[..branching - 1])
            };
            for &d in distractors {
                for _ in 0..rng.random_range(1..=2) {
                    let mut object = format!("N{}", rng.random_range(0..next_entity));
                    if object == current || rng.random_bool(0.5) {
                        object = fresh(&mut next_entity);
                    }
                    graph.triples.insert(Triple::new(current.clone(), format!("R{d}"), object));
                }
            }
            if let Some(relation) = gold_rel {
                let next = fresh(&mut next_entity);
                graph
                    .triples
                    .insert(Triple::new(current.clone(), relation.clone(), next.clone()));
                gold.push(relation);
                current = next;
            }
        }
        let mut record = QuestionRecord::new(format!("planted question {i}"));
        record.id = Some(format!("planted-{i}"));
        record.question_entities = Some(vec![source]);
        record.answer_entities = Some(vec![current]);
        record.extra.insert("paths".to_owned(), serde_json::json!([gold.clone()]));
        records.push(record);
        gold_paths.push(gold);
    }
    PlantedInstance {
        graph,
        records,
        gold_paths,
    }
}

/// Scores 1.0 for the gold next relation (END once the gold path is used up)
/// when the query is a gold prefix, and 0.0 for everything else.
#[derive(Clone, Debug)]
pub struct OracleScorer {
    next: HashMap<String, String>,
}

impl OracleScorer {
    pub fn new(instance: &PlantedInstance) -> Self {
        let mut next = HashMap::new();
        for (record, gold) in instance.records.iter().zip(&instance.gold_paths) {
            let question = record.question.as_deref().unwrap_or_default();
            let labels: Vec<&str> = gold.iter().map(|r| instance.label(r)).collect();
            for k in 0..=labels.len() {
                let want = labels.get(k).copied().unwrap_or(END);
                next.insert(build_query(question, &labels[..k]), want.to_owned());
            }
        }
        OracleScorer { next }
    }

    /// An oracle for explicit `(query, wanted label)` pairs.
    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        OracleScorer {
            next: pairs.into_iter().collect(),
        }
    }
}

impl Scorer for OracleScorer {
    fn provenance(&self) -> Provenance {
        Provenance::Oracle
    }

    fn score_texts(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        let want = self.next.get(query);
        Ok(candidates
            .iter()
            .map(|c| if Some(c) == want { 1.0 } else { 0.0 })
            .collect())
    }
}
