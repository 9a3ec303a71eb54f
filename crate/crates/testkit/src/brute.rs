//! Exhaustive enumeration of relation paths, the reference for beam search.
//!
//! Works directly on the fixture's triple set rather than on a knowledge
//! source, and enumerates every relation sequence instead of pruning.

use std::collections::{BTreeMap, BTreeSet};

use srtk_core::expander::rank_order;
use srtk_core::kgdata::{ExpansionPath, END};
use srtk_core::kgsource::TripleStoreFixture;
use srtk_core::scorer::{build_query, softmax_log_probs, Scorer};
use srtk_core::Result;

type Adjacency<'a> = BTreeMap<&'a str, BTreeMap<&'a str, BTreeSet<&'a str>>>;

fn adjacency(graph: &TripleStoreFixture) -> Adjacency<'_> {
    let mut out: Adjacency<'_> = BTreeMap::new();
    for t in &graph.triples {
        out.entry(t.subject.as_str())
            .or_default()
            .entry(t.predicate.as_str())
            .or_default()
            .insert(t.object.as_str());
    }
    out
}

/// Every path of at most `max_depth` relations from `entities`, ranked like
/// the expander ranks its beam: paths that chose END (or hit a dead end) and
/// paths still open after `max_depth` steps.
pub fn brute_force_paths(
    graph: &TripleStoreFixture,
    entities: &BTreeSet<String>,
    scorer: &dyn Scorer,
    question: &str,
    max_depth: usize,
    temperature: f64,
) -> Result<Vec<ExpansionPath>> {
    if entities.is_empty() {
        return Ok(Vec::new());
    }
    let adj = adjacency(graph);
    let label = |id: &str| graph.labels.get(id).cloned().unwrap_or_else(|| id.to_owned());

    let mut done = Vec::new();
    let start: BTreeSet<&str> = entities.iter().map(String::as_str).collect();
    let mut open: Vec<(ExpansionPath, BTreeSet<&str>)> = vec![(ExpansionPath::empty(), start)];
    for _ in 0..max_depth {
        let mut next = Vec::new();
        for (path, frontier) in open {
            let relations: BTreeSet<&str> = frontier
                .iter()
                .filter_map(|e| adj.get(e))
                .flat_map(|m| m.keys().copied())
                .collect();
            if relations.is_empty() {
                done.push(ExpansionPath {
                    terminated: true,
                    ..path
                });
                continue;
            }
            let prior: Vec<String> = path.relations.iter().map(|r| label(r)).collect();
            let query = build_query(question, &prior);
            let mut candidates: Vec<String> = relations.iter().map(|r| label(r)).collect();
            candidates.push(END.to_owned());
            let scores = scorer.score_texts(&query, &candidates)?;
            let log_probs = softmax_log_probs(&scores, temperature);

            for (relation, lp) in relations.iter().zip(&log_probs) {
                let reached: BTreeSet<&str> = frontier
                    .iter()
                    .filter_map(|e| adj.get(e).and_then(|m| m.get(relation)))
                    .flatten()
                    .copied()
                    .collect();
                let mut child = path.clone();
                child.relations.push((*relation).to_owned());
                child.log_score += lp;
                next.push((child, reached));
            }
            done.push(ExpansionPath {
                relations: path.relations.clone(),
                log_score: path.log_score + log_probs[relations.len()],
                terminated: true,
            });
        }
        open = next;
    }
    done.extend(open.into_iter().map(|(p, _)| p));
    done.sort_by(rank_order);
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::g0;
    use srtk_core::scorer::LexicalScorer;

    fn e1() -> BTreeSet<String> {
        BTreeSet::from(["E1".to_owned()])
    }

    #[test]
    fn g0_depth_one_ranking() {
        let ranked = brute_force_paths(&g0(), &e1(), &LexicalScorer, "where is E1 located", 1, 1.0).unwrap();
        assert_eq!(ranked.len(), 4);
        assert_eq!(ranked[0].relations, ["Rloc"]);
        // remaining three tie; END (empty sequence) first, then Rcountry, Rtz
        assert!(ranked[1].relations.is_empty() && ranked[1].terminated);
        assert_eq!(ranked[2].relations, ["Rcountry"]);
        assert_eq!(ranked[3].relations, ["Rtz"]);
        let total: f64 = ranked.iter().map(|p| p.log_score.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depth_zero_is_the_empty_path() {
        let ranked = brute_force_paths(&g0(), &e1(), &LexicalScorer, "q", 0, 1.0).unwrap();
        assert_eq!(ranked, vec![ExpansionPath::empty()]);
    }

    #[test]
    fn probabilities_sum_to_one_at_any_depth() {
        for depth in 1..=3 {
            let ranked = brute_force_paths(&g0(), &e1(), &LexicalScorer, "where is E1 located", depth, 1.0).unwrap();
            let total: f64 = ranked.iter().map(|p| p.log_score.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "depth {depth}: {total}");
        }
    }
}
