//! Small hand-made and seeded random graphs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srtk_core::kgdata::Triple;
use srtk_core::kgsource::{GraphKind, KnowledgeGraphProfile, MemoryStore, TripleStoreFixture};

pub const G0_TEXT: &str = "\
# E1 --Rloc--> E2 --Rloc--> E4, plus two one-hop distractors
E1 Rloc E2
E1 Rcountry E3
E1 Rtz E5
E2 Rloc E4
@label Rloc located in
@label Rcountry country
@label Rtz time zone
";

pub fn g0() -> TripleStoreFixture {
    TripleStoreFixture::parse(G0_TEXT).expect("G0 parses")
}

pub fn g0_store() -> MemoryStore {
    MemoryStore::new(g0(), KnowledgeGraphProfile::builtin(GraphKind::Custom)).expect("G0 store")
}

const WORDS: &[&str] = &[
    "located", "in", "country", "time", "zone", "capital", "of", "born", "place", "member",
    "party", "river", "mouth", "author", "written", "by", "language", "spoken", "part", "child",
];

fn phrase(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A random graph over `E0..E{nodes-1}` and `R0..R{relations-1}`; relation
/// labels are short phrases from a fixed vocabulary so that lexical scores vary.
pub fn random_fixture(seed: u64, nodes: usize, relations: usize, edges: usize) -> TripleStoreFixture {
    assert!(nodes >= 2 && relations >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fixture = TripleStoreFixture::default();
    for _ in 0..edges {
        let s = rng.random_range(0..nodes);
        let mut o = rng.random_range(0..nodes - 1);
        if o >= s {
            o += 1;
        }
        let r = rng.random_range(0..relations);
        fixture
            .triples
            .insert(Triple::new(format!("E{s}"), format!("R{r}"), format!("E{o}")));
    }
    let used: Vec<String> = fixture
        .triples
        .iter()
        .flat_map(|t| [t.subject.clone(), t.predicate.clone(), t.object.clone()])
        .collect();
    for id in used {
        if fixture.labels.contains_key(&id) {
            continue;
        }
        let label = if id.starts_with('R') {
            phrase(&mut rng, 3)
        } else {
            format!("entity {}", &id[1..])
        };
        fixture.labels.insert(id, label);
    }
    fixture
}

/// A question made of vocabulary words, for lexical scoring.
pub fn random_question(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    format!("what {}", phrase(&mut rng, 5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g0_shape() {
        let g = g0();
        assert_eq!(g.triples.len(), 4);
        assert_eq!(g.labels["Rloc"], "located in");
    }

    #[test]
    fn random_fixture_is_seeded() {
        assert_eq!(random_fixture(3, 20, 5, 40), random_fixture(3, 20, 5, 40));
        assert_ne!(random_fixture(3, 20, 5, 40), random_fixture(4, 20, 5, 40));
        let g = random_fixture(3, 20, 5, 40);
        assert!(g.triples.iter().all(|t| t.subject != t.object));
        assert!(g.validate().is_ok());
        assert!(g.ids().len() <= 25);
    }
}
