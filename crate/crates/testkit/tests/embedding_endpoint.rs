//! The embedding scorer against a mock `/embed` endpoint.

use srtk_core::expander::{ExpanderConfig, PathExpander};
use srtk_core::http::HttpSettings;
use srtk_core::kgsource::IdSet;
use srtk_core::scorer::{EmbeddingScorer, ScoreRequest, Scorer};
use srtk_core::Error;
use srtk_testkit::mock::hashed_embedding;
use srtk_testkit::{g0_store, EmbedMock, Fault};

fn settings() -> HttpSettings {
    HttpSettings {
        max_retries: 0,
        ..Default::default()
    }
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("text number {i}")).collect()
}

#[test]
fn batches_are_split_at_the_batch_size() {
    let mock = EmbedMock::start(16, Fault::None);
    let scorer = EmbeddingScorer::new(mock.url(), settings()).unwrap();
    let vectors = scorer.embed(&texts(300)).unwrap();
    assert_eq!(vectors.len(), 300);
    assert_eq!(mock.calls(), 3);
    let sizes: Vec<usize> = mock
        .requests()
        .iter()
        .map(|r| {
            let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
            v["texts"].as_array().unwrap().len()
        })
        .collect();
    let mut sorted = sizes.clone();
    sorted.sort();
    assert_eq!(sorted, [44, 128, 128]);
    for (t, v) in texts(300).iter().zip(&vectors) {
        let raw = hashed_embedding(t, 16);
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, b) in raw.iter().zip(v.iter()) {
            assert!((a / norm - b).abs() < 1e-12);
        }
    }
}

#[test]
fn vectors_are_unit_length_and_cached() {
    let mock = EmbedMock::start(32, Fault::None);
    let scorer = EmbeddingScorer::new(&format!("{}/", mock.url()), settings()).unwrap();
    let v = scorer.embed(&["a".to_owned()]).unwrap();
    let norm: f64 = v[0].iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-6);
    let twice = scorer.embed(&["x".to_owned(), "x".to_owned()]).unwrap();
    assert_eq!(twice[0], twice[1]);
    assert_eq!(mock.calls(), 2);
    scorer.embed(&["x".to_owned(), "a".to_owned()]).unwrap();
    assert_eq!(mock.calls(), 2);
}

#[test]
fn cosine_scores_match_direct_computation() {
    let mock = EmbedMock::start(64, Fault::None);
    let scorer = EmbeddingScorer::new(mock.url(), settings()).unwrap();
    let query = "where is E1 located [SEP]";
    let candidates = vec!["located in".to_owned(), "time zone".to_owned(), "END".to_owned()];
    let scored = scorer
        .score(&ScoreRequest::new(query.to_owned(), candidates.clone()).unwrap())
        .unwrap();
    let unit = |t: &str| {
        let v = hashed_embedding(t, 64);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let q = unit(query);
    for (c, s) in candidates.iter().zip(&scored.scores) {
        let expect: f64 = q.iter().zip(unit(c)).map(|(a, b)| a * b).sum();
        assert!((expect - s).abs() < 1e-9);
    }
    assert!(scored.scores[0] > scored.scores[1]);
    let self_sim = scorer.score_texts(query, &[query.to_owned()]).unwrap();
    assert!((self_sim[0] - 1.0).abs() < 1e-9);
}

#[test]
fn dimension_change_is_a_protocol_error() {
    let mock = EmbedMock::start_switching(8, Some(1), Fault::None);
    let scorer = EmbeddingScorer::new(mock.url(), settings()).unwrap();
    scorer.embed(&["first".to_owned()]).unwrap();
    let err = scorer.embed(&["second".to_owned()]).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn server_errors_surface_as_transport_errors() {
    let mock = EmbedMock::start(8, Fault::matching("boom", 503));
    let scorer = EmbeddingScorer::new(mock.url(), settings()).unwrap();
    let err = scorer.embed(&["boom".to_owned()]).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}

#[test]
fn drives_the_expander() {
    let mock = EmbedMock::start(64, Fault::None);
    let scorer = EmbeddingScorer::new(mock.url(), settings()).unwrap();
    let store = g0_store();
    let expander = PathExpander::new(
        &store,
        &scorer,
        ExpanderConfig {
            beam_width: 2,
            max_depth: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let paths = expander
        .retrieve_paths("where is E1 located", &IdSet::from(["E1".to_owned()]))
        .unwrap();
    assert!(!paths.is_empty() && paths.len() <= 2);
    let calls = mock.calls();
    expander
        .retrieve_paths("where is E1 located", &IdSet::from(["E1".to_owned()]))
        .unwrap();
    assert_eq!(mock.calls(), calls, "second run is served from the cache");
}
