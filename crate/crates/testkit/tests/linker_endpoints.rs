//! Linker clients against mock REL- and Spotlight-style services.

use srtk_core::http::{HttpClient, HttpSettings};
use srtk_core::kgdata::{read_records, write_records, QuestionRecord, Span};
use srtk_core::kgsource::{GraphKind, KnowledgeGraphProfile};
use srtk_core::linker::{annotate_rel, annotate_spotlight, link_records, Linker, WikiMapping};
use srtk_core::Error;
use srtk_testkit::{Fault, MockResponse, MockServer, RelMock, SpotlightMock};

fn settings() -> HttpSettings {
    HttpSettings {
        max_retries: 0,
        ..Default::default()
    }
}

fn hakata_rel(token: Option<&str>, fault: Fault) -> MockServer {
    RelMock::start(
        vec![("Hakata Ward".into(), "Hakata-ku,_Fukuoka".into(), 0.87)],
        token.map(str::to_owned),
        fault,
    )
}

fn mapping() -> WikiMapping {
    WikiMapping::from_pairs([("Hakata-ku,_Fukuoka", "Q1330839"), ("Japan", "Q17")]).unwrap()
}

#[test]
fn rel_links_hakata_ward() {
    let mock = hakata_rel(None, Fault::None);
    let client = HttpClient::new(settings());
    let found = annotate_rel(&client, mock.url(), "Where is Hakata Ward?", None).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].span, Span::new(9, 20));
    assert_eq!(found[0].target_name, "Hakata-ku,_Fukuoka");
    let body: serde_json::Value = serde_json::from_str(&mock.requests()[0].body).unwrap();
    assert_eq!(body, serde_json::json!({"text": "Where is Hakata Ward?"}));
}

#[test]
fn rel_rejects_empty_question() {
    let mock = hakata_rel(None, Fault::None);
    let client = HttpClient::new(settings());
    assert!(matches!(
        annotate_rel(&client, mock.url(), "", None),
        Err(Error::InvalidInput(_))
    ));
    assert_eq!(mock.calls(), 0);
}

#[test]
fn rel_overlap_keeps_the_confident_span() {
    let mock = RelMock::start(
        vec![
            ("Hakata Ward".into(), "Hakata-ku,_Fukuoka".into(), 0.9),
            ("Ward".into(), "Ward_(electoral_subdivision)".into(), 0.4),
        ],
        None,
        Fault::None,
    );
    let client = HttpClient::new(settings());
    let found = annotate_rel(&client, mock.url(), "Where is Hakata Ward?", None).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].confidence, Some(0.9));
}

#[test]
fn rel_authorization() {
    let mock = hakata_rel(Some("secret"), Fault::None);
    let client = HttpClient::new(settings());
    let err = annotate_rel(&client, mock.url(), "Where is Hakata Ward?", None).unwrap_err();
    assert!(matches!(err, Error::Auth { status: 401, .. }), "{err}");
    let ok = annotate_rel(&client, mock.url(), "Where is Hakata Ward?", Some("secret")).unwrap();
    assert_eq!(ok.len(), 1);
}

#[test]
fn rel_garbage_is_a_protocol_error() {
    let mock = MockServer::start(Fault::None, |_| MockResponse {
        status: 200,
        content_type: "text/html".into(),
        body: "<html>maintenance</html>".into(),
    });
    let client = HttpClient::new(settings());
    let err = annotate_rel(&client, mock.url(), "Where is Hakata Ward?", None).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn rel_timeout_is_a_transport_error() {
    let mock = MockServer::start(Fault::None, |_| {
        std::thread::sleep(std::time::Duration::from_millis(600));
        MockResponse::status(200, "[]")
    });
    let client = HttpClient::new(HttpSettings {
        timeout: std::time::Duration::from_millis(100),
        max_retries: 0,
        ..Default::default()
    });
    let err = annotate_rel(&client, mock.url(), "Where is Hakata Ward?", None).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}

#[test]
fn spotlight_threshold_filter() {
    let mock = SpotlightMock::start(
        vec![
            ("Hakata Ward".into(), "http://dbpedia.org/resource/Hakata-ku,_Fukuoka".into(), 0.99),
            ("Where".into(), "http://dbpedia.org/resource/Where_(album)".into(), 0.30),
        ],
        Fault::None,
    );
    let client = HttpClient::new(settings());
    let profile = KnowledgeGraphProfile::builtin(GraphKind::Dbpedia);
    let q = "Where is Hakata Ward?";
    let strict = annotate_spotlight(&client, mock.url(), q, 0.5, &profile).unwrap();
    assert_eq!(strict.len(), 1);
    assert_eq!(strict[0].target_id, "Hakata-ku,_Fukuoka");
    assert_eq!(strict[0].span.slice(q), Some("Hakata Ward"));
    let all = annotate_spotlight(&client, mock.url(), q, 0.0, &profile).unwrap();
    assert_eq!(all.len(), 2);
    assert!(annotate_spotlight(&client, mock.url(), q, 1.5, &profile).is_err());
    let sent = &mock.requests()[0];
    assert_eq!(sent.method, "GET");
    assert_eq!(sent.query.iter().find(|(k, _)| k == "confidence").unwrap().1, "0.5");
}

#[test]
fn question_line_becomes_the_linked_line() {
    let mock = hakata_rel(None, Fault::None);
    let linker = Linker::rel(mock.url(), None, mapping(), settings());
    let input = "{\"question\": \"Where is Hakata Ward?\"}\n";
    let mut records: Vec<QuestionRecord> = read_records(input.as_bytes()).collect::<Result<_, _>>().unwrap();
    let stats = link_records(&linker, &mut records);
    assert_eq!(stats.failed, 0);
    let mut out = Vec::new();
    write_records(&records, &mut out).unwrap();
    let line: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(
        line,
        serde_json::json!({
            "question": "Where is Hakata Ward?",
            "question_entities": ["Q1330839"],
            "spans": [[9, 20]],
            "entity_names": ["Hakata-ku,_Fukuoka"]
        })
    );
}

#[test]
fn batch_with_one_failure_keeps_every_line() {
    let mock = hakata_rel(None, Fault::matching("question 6", 500));
    let linker = Linker::rel(mock.url(), None, mapping(), settings());
    let mut records: Vec<QuestionRecord> = (0..10)
        .map(|i| QuestionRecord::new(format!("Where is Hakata Ward? question {i}")))
        .collect();
    records[3] = QuestionRecord::new("Nothing to see here, question 3");
    let stats = link_records(&linker, &mut records);
    assert_eq!(stats.records, 10);
    assert_eq!(stats.failed, 1);
    for (i, r) in records.iter().enumerate() {
        assert!(r.question.as_deref().unwrap().ends_with(&format!("question {i}")));
        match i {
            6 => assert!(r.error().is_some()),
            3 => {
                assert_eq!(r.question_entities, Some(vec![]));
                assert_eq!(r.spans, Some(vec![]));
                assert_eq!(r.entity_names, Some(vec![]));
            }
            _ => {
                assert_eq!(r.question_entities(), ["Q1330839"]);
                assert_eq!(r.spans.as_ref().unwrap().len(), 1);
            }
        }
    }
}

#[test]
fn unmapped_titles_are_dropped_and_counted() {
    let mock = RelMock::start(
        vec![
            ("Hakata Ward".into(), "Hakata-ku,_Fukuoka".into(), 0.9),
            ("Japan".into(), "Japan".into(), 0.9),
            ("Kyushu".into(), "Kyushu".into(), 0.9),
        ],
        None,
        Fault::None,
    );
    let linker = Linker::rel(mock.url(), None, mapping(), settings());
    let mut records = vec![QuestionRecord::new("Is Hakata Ward in Kyushu, Japan?")];
    let stats = link_records(&linker, &mut records);
    assert_eq!(stats.dropped, 1);
    assert_eq!(records[0].question_entities(), ["Q1330839", "Q17"]);
    assert_eq!(records[0].validate(1).map_err(|e| e.to_string()), Ok(()));
}
