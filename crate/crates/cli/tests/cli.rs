//! Exit codes, configuration handling and stage composition.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use srtk_core::kgdata::{read_records, QuestionRecord, RetrievalResult, TrainSample};
use srtk_core::kgsource::{GraphKind, KnowledgeGraphProfile};
use srtk_testkit::{Fault, RelMock, SparqlMock, G0_TEXT};
use srtk_cli::run;
use tempfile::TempDir;

fn srtk(args: &[&str]) -> i32 {
    run(std::iter::once("srtk").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_subcommand_is_a_config_error() {
    assert_eq!(srtk(&["frobnicate"]), 2);
    assert_eq!(srtk(&[]), 2);
    assert_eq!(srtk(&["retrieve", "--bogus"]), 2);
}

#[test]
fn help_succeeds() {
    assert_eq!(srtk(&["--help"]), 0);
    assert_eq!(srtk(&["retrieve", "--help"]), 0);
}

#[test]
fn train_points_elsewhere() {
    assert_eq!(srtk(&["train", "--train-dataset", "data/train.jsonl", "--output-dir", "x"]), 2);
}

#[test]
fn hub_scorer_is_rejected_without_output() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", "{\"question\": \"q\", \"question_entities\": [\"E1\"]}\n");
    let fixture = write(&dir, "g0.txt", G0_TEXT);
    let out = dir.path().join("out.jsonl");
    let code = srtk(&[
        "retrieve", "--input", p(&input), "--output", p(&out),
        "--scorer-model-path", "drt/srtk-scorer", "--knowledge-graph", "custom",
        "--fixture", p(&fixture),
    ]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn custom_graph_without_endpoint_is_rejected() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", "{\"question\": \"q\"}\n");
    let out = dir.path().join("out.jsonl");
    let code = srtk(&["retrieve", "--input", p(&input), "--output", p(&out), "--knowledge-graph", "custom"]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn malformed_input_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", "{\"question\": \"q\"}\nnot json\n");
    let fixture = write(&dir, "g0.txt", G0_TEXT);
    let out = dir.path().join("out.jsonl");
    let code = srtk(&[
        "retrieve", "--input", p(&input), "--output", p(&out),
        "--knowledge-graph", "custom", "--fixture", p(&fixture),
    ]);
    assert_eq!(code, 2);
    assert!(!out.exists());
    assert_eq!(srtk(&["retrieve", "--input", "/nonexistent.jsonl", "--output", p(&out), "--fixture", p(&fixture)]), 2);
}

#[test]
fn retrieve_needs_output_or_evaluate() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", "{\"question\": \"q\"}\n");
    let fixture = write(&dir, "g0.txt", G0_TEXT);
    assert_eq!(srtk(&["retrieve", "--input", p(&input), "--fixture", p(&fixture)]), 2);
}

#[test]
fn retrieve_on_g0_fixture() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "in.jsonl",
        "{\"id\": \"g0\", \"question\": \"where is E1 located\", \"question_entities\": [\"E1\"], \"answer_entities\": [\"E2\"]}\n",
    );
    let fixture = write(&dir, "g0.txt", G0_TEXT);
    let out = dir.path().join("out.jsonl");
    let code = srtk(&[
        "retrieve", "--input", p(&input), "--output", p(&out), "--knowledge-graph", "custom",
        "--fixture", p(&fixture), "--beam-width", "1", "--max-depth", "1", "--include-paths", "--evaluate",
    ]);
    assert_eq!(code, 0);
    let out = lines(&out);
    assert_eq!(out[0]["id"], "g0");
    assert_eq!(out[0]["triples"], serde_json::json!([["E1", "Rloc", "E2"]]));
    assert_eq!(out[0]["paths"][0]["relations"], serde_json::json!(["Rloc"]));
}

fn example_profile_file(dir: &TempDir, endpoint: &str) -> PathBuf {
    write(
        dir,
        "profile.toml",
        &format!(
            "sparql_endpoint = \"{endpoint}\"\n\
             entity_prefix = \"http://example.org/entity/\"\n\
             relation_prefix = \"http://example.org/prop/\"\n\
             max_retries = 0\n"
        ),
    )
}

fn example_profile() -> KnowledgeGraphProfile {
    let mut p = KnowledgeGraphProfile::builtin(GraphKind::Custom);
    p.entity_prefix = "http://example.org/entity/".into();
    p.relation_prefix = "http://example.org/prop/".into();
    p
}

#[test]
fn one_endpoint_failure_keeps_every_line() {
    let fixture = srtk_testkit::random_fixture(5, 12, 4, 40);
    let mock = SparqlMock::start_with(&fixture, &example_profile(), Fault::matching("E3%3E", 500));
    let dir = TempDir::new().unwrap();
    let profile = example_profile_file(&dir, mock.url());
    let input: String = (1..=5)
        .map(|i| format!("{{\"id\": \"r{i}\", \"question\": \"what is E{i} part of\", \"question_entities\": [\"E{i}\"]}}\n"))
        .collect();
    let input = write(&dir, "in.jsonl", &input);
    let out = dir.path().join("out.jsonl");
    let code = srtk(&[
        "retrieve", "--input", p(&input), "--output", p(&out),
        "--knowledge-graph", p(&profile), "--jobs", "2",
    ]);
    assert_eq!(code, 1);
    let out = lines(&out);
    assert_eq!(out.len(), 5);
    for (i, line) in out.iter().enumerate() {
        assert_eq!(line["id"], format!("r{}", i + 1));
        assert_eq!(line.get("error").is_some(), i == 2, "line {i}: {line}");
    }
    assert_eq!(out[2]["triples"], serde_json::json!([]));
}

#[test]
fn link_wikidata_through_rel() {
    let mock = RelMock::start(
        vec![("Hakata Ward".into(), "Hakata-ku,_Fukuoka".into(), 0.9)],
        Some("token".into()),
        Fault::None,
    );
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "question.jsonl", "{\"question\": \"Where is Hakata Ward?\"}\n");
    let db = write(&dir, "map.tsv", "Hakata-ku,_Fukuoka\tQ1330839\n");
    let out = dir.path().join("linked.jsonl");
    let base = [
        "link", "--input", p(&input), "--output", p(&out), "--knowledge-graph", "wikidata",
        "--el-endpoint", mock.url(), "--wikimapper-db", p(&db),
    ];
    assert_eq!(srtk(&base), 1, "missing token");
    let mut with_token = base.to_vec();
    with_token.extend(["--authorization", "token"]);
    assert_eq!(srtk(&with_token), 0);
    assert_eq!(
        lines(&out)[0],
        serde_json::json!({
            "question": "Where is Hakata Ward?",
            "question_entities": ["Q1330839"],
            "spans": [[9, 20]],
            "entity_names": ["Hakata-ku,_Fukuoka"]
        })
    );
}

#[test]
fn link_configuration_errors() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "q.jsonl", "{\"question\": \"q\"}\n");
    let out = dir.path().join("o.jsonl");
    let run_link = |extra: &[&str]| {
        let mut args = vec!["link", "--input", p(&input), "--output", p(&out), "--el-endpoint", "http://127.0.0.1:9"];
        args.extend_from_slice(extra);
        srtk(&args)
    };
    assert_eq!(run_link(&["--knowledge-graph", "wikidata"]), 2, "no mapping table");
    assert_eq!(run_link(&["--knowledge-graph", "freebase"]), 2);
    assert_eq!(run_link(&["--knowledge-graph", "dbpedia", "--confidence", "1.5"]), 2);
    assert!(!out.exists());
}

#[test]
fn preprocess_gold_paths_and_search() {
    let dir = TempDir::new().unwrap();
    let fixture = write(&dir, "g0.txt", G0_TEXT);
    let input = write(
        &dir,
        "in.jsonl",
        "{\"question\": \"where is E1 located\", \"question_entities\": [\"E1\"], \"answer_entities\": [\"E2\"], \"paths\": [[\"Rloc\"]]}\n",
    );
    for search in [false, true] {
        let out = dir.path().join(format!("train-{search}.jsonl"));
        let mut args = vec![
            "preprocess", "--input", p(&input), "--output", p(&out), "--knowledge-graph", "custom",
            "--fixture", p(&fixture), "--metric", "jaccard", "--num-negative", "2",
        ];
        if search {
            args.push("--search-path");
        }
        assert_eq!(srtk(&args), 0);
        let samples: Vec<TrainSample> = read_records(fs::read(&out).unwrap().as_slice())
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].query, "where is E1 located [SEP]");
        assert_eq!(samples[0].positive, "located in");
        assert_eq!(samples[0].negatives.len(), 2);
        assert_eq!(samples[1].positive, "END");
    }
    let out = dir.path().join("bad.jsonl");
    let code = srtk(&[
        "preprocess", "--input", p(&input), "--output", p(&out), "--knowledge-graph", "custom",
        "--fixture", p(&fixture), "--metric", "cosine",
    ]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn visualize_writes_one_page_per_line() {
    let dir = TempDir::new().unwrap();
    let fixture = write(&dir, "g0.txt", G0_TEXT);
    let input = write(
        &dir,
        "sub.jsonl",
        "{\"id\": \"a\", \"question\": \"q\", \"question_entities\": [\"E1\"], \"triples\": [[\"E1\",\"Rloc\",\"E2\"]]}\n\
         {\"id\": \"a\", \"triples\": []}\n\
         {\"id\": \"../x\", \"triples\": [[\"E2\",\"Rloc\",\"E4\"]]}\n",
    );
    let out = dir.path().join("pages");
    let code = srtk(&[
        "visualize", "--input", p(&input), "--output-dir", p(&out),
        "--knowledge-graph", "custom", "--fixture", p(&fixture),
    ]);
    assert_eq!(code, 0);
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["2.html", "a-1.html", "a.html"]);
    let page = fs::read_to_string(out.join("a.html")).unwrap();
    assert!(page.contains("located in"));
}

#[test]
fn retrieve_output_reads_back_as_results() {
    let dir = TempDir::new().unwrap();
    let fixture = write(&dir, "g0.txt", G0_TEXT);
    let input = write(&dir, "in.jsonl", "{\"question\": \"where is E1 located\", \"question_entities\": [\"E1\"]}\n");
    let out = dir.path().join("out.jsonl");
    assert_eq!(
        srtk(&["retrieve", "--input", p(&input), "--output", p(&out), "--knowledge-graph", "custom", "--fixture", p(&fixture), "--max-depth", "2"]),
        0
    );
    let results: Vec<RetrievalResult> = read_records(fs::read(&out).unwrap().as_slice())
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(results.len(), 1);
    assert!(results[0].paths.is_none());
    let _: Vec<QuestionRecord> = read_records(fs::read(&out).unwrap().as_slice())
        .collect::<Result<_, _>>()
        .unwrap();
}
