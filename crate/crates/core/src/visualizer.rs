//! Self-contained HTML pages for retrieved subgraphs.

use std::collections::{BTreeMap, HashMap, HashSet};

use regex::{Captures, Regex};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kgdata::RetrievalResult;
use crate::kgsource::IdSet;

pub const DEFAULT_TEMPLATE: &str = include_str!("../assets/graph.html");
pub const GRAPH_SCRIPT: &str = include_str!("../assets/graph.js");

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub id: String,
    pub label: String,
    pub highlighted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub label: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GraphDocument {
    pub title: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// Every id that needs a label to draw `result`.
pub fn label_ids(result: &RetrievalResult) -> IdSet {
    result
        .subgraph
        .iter()
        .flat_map(|t| [&t.subject, &t.predicate, &t.object])
        .cloned()
        .collect()
}

/// Nodes appear in order of first mention; ids without a label keep their id.
pub fn build_graph_document(
    result: &RetrievalResult,
    labels: &BTreeMap<String, String>,
) -> GraphDocument {
    let label = |id: &str| labels.get(id).cloned().unwrap_or_else(|| id.to_owned());
    let linked: HashSet<&str> = result
        .record
        .question_entities()
        .iter()
        .map(String::as_str)
        .collect();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut doc = GraphDocument {
        title: result.record.question.clone().unwrap_or_default(),
        ..Default::default()
    };
    for t in result.subgraph.iter() {
        for id in [&t.subject, &t.object] {
            if seen.insert(id, ()).is_none() {
                doc.nodes.push(Node {
                    id: id.clone(),
                    label: label(id),
                    highlighted: linked.contains(id.as_str()),
                });
            }
        }
        doc.edges.push(Edge {
            source: t.subject.clone(),
            target: t.object.clone(),
            label: label(&t.predicate),
        });
    }
    doc
}

fn script_safe_json(doc: &GraphDocument) -> Result<String> {
    let json = serde_json::to_string(doc)?;
    let mut out = String::with_capacity(json.len());
    for c in json.chars() {
        match c {
            '<' => out.push_str("\\u003c"),
            '>' => out.push_str("\\u003e"),
            '&' => out.push_str("\\u0026"),
            '\u{2028}' => out.push_str("\\u2028"),
            '\u{2029}' => out.push_str("\\u2029"),
            c => out.push(c),
        }
    }
    Ok(out)
}

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Fills `{{data}}`, `{{script}}` and optional `{{title}}` in one pass.
pub fn render_html(doc: &GraphDocument, template: &str) -> Result<String> {
    for required in ["{{data}}", "{{script}}"] {
        if !template.contains(required) {
            return Err(Error::Config(format!("template lacks the {required} placeholder")));
        }
    }
    let data = script_safe_json(doc)?;
    let title = escape_html(&doc.title);
    let placeholder = Regex::new(r"\{\{(data|script|title)\}\}").expect("static regex");
    Ok(placeholder
        .replace_all(template, |c: &Captures| match &c[1] {
            "data" => data.clone(),
            "script" => GRAPH_SCRIPT.to_owned(),
            _ => title.clone(),
        })
        .into_owned())
}

/// Output file stem: the record id when it is filesystem-safe, else the line index.
pub fn file_stem(result: &RetrievalResult, index: usize) -> String {
    match result.record.id.as_deref() {
        Some(id)
            if !id.is_empty()
                && id.len() <= 128
                && id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                && !id.starts_with('.') =>
        {
            id.to_owned()
        }
        _ => index.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgdata::{QuestionRecord, Subgraph, Triple};

    fn hakata() -> (RetrievalResult, BTreeMap<String, String>) {
        let mut record = QuestionRecord::new("Where is Hakata Ward?");
        record.question_entities = Some(vec!["Q1330839".into()]);
        let subgraph: Subgraph = [
            Triple::new("Q1330839", "P131", "Q26600"),
            Triple::new("Q1330839", "P17", "Q17"),
        ]
        .into_iter()
        .collect();
        let labels = [
            ("Q1330839", "Hakata-ku"),
            ("P131", "located in the administrative territorial entity"),
            ("Q26600", "Fukuoka"),
            ("P17", "country"),
            ("Q17", "Japan"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_owned(), b.to_owned()))
        .collect();
        (
            RetrievalResult {
                record,
                paths: None,
                subgraph,
            },
            labels,
        )
    }

    const EXTERNAL: &str = r#"(?i)(\bsrc\s*=|\bhref\s*=|url\s*\(|@import|\bfetch\s*\(|XMLHttpRequest|\bimport\s*\(|<link\b|<iframe\b|https?://|//[a-z0-9.-]+\.[a-z]{2,}/)"#;

    #[test]
    fn hakata_document() {
        let (result, labels) = hakata();
        let doc = build_graph_document(&result, &labels);
        assert_eq!(doc.nodes.len(), 3);
        assert_eq!(doc.edges.len(), 2);
        let highlighted: Vec<&str> = doc
            .nodes
            .iter()
            .filter(|n| n.highlighted)
            .map(|n| n.label.as_str())
            .collect();
        assert_eq!(highlighted, ["Hakata-ku"]);
        assert!(doc.edges[0].label.starts_with("located in"));
        assert_eq!(doc.edges[1].label, "country");

        let html = render_html(&doc, DEFAULT_TEMPLATE).unwrap();
        assert!(html.contains("Fukuoka"));
        assert!(html.contains("Japan"));
        assert_eq!(html, render_html(&doc, DEFAULT_TEMPLATE).unwrap());
        assert!(!Regex::new(EXTERNAL).unwrap().is_match(&html), "external reference in page");
    }

    #[test]
    fn empty_document() {
        let result = RetrievalResult {
            record: QuestionRecord::new("q"),
            paths: None,
            subgraph: Subgraph::new(),
        };
        let doc = build_graph_document(&result, &BTreeMap::new());
        assert!(doc.nodes.is_empty() && doc.edges.is_empty());
        let html = render_html(&doc, DEFAULT_TEMPLATE).unwrap();
        assert!(html.starts_with("<!DOCTYPE html>"));
        assert!(html.contains(r#"var GRAPH = {"title":"q","nodes":[],"edges":[]};"#));
    }

    #[test]
    fn repeated_entity_is_one_node() {
        let result = RetrievalResult {
            record: QuestionRecord::new("q"),
            paths: None,
            subgraph: [Triple::new("A", "r", "B"), Triple::new("B", "s", "C")]
                .into_iter()
                .collect(),
        };
        let doc = build_graph_document(&result, &BTreeMap::new());
        assert_eq!(doc.nodes.len(), 3);
        let degree = doc
            .edges
            .iter()
            .filter(|e| e.source == "B" || e.target == "B")
            .count();
        assert_eq!(degree, 2);
        for e in &doc.edges {
            assert!(doc.nodes.iter().any(|n| n.id == e.source));
            assert!(doc.nodes.iter().any(|n| n.id == e.target));
        }
    }

    #[test]
    fn hostile_labels_stay_inert() {
        let (result, mut labels) = hakata();
        labels.insert("Q17".into(), "</script><script src=\"x\">{{script}}".into());
        let mut result = result;
        result.record.question = Some("<b>&</b>".into());
        let html = render_html(&build_graph_document(&result, &labels), DEFAULT_TEMPLATE).unwrap();
        assert_eq!(html.matches("</script>").count(), 2);
        assert!(html.contains("&lt;b&gt;&amp;&lt;/b&gt;"));
        assert_eq!(html.matches("Force-directed subgraph viewer").count(), 1);
    }

    #[test]
    fn template_needs_placeholders() {
        let doc = GraphDocument::default();
        assert!(matches!(render_html(&doc, "<html>{{script}}</html>"), Err(Error::Config(_))));
        assert!(matches!(render_html(&doc, "<html>{{data}}</html>"), Err(Error::Config(_))));
        assert!(render_html(&doc, "{{data}}{{script}}").is_ok());
    }

    #[test]
    fn file_stems() {
        let (mut result, _) = hakata();
        assert_eq!(file_stem(&result, 4), "4");
        result.record.id = Some("WebQTest-12".into());
        assert_eq!(file_stem(&result, 4), "WebQTest-12");
        result.record.id = Some("../etc/passwd".into());
        assert_eq!(file_stem(&result, 4), "4");
    }
}
