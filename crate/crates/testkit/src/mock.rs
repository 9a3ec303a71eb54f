//! Local HTTP endpoints that speak the wire formats the clients expect.
//!
//! Each mock runs on an ephemeral port with a few worker threads, counts the
//! requests it receives, keeps a log of them, and can be told to fail
//! selected requests.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use regex::Regex;
use serde_json::{json, Value};
use srtk_core::kgsource::{KnowledgeGraphProfile, TripleStoreFixture};

#[derive(Clone, Debug, Default)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// A parameter from the query string or a form-encoded body.
    pub fn param(&self, name: &str) -> Option<String> {
        self.query
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.clone())
            .or_else(|| {
                form_urlencoded::parse(self.body.as_bytes())
                    .find(|(k, _)| k == name)
                    .map(|(_, v)| v.into_owned())
            })
    }
}

#[derive(Clone, Debug)]
pub struct MockResponse {
    pub status: u16,
    pub content_type: String,
    pub body: String,
}

impl MockResponse {
    pub fn json(value: &Value) -> Self {
        MockResponse {
            status: 200,
            content_type: "application/json".to_owned(),
            body: value.to_string(),
        }
    }

    pub fn status(status: u16, message: &str) -> Self {
        MockResponse {
            status,
            content_type: "text/plain".to_owned(),
            body: message.to_owned(),
        }
    }
}

/// Which requests a mock should answer with an error status.
#[derive(Clone, Debug, Default)]
pub enum Fault {
    #[default]
    None,
    /// Requests whose body or query string contains the needle.
    Matching { needle: String, status: u16 },
    /// Requests by 0-based arrival index.
    Calls { calls: BTreeSet<usize>, status: u16 },
}

impl Fault {
    pub fn matching(needle: impl Into<String>, status: u16) -> Self {
        Fault::Matching {
            needle: needle.into(),
            status,
        }
    }

    fn status_for(&self, req: &MockRequest, index: usize) -> Option<u16> {
        match self {
            Fault::None => None,
            Fault::Matching { needle, status } => {
                let hit = req.body.contains(needle.as_str())
                    || req
                        .query
                        .iter()
                        .any(|(_, v)| v.contains(needle.as_str()));
                hit.then_some(*status)
            }
            Fault::Calls { calls, status } => calls.contains(&index).then_some(*status),
        }
    }
}

type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

/// A running mock endpoint; shuts down when dropped.
pub struct MockServer {
    url: String,
    calls: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<MockRequest>>>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

const WORKERS: usize = 8;

impl MockServer {
    pub fn start<F>(fault: Fault, handler: F) -> MockServer
    where
        F: Fn(&MockRequest) -> MockResponse + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let addr = server.server_addr().to_ip().expect("tcp listener");
        let calls = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let fault = Arc::new(fault);
        let workers = (0..WORKERS)
            .map(|_| {
                let (server, calls, log, stop, handler, fault) = (
                    server.clone(),
                    calls.clone(),
                    log.clone(),
                    stop.clone(),
                    handler.clone(),
                    fault.clone(),
                );
                std::thread::spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        let Ok(Some(mut rq)) = server.recv_timeout(Duration::from_millis(20)) else {
                            continue;
                        };
                        let req = to_mock_request(&mut rq);
                        let index = calls.fetch_add(1, Ordering::SeqCst);
                        log.lock().unwrap().push(req.clone());
                        let resp = match fault.status_for(&req, index) {
                            Some(status) => MockResponse::status(status, "injected fault"),
                            None => handler(&req),
                        };
                        let header = tiny_http::Header::from_bytes("Content-Type", resp.content_type)
                            .expect("valid header");
                        let _ = rq.respond(
                            tiny_http::Response::from_string(resp.body)
                                .with_status_code(resp.status)
                                .with_header(header),
                        );
                    }
                })
            })
            .collect();
        MockServer {
            url: format!("http://{addr}"),
            calls,
            log,
            stop,
            workers,
        }
    }

    /// Base URL, without a trailing slash.
    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn to_mock_request(rq: &mut tiny_http::Request) -> MockRequest {
    let mut body = String::new();
    let _ = rq.as_reader().read_to_string(&mut body);
    let (path, query) = match rq.url().split_once('?') {
        Some((p, q)) => (p.to_owned(), form_urlencoded::parse(q.as_bytes()).into_owned().collect()),
        None => (rq.url().to_owned(), Vec::new()),
    };
    MockRequest {
        method: rq.method().to_string(),
        path,
        query,
        headers: rq
            .headers()
            .iter()
            .map(|h| (h.field.to_string(), h.value.to_string()))
            .collect(),
        body,
    }
}

fn char_offsets(text: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    text.match_indices(needle)
        .map(|(byte, _)| text[..byte].chars().count())
        .collect()
}

/// A SPARQL endpoint that answers exactly the query templates the client
/// issues, over a fixture whose ids are expanded with the profile's prefixes.
pub struct SparqlMock;

struct IriGraph {
    // subject -> predicate -> objects, all as full IRIs
    out: BTreeMap<String, BTreeMap<String, BTreeSet<String>>>,
    labels: BTreeMap<String, String>,
}

impl IriGraph {
    fn new(fixture: &TripleStoreFixture, profile: &KnowledgeGraphProfile) -> Self {
        let mut out: BTreeMap<String, BTreeMap<String, BTreeSet<String>>> = BTreeMap::new();
        for t in &fixture.triples {
            out.entry(profile.entity_iri(&t.subject))
                .or_default()
                .entry(profile.relation_iri(&t.predicate))
                .or_default()
                .insert(profile.entity_iri(&t.object));
        }
        let mut labels = BTreeMap::new();
        for (id, label) in &fixture.labels {
            labels.insert(profile.entity_iri(id), label.clone());
            labels.insert(profile.relation_iri(id), label.clone());
        }
        IriGraph { out, labels }
    }

    fn objects<'a>(&'a self, s: &str, p: &str) -> impl Iterator<Item = &'a String> + 'a {
        self.out
            .get(s)
            .and_then(|m| m.get(p))
            .into_iter()
            .flatten()
    }
}

fn uri(v: &str) -> Value {
    json!({"type": "uri", "value": v})
}

fn results(vars: &[&str], rows: Vec<Value>) -> MockResponse {
    MockResponse {
        status: 200,
        content_type: "application/sparql-results+json".to_owned(),
        body: json!({"head": {"vars": vars}, "results": {"bindings": rows}}).to_string(),
    }
}

struct Templates {
    iri: Regex,
    connected: Regex,
    terminal: Regex,
    chain_step: Regex,
    outgoing: Regex,
    one_hop: Regex,
    two_hop: Regex,
    labels: Regex,
}

impl Templates {
    fn new() -> Self {
        const V: &str = r"(?P<v>(?: <[^>\s]*>)*)";
        let re = |s: String| Regex::new(&s).expect("template regex");
        Templates {
            iri: Regex::new(r"<([^>\s]*)>").unwrap(),
            connected: re(format!(
                r"^SELECT DISTINCT \?r WHERE \{{ VALUES \?e \{{{V} \}} \?e \?r \?x \. FILTER\(isIRI\(\?x\)\) \}}$"
            )),
            terminal: re(format!(
                r"^SELECT DISTINCT \?t WHERE \{{ VALUES \?e \{{{V} \}} (?P<chain>(?:\?\w+ <[^>\s]*> \?\w+ \. )+)FILTER\(isIRI\(\?t\)\) \}}$"
            )),
            chain_step: Regex::new(r"\?\w+ <([^>\s]*)> \?\w+ \. ").unwrap(),
            outgoing: re(format!(
                r"^SELECT DISTINCT \?e \?x WHERE \{{ VALUES \?e \{{{V} \}} \?e <(?P<r>[^>\s]*)> \?x \. FILTER\(isIRI\(\?x\)\) \}}$"
            )),
            one_hop: re(format!(
                r"^SELECT DISTINCT \?r1 WHERE \{{ VALUES \?a \{{{V} \}} <(?P<s>[^>\s]*)> \?r1 \?a \. \}}$"
            )),
            two_hop: re(format!(
                r"^SELECT DISTINCT \?r1 \?r2 WHERE \{{ VALUES \?a \{{{V} \}} <(?P<s>[^>\s]*)> \?r1 \?m \. \?m \?r2 \?a \. FILTER\(isIRI\(\?m\)\) \}}$"
            )),
            labels: re(format!(
                r#"^SELECT \?s \?l WHERE \{{ VALUES \?s \{{{V} \}} \?s <(?P<p>[^>\s]*)> \?l \. FILTER\(LANG\(\?l\) = "(?P<lang>[A-Za-z0-9-]*)" \|\| LANG\(\?l\) = ""\) \}}$"#
            )),
        }
    }

    fn values(&self, block: &str) -> Vec<String> {
        self.iri.captures_iter(block).map(|c| c[1].to_owned()).collect()
    }
}

fn answer(t: &Templates, g: &IriGraph, label_predicate: &str, query: &str) -> MockResponse {
    if let Some(c) = t.connected.captures(query) {
        let rels: BTreeSet<&String> = t
            .values(&c["v"])
            .iter()
            .filter_map(|e| g.out.get(e))
            .flat_map(|m| m.keys())
            .collect();
        return results(&["r"], rels.into_iter().map(|r| json!({"r": uri(r)})).collect());
    }
    if let Some(c) = t.terminal.captures(query) {
        let mut current: BTreeSet<String> = t.values(&c["v"]).into_iter().collect();
        for step in t.chain_step.captures_iter(&c["chain"]) {
            current = current
                .iter()
                .flat_map(|e| g.objects(e, &step[1]))
                .cloned()
                .collect();
        }
        return results(&["t"], current.iter().map(|e| json!({"t": uri(e)})).collect());
    }
    if let Some(c) = t.outgoing.captures(query) {
        let mut rows = Vec::new();
        for e in t.values(&c["v"]) {
            for x in g.objects(&e, &c["r"]) {
                rows.push(json!({"e": uri(&e), "x": uri(x)}));
            }
        }
        return results(&["e", "x"], rows);
    }
    if let Some(c) = t.one_hop.captures(query) {
        let answers: BTreeSet<String> = t.values(&c["v"]).into_iter().collect();
        let rels: BTreeSet<&String> = g
            .out
            .get(&c["s"])
            .into_iter()
            .flatten()
            .filter(|(_, objs)| objs.iter().any(|o| answers.contains(o)))
            .map(|(r, _)| r)
            .collect();
        return results(&["r1"], rels.into_iter().map(|r| json!({"r1": uri(r)})).collect());
    }
    if let Some(c) = t.two_hop.captures(query) {
        let answers: BTreeSet<String> = t.values(&c["v"]).into_iter().collect();
        let mut pairs = BTreeSet::new();
        for (r1, mids) in g.out.get(&c["s"]).into_iter().flatten() {
            for m in mids {
                for (r2, objs) in g.out.get(m).into_iter().flatten() {
                    if objs.iter().any(|o| answers.contains(o)) {
                        pairs.insert((r1, r2));
                    }
                }
            }
        }
        return results(
            &["r1", "r2"],
            pairs
                .into_iter()
                .map(|(a, b)| json!({"r1": uri(a), "r2": uri(b)}))
                .collect(),
        );
    }
    if let Some(c) = t.labels.captures(query) {
        if &c["p"] != label_predicate {
            return results(&["s", "l"], Vec::new());
        }
        let lang = &c["lang"];
        let rows = t
            .values(&c["v"])
            .into_iter()
            .filter_map(|s| {
                g.labels.get(&s).map(|l| {
                    json!({"s": uri(&s), "l": {"type": "literal", "value": l, "xml:lang": lang}})
                })
            })
            .collect();
        return results(&["s", "l"], rows);
    }
    MockResponse::status(400, "query does not match any supported template")
}

impl SparqlMock {
    pub fn start(fixture: &TripleStoreFixture, profile: &KnowledgeGraphProfile) -> MockServer {
        Self::start_with(fixture, profile, Fault::None)
    }

    pub fn start_with(
        fixture: &TripleStoreFixture,
        profile: &KnowledgeGraphProfile,
        fault: Fault,
    ) -> MockServer {
        let graph = IriGraph::new(fixture, profile);
        let templates = Templates::new();
        let label_predicate = profile.label_predicate.clone();
        MockServer::start(fault, move |req| match req.param("query") {
            Some(q) => answer(&templates, &graph, &label_predicate, &q),
            None => MockResponse::status(400, "missing query parameter"),
        })
    }
}

/// A REL-style linker: finds each configured mention in the text and
/// answers `[start, length, mention, title, confidence, confidence, "NULL"]` rows.
pub struct RelMock;

impl RelMock {
    pub fn start(
        entries: Vec<(String, String, f64)>,
        token: Option<String>,
        fault: Fault,
    ) -> MockServer {
        MockServer::start(fault, move |req| {
            if let Some(token) = &token {
                if req.header("Authorization") != Some(token.as_str()) {
                    return MockResponse::status(401, "unauthorized");
                }
            }
            let Some(text) = serde_json::from_str::<Value>(&req.body)
                .ok()
                .and_then(|v| v.get("text").and_then(Value::as_str).map(str::to_owned))
            else {
                return MockResponse::status(400, "expected {\"text\": ...}");
            };
            let mut rows = Vec::new();
            for (mention, title, confidence) in &entries {
                for start in char_offsets(&text, mention) {
                    rows.push(json!([
                        start,
                        mention.chars().count(),
                        mention,
                        title,
                        confidence,
                        confidence,
                        "NULL"
                    ]));
                }
            }
            MockResponse::json(&Value::Array(rows))
        })
    }
}

/// A Spotlight-style linker answering with string-valued `Resources` fields;
/// it ignores the confidence parameter so that client-side filtering is exercised.
pub struct SpotlightMock;

impl SpotlightMock {
    pub fn start(entries: Vec<(String, String, f64)>, fault: Fault) -> MockServer {
        MockServer::start(fault, move |req| {
            let Some(text) = req.param("text") else {
                return MockResponse::status(400, "missing text");
            };
            let mut resources = Vec::new();
            for (surface, uri, score) in &entries {
                for start in char_offsets(&text, surface) {
                    resources.push(json!({
                        "@URI": uri,
                        "@support": "100",
                        "@types": "",
                        "@surfaceForm": surface,
                        "@offset": start.to_string(),
                        "@similarityScore": score.to_string(),
                        "@percentageOfSecondRank": "0.0"
                    }));
                }
            }
            let mut body = json!({"@text": text, "@confidence": req.param("confidence")});
            if !resources.is_empty() {
                body["Resources"] = Value::Array(resources);
            }
            MockResponse::json(&body)
        })
    }
}

/// An `/embed` endpoint returning hashed bag-of-words vectors.
pub struct EmbedMock;

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// The vector [`EmbedMock`] serves for `text` (before normalization).
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let mut any = false;
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        v[(fnv1a(&token.to_lowercase()) % dim as u64) as usize] += 1.0;
        any = true;
    }
    if !any {
        v[0] = 1.0;
    }
    v
}

impl EmbedMock {
    pub fn start(dim: usize, fault: Fault) -> MockServer {
        Self::start_switching(dim, None, fault)
    }

    /// Like [`EmbedMock::start`], but answers with `dim + 1` dimensions from
    /// request number `switch_after` on.
    pub fn start_switching(dim: usize, switch_after: Option<usize>, fault: Fault) -> MockServer {
        let served = AtomicUsize::new(0);
        MockServer::start(fault, move |req| {
            if req.path.trim_end_matches('/') != "/embed" || req.method != "POST" {
                return MockResponse::status(404, "not found");
            }
            let Some(texts) = serde_json::from_str::<Value>(&req.body)
                .ok()
                .and_then(|v| v.get("texts").cloned())
                .and_then(|t| serde_json::from_value::<Vec<String>>(t).ok())
            else {
                return MockResponse::status(422, "expected {\"texts\": [...]}");
            };
            let n = served.fetch_add(1, Ordering::SeqCst);
            let d = match switch_after {
                Some(k) if n >= k => dim + 1,
                _ => dim,
            };
            let vectors: Vec<Vec<f64>> = texts.iter().map(|t| hashed_embedding(t, d)).collect();
            MockResponse::json(&json!({"vectors": vectors, "dim": d}))
        })
    }
}
