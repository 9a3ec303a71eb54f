//! Entity linking through external annotation services.
//!
//! Two adapters are provided: a REL-style service that links mentions to
//! Wikipedia titles (mapped onward to Wikidata through a title table), and a
//! Spotlight-style service that links straight to DBpedia resources.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::http::{HttpClient, HttpSettings};
use crate::kgdata::{QuestionRecord, Span};
use crate::kgsource::KnowledgeGraphProfile;

pub const DEFAULT_SPOTLIGHT_CONFIDENCE: f64 = 0.5;

/// Tables larger than this are searched on disk instead of loaded.
pub const IN_MEMORY_LIMIT: u64 = 256 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub span: Span,
    pub mention: String,
    pub target_id: String,
    pub target_name: String,
    pub confidence: Option<f64>,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Annotation {
    /// Whether the span lies inside `question` and covers the mention text.
    pub fn is_consistent(&self, question: &str) -> bool {
        self.span
            .slice(question)
            .is_some_and(|text| normalize_ws(text) == normalize_ws(&self.mention))
    }
}

/// Keeps a non-overlapping subset, preferring higher confidence, then longer
/// spans, then earlier starts, and returns it sorted by span start.
pub fn resolve_overlaps(mut annotations: Vec<Annotation>) -> Vec<Annotation> {
    annotations.sort_by(|a, b| {
        let ca = a.confidence.unwrap_or(f64::NEG_INFINITY);
        let cb = b.confidence.unwrap_or(f64::NEG_INFINITY);
        cb.total_cmp(&ca)
            .then_with(|| b.span.len().cmp(&a.span.len()))
            .then_with(|| a.span.start.cmp(&b.span.start))
    });
    let mut kept: Vec<Annotation> = Vec::with_capacity(annotations.len());
    for a in annotations {
        if kept.iter().all(|k| !k.span.overlaps(&a.span)) {
            kept.push(a);
        }
    }
    kept.sort_by_key(|a| (a.span.start, a.span.end));
    kept
}

fn tidy(question: &str, annotations: Vec<Annotation>) -> Vec<Annotation> {
    let consistent = annotations
        .into_iter()
        .filter(|a| {
            let ok = a.is_consistent(question);
            if !ok {
                log::warn!(
                    "dropping annotation {:?} at [{}, {}): span does not match the question",
                    a.mention,
                    a.span.start,
                    a.span.end
                );
            }
            ok
        })
        .collect();
    resolve_overlaps(consistent)
}

fn title_key(title: &str) -> String {
    title.trim().replace(' ', "_")
}

fn is_qid(id: &str) -> bool {
    id.len() > 1 && id.starts_with('Q') && id[1..].bytes().all(|b| b.is_ascii_digit())
}

enum MappingStore {
    Memory(HashMap<String, String>),
    Disk { path: PathBuf, len: u64, file: Mutex<File> },
}

/// Wikipedia title (underscored) to Wikidata Q-ID.
///
/// Stored as a two-column TSV, `title<TAB>QID`. Small tables are loaded into
/// memory; large ones must be sorted bytewise by title and are binary
/// searched in place.
pub struct WikiMapping {
    store: MappingStore,
}

impl std::fmt::Debug for WikiMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.store {
            MappingStore::Memory(m) => write!(f, "WikiMapping({} entries)", m.len()),
            MappingStore::Disk { path, .. } => write!(f, "WikiMapping({})", path.display()),
        }
    }
}

fn parse_row(line: &str, lineno: usize) -> Result<Option<(&str, &str)>> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.is_empty() {
        return Ok(None);
    }
    let (title, qid) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
        line: lineno,
        message: "expected `title<TAB>QID`".to_owned(),
    })?;
    let qid = qid.trim();
    if !is_qid(qid) {
        return Err(Error::Field {
            line: lineno,
            field: "qid".to_owned(),
            message: format!("{qid:?} is not a Wikidata item id"),
        });
    }
    Ok(Some((title, qid)))
}

impl WikiMapping {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: Into<String>,
    {
        let mut table = HashMap::new();
        for (title, qid) in pairs {
            let qid = qid.into();
            if !is_qid(&qid) {
                return Err(Error::InvalidInput(format!("{qid:?} is not a Wikidata item id")));
            }
            table.insert(title_key(title.as_ref()), qid);
        }
        Ok(WikiMapping {
            store: MappingStore::Memory(table),
        })
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if let Some((title, qid)) = parse_row(&line, i + 1)? {
                table.insert(title_key(title), qid.to_owned());
            }
        }
        Ok(WikiMapping {
            store: MappingStore::Memory(table),
        })
    }

    /// Loads the table, falling back to on-disk search above [`IN_MEMORY_LIMIT`].
    pub fn open(path: &Path) -> Result<Self> {
        let len = std::fs::metadata(path)
            .map_err(|e| Error::Config(format!("cannot read mapping {}: {e}", path.display())))?
            .len();
        if len > IN_MEMORY_LIMIT {
            Self::open_on_disk(path)
        } else {
            Self::from_tsv(BufReader::new(File::open(path)?))
        }
    }

    /// Searches a bytewise-sorted table without loading it.
    pub fn open_on_disk(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::Config(format!("cannot open mapping {}: {e}", path.display())))?;
        let len = file.metadata()?.len();
        Ok(WikiMapping {
            store: MappingStore::Disk {
                path: path.to_owned(),
                len,
                file: Mutex::new(file),
            },
        })
    }

    pub fn lookup(&self, title: &str) -> Result<Option<String>> {
        let key = title_key(title);
        match &self.store {
            MappingStore::Memory(table) => Ok(table.get(&key).cloned()),
            MappingStore::Disk { len, file, .. } => {
                let mut file = file.lock().unwrap_or_else(|p| p.into_inner());
                disk_lookup(&mut file, *len, &key)
            }
        }
    }
}

// Returns the first line starting at or after `pos`, with its start offset.
fn line_at_or_after(file: &mut File, pos: u64) -> Result<Option<(u64, String)>> {
    let start = if pos == 0 {
        0
    } else {
        file.seek(SeekFrom::Start(pos - 1))?;
        let mut skipped = Vec::new();
        BufReader::new(&mut *file).read_until(b'\n', &mut skipped)?;
        pos - 1 + skipped.len() as u64
    };
    file.seek(SeekFrom::Start(start))?;
    let mut line = Vec::new();
    BufReader::new(&mut *file).read_until(b'\n', &mut line)?;
    if line.is_empty() {
        return Ok(None);
    }
    Ok(Some((start, String::from_utf8_lossy(&line).into_owned())))
}

fn disk_lookup(file: &mut File, len: u64, key: &str) -> Result<Option<String>> {
    let (mut lo, mut hi) = (0u64, len);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let Some((start, line)) = line_at_or_after(file, mid)? else {
            hi = mid;
            continue;
        };
        let row = line.trim_end_matches(['\r', '\n']);
        let title = row.split('\t').next().unwrap_or("");
        match title.as_bytes().cmp(key.as_bytes()) {
            std::cmp::Ordering::Less => lo = start + line.len() as u64,
            std::cmp::Ordering::Greater => hi = mid,
            std::cmp::Ordering::Equal => {
                return Ok(parse_row(row, 0)?.map(|(_, qid)| qid.to_owned()));
            }
        }
    }
    Ok(None)
}

/// Rewrites Wikipedia targets to Q-IDs; unmapped annotations are dropped and counted.
pub fn map_to_wikidata(
    annotations: Vec<Annotation>,
    mapping: &WikiMapping,
) -> Result<(Vec<Annotation>, usize)> {
    let mut kept = Vec::with_capacity(annotations.len());
    let mut dropped = 0;
    for mut a in annotations {
        match mapping.lookup(&a.target_name)? {
            Some(qid) => {
                a.target_id = qid;
                kept.push(a);
            }
            None => {
                log::debug!("no Wikidata item for {:?}", a.target_name);
                dropped += 1;
            }
        }
    }
    Ok((kept, dropped))
}

fn protocol(what: &str) -> Error {
    Error::Protocol(format!("unexpected linker response: {what}"))
}

/// Parses a REL-style body: rows of `[start, length, mention, title, confidence, ...]`.
pub fn parse_rel_response(body: &str) -> Result<Vec<Annotation>> {
    let value: Value = serde_json::from_str(body).map_err(|e| protocol(&e.to_string()))?;
    let rows = value.as_array().ok_or_else(|| protocol("expected a JSON array"))?;
    rows.iter()
        .map(|row| {
            let row = row.as_array().ok_or_else(|| protocol("row is not an array"))?;
            let int = |i: usize| {
                row.get(i)
                    .and_then(Value::as_u64)
                    .map(|n| n as usize)
                    .ok_or_else(|| protocol(&format!("row field {i} is not an offset")))
            };
            let text = |i: usize| {
                row.get(i)
                    .and_then(Value::as_str)
                    .map(str::to_owned)
                    .ok_or_else(|| protocol(&format!("row field {i} is not a string")))
            };
            let start = int(0)?;
            let length = int(1)?;
            let title = text(3)?;
            Ok(Annotation {
                span: Span::new(start, start + length),
                mention: text(2)?,
                target_id: title_key(&title),
                target_name: title,
                confidence: row.get(4).and_then(Value::as_f64),
            })
        })
        .collect()
}

/// Wikipedia-target annotations from a REL-style service.
pub fn annotate_rel(
    client: &HttpClient,
    endpoint: &str,
    question: &str,
    authorization: Option<&str>,
) -> Result<Vec<Annotation>> {
    if question.trim().is_empty() {
        return Err(Error::InvalidInput("cannot link an empty question".to_owned()));
    }
    let mut headers = Vec::new();
    if let Some(token) = authorization {
        headers.push(("Authorization", token));
    }
    let body = client.post_json(endpoint, &serde_json::json!({ "text": question }), &headers)?;
    Ok(tidy(question, parse_rel_response(&body)?))
}

fn loose_number<T: std::str::FromStr>(v: Option<&Value>) -> Option<T> {
    match v? {
        Value::String(s) => s.trim().parse().ok(),
        Value::Number(n) => n.to_string().parse().ok(),
        _ => None,
    }
}

/// Parses a Spotlight-style body; numeric fields may be strings.
pub fn parse_spotlight_response(
    body: &str,
    profile: &KnowledgeGraphProfile,
) -> Result<Vec<Annotation>> {
    let value: Value = serde_json::from_str(body).map_err(|e| protocol(&e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| protocol("expected a JSON object"))?;
    let resources = match obj.get("Resources") {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(items)) => items.as_slice(),
        // single hits are sometimes sent unwrapped
        Some(one @ Value::Object(_)) => std::slice::from_ref(one),
        Some(_) => return Err(protocol("`Resources` is not a list")),
    };
    resources
        .iter()
        .map(|r| {
            let uri = r
                .get("@URI")
                .and_then(Value::as_str)
                .ok_or_else(|| protocol("resource without @URI"))?;
            let mention = r
                .get("@surfaceForm")
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .ok_or_else(|| protocol("resource without @surfaceForm"))?;
            let start: usize =
                loose_number(r.get("@offset")).ok_or_else(|| protocol("bad @offset"))?;
            let id = profile.shorten(uri);
            Ok(Annotation {
                span: Span::new(start, start + mention.chars().count()),
                mention,
                target_name: id.clone(),
                target_id: id,
                confidence: loose_number(r.get("@similarityScore")),
            })
        })
        .collect()
}

/// DBpedia-target annotations from a Spotlight-style service.
pub fn annotate_spotlight(
    client: &HttpClient,
    endpoint: &str,
    question: &str,
    confidence_threshold: f64,
    profile: &KnowledgeGraphProfile,
) -> Result<Vec<Annotation>> {
    if !(0.0..=1.0).contains(&confidence_threshold) {
        return Err(Error::Config(format!(
            "confidence threshold {confidence_threshold} is outside [0, 1]"
        )));
    }
    if question.trim().is_empty() {
        return Err(Error::InvalidInput("cannot link an empty question".to_owned()));
    }
    let threshold = confidence_threshold.to_string();
    let body = client.get(
        endpoint,
        &[("text", question), ("confidence", &threshold)],
        "application/json",
    )?;
    let annotations = parse_spotlight_response(&body, profile)?
        .into_iter()
        .filter(|a| a.confidence.unwrap_or(1.0) >= confidence_threshold)
        .collect();
    Ok(tidy(question, annotations))
}

enum Backend {
    Rel {
        endpoint: String,
        authorization: Option<String>,
        mapping: WikiMapping,
    },
    Spotlight {
        endpoint: String,
        confidence: f64,
        profile: KnowledgeGraphProfile,
    },
}

/// A configured linking service, shareable across threads.
pub struct Linker {
    client: HttpClient,
    backend: Backend,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub records: usize,
    pub failed: usize,
    /// Annotations discarded because their title had no Q-ID.
    pub dropped: usize,
}

impl Linker {
    pub fn rel(
        endpoint: impl Into<String>,
        authorization: Option<String>,
        mapping: WikiMapping,
        settings: HttpSettings,
    ) -> Self {
        Linker {
            client: HttpClient::new(settings),
            backend: Backend::Rel {
                endpoint: endpoint.into(),
                authorization,
                mapping,
            },
        }
    }

    pub fn spotlight(
        endpoint: impl Into<String>,
        confidence: f64,
        profile: KnowledgeGraphProfile,
        settings: HttpSettings,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Config(format!(
                "confidence threshold {confidence} is outside [0, 1]"
            )));
        }
        Ok(Linker {
            client: HttpClient::new(settings),
            backend: Backend::Spotlight {
                endpoint: endpoint.into(),
                confidence,
                profile,
            },
        })
    }

    /// Knowledge-graph annotations for one question and the number dropped in mapping.
    pub fn annotate(&self, question: &str) -> Result<(Vec<Annotation>, usize)> {
        match &self.backend {
            Backend::Rel {
                endpoint,
                authorization,
                mapping,
            } => {
                let found = annotate_rel(&self.client, endpoint, question, authorization.as_deref())?;
                map_to_wikidata(found, mapping)
            }
            Backend::Spotlight {
                endpoint,
                confidence,
                profile,
            } => Ok((
                annotate_spotlight(&self.client, endpoint, question, *confidence, profile)?,
                0,
            )),
        }
    }

    /// Fills `question_entities`, `spans` and `entity_names`; returns the drop count.
    pub fn link_record(&self, record: &mut QuestionRecord) -> Result<usize> {
        let question = record
            .question
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("record has no question".to_owned()))?;
        let (annotations, dropped) = self.annotate(question)?;
        record.question_entities = Some(annotations.iter().map(|a| a.target_id.clone()).collect());
        record.spans = Some(annotations.iter().map(|a| a.span).collect());
        record.entity_names = Some(annotations.into_iter().map(|a| a.target_name).collect());
        Ok(dropped)
    }
}

/// Links every record in place, in parallel; failures are stored in each record's `error` field.
pub fn link_records(linker: &Linker, records: &mut [QuestionRecord]) -> LinkStats {
    let failed = AtomicUsize::new(0);
    let dropped = AtomicUsize::new(0);
    records.par_iter_mut().for_each(|record| match linker.link_record(record) {
        Ok(n) => {
            dropped.fetch_add(n, Ordering::Relaxed);
        }
        Err(e) => {
            failed.fetch_add(1, Ordering::Relaxed);
            record.set_error(e.to_string());
        }
    });
    LinkStats {
        records: records.len(),
        failed: failed.into_inner(),
        dropped: dropped.into_inner(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgsource::GraphKind;
    use std::io::Write;

    fn ann(start: usize, end: usize, conf: Option<f64>) -> Annotation {
        Annotation {
            span: Span::new(start, end),
            mention: String::new(),
            target_id: format!("T{start}"),
            target_name: format!("T{start}"),
            confidence: conf,
        }
    }

    #[test]
    fn overlap_keeps_higher_confidence() {
        let kept = resolve_overlaps(vec![ann(0, 10, Some(0.4)), ann(5, 12, Some(0.9))]);
        assert_eq!(kept, vec![ann(5, 12, Some(0.9))]);
    }

    #[test]
    fn overlap_ties_and_ordering() {
        let kept = resolve_overlaps(vec![
            ann(20, 25, None),
            ann(0, 4, Some(0.5)),
            ann(2, 9, Some(0.5)),
            ann(10, 12, Some(0.1)),
        ]);
        let starts: Vec<usize> = kept.iter().map(|a| a.span.start).collect();
        assert_eq!(starts, [2, 10, 20]);
        for w in kept.windows(2) {
            assert!(!w[0].span.overlaps(&w[1].span));
        }
    }

    #[test]
    fn rel_rows_parse() {
        let body = r#"[[9, 11, "Hakata Ward", "Hakata-ku,_Fukuoka", 0.87, 0.99, "LOC"]]"#;
        let a = parse_rel_response(body).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].span, Span::new(9, 20));
        assert_eq!(a[0].target_name, "Hakata-ku,_Fukuoka");
        assert_eq!(a[0].confidence, Some(0.87));
        assert!(a[0].is_consistent("Where is Hakata Ward?"));
        assert!(parse_rel_response("[]").unwrap().is_empty());
        assert!(matches!(parse_rel_response("{}"), Err(Error::Protocol(_))));
        assert!(matches!(parse_rel_response("<html>"), Err(Error::Protocol(_))));
        assert!(matches!(parse_rel_response("[[1]]"), Err(Error::Protocol(_))));
    }

    #[test]
    fn inconsistent_spans_are_dropped() {
        let mut bad = ann(9, 20, Some(1.0));
        bad.mention = "Hakata  Ward".into();
        assert_eq!(tidy("Where is Hakata Ward?", vec![bad.clone()]).len(), 1);
        bad.mention = "Fukuoka".into();
        assert!(tidy("Where is Hakata Ward?", vec![bad.clone()]).is_empty());
        bad.span = Span::new(15, 40);
        assert!(tidy("Where is Hakata Ward?", vec![bad]).is_empty());
    }

    #[test]
    fn mapping_examples() {
        let mapping = WikiMapping::from_pairs([("Hakata-ku,_Fukuoka", "Q1330839"), ("Japan", "Q17")]).unwrap();
        let mut a = ann(9, 20, Some(0.9));
        a.target_name = "Hakata-ku,_Fukuoka".into();
        let (mapped, dropped) = map_to_wikidata(vec![a], &mapping).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(mapped[0].target_id, "Q1330839");
        assert_eq!(mapped[0].target_name, "Hakata-ku,_Fukuoka");

        let (none, dropped) = map_to_wikidata(Vec::new(), &mapping).unwrap();
        assert!(none.is_empty());
        assert_eq!(dropped, 0);

        let mut three = vec![ann(0, 1, None), ann(2, 3, None), ann(4, 5, None)];
        three[0].target_name = "Japan".into();
        three[1].target_name = "Hakata-ku, Fukuoka".into();
        three[2].target_name = "Atlantis".into();
        let (mapped, dropped) = map_to_wikidata(three, &mapping).unwrap();
        assert_eq!(mapped.len(), 2);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn mapping_rejects_bad_qids() {
        assert!(WikiMapping::from_pairs([("x", "P31")]).is_err());
        assert!(WikiMapping::from_tsv("Japan\tQ17\nFoo\tbar\n".as_bytes()).is_err());
        assert!(WikiMapping::from_tsv("no tab here\n".as_bytes()).is_err());
    }

    #[test]
    fn on_disk_search_matches_memory() {
        let mut rows: Vec<(String, String)> = (0..500)
            .map(|i| (format!("Title_{i:04}_{}", i * 7 % 13), format!("Q{}", i + 1)))
            .collect();
        rows.push(("Hakata-ku,_Fukuoka".into(), "Q1330839".into()));
        rows.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for (t, q) in &rows {
            writeln!(file, "{t}\t{q}").unwrap();
        }
        file.flush().unwrap();
        let disk = WikiMapping::open_on_disk(file.path()).unwrap();
        let memory = WikiMapping::open(file.path()).unwrap();
        for (t, q) in &rows {
            assert_eq!(disk.lookup(t).unwrap().as_deref(), Some(q.as_str()), "{t}");
            assert_eq!(memory.lookup(t).unwrap().as_deref(), Some(q.as_str()));
        }
        for missing in ["", "A", "Title_0000", "Title_0499_8", "zzz", "Hakata-ku"] {
            assert_eq!(disk.lookup(missing).unwrap(), None, "{missing}");
        }
        assert_eq!(disk.lookup("Hakata-ku, Fukuoka").unwrap().as_deref(), Some("Q1330839"));
    }

    #[test]
    fn spotlight_parsing_and_threshold() {
        let profile = KnowledgeGraphProfile::builtin(GraphKind::Dbpedia);
        let body = r#"{"@text": "Where is Hakata Ward?", "Resources": [
            {"@URI": "http://dbpedia.org/resource/Hakata-ku,_Fukuoka", "@surfaceForm": "Hakata Ward",
             "@offset": "9", "@similarityScore": "0.99"},
            {"@URI": "http://dbpedia.org/resource/Ward", "@surfaceForm": "Ward",
             "@offset": "16", "@similarityScore": "0.30"}]}"#;
        let all = parse_spotlight_response(body, &profile).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].target_id, "Hakata-ku,_Fukuoka");
        assert_eq!(all[0].span, Span::new(9, 20));
        assert_eq!(all[1].confidence, Some(0.30));
        assert!(parse_spotlight_response(r#"{"@text": "x"}"#, &profile).unwrap().is_empty());
        assert!(parse_spotlight_response("[]", &profile).is_err());
    }
}
