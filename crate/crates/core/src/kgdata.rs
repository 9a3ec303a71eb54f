//! Records exchanged between pipeline stages and their line-delimited JSON encoding.
//!
//! Every stage reads one JSON object per line and writes one (or more) per
//! line, in input order. Fields this crate does not know about are carried
//! through untouched so that datasets can keep their own metadata.

use std::io::{self, BufRead, Write};
use std::marker::PhantomData;

use indexmap::IndexSet;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Reserved pseudo-relation that stops the expansion of a path.
pub const END: &str = "END";

/// A `[start, end)` range in Unicode scalar values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The covered text, or `None` if the span does not fit in `text`.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        if self.start >= self.end {
            return None;
        }
        let mut indices = text.char_indices().map(|(i, _)| i).chain([text.len()]);
        let start = indices.nth(self.start)?;
        let end = indices.nth(self.end - self.start - 1)?;
        Some(&text[start..end])
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(span: Span) -> Self {
        [span.start, span.end]
    }
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(char::is_whitespace)
}

/// A (subject, predicate, object) triple of identifiers, encoded as a 3-element array.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[String; 3]", into = "[String; 3]")]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

impl From<[String; 3]> for Triple {
    fn from([subject, predicate, object]: [String; 3]) -> Self {
        Triple {
            subject,
            predicate,
            object,
        }
    }
}

impl From<Triple> for [String; 3] {
    fn from(t: Triple) -> Self {
        [t.subject, t.predicate, t.object]
    }
}

/// One dataset sample as it flows through linking, preprocessing and retrieval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuestionRecord {
    pub id: Option<String>,
    pub question: Option<String>,
    pub question_entities: Option<Vec<String>>,
    pub answer_entities: Option<Vec<String>>,
    pub spans: Option<Vec<Span>>,
    pub entity_names: Option<Vec<String>>,
    /// Fields not modelled above, in their original order.
    pub extra: Map<String, Value>,
}

impl QuestionRecord {
    pub fn new(question: impl Into<String>) -> Self {
        QuestionRecord {
            question: Some(question.into()),
            ..Default::default()
        }
    }

    pub fn question_entities(&self) -> &[String] {
        self.question_entities.as_deref().unwrap_or_default()
    }

    pub fn answer_entities(&self) -> &[String] {
        self.answer_entities.as_deref().unwrap_or_default()
    }

    pub fn error(&self) -> Option<&str> {
        self.extra.get("error").and_then(Value::as_str)
    }

    pub fn set_error(&mut self, message: impl Into<String>) {
        self.extra
            .insert("error".to_owned(), Value::String(message.into()));
    }

    /// Checks the cross-field invariants; `line` is only used for error reporting.
    pub fn validate(&self, line: usize) -> Result<()> {
        let field_err = |field: &str, message: String| Error::Field {
            line,
            field: field.to_owned(),
            message,
        };
        for (field, ids) in [
            ("question_entities", &self.question_entities),
            ("answer_entities", &self.answer_entities),
        ] {
            if let Some(bad) = ids.iter().flatten().find(|id| !is_valid_id(id)) {
                return Err(field_err(field, format!("invalid entity id {bad:?}")));
            }
        }
        if let Some(spans) = &self.spans {
            if spans.len() != self.question_entities().len() {
                return Err(field_err(
                    "spans",
                    format!(
                        "{} spans for {} question entities",
                        spans.len(),
                        self.question_entities().len()
                    ),
                ));
            }
            if let Some(question) = &self.question {
                let chars = question.chars().count();
                if let Some(bad) = spans.iter().find(|s| s.start >= s.end || s.end > chars) {
                    return Err(field_err(
                        "spans",
                        format!("span [{}, {}) out of range", bad.start, bad.end),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// An ordered relation sequence followed from the linked entities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPath {
    pub relations: Vec<String>,
    pub log_score: f64,
    pub terminated: bool,
}

impl ExpansionPath {
    pub fn empty() -> Self {
        ExpansionPath {
            relations: Vec::new(),
            log_score: 0.0,
            terminated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

/// A deduplicated set of triples; iteration follows insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub triples: IndexSet<Triple>,
}

impl Subgraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, triple: Triple) -> bool {
        self.triples.insert(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }
}

impl FromIterator<Triple> for Subgraph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        Subgraph {
            triples: iter.into_iter().collect(),
        }
    }
}

/// One scorer training example: the query, its correct next relation and sampled wrong ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSample {
    pub query: String,
    pub positive: String,
    pub negatives: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RetrievalResult {
    pub record: QuestionRecord,
    /// Only written out when requested.
    pub paths: Option<Vec<ExpansionPath>>,
    pub subgraph: Subgraph,
}

/// Conversion between a typed record and the JSON object on one line.
pub trait Record: Sized {
    fn from_object(obj: Map<String, Value>, line: usize) -> Result<Self>;
    fn to_object(&self) -> Map<String, Value>;
}

fn take<T: DeserializeOwned>(
    obj: &mut Map<String, Value>,
    field: &str,
    line: usize,
) -> Result<Option<T>> {
    match obj.shift_remove(field) {
        None | Some(Value::Null) => Ok(None),
        Some(value) => serde_json::from_value(value)
            .map(Some)
            .map_err(|e| Error::Field {
                line,
                field: field.to_owned(),
                message: e.to_string(),
            }),
    }
}

fn require<T: DeserializeOwned>(
    obj: &mut Map<String, Value>,
    field: &str,
    line: usize,
) -> Result<T> {
    take(obj, field, line)?.ok_or_else(|| Error::Field {
        line,
        field: field.to_owned(),
        message: "missing".to_owned(),
    })
}

fn put<T: Serialize>(obj: &mut Map<String, Value>, field: &str, value: &Option<T>) {
    if let Some(value) = value {
        let value = serde_json::to_value(value).expect("record fields always serialize");
        obj.insert(field.to_owned(), value);
    }
}

impl Record for QuestionRecord {
    fn from_object(mut obj: Map<String, Value>, line: usize) -> Result<Self> {
        let record = QuestionRecord {
            id: take(&mut obj, "id", line)?,
            question: take(&mut obj, "question", line)?,
            question_entities: take(&mut obj, "question_entities", line)?,
            answer_entities: take(&mut obj, "answer_entities", line)?,
            spans: take(&mut obj, "spans", line)?,
            entity_names: take(&mut obj, "entity_names", line)?,
            extra: obj,
        };
        record.validate(line)?;
        Ok(record)
    }

    fn to_object(&self) -> Map<String, Value> {
        let mut obj = Map::new();
        put(&mut obj, "id", &self.id);
        put(&mut obj, "question", &self.question);
        put(&mut obj, "question_entities", &self.question_entities);
        put(&mut obj, "spans", &self.spans);
        put(&mut obj, "entity_names", &self.entity_names);
        put(&mut obj, "answer_entities", &self.answer_entities);
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        obj
    }
}

impl Record for Subgraph {
    fn from_object(mut obj: Map<String, Value>, line: usize) -> Result<Self> {
        let triples: Vec<Triple> = require(&mut obj, "triples", line)?;
        subgraph_from(triples, line)
    }

    fn to_object(&self) -> Map<String, Value> {
        let mut obj = Map::new();
        put(&mut obj, "triples", &Some(&self.triples));
        obj
    }
}

fn subgraph_from(triples: Vec<Triple>, line: usize) -> Result<Subgraph> {
    if let Some(bad) = triples.iter().find(|t| {
        t.subject.is_empty() || t.predicate.is_empty() || t.object.is_empty()
    }) {
        return Err(Error::Field {
            line,
            field: "triples".to_owned(),
            message: format!("empty position in {bad:?}"),
        });
    }
    Ok(triples.into_iter().collect())
}

impl Record for RetrievalResult {
    fn from_object(mut obj: Map<String, Value>, line: usize) -> Result<Self> {
        let triples: Vec<Triple> = require(&mut obj, "triples", line)?;
        let paths = take(&mut obj, "paths", line)?;
        Ok(RetrievalResult {
            record: QuestionRecord::from_object(obj, line)?,
            paths,
            subgraph: subgraph_from(triples, line)?,
        })
    }

    fn to_object(&self) -> Map<String, Value> {
        let mut obj = self.record.to_object();
        put(&mut obj, "triples", &Some(&self.subgraph.triples));
        put(&mut obj, "paths", &self.paths);
        obj
    }
}

impl Record for TrainSample {
    fn from_object(mut obj: Map<String, Value>, line: usize) -> Result<Self> {
        let sample = TrainSample {
            query: require(&mut obj, "query", line)?,
            positive: require(&mut obj, "positive", line)?,
            negatives: take(&mut obj, "negatives", line)?.unwrap_or_default(),
        };
        if sample.negatives.contains(&sample.positive) {
            return Err(Error::Field {
                line,
                field: "negatives".to_owned(),
                message: "contains the positive relation".to_owned(),
            });
        }
        Ok(sample)
    }

    fn to_object(&self) -> Map<String, Value> {
        let mut obj = Map::new();
        obj.insert("query".to_owned(), Value::from(self.query.as_str()));
        obj.insert("positive".to_owned(), Value::from(self.positive.as_str()));
        obj.insert(
            "negatives".to_owned(),
            Value::from(self.negatives.clone()),
        );
        obj
    }
}

/// Lazily decodes one record per non-blank line.
pub struct RecordReader<R, T> {
    lines: io::Lines<R>,
    line: usize,
    _record: PhantomData<fn() -> T>,
}

impl<R: BufRead, T: Record> Iterator for RecordReader<R, T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let line = self.line;
            if text.trim().is_empty() {
                continue;
            }
            let parsed = match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(obj)) => T::from_object(obj, line),
                Ok(_) => Err(Error::MalformedLine {
                    line,
                    message: "expected a JSON object".to_owned(),
                }),
                Err(e) => Err(Error::MalformedLine {
                    line,
                    message: e.to_string(),
                }),
            };
            return Some(parsed);
        }
    }
}

pub fn read_records<T: Record, R: BufRead>(reader: R) -> RecordReader<R, T> {
    RecordReader {
        lines: reader.lines(),
        line: 0,
        _record: PhantomData,
    }
}

/// Writes one compact JSON object per line and counts the bytes written.
pub struct RecordWriter<W> {
    inner: W,
    bytes: usize,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(inner: W) -> Self {
        RecordWriter { inner, bytes: 0 }
    }

    pub fn write<T: Record>(&mut self, record: &T) -> Result<usize> {
        let mut buf = serde_json::to_vec(&Value::Object(record.to_object()))?;
        buf.push(b'\n');
        self.inner.write_all(&buf)?;
        self.bytes += buf.len();
        Ok(buf.len())
    }

    pub fn bytes_written(&self) -> usize {
        self.bytes
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_records<'a, T, W, I>(records: I, writer: W) -> Result<usize>
where
    T: Record + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    let mut writer = RecordWriter::new(writer);
    for record in records {
        writer.write(record)?;
    }
    let bytes = writer.bytes_written();
    writer.into_inner()?;
    Ok(bytes)
}
