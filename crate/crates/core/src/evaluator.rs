//! Answer coverage and subgraph size over a labelled test set.

use std::fmt;

use rayon::prelude::*;

use crate::error::Result;
use crate::kgdata::{QuestionRecord, Subgraph};

/// True iff some answer occurs as the subject or object of a triple.
pub fn is_covered<S: AsRef<str>>(subgraph: &Subgraph, answers: &[S]) -> bool {
    subgraph.iter().any(|t| {
        answers
            .iter()
            .any(|a| t.subject == a.as_ref() || t.object == a.as_ref())
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalReport {
    pub covered: usize,
    pub total: usize,
    /// Records whose retrieval failed; counted in `total` with no triples.
    pub failed: usize,
    pub total_triples: usize,
}

/// `num / den` rounded half-up to 4 decimals, computed exactly.
pub fn format_ratio4(num: u128, den: u128) -> String {
    if den == 0 {
        return "0.0000".to_owned();
    }
    let scaled = (num * 20_000 + den) / (2 * den);
    format!("{}.{:04}", scaled / 10_000, scaled % 10_000)
}

impl EvalReport {
    pub fn record(&mut self, subgraph: &Subgraph, answers: &[String]) {
        self.total += 1;
        self.total_triples += subgraph.len();
        if is_covered(subgraph, answers) {
            self.covered += 1;
        }
    }

    pub fn record_failure(&mut self) {
        self.total += 1;
        self.failed += 1;
    }

    pub fn merge(mut self, other: EvalReport) -> EvalReport {
        self.covered += other.covered;
        self.total += other.total;
        self.failed += other.failed;
        self.total_triples += other.total_triples;
        self
    }

    pub fn coverage_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.covered as f64 / self.total as f64
        }
    }

    pub fn avg_triples(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.total_triples as f64 / self.total as f64
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Answer coverage rate: {} ({} / {})",
            format_ratio4(self.covered as u128, self.total as u128),
            self.covered,
            self.total
        )?;
        write!(
            f,
            "Average subgraph size: {} triples",
            format_ratio4(self.total_triples as u128, self.total as u128)
        )
    }
}

/// Runs `retrieve` on every record (in parallel) and tallies coverage.
///
/// Records without answers, and records whose retrieval fails, count as
/// failures.
pub fn evaluate<F>(records: &[QuestionRecord], retrieve: F) -> EvalReport
where
    F: Fn(&QuestionRecord) -> Result<Subgraph> + Sync,
{
    records
        .par_iter()
        .map(|record| {
            let mut report = EvalReport::default();
            match (&record.answer_entities, retrieve(record)) {
                (Some(answers), Ok(subgraph)) => report.record(&subgraph, answers),
                (_, Err(e)) => {
                    log::warn!("retrieval failed: {e}");
                    report.record_failure();
                }
                (None, Ok(_)) => {
                    log::warn!("record has no answer_entities");
                    report.record_failure();
                }
            }
            report
        })
        .reduce(EvalReport::default, EvalReport::merge)
}
