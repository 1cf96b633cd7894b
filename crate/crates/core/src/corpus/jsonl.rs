use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, HiddenLabels, Label, Report, Sample, Split};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    article: String,
    reports: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
    split: Split,
}

/// Loads a JSONL corpus. Raw strings are kept as-is; tokenization happens in
/// `features`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus(reader: impl Read) -> Result<Corpus> {
    let reader = BufReader::new(reader);
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        let gold_label = match rec.label {
            None => None,
            Some(0) => Some(Label::Real),
            Some(1) => Some(Label::Fake),
            Some(other) => {
                return Err(Error::InvalidLabel {
                    line: line_no,
                    label: other,
                })
            }
        };
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: rec.id,
            });
        }
        let sample = Sample {
            id: rec.id,
            article: rec.article,
            reports: rec.reports.into_iter().map(Report::new).collect(),
            gold_label,
            split: rec.split,
        };
        sample.check().map_err(|reason| Error::MalformedLine {
            line: line_no,
            reason,
        })?;
        samples.push(sample);
    }
    Corpus::new(samples)
}

pub fn write_corpus(corpus: &Corpus, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in corpus.samples() {
        let rec = Record {
            id: s.id.clone(),
            article: s.article.clone(),
            reports: s.reports.iter().map(|r| r.text.clone()).collect(),
            label: s.gold_label.map(|l| l.index() as i64),
            split: s.split,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<corpus writer>", e))?;
    }
    w.flush().map_err(|e| Error::io("<corpus writer>", e))
}

#[derive(Serialize, Deserialize)]
struct HiddenRecord {
    id: String,
    label: Label,
}

pub fn write_hidden_labels(hidden: &HiddenLabels, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (id, label) in hidden.iter() {
        serde_json::to_writer(
            &mut w,
            &HiddenRecord {
                id: id.to_string(),
                label,
            },
        )?;
        w.write_all(b"\n").map_err(|e| Error::io("<hidden writer>", e))?;
    }
    w.flush().map_err(|e| Error::io("<hidden writer>", e))
}

pub fn load_hidden_labels(path: impl AsRef<Path>) -> Result<HiddenLabels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: HiddenRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        labels.insert(rec.id, rec.label);
    }
    Ok(HiddenLabels::new(labels))
}

/// One line of `weak_labels.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabelRecord {
    pub id: String,
    pub y_u: f64,
}

pub fn write_weak_labels(records: &[WeakLabelRecord], writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<weak label writer>", e))?;
    }
    w.flush().map_err(|e| Error::io("<weak label writer>", e))
}

pub fn load_weak_labels(path: impl AsRef<Path>) -> Result<Vec<WeakLabelRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WeakLabelRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if !(0.0..=1.0).contains(&rec.y_u) {
            return Err(Error::LabelRange(rec.y_u));
        }
        out.push(rec);
    }
    Ok(out)
}
