use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Document;

pub const AGNEWS_LABELS: [&str; 4] = ["World", "Sports", "Business", "Sci/Tech"];

pub const DBPEDIA_LABELS: [&str; 14] = [
    "Company",
    "EducationalInstitution",
    "Artist",
    "Athlete",
    "OfficeHolder",
    "MeanOfTransportation",
    "Building",
    "NaturalPlace",
    "Village",
    "Animal",
    "Plant",
    "Album",
    "Film",
    "WrittenWork",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[serde(alias = "ag_news")]
    Agnews,
    Dbpedia,
    #[default]
    GenericCsv,
}

impl DatasetKind {
    /// Fixed label set, or `None` when labels come from the file.
    pub fn labels(self) -> Option<&'static [&'static str]> {
        match self {
            DatasetKind::Agnews => Some(&AGNEWS_LABELS),
            DatasetKind::Dbpedia => Some(&DBPEDIA_LABELS),
            DatasetKind::GenericCsv => None,
        }
    }

    pub fn load(self, path: impl AsRef<Path>) -> Result<Vec<Document>> {
        match self {
            DatasetKind::Agnews => load_agnews(path),
            DatasetKind::Dbpedia => load_dbpedia(path),
            DatasetKind::GenericCsv => load_generic_csv(path),
        }
    }
}

/// `class index (1-4), title, description` rows; header optional.
pub fn load_agnews(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    load_indexed(path.as_ref(), &AGNEWS_LABELS)
}

/// `class index (1-14), title, abstract` rows; header optional.
pub fn load_dbpedia(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    load_indexed(path.as_ref(), &DBPEDIA_LABELS)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MalformedRow {
            line,
            reason: format!("{other:?}"),
        },
    }
}

fn load_indexed(path: &Path, labels: &[&str]) -> Result<Vec<Document>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(open(path)?);
    let mut docs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(row as u64 + 1, |p| p.line());
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        let first = record.get(0).unwrap_or("").trim();
        let index = match first.parse::<usize>() {
            Ok(i) => i,
            // a non-numeric first row is a header
            Err(_) if row == 0 => continue,
            Err(_) => return Err(malformed(format!("class index `{first}` is not a number"))),
        };
        if record.len() < 3 {
            return Err(malformed(format!("expected 3 fields, found {}", record.len())));
        }
        let label = index
            .checked_sub(1)
            .and_then(|i| labels.get(i))
            .ok_or_else(|| malformed(format!("class index {index} outside 1..={}", labels.len())))?;
        let text = format!("{} {}", record[1].trim(), record[2].trim());
        docs.push(Document::labeled(format!("{}", docs.len() + 1), text.trim(), *label));
    }
    Ok(docs)
}

/// CSV with a header naming `text` and `label` columns, plus an optional
/// `id` column.
pub fn load_generic_csv(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let (Some(text_col), Some(label_col)) = (column("text"), column("label")) else {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "header must name `text` and `label` columns".into(),
        });
    };
    let id_col = column("id");
    let mut docs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let (text, label) = (field(text_col), field(label_col));
        if label.is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty label".into(),
            });
        }
        let id = match id_col.map(field) {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => format!("{}", docs.len() + 1),
        };
        docs.push(Document::labeled(id, text, label));
    }
    Ok(docs)
}

/// Writes documents in the layout [`load_generic_csv`] reads.
pub fn write_generic_csv(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let write = |w: &mut csv::Writer<File>, row: [&str; 3]| w.write_record(row).map_err(|e| csv_error(path, e));
    write(&mut w, ["id", "text", "label"])?;
    for d in docs {
        write(&mut w, [&d.id, &d.text, d.gold_label.as_deref().unwrap_or("")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
