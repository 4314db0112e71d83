//! CSV and JSON embedding files.
//!
//! CSV: header `identity,instance_id,v0,...,v{D-1}`, one row per embedding.
//! JSON: `{"dimension": D, "embeddings": [{"identity", "instance_id", "vector"}]}`
//! with an optional `change_counter`. The format is chosen by file extension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Embedding, Gallery, GalleryError};
use crate::format;

/// An ordered list of embeddings sharing one dimension, as stored in a file.
///
/// Unlike [`Gallery`] this keeps file order, which the experiment harness
/// uses as the identity insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub dimension: usize,
    pub embeddings: Vec<Embedding>,
}

#[derive(Serialize, Deserialize)]
struct JsonFile {
    dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    change_counter: Option<u64>,
    embeddings: Vec<Embedding>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Format {
    Csv,
    Json,
}

fn format_of(path: &Path) -> Result<Format, GalleryError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        _ => Err(GalleryError::UnsupportedFormat(path.display().to_string())),
    }
}

impl EmbeddingSet {
    /// Identity labels in order of first appearance.
    pub fn identity_order(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.embeddings
            .iter()
            .filter(|e| seen.insert(e.identity.as_str()))
            .map(|e| e.identity.as_str())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GalleryError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["identity".to_string(), "instance_id".to_string()];
        header.extend((0..self.dimension).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for e in &self.embeddings {
            if e.vector.len() != self.dimension {
                return Err(GalleryError::DimensionMismatch {
                    expected: self.dimension,
                    actual: e.vector.len(),
                });
            }
            let mut row = Vec::with_capacity(self.dimension + 2);
            row.push(e.identity.clone());
            row.push(e.instance_id.clone());
            row.extend(e.vector.iter().map(|&x| format::real(x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, GalleryError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| GalleryError::Malformed("missing header".into()))??;
        if header.len() < 4 || &header[0] != "identity" || &header[1] != "instance_id" {
            return Err(GalleryError::Malformed(
                "header must be `identity,instance_id,v0,...` with at least two vector columns"
                    .into(),
            ));
        }
        let dimension = header.len() - 2;
        for (i, name) in header.iter().skip(2).enumerate() {
            if name != format!("v{i}") {
                return Err(GalleryError::Malformed(format!(
                    "header column {} is `{name}`, expected `v{i}`",
                    i + 2
                )));
            }
        }

        let mut embeddings = Vec::new();
        for (line, rec) in records.enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(GalleryError::Malformed(format!(
                    "row {} has {} fields, header has {}",
                    line + 2,
                    rec.len(),
                    header.len()
                )));
            }
            let vector = rec
                .iter()
                .skip(2)
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        GalleryError::Malformed(format!("row {}: `{s}` is not a number", line + 2))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            embeddings.push(Embedding::new(&rec[0], &rec[1], vector));
        }
        Ok(Self {
            dimension,
            embeddings,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GalleryError> {
        Ok(load_any(path.as_ref())?.0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GalleryError> {
        save_any(self, None, path.as_ref())
    }
}

fn load_any(path: &Path) -> Result<(EmbeddingSet, Option<u64>), GalleryError> {
    let fmt = format_of(path)?;
    let reader = BufReader::new(File::open(path)?);
    match fmt {
        Format::Csv => Ok((EmbeddingSet::read_csv(reader)?, None)),
        Format::Json => {
            let file: JsonFile = serde_json::from_reader(reader)?;
            if let Some(bad) = file
                .embeddings
                .iter()
                .find(|e| e.vector.len() != file.dimension)
            {
                return Err(GalleryError::Malformed(format!(
                    "embedding `{}` has {} values, declared dimension is {}",
                    bad.instance_id,
                    bad.vector.len(),
                    file.dimension
                )));
            }
            Ok((
                EmbeddingSet {
                    dimension: file.dimension,
                    embeddings: file.embeddings,
                },
                file.change_counter,
            ))
        }
    }
}

fn save_any(set: &EmbeddingSet, counter: Option<u64>, path: &Path) -> Result<(), GalleryError> {
    let fmt = format_of(path)?;
    let mut out = BufWriter::new(File::create(path)?);
    match fmt {
        Format::Csv => set.write_csv(&mut out)?,
        Format::Json => {
            // serde_json prints the shortest representation that round-trips exactly.
            let file = JsonFile {
                dimension: set.dimension,
                change_counter: counter,
                embeddings: set.embeddings.clone(),
            };
            serde_json::to_writer_pretty(&mut out, &file)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

impl Gallery {
    /// Writes the gallery as CSV or JSON depending on the extension of `path`.
    /// JSON also records the change counter.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GalleryError> {
        save_any(&self.to_set(), Some(self.change_counter()), path.as_ref())
    }

    /// Loads a gallery from CSV or JSON.
    ///
    /// The change counter comes from the JSON file when present; otherwise it
    /// equals the number of embeddings, as if each row had been registered once.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GalleryError> {
        let (set, counter) = load_any(path.as_ref())?;
        let mut g = Gallery::from_set(&set)?;
        if let Some(c) = counter {
            g.set_change_counter(c);
        }
        g.mark_adapted();
        Ok(g)
    }
}
