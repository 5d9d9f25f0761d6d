//! Record-file helpers shared by every on-disk format (CSV with a header row, or JSON Lines).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }

    /// Guess the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::Usage(format!(
                "unknown format {other:?} (expected csv or jsonl)"
            ))),
        }
    }
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })
}

/// Read every record of a file. Any malformed row aborts with its line number.
pub fn read_records<T: DeserializeOwned>(path: &Path, format: Format) -> Result<Vec<T>> {
    read_records_from(open(path)?, format)
}

pub fn read_records_from<T: DeserializeOwned, R: Read>(
    reader: R,
    format: Format,
) -> Result<Vec<T>> {
    match format {
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(reader);
            let mut out = Vec::new();
            for row in rdr.deserialize() {
                out.push(row?);
            }
            Ok(out)
        }
        Format::Jsonl => {
            let mut out = Vec::new();
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec = serde_json::from_str(&line).map_err(|e| Error::Row {
                    line: idx as u64 + 1,
                    message: e.to_string(),
                })?;
                out.push(rec);
            }
            Ok(out)
        }
    }
}

pub fn write_records<T: Serialize + CsvHeader>(
    path: &Path,
    records: &[T],
    format: Format,
) -> Result<()> {
    let file = File::create(path)?;
    write_records_to(BufWriter::new(file), records, format)
}

/// Write records. CSV output always carries the header, even when `records` is empty.
pub fn write_records_to<T: Serialize + CsvHeader, W: Write>(
    writer: W,
    records: &[T],
    format: Format,
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut wtr = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(writer);
            wtr.write_record(T::HEADER)?;
            for r in records {
                wtr.serialize(r)?;
            }
            wtr.flush()?;
        }
        Format::Jsonl => write_jsonl_to(writer, records)?,
    }
    Ok(())
}

/// Write one JSON object per line, for record types without a flat CSV form.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_jsonl_to(BufWriter::new(File::create(path)?), records)
}

pub fn write_jsonl_to<T: Serialize, W: Write>(mut writer: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

/// Record types with a fixed CSV header.
pub trait CsvHeader {
    const HEADER: &'static [&'static str];
}
