//! Dataset CSV files.
//!
//! ```text
//! # foldgan dataset normalized=true seed=42
//! id,label,P,D,v_0,...,v_{P·D−1}
//! hh0000,0,24,64,0.12,...
//! ```
//!
//! Values are in series order (day by day, `v[c·P + r]` is row `r` of day
//! column `c`) and printed in the shortest form that parses back to the same
//! float.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::folding::{ClassLabel, Heatmap};
use crate::loadsim::LabelledDataset;
use crate::scalar::Scalar;

const COMMENT_PREFIX: &str = "# foldgan dataset";

fn header_fields(p: usize, d: usize) -> Vec<String> {
    let mut h: Vec<String> = ["id", "label", "P", "D"].iter().map(|s| s.to_string()).collect();
    h.extend((0..p * d).map(|i| format!("v_{i}")));
    h
}

pub fn write_dataset<T: Scalar>(ds: &LabelledDataset<T>, out: impl Write) -> Result<()> {
    let normalized = ds.items().iter().all(|h| h.normalized);
    let mut out = BufWriter::new(out);
    writeln!(out, "{COMMENT_PREFIX} normalized={normalized} seed={}", ds.seed)?;
    let (p, d) = ds.dims().unwrap_or((0, 0));
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(header_fields(p, d)).map_err(csv_error)?;
    for (h, id) in ds.items().iter().zip(ds.ids()) {
        let mut rec = vec![id.clone(), h.label.index().to_string(), p.to_string(), d.to_string()];
        rec.extend(h.to_series_order().iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset<T: Scalar>(ds: &LabelledDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(ds, File::create(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

fn parse_comment(line: &str) -> Result<(bool, u64)> {
    let rest = line
        .trim_end()
        .strip_prefix(COMMENT_PREFIX)
        .ok_or_else(|| Error::Format(format!("first line must start with '{COMMENT_PREFIX}'")))?;
    let mut normalized = None;
    let mut seed = 0;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("normalized", v)) => {
                normalized = Some(v.parse::<bool>().map_err(|_| Error::Format(format!("bad normalized flag '{v}'")))?)
            }
            Some(("seed", v)) => seed = v.parse().map_err(|_| Error::Format(format!("bad seed '{v}'")))?,
            _ => return Err(Error::Format(format!("unknown dataset attribute '{kv}'"))),
        }
    }
    let normalized = normalized.ok_or_else(|| Error::Format("missing normalized= attribute".into()))?;
    Ok((normalized, seed))
}

pub fn read_dataset<T: Scalar>(input: impl Read) -> Result<LabelledDataset<T>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (normalized, seed) = parse_comment(&first)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers().map_err(csv_error)?.clone();
    if header.len() < 4 || header.iter().take(4).ne(["id", "label", "P", "D"]) {
        return Err(Error::Format("header must start with id,label,P,D".into()));
    }
    let mut items = Vec::new();
    let mut ids = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = row + 3;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let int = |i: usize, name: &str| -> Result<usize> {
            field(i)
                .parse()
                .map_err(|_| Error::Format(format!("line {line}: bad {name} '{}'", field(i))))
        };
        let label =
            ClassLabel::from_index(int(1, "label")?).map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        let (p, d) = (int(2, "P")?, int(3, "D")?);
        match dims {
            None => {
                if header.len() != 4 + p * d || header.iter().skip(4).ne(header_fields(p, d).iter().skip(4).map(|s| s.as_str())) {
                    return Err(Error::Format(format!("header does not list v_0..v_{} for {p}×{d}", p * d - 1)));
                }
                dims = Some((p, d));
            }
            Some(prev) if prev != (p, d) => {
                return Err(Error::Format(format!(
                    "line {line}: {p}×{d} differs from earlier rows ({}×{})",
                    prev.0, prev.1
                )))
            }
            _ => {}
        }
        if rec.len() != 4 + p * d {
            return Err(Error::Format(format!(
                "line {line}: {} values for a {p}×{d} heatmap",
                rec.len() - 4
            )));
        }
        let values = (4..rec.len())
            .map(|i| {
                let v: T = field(i)
                    .parse()
                    .map_err(|_| Error::Format(format!("line {line}: bad value '{}'", field(i))))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("line {line}, column {i}")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<T>>>()?;
        items.push(
            Heatmap::from_series_order(p, d, &values, label, normalized)
                .map_err(|e| Error::Format(format!("line {line}: {e}")))?,
        );
        ids.push(field(0).to_string());
    }
    LabelledDataset::new(items, ids, seed)
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<LabelledDataset<T>> {
    read_dataset(File::open(path)?)
}
