use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DataError, Dataset, SampleRecord, Split, SplitAssignment};
use crate::matrix::FeatureMatrix;

const DFA_MAGIC: &[u8; 4] = b"DFA1";
const DFA_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `id,label,f0,f1,...` text file.
    Csv,
    /// `DFA1` feature file plus a `<stem>.labels.csv` sidecar.
    DfaBinary,
}

impl DatasetFormat {
    /// `.dfa` selects the binary format, anything else is read as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("dfa") => DatasetFormat::DfaBinary,
            _ => DatasetFormat::Csv,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "dfa" | "dfa-binary" => Ok(DatasetFormat::DfaBinary),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// Sidecar labels file for a dfa-binary feature file: `x.dfa` -> `x.labels.csv`.
pub fn sidecar_path(features: &Path) -> PathBuf {
    features.with_extension("labels.csv")
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, DataError> {
    match format {
        DatasetFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
            parse_dataset_csv(&text)
        }
        DatasetFormat::DfaBinary => {
            let features = read_dfa(path)?;
            let labels = read_labels_sidecar(&sidecar_path(path))?;
            assemble_dfa_dataset(features, labels)
        }
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DatasetFormat) -> Result<(), DataError> {
    match format {
        DatasetFormat::Csv => {
            let mut out = String::new();
            out.push_str("id,label");
            for j in 0..ds.d_raw() {
                out.push_str(&format!(",f{j}"));
            }
            out.push('\n');
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            for s in ds.samples() {
                let mut rec = Vec::with_capacity(2 + ds.d_raw());
                rec.push(s.id.clone());
                rec.push(ds.class_names()[s.true_label].clone());
                rec.extend(s.raw_features.iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(csv_write_err)?;
            }
            let body = w.into_inner().map_err(|e| DataError::Invalid(e.to_string()))?;
            out.push_str(&String::from_utf8_lossy(&body));
            fs::write(path, out).map_err(|e| DataError::io(path, e))
        }
        DatasetFormat::DfaBinary => {
            write_dfa(path, &ds.features())?;
            let rows: Vec<LabelRow> = ds
                .samples()
                .iter()
                .map(|s| LabelRow {
                    id: s.id.clone(),
                    label: ds.class_names()[s.true_label].clone(),
                    supervised: false,
                })
                .collect();
            write_labels_sidecar(&sidecar_path(path), &rows)
        }
    }
}

fn csv_write_err(e: csv::Error) -> DataError {
    DataError::Invalid(format!("csv write failed: {e}"))
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

fn parse_dataset_csv(text: &str) -> Result<Dataset, DataError> {
    if text.trim().is_empty() {
        return Err(DataError::Parse {
            line: 1,
            message: "empty file".into(),
        });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            line: csv_line(&e).max(1),
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
        return Err(DataError::Parse {
            line: 1,
            message: "header must start with `id,label`".into(),
        });
    }
    let d_raw = header.len() - 2;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        if rec.len() < 2 {
            return Err(DataError::Parse {
                line,
                message: "missing id or label".into(),
            });
        }
        let found = rec.len() - 2;
        if found != d_raw {
            return Err(DataError::Dimension {
                row: row + 1,
                expected: d_raw,
                found,
            });
        }
        let mut vec = Vec::with_capacity(d_raw);
        for (column, field) in rec.iter().skip(2).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                line,
                message: format!("column f{column}: {field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: row + 1,
                    column,
                });
            }
            vec.push(v);
        }
        ids.push(rec[0].to_string());
        labels.push(rec[1].to_string());
        features.push(vec);
    }
    if ids.is_empty() {
        return Err(DataError::Parse {
            line: 2,
            message: "no samples after header".into(),
        });
    }
    build_dataset(ids, labels, features)
}

/// Class names in sorted order; numeric when every label parses as an integer.
pub(crate) fn class_names_of(labels: &[String]) -> Vec<String> {
    let mut names: Vec<String> = labels.to_vec();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<i64>> = names.iter().map(|n| n.parse().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(i64, String)> = nums.into_iter().zip(names).collect();
        pairs.sort();
        pairs.into_iter().map(|(_, n)| n).collect()
    } else {
        names
    }
}

fn build_dataset(
    ids: Vec<String>,
    labels: Vec<String>,
    features: Vec<Vec<f64>>,
) -> Result<Dataset, DataError> {
    let class_names = class_names_of(&labels);
    let samples = ids
        .into_iter()
        .zip(labels)
        .zip(features)
        .map(|((id, label), raw_features)| SampleRecord {
            id,
            true_label: class_names.iter().position(|c| *c == label).unwrap(),
            raw_features,
        })
        .collect();
    Dataset::new(samples, class_names)
}

fn assemble_dfa_dataset(features: FeatureMatrix, labels: Vec<LabelRow>) -> Result<Dataset, DataError> {
    if labels.len() != features.rows() {
        return Err(DataError::Invalid(format!(
            "feature file has {} rows but labels sidecar has {}",
            features.rows(),
            labels.len()
        )));
    }
    let (ids, names): (Vec<String>, Vec<String>) =
        labels.into_iter().map(|r| (r.id, r.label)).unzip();
    let rows = features.iter_rows().map(|r| r.to_vec()).collect();
    build_dataset(ids, names, rows)
}

pub fn encode_dfa(m: &FeatureMatrix) -> Result<Vec<u8>, DataError> {
    let n = u32::try_from(m.rows()).map_err(|_| DataError::Invalid("too many rows".into()))?;
    let d = u32::try_from(m.cols()).map_err(|_| DataError::Invalid("too many columns".into()))?;
    let mut buf = Vec::with_capacity(DFA_HEADER_LEN + 4 * m.as_slice().len());
    buf.extend_from_slice(DFA_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    for &v in m.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_dfa(bytes: &[u8]) -> Result<FeatureMatrix, DataError> {
    if bytes.len() < DFA_HEADER_LEN {
        return Err(DataError::Binary {
            offset: bytes.len(),
            message: "truncated header".into(),
        });
    }
    if &bytes[..4] != DFA_MAGIC {
        return Err(DataError::Binary {
            offset: 0,
            message: "bad magic, expected DFA1".into(),
        });
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(DFA_HEADER_LEN))
        .ok_or_else(|| DataError::Binary {
            offset: 4,
            message: "header dimensions overflow".into(),
        })?;
    if bytes.len() != expected {
        return Err(DataError::Binary {
            offset: bytes.len().min(expected),
            message: format!(
                "payload length {} does not match n={n} d={d} (expected {expected} bytes)",
                bytes.len()
            ),
        });
    }
    let data = bytes[DFA_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureMatrix::from_vec(n, d, data).expect("length checked above"))
}

/// Writes a dfa-binary feature file. Values are narrowed to `f32`.
pub fn write_dfa(path: &Path, m: &FeatureMatrix) -> Result<(), DataError> {
    let bytes = encode_dfa(m)?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn read_dfa(path: &Path) -> Result<FeatureMatrix, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_dfa(&bytes)
}

/// Row of the `id,label,supervised` sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub id: String,
    pub label: String,
    pub supervised: bool,
}

pub fn write_labels_sidecar(path: &Path, rows: &[LabelRow]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "label", "supervised"])
        .map_err(csv_write_err)?;
    for r in rows {
        w.write_record([r.id.as_str(), r.label.as_str(), if r.supervised { "1" } else { "0" }])
            .map_err(csv_write_err)?;
    }
    let bytes = w.into_inner().map_err(|e| DataError::Invalid(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn read_labels_sidecar(path: &Path) -> Result<Vec<LabelRow>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut rdr, &["id", "label", "supervised"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let supervised = match &rec[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::Parse {
                    line,
                    message: format!("supervised must be 0 or 1, got {other:?}"),
                })
            }
        };
        rows.push(LabelRow {
            id: rec[0].to_string(),
            label: rec[1].to_string(),
            supervised,
        });
    }
    Ok(rows)
}

fn check_header<R: std::io::Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), DataError> {
    let header = rdr.headers().map_err(|e| DataError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

/// Writes the `id,split` membership file.
pub fn write_split(path: &Path, ds: &Dataset, split: &SplitAssignment) -> Result<(), DataError> {
    let mut out = Vec::new();
    writeln!(out, "id,split").unwrap();
    for (s, m) in ds.samples().iter().zip(split.membership()) {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record([s.id.as_str(), m.as_str()])
            .map_err(csv_write_err)?;
        out.extend(w.into_inner().map_err(|e| DataError::Invalid(e.to_string()))?);
    }
    fs::write(path, out).map_err(|e| DataError::io(path, e))
}

/// Reads an `id,split` file and aligns it with the dataset's sample order.
pub fn read_split(path: &Path, ds: &Dataset) -> Result<SplitAssignment, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut rdr, &["id", "split"])?;
    let index: std::collections::HashMap<&str, usize> = ds
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut membership: Vec<Option<Split>> = vec![None; ds.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let i = *index
            .get(&rec[0])
            .ok_or_else(|| DataError::UnknownId(rec[0].to_string()))?;
        let tag: Split = rec[1].parse().map_err(|message| DataError::Parse { line, message })?;
        if membership[i].replace(tag).is_some() {
            return Err(DataError::DuplicateId(rec[0].to_string()));
        }
    }
    let membership = membership
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| DataError::UnknownId(ds.samples()[i].id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SplitAssignment::from_membership(membership))
}

/// Loads a feature matrix with ids from either a dataset CSV or a dfa file.
/// A dfa file without a sidecar gets row-number ids.
pub fn load_features(path: &Path) -> Result<(Vec<String>, FeatureMatrix), DataError> {
    match DatasetFormat::from_path(path) {
        DatasetFormat::DfaBinary => {
            let m = read_dfa(path)?;
            let side = sidecar_path(path);
            let ids = if side.exists() {
                let rows = read_labels_sidecar(&side)?;
                if rows.len() != m.rows() {
                    return Err(DataError::Invalid(format!(
                        "{} has {} rows, features have {}",
                        side.display(),
                        rows.len(),
                        m.rows()
                    )));
                }
                rows.into_iter().map(|r| r.id).collect()
            } else {
                (0..m.rows()).map(|i| i.to_string()).collect()
            };
            Ok((ids, m))
        }
        DatasetFormat::Csv => {
            let ds = load_dataset(path, DatasetFormat::Csv)?;
            let ids = ds.samples().iter().map(|s| s.id.clone()).collect();
            Ok((ids, ds.features()))
        }
    }
}
