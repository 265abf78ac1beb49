//! Client side of the subprocess extractor protocol.
//!
//! ```text
//! <cmd> train   --features <in.dfa> --labels <labels.csv> --model <dir>
//!               --epochs <N> --lr <R> --momentum <M> --seed <S>
//! <cmd> extract --model <dir> --features <in.dfa> --out <out.dfa>
//! <cmd> predict --model <dir> --features <in.dfa> --out <probs.csv>
//! ```
//!
//! Samples are exchanged in row order and identified by their row number.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::ExtractorError;
use crate::data::{read_dfa, write_dfa, write_labels_sidecar, LabelRow};
use crate::matrix::FeatureMatrix;

/// Tolerance on probability row sums returned by `predict`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalModel {
    /// Program followed by fixed leading arguments.
    pub command: Vec<String>,
    pub model_dir: PathBuf,
    /// Scratch directory for exchanged files.
    pub work_dir: PathBuf,
}

/// Splits `"./adapter --flag"` into program and arguments. A leading `cmd:`
/// prefix is accepted and dropped.
pub fn parse_command(template: &str) -> Result<Vec<String>, ExtractorError> {
    let t = template.strip_prefix("cmd:").unwrap_or(template);
    let parts: Vec<String> = t.split_whitespace().map(str::to_string).collect();
    if parts.is_empty() {
        return Err(ExtractorError::Config("external command is empty".into()));
    }
    Ok(parts)
}

fn run(command: &[String], args: &[String]) -> Result<(), ExtractorError> {
    let output = Command::new(&command[0])
        .args(&command[1..])
        .args(args)
        .output()
        .map_err(|source| ExtractorError::Spawn {
            command: command.join(" "),
            source,
        })?;
    if !output.status.success() {
        return Err(ExtractorError::Process {
            command: command.join(" "),
            verb: args.first().cloned().unwrap_or_default(),
            status: output.status.code(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> ExtractorError {
    ExtractorError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub struct TrainArgs<'a> {
    pub raw: &'a FeatureMatrix,
    pub labels: &'a [usize],
    pub supervised: Option<&'a [bool]>,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

pub fn train(
    command: Vec<String>,
    model_dir: PathBuf,
    work_dir: PathBuf,
    a: &TrainArgs<'_>,
) -> Result<ExternalModel, ExtractorError> {
    fs::create_dir_all(&work_dir).map_err(|e| io_err(&work_dir, e))?;
    fs::create_dir_all(&model_dir).map_err(|e| io_err(&model_dir, e))?;
    let features = work_dir.join("train.dfa");
    let labels = work_dir.join("train.labels.csv");
    write_dfa(&features, a.raw)?;
    let rows: Vec<LabelRow> = a
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| LabelRow {
            id: i.to_string(),
            label: l.to_string(),
            supervised: a.supervised.is_none_or(|m| m[i]),
        })
        .collect();
    write_labels_sidecar(&labels, &rows)?;
    let args = vec![
        "train".to_string(),
        "--features".into(),
        s(&features),
        "--labels".into(),
        s(&labels),
        "--model".into(),
        s(&model_dir),
        "--epochs".into(),
        a.epochs.to_string(),
        "--lr".into(),
        a.lr.to_string(),
        "--momentum".into(),
        a.momentum.to_string(),
        "--seed".into(),
        a.seed.to_string(),
    ];
    run(&command, &args)?;
    Ok(ExternalModel {
        command,
        model_dir,
        work_dir,
    })
}

impl ExternalModel {
    pub fn extract(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix, ExtractorError> {
        fs::create_dir_all(&self.work_dir).map_err(|e| io_err(&self.work_dir, e))?;
        let input = self.work_dir.join("extract-in.dfa");
        let out = self.work_dir.join("extract-out.dfa");
        write_dfa(&input, raw)?;
        let _ = fs::remove_file(&out);
        let args = vec![
            "extract".to_string(),
            "--model".into(),
            s(&self.model_dir),
            "--features".into(),
            s(&input),
            "--out".into(),
            s(&out),
        ];
        run(&self.command, &args)?;
        let m = read_dfa(&out).map_err(|e| ExtractorError::Protocol(format!("extract output: {e}")))?;
        if m.rows() != raw.rows() {
            return Err(ExtractorError::Protocol(format!(
                "extract returned {} rows for {} inputs",
                m.rows(),
                raw.rows()
            )));
        }
        if !m.is_finite() {
            return Err(ExtractorError::Protocol("extract returned non-finite features".into()));
        }
        Ok(m)
    }

    pub fn probabilities(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix, ExtractorError> {
        fs::create_dir_all(&self.work_dir).map_err(|e| io_err(&self.work_dir, e))?;
        let input = self.work_dir.join("predict-in.dfa");
        let out = self.work_dir.join("predict-out.csv");
        write_dfa(&input, raw)?;
        let _ = fs::remove_file(&out);
        let args = vec![
            "predict".to_string(),
            "--model".into(),
            s(&self.model_dir),
            "--features".into(),
            s(&input),
            "--out".into(),
            s(&out),
        ];
        run(&self.command, &args)?;
        let text = fs::read_to_string(&out).map_err(|e| io_err(&out, e))?;
        parse_probabilities(&text, raw.rows())
    }
}

/// Parses and validates an `id,p0,...,pK-1` file against `n` expected rows.
pub fn parse_probabilities(text: &str, n: usize) -> Result<FeatureMatrix, ExtractorError> {
    let proto = |m: String| ExtractorError::Protocol(m);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| proto(e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "id" {
        return Err(proto("probability header must be `id,p0,...`".into()));
    }
    let k = header.len() - 1;
    for (c, name) in header.iter().skip(1).enumerate() {
        if name != format!("p{c}") {
            return Err(proto(format!("column {} should be p{c}, found {name:?}", c + 1)));
        }
    }
    let mut data = Vec::with_capacity(n * k);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| proto(e.to_string()))?;
        if rec.len() != k + 1 {
            return Err(proto(format!("row {} has {} columns, expected {}", rows + 1, rec.len(), k + 1)));
        }
        if rec[0] != rows.to_string() {
            return Err(proto(format!("row {} has id {:?}, expected {rows}", rows + 1, &rec[0])));
        }
        let mut sum = 0.0;
        for f in rec.iter().skip(1) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| proto(format!("row {}: {f:?} is not a number", rows + 1)))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(proto(format!("row {}: invalid probability {v}", rows + 1)));
            }
            sum += v;
            data.push(v);
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(proto(format!("row {} sums to {sum}", rows + 1)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(proto(format!("predict returned {rows} rows for {n} inputs")));
    }
    Ok(FeatureMatrix::from_vec(n, k, data).expect("row lengths checked"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_parsing() {
        assert_eq!(
            parse_command("cmd:python adapter.py --freeze").unwrap(),
            vec!["python", "adapter.py", "--freeze"]
        );
        assert!(parse_command("cmd:  ").is_err());
    }

    #[test]
    fn probabilities_validated() {
        let ok = "id,p0,p1\n0,0.25,0.75\n1,1,0\n";
        let m = parse_probabilities(ok, 2).unwrap();
        assert_eq!(m.row(0), &[0.25, 0.75]);
        assert!(parse_probabilities(ok, 3).is_err());
        assert!(parse_probabilities("id,p0,p1\n0,0.5,0.6\n", 1).is_err());
        assert!(parse_probabilities("id,p0,p1\n7,0.5,0.5\n", 1).is_err());
        assert!(parse_probabilities("id,q0\n0,1\n", 1).is_err());
    }

    #[test]
    fn missing_program_names_command() {
        let err = run(&["./definitely-not-here-adapter".to_string()], &["train".into()]).unwrap_err();
        assert!(err.to_string().contains("./definitely-not-here-adapter"), "{err}");
    }
}
