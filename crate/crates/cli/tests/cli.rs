use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepfa_core::data::{read_dfa, write_dfa, write_labels_sidecar, LabelRow};
use deepfa_core::FeatureMatrix;

const DEEPFA: &str = env!("CARGO_BIN_EXE_deepfa");
const MLP_EXTRACTOR: &str = env!("CARGO_BIN_EXE_deepfa-mlp-extractor");

fn deepfa(args: &[&str]) -> Output {
    Command::new(DEEPFA).args(args).output().expect("spawn deepfa")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small deterministic generator so the tests need no RNG crate.
struct Lcg(u64);

impl Lcg {
    fn unit(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

/// `per_class` samples per class in `d` dimensions; class `k` sits at `6 e_k`.
fn write_blobs(path: &Path, per_class: usize, classes: usize, d: usize) {
    let mut rng = Lcg(3);
    let mut text = String::from("id,label");
    for j in 0..d {
        text.push_str(&format!(",f{j}"));
    }
    text.push('\n');
    let mut id = 0;
    for k in 0..classes {
        for _ in 0..per_class {
            text.push_str(&format!("s{id},{k}"));
            for j in 0..d {
                let c = if j == k { 6.0 } else { 0.0 };
                text.push_str(&format!(",{}", c + 2.0 * rng.unit()));
            }
            text.push('\n');
            id += 1;
        }
    }
    fs::write(path, text).unwrap();
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p
}

const FAST: &str = r#"{"tsne": {"iterations": 300}, "extractor": {"epochs": 30, "hidden_width": 16}}"#;

#[test]
fn split_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    let mut text = String::from("id,label,f0\n");
    for i in 0..5000 {
        text.push_str(&format!("{i},{},{}\n", i % 10, i as f64 * 0.5));
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("s");
    let o = deepfa(&[
        "split", "--input", input.to_str().unwrap(), "--x", "0.01", "--test", "0.30", "--seed", "7", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "S=50 U=3450 T=1500");
    let split = fs::read_to_string(out.join("split.csv")).unwrap();
    assert_eq!(split.lines().count(), 5001);
    assert_eq!(split.lines().filter(|l| l.ends_with(",S")).count(), 50);
}

#[test]
fn missing_input_is_usage_error() {
    let o = deepfa(&["split", "--x", "0.01", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--input"));
}

#[test]
fn zero_x_names_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    write_blobs(&input, 10, 2, 2);
    let o = deepfa(&["split", "--input", input.to_str().unwrap(), "--x", "0", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("x must lie in (0, 1]"), "{}", stderr(&o));
}

#[test]
fn unknown_file_is_data_error() {
    let o = deepfa(&["split", "--input", "/nonexistent/d.csv", "--x", "0.1", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/d.csv"));
}

#[test]
fn absent_adapter_names_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    write_blobs(&input, 20, 2, 3);
    let o = deepfa(&[
        "run", "--input", input.to_str().unwrap(), "--mode", "deepfa", "--x", "0.1", "--partitions", "1",
        "--extractor", "cmd:./no-such-adapter --flag", "--out", dir.path().join("runs").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("./no-such-adapter"), "{}", stderr(&o));
}

#[test]
fn baseline_equals_loop_with_zero_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    write_blobs(&input, 30, 3, 4);
    let cfg = write_config(dir.path(), FAST);
    let runs = dir.path().join("runs");
    for (mode, iters) in [("baseline", "3"), ("deepfa-loop", "0")] {
        let o = deepfa(&[
            "--config", cfg.to_str().unwrap(), "--seed", "5", "run", "--input", input.to_str().unwrap(), "--mode",
            mode, "--iterations", iters, "--x", "0.1", "--partitions", "2", "--out", runs.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for p in ["0", "1"] {
        let a = fs::read(runs.join("baseline/0.1").join(p).join("iter0/metrics.json")).unwrap();
        let b = fs::read(runs.join("deepfa-loop/0.1").join(p).join("iter0/metrics.json")).unwrap();
        assert_eq!(a, b);
    }
}

fn count_named(dir: &Path, name: &str) -> usize {
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            n += count_named(&p, name);
        } else if p.file_name().is_some_and(|f| f == name) {
            n += 1;
        }
    }
    n
}

#[test]
fn full_grid_then_report_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    write_blobs(&input, 50, 3, 4);
    let cfg = write_config(dir.path(), FAST);
    let runs = dir.path().join("runs");
    let o = deepfa(&[
        "--config", cfg.to_str().unwrap(), "--threads", "2", "run", "--input", input.to_str().unwrap(), "--mode",
        "all", "--iterations", "2", "--partitions", "2", "--out", runs.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    // One per (mode, x) plus the grid summary.
    assert_eq!(count_named(&runs, "summary.json"), 16);
    assert_eq!(stdout(&o).lines().count(), 15);

    let o = deepfa(&["report", runs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 16);
    assert!(lines[0].starts_with("dataset,mode,x,accuracy_mean"));
    assert!(lines[1].starts_with("blobs,baseline,0.01,"));
    for x in ["0.01", "0.02", "0.03", "0.04", "0.05"] {
        let best = lines[1..]
            .iter()
            .filter(|l| l.split(',').nth(2) == Some(x) && l.ends_with(",1"))
            .count();
        assert!(best >= 1, "no best flag for x={x}");
    }

    let iter = runs.join("deepfa-loop/0.05/1/iter2");
    let svg = dir.path().join("c.svg");
    let o = deepfa(&[
        "plot", "--embedding", iter.join("embedding.csv").to_str().unwrap(), "--labels",
        iter.join("labels.csv").to_str().unwrap(), "--confidence", iter.join("confidence.csv").to_str().unwrap(),
        "--color", "confidence", "--out", svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(iter.join("embedding.csv")).unwrap().lines().count() - 1;
    let svg = fs::read_to_string(svg).unwrap();
    assert_eq!(svg.matches("<circle").count(), rows);
    assert_eq!(svg, fs::read_to_string(iter.join("plot_confidence.svg")).unwrap());
}

#[test]
fn report_names_missing_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = deepfa(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(dir.path().to_str().unwrap()));
}

#[test]
fn project_writes_embedding_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    write_blobs(&input, 15, 2, 3);
    let out = dir.path().join("emb.csv");
    let trace = dir.path().join("kl.csv");
    let o = deepfa(&[
        "project", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(), "--iterations", "300",
        "--trace", trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let emb = fs::read_to_string(out).unwrap();
    assert_eq!(emb.lines().next(), Some("id,y0,y1"));
    assert_eq!(emb.lines().count(), 31);
    assert!(emb.lines().nth(1).unwrap().starts_with("s0,"));
    let kl = fs::read_to_string(trace).unwrap();
    assert_eq!(kl.lines().next(), Some("iteration,kl"));
    assert!(kl.lines().any(|l| l.starts_with("300,")));
}

fn protocol_inputs(dir: &Path) -> (PathBuf, PathBuf, FeatureMatrix) {
    let mut rng = Lcg(11);
    let rows: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            let c = if i < 5 { -3.0 } else { 3.0 };
            vec![c + rng.unit(), rng.unit(), c + rng.unit()]
        })
        .collect();
    let x = FeatureMatrix::from_rows(&rows);
    let features = dir.join("train.dfa");
    let labels = dir.join("train.labels.csv");
    write_dfa(&features, &x).unwrap();
    let label_rows: Vec<LabelRow> = (0..10)
        .map(|i| LabelRow {
            id: i.to_string(),
            label: usize::from(i >= 5).to_string(),
            supervised: i % 5 == 0,
        })
        .collect();
    write_labels_sidecar(&labels, &label_rows).unwrap();
    (features, labels, x)
}

fn extractor(args: &[&str]) -> Output {
    Command::new(MLP_EXTRACTOR).args(args).output().expect("spawn extractor")
}

#[test]
fn reference_extractor_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (features, labels, _) = protocol_inputs(dir.path());
    let model = dir.path().join("model");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let o = extractor(&[
        "train", "--features", &s(&features), "--labels", &s(&labels), "--model", &s(&model), "--epochs", "50",
        "--lr", "0.01", "--momentum", "0.9", "--seed", "4", "--hidden", "8",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(model.join("model.json").exists());

    let feats = dir.path().join("h.dfa");
    let o = extractor(&["extract", "--model", &s(&model), "--features", &s(&features), "--out", &s(&feats)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(&feats).unwrap();
    assert_eq!(&bytes[..4], b"DFA1");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 10);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
    assert_eq!(read_dfa(&feats).unwrap().rows(), 10);

    let probs = dir.path().join("p.csv");
    let o = extractor(&["predict", "--model", &s(&model), "--features", &s(&features), "--out", &s(&probs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&probs).unwrap();
    let m = deepfa_core::extractor::external::parse_probabilities(&text, 10).unwrap();
    assert_eq!(m.cols(), 2);
    for (i, row) in m.iter_rows().enumerate() {
        let want = usize::from(i >= 5);
        assert!(row[want] > 0.5, "row {i}: {row:?}");
    }
}

#[test]
fn reference_extractor_rejects_corrupt_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dfa");
    fs::write(&bad, b"NOPE0000").unwrap();
    let o = extractor(&[
        "extract", "--model", dir.path().to_str().unwrap(), "--features", bad.to_str().unwrap(), "--out",
        dir.path().join("o.dfa").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn run_through_external_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    write_blobs(&input, 30, 3, 4);
    let cfg = write_config(
        dir.path(),
        r#"{"tsne": {"iterations": 300}, "extractor": {"epochs": 30, "lr_initial": 0.01}}"#,
    );
    let runs = dir.path().join("runs");
    let work = dir.path().join("work");
    let cmd = format!("cmd:{MLP_EXTRACTOR}");
    let o = deepfa(&[
        "--config", cfg.to_str().unwrap(), "run", "--input", input.to_str().unwrap(), "--mode", "deepfa", "--x",
        "0.1", "--partitions", "1", "--extractor", &cmd, "--work-dir", work.to_str().unwrap(), "--out",
        runs.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(work.join("p0/iter0/model/model.json").exists());
    assert!(work.join("p0/iter1/model/model.json").exists());
    let metrics = fs::read_to_string(runs.join("deepfa/0.1/0/iter1/metrics.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert!(v["kappa"].as_f64().unwrap() > 0.8, "{metrics}");
}

#[cfg(unix)]
#[test]
fn failing_adapter_reports_stderr() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("adapter.sh");
    fs::write(&script, "#!/bin/sh\necho \"cannot open weights\" >&2\nexit 4\n").unwrap();
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    let input = dir.path().join("d.csv");
    write_blobs(&input, 20, 2, 3);
    let o = deepfa(&[
        "run", "--input", input.to_str().unwrap(), "--mode", "baseline", "--x", "0.1", "--partitions", "1",
        "--extractor", &format!("cmd:{}", script.display()), "--out", dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("cannot open weights") && err.contains("train"), "{err}");
}

#[cfg(unix)]
#[test]
fn retrain_failure_keeps_earlier_rounds() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("adapter.sh");
    let body = format!(
        "#!/bin/sh\ncase \"$*\" in\n  *iter1*) echo \"out of memory\" >&2; exit 5;;\nesac\nexec {MLP_EXTRACTOR} \"$@\"\n"
    );
    fs::write(&script, body).unwrap();
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    let input = dir.path().join("d.csv");
    write_blobs(&input, 30, 3, 4);
    let cfg = write_config(dir.path(), FAST);
    let runs = dir.path().join("runs");
    let o = deepfa(&[
        "--config", cfg.to_str().unwrap(), "run", "--input", input.to_str().unwrap(), "--mode", "deepfa-loop",
        "--iterations", "2", "--x", "0.1", "--partitions", "1", "--extractor",
        &format!("cmd:{}", script.display()), "--work-dir", dir.path().join("work").to_str().unwrap(), "--out",
        runs.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("out of memory"));
    assert!(runs.join("deepfa-loop/0.1/0/iter0/metrics.json").exists());
    assert!(!runs.join("deepfa-loop/0.1/0/iter1").exists());
    let summary = fs::read_to_string(runs.join("deepfa-loop/0.1/summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let part = &v["partitions"][0];
    assert_eq!(part["iterations"].as_array().unwrap().len(), 1);
    assert!(part["error"].as_str().unwrap().contains("out of memory"));
}
