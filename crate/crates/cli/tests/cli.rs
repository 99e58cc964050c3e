use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

/// Small synthetic problem and a short, fixed-rate schedule. Add `--k`.
const SMALL: &[&str] = &[
    "--synthetic",
    "--cells",
    "240",
    "--genes",
    "20",
    "--classes",
    "3",
    "--planted",
    "3",
    "--hidden",
    "16",
    "--min-epochs",
    "4",
    "--anneal-epochs",
    "6",
    "--max-epochs",
    "8",
    "--learning-rate",
    "0.001",
];

fn markermap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markermap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = markermap(args);
    assert!(
        out.status.success(),
        "markermap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn with_out<'a>(cmd: &'a str, extra: &[&'a str], out: &'a str) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(extra);
    v.extend_from_slice(&["--out", out]);
    if !extra.contains(&"--k") && cmd != "benchmark" {
        v.extend_from_slice(&["--k", "3"]);
    }
    v
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn schema() -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(report: &Value) {
    let validator = schema();
    let errors: Vec<String> = validator
        .iter_errors(report)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

/// Drop the trailing label column of a CSV written by `synth`.
fn strip_labels(src: &Path, dst: &Path) {
    let text = fs::read_to_string(src).unwrap();
    let body: Vec<String> = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect();
    fs::write(dst, body.join("\n") + "\n").unwrap();
}

#[test]
fn select_writes_distinct_markers_and_a_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sel");
    run_ok(&with_out("select", SMALL, out.to_str().unwrap()));
    let markers = fs::read_to_string(out.join("markers.txt")).unwrap();
    let lines: Vec<&str> = markers.lines().collect();
    assert_eq!(lines.len(), 3);
    let mut unique = lines.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), 3);
    let report = read_report(&out);
    assert_valid(&report);
    assert_eq!(report["markers"].as_array().unwrap().len(), 3);
    assert!(report["classifiers"]["knn"]["accuracy"].is_number());
    assert!(report["classifiers"]["model"]["accuracy"].is_number());
    for f in ["model.json", "confusion.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn every_command_report_validates() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let path = |name: &str| root.join(name).to_str().unwrap().to_string();

    let synth_out = path("synth");
    run_ok(&[
        "synth",
        "--cells",
        "200",
        "--genes",
        "15",
        "--classes",
        "2",
        "--planted",
        "2",
        "--out",
        &synth_out,
    ]);
    let data = format!("{synth_out}/data.csv");
    let planted = format!("{synth_out}/planted.txt");
    assert_eq!(fs::read_to_string(&planted).unwrap().lines().count(), 2);

    let eval_out = path("eval");
    run_ok(&[
        "evaluate",
        "--data",
        &data,
        "--log-transform",
        "false",
        "--markers",
        &planted,
        "--out",
        &eval_out,
    ]);

    let bench_out = path("bench");
    let mut bench = with_out("benchmark", SMALL, &bench_out);
    bench.extend_from_slice(&[
        "--k",
        "2,3",
        "--n-seeds",
        "2",
        "--methods",
        "markermap-supervised,random",
    ]);
    run_ok(&bench);

    let noise_out = path("noise");
    let mut noise = with_out("noise", SMALL, &noise_out);
    noise.extend_from_slice(&["--noise", "0,0.2", "--seeds", "5"]);
    run_ok(&noise);

    let recon_out = path("recon");
    run_ok(&with_out("reconstruct", SMALL, &recon_out));

    for dir in [&synth_out, &eval_out, &bench_out, &noise_out, &recon_out] {
        let report = read_report(Path::new(dir));
        assert_valid(&report);
        for f in report["outputs"].as_array().unwrap() {
            assert!(Path::new(dir).join(f.as_str().unwrap()).exists());
        }
    }

    let bench = read_report(Path::new(&bench_out));
    assert_eq!(bench["benchmark"]["rows"].as_array().unwrap().len(), 8);
    assert_eq!(bench["benchmark"]["summary"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(format!("{bench_out}/benchmark.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);

    let recon = read_report(Path::new(&recon_out));
    let table = recon["reconstruction"]["table"].as_array().unwrap();
    assert_eq!(table.len(), 4);
    assert_eq!(table[3]["group"], "All");
    let pca = fs::read_to_string(format!("{recon_out}/pca.csv")).unwrap();
    // header + original and reconstructed coordinates for the 48 test cells
    assert_eq!(pca.lines().count(), 1 + 2 * 48);
}

#[test]
fn unlabeled_data_supports_only_unsupervised_modes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let synth_out = root.join("synth");
    run_ok(&[
        "synth",
        "--cells",
        "150",
        "--genes",
        "12",
        "--out",
        synth_out.to_str().unwrap(),
    ]);
    let unlabeled = root.join("unlabeled.csv");
    strip_labels(&synth_out.join("data.csv"), &unlabeled);
    let common = [
        "--data",
        unlabeled.to_str().unwrap(),
        "--log-transform",
        "false",
        "--k",
        "2",
        "--min-epochs",
        "2",
        "--anneal-epochs",
        "3",
        "--max-epochs",
        "4",
        "--learning-rate",
        "0.001",
    ];

    let ok_out = root.join("unsup");
    let mut args = vec![
        "select",
        "--mode",
        "markermap-unsupervised",
        "--out",
        ok_out.to_str().unwrap(),
    ];
    args.extend_from_slice(&common);
    run_ok(&args);
    let report = read_report(&ok_out);
    assert_valid(&report);
    assert!(report.get("classifiers").is_none());

    let bad_out = root.join("sup");
    let mut args = vec![
        "select",
        "--mode",
        "markermap-supervised",
        "--out",
        bad_out.to_str().unwrap(),
    ];
    args.extend_from_slice(&common);
    let out = markermap(&args);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(
        stderr.starts_with("error: missing_labels: "),
        "stderr: {stderr}"
    );
    assert!(!bad_out.join("report.json").exists());
}

#[test]
fn failures_are_single_line_and_leave_no_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();
    let cases: [(&[&str], &str); 5] = [
        (
            &["select", "--out", o],
            "error: invalid_argument: no data source",
        ),
        (
            &["select", "--data", "/nonexistent.csv", "--out", o],
            "error: io: ",
        ),
        (
            &["select", "--synthetic", "--mode", "lasso", "--out", o],
            "error: invalid_argument: unknown method",
        ),
        (&["select", "--synthetic", "--bogus"], "error: usage: "),
        (
            &[
                "reconstruct",
                "--synthetic",
                "--mode",
                "markermap-supervised",
                "--out",
                o,
            ],
            "error: unsupported: ",
        ),
    ];
    for (args, prefix) in cases {
        let res = markermap(args);
        assert!(!res.status.success(), "{args:?} succeeded");
        let stderr = String::from_utf8(res.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{args:?}: {stderr}");
        assert!(stderr.starts_with(prefix), "{args:?}: {stderr}");
        assert!(!out.join("report.json").exists());
    }
}

#[test]
fn reruns_are_identical_except_timing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    for cmd in ["select", "reconstruct"] {
        run_ok(&with_out(cmd, SMALL, o));
        let first = read_report(&out);
        let model = fs::read(out.join("model.json")).unwrap();
        let markers = fs::read(out.join("markers.txt")).unwrap();
        run_ok(&with_out(cmd, SMALL, o));
        assert_eq!(
            without_timing(read_report(&out)),
            without_timing(first),
            "{cmd}"
        );
        assert_eq!(fs::read(out.join("model.json")).unwrap(), model);
        assert_eq!(fs::read(out.join("markers.txt")).unwrap(), markers);
    }
}

#[test]
fn flags_override_config_and_echo_replays() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("run.toml");
    fs::write(
        &config,
        "synthetic = true\nk = 4\nhidden = 16\nmin-epochs = 2\nanneal-epochs = 3\nmax-epochs = 4\n\
         learning-rate = 0.001\n\n[synth]\nn = 160\nd = 12\nclasses = 2\nmarkers = 2\n",
    )
    .unwrap();
    let first = root.join("first");
    run_ok(&[
        "select",
        "--config",
        config.to_str().unwrap(),
        "--k",
        "3",
        "--out",
        first.to_str().unwrap(),
    ]);
    let report = read_report(&first);
    assert_eq!(report["config"]["k"], serde_json::json!([3]));
    assert_eq!(report["config"]["hidden"], 16);
    assert_eq!(report["data"]["genes"], 12);

    let replay = root.join("replay");
    run_ok(&[
        "select",
        "--config",
        first.join("report.json").to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]);
    let again = read_report(&replay);
    assert_eq!(again["markers"], report["markers"]);
    assert_eq!(again["classifiers"], report["classifiers"]);
}

#[test]
fn zero_noise_matches_select() {
    let dir = tempfile::tempdir().unwrap();
    let sel = dir.path().join("sel");
    let noise = dir.path().join("noise");
    let mut s = with_out("select", SMALL, sel.to_str().unwrap());
    s.extend_from_slice(&["--seed", "2"]);
    run_ok(&s);
    let mut n = with_out("noise", SMALL, noise.to_str().unwrap());
    n.extend_from_slice(&["--seeds", "2", "--noise", "0"]);
    run_ok(&n);
    let row = &read_report(&noise)["noise"]["rows"][0];
    assert_eq!(
        row["accuracy"],
        read_report(&sel)["classifiers"]["knn"]["accuracy"]
    );
}
