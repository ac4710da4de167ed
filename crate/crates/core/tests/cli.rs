use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_posewatch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_with_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Dataset, split and a trained linear SVM shared by every test.
struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }
}

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let ws = Workspace { _dir: dir, root };
        let check = |o: Output| assert!(o.status.success(), "{}", stderr(&o));
        check(run(&["gen-data", "dataset", "--normal", "120", "--fight", "60", "--seed", "3", "--out", &ws.path("all.csv")]));
        check(run(&["split", "--features", &ws.path("all.csv"), "--out-dir", &ws.path(""), "--seed", "3"]));
        check(run(&[
            "train", "svm", "--features", &ws.path("train.csv"), "--out", &ws.path("svm.model"), "--kernel", "linear",
        ]));
        check(run(&["gen-data", "stream", "--scenario", "walker", "--frames", "20", "--out", &ws.path("walk.jsonl")]));
        ws
    })
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["evaluate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn help_exits_cleanly() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("infer"));
}

#[test]
fn evaluate_prints_report_rows() {
    let ws = workspace();
    let o = run(&["evaluate", "--model", &ws.path("svm.model"), "--features", &ws.path("test.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for row in ["Normal", "Fight", "Accuracy", "Macro average", "Weighted average", "Confusion matrix"] {
        assert!(text.contains(row), "missing {row} in\n{text}");
    }
}

#[test]
fn evaluate_rejects_wrong_classifier_kind() {
    let ws = workspace();
    let o = run(&[
        "evaluate", "--model", &ws.path("svm.model"), "--features", &ws.path("test.csv"), "--classifier", "mlp",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dash_reads_the_stream_from_stdin() {
    let ws = workspace();
    let input = std::fs::read(ws.path("walk.jsonl")).unwrap();
    let o = run_with_stdin(&["infer", "--model", &ws.path("svm.model"), "--input", "-"], &input);
    assert!(o.status.success(), "{}", stderr(&o));
    let frames = stdout(&o).lines().filter(|l| l.contains("\"type\":\"frame\"")).count();
    assert_eq!(frames, 20);
}

#[test]
fn flags_override_config_file_values() {
    let ws = workspace();
    let config = ws.root.join("bad-thresholds.conf");
    // t_alert below t_warn is rejected unless the flag fixes it.
    write(&config, "# thresholds\nt-warn = 0.6\nt_alert = 0.4\n");
    let base = ["infer", "--model", &ws.path("svm.model"), "--input", &ws.path("walk.jsonl")];
    let conf = config.to_string_lossy();

    let mut args = base.to_vec();
    args.extend(["--config", &conf]);
    assert_eq!(run(&args).status.code(), Some(2));

    args.extend(["--t-alert", "0.9"]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let ws = workspace();
    let config = ws.root.join("unknown.conf");
    write(&config, "colour = blue\n");
    let o = run(&[
        "infer", "--model", &ws.path("svm.model"), "--input", &ws.path("walk.jsonl"), "--config", &config.to_string_lossy(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn strict_mode_fails_on_malformed_line() {
    let ws = workspace();
    let mut input = std::fs::read(ws.path("walk.jsonl")).unwrap();
    input.extend_from_slice(b"not json\n");
    let args = ["infer", "--model", &ws.path("svm.model"), "--input", "-"];

    let lenient = run_with_stdin(&args, &input);
    assert!(lenient.status.success(), "{}", stderr(&lenient));
    assert!(stderr(&lenient).contains("line 21"));

    let mut strict = args.to_vec();
    strict.push("--strict");
    let o = run_with_stdin(&strict, &input);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 21"), "{}", stderr(&o));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let ws = workspace();
    let o = run(&["infer", "--model", &ws.path("svm.model"), "--input", &ws.path("absent.jsonl")]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["evaluate", "--model", &ws.path("absent.model"), "--features", &ws.path("test.csv")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradient_check_passes_by_default() {
    let o = run(&["gradient-check", "--hidden", "8,4", "--batch", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
}
