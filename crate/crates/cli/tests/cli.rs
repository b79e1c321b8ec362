//! End-to-end command behaviour through the binary and the in-process entry point.

use std::path::{Path, PathBuf};
use std::process::Command;

use mustcnn::data::read_dataset;
use mustcnn::model::checkpoint_load;
use mustcnn_cli::run;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mustcnn"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let mut out = Vec::new();
    let mut full = vec!["mustcnn"];
    full.extend_from_slice(args);
    run(full, &mut out).unwrap_or_else(|e| panic!("{args:?}: {e:#}"));
    String::from_utf8(out).unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    /// Small corpus plus a config that trains in well under a second.
    fn corpus(&self, n: usize) -> (PathBuf, PathBuf) {
        let data = self.path("data.txt");
        run_ok(&["synth", &n.to_string(), "--seed", "3", "--out", s(&data)]);
        let cfg = self.write(
            "run.cfg",
            "hidden_units = 12\nembed_dim = 4\nconv_layers = 2\nkernel_size = 5\n\
             epochs = 2\nlearning_rate = 0.001 # small corpus\n",
        );
        (data, cfg)
    }
}

#[test]
fn missing_dataset_names_the_path() {
    let out = bin().args(["train", "/nonexistent/corpus.txt"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("IO:"), "{err}");
    assert!(err.contains("/nonexistent/corpus.txt"), "{err}");
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn bad_arguments_are_usage_errors() {
    let out = bin().args(["train", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("USAGE:"));
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let ws = Workspace::new();
    let cfg = ws.write("bad.cfg", "epochs = 2\nwibble = 3\n");
    let out = bin().args(["check", "--config", s(&cfg)]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("CONFIG:"), "{err}");
    assert!(err.contains("line 2") && err.contains("wibble"), "{err}");
}

#[test]
fn invalid_values_are_reported() {
    let ws = Workspace::new();
    let cfg = ws.write("bad.cfg", "kernel_size = 4\n");
    let out = bin().args(["check", "--config", s(&cfg)]).output().unwrap();
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("CONFIG:") && err.contains("kernel"), "{err}");
}

#[test]
fn train_predict_eval_flow() {
    let ws = Workspace::new();
    let (data, cfg) = ws.corpus(40);
    let ckpt = ws.path("joint.ckpt");
    let text = run_ok(&["train", s(&data), "--config", s(&cfg), "--out", s(&ckpt)]);
    let epochs: Vec<&str> = text.lines().filter(|l| l.starts_with("epoch=")).collect();
    assert_eq!(epochs.len(), 2);
    assert!(text.contains(&format!("checkpoint={}", ckpt.display())));
    let log = std::fs::read_to_string(format!("{}.log", ckpt.display())).unwrap();
    assert!(log.contains("learning_rate = 0.001"), "{log}");
    assert!(!log.contains(s(&ckpt)), "log header must not depend on paths");
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch=")).count(), 2);

    let pred = ws.path("pred.txt");
    run_ok(&["predict", s(&data), "--checkpoint", s(&ckpt), "--out", s(&pred)]);
    let gold = read_dataset(&data).unwrap();
    let predicted = read_dataset(&pred).unwrap();
    assert_eq!(gold.len(), predicted.len());
    for (g, p) in gold.iter().zip(&predicted) {
        assert_eq!(g.id, p.id);
        assert_eq!(g.residues, p.residues);
        for task in ["dssp", "ssp", "sar", "saa"] {
            assert_eq!(p.labels[task].len(), g.seq_len());
        }
    }

    let report = run_ok(&["eval", s(&data), "--checkpoint", s(&ckpt)]);
    for task in ["dssp", "ssp", "sar", "saa"] {
        assert!(report.contains(&format!("task={task} qc=")), "{report}");
    }
}

#[test]
fn finetune_tags_the_model_and_honours_the_rate() {
    let ws = Workspace::new();
    let (data, cfg) = ws.corpus(30);
    let joint = ws.path("joint.ckpt");
    run_ok(&["train", s(&data), "--config", s(&cfg), "--out", s(&joint)]);

    let tuned = ws.path("ssp.ckpt");
    let text = run_ok(&[
        "finetune", s(&data), "--config", s(&cfg), "--checkpoint", s(&joint), "--task", "ssp",
        "--out", s(&tuned),
    ]);
    assert!(text.starts_with("finetune task=ssp learning_rate=0.0001 momentum=0.9 epochs=2"), "{text}");
    assert_eq!(checkpoint_load(&tuned).unwrap().tag.as_deref(), Some("ssp"));

    let fast = ws.write("fast.cfg", &format!("{}finetune_learning_rate = 0.0005\n", std::fs::read_to_string(&cfg).unwrap()));
    let text = run_ok(&[
        "finetune", s(&data), "--config", s(&fast), "--checkpoint", s(&joint), "--task", "ssp",
        "--out", s(&tuned),
    ]);
    assert!(text.contains("learning_rate=0.0005"), "{text}");
    let log = std::fs::read_to_string(format!("{}.log", tuned.display())).unwrap();
    assert!(log.contains("finetune_learning_rate = 0.0005"), "{log}");
}

#[test]
fn zero_epoch_finetune_keeps_the_joint_model() {
    let ws = Workspace::new();
    let (data, cfg) = ws.corpus(20);
    let joint = ws.path("joint.ckpt");
    run_ok(&["train", s(&data), "--config", s(&cfg), "--out", s(&joint)]);
    let zero = ws.write("zero.cfg", &format!("{}finetune_epochs = 0\n", std::fs::read_to_string(&cfg).unwrap()));
    let tuned = ws.path("sar.ckpt");
    run_ok(&[
        "finetune", s(&data), "--config", s(&zero), "--checkpoint", s(&joint), "--task", "sar",
        "--out", s(&tuned),
    ]);
    let a = run_ok(&["predict", s(&data), "--checkpoint", s(&joint)]);
    let b = run_ok(&["predict", s(&data), "--checkpoint", s(&tuned)]);
    assert_eq!(a, b);
    let (ja, jb) = (checkpoint_load(&joint).unwrap(), checkpoint_load(&tuned).unwrap());
    for ((_, p), (_, q)) in ja.params().iter().zip(jb.params()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn finetune_rejects_unknown_tasks() {
    let ws = Workspace::new();
    let (data, cfg) = ws.corpus(10);
    let joint = ws.path("joint.ckpt");
    run_ok(&["train", s(&data), "--config", s(&cfg), "--out", s(&joint)]);
    let out = bin()
        .args([
            "finetune", s(&data), "--config", s(&cfg), "--checkpoint", s(&joint), "--task", "helix",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("CONFIG:") && err.contains("helix"), "{err}");
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let ws = Workspace::new();
    let (data, cfg) = ws.corpus(5);
    let joint = ws.path("joint.ckpt");
    run_ok(&["train", s(&data), "--config", s(&cfg), "--out", s(&joint)]);
    let junk = ws.write("junk.txt", "not a dataset\n");
    let out = bin().args(["predict", s(&junk), "--checkpoint", s(&joint)]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("DATA:") && err.contains("line 1"), "{err}");
}

#[test]
fn check_command_passes() {
    let out = bin().arg("check").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mutation"), "{text}");
}

#[test]
fn bench_report_is_consistent() {
    let ws = Workspace::new();
    let cfg = ws.write("bench.cfg", "hidden_units = 16\nbench_positions = 20000\n");
    let text = run_ok(&["bench", "--config", s(&cfg)]);
    let field = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap_or_else(|| panic!("{key} missing in {text}"))
            .parse()
            .unwrap()
    };
    let (positions, wall, ms) = (field("positions"), field("wall_time"), field("ms_per_million"));
    assert!(positions >= 20_000.0);
    assert!((ms - wall * 1e9 / positions).abs() <= 1e-3 * ms.max(1.0));
    assert!(text.contains("precision=f32"));
}

#[test]
fn overfit_model_reproduces_gold_labels() {
    let ws = Workspace::new();
    let data = ws.path("tiny.txt");
    run_ok(&["synth", "8", "--seed", "9", "--out", s(&data)]);
    let cfg = ws.write(
        "overfit.cfg",
        "hidden_units = 24\nembed_dim = 6\nconv_layers = 2\nkernel_size = 5\ndropout = 0\n\
         input_dropout = 0\nepochs = 120\nlearning_rate = 0.002\nsplit = 1.0, 0.0, 0.0\ntasks = sar\n",
    );
    let ckpt = ws.path("over.ckpt");
    run_ok(&["train", s(&data), "--config", s(&cfg), "--out", s(&ckpt)]);
    let pred = ws.path("pred.txt");
    run_ok(&["predict", s(&data), "--checkpoint", s(&ckpt), "--out", s(&pred)]);
    let gold = read_dataset(&data).unwrap();
    let predicted = read_dataset(&pred).unwrap();
    let (mut same, mut total) = (0, 0);
    for (g, p) in gold.iter().zip(&predicted) {
        let (a, b) = (&g.labels["sar"], &p.labels["sar"]);
        same += a.chars().zip(b.chars()).filter(|(x, y)| x == y).count();
        total += a.len();
    }
    assert!(same as f64 >= 0.99 * total as f64, "{same} of {total}");
}
