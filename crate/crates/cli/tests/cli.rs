use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use was_core::encoder::corpus::{synthetic_corpus, write_feature_csv, write_wasf};
use was_core::encoder::{checkpoint_bytes, EncoderParams};
use was_core::numerics::Rng;
use was_cli::RunConfig;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn was(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_was")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `root`, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, files);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut files = BTreeMap::new();
    walk(root, root, &mut files);
    files
}

fn tiny_train(out: &Path, extra: &[&str]) -> Output {
    let config = fixture("tiny.json");
    let mut args = vec!["demo-train", "--config", path(&config), "--seed", "3", "--out", path(out)];
    args.extend_from_slice(extra);
    was(&args)
}

fn tiny_analyze(checkpoint: &Path, out: &Path, extra: &[&str]) -> Output {
    let config = fixture("tiny.json");
    let mut args = vec![
        "analyze",
        "--config",
        path(&config),
        "--seed",
        "3",
        "--checkpoint",
        path(checkpoint),
        "--out",
        path(out),
    ];
    if !extra.contains(&"--positions") {
        args.extend_from_slice(&["--positions", "5,15"]);
    }
    args.extend_from_slice(extra);
    was(&args)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn sweep_rows(dir: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(dir.join("sweep.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn help_and_usage_errors_have_distinct_codes() {
    assert_eq!(code(&was(&["--help"])), 0);
    assert_eq!(code(&was(&["--version"])), 0);
    assert_eq!(code(&was(&["no-such-command"])), 1);
    assert_eq!(code(&was(&["analyze"])), 1, "missing --checkpoint");
    assert_eq!(code(&was(&["demo-train", "--seed", "minus-one"])), 1);
    assert_eq!(code(&was(&["analyze", "--checkpoint", "x", "--bless"])), 1, "--bless needs --golden");
}

#[test]
fn bad_configuration_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("not-json.json", "{ encoder: "),
        ("unknown.json", r#"{"encoder": {"depth": 3}}"#),
        ("zero-heads.json", r#"{"encoder": {"heads": 0}}"#),
        ("mismatch.json", r#"{"corpus": {"feature_dim": 5}}"#),
    ];
    for (name, text) in cases {
        let cfg = tmp.path().join(name);
        fs::write(&cfg, text).unwrap();
        let out = was(&["demo-train", "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);
        assert_eq!(code(&out), 1, "{name}: {}", stderr(&out));
    }
    let missing = was(&["demo-train", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(code(&missing), 1);
    let bad_gamma = tiny_train(&tmp.path().join("o"), &["--gamma", "1.5"]);
    assert_eq!(code(&bad_gamma), 1);
}

#[test]
fn demo_train_and_analyze_are_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&tiny_train(&a, &[])), 0);
    assert_eq!(code(&tiny_train(&b, &[])), 0);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.keys().collect::<Vec<_>>(), ["checkpoint.wasm1", "loss.csv", "manifest.json"]);
    assert_eq!(sa, sb);

    let (x, y) = (tmp.path().join("x"), tmp.path().join("y"));
    let ckpt = a.join("checkpoint.wasm1");
    assert_eq!(code(&tiny_analyze(&ckpt, &x, &[])), 0);
    assert_eq!(code(&tiny_analyze(&ckpt, &y, &[])), 0);
    assert_eq!(snapshot(&x), snapshot(&y));
}

#[test]
fn zero_updates_keeps_the_initialisation() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    let out = tiny_train(&dir, &["--updates", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cfg = RunConfig::load(Some(&fixture("tiny.json"))).unwrap();
    let init = EncoderParams::init(&cfg.encoder, &mut Rng::new(3)).unwrap();
    assert_eq!(fs::read(dir.join("checkpoint.wasm1")).unwrap(), checkpoint_bytes(&init).unwrap());
    assert_eq!(fs::read_to_string(dir.join("loss.csv")).unwrap(), "update,lr,loss\n");
    let m = manifest(&dir);
    assert_eq!(m["initial_loss"], m["final_loss"]);
}

#[test]
fn empty_layer_list_writes_only_the_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tiny_analyze(&fixture("tiny.wasm1"), tmp.path(), &["--layers", ""]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(snapshot(tmp.path()).keys().collect::<Vec<_>>(), ["manifest.json"]);
    let m = manifest(tmp.path());
    assert_eq!(m["layers"], serde_json::json!([]));
    assert_eq!(m["layer_summaries"].as_array().unwrap().len(), 2);
}

#[test]
fn layer_out_of_range_names_the_valid_range() {
    let tmp = TempDir::new().unwrap();
    for layers in ["3", "0", "1,7"] {
        let out = tiny_analyze(&fixture("tiny.wasm1"), tmp.path(), &["--layers", layers]);
        assert_eq!(code(&out), 1);
        assert!(stderr(&out).contains("1..=2"), "{}", stderr(&out));
    }
}

#[test]
fn unreachable_positions_are_skipped_with_a_warning() {
    let tmp = TempDir::new().unwrap();
    let out = tiny_analyze(&fixture("tiny.wasm1"), tmp.path(), &["--positions", "5,999"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("999"));
    assert_eq!(manifest(tmp.path())["skipped_positions"], serde_json::json!([999]));
    assert!(tmp.path().join("positions/layer1_pos5.csv").exists());
    assert!(!tmp.path().join("positions/layer1_pos999.csv").exists());
}

#[test]
fn missing_or_corrupt_checkpoint_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&tiny_analyze(&tmp.path().join("none.wasm1"), tmp.path(), &[])), 1);
    let junk = tmp.path().join("junk.wasm1");
    fs::write(&junk, b"WASM1 but not really").unwrap();
    assert_eq!(code(&tiny_analyze(&junk, &tmp.path().join("o"), &[])), 1);
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = tiny_analyze(&fixture("tiny.wasm1"), &blocker.join("sub"), &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn feature_files_reproduce_the_synthetic_corpus() {
    let tmp = TempDir::new().unwrap();
    let cfg = RunConfig::load(Some(&fixture("tiny.json"))).unwrap();
    let mut args: Vec<String> = Vec::new();
    for (n, utt) in synthetic_corpus(&cfg.corpus, 3).iter().enumerate() {
        let (name, bytes) = if n % 2 == 0 {
            let mut b = Vec::new();
            write_wasf(&mut b, &utt.features.frames).unwrap();
            (format!("{}.wasf", utt.features.id), b)
        } else {
            let mut b = Vec::new();
            write_feature_csv(&mut b, &utt.features.frames).unwrap();
            (format!("{}.csv", utt.features.id), b)
        };
        let p = tmp.path().join("feats").join(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(&p, bytes).unwrap();
        args.push("--features".into());
        args.push(p.to_string_lossy().into_owned());
    }
    let extra: Vec<&str> = args.iter().map(String::as_str).collect();
    let (a, b) = (tmp.path().join("synthetic"), tmp.path().join("files"));
    assert_eq!(code(&tiny_analyze(&fixture("tiny.wasm1"), &a, &[])), 0);
    let out = tiny_analyze(&fixture("tiny.wasm1"), &b, &extra);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (mut sa, mut sb) = (snapshot(&a), snapshot(&b));
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["layer_summaries"], mb["layer_summaries"]);
    sa.remove("manifest.json");
    sb.remove("manifest.json");
    assert_eq!(sa, sb);
}

#[test]
fn feature_dimension_mismatch_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let feats = tmp.path().join("wide.csv");
    let mut bytes = Vec::new();
    write_feature_csv(&mut bytes, &Rng::new(1).normal_matrix(20, 9, 1.0)).unwrap();
    fs::write(&feats, bytes).unwrap();
    let out = tiny_analyze(&fixture("tiny.wasm1"), &tmp.path().join("o"), &["--features", path(&feats)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn profiles_match_golden_files() {
    let tmp = TempDir::new().unwrap();
    let golden = golden_dir();
    let out = tiny_analyze(&fixture("tiny.wasm1"), tmp.path(), &["--golden", path(&golden)]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("golden: 16 files match"));
}

#[test]
fn golden_mismatch_fails() {
    let tmp = TempDir::new().unwrap();
    let golden = tmp.path().join("golden");
    let blessed = tiny_analyze(&fixture("tiny.wasm1"), &tmp.path().join("a"), &["--golden", path(&golden), "--bless"]);
    assert_eq!(code(&blessed), 0);
    assert_eq!(snapshot(&golden), snapshot(&golden_dir()));

    let target = golden.join("positions/layer2_pos5.csv");
    let text = fs::read_to_string(&target).unwrap().replacen("0.", "1.", 1);
    fs::write(&target, text).unwrap();
    let out = tiny_analyze(&fixture("tiny.wasm1"), &tmp.path().join("b"), &["--golden", path(&golden)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("layer2_pos5.csv differs"));

    fs::remove_file(&target).unwrap();
    let out = tiny_analyze(&fixture("tiny.wasm1"), &tmp.path().join("c"), &["--golden", path(&golden)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_rejects_bad_gamma_lists() {
    let tmp = TempDir::new().unwrap();
    for list in ["", " , ", "0.5,abc", "-0.1", "0.2,1.01"] {
        let out = was(&["sweep-gamma", "--gamma", list, "--out", path(tmp.path())]);
        assert_eq!(code(&out), 1, "{list:?}");
    }
}

#[test]
fn single_gamma_sweep_equals_train_then_analyze() {
    let tmp = TempDir::new().unwrap();
    let config = fixture("tiny.json");
    let sweep_dir = tmp.path().join("sweep");
    let out = was(&["sweep-gamma", "--config", path(&config), "--seed", "3", "--gamma", "0.5", "--out", path(&sweep_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = sweep_rows(&sweep_dir);
    assert_eq!(rows.len(), 1);

    let train_dir = tmp.path().join("train");
    assert_eq!(code(&tiny_train(&train_dir, &["--gamma", "0.5"])), 0);
    let an = tmp.path().join("an");
    assert_eq!(code(&tiny_analyze(&train_dir.join("checkpoint.wasm1"), &an, &[])), 0);
    let fractions: Vec<f64> = manifest(&an)["layer_summaries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["fraction"].as_f64().unwrap())
        .collect();
    assert_eq!(rows[0][0], 0.5);
    assert_eq!(rows[0][2..], fractions[..]);
}

#[test]
fn fixed_checkpoint_sweep_suppresses_less_as_gamma_rises() {
    let tmp = TempDir::new().unwrap();
    let config = fixture("tiny.json");
    let ckpt = fixture("tiny.wasm1");
    let out = was(&[
        "sweep-gamma",
        "--config",
        path(&config),
        "--seed",
        "3",
        "--checkpoint",
        path(&ckpt),
        "--gamma",
        "0,0.25,0.5,0.75,1",
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = sweep_rows(tmp.path());
    assert_eq!(rows.len(), 5);
    for w in rows.windows(2) {
        assert!(w[1][2] <= w[0][2], "layer 1: {:?} then {:?}", w[0], w[1]);
    }
    for r in &rows {
        assert!((0.0..=1.0).contains(&r[1]));
    }
}

#[test]
fn gradcheck_passes_and_catches_a_corrupted_gradient() {
    let ok = was(&["gradcheck", "--seed", "5"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    assert!(stdout(&ok).contains("max relative error"));
    let bad = was(&["gradcheck", "--seed", "5", "--corrupt-gradient"]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("seed 5"));
}

#[test]
fn oracle_check_passes_and_catches_an_injected_fault() {
    let ok = was(&["oracle-check", "--seed", "9", "--rows", "3000"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    assert_eq!(stdout(&ok).lines().filter(|l| l.starts_with("ok")).count(), 6);

    let bad = was(&["oracle-check", "--seed", "9", "--rows", "3000", "--inject-fault"]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("seed 9 case"), "{}", stderr(&bad));

    let empty = was(&["oracle-check", "--rows", "0"]);
    assert_eq!(code(&empty), 0);
    assert!(stderr(&empty).contains("warning"));
}
