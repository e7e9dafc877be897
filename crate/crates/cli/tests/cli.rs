use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use facesr_cli::commands::RECORDS_FILE;
use facesr_cli::manifest::MANIFEST_FILE;
use facesr_cli::RunManifest;
use facesr_core::analysis::EvalReport;
use facesr_core::imaging::{read_jsonl, SyntheticFaces};
use facesr_core::recognition::synthetic_watchlist;
use facesr_core::training::{EpochLog, EPOCHS_FILE};
use serde_json::Value;
use tempfile::TempDir;

fn facesr(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_facesr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> PathBuf {
    let (code, stdout, stderr) = facesr(args);
    assert_eq!(code, 0, "{args:?}\n{stderr}");
    PathBuf::from(stdout.trim())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn raw_faces(dir: &Path, n: usize) {
    fs::create_dir_all(dir).unwrap();
    let faces = SyntheticFaces::new(21);
    for i in 0..n {
        faces.render(i, i % 3, 176, 168).save_png(&dir.join(format!("face{i:03}.png"))).unwrap();
    }
}

/// 10 raw faces prepared into 9 train / 1 val pairs.
fn prepared(tmp: &TempDir) -> PathBuf {
    let raw = tmp.path().join("raw");
    raw_faces(&raw, 10);
    let out = tmp.path().join("pairs");
    ok(&["prepare", "--raw-dir", s(&raw), "--out-dir", s(&out), "--count", "10", "--seed", "7"]);
    out
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn epoch_logs(run: &Path) -> Vec<EpochLog> {
    read_jsonl(&run.join(EPOCHS_FILE)).unwrap()
}

fn run_dir(manifest: &Path) -> PathBuf {
    manifest.parent().unwrap().to_path_buf()
}

#[test]
fn prepare_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    raw_faces(&raw, 12);
    fs::write(raw.join("corrupt.jpg"), b"\xff\xd8garbage").unwrap();
    let out = tmp.path().join("pairs");
    let m1 = ok(&["prepare", "--raw-dir", s(&raw), "--out-dir", s(&out), "--count", "12", "--seed", "7"]);
    let first = fs::read(out.join("manifest.jsonl")).unwrap();
    let man1 = RunManifest::load(&m1).unwrap();
    let m2 = ok(&["prepare", "--raw-dir", s(&raw), "--out-dir", s(&out), "--count", "12", "--seed", "7"]);
    assert_eq!(fs::read(out.join("manifest.jsonl")).unwrap(), first);
    assert_eq!(RunManifest::load(&m2).unwrap().without_clock(), man1.without_clock());
    assert_eq!(man1.seed, 7);
    assert_eq!(man1.command, "prepare");

    let one = tmp.path().join("one");
    ok(&["prepare", "--raw-dir", s(&raw), "--out-dir", s(&one), "--count", "1"]);
    let rows: Vec<Value> = read_jsonl(&one.join("manifest.jsonl")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["split"], "train");

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let (code, _, err) = facesr(&["prepare", "--raw-dir", s(&empty), "--out-dir", s(&tmp.path().join("x")), "--count", "1"]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "model = \"FSRCNN\"\nlearning_rate = 0.1\n");
    let (code, _, err) = facesr(&["train", "--config", s(&cfg)]);
    assert_eq!(code, 2);
    assert!(err.contains("learning_rate") && err.contains("base_lr"), "{err}");

    let runs = tmp.path().join("runs");
    let (code, _, err) = facesr(&["train", "--model", "FSRCNN", "--out-dir", s(&runs)]);
    assert_eq!(code, 2);
    assert!(err.contains("dataset"), "{err}");
    assert!(!runs.exists());

    let (code, _, err) = facesr(&["train", "--model", "EDSR", "--dataset", s(tmp.path())]);
    assert_eq!(code, 2);
    assert!(err.contains("SRGAN Coord FaceLoss"), "{err}");

    let (code, _, _) = facesr(&["train", "--model", "FSRCNN", "--dataset", s(&tmp.path().join("missing"))]);
    assert_eq!(code, 2);

    let (code, _, err) = facesr(&["eval-verify", "--dataset", s(tmp.path()), "--task", "watchlist", "--setting", "size80"]);
    assert_eq!(code, 2);
    assert!(err.contains("no-resize") && err.contains("size40-margin13"), "{err}");

    let (code, _, _) = facesr(&["frobnicate"]);
    assert_eq!(code, 2);
}

const TINY_FSRCNN: &str = "model = \"FSRCNN\"\nd = 6\ns = 3\nm = 1\nbatch_size = 4\nepochs = 3\nbase_lr = 0.005\nseed = 3\n";

#[test]
fn train_override_replay_and_eval_sr() {
    let tmp = TempDir::new().unwrap();
    let pairs = prepared(&tmp);
    let runs = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), "fsrcnn.toml", TINY_FSRCNN);

    let m = ok(&["train", "--config", s(&cfg), "--dataset", s(&pairs), "--out-dir", s(&runs), "--epochs", "1"]);
    let run = run_dir(&m);
    assert_eq!(epoch_logs(&run).len(), 1);
    let manifest = RunManifest::load(&m).unwrap();
    assert_eq!(manifest.config["epochs"].as_integer(), Some(1));
    assert_eq!(manifest.config["d"].as_integer(), Some(6));
    assert_eq!(manifest.exit_code, 0);
    assert!(manifest.artifacts.iter().any(|a| a.extension().is_some_and(|e| e == "ckpt")));
    assert_eq!(fs::read_dir(&run).unwrap().filter(|e| e.as_ref().unwrap().file_name() == MANIFEST_FILE).count(), 1);

    let m2 = ok(&["replay", s(&m)]);
    let run2 = run_dir(&m2);
    assert_ne!(run, run2);
    let strip = |logs: Vec<EpochLog>| logs.into_iter().map(|l| (l.epoch, l.lr, l.losses)).collect::<Vec<_>>();
    assert_eq!(strip(epoch_logs(&run)), strip(epoch_logs(&run2)));
    assert_eq!(fs::read(run.join("batches.jsonl")).unwrap(), fs::read(run2.join("batches.jsonl")).unwrap());
    let replayed = RunManifest::load(&m2).unwrap();
    assert_eq!(replayed.config, manifest.config);

    let ckpt = manifest.artifacts.iter().find(|a| a.extension().is_some_and(|e| e == "ckpt")).unwrap();
    let reports = tmp.path().join("reports");
    let bic = ok(&["eval-sr", "--val-dir", s(&pairs), "--out-dir", s(&reports.join("bicubic"))]);
    let records: Vec<EvalReport> = serde_json::from_str(&fs::read_to_string(run_dir(&bic).join(RECORDS_FILE)).unwrap()).unwrap();
    let EvalReport::Quality(q) = &records[0] else { panic!("quality record") };
    assert_eq!(q.rows.len(), 1);
    assert_eq!(q.rows[0].model, "Bicubic");
    let md = fs::read_to_string(run_dir(&bic).join("quality.md")).unwrap();
    assert!(md.contains("| Method | PSNR | SSIM | Avg. inference (s) | FPS | Channel |"), "{md}");

    let named = format!("FSRCNN={}", ckpt.display());
    let both = ok(&["eval-sr", "--val-dir", s(&pairs), "--checkpoint", s(ckpt), "--checkpoint", &named, "--out-dir", s(&reports.join("two"))]);
    let records: Vec<EvalReport> = serde_json::from_str(&fs::read_to_string(run_dir(&both).join(RECORDS_FILE)).unwrap()).unwrap();
    let EvalReport::Quality(q) = &records[0] else { panic!("quality record") };
    assert_eq!(q.rows.len(), 3);
    assert_eq!((q.rows[1].psnr_db, q.rows[1].ssim), (q.rows[2].psnr_db, q.rows[2].ssim));
    assert_eq!(q.rows[1].channel, "RGB");

    let wrong = format!("SRGAN={}", ckpt.display());
    let (code, _, err) = facesr(&["eval-sr", "--val-dir", s(&pairs), "--checkpoint", &wrong, "--out-dir", s(&reports.join("bad"))]);
    assert_eq!(code, 2);
    assert!(err.contains("holds FSRCNN"), "{err}");
}

#[test]
fn srgan_faceloss_runs_the_adversarial_loop_with_face_term() {
    let tmp = TempDir::new().unwrap();
    let pairs = prepared(&tmp);
    let cfg = write_config(
        tmp.path(),
        "gan.toml",
        "model = \"SRGAN FaceLoss\"\nblocks = 1\nfilters = 4\ndisc_filters = 2\nbatch_size = 3\nepochs = 1\npretrain_epochs = 1\ntrain_limit = 6\n",
    );
    let m = ok(&["train", "--config", s(&cfg), "--dataset", s(&pairs), "--out-dir", s(&tmp.path().join("runs"))]);
    let logs = epoch_logs(&run_dir(&m));
    assert_eq!(logs.len(), 2);
    assert_eq!(logs[0].losses["face"], 0.0);
    let adv = &logs[1];
    assert!(adv.losses["face"] > 0.0 && adv.losses["adversarial"] > 0.0 && adv.losses["content"] > 0.0);
    assert!(adv.disc_updates.is_some());
}

#[test]
fn diverging_training_exits_with_four_and_keeps_a_manifest() {
    let tmp = TempDir::new().unwrap();
    let pairs = prepared(&tmp);
    let runs = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), "fsrcnn.toml", TINY_FSRCNN);
    let (code, _, err) = facesr(&["train", "--config", s(&cfg), "--dataset", s(&pairs), "--out-dir", s(&runs), "--base-lr", "1e30"]);
    assert_eq!(code, 4, "{err}");
    let manifest = fs::read_dir(runs.join("fsrcnn")).unwrap().next().unwrap().unwrap().path().join(MANIFEST_FILE);
    let m = RunManifest::load(&manifest).unwrap();
    assert_eq!(m.exit_code, 4);
    assert!(m.status.contains("non-finite"), "{}", m.status);
}

#[test]
fn broken_dataset_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let pairs = prepared(&tmp);
    fs::remove_dir_all(pairs.join("hr")).unwrap();
    let cfg = write_config(tmp.path(), "fsrcnn.toml", TINY_FSRCNN);
    let (code, _, err) = facesr(&["train", "--config", s(&cfg), "--dataset", s(&pairs), "--out-dir", s(&tmp.path().join("runs"))]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn eval_verify_perfect_replay_and_random_embedders() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("watch");
    synthetic_watchlist(&data, 12, 4).unwrap();
    let out = tmp.path().join("replay");
    let m = ok(&["eval-verify", "--dataset", s(&data), "--task", "watchlist", "--embedder", "perfect-replay", "--trials", "200", "--seed", "5", "--out-dir", s(&out)]);
    let records: Vec<EvalReport> = serde_json::from_str(&fs::read_to_string(run_dir(&m).join(RECORDS_FILE)).unwrap()).unwrap();
    let EvalReport::Accuracy(a) = &records[0] else { panic!("accuracy record") };
    assert_eq!(a.settings.len(), 3);
    assert!(a.rows.iter().all(|r| r.cells.iter().all(|c| *c == Some(100.0))));
    assert!(out.join("accuracy_watch.svg").exists());

    let rnd = tmp.path().join("random");
    let m2 = ok(&["eval-verify", "--dataset", s(&data), "--task", "watchlist", "--embedder", "random", "--trials", "400", "--setting", "size40", "--out-dir", s(&rnd)]);
    let records: Vec<EvalReport> = serde_json::from_str(&fs::read_to_string(run_dir(&m2).join(RECORDS_FILE)).unwrap()).unwrap();
    let EvalReport::Accuracy(a) = &records[0] else { panic!("accuracy record") };
    let acc = a.rows[0].cells[0].unwrap();
    assert!(acc < 50.0, "{acc}");

    let again = tmp.path().join("random2");
    ok(&["eval-verify", "--dataset", s(&data), "--task", "watchlist", "--embedder", "random", "--trials", "400", "--setting", "size40", "--out-dir", s(&again)]);
    assert_eq!(fs::read(rnd.join("verify_cells.json")).unwrap(), fs::read(again.join("verify_cells.json")).unwrap());
}

#[test]
fn report_reemits_thesis_tables_byte_stably() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["report", "--thesis", "--out-dir", s(&a)]);
    ok(&["report", "--thesis", "--out-dir", s(&b)]);
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    names.sort();
    assert!(names.len() >= 14, "{names:?}");
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    let watch = names.iter().find(|n| n.starts_with("accuracy_") && n.ends_with(".md") && n.contains("icb")).unwrap();
    assert!(fs::read_to_string(a.join(watch)).unwrap().contains("85.78"));
    let stats: Value = serde_json::from_str(&fs::read_to_string(a.join("thesis_stats.json")).unwrap()).unwrap();
    assert!(stats["wilcoxon_faceloss"]["p_value"].as_f64().unwrap() < 0.05);

    let merged = tmp.path().join("merged");
    ok(&["report", "--input", s(&a.join(RECORDS_FILE)), "--out-dir", s(&merged)]);
    assert_eq!(fs::read(merged.join("quality.md")).unwrap(), fs::read(a.join("quality.md")).unwrap());

    let (code, _, _) = facesr(&["report", "--out-dir", s(&tmp.path().join("none"))]);
    assert_eq!(code, 2);
}
