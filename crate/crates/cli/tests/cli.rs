use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const RECORD: usize = 1 + 3072;
const PER_FILE: usize = 10_000;

/// A CIFAR-10 binary release with the real layout and sizes but synthetic
/// content: each class is a distinct flat colour plus noise.
fn write_fake_cifar10(root: &Path) {
    let dir = root.join("cifar").join("cifar-10-batches-bin");
    if dir.join("test_batch.bin").exists() {
        return;
    }
    fs::create_dir_all(&dir).unwrap();
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let names = ["data_batch_1", "data_batch_2", "data_batch_3", "data_batch_4", "data_batch_5", "test_batch"];
    for name in names {
        let mut bytes = vec![0u8; PER_FILE * RECORD];
        for (i, rec) in bytes.chunks_exact_mut(RECORD).enumerate() {
            let label = (i % 10) as u8;
            rec[0] = label;
            for c in 0..3 {
                let l = label as usize;
                let base = [l * 25, 250 - l * 25, (l * 70) % 250][c] as u8;
                for p in 0..1024 {
                    rec[1 + c * 1024 + p] = base.saturating_add((next() % 40) as u8);
                }
            }
        }
        let tmp = dir.join(format!("{name}.partial"));
        fs::write(&tmp, &bytes).unwrap();
        fs::rename(&tmp, dir.join(format!("{name}.bin"))).unwrap();
    }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-e2e")
}

fn data_root() -> PathBuf {
    root().join("data")
}

fn onedatum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onedatum"))
        .args(args)
        .env("ONEDATUM_DATA", data_root())
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn onedatum")
}

fn ok(args: &[&str]) -> Value {
    let out = onedatum(args);
    assert!(
        out.status.success(),
        "onedatum {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

fn code(args: &[&str]) -> i32 {
    onedatum(args).status.code().expect("exit code")
}

fn manifest(run: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    teacher: PathBuf,
    patches_root: PathBuf,
}

/// Shared prerequisites: fake data, a briefly trained teacher and two
/// generated patch datasets. Every test calls this before creating its own
/// directories.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        // Outputs of earlier test processes; the fake dataset is kept.
        if let Ok(entries) = fs::read_dir(root()) {
            for e in entries.flatten() {
                if e.file_name() != "data" {
                    let _ = fs::remove_dir_all(e.path()).or_else(|_| fs::remove_file(e.path()));
                }
            }
        }
        let base = root().join(format!("fixture-{}", std::process::id()));
        write_fake_cifar10(&data_root());
        let teacher_run = base.join("teacher");
        let v = ok(&[
            "train-teacher", "--dataset", "cifar10", "--arch", "resnet8", "--run", s(&teacher_run), "--budget",
            "pilot", "--epochs", "1", "--steps-per-epoch", "4", "--train-limit", "512", "--eval-limit", "200",
        ]);
        assert!(v["best_val_top1"].is_number(), "{v}");
        let m = manifest(&teacher_run);
        assert_eq!(m["command"], "train-teacher");
        assert_eq!(m["status"], "finished");

        let patches_root = base.join("patches");
        let image = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/astronaut.png");
        ok(&["gen-patches", "--image", s(&image), "--out", s(&patches_root.join("city")), "--count", "300"]);
        ok(&["gen-patches", "--noise", "--noise-size", "96", "--out", s(&patches_root.join("noise")), "--count", "300"]);
        Fixture { teacher: teacher_run.join("checkpoints").join("best.safetensors"), patches_root }
    })
}

fn scratch(name: &str) -> PathBuf {
    let d = root().join(format!("{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

const QUICK: [&str; 6] = ["--epochs", "2", "--steps-per-epoch", "2", "--batch-size", "16"];

fn distill_args<'a>(f: &'a Fixture, patches: &'a str, run: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec!["distill", "--teacher", s(&f.teacher), "--patches", patches, "--run", run];
    a.extend_from_slice(extra);
    a
}

#[test]
fn distill_resume_and_analysis_reports() {
    let f = fixture();
    let run = scratch("distill");
    let city = f.patches_root.join("city");
    let mut extra = QUICK.to_vec();
    extra.extend(["--eval-limit", "100", "--per-class-eval"]);
    let args = distill_args(f, s(&city), s(&run), &extra);
    let v = ok(&args);
    assert_eq!(v["epochs"], 2);
    assert_eq!(v["steps"], 4);
    assert_eq!(v["teacher_hash_before"], v["teacher_hash_after"]);
    assert_eq!(v["student"], "resnet8");

    let m = manifest(&run);
    assert_eq!(m["status"], "finished");
    assert_eq!(m["config"]["dataset"], "cifar10");
    // Every effective hyperparameter is recorded.
    let d = &m["config"]["distill"];
    for key in ["temperature", "loss", "signal", "mix", "cutmix_alpha", "cutmix_beta", "topk_renorm"] {
        assert!(!d[key].is_null(), "{key} missing from manifest");
    }
    assert_eq!(d["train"]["optimizer"]["lr"], 1e-3);
    assert!(m["seeds"]["student_init"].is_u64());
    assert!(m["dataset_hashes"]["patches"].is_string());

    // Re-running the same command resumes and leaves the log intact.
    let again = ok(&args);
    assert_eq!(again["steps"], 4);
    let m = manifest(&run);
    assert_eq!(m["resumed_at"].as_array().unwrap().len(), 1);
    let log = fs::read_to_string(run.join("metrics.log")).unwrap();
    let epochs: Vec<u64> =
        log.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["epoch"].as_u64().unwrap()).collect();
    assert_eq!(epochs, vec![1, 2]);

    // A different configuration may not reuse the directory.
    let mut changed = args.clone();
    changed.extend(["--temperature", "2"]);
    assert_eq!(code(&changed), 1);

    let r = s(&run);
    ok(&["analyze", "confidence", "--run", r, "--limit", "64"]);
    ok(&["analyze", "cka", "--run", r, "--limit", "32"]);
    let g = ok(&["analyze", "gist", "--run", r, "--limit", "30", "--size", "64"]);
    assert!(g["modes"].is_u64(), "{g}");
    ok(&["analyze", "embed", "--run", r, "--limit", "40"]);
    ok(&["analyze", "perclass", "--run", r]);
    for file in [
        "confidence.tsv", "confidence.png", "cka.tsv", "cka.png", "gist_hist.tsv", "gist_hist.png", "embed.tsv",
        "embed.png", "perclass.tsv", "perclass_scatter.png",
    ] {
        assert!(run.join("reports").join(file).exists(), "missing report {file}");
    }
}

#[test]
fn flags_override_file_which_overrides_preset() {
    let f = fixture();
    let city = f.patches_root.join("city");
    let cfg = scratch("layers-file").with_extension("toml");
    fs::write(&cfg, "[distill]\ntemperature = 4.0\nmix = \"mixup\"\n").unwrap();
    let base = ["--epochs", "0", "--eval-limit", "0"];

    let preset_run = scratch("layers-preset");
    ok(&distill_args(f, s(&city), s(&preset_run), &base));
    let file_run = scratch("layers-file-run");
    let mut a = base.to_vec();
    a.extend(["--config", s(&cfg)]);
    ok(&distill_args(f, s(&city), s(&file_run), &a));
    let flag_run = scratch("layers-flag-run");
    a.extend(["--temperature", "2", "--set", "distill.cutmix_alpha=0.5"]);
    ok(&distill_args(f, s(&city), s(&flag_run), &a));

    let d = |run: &Path| manifest(run)["config"]["distill"].clone();
    assert_eq!(d(&preset_run)["temperature"], 8.0);
    assert_eq!(d(&preset_run)["mix"], "cutmix");
    assert_eq!(d(&file_run)["temperature"], 4.0);
    assert_eq!(d(&file_run)["mix"], "mixup");
    assert_eq!(d(&flag_run)["temperature"], 2.0);
    assert_eq!(d(&flag_run)["mix"], "mixup");
    assert_eq!(d(&flag_run)["cutmix_alpha"], 0.5);
    // A zero-epoch run still leaves a loadable checkpoint.
    assert!(preset_run.join("checkpoints/best.safetensors").exists());
}

#[test]
fn compress_prune_and_quantize() {
    let f = fixture();
    let city = f.patches_root.join("city");
    for (method, report) in [("prune", "sparsity.tsv"), ("quantize", "quant_scales.tsv")] {
        let run = scratch(&format!("compress-{method}"));
        let v = ok(&[
            "compress", "--model", s(&f.teacher), "--patches", s(&city), "--run", s(&run), "--method", method,
            "--epochs", "1", "--steps-per-epoch", "2", "--batch-size", "16", "--eval-limit", "50",
        ]);
        assert!(v["val_top1_before"].is_number() && v["val_top1_after"].is_number(), "{v}");
        if method == "prune" {
            let frac = v["pruned_fraction"].as_f64().unwrap();
            assert!((frac - 0.5).abs() < 1e-3, "{frac}");
        }
        assert!(run.join("checkpoints/compressed.safetensors").exists());
        assert!(run.join("reports").join(report).exists());
    }
}

#[test]
fn grid_cells_match_direct_runs() {
    let f = fixture();
    let run = scratch("grid");
    let mut args = vec![
        "grid", "--name", "signal", "--teacher", s(&f.teacher), "--patches-root", s(&f.patches_root), "--run",
        s(&run), "--image", "city", "--cells", "full,hard", "--parallel", "2", "--eval-limit", "50",
    ];
    args.extend(QUICK);
    let v = ok(&args);
    assert!(v["full"]["best_val_top1"].is_number() && v["hard"]["best_val_top1"].is_number(), "{v}");
    let table = fs::read_to_string(run.join("reports/grid.tsv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    let direct = scratch("grid-direct");
    let city = f.patches_root.join("city");
    let mut extra = QUICK.to_vec();
    extra.extend(["--eval-limit", "50", "--signal", "full"]);
    ok(&distill_args(f, s(&city), s(&direct), &extra));
    let child = run.join("children/full");
    assert_eq!(manifest(&child)["config"], manifest(&direct)["config"]);
    assert_eq!(
        fs::read(child.join("checkpoints/last.safetensors")).unwrap(),
        fs::read(direct.join("checkpoints/last.safetensors")).unwrap()
    );

    let missing = scratch("grid-missing");
    let out = onedatum(&[
        "grid", "--name", "source-image", "--teacher", s(&f.teacher), "--patches-root", s(&f.patches_root), "--run",
        s(&missing), "--cells", "bridge",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen-patches"));
}

#[test]
fn exit_codes() {
    let f = fixture();
    let dir = scratch("exit");
    fs::create_dir_all(&dir).unwrap();
    let d = s(&dir);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["grid", "--name", "nope", "--teacher", "t", "--patches-root", d, "--run", d]), 1);
    let missing = dir.join("missing.safetensors");
    assert_eq!(code(&["distill", "--teacher", s(&missing), "--patches", d, "--run", d]), 1);

    // A corrupt checkpoint is a runtime failure, not a usage error.
    let bad_run = dir.join("bad-teacher");
    fs::create_dir_all(bad_run.join("checkpoints")).unwrap();
    fs::copy(f.teacher.parent().unwrap().parent().unwrap().join("manifest.json"), bad_run.join("manifest.json")).unwrap();
    let bad = bad_run.join("checkpoints/best.safetensors");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let city = f.patches_root.join("city");
    let run = dir.join("bad-run");
    assert_eq!(code(&["distill", "--teacher", s(&bad), "--patches", s(&city), "--run", s(&run), "--eval-limit", "0"]), 2);
    assert_eq!(manifest(&run)["status"], "failed");

    let run = dir.join("typo");
    let a = ["distill", "--teacher", s(&f.teacher), "--patches", s(&city), "--run", s(&run), "--set", "distill.temprature=2"];
    assert_eq!(code(&a), 1);
    let a = ["distill", "--teacher", s(&f.teacher), "--patches", s(&city), "--run", s(&run), "--signal", "top0"];
    assert_eq!(code(&a), 1);
}
