use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffclean_core::data::save_image;
use diffclean_core::synthetic::{overlay_pairs, OverlaySpec};

const SMALL_RUN: &str = r#"
schema = 1
seed = 3

[data]
source = "synthetic"
synthetic_pairs = 2
synthetic_age_samples = 40

[predictor]
output_gain = 0.001

[finetune]
epochs = 2
lr = 1e-5
total_steps = 20
invert_steps = 10
sample_steps = 3
image_side = 32

[train_age]
max_epochs = 2
batch_size = 20

[train_age.model]
widths = [4, 4]
"#;

fn diffclean(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffclean"))
        .args(args)
        .env("DIFFCLEAN_CACHE", cache)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\n{}\n{}", o.status.code(), stdout(&o), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = diffclean(dir.path(), &["polish"]);
    assert_eq!(o.status.code(), Some(2));
    let o = diffclean(dir.path(), &["eval-id", "--scores", "x.csv", "--frm", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let help = ok(diffclean(dir.path(), &["--help"]));
    assert!(help.contains("Exit codes") && help.contains("6  rerun"));
}

#[test]
fn config_and_data_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schema = 1\n[finetune]\nepohcs = 3\n");
    let o = diffclean(dir.path(), &["finetune", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epohcs"));

    let o = diffclean(dir.path(), &["train-age", "--config", s(&dir.path().join("absent.toml"))]);
    assert_eq!(o.status.code(), Some(4));

    let cfg = write_config(dir.path(), "schema = 1\n");
    let o = diffclean(dir.path(), &["finetune", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(3), "files source without a manifest");
}

#[test]
fn finetune_rerun_and_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out = ok(diffclean(&cache, &["finetune", "--config", s(&cfg), "--seed", "11"]));
    assert!(out.contains("epoch 1 train total"));
    let ckpt = cache.join("finetune/remover.ckpt");
    let manifest = cache.join("finetune/remover.manifest.json");
    assert!(ckpt.is_file() && manifest.is_file());

    let recorded: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(recorded["workflow"], "finetune");
    assert_eq!(recorded["seed"], 11);
    assert_eq!(recorded["config"]["train_age"]["seed"], 11);

    let rerun = ok(diffclean(&cache, &["rerun", "--manifest", s(&manifest)]));
    assert!(rerun.contains("datasets match"), "{rerun}");

    // a tampered record no longer reproduces
    let mut tampered = recorded.clone();
    let t = tampered["epochs"][0]["train"]["total"].as_f64().unwrap();
    tampered["epochs"][0]["train"]["total"] = serde_json::json!(t * 1.01);
    let bad = dir.path().join("tampered.json");
    fs::write(&bad, serde_json::to_string(&tampered).unwrap()).unwrap();
    assert_eq!(diffclean(&cache, &["rerun", "--manifest", s(&bad)]).status.code(), Some(6));

    let (src, dst) = (dir.path().join("faces"), dir.path().join("clean"));
    let pairs = overlay_pairs(&OverlaySpec {
        pairs: 3,
        base_side: 32,
        side: 32,
        seed: 8,
        ..OverlaySpec::default()
    })
    .unwrap();
    for (i, p) in pairs.iter().enumerate() {
        save_image(p.made_up(), src.join(format!("f{i}.png"))).unwrap();
    }
    let out = ok(diffclean(&cache, &["clean", "--in", s(&src), "--out", s(&dst), "--ckpt", s(&ckpt)]));
    assert!(out.contains("cleaned 3 images, skipped 0"));
    assert_eq!(fs::read_dir(&dst).unwrap().count(), 3);

    // second stage continues from the first checkpoint
    let stage2 = dir.path().join("stage2.ckpt");
    ok(diffclean(&cache, &["finetune", "--config", s(&cfg), "--resume", s(&ckpt), "--ckpt", s(&stage2)]));
    let m2 = dir.path().join("stage2.manifest.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&m2).unwrap()).unwrap();
    assert_eq!(v["config"]["paths"]["resume"], s(&ckpt));
    ok(diffclean(&cache, &["rerun", "--manifest", s(&m2)]));
}

#[test]
fn train_age_writes_artifacts_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out_dir = dir.path().join("age");
    let out = ok(diffclean(dir.path(), &["train-age", "--config", s(&cfg), "--out", s(&out_dir)]));
    assert!(out.contains("val MAE"));
    for f in ["age.ckpt", "metrics.csv", "manifest.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let rerun = ok(diffclean(dir.path(), &["rerun", "--manifest", s(&out_dir.join("manifest.json"))]));
    assert!(rerun.starts_with("epoch 0 recorded"), "{rerun}");
}

#[test]
fn eval_id_prints_tmr_and_writes_roc() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    fs::write(&scores, "score,label\n0.9,genuine\n0.7,genuine\n0.2,genuine\n0.8,impostor\n0.1,impostor\n").unwrap();
    let out = ok(diffclean(dir.path(), &["eval-id", "--scores", s(&scores), "--fmr", "0.0001"]));
    assert!(out.contains("TMR 0.3333"), "{out}");
    let roc = fs::read_to_string(dir.path().join("s_roc.csv")).unwrap();
    assert!(roc.starts_with("threshold,fmr,tmr"));

    fs::write(&scores, "score,label\n0.9,maybe\n").unwrap();
    assert_eq!(diffclean(dir.path(), &["eval-id", "--scores", s(&scores)]).status.code(), Some(4));
}

#[test]
fn eval_age_and_report_merge() {
    let dir = tempfile::tempdir().unwrap();
    let (before, after) = (dir.path().join("before.csv"), dir.path().join("after.csv"));
    let mut b = String::from("id,prediction,truth,group\n");
    let mut a = b.clone();
    for i in 0..12 {
        let truth = 15 + 4 * i;
        let group = if i % 2 == 0 { "f" } else { "m" };
        b.push_str(&format!("p{i},{},{truth},{group}\n", truth + 6));
        a.push_str(&format!("p{i},{},{truth},{group}\n", truth + if i % 3 == 0 { 3 } else { -1 }));
    }
    fs::write(&before, b).unwrap();
    fs::write(&after, a).unwrap();

    let out = ok(diffclean(dir.path(), &["eval-age", "--pred", s(&before)]));
    assert!(out.contains("MAE                  6.000"), "{out}");
    let out = ok(diffclean(dir.path(), &["eval-age", "--pred", s(&after), "--baseline", s(&before), "--label", "cleaned"]));
    assert!(out.contains("under-estimation"));
    assert!(dir.path().join("after_report.csv").is_file());

    let merged = dir.path().join("merged.csv");
    ok(diffclean(
        dir.path(),
        &[
            "report",
            "--input",
            &format!("makeup={}", s(&dir.path().join("before_report.csv"))),
            "--input",
            s(&dir.path().join("after_report.csv")),
            "--out",
            s(&merged),
        ],
    ));
    let text = fs::read_to_string(&merged).unwrap();
    assert!(text.starts_with("metric,makeup,after_report\n"));
    assert!(text.lines().any(|l| l.starts_with("mae,6,")));
    assert!(text.lines().any(|l| l.starts_with("group_mae:f,")));
    assert!(text.lines().any(|l| l.starts_with("under_count,,")));
}

#[test]
fn pairs_check_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = overlay_pairs(&OverlaySpec {
        pairs: 2,
        base_side: 16,
        side: 16,
        seed: 1,
        ..OverlaySpec::default()
    })
    .unwrap();
    let mut rows = String::from("clean_path,madeup_path,age,subject_id,split,style\n");
    for (i, p) in pairs.iter().enumerate() {
        save_image(p.clean(), dir.path().join(format!("c{i}.png"))).unwrap();
        save_image(p.made_up(), dir.path().join(format!("m{i}.png"))).unwrap();
        rows.push_str(&format!("c{i}.png,m{i}.png,30,s{i},{},retro\n", if i == 0 { "train" } else { "test" }));
    }
    let m = dir.path().join("pairs.csv");
    fs::write(&m, &rows).unwrap();
    let out = ok(diffclean(dir.path(), &["pairs-check", "--manifest", s(&m), "--side", "16"]));
    assert!(out.contains("2 pairs") && out.contains("split test  1") && out.contains("style retro 2"), "{out}");
    assert_eq!(diffclean(dir.path(), &["pairs-check", "--manifest", s(&m), "--side", "32"]).status.code(), Some(4));

    fs::write(&m, rows.replace("c1.png", "gone.png")).unwrap();
    let o = diffclean(dir.path(), &["pairs-check", "--manifest", s(&m)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
}
