use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use toonface::data::{write_pgm, GrayImage};
use toonface::metrics::report::parse_kv;

fn toonface(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toonface"))
        .args(args)
        .current_dir(dir)
        .env("TOONFACE_RUN_ROOT", dir.join("runs"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

/// Three classes of eight 20×16 images each, with varying shades and sizes.
fn image_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let images = dir.join("images");
    fs::create_dir_all(&images).unwrap();
    let mut labels = String::from("image_id,class,gender\n");
    for (c, name) in ["ann", "bob", "cat"].iter().enumerate() {
        for k in 0..8 {
            let id = format!("{name}{k}");
            let mut img = GrayImage::filled(20, 16, 40.0 * c as f64).unwrap();
            for (i, v) in img.data_mut().iter_mut().enumerate() {
                *v += ((i * (k + 3) + c * 7) % 37) as f64;
            }
            write_pgm(images.join(format!("{id}.pgm")), &img).unwrap();
            let g = if k % 2 == 0 { "m" } else { "f" };
            labels.push_str(&format!("{id},{name},{g}\n"));
        }
    }
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, labels).unwrap();
    (images, labels_path)
}

#[test]
fn eval_recognition_matches_hand_counted_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // (image, truth, ranked predictions)
    let rows = [
        ("i1", "a", "a,0.7,b,0.2"),
        ("i2", "a", "a,0.6,c,0.3"),
        ("i3", "a", "b,0.5,a,0.4"),
        ("i4", "b", "b,0.8,a,0.1"),
        ("i5", "b", "c,0.5,a,0.3"),
        ("i6", "c", "c,0.9,b,0.05"),
        ("i7", "c", "c,0.4,a,0.35"),
        ("i8", "c", "a,0.6,b,0.3"),
    ];
    let mut labels = String::from("image_id,class,gender\n");
    let mut preds = String::new();
    for (id, t, p) in rows {
        labels.push_str(&format!("{id},{t},f\n"));
        preds.push_str(&format!("{id},{p}\n"));
    }
    fs::write(d.join("labels.csv"), labels).unwrap();
    fs::write(d.join("preds.csv"), preds).unwrap();
    let out =
        toonface(d, &["--labels", "labels.csv", "--predictions", "preds.csv", "--out", "eval", "eval-recognition"]);
    ok(&out);
    let m = parse_kv(&fs::read_to_string(d.join("eval/metrics.txt")).unwrap()).unwrap();
    let get = |k: &str| m[k].parse::<f64>().unwrap();
    // a: 2 hits of 3 predicted, 3 true; b: 1 of 2, 2; c: 2 of 3, 3.
    let p = (2.0 / 3.0 + 1.0 / 2.0 + 2.0 / 3.0) / 3.0;
    assert_eq!(get("samples"), 8.0);
    assert!((get("accuracy") - 5.0 / 8.0).abs() < 1e-12);
    assert!((get("macro_precision") - p).abs() < 1e-12);
    assert!((get("macro_recall") - p).abs() < 1e-12);
    assert!((get("macro_f1") - p).abs() < 1e-12);
    // i5 and i8 never list their true class.
    assert!((get("top5_error") - 0.25).abs() < 1e-12);
    assert!(fs::read_to_string(d.join("eval/report.txt")).unwrap().contains("confusion"));
    assert!(fs::read_to_string(d.join("eval/config.txt")).unwrap().starts_with("# toonface eval-recognition\n"));
}

#[test]
fn zero_max_epochs_is_a_bad_argument() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = image_fixture(dir.path());
    let out = toonface(
        dir.path(),
        &[
            "--seed",
            "1",
            "--images",
            images.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
            "train-hcnn",
            "--max-epochs",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max epochs"));
    assert!(!dir.path().join("runs").exists(), "no run directory for rejected arguments");
}

#[test]
fn argument_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (images, labels) = image_fixture(d);
    let (images, labels) = (images.to_str().unwrap(), labels.to_str().unwrap());
    let code = |args: &[&str]| toonface(d, args).status.code();
    assert_eq!(code(&["--set", "svm.cost=1", "split"]), Some(2));
    assert_eq!(code(&["--images", images, "--labels", labels, "split"]), Some(2), "seed is mandatory");
    assert_eq!(code(&["--seed", "1", "--images", "nowhere", "--labels", labels, "split"]), Some(2));
    assert_eq!(code(&["--seed", "x", "split"]), Some(2));
    assert_eq!(code(&["train-gb", "--stages", "0"]), Some(2));
}

#[test]
fn validation_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("labels.csv"), "image_id,class,gender\nx,a,m\nx,b,f\n").unwrap();
    fs::write(d.join("preds.csv"), "x,a,0.5\n").unwrap();
    let out = toonface(d, &["--labels", "labels.csv", "--predictions", "preds.csv", "eval-recognition"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("labels.csv:3"), "names file and row");
}

#[test]
fn split_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    image_fixture(d);
    let args = ["--images", "images", "--labels", "labels.csv", "split", "--seed", "7"];
    ok(&toonface(d, &args));
    ok(&toonface(d, &args));
    let a = fs::read(d.join("runs/split-001/split.csv")).unwrap();
    let b = fs::read(d.join("runs/split-002/split.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 25);
    assert!(!d.join("runs/split-001/.lock").exists());
}

#[test]
fn locked_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    image_fixture(d);
    fs::create_dir_all(d.join("busy")).unwrap();
    fs::write(d.join("busy/.lock"), "").unwrap();
    let out = toonface(d, &["--seed", "1", "--images", "images", "--labels", "labels.csv", "--out", "busy", "split"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("busy/split.csv").exists());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    image_fixture(d);
    ok(&toonface(d, &["--seed", "3", "--images", "images", "--labels", "labels.csv", "--out", "a", "split"]));
    ok(&toonface(d, &["--config", "a/config.txt", "--out", "b", "split"]));
    assert_eq!(fs::read(d.join("a/split.csv")).unwrap(), fs::read(d.join("b/split.csv")).unwrap());
    assert_eq!(fs::read(d.join("a/config.txt")).unwrap(), fs::read(d.join("b/config.txt")).unwrap());
}

#[test]
fn hcnn_pipeline_trains_predicts_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    image_fixture(d);
    let small = [
        "--set",
        "hcnn.conv_filters=2,2,2,2",
        "--set",
        "hcnn.fc_widths=8,8",
        "--set",
        "hcnn.main_widths=8,8",
        "--seed",
        "5",
        "--images",
        "images",
        "--labels",
        "labels.csv",
    ];
    let with = |extra: &[&str]| -> Vec<String> { small.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| ok(&toonface(d, &args.iter().map(String::as_str).collect::<Vec<_>>()));
    run(with(&["--out", "split", "split"]));
    run(with(&[
        "--split",
        "split/split.csv",
        "--out",
        "train",
        "train-hcnn",
        "--max-epochs",
        "3",
        "--batch-size",
        "8",
    ]));
    let history = fs::read_to_string(d.join("train/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    run(with(&["--model", "train/model.bin", "--out", "pred", "predict", "--top-k", "2"]));
    let preds = fs::read_to_string(d.join("pred/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 24);
    assert!(preds.lines().all(|l| l.split(',').count() == 5));
    run(with(&["--predictions", "pred/predictions.csv", "--out", "eval", "eval-recognition"]));
    let m = parse_kv(&fs::read_to_string(d.join("eval/metrics.txt")).unwrap()).unwrap();
    assert_eq!(m["samples"], "24");

    // Byte-identical retraining from the echoed configuration.
    run(vec!["--config".into(), "train/config.txt".into(), "--out".into(), "again".into(), "train-hcnn".into()]);
    assert_eq!(fs::read(d.join("train/model.bin")).unwrap(), fs::read(d.join("again/model.bin")).unwrap());
    assert_eq!(history, fs::read_to_string(d.join("again/history.csv")).unwrap());
}

fn feature_fixture(dir: &Path) {
    let mut csv = String::new();
    for i in 0..30 {
        let class = ["x", "y", "z"][i % 3];
        let centre = (i % 3) as f64 * 2.0;
        let jitter = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
        csv.push_str(&format!("f{i},{class},{},{}\n", centre + jitter, -centre + 0.3 * jitter));
    }
    fs::write(dir.join("features.csv"), csv).unwrap();
}

#[test]
fn shallow_models_train_search_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    feature_fixture(d);
    let base = ["--features", "features.csv", "--set", "data.feature_dim=2"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        ok(&toonface(d, &args));
    };
    run(&["--out", "svm", "train-svm", "--c", "10", "--gamma", "0.5"]);
    run(&["--out", "gb", "train-gb", "--stages", "20"]);
    run(&["--seed", "2", "--out", "grid", "grid-search", "--family", "svm", "--folds", "3"]);
    let grid = fs::read_to_string(d.join("grid/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 12);
    for model in ["svm", "gb", "grid"] {
        let out = format!("pred-{model}");
        run(&["--model", &format!("{model}/model.bin"), "--out", &out, "predict"]);
        let eval = format!("eval-{model}");
        run(&["--predictions", &format!("{out}/predictions.csv"), "--out", &eval, "eval-recognition"]);
        let m = parse_kv(&fs::read_to_string(d.join(format!("{eval}/metrics.txt"))).unwrap()).unwrap();
        assert_eq!(m["accuracy"].parse::<f64>().unwrap(), 1.0, "{model} separates well-spaced clusters");
    }
    run(&["--set", "svm.probability=false", "--out", "raw", "train-svm"]);
    let out = toonface(
        d,
        &["--model", "raw/model.bin", "--features", "features.csv", "--set", "data.feature_dim=2", "predict"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_detection_writes_rates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("truth.csv"), "a 0 0 10 10\nb 0 0 10 10\nc 0 0 10 10\n").unwrap();
    fs::write(d.join("det.csv"), "a 1 1 10 10\nb 0 0 10 10 50 50 5 5\n").unwrap();
    ok(&toonface(d, &["--truth-boxes", "truth.csv", "--detected-boxes", "det.csv", "--out", "r", "eval-detection"]));
    let m = parse_kv(&fs::read_to_string(d.join("r/rates.txt")).unwrap()).unwrap();
    let third = (1.0f64 / 3.0).to_string();
    assert_eq!(
        (m["tpr"].as_str(), m["fpr"].as_str(), m["fnr"].as_str()),
        (third.as_str(), third.as_str(), third.as_str())
    );
}

#[test]
fn help_lists_every_config_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = toonface(dir.path(), &["--help"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in
        ["train.adam.lr = 0.001", "svm.c = 50.0", "gb.shrinkage = 0.08", "hcnn.aux_discount = 0.6", "TOONFACE_RUN_ROOT"]
    {
        assert!(text.contains(key), "missing `{key}`");
    }
}

fn landmark_fixture(dir: &Path, outlier: bool) {
    use toonface::data::{LandmarkSet, LandmarkTable};
    let mut table = LandmarkTable::new();
    for (c, name) in ["ann", "bob", "cat"].iter().enumerate() {
        for k in 0..8 {
            let mut set = LandmarkSet::missing();
            for p in 0..15 {
                if (p + k) % 5 != 0 {
                    set.points[p] = Some((20.0 + 4.0 * p as f64 + k as f64 * 0.5, 30.0 + c as f64 + 0.25 * k as f64));
                }
            }
            table.insert(format!("{name}{k}"), set).unwrap();
        }
    }
    if outlier {
        let mut set = LandmarkSet::missing();
        set.points[1] = Some((95.0, 95.0));
        table.insert("odd", set).unwrap();
    }
    table.save(dir.join("landmarks.csv")).unwrap();
}

#[test]
fn landmark_commands_and_ablation_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    image_fixture(d);
    landmark_fixture(d, false);
    let base = ["--seed", "4", "--images", "images", "--labels", "labels.csv", "--landmarks", "landmarks.csv"];
    let run = |extra: &[&str]| -> Output {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        toonface(d, &args)
    };
    ok(&run(&["--out", "valid", "validate-annotations"]));
    ok(&run(&["--out", "split", "split"]));
    ok(&run(&[
        "--split",
        "split/split.csv",
        "--set",
        "balance.min=10",
        "--set",
        "balance.max=12",
        "--out",
        "aug",
        "augment",
    ]));
    let summary = parse_kv(&fs::read_to_string(d.join("aug/summary.txt")).unwrap()).unwrap();
    assert_eq!(summary["train"], "30", "three classes brought up to 10 each");
    assert!(d.join("aug/val/labels.csv").exists() && d.join("aug/test/labels.csv").exists());

    let small = [
        "--set",
        "landmarks.conv_filters=2,2,2",
        "--set",
        "landmarks.hidden_widths=8,8",
        "--out",
        "lm",
        "train-landmarks",
        "--max-epochs",
        "2",
        "--batch-size",
        "8",
    ];
    ok(&run(&small));
    ok(&run(&["--model", "lm/model.bin", "--out", "lmpred", "predict"]));
    let table =
        toonface::data::load_landmark_table_with(d.join("lmpred/landmarks.csv"), toonface::data::Bounds::Report)
            .unwrap();
    assert_eq!(table.len(), 24);

    let ablate = [
        "--set",
        "hcnn.conv_filters=2,2,2,2",
        "--set",
        "hcnn.fc_widths=8,8",
        "--set",
        "hcnn.main_widths=8,8",
        "--split",
        "split/split.csv",
        "--out",
        "abl",
        "ablate-hcnn",
        "--max-epochs",
        "2",
    ];
    ok(&run(&ablate));
    let csv = fs::read_to_string(d.join("abl/ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("with,true,true,") && rows[2].starts_with("without,false,false,"));

    landmark_fixture(d, true);
    let out = run(&["--out", "invalid", "validate-annotations"]);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(d.join("invalid/report.txt")).unwrap();
    assert!(report.contains("odd"), "{report}");
}
