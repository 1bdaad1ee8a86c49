use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use textfold::corpus::{write_corpus, Corpus, LabelVocabulary, Sample, SplitTag};
use textfold::synthetic::{generate, SyntheticSpec};

fn textfold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textfold")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes train/val/test TSVs and a desk-scale config; returns the config path.
fn workspace(dir: &Path, test_labeled: bool) -> PathBuf {
    let labels = LabelVocabulary::default();
    let train = generate(&SyntheticSpec::balanced(120, 1).with_prefix("tr"), &labels, SplitTag::Train).unwrap();
    let val = generate(&SyntheticSpec::balanced(40, 2).with_prefix("va"), &labels, SplitTag::Val).unwrap();
    let mut test = generate(&SyntheticSpec::balanced(40, 3).with_prefix("te"), &labels, SplitTag::Test).unwrap();
    if !test_labeled {
        test = Corpus::new(
            test.samples().iter().map(|s| Sample::unlabeled(s.id.clone(), s.text.clone())).collect(),
            labels,
            SplitTag::Test,
        )
        .unwrap();
    }
    write_corpus(&train, dir.join("train.tsv")).unwrap();
    write_corpus(&val, dir.join("val.tsv")).unwrap();
    write_corpus(&test, dir.join("test.tsv")).unwrap();
    let config = json!({
        "data": {
            "train": dir.join("train.tsv"),
            "val": dir.join("val.tsv"),
            "test": dir.join("test.tsv"),
        },
        "text_rnn": {
            "model": {"embedding_dim": 8, "hidden_size": 8},
            "train": {"epochs": 3, "batch_size": 16, "optimizer": {"kind": "adamw"}},
        },
        "cv": {
            "train": {
                "epochs": 3,
                "batch_size": 32,
                "schedule": {"floor_lr": 1e-4, "peak_lr": 0.05, "warmup_epochs": 1.0, "decay_epochs": 2.0},
            },
        },
        "seed": 7,
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eda_counts_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), true);
    let out = dir.path().join("eda");
    let o = textfold(&["eda", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eda = read_json(out.join("eda.json"));
    let train = &eda[0];
    assert_eq!(train["split"], "train");
    assert_eq!(train["class_counts"][0]["count"], train["class_counts"][1]["count"]);
    assert!(out.join("class_distribution_train.png").exists());
    assert!(out.join("top_tokens_val.csv").exists());
    assert!(out.join("config.json").exists());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"data": {"train": "/no/such/train.tsv", "val": "/no/such/val.tsv"}}"#).unwrap();
    let o = textfold(&["eda", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

#[test]
fn usage_errors() {
    assert_eq!(code(&textfold(&["no-such-command"])), 2);
    assert_eq!(code(&textfold(&["cv", "--threshold", "nan-ish"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.json");
    fs::write(&cfg, r#"{"sed": 3}"#).unwrap();
    let o = textfold(&["cv", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sed"));
    assert_eq!(code(&textfold(&["cv", "--threshold", "0.4"])), 2);
}

#[test]
fn train_textrnn_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), true);
    let out = dir.path().join("rnn");
    let o = textfold(&["train-textrnn", "--config", s(&cfg), "--out", s(&out), "--epochs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let record = read_json(out.join("train_record.json"));
    assert_eq!(record["epochs"].as_array().unwrap().len(), 2);
    assert!(out.join("text_rnn.ckpt.json").exists());
    let m = read_json(out.join("metrics.json"));
    assert!(m["weighted_f1"].as_f64().unwrap() <= 1.0);
    assert!(out.join("curves_text_rnn.png").exists());
    let resolved = read_json(out.join("config.json"));
    assert_eq!(resolved["text_rnn"]["train"]["epochs"], 2);
    assert_eq!(resolved["text_rnn"]["train"]["batch_size"], 16);
}

#[test]
fn cv_strategies_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), true);

    let five = dir.path().join("five");
    let o = textfold(&["cv", "--config", s(&cfg), "--out", s(&five), "--parallel-folds", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = read_json(five.join("manifest.json"));
    let names: Vec<&str> = manifest["records"].as_array().unwrap().iter().map(|r| r["backbone_name"].as_str().unwrap()).collect();
    assert_eq!(names, vec!["toy-1", "toy-2", "toy-3", "toy-4", "toy-5"]);
    let preds = fs::read_to_string(five.join("predictions.csv")).unwrap();
    assert!(preds.starts_with("id,label\n"));
    assert_eq!(preds.lines().count(), 41);
    assert!(five.join("metrics.json").exists());
    assert!(five.join("confusion.png").exists());
    for i in 0..5 {
        assert!(five.join(format!("fold_{i}.ckpt.json")).exists());
    }

    let single = dir.path().join("single");
    let o = textfold(&[
        "cv", "--config", s(&cfg), "--out", s(&single), "--strategy", "single_model", "--backbones", "toy-3", "--epochs", "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = read_json(single.join("manifest.json"));
    let records = manifest["records"].as_array().unwrap();
    assert_eq!(records.len(), 5);
    assert!(records.iter().all(|r| r["backbone_name"] == "toy-3"));

    let o = textfold(&["cv", "--config", s(&cfg), "--out", s(&single), "--backbones", "toy-1,toy-2,toy-3,toy-4"]);
    assert_eq!(code(&o), 2);
    let o = textfold(&["cv", "--config", s(&cfg), "--out", s(&single), "--strategy", "single_model", "--backbones", "bert"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("toy-1, toy-2"), "{}", stderr(&o));
}

#[test]
fn identical_runs_give_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), true);
    let out = dir.path().join("run");
    let snapshot = |out: &Path| -> BTreeMap<String, Vec<u8>> {
        fs::read_dir(out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "json" || e == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect()
    };
    let args = ["cv", "--config", s(&cfg), "--out", s(&out), "--epochs", "2", "--parallel-folds", "5"];
    assert_eq!(code(&textfold(&args)), 0);
    let first = snapshot(&out);
    fs::remove_dir_all(&out).unwrap();
    assert_eq!(code(&textfold(&args)), 0);
    let second = snapshot(&out);
    assert!(first.len() >= 10, "{:?}", first.keys());
    assert_eq!(first, second);
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path(), true);
    let cfg = dir.path().join("explode.json");
    let mut c = read_json(dir.path().join("config.json"));
    c["cv"]["train"]["schedule"]["peak_lr"] = json!(1e300);
    c["cv"]["train"]["clip_norm"] = Value::Null;
    fs::write(&cfg, c.to_string()).unwrap();
    let o = textfold(&["cv", "--config", s(&cfg), "--out", s(&dir.path().join("x")), "--epochs", "2"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("fold 0"), "{}", stderr(&o));
}

#[test]
fn pseudo_records_threshold_and_handles_empty_harvest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path(), false);

    let out = dir.path().join("pseudo");
    let o = textfold(&["pseudo", "--config", s(&cfg), "--out", s(&out), "--epochs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(out.join("manifest.json"));
    assert_eq!(m["pseudo_label"]["threshold"], 0.95);
    assert!(out.join("cv/manifest.json").exists());
    let harvested = m["pseudo_harvested"].as_u64().unwrap();
    assert_eq!(m["labeled_pool_size"].as_u64().unwrap(), 160 + harvested);
    assert!(!out.join("metrics.json").exists(), "unlabeled test has no metrics");

    let out2 = dir.path().join("pseudo99");
    let o = textfold(&[
        "pseudo", "--config", s(&cfg), "--out", s(&out2), "--from", s(&out.join("cv")), "--threshold", "0.99", "--epochs", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(out2.join("manifest.json"))["pseudo_label"]["threshold"], 0.99);

    let out3 = dir.path().join("pseudo_empty");
    let o = textfold(&[
        "pseudo", "--config", s(&cfg), "--out", s(&out3), "--from", s(&out.join("cv")), "--threshold", "0.999999999999",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(out3.join("manifest.json"));
    if m["pseudo_harvested"] == 0 {
        assert_eq!(
            fs::read_to_string(out3.join("predictions.csv")).unwrap(),
            fs::read_to_string(out.join("cv/predictions.csv")).unwrap()
        );
        assert_eq!(m["labeled_pool_size"], 160);
    }
}

#[test]
fn evaluate_scores_a_submission() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.tsv");
    fs::write(&gold, "id\ttweet\tlabel\n1\ta\treal\n2\tb\tfake\n3\tc\treal\n4\td\tfake\n").unwrap();
    let preds = dir.path().join("p.csv");
    fs::write(&preds, "id,label\n1,real\n2,real\n3,real\n4,fake\n").unwrap();
    let out = dir.path().join("eval");
    let o = textfold(&["evaluate", "--predictions", s(&preds), "--gold", s(&gold), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(out.join("metrics.json"));
    assert_eq!(m["accuracy"], 0.75);
    assert!((m["weighted_f1"].as_f64().unwrap() - 11.0 / 15.0).abs() < 1e-12);
    assert_eq!(m["confusion"], json!([[2, 0], [1, 1]]));

    fs::write(&preds, "id,label\n1,real\n").unwrap();
    let o = textfold(&["evaluate", "--predictions", s(&preds), "--gold", s(&gold), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}
