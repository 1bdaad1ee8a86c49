//! The `textfold` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 training failure.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::classifiers::{predict_proba, Classifier, EncoderServer, TextRnn};
use crate::config::{require_path, RunConfig};
use crate::corpus::{
    default_stopwords, eda_report, load_corpus, merge, plan_folds, split_holdout, write_corpus, Corpus, EdaReport,
    FoldStrategy, SplitTag,
};
use crate::ensemble::{
    predict_ensemble, read_manifest, run_cv, run_pseudo_label_round, write_predictions, CvRun, CvSettings,
    EnsembleManifest, EnsemblePrediction, RetrainPlan,
};
use crate::error::{Error, Result};
use crate::evaluation::{bar_chart, emit_reports, metrics, training_curves, MetricsReport};
use crate::preprocess::{fit_vocabulary, load_pretrained_vectors, EmbeddingMatrix};
use crate::training::{train, TrainRecord};

#[derive(Debug, Parser)]
#[command(name = "textfold", version, about = "K-fold ensemble text classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Class counts, bar charts and top-token tables for each split.
    Eda(CommonArgs),
    /// Train the BiLSTM baseline on a stratified re-split of train + val.
    TrainTextrnn(CommonArgs),
    /// K-fold training of backbones and soft-vote prediction on the test set.
    Cv(CommonArgs),
    /// Pseudo-label the test set with a fold ensemble and retrain.
    Pseudo {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory of an earlier `cv` run to start from.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Metrics for a predictions CSV against a gold TSV.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Serve the built-in encoders over the JSON-lines protocol on stdin/stdout.
    #[command(hide = true)]
    ServeEncoder,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// single_model or five_model.
    #[arg(long)]
    pub strategy: Option<FoldStrategy>,
    /// Comma-separated backbone names.
    #[arg(long, value_delimiter = ',')]
    pub backbones: Option<Vec<String>>,
    /// Pseudo-label confidence threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Maximum number of folds trained concurrently.
    #[arg(long)]
    pub parallel_folds: Option<usize>,
    /// Epoch count for the command's training stage.
    #[arg(long)]
    pub epochs: Option<usize>,
}

impl CommonArgs {
    /// Default, then file, then flags. Section seeds follow the top-level seed.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.strategy {
            cfg.cv.strategy = s;
        }
        if let Some(b) = &self.backbones {
            cfg.cv.backbones = b.clone();
        }
        if let Some(t) = self.threshold {
            cfg.pseudo.threshold = t;
        }
        if let Some(n) = self.parallel_folds {
            cfg.cv.parallel_folds = n;
        }
        if let Some(e) = self.epochs {
            cfg.text_rnn.train.epochs = e;
            cfg.cv.train.epochs = e;
        }
        cfg.text_rnn.train.seed = cfg.seed;
        cfg.cv.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_training_failure() {
                3
            } else {
                2
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Eda(args) => cmd_eda(&prepare(&args)?),
        Command::TrainTextrnn(args) => cmd_train_textrnn(&prepare(&args)?),
        Command::Cv(args) => cmd_cv(&prepare(&args)?).map(|_| ()),
        Command::Pseudo { common, from } => cmd_pseudo(&prepare(&common)?, from.as_deref()),
        Command::Evaluate {
            common,
            predictions,
            gold,
        } => cmd_evaluate(&prepare(&common)?, &predictions, &gold),
        Command::ServeEncoder => {
            let mut server = EncoderServer::new(crate::classifiers::BackboneRegistry::default());
            server.serve(io::stdin().lock(), io::stdout().lock())
        }
    }
}

/// Resolves the config, creates the output directory and stores the
/// resolved config in it.
fn prepare(args: &CommonArgs) -> Result<RunConfig> {
    let cfg = args.resolve()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(format!("creating {}", cfg.out_dir.display()), e))?;
    cfg.save(cfg.out_dir.join("config.json"))?;
    Ok(cfg)
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_split(cfg: &RunConfig, path: &Option<PathBuf>, field: &str, tag: SplitTag) -> Result<Corpus> {
    load_corpus(require_path(path, field)?, tag, &cfg.vocabulary)
}

fn load_optional(cfg: &RunConfig, path: &Option<PathBuf>, field: &str, tag: SplitTag) -> Result<Option<Corpus>> {
    match path {
        Some(_) => load_split(cfg, path, field, tag).map(Some),
        None => Ok(None),
    }
}

/// Train + val (+ external when enabled) as one labeled pool.
fn labeled_pool(cfg: &RunConfig) -> Result<Corpus> {
    let train_c = load_split(cfg, &cfg.data.train, "data.train", SplitTag::Train)?;
    let val_c = load_split(cfg, &cfg.data.val, "data.val", SplitTag::Val)?;
    let external = if cfg.data.use_external {
        Some(load_split(cfg, &cfg.data.external, "data.external", SplitTag::External)?)
    } else {
        None
    };
    let mut parts = vec![&train_c, &val_c];
    parts.extend(external.as_ref());
    merge(&parts)
}

fn curves_only(records: &[TrainRecord], out: &Path) -> Result<()> {
    for r in records {
        let stem: String = r
            .model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        training_curves(r).save(out.join(format!("curves_{stem}.png")))?;
        r.write_csv(out.join(format!("curves_{stem}.csv")))?;
    }
    Ok(())
}

/// Metrics against the test labels when every test sample carries one.
fn score_predictions(test: &Corpus, predicted: &[String]) -> Result<Option<MetricsReport>> {
    if !test.is_fully_labeled() || test.is_empty() {
        return Ok(None);
    }
    let truth: Vec<&str> = test.samples().iter().map(|s| s.label.as_deref().unwrap_or_default()).collect();
    let pred: Vec<&str> = predicted.iter().map(String::as_str).collect();
    metrics(&truth, &pred, test.vocabulary()).map(Some)
}

fn cmd_eda(cfg: &RunConfig) -> Result<()> {
    let stopwords = default_stopwords();
    let mut splits = vec![
        load_split(cfg, &cfg.data.train, "data.train", SplitTag::Train)?,
        load_split(cfg, &cfg.data.val, "data.val", SplitTag::Val)?,
    ];
    splits.extend(load_optional(cfg, &cfg.data.test, "data.test", SplitTag::Test)?);
    splits.extend(load_optional(cfg, &cfg.data.external, "data.external", SplitTag::External)?);

    let mut reports: Vec<EdaReport> = Vec::new();
    for corpus in &splits {
        let report = eda_report(corpus, cfg.eda_top_n, &stopwords);
        let name = &report.split;
        bar_chart(&corpus.class_counts()).save(cfg.out_dir.join(format!("class_distribution_{name}.png")))?;
        let mut table = String::from("token,count\n");
        for t in &report.top_tokens {
            table.push_str(&format!("{},{}\n", t.token, t.count));
        }
        let path = cfg.out_dir.join(format!("top_tokens_{name}.csv"));
        fs::write(&path, table).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        let counts: Vec<String> = report.class_counts.iter().map(|c| format!("{} {}", c.class, c.count)).collect();
        println!("{name}: {} samples ({})", report.total_samples, counts.join(", "));
        reports.push(report);
    }
    write_json(&reports, cfg.out_dir.join("eda.json"))
}

fn cmd_train_textrnn(cfg: &RunConfig) -> Result<()> {
    let pool = labeled_pool(cfg)?;
    let (train_split, val_split) = split_holdout(&pool, cfg.text_rnn.train_fraction, cfg.seed)?;
    let vocab = fit_vocabulary(&train_split, &cfg.clean, cfg.text_rnn.min_frequency);
    let dim = cfg.text_rnn.model.embedding_dim;
    let embeddings = match &cfg.data.vectors {
        Some(_) => {
            let path = require_path(&cfg.data.vectors, "data.vectors")?;
            let (m, hits) = load_pretrained_vectors(path, &vocab, dim, cfg.seed)?;
            log::info!("pretrained vectors cover {hits} of {} vocabulary entries", vocab.len());
            m
        }
        None => {
            log::warn!("no data.vectors configured; embeddings start from a random initialization");
            EmbeddingMatrix::random(&vocab, dim, cfg.seed)
        }
    };
    let mut model = TextRnn::new(cfg.text_rnn.model, cfg.clean, vocab, embeddings, cfg.seed)?;
    let record = train(&mut model, &train_split, &val_split, &cfg.text_rnn.train)?;
    println!(
        "text_rnn: best val weighted F1 {:.4} at epoch {}",
        record.best_val_f1, record.best_epoch
    );
    model.checkpoint()?.save(cfg.out_dir.join("text_rnn.ckpt.json"))?;
    record.write_json(cfg.out_dir.join("train_record.json"))?;

    let test = load_optional(cfg, &cfg.data.test, "data.test", SplitTag::Test)?;
    let records = [record];
    if let Some(test) = test {
        let probs = predict_proba(&model, &test.texts())?;
        let predicted: Vec<String> = probs
            .iter()
            .map(|p| cfg.vocabulary.classes()[p.argmax()].clone())
            .collect();
        let preds: Vec<EnsemblePrediction> = test
            .samples()
            .iter()
            .zip(probs)
            .map(|(s, p)| EnsemblePrediction::new(s.id.clone(), p, &cfg.vocabulary))
            .collect();
        write_predictions(
            &preds,
            cfg.vocabulary.classes(),
            cfg.out_dir.join("predictions.csv"),
            cfg.out_dir.join("probabilities.json"),
        )?;
        if let Some(report) = score_predictions(&test, &predicted)? {
            println!("test weighted F1 {:.4}, accuracy {:.4}", report.weighted_f1, report.accuracy);
            emit_reports(&report, &records, Some(&pool.class_counts()), &cfg.out_dir)?;
            return Ok(());
        }
    }
    curves_only(&records, &cfg.out_dir)
}

struct CvOutput {
    pool: Corpus,
    run: CvRun,
    predictions: Option<(Corpus, Vec<EnsemblePrediction>)>,
}

fn cv_settings(cfg: &RunConfig, out_dir: PathBuf) -> CvSettings {
    CvSettings {
        registry: cfg.registry(),
        clean: cfg.clean,
        train: cfg.cv.train,
        out_dir,
        parallel_folds: cfg.cv.parallel_folds,
    }
}

fn write_ensemble_outputs(
    cfg: &RunConfig,
    out: &Path,
    test: &Corpus,
    preds: &[EnsemblePrediction],
    histories: &[TrainRecord],
    pool_counts: &[usize],
) -> Result<()> {
    write_predictions(preds, cfg.vocabulary.classes(), out.join("predictions.csv"), out.join("probabilities.json"))?;
    let predicted: Vec<String> = preds.iter().map(|p| p.predicted_label.clone()).collect();
    match score_predictions(test, &predicted)? {
        Some(report) => {
            println!("ensemble test weighted F1 {:.4}, accuracy {:.4}", report.weighted_f1, report.accuracy);
            emit_reports(&report, histories, Some(pool_counts), out)?;
        }
        None => curves_only(histories, out)?,
    }
    Ok(())
}

fn cmd_cv_in(cfg: &RunConfig, out: &Path) -> Result<CvOutput> {
    let registry = cfg.registry();
    for name in &cfg.cv.backbones {
        registry.check(name)?;
    }
    let pool = labeled_pool(cfg)?;
    let test = load_optional(cfg, &cfg.data.test, "data.test", SplitTag::Test)?;
    let plan = plan_folds(&pool, cfg.cv.k_folds, cfg.cv.strategy, &cfg.cv.backbones, cfg.seed)?;
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    write_json(&plan, out.join("fold_plan.json"))?;
    let run = run_cv(&pool, &plan, &cv_settings(cfg, out.to_path_buf()))?;
    for (r, h) in run.records.iter().zip(&run.histories) {
        println!(
            "fold {} ({}): best val weighted F1 {:.4} at epoch {}",
            r.fold_index, r.backbone_name, r.ensemble_weight, h.best_epoch
        );
        h.write_json(out.join(format!("fold_{}_record.json", r.fold_index)))?;
    }
    EnsembleManifest {
        strategy: plan.strategy,
        k_folds: plan.k_folds,
        seed: plan.seed,
        classes: cfg.vocabulary.classes().to_vec(),
        labeled_pool_size: pool.len(),
        pseudo_label: None,
        pseudo_harvested: None,
        records: run.records.clone(),
    }
    .write(out.join("manifest.json"))?;

    let predictions = match test {
        Some(test) => {
            let preds = predict_ensemble(&run.records, &test, &registry)?;
            write_ensemble_outputs(cfg, out, &test, &preds, &run.histories, &pool.class_counts())?;
            Some((test, preds))
        }
        None => {
            curves_only(&run.histories, out)?;
            None
        }
    };
    Ok(CvOutput { pool, run, predictions })
}

fn cmd_cv(cfg: &RunConfig) -> Result<CvOutput> {
    cmd_cv_in(cfg, &cfg.out_dir)
}

fn cmd_pseudo(cfg: &RunConfig, from: Option<&Path>) -> Result<()> {
    let registry = cfg.registry();
    let test = load_split(cfg, &cfg.data.test, "data.test", SplitTag::Test)?;
    let (pool, prior_records, prior) = match from {
        Some(dir) => {
            let manifest = read_manifest(dir.join("manifest.json"))?;
            let prior = predict_ensemble(&manifest.records, &test, &registry)?;
            (labeled_pool(cfg)?, manifest.records, prior)
        }
        None => {
            let cv = cmd_cv_in(cfg, &cfg.out_dir.join("cv"))?;
            let (_, prior) = cv.predictions.expect("test corpus was loaded");
            (cv.pool, cv.run.records, prior)
        }
    };
    let plan = RetrainPlan {
        k_folds: cfg.cv.k_folds,
        strategy: cfg.cv.strategy,
        backbones: cfg.cv.backbones.clone(),
        seed: cfg.seed,
    };
    let round = run_pseudo_label_round(&pool, &test, &prior, &plan, &cv_settings(cfg, cfg.out_dir.clone()), &cfg.pseudo)?;
    println!(
        "pseudo-label: harvested {} of {} test samples above {}; labeled pool {}",
        round.harvested.len(),
        test.len(),
        cfg.pseudo.threshold,
        round.pool_size
    );
    write_corpus(&round.harvested, cfg.out_dir.join("pseudo_labels.tsv"))?;
    let (records, histories) = match &round.retrain {
        Some(cv) => (cv.records.clone(), cv.histories.clone()),
        None => (prior_records, Vec::new()),
    };
    EnsembleManifest {
        strategy: cfg.cv.strategy,
        k_folds: cfg.cv.k_folds,
        seed: cfg.seed,
        classes: cfg.vocabulary.classes().to_vec(),
        labeled_pool_size: round.pool_size,
        pseudo_label: Some(cfg.pseudo),
        pseudo_harvested: Some(round.harvested.len()),
        records,
    }
    .write(cfg.out_dir.join("manifest.json"))?;
    write_ensemble_outputs(cfg, &cfg.out_dir, &test, &round.predictions, &histories, &pool.class_counts())
}

fn read_predictions_csv(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "id,label" => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header `id,label`".into(),
            })
        }
    }
    let mut out = HashMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `id,label`".into(),
        })?;
        out.insert(id.to_string(), label.trim().to_string());
    }
    Ok(out)
}

fn cmd_evaluate(cfg: &RunConfig, predictions: &Path, gold: &Path) -> Result<()> {
    let gold = load_corpus(gold, SplitTag::Val, &cfg.vocabulary)?;
    let predicted = read_predictions_csv(predictions)?;
    let mut pred = Vec::with_capacity(gold.len());
    for s in gold.samples() {
        let p = predicted
            .get(&s.id)
            .ok_or_else(|| Error::Validation(format!("no prediction for gold id `{}`", s.id)))?;
        pred.push(p.as_str());
    }
    let truth: Vec<&str> = gold.samples().iter().map(|s| s.label.as_deref().unwrap_or_default()).collect();
    let report = metrics(&truth, &pred, &cfg.vocabulary)?;
    println!(
        "accuracy {:.4}, weighted precision {:.4}, weighted recall {:.4}, weighted F1 {:.4}",
        report.accuracy, report.weighted_precision, report.weighted_recall, report.weighted_f1
    );
    emit_reports(&report, &[], Some(&gold.class_counts()), &cfg.out_dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"seed": 5, "pseudo": {"threshold": 0.9}, "cv": {"train": {"epochs": 7}}}"#).unwrap();
        let args = CommonArgs {
            config: Some(p.clone()),
            threshold: Some(0.99),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.pseudo.threshold, 0.99);
        assert_eq!(cfg.cv.train.epochs, 7);
        assert_eq!(cfg.cv.train.seed, 5);
        let cfg = CommonArgs {
            config: Some(p),
            epochs: Some(2),
            seed: Some(1),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!((cfg.cv.train.epochs, cfg.text_rnn.train.epochs, cfg.seed), (2, 2, 1));
    }

    #[test]
    fn parses_backbone_list() {
        let cli = Cli::try_parse_from(["textfold", "cv", "--backbones", "toy-1,toy-2", "--strategy", "single_model"]).unwrap();
        let Command::Cv(args) = cli.command else { panic!() };
        assert_eq!(args.backbones.unwrap(), vec!["toy-1", "toy-2"]);
        assert_eq!(args.strategy, Some(FoldStrategy::SingleModel));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_from_args(["textfold", "frobnicate"]), 2);
        assert_eq!(run_from_args(["textfold", "cv", "--threshold", "abc"]), 2);
    }
}
