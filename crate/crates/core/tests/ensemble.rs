mod common;

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textfold::classifiers::{BackboneRegistry, Classifier, ProbVector, TOY_VARIANTS};
use textfold::corpus::{merge, plan_folds, Corpus, FoldStrategy, LabelVocabulary, Sample, SplitTag};
use textfold::ensemble::{
    harvest_pseudo_labels, predict_ensemble, predict_with_models, read_manifest, run_cv, run_cv_with,
    run_pseudo_label_round, soft_vote, CvSettings, EnsembleManifest, PseudoLabelConfig, RetrainPlan,
};
use textfold::synthetic::{generate, SyntheticSpec};
use textfold::training::ScheduleConfig;
use textfold::Error;

use common::{desk_backbone, oracle_soft_vote, random_simplex};

fn toy_names() -> Vec<String> {
    TOY_VARIANTS.iter().map(|v| v.name.to_string()).collect()
}

#[test]
fn soft_vote_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..500 {
        let k = rng.gen_range(2..5);
        let m = rng.gen_range(1..6);
        let probs: Vec<Vec<f64>> = (0..m).map(|_| random_simplex(&mut rng, k)).collect();
        let pvs: Vec<ProbVector> = probs.iter().map(|p| ProbVector::new(p.clone()).unwrap()).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let v = soft_vote(&pvs, &w).unwrap();
        assert!((v.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Same vector from every model: the vote returns it.
        let same = vec![pvs[0].clone(); m];
        let s = soft_vote(&same, &w).unwrap();
        for (a, b) in s.as_slice().iter().zip(pvs[0].as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Power-of-two scaling is exact in floating point.
        let scaled: Vec<f64> = w.iter().map(|x| x * 8.0).collect();
        assert_eq!(soft_vote(&pvs, &scaled).unwrap(), v);
    }
}

#[test]
fn soft_vote_matches_oracle_for_small_ensembles() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..1000 {
        let m = rng.gen_range(1..=3);
        let probs: Vec<Vec<f64>> = (0..m).map(|_| random_simplex(&mut rng, 2)).collect();
        let pvs: Vec<ProbVector> = probs.iter().map(|p| ProbVector::new(p.clone()).unwrap()).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..1.0)).collect();
        let got = soft_vote(&pvs, &w).unwrap();
        let want = oracle_soft_vote(&probs, &w);
        for (a, b) in got.as_slice().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

fn settings(dir: &std::path::Path, epochs: usize) -> CvSettings {
    CvSettings::new(BackboneRegistry::default(), desk_backbone(epochs), dir)
}

#[test]
fn two_fold_plan_on_twenty_samples() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelVocabulary::default();
    let corpus = generate(&SyntheticSpec::balanced(20, 1), &labels, SplitTag::Train).unwrap();
    let plan = plan_folds(&corpus, 2, FoldStrategy::SingleModel, &["toy-1".into()], 3).unwrap();
    let run = run_cv(&corpus, &plan, &settings(dir.path(), 2)).unwrap();
    assert_eq!(run.records.len(), 2);
    for (i, r) in run.records.iter().enumerate() {
        assert_eq!(r.fold_index, i);
        assert!((0.0..=1.0).contains(&r.ensemble_weight));
        assert!(r.checkpoint_ref.exists());
    }
}

#[test]
fn five_model_and_single_model_records() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelVocabulary::default();
    let mut spec = SyntheticSpec::balanced(150, 2);
    spec.signal = 0.1;
    let corpus = generate(&spec, &labels, SplitTag::Train).unwrap();

    let five = plan_folds(&corpus, 5, FoldStrategy::FiveModel, &toy_names(), 1).unwrap();
    let run = run_cv(&corpus, &five, &settings(&dir.path().join("five"), 2)).unwrap();
    let names: Vec<&str> = run.records.iter().map(|r| r.backbone_name.as_str()).collect();
    assert_eq!(names, vec!["toy-1", "toy-2", "toy-3", "toy-4", "toy-5"]);

    let single = plan_folds(&corpus, 5, FoldStrategy::SingleModel, &["toy-3".into()], 1).unwrap();
    let run = run_cv(&corpus, &single, &settings(&dir.path().join("single"), 1)).unwrap();
    assert!(run.records.iter().all(|r| r.backbone_name == "toy-3"));
    let weights: std::collections::HashSet<u64> = run.records.iter().map(|r| r.ensemble_weight.to_bits()).collect();
    assert!(weights.len() > 1, "fold weights should differ: {:?}", run.records);
}

#[test]
fn parallel_folds_match_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelVocabulary::default();
    let corpus = generate(&SyntheticSpec::balanced(100, 4), &labels, SplitTag::Train).unwrap();
    let plan = plan_folds(&corpus, 5, FoldStrategy::FiveModel, &toy_names(), 8).unwrap();
    let seq = run_cv(&corpus, &plan, &settings(&dir.path().join("a"), 2)).unwrap();
    let mut par_settings = settings(&dir.path().join("b"), 2);
    par_settings.parallel_folds = 5;
    let par = run_cv(&corpus, &plan, &par_settings).unwrap();
    assert_eq!(seq.histories, par.histories);
    for (a, b) in seq.records.iter().zip(&par.records) {
        assert_eq!(a.ensemble_weight, b.ensemble_weight);
        assert_eq!(fs::read(&a.checkpoint_ref).unwrap(), fs::read(&b.checkpoint_ref).unwrap());
    }
}

#[test]
fn failing_fold_is_identified() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelVocabulary::default();
    let corpus = generate(&SyntheticSpec::balanced(40, 4), &labels, SplitTag::Train).unwrap();
    let plan = plan_folds(&corpus, 4, FoldStrategy::SingleModel, &["toy-1".into()], 8).unwrap();
    let registry = BackboneRegistry::default();
    let s = settings(dir.path(), 1);
    let factory = |a: &textfold::corpus::FoldAssignment, seed: u64| -> textfold::Result<Box<dyn Classifier>> {
        if a.fold_index == 2 {
            return Err(Error::External("encoder process exited".into()));
        }
        let opts = textfold::classifiers::BackboneOptions { max_length: 140, seed };
        Ok(Box::new(registry.build("toy-1", 2, Default::default(), &opts)?))
    };
    let err = run_cv_with(&corpus, &plan, &s, &factory).unwrap_err();
    assert!(matches!(err, Error::Fold { fold: 2, .. }), "{err}");
    assert!(err.is_training_failure());

    let mut exploding = settings(dir.path(), 2);
    exploding.train.schedule = ScheduleConfig {
        peak_lr: 1e300,
        ..exploding.train.schedule
    };
    exploding.train.clip_norm = None;
    let err = run_cv(&corpus, &plan, &exploding).unwrap_err();
    assert!(matches!(err, Error::Fold { fold: 0, .. }), "{err}");
}

#[test]
fn unknown_backbone_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::labeled("s", &["real", "fake", "real", "fake"]);
    let plan = plan_folds(&corpus, 2, FoldStrategy::SingleModel, &["bert".into()], 1).unwrap();
    match run_cv(&corpus, &plan, &settings(dir.path(), 1)) {
        Err(Error::UnknownBackbone { name, available }) => {
            assert_eq!(name, "bert");
            assert!(available.contains(&"toy-1".to_string()));
        }
        other => panic!("expected UnknownBackbone, got {other:?}"),
    }
}

#[test]
fn ensemble_prediction_contract() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelVocabulary::default();
    let pool = generate(&SyntheticSpec::balanced(100, 6), &labels, SplitTag::Train).unwrap();
    let test = generate(&SyntheticSpec::balanced(30, 7).with_prefix("t"), &labels, SplitTag::Test).unwrap();
    let plan = plan_folds(&pool, 3, FoldStrategy::FiveModel, &toy_names()[..3], 2).unwrap();
    let s = settings(dir.path(), 3);
    let run = run_cv(&pool, &plan, &s).unwrap();
    let preds = predict_ensemble(&run.records, &test, &s.registry).unwrap();
    assert_eq!(preds.len(), test.len());
    for p in &preds {
        let c = p.combined.as_slice();
        assert_eq!(p.max_probability, c.iter().cloned().fold(f64::MIN, f64::max));
        let argmax = if c[1] > c[0] { 1 } else { 0 };
        assert_eq!(p.predicted_label, labels.classes()[argmax]);
    }

    let mut scaled = run.records.clone();
    scaled.iter_mut().for_each(|r| r.ensemble_weight *= 10.0);
    let again = predict_ensemble(&scaled, &test, &s.registry).unwrap();
    for (a, b) in preds.iter().zip(&again) {
        assert_eq!(a.predicted_label, b.predicted_label);
        for (x, y) in a.combined.as_slice().iter().zip(b.combined.as_slice()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    // The manifest round-trips and its checkpoints still load.
    let manifest = EnsembleManifest {
        strategy: plan.strategy,
        k_folds: plan.k_folds,
        seed: plan.seed,
        classes: labels.classes().to_vec(),
        labeled_pool_size: pool.len(),
        pseudo_label: None,
        pseudo_harvested: None,
        records: run.records.clone(),
    };
    manifest.write(dir.path().join("manifest.json")).unwrap();
    let back = read_manifest(dir.path().join("manifest.json")).unwrap();
    assert_eq!(predict_ensemble(&back.records, &test, &s.registry).unwrap(), preds);

    // A three-class corpus cannot be scored by binary checkpoints.
    let tri = LabelVocabulary::new(["a", "b", "c"]).unwrap();
    let other = Corpus::new(vec![Sample::unlabeled("z", "text")], tri, SplitTag::Test).unwrap();
    assert!(matches!(predict_ensemble(&run.records, &other, &s.registry), Err(Error::Checkpoint(_))));
}

#[test]
fn unanimous_models_and_ties() {
    struct Fixed(Vec<f64>, textfold::classifiers::ClassifierSpec);
    impl Classifier for Fixed {
        fn spec(&self) -> &textfold::classifiers::ClassifierSpec {
            &self.1
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn is_trained(&self) -> bool {
            true
        }
        fn mark_trained(&mut self) {}
        fn logits(&self, texts: &[&str]) -> textfold::Result<Vec<Vec<f64>>> {
            Ok(vec![self.0.iter().map(|p| p.ln()).collect(); texts.len()])
        }
        fn train_batch(
            &mut self,
            _: &[&str],
            _: &[Vec<f64>],
            _: &textfold::classifiers::StepSettings,
            _: &mut ChaCha8Rng,
        ) -> textfold::Result<f64> {
            unreachable!()
        }
        fn snapshot(&mut self) -> textfold::Result<textfold::classifiers::ModelSnapshot> {
            unreachable!()
        }
        fn restore(&mut self, _: &textfold::classifiers::ModelSnapshot) -> textfold::Result<()> {
            unreachable!()
        }
        fn checkpoint(&self) -> textfold::Result<textfold::classifiers::Checkpoint> {
            unreachable!()
        }
    }
    let spec = textfold::classifiers::ClassifierSpec::backbone("fixed");
    let corpus = Corpus::new(vec![Sample::unlabeled("x", "t")], LabelVocabulary::default(), SplitTag::Test).unwrap();
    let a = Fixed(vec![0.9, 0.1], spec.clone());
    let b = Fixed(vec![0.9, 0.1], spec.clone());
    let p = predict_with_models(&[&a, &b], &[0.7, 0.3], &corpus).unwrap();
    assert_eq!(p[0].predicted_label, "real");
    assert!((p[0].max_probability - 0.9).abs() < 1e-12);

    let c = Fixed(vec![0.7, 0.3], spec.clone());
    let d = Fixed(vec![0.3, 0.7], spec);
    let p = predict_with_models(&[&c, &d], &[1.0, 1.0], &corpus).unwrap();
    assert_eq!(p[0].combined.as_slice()[0], p[0].combined.as_slice()[1]);
    assert_eq!(p[0].predicted_label, "real");
}

#[test]
fn pseudo_round_grows_pool_and_keeps_pseudo_out_of_validation() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelVocabulary::default();
    let pool = generate(&SyntheticSpec::balanced(100, 30), &labels, SplitTag::Train).unwrap();
    let hidden = generate(&SyntheticSpec::balanced(40, 31).with_prefix("u"), &labels, SplitTag::Test).unwrap();
    let test = Corpus::new(
        hidden.samples().iter().map(|s| Sample::unlabeled(s.id.clone(), s.text.clone())).collect(),
        labels.clone(),
        SplitTag::Test,
    )
    .unwrap();
    let plan = plan_folds(&pool, 2, FoldStrategy::FiveModel, &toy_names()[..2], 5).unwrap();
    let s = settings(dir.path(), 4);
    let run = run_cv(&pool, &plan, &s).unwrap();
    let prior = predict_ensemble(&run.records, &test, &s.registry).unwrap();
    let config = PseudoLabelConfig {
        threshold: 0.9,
        rounds: 1,
    };
    let expected = prior.iter().filter(|p| p.max_probability > 0.9).count();
    assert!(expected > 0, "toy ensemble should be confident on separable data");

    let round = run_pseudo_label_round(&pool, &test, &prior, &RetrainPlan::from_plan(&plan), &s, &config).unwrap();
    assert_eq!(round.rounds_run, 1);
    assert_eq!(round.harvested.len(), expected);
    assert_eq!(round.pool_size, pool.len() + expected);
    let retrain_plan = round.plan.as_ref().unwrap();
    let pseudo_ids: Vec<&str> = round.harvested.ids().collect();
    for a in &retrain_plan.assignments {
        assert!(a.val_ids.iter().all(|id| !pseudo_ids.contains(&id.as_str())));
        assert!(pseudo_ids.iter().all(|id| a.train_ids.iter().any(|t| t == id)));
    }
    assert_eq!(round.predictions.len(), test.len());
    assert!(round.retrain.as_ref().unwrap().records[0].checkpoint_ref.starts_with(dir.path().join("pseudo_round_1")));

    // An unreachable threshold harvests nothing and skips the retrain.
    let strict = PseudoLabelConfig {
        threshold: 0.999_999_999,
        rounds: 1,
    };
    let none = run_pseudo_label_round(&pool, &test, &prior, &RetrainPlan::from_plan(&plan), &s, &strict).unwrap();
    if prior.iter().all(|p| p.max_probability <= strict.threshold) {
        assert_eq!(none.rounds_run, 0);
        assert!(none.retrain.is_none());
        assert_eq!(none.predictions, prior);
        assert_eq!(none.pool_size, pool.len());
    }
}

#[test]
fn harvested_corpus_merges_with_pool() {
    let labels = LabelVocabulary::default();
    let pool = common::labeled("p", &["real", "fake"]);
    let test = Corpus::new(vec![Sample::unlabeled("t0", "hello")], labels.clone(), SplitTag::Test).unwrap();
    let pred = textfold::ensemble::EnsemblePrediction::new("t0", ProbVector::new(vec![0.01, 0.99]).unwrap(), &labels);
    let h = harvest_pseudo_labels(&[pred], &test, &PseudoLabelConfig::default()).unwrap();
    let merged = merge(&[&pool, &h]).unwrap();
    assert_eq!(merged.len(), 3);
    assert_eq!(merged.samples()[2].label.as_deref(), Some("fake"));
}
