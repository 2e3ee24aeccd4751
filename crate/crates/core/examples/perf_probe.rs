// Scratch timing probe for training-cost calibration.

use std::time::Instant;

use traveldist_core::data_model::apply_exclusions;
use traveldist_core::dataset::{fit_normalizer, split_and_balance};
use traveldist_core::features::DecayConfig;
use traveldist_core::nn::{build_ablation_set, cnn_proposed, mlp, train, TrainingConfig};
use traveldist_core::pipeline::featurize;
use traveldist_core::synth::{generate, SynthConfig};

fn main() {
    let t0 = Instant::now();
    let cfg = SynthConfig::default_preset(7);
    let raw = generate(&cfg).unwrap();
    println!("generate: {:?} ({} visits)", t0.elapsed(), raw.visits.len());

    let t = Instant::now();
    let (corpus, _) = apply_exclusions(&raw, Some(&cfg.window));
    println!("exclusions: {:?}", t.elapsed());

    let t = Instant::now();
    let (_corpus, outcome) = featurize(corpus, &DecayConfig::default()).unwrap();
    println!("featurize: {:?} ({} vectors)", t.elapsed(), outcome.vectors.len());
    let vectors = outcome.vectors;

    let t = Instant::now();
    let plan = split_and_balance(&vectors, 0.8, 5, 7).unwrap();
    let train_refs: Vec<&_> = plan.balanced_train.iter().map(|&i| &vectors[i]).collect();
    let norm = fit_normalizer(&train_refs).unwrap();
    let rows: Vec<Vec<f64>> = plan
        .balanced_train
        .iter()
        .map(|&i| norm.apply(&vectors[i].values))
        .collect();
    let labels: Vec<usize> = plan
        .balanced_train
        .iter()
        .map(|&i| vectors[i].label.index())
        .collect();
    let mut counts = [0usize; 4];
    for v in &vectors {
        counts[v.label.index()] += 1;
    }
    println!(
        "prep: {:?} (balanced {} rows, dist {:?})",
        t.elapsed(),
        rows.len(),
        counts
    );
    let folds: Vec<Vec<usize>> = {
        let mut f = vec![Vec::new(); 5];
        for i in 0..rows.len() {
            f[i % 5].push(i);
        }
        f
    };

    let test_rows: Vec<Vec<f64>> = plan
        .test
        .iter()
        .map(|&i| norm.apply(&vectors[i].values))
        .collect();
    let test_labels: Vec<usize> = plan.test.iter().map(|&i| vectors[i].label.index()).collect();
    let accuracy = |pred: &[usize]| {
        pred.iter().zip(&test_labels).filter(|(p, t)| p == t).count() as f64
            / test_labels.len() as f64
    };
    let majority = test_labels.iter().filter(|&&l| l == 0).count() as f64 / test_labels.len() as f64;
    println!("majority-class baseline: {majority:.4}");

    // Full CNN training run.
    let spec = cnn_proposed(32);
    let tcfg = TrainingConfig {
        max_epochs: 20,
        patience: 4,
        seed: 7,
        ..TrainingConfig::default()
    };
    let t = Instant::now();
    let model = train(&spec, &rows, &labels, &folds, &tcfg).unwrap();
    let trained_epochs = model.training_log.len();
    let batch = traveldist_core::nn::Tensor::from_rows(&test_rows).unwrap();
    let (pred, _) = model.network.predict(&batch).unwrap();
    println!(
        "cnn c32: {:?} ({} epochs, test acc {:.4})",
        t.elapsed(),
        trained_epochs,
        accuracy(&pred)
    );

    // MLP, few epochs.
    let spec = mlp();
    let tcfg = TrainingConfig { max_epochs: 2, patience: 2, seed: 7, ..TrainingConfig::default() };
    let t = Instant::now();
    let model = train(&spec, &rows, &labels, &folds, &tcfg).unwrap();
    let (pred, _) = model.network.predict(&batch).unwrap();
    println!("mlp 2 epochs: {:?} (test acc {:.4})", t.elapsed(), accuracy(&pred));

    // Ablation set, shortened.
    for spec in build_ablation_set(32).iter().take(5) {
        let tcfg = TrainingConfig { max_epochs: 12, patience: 3, seed: 7, ..TrainingConfig::default() };
        let t = Instant::now();
        let model = train(spec, &rows, &labels, &folds, &tcfg).unwrap();
        let (pred, _) = model.network.predict(&batch).unwrap();
        println!(
            "{}: {:?} ({} epochs, test acc {:.4})",
            spec.name,
            t.elapsed(),
            model.training_log.len(),
            accuracy(&pred)
        );
    }

    // Conventional learners.
    let t = Instant::now();
    let lr = traveldist_core::baselines::train_logreg_ovr(&rows, &labels, &Default::default()).unwrap();
    let p = traveldist_core::baselines::predict(
        &traveldist_core::baselines::BaselineModel::Linear(lr),
        &test_rows,
    )
    .unwrap();
    println!("logreg: {:?} (test acc {:.4})", t.elapsed(), accuracy(&p.labels));

    let t = Instant::now();
    let fcfg = traveldist_core::baselines::ForestConfig { trees: 100, seed: 7, ..Default::default() };
    let f = traveldist_core::baselines::train_forest(&rows, &labels, &fcfg).unwrap();
    let p = traveldist_core::baselines::predict(
        &traveldist_core::baselines::BaselineModel::Forest(f),
        &test_rows,
    )
    .unwrap();
    println!("forest: {:?} (test acc {:.4})", t.elapsed(), accuracy(&p.labels));

    let t = Instant::now();
    let s = traveldist_core::baselines::train_svm_ovr(&rows, &labels, &Default::default()).unwrap();
    let p = traveldist_core::baselines::predict(
        &traveldist_core::baselines::BaselineModel::Linear(s),
        &test_rows,
    )
    .unwrap();
    println!("svm: {:?} (test acc {:.4})", t.elapsed(), accuracy(&p.labels));
}
