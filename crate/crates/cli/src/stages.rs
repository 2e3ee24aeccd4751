//! The pipeline stages. Every stage reads upstream artifacts from disk and
//! writes its own directory, so any stage can be re-run after deleting its
//! output and the results are bit-identical for a given config and seed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use traveldist_core::attribution::{attribute_dataset, AttributionReport, BaselinePolicy};
use traveldist_core::baselines::{
    load_baseline, predict, save_baseline, train_forest, train_logreg_ovr, train_svm_ovr,
    BaselineModel,
};
use traveldist_core::data_model::{
    apply_exclusions, load_corpus, write_raw_corpus, Corpus, CorpusPaths, ExclusionReport,
};
use traveldist_core::dataset::{
    fit_normalizer, pca_apply, pca_fit, pearson_matrix, split_and_balance, FeatureVector,
    Normalizer, PcaProjection, PearsonResult, SplitPlan, FEATURE_COUNT, FEATURE_NAMES,
};
use traveldist_core::error::{CoreError, Result};
use traveldist_core::geo::{DistanceLabel, PorRule};
use traveldist_core::metrics::{basic_metrics, confusion, roc_auc_ovr, MetricsReport, RocReport};
use traveldist_core::nn::{
    build_ablation_set, cnn_proposed, load_model, mlp, save_model, train, Tensor, TrainedModel,
};
use traveldist_core::pipeline::{build_vectors, resolve_residence};
use traveldist_core::synth::generate;

use crate::config::PipelineConfig;
use crate::manifest::{digest_file, RunManifest};
use crate::report;

/// Table V column order: the six conventional configurations, then the two
/// deep models.
pub const TABLE_V_MODELS: [&str; 8] = [
    "ra", "ra_pca", "rf", "rf_pca", "svm", "svm_pca", "mlp", "cnn_proposed",
];

/// Table VI column order, shallowest ablation first.
pub const TABLE_VI_MODELS: [&str; 6] = [
    "conv1_fco",
    "conv2_fco",
    "conv3_fco",
    "conv4_fco",
    "conv4_fc1_fco",
    "cnn_proposed",
];

fn require(path: &Path, stage: &str, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CoreError::Contract(format!(
            "stage {stage}: missing upstream artifact {} (run `{produced_by}` first)",
            path.display()
        )))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CoreError::Validation(format!("serialize {}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| CoreError::io(path.display().to_string(), e))?;
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Writes feature vectors as CSV in the documented column order.
fn write_vectors(path: &Path, vectors: &[FeatureVector]) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["visit_id".to_string()];
    header.extend(FEATURE_NAMES.iter().map(|n| n.to_string()));
    header.push("km".to_string());
    header.push("label".to_string());
    w.write_record(&header)
        .map_err(|e| CoreError::Validation(format!("write {}: {e}", path.display())))?;
    for v in vectors {
        let mut record = vec![v.visit_id.clone()];
        record.extend(v.values.iter().map(|x| x.to_string()));
        record.push(v.km.to_string());
        record.push(v.label.as_str().to_string());
        w.write_record(&record)
            .map_err(|e| CoreError::Validation(format!("write {}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))
}

fn parse_label(s: &str) -> Result<DistanceLabel> {
    DistanceLabel::ALL
        .iter()
        .copied()
        .find(|l| l.as_str() == s)
        .ok_or_else(|| CoreError::Validation(format!("unknown label {s:?}")))
}

pub fn read_vectors(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut vectors = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CoreError::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        let bad = |msg: &str| CoreError::parse(format!("{}:{}", path.display(), i + 1), msg.to_string());
        if record.len() != FEATURE_COUNT + 3 {
            return Err(bad("wrong column count"));
        }
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        for j in 0..FEATURE_COUNT {
            values.push(
                record[j + 1]
                    .parse::<f64>()
                    .map_err(|_| bad("bad feature value"))?,
            );
        }
        vectors.push(FeatureVector {
            visit_id: record[0].to_string(),
            values,
            km: record[FEATURE_COUNT + 1]
                .parse()
                .map_err(|_| bad("bad km value"))?,
            label: parse_label(&record[FEATURE_COUNT + 2])?,
        });
    }
    Ok(vectors)
}

/// Loads a retained-corpus directory. The exclusion rules are a verified
/// no-op on re-load.
fn load_retained(dir: &Path) -> Result<Corpus> {
    let (raw, issues) = load_corpus(&CorpusPaths::in_dir(dir))?;
    if !issues.is_empty() {
        return Err(CoreError::Validation(format!(
            "retained corpus at {} has parse issues; artifacts are corrupt",
            dir.display()
        )));
    }
    let (corpus, report) = apply_exclusions(&raw, None);
    if !report.is_empty() {
        return Err(CoreError::Validation(format!(
            "retained corpus at {} did not survive a re-load: {report:?}",
            dir.display()
        )));
    }
    Ok(corpus)
}

fn finish_stage(
    out: &Path,
    cfg: &PipelineConfig,
    name: &str,
    started: Instant,
    artifacts: Vec<PathBuf>,
) -> Result<()> {
    let mut manifest = RunManifest::load_or_new(out, &cfg.canonical_json(), cfg.seed)?;
    manifest.record_stage(name, started.elapsed().as_secs_f64(), artifacts);
    manifest.save(out)
}

fn write_config_copy(out: &Path, cfg: &PipelineConfig) -> Result<()> {
    mkdir(out)?;
    let path = out.join("config.json");
    std::fs::write(&path, cfg.canonical_json() + "\n")
        .map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub fn run_synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    write_config_copy(out, cfg)?;
    let corpus_dir = out.join("corpus");
    mkdir(&corpus_dir)?;
    let synth_cfg = cfg.synth_config()?;
    let raw = generate(&synth_cfg)?;
    write_raw_corpus(&raw, &corpus_dir)?;
    finish_stage(out, cfg, "synth", started, vec![corpus_dir])
}

pub fn run_ingest(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    write_config_copy(out, cfg)?;
    let corpus_dir = out.join("corpus");
    require(&corpus_dir.join("visits.csv"), "ingest", "synth")?;

    let ingest_dir = out.join("ingest");
    mkdir(&ingest_dir)?;

    let paths = CorpusPaths::in_dir(&corpus_dir);
    let (raw, issues) = load_corpus(&paths)?;
    let window = cfg.effective_window()?;
    let (corpus, exclusions) = apply_exclusions(&raw, Some(&window));

    let retained_dir = ingest_dir.join("retained");
    write_raw_corpus(&corpus.to_raw(), &retained_dir)?;
    write_json(&ingest_dir.join("parse_issues.json"), &issues)?;
    write_json(&ingest_dir.join("exclusion_report.json"), &exclusions)?;

    // Input digests go into the manifest.
    let mut manifest = RunManifest::load_or_new(out, &cfg.canonical_json(), cfg.seed)?;
    for file in [
        &paths.visits,
        &paths.patients,
        &paths.providers,
        &paths.districts,
        &paths.adjacency,
        &paths.calendar,
        &paths.codes,
    ] {
        if file.exists() {
            let name = file.file_name().unwrap().to_string_lossy().into_owned();
            manifest.input_digests.insert(name, digest_file(file)?);
        }
    }
    manifest.save(out)?;

    finish_stage(out, cfg, "ingest", started, vec![ingest_dir])
}

pub fn run_por(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let retained = out.join("ingest").join("retained");
    require(&retained.join("visits.csv"), "por", "ingest")?;

    let por_dir = out.join("por");
    mkdir(&por_dir)?;

    let corpus = load_retained(&retained)?;
    let (corpus, outcome) = resolve_residence(corpus, &cfg.decay)?;

    write_raw_corpus(&corpus.to_raw(), &por_dir.join("retained"))?;
    write_json(&por_dir.join("exclusion_report.json"), &outcome.exclusions)?;

    let path = por_dir.join("assignments.csv");
    let file = File::create(&path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["patient_id", "por_district", "rule"])
        .map_err(|e| CoreError::Validation(format!("write assignments: {e}")))?;
    for a in &outcome.assignments {
        let rule = match a.rule_used {
            PorRule::TypeA => "type_A",
            PorRule::FluResp => "flu_resp",
            PorRule::Emergency => "emergency",
            PorRule::Undetermined => "undetermined",
        };
        w.write_record([
            a.patient_id.as_str(),
            a.por_district.as_deref().unwrap_or(""),
            rule,
        ])
        .map_err(|e| CoreError::Validation(format!("write assignments: {e}")))?;
    }
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))?;

    let path = por_dir.join("acc_index.csv");
    let file = File::create(&path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["district_id", "acc_index"])
        .map_err(|e| CoreError::Validation(format!("write acc index: {e}")))?;
    for (district, score) in &outcome.acc {
        w.write_record([district.as_str(), &score.to_string()])
            .map_err(|e| CoreError::Validation(format!("write acc index: {e}")))?;
    }
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))?;

    finish_stage(out, cfg, "por", started, vec![por_dir])
}

fn read_assignments(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut map = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))?;
        if !record[1].is_empty() {
            map.insert(record[0].to_string(), record[1].to_string());
        }
    }
    Ok(map)
}

pub fn run_featurize(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let por_dir = out.join("por");
    require(&por_dir.join("retained").join("visits.csv"), "featurize", "por")?;
    require(&por_dir.join("assignments.csv"), "featurize", "por")?;

    let features_dir = out.join("features");
    mkdir(&features_dir)?;

    let corpus = load_retained(&por_dir.join("retained"))?;
    let por = read_assignments(&por_dir.join("assignments.csv"))?;
    let por: BTreeMap<String, String> = por
        .into_iter()
        .filter(|(id, _)| corpus.patients.contains_key(id))
        .collect();
    let (_computation, vectors) = build_vectors(&corpus, &por, &cfg.decay)?;
    write_vectors(&features_dir.join("features.csv"), &vectors)?;

    finish_stage(out, cfg, "featurize", started, vec![features_dir])
}

pub fn run_prep(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let features_path = out.join("features").join("features.csv");
    require(&features_path, "prep", "featurize")?;

    let prep_dir = out.join("prep");
    mkdir(&prep_dir)?;

    let vectors = read_vectors(&features_path)?;
    let plan = split_and_balance(
        &vectors,
        cfg.dataset.train_fraction,
        cfg.dataset.folds,
        cfg.derive_seed("split"),
    )?;

    let train_refs: Vec<&FeatureVector> = plan.train.iter().map(|&i| &vectors[i]).collect();
    let normalizer = fit_normalizer(&train_refs)?;

    let normalized: Vec<FeatureVector> = normalizer.apply_all(&vectors);
    let train_rows: Vec<FeatureVector> = plan.train.iter().map(|&i| normalized[i].clone()).collect();
    let test_rows: Vec<FeatureVector> = plan.test.iter().map(|&i| normalized[i].clone()).collect();
    let balanced_rows: Vec<FeatureVector> =
        plan.balanced_train.iter().map(|&i| normalized[i].clone()).collect();

    write_vectors(&prep_dir.join("train.csv"), &train_rows)?;
    write_vectors(&prep_dir.join("test.csv"), &test_rows)?;
    write_vectors(&prep_dir.join("balanced_train.csv"), &balanced_rows)?;
    write_json(&prep_dir.join("split_plan.json"), &plan)?;
    write_json(&prep_dir.join("normalizer.json"), &normalizer)?;

    // Correlation analysis over the raw columns plus both forms of the
    // distance target.
    let mut columns: Vec<(String, Vec<f64>)> = FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            (
                name.to_string(),
                vectors.iter().map(|v| v.values[j]).collect(),
            )
        })
        .collect();
    columns.push(("distance_km".into(), vectors.iter().map(|v| v.km).collect()));
    columns.push((
        "distance_level".into(),
        vectors.iter().map(|v| v.label.index() as f64).collect(),
    ));
    let pearson = pearson_matrix(&columns, cfg.dataset.correlation_flag)?;
    report::write_matrix_csv(&prep_dir.join("pearson.csv"), &pearson.names, &pearson.matrix)?;
    write_json(&prep_dir.join("flagged_pairs.json"), &pearson.flagged)?;

    // PCA is fit on the balanced training rows; the conventional branch
    // applies it at train/evaluate time.
    let balanced_values: Vec<Vec<f64>> =
        balanced_rows.iter().map(|v| v.values.clone()).collect();
    let projection = pca_fit(&balanced_values, cfg.dataset.pca_variance_target)?;
    write_json(&prep_dir.join("pca.json"), &projection)?;

    finish_stage(out, cfg, "prep", started, vec![prep_dir])
}

struct PrepData {
    balanced_rows: Vec<Vec<f64>>,
    balanced_labels: Vec<usize>,
    folds: Vec<Vec<usize>>,
    projection: PcaProjection,
}

fn load_prep(out: &Path, stage: &str) -> Result<PrepData> {
    let prep_dir = out.join("prep");
    require(&prep_dir.join("balanced_train.csv"), stage, "prep")?;
    let balanced = read_vectors(&prep_dir.join("balanced_train.csv"))?;
    let plan: SplitPlan = read_json(&prep_dir.join("split_plan.json"))?;
    let projection: PcaProjection = read_json(&prep_dir.join("pca.json"))?;

    // Fold indices in the plan refer to the full vector list; remap them to
    // positions inside the balanced file.
    let position: BTreeMap<usize, usize> = plan
        .balanced_train
        .iter()
        .enumerate()
        .map(|(pos, &orig)| (orig, pos))
        .collect();
    let folds: Vec<Vec<usize>> = plan
        .folds
        .iter()
        .map(|fold| fold.iter().map(|orig| position[orig]).collect())
        .collect();

    Ok(PrepData {
        balanced_rows: balanced.iter().map(|v| v.values.clone()).collect(),
        balanced_labels: balanced.iter().map(|v| v.label.index()).collect(),
        folds,
        projection,
    })
}

fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

fn train_deep(
    cfg: &PipelineConfig,
    out: &Path,
    prep: &PrepData,
    which: &str,
) -> Result<Vec<String>> {
    let dir = models_dir(out);
    mkdir(&dir)?;
    let mut trained = Vec::new();

    let mut jobs: Vec<(traveldist_core::nn::ArchitectureSpec, traveldist_core::nn::TrainingConfig)> =
        Vec::new();
    match which {
        "cnn" => {
            let spec = cnn_proposed(cfg.training.conv_channels);
            let tc = cfg
                .training
                .cnn
                .apply(cfg.training.base(cfg.derive_seed("train:cnn_proposed")));
            jobs.push((spec, tc));
        }
        "mlp" => {
            let spec = mlp();
            let tc = cfg
                .training
                .mlp
                .apply(cfg.training.base(cfg.derive_seed("train:mlp")));
            jobs.push((spec, tc));
        }
        "ablation" => {
            // The proposed architecture is trained by `cnn`; the ablation
            // stage covers the five shallower variants.
            for spec in build_ablation_set(cfg.training.conv_channels) {
                if spec.name == "cnn_proposed" {
                    continue;
                }
                let tc = cfg
                    .training
                    .ablation
                    .apply(cfg.training.base(cfg.derive_seed(&format!("train:{}", spec.name))));
                jobs.push((spec, tc));
            }
        }
        other => return Err(CoreError::Contract(format!("unknown deep target {other:?}"))),
    }

    for (spec, tc) in jobs {
        let model = train(
            &spec,
            &prep.balanced_rows,
            &prep.balanced_labels,
            &prep.folds,
            &tc,
        )?;
        save_model(&model, &dir.join(&spec.name))?;
        trained.push(spec.name.clone());
    }
    Ok(trained)
}

fn train_conventional(
    cfg: &PipelineConfig,
    out: &Path,
    prep: &PrepData,
    which: &str,
) -> Result<Vec<String>> {
    let dir = models_dir(out);
    mkdir(&dir)?;
    let reduced_rows = pca_apply(&prep.projection, &prep.balanced_rows);
    let mut trained = Vec::new();

    let mut save = |name: &str, model: BaselineModel| -> Result<()> {
        save_baseline(&model, &dir.join(format!("{name}.json")))?;
        trained.push(name.to_string());
        Ok(())
    };

    match which {
        "logreg" => {
            save(
                "ra",
                BaselineModel::Linear(train_logreg_ovr(
                    &prep.balanced_rows,
                    &prep.balanced_labels,
                    &cfg.baselines.logreg,
                )?),
            )?;
            save(
                "ra_pca",
                BaselineModel::Linear(train_logreg_ovr(
                    &reduced_rows,
                    &prep.balanced_labels,
                    &cfg.baselines.logreg,
                )?),
            )?;
        }
        "forest" => {
            save(
                "rf",
                BaselineModel::Forest(train_forest(
                    &prep.balanced_rows,
                    &prep.balanced_labels,
                    &cfg.baselines.forest.with_seed(cfg.derive_seed("train:rf")),
                )?),
            )?;
            save(
                "rf_pca",
                BaselineModel::Forest(train_forest(
                    &reduced_rows,
                    &prep.balanced_labels,
                    &cfg.baselines.forest.with_seed(cfg.derive_seed("train:rf_pca")),
                )?),
            )?;
        }
        "svm" => {
            save(
                "svm",
                BaselineModel::Linear(train_svm_ovr(
                    &prep.balanced_rows,
                    &prep.balanced_labels,
                    &cfg.baselines.svm,
                )?),
            )?;
            save(
                "svm_pca",
                BaselineModel::Linear(train_svm_ovr(
                    &reduced_rows,
                    &prep.balanced_labels,
                    &cfg.baselines.svm,
                )?),
            )?;
        }
        other => return Err(CoreError::Contract(format!("unknown conventional target {other:?}"))),
    }
    Ok(trained)
}

pub fn run_train(cfg: &PipelineConfig, out: &Path, arch: &str) -> Result<()> {
    let started = Instant::now();
    let prep = load_prep(out, "train")?;

    let mut trained = Vec::new();
    match arch {
        "cnn" | "mlp" | "ablation" => trained.extend(train_deep(cfg, out, &prep, arch)?),
        "logreg" | "forest" | "svm" => {
            trained.extend(train_conventional(cfg, out, &prep, arch)?)
        }
        "all" => {
            for which in ["logreg", "forest", "svm"] {
                trained.extend(train_conventional(cfg, out, &prep, which)?);
            }
            for which in ["cnn", "mlp", "ablation"] {
                trained.extend(train_deep(cfg, out, &prep, which)?);
            }
        }
        other => {
            return Err(CoreError::Contract(format!(
                "unknown train target {other:?} (expected cnn, mlp, ablation, logreg, forest, svm, or all)"
            )))
        }
    }

    let artifacts = trained
        .iter()
        .map(|name| models_dir(out).join(format!("{name}.json")))
        .collect();
    finish_stage(out, cfg, &format!("train:{arch}"), started, artifacts)
}

/// Predictions for one model over normalized test rows.
fn model_predictions(
    out: &Path,
    name: &str,
    rows: &[Vec<f64>],
    projection: &PcaProjection,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let dir = models_dir(out);
    let is_deep = matches!(name, "mlp" | "cnn_proposed") || name.starts_with("conv");
    if is_deep {
        let model = load_model(&dir.join(name))?;
        let mut labels = Vec::with_capacity(rows.len());
        let mut scores = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(512) {
            let batch = Tensor::from_rows(chunk)?;
            let (pred, probs) = model.network.predict(&batch)?;
            labels.extend(pred);
            scores.extend(probs.data.chunks(4).map(|c| c.to_vec()));
        }
        Ok((labels, scores))
    } else {
        let model = load_baseline(&dir.join(format!("{name}.json")))?;
        let rows_for_model: Vec<Vec<f64>> = if name.ends_with("_pca") {
            pca_apply(projection, rows)
        } else {
            rows.to_vec()
        };
        let prediction = predict(&model, &rows_for_model)?;
        Ok((prediction.labels, prediction.scores))
    }
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub threshold: MetricsReport,
    pub roc: RocSummary,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct RocSummary {
    pub per_class_auc: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
}

fn evaluate_model(
    out: &Path,
    name: &str,
    rows: &[Vec<f64>],
    truth: &[DistanceLabel],
    projection: &PcaProjection,
    eval_dir: &Path,
) -> Result<ModelEvaluation> {
    let (pred_indices, scores) = model_predictions(out, name, rows, projection)?;
    let predicted: Vec<DistanceLabel> = pred_indices
        .iter()
        .map(|&i| DistanceLabel::from_index(i).unwrap())
        .collect();
    let threshold = basic_metrics(&confusion(truth, &predicted)?)?;
    let roc: RocReport = roc_auc_ovr(truth, &scores)?;
    report::write_roc_csv(&eval_dir.join(format!("roc_{name}.csv")), &roc)?;
    let evaluation = ModelEvaluation {
        model: name.to_string(),
        threshold,
        roc: RocSummary {
            per_class_auc: roc.per_class.iter().map(|c| c.auc).collect(),
            macro_auc: roc.macro_auc,
        },
    };
    write_json(&eval_dir.join(format!("metrics_{name}.json")), &evaluation)?;
    Ok(evaluation)
}

pub fn run_evaluate(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let prep_dir = out.join("prep");
    require(&prep_dir.join("test.csv"), "evaluate", "prep")?;
    let dir = models_dir(out);
    require(&dir, "evaluate", "train")?;

    let eval_dir = out.join("evaluate");
    mkdir(&eval_dir)?;

    let test = read_vectors(&prep_dir.join("test.csv"))?;
    let rows: Vec<Vec<f64>> = test.iter().map(|v| v.values.clone()).collect();
    let truth: Vec<DistanceLabel> = test.iter().map(|v| v.label).collect();
    let projection: PcaProjection = read_json(&prep_dir.join("pca.json"))?;

    let mut evaluations: BTreeMap<String, ModelEvaluation> = BTreeMap::new();
    let all_names: Vec<&str> = TABLE_V_MODELS
        .iter()
        .chain(TABLE_VI_MODELS.iter())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for name in all_names {
        let json = dir.join(format!("{name}.json"));
        if !json.exists() {
            continue;
        }
        let evaluation = evaluate_model(out, name, &rows, &truth, &projection, &eval_dir)?;
        evaluations.insert(name.to_string(), evaluation);
    }
    if evaluations.is_empty() {
        return Err(CoreError::Contract(
            "stage evaluate: no trained models found (run `train` first)".into(),
        ));
    }

    report::write_comparison_table(&eval_dir.join("table_v.csv"), &TABLE_V_MODELS, &evaluations)?;
    report::write_comparison_table(&eval_dir.join("table_vi.csv"), &TABLE_VI_MODELS, &evaluations)?;

    // Validation-side summary from the deep models' training logs, next to
    // the test-side tables.
    let mut validation: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    for name in ["mlp", "cnn_proposed"]
        .iter()
        .chain(TABLE_VI_MODELS.iter())
    {
        let stem = dir.join(name);
        if stem.with_extension("json").exists() && stem.with_extension("bin").exists() {
            let model: TrainedModel = load_model(&stem)?;
            let best = model
                .training_log
                .iter()
                .map(|r| r.rolling_mean_f1)
                .fold(f64::NEG_INFINITY, f64::max);
            validation.insert(
                name.to_string(),
                serde_json::json!({
                    "epochs": model.training_log.len(),
                    "best_rolling_validation_macro_f1": if best.is_finite() { Some(best) } else { None },
                }),
            );
        }
    }
    write_json(&eval_dir.join("validation_summary.json"), &validation)?;

    finish_stage(out, cfg, "evaluate", started, vec![eval_dir])
}

pub fn run_explain(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let prep_dir = out.join("prep");
    let model_stem = models_dir(out).join("cnn_proposed");
    require(&model_stem.with_extension("json"), "explain", "train cnn")?;

    let explain_dir = out.join("explain");
    mkdir(&explain_dir)?;

    let source_file = match cfg.attribution.source.as_str() {
        "test" => "test.csv",
        "train" => "train.csv",
        "balanced_train" => "balanced_train.csv",
        other => {
            return Err(CoreError::Config(format!(
                "unknown attribution source {other:?}"
            )))
        }
    };
    let path = prep_dir.join(source_file);
    require(&path, "explain", "prep")?;
    let vectors = read_vectors(&path)?;

    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.derive_seed("attribution"));
    order.shuffle(&mut rng);
    order.truncate(cfg.attribution.samples);
    order.sort_unstable();
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| vectors[i].values.clone()).collect();

    let model = load_model(&model_stem)?;
    let names: Vec<String> = FEATURE_NAMES.iter().map(|n| n.to_string()).collect();
    let attribution = attribute_dataset(
        &model.network,
        &rows,
        &names,
        &BaselinePolicy::Zeros,
        cfg.attribution.steps,
        &format!("{} ({} samples)", cfg.attribution.source, rows.len()),
    )?;
    write_json(&explain_dir.join("attribution.json"), &attribution)?;
    report::write_attribution_csv(&explain_dir.join("attribution.csv"), &attribution)?;

    finish_stage(out, cfg, "explain", started, vec![explain_dir])
}

pub fn run_report(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let eval_dir = out.join("evaluate");
    require(&eval_dir.join("table_v.csv"), "report", "evaluate")?;

    let report_dir = out.join("report");
    mkdir(&report_dir)?;
    report::build_report(cfg, out, &report_dir)?;

    finish_stage(out, cfg, "report", started, vec![report_dir])
}

pub fn run_all(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    run_synth(cfg, out)?;
    run_ingest(cfg, out)?;
    run_por(cfg, out)?;
    run_featurize(cfg, out)?;
    run_prep(cfg, out)?;
    run_train(cfg, out, "all")?;
    run_evaluate(cfg, out)?;
    run_explain(cfg, out)?;
    run_report(cfg, out)
}

/// Cumulative exclusion report across ingest and por, for the summary.
pub fn cumulative_exclusions(out: &Path) -> Result<ExclusionReport> {
    let mut total = ExclusionReport::default();
    for stage in ["ingest", "por"] {
        let path = out.join(stage).join("exclusion_report.json");
        if path.exists() {
            let report: ExclusionReport = read_json(&path)?;
            total.merge(&report);
        }
    }
    Ok(total)
}

pub use self::read_vectors as load_feature_csv;

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct FlaggedPair(pub String, pub String, pub f64);

pub fn load_pearson(out: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    report::read_matrix_csv(&out.join("prep").join("pearson.csv"))
}

pub fn load_pearson_result(out: &Path) -> Result<PearsonResult> {
    let (names, matrix) = load_pearson(out)?;
    let flagged: Vec<(String, String, f64)> =
        read_json(&out.join("prep").join("flagged_pairs.json"))?;
    Ok(PearsonResult {
        names,
        matrix,
        flagged,
        degenerate: Vec::new(),
    })
}

pub fn load_normalizer(out: &Path) -> Result<Normalizer> {
    read_json(&out.join("prep").join("normalizer.json"))
}

pub fn load_evaluation(out: &Path, model: &str) -> Result<ModelEvaluation> {
    read_json(&out.join("evaluate").join(format!("metrics_{model}.json")))
}

pub fn load_attribution(out: &Path) -> Result<AttributionReport> {
    read_json(&out.join("explain").join("attribution.json"))
}
