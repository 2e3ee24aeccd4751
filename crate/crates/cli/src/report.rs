//! Plot-data CSV emission and the Markdown run summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use traveldist_core::attribution::AttributionReport;
use traveldist_core::error::{CoreError, Result};
use traveldist_core::metrics::RocReport;

use crate::config::PipelineConfig;
use crate::stages::{self, ModelEvaluation, TABLE_VI_MODELS, TABLE_V_MODELS};

fn wr<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CoreError + '_ {
    move |e| CoreError::Validation(format!("write {}: {e}", path.display()))
}

/// Square named matrix as CSV: header row of names, then one row per name.
pub fn write_matrix_csv(path: &Path, names: &[String], matrix: &[Vec<f64>]) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(wr(path))?;
    for (name, row) in names.iter().zip(matrix) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(wr(path))?;
    }
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))?
        .iter()
        .skip(1)
        .map(|s| s.to_string())
        .collect();
    let mut matrix = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().skip(1).map(|v| v.parse::<f64>()).collect();
        matrix.push(row.map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))?);
    }
    Ok((names, matrix))
}

/// Per-class ROC points: class,fpr,tpr rows, sweep order.
pub fn write_roc_csv(path: &Path, roc: &RocReport) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["class", "fpr", "tpr"]).map_err(wr(path))?;
    for (class, curve) in roc.per_class.iter().enumerate() {
        for point in &curve.points {
            w.write_record([
                format!("L{class}"),
                point.fpr.to_string(),
                point.tpr.to_string(),
            ])
            .map_err(wr(path))?;
        }
    }
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub fn write_attribution_csv(path: &Path, attribution: &AttributionReport) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["feature", "mean_ig_weight"]).map_err(wr(path))?;
    for (name, weight) in &attribution.sorted_weights {
        w.write_record([name.as_str(), &weight.to_string()]).map_err(wr(path))?;
    }
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))
}

const TABLE_ROWS: [&str; 7] = [
    "auc",
    "accuracy",
    "f1",
    "sensitivity",
    "specificity",
    "precision",
    "accuracy_ovr_macro",
];

fn table_cell(evaluation: &ModelEvaluation, row: &str) -> String {
    let value = match row {
        "auc" => evaluation.roc.macro_auc.unwrap_or(f64::NAN),
        "accuracy" => evaluation.threshold.multiclass_accuracy,
        "f1" => evaluation.threshold.macro_f1,
        "sensitivity" => evaluation.threshold.macro_sensitivity,
        "specificity" => evaluation.threshold.macro_specificity,
        "precision" => evaluation.threshold.macro_precision,
        "accuracy_ovr_macro" => evaluation.threshold.macro_accuracy,
        _ => f64::NAN,
    };
    format!("{value:.4}")
}

/// Metric-by-model comparison table; absent models leave empty cells.
pub fn write_comparison_table(
    path: &Path,
    models: &[&str],
    evaluations: &BTreeMap<String, ModelEvaluation>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["metric".to_string()];
    header.extend(models.iter().map(|m| m.to_string()));
    w.write_record(&header).map_err(wr(path))?;
    for row in TABLE_ROWS {
        let mut record = vec![row.to_string()];
        for model in models {
            record.push(
                evaluations
                    .get(*model)
                    .map(|e| table_cell(e, row))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&record).map_err(wr(path))?;
    }
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Builds the report directory: heatmap matrix, ROC copies, ablation trend,
/// attribution bars, and the Markdown summary.
pub fn build_report(cfg: &PipelineConfig, out: &Path, report_dir: &Path) -> Result<()> {
    // Heatmap: the 25 features plus the continuous distance (the level form
    // is kept in prep/pearson.csv for anyone who wants it).
    let (names, matrix) = stages::load_pearson(out)?;
    let keep: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.as_str() != "distance_level")
        .map(|(i, _)| i)
        .collect();
    let heat_names: Vec<String> = keep.iter().map(|&i| names[i].clone()).collect();
    let heat: Vec<Vec<f64>> = keep
        .iter()
        .map(|&i| keep.iter().map(|&j| matrix[i][j]).collect())
        .collect();
    write_matrix_csv(&report_dir.join("heatmap.csv"), &heat_names, &heat)?;

    // ROC copies for the plotting directory.
    let eval_dir = out.join("evaluate");
    let mut evaluated: Vec<String> = Vec::new();
    for name in TABLE_V_MODELS.iter().chain(TABLE_VI_MODELS.iter()) {
        let src = eval_dir.join(format!("roc_{name}.csv"));
        if src.exists() && !evaluated.contains(&name.to_string()) {
            std::fs::copy(&src, report_dir.join(format!("roc_{name}.csv")))
                .map_err(|e| CoreError::io(src.display().to_string(), e))?;
            evaluated.push(name.to_string());
        }
    }

    // Ablation trend, shallowest to deepest.
    {
        let path = report_dir.join("ablation_trend.csv");
        let file = File::create(&path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["architecture", "accuracy", "macro_auc", "macro_f1"])
            .map_err(wr(&path))?;
        for name in TABLE_VI_MODELS {
            if let Ok(evaluation) = stages::load_evaluation(out, name) {
                w.write_record([
                    name.to_string(),
                    format!("{:.4}", evaluation.threshold.multiclass_accuracy),
                    format!("{:.4}", evaluation.roc.macro_auc.unwrap_or(f64::NAN)),
                    format!("{:.4}", evaluation.threshold.macro_f1),
                ])
                .map_err(wr(&path))?;
            }
        }
        w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))?;
    }

    // Attribution bars.
    if let Ok(attribution) = stages::load_attribution(out) {
        write_attribution_csv(&report_dir.join("ig_bars.csv"), &attribution)?;
    }

    write_summary(cfg, out, report_dir, &evaluated)
}

fn write_summary(
    cfg: &PipelineConfig,
    out: &Path,
    report_dir: &Path,
    evaluated: &[String],
) -> Result<()> {
    let mut text = String::new();
    let push = |text: &mut String, line: &str| {
        text.push_str(line);
        text.push('\n');
    };

    push(&mut text, "# Travel-distance pipeline run summary");
    push(&mut text, "");
    push(&mut text, &format!("- root seed: {}", cfg.seed));
    push(
        &mut text,
        &format!("- synth preset: {}", cfg.synth.preset),
    );

    let exclusions = stages::cumulative_exclusions(out)?;
    push(&mut text, "");
    push(&mut text, "## Exclusions");
    push(
        &mut text,
        &format!(
            "- patients {} / visits {} / providers {} / districts {}",
            exclusions.patients_excluded(),
            exclusions.visits_excluded(),
            exclusions.providers_excluded(),
            exclusions.districts_excluded()
        ),
    );
    for (category, count) in &exclusions.patients {
        push(&mut text, &format!("  - patient {category:?}: {count}"));
    }
    for (category, count) in &exclusions.visits {
        push(&mut text, &format!("  - visit {category:?}: {count}"));
    }

    if let Ok(pearson) = stages::load_pearson_result(out) {
        push(&mut text, "");
        push(
            &mut text,
            &format!(
                "## Correlated feature pairs beyond +-{}",
                cfg.dataset.correlation_flag
            ),
        );
        if pearson.flagged.is_empty() {
            push(&mut text, "- none");
        }
        for (a, b, r) in &pearson.flagged {
            push(&mut text, &format!("- {a} / {b}: r = {r:.3}"));
        }
    }

    push(&mut text, "");
    push(&mut text, "## Model configurations evaluated");
    push(
        &mut text,
        "| model | accuracy | macro AUC | macro F1 | sensitivity | specificity | precision |",
    );
    push(&mut text, "|---|---|---|---|---|---|---|");
    let mut listed = 0;
    for name in TABLE_V_MODELS
        .iter()
        .chain(TABLE_VI_MODELS.iter().filter(|n| **n != "cnn_proposed"))
    {
        if !evaluated.contains(&name.to_string()) {
            continue;
        }
        let e = stages::load_evaluation(out, name)?;
        push(
            &mut text,
            &format!(
                "| {name} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                e.threshold.multiclass_accuracy,
                e.roc.macro_auc.unwrap_or(f64::NAN),
                e.threshold.macro_f1,
                e.threshold.macro_sensitivity,
                e.threshold.macro_specificity,
                e.threshold.macro_precision,
            ),
        );
        listed += 1;
    }
    push(&mut text, "");
    push(
        &mut text,
        &format!("{listed} model configurations evaluated."),
    );

    if let Ok(attribution) = stages::load_attribution(out) {
        push(&mut text, "");
        push(&mut text, "## Integrated Gradients (CNN)");
        push(
            &mut text,
            &format!(
                "- source: {}; steps m = {}; baseline: zeros; target: predicted class",
                attribution.sample_source, attribution.steps
            ),
        );
        push(
            &mut text,
            &format!(
                "- completeness residual: mean {:.2e}, max {:.2e}",
                attribution.mean_abs_completeness_residual,
                attribution.max_abs_completeness_residual
            ),
        );
        push(&mut text, "");
        push(&mut text, "| feature | mean IG weight |");
        push(&mut text, "|---|---|");
        for (name, weight) in &attribution.sorted_weights {
            push(&mut text, &format!("| {name} | {weight:.5} |"));
        }
    }

    let path = report_dir.join("summary.md");
    std::fs::write(&path, text).map_err(|e| CoreError::io(path.display().to_string(), e))
}
