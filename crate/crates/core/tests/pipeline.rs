//! End-to-end flows over the synthetic generator: corpus round-trips,
//! exclusion accounting, preset guarantees, and the label distribution.

use std::collections::BTreeSet;

use traveldist_core::data_model::{
    apply_exclusions, load_corpus, write_raw_corpus, CorpusPaths, DistrictExclusion,
    PatientExclusion, ProviderExclusion, VisitExclusion,
};
use traveldist_core::dataset::{fit_normalizer, split_and_balance};
use traveldist_core::features::DecayConfig;
use traveldist_core::geo::DistanceLabel;
use traveldist_core::pipeline::featurize;
use traveldist_core::synth::{generate, SignalConfig, SynthConfig};

fn corpus_files() -> [&'static str; 7] {
    [
        "visits.csv",
        "patients.csv",
        "providers.csv",
        "districts.csv",
        "adjacency.csv",
        "calendar.csv",
        "codes.json",
    ]
}

#[test]
fn corpus_round_trips_byte_identically() {
    // A corpus in the thousand-visit range: write, load, write again, and
    // compare bytes.
    let mut cfg = SynthConfig::clean(11);
    cfg.patients = 160;
    let raw = generate(&cfg).unwrap();
    assert!(raw.visits.len() >= 1000, "only {} visits", raw.visits.len());

    let dir1 = tempfile::tempdir().unwrap();
    write_raw_corpus(&raw, dir1.path()).unwrap();
    let (loaded, issues) = load_corpus(&CorpusPaths::in_dir(dir1.path())).unwrap();
    assert!(issues.is_empty());
    assert_eq!(loaded, raw);

    let dir2 = tempfile::tempdir().unwrap();
    write_raw_corpus(&loaded, dir2.path()).unwrap();
    for name in corpus_files() {
        let a = std::fs::read(dir1.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} changed across a load/write cycle");
    }
}

#[test]
fn empty_visit_file_is_not_an_error() {
    let cfg = SynthConfig::clean(12);
    let mut raw = generate(&cfg).unwrap();
    raw.visits.clear();
    let dir = tempfile::tempdir().unwrap();
    write_raw_corpus(&raw, dir.path()).unwrap();
    let (loaded, issues) = load_corpus(&CorpusPaths::in_dir(dir.path())).unwrap();
    assert!(loaded.visits.is_empty());
    assert!(issues.is_empty());
}

#[test]
fn malformed_rows_are_collected_with_row_numbers() {
    let cfg = SynthConfig::clean(13);
    let raw = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_raw_corpus(&raw, dir.path()).unwrap();

    // Corrupt the second data row's date.
    let path = dir.path().join("visits.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(|l| l.to_string()).collect();
    let date_start = lines[2].find("20").unwrap();
    lines[2].replace_range(date_start..date_start + 10, "2011-13-40");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    let (loaded, issues) = load_corpus(&CorpusPaths::in_dir(dir.path())).unwrap();
    assert_eq!(issues.len(), 1);
    assert_eq!(issues[0].location, "visits.csv:2");
    assert!(issues[0].message.contains("2011-13-40"));
    assert_eq!(loaded.visits.len(), raw.visits.len() - 1);
}

#[test]
fn clean_preset_passes_exclusions_untouched() {
    let cfg = SynthConfig::clean(7);
    let raw = generate(&cfg).unwrap();
    let (corpus, report) = apply_exclusions(&raw, Some(&cfg.window));
    assert!(report.is_empty(), "unexpected exclusions: {report:?}");
    assert_eq!(corpus.visits.len(), raw.visits.len());
    assert_eq!(corpus.patients.len(), cfg.patients);

    // Idempotency: feeding the retained corpus back through the rules
    // changes nothing.
    let (again, second_report) = apply_exclusions(&corpus.to_raw(), Some(&cfg.window));
    assert!(second_report.is_empty());
    assert_eq!(again, corpus);
}

#[test]
fn exclusion_accounting_balances_per_entity_kind() {
    let cfg = SynthConfig::dirty(21);
    let raw = generate(&cfg).unwrap();
    let patients_in: BTreeSet<&str> =
        raw.patients.iter().map(|p| p.patient_id.as_str()).collect();
    let providers_in: BTreeSet<&str> =
        raw.providers.iter().map(|p| p.provider_id.as_str()).collect();
    let visits_in = raw.visits.len();

    let (corpus, report) = apply_exclusions(&raw, Some(&cfg.window));
    assert_eq!(
        corpus.patients.len() + report.patients_excluded(),
        patients_in.len()
    );
    assert_eq!(corpus.visits.len() + report.visits_excluded(), visits_in);
    assert_eq!(
        corpus.providers.len() + report.providers_excluded(),
        providers_in.len()
    );

    // Every retained visit resolves.
    for v in &corpus.visits {
        assert!(corpus.patients.contains_key(&v.patient_id));
        assert!(corpus.providers.contains_key(&v.provider_id));
    }
}

#[test]
fn dirty_preset_plants_every_exclusion_category() {
    let cfg = SynthConfig::dirty(5);
    let raw = generate(&cfg).unwrap();
    let (corpus, mut report) = apply_exclusions(&raw, Some(&cfg.window));
    let (_, outcome) = featurize(corpus, &DecayConfig::default()).unwrap();
    report.merge(&outcome.exclusions);

    use PatientExclusion::*;
    for cat in [
        ConflictingGender,
        MissingBirthdate,
        MissingGender,
        UnknownRegisteredDistrict,
        BirthdateAfterVisit,
        NoVisits,
        PorUndetermined,
    ] {
        assert!(
            report.patients.get(&cat).copied().unwrap_or(0) >= 1,
            "patient category {cat:?} not planted: {report:?}"
        );
    }
    use VisitExclusion::*;
    for cat in [
        MissingDate,
        OutsideStudyWindow,
        MissingPrimaryDiagnosis,
        UnresolvedProvider,
        UnresolvedPatient,
        PatientExcluded,
        NoAccessibility,
    ] {
        assert!(
            report.visits.get(&cat).copied().unwrap_or(0) >= 1,
            "visit category {cat:?} not planted: {report:?}"
        );
    }
    assert!(report.providers.get(&ProviderExclusion::UnknownDistrict).copied().unwrap_or(0) >= 1);
    assert!(
        report
            .districts
            .get(&DistrictExclusion::NoAccessibility)
            .copied()
            .unwrap_or(0)
            >= 1
    );
}

#[test]
fn default_preset_is_imbalanced_toward_near_travel() {
    let cfg = SynthConfig::default_preset(7);
    let raw = generate(&cfg).unwrap();
    assert!(raw.visits.len() >= 50_000, "only {} visits", raw.visits.len());

    let (corpus, report) = apply_exclusions(&raw, Some(&cfg.window));
    assert!(report.is_empty(), "default preset should be clean: {report:?}");
    let (_, outcome) = featurize(corpus, &DecayConfig::default()).unwrap();
    assert!(outcome.exclusions.is_empty());

    let mut counts = [0usize; 4];
    for v in &outcome.vectors {
        counts[v.label.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    let l0_share = counts[0] as f64 / total as f64;
    assert!(
        (0.60..=0.70).contains(&l0_share),
        "L0 share {l0_share:.3}, counts {counts:?}"
    );
    let max = *counts.iter().max().unwrap();
    let min = *counts.iter().min().unwrap();
    assert!(min > 0);
    assert!(max as f64 / min as f64 >= 3.0, "imbalance too mild: {counts:?}");
}

#[test]
fn null_signal_trains_to_chance_on_balanced_test() {
    // A compact grid keeps every class populated under uniform provider
    // choice, so the balanced test subset has substance. Everyone is type A
    // so the POR is the registered district and label noise cannot sneak in
    // through the residence estimate.
    let mut cfg = SynthConfig::clean(31);
    cfg.grid_rows = 6;
    cfg.grid_cols = 6;
    cfg.patients = 2400;
    cfg.type_a_share = 1.0;
    cfg.signal = SignalConfig::null();
    let raw = generate(&cfg).unwrap();
    let (corpus, _) = apply_exclusions(&raw, Some(&cfg.window));
    let (_, outcome) = featurize(corpus, &DecayConfig::default()).unwrap();
    let vectors = outcome.vectors;

    let plan = split_and_balance(&vectors, 0.8, 5, 31).unwrap();
    let train_refs: Vec<&_> = plan.balanced_train.iter().map(|&i| &vectors[i]).collect();
    let normalizer = fit_normalizer(&train_refs).unwrap();

    let train_rows: Vec<Vec<f64>> = plan
        .balanced_train
        .iter()
        .map(|&i| normalizer.apply(&vectors[i].values))
        .collect();
    let train_labels: Vec<usize> = plan
        .balanced_train
        .iter()
        .map(|&i| vectors[i].label.index())
        .collect();
    let model = traveldist_core::baselines::train_logreg_ovr(
        &train_rows,
        &train_labels,
        &traveldist_core::baselines::LogRegConfig::default(),
    )
    .unwrap();

    // Balance the test side by trimming every class to the smallest count.
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for &i in &plan.test {
        per_class[vectors[i].label.index()].push(i);
    }
    let min = per_class.iter().map(|c| c.len()).min().unwrap();
    assert!(min >= 40, "balanced test subset too small: {min}");
    let subset: Vec<usize> = per_class.iter().flat_map(|c| c[..min].iter().copied()).collect();

    let rows: Vec<Vec<f64>> = subset.iter().map(|&i| normalizer.apply(&vectors[i].values)).collect();
    let truth: Vec<usize> = subset.iter().map(|&i| vectors[i].label.index()).collect();
    let pred = traveldist_core::baselines::predict(
        &traveldist_core::baselines::BaselineModel::Linear(model),
        &rows,
    )
    .unwrap();
    let correct = pred.labels.iter().zip(&truth).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / truth.len() as f64;
    assert!(
        (accuracy - 0.25).abs() <= 0.08,
        "null-signal accuracy {accuracy:.3} strays from chance"
    );
}

#[test]
fn distance_label_shares_move_with_the_planted_signal() {
    // Sanity check that the signal actually shifts mass outward: silencing
    // it should collapse the far classes.
    let cfg = SynthConfig::clean(17);
    let raw = generate(&cfg).unwrap();
    let (corpus, _) = apply_exclusions(&raw, Some(&cfg.window));
    let (_, outcome) = featurize(corpus, &DecayConfig::default()).unwrap();
    let far_share = outcome
        .vectors
        .iter()
        .filter(|v| v.label >= DistanceLabel::L2)
        .count() as f64
        / outcome.vectors.len() as f64;
    assert!(far_share > 0.05, "far share {far_share:.3}");
}
