//! Corpus-to-dataset orchestration shared by the CLI stages and the test
//! suites: accessibility flagging, the POR cascade, the exclusion sweeps
//! they trigger, and feature-vector assembly.

use std::collections::{BTreeMap, BTreeSet};

use crate::data_model::{
    exclude_no_accessibility, exclude_patients, Corpus, ExclusionReport, PatientExclusion,
};
use crate::dataset::{assemble, FeatureVector};
use crate::error::Result;
use crate::features::{acc_index, compute_features, DecayConfig, FeatureComputation};
use crate::geo::{estimate_por_all, PorAssignment, PorRule};

pub struct ResidenceOutcome {
    pub assignments: Vec<PorAssignment>,
    /// patient id -> POR district, retained patients only.
    pub por: BTreeMap<String, String>,
    /// Accessibility scores per district (0 = flagged and excluded).
    pub acc: BTreeMap<String, f64>,
    /// Exclusions triggered here: no-accessibility districts first, then
    /// undetermined POR, on top of whatever ingest already removed.
    pub exclusions: ExclusionReport,
}

/// Flags districts with no reachable supply, removes their visits, then runs
/// the POR cascade on what is left and drops undetermined patients.
pub fn resolve_residence(
    mut corpus: Corpus,
    decay: &DecayConfig,
) -> Result<(Corpus, ResidenceOutcome)> {
    let mut exclusions = ExclusionReport::default();

    let acc = acc_index(&corpus.districts, decay)?;
    let flagged: BTreeSet<String> = acc
        .iter()
        .filter(|(_, score)| **score == 0.0)
        .map(|(id, _)| id.clone())
        .collect();
    if !flagged.is_empty() {
        exclusions.merge(&exclude_no_accessibility(&mut corpus, &flagged));
    }

    let assignments = estimate_por_all(&corpus);
    let undetermined: BTreeSet<String> = assignments
        .iter()
        .filter(|a| a.rule_used == PorRule::Undetermined)
        .map(|a| a.patient_id.clone())
        .collect();
    if !undetermined.is_empty() {
        exclusions.merge(&exclude_patients(
            &mut corpus,
            &undetermined,
            PatientExclusion::PorUndetermined,
        ));
    }

    let por: BTreeMap<String, String> = assignments
        .iter()
        .filter(|a| corpus.patients.contains_key(&a.patient_id))
        .filter_map(|a| a.por_district.clone().map(|d| (a.patient_id.clone(), d)))
        .collect();

    Ok((
        corpus,
        ResidenceOutcome {
            assignments,
            por,
            acc,
            exclusions,
        },
    ))
}

/// Computes all features over a residence-resolved corpus and assembles the
/// per-visit vectors.
pub fn build_vectors(
    corpus: &Corpus,
    por: &BTreeMap<String, String>,
    decay: &DecayConfig,
) -> Result<(FeatureComputation, Vec<FeatureVector>)> {
    let computation = compute_features(corpus, decay)?;
    let vectors = assemble(corpus, &computation, por)?;
    Ok((computation, vectors))
}

pub struct FeaturizeOutcome {
    pub vectors: Vec<FeatureVector>,
    pub por_assignments: Vec<PorAssignment>,
    pub por: BTreeMap<String, String>,
    pub computation: FeatureComputation,
    pub exclusions: ExclusionReport,
}

/// Residence resolution plus feature assembly in one call.
pub fn featurize(corpus: Corpus, decay: &DecayConfig) -> Result<(Corpus, FeaturizeOutcome)> {
    let (corpus, residence) = resolve_residence(corpus, decay)?;
    let (computation, vectors) = build_vectors(&corpus, &residence.por, decay)?;
    Ok((
        corpus,
        FeaturizeOutcome {
            vectors,
            por_assignments: residence.assignments,
            por: residence.por,
            computation,
            exclusions: residence.exclusions,
        },
    ))
}
