//! Exclusion rules: incomplete or questionable rows are removed, each under
//! exactly one category, so category counts plus retained counts always add
//! back up to the input counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    Corpus, PatientProfile, PatientRow, RawCorpus, StudyWindow, VisitRecord, VisitRow,
};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum PatientExclusion {
    ConflictingGender,
    MissingBirthdate,
    MissingGender,
    UnknownRegisteredDistrict,
    /// Birthdate later than a retained visit date.
    BirthdateAfterVisit,
    NoVisits,
    /// Place of residence could not be determined by the rule cascade.
    PorUndetermined,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum VisitExclusion {
    MissingDate,
    OutsideStudyWindow,
    MissingPrimaryDiagnosis,
    UnresolvedProvider,
    UnresolvedPatient,
    /// The visit's patient was excluded.
    PatientExcluded,
    /// Provider sits in a district without an accessibility score.
    NoAccessibility,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ProviderExclusion {
    UnknownDistrict,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DistrictExclusion {
    NoAccessibility,
}

/// Per-category exclusion counts, one map per entity kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub patients: BTreeMap<PatientExclusion, usize>,
    pub visits: BTreeMap<VisitExclusion, usize>,
    pub providers: BTreeMap<ProviderExclusion, usize>,
    pub districts: BTreeMap<DistrictExclusion, usize>,
}

impl ExclusionReport {
    pub fn note_patient(&mut self, reason: PatientExclusion) {
        *self.patients.entry(reason).or_insert(0) += 1;
    }

    pub fn note_visit(&mut self, reason: VisitExclusion) {
        *self.visits.entry(reason).or_insert(0) += 1;
    }

    pub fn note_provider(&mut self, reason: ProviderExclusion) {
        *self.providers.entry(reason).or_insert(0) += 1;
    }

    pub fn note_district(&mut self, reason: DistrictExclusion) {
        *self.districts.entry(reason).or_insert(0) += 1;
    }

    pub fn patients_excluded(&self) -> usize {
        self.patients.values().sum()
    }

    pub fn visits_excluded(&self) -> usize {
        self.visits.values().sum()
    }

    pub fn providers_excluded(&self) -> usize {
        self.providers.values().sum()
    }

    pub fn districts_excluded(&self) -> usize {
        self.districts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.patients_excluded() == 0
            && self.visits_excluded() == 0
            && self.providers_excluded() == 0
            && self.districts_excluded() == 0
    }

    /// Adds another report's counts into this one.
    pub fn merge(&mut self, other: &ExclusionReport) {
        for (k, v) in &other.patients {
            *self.patients.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.visits {
            *self.visits.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.providers {
            *self.providers.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.districts {
            *self.districts.entry(*k).or_insert(0) += v;
        }
    }
}

/// Merges duplicate patient rows into one candidate profile, or rejects the
/// patient. Gender conflicts across rows are grounds for exclusion; for other
/// fields the first row wins.
fn merge_patient_rows(rows: &[&PatientRow]) -> std::result::Result<PatientProfile, PatientExclusion> {
    let genders: BTreeSet<_> = rows.iter().filter_map(|r| r.gender).collect();
    if genders.len() > 1 {
        return Err(PatientExclusion::ConflictingGender);
    }
    let birthdate = rows
        .iter()
        .find_map(|r| r.birthdate)
        .ok_or(PatientExclusion::MissingBirthdate)?;
    let gender = genders
        .into_iter()
        .next()
        .ok_or(PatientExclusion::MissingGender)?;
    let first = rows[0];
    Ok(PatientProfile {
        patient_id: first.patient_id.clone(),
        birthdate,
        gender,
        low_income: first.low_income,
        insured_identity: first.insured_identity,
        registered_district: first.registered_district.clone(),
    })
}

fn promote_visit(row: &VisitRow) -> VisitRecord {
    VisitRecord {
        visit_id: row.visit_id.clone(),
        patient_id: row.patient_id.clone(),
        provider_id: row.provider_id.clone(),
        visit_date: row.visit_date.expect("checked before promotion"),
        primary_diagnosis: row.primary_diagnosis.clone(),
        all_diagnoses: row.all_diagnoses.clone(),
        treatment_codes: row.treatment_codes.clone(),
        is_emergency: row.is_emergency,
        triage_level: row.triage_level,
        involves_surgery: row.involves_surgery,
    }
}

/// Applies the exclusion rules to a raw corpus. Idempotent: feeding the
/// retained corpus back in (via [`Corpus::to_raw`]) excludes nothing.
pub fn apply_exclusions(
    raw: &RawCorpus,
    window: Option<&StudyWindow>,
) -> (Corpus, ExclusionReport) {
    let mut report = ExclusionReport::default();

    // Providers: drop those pointing at unknown districts, dedupe by id.
    let mut providers = BTreeMap::new();
    let mut seen_provider_ids = BTreeSet::new();
    for p in &raw.providers {
        if !seen_provider_ids.insert(p.provider_id.clone()) {
            continue;
        }
        if raw.districts.contains(&p.district) {
            providers.insert(p.provider_id.clone(), p.clone());
        } else {
            report.note_provider(ProviderExclusion::UnknownDistrict);
        }
    }

    // Patients: group rows per id, then merge or reject each group.
    let mut rows_by_patient: BTreeMap<&str, Vec<&PatientRow>> = BTreeMap::new();
    for row in &raw.patients {
        rows_by_patient
            .entry(row.patient_id.as_str())
            .or_default()
            .push(row);
    }
    let known_patient_ids: BTreeSet<&str> = rows_by_patient.keys().copied().collect();

    let mut candidates: BTreeMap<String, PatientProfile> = BTreeMap::new();
    for rows in rows_by_patient.values() {
        match merge_patient_rows(rows) {
            Ok(profile) => {
                if raw.districts.contains(&profile.registered_district) {
                    candidates.insert(profile.patient_id.clone(), profile);
                } else {
                    report.note_patient(PatientExclusion::UnknownRegisteredDistrict);
                }
            }
            Err(reason) => report.note_patient(reason),
        }
    }

    // Visits: independent row checks first.
    let mut candidate_visits: Vec<VisitRecord> = Vec::new();
    for row in &raw.visits {
        let date = match row.visit_date {
            Some(d) => d,
            None => {
                report.note_visit(VisitExclusion::MissingDate);
                continue;
            }
        };
        if let Some(w) = window {
            if !w.contains(date) {
                report.note_visit(VisitExclusion::OutsideStudyWindow);
                continue;
            }
        }
        if row.primary_diagnosis.is_empty() {
            report.note_visit(VisitExclusion::MissingPrimaryDiagnosis);
            continue;
        }
        if !providers.contains_key(&row.provider_id) {
            report.note_visit(VisitExclusion::UnresolvedProvider);
            continue;
        }
        if !known_patient_ids.contains(row.patient_id.as_str()) {
            report.note_visit(VisitExclusion::UnresolvedPatient);
            continue;
        }
        candidate_visits.push(promote_visit(row));
    }

    // A birthdate later than any surviving visit date disqualifies the patient.
    let mut birthdate_violators = BTreeSet::new();
    for v in &candidate_visits {
        if let Some(p) = candidates.get(&v.patient_id) {
            if p.birthdate > v.visit_date {
                birthdate_violators.insert(v.patient_id.clone());
            }
        }
    }
    for id in &birthdate_violators {
        candidates.remove(id);
        report.note_patient(PatientExclusion::BirthdateAfterVisit);
    }

    // Cascade: visits of patients excluded above.
    let mut visits: Vec<VisitRecord> = Vec::new();
    for v in candidate_visits {
        if candidates.contains_key(&v.patient_id) {
            visits.push(v);
        } else {
            report.note_visit(VisitExclusion::PatientExcluded);
        }
    }

    // Patients left with zero visits.
    let with_visits: BTreeSet<&str> = visits.iter().map(|v| v.patient_id.as_str()).collect();
    let orphaned: Vec<String> = candidates
        .keys()
        .filter(|id| !with_visits.contains(id.as_str()))
        .cloned()
        .collect();
    for id in orphaned {
        candidates.remove(&id);
        report.note_patient(PatientExclusion::NoVisits);
    }

    visits.sort_by(|a, b| {
        (&a.patient_id, a.visit_date, &a.visit_id).cmp(&(&b.patient_id, b.visit_date, &b.visit_id))
    });

    (
        Corpus {
            visits,
            patients: candidates,
            providers,
            districts: raw.districts.clone(),
            aux: raw.aux.clone(),
        },
        report,
    )
}

/// Removes the given patients from a retained corpus, counting each under
/// `reason` and their visits under `PatientExcluded`.
pub fn exclude_patients(
    corpus: &mut Corpus,
    ids: &BTreeSet<String>,
    reason: PatientExclusion,
) -> ExclusionReport {
    let mut report = ExclusionReport::default();
    for id in ids {
        if corpus.patients.remove(id).is_some() {
            report.note_patient(reason);
        }
    }
    corpus.visits.retain(|v| {
        let keep = corpus.patients.contains_key(&v.patient_id);
        if !keep {
            report.note_visit(VisitExclusion::PatientExcluded);
        }
        keep
    });
    report
}

/// Removes visits at providers inside accessibility-flagged districts, then
/// sweeps patients left with no visits. Districts stay in the table (their
/// geometry is still needed) but are counted as excluded.
pub fn exclude_no_accessibility(
    corpus: &mut Corpus,
    flagged_districts: &BTreeSet<String>,
) -> ExclusionReport {
    let mut report = ExclusionReport::default();
    for id in flagged_districts {
        if corpus.districts.contains(id) {
            report.note_district(DistrictExclusion::NoAccessibility);
        }
    }
    let providers = corpus.providers.clone();
    corpus.visits.retain(|v| {
        let keep = providers
            .get(&v.provider_id)
            .map(|p| !flagged_districts.contains(&p.district))
            .unwrap_or(false);
        if !keep {
            report.note_visit(VisitExclusion::NoAccessibility);
        }
        keep
    });
    let with_visits: BTreeSet<String> = corpus
        .visits
        .iter()
        .map(|v| v.patient_id.clone())
        .collect();
    let orphaned: Vec<String> = corpus
        .patients
        .keys()
        .filter(|id| !with_visits.contains(*id))
        .cloned()
        .collect();
    for id in orphaned {
        corpus.patients.remove(&id);
        report.note_patient(PatientExclusion::NoVisits);
    }
    report
}
