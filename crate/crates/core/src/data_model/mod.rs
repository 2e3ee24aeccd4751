//! Record schemas for claims, beneficiaries, providers, and auxiliary tables,
//! plus the exclusion rules that turn raw rows into a retained corpus.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

mod exclusions;
mod load;

pub use exclusions::{
    apply_exclusions, exclude_no_accessibility, exclude_patients, DistrictExclusion,
    ExclusionReport, PatientExclusion, ProviderExclusion, VisitExclusion,
};
pub use load::{load_corpus, write_raw_corpus, CorpusPaths, ParseIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsuredIdentity {
    #[serde(rename = "type_A")]
    TypeA,
    #[serde(rename = "other")]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderLevel {
    MedicalCenter,
    Regional,
    DistrictHospital,
    Clinic,
}

/// The five region groups used for one-hot encoding; the order here is the
/// indicator order in the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionGroup {
    North,
    Central,
    South,
    East,
    Island,
}

impl RegionGroup {
    pub const ALL: [RegionGroup; 5] = [
        RegionGroup::North,
        RegionGroup::Central,
        RegionGroup::South,
        RegionGroup::East,
        RegionGroup::Island,
    ];

    pub fn index(self) -> usize {
        match self {
            RegionGroup::North => 0,
            RegionGroup::Central => 1,
            RegionGroup::South => 2,
            RegionGroup::East => 3,
            RegionGroup::Island => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayKind {
    Workday,
    NonWorkday,
}

/// A visit row as parsed from file. Fields judged by the exclusion rules stay
/// optional here; [`VisitRecord`] is the retained, fully-populated form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRow {
    pub visit_id: String,
    pub patient_id: String,
    pub provider_id: String,
    pub visit_date: Option<NaiveDate>,
    pub primary_diagnosis: String,
    pub all_diagnoses: Vec<String>,
    pub treatment_codes: Vec<String>,
    pub is_emergency: bool,
    pub triage_level: Option<u8>,
    pub involves_surgery: bool,
}

/// A beneficiary row as parsed from file; duplicates per patient id are kept
/// so the conflicting-gender rule can see them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub patient_id: String,
    pub birthdate: Option<NaiveDate>,
    pub gender: Option<Gender>,
    pub low_income: bool,
    pub insured_identity: InsuredIdentity,
    pub registered_district: String,
}

/// A retained outpatient or emergency visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub visit_id: String,
    pub patient_id: String,
    pub provider_id: String,
    pub visit_date: NaiveDate,
    /// Non-empty for retained records.
    pub primary_diagnosis: String,
    pub all_diagnoses: Vec<String>,
    pub treatment_codes: Vec<String>,
    pub is_emergency: bool,
    pub triage_level: Option<u8>,
    pub involves_surgery: bool,
}

/// A retained beneficiary. `birthdate` does not exceed any retained visit
/// date of the patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: String,
    pub birthdate: NaiveDate,
    pub gender: Gender,
    pub low_income: bool,
    pub insured_identity: InsuredIdentity,
    pub registered_district: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub provider_id: String,
    pub district: String,
    pub level: ProviderLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictInfo {
    pub district_id: String,
    /// (latitude, longitude) of the district centroid, in degrees.
    pub centroid: (f64, f64),
    pub region_group: RegionGroup,
    pub population: u64,
    pub physicians: u64,
    /// Queen-contiguity neighbor set; symmetric and irreflexive.
    pub neighbors: BTreeSet<String>,
}

impl DistrictInfo {
    /// Practicing physicians per 10,000 people.
    pub fn physician_density(&self) -> f64 {
        self.physicians as f64 / self.population as f64 * 10_000.0
    }
}

/// District centroids, region groups, populations, physician counts, and the
/// queen-contiguity adjacency consumed as input data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistrictTable {
    districts: BTreeMap<String, DistrictInfo>,
}

impl DistrictTable {
    pub fn new(districts: Vec<DistrictInfo>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for d in districts {
            if map.insert(d.district_id.clone(), d).is_some() {
                return Err(CoreError::Validation("duplicate district id".into()));
            }
        }
        let table = DistrictTable { districts: map };
        table.validate()?;
        Ok(table)
    }

    pub fn get(&self, id: &str) -> Option<&DistrictInfo> {
        self.districts.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.districts.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.districts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.districts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DistrictInfo> {
        self.districts.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.districts.keys().map(|s| s.as_str())
    }

    /// True when `other` is `district` itself or one of its queen-contiguity
    /// neighbors.
    pub fn is_nearby(&self, district: &str, other: &str) -> bool {
        if district == other {
            return true;
        }
        self.get(district)
            .map(|d| d.neighbors.contains(other))
            .unwrap_or(false)
    }

    fn validate(&self) -> Result<()> {
        for d in self.districts.values() {
            let (lat, lon) = d.centroid;
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(CoreError::Validation(format!(
                    "district {}: centroid ({lat}, {lon}) out of range",
                    d.district_id
                )));
            }
            if d.population == 0 {
                return Err(CoreError::Validation(format!(
                    "district {}: population must be positive",
                    d.district_id
                )));
            }
            for n in &d.neighbors {
                if n == &d.district_id {
                    return Err(CoreError::Validation(format!(
                        "district {}: self-neighbor",
                        d.district_id
                    )));
                }
                match self.districts.get(n) {
                    None => {
                        return Err(CoreError::Validation(format!(
                            "district {}: unknown neighbor {n}",
                            d.district_id
                        )))
                    }
                    Some(back) => {
                        if !back.neighbors.contains(&d.district_id) {
                            return Err(CoreError::Validation(format!(
                                "adjacency not symmetric: {} -> {n}",
                                d.district_id
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Code-set configuration: CCI weights and the chronic / flu-resp /
/// catastrophic ICD prefix sets. Matching is by code prefix throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSets {
    pub cci_weights: BTreeMap<String, u32>,
    pub chronic_codes: BTreeSet<String>,
    pub flu_resp_codes: BTreeSet<String>,
    pub catastrophic_codes: BTreeSet<String>,
}

impl Default for CodeSets {
    /// Documented stub defaults; the authoritative Taiwanese catalogs are not
    /// shipped. Replace via `codes.json` for real analyses.
    fn default() -> Self {
        let weights = [
            ("250", 1u32), // diabetes
            ("428", 1),    // heart failure
            ("490", 1),    // chronic pulmonary
            ("571", 3),    // liver disease
            ("585", 2),    // renal disease
            ("140", 2),    // malignancy
            ("196", 6),    // metastatic tumor
        ];
        CodeSets {
            cci_weights: weights
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            chronic_codes: ["250", "401", "428", "490", "571", "585"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            flu_resp_codes: ["460", "461", "462", "465", "466", "480", "487"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            catastrophic_codes: ["140", "196", "200", "205", "582"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl CodeSets {
    pub fn validate(&self) -> Result<()> {
        if self.cci_weights.values().any(|&w| w == 0) {
            return Err(CoreError::Validation(
                "cci weight must be a positive integer".into(),
            ));
        }
        Ok(())
    }
}

fn matches_prefix(code: &str, prefixes: &BTreeSet<String>) -> bool {
    prefixes.iter().any(|p| code.starts_with(p.as_str()))
}

/// Calendar plus code sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuxTables {
    pub calendar: BTreeMap<NaiveDate, DayKind>,
    pub codes: CodeSets,
}

impl AuxTables {
    pub fn day_kind(&self, date: NaiveDate) -> Option<DayKind> {
        self.calendar.get(&date).copied()
    }

    pub fn is_chronic(&self, code: &str) -> bool {
        matches_prefix(code, &self.codes.chronic_codes)
    }

    pub fn is_flu_resp(&self, code: &str) -> bool {
        matches_prefix(code, &self.codes.flu_resp_codes)
    }

    pub fn is_catastrophic(&self, code: &str) -> bool {
        matches_prefix(code, &self.codes.catastrophic_codes)
    }
}

/// Inclusive date window; visits outside it are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Corpus as loaded, before exclusion rules run.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCorpus {
    pub visits: Vec<VisitRow>,
    pub patients: Vec<PatientRow>,
    pub providers: Vec<ProviderProfile>,
    pub districts: DistrictTable,
    pub aux: AuxTables,
}

/// Retained corpus: every visit's patient and provider resolve, every
/// required field is populated.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub visits: Vec<VisitRecord>,
    pub patients: BTreeMap<String, PatientProfile>,
    pub providers: BTreeMap<String, ProviderProfile>,
    pub districts: DistrictTable,
    pub aux: AuxTables,
}

impl Corpus {
    /// Visits grouped per patient, chronologically ordered (ties broken by
    /// visit id so the ordering is total).
    pub fn visits_by_patient(&self) -> BTreeMap<&str, Vec<&VisitRecord>> {
        let mut map: BTreeMap<&str, Vec<&VisitRecord>> = BTreeMap::new();
        for v in &self.visits {
            map.entry(v.patient_id.as_str()).or_default().push(v);
        }
        for visits in map.values_mut() {
            visits.sort_by(|a, b| (a.visit_date, &a.visit_id).cmp(&(b.visit_date, &b.visit_id)));
        }
        map
    }

    /// District of the provider a visit took place at.
    pub fn provider_district(&self, visit: &VisitRecord) -> Option<&str> {
        self.providers
            .get(&visit.provider_id)
            .map(|p| p.district.as_str())
    }

    /// Converts back to the raw form (used to re-run exclusion rules, which
    /// must then be a no-op).
    pub fn to_raw(&self) -> RawCorpus {
        RawCorpus {
            visits: self
                .visits
                .iter()
                .map(|v| VisitRow {
                    visit_id: v.visit_id.clone(),
                    patient_id: v.patient_id.clone(),
                    provider_id: v.provider_id.clone(),
                    visit_date: Some(v.visit_date),
                    primary_diagnosis: v.primary_diagnosis.clone(),
                    all_diagnoses: v.all_diagnoses.clone(),
                    treatment_codes: v.treatment_codes.clone(),
                    is_emergency: v.is_emergency,
                    triage_level: v.triage_level,
                    involves_surgery: v.involves_surgery,
                })
                .collect(),
            patients: self
                .patients
                .values()
                .map(|p| PatientRow {
                    patient_id: p.patient_id.clone(),
                    birthdate: Some(p.birthdate),
                    gender: Some(p.gender),
                    low_income: p.low_income,
                    insured_identity: p.insured_identity,
                    registered_district: p.registered_district.clone(),
                })
                .collect(),
            providers: self.providers.values().cloned().collect(),
            districts: self.districts.clone(),
            aux: self.aux.clone(),
        }
    }
}
