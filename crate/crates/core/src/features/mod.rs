//! The 25 visit-level features: patient continuity and complexity indices,
//! provider popularity and accessibility, and incident flags.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data_model::{AuxTables, Corpus, DayKind, RegionGroup, VisitRecord};
use crate::error::{CoreError, Result};

mod access;

pub use access::{acc_index, DecayConfig, DecayZone};

/// The four continuity-of-care indicators over one patient's chronologically
/// ordered provider sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityIndices {
    /// Largest share of visits going to one provider.
    pub upc: f64,
    /// Smallest share of visits going to a provider visited at least once.
    pub lupc: f64,
    /// Fraction of consecutive visit pairs at the same provider.
    pub secoc: f64,
    /// Dispersion-based single continuity score.
    pub coci: f64,
}

/// Computes UPC, LUPC, SECOC, and COCI for a non-empty provider sequence.
/// A single visit is treated as perfectly continuous (SECOC = COCI = 1).
pub fn continuity_indices(provider_sequence: &[&str]) -> Result<ContinuityIndices> {
    let n = provider_sequence.len();
    if n == 0 {
        return Err(CoreError::Contract(
            "continuity indices need a non-empty visit sequence".into(),
        ));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in provider_sequence {
        *counts.entry(p).or_insert(0) += 1;
    }
    let max = *counts.values().max().unwrap();
    let min = *counts.values().min().unwrap();
    let upc = max as f64 / n as f64;
    let lupc = min as f64 / n as f64;

    let (secoc, coci) = if n == 1 {
        (1.0, 1.0)
    } else {
        let same_pairs = provider_sequence
            .windows(2)
            .filter(|w| w[0] == w[1])
            .count();
        let secoc = same_pairs as f64 / (n - 1) as f64;
        let sum_sq: usize = counts.values().map(|c| c * c).sum();
        let coci = (sum_sq - n) as f64 / (n * (n - 1)) as f64;
        (secoc, coci)
    };

    Ok(ContinuityIndices { upc, lupc, secoc, coci })
}

/// One patient's UPC and LUPC votes: the providers with the largest and
/// smallest visit share. Ties break to the provider first visited.
pub fn upc_lupc_votes<'a>(provider_sequence: &[&'a str]) -> Result<(&'a str, &'a str)> {
    if provider_sequence.is_empty() {
        return Err(CoreError::Contract("vote needs a non-empty sequence".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut first_seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, p) in provider_sequence.iter().enumerate() {
        *counts.entry(p).or_insert(0) += 1;
        first_seen.entry(p).or_insert(i);
    }
    let pick = |want: usize| -> &'a str {
        provider_sequence
            .iter()
            .copied()
            .filter(|p| counts[p] == want)
            .min_by_key(|p| first_seen[p])
            .unwrap()
    };
    let max = *counts.values().max().unwrap();
    let min = *counts.values().min().unwrap();
    Ok((pick(max), pick(min)))
}

/// Per-provider counts of patients voting it their UPC (MFPC) and their LUPC
/// (LFPC). Each patient contributes exactly one vote of each kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VoteTallies {
    pub mfpc: BTreeMap<String, u64>,
    pub lfpc: BTreeMap<String, u64>,
}

impl VoteTallies {
    pub fn mfpc_of(&self, provider: &str) -> u64 {
        self.mfpc.get(provider).copied().unwrap_or(0)
    }

    pub fn lfpc_of(&self, provider: &str) -> u64 {
        self.lfpc.get(provider).copied().unwrap_or(0)
    }
}

pub fn vote_counts<'a>(votes: impl IntoIterator<Item = (&'a str, &'a str)>) -> VoteTallies {
    let mut tallies = VoteTallies::default();
    for (upc, lupc) in votes {
        *tallies.mfpc.entry(upc.to_string()).or_insert(0) += 1;
        *tallies.lfpc.entry(lupc.to_string()).or_insert(0) += 1;
    }
    tallies
}

/// Charlson comorbidity score: each weight-table category (an ICD prefix)
/// counts once if any of the patient's codes matches it.
pub fn cci_score<'a>(
    codes: impl IntoIterator<Item = &'a str> + Clone,
    weights: &BTreeMap<String, u32>,
) -> u32 {
    weights
        .iter()
        .filter(|(prefix, _)| {
            codes
                .clone()
                .into_iter()
                .any(|c| c.starts_with(prefix.as_str()))
        })
        .map(|(_, w)| *w)
        .sum()
}

/// Disease importance rate: the share of the patient's visits whose primary
/// diagnosis equals this visit's primary diagnosis.
pub fn dir_ratio(primary_diagnosis: &str, patient_visits: &[&VisitRecord]) -> Result<f64> {
    let n = patient_visits.len();
    if n == 0 {
        return Err(CoreError::Contract("dir needs at least one visit".into()));
    }
    let d = patient_visits
        .iter()
        .filter(|v| v.primary_diagnosis == primary_diagnosis)
        .count();
    Ok(d as f64 / n as f64)
}

/// Age in whole years at `date`.
pub fn age_at(birthdate: NaiveDate, date: NaiveDate) -> i32 {
    let mut age = date.year() - birthdate.year();
    if (date.month(), date.day()) < (birthdate.month(), birthdate.day()) {
        age -= 1;
    }
    age
}

/// Incident-level flags and the disease importance rate for one visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentFeatures {
    pub is_surgery: bool,
    pub is_emergency: bool,
    pub is_severe: bool,
    pub is_workday: bool,
    pub dir: f64,
}

/// Severe means triage level 1–3 (resuscitation, emergency, urgent) or a
/// catastrophic-illness primary diagnosis.
pub fn incident_flags(
    visit: &VisitRecord,
    patient_visits: &[&VisitRecord],
    aux: &AuxTables,
) -> Result<IncidentFeatures> {
    let severe = matches!(visit.triage_level, Some(1..=3))
        || aux.is_catastrophic(&visit.primary_diagnosis);
    let day = aux.day_kind(visit.visit_date).ok_or_else(|| {
        CoreError::Config(format!("calendar has no entry for {}", visit.visit_date))
    })?;
    Ok(IncidentFeatures {
        is_surgery: visit.involves_surgery,
        is_emergency: visit.is_emergency,
        is_severe: severe,
        is_workday: day == DayKind::Workday,
        dir: dir_ratio(&visit.primary_diagnosis, patient_visits)?,
    })
}

/// Per-patient aggregates shared by all of that patient's visit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientAggregates {
    pub total_visits: usize,
    /// Distinct ICD codes across the patient's retained visits.
    pub total_diseases: usize,
    /// Distinct ICD codes matching the chronic prefix set.
    pub total_chronic: usize,
    pub continuity: ContinuityIndices,
    pub cci: u32,
    pub upc_vote: String,
    pub lupc_vote: String,
}

/// Aggregates one patient's chronologically ordered retained visits.
pub fn patient_aggregates(visits: &[&VisitRecord], aux: &AuxTables) -> Result<PatientAggregates> {
    if visits.is_empty() {
        return Err(CoreError::Contract(
            "patient aggregates need at least one visit".into(),
        ));
    }
    let providers: Vec<&str> = visits.iter().map(|v| v.provider_id.as_str()).collect();
    let continuity = continuity_indices(&providers)?;
    let (upc_vote, lupc_vote) = upc_lupc_votes(&providers)?;

    let mut codes: BTreeSet<&str> = BTreeSet::new();
    for v in visits {
        codes.insert(v.primary_diagnosis.as_str());
        codes.extend(v.all_diagnoses.iter().map(|c| c.as_str()));
    }
    let total_chronic = codes.iter().filter(|c| aux.is_chronic(c)).count();
    let cci = cci_score(codes.iter().copied(), &aux.codes.cci_weights);

    Ok(PatientAggregates {
        total_visits: visits.len(),
        total_diseases: codes.len(),
        total_chronic,
        continuity,
        cci,
        upc_vote: upc_vote.to_string(),
        lupc_vote: lupc_vote.to_string(),
    })
}

/// Per-provider features: the district's physician density, the provider's
/// MFPC/LFPC vote counts, its region group, and the district's accessibility
/// score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderFeatures {
    pub physician_density: f64,
    pub mfpc: u64,
    pub lfpc: u64,
    pub region: RegionGroup,
    pub acc_index: f64,
}

/// Everything the dataset assembler needs, computed in one pass over the
/// retained corpus: per-patient aggregates (a per-patient pass), then the
/// global vote and accessibility reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureComputation {
    pub patients: BTreeMap<String, PatientAggregates>,
    pub providers: BTreeMap<String, ProviderFeatures>,
    pub tallies: VoteTallies,
    pub acc: BTreeMap<String, f64>,
}

pub fn compute_features(corpus: &Corpus, decay: &DecayConfig) -> Result<FeatureComputation> {
    let by_patient = corpus.visits_by_patient();

    let mut patients = BTreeMap::new();
    for (id, visits) in &by_patient {
        patients.insert(id.to_string(), patient_aggregates(visits, &corpus.aux)?);
    }

    let tallies = vote_counts(
        patients
            .values()
            .map(|a| (a.upc_vote.as_str(), a.lupc_vote.as_str())),
    );

    let acc = acc_index(&corpus.districts, decay)?;

    let mut providers = BTreeMap::new();
    for p in corpus.providers.values() {
        let district = corpus
            .districts
            .get(&p.district)
            .ok_or_else(|| CoreError::Contract(format!("unknown district {}", p.district)))?;
        providers.insert(
            p.provider_id.clone(),
            ProviderFeatures {
                physician_density: district.physician_density(),
                mfpc: tallies.mfpc_of(&p.provider_id),
                lfpc: tallies.lfpc_of(&p.provider_id),
                region: district.region_group,
                acc_index: acc.get(&p.district).copied().unwrap_or(0.0),
            },
        );
    }

    Ok(FeatureComputation {
        patients,
        providers,
        tallies,
        acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Brute-force re-count of the four indices, kept deliberately naive and
    // independent of the implementation above.
    pub(crate) fn continuity_oracle(seq: &[&str]) -> (f64, f64, f64, f64) {
        let n = seq.len();
        let distinct: Vec<&str> = {
            let mut d = Vec::new();
            for p in seq {
                if !d.contains(p) {
                    d.push(*p);
                }
            }
            d
        };
        let count_of = |p: &str| seq.iter().filter(|q| **q == p).count();
        let mut max = 0usize;
        let mut min = usize::MAX;
        for p in &distinct {
            let c = count_of(p);
            if c > max {
                max = c;
            }
            if c < min {
                min = c;
            }
        }
        let upc = max as f64 / n as f64;
        let lupc = min as f64 / n as f64;
        if n == 1 {
            return (upc, lupc, 1.0, 1.0);
        }
        let mut same = 0usize;
        for j in 0..n - 1 {
            if seq[j] == seq[j + 1] {
                same += 1;
            }
        }
        let secoc = same as f64 / (n - 1) as f64;
        let mut sum_sq = 0usize;
        for p in &distinct {
            let c = count_of(p);
            sum_sq += c * c;
        }
        let coci = (sum_sq - n) as f64 / (n * (n - 1)) as f64;
        (upc, lupc, secoc, coci)
    }

    #[test]
    fn single_provider_sequence() {
        let c = continuity_indices(&["A", "A", "A"]).unwrap();
        assert_eq!((c.upc, c.lupc, c.secoc, c.coci), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn two_thirds_one_third() {
        let c = continuity_indices(&["A", "A", "B"]).unwrap();
        assert_eq!(c.upc, 2.0 / 3.0);
        assert_eq!(c.lupc, 1.0 / 3.0);
        assert_eq!(c.secoc, 0.5);
        assert_eq!(c.coci, (4.0 + 1.0 - 3.0) / (3.0 * 2.0));
    }

    #[test]
    fn alternating_providers() {
        let c = continuity_indices(&["A", "B", "A", "B"]).unwrap();
        assert_eq!(c.upc, 0.5);
        assert_eq!(c.lupc, 0.5);
        assert_eq!(c.secoc, 0.0);
        assert_eq!(c.coci, (4.0 + 4.0 - 4.0) / 12.0);
    }

    #[test]
    fn empty_sequence_is_contract_violation() {
        assert!(continuity_indices(&[]).is_err());
    }

    #[test]
    fn vote_tie_breaks_to_first_visited() {
        // A and B both have two visits; A was seen first, so it takes both
        // the UPC and LUPC vote.
        let (upc, lupc) = upc_lupc_votes(&["A", "B", "B", "A"]).unwrap();
        assert_eq!(upc, "A");
        assert_eq!(lupc, "A");
        let (upc, lupc) = upc_lupc_votes(&["C", "C", "D"]).unwrap();
        assert_eq!(upc, "C");
        assert_eq!(lupc, "D");
    }

    #[test]
    fn vote_conservation() {
        let votes = vec![("X", "Y"), ("X", "X"), ("X", "Z")];
        let tallies = vote_counts(votes);
        assert_eq!(tallies.mfpc_of("X"), 3);
        let total_mfpc: u64 = tallies.mfpc.values().sum();
        let total_lfpc: u64 = tallies.lfpc.values().sum();
        assert_eq!(total_mfpc, 3);
        assert_eq!(total_lfpc, 3);
    }

    #[test]
    fn empty_votes() {
        let tallies = vote_counts(Vec::<(&str, &str)>::new());
        assert!(tallies.mfpc.is_empty());
        assert!(tallies.lfpc.is_empty());
    }

    #[test]
    fn cci_sums_matched_categories_once() {
        let mut weights = BTreeMap::new();
        weights.insert("250".to_string(), 1u32);
        weights.insert("571".to_string(), 2u32);
        assert_eq!(cci_score(["7100"], &weights), 0);
        assert_eq!(cci_score(["2500", "5710"], &weights), 3);
        assert_eq!(cci_score(["2500", "2501", "2500"], &weights), 1);
    }

    #[test]
    fn cci_order_and_duplicate_insensitive() {
        let mut weights = BTreeMap::new();
        weights.insert("428".to_string(), 1u32);
        weights.insert("585".to_string(), 2u32);
        let a = cci_score(["4280", "5850"], &weights);
        let b = cci_score(["5850", "4280", "4281"], &weights);
        assert_eq!(a, b);
    }

    #[test]
    fn age_counts_whole_years() {
        let birth = NaiveDate::from_ymd_opt(1980, 6, 15).unwrap();
        assert_eq!(age_at(birth, NaiveDate::from_ymd_opt(2010, 6, 14).unwrap()), 29);
        assert_eq!(age_at(birth, NaiveDate::from_ymd_opt(2010, 6, 15).unwrap()), 30);
        assert_eq!(age_at(birth, NaiveDate::from_ymd_opt(2010, 12, 1).unwrap()), 30);
    }

    proptest! {
        #[test]
        fn indices_match_bruteforce_oracle(
            seq in proptest::collection::vec(0usize..5, 1..=20)
        ) {
            let names = ["P0", "P1", "P2", "P3", "P4"];
            let seq: Vec<&str> = seq.into_iter().map(|i| names[i]).collect();
            let c = continuity_indices(&seq).unwrap();
            let (upc, lupc, secoc, coci) = continuity_oracle(&seq);
            prop_assert_eq!(c.upc, upc);
            prop_assert_eq!(c.lupc, lupc);
            prop_assert_eq!(c.secoc, secoc);
            prop_assert_eq!(c.coci, coci);
        }

        #[test]
        fn continuity_invariants(
            seq in proptest::collection::vec(0usize..5, 1..=20)
        ) {
            let names = ["P0", "P1", "P2", "P3", "P4"];
            let seq: Vec<&str> = seq.into_iter().map(|i| names[i]).collect();
            let c = continuity_indices(&seq).unwrap();
            let distinct: BTreeSet<&str> = seq.iter().copied().collect();
            prop_assert!(c.lupc <= c.upc);
            prop_assert!(c.upc >= 1.0 / distinct.len() as f64);
            prop_assert!((0.0..=1.0).contains(&c.coci));
            prop_assert_eq!(c.coci == 1.0, distinct.len() == 1);
            let changes = seq.windows(2).any(|w| w[0] != w[1]);
            prop_assert_eq!(c.secoc == 1.0, !changes);
        }
    }
}
