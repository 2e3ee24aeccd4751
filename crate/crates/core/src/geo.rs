//! Great-circle distances between district centroids, place-of-residence
//! estimation, and four-level distance labeling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data_model::{
    AuxTables, Corpus, DistrictTable, InsuredIdentity, PatientProfile, ProviderProfile,
    VisitRecord,
};
use crate::error::{CoreError, Result};

/// Mean Earth radius in kilometers (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two (latitude, longitude) points in degrees,
/// in kilometers. Symmetric and non-negative.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lat1 = a.0.to_radians();
    let lat2 = b.0.to_radians();
    let dlat = (b.0 - a.0).to_radians();
    let dlon = (b.1 - a.1).to_radians();

    let s = (dlat / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * s.sqrt().min(1.0).asin()
}

/// The four travel-distance classes. Bins are left-closed: 5, 10, and 15 km
/// belong to the upper class.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum DistanceLabel {
    /// < 5 km
    L0,
    /// 5–10 km
    L1,
    /// 10–15 km
    L2,
    /// > 15 km
    L3,
}

impl DistanceLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [DistanceLabel; 4] = [
        DistanceLabel::L0,
        DistanceLabel::L1,
        DistanceLabel::L2,
        DistanceLabel::L3,
    ];

    pub fn from_km(km: f64) -> DistanceLabel {
        if km < 5.0 {
            DistanceLabel::L0
        } else if km < 10.0 {
            DistanceLabel::L1
        } else if km < 15.0 {
            DistanceLabel::L2
        } else {
            DistanceLabel::L3
        }
    }

    pub fn index(self) -> usize {
        match self {
            DistanceLabel::L0 => 0,
            DistanceLabel::L1 => 1,
            DistanceLabel::L2 => 2,
            DistanceLabel::L3 => 3,
        }
    }

    pub fn from_index(idx: usize) -> Option<DistanceLabel> {
        DistanceLabel::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceLabel::L0 => "L0",
            DistanceLabel::L1 => "L1",
            DistanceLabel::L2 => "L2",
            DistanceLabel::L3 => "L3",
        }
    }
}

/// Which rule of the cascade determined the place of residence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PorRule {
    TypeA,
    FluResp,
    Emergency,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorAssignment {
    pub patient_id: String,
    /// Present exactly when `rule_used != Undetermined`.
    pub por_district: Option<String>,
    pub rule_used: PorRule,
}

/// Modal provider district over `visits`; ties break to the district of the
/// most recent visit (latest date, then highest visit id) among the tied
/// districts.
fn modal_district<'a>(
    visits: &[&'a VisitRecord],
    providers: &'a BTreeMap<String, ProviderProfile>,
) -> Option<&'a str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in visits {
        if let Some(p) = providers.get(&v.provider_id) {
            *counts.entry(p.district.as_str()).or_insert(0) += 1;
        }
    }
    let max = *counts.values().max()?;
    let tied: Vec<&str> = counts
        .iter()
        .filter(|(_, c)| **c == max)
        .map(|(d, _)| *d)
        .collect();
    if tied.len() == 1 {
        return Some(tied[0]);
    }
    visits
        .iter()
        .filter_map(|v| {
            let d = providers.get(&v.provider_id)?.district.as_str();
            tied.contains(&d).then_some((v.visit_date, &v.visit_id, d))
        })
        .max()
        .map(|(_, _, d)| d)
}

/// Resolves the "nearby" test: if the modal district is the registered
/// district or one of its queen-contiguity neighbors, the registered district
/// stands as the POR; otherwise the modal district does.
fn resolve_por(registered: &str, modal: &str, districts: &DistrictTable) -> String {
    if districts.is_nearby(registered, modal) {
        registered.to_string()
    } else {
        modal.to_string()
    }
}

/// Place-of-residence rule cascade:
/// 1. type-A insured identity registers at the POR, so the registered
///    district stands;
/// 2. otherwise, flu/respiratory visits anchor the estimate via the modal
///    provider district and the nearby test;
/// 3. otherwise, two or more emergency visits anchor it the same way;
/// 4. otherwise the POR is undetermined and the patient is excluded later.
pub fn estimate_por(
    patient: &PatientProfile,
    visits: &[&VisitRecord],
    providers: &BTreeMap<String, ProviderProfile>,
    districts: &DistrictTable,
    aux: &AuxTables,
) -> PorAssignment {
    debug_assert!(visits.iter().all(|v| v.patient_id == patient.patient_id));

    if patient.insured_identity == InsuredIdentity::TypeA {
        return PorAssignment {
            patient_id: patient.patient_id.clone(),
            por_district: Some(patient.registered_district.clone()),
            rule_used: PorRule::TypeA,
        };
    }

    let flu_visits: Vec<&VisitRecord> = visits
        .iter()
        .copied()
        .filter(|v| aux.is_flu_resp(&v.primary_diagnosis))
        .collect();
    if let Some(modal) = modal_district(&flu_visits, providers) {
        return PorAssignment {
            patient_id: patient.patient_id.clone(),
            por_district: Some(resolve_por(&patient.registered_district, modal, districts)),
            rule_used: PorRule::FluResp,
        };
    }

    let er_visits: Vec<&VisitRecord> = visits
        .iter()
        .copied()
        .filter(|v| v.is_emergency)
        .collect();
    if er_visits.len() >= 2 {
        if let Some(modal) = modal_district(&er_visits, providers) {
            return PorAssignment {
                patient_id: patient.patient_id.clone(),
                por_district: Some(resolve_por(&patient.registered_district, modal, districts)),
                rule_used: PorRule::Emergency,
            };
        }
    }

    PorAssignment {
        patient_id: patient.patient_id.clone(),
        por_district: None,
        rule_used: PorRule::Undetermined,
    }
}

/// Runs the cascade for every retained patient.
pub fn estimate_por_all(corpus: &Corpus) -> Vec<PorAssignment> {
    let by_patient = corpus.visits_by_patient();
    corpus
        .patients
        .values()
        .map(|p| {
            let visits = by_patient
                .get(p.patient_id.as_str())
                .map(|v| v.as_slice())
                .unwrap_or(&[]);
            estimate_por(p, visits, &corpus.providers, &corpus.districts, &corpus.aux)
        })
        .collect()
}

/// Centroid-to-centroid distance between the POR district and the provider's
/// district, with its four-level label.
pub fn label_distance(
    visit: &VisitRecord,
    por_district: &str,
    providers: &BTreeMap<String, ProviderProfile>,
    districts: &DistrictTable,
) -> Result<(f64, DistanceLabel)> {
    let provider = providers
        .get(&visit.provider_id)
        .ok_or_else(|| CoreError::Contract(format!("unknown provider {}", visit.provider_id)))?;
    let from = districts
        .get(por_district)
        .ok_or_else(|| CoreError::Contract(format!("unknown district {por_district}")))?;
    let to = districts
        .get(&provider.district)
        .ok_or_else(|| CoreError::Contract(format!("unknown district {}", provider.district)))?;
    let km = haversine_km(from.centroid, to.centroid);
    Ok((km, DistanceLabel::from_km(km)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_points_are_zero() {
        assert_eq!(haversine_km((23.5, 121.0), (23.5, 121.0)), 0.0);
    }

    #[test]
    fn one_degree_along_equator() {
        // One degree of arc along the equator is pi * R / 180.
        let expected = std::f64::consts::PI * EARTH_RADIUS_KM / 180.0;
        let got = haversine_km((0.0, 0.0), (0.0, 1.0));
        assert!((got - expected).abs() < 1e-9, "got {got}, expected {expected}");
        assert!((got - 111.195).abs() < 1e-3);
    }

    #[test]
    fn label_bins_are_left_closed() {
        assert_eq!(DistanceLabel::from_km(0.0), DistanceLabel::L0);
        assert_eq!(DistanceLabel::from_km(4.999), DistanceLabel::L0);
        assert_eq!(DistanceLabel::from_km(5.0), DistanceLabel::L1);
        assert_eq!(DistanceLabel::from_km(10.0), DistanceLabel::L2);
        assert_eq!(DistanceLabel::from_km(15.0), DistanceLabel::L3);
        assert_eq!(DistanceLabel::from_km(1500.0), DistanceLabel::L3);
    }

    proptest! {
        #[test]
        fn haversine_symmetric(
            lat1 in -90.0f64..90.0, lon1 in -180.0f64..180.0,
            lat2 in -90.0f64..90.0, lon2 in -180.0f64..180.0,
        ) {
            let d1 = haversine_km((lat1, lon1), (lat2, lon2));
            let d2 = haversine_km((lat2, lon2), (lat1, lon1));
            prop_assert!(d1 >= 0.0);
            prop_assert_eq!(d1.to_bits(), d2.to_bits());
        }

        #[test]
        fn haversine_triangle_inequality(
            lat1 in -80.0f64..80.0, lon1 in -170.0f64..170.0,
            lat2 in -80.0f64..80.0, lon2 in -170.0f64..170.0,
            lat3 in -80.0f64..80.0, lon3 in -170.0f64..170.0,
        ) {
            let a = (lat1, lon1);
            let b = (lat2, lon2);
            let c = (lat3, lon3);
            let ab = haversine_km(a, b);
            let bc = haversine_km(b, c);
            let ac = haversine_km(a, c);
            prop_assert!(ac <= ab + bc + 1e-9 * (ab + bc).max(1.0));
        }

        #[test]
        fn label_monotone_in_km(km1 in 0.0f64..100.0, km2 in 0.0f64..100.0) {
            let (lo, hi) = if km1 <= km2 { (km1, km2) } else { (km2, km1) };
            prop_assert!(DistanceLabel::from_km(lo) <= DistanceLabel::from_km(hi));
        }
    }
}
