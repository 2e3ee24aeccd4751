//! Enhanced two-step floating catchment area accessibility scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data_model::DistrictTable;
use crate::error::{CoreError, Result};
use crate::geo::haversine_km;

/// One distance-decay zone: distances up to `upto_km` (exclusive, except for
/// the final zone which closes the catchment) carry `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayZone {
    pub upto_km: f64,
    pub weight: f64,
}

/// Piecewise-constant distance-decay weights. The last zone's `upto_km` is
/// the catchment radius d0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub zones: Vec<DecayZone>,
}

impl Default for DecayConfig {
    /// Three 10 km zones with Gaussian-derived step weights, the common
    /// parameterization in the floating-catchment literature.
    fn default() -> Self {
        DecayConfig {
            zones: vec![
                DecayZone { upto_km: 10.0, weight: 1.0 },
                DecayZone { upto_km: 20.0, weight: 0.42 },
                DecayZone { upto_km: 30.0, weight: 0.09 },
            ],
        }
    }
}

impl DecayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.zones.is_empty() {
            return Err(CoreError::Config("decay config needs at least one zone".into()));
        }
        if self.zones[0].weight != 1.0 {
            return Err(CoreError::Config("innermost decay weight must be 1.0".into()));
        }
        for w in self.zones.windows(2) {
            if w[1].upto_km <= w[0].upto_km {
                return Err(CoreError::Config("decay zone bounds must increase".into()));
            }
            if w[1].weight > w[0].weight {
                return Err(CoreError::Config("decay weights must be non-increasing".into()));
            }
        }
        if self.zones.iter().any(|z| z.upto_km <= 0.0 || z.weight < 0.0) {
            return Err(CoreError::Config("decay zones must be positive".into()));
        }
        Ok(())
    }

    /// Catchment radius d0.
    pub fn d0(&self) -> f64 {
        self.zones.last().map(|z| z.upto_km).unwrap_or(0.0)
    }

    /// Weight for a distance, `None` beyond the catchment.
    pub fn weight(&self, km: f64) -> Option<f64> {
        for zone in &self.zones {
            if km < zone.upto_km {
                return Some(zone.weight);
            }
        }
        // d == d0 still belongs to the outermost zone.
        if km == self.d0() {
            return self.zones.last().map(|z| z.weight);
        }
        None
    }
}

/// Enhanced 2SFCA. Step 1 computes each supply district's physician-to-
/// population ratio over its weighted catchment; step 2 sums the reachable
/// ratios at each demand district. A score of 0 means no reachable supply;
/// such districts are flagged for exclusion by the caller.
pub fn acc_index(districts: &DistrictTable, decay: &DecayConfig) -> Result<BTreeMap<String, f64>> {
    decay.validate()?;
    let list: Vec<_> = districts.iter().collect();
    let n = list.len();

    // Pairwise decay weights; None outside the catchment.
    let mut w = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            let d = haversine_km(list[i].centroid, list[j].centroid);
            w[i][j] = decay.weight(d);
        }
    }

    // Step 1: supply-to-population ratio per supply district j.
    let mut ratio = vec![0.0f64; n];
    for j in 0..n {
        let mut weighted_pop = 0.0;
        for k in 0..n {
            if let Some(wk) = w[k][j] {
                weighted_pop += list[k].population as f64 * wk;
            }
        }
        // weighted_pop >= own population > 0 by table validation.
        ratio[j] = list[j].physicians as f64 / weighted_pop;
    }

    // Step 2: accessibility at each demand district i.
    let mut out = BTreeMap::new();
    for i in 0..n {
        let mut a = 0.0;
        for j in 0..n {
            if let Some(wij) = w[i][j] {
                a += ratio[j] * wij;
            }
        }
        out.insert(list[i].district_id.clone(), a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{DistrictInfo, RegionGroup};
    use std::collections::BTreeSet;

    /// Degrees of longitude along the equator covering `km`.
    fn lon_deg(km: f64) -> f64 {
        km * 180.0 / (std::f64::consts::PI * crate::geo::EARTH_RADIUS_KM)
    }

    fn district(id: &str, lon_km: f64, population: u64, physicians: u64) -> DistrictInfo {
        DistrictInfo {
            district_id: id.to_string(),
            centroid: (0.0, lon_deg(lon_km)),
            region_group: RegionGroup::North,
            population,
            physicians,
            neighbors: BTreeSet::new(),
        }
    }

    #[test]
    fn isolated_district_is_supply_over_population() {
        let table =
            DistrictTable::new(vec![district("X", 0.0, 2000, 6)]).unwrap();
        let acc = acc_index(&table, &DecayConfig::default()).unwrap();
        assert!((acc["X"] - 6.0 / 2000.0).abs() < 1e-15);
    }

    #[test]
    fn linear_in_supply() {
        let base = vec![
            district("A", 0.0, 1000, 10),
            district("B", 12.0, 2000, 5),
            district("C", 24.0, 4000, 40),
        ];
        let doubled: Vec<_> = base
            .iter()
            .cloned()
            .map(|mut d| {
                d.physicians *= 2;
                d
            })
            .collect();
        let acc1 = acc_index(&DistrictTable::new(base).unwrap(), &DecayConfig::default()).unwrap();
        let acc2 =
            acc_index(&DistrictTable::new(doubled).unwrap(), &DecayConfig::default()).unwrap();
        for id in ["A", "B", "C"] {
            assert!((acc2[id] - 2.0 * acc1[id]).abs() < 1e-15 * acc2[id].abs().max(1.0));
        }
    }

    #[test]
    fn three_district_line_hand_computed() {
        // A --12km-- B --12km-- C, so d(A,C) = 24 km. With the default zones
        // the weights are w(12) = 0.42 and w(24) = 0.09.
        let table = DistrictTable::new(vec![
            district("A", 0.0, 1000, 10),
            district("B", 12.0, 2000, 0),
            district("C", 24.0, 4000, 40),
        ])
        .unwrap();
        let acc = acc_index(&table, &DecayConfig::default()).unwrap();

        // Step 1, written out by hand:
        let r_a = 10.0 / (1000.0 * 1.0 + 2000.0 * 0.42 + 4000.0 * 0.09);
        let r_b = 0.0;
        let r_c = 40.0 / (1000.0 * 0.09 + 2000.0 * 0.42 + 4000.0 * 1.0);
        // Step 2:
        let a_a = r_a * 1.0 + r_b * 0.42 + r_c * 0.09;
        let a_b = r_a * 0.42 + r_b * 1.0 + r_c * 0.42;
        let a_c = r_a * 0.09 + r_b * 0.42 + r_c * 1.0;

        assert!((acc["A"] - a_a).abs() < 1e-15);
        assert!((acc["B"] - a_b).abs() < 1e-15);
        assert!((acc["C"] - a_c).abs() < 1e-15);
    }

    #[test]
    fn zero_reachable_supply_scores_zero() {
        let table = DistrictTable::new(vec![
            district("EMPTY", 0.0, 500, 0),
            district("FAR", 200.0, 1000, 50),
        ])
        .unwrap();
        let acc = acc_index(&table, &DecayConfig::default()).unwrap();
        assert_eq!(acc["EMPTY"], 0.0);
        assert!(acc["FAR"] > 0.0);
    }

    #[test]
    fn relabeling_permutes_scores() {
        let mk = |ids: [&str; 3]| {
            DistrictTable::new(vec![
                district(ids[0], 0.0, 1000, 10),
                district(ids[1], 12.0, 2000, 5),
                district(ids[2], 24.0, 4000, 40),
            ])
            .unwrap()
        };
        let acc1 = acc_index(&mk(["A", "B", "C"]), &DecayConfig::default()).unwrap();
        let acc2 = acc_index(&mk(["ZZ", "MM", "AA"]), &DecayConfig::default()).unwrap();
        for (old, new) in [("A", "ZZ"), ("B", "MM"), ("C", "AA")] {
            let rel = (acc1[old] - acc2[new]).abs() / acc1[old].abs().max(1e-30);
            assert!(rel < 1e-9, "{old} vs {new}: {rel}");
        }
    }

    #[test]
    fn boundary_distance_stays_in_catchment() {
        let cfg = DecayConfig::default();
        assert_eq!(cfg.weight(0.0), Some(1.0));
        assert_eq!(cfg.weight(10.0), Some(0.42));
        assert_eq!(cfg.weight(29.999), Some(0.09));
        assert_eq!(cfg.weight(30.0), Some(0.09));
        assert_eq!(cfg.weight(30.001), None);
    }
}
