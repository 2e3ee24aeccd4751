//! Deterministic generator of claims-shaped synthetic corpora: grid
//! geography with queen adjacency, hospitals with levels, patient visit
//! streams, and a planted, learnable travel-distance signal.
//!
//! The signal loads on three drivers: the patient's chronic-disease load,
//! the (inverse) physician density of the home district, and referral-hub
//! pull (hubs collect one-off far visits, which concentrates LFPC votes on
//! them). An interaction term between chronic load and low density keeps the
//! class boundaries non-linear.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    AuxTables, CodeSets, DayKind, DistrictInfo, DistrictTable, Gender, InsuredIdentity,
    PatientRow, ProviderLevel, ProviderProfile, RawCorpus, RegionGroup, StudyWindow, VisitRow,
};
use crate::error::{CoreError, Result};

/// Strengths of the planted signal. The travel band of a visit follows a
/// fixed rule over the patient's chronic-disease count and the visit's
/// severity, with severity escalating differently at high and low chronic
/// loads; referral hubs absorb the far visits (concentrating LFPC votes) and
/// low home physician density shifts patients toward higher chronic loads.
/// All strengths zero is the null corpus: providers drawn uniformly, labels
/// independent of every feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Severe visits escalate the travel band.
    pub severity_strength: f64,
    /// Low home-district density raises the chronic load.
    pub density_strength: f64,
    /// Far visits target referral hubs instead of arbitrary far clinics.
    pub popularity_strength: f64,
    /// The chronic-count rule drives the band at all.
    pub chronic_strength: f64,
    /// Probability of replacing the rule's band with a uniform random one.
    pub label_noise: f64,
    /// Probability that a non-anchor visit is severe.
    pub severe_rate: f64,
}

impl SignalConfig {
    pub fn is_null(&self) -> bool {
        self.severity_strength == 0.0
            && self.density_strength == 0.0
            && self.popularity_strength == 0.0
            && self.chronic_strength == 0.0
    }

    pub fn null() -> SignalConfig {
        SignalConfig {
            severity_strength: 0.0,
            density_strength: 0.0,
            popularity_strength: 0.0,
            chronic_strength: 0.0,
            label_noise: 0.0,
            severe_rate: 0.045,
        }
    }
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            severity_strength: 1.0,
            density_strength: 1.0,
            popularity_strength: 1.0,
            chronic_strength: 1.0,
            label_noise: 0.02,
            severe_rate: 0.045,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Centroid spacing; 5.2 km keeps every grid ring comfortably inside one
    /// distance bin.
    pub spacing_km: f64,
    pub patients: usize,
    /// Mean non-anchor visits per patient.
    pub extra_visits_mean: f64,
    pub type_a_share: f64,
    pub signal: SignalConfig,
    pub window: StudyWindow,
    /// Plant one violation of every exclusion category.
    pub plant_violations: bool,
}

fn window_2008_2011() -> StudyWindow {
    StudyWindow {
        start: NaiveDate::from_ymd_opt(2008, 1, 1).unwrap(),
        end: NaiveDate::from_ymd_opt(2011, 12, 31).unwrap(),
    }
}

impl SynthConfig {
    /// Small corpus that survives the exclusion rules untouched.
    pub fn clean(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            grid_rows: 10,
            grid_cols: 10,
            spacing_km: 5.2,
            patients: 700,
            extra_visits_mean: 4.2,
            type_a_share: 0.3,
            signal: SignalConfig::default(),
            window: window_2008_2011(),
            plant_violations: false,
        }
    }

    /// Clean corpus plus one planted instance of every exclusion category.
    pub fn dirty(seed: u64) -> SynthConfig {
        SynthConfig {
            plant_violations: true,
            ..SynthConfig::clean(seed)
        }
    }

    /// Desk-scale default: enough visits for the end-to-end runs, imbalanced
    /// labels, clean rows.
    pub fn default_preset(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            grid_rows: 12,
            grid_cols: 12,
            spacing_km: 5.2,
            patients: 8400,
            extra_visits_mean: 4.2,
            type_a_share: 0.3,
            signal: SignalConfig::default(),
            window: window_2008_2011(),
            plant_violations: false,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<SynthConfig> {
        match name {
            "clean" => Ok(SynthConfig::clean(seed)),
            "dirty" => Ok(SynthConfig::dirty(seed)),
            "default" => Ok(SynthConfig::default_preset(seed)),
            other => Err(CoreError::Config(format!("unknown synth preset {other:?}"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_rows < 4 || self.grid_cols < 4 {
            return Err(CoreError::Config("grid must be at least 4x4".into()));
        }
        if self.patients == 0 {
            return Err(CoreError::Config("need at least one patient".into()));
        }
        if self.spacing_km <= 0.0 || self.extra_visits_mean < 0.0 {
            return Err(CoreError::Config("spacing and visit mean must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.type_a_share) {
            return Err(CoreError::Config("type A share must be a probability".into()));
        }
        if self.window.end < self.window.start {
            return Err(CoreError::Config("study window is inverted".into()));
        }
        Ok(())
    }
}

/// Kilometers per degree of arc on the generation sphere.
fn km_per_degree() -> f64 {
    std::f64::consts::PI * crate::geo::EARTH_RADIUS_KM / 180.0
}

const GRID_LAT0: f64 = 23.5;
const GRID_LON0: f64 = 120.5;

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    let cutoff = (-lambda).exp();
    let mut k = 0usize;
    let mut product: f64 = rng.gen_range(0.0..1.0);
    while product > cutoff && k < 1000 {
        k += 1;
        product *= rng.gen_range(0.0..1.0);
    }
    k
}

struct GridDistrict {
    id: String,
    row: usize,
    col: usize,
    /// Density percentile within the non-hub range; hubs rank 1.
    density_rank: f64,
    is_hub: bool,
}

struct Geography {
    grid: Vec<GridDistrict>,
    /// Clinic ids per grid cell (hub providers excluded).
    clinics: Vec<Vec<String>>,
    /// Every provider id per grid cell.
    providers: Vec<Vec<String>>,
    /// (cell index, provider id) of every referral hub.
    hub_providers: Vec<(usize, String)>,
    /// Per district: non-hub district indices in the 5-10 km ring.
    ring1: Vec<Vec<usize>>,
    /// Per district: non-hub district indices in the 10-15 km ring.
    ring2: Vec<Vec<usize>>,
    /// Per district: every district index beyond 15 km.
    ring3: Vec<Vec<usize>>,
    /// Per district: hub district indices beyond 15 km.
    ring3_hubs: Vec<Vec<usize>>,
}

fn chronic_code_pool() -> Vec<&'static str> {
    vec!["2500", "4010", "4280", "4900", "5710", "5851"]
}

fn acute_code_pool() -> Vec<&'static str> {
    vec!["7800", "7840", "8470", "V700"]
}

fn flu_code_pool() -> Vec<&'static str> {
    vec!["4650", "4661", "4800", "4871"]
}

fn catastrophic_code_pool() -> Vec<&'static str> {
    vec!["1400", "1960", "2001"]
}

fn build_geography(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<DistrictInfo>, Vec<ProviderProfile>, Geography) {
    let (rows, cols) = (cfg.grid_rows, cfg.grid_cols);
    let lat_step = cfg.spacing_km / km_per_degree();
    let lon_step = cfg.spacing_km / (km_per_degree() * GRID_LAT0.to_radians().cos());

    let mut grid = Vec::with_capacity(rows * cols);
    let mut districts = Vec::with_capacity(rows * cols);
    let mut providers = Vec::new();
    let mut providers_by_cell: Vec<Vec<String>> = Vec::with_capacity(rows * cols);
    let mut hub_providers = Vec::new();

    let mut clinics_by_cell: Vec<Vec<String>> = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let id = format!("D{r:02}{c:02}");
            let is_hub = r % 3 == 1 && c % 3 == 1;
            // Hub and non-hub density ranges are disjoint, so the density
            // column alone identifies referral districts.
            let density_per_10k: f64 = if is_hub {
                rng.gen_range(32.0..45.0)
            } else {
                rng.gen_range(3.0..20.0)
            };
            let population: u64 = rng.gen_range(20_000..80_000);
            let physicians = ((population as f64) * density_per_10k / 10_000.0).round() as u64;
            // Bands of rows map to region groups; east/island stay unused on
            // the grid so those indicator columns are exercised as zeros.
            let region = match 3 * r / rows {
                0 => RegionGroup::North,
                1 => RegionGroup::Central,
                _ => RegionGroup::South,
            };

            let mut neighbors = BTreeSet::new();
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if (0..rows as i64).contains(&nr) && (0..cols as i64).contains(&nc) {
                        neighbors.insert(format!("D{nr:02}{nc:02}"));
                    }
                }
            }

            districts.push(DistrictInfo {
                district_id: id.clone(),
                centroid: (GRID_LAT0 + r as f64 * lat_step, GRID_LON0 + c as f64 * lon_step),
                region_group: region,
                population,
                physicians,
                neighbors,
            });

            let clinic_count = rng.gen_range(1..=3usize);
            let mut cell_clinics = Vec::new();
            for k in 0..clinic_count {
                let pid = format!("H{r:02}{c:02}_{k}");
                providers.push(ProviderProfile {
                    provider_id: pid.clone(),
                    district: id.clone(),
                    level: if rng.gen_range(0.0..1.0) < 0.12 {
                        ProviderLevel::DistrictHospital
                    } else {
                        ProviderLevel::Clinic
                    },
                });
                cell_clinics.push(pid);
            }
            let mut cell_providers = cell_clinics.clone();
            if is_hub {
                let pid = format!("H{r:02}{c:02}_hub");
                providers.push(ProviderProfile {
                    provider_id: pid.clone(),
                    district: id.clone(),
                    level: if (r + c) % 2 == 0 {
                        ProviderLevel::MedicalCenter
                    } else {
                        ProviderLevel::Regional
                    },
                });
                hub_providers.push((grid.len(), pid.clone()));
                cell_providers.push(pid);
            }
            clinics_by_cell.push(cell_clinics);
            providers_by_cell.push(cell_providers);

            grid.push(GridDistrict {
                id,
                row: r,
                col: c,
                density_rank: if is_hub {
                    1.0
                } else {
                    ((density_per_10k - 3.0) / 17.0).clamp(0.0, 1.0)
                },
                is_hub,
            });
        }
    }

    // Ring candidates by squared grid offset: {1,2} -> 5-10 km, {4,5,8} ->
    // 10-15 km, >= 9 -> beyond 15 km at 5.2 km spacing. The near rings keep
    // only non-hub districts so hub-range density stays a far-travel marker.
    let n = grid.len();
    let mut ring1 = vec![Vec::new(); n];
    let mut ring2 = vec![Vec::new(); n];
    let mut ring3 = vec![Vec::new(); n];
    let mut ring3_hubs = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            let dr = grid[i].row as i64 - grid[j].row as i64;
            let dc = grid[i].col as i64 - grid[j].col as i64;
            let d2 = (dr * dr + dc * dc) as u64;
            match d2 {
                1 | 2 if !grid[j].is_hub => ring1[i].push(j),
                4 | 5 | 8 if !grid[j].is_hub => ring2[i].push(j),
                d2 if d2 >= 9 => {
                    ring3[i].push(j);
                    if grid[j].is_hub {
                        ring3_hubs[i].push(j);
                    }
                }
                _ => {}
            }
        }
    }

    (
        districts,
        providers,
        Geography {
            grid,
            clinics: clinics_by_cell,
            providers: providers_by_cell,
            hub_providers,
            ring1,
            ring2,
            ring3,
            ring3_hubs,
        },
    )
}

fn build_calendar(window: &StudyWindow) -> std::collections::BTreeMap<NaiveDate, DayKind> {
    use chrono::Datelike;
    let mut calendar = std::collections::BTreeMap::new();
    let mut date = window.start;
    while date <= window.end {
        let weekend = matches!(date.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun);
        let holiday = (date.month() == 1 && date.day() == 1)
            || (date.month() == 10 && date.day() == 10)
            || (date.month() == 2 && date.day() == 28);
        let kind = if weekend || holiday {
            DayKind::NonWorkday
        } else {
            DayKind::Workday
        };
        calendar.insert(date, kind);
        date = date.succ_opt().unwrap();
    }
    calendar
}

fn random_date(rng: &mut ChaCha8Rng, window: &StudyWindow) -> NaiveDate {
    let span = (window.end - window.start).num_days();
    window.start + chrono::Duration::days(rng.gen_range(0..=span))
}

struct PatientDraft {
    row: PatientRow,
    home: usize,
    /// Distinct chronic codes this patient carries (0..=5); the retained
    /// corpus reproduces it exactly as the total-chronic feature.
    chronic_count: usize,
    /// `chronic_pool[0]` is the main condition driving repeat visits.
    chronic_pool: Vec<&'static str>,
    /// The one flu code used by this patient's anchor visits.
    anchor_flu: &'static str,
    home_clinic: String,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

/// Marginal chronic-count distribution, tuned against the Table IV-like
/// label shares the band rule produces.
const CHRONIC_WEIGHTS: [f64; 6] = [0.27, 0.17, 0.16, 0.15, 0.04, 0.21];

fn sample_chronic_count(rng: &mut ChaCha8Rng, density_rank: f64, density_strength: f64) -> usize {
    let mut u: f64 = rng.gen_range(0.0..1.0);
    let mut c = CHRONIC_WEIGHTS.len() - 1;
    for (k, w) in CHRONIC_WEIGHTS.iter().enumerate() {
        if u < *w {
            c = k;
            break;
        }
        u -= w;
    }
    // Sparse home supply pushes chronic load up, rich supply pulls it down.
    if density_strength > 0.0 {
        let p_up = (0.5 * density_strength * (1.0 - density_rank)).clamp(0.0, 1.0);
        let p_down = (0.5 * density_strength * density_rank).clamp(0.0, 1.0);
        let roll: f64 = rng.gen_range(0.0..1.0);
        if roll < p_up {
            c = (c + 1).min(5);
        } else if roll < p_up + p_down {
            c = c.saturating_sub(1);
        }
    }
    c
}

/// Generates the full corpus file set for a config. Byte-identical output
/// for identical configs.
pub fn generate(cfg: &SynthConfig) -> Result<RawCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (mut districts, mut providers, geo) = build_geography(cfg, &mut rng);
    if geo.hub_providers.is_empty() {
        return Err(CoreError::Config("grid too small to place referral hubs".into()));
    }
    if geo.providers.iter().any(|p| p.is_empty()) {
        return Err(CoreError::Config("a district ended up with no providers".into()));
    }

    let null_signal = cfg.signal.is_null();
    let chronic_codes = chronic_code_pool();
    let acute_codes = acute_code_pool();
    let flu_codes = flu_code_pool();
    let cata_codes = catastrophic_code_pool();

    // Patients.
    let mut drafts = Vec::with_capacity(cfg.patients);
    for i in 0..cfg.patients {
        let home = rng.gen_range(0..geo.grid.len());
        let birth_year = rng.gen_range(1925..=1990);
        let birthdate = NaiveDate::from_ymd_opt(
            birth_year,
            rng.gen_range(1..=12),
            rng.gen_range(1..=28),
        )
        .unwrap();
        let chronic_count = sample_chronic_count(
            &mut rng,
            geo.grid[home].density_rank,
            cfg.signal.density_strength,
        );
        let mut pool = chronic_codes.clone();
        for j in (1..pool.len()).rev() {
            pool.swap(j, rng.gen_range(0..=j));
        }
        pool.truncate(chronic_count);
        let anchor_flu = *pick(&mut rng, &flu_codes);
        let home_clinic = pick(&mut rng, &geo.clinics[home]).clone();

        drafts.push(PatientDraft {
            row: PatientRow {
                patient_id: format!("P{i:05}"),
                birthdate: Some(birthdate),
                gender: Some(if rng.gen_bool(0.47) { Gender::Male } else { Gender::Female }),
                low_income: rng.gen_bool(0.03),
                insured_identity: if rng.gen_range(0.0..1.0) < cfg.type_a_share {
                    InsuredIdentity::TypeA
                } else {
                    InsuredIdentity::Other
                },
                registered_district: geo.grid[home].id.clone(),
            },
            home,
            chronic_count,
            chronic_pool: pool,
            anchor_flu,
            home_clinic,
        });
    }

    // Visits.
    let mut visits: Vec<VisitRow> = Vec::new();
    let mut visit_no = 0usize;
    let next_visit = |visit_no: &mut usize| {
        let id = format!("V{:07}", *visit_no);
        *visit_no += 1;
        id
    };
    let all_provider_ids: Vec<String> =
        providers.iter().map(|p| p.provider_id.clone()).collect();

    for draft in &drafts {
        let emit = |visits: &mut Vec<VisitRow>,
                        rng: &mut ChaCha8Rng,
                        visit_no: &mut usize,
                        provider_id: String,
                        primary: String,
                        is_emergency: bool,
                        severe: bool| {
            let triage_level = if is_emergency {
                Some(if severe { rng.gen_range(1..=3) } else { rng.gen_range(4..=5) })
            } else {
                None
            };
            let mut all_diagnoses = vec![primary.clone()];
            if primary == draft.anchor_flu && !null_signal {
                // Anchor rows restate the whole chronic pool.
                for code in &draft.chronic_pool {
                    all_diagnoses.push(code.to_string());
                }
            } else {
                for _ in 0..rng.gen_range(0..=2usize) {
                    let extra = if rng.gen_bool(0.7) && !draft.chronic_pool.is_empty() {
                        pick(rng, &draft.chronic_pool).to_string()
                    } else {
                        pick(rng, &acute_codes).to_string()
                    };
                    if !all_diagnoses.contains(&extra) {
                        all_diagnoses.push(extra);
                    }
                }
            }
            let involves_surgery = rng.gen_bool(if severe { 0.12 } else { 0.02 });
            let mut treatment_codes = vec![if is_emergency { "ER01" } else { "OPD1" }.to_string()];
            if involves_surgery {
                treatment_codes.push("SURG".to_string());
            }
            visits.push(VisitRow {
                visit_id: next_visit(visit_no),
                patient_id: draft.row.patient_id.clone(),
                provider_id,
                visit_date: Some(random_date(rng, &cfg.window)),
                primary_diagnosis: primary,
                all_diagnoses,
                treatment_codes,
                is_emergency,
                triage_level,
                involves_surgery,
            });
        };

        if null_signal {
            // Null corpus: providers uniform over everything, diagnoses
            // unstructured, labels carry no feature signal.
            let count = poisson(&mut rng, cfg.extra_visits_mean).max(1);
            for _ in 0..count {
                let severe = rng.gen_bool(cfg.signal.severe_rate);
                let is_emergency = severe && rng.gen_bool(0.6) || rng.gen_bool(0.015);
                let provider = pick(&mut rng, &all_provider_ids).clone();
                let primary = if severe && !is_emergency {
                    pick(&mut rng, &cata_codes).to_string()
                } else if rng.gen_bool(0.25) {
                    pick(&mut rng, &flu_codes).to_string()
                } else if rng.gen_bool(0.5) && !draft.chronic_pool.is_empty() {
                    pick(&mut rng, &draft.chronic_pool).to_string()
                } else {
                    pick(&mut rng, &acute_codes).to_string()
                };
                emit(&mut visits, &mut rng, &mut visit_no, provider, primary, is_emergency, severe);
            }
            continue;
        }

        // Anchor flu/respiratory visits at home clinics keep the POR cascade
        // determinate and carry the near-travel mass. Their diagnosis lists
        // also carry the patient's full chronic pool, so the chronic count
        // is reproduced exactly by the feature extractor.
        let anchors = 2 + usize::from(rng.gen_bool(0.5));
        for _ in 0..anchors {
            let provider = pick(&mut rng, &geo.clinics[draft.home]).clone();
            emit(
                &mut visits,
                &mut rng,
                &mut visit_no,
                provider,
                draft.anchor_flu.to_string(),
                false,
                false,
            );
        }

        // The main-condition visits outnumber the anchors, which keeps the
        // disease-importance rate of anchor rows and main-condition rows on
        // opposite sides of one global threshold.
        let extra = poisson(&mut rng, cfg.extra_visits_mean).max(anchors + 1);
        for visit_idx in 0..extra {
            let severe = visit_idx >= anchors + 1 && rng.gen_bool(cfg.signal.severe_rate);
            let is_emergency = severe && rng.gen_bool(0.6) || rng.gen_bool(0.015);
            let signal = &cfg.signal;

            // Travel band: severity escalates, with the direction set by the
            // chronic load; otherwise the chronic load alone places the
            // visit, and a count of four leaves the choice to a referral
            // coin. A small label-noise term randomizes the band outright.
            let c_eff = if signal.chronic_strength > 0.0 {
                draft.chronic_count
            } else {
                rng.gen_range(0..=5)
            };
            let severe_eff = severe && signal.severity_strength > 0.0;
            let mut band = if severe_eff {
                if c_eff >= 3 {
                    3
                } else {
                    2
                }
            } else {
                match c_eff {
                    0 | 1 => 0,
                    2 | 3 => 1,
                    4 => {
                        if rng.gen_bool(0.5) {
                            3
                        } else {
                            2
                        }
                    }
                    _ => 3,
                }
            };
            if signal.label_noise > 0.0 && rng.gen_bool(signal.label_noise) {
                band = rng.gen_range(0..4usize);
            }

            let provider_id = loop {
                match band {
                    0 => {
                        break if rng.gen_bool(0.7) {
                            draft.home_clinic.clone()
                        } else {
                            pick(&mut rng, &geo.clinics[draft.home]).clone()
                        }
                    }
                    1 | 2 => {
                        let candidates = if band == 1 {
                            &geo.ring1[draft.home]
                        } else {
                            &geo.ring2[draft.home]
                        };
                        if candidates.is_empty() {
                            band -= 1;
                            continue;
                        }
                        let cell = *pick(&mut rng, candidates);
                        break pick(&mut rng, &geo.clinics[cell]).clone();
                    }
                    _ => {
                        let hubs = &geo.ring3_hubs[draft.home];
                        if signal.popularity_strength > 0.0 && !hubs.is_empty() {
                            let cell = *pick(&mut rng, hubs);
                            break format!(
                                "H{:02}{:02}_hub",
                                geo.grid[cell].row, geo.grid[cell].col
                            );
                        }
                        let any = &geo.ring3[draft.home];
                        if any.is_empty() {
                            band = 2;
                            continue;
                        }
                        let cell = *pick(&mut rng, any);
                        break pick(&mut rng, &geo.providers[cell]).clone();
                    }
                }
            };

            let primary = if severe && !is_emergency {
                pick(&mut rng, &cata_codes).to_string()
            } else if let Some(main) = draft.chronic_pool.first() {
                main.to_string()
            } else {
                pick(&mut rng, &acute_codes).to_string()
            };
            emit(&mut visits, &mut rng, &mut visit_no, provider_id, primary, is_emergency, severe);
        }
    }

    let mut patients: Vec<PatientRow> = drafts.into_iter().map(|d| d.row).collect();

    if cfg.plant_violations {
        plant_violations(
            cfg,
            &mut rng,
            &mut districts,
            &mut providers,
            &mut patients,
            &mut visits,
            &mut visit_no,
        );
    }

    let districts = DistrictTable::new(districts)?;
    Ok(RawCorpus {
        visits,
        patients,
        providers,
        districts,
        aux: AuxTables {
            calendar: build_calendar(&cfg.window),
            codes: CodeSets::default(),
        },
    })
}

/// Appends one instance of every exclusion category: bad patients, bad
/// visits, a provider with an unknown district, and an isolated
/// zero-physician island district.
#[allow(clippy::too_many_arguments)]
fn plant_violations(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    districts: &mut Vec<DistrictInfo>,
    providers: &mut Vec<ProviderProfile>,
    patients: &mut Vec<PatientRow>,
    visits: &mut Vec<VisitRow>,
    visit_no: &mut usize,
) {
    let anchor_district = districts[0].district_id.clone();
    let anchor_provider = providers[0].provider_id.clone();
    let date = cfg.window.start + chrono::Duration::days(30);
    let next = |visit_no: &mut usize| {
        let id = format!("V{:07}", *visit_no);
        *visit_no += 1;
        id
    };
    let base_patient = |id: &str| PatientRow {
        patient_id: id.to_string(),
        birthdate: Some(NaiveDate::from_ymd_opt(1950, 6, 1).unwrap()),
        gender: Some(Gender::Female),
        low_income: false,
        insured_identity: InsuredIdentity::TypeA,
        registered_district: anchor_district.clone(),
    };
    let base_visit = |id: String, patient: &str, provider: &str| VisitRow {
        visit_id: id,
        patient_id: patient.to_string(),
        provider_id: provider.to_string(),
        visit_date: Some(date),
        primary_diagnosis: "4650".to_string(),
        all_diagnoses: vec!["4650".to_string()],
        treatment_codes: vec!["OPD1".to_string()],
        is_emergency: false,
        triage_level: None,
        involves_surgery: false,
    };

    // Patient categories.
    let mut p = base_patient("BAD_NO_BIRTHDATE");
    p.birthdate = None;
    patients.push(p);
    visits.push(base_visit(next(visit_no), "BAD_NO_BIRTHDATE", &anchor_provider));

    let mut p = base_patient("BAD_NO_GENDER");
    p.gender = None;
    patients.push(p);
    visits.push(base_visit(next(visit_no), "BAD_NO_GENDER", &anchor_provider));

    patients.push(base_patient("BAD_TWO_GENDERS"));
    let mut p = base_patient("BAD_TWO_GENDERS");
    p.gender = Some(Gender::Male);
    patients.push(p);
    visits.push(base_visit(next(visit_no), "BAD_TWO_GENDERS", &anchor_provider));

    let mut p = base_patient("BAD_DISTRICT");
    p.registered_district = "NOWHERE".to_string();
    patients.push(p);
    visits.push(base_visit(next(visit_no), "BAD_DISTRICT", &anchor_provider));

    let mut p = base_patient("BAD_BORN_LATE");
    p.birthdate = Some(cfg.window.end + chrono::Duration::days(400));
    patients.push(p);
    visits.push(base_visit(next(visit_no), "BAD_BORN_LATE", &anchor_provider));

    patients.push(base_patient("BAD_NO_VISITS"));

    // Non-type-A, no flu codes, a single emergency record: the POR cascade
    // ends undetermined.
    let mut p = base_patient("BAD_POR");
    p.insured_identity = InsuredIdentity::Other;
    patients.push(p);
    let mut v = base_visit(next(visit_no), "BAD_POR", &anchor_provider);
    v.primary_diagnosis = "7800".to_string();
    v.all_diagnoses = vec!["7800".to_string()];
    v.is_emergency = true;
    v.triage_level = Some(4);
    visits.push(v);

    // Visit categories against an otherwise healthy patient.
    patients.push(base_patient("BAD_VISIT_HOST"));
    visits.push(base_visit(next(visit_no), "BAD_VISIT_HOST", &anchor_provider));
    let mut v = base_visit(next(visit_no), "BAD_VISIT_HOST", &anchor_provider);
    v.visit_date = None;
    visits.push(v);
    let mut v = base_visit(next(visit_no), "BAD_VISIT_HOST", &anchor_provider);
    v.visit_date = Some(cfg.window.start - chrono::Duration::days(90));
    visits.push(v);
    let mut v = base_visit(next(visit_no), "BAD_VISIT_HOST", &anchor_provider);
    v.primary_diagnosis = String::new();
    v.all_diagnoses = vec![];
    visits.push(v);
    visits.push(base_visit(next(visit_no), "BAD_VISIT_HOST", "NO_SUCH_PROVIDER"));
    visits.push(base_visit(next(visit_no), "GHOST_PATIENT", &anchor_provider));

    // Provider pointing at an unknown district.
    providers.push(ProviderProfile {
        provider_id: "H_LOST".to_string(),
        district: "NOWHERE".to_string(),
        level: ProviderLevel::Clinic,
    });

    // Isolated island district with zero reachable physicians: accessibility
    // flags it, and its visits fall to the no-accessibility rule.
    let island_id = "ISLE00".to_string();
    districts.push(DistrictInfo {
        district_id: island_id.clone(),
        centroid: (GRID_LAT0 + 8.0, GRID_LON0 + 8.0),
        region_group: RegionGroup::Island,
        population: 4_000 + rng.gen_range(0..1000),
        physicians: 0,
        neighbors: BTreeSet::new(),
    });
    providers.push(ProviderProfile {
        provider_id: "H_ISLE".to_string(),
        district: island_id.clone(),
        level: ProviderLevel::Clinic,
    });
    let mut p = base_patient("BAD_ISLANDER");
    p.registered_district = island_id;
    patients.push(p);
    visits.push(base_visit(next(visit_no), "BAD_ISLANDER", "H_ISLE"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::write_raw_corpus;
    use crate::geo::haversine_km;

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = SynthConfig::clean(7);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);

        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_raw_corpus(&a, dir_a.path()).unwrap();
        write_raw_corpus(&b, dir_b.path()).unwrap();
        for name in ["visits.csv", "patients.csv", "providers.csv", "districts.csv", "adjacency.csv", "calendar.csv", "codes.json"] {
            let bytes_a = std::fs::read(dir_a.path().join(name)).unwrap();
            let bytes_b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{name} differs");
        }

        let c = generate(&SynthConfig::clean(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn grid_adjacency_matches_distance_recomputation() {
        let cfg = SynthConfig::clean(3);
        let corpus = generate(&cfg).unwrap();
        let districts: Vec<_> = corpus.districts.iter().collect();
        for a in &districts {
            for b in &districts {
                if a.district_id == b.district_id {
                    assert!(!a.neighbors.contains(&b.district_id));
                    continue;
                }
                let km = haversine_km(a.centroid, b.centroid);
                let adjacent = a.neighbors.contains(&b.district_id);
                let within = km <= 1.5 * cfg.spacing_km;
                assert_eq!(adjacent, within, "{} - {}: {km} km", a.district_id, b.district_id);
                // Symmetry.
                assert_eq!(adjacent, b.neighbors.contains(&a.district_id));
            }
        }
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let mut cfg = SynthConfig::clean(1);
        cfg.grid_rows = 2;
        assert!(generate(&cfg).is_err());
        let mut cfg = SynthConfig::clean(1);
        cfg.patients = 0;
        assert!(generate(&cfg).is_err());
    }
}
