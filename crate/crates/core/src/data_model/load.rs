//! CSV/JSON corpus loading and serialization.
//!
//! File set (UTF-8, RFC-4180, header rows): `visits.csv`, `patients.csv`,
//! `providers.csv`, `districts.csv`, `adjacency.csv` (undirected pairs),
//! `calendar.csv`, and `codes.json`. List-valued cells (diagnoses, treatment
//! codes) are semicolon-separated inside one field. Dates are ISO-8601.
//!
//! Malformed visit/patient/provider rows are skipped and reported with their
//! location; the structural tables (districts, adjacency, calendar, codes)
//! fail hard, since nothing downstream is meaningful without them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{CoreError, Result};

use super::{
    AuxTables, CodeSets, DayKind, DistrictInfo, DistrictTable, Gender, InsuredIdentity,
    PatientRow, ProviderLevel, ProviderProfile, RawCorpus, RegionGroup, VisitRow,
};

/// Locations of the corpus files.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub visits: PathBuf,
    pub patients: PathBuf,
    pub providers: PathBuf,
    pub districts: PathBuf,
    pub adjacency: PathBuf,
    pub calendar: PathBuf,
    /// Optional; stub defaults are used when the file does not exist.
    pub codes: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            visits: dir.join("visits.csv"),
            patients: dir.join("patients.csv"),
            providers: dir.join("providers.csv"),
            districts: dir.join("districts.csv"),
            adjacency: dir.join("adjacency.csv"),
            calendar: dir.join("calendar.csv"),
            codes: dir.join("codes.json"),
        }
    }
}

/// A skipped row and why.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParseIssue {
    pub location: String,
    pub message: String,
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("invalid date {s:?}"))
}

fn parse_opt_date(s: &str) -> std::result::Result<Option<NaiveDate>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_date(s).map(Some)
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("invalid boolean {s:?}")),
    }
}

fn parse_list(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(';').map(|c| c.to_string()).collect()
    }
}

fn join_list(items: &[String]) -> String {
    items.join(";")
}

fn parse_gender(s: &str) -> std::result::Result<Option<Gender>, String> {
    match s {
        "" => Ok(None),
        "male" => Ok(Some(Gender::Male)),
        "female" => Ok(Some(Gender::Female)),
        _ => Err(format!("invalid gender {s:?}")),
    }
}

fn gender_str(g: Option<Gender>) -> &'static str {
    match g {
        None => "",
        Some(Gender::Male) => "male",
        Some(Gender::Female) => "female",
    }
}

fn parse_identity(s: &str) -> std::result::Result<InsuredIdentity, String> {
    match s {
        "type_A" => Ok(InsuredIdentity::TypeA),
        "other" => Ok(InsuredIdentity::Other),
        _ => Err(format!("invalid insured identity {s:?}")),
    }
}

fn identity_str(i: InsuredIdentity) -> &'static str {
    match i {
        InsuredIdentity::TypeA => "type_A",
        InsuredIdentity::Other => "other",
    }
}

fn parse_level(s: &str) -> std::result::Result<ProviderLevel, String> {
    match s {
        "medical_center" => Ok(ProviderLevel::MedicalCenter),
        "regional" => Ok(ProviderLevel::Regional),
        "district_hospital" => Ok(ProviderLevel::DistrictHospital),
        "clinic" => Ok(ProviderLevel::Clinic),
        _ => Err(format!("invalid provider level {s:?}")),
    }
}

fn level_str(l: ProviderLevel) -> &'static str {
    match l {
        ProviderLevel::MedicalCenter => "medical_center",
        ProviderLevel::Regional => "regional",
        ProviderLevel::DistrictHospital => "district_hospital",
        ProviderLevel::Clinic => "clinic",
    }
}

fn parse_region(s: &str) -> std::result::Result<RegionGroup, String> {
    match s {
        "north" => Ok(RegionGroup::North),
        "central" => Ok(RegionGroup::Central),
        "south" => Ok(RegionGroup::South),
        "east" => Ok(RegionGroup::East),
        "island" => Ok(RegionGroup::Island),
        _ => Err(format!("invalid region group {s:?}")),
    }
}

fn region_str(r: RegionGroup) -> &'static str {
    match r {
        RegionGroup::North => "north",
        RegionGroup::Central => "central",
        RegionGroup::South => "south",
        RegionGroup::East => "east",
        RegionGroup::Island => "island",
    }
}

fn parse_triage(s: &str) -> std::result::Result<Option<u8>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    let level: u8 = s.parse().map_err(|_| format!("invalid triage level {s:?}"))?;
    if (1..=5).contains(&level) {
        Ok(Some(level))
    } else {
        Err(format!("triage level {level} outside 1..=5"))
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file)))
}

/// Runs `parse` over every record of a CSV file, collecting failed rows into
/// `issues`. Row numbers are 1-based data rows (the header is row 0).
fn read_rows<T>(
    path: &Path,
    issues: &mut Vec<ParseIssue>,
    parse: impl Fn(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let name = file_name(path);
    let mut reader = open_csv(path)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        match record {
            Err(e) => issues.push(ParseIssue {
                location: format!("{name}:{row_no}"),
                message: e.to_string(),
            }),
            Ok(rec) => match parse(&rec) {
                Ok(row) => rows.push(row),
                Err(message) => issues.push(ParseIssue {
                    location: format!("{name}:{row_no}"),
                    message,
                }),
            },
        }
    }
    Ok(rows)
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str) -> std::result::Result<&'a str, String> {
    rec.get(idx).ok_or_else(|| format!("missing column {name}"))
}

fn parse_visit(rec: &csv::StringRecord) -> std::result::Result<VisitRow, String> {
    Ok(VisitRow {
        visit_id: field(rec, 0, "visit_id")?.to_string(),
        patient_id: field(rec, 1, "patient_id")?.to_string(),
        provider_id: field(rec, 2, "provider_id")?.to_string(),
        visit_date: parse_opt_date(field(rec, 3, "visit_date")?)?,
        primary_diagnosis: field(rec, 4, "primary_diagnosis")?.to_string(),
        all_diagnoses: parse_list(field(rec, 5, "all_diagnoses")?),
        treatment_codes: parse_list(field(rec, 6, "treatment_codes")?),
        is_emergency: parse_bool(field(rec, 7, "is_emergency")?)?,
        triage_level: parse_triage(field(rec, 8, "triage_level")?)?,
        involves_surgery: parse_bool(field(rec, 9, "involves_surgery")?)?,
    })
}

fn parse_patient(rec: &csv::StringRecord) -> std::result::Result<PatientRow, String> {
    Ok(PatientRow {
        patient_id: field(rec, 0, "patient_id")?.to_string(),
        birthdate: parse_opt_date(field(rec, 1, "birthdate")?)?,
        gender: parse_gender(field(rec, 2, "gender")?)?,
        low_income: parse_bool(field(rec, 3, "low_income")?)?,
        insured_identity: parse_identity(field(rec, 4, "insured_identity")?)?,
        registered_district: field(rec, 5, "registered_district")?.to_string(),
    })
}

fn parse_provider(rec: &csv::StringRecord) -> std::result::Result<ProviderProfile, String> {
    Ok(ProviderProfile {
        provider_id: field(rec, 0, "provider_id")?.to_string(),
        district: field(rec, 1, "district")?.to_string(),
        level: parse_level(field(rec, 2, "level")?)?,
    })
}

fn load_districts(districts_path: &Path, adjacency_path: &Path) -> Result<DistrictTable> {
    let mut hard_issues = Vec::new();
    let mut infos: Vec<DistrictInfo> = read_rows(districts_path, &mut hard_issues, |rec| {
        Ok(DistrictInfo {
            district_id: field(rec, 0, "district_id")?.to_string(),
            centroid: (
                field(rec, 1, "latitude")?
                    .parse()
                    .map_err(|_| "invalid latitude".to_string())?,
                field(rec, 2, "longitude")?
                    .parse()
                    .map_err(|_| "invalid longitude".to_string())?,
            ),
            region_group: parse_region(field(rec, 3, "region_group")?)?,
            population: field(rec, 4, "population")?
                .parse()
                .map_err(|_| "invalid population".to_string())?,
            physicians: field(rec, 5, "physicians")?
                .parse()
                .map_err(|_| "invalid physician count".to_string())?,
            neighbors: BTreeSet::new(),
        })
    })?;
    let pairs: Vec<(String, String)> = read_rows(adjacency_path, &mut hard_issues, |rec| {
        Ok((
            field(rec, 0, "district_a")?.to_string(),
            field(rec, 1, "district_b")?.to_string(),
        ))
    })?;
    if let Some(issue) = hard_issues.first() {
        return Err(CoreError::parse(issue.location.clone(), issue.message.clone()));
    }

    let mut by_id: BTreeMap<String, DistrictInfo> = BTreeMap::new();
    for info in infos.drain(..) {
        if by_id.insert(info.district_id.clone(), info).is_some() {
            return Err(CoreError::Validation("duplicate district id".into()));
        }
    }
    for (a, b) in pairs {
        if a == b {
            return Err(CoreError::Validation(format!("self-adjacency for {a}")));
        }
        if !by_id.contains_key(&a) || !by_id.contains_key(&b) {
            return Err(CoreError::Validation(format!(
                "adjacency references unknown district: {a} - {b}"
            )));
        }
        by_id.get_mut(&a).unwrap().neighbors.insert(b.clone());
        by_id.get_mut(&b).unwrap().neighbors.insert(a);
    }
    DistrictTable::new(by_id.into_values().collect())
}

fn load_calendar(path: &Path) -> Result<BTreeMap<NaiveDate, DayKind>> {
    let mut hard_issues = Vec::new();
    let entries: Vec<(NaiveDate, DayKind)> = read_rows(path, &mut hard_issues, |rec| {
        let date = parse_date(field(rec, 0, "date")?)?;
        let kind = match field(rec, 1, "day_kind")? {
            "workday" => DayKind::Workday,
            "non_workday" => DayKind::NonWorkday,
            other => return Err(format!("invalid day kind {other:?}")),
        };
        Ok((date, kind))
    })?;
    if let Some(issue) = hard_issues.first() {
        return Err(CoreError::parse(issue.location.clone(), issue.message.clone()));
    }
    Ok(entries.into_iter().collect())
}

fn load_codes(path: &Path) -> Result<CodeSets> {
    if !path.exists() {
        return Ok(CodeSets::default());
    }
    let file = File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let codes: CodeSets = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CoreError::parse(file_name(path), e.to_string()))?;
    codes.validate()?;
    Ok(codes)
}

/// Loads the full corpus file set. Malformed visit/patient/provider rows are
/// skipped and returned as [`ParseIssue`]s; structural problems (bad district
/// geometry, asymmetric adjacency, malformed calendar) are errors.
pub fn load_corpus(paths: &CorpusPaths) -> Result<(RawCorpus, Vec<ParseIssue>)> {
    let mut issues = Vec::new();
    let visits = read_rows(&paths.visits, &mut issues, parse_visit)?;
    let patients = read_rows(&paths.patients, &mut issues, parse_patient)?;
    let providers = read_rows(&paths.providers, &mut issues, parse_provider)?;
    let districts = load_districts(&paths.districts, &paths.adjacency)?;
    let calendar = load_calendar(&paths.calendar)?;
    let codes = load_codes(&paths.codes)?;
    Ok((
        RawCorpus {
            visits,
            patients,
            providers,
            districts,
            aux: AuxTables { calendar, codes },
        },
        issues,
    ))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn wr<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CoreError + '_ {
    move |e| CoreError::Validation(format!("write {}: {e}", path.display()))
}

/// Serializes a raw corpus back to the schema [`load_corpus`] reads.
/// Deterministic: row order is preserved for visits/patients/providers and
/// sorted for the structural tables, so load-write round-trips byte-compare.
pub fn write_raw_corpus(raw: &RawCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let paths = CorpusPaths::in_dir(dir);

    let mut w = csv_writer(&paths.visits)?;
    w.write_record([
        "visit_id",
        "patient_id",
        "provider_id",
        "visit_date",
        "primary_diagnosis",
        "all_diagnoses",
        "treatment_codes",
        "is_emergency",
        "triage_level",
        "involves_surgery",
    ])
    .map_err(wr(&paths.visits))?;
    for v in &raw.visits {
        w.write_record([
            v.visit_id.as_str(),
            v.patient_id.as_str(),
            v.provider_id.as_str(),
            &v.visit_date.map(|d| d.to_string()).unwrap_or_default(),
            v.primary_diagnosis.as_str(),
            &join_list(&v.all_diagnoses),
            &join_list(&v.treatment_codes),
            if v.is_emergency { "true" } else { "false" },
            &v.triage_level.map(|t| t.to_string()).unwrap_or_default(),
            if v.involves_surgery { "true" } else { "false" },
        ])
        .map_err(wr(&paths.visits))?;
    }
    w.flush().map_err(|e| CoreError::io(paths.visits.display().to_string(), e))?;

    let mut w = csv_writer(&paths.patients)?;
    w.write_record([
        "patient_id",
        "birthdate",
        "gender",
        "low_income",
        "insured_identity",
        "registered_district",
    ])
    .map_err(wr(&paths.patients))?;
    for p in &raw.patients {
        w.write_record([
            p.patient_id.as_str(),
            &p.birthdate.map(|d| d.to_string()).unwrap_or_default(),
            gender_str(p.gender),
            if p.low_income { "true" } else { "false" },
            identity_str(p.insured_identity),
            p.registered_district.as_str(),
        ])
        .map_err(wr(&paths.patients))?;
    }
    w.flush().map_err(|e| CoreError::io(paths.patients.display().to_string(), e))?;

    let mut w = csv_writer(&paths.providers)?;
    w.write_record(["provider_id", "district", "level"]).map_err(wr(&paths.providers))?;
    for p in &raw.providers {
        w.write_record([p.provider_id.as_str(), p.district.as_str(), level_str(p.level)])
            .map_err(wr(&paths.providers))?;
    }
    w.flush().map_err(|e| CoreError::io(paths.providers.display().to_string(), e))?;

    let mut w = csv_writer(&paths.districts)?;
    w.write_record([
        "district_id",
        "latitude",
        "longitude",
        "region_group",
        "population",
        "physicians",
    ])
    .map_err(wr(&paths.districts))?;
    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    for d in raw.districts.iter() {
        w.write_record([
            d.district_id.as_str(),
            &d.centroid.0.to_string(),
            &d.centroid.1.to_string(),
            region_str(d.region_group),
            &d.population.to_string(),
            &d.physicians.to_string(),
        ])
        .map_err(wr(&paths.districts))?;
        for n in &d.neighbors {
            let (a, b) = if d.district_id < *n {
                (d.district_id.clone(), n.clone())
            } else {
                (n.clone(), d.district_id.clone())
            };
            pairs.insert((a, b));
        }
    }
    w.flush().map_err(|e| CoreError::io(paths.districts.display().to_string(), e))?;

    let mut w = csv_writer(&paths.adjacency)?;
    w.write_record(["district_a", "district_b"]).map_err(wr(&paths.adjacency))?;
    for (a, b) in &pairs {
        w.write_record([a.as_str(), b.as_str()]).map_err(wr(&paths.adjacency))?;
    }
    w.flush().map_err(|e| CoreError::io(paths.adjacency.display().to_string(), e))?;

    let mut w = csv_writer(&paths.calendar)?;
    w.write_record(["date", "day_kind"]).map_err(wr(&paths.calendar))?;
    for (date, kind) in &raw.aux.calendar {
        let kind = match kind {
            DayKind::Workday => "workday",
            DayKind::NonWorkday => "non_workday",
        };
        w.write_record([date.to_string().as_str(), kind]).map_err(wr(&paths.calendar))?;
    }
    w.flush().map_err(|e| CoreError::io(paths.calendar.display().to_string(), e))?;

    let file = File::create(&paths.codes).map_err(|e| CoreError::io(paths.codes.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &raw.aux.codes)
        .map_err(|e| CoreError::Validation(format!("write codes.json: {e}")))?;
    out.write_all(b"\n")
        .map_err(|e| CoreError::io(paths.codes.display().to_string(), e))?;
    out.flush().map_err(|e| CoreError::io(paths.codes.display().to_string(), e))?;
    Ok(())
}
