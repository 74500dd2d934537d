//! Declarative quality rubrics, study scoring and grade bands.
//!
//! Two rubrics ship built in: `miniscrew` (seven items, maximum 11) and
//! `crowding` (ten items with per-item caps). Others can be loaded from a
//! text file:
//!
//! ```text
//! name=my-rubric
//! item.design=Prospective design|0,2|2
//! item.blinding=Blinded assessment|0,1|1
//! band=0-1:Low
//! band=2-3:High
//! ```

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{MetaError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RubricItem {
    pub id: String,
    pub label: String,
    pub allowed: Vec<u32>,
    pub cap: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GradeBand {
    pub min: u32,
    pub max: u32,
    pub grade: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rubric {
    name: String,
    items: Vec<RubricItem>,
    bands: Vec<GradeBand>,
}

pub const BUILTIN_RUBRICS: [&str; 2] = ["miniscrew", "crowding"];

fn item(id: &str, label: &str, allowed: &[u32], cap: u32) -> RubricItem {
    RubricItem { id: id.into(), label: label.into(), allowed: allowed.to_vec(), cap }
}

fn band(min: u32, max: u32, grade: &str) -> GradeBand {
    GradeBand { min, max, grade: grade.into() }
}

impl Rubric {
    pub fn new(name: impl Into<String>, items: Vec<RubricItem>, bands: Vec<GradeBand>) -> Result<Self> {
        let rubric = Rubric { name: name.into(), items, bands };
        rubric.validate()?;
        Ok(rubric)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MetaError::InvalidRubric(format!("{}: {msg}", self.name)));
        if self.items.is_empty() {
            return bad("no items".into());
        }
        let mut ids = HashSet::new();
        for it in &self.items {
            if !ids.insert(it.id.as_str()) {
                return bad(format!("duplicate item `{}`", it.id));
            }
            if it.allowed.is_empty() {
                return bad(format!("item `{}` has no allowed values", it.id));
            }
            let top = *it.allowed.iter().max().unwrap();
            if it.cap < top {
                return bad(format!("item `{}` cap {} is below its largest allowed value {top}", it.id, it.cap));
            }
        }
        let mut next = 0;
        for b in &self.bands {
            if b.min != next || b.max < b.min {
                return bad(format!(
                    "bands must be contiguous from 0; band `{}` starts at {} (expected {next})",
                    b.grade, b.min
                ));
            }
            next = b.max + 1;
        }
        if next != self.max_total() + 1 {
            return bad(format!("bands end at {} but the rubric maximum is {}", next as i64 - 1, self.max_total()));
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "miniscrew" => Rubric::new(
                "miniscrew",
                vec![
                    item("selection", "Description of the selection process", &[0, 1, 2], 2),
                    item("design", "Prospective or retrospective", &[0, 2], 2),
                    item("consecutive", "Consecutive cases", &[0, 1], 1),
                    item("sample_size", "Sample size N >= 20", &[0, 1], 1),
                    item("outcome", "Selection of outcome measure", &[0, 1, 2], 2),
                    item("measurement_error", "Appropriateness of measurement error", &[0, 1, 2], 2),
                    item("statistics", "Appropriateness of statistical methods", &[0, 1], 1),
                ],
                vec![band(0, 6, "Low"), band(7, 8, "Medium"), band(9, 10, "Medium-high"), band(11, 11, "High")],
            ),
            "crowding" => Rubric::new(
                "crowding",
                vec![
                    item("study_type", "Study type (cross-sectional 1, longitudinal 2)", &[0, 1, 2], 2),
                    item("blinding", "Blinding", &[0, 2], 2),
                    item(
                        "reporting",
                        "Adequate reporting of subject criteria, distribution, methodology",
                        &[0, 1, 2, 3],
                        3,
                    ),
                    item("comparator", "Control group (different grades 1, normal occlusion 2)", &[0, 1, 2, 3], 3),
                    // Table rows award 3 here (visual plus radiographic)
                    item("caries_method", "Validity of caries recording (visual 1, radiographic 2)", &[0, 1, 2, 3], 3),
                    item(
                        "crowding_method",
                        "Validity of crowding recording (visual 1, quantitative index 2)",
                        &[0, 1, 2],
                        2,
                    ),
                    item("measurement_error", "Error of measurement, per factor", &[0, 1, 2], 2),
                    item("confounders", "Confounding factors considered, per factor", &[0, 1, 2, 3, 4, 5], 5),
                    item("subgrouping", "Subgrouping by age and crowding severity, per factor", &[0, 1, 2], 2),
                    item("coding", "Coding of subjects and variables", &[0, 1], 1),
                ],
                vec![band(0, 8, "Low"), band(9, 16, "Moderate"), band(17, 25, "High")],
            ),
            other => Err(MetaError::UnknownRubric { name: other.to_string(), available: BUILTIN_RUBRICS.join(", ") }),
        }
    }

    /// Parses the `key=value` rubric format shown in the module docs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut items = Vec::new();
        let mut bands = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |reason: String| MetaError::Parse { location: format!("rubric line {}", lineno + 1), reason };
            let (key, value) = line.split_once('=').ok_or_else(|| perr("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(id) = key.strip_prefix("item.") {
                let parts: Vec<&str> = value.split('|').map(str::trim).collect();
                let [label, allowed, cap] = parts[..] else {
                    return Err(perr("item must be `<label>|<allowed values>|<cap>`".into()));
                };
                let allowed = allowed
                    .split(',')
                    .map(|v| v.trim().parse::<u32>().map_err(|_| perr(format!("bad allowed value `{v}`"))))
                    .collect::<Result<Vec<_>>>()?;
                let cap = cap.parse::<u32>().map_err(|_| perr(format!("bad cap `{cap}`")))?;
                items.push(item(id, label, &allowed, cap));
            } else if key == "band" {
                let (range, grade) =
                    value.split_once(':').ok_or_else(|| perr("band must be `<min>-<max>:<grade>`".into()))?;
                let (lo, hi) = range.split_once('-').ok_or_else(|| perr(format!("bad band range `{range}`")))?;
                let lo = lo.trim().parse::<u32>().map_err(|_| perr(format!("bad band minimum `{lo}`")))?;
                let hi = hi.trim().parse::<u32>().map_err(|_| perr(format!("bad band maximum `{hi}`")))?;
                bands.push(band(lo, hi, grade.trim()));
            } else if key == "name" {
                name = Some(value.to_string());
            }
            // other metadata keys are accepted and ignored
        }
        let name =
            name.ok_or_else(|| MetaError::Parse { location: "rubric".into(), reason: "missing `name`".into() })?;
        Rubric::new(name, items, bands)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MetaError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn items(&self) -> &[RubricItem] {
        &self.items
    }

    pub fn bands(&self) -> &[GradeBand] {
        &self.bands
    }

    pub fn max_total(&self) -> u32 {
        self.items.iter().map(|i| i.cap).sum()
    }

    pub fn grade_for(&self, total: u32) -> Option<&str> {
        self.bands.iter().find(|b| b.min <= total && total <= b.max).map(|b| b.grade.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QualityScore {
    pub study_id: String,
    pub rubric: String,
    pub points: IndexMap<String, u32>,
    pub total: u32,
    pub grade: String,
}

/// Scores one study; `points` are the awarded values in rubric item order.
pub fn score_study(rubric: &Rubric, study_id: &str, points: &[u32]) -> Result<QualityScore> {
    if points.len() != rubric.items.len() {
        return Err(MetaError::InvalidParameter {
            name: "points".into(),
            reason: format!("rubric `{}` has {} items, got {} values", rubric.name, rubric.items.len(), points.len()),
        });
    }
    let mut awarded = IndexMap::new();
    for (it, &value) in rubric.items.iter().zip(points) {
        if !it.allowed.contains(&value) || value > it.cap {
            return Err(MetaError::ItemOutOfRange {
                item_id: it.id.clone(),
                value,
                allowed: it.allowed.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
                cap: it.cap,
            });
        }
        awarded.insert(it.id.clone(), value);
    }
    let total = awarded.values().sum();
    let grade = rubric.grade_for(total).expect("validated bands cover every total").to_string();
    Ok(QualityScore { study_id: study_id.to_string(), rubric: rubric.name.clone(), points: awarded, total, grade })
}

/// Count of studies per grade, with every band of the rubric present.
pub fn grade_distribution(rubric: &Rubric, scores: &[QualityScore]) -> Result<IndexMap<String, usize>> {
    let mut counts: IndexMap<String, usize> = rubric.bands.iter().map(|b| (b.grade.clone(), 0)).collect();
    for s in scores {
        if s.rubric != rubric.name {
            return Err(MetaError::MixedRubrics { expected: rubric.name.clone(), found: s.rubric.clone() });
        }
        *counts.get_mut(&s.grade).expect("grade comes from the same rubric") += 1;
    }
    Ok(counts)
}

/// Reads a scores CSV: `study_id` followed by one column per rubric item.
/// Blank cells and `-` count as 0.
pub fn load_scores(path: impl AsRef<Path>, rubric: &Rubric) -> Result<Vec<QualityScore>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| MetaError::io(path, e))?;
    read_scores(file, rubric)
}

pub fn read_scores<R: std::io::Read>(reader: R, rubric: &Rubric) -> Result<Vec<QualityScore>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let position = |col: &str| header.iter().position(|h| h == col);
    let id_col = position("study_id").ok_or_else(|| MetaError::MissingColumn { column: "study_id".into() })?;
    let cols = rubric
        .items
        .iter()
        .map(|it| position(&it.id).ok_or_else(|| MetaError::MissingColumn { column: it.id.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let study_id = record.get(id_col).unwrap_or("").to_string();
        if !seen.insert(study_id.clone()) {
            return Err(MetaError::DuplicateStudy(study_id));
        }
        let mut points = Vec::with_capacity(cols.len());
        for (it, &c) in rubric.items.iter().zip(&cols) {
            let raw = record.get(c).unwrap_or("");
            let value = match raw {
                "" | "-" => 0,
                s => s.parse::<u32>().map_err(|_| MetaError::InvalidRow {
                    row: i + 1,
                    study_id: study_id.clone(),
                    field: it.id.clone(),
                    reason: format!("expected a non-negative integer, got `{s}`"),
                })?,
            };
            points.push(value);
        }
        out.push(score_study(rubric, &study_id, &points)?);
    }
    Ok(out)
}
