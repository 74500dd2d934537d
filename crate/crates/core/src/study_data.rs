//! Study-level input records, CSV ingestion and PRISMA flow counts.
//!
//! Every record type validates on construction, so a value that exists
//! always satisfies its invariants. Datasets preserve the row order of the
//! file they were read from; that order is the study order used by every
//! report.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Continuous,
    Binary,
    Correlation,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Continuous => "continuous",
            DatasetKind::Binary => "binary",
            DatasetKind::Correlation => "correlation",
        }
    }

    /// Required CSV columns, in canonical order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            DatasetKind::Continuous => &["study_id", "n_e", "mean_e", "sd_e", "n_c", "mean_c", "sd_c"],
            DatasetKind::Binary => &["study_id", "events_e", "total_e", "events_c", "total_c"],
            DatasetKind::Correlation => &["study_id", "r", "n"],
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(DatasetKind::Continuous),
            "binary" => Ok(DatasetKind::Binary),
            "correlation" => Ok(DatasetKind::Correlation),
            other => Err(MetaError::InvalidParameter {
                name: "kind".into(),
                reason: format!("unknown dataset kind `{other}` (expected continuous, binary or correlation)"),
            }),
        }
    }
}

fn invalid(study_id: &str, field: &str, reason: impl Into<String>) -> MetaError {
    MetaError::InvalidStudy { study_id: study_id.to_string(), field: field.to_string(), reason: reason.into() }
}

fn check_id(study_id: &str) -> Result<()> {
    if study_id.trim().is_empty() {
        return Err(invalid(study_id, "study_id", "must be non-empty"));
    }
    Ok(())
}

fn normalize_subgroup(subgroup: Option<String>) -> Option<String> {
    subgroup.filter(|s| !s.trim().is_empty())
}

/// One arm of a two-group continuous comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub n: u64,
    pub mean: f64,
    pub sd: f64,
}

impl Arm {
    pub fn new(n: u64, mean: f64, sd: f64) -> Self {
        Arm { n, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousStudy {
    study_id: String,
    experimental: Arm,
    control: Arm,
    subgroup: Option<String>,
}

impl ContinuousStudy {
    pub fn new(study_id: impl Into<String>, experimental: Arm, control: Arm, subgroup: Option<String>) -> Result<Self> {
        let study_id = study_id.into();
        check_id(&study_id)?;
        for (arm, suffix) in [(&experimental, "e"), (&control, "c")] {
            if arm.n < 2 {
                return Err(invalid(&study_id, &format!("n_{suffix}"), format!("must be at least 2, got {}", arm.n)));
            }
            if !arm.mean.is_finite() {
                return Err(invalid(&study_id, &format!("mean_{suffix}"), "must be finite"));
            }
            if !(arm.sd.is_finite() && arm.sd > 0.0) {
                return Err(invalid(
                    &study_id,
                    &format!("sd_{suffix}"),
                    format!("must be positive and finite, got {}", arm.sd),
                ));
            }
        }
        Ok(ContinuousStudy { study_id, experimental, control, subgroup: normalize_subgroup(subgroup) })
    }

    pub fn study_id(&self) -> &str {
        &self.study_id
    }

    pub fn experimental(&self) -> &Arm {
        &self.experimental
    }

    pub fn control(&self) -> &Arm {
        &self.control
    }

    pub fn subgroup(&self) -> Option<&str> {
        self.subgroup.as_deref()
    }

    pub fn with_arms_swapped(&self) -> Self {
        ContinuousStudy {
            study_id: self.study_id.clone(),
            experimental: self.control,
            control: self.experimental,
            subgroup: self.subgroup.clone(),
        }
    }
}

/// A 2x2 table: `a`/`b` are events/non-events in the experimental arm,
/// `c`/`d` the same for the control arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BinaryStudy {
    study_id: String,
    a: u64,
    b: u64,
    c: u64,
    d: u64,
    subgroup: Option<String>,
}

impl BinaryStudy {
    pub fn from_cells(
        study_id: impl Into<String>,
        a: u64,
        b: u64,
        c: u64,
        d: u64,
        subgroup: Option<String>,
    ) -> Result<Self> {
        let study_id = study_id.into();
        check_id(&study_id)?;
        if a + b == 0 {
            return Err(invalid(&study_id, "total_e", "experimental arm is empty"));
        }
        if c + d == 0 {
            return Err(invalid(&study_id, "total_c", "control arm is empty"));
        }
        Ok(BinaryStudy { study_id, a, b, c, d, subgroup: normalize_subgroup(subgroup) })
    }

    /// Builds the table from per-arm event counts and arm totals.
    pub fn from_events(
        study_id: impl Into<String>,
        events_e: u64,
        total_e: u64,
        events_c: u64,
        total_c: u64,
        subgroup: Option<String>,
    ) -> Result<Self> {
        let study_id = study_id.into();
        check_id(&study_id)?;
        if events_e > total_e {
            return Err(invalid(&study_id, "events_e", format!("events ({events_e}) exceed total ({total_e})")));
        }
        if events_c > total_c {
            return Err(invalid(&study_id, "events_c", format!("events ({events_c}) exceed total ({total_c})")));
        }
        Self::from_cells(study_id, events_e, total_e - events_e, events_c, total_c - events_c, subgroup)
    }

    pub fn study_id(&self) -> &str {
        &self.study_id
    }

    pub fn cells(&self) -> [u64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn events_e(&self) -> u64 {
        self.a
    }

    pub fn total_e(&self) -> u64 {
        self.a + self.b
    }

    pub fn events_c(&self) -> u64 {
        self.c
    }

    pub fn total_c(&self) -> u64 {
        self.c + self.d
    }

    pub fn subgroup(&self) -> Option<&str> {
        self.subgroup.as_deref()
    }

    pub fn with_arms_swapped(&self) -> Self {
        BinaryStudy {
            study_id: self.study_id.clone(),
            a: self.c,
            b: self.d,
            c: self.a,
            d: self.b,
            subgroup: self.subgroup.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationStudy {
    study_id: String,
    r: f64,
    n: u64,
    subgroup: Option<String>,
}

impl CorrelationStudy {
    pub fn new(study_id: impl Into<String>, r: f64, n: u64, subgroup: Option<String>) -> Result<Self> {
        let study_id = study_id.into();
        check_id(&study_id)?;
        if !(r.is_finite() && r.abs() < 1.0) {
            return Err(invalid(&study_id, "r", format!("|r| < 1 required, got {r}")));
        }
        if n < 4 {
            return Err(invalid(&study_id, "n", format!("must be at least 4, got {n}")));
        }
        Ok(CorrelationStudy { study_id, r, n, subgroup: normalize_subgroup(subgroup) })
    }

    pub fn study_id(&self) -> &str {
        &self.study_id
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn subgroup(&self) -> Option<&str> {
        self.subgroup.as_deref()
    }
}

/// A homogeneous collection of studies in file order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "studies", rename_all = "lowercase")]
pub enum Dataset {
    Continuous(Vec<ContinuousStudy>),
    Binary(Vec<BinaryStudy>),
    Correlation(Vec<CorrelationStudy>),
}

impl Dataset {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Dataset::Continuous(_) => DatasetKind::Continuous,
            Dataset::Binary(_) => DatasetKind::Binary,
            Dataset::Correlation(_) => DatasetKind::Correlation,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Continuous(s) => s.len(),
            Dataset::Binary(s) => s.len(),
            Dataset::Correlation(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn study_ids(&self) -> Vec<&str> {
        match self {
            Dataset::Continuous(s) => s.iter().map(|x| x.study_id()).collect(),
            Dataset::Binary(s) => s.iter().map(|x| x.study_id()).collect(),
            Dataset::Correlation(s) => s.iter().map(|x| x.study_id()).collect(),
        }
    }

    /// Checks study_id uniqueness across the collection.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.study_ids() {
            if !seen.insert(id) {
                return Err(MetaError::DuplicateStudy(id.to_string()));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.kind().columns().to_vec();
        header.push("subgroup");
        w.write_record(&header)?;
        let opt = |s: Option<&str>| s.unwrap_or("").to_string();
        match self {
            Dataset::Continuous(studies) => {
                for s in studies {
                    let (e, c) = (s.experimental(), s.control());
                    w.write_record([
                        s.study_id().to_string(),
                        e.n.to_string(),
                        e.mean.to_string(),
                        e.sd.to_string(),
                        c.n.to_string(),
                        c.mean.to_string(),
                        c.sd.to_string(),
                        opt(s.subgroup()),
                    ])?;
                }
            }
            Dataset::Binary(studies) => {
                for s in studies {
                    w.write_record([
                        s.study_id().to_string(),
                        s.events_e().to_string(),
                        s.total_e().to_string(),
                        s.events_c().to_string(),
                        s.total_c().to_string(),
                        opt(s.subgroup()),
                    ])?;
                }
            }
            Dataset::Correlation(studies) => {
                for s in studies {
                    w.write_record([
                        s.study_id().to_string(),
                        s.r().to_string(),
                        s.n().to_string(),
                        opt(s.subgroup()),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| MetaError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits UTF-8"))
    }
}

/// Guesses the dataset kind from a CSV header row.
pub fn detect_kind(header: &[&str]) -> Option<DatasetKind> {
    [DatasetKind::Continuous, DatasetKind::Binary, DatasetKind::Correlation]
        .into_iter()
        .find(|kind| kind.columns().iter().all(|c| header.contains(c)))
}

pub fn load_dataset(path: impl AsRef<Path>, kind: DatasetKind) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MetaError::io(path, e))?;
    read_dataset(file, kind)
}

/// Reads the header of a CSV file and infers its dataset kind.
pub fn sniff_kind(path: impl AsRef<Path>) -> Result<DatasetKind> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MetaError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    detect_kind(&cols).ok_or_else(|| MetaError::Parse {
        location: path.display().to_string(),
        reason: format!("header `{}` matches no known dataset schema", cols.join(",")),
    })
}

struct RowCtx<'a> {
    row: usize,
    study_id: &'a str,
}

impl RowCtx<'_> {
    fn err(&self, field: &str, reason: impl Into<String>) -> MetaError {
        MetaError::InvalidRow {
            row: self.row,
            study_id: self.study_id.to_string(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn int(&self, field: &str, raw: &str) -> Result<u64> {
        raw.parse::<u64>().map_err(|_| self.err(field, format!("expected a non-negative integer, got `{raw}`")))
    }

    fn real(&self, field: &str, raw: &str) -> Result<f64> {
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(field, format!("expected a finite decimal number, got `{raw}`"))),
        }
    }
}

pub fn read_dataset<R: Read>(reader: R, kind: DatasetKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let required = kind.columns();
    let mut index = IndexMap::new();
    for (i, name) in header.iter().enumerate() {
        if !required.contains(&name) && name != "subgroup" {
            return Err(MetaError::UnexpectedColumn { column: name.to_string() });
        }
        index.insert(name.to_string(), i);
    }
    for col in required {
        if !index.contains_key(*col) {
            return Err(MetaError::MissingColumn { column: col.to_string() });
        }
    }
    let subgroup_idx = index.get("subgroup").copied();

    let mut continuous = Vec::new();
    let mut binary = Vec::new();
    let mut correlation = Vec::new();
    let mut seen = HashSet::new();

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let get = |col: &str| record.get(index[col]).unwrap_or("");
        let study_id = get("study_id");
        let ctx = RowCtx { row, study_id };
        if study_id.is_empty() {
            return Err(ctx.err("study_id", "must be non-empty"));
        }
        if !seen.insert(study_id.to_string()) {
            return Err(MetaError::DuplicateStudy(study_id.to_string()));
        }
        let subgroup = subgroup_idx.and_then(|j| record.get(j)).filter(|s| !s.is_empty()).map(str::to_string);
        let lift = |e: MetaError| match e {
            MetaError::InvalidStudy { field, reason, .. } => ctx.err(&field, reason),
            other => other,
        };
        match kind {
            DatasetKind::Continuous => {
                let e = Arm::new(
                    ctx.int("n_e", get("n_e"))?,
                    ctx.real("mean_e", get("mean_e"))?,
                    ctx.real("sd_e", get("sd_e"))?,
                );
                let c = Arm::new(
                    ctx.int("n_c", get("n_c"))?,
                    ctx.real("mean_c", get("mean_c"))?,
                    ctx.real("sd_c", get("sd_c"))?,
                );
                continuous.push(ContinuousStudy::new(study_id, e, c, subgroup).map_err(lift)?);
            }
            DatasetKind::Binary => {
                let study = BinaryStudy::from_events(
                    study_id,
                    ctx.int("events_e", get("events_e"))?,
                    ctx.int("total_e", get("total_e"))?,
                    ctx.int("events_c", get("events_c"))?,
                    ctx.int("total_c", get("total_c"))?,
                    subgroup,
                )
                .map_err(lift)?;
                binary.push(study);
            }
            DatasetKind::Correlation => {
                let study =
                    CorrelationStudy::new(study_id, ctx.real("r", get("r"))?, ctx.int("n", get("n"))?, subgroup)
                        .map_err(lift)?;
                correlation.push(study);
            }
        }
    }

    Ok(match kind {
        DatasetKind::Continuous => Dataset::Continuous(continuous),
        DatasetKind::Binary => Dataset::Binary(binary),
        DatasetKind::Correlation => Dataset::Correlation(correlation),
    })
}

/// Record counts at each stage of a systematic-review screening flow.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrismaCounts {
    pub identified_db: u64,
    pub identified_other: u64,
    pub after_dedup: u64,
    pub records_excluded: u64,
    pub fulltext_assessed: u64,
    pub fulltext_excluded: IndexMap<String, u64>,
    pub included: u64,
}

impl PrismaCounts {
    pub fn identified(&self) -> u64 {
        self.identified_db + self.identified_other
    }

    pub fn fulltext_excluded_total(&self) -> u64 {
        self.fulltext_excluded.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(MetaError::PrismaInconsistent(msg));
        if self.after_dedup > self.identified() {
            return fail(format!(
                "after_dedup ({}) > identified_db + identified_other ({})",
                self.after_dedup,
                self.identified()
            ));
        }
        if self.records_excluded > self.after_dedup {
            return fail(format!("records_excluded ({}) > after_dedup ({})", self.records_excluded, self.after_dedup));
        }
        let screened_in = self.after_dedup - self.records_excluded;
        if self.fulltext_assessed > screened_in {
            return fail(format!(
                "fulltext_assessed ({}) > after_dedup - records_excluded ({screened_in})",
                self.fulltext_assessed
            ));
        }
        let excluded = self.fulltext_excluded_total();
        if excluded > self.fulltext_assessed || self.included != self.fulltext_assessed - excluded {
            return fail(format!(
                "included ({}) != fulltext_assessed ({}) - sum of fulltext_excluded ({excluded})",
                self.included, self.fulltext_assessed
            ));
        }
        Ok(())
    }

    /// Parses the `key=value` counts format. Exclusion reasons are given as
    /// `excluded.<reason>=<count>`; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut counts = PrismaCounts::default();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let location = format!("line {}", lineno + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| MetaError::Parse { location: location.clone(), reason: "expected key=value".into() })?;
            let (key, value) = (key.trim(), value.trim());
            let value: u64 = value.parse().map_err(|_| MetaError::Parse {
                location: location.clone(),
                reason: format!("`{value}` is not a non-negative integer count"),
            })?;
            if !seen.insert(key.to_string()) {
                return Err(MetaError::Parse { location, reason: format!("duplicate key `{key}`") });
            }
            if let Some(reason) = key.strip_prefix("excluded.") {
                counts.fulltext_excluded.insert(reason.to_string(), value);
                continue;
            }
            let slot = match key {
                "identified_db" => &mut counts.identified_db,
                "identified_other" => &mut counts.identified_other,
                "after_dedup" => &mut counts.after_dedup,
                "records_excluded" => &mut counts.records_excluded,
                "fulltext_assessed" => &mut counts.fulltext_assessed,
                "included" => &mut counts.included,
                other => return Err(MetaError::Parse { location, reason: format!("unknown key `{other}`") }),
            };
            *slot = value;
        }
        for key in
            ["identified_db", "identified_other", "after_dedup", "records_excluded", "fulltext_assessed", "included"]
        {
            if !seen.contains(key) {
                return Err(MetaError::Parse {
                    location: "counts file".into(),
                    reason: format!("missing key `{key}`"),
                });
            }
        }
        Ok(counts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MetaError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Fixed-layout text rendering of a screening flow: five stage lines plus
/// one indented line per full-text exclusion reason.
pub fn prisma_summary(counts: &PrismaCounts) -> Result<String> {
    counts.validate()?;
    let mut out = String::new();
    out.push_str(&format!(
        "Records identified: {} (database searching {}, other sources {})\n",
        counts.identified(),
        counts.identified_db,
        counts.identified_other
    ));
    out.push_str(&format!("Records after duplicates removed: {}\n", counts.after_dedup));
    out.push_str(&format!("Records excluded at screening: {}\n", counts.records_excluded));
    out.push_str(&format!(
        "Full-text articles assessed: {} (excluded: {})\n",
        counts.fulltext_assessed,
        counts.fulltext_excluded_total()
    ));
    for (reason, n) in &counts.fulltext_excluded {
        out.push_str(&format!("    {reason}: {n}\n"));
    }
    out.push_str(&format!("Studies included in meta-analysis: {}\n", counts.included));
    Ok(out)
}
