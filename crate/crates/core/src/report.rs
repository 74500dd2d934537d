//! Forest and funnel plots (SVG) and the JSON analysis report.
//!
//! SVG output is built with plain string formatting and fixed decimal
//! precision, so identical inputs give byte-identical files. Elements carry
//! `class` attributes (`study-square`, `study-ci`, `summary-diamond`,
//! `null-line`, `funnel-point`) so the output can be inspected structurally.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;

use crate::distributions::normal_quantile;
use crate::effect_size::{EffectEstimate, Measure};
use crate::error::{MetaError, Result};
use crate::heterogeneity::{HeterogeneityReport, SubgroupReport};
use crate::pooling::{Model, PooledResult};
use crate::publication_bias::{FunnelPoint, StabilityVerdict, TrimFillResult};
use crate::quality::QualityScore;
use crate::sensitivity::{LeaveOneOutRow, RobustnessVerdict};
use crate::study_data::PrismaCounts;

const FOREST_WIDTH: f64 = 800.0;
const ROW_PITCH: f64 = 24.0;
const PLOT_LEFT: f64 = 230.0;
const PLOT_RIGHT: f64 = 570.0;
const MAX_SQUARE: f64 = 14.0;

/// Formats a p-value for display; anything below 0.001 prints as `<0.001`.
pub fn format_p(p: f64) -> String {
    if p < 1e-3 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestRow {
    pub label: String,
    /// Analysis scale.
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestSpec {
    pub measure: Measure,
    pub model: Model,
    pub ci_level: f64,
    pub rows: Vec<ForestRow>,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub p: f64,
    /// Display-scale null value: 0 for differences, 1 for ratios.
    pub null_line: f64,
    pub axis: AxisScale,
    pub heterogeneity: Option<HeterogeneityReport>,
}

impl ForestSpec {
    pub fn new(
        effects: &[EffectEstimate],
        pooled: &PooledResult,
        heterogeneity: Option<&HeterogeneityReport>,
    ) -> Result<Self> {
        let crit = normal_quantile(0.5 + pooled.ci_level / 2.0);
        let rows = effects
            .iter()
            .map(|e| {
                let weight = *pooled.weights.get(e.study_id()).ok_or_else(|| MetaError::InvalidParameter {
                    name: "effects".into(),
                    reason: format!("study `{}` is not part of the pooled result", e.study_id()),
                })?;
                Ok(ForestRow {
                    label: e.study_id().to_string(),
                    value: e.value(),
                    ci_low: e.value() - crit * e.se(),
                    ci_high: e.value() + crit * e.se(),
                    weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = ForestSpec {
            measure: pooled.measure,
            model: pooled.model,
            ci_level: pooled.ci_level,
            rows,
            estimate: pooled.estimate,
            ci_low: pooled.ci_low,
            ci_high: pooled.ci_high,
            z: pooled.z,
            p: pooled.p,
            null_line: pooled.measure.null_value(),
            axis: if pooled.measure.is_ratio() { AxisScale::Log } else { AxisScale::Linear },
            heterogeneity: heterogeneity.cloned(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.rows.iter().map(|r| r.weight).sum();
        if self.rows.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(MetaError::InvalidParameter {
                name: "weights".into(),
                reason: format!("must sum to 1, got {total}"),
            });
        }
        let expected_axis = if self.measure.is_ratio() { AxisScale::Log } else { AxisScale::Linear };
        if self.null_line != self.measure.null_value() || self.axis != expected_axis {
            return Err(MetaError::InvalidParameter {
                name: "null_line".into(),
                reason: format!(
                    "{} requires null line {} on a {:?} axis",
                    self.measure,
                    self.measure.null_value(),
                    expected_axis
                ),
            });
        }
        Ok(())
    }

    pub fn significant(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }

    pub fn height(&self) -> f64 {
        60.0 + ROW_PITCH * self.rows.len() as f64
    }

    fn to_display(&self, v: f64) -> f64 {
        self.measure.to_display(v)
    }
}

/// Maps analysis-scale values onto the horizontal plot band.
struct XAxis {
    lo: f64,
    hi: f64,
    left: f64,
    right: f64,
}

impl XAxis {
    fn fit(values: impl IntoIterator<Item = f64>, left: f64, right: f64) -> Self {
        let (mut lo, mut hi) =
            values.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if hi.is_nan() || hi <= lo {
            lo -= 1.0;
            hi += 1.0;
        }
        let pad = 0.05 * (hi - lo);
        XAxis { lo: lo - pad, hi: hi + pad, left, right }
    }

    fn map(&self, v: f64) -> f64 {
        self.left + (v - self.lo) / (self.hi - self.lo) * (self.right - self.left)
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let mult = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    mult * mag
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 5);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).map(|t| if t.abs() < step * 1e-9 { 0.0 } else { t }).collect()
}

/// Display-scale ticks at 1-2-5 steps per decade inside `[exp(lo), exp(hi)]`.
fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (dlo, dhi) = (lo.exp(), hi.exp());
    let mut ticks = Vec::new();
    for decade in (dlo.log10().floor() as i32)..=(dhi.log10().ceil() as i32) {
        for m in [1.0, 2.0, 5.0] {
            let t = m * 10f64.powi(decade);
            if t >= dlo && t <= dhi {
                ticks.push(t);
            }
        }
    }
    if ticks.len() > 9 {
        ticks.retain(|t| (t.log10() - t.log10().round()).abs() < 1e-9);
    }
    ticks
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn forest_svg(spec: &ForestSpec) -> Result<String> {
    spec.validate()?;
    let k = spec.rows.len();
    let height = spec.height();
    let axis = XAxis::fit(
        spec.rows.iter().flat_map(|r| [r.ci_low, r.ci_high]).chain([spec.ci_low, spec.ci_high, 0.0]),
        PLOT_LEFT,
        PLOT_RIGHT,
    );
    let pct = (spec.ci_level * 100.0).round();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{FOREST_WIDTH:.0}" height="{height:.0}" viewBox="0 0 {FOREST_WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{FOREST_WIDTH:.0}" height="{height:.0}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="14" font-weight="bold">Study</text>"#);
    let _ = writeln!(
        s,
        r#"<text x="580" y="14" font-weight="bold">{} [{pct:.0}% CI]</text>"#,
        spec.measure.display_label()
    );
    let _ = writeln!(s, r#"<text x="790" y="14" font-weight="bold" text-anchor="end">Weight</text>"#);

    // tick labels sit in the header band above the plot
    let ticks: Vec<(f64, f64)> = match spec.axis {
        AxisScale::Linear => linear_ticks(axis.lo, axis.hi).into_iter().map(|t| (t, t)).collect(),
        AxisScale::Log => log_ticks(axis.lo, axis.hi).into_iter().map(|t| (t.ln(), t)).collect(),
    };
    let bottom = 40.0 + ROW_PITCH * k as f64;
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{PLOT_LEFT:.2}" y1="20.00" x2="{PLOT_RIGHT:.2}" y2="20.00" stroke="black"/>"#
    );
    for (pos, label) in ticks {
        let x = axis.map(pos);
        let _ = writeln!(s, r#"<line class="tick" x1="{x:.2}" y1="17.00" x2="{x:.2}" y2="20.00" stroke="black"/>"#);
        let _ = writeln!(
            s,
            r#"<text class="tick-label" x="{x:.2}" y="14" text-anchor="middle">{}</text>"#,
            tick_label(label)
        );
    }

    let null_x = axis.map(0.0);
    let _ = writeln!(
        s,
        r##"<line class="null-line" data-value="{}" x1="{null_x:.2}" y1="20.00" x2="{null_x:.2}" y2="{bottom:.2}" stroke="#888888" stroke-dasharray="4,3"/>"##,
        tick_label(spec.null_line)
    );

    let max_w = spec.rows.iter().map(|r| r.weight).fold(0.0, f64::max);
    let scale = MAX_SQUARE / max_w.sqrt();
    for (i, row) in spec.rows.iter().enumerate() {
        let cy = 32.0 + ROW_PITCH * i as f64;
        let (x1, x2) = (axis.map(row.ci_low), axis.map(row.ci_high));
        let side = scale * row.weight.sqrt();
        let cx = axis.map(row.value);
        let label = escape(&row.label);
        let _ = writeln!(s, r#"<text x="10" y="{:.2}">{label}</text>"#, cy + 4.0);
        let _ = writeln!(
            s,
            r#"<line class="study-ci" data-study="{label}" x1="{x1:.2}" y1="{cy:.2}" x2="{x2:.2}" y2="{cy:.2}" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<rect class="study-square" data-study="{label}" x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="black"/>"#,
            cx - side / 2.0,
            cy - side / 2.0
        );
        let _ = writeln!(
            s,
            r#"<text x="580" y="{:.2}">{:.2} [{:.2}, {:.2}]</text>"#,
            cy + 4.0,
            spec.to_display(row.value),
            spec.to_display(row.ci_low),
            spec.to_display(row.ci_high)
        );
        let _ = writeln!(s, r#"<text x="790" y="{:.2}" text-anchor="end">{:.1}%</text>"#, cy + 4.0, row.weight * 100.0);
    }

    let cy = 30.0 + ROW_PITCH * k as f64;
    let (xl, xc, xr) = (axis.map(spec.ci_low), axis.map(spec.estimate), axis.map(spec.ci_high));
    let _ =
        writeln!(s, r#"<text x="10" y="{:.2}" font-weight="bold">Overall ({} effects)</text>"#, cy + 4.0, spec.model);
    let _ = writeln!(
        s,
        r#"<polygon class="summary-diamond" points="{xl:.2},{cy:.2} {xc:.2},{:.2} {xr:.2},{cy:.2} {xc:.2},{:.2}" fill="black"/>"#,
        cy - 7.0,
        cy + 7.0
    );
    let _ = writeln!(
        s,
        r#"<text x="580" y="{:.2}" font-weight="bold">{:.2} [{:.2}, {:.2}]</text>"#,
        cy + 4.0,
        spec.to_display(spec.estimate),
        spec.to_display(spec.ci_low),
        spec.to_display(spec.ci_high)
    );
    let _ = writeln!(s, r#"<text x="790" y="{:.2}" text-anchor="end" font-weight="bold">100.0%</text>"#, cy + 4.0);

    let null = tick_label(spec.null_line);
    let verdict = if spec.significant() {
        format!("CI excludes {null}: significant difference")
    } else {
        format!("CI includes {null}: no significant difference")
    };
    let mut footer = String::new();
    if let Some(h) = &spec.heterogeneity {
        let _ = write!(footer, "Q = {:.2}, df = {}, p = {}, I\u{b2} = {:.1}% | ", h.q, h.df, format_p(h.p), h.i2);
    }
    let _ = write!(footer, "z = {:.2}, p = {} | {verdict}", spec.z, format_p(spec.p));
    let _ = writeln!(s, r#"<text class="footer" x="10" y="{:.2}">{}</text>"#, height - 4.0, escape(&footer));
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_forest(spec: &ForestSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, forest_svg(spec)?).map_err(|e| MetaError::io(path, e))
}

const FUNNEL_WIDTH: f64 = 600.0;
const FUNNEL_HEIGHT: f64 = 450.0;
const FUNNEL_LEFT: f64 = 60.0;
const FUNNEL_RIGHT: f64 = 580.0;
const FUNNEL_TOP: f64 = 30.0;
const FUNNEL_BOTTOM: f64 = 400.0;

/// Funnel plot with standard error on an inverted vertical axis (0 at the
/// top). Original studies are white circles, imputed ones black.
pub fn funnel_svg(points: &[FunnelPoint], pooled: f64) -> Result<String> {
    if points.is_empty() {
        return Err(MetaError::insufficient(1, 0));
    }
    let max_se = points.iter().map(|p| p.y).fold(0.0, f64::max);
    let se_top = max_se * 1.1;
    let limit = 1.959_963_984_540_054 * se_top;
    let axis =
        XAxis::fit(points.iter().map(|p| p.x).chain([pooled - limit, pooled + limit]), FUNNEL_LEFT, FUNNEL_RIGHT);
    let y_of = |se: f64| FUNNEL_TOP + se / se_top * (FUNNEL_BOTTOM - FUNNEL_TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{FUNNEL_WIDTH:.0}" height="{FUNNEL_HEIGHT:.0}" viewBox="0 0 {FUNNEL_WIDTH:.0} {FUNNEL_HEIGHT:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{FUNNEL_WIDTH:.0}" height="{FUNNEL_HEIGHT:.0}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{FUNNEL_LEFT:.2}" y="{FUNNEL_TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        FUNNEL_RIGHT - FUNNEL_LEFT,
        FUNNEL_BOTTOM - FUNNEL_TOP
    );

    for t in linear_ticks(0.0, se_top) {
        let y = y_of(t);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{:.2}" y1="{y:.2}" x2="{FUNNEL_LEFT:.2}" y2="{y:.2}" stroke="black"/>"#,
            FUNNEL_LEFT - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text class="y-tick" data-value="{}" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            tick_label(t),
            FUNNEL_LEFT - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    for t in linear_ticks(axis.lo, axis.hi) {
        let x = axis.map(t);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{x:.2}" y1="{FUNNEL_BOTTOM:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            FUNNEL_BOTTOM + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text class="x-tick" x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            FUNNEL_BOTTOM + 16.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Effect size</text>"#,
        (FUNNEL_LEFT + FUNNEL_RIGHT) / 2.0,
        FUNNEL_BOTTOM + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Standard error</text>"#,
        (FUNNEL_TOP + FUNNEL_BOTTOM) / 2.0,
        (FUNNEL_TOP + FUNNEL_BOTTOM) / 2.0
    );

    let (x0, y0) = (axis.map(pooled), y_of(0.0));
    let yb = y_of(se_top);
    let _ = writeln!(
        s,
        r##"<polyline class="funnel-limit" points="{:.2},{yb:.2} {x0:.2},{y0:.2} {:.2},{yb:.2}" fill="none" stroke="#888888" stroke-dasharray="4,3"/>"##,
        axis.map(pooled - limit),
        axis.map(pooled + limit)
    );
    let _ = writeln!(
        s,
        r#"<line class="pooled-line" x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{yb:.2}" stroke="black"/>"#
    );

    for p in points {
        let (class, fill) = if p.imputed { ("imputed", "black") } else { ("original", "white") };
        let _ = writeln!(
            s,
            r#"<circle class="funnel-point {class}" data-study="{}" cx="{:.2}" cy="{:.2}" r="4" fill="{fill}" stroke="black"/>"#,
            escape(&p.study_id),
            axis.map(p.x),
            y_of(p.y)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_funnel(points: &[FunnelPoint], pooled: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, funnel_svg(points, pooled)?).map_err(|e| MetaError::io(path, e))
}

/// Exponentiated estimate and CI for ratio measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplayScale {
    pub measure: &'static str,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn display_for(measure: Measure, estimate: f64, ci_low: f64, ci_high: f64) -> Option<DisplayScale> {
    measure.is_ratio().then(|| DisplayScale {
        measure: measure.display_label(),
        estimate: measure.to_display(estimate),
        ci_low: measure.to_display(ci_low),
        ci_high: measure.to_display(ci_high),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectJson {
    #[serde(flatten)]
    pub effect: EffectEstimate,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub display: Option<DisplayScale>,
}

impl EffectJson {
    pub fn new(effect: &EffectEstimate, ci_level: f64) -> Self {
        let crit = normal_quantile(0.5 + ci_level / 2.0);
        let (lo, hi) = (effect.value() - crit * effect.se(), effect.value() + crit * effect.se());
        EffectJson {
            effect: effect.clone(),
            se: effect.se(),
            ci_low: lo,
            ci_high: hi,
            display: display_for(effect.measure(), effect.value(), lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledJson {
    #[serde(flatten)]
    pub result: PooledResult,
    pub significant: bool,
    pub p_display: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub display: Option<DisplayScale>,
}

impl From<&PooledResult> for PooledJson {
    fn from(r: &PooledResult) -> Self {
        PooledJson {
            result: r.clone(),
            significant: r.significant(),
            p_display: format_p(r.p),
            display: display_for(r.measure, r.estimate, r.ci_low, r.ci_high),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneityJson {
    #[serde(flatten)]
    pub report: HeterogeneityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subgroups: Option<SubgroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasJson {
    pub side: crate::publication_bias::Side,
    pub k0: usize,
    pub iterations: usize,
    pub trimmed_estimate: f64,
    pub imputed: Vec<EffectEstimate>,
    pub original: PooledJson,
    pub adjusted: PooledJson,
    pub funnel: Vec<FunnelPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityVerdict>,
}

impl BiasJson {
    pub fn new(result: &TrimFillResult, effects: &[EffectEstimate], stability: Option<StabilityVerdict>) -> Self {
        BiasJson {
            side: result.side,
            k0: result.k0,
            iterations: result.iterations,
            trimmed_estimate: result.trimmed_estimate,
            imputed: result.imputed.clone(),
            original: (&result.original).into(),
            adjusted: (&result.adjusted).into(),
            funnel: result.funnel_points(effects),
            stability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRowJson {
    pub omitted_study_id: String,
    pub sign_flip: bool,
    pub result: PooledJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityJson {
    pub full: PooledJson,
    pub rows: Vec<SensitivityRowJson>,
    pub verdict: RobustnessVerdict,
}

impl SensitivityJson {
    pub fn new(rows: &[LeaveOneOutRow], full: &PooledResult, verdict: RobustnessVerdict) -> Self {
        SensitivityJson {
            full: full.into(),
            rows: rows
                .iter()
                .map(|r| SensitivityRowJson {
                    omitted_study_id: r.omitted_study_id.clone(),
                    sign_flip: r.sign_flip,
                    result: (&r.result).into(),
                })
                .collect(),
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityJson {
    pub rubric: String,
    pub max_total: u32,
    pub scores: Vec<QualityScore>,
    pub distribution: IndexMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrismaJson {
    pub counts: PrismaCounts,
    pub identified: u64,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub path: String,
    pub kind: String,
    pub k: usize,
    pub measure: Measure,
    pub model: Model,
    pub ci_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub invocation: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetInfo>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Meta {
    pub fn new(invocation: Vec<String>) -> Self {
        Meta {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            dataset: None,
            notes: Vec::new(),
        }
    }
}

/// Top-level JSON document; sections appear only when computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub meta: Meta,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effects: Option<Vec<EffectJson>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<PooledJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<HeterogeneityJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prisma: Option<PrismaJson>,
}

impl AnalysisReport {
    pub fn new(meta: Meta) -> Self {
        AnalysisReport {
            meta,
            effects: None,
            pooled: None,
            heterogeneity: None,
            bias: None,
            sensitivity: None,
            quality: None,
            prisma: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heterogeneity::heterogeneity_report;
    use crate::pooling::pool;

    fn eff(measure: Measure, values: &[(f64, f64)]) -> Vec<EffectEstimate> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(y, v))| EffectEstimate::new(format!("Study {i}"), measure, y, v).unwrap())
            .collect()
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.0), "<0.001");
        assert_eq!(format_p(0.000_999), "<0.001");
        assert_eq!(format_p(0.001), "0.001");
        assert_eq!(format_p(0.0456), "0.046");
    }

    #[test]
    fn forest_canvas_and_significance_text() {
        let e = eff(Measure::MeanDifference, &[(-2.0, 0.1), (-2.5, 0.2), (-3.0, 0.15), (-1.8, 0.3), (-2.2, 0.1)]);
        let pooled = pool(&e, Model::Random, 0.95).unwrap();
        let het = heterogeneity_report(&e, 0.1).unwrap();
        let spec = ForestSpec::new(&e, &pooled, Some(&het)).unwrap();
        let svg = forest_svg(&spec).unwrap();
        assert!(svg.contains(r#"width="800" height="180""#));
        assert!(svg.contains("CI excludes 0: significant difference"));
        assert!(svg.contains("I\u{b2} = "));
    }

    #[test]
    fn forest_rejects_bad_null_line() {
        let e = eff(Measure::LogOddsRatio, &[(0.1, 0.1), (0.3, 0.2)]);
        let pooled = pool(&e, Model::Fixed, 0.95).unwrap();
        let mut spec = ForestSpec::new(&e, &pooled, None).unwrap();
        assert_eq!((spec.null_line, spec.axis), (1.0, AxisScale::Log));
        spec.null_line = 0.0;
        assert!(forest_svg(&spec).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let e = vec![
            EffectEstimate::new("A & B <2012>", Measure::MeanDifference, 0.1, 0.1).unwrap(),
            EffectEstimate::new("C", Measure::MeanDifference, 0.3, 0.2).unwrap(),
        ];
        let pooled = pool(&e, Model::Fixed, 0.95).unwrap();
        let svg = forest_svg(&ForestSpec::new(&e, &pooled, None).unwrap()).unwrap();
        assert!(svg.contains("A &amp; B &lt;2012&gt;"));
    }

    #[test]
    fn ticks() {
        assert_eq!(linear_ticks(-0.3, 2.1), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(log_ticks(0.5f64.ln(), 3f64.ln()), vec![0.5, 1.0, 2.0]);
        assert_eq!(tick_label(0.5), "0.5");
        assert_eq!(tick_label(2.0), "2");
    }
}
