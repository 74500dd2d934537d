//! Command-line front end. Exit codes: 0 success, 1 validation or I/O
//! error, 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::effect_size::{compute_effects, ContinuityPolicy, EffectEstimate, EffectOptions, Measure};
use crate::error::{MetaError, Result};
use crate::heterogeneity::{heterogeneity_report, subgroup_analysis, DEFAULT_ALPHA};
use crate::pooling::{pool, Model};
use crate::publication_bias::{compare_adjusted, trim_and_fill};
use crate::quality::{grade_distribution, load_scores, Rubric, BUILTIN_RUBRICS};
use crate::report::{
    render_forest, render_funnel, AnalysisReport, BiasJson, DatasetInfo, EffectJson, ForestSpec, HeterogeneityJson,
    Meta, PooledJson, PrismaJson, QualityJson, SensitivityJson,
};
use crate::sensitivity::{leave_one_out, robustness_verdict};
use crate::study_data::{load_dataset, prisma_summary, sniff_kind, DatasetKind, PrismaCounts};

#[derive(Debug, Parser)]
#[command(name = "metakit", version, about = "Meta-analysis of study summary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-study effect sizes
    Effects(DataArgs),
    /// Pooled estimate with heterogeneity; `--plot` writes a forest plot
    Pool(AnalysisArgs),
    /// Q-test, I-squared and optional subgroup decomposition
    Heterogeneity {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Decompose Q by the subgroup column
        #[arg(long)]
        by_subgroup: bool,
    },
    /// Trim-and-fill adjustment; `--plot` writes a funnel plot
    Bias {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Largest |original - adjusted| still considered stable
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Leave-one-out re-analysis
    Sensitivity(AnalysisArgs),
    /// Score studies against a quality rubric
    Quality {
        /// Scores CSV: study_id plus one column per rubric item
        #[arg(long = "in")]
        input: PathBuf,
        /// Built-in rubric name or path to a rubric file
        #[arg(long)]
        rubric: String,
        /// Write JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PRISMA flow summary from a key=value counts file
    Prisma {
        #[arg(long = "in")]
        input: PathBuf,
        /// Emit JSON instead of the text summary
        #[arg(long)]
        json: bool,
        /// Write output here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline
    Report {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Funnel plot output path
        #[arg(long)]
        funnel_plot: Option<PathBuf>,
        /// Largest |original - adjusted| still considered stable
        #[arg(long)]
        threshold: Option<f64>,
        /// Quality scores CSV (requires --rubric)
        #[arg(long, requires = "rubric")]
        quality: Option<PathBuf>,
        /// Built-in rubric name or path to a rubric file
        #[arg(long)]
        rubric: Option<String>,
        /// PRISMA counts file
        #[arg(long)]
        prisma: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Continuous,
    Binary,
    Correlation,
}

impl From<KindArg> for DatasetKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Continuous => DatasetKind::Continuous,
            KindArg::Binary => DatasetKind::Binary,
            KindArg::Correlation => DatasetKind::Correlation,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureArg {
    Md,
    Smd,
    Or,
    Rr,
    Z,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Md => Measure::MeanDifference,
            MeasureArg::Smd => Measure::StandardizedMeanDifference,
            MeasureArg::Or => Measure::LogOddsRatio,
            MeasureArg::Rr => Measure::LogRiskRatio,
            MeasureArg::Z => Measure::FisherZ,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Fixed,
    Random,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Fixed => Model::Fixed,
            ModelArg::Random => Model::Random,
        }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Study CSV file
    #[arg(long = "in")]
    input: PathBuf,
    /// Dataset kind; inferred from --measure or the CSV header when omitted
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
    /// Confidence level
    #[arg(long, default_value_t = 0.95)]
    ci: f64,
    /// Apply Hedges' small-sample correction to SMD
    #[arg(long)]
    hedges: bool,
    /// Constant added to every cell of a 2x2 table containing a zero
    #[arg(long, default_value_t = 0.5)]
    continuity: f64,
    /// Write JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "random")]
    model: ModelArg,
    /// Significance level for the heterogeneity Q-test
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha_het: f64,
    /// Plot output path (SVG)
    #[arg(long)]
    plot: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Invalid(MetaError),
}

impl From<MetaError> for Failure {
    fn from(e: MetaError) -> Self {
        Failure::Invalid(e)
    }
}

struct Loaded {
    path: PathBuf,
    kind: DatasetKind,
    measure: Measure,
    ci: f64,
    effects: Vec<EffectEstimate>,
}

fn resolve_kind_measure(args: &DataArgs) -> std::result::Result<(DatasetKind, Measure), Failure> {
    let kind: Option<DatasetKind> = args.kind.map(Into::into);
    let measure: Option<Measure> = args.measure.map(Into::into);
    match (kind, measure) {
        (Some(k), Some(m)) if m.dataset_kind() != k => {
            Err(Failure::Usage(format!("--measure {} does not apply to --kind {k}", m.label())))
        }
        (Some(k), Some(m)) => Ok((k, m)),
        (None, Some(m)) => Ok((m.dataset_kind(), m)),
        (Some(k), None) => Ok((k, Measure::default_for(k))),
        (None, None) => {
            let k = sniff_kind(&args.input)?;
            Ok((k, Measure::default_for(k)))
        }
    }
}

fn load(args: &DataArgs) -> std::result::Result<Loaded, Failure> {
    let (kind, measure) = resolve_kind_measure(args)?;
    let dataset = load_dataset(&args.input, kind)?;
    let options = EffectOptions { hedges: args.hedges, continuity: ContinuityPolicy::new(args.continuity)? };
    let effects = compute_effects(&dataset, measure, options)?;
    Ok(Loaded { path: args.input.clone(), kind, measure, ci: args.ci, effects })
}

fn meta_for(invocation: &[String], loaded: &Loaded, model: Model) -> Meta {
    let mut meta = Meta::new(invocation.to_vec());
    meta.dataset = Some(DatasetInfo {
        path: loaded.path.display().to_string(),
        kind: loaded.kind.to_string(),
        k: loaded.effects.len(),
        measure: loaded.measure,
        model,
        ci_level: loaded.ci,
    });
    meta
}

fn effects_json(loaded: &Loaded) -> Vec<EffectJson> {
    loaded.effects.iter().map(|e| EffectJson::new(e, loaded.ci)).collect()
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| MetaError::io(path, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| MetaError::io("<stdout>", e)),
    }
}

fn load_rubric(spec: &str) -> Result<Rubric> {
    if BUILTIN_RUBRICS.contains(&spec) || !Path::new(spec).exists() {
        Rubric::builtin(spec)
    } else {
        Rubric::load(spec)
    }
}

fn quality_json(scores_path: &Path, rubric: &str) -> Result<QualityJson> {
    let rubric = load_rubric(rubric)?;
    let scores = load_scores(scores_path, &rubric)?;
    let distribution = grade_distribution(&rubric, &scores)?;
    Ok(QualityJson { rubric: rubric.name().to_string(), max_total: rubric.max_total(), scores, distribution })
}

fn prisma_json(path: &Path) -> Result<PrismaJson> {
    let counts = PrismaCounts::load(path)?;
    let summary = prisma_summary(&counts)?;
    Ok(PrismaJson { identified: counts.identified(), counts, summary })
}

fn execute(cli: Cli, invocation: &[String], stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Effects(args) => {
            let loaded = load(&args)?;
            let mut report = AnalysisReport::new(meta_for(invocation, &loaded, Model::Fixed));
            report.meta.dataset.as_mut().expect("set above").model = Model::Fixed;
            report.effects = Some(effects_json(&loaded));
            emit(&report.to_json(), args.out.as_deref(), stdout)?;
        }
        Command::Pool(a) => {
            let loaded = load(&a.data)?;
            let model = a.model.into();
            let pooled = pool(&loaded.effects, model, loaded.ci)?;
            let het = heterogeneity_report(&loaded.effects, a.alpha_het)?;
            if let Some(plot) = &a.plot {
                render_forest(&ForestSpec::new(&loaded.effects, &pooled, Some(&het))?, plot)?;
            }
            let mut report = AnalysisReport::new(meta_for(invocation, &loaded, model));
            report.effects = Some(effects_json(&loaded));
            report.pooled = Some((&pooled).into());
            report.heterogeneity = Some(HeterogeneityJson { report: het, subgroups: None });
            emit(&report.to_json(), a.data.out.as_deref(), stdout)?;
        }
        Command::Heterogeneity { analysis: a, by_subgroup } => {
            let loaded = load(&a.data)?;
            let model = a.model.into();
            let het = heterogeneity_report(&loaded.effects, a.alpha_het)?;
            let subgroups =
                if by_subgroup { Some(subgroup_analysis(&loaded.effects, model, loaded.ci)?) } else { None };
            if let Some(plot) = &a.plot {
                let pooled = pool(&loaded.effects, model, loaded.ci)?;
                render_forest(&ForestSpec::new(&loaded.effects, &pooled, Some(&het))?, plot)?;
            }
            let mut report = AnalysisReport::new(meta_for(invocation, &loaded, model));
            report.heterogeneity = Some(HeterogeneityJson { report: het, subgroups });
            emit(&report.to_json(), a.data.out.as_deref(), stdout)?;
        }
        Command::Bias { analysis: a, threshold } => {
            let loaded = load(&a.data)?;
            let model = a.model.into();
            let tf = trim_and_fill(&loaded.effects, model, loaded.ci)?;
            let stability = threshold.map(|t| compare_adjusted(&tf, t)).transpose()?;
            if let Some(plot) = &a.plot {
                render_funnel(&tf.funnel_points(&loaded.effects), tf.original.estimate, plot)?;
            }
            let mut report = AnalysisReport::new(meta_for(invocation, &loaded, model));
            report.bias = Some(BiasJson::new(&tf, &loaded.effects, stability));
            emit(&report.to_json(), a.data.out.as_deref(), stdout)?;
        }
        Command::Sensitivity(a) => {
            let loaded = load(&a.data)?;
            let model = a.model.into();
            let full = pool(&loaded.effects, model, loaded.ci)?;
            let rows = leave_one_out(&loaded.effects, model, loaded.ci)?;
            let verdict = robustness_verdict(&rows, &full);
            let mut report = AnalysisReport::new(meta_for(invocation, &loaded, model));
            report.sensitivity = Some(SensitivityJson::new(&rows, &full, verdict));
            emit(&report.to_json(), a.data.out.as_deref(), stdout)?;
        }
        Command::Quality { input, rubric, out } => {
            let mut report = AnalysisReport::new(Meta::new(invocation.to_vec()));
            report.quality = Some(quality_json(&input, &rubric)?);
            emit(&report.to_json(), out.as_deref(), stdout)?;
        }
        Command::Prisma { input, json, out } => {
            let prisma = prisma_json(&input)?;
            if json {
                let mut report = AnalysisReport::new(Meta::new(invocation.to_vec()));
                report.prisma = Some(prisma);
                emit(&report.to_json(), out.as_deref(), stdout)?;
            } else {
                emit(&prisma.summary, out.as_deref(), stdout)?;
            }
        }
        Command::Report { analysis: a, funnel_plot, threshold, quality, rubric, prisma } => {
            let loaded = load(&a.data)?;
            let model = a.model.into();
            let mut report = AnalysisReport::new(meta_for(invocation, &loaded, model));
            let pooled = pool(&loaded.effects, model, loaded.ci)?;
            let het = heterogeneity_report(&loaded.effects, a.alpha_het)?;
            if let Some(plot) = &a.plot {
                render_forest(&ForestSpec::new(&loaded.effects, &pooled, Some(&het))?, plot)?;
            }
            let labelled = loaded.effects.iter().all(|e| e.subgroup().is_some());
            let subgroups = if labelled { subgroup_analysis(&loaded.effects, model, loaded.ci).ok() } else { None };

            if loaded.effects.len() >= 3 {
                let tf = trim_and_fill(&loaded.effects, model, loaded.ci)?;
                let stability = threshold.map(|t| compare_adjusted(&tf, t)).transpose()?;
                if let Some(path) = &funnel_plot {
                    render_funnel(&tf.funnel_points(&loaded.effects), tf.original.estimate, path)?;
                }
                report.bias = Some(BiasJson::new(&tf, &loaded.effects, stability));
                let rows = leave_one_out(&loaded.effects, model, loaded.ci)?;
                let verdict = robustness_verdict(&rows, &pooled);
                report.sensitivity = Some(SensitivityJson::new(&rows, &pooled, verdict));
            } else {
                report.meta.notes.push("trim-and-fill and leave-one-out skipped: fewer than 3 studies".into());
            }
            if let (Some(scores), Some(rubric)) = (&quality, &rubric) {
                report.quality = Some(quality_json(scores, rubric)?);
            }
            if let Some(path) = &prisma {
                report.prisma = Some(prisma_json(path)?);
            }
            report.effects = Some(effects_json(&loaded));
            report.pooled = Some(PooledJson::from(&pooled));
            report.heterogeneity = Some(HeterogeneityJson { report: het, subgroups });
            emit(&report.to_json(), a.data.out.as_deref(), stdout)?;
        }
    }
    Ok(())
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    let invocation: Vec<String> = argv.iter().skip(1).cloned().collect();
    match execute(cli, &invocation, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
        Err(Failure::Invalid(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
