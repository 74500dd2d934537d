use metakit::heterogeneity::heterogeneity_report;
use metakit::pooling::pool;
use metakit::publication_bias::trim_and_fill;
use metakit::report::{forest_svg, funnel_svg, render_forest, ForestSpec};
use metakit::{EffectEstimate, Measure, Model};

fn effects(measure: Measure, data: &[(f64, f64)]) -> Vec<EffectEstimate> {
    data.iter()
        .enumerate()
        .map(|(i, &(v, var))| EffectEstimate::new(format!("S{}", i + 1), measure, v, var).unwrap())
        .collect()
}

/// Numeric value of `attr` on every element opening with `<tag` and carrying `class`.
fn attr_values(svg: &str, tag: &str, class: &str, attr: &str) -> Vec<String> {
    svg.lines()
        .filter(|l| l.trim_start().starts_with(&format!("<{tag} ")) && l.contains(&format!(r#"class="{class}""#)))
        .map(|l| {
            let key = format!(r#" {attr}=""#);
            let start = l.find(&key).unwrap_or_else(|| panic!("no {attr} in {l}")) + key.len();
            l[start..].split('"').next().unwrap().to_string()
        })
        .collect()
}

fn spec(measure: Measure, data: &[(f64, f64)]) -> ForestSpec {
    let es = effects(measure, data);
    let pooled = pool(&es, Model::Random, 0.95).unwrap();
    let het = heterogeneity_report(&es, 0.1).unwrap();
    ForestSpec::new(&es, &pooled, Some(&het)).unwrap()
}

const DATA: [(f64, f64); 5] = [(0.3, 0.04), (0.5, 0.09), (-0.1, 0.02), (0.8, 0.2), (0.2, 0.05)];

#[test]
fn forest_structure_linear() {
    let spec = spec(Measure::MeanDifference, &DATA);
    let svg = forest_svg(&spec).unwrap();
    assert!(svg.contains(r#"width="800" height="180""#));
    assert_eq!(attr_values(&svg, "rect", "study-square", "width").len(), 5);
    assert_eq!(attr_values(&svg, "line", "study-ci", "x1").len(), 5);
    assert_eq!(svg.matches(r#"class="summary-diamond""#).count(), 1);
    assert_eq!(attr_values(&svg, "line", "null-line", "data-value"), ["0"]);
    assert!(svg.contains("I\u{b2} = "));
    assert!(svg.contains("CI includes 0") || svg.contains("CI excludes 0"));

    // the heaviest study draws the largest square
    let widths: Vec<f64> =
        attr_values(&svg, "rect", "study-square", "width").iter().map(|w| w.parse().unwrap()).collect();
    let heaviest = spec.rows.iter().enumerate().max_by(|a, b| a.1.weight.total_cmp(&b.1.weight)).unwrap().0;
    assert!(widths.iter().all(|&w| w <= widths[heaviest]));
}

#[test]
fn forest_null_line_on_log_axis() {
    let spec = spec(Measure::LogOddsRatio, &DATA);
    let svg = forest_svg(&spec).unwrap();
    assert_eq!(attr_values(&svg, "line", "null-line", "data-value"), ["1"]);
    let null_x: f64 = attr_values(&svg, "line", "null-line", "x1")[0].parse().unwrap();
    // the tick labelled 1 sits at log(1) = 0, exactly where the null line is
    let tick_x: Vec<f64> = svg
        .lines()
        .filter(|l| l.contains(r#"class="tick-label""#) && l.ends_with(">1</text>"))
        .map(|l| {
            let start = l.find(r#" x=""#).unwrap() + 4;
            l[start..].split('"').next().unwrap().parse().unwrap()
        })
        .collect();
    assert_eq!(tick_x.len(), 1);
    assert!((tick_x[0] - null_x).abs() < 1e-9);
    // study squares are centred on their log-scale estimates, left of the null for negative effects
    let square_x: f64 = attr_values(&svg, "rect", "study-square", "x")[2].parse().unwrap();
    let side: f64 = attr_values(&svg, "rect", "study-square", "width")[2].parse().unwrap();
    assert!(square_x + side / 2.0 < null_x);
}

#[test]
fn forest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    render_forest(&spec(Measure::LogRiskRatio, &DATA), &a).unwrap();
    render_forest(&spec(Measure::LogRiskRatio, &DATA), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn forest_rejects_bad_weights() {
    let mut spec = spec(Measure::MeanDifference, &DATA);
    spec.rows[0].weight += 0.1;
    assert!(forest_svg(&spec).is_err());
    let mut spec = self::spec(Measure::MeanDifference, &DATA);
    spec.null_line = 1.0;
    assert!(forest_svg(&spec).is_err());
}

#[test]
fn funnel_fills_and_inverted_axis() {
    let es = effects(
        Measure::StandardizedMeanDifference,
        &[(0.0, 0.01), (0.05, 0.01), (-0.05, 0.01), (0.02, 0.02), (0.6, 0.2), (0.8, 0.3), (1.0, 0.4), (0.5, 0.15)],
    );
    let tf = trim_and_fill(&es, Model::Fixed, 0.95).unwrap();
    assert!(tf.k0 >= 1);
    let points = tf.funnel_points(&es);
    let svg = funnel_svg(&points, tf.original.estimate).unwrap();
    assert_eq!(attr_values(&svg, "circle", "funnel-point original", "fill"), vec!["white"; 8]);
    assert_eq!(attr_values(&svg, "circle", "funnel-point imputed", "fill"), vec!["black"; tf.k0]);

    // SE = 0 at the top, larger SE further down
    let ticks: Vec<(f64, f64)> = svg
        .lines()
        .filter(|l| l.contains(r#"class="y-tick""#))
        .map(|l| {
            let value = l.split(r#"data-value=""#).nth(1).unwrap().split('"').next().unwrap().parse().unwrap();
            let y = l.split(r#" y=""#).nth(1).unwrap().split('"').next().unwrap().parse().unwrap();
            (value, y)
        })
        .collect();
    assert!(ticks.len() >= 3);
    assert_eq!(ticks[0].0, 0.0);
    assert!(ticks.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));

    let cy: Vec<f64> =
        attr_values(&svg, "circle", "funnel-point original", "cy").iter().map(|v| v.parse().unwrap()).collect();
    assert!(cy[0] < cy[6], "precise study must sit above the imprecise one");
    assert_eq!(svg, funnel_svg(&points, tf.original.estimate).unwrap());
}
