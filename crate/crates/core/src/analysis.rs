//! Correlation of metric scores with CG accuracy, and report assembly.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cgtask::CgSuiteResult;
use crate::classify::ProbeKind;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, Aggregation, MetricReport};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + LANCZOS_G + 0.5;
    let series = LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |acc, (k, &c)| acc + c / (x + k as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// `r √(n-2) / √(1-r²)`; infinite with the sign of `r` when `|r| = 1`.
pub fn t_statistic(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return f64::INFINITY.copysign(r);
    }
    r * ((n as f64) - 2.0).sqrt() / (1.0 - r * r).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    /// Infinite when `|r| = 1`; serialized as `"+inf"` / `"-inf"`.
    #[serde(serialize_with = "ser_t", deserialize_with = "de_t")]
    pub t: f64,
    /// Two-sided; floored at `f64::MIN_POSITIVE`.
    pub p: f64,
}

fn ser_t<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if t.is_infinite() {
        s.serialize_str(if *t > 0.0 { "+inf" } else { "-inf" })
    } else {
        s.serialize_f64(*t)
    }
}

fn de_t<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) if s == "+inf" => Ok(f64::INFINITY),
        Raw::Text(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Raw::Text(s) => Err(serde::de::Error::custom(format!("bad t statistic `{s}`"))),
    }
}

impl CorrelationResult {
    /// Significance of a known coefficient over `n` samples.
    pub fn from_r(r: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("correlation needs n >= 3, got {n}")));
        }
        if !(-1.0..=1.0).contains(&r) {
            return Err(Error::invalid(format!("coefficient {r} outside [-1, 1]")));
        }
        let t = t_statistic(r, n);
        let p = student_t_two_sided(t, (n - 2) as f64).max(f64::MIN_POSITIVE);
        Ok(Self { r, n, t, p })
    }
}

/// Sample Pearson correlation with its t-test.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!("correlation needs n >= 3, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("correlation inputs must be finite"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // rounding residue of a constant column
    let flat = |v: &[f64], ss: f64| {
        let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        ss <= n as f64 * (4.0 * f64::EPSILON * scale).powi(2)
    };
    if flat(x, sxx) {
        return Err(Error::ZeroVariance("x".into()));
    }
    if flat(y, syy) {
        return Err(Error::ZeroVariance("y".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    CorrelationResult::from_r(r, n)
}

/// How per-factor baseline scores (MIG, SAP, probe accuracies) collapse to
/// one number per run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineAggregation {
    /// Mean over every factor.
    #[default]
    MeanAll,
    /// Mean over the subset.
    MeanSubset,
    /// Product over the subset.
    ProductSubset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationOptions {
    /// Factor names SNC/NK are multiplied over. `None` uses the two factors
    /// of each run's CG pairs.
    pub subset: Option<Vec<String>>,
    pub baseline: BaselineAggregation,
    /// Probe whose average joint novel-combination accuracy is the target.
    pub probe: ProbeKind,
    /// Restrict to these metric columns. `None` correlates all of them.
    pub columns: Option<Vec<String>>,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        Self {
            subset: None,
            baseline: BaselineAggregation::MeanAll,
            probe: ProbeKind::Mlp,
            columns: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub schema_version: u32,
    pub target: String,
    /// Metric name → correlation with the target, in column order.
    pub columns: Vec<(String, CorrelationResult)>,
    /// Per-run metric values, same order as `columns`.
    pub metric_values: Vec<Vec<f64>>,
    pub target_values: Vec<f64>,
    pub options: CorrelationOptions,
}

impl CorrelationTable {
    pub fn get(&self, metric: &str) -> Option<&CorrelationResult> {
        self.columns.iter().find(|(k, _)| k == metric).map(|(_, v)| v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn text_table(&self) -> String {
        let mut out = format!("correlation with {} over n runs\n", self.target);
        let _ = writeln!(out, "{:<10} {:>8} {:>4} {:>10} {:>12}", "metric", "r", "n", "t", "p");
        for (name, c) in &self.columns {
            let t = if c.t.is_infinite() {
                if c.t > 0.0 { "+inf".to_string() } else { "-inf".to_string() }
            } else {
                format!("{:.3}", c.t)
            };
            let _ = writeln!(out, "{name:<10} {:>8.3} {:>4} {t:>10} {:>12.3e}", c.r, c.n, c.p);
        }
        out
    }
}

const SUBSET_METRICS: [&str; 2] = ["snc", "nk"];
const ALL_COLUMNS: [&str; 8] = ["snc", "nk", "mig", "sap", "dci", "mlp", "linear", "mean_snc"];

fn run_subset(report: &MetricReport, cg: &CgSuiteResult, options: &CorrelationOptions, run: usize) -> Result<Vec<usize>> {
    let lookup = |name: &str| {
        report
            .factors
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::invalid(format!("run {run}: factor `{name}` missing from the metric report")))
    };
    for r in &cg.runs {
        for name in &r.factor_names {
            lookup(name)?;
        }
    }
    match &options.subset {
        Some(names) => names.iter().map(|n| lookup(n)).collect(),
        None => {
            let first = cg
                .runs
                .first()
                .ok_or_else(|| Error::invalid(format!("run {run}: CG result has no runs")))?;
            if cg.runs.iter().any(|r| r.factor_names != first.factor_names) {
                return Err(Error::invalid(format!(
                    "run {run}: CG pairs use different factors; pass an explicit subset"
                )));
            }
            first.factor_names.iter().map(|n| lookup(n)).collect()
        }
    }
}

fn metric_value(
    report: &MetricReport,
    column: &str,
    subset: &[usize],
    baseline: BaselineAggregation,
) -> Result<Option<f64>> {
    if column == "dci" {
        return Ok(Some(report.dci.avg_dc));
    }
    let (source, mode) = if column == "mean_snc" {
        ("snc", Aggregation::Mean)
    } else if SUBSET_METRICS.contains(&column) {
        (column, Aggregation::ProductOver(subset.to_vec()))
    } else {
        let mode = match baseline {
            BaselineAggregation::MeanAll => Aggregation::Mean,
            BaselineAggregation::MeanSubset => Aggregation::MeanOver(subset.to_vec()),
            BaselineAggregation::ProductSubset => Aggregation::ProductOver(subset.to_vec()),
        };
        (column, mode)
    };
    match report.per_factor.get(source) {
        Some(scores) if !scores.is_empty() => Ok(Some(aggregate(scores, &mode)?)),
        _ => Ok(None),
    }
}

/// One [`CorrelationResult`] per metric column against the runs' average
/// joint CG accuracy. `reports[k]` and `cg[k]` must describe the same run.
///
/// SNC and NK are multiplied over the subset; `mean_snc` is SNC averaged
/// over every factor; `dci` is `avg(D, C)`; the remaining baselines follow
/// `options.baseline`.
pub fn correlate_metrics_with_cg(
    reports: &[MetricReport],
    cg: &[CgSuiteResult],
    options: &CorrelationOptions,
) -> Result<CorrelationTable> {
    if reports.len() != cg.len() {
        return Err(Error::invalid(format!(
            "{} metric reports but {} CG results",
            reports.len(),
            cg.len()
        )));
    }
    if reports.len() < 3 {
        return Err(Error::invalid(format!("correlation needs at least 3 runs, got {}", reports.len())));
    }
    let columns: Vec<String> = match &options.columns {
        Some(cols) => {
            for c in cols {
                if !ALL_COLUMNS.contains(&c.as_str()) {
                    return Err(Error::invalid(format!("unknown metric column `{c}`")));
                }
            }
            cols.clone()
        }
        None => ALL_COLUMNS.iter().map(|s| s.to_string()).collect(),
    };
    let mut target_values = Vec::with_capacity(reports.len());
    let mut per_run: Vec<Vec<Option<f64>>> = Vec::with_capacity(reports.len());
    for (k, (report, suite)) in reports.iter().zip(cg).enumerate() {
        let subset = run_subset(report, suite, options, k)?;
        let avg = suite.average(options.probe).ok_or_else(|| {
            Error::invalid(format!("run {k}: CG result has no {:?} probe average", options.probe))
        })?;
        target_values.push(avg.novel.both);
        per_run.push(
            columns
                .iter()
                .map(|c| metric_value(report, c, &subset, options.baseline))
                .collect::<Result<_>>()?,
        );
    }

    let mut results = Vec::new();
    let mut kept = Vec::new();
    for (ci, name) in columns.iter().enumerate() {
        let values: Option<Vec<f64>> = per_run.iter().map(|row| row[ci]).collect();
        let Some(values) = values else {
            if options.columns.is_some() {
                return Err(Error::invalid(format!("metric `{name}` missing from some reports")));
            }
            continue;
        };
        let c = pearson(&values, &target_values).map_err(|e| match e {
            Error::ZeroVariance(which) if which == "x" => Error::ZeroVariance(format!("metric column `{name}`")),
            Error::ZeroVariance(_) => Error::ZeroVariance("CG target".into()),
            other => other,
        })?;
        results.push((name.clone(), c));
        kept.push(ci);
    }
    let metric_values = per_run
        .iter()
        .map(|row| kept.iter().map(|&ci| row[ci].unwrap_or(f64::NAN)).collect())
        .collect();
    Ok(CorrelationTable {
        schema_version: crate::metrics::REPORT_SCHEMA_VERSION,
        target: format!("{:?} joint CG accuracy", options.probe).to_lowercase(),
        columns: results,
        metric_values,
        target_values,
        options: options.clone(),
    })
}

/// Markdown summary of metric reports, CG suites and an optional
/// correlation table.
pub fn render_report(
    metrics: &[(String, MetricReport)],
    cg: &[(String, CgSuiteResult)],
    correlation: Option<&CorrelationTable>,
) -> String {
    let mut out = String::from("# Disentanglement report\n");
    for (name, report) in metrics {
        let _ = write!(out, "\n## Metrics: {name}\n\n```\n{}```\n", report.text_table());
    }
    for (name, suite) in cg {
        let _ = write!(out, "\n## Compositional generalization: {name}\n\n```\n{}```\n", suite.text_table());
        for run in &suite.runs {
            let _ = writeln!(
                out,
                "- {:?} {}={} {}={}: both {:.3} (raw {:.3}), control both {:.3}, leaked rows {}",
                run.probe,
                run.factor_names[0],
                run.pair.value_a,
                run.factor_names[1],
                run.pair.value_b,
                run.novel.both,
                run.novel.raw_both,
                run.control.both,
                run.audit.leaked_rows
            );
        }
    }
    if let Some(table) = correlation {
        let _ = write!(out, "\n## Correlation\n\n```\n{}```\n", table.text_table());
    }
    out
}
