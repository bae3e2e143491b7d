//! Effect tables, CSV/JSON exports and distance-curve SVGs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{BucketSummary, EffectTest, ExperimentAnalysis};
use crate::batteries::ExperimentKind;

pub const SCHEMA_VERSION: &str = "1";
pub const CSV_HEADER: &str = "experiment,mean_a,mean_b,p,t,df,n_items";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("a distance curve needs at least two buckets, got {0}")]
    TooFewBuckets(usize),
    #[error("unsupported report schema version {found:?}, expected {SCHEMA_VERSION:?}")]
    Schema { found: String },
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed report csv: {0}")]
    CsvShape(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub model: String,
    pub backend: String,
    pub config_digest: String,
    /// False when a priming battery's catch trials fell at or below the
    /// validity threshold; absent when no catch trials ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_valid: Option<bool>,
    #[serde(default)]
    pub assumptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub schema_version: String,
    pub meta: RunMeta,
    pub experiments: Vec<ExperimentAnalysis>,
}

/// Assumptions recorded with every report.
pub fn default_assumptions() -> Vec<String> {
    vec![
        "two-sample tests are Student's pooled-variance t-test unless configured otherwise".into(),
        "mean_a is the unrelated, incongruent or small-anchor condition; t = (mean_a - mean_b) / se".into(),
        "SNARC values are averaged per (digit, variant) over included spacing levels".into(),
    ]
}

impl EffectReport {
    pub fn new(mut meta: RunMeta, experiments: Vec<ExperimentAnalysis>) -> Self {
        let catches: Vec<bool> = experiments.iter().filter_map(|e| e.catch.as_ref().map(|c| c.valid)).collect();
        if meta.run_valid.is_none() && !catches.is_empty() {
            meta.run_valid = Some(catches.iter().all(|v| *v));
        }
        Self { schema_version: SCHEMA_VERSION.into(), meta, experiments }
    }

    pub fn rows(&self) -> Vec<Row> {
        self.experiments.iter().filter(|e| e.kind != ExperimentKind::Distance).map(Row::from_analysis).collect()
    }
}

/// One line of the effect table.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub p: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub n_items: usize,
}

impl Row {
    pub fn from_analysis(a: &ExperimentAnalysis) -> Self {
        let t = a.ttest();
        Self {
            experiment: a.experiment_id.clone(),
            mean_a: t.map(|t| t.mean_a),
            mean_b: t.map(|t| t.mean_b),
            p: t.map(|t| t.p),
            t: t.map(|t| t.t),
            df: t.map(|t| t.df),
            n_items: a.n_items,
        }
    }
}

/// Two decimals; ties of the exact binary value go to the even digit.
pub fn fmt_mean(x: f64) -> String {
    format!("{x:.2}")
}

/// `<0.001` below the threshold, otherwise four significant digits.
pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        let digits = (3 - p.log10().floor() as i32).max(0) as usize;
        format!("{p:.digits$}")
    }
}

fn fmt_df(df: f64) -> String {
    if df.fract() == 0.0 {
        format!("{df:.0}")
    } else {
        format!("{df:.2}")
    }
}

fn column_names(kind: ExperimentKind) -> (&'static str, &'static str, &'static str) {
    match kind {
        ExperimentKind::Priming => ("unrelated", "related", "words"),
        ExperimentKind::Snarc => ("incongruent", "congruent", "digits"),
        ExperimentKind::SizeCongruity => ("incongruent", "congruent", "pairs"),
        ExperimentKind::Anchoring => ("small anchor", "large anchor", "lengths"),
        ExperimentKind::Distance => ("", "", "pairs"),
    }
}

fn section_title(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Priming => "Priming",
        ExperimentKind::Distance => "Distance",
        ExperimentKind::Snarc => "SNARC",
        ExperimentKind::SizeCongruity => "Size congruity",
        ExperimentKind::Anchoring => "Anchoring",
    }
}

/// Rows whose df disagrees with the design formula for their item count.
pub fn df_audit(report: &EffectReport) -> Vec<String> {
    let mut notes = Vec::new();
    for e in &report.experiments {
        if let (Some(t), Some(expected)) = (e.ttest(), e.expected_df) {
            if t.df != expected as f64 {
                notes.push(format!(
                    "{}: df {} differs from the design's {} for {} items ({} queries not relevant)",
                    e.experiment_id,
                    fmt_df(t.df),
                    expected,
                    e.n_items,
                    e.not_relevant
                ));
            }
        }
    }
    notes
}

/// Plain-text tables grouped by experiment kind, followed by catch-trial,
/// relevance and audit notes.
pub fn render_table(report: &EffectReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model: {}  backend: {}  config: {}", report.meta.model, report.meta.backend, report.meta.config_digest);
    if let Some(valid) = report.meta.run_valid {
        let _ = writeln!(out, "run valid (catch trials): {valid}");
    }
    for kind in [
        ExperimentKind::Priming,
        ExperimentKind::Distance,
        ExperimentKind::Snarc,
        ExperimentKind::SizeCongruity,
        ExperimentKind::Anchoring,
    ] {
        let exps: Vec<&ExperimentAnalysis> = report.experiments.iter().filter(|e| e.kind == kind).collect();
        if exps.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\n{}", section_title(kind));
        if kind == ExperimentKind::Distance {
            for e in exps {
                render_anova(&mut out, e);
            }
            continue;
        }
        let (a, b, n) = column_names(kind);
        let w = exps.iter().map(|e| e.experiment_id.len()).max().unwrap_or(0).max(10);
        let _ = writeln!(out, "{:<w$} {:>12} {:>12} {:>8} {:>8} {:>8} {:>7}", "experiment", a, b, "p", "t", "df", n);
        for e in exps {
            let label = &e.experiment_id;
            match e.ttest() {
                Some(t) => {
                    let _ = writeln!(
                        out,
                        "{:<w$} {:>12} {:>12} {:>8} {:>8} {:>8} {:>7}",
                        label,
                        fmt_mean(t.mean_a),
                        fmt_mean(t.mean_b),
                        fmt_p(t.p),
                        format!("{:.2}", t.t),
                        fmt_df(t.df),
                        e.n_items
                    );
                }
                None => {
                    let reason = match &e.test {
                        EffectTest::Skipped { reason } => reason.as_str(),
                        _ => "",
                    };
                    let _ = writeln!(
                        out,
                        "{:<w$} {:>12} {:>12} {:>8} {:>8} {:>8} {:>7}  skipped: {reason}",
                        label, "-", "-", "-", "-", "-", e.n_items
                    );
                }
            }
        }
    }

    let _ = writeln!(out, "\nNot relevant");
    for e in &report.experiments {
        let total = e.scored + e.not_relevant;
        let _ = writeln!(out, "{}: {} of {} queries", e.experiment_id, e.not_relevant, total);
        if let Some(c) = &e.catch {
            let mean = c.mean.map_or("-".to_string(), |m| format!("{m:.4}"));
            let _ = writeln!(out, "{}: catch trials n={} mean={} valid={}", e.experiment_id, c.n, mean, c.valid);
        }
    }
    let audit = df_audit(report);
    if !audit.is_empty() {
        let _ = writeln!(out, "\nDegrees-of-freedom audit");
        for note in audit {
            let _ = writeln!(out, "{note}");
        }
    }
    if !report.meta.assumptions.is_empty() {
        let _ = writeln!(out, "\nAssumptions");
        for a in &report.meta.assumptions {
            let _ = writeln!(out, "- {a}");
        }
    }
    out
}

fn render_anova(out: &mut String, e: &ExperimentAnalysis) {
    match &e.test {
        EffectTest::Anova { result, buckets } => {
            let _ = writeln!(
                out,
                "{} ({}): F({}, {}) = {:.2}, p {}, MSE = {:.4}",
                e.label,
                e.experiment_id,
                result.df_between,
                result.df_within,
                result.f,
                if result.p < 0.001 { "< 0.001".to_string() } else { format!("= {}", fmt_p(result.p)) },
                result.mse
            );
            for b in buckets {
                let _ = writeln!(out, "  distance {:>3}: mean {} +/- {:.3} (n={})", b.bucket, fmt_mean(b.mean), b.half_width, b.n);
            }
        }
        EffectTest::Skipped { reason } => {
            let _ = writeln!(out, "{} ({}): skipped: {reason}", e.label, e.experiment_id);
        }
        EffectTest::TTest(_) => {}
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Full-precision CSV of the two-condition rows.
pub fn render_csv(report: &EffectReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in report.rows() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.experiment,
            opt(r.mean_a),
            opt(r.mean_b),
            opt(r.p),
            opt(r.t),
            opt(r.df),
            r.n_items
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<Row>, ReportError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(ReportError::CsvShape(format!("header {:?}", header.join(","))));
    }
    let num = |s: &str| -> Result<Option<f64>, ReportError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| ReportError::CsvShape(format!("not a number: {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(Row {
            experiment: rec[0].to_string(),
            mean_a: num(&rec[1])?,
            mean_b: num(&rec[2])?,
            p: num(&rec[3])?,
            t: num(&rec[4])?,
            df: num(&rec[5])?,
            n_items: rec[6].parse().map_err(|_| ReportError::CsvShape(format!("bad n_items {:?}", &rec[6])))?,
        });
    }
    Ok(rows)
}

pub fn export_json(report: &EffectReport) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn import_json(text: &str) -> Result<EffectReport, ReportError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value.get("schema_version").and_then(|v| v.as_str()).unwrap_or("").to_string();
    if found != SCHEMA_VERSION {
        return Err(ReportError::Schema { found });
    }
    Ok(serde_json::from_value(value)?)
}

/// Line chart of mean confidence per distance bucket with 95% interval
/// whiskers. The y axis spans [0, 1].
pub fn render_distance_curve(buckets: &[BucketSummary], title: &str) -> Result<String, ReportError> {
    if buckets.len() < 2 {
        return Err(ReportError::TooFewBuckets(buckets.len()));
    }
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let lo = buckets.iter().map(|b| b.bucket).min().unwrap_or(0) as f64;
    let hi = buckets.iter().map(|b| b.bucket).max().unwrap_or(1) as f64;
    let x = |d: u32| left + (d as f64 - lo) / (hi - lo) * pw;
    let y = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, top + ph, left + pw, top + ph);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#, top + ph);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{left}" y2="{:.2}" stroke="black"/>"#, left - 5.0, y(v), y(v));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">{v:.1}</text>"#,
            left - 8.0,
            y(v) + 4.0
        );
    }
    for b in buckets {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            x(b.bucket),
            top + ph + 18.0,
            b.bucket
        );
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">distance</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {:.2})">mean confidence</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for b in buckets {
        let (cx, lo_y, hi_y) = (x(b.bucket), y(b.mean - b.half_width), y(b.mean + b.half_width));
        let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{lo_y:.2}" x2="{cx:.2}" y2="{hi_y:.2}" stroke="gray"/>"#);
        for wy in [lo_y, hi_y] {
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{wy:.2}" x2="{:.2}" y2="{wy:.2}" stroke="gray"/>"#, cx - 4.0, cx + 4.0);
        }
    }
    let points: Vec<String> = buckets.iter().map(|b| format!("{:.2},{:.2}", x(b.bucket), y(b.mean))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, points.join(" "));
    for b in buckets {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, x(b.bucket), y(b.mean));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes report.txt, report.csv, report.json and one SVG per distance
/// experiment into `dir`. Returns the written paths.
pub fn write_report_files(report: &EffectReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = vec![
        (dir.join("report.txt"), render_table(report)),
        (dir.join("report.csv"), render_csv(report)),
        (dir.join("report.json"), export_json(report)?),
    ];
    for e in &report.experiments {
        if let EffectTest::Anova { buckets, .. } = &e.test {
            if buckets.len() >= 2 {
                files.push((dir.join(format!("{}.svg", e.experiment_id)), render_distance_curve(buckets, &e.label)?));
            }
        }
    }
    let mut written = Vec::new();
    for (path, body) in files {
        fs::write(&path, body).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::CatchSummary;
    use crate::TTest;

    fn analysis(id: &str, kind: ExperimentKind, test: EffectTest, n_items: usize) -> ExperimentAnalysis {
        ExperimentAnalysis {
            experiment_id: id.into(),
            label: id.into(),
            kind,
            conditions: vec!["unrelated".into(), "related".into()],
            test,
            n_items,
            n_items_total: n_items,
            scored: 10,
            not_relevant: 0,
            partial_items: 0,
            expected_df: (12 * n_items).checked_sub(2),
            catch: None,
            items: vec![],
            notes: vec![],
        }
    }

    fn ttest(df: f64) -> TTest {
        TTest { mean_a: 0.8049, mean_b: 0.8149, t: -2.3456, df, p: 0.01912345, n_a: 474, n_b: 474, degenerate: false }
    }

    fn meta() -> RunMeta {
        RunMeta { model: "m".into(), backend: "mock".into(), config_digest: "abc".into(), run_valid: None, assumptions: vec![] }
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_mean(0.125), "0.12");
        assert_eq!(fmt_mean(0.375), "0.38");
        assert_eq!(fmt_mean(0.8149), "0.81");
        assert_eq!(fmt_p(0.0004), "<0.001");
        assert_eq!(fmt_p(0.61023), "0.6102");
        assert_eq!(fmt_p(0.0059234), "0.005923");
        assert_eq!(fmt_p(1.0), "1.000");
    }

    #[test]
    fn table_row() {
        let r = EffectReport::new(meta(), vec![analysis("priming-4-sentence", ExperimentKind::Priming, EffectTest::TTest(ttest(946.0)), 79)]);
        let text = render_table(&r);
        let line = text.lines().find(|l| l.starts_with("priming-4-sentence")).unwrap();
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(&cols[cols.len() - 6..], ["0.80", "0.81", "0.01912", "-2.35", "946", "79"]);
        assert!(!text.contains("Degrees-of-freedom audit"));
    }

    #[test]
    fn audit_flags_mismatch() {
        let r = EffectReport::new(meta(), vec![analysis("p", ExperimentKind::Priming, EffectTest::TTest(ttest(940.0)), 79)]);
        assert_eq!(df_audit(&r).len(), 1);
        assert!(render_table(&r).contains("Degrees-of-freedom audit"));
    }

    #[test]
    fn skipped_row() {
        let r = EffectReport::new(
            meta(),
            vec![analysis("p", ExperimentKind::Priming, EffectTest::Skipped { reason: "no items survived filtering".into() }, 0)],
        );
        assert!(render_table(&r).contains("skipped: no items survived filtering"));
        let rows = parse_csv(&render_csv(&r)).unwrap();
        assert_eq!(rows[0].n_items, 0);
        assert_eq!(rows[0].p, None);
    }

    #[test]
    fn run_validity_from_catch() {
        let mut a = analysis("p", ExperimentKind::Priming, EffectTest::TTest(ttest(946.0)), 79);
        a.catch = Some(CatchSummary { n: 100, mean: Some(0.6), valid: false });
        let r = EffectReport::new(meta(), vec![a]);
        assert_eq!(r.meta.run_valid, Some(false));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let r = EffectReport::new(meta(), vec![analysis("p", ExperimentKind::Priming, EffectTest::TTest(ttest(946.0)), 79)]);
        let json = export_json(&r).unwrap();
        assert!(json.contains("\"schema_version\": \"1\""));
        let back = import_json(&json).unwrap();
        assert_eq!(render_table(&back), render_table(&r));
        let bad = json.replace("\"schema_version\": \"1\"", "\"schema_version\": \"0\"");
        assert!(matches!(import_json(&bad), Err(ReportError::Schema { .. })));
    }

    fn bucket(d: u32, m: f64) -> BucketSummary {
        BucketSummary { bucket: d, n: 10, mean: m, half_width: 0.05 }
    }

    #[test]
    fn curve_geometry() {
        let svg = render_distance_curve(&[bucket(1, 0.6), bucket(2, 0.7), bucket(3, 0.8)], "paivio").unwrap();
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<f64> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect();
        // higher confidence sits higher on the page, i.e. smaller pixel y
        assert!(ys.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(render_distance_curve(&[bucket(1, 0.5)], "x"), Err(ReportError::TooFewBuckets(1))));
        assert_eq!(svg, render_distance_curve(&[bucket(1, 0.6), bucket(2, 0.7), bucket(3, 0.8)], "paivio").unwrap());
    }
}
