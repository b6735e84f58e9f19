//! Plumbing for the `speckle` binary: run configs, the records CSV format,
//! the report writers (features, goodness of fit, SVG histograms, scatter
//! rows) and the on-disk classifier model.
//!
//! Everything here is a thin, deterministic layer over `speckle_core`; the
//! binary in `main.rs` only parses arguments and maps errors to exit codes.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use speckle_core::analytics::AnalyticsError;
use speckle_core::classifier::ClassifierError;
use speckle_core::interferometer::unitarity_defect;
use speckle_core::rng::{setting_rng, Substream};
use speckle_core::sources::SourceError;
use speckle_core::{
    classify, ensemble_stats, estimate_features, fit_model, goodness_of_fit, make_source,
    run_ensemble, sample_haar_unitary, AnalyticPdf, BootstrapConfig, ClassifierModel, Corrections,
    DetectorConfig, EnsembleKind, EnsembleReport, FeatureVector, GofStatistic, InterferometerConfig,
    LabeledFeatures, MeasurementRecord, NegLogNormalization, SourceSpec, StateClass,
    TransmissionMatrix,
};

/// Failures split by who caused them, so `main` can map them to exit codes:
/// `Invalid` is bad user input (exit 2), `Runtime` is an execution failure
/// on valid input (exit 1).
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(msg) => write!(f, "invalid input: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

// Data problems surfaced by the analytics layer trace back to what the user
// fed in, so they count as invalid input.
impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        invalid(e.to_string())
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        invalid(e.to_string())
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        invalid(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Run configuration

/// The `[run]` section: how much to simulate and where to put it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_settings: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

/// The `[report]` section. `svg` switches the histogram figures on or off.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub histogram_bins: usize,
    pub svg: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection { histogram_bins: 40, svg: true }
    }
}

/// One simulation run, as described by a TOML config file with sections
/// `[source]`, `[interferometer]`, `[detector]`, `[run]` and optional
/// `[report]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSpec,
    pub interferometer: InterferometerConfig,
    pub detector: DetectorConfig,
    pub run: RunSection,
    #[serde(default)]
    pub report: ReportSection,
}

impl RunConfig {
    /// Semantic validation beyond what parsing enforces. The floor of 100
    /// settings is what the feature and goodness-of-fit estimators need.
    pub fn validate(&self) -> Result<(), CliError> {
        make_source(&self.source)?;
        self.interferometer
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.detector.validate().map_err(|e| invalid(e.to_string()))?;
        if self.run.n_settings < 100 {
            return Err(invalid(format!(
                "run.n_settings must be at least 100, got {}",
                self.run.n_settings
            )));
        }
        if self.report.histogram_bins < 2 {
            return Err(invalid(format!(
                "report.histogram_bins must be at least 2, got {}",
                self.report.histogram_bins
            )));
        }
        Ok(())
    }
}

/// Reads and fully validates a run config. All failures here are invalid
/// input; nothing has been written yet.
pub fn parse_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Records CSV

pub const RECORDS_HEADER: &str = "setting_index,I1,I2,C,R,g2,g2_valid";

/// All rate columns carry 12 significant digits, enough that a written and
/// re-read value formats back to the identical text.
fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn format_records_csv(records: &[MeasurementRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let (g2, valid) = match r.g2 {
            Some(v) => (v, 1),
            None => (0.0, 0),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.setting_index,
            sig12(r.i1),
            sig12(r.i2),
            sig12(r.c),
            sig12(r.r),
            sig12(g2),
            valid
        );
    }
    out
}

pub fn write_records_csv(path: &Path, records: &[MeasurementRecord]) -> Result<(), CliError> {
    fs::write(path, format_records_csv(records))
        .map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn parse_field<T: FromStr>(raw: &str, line: usize, field: &'static str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    raw.trim().parse().map_err(|e| {
        invalid(format!("records line {line}, field {field}: {e} (got `{raw}`)"))
    })
}

/// Parses the records CSV, enforcing the exact schema. Malformed content is
/// reported with line and field; a file without data rows is rejected.
pub fn parse_records_csv(text: &str) -> Result<Vec<MeasurementRecord>, CliError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == RECORDS_HEADER => {}
        Some((_, header)) => {
            return Err(invalid(format!(
                "records line 1: expected header `{RECORDS_HEADER}`, got `{header}`"
            )))
        }
        None => return Err(invalid("records file is empty")),
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 7 {
            return Err(invalid(format!(
                "records line {line}: expected 7 columns, got {}",
                cols.len()
            )));
        }
        let setting_index = parse_field(cols[0], line, "setting_index")?;
        let i1 = parse_field(cols[1], line, "I1")?;
        let i2 = parse_field(cols[2], line, "I2")?;
        let c = parse_field(cols[3], line, "C")?;
        let r = parse_field(cols[4], line, "R")?;
        let g2_value: f64 = parse_field(cols[5], line, "g2")?;
        let g2 = match cols[6].trim() {
            "1" => Some(g2_value),
            "0" => None,
            other => {
                return Err(invalid(format!(
                    "records line {line}, field g2_valid: expected 0 or 1, got `{other}`"
                )))
            }
        };
        records.push(MeasurementRecord { setting_index, i1, i2, c, r, g2 });
    }
    if records.is_empty() {
        return Err(invalid("records file has a header but no data rows"));
    }
    Ok(records)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<MeasurementRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read records {}: {e}", path.display())))?;
    parse_records_csv(&text)
}

// ---------------------------------------------------------------------------
// Feature report

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), sig12)
}

/// Renders every feature, its bootstrap standard error when present, and the
/// correction flags, as diff-friendly `key = value` lines.
pub fn render_features(fv: &FeatureVector) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_records = {}", fv.n_records);
    let _ = writeln!(s, "n_g2_valid = {}", fv.n_g2_valid);
    let _ = writeln!(s, "v_i = {}", sig12(fv.v_i));
    let _ = writeln!(s, "v_c = {}", sig12(fv.v_c));
    let _ = writeln!(s, "v_g2 = {}", opt(fv.v_g2));
    let _ = writeln!(s, "mean_g2 = {}", opt(fv.mean_g2));
    let _ = writeln!(s, "d_hat = {}", sig12(fv.d_hat));
    let _ = writeln!(s, "purity = {}", sig12(fv.purity));
    let _ = writeln!(s, "pair_dim_hat = {}", sig12(fv.pair_dim_hat));
    let _ = writeln!(s, "corr_c_g2 = {}", opt(fv.corr_c_g2));
    if let Some(u) = &fv.uncertainties {
        let _ = writeln!(s, "v_i_se = {}", sig12(u.v_i));
        let _ = writeln!(s, "v_c_se = {}", sig12(u.v_c));
        let _ = writeln!(s, "v_g2_se = {}", opt(u.v_g2));
        let _ = writeln!(s, "mean_g2_se = {}", opt(u.mean_g2));
        let _ = writeln!(s, "d_hat_se = {}", sig12(u.d_hat));
        let _ = writeln!(s, "purity_se = {}", sig12(u.purity));
        let _ = writeln!(s, "corr_c_g2_se = {}", opt(u.corr_c_g2));
    }
    match fv.corrections.dark_rates {
        Some([d1, d2]) => {
            let _ = writeln!(s, "dark_rates = [{}, {}]", sig12(d1), sig12(d2));
        }
        None => {
            let _ = writeln!(s, "dark_rates = none");
        }
    }
    let _ = writeln!(s, "subtract_accidentals = {}", fv.corrections.subtract_accidentals);
    s
}

// ---------------------------------------------------------------------------
// Goodness-of-fit report

/// How many gamma-speckle modes each source kind occupies; sets the `d` of
/// the intensity and accidental reference densities.
pub fn occupied_modes(spec: &SourceSpec) -> f64 {
    match spec {
        SourceSpec::HeraldedSinglePhoton | SourceSpec::TwoPhotonFock => 1.0,
        SourceSpec::BiphotonPair { .. } | SourceSpec::Noon2 { .. } => 2.0,
        SourceSpec::IncoherentMixture { dim } => *dim as f64,
        SourceSpec::MixedBiphoton { pair_dim } => 2.0 * *pair_dim as f64,
        SourceSpec::SpectralBiphoton { n_bins, .. } => 2.0 * *n_bins as f64,
        SourceSpec::IncoherentDispersive { dim, n_bins } => (*dim * *n_bins) as f64,
    }
}

/// The reference densities worth fitting for a given source. Intensity and
/// accidental fits always apply; the coincidence K-distribution and the two
/// g2 shapes only where the source actually realizes them.
fn gof_plan(spec: &SourceSpec, mean_g2: Option<f64>) -> Vec<(&'static str, AnalyticPdf)> {
    let d = occupied_modes(spec);
    let mut plan = vec![
        ("I1/mean", AnalyticPdf::IntensityGamma { d }),
        ("R/mean", AnalyticPdf::AccidentalProduct { d }),
    ];
    let pure_k_dist = match spec {
        SourceSpec::BiphotonPair { indistinguishability } => *indistinguishability == 1.0,
        SourceSpec::SpectralBiphoton { indistinguishability, .. } => *indistinguishability == 1.0,
        _ => false,
    };
    if pure_k_dist {
        plan.push(("C/mean", AnalyticPdf::CoincidenceK { d }));
    }
    if let Some(mean) = mean_g2 {
        match spec {
            SourceSpec::BiphotonPair { indistinguishability } if *indistinguishability == 1.0 => {
                plan.push(("g2", AnalyticPdf::G2Uniform { mean }));
            }
            SourceSpec::BiphotonPair { indistinguishability } if *indistinguishability == 0.0 => {
                plan.push((
                    "g2",
                    AnalyticPdf::G2NegLog { mean, normalization: NegLogNormalization::Exact },
                ));
            }
            SourceSpec::Noon2 { dephasing: speckle_core::DephasingMode::FullAverage } => {
                plan.push((
                    "g2",
                    AnalyticPdf::G2NegLog { mean, normalization: NegLogNormalization::Exact },
                ));
            }
            _ => {}
        }
    }
    plan
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn normalized(xs: &[f64]) -> Vec<f64> {
    let m = mean_of(xs);
    xs.iter().map(|x| x / m).collect()
}

/// One line of gof.txt.
pub struct GofLine {
    pub observable: &'static str,
    pub model: String,
    pub statistic: &'static str,
    pub value: f64,
    pub p_value: f64,
    pub n: usize,
    pub dof: Option<usize>,
}

fn model_name(m: &AnalyticPdf) -> String {
    match m {
        AnalyticPdf::IntensityGamma { d } => format!("IntensityGamma(d={d})"),
        AnalyticPdf::CoincidenceK { d } => format!("CoincidenceK(d={d})"),
        AnalyticPdf::AccidentalProduct { d } => format!("AccidentalProduct(d={d})"),
        AnalyticPdf::G2Uniform { .. } => "G2Uniform".into(),
        AnalyticPdf::G2NegLog { .. } => "G2NegLog(Exact)".into(),
    }
}

/// Fits the source-appropriate reference densities against the recorded
/// observables with both KS and chi-square statistics.
pub fn gof_lines(spec: &SourceSpec, records: &[MeasurementRecord]) -> Result<Vec<GofLine>, CliError> {
    let i1: Vec<f64> = records.iter().map(|r| r.i1).collect();
    let r_col: Vec<f64> = records.iter().map(|r| r.r).collect();
    let g2: Vec<f64> = records.iter().filter_map(|r| r.g2).collect();
    let mean_g2 = if g2.len() >= 100 { Some(mean_of(&g2)) } else { None };

    let mut lines = Vec::new();
    for (observable, model) in gof_plan(spec, mean_g2) {
        let samples = match observable {
            "I1/mean" => normalized(&i1),
            "R/mean" => normalized(&r_col),
            "C/mean" => normalized(&records.iter().map(|r| r.c).collect::<Vec<_>>()),
            "g2" => g2.clone(),
            _ => unreachable!(),
        };
        for stat in [GofStatistic::Ks, GofStatistic::ChiSquare] {
            let rep = goodness_of_fit(&samples, &model, stat)?;
            lines.push(GofLine {
                observable,
                model: model_name(&model),
                statistic: match stat {
                    GofStatistic::Ks => "KS",
                    GofStatistic::ChiSquare => "chi2",
                },
                value: rep.value,
                p_value: rep.p_value,
                n: rep.n_samples,
                dof: rep.dof,
            });
        }
    }
    Ok(lines)
}

pub fn render_gof(lines: &[GofLine]) -> String {
    let mut s = String::from("observable  model  statistic  value  p_value  n  dof\n");
    for l in lines {
        let dof = l.dof.map_or_else(|| "-".into(), |d| d.to_string());
        let _ = writeln!(
            s,
            "{}  {}  {}  {:.6e}  {:.6e}  {}  {}",
            l.observable, l.model, l.statistic, l.value, l.p_value, l.n, dof
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Histograms and the SVG writer

pub struct Histogram {
    /// `counts.len() + 1` ascending edges starting at zero.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub n: usize,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }
}

/// Equal-width histogram on [0, max]. Samples must be finite and
/// non-negative; the top edge is nudged so the maximum lands inside.
pub fn histogram(samples: &[f64], bins: usize) -> Result<Histogram, CliError> {
    if bins < 2 {
        return Err(invalid(format!("need at least 2 bins, got {bins}")));
    }
    if samples.is_empty() {
        return Err(invalid("cannot histogram an empty sample"));
    }
    if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid("histogram samples must be finite and non-negative"));
    }
    let max = samples.iter().cloned().fold(0.0f64, f64::max);
    let top = if max > 0.0 { max * (1.0 + 1e-9) } else { 1.0 };
    let width = top / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let b = ((x / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    Ok(Histogram { edges, counts, n: samples.len() })
}

/// Samples a reference density over the histogram range and scales it to
/// expected counts per bin, ready to overlay on the bars. Points where the
/// density diverges (some laws blow up at zero) are skipped.
pub fn pdf_overlay(model: &AnalyticPdf, hist: &Histogram) -> Vec<(f64, f64)> {
    let top = *hist.edges.last().unwrap();
    let scale = hist.n as f64 * hist.bin_width();
    let mut pts = Vec::with_capacity(240);
    for i in 1..240 {
        let x = top * i as f64 / 240.0;
        if let Ok(f) = model.density(x) {
            if f.is_finite() {
                pts.push((x, f * scale));
            }
        }
    }
    pts
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A self-contained histogram figure: bars, optional overlay polylines with
/// a small legend, tick marks and labels. No external plotting dependency.
pub fn svg_histogram(
    title: &str,
    x_label: &str,
    hist: &Histogram,
    overlays: &[(&str, Vec<(f64, f64)>)],
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 64.0;
    const R: f64 = 20.0;
    const T: f64 = 42.0;
    const B: f64 = 52.0;
    let plot_w = W - L - R;
    let plot_h = H - T - B;

    let x_max = *hist.edges.last().unwrap();
    let mut y_max = hist.counts.iter().copied().max().unwrap_or(1) as f64;
    for (_, pts) in overlays {
        for &(_, y) in pts {
            y_max = y_max.max(y);
        }
    }
    y_max *= 1.05;
    let to_x = |x: f64| L + x / x_max * plot_w;
    let to_y = |y: f64| T + plot_h - (y / y_max * plot_h).min(plot_h);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        svg_escape(title)
    );

    for (i, &count) in hist.counts.iter().enumerate() {
        let x0 = to_x(hist.edges[i]);
        let x1 = to_x(hist.edges[i + 1]);
        let y = to_y(count as f64);
        let h = T + plot_h - y;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#7ba7cc" stroke="#44627f" stroke-width="0.5"/>"##,
            x0,
            y,
            x1 - x0,
            h
        );
    }

    let palette = ["#c23b22", "#2a7f3f", "#8a4fbf"];
    for (k, (name, pts)) in overlays.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = palette[k % palette.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            path.join(" ")
        );
        let ly = T + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="1.8"/>"#,
            L + plot_w - 150.0,
            L + plot_w - 126.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            L + plot_w - 120.0,
            ly + 4.0,
            svg_escape(name)
        );
    }

    // Axes with 5 x-ticks and 4 y-ticks.
    let _ = writeln!(
        s,
        r#"<line x1="{L}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        T + plot_h,
        L + plot_w,
        T + plot_h
    );
    let _ = writeln!(s, r#"<line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#, T + plot_h);
    for i in 0..=5 {
        let xv = x_max * i as f64 / 5.0;
        let xp = to_x(xv);
        let _ = writeln!(
            s,
            r#"<line x1="{xp:.2}" y1="{}" x2="{xp:.2}" y2="{}" stroke="black"/>"#,
            T + plot_h,
            T + plot_h + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{xp:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{xv:.2}</text>"#,
            T + plot_h + 18.0
        );
    }
    for i in 0..=4 {
        let yv = y_max * i as f64 / 4.0;
        let yp = to_y(yv);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{yp:.2}" x2="{L}" y2="{yp:.2}" stroke="black"/>"#,
            L - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{yv:.0}</text>"#,
            L - 8.0,
            yp + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        L + plot_w / 2.0,
        H - 14.0,
        svg_escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">count</text>"#,
        T + plot_h / 2.0,
        T + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    s
}

// ---------------------------------------------------------------------------
// Scatter CSV (cumulative, append-only)

pub const SCATTER_HEADER: &str =
    "label,n_records,v_i,v_c,v_g2,mean_g2,d_hat,purity,pair_dim_hat,corr_c_g2";

fn opt_csv(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_default()
}

/// Appends one labeled feature row, creating the file with its header on
/// first use. An existing file must carry the expected header.
pub fn append_scatter_row(path: &Path, label: &str, fv: &FeatureVector) -> Result<(), CliError> {
    if label.is_empty() || label.contains(',') || label.contains('\n') {
        return Err(invalid(format!("scatter label must be a single plain word, got `{label}`")));
    }
    let mut body = match fs::read_to_string(path) {
        Ok(existing) => {
            match existing.lines().next() {
                Some(h) if h.trim_end_matches('\r') == SCATTER_HEADER => {}
                _ => {
                    return Err(invalid(format!(
                        "{} exists but is not a feature scatter file",
                        path.display()
                    )))
                }
            }
            existing
        }
        Err(_) => format!("{SCATTER_HEADER}\n"),
    };
    let _ = writeln!(
        body,
        "{label},{},{},{},{},{},{},{},{},{}",
        fv.n_records,
        sig12(fv.v_i),
        sig12(fv.v_c),
        opt_csv(fv.v_g2),
        opt_csv(fv.mean_g2),
        sig12(fv.d_hat),
        sig12(fv.purity),
        sig12(fv.pair_dim_hat),
        opt_csv(fv.corr_c_g2)
    );
    fs::write(path, body).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Classifier model on disk

pub fn save_model(path: &Path, model: &ClassifierModel) -> Result<(), CliError> {
    let text = toml::to_string_pretty(model)
        .map_err(|e| runtime(format!("serializing model: {e}")))?;
    fs::write(path, text).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read model {}: {e}", path.display())))?;
    let model: ClassifierModel =
        toml::from_str(&text).map_err(|e| invalid(format!("model {}: {e}", path.display())))?;
    if model.version != 1 {
        return Err(invalid(format!(
            "model {}: unsupported version {}, this build reads version 1",
            path.display(),
            model.version
        )));
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Training data from a labeled directory

/// The class label is the file stem up to the first `__`, so ensembles can
/// be named like `IndistBiphoton__007.csv`.
pub fn label_from_filename(path: &Path) -> Result<StateClass, CliError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| invalid(format!("cannot read a class label from {}", path.display())))?;
    let label = stem.split("__").next().unwrap_or(stem);
    StateClass::from_str(label).map_err(|e| {
        invalid(format!(
            "{}: {e}; valid labels are {}",
            path.display(),
            StateClass::ALL.map(|c| c.as_str()).join(", ")
        ))
    })
}

/// Loads every `*.csv` in `dir` as one labeled ensemble. Features are
/// computed raw (no corrections, no bootstrap), matching what `classify`
/// sees at apply time.
pub fn load_labeled_dir(dir: &Path) -> Result<Vec<LabeledFeatures>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| invalid(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(invalid(format!("no .csv ensembles found in {}", dir.display())));
    }
    let mut labeled = Vec::with_capacity(files.len());
    for path in files {
        let label = label_from_filename(&path)?;
        let records = read_records_csv(&path)?;
        let features = estimate_features(
            &records,
            Corrections::default(),
            BootstrapConfig { resamples: 0, seed: 0 },
        )?;
        labeled.push(LabeledFeatures { label, features });
    }
    Ok(labeled)
}

// ---------------------------------------------------------------------------
// Subcommand drivers

/// Everything `simulate` wrote, for reporting and tests.
pub struct SimulateArtifacts {
    pub records: PathBuf,
    pub features: PathBuf,
    pub gof: PathBuf,
    pub svgs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub n_records: usize,
}

/// Runs one configured ensemble and writes the artifact bundle. The config
/// must already be validated; failures past that point are runtime errors.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateArtifacts, CliError> {
    let source = make_source(&cfg.source)?;
    let mut warnings = Vec::new();
    if let Some(w) = cfg.interferometer.gaussian_regime_warning() {
        warnings.push(w);
    }

    let rs = run_ensemble(
        &source,
        &cfg.interferometer,
        &cfg.detector,
        cfg.run.n_settings,
        cfg.run.master_seed,
    )
    .map_err(|e| runtime(e.to_string()))?;

    let out = &cfg.run.output_dir;
    fs::create_dir_all(out)
        .map_err(|e| runtime(format!("creating {}: {e}", out.display())))?;

    let records_path = out.join("records.csv");
    write_records_csv(&records_path, &rs.records)?;

    let fv = estimate_features(&rs.records, Corrections::default(), BootstrapConfig::default())
        .map_err(|e| runtime(e.to_string()))?;
    let features_path = out.join("features.txt");
    fs::write(&features_path, render_features(&fv))
        .map_err(|e| runtime(format!("writing {}: {e}", features_path.display())))?;

    let gof = gof_lines(&cfg.source, &rs.records)?;
    let gof_path = out.join("gof.txt");
    fs::write(&gof_path, render_gof(&gof))
        .map_err(|e| runtime(format!("writing {}: {e}", gof_path.display())))?;

    let mut svgs = Vec::new();
    if cfg.report.svg {
        svgs = write_histogram_svgs(
            out,
            &rs.records,
            cfg.report.histogram_bins,
            &gof_plan_overlays(&cfg.source, &rs.records),
        )?;
    }

    Ok(SimulateArtifacts {
        records: records_path,
        features: features_path,
        gof: gof_path,
        svgs,
        warnings,
        n_records: rs.records.len(),
    })
}

/// Per-observable overlay models for the figure writer, reusing the
/// source-specific fit plan.
fn gof_plan_overlays(
    spec: &SourceSpec,
    records: &[MeasurementRecord],
) -> Vec<(&'static str, AnalyticPdf)> {
    let g2: Vec<f64> = records.iter().filter_map(|r| r.g2).collect();
    let mean_g2 = if g2.len() >= 100 { Some(mean_of(&g2)) } else { None };
    gof_plan(spec, mean_g2)
}

/// File name, title, axis label, normalized samples and overlay models of
/// one histogram figure.
type Figure<'a> = (&'a str, &'a str, &'a str, Vec<f64>, Vec<&'a AnalyticPdf>);

/// Writes the three standard histograms (normalized intensity, normalized
/// coincidences, g2) with whatever overlay models apply to each.
fn write_histogram_svgs(
    out: &Path,
    records: &[MeasurementRecord],
    bins: usize,
    overlays: &[(&'static str, AnalyticPdf)],
) -> Result<Vec<PathBuf>, CliError> {
    let i1: Vec<f64> = records.iter().map(|r| r.i1).collect();
    let c: Vec<f64> = records.iter().map(|r| r.c).collect();
    let g2: Vec<f64> = records.iter().filter_map(|r| r.g2).collect();

    let figures: [Figure; 3] = [
        (
            "hist_intensity.svg",
            "Intensity speckle",
            "I1 / mean",
            normalized(&i1),
            overlays.iter().filter(|(o, _)| *o == "I1/mean").map(|(_, m)| m).collect(),
        ),
        (
            "hist_coincidence.svg",
            "Coincidence speckle",
            "C / mean",
            normalized(&c),
            overlays.iter().filter(|(o, _)| *o == "C/mean").map(|(_, m)| m).collect(),
        ),
        (
            "hist_g2.svg",
            "Normalized correlation",
            "g2",
            g2.clone(),
            overlays.iter().filter(|(o, _)| *o == "g2").map(|(_, m)| m).collect(),
        ),
    ];

    let mut written = Vec::new();
    for (file, title, x_label, samples, models) in figures {
        if samples.is_empty() {
            continue;
        }
        let hist = histogram(&samples, bins)?;
        let curves: Vec<(String, Vec<(f64, f64)>)> = models
            .iter()
            .map(|m| (model_name(m), pdf_overlay(m, &hist)))
            .collect();
        let named: Vec<(&str, Vec<(f64, f64)>)> =
            curves.iter().map(|(n, p)| (n.as_str(), p.clone())).collect();
        let svg = svg_histogram(title, x_label, &hist, &named);
        let path = out.join(file);
        fs::write(&path, svg).map_err(|e| runtime(format!("writing {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

/// Everything `analyze` wrote or decided.
pub struct AnalyzeArtifacts {
    pub features: PathBuf,
    pub scatter: PathBuf,
    pub svgs: Vec<PathBuf>,
    pub classification: Option<(StateClass, f64)>,
    pub feature_vector: FeatureVector,
}

/// Re-analyzes an existing records file: features with bootstrap errors,
/// histogram figures with data-driven overlays, a labeled scatter row, and
/// optionally a classification against a trained model.
pub fn run_analyze(
    records_path: &Path,
    out_dir: &Path,
    label: &str,
    bins: usize,
    model_path: Option<&Path>,
) -> Result<AnalyzeArtifacts, CliError> {
    if bins < 2 {
        return Err(invalid(format!("need at least 2 histogram bins, got {bins}")));
    }
    let records = read_records_csv(records_path)?;
    let fv = estimate_features(&records, Corrections::default(), BootstrapConfig::default())?;

    fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", out_dir.display())))?;

    let features_path = out_dir.join("features.txt");
    fs::write(&features_path, render_features(&fv))
        .map_err(|e| runtime(format!("writing {}: {e}", features_path.display())))?;

    // Data-driven overlays: the reference laws at the measured mode count,
    // bracketing the coincidence column between bunched and accidental.
    let mut overlays: Vec<(&'static str, AnalyticPdf)> = Vec::new();
    if fv.d_hat >= 1.0 {
        overlays.push(("I1/mean", AnalyticPdf::IntensityGamma { d: fv.d_hat }));
        overlays.push(("C/mean", AnalyticPdf::CoincidenceK { d: fv.d_hat }));
        overlays.push(("C/mean", AnalyticPdf::AccidentalProduct { d: fv.d_hat }));
    }
    if let Some(mean) = fv.mean_g2 {
        overlays.push(("g2", AnalyticPdf::G2Uniform { mean }));
    }
    let svgs = write_histogram_svgs(out_dir, &records, bins, &overlays)?;

    let scatter_path = out_dir.join("features_scatter.csv");
    append_scatter_row(&scatter_path, label, &fv)?;

    let classification = match model_path {
        Some(p) => {
            let model = load_model(p)?;
            Some(classify(&fv, &model)?)
        }
        None => None,
    };

    Ok(AnalyzeArtifacts {
        features: features_path,
        scatter: scatter_path,
        svgs,
        classification,
        feature_vector: fv,
    })
}

/// Draws the same matrix stream a simulation with this config would use and
/// reports its health. Returns the report plus any regime warnings.
pub fn run_validate_ensemble(cfg: &RunConfig) -> Result<(EnsembleReport, Vec<String>), CliError> {
    let mut warnings = Vec::new();
    if let Some(w) = cfg.interferometer.gaussian_regime_warning() {
        warnings.push(w);
    }
    let mut matrices: Vec<TransmissionMatrix> = Vec::with_capacity(cfg.run.n_settings);
    for i in 0..cfg.run.n_settings as u64 {
        let mut rng = setting_rng(cfg.run.master_seed, i, Substream::MatrixBin(0));
        let tm = match cfg.interferometer.ensemble {
            EnsembleKind::HaarTruncated => {
                speckle_core::sample_haar_truncated_tm(&cfg.interferometer, &mut rng)
            }
            EnsembleKind::ComplexGaussian => {
                speckle_core::sample_gaussian_tm(&cfg.interferometer, &mut rng)
            }
        }
        .map_err(|e| runtime(e.to_string()))?;
        matrices.push(tm);
    }
    let report = ensemble_stats(&matrices).map_err(|e| runtime(e.to_string()))?;

    // For the physical ensemble also spot-check that a full channel unitary
    // is numerically unitary.
    if cfg.interferometer.ensemble == EnsembleKind::HaarTruncated {
        let mut rng = setting_rng(cfg.run.master_seed, 0, Substream::MatrixBin(1));
        let u = sample_haar_unitary(cfg.interferometer.total_modes, &mut rng)
            .map_err(|e| runtime(e.to_string()))?;
        let defect = unitarity_defect(&u);
        if defect > 1e-10 {
            warnings.push(format!("sampled channel unitary has defect {defect:.3e}"));
        }
    }
    Ok((report, warnings))
}

/// Trains a model from a directory of labeled ensembles and writes it.
pub fn run_train(dir: &Path, model_path: &Path) -> Result<ClassifierModel, CliError> {
    let labeled = load_labeled_dir(dir)?;
    let model = fit_model(&labeled)?;
    save_model(model_path, &model)?;
    Ok(model)
}

/// Classifies one records file against a trained model.
pub fn run_classify(records_path: &Path, model_path: &Path) -> Result<(StateClass, f64), CliError> {
    let records = read_records_csv(records_path)?;
    let fv = estimate_features(
        &records,
        Corrections::default(),
        BootstrapConfig { resamples: 0, seed: 0 },
    )?;
    let model = load_model(model_path)?;
    Ok(classify(&fv, &model)?)
}
