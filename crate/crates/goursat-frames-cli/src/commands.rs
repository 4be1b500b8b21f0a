use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, ValueEnum};
use serde::Serialize;

use goursat_frames::cartan::{build_riemannian_bundle, MetricSpec};
use goursat_frames::distribution::{recognize, Distribution, GoursatCertificate};
use goursat_frames::fixtures::{
    get_fixture, verify_fixture_with, FixtureReport, VerifyConfig, DEFAULT_SET, EXPENSIVE_SET,
};
use goursat_frames::invariants::{
    closed_form_sample, closed_form_to_oracle, frenet_oracle, ClosedFormMetric, CurveDoc,
    CurveSpec, InvariantSample, Method, RiemannianPipeline,
};

use crate::error::{CliError, EXIT_NUMERICAL, EXIT_OK};
use crate::output::{to_csv, to_json, Cell};
use crate::{Format, RunConfig};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn render<T: Serialize>(value: &T) -> Result<String, CliError> {
    to_json(value).map_err(|e| CliError::invalid(e.to_string()))
}

fn render_csv(header: &[&str], rows: &[Vec<Cell>]) -> Result<String, CliError> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    to_csv(&header, rows).map_err(|e| CliError::invalid(e.to_string()))
}

#[derive(Args, Clone)]
pub struct MetricArgs {
    /// Metric document `{ "coords": [...], "g": [[...]], "basepoint": [...] }`.
    #[arg(long)]
    pub metric: Option<PathBuf>,
    /// Built-in metric: h3, constant-curvature or euclidean.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Curvature of the constant-curvature metric.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Dimension of the euclidean metric.
    #[arg(long)]
    pub dim: Option<usize>,
}

impl MetricArgs {
    fn load(&self) -> Result<Option<MetricSpec>, CliError> {
        match (&self.metric, &self.builtin) {
            (Some(_), Some(_)) => Err(CliError::invalid("give either --metric or --builtin")),
            (Some(p), None) => Ok(Some(MetricSpec::from_json(&read(p)?)?)),
            (None, Some(b)) => Ok(Some(MetricSpec::builtin(b, self.lambda, self.dim)?)),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "fixture", "metric", "builtin"])))]
pub struct AnalyzeArgs {
    /// Distribution document `{ "chart", "generators", "basepoint", "labels"? }`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// A registered fixture.
    #[arg(long)]
    pub fixture: Option<String>,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    source: String,
    dim: usize,
    rank: usize,
    certificate: &'a GoursatCertificate,
}

pub fn analyze(a: &AnalyzeArgs, cfg: &RunConfig) -> Result<(String, i32), CliError> {
    let (source, dist): (String, Distribution) = if let Some(p) = &a.input {
        (p.display().to_string(), Distribution::from_json(&read(p)?)?)
    } else if let Some(name) = &a.fixture {
        let f = get_fixture(name)?;
        (f.name.clone(), f.distribution)
    } else {
        let m = a
            .metric
            .load()?
            .ok_or_else(|| CliError::invalid("no input given"))?;
        (m.name.clone(), build_riemannian_bundle(&m)?.distribution)
    };
    let cert = recognize(&dist, &cfg.flag_config())?;
    let text = match cfg.format {
        Format::Json => render(&AnalyzeReport {
            source,
            dim: dist.dim(),
            rank: dist.rank(),
            certificate: &cert,
        })?,
        Format::Csv => {
            let rows: Vec<Vec<Cell>> = cert
                .flag
                .levels
                .iter()
                .map(|l| {
                    let sig = (l.level >= 1)
                        .then(|| cert.signature.get(l.level - 1))
                        .flatten()
                        .map_or(String::new(), |s| s.to_string());
                    vec![
                        Cell::Text(l.level.to_string()),
                        Cell::Text(l.dim.to_string()),
                        Cell::Text(l.cauchy_dim.to_string()),
                        Cell::Text(sig),
                        Cell::Text(l.basis.join(" ")),
                    ]
                })
                .collect();
            render_csv(&["level", "dim", "cauchy_dim", "signature", "basis"], &rows)?
        }
    };
    Ok((text, EXIT_OK))
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Phi,
    Oracle,
    Closed,
    /// The printed H³ curvature with its denominator read as (1 + u₁² + v₁²)^(3/2).
    ClosedCorrected,
    All,
}

#[derive(Args)]
pub struct InvariantsArgs {
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Curve document `{ "param": "t", "coords": [...], "domain": [a, b] }`.
    #[arg(long)]
    pub curve: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Phi)]
    pub method: MethodArg,
}

#[derive(Serialize)]
struct Row {
    t: f64,
    kappa: Vec<f64>,
    method: String,
    iterations: Option<usize>,
    residual: Option<f64>,
    degenerate: bool,
    flags: Vec<String>,
}

impl Row {
    fn from_sample(s: InvariantSample) -> Self {
        Row {
            t: s.t,
            kappa: s.kappa,
            method: s.method.name().to_string(),
            iterations: s.iterations,
            residual: s.residual,
            degenerate: s.degenerate,
            flags: s.flags,
        }
    }

    fn failed(t: f64, width: usize, method: &str, e: impl std::fmt::Display) -> Self {
        Row {
            t,
            kappa: vec![f64::NAN; width],
            method: method.into(),
            iterations: None,
            residual: None,
            degenerate: false,
            flags: vec![format!("error: {e}")],
        }
    }
}

#[derive(Serialize)]
struct InvariantsReport {
    metric: String,
    curve: CurveDoc,
    methods: Vec<String>,
    rows: Vec<Row>,
    /// Largest pairwise difference per invariant over all samples, closed forms sign-mapped.
    max_discrepancy: Option<Vec<f64>>,
}

/// Which closed forms exist for a metric: only the built-in three-dimensional ones.
fn closed_form_for(
    a: &MetricArgs,
    m: &MetricSpec,
    corrected: bool,
) -> Result<ClosedFormMetric, CliError> {
    if m.dim() != 3 {
        return Err(CliError::invalid("closed forms need n = 3"));
    }
    match a.builtin.as_deref() {
        Some("h3") if corrected => Ok(ClosedFormMetric::H3Corrected),
        Some("h3") => Ok(ClosedFormMetric::H3),
        Some("constant-curvature") if corrected => Err(CliError::invalid(
            "closed-corrected applies to the h3 formulas only",
        )),
        Some("constant-curvature") => match a.lambda {
            Some(0.0) => Err(CliError::invalid("λ=0 unsupported by closed form")),
            Some(l) => Ok(ClosedFormMetric::Lambda(l)),
            None => Err(CliError::invalid("constant-curvature needs a lambda")),
        },
        _ => Err(CliError::invalid(
            "closed forms exist for the built-in h3 and constant-curvature metrics only",
        )),
    }
}

pub fn invariants(a: &InvariantsArgs, cfg: &RunConfig) -> Result<(String, i32), CliError> {
    let metric = a
        .metric
        .load()?
        .ok_or_else(|| CliError::invalid("give --metric or --builtin"))?;
    let curve = CurveSpec::from_json(&read(&a.curve)?)?;
    if curve.dim() != metric.dim() {
        return Err(CliError::invalid(format!(
            "curve has {} coordinates, metric has {}",
            curve.dim(),
            metric.dim()
        )));
    }
    let methods: Vec<MethodArg> = match a.method {
        MethodArg::All => vec![MethodArg::Phi, MethodArg::Oracle, MethodArg::Closed],
        m => vec![m],
    };
    let closed = methods
        .iter()
        .find(|m| matches!(m, MethodArg::Closed | MethodArg::ClosedCorrected))
        .map(|m| closed_form_for(&a.metric, &metric, *m == MethodArg::ClosedCorrected))
        .transpose()?;
    let ts = curve.sample_params(cfg.samples);
    let width = metric.dim() - 1;
    let mut per_method: Vec<Vec<Row>> = Vec::new();
    for m in &methods {
        let rows: Vec<Row> = match m {
            MethodArg::Phi => {
                let pipe = RiemannianPipeline::new(&metric, &cfg.flag_config())?;
                ts.iter()
                    .zip(pipe.along(&curve, &ts))
                    .map(|(t, r)| match r {
                        Ok(s) => Row::from_sample(s),
                        Err(e) => Row::failed(*t, width, Method::Phi.name(), e),
                    })
                    .collect()
            }
            MethodArg::Oracle => ts
                .iter()
                .map(|&t| match frenet_oracle(&metric, &curve, t) {
                    Ok(s) => Row::from_sample(s),
                    Err(e) => Row::failed(t, width, Method::Oracle.name(), e),
                })
                .collect(),
            _ => {
                let cf = closed.expect("checked above");
                ts.iter()
                    .map(|&t| match closed_form_sample(&cf, &curve, t) {
                        Ok(s) => Row::from_sample(s),
                        Err(e) => Row::failed(t, width, Method::ClosedForm.name(), e),
                    })
                    .collect()
            }
        };
        per_method.push(rows);
    }
    let max_discrepancy = (methods.len() > 1).then(|| discrepancy(&per_method, width));
    let report = InvariantsReport {
        metric: metric.name.clone(),
        curve: curve.to_doc(),
        methods: per_method
            .iter()
            .filter_map(|r| r.first().map(|r| r.method.clone()))
            .collect(),
        rows: per_method.into_iter().flatten().collect(),
        max_discrepancy,
    };
    let text = match cfg.format {
        Format::Json => render(&report)?,
        Format::Csv => invariants_csv(&report, width)?,
    };
    Ok((text, EXIT_OK))
}

/// Values in the oracle's sign convention.
fn comparable(r: &Row) -> Vec<f64> {
    if r.method == Method::ClosedForm.name() {
        let s = InvariantSample {
            t: r.t,
            kappa: r.kappa.clone(),
            method: Method::ClosedForm,
            iterations: None,
            residual: None,
            degenerate: r.degenerate,
            flags: Vec::new(),
        };
        closed_form_to_oracle(&s)
    } else {
        r.kappa.clone()
    }
}

fn discrepancy(per_method: &[Vec<Row>], width: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; width];
    let samples = per_method.first().map_or(0, |r| r.len());
    for i in 0..samples {
        let vals: Vec<Vec<f64>> = per_method.iter().map(|rows| comparable(&rows[i])).collect();
        for a in 0..vals.len() {
            for b in a + 1..vals.len() {
                for (k, o) in out.iter_mut().enumerate() {
                    let d = (vals[a][k] - vals[b][k]).abs();
                    // a failed sample makes the summary undefined
                    *o = if d.is_nan() { f64::NAN } else { o.max(d) };
                }
            }
        }
    }
    out
}

fn invariants_csv(r: &InvariantsReport, width: usize) -> Result<String, CliError> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=width).map(|i| format!("kappa_{i}")));
    header.extend(["method", "iterations", "residual", "degenerate", "flags"].map(String::from));
    let mut rows: Vec<Vec<Cell>> = r
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![Cell::Num(row.t)];
            cells.extend(row.kappa.iter().map(|k| Cell::Num(*k)));
            cells.push(Cell::Text(row.method.clone()));
            cells.push(Cell::Text(
                row.iterations.map_or(String::new(), |i| i.to_string()),
            ));
            cells.push(row.residual.map_or(Cell::Text(String::new()), Cell::Num));
            cells.push(Cell::Text(row.degenerate.to_string()));
            cells.push(Cell::Text(row.flags.join("; ")));
            cells
        })
        .collect();
    if let Some(d) = &r.max_discrepancy {
        let mut cells = vec![Cell::Text(String::new())];
        cells.extend(d.iter().map(|k| Cell::Num(*k)));
        cells.push(Cell::Text("max-discrepancy".into()));
        cells.extend((0..4).map(|_| Cell::Text(String::new())));
        rows.push(cells);
    }
    to_csv(&header, &rows).map_err(|e| CliError::invalid(e.to_string()))
}

#[derive(Args)]
#[command(group(ArgGroup::new("which").required(true).args(["fixture", "all"])))]
pub struct VerifyArgs {
    /// Fixture to verify; repeat for several.
    #[arg(long)]
    pub fixture: Vec<String>,
    /// Every fixture of the default set.
    #[arg(long)]
    pub all: bool,
    /// With --all, also run the expensive fixtures.
    #[arg(long)]
    pub expensive: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    fixtures: Vec<FixtureReport>,
}

pub fn verify(a: &VerifyArgs, cfg: &RunConfig) -> Result<(String, i32), CliError> {
    let mut names: Vec<String> = a.fixture.clone();
    if a.all {
        names.extend(DEFAULT_SET.iter().map(|s| s.to_string()));
        if a.expensive {
            names.extend(EXPENSIVE_SET.iter().map(|s| s.to_string()));
        }
    }
    let fixtures = names
        .iter()
        .map(|n| get_fixture(n))
        .collect::<Result<Vec<_>, _>>()?;
    let vcfg = VerifyConfig {
        flag: cfg.flag_config(),
        samples_per_curve: cfg.samples,
        seed: cfg.seed,
    };
    let mut reports = Vec::new();
    for f in &fixtures {
        let r = verify_fixture_with(f, &vcfg);
        eprintln!(
            "{}: {} ({:.1} s)",
            r.fixture,
            if r.passed { "pass" } else { "FAIL" },
            r.elapsed.as_secs_f64()
        );
        reports.push(r);
    }
    let passed = reports.iter().all(|r| r.passed);
    let report = VerifyReport {
        passed,
        fixtures: reports,
    };
    let text = match cfg.format {
        Format::Json => render(&report)?,
        Format::Csv => {
            let rows: Vec<Vec<Cell>> = report
                .fixtures
                .iter()
                .flat_map(|f| {
                    f.checks.iter().map(|c| {
                        vec![
                            Cell::Text(f.fixture.clone()),
                            Cell::Text(c.name.clone()),
                            Cell::Text(c.passed.to_string()),
                            c.residual.map_or(Cell::Text(String::new()), Cell::Num),
                            c.tolerance.map_or(Cell::Text(String::new()), Cell::Num),
                            Cell::Text(c.detail.clone()),
                        ]
                    })
                })
                .collect();
            render_csv(
                &[
                    "fixture",
                    "check",
                    "passed",
                    "residual",
                    "tolerance",
                    "detail",
                ],
                &rows,
            )?
        }
    };
    Ok((text, if passed { EXIT_OK } else { EXIT_NUMERICAL }))
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub fixture: String,
}

pub fn export(a: &ExportArgs) -> Result<(String, i32), CliError> {
    let f = get_fixture(&a.fixture)?;
    let text = match (f.metric(), f.distribution.to_doc()) {
        (Some(m), _) => render(&m.to_doc())?,
        (None, Some(doc)) => render(&doc)?,
        (None, None) => {
            return Err(CliError::invalid(format!(
                "fixture {} has no document form",
                f.name
            )))
        }
    };
    Ok((text, EXIT_OK))
}
