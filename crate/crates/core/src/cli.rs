//! Scenario runner and report writer behind the `tubecalc` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::distributions::{Engine, Measure, ThickDistribution, ETA_TOLERANCE};
use crate::error::{Error, Result};
use crate::expansion::{derivative_of, Polynomial, Product, Separable, SmoothPoly, TestFn};
use crate::geometry::Submanifold;
use crate::quadrature::Levels;
use crate::shapes::{make_circle3d, make_sphere};
use crate::tangent_calculus::SurfaceFunction;
use crate::validation::{self, CheckRow, ValidationOptions};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for I/O and other non-numerical failures.
pub const EXIT_IO: i32 = 1;
/// Exit status for malformed scenarios.
pub const EXIT_SCHEMA: i32 = 2;
/// Exit status for numerical failures and failing checks.
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "TUBECALC_THREADS";

fn default_n() -> usize {
    3
}

fn default_radius() -> f64 {
    1.0
}

fn default_slot() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Circle3d {
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialSpec {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Functions g(ξ, ω) on Σ × S^{d-1}. Axes and slots are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Constant {
        value: f64,
    },
    Omega {
        terms: Vec<MonomialSpec>,
    },
    NormalComponent {
        #[serde(default = "default_slot")]
        slot: usize,
        axis: usize,
    },
    Theta {
        axis: usize,
    },
    Coordinate {
        axis: usize,
    },
    Sum {
        terms: Vec<SurfaceSpec>,
    },
    Product {
        factors: Vec<SurfaceSpec>,
    },
    Scaled {
        factor: f64,
        of: Box<SurfaceSpec>,
    },
}

/// Test functions. `support` defaults to half the tube radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFnSpec {
    Bump {
        support: Option<f64>,
    },
    Laurent {
        order: i32,
        coeffs: Vec<f64>,
        support: Option<f64>,
    },
    Angular {
        g: SurfaceSpec,
        order: i32,
        coeffs: Vec<f64>,
        support: Option<f64>,
    },
    NormalComponent {
        axis: usize,
        support: Option<f64>,
    },
    Polynomial {
        terms: Vec<MonomialSpec>,
        support: Option<f64>,
    },
    Derivative {
        axis: usize,
        of: Box<TestFnSpec>,
    },
    Product {
        factors: Vec<TestFnSpec>,
    },
    /// Multipliers without compact support; only valid as weights.
    Constant {
        value: f64,
    },
    Coordinate {
        axis: usize,
    },
    Theta {
        axis: usize,
    },
    RhoPower {
        power: i32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coeff: f64,
    pub dist: DistSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Pf {
        lambda: f64,
        #[serde(default)]
        lambda_im: f64,
    },
    PfPsi {
        psi: TestFnSpec,
    },
    Delta {
        degree: i32,
        g: Option<SurfaceSpec>,
    },
    Derivative {
        axis: usize,
        of: Box<DistSpec>,
    },
    Weighted {
        psi: TestFnSpec,
        of: Box<DistSpec>,
    },
    Sum {
        terms: Vec<TermSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    #[default]
    Pair,
    /// ⟨Π(T), φ⟩ for a polynomial test function.
    Project,
    /// Residue of Pf(ρ^λ) at the distribution's integer λ.
    Residue,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub sigma_level: Option<usize>,
    pub fiber_level: Option<usize>,
    pub radial_points: Option<usize>,
    pub eta: Option<f64>,
    #[serde(default)]
    pub measure: Measure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::schema("format", format!("unknown format `{other}`, expected csv or json"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    /// Relative η-independence tolerance, scaled by 1+|value|.
    pub eta: Option<f64>,
    /// Absolute tolerance against `expected`.
    pub expected: Option<f64>,
    /// Relative tolerance between residue routes.
    pub residue: Option<f64>,
}

/// A parsed scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub shape: ShapeSpec,
    pub distribution: DistSpec,
    pub testfn: TestFnSpec,
    /// Wraps the distribution in ∂/∂x_axis (1-based).
    pub axis: Option<usize>,
    #[serde(default)]
    pub operation: Operation,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tolerance: ToleranceSpec,
    /// Reference value checked against the result.
    pub expected: Option<f64>,
}

/// One report line; same columns in CSV and JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub check_id: String,
    pub shape: String,
    pub distribution: String,
    pub testfn: String,
    pub axis: Option<usize>,
    pub value: f64,
    pub eta: Option<f64>,
    pub value_eta_half: Option<f64>,
    pub abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl From<&CheckRow> for ReportRow {
    fn from(r: &CheckRow) -> Self {
        ReportRow {
            check_id: r.check_id.clone(),
            shape: r.shape.clone(),
            distribution: r.distribution.clone(),
            testfn: r.testfn.clone(),
            axis: r.axis,
            value: r.value,
            eta: r.eta,
            value_eta_half: r.value_eta_half,
            abs_diff: r.abs_diff,
            tolerance: r.tolerance,
            pass: r.pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Echo of the scenario, absent for suite runs.
    pub scenario: Option<Scenario>,
    pub rows: Vec<ReportRow>,
    pub passed: usize,
    pub total: usize,
}

impl Report {
    pub fn new(scenario: Option<Scenario>, rows: Vec<ReportRow>) -> Self {
        let passed = rows.iter().filter(|r| r.pass).count();
        let total = rows.len();
        Report {
            scenario,
            rows,
            passed,
            total,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.passed == self.total
    }
}

/// Parses scenario JSON; errors name the offending key path.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::schema(if key == "." { "(root)".to_string() } else { key }, e.into_inner().to_string())
    })
}

fn axis_index(axis: usize, n: usize, key: &str) -> Result<usize> {
    if axis == 0 || axis > n {
        return Err(Error::schema(key, format!("axis {axis} outside 1..={n}")));
    }
    Ok(axis - 1)
}

fn build_shape(spec: &ShapeSpec) -> Result<(String, Submanifold)> {
    let positive = |r: f64| -> Result<f64> {
        if r > 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(Error::schema("shape.radius", format!("radius must be positive, got {r}")))
        }
    };
    match *spec {
        ShapeSpec::Sphere { n, radius } => {
            if n < 2 {
                return Err(Error::schema("shape.n", format!("ambient dimension must be at least 2, got {n}")));
            }
            let r = positive(radius)?;
            Ok((format!("sphere(n={n},r={r})"), make_sphere(n, r)?))
        }
        ShapeSpec::Circle3d { radius } => {
            let r = positive(radius)?;
            Ok((format!("circle3d(R={r})"), make_circle3d(r)?))
        }
    }
}

fn monomials(terms: &[MonomialSpec], len: usize, key: &str) -> Result<Vec<(f64, Vec<u32>)>> {
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.powers.len() > len {
                return Err(Error::schema(
                    format!("{key}.terms[{i}].powers"),
                    format!("at most {len} exponents allowed"),
                ));
            }
            let mut p = t.powers.clone();
            p.resize(len, 0);
            Ok((t.coeff, p))
        })
        .collect()
}

fn build_surface(spec: &SurfaceSpec, m: &Submanifold, key: &str) -> Result<SurfaceFunction> {
    let n = m.ambient_dim();
    Ok(match spec {
        SurfaceSpec::Constant { value } => SurfaceFunction::Constant(*value),
        SurfaceSpec::Omega { terms } => SurfaceFunction::OmegaPoly(monomials(terms, m.codim(), key)?),
        SurfaceSpec::NormalComponent { slot, axis } => SurfaceFunction::NormalComponent {
            slot: axis_index(*slot, m.codim(), &format!("{key}.slot"))?,
            axis: axis_index(*axis, n, &format!("{key}.axis"))?,
        },
        SurfaceSpec::Theta { axis } => SurfaceFunction::Theta {
            axis: axis_index(*axis, n, &format!("{key}.axis"))?,
        },
        SurfaceSpec::Coordinate { axis } => SurfaceFunction::Coordinate {
            axis: axis_index(*axis, n, &format!("{key}.axis"))?,
        },
        SurfaceSpec::Sum { terms } => SurfaceFunction::Sum(
            terms
                .iter()
                .enumerate()
                .map(|(i, t)| build_surface(t, m, &format!("{key}.terms[{i}]")))
                .collect::<Result<_>>()?,
        ),
        SurfaceSpec::Product { factors } => SurfaceFunction::Product(
            factors
                .iter()
                .enumerate()
                .map(|(i, t)| build_surface(t, m, &format!("{key}.factors[{i}]")))
                .collect::<Result<_>>()?,
        ),
        SurfaceSpec::Scaled { factor, of } => {
            SurfaceFunction::Scaled(*factor, Box::new(build_surface(of, m, &format!("{key}.of"))?))
        }
    })
}

fn support_of(support: Option<f64>, m: &Submanifold, key: &str) -> Result<f64> {
    let tube = m.tube_radius();
    let s = support.unwrap_or(0.5 * tube);
    if !(s > 0.0 && s <= tube) {
        return Err(Error::schema(
            format!("{key}.support"),
            format!("support radius {s} must lie in (0, {tube}]"),
        ));
    }
    Ok(s)
}

fn build_testfn(spec: &TestFnSpec, m: &Submanifold, key: &str) -> Result<TestFn> {
    let n = m.ambient_dim();
    Ok(match spec {
        TestFnSpec::Bump { support } => Arc::new(Separable::bump(support_of(*support, m, key)?)),
        TestFnSpec::Laurent { order, coeffs, support } => {
            Arc::new(Separable::laurent(*order, coeffs.clone(), support_of(*support, m, key)?))
        }
        TestFnSpec::Angular {
            g,
            order,
            coeffs,
            support,
        } => Arc::new(Separable::angular(
            build_surface(g, m, &format!("{key}.g"))?,
            *order,
            coeffs.clone(),
            support_of(*support, m, key)?,
        )),
        TestFnSpec::NormalComponent { axis, support } => Arc::new(Separable::normal_component(
            axis_index(*axis, n, &format!("{key}.axis"))?,
            support_of(*support, m, key)?,
        )),
        TestFnSpec::Polynomial { terms, support } => Arc::new(SmoothPoly::new(
            Polynomial::new(monomials(terms, n, key)?),
            support_of(*support, m, key)?,
        )),
        TestFnSpec::Derivative { axis, of } => derivative_of(
            &build_testfn(of, m, &format!("{key}.of"))?,
            axis_index(*axis, n, &format!("{key}.axis"))?,
        ),
        TestFnSpec::Product { factors } => {
            let mut it = factors.iter().enumerate();
            let (_, first) = it
                .next()
                .ok_or_else(|| Error::schema(format!("{key}.factors"), "needs at least one factor"))?;
            let mut acc = build_testfn(first, m, &format!("{key}.factors[0]"))?;
            for (i, f) in it {
                acc = Arc::new(Product::new(acc, build_testfn(f, m, &format!("{key}.factors[{i}]"))?));
            }
            acc
        }
        TestFnSpec::Constant { value } => Arc::new(Separable::constant(*value)),
        TestFnSpec::Coordinate { axis } => Arc::new(Separable::coordinate(axis_index(*axis, n, &format!("{key}.axis"))?)),
        TestFnSpec::Theta { axis } => Arc::new(Separable::theta(axis_index(*axis, n, &format!("{key}.axis"))?)),
        TestFnSpec::RhoPower { power } => Arc::new(Separable::rho_power(*power)),
    })
}

fn build_dist(spec: &DistSpec, e: &Engine, key: &str) -> Result<ThickDistribution> {
    let m = e.manifold();
    Ok(match spec {
        DistSpec::Pf { lambda, lambda_im } => {
            if !lambda.is_finite() || !lambda_im.is_finite() {
                return Err(Error::schema(format!("{key}.lambda"), "lambda must be finite"));
            }
            ThickDistribution::pf_complex(Complex::new(*lambda, *lambda_im))
        }
        DistSpec::PfPsi { psi } => ThickDistribution::pf_psi(build_testfn(psi, m, &format!("{key}.psi"))?),
        DistSpec::Delta { degree, g } => match g {
            Some(g) => ThickDistribution::thick_delta(build_surface(g, m, &format!("{key}.g"))?, *degree),
            None => ThickDistribution::delta(*degree),
        },
        DistSpec::Derivative { axis, of } => {
            let inner = build_dist(of, e, &format!("{key}.of"))?;
            e.derivative(&inner, axis_index(*axis, m.ambient_dim(), &format!("{key}.axis"))?)
        }
        DistSpec::Weighted { psi, of } => ThickDistribution::weighted(
            build_testfn(psi, m, &format!("{key}.psi"))?,
            build_dist(of, e, &format!("{key}.of"))?,
        ),
        DistSpec::Sum { terms } => ThickDistribution::combination(
            terms
                .iter()
                .enumerate()
                .map(|(i, t)| Ok((t.coeff, build_dist(&t.dist, e, &format!("{key}.terms[{i}].dist"))?)))
                .collect::<Result<_>>()?,
        ),
    })
}

fn build_levels(q: &QuadratureSpec) -> Result<Levels> {
    let d = Levels::default();
    let positive = |v: Option<usize>, dflt: usize, key: &str| -> Result<usize> {
        match v {
            Some(0) => Err(Error::schema(format!("quadrature.{key}"), "must be positive")),
            Some(v) => Ok(v),
            None => Ok(dflt),
        }
    };
    Ok(Levels {
        sigma_level: positive(q.sigma_level, d.sigma_level, "sigma_level")?,
        fiber_level: positive(q.fiber_level, d.fiber_level, "fiber_level")?,
        radial_points: positive(q.radial_points, d.radial_points, "radial_points")?,
    })
}

/// A scenario with every catalog reference resolved.
pub struct Resolved {
    pub shape_label: String,
    pub engine: Engine,
    pub distribution: ThickDistribution,
    pub testfn: TestFn,
    pub smooth: Option<SmoothPoly>,
}

/// Resolves catalog references; every failure here is a schema error.
pub fn resolve(sc: &Scenario) -> Result<Resolved> {
    let (shape_label, m) = build_shape(&sc.shape)?;
    let levels = build_levels(&sc.quadrature)?;
    let engine = Engine::new(m.clone(), levels)?.with_measure(sc.quadrature.measure);
    let mut distribution = build_dist(&sc.distribution, &engine, "distribution")?;
    if let Some(axis) = sc.axis {
        distribution = engine.derivative(&distribution, axis_index(axis, m.ambient_dim(), "axis")?);
    }
    let testfn = build_testfn(&sc.testfn, &m, "testfn")?;
    let finite = testfn.support_radius();
    if !(finite <= m.tube_radius()) {
        return Err(Error::schema(
            "testfn",
            format!("support radius {finite} exceeds tube radius {}", m.tube_radius()),
        ));
    }
    if let Some(eta) = sc.quadrature.eta {
        if !(eta > 0.0 && eta <= finite) {
            return Err(Error::schema("quadrature.eta", format!("eta must lie in (0, {finite}]")));
        }
    }
    let smooth = match (&sc.operation, &sc.testfn) {
        (Operation::Project, TestFnSpec::Polynomial { terms, support }) => Some(SmoothPoly::new(
            Polynomial::new(monomials(terms, m.ambient_dim(), "testfn")?),
            support_of(*support, &m, "testfn")?,
        )),
        (Operation::Project, _) => {
            return Err(Error::schema("testfn.kind", "projection needs a polynomial test function"))
        }
        _ => None,
    };
    if sc.operation == Operation::Residue && (sc.axis.is_some() || distribution.integer_lambda().is_none()) {
        return Err(Error::schema("distribution", "residue needs an underived pf with integer lambda"));
    }
    Ok(Resolved {
        shape_label,
        engine,
        distribution,
        testfn,
        smooth,
    })
}

/// Executes a parsed scenario.
pub fn execute(sc: &Scenario) -> Result<Report> {
    let r = resolve(sc)?;
    let dist_label = r.distribution.label();
    let tfn_label = r.testfn.label();
    let axis = sc.axis;
    let eta_tol = sc.tolerance.eta.unwrap_or(ETA_TOLERANCE);
    let mut row = ReportRow {
        check_id: "s-0001".into(),
        shape: r.shape_label.clone(),
        distribution: dist_label,
        testfn: tfn_label,
        axis,
        value: f64::NAN,
        eta: None,
        value_eta_half: None,
        abs_diff: 0.0,
        tolerance: 0.0,
        pass: false,
    };
    match sc.operation {
        Operation::Pair => {
            let v = r.engine.pair(&r.distribution, &r.testfn, sc.quadrature.eta)?;
            row.value = v.value;
            row.eta = v.eta;
            row.value_eta_half = v.value_eta_half;
            row.abs_diff = v.abs_diff;
            row.tolerance = eta_tol * (1.0 + v.value.abs());
            row.pass = v.abs_diff <= row.tolerance;
        }
        Operation::Project => {
            let field = r.smooth.as_ref().expect("resolved").field(r.engine.manifold());
            let v = r.engine.project_pair(&r.distribution, &field)?;
            row.value = v.value;
            row.abs_diff = v.multilayer.map_or(0.0, |b| (v.value - b).abs());
            row.tolerance = crate::distributions::PROJECTION_ROUTE_TOL * v.value.abs().max(1.0);
            row.pass = row.abs_diff <= row.tolerance;
        }
        Operation::Residue => {
            let k = r.distribution.integer_lambda().expect("resolved");
            let v = r.engine.residue(k, &r.testfn)?;
            row.value = v.limit;
            row.abs_diff = (v.limit - v.formula).abs();
            row.tolerance = sc.tolerance.residue.unwrap_or(1e-3) * v.formula.abs().max(1e-12);
            row.pass = row.abs_diff <= row.tolerance;
        }
    }
    if let Some(expected) = sc.expected {
        let diff = (row.value - expected).abs();
        let tol = sc.tolerance.expected.unwrap_or(1e-8 * (1.0 + expected.abs()));
        row.pass = row.pass && diff <= tol;
        row.abs_diff = diff;
        row.tolerance = tol;
    }
    Ok(Report::new(Some(sc.clone()), vec![row]))
}

/// Reads, parses and executes a scenario file.
pub fn run_scenario(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::schema("(file)", format!("cannot read {}: {e}", path.display())))?;
    execute(&parse_scenario(&text)?)
}

/// Runs the acceptance suite, optionally restricted to some criteria.
pub fn validate(opts: &ValidationOptions, criteria: &[u8]) -> (Vec<CheckRow>, Report) {
    let rows: Vec<CheckRow> = if criteria.is_empty() {
        validation::validate(opts)
    } else {
        criteria.iter().flat_map(|c| validation::run_criterion(*c, opts)).collect()
    };
    let report = Report::new(None, rows.iter().map(ReportRow::from).collect());
    (rows, report)
}

/// Fixed 17-significant-digit rendering.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub const CSV_HEADER: [&str; 11] = [
    "check_id",
    "shape",
    "distribution",
    "testfn",
    "axis",
    "value",
    "eta",
    "value_eta_half",
    "abs_diff",
    "tolerance",
    "pass",
];

pub fn render_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in &report.rows {
        w.write_record([
            r.check_id.clone(),
            r.shape.clone(),
            r.distribution.clone(),
            r.testfn.clone(),
            r.axis.map(|a| a.to_string()).unwrap_or_default(),
            num(r.value),
            r.eta.map(num).unwrap_or_default(),
            r.value_eta_half.map(num).unwrap_or_default(),
            num(r.abs_diff),
            num(r.tolerance),
            r.pass.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn json_num(x: f64) -> String {
    if x.is_finite() {
        num(x)
    } else {
        "null".into()
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

pub fn render_json(report: &Report) -> Result<String> {
    let scenario = match &report.scenario {
        Some(sc) => serde_json::to_string(sc).map_err(|e| Error::Io(e.to_string()))?,
        None => "null".into(),
    };
    let opt = |x: Option<f64>| x.map_or("null".to_string(), json_num);
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "    {{\"check_id\": {}, \"shape\": {}, \"distribution\": {}, \"testfn\": {}, \"axis\": {}, \
                 \"value\": {}, \"eta\": {}, \"value_eta_half\": {}, \"abs_diff\": {}, \"tolerance\": {}, \"pass\": {}}}",
                json_str(&r.check_id),
                json_str(&r.shape),
                json_str(&r.distribution),
                json_str(&r.testfn),
                r.axis.map_or("null".to_string(), |a| a.to_string()),
                json_num(r.value),
                opt(r.eta),
                opt(r.value_eta_half),
                json_num(r.abs_diff),
                json_num(r.tolerance),
                r.pass
            )
        })
        .collect();
    Ok(format!(
        "{{\n  \"scenario\": {scenario},\n  \"rows\": [\n{}\n  ],\n  \"passed\": {},\n  \"total\": {}\n}}\n",
        rows.join(",\n"),
        report.passed,
        report.total
    ))
}

pub fn render(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Csv => render_csv(report),
        Format::Json => render_json(report),
    }
}

/// Writes the rendered report to `path` via a sibling temporary file, or to
/// stdout when no path is given.
pub fn emit_report(report: &Report, format: Format, path: Option<&Path>) -> Result<()> {
    let text = render(report, format)?;
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        Some(p) => {
            let mut tmp = p.as_os_str().to_owned();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            fs::write(&tmp, text.as_bytes())?;
            if let Err(e) = fs::rename(&tmp, p) {
                let _ = fs::remove_file(&tmp);
                return Err(e.into());
            }
        }
    }
    Ok(())
}

/// Applies TUBECALC_THREADS to the global worker pool.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::schema(THREADS_ENV, format!("expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Exit status for a finished run.
pub fn exit_code(result: &Result<Report>) -> i32 {
    match result {
        Ok(r) if r.all_pass() => EXIT_OK,
        Ok(_) => EXIT_NUMERICAL,
        Err(e) => error_code(e),
    }
}

pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Schema { .. } => EXIT_SCHEMA,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_errors_name_the_key() {
        let err = parse_scenario(r#"{"shape": {"kind": "sphere", "radius": 1.0, "rdius": 2}}"#).unwrap_err();
        match err {
            Error::Schema { key, message } => {
                assert_eq!(key, "shape");
                assert!(message.contains("rdius"), "{message}");
            }
            e => panic!("{e}"),
        }
        let err = parse_scenario(
            r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "derivative", "axis": 1,
                "of": {"kind": "delta"}}, "testfn": {"kind": "bump"}}"#,
        )
        .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("`distribution`") && text.contains("degree"), "{text}");
    }

    #[test]
    fn out_of_range_axis_is_schema_error() {
        let sc = parse_scenario(
            r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "delta", "degree": 0},
                "testfn": {"kind": "bump"}, "axis": 4}"#,
        )
        .unwrap();
        let err = execute(&sc).err().unwrap();
        assert!(err.is_schema());
        assert!(err.to_string().contains("`axis`"), "{err}");
    }

    #[test]
    fn csv_quotes_labels_with_commas() {
        let row = ReportRow {
            check_id: "s-0001".into(),
            shape: "circle3d(R=1)".into(),
            distribution: "Pf(rho^-1)".into(),
            testfn: "laurent(m=-1,terms=[1.0])".into(),
            axis: None,
            value: 1.0,
            eta: Some(0.25),
            value_eta_half: Some(1.0),
            abs_diff: 0.0,
            tolerance: 1e-7,
            pass: true,
        };
        let csv = render_csv(&Report::new(None, vec![row])).unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.contains("\"laurent(m=-1,terms=[1.0])\""), "{line}");
        assert!(line.contains("1.0000000000000000e0"), "{line}");
    }
}
