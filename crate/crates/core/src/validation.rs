//! Built-in acceptance suite: nine groups of checks against closed forms and
//! internal consistency identities.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::distributions::{Engine, ThickDistribution};
use crate::error::{Error, Result};
use crate::expansion::{
    derivative_of, extract_coeffs, fit_coeffs, PointwiseDerivative, Polynomial, Separable, SmoothPoly, TestFn,
    ThickTestFunction,
};
use crate::geometry::{fiber_point, grad_rho, locate, project, Submanifold};
use crate::quadrature::{fiber_rule, integrate_tube, sigma_rule, unit_sphere_area, Levels};
use crate::shapes::{make_circle3d, make_sphere, sphere_delta_derivative_oracle};
use crate::tangent_calculus::{b_coeff, b_coeff_numeric, second_fundamental_numeric, SurfaceFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationLevel {
    #[default]
    Quick,
    Full,
}

impl ValidationLevel {
    pub fn levels(self) -> Levels {
        match self {
            ValidationLevel::Quick => Levels {
                sigma_level: 16,
                fiber_level: 2,
                radial_points: 32,
            },
            ValidationLevel::Full => Levels::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValidationOptions {
    pub level: ValidationLevel,
    /// Replaces the level's quadrature resolution.
    pub levels: Option<Levels>,
}

impl ValidationOptions {
    pub fn levels(&self) -> Levels {
        self.levels.unwrap_or_else(|| self.level.levels())
    }
}

/// One line of the validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check_id: String,
    pub criterion: u8,
    pub reference: String,
    pub shape: String,
    pub distribution: String,
    pub testfn: String,
    /// 1-based.
    pub axis: Option<usize>,
    pub value: f64,
    pub expected: f64,
    pub eta: Option<f64>,
    pub value_eta_half: Option<f64>,
    pub abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Titles of the nine criteria.
pub const CRITERIA: [(u8, &str); 9] = [
    (1, "sphere derivative table"),
    (2, "mean-curvature identity"),
    (3, "eta-independence of finite parts"),
    (4, "convergent-regime equivalence"),
    (5, "residue formula"),
    (6, "adjoint identity"),
    (7, "literal derivative formulas for Pf"),
    (8, "kernel of the projection"),
    (9, "geometry kernel"),
];

struct Rows {
    criterion: u8,
    reference: &'static str,
    rows: Vec<CheckRow>,
}

impl Rows {
    fn new(criterion: u8, reference: &'static str) -> Self {
        Rows {
            criterion,
            reference,
            rows: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        shape: &str,
        distribution: String,
        testfn: String,
        axis: Option<usize>,
        value: f64,
        expected: f64,
        abs_diff: f64,
        tolerance: f64,
        pass: bool,
    ) -> &mut CheckRow {
        let id = format!("c{}-{:04}", self.criterion, self.rows.len() + 1);
        self.rows.push(CheckRow {
            check_id: id,
            criterion: self.criterion,
            reference: self.reference.to_string(),
            shape: shape.to_string(),
            distribution,
            testfn,
            axis: axis.map(|a| a + 1),
            value,
            expected,
            eta: None,
            value_eta_half: None,
            abs_diff,
            tolerance,
            pass,
        });
        self.rows.last_mut().unwrap()
    }

    /// |value − expected| ≤ rel·|expected|, or ≤ abs when expected is 0.
    #[allow(clippy::too_many_arguments)]
    fn relative(
        &mut self,
        shape: &str,
        distribution: String,
        testfn: String,
        axis: Option<usize>,
        value: f64,
        expected: f64,
        rel: f64,
        abs: f64,
    ) {
        let tol = if expected == 0.0 { abs } else { rel * expected.abs() };
        let diff = (value - expected).abs();
        self.push(shape, distribution, testfn, axis, value, expected, diff, tol, diff <= tol);
    }

    /// |value − expected| ≤ tol·max(1, |expected|).
    #[allow(clippy::too_many_arguments)]
    fn scaled(
        &mut self,
        shape: &str,
        distribution: String,
        testfn: String,
        axis: Option<usize>,
        value: f64,
        expected: f64,
        tol: f64,
    ) {
        let tol = tol * expected.abs().max(1.0);
        let diff = (value - expected).abs();
        self.push(shape, distribution, testfn, axis, value, expected, diff, tol, diff <= tol);
    }

    fn failure(&mut self, shape: &str, what: String, err: &Error) {
        self.push(
            shape,
            what,
            format!("error: {err}"),
            None,
            f64::NAN,
            f64::NAN,
            f64::NAN,
            0.0,
            false,
        );
    }
}

/// Shapes exercised by the pairing criteria.
pub fn shipped_shapes() -> Vec<(String, Submanifold)> {
    vec![
        ("sphere(n=3,r=1)".into(), make_sphere(3, 1.0).expect("unit sphere")),
        ("circle3d(R=1)".into(), make_circle3d(1.0).expect("unit circle")),
    ]
}

/// Three test functions per shape: a bump, a Laurent profile and an angular one.
pub fn catalog(m: &Submanifold) -> Vec<TestFn> {
    let s = 0.5 * m.tube_radius();
    let angular = if m.codim() == 1 {
        SurfaceFunction::Sum(vec![
            SurfaceFunction::Constant(1.0),
            SurfaceFunction::Coordinate { axis: 0 },
        ])
    } else {
        SurfaceFunction::Sum(vec![
            SurfaceFunction::Constant(1.0),
            SurfaceFunction::Product(vec![
                SurfaceFunction::Coordinate { axis: 0 },
                SurfaceFunction::omega_monomial(1.0, vec![0, 1]),
            ]),
            SurfaceFunction::omega_monomial(0.5, vec![2, 0]),
        ])
    };
    vec![
        Arc::new(Separable::bump(s)),
        Arc::new(Separable::laurent(-1, vec![1.0, 0.5, 0.25, 0.125], s)),
        Arc::new(Separable::angular(angular, 0, vec![1.0, -0.5, 0.3], s)),
    ]
}

/// Smooth fields used for projection checks.
pub fn smooth_catalog(m: &Submanifold) -> Vec<SmoothPoly> {
    let s = 0.5 * m.tube_radius();
    let n = m.ambient_dim();
    let e = |ps: &[u32]| -> Vec<u32> {
        let mut v = vec![0; n];
        v[..ps.len()].copy_from_slice(ps);
        v
    };
    vec![
        SmoothPoly::new(
            Polynomial::new(vec![
                (1.0, e(&[])),
                (1.0, e(&[1])),
                (1.0, e(&[2])),
                (1.0, e(&[0, 2])),
                (0.5, e(&[0, 0, 1])),
            ]),
            s,
        ),
        SmoothPoly::new(
            Polynomial::new(vec![(0.5, e(&[])), (1.0, e(&[0, 0, 2])), (0.5, e(&[1, 0, 1])), (0.25, e(&[0, 1]))]),
            s,
        ),
    ]
}

fn engine(m: &Submanifold, opts: &ValidationOptions) -> Result<Engine> {
    Engine::new(m.clone(), opts.levels())
}

/// Runs one criterion; numerical errors become failing rows.
pub fn run_criterion(criterion: u8, opts: &ValidationOptions) -> Vec<CheckRow> {
    let out = match criterion {
        1 => criterion1(opts),
        2 => criterion2(opts),
        3 => criterion3(opts),
        4 => criterion4(opts),
        5 => criterion5(opts),
        6 => criterion6(opts),
        7 => criterion7(opts),
        8 => criterion8(opts),
        9 => criterion9(opts),
        _ => Err(Error::InvalidArgument(format!("no criterion {criterion}"))),
    };
    match out {
        Ok(rows) => rows,
        Err(e) => {
            let mut r = Rows::new(criterion, "suite");
            r.failure("-", format!("criterion {criterion}"), &e);
            r.rows
        }
    }
}

/// All criteria in order.
pub fn validate(opts: &ValidationOptions) -> Vec<CheckRow> {
    CRITERIA.iter().flat_map(|(c, _)| run_criterion(*c, opts)).collect()
}

fn criterion1(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(1, "sphere example table");
    for r in [1.0, 2.0] {
        let m = make_sphere(3, r)?;
        let e = engine(&m, opts)?;
        let shape = format!("sphere(n=3,r={r})");
        for i in 0..3 {
            for k in 0..3 {
                let phi: TestFn = Arc::new(Separable::normal_component(k, 0.5 * r));
                let dphi: TestFn = Arc::new(PointwiseDerivative::new(phi.clone(), i));
                for j in [-1, 0, 1, 2] {
                    let oracle = sphere_delta_derivative_oracle(3, r, i, k, j);
                    let t = e.derivative(&ThickDistribution::delta(j), i);
                    match e.pair(&t, &phi, None) {
                        Ok(v) => rows.relative(&shape, t.label(), phi.label(), Some(i), v.value, oracle, 1e-4, 1e-8),
                        Err(err) => rows.failure(&shape, t.label(), &err),
                    }
                    let delta = ThickDistribution::delta(j);
                    match e.pair(&delta, &dphi, None) {
                        Ok(v) => rows.relative(
                            &shape,
                            format!("-{}", delta.label()),
                            dphi.label(),
                            Some(i),
                            -v.value,
                            oracle,
                            1e-4,
                            1e-8,
                        ),
                        Err(err) => rows.failure(&shape, delta.label(), &err),
                    }
                }
            }
        }
    }
    Ok(rows.rows)
}

fn criterion2(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(2, "mean curvature identity");
    let n = 3;
    for r in [1.0, 2.0] {
        let m = make_sphere(n, r)?;
        let shape = format!("sphere(n=3,r={r})");
        let expected = r.powi(n as i32 - 2) * unit_sphere_area(n - 1);
        // ∫_Σ H dσ from numerically differentiated normals
        let generic = m.generic_view();
        let sigma = sigma_rule(&m, opts.levels().sigma_level)?;
        let mut h_int = 0.0;
        for (xi, w) in sigma.nodes.iter().zip(&sigma.weights) {
            h_int += w * second_fundamental_numeric(&generic, xi)?.mean_curvature;
        }
        rows.relative(&shape, "int H dsigma".into(), "-".into(), None, h_int, expected, 1e-5, 0.0);
        let e = engine(&m, opts)?;
        let mut total = 0.0;
        for i in 0..n {
            let phi: TestFn = Arc::new(Separable::normal_component(i, 0.5 * r));
            let t = e.derivative(&ThickDistribution::delta(0), i);
            total += e.pair(&t, &phi, None)?.value;
        }
        let rhs = total / (1.0 - n as f64);
        rows.relative(&shape, "<grad delta, n>/(1-n)".into(), "n_k chi".into(), None, rhs, expected, 1e-5, 0.0);
    }
    Ok(rows.rows)
}

fn criterion3(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(3, "finite-part split");
    for (shape, m) in shipped_shapes() {
        let e = engine(&m, opts)?;
        for lam in [0.5, -0.5, -1.5, -2.0, -3.0] {
            let t = ThickDistribution::pf(lam);
            for phi in catalog(&m) {
                match e.pair(&t, &phi, None) {
                    Ok(v) => {
                        let half = v.value_eta_half.unwrap_or(f64::NAN);
                        let tol = 1e-7 * (1.0 + v.value.abs());
                        let diff = (v.value - half).abs();
                        let row = rows.push(&shape, t.label(), phi.label(), None, v.value, half, diff, tol, diff < tol);
                        row.eta = v.eta;
                        row.value_eta_half = v.value_eta_half;
                    }
                    Err(err) => rows.failure(&shape, t.label(), &err),
                }
            }
        }
    }
    Ok(rows.rows)
}

fn criterion4(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(4, "convergent regime");
    for (shape, m) in shipped_shapes() {
        let e = engine(&m, opts)?;
        for phi in catalog(&m).into_iter().filter(|f| f.leading_order() >= 0) {
            for lam in [0.5, 0.0] {
                let t = ThickDistribution::pf(lam);
                let fp = e.pair(&t, &phi, None)?.value;
                let f = phi.clone();
                let mm = m.clone();
                let direct = integrate_tube(
                    &m,
                    move |p, rho| {
                        if rho <= 0.0 {
                            return 0.0;
                        }
                        rho.powf(lam) * f.value(&mm, &p.at(rho)).unwrap_or(f64::NAN)
                    },
                    0.0,
                    phi.support_radius(),
                    opts.levels(),
                )?;
                let diff = (fp - direct).abs();
                rows.push(&shape, t.label(), phi.label(), None, fp, direct, diff, 1e-8, diff <= 1e-8);
            }
        }
    }
    Ok(rows.rows)
}

fn criterion5(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(5, "residues of Pf(rho^lambda)");
    for (shape, m) in shipped_shapes() {
        let e = engine(&m, opts)?;
        let d = m.codim() as i32;
        for k in [-d, -d - 1, -d - 2] {
            for phi in catalog(&m) {
                match e.residue(k, &phi) {
                    Ok(r) => rows.relative(
                        &shape,
                        format!("Res_{{lambda={k}}} Pf(rho^lambda)"),
                        phi.label(),
                        None,
                        r.limit,
                        r.formula,
                        1e-3,
                        1e-8,
                    ),
                    Err(err) => rows.failure(&shape, format!("residue k={k}"), &err),
                }
            }
        }
    }
    Ok(rows.rows)
}

fn criterion6_distributions() -> Vec<ThickDistribution> {
    vec![
        ThickDistribution::pf(0.5),
        ThickDistribution::pf(-1.5),
        ThickDistribution::pf(0.0),
        ThickDistribution::delta(-1),
        ThickDistribution::delta(0),
        ThickDistribution::delta(1),
    ]
}

fn criterion6(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(6, "adjoint identity");
    for (shape, m) in shipped_shapes() {
        let e = engine(&m, opts)?;
        for t in criterion6_distributions() {
            for i in 0..m.ambient_dim() {
                let dt = e.derivative(&t, i);
                for phi in catalog(&m) {
                    let dphi = derivative_of(&phi, i);
                    let lhs = e.pair(&dt, &phi, None);
                    let rhs = e.pair(&t, &dphi, None);
                    match (lhs, rhs) {
                        (Ok(l), Ok(r)) => {
                            rows.scaled(&shape, format!("d{}[{}]", i + 1, t.label()), phi.label(), Some(i), l.value, -r.value, 1e-5)
                        }
                        (Err(err), _) | (_, Err(err)) => rows.failure(&shape, t.label(), &err),
                    }
                }
            }
        }
    }
    Ok(rows.rows)
}

fn criterion7(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(7, "literal Pf derivative formulas");
    for (shape, m) in shipped_shapes() {
        let e = engine(&m, opts)?;
        let d = m.codim() as i32;
        let area = e.fiber_area();
        for i in 0..m.ambient_dim() {
            let theta: TestFn = Arc::new(Separable::theta(i));
            for phi in catalog(&m) {
                let dphi = derivative_of(&phi, i);
                // ∂Pf(ρ^λ) = λ θ_i Pf(ρ^{λ−1}) [+ |S^{d−1}| θ_i δ^{[1−d−k]} for λ = k]
                for lam in [0.5, 0.0] {
                    let lhs = -e.pair(&ThickDistribution::pf(lam), &dphi, None)?.value;
                    let mut parts = vec![(
                        lam,
                        ThickDistribution::weighted(theta.clone(), ThickDistribution::pf(lam - 1.0)),
                    )];
                    if lam.fract() == 0.0 {
                        parts.push((
                            area,
                            ThickDistribution::thick_delta(SurfaceFunction::Theta { axis: i }, 1 - d - lam as i32),
                        ));
                    }
                    let rhs_t = ThickDistribution::combination(parts).normalize();
                    let rhs = e.pair(&rhs_t, &phi, None)?.value;
                    rows.scaled(&shape, format!("d{}[Pf(rho^{lam})]", i + 1), phi.label(), Some(i), lhs, rhs, 1e-5);
                }
                // ∂Pf(ψ) = Pf(∂ψ) + |S^{d−1}| ψ θ_i δ^{[1−d]}
                let psis: Vec<TestFn> = vec![Arc::new(Separable::constant(1.0)), Arc::new(Separable::coordinate(0))];
                for psi in psis {
                    let lhs = -e.pair(&ThickDistribution::pf_psi(psi.clone()), &dphi, None)?.value;
                    let rhs_t = ThickDistribution::combination(vec![
                        (1.0, ThickDistribution::pf_psi(derivative_of(&psi, i))),
                        (
                            area,
                            ThickDistribution::weighted(
                                psi.clone(),
                                ThickDistribution::thick_delta(SurfaceFunction::Theta { axis: i }, 1 - d),
                            ),
                        ),
                    ]);
                    let rhs = e.pair(&rhs_t, &phi, None)?.value;
                    rows.scaled(&shape, format!("d{}[Pf({})]", i + 1, psi.label()), phi.label(), Some(i), lhs, rhs, 1e-5);
                }
            }
        }
    }
    Ok(rows.rows)
}

/// Fiber moments ⟨g(ξ,·), ω^α⟩, |α| = j, all zero at every Σ node.
fn moment_free(m: &Submanifold, g: &SurfaceFunction, j: usize, opts: &ValidationOptions) -> Result<bool> {
    let sigma = sigma_rule(m, opts.levels().sigma_level)?;
    let fiber = fiber_rule(m.codim(), opts.levels().fiber_level.max(2))?;
    for xi in &sigma.nodes {
        for alpha in crate::tangent_calculus::multi_indices(m.codim(), j) {
            let mut s = 0.0;
            for (om, w) in fiber.nodes.iter().zip(&fiber.weights) {
                let p = fiber_point(m, xi, om)?;
                s += w * g.value(&p) * crate::tangent_calculus::omega_power(om, &alpha);
            }
            if s.abs() > 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn criterion8(opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(8, "kernel of projection");
    let m = make_circle3d(1.0)?;
    let shape = "circle3d(R=1)";
    let e = engine(&m, opts)?;
    let fields = smooth_catalog(&m);
    let gs = vec![
        SurfaceFunction::omega_monomial(1.0, vec![1, 0]),
        SurfaceFunction::OmegaPoly(vec![(1.0, vec![2, 0]), (-0.5, vec![0, 0])]),
    ];
    for g in &gs {
        for j in 0..=2 {
            let free = moment_free(&m, g, j as usize, opts)?;
            let t = ThickDistribution::thick_delta(g.clone(), j);
            let mut largest: f64 = 0.0;
            for f in &fields {
                let v = e.project_pair(&t, &f.field(&m))?.value;
                largest = largest.max(v.abs());
                if free {
                    rows.push(shape, t.label(), f.label(), None, v, 0.0, v.abs(), 1e-8, v.abs() < 1e-8);
                }
            }
            if !free {
                rows.push(
                    shape,
                    t.label(),
                    "max over smooth catalog".into(),
                    None,
                    largest,
                    f64::NAN,
                    largest,
                    1e-3,
                    largest > 1e-3,
                );
            }
        }
    }
    let t = ThickDistribution::delta(0);
    for f in &fields {
        let v = e.project_pair(&t, &f.field(&m))?.value;
        rows.push(shape, t.label(), f.label(), None, v, f64::NAN, v.abs(), 1e-3, v.abs() > 1e-3);
    }
    Ok(rows.rows)
}

fn samples(m: &Submanifold) -> Vec<DVector<f64>> {
    let pts: Vec<Vec<f64>> = if m.ambient_dim() == 3 && m.codim() == 1 {
        vec![vec![1.3, 0.2, -0.4], vec![0.3, -0.6, 0.5], vec![-0.1, 0.9, 0.8]]
    } else {
        vec![vec![0.15, 0.05, 0.2], vec![1.2, 0.3, -0.1], vec![-0.6, 0.7, 0.25]]
    };
    pts.into_iter().map(DVector::from_vec).collect()
}

fn criterion9(_opts: &ValidationOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Rows::new(9, "geometry kernel");
    for (shape, m) in shipped_shapes() {
        let o = *m.oracle().expect("shipped shape");
        let generic = m.generic_view();
        for x in samples(&m) {
            let newton = project(&generic, &x)?;
            let closed = o.project(&x);
            let diff = (newton - &closed).norm();
            rows.push(&shape, "projection".into(), format!("{:?}", x.as_slice()), None, diff, 0.0, diff, 1e-10, diff <= 1e-10);
            let g = grad_rho(&generic, &x)?;
            let (fp, _) = locate(&m, &x)?;
            let gap = (&g - &fp.theta).norm();
            rows.push(&shape, "grad_rho vs theta".into(), format!("{:?}", x.as_slice()), None, gap, 0.0, gap, 1e-6, gap <= 1e-6);
            let h = 1e-6;
            let mut fd = DVector::zeros(x.len());
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let rp = (&xp - project(&m, &xp)?).norm();
                let rm = (&xm - project(&m, &xm)?).norm();
                fd[i] = (rp - rm) / (2.0 * h);
            }
            let fdd = (&g - fd).norm();
            rows.push(&shape, "grad_rho vs FD".into(), format!("{:?}", x.as_slice()), None, fdd, 0.0, fdd, 1e-6, fdd <= 1e-6);
        }
        // Taylor coefficients from normal derivatives against least-squares extraction
        let foot = project(&m, &samples(&m)[1])?;
        let omegas: Vec<DVector<f64>> = if m.codim() == 1 {
            vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)]
        } else {
            vec![DVector::from_vec(vec![0.6, 0.8]), DVector::from_vec(vec![-0.8, 0.6])]
        };
        for sp in smooth_catalog(&m) {
            let field = sp.field(&m);
            for om in &omegas {
                let p = fiber_point(&m, &foot, om)?;
                let taylor = extract_coeffs(&m, &field, &p, 3)?;
                let fit = fit_coeffs(&m, &sp, &p, 3)?.expansion;
                for (j, (a, b)) in taylor.a.iter().zip(&fit.a).enumerate() {
                    let diff = (a - b).abs();
                    let tol = 1e-5 * b.abs().max(1.0);
                    rows.push(
                        &shape,
                        format!("taylor vs fit a_{j}"),
                        sp.label(),
                        None,
                        *a,
                        *b,
                        diff,
                        tol,
                        diff <= tol,
                    );
                }
            }
        }
        if m.codim() == 1 {
            let n = m.ambient_dim();
            for x in samples(&m) {
                let foot = project(&m, &x)?;
                for om in [1.0, -1.0] {
                    let p = fiber_point(&m, &foot, &DVector::from_element(1, om))?;
                    let pg = fiber_point(&generic, &foot, &DVector::from_element(1, om))?;
                    for q in 1..=2 {
                        for l in 0..n {
                            for i in 0..n {
                                let closed = b_coeff(&m, l, i, q, &p)?;
                                let num = b_coeff_numeric(&generic, l, i, q, &pg)?;
                                let diff = (closed - num).abs();
                                let tol = 1e-4 * closed.abs().max(1.0);
                                rows.push(
                                    &shape,
                                    format!("b[{},{},{q}]", l + 1, i + 1),
                                    format!("omega={om}"),
                                    None,
                                    num,
                                    closed,
                                    diff,
                                    tol,
                                    diff <= tol,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(rows.rows)
}

/// Fixed-width table for terminals.
pub fn format_table(rows: &[CheckRow]) -> String {
    let mut out = format!(
        "{:<10} {:<28} {:>24} {:>24} {:>10} {:<4}\n",
        "check_id", "reference", "expected", "got", "tolerance", "pass"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<28} {:>24.16e} {:>24.16e} {:>10.1e} {:<4}\n",
            r.check_id,
            r.reference,
            r.expected,
            r.value,
            r.tolerance,
            if r.pass { "ok" } else { "FAIL" }
        ));
    }
    out
}

/// One summary line per criterion.
pub fn summarize(rows: &[CheckRow]) -> Vec<(u8, &'static str, usize, usize)> {
    CRITERIA
        .iter()
        .map(|(c, title)| {
            let mine: Vec<&CheckRow> = rows.iter().filter(|r| r.criterion == *c).collect();
            (*c, *title, mine.iter().filter(|r| r.pass).count(), mine.len())
        })
        .filter(|(_, _, _, total)| *total > 0)
        .collect()
}
