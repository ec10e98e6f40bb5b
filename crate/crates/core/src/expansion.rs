//! Thick test functions, their expansions φ ~ Σ_j a_j(ξ, ω) ρ^j, coefficient
//! extraction, Taylor coefficients of smooth fields and the expansion of ∂φ/∂x_i.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{fiber_point, locate, project, FiberPoint, Submanifold, TubePoint};
use crate::shapes::{binomial, ShapeOracle};
use crate::tangent_calculus::{
    b_coeff, delta_derivative_omega_fn, jacobian_pi, multi_factorial, multi_indices, normal_derivative,
    omega_jacobian, omega_power, weingarten, weingarten_numeric, Jet, SurfaceFunction, FD_STEP,
};

/// Relative step for derivatives of test-function values.
pub const VALUE_FD_STEP: f64 = 1e-6;
/// Largest J − m accepted by [`extract_coeffs`].
pub const MAX_FIT_SPAN: i32 = 12;
pub const FIT_CONDITION_LIMIT: f64 = 1e12;

/// Coefficients a_m..a_top at one (ξ, ω).
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub m: i32,
    pub a: Vec<f64>,
}

impl Expansion {
    pub fn top(&self) -> i32 {
        self.m + self.a.len() as i32 - 1
    }

    /// a_j; zero below the leading order.
    pub fn get(&self, j: i32) -> f64 {
        if j < self.m {
            return 0.0;
        }
        let k = (j - self.m) as usize;
        assert!(k < self.a.len(), "coefficient {j} beyond computed top {}", self.top());
        self.a[k]
    }

    /// Σ_{j<q} a_j ρ^j.
    pub fn partial_sum(&self, q: i32, rho: f64) -> f64 {
        (self.m..q.min(self.top() + 1)).map(|j| self.get(j) * rho.powi(j)).sum()
    }
}

/// A function on the tube minus Σ with a strong asymptotic expansion.
///
/// Multipliers implement the same trait with an infinite support radius.
pub trait ThickTestFunction: Send + Sync {
    fn label(&self) -> String;
    /// m with ρ^{-m}φ bounded near Σ.
    fn leading_order(&self) -> i32;
    /// φ vanishes for ρ beyond this radius.
    fn support_radius(&self) -> f64;
    /// Radii where the radial profile stops being analytic.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64>;
    fn gradient(&self, _m: &Submanifold, _p: &TubePoint) -> Result<Option<DVector<f64>>> {
        Ok(None)
    }
    /// a_m..a_top at (ξ, ω) when known in closed form.
    fn coefficients(&self, _m: &Submanifold, _p: &FiberPoint, _top: i32) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
    /// Coefficients with their δ-derivatives when known in closed form.
    fn coefficient_jets(&self, _m: &Submanifold, _p: &FiberPoint, _top: i32) -> Result<Option<Vec<Jet>>> {
        Ok(None)
    }
    /// φ − Σ_{j<q} a_j ρ^j evaluated without cancellation, when possible.
    fn remainder(&self, _m: &Submanifold, _p: &TubePoint, _q: i32) -> Result<Option<f64>> {
        Ok(None)
    }
    /// ∂φ/∂x_axis when a specialised representation exists.
    fn derivative(&self, _axis: usize) -> Option<TestFn> {
        None
    }
}

pub type TestFn = Arc<dyn ThickTestFunction>;

/// ∂φ/∂x_axis, specialised when possible, else [`Derivative`].
pub fn derivative_of(phi: &TestFn, axis: usize) -> TestFn {
    phi.derivative(axis)
        .unwrap_or_else(|| Arc::new(Derivative::new(phi.clone(), axis)))
}

// ---------------------------------------------------------------------------
// radial building blocks

/// C^∞ cutoff equal to 1 on [0, inner] and 0 beyond `outer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn new(support: f64) -> Cutoff {
        Cutoff {
            inner: 0.5 * support,
            outer: support,
        }
    }

    /// χ^{(k)}(ρ).
    pub fn derivative(&self, k: usize, rho: f64) -> f64 {
        if rho <= self.inner {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if rho >= self.outer {
            return 0.0;
        }
        let w = self.outer - self.inner;
        let u = (self.outer - rho) / w;
        if k == 0 {
            let a = (-1.0 / u).exp();
            let b = (-1.0 / (1.0 - u)).exp();
            return a / (a + b);
        }
        let s = smoothstep_series(u, k);
        let fact: f64 = (1..=k).map(|j| j as f64).product();
        s[k] * fact * (-1.0 / w).powi(k as i32)
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.derivative(0, rho)
    }
}

/// Taylor coefficients at u of S(u) = f(u)/(f(u)+f(1−u)), f(u) = e^{−1/u}.
fn smoothstep_series(u: f64, k: usize) -> Vec<f64> {
    let f = |u0: f64, sign: f64| -> Vec<f64> {
        // exp(−1/(u0 + sign·h)) as a series in h
        let mut a = vec![0.0; k + 1];
        for (j, aj) in a.iter_mut().enumerate() {
            *aj = -(-sign).powi(j as i32) / u0.powi(j as i32 + 1);
        }
        let mut b = vec![0.0; k + 1];
        b[0] = a[0].exp();
        for n in 1..=k {
            let mut s = 0.0;
            for j in 1..=n {
                s += j as f64 * a[j] * b[n - j];
            }
            b[n] = s / n as f64;
        }
        b
    };
    let num = f(u, 1.0);
    let other = f(1.0 - u, -1.0);
    let den: Vec<f64> = num.iter().zip(&other).map(|(a, b)| a + b).collect();
    let mut q = vec![0.0; k + 1];
    for n in 0..=k {
        let mut s = num[n];
        for j in 1..=n {
            s -= den[j] * q[n - j];
        }
        q[n] = s / den[0];
    }
    q
}

/// Σ_p c_p ρ^{m+p}.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentPoly {
    pub m: i32,
    pub c: Vec<f64>,
}

impl LaurentPoly {
    pub fn new(m: i32, c: Vec<f64>) -> Self {
        LaurentPoly { m, c }
    }

    pub fn coeff(&self, j: i32) -> f64 {
        if j < self.m {
            return 0.0;
        }
        self.c.get((j - self.m) as usize).copied().unwrap_or(0.0)
    }

    fn sum_where(&self, rho: f64, keep: impl Fn(i32) -> bool) -> f64 {
        self.c
            .iter()
            .enumerate()
            .filter(|(p, _)| keep(self.m + *p as i32))
            .map(|(p, c)| c * rho.powi(self.m + p as i32))
            .sum()
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.sum_where(rho, |_| true)
    }

    pub fn tail(&self, q: i32, rho: f64) -> f64 {
        self.sum_where(rho, |j| j >= q)
    }

    pub fn head(&self, q: i32, rho: f64) -> f64 {
        self.sum_where(rho, |j| j < q)
    }

    pub fn derivative(&self) -> LaurentPoly {
        LaurentPoly {
            m: self.m - 1,
            c: self
                .c
                .iter()
                .enumerate()
                .map(|(p, c)| c * (self.m + p as i32) as f64)
                .collect(),
        }
    }
}

/// f(ρ) = Σ_t χ^{(k_t)}(ρ) P_t(ρ); without a cutoff χ ≡ 1 and only k = 0 appears.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub parts: Vec<(usize, LaurentPoly)>,
    pub cutoff: Option<Cutoff>,
}

impl RadialProfile {
    pub fn laurent(m: i32, c: Vec<f64>, cutoff: Option<Cutoff>) -> Self {
        RadialProfile {
            parts: vec![(0, LaurentPoly::new(m, c))],
            cutoff,
        }
    }

    fn chi(&self, k: usize, rho: f64) -> f64 {
        match &self.cutoff {
            Some(c) => c.derivative(k, rho),
            None => {
                if k == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn leading_order(&self) -> i32 {
        self.parts.iter().map(|(_, p)| p.m).min().unwrap_or(0)
    }

    /// Expansion coefficient of ρ^j (only χ-undifferentiated parts survive near Σ).
    pub fn coeff(&self, j: i32) -> f64 {
        self.parts.iter().filter(|(k, _)| *k == 0).map(|(_, p)| p.coeff(j)).sum()
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.parts.iter().map(|(k, p)| self.chi(*k, rho) * p.eval(rho)).sum()
    }

    pub fn tail(&self, q: i32, rho: f64) -> f64 {
        self.parts
            .iter()
            .map(|(k, p)| {
                if *k == 0 {
                    let chi = self.chi(0, rho);
                    let mut t = chi * p.tail(q, rho);
                    if chi != 1.0 {
                        t += (chi - 1.0) * p.head(q, rho);
                    }
                    t
                } else {
                    self.chi(*k, rho) * p.eval(rho)
                }
            })
            .sum()
    }

    pub fn derivative(&self) -> RadialProfile {
        let mut parts = Vec::new();
        for (k, p) in &self.parts {
            if self.cutoff.is_some() {
                parts.push((k + 1, p.clone()));
            }
            parts.push((*k, p.derivative()));
        }
        RadialProfile {
            parts,
            cutoff: self.cutoff,
        }
    }

    pub fn support(&self) -> f64 {
        self.cutoff.map(|c| c.outer).unwrap_or(f64::INFINITY)
    }
}

// ---------------------------------------------------------------------------
// catalog

/// φ = Σ_t g_t(ξ_x, ω_x) f_t(ρ_x).
#[derive(Debug, Clone)]
pub struct Separable {
    pub name: String,
    pub terms: Vec<(SurfaceFunction, RadialProfile)>,
}

impl Separable {
    pub fn new(name: impl Into<String>, terms: Vec<(SurfaceFunction, RadialProfile)>) -> Self {
        Separable {
            name: name.into(),
            terms,
        }
    }

    /// χ(ρ) Σ_p c_p ρ^{m+p}.
    pub fn laurent(m: i32, terms: Vec<f64>, support: f64) -> Self {
        let label = format!("laurent(m={m},terms={terms:?},s={support})");
        Separable::new(
            label,
            vec![(
                SurfaceFunction::Constant(1.0),
                RadialProfile::laurent(m, terms, Some(Cutoff::new(support))),
            )],
        )
    }

    pub fn bump(support: f64) -> Self {
        let mut s = Separable::laurent(0, vec![1.0], support);
        s.name = format!("bump(s={support})");
        s
    }

    /// g(ξ, ω) χ(ρ) Σ_p c_p ρ^{m+p}.
    pub fn angular(g: SurfaceFunction, m: i32, terms: Vec<f64>, support: f64) -> Self {
        let label = format!("angular(g={},m={m},terms={terms:?},s={support})", g.label());
        Separable::new(
            label,
            vec![(g, RadialProfile::laurent(m, terms, Some(Cutoff::new(support))))],
        )
    }

    /// n_k(ξ) χ(ρ); hypersurfaces only use slot 0.
    pub fn normal_component(axis: usize, support: f64) -> Self {
        let mut s = Separable::angular(SurfaceFunction::NormalComponent { slot: 0, axis }, 0, vec![1.0], support);
        s.name = format!("normal_component(k={},s={support})", axis + 1);
        s
    }

    /// Multiplier θ_i = ∂ρ/∂x_i.
    pub fn theta(axis: usize) -> Self {
        Separable::new(
            format!("theta{}", axis + 1),
            vec![(SurfaceFunction::Theta { axis }, RadialProfile::laurent(0, vec![1.0], None))],
        )
    }

    /// Multiplier x_l = ξ_l + ρ θ_l.
    pub fn coordinate(axis: usize) -> Self {
        Separable::new(
            format!("x{}", axis + 1),
            vec![
                (SurfaceFunction::Coordinate { axis }, RadialProfile::laurent(0, vec![1.0], None)),
                (SurfaceFunction::Theta { axis }, RadialProfile::laurent(1, vec![1.0], None)),
            ],
        )
    }

    /// Multiplier ρ^p.
    pub fn rho_power(p: i32) -> Self {
        Separable::new(
            format!("rho^{p}"),
            vec![(SurfaceFunction::Constant(1.0), RadialProfile::laurent(p, vec![1.0], None))],
        )
    }

    pub fn constant(c: f64) -> Self {
        Separable::new(
            format!("{c}"),
            vec![(SurfaceFunction::Constant(c), RadialProfile::laurent(0, vec![1.0], None))],
        )
    }

    fn is_angularly_constant(&self) -> bool {
        self.terms.iter().all(|(g, _)| matches!(g, SurfaceFunction::Constant(_)))
    }
}

impl ThickTestFunction for Separable {
    fn label(&self) -> String {
        self.name.clone()
    }

    fn leading_order(&self) -> i32 {
        self.terms.iter().map(|(_, f)| f.leading_order()).min().unwrap_or(0)
    }

    fn support_radius(&self) -> f64 {
        self.terms.iter().map(|(_, f)| f.support()).fold(0.0, f64::max)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .terms
            .iter()
            .filter_map(|(_, f)| f.cutoff)
            .flat_map(|c| [c.inner, c.outer])
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn value(&self, _m: &Submanifold, p: &TubePoint) -> Result<f64> {
        Ok(self.terms.iter().map(|(g, f)| g.value(p.fiber) * f.value(p.rho)).sum())
    }

    fn gradient(&self, m: &Submanifold, p: &TubePoint) -> Result<Option<DVector<f64>>> {
        let mut grad = DVector::zeros(m.ambient_dim());
        let mut chain: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
        for (g, f) in &self.terms {
            let df = f.derivative().value(p.rho);
            let fv = f.value(p.rho);
            let jet = g.jet(m, p.fiber)?;
            grad.axpy(jet.value * df, &p.fiber.theta, 1.0);
            if fv == 0.0 || matches!(g, SurfaceFunction::Constant(_)) {
                continue;
            }
            if chain.is_none() {
                chain = Some((jacobian_pi(m, &p.x)?, omega_jacobian(m, p.fiber, p.rho)?));
            }
            let (jp, oj) = chain.as_ref().unwrap();
            let dg = jp.transpose() * &jet.d_xi + oj.transpose() * &jet.d_omega;
            grad.axpy(fv, &dg, 1.0);
        }
        Ok(Some(grad))
    }

    fn coefficients(&self, _m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        let lead = self.leading_order();
        let gs: Vec<f64> = self.terms.iter().map(|(g, _)| g.value(p)).collect();
        Ok(Some(
            (lead..=top)
                .map(|j| {
                    self.terms
                        .iter()
                        .zip(&gs)
                        .map(|((_, f), gv)| gv * f.coeff(j))
                        .sum()
                })
                .collect(),
        ))
    }

    fn coefficient_jets(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<Jet>>> {
        let lead = self.leading_order();
        let jets: Vec<Jet> = self.terms.iter().map(|(g, _)| g.jet(m, p)).collect::<Result<_>>()?;
        let n = m.ambient_dim();
        let d = m.codim();
        Ok(Some(
            (lead..=top)
                .map(|j| {
                    self.terms
                        .iter()
                        .zip(&jets)
                        .fold(Jet::zero(n, d), |acc, ((_, f), jet)| acc.add(&jet.scale(f.coeff(j))))
                })
                .collect(),
        ))
    }

    fn remainder(&self, _m: &Submanifold, p: &TubePoint, q: i32) -> Result<Option<f64>> {
        Ok(Some(
            self.terms
                .iter()
                .map(|(g, f)| g.value(p.fiber) * f.tail(q, p.rho))
                .sum(),
        ))
    }

    fn derivative(&self, axis: usize) -> Option<TestFn> {
        if !self.is_angularly_constant() {
            return None;
        }
        // ∂_i (c f(ρ)) = c θ_i f'(ρ)
        let terms = self
            .terms
            .iter()
            .map(|(g, f)| {
                (
                    SurfaceFunction::Product(vec![g.clone(), SurfaceFunction::Theta { axis }]),
                    f.derivative(),
                )
            })
            .collect();
        Some(Arc::new(Separable::new(format!("d{}[{}]", axis + 1, self.name), terms)))
    }
}

/// Multivariate polynomial Σ c x^e.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, Vec<u32>)>) -> Self {
        Polynomial { terms }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().enumerate().map(|(i, p)| x[i].powi(*p as i32)).product::<f64>())
            .sum()
    }

    pub fn partial(&self, axis: usize) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .filter(|(_, e)| e.get(axis).copied().unwrap_or(0) > 0)
                .map(|(c, e)| {
                    let mut e = e.clone();
                    let p = e[axis];
                    e[axis] -= 1;
                    (c * p as f64, e)
                })
                .collect(),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), (0..x.len()).map(|i| self.partial(i).eval(x)))
    }

    /// Coefficients of t ↦ P(ξ + t v) in powers of t.
    pub fn along_line(&self, xi: &DVector<f64>, v: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0];
        for (c, e) in &self.terms {
            let mut poly = vec![*c];
            for (i, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    let mut next = vec![0.0; poly.len() + 1];
                    for (k, a) in poly.iter().enumerate() {
                        next[k] += a * xi[i];
                        next[k + 1] += a * v[i];
                    }
                    poly = next;
                }
            }
            if poly.len() > out.len() {
                out.resize(poly.len(), 0.0);
            }
            for (k, a) in poly.iter().enumerate() {
                out[k] += a;
            }
        }
        out
    }

    pub fn label(&self) -> String {
        self.terms
            .iter()
            .map(|(c, e)| {
                let mono: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0)
                    .map(|(i, p)| if *p == 1 { format!("x{}", i + 1) } else { format!("x{}^{p}", i + 1) })
                    .collect();
                if mono.is_empty() {
                    format!("{c}")
                } else {
                    format!("{c}*{}", mono.join("*"))
                }
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// P(x) χ(ρ_x): smooth across Σ.
#[derive(Debug, Clone)]
pub struct SmoothPoly {
    pub poly: Polynomial,
    pub cutoff: Cutoff,
}

impl SmoothPoly {
    pub fn new(poly: Polynomial, support: f64) -> Self {
        SmoothPoly {
            poly,
            cutoff: Cutoff::new(support),
        }
    }

    fn line(&self, p: &FiberPoint) -> Vec<f64> {
        self.poly.along_line(p.xi(), &p.theta)
    }

    /// The same function as an ambient smooth field.
    pub fn field(&self, m: &Submanifold) -> SmoothField {
        let poly = self.poly.clone();
        let cut = self.cutoff;
        let mm = m.clone();
        SmoothField::new(
            format!("field[{}]", self.label()),
            self.cutoff.outer,
            move |x: &DVector<f64>| {
                let rho = (x - project(&mm, x)?).norm();
                Ok(poly.eval(x) * cut.value(rho))
            },
        )
    }
}

impl ThickTestFunction for SmoothPoly {
    fn label(&self) -> String {
        format!("smooth_poly({},s={})", self.poly.label(), self.cutoff.outer)
    }

    fn leading_order(&self) -> i32 {
        0
    }

    fn support_radius(&self) -> f64 {
        self.cutoff.outer
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.cutoff.inner, self.cutoff.outer]
    }

    fn value(&self, _m: &Submanifold, p: &TubePoint) -> Result<f64> {
        Ok(self.poly.eval(&p.x) * self.cutoff.value(p.rho))
    }

    fn gradient(&self, _m: &Submanifold, p: &TubePoint) -> Result<Option<DVector<f64>>> {
        let chi = self.cutoff.value(p.rho);
        let dchi = self.cutoff.derivative(1, p.rho);
        let mut g = self.poly.gradient(&p.x) * chi;
        if dchi != 0.0 {
            g.axpy(self.poly.eval(&p.x) * dchi, &p.fiber.theta, 1.0);
        }
        Ok(Some(g))
    }

    fn coefficients(&self, _m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        let line = self.line(p);
        Ok(Some((0..=top).map(|j| line.get(j as usize).copied().unwrap_or(0.0)).collect()))
    }

    fn remainder(&self, _m: &Submanifold, p: &TubePoint, q: i32) -> Result<Option<f64>> {
        let line = self.line(p.fiber);
        let chi = self.cutoff.value(p.rho);
        let mut tail = 0.0;
        let mut head = 0.0;
        for (j, c) in line.iter().enumerate() {
            let t = c * p.rho.powi(j as i32);
            if (j as i32) < q {
                head += t;
            } else {
                tail += t;
            }
        }
        Ok(Some(chi * tail + (chi - 1.0) * head))
    }
}

/// Ambient smooth field; coefficients come from normal derivatives.
#[derive(Clone)]
pub struct SmoothField {
    pub name: String,
    pub support: f64,
    pub f: Arc<dyn Fn(&DVector<f64>) -> Result<f64> + Send + Sync>,
}

impl SmoothField {
    pub fn new(
        name: impl Into<String>,
        support: f64,
        f: impl Fn(&DVector<f64>) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        SmoothField {
            name: name.into(),
            support,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        (self.f)(x)
    }
}

impl ThickTestFunction for SmoothField {
    fn label(&self) -> String {
        self.name.clone()
    }

    fn leading_order(&self) -> i32 {
        0
    }

    fn support_radius(&self) -> f64 {
        self.support
    }

    fn value(&self, _m: &Submanifold, p: &TubePoint) -> Result<f64> {
        (self.f)(&p.x)
    }

    fn coefficients(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        if top < 0 {
            return Ok(Some(Vec::new()));
        }
        Ok(Some(taylor_coeffs_smooth(m, &*self.f, p, top as usize)?))
    }
}

/// Product of two thick functions (Cauchy product of expansions).
#[derive(Clone)]
pub struct Product {
    pub a: TestFn,
    pub b: TestFn,
}

impl Product {
    pub fn new(a: TestFn, b: TestFn) -> Self {
        Product { a, b }
    }
}

impl ThickTestFunction for Product {
    fn label(&self) -> String {
        format!("({})*({})", self.a.label(), self.b.label())
    }

    fn leading_order(&self) -> i32 {
        self.a.leading_order() + self.b.leading_order()
    }

    fn support_radius(&self) -> f64 {
        self.a.support_radius().min(self.b.support_radius())
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.a.breakpoints();
        b.extend(self.b.breakpoints());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64> {
        let av = self.a.value(m, p)?;
        if av == 0.0 {
            return Ok(0.0);
        }
        Ok(av * self.b.value(m, p)?)
    }

    fn gradient(&self, m: &Submanifold, p: &TubePoint) -> Result<Option<DVector<f64>>> {
        let (ga, gb) = match (self.a.gradient(m, p)?, self.b.gradient(m, p)?) {
            (Some(ga), Some(gb)) => (ga, gb),
            _ => return Ok(None),
        };
        Ok(Some(ga * self.b.value(m, p)? + gb * self.a.value(m, p)?))
    }

    fn coefficients(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        let (ma, mb) = (self.a.leading_order(), self.b.leading_order());
        let ca = match self.a.coefficients(m, p, top - mb)? {
            Some(c) => c,
            None => return Ok(None),
        };
        let cb = match self.b.coefficients(m, p, top - ma)? {
            Some(c) => c,
            None => return Ok(None),
        };
        let lead = ma + mb;
        Ok(Some(
            (lead..=top)
                .map(|j| {
                    (ma..=j - mb)
                        .map(|k| ca[(k - ma) as usize] * cb[(j - k - mb) as usize])
                        .sum()
                })
                .collect(),
        ))
    }

    fn coefficient_jets(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<Jet>>> {
        let (ma, mb) = (self.a.leading_order(), self.b.leading_order());
        let ja = match self.a.coefficient_jets(m, p, top - mb)? {
            Some(c) => c,
            None => return Ok(None),
        };
        let jb = match self.b.coefficient_jets(m, p, top - ma)? {
            Some(c) => c,
            None => return Ok(None),
        };
        let lead = ma + mb;
        let (n, d) = (m.ambient_dim(), m.codim());
        Ok(Some(
            (lead..=top)
                .map(|j| {
                    (ma..=j - mb).fold(Jet::zero(n, d), |acc, k| {
                        acc.add(&ja[(k - ma) as usize].mul(&jb[(j - k - mb) as usize]))
                    })
                })
                .collect(),
        ))
    }

    fn remainder(&self, m: &Submanifold, p: &TubePoint, q: i32) -> Result<Option<f64>> {
        // AB − Σ_{j<q}(AB)_j ρ^j = Σ_{j<q−m_B} A_j ρ^j rem_B(q−j) + rem_A(q−m_B)·B
        let (ma, mb) = (self.a.leading_order(), self.b.leading_order());
        let hi = q - mb - 1;
        let ca = if hi >= ma {
            match self.a.coefficients(m, p.fiber, hi)? {
                Some(c) => c,
                None => return Ok(None),
            }
        } else {
            Vec::new()
        };
        let mut total = 0.0;
        for (k, aj) in ca.iter().enumerate() {
            if *aj == 0.0 {
                continue;
            }
            let j = ma + k as i32;
            match self.b.remainder(m, p, q - j)? {
                Some(rb) => total += aj * p.rho.powi(j) * rb,
                None => return Ok(None),
            }
        }
        match self.a.remainder(m, p, q - mb)? {
            Some(ra) => {
                if ra != 0.0 {
                    total += ra * self.b.value(m, p)?;
                }
            }
            None => return Ok(None),
        }
        Ok(Some(total))
    }
}

/// ∂φ/∂x_axis; expansion from the derivative formula, value from the gradient.
#[derive(Clone)]
pub struct Derivative {
    pub inner: TestFn,
    pub axis: usize,
}

impl Derivative {
    pub fn new(inner: TestFn, axis: usize) -> Self {
        Derivative { inner, axis }
    }
}

/// ∂φ/∂x_axis at x by central differences of φ (step 1e-6 scaled).
pub fn fd_partial(m: &Submanifold, phi: &dyn ThickTestFunction, x: &DVector<f64>, axis: usize) -> Result<f64> {
    let (_, rho_x) = locate(m, x)?;
    let h = VALUE_FD_STEP * x.norm().max(1.0).min(rho_x);
    let at = |t: f64| -> Result<f64> {
        let mut y = x.clone();
        y[axis] += t;
        let (fp, rho) = locate(m, &y)?;
        if rho >= phi.support_radius() {
            return Ok(0.0);
        }
        let tp = TubePoint { fiber: &fp, rho, x: y };
        phi.value(m, &tp)
    };
    Ok((at(h)? - at(-h)?) / (2.0 * h))
}

impl ThickTestFunction for Derivative {
    fn label(&self) -> String {
        format!("d{}[{}]", self.axis + 1, self.inner.label())
    }

    fn leading_order(&self) -> i32 {
        self.inner.leading_order() - 1
    }

    fn support_radius(&self) -> f64 {
        self.inner.support_radius()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }

    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64> {
        match self.inner.gradient(m, p)? {
            Some(g) => Ok(g[self.axis]),
            None => fd_partial(m, &*self.inner, &p.x, self.axis),
        }
    }

    fn coefficients(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        Ok(Some(expand_derivative(m, &*self.inner, self.axis, p, top)?.a))
    }
}

/// ∂φ/∂x_axis purely by central differences of values; no closed-form expansion.
#[derive(Clone)]
pub struct FdDerivative {
    pub inner: TestFn,
    pub axis: usize,
}

impl FdDerivative {
    pub fn new(inner: TestFn, axis: usize) -> Self {
        FdDerivative { inner, axis }
    }
}

impl ThickTestFunction for FdDerivative {
    fn label(&self) -> String {
        format!("fd_d{}[{}]", self.axis + 1, self.inner.label())
    }

    fn leading_order(&self) -> i32 {
        self.inner.leading_order() - 1
    }

    fn support_radius(&self) -> f64 {
        self.inner.support_radius()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }

    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64> {
        fd_partial(m, &*self.inner, &p.x, self.axis)
    }
}

/// Multiplier ∂_i ln J, J the density of Lebesgue measure relative to the
/// product measure ρ^{d-1}dρ dω dσ.
#[derive(Clone)]
pub struct MeasureCorrection {
    pub axis: usize,
    generic: Option<TestFn>,
}

impl MeasureCorrection {
    pub fn new(m: &Submanifold, axis: usize) -> Self {
        let generic: Option<TestFn> = if m.oracle().is_some() {
            None
        } else {
            Some(Arc::new(Derivative::new(Arc::new(LogTubeJacobian), axis)))
        };
        MeasureCorrection { axis, generic }
    }

    /// c_p as a function on Σ × S^{d-1}.
    fn coeff_fn(o: &ShapeOracle, axis: usize, p: usize) -> SurfaceFunction {
        match o {
            ShapeOracle::Sphere { ambient_dim, radius } => SurfaceFunction::Scaled(
                (*ambient_dim as f64 - 1.0) / (radius * radius) * (-1.0 / radius).powi(p as i32),
                Box::new(SurfaceFunction::Product(vec![
                    SurfaceFunction::Coordinate { axis },
                    SurfaceFunction::omega_monomial(1.0, vec![p as u32]),
                ])),
            ),
            ShapeOracle::Circle3d { radius } => SurfaceFunction::Scaled(
                (-1.0 / radius).powi(p as i32) / radius,
                Box::new(SurfaceFunction::Product(vec![
                    SurfaceFunction::NormalComponent { slot: 0, axis },
                    SurfaceFunction::omega_monomial(1.0, vec![p as u32, 0]),
                ])),
            ),
        }
    }
}

impl ThickTestFunction for MeasureCorrection {
    fn label(&self) -> String {
        format!("dlnJ/dx{}", self.axis + 1)
    }

    fn leading_order(&self) -> i32 {
        0
    }

    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64> {
        match (&self.generic, m.oracle()) {
            (Some(g), _) => g.value(m, p),
            (None, Some(o)) => Ok(o.log_jacobian_gradient(p.fiber, p.rho, self.axis)),
            (None, None) => unreachable!("measure correction built for a shape"),
        }
    }

    fn coefficients(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        match (&self.generic, m.oracle()) {
            (Some(g), _) => g.coefficients(m, p, top),
            (None, Some(o)) => Ok(Some(
                (0..=top.max(-1))
                    .map(|q| MeasureCorrection::coeff_fn(o, self.axis, q as usize).value(p))
                    .collect(),
            )),
            (None, None) => unreachable!(),
        }
    }

    fn coefficient_jets(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<Jet>>> {
        match (&self.generic, m.oracle()) {
            (Some(_), _) => Ok(None),
            (None, Some(o)) => Ok(Some(
                (0..=top.max(-1))
                    .map(|q| MeasureCorrection::coeff_fn(o, self.axis, q as usize).jet(m, p))
                    .collect::<Result<_>>()?,
            )),
            (None, None) => unreachable!(),
        }
    }

    fn remainder(&self, m: &Submanifold, p: &TubePoint, q: i32) -> Result<Option<f64>> {
        match (&self.generic, m.oracle()) {
            (Some(_), _) => Ok(None),
            (None, Some(o)) => {
                let q = q.max(0);
                let k = o.curvature_along(&p.fiber.omega);
                let c0 = o.log_jacobian_leading(p.fiber, self.axis);
                Ok(Some(c0 * (-k * p.rho).powi(q) / (1.0 + k * p.rho)))
            }
            (None, None) => unreachable!(),
        }
    }
}

/// B = P_T (Σ_h ω_h W_h) P_T, the shape operator along θ.
fn shape_operator(m: &Submanifold, p: &FiberPoint) -> Result<DMatrix<f64>> {
    let w = weingarten_numeric(m, p.xi())?;
    let pt = p.frame.tangent_projector();
    let mut s = DMatrix::zeros(m.ambient_dim(), m.ambient_dim());
    for (h, wh) in w.iter().enumerate() {
        // W has entries (i, a) = δn_a/δx_i; the differential acts as W^T.
        s += wh.transpose() * p.omega[h];
    }
    Ok(&pt * s * &pt)
}

/// ln J for generic shapes: ln det(I + ρB), expansion Σ (−1)^{q+1} tr(B^q)/q ρ^q.
#[derive(Clone, Copy)]
pub struct LogTubeJacobian;

impl ThickTestFunction for LogTubeJacobian {
    fn label(&self) -> String {
        "lnJ".into()
    }

    fn leading_order(&self) -> i32 {
        0
    }

    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64> {
        let b = shape_operator(m, p.fiber)?;
        let n = m.ambient_dim();
        Ok((DMatrix::identity(n, n) + b * p.rho).determinant().ln())
    }

    fn coefficients(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        let b = shape_operator(m, p)?;
        let mut pow = DMatrix::identity(m.ambient_dim(), m.ambient_dim());
        let mut out = vec![0.0];
        for q in 1..=top.max(0) {
            pow = &pow * &b;
            let sign = if q % 2 == 1 { 1.0 } else { -1.0 };
            out.push(sign * pow.trace() / q as f64);
        }
        out.truncate((top.max(-1) + 1) as usize);
        Ok(Some(out))
    }
}

/// Multiplier J itself (relative density of Lebesgue measure).
#[derive(Clone, Copy)]
pub struct TubeJacobian;

impl ThickTestFunction for TubeJacobian {
    fn label(&self) -> String {
        "J".into()
    }

    fn leading_order(&self) -> i32 {
        0
    }

    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64> {
        match m.oracle() {
            Some(o) => Ok(o.tube_jacobian(&p.fiber.omega, p.rho)),
            None => LogTubeJacobian.value(m, p).map(f64::exp),
        }
    }

    fn coefficients(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<f64>>> {
        let top = top.max(-1);
        let c = match m.oracle() {
            Some(o) => o.tube_jacobian_coeffs(&p.omega),
            None => {
                let l = LogTubeJacobian.coefficients(m, p, top)?.unwrap_or_default();
                series_exp(&l, (top + 1) as usize)
            }
        };
        Ok(Some((0..=top).map(|j| c.get(j as usize).copied().unwrap_or(0.0)).collect()))
    }

    fn coefficient_jets(&self, m: &Submanifold, p: &FiberPoint, top: i32) -> Result<Option<Vec<Jet>>> {
        let o = match m.oracle() {
            Some(o) => *o,
            None => return Ok(None),
        };
        let (n, d) = (m.ambient_dim(), m.codim());
        let jets = (0..=top.max(-1))
            .map(|j| {
                let j = j as usize;
                match o {
                    ShapeOracle::Sphere { ambient_dim, radius } => {
                        let e = ambient_dim - 1;
                        if j > e {
                            return Ok(Jet::zero(n, d));
                        }
                        SurfaceFunction::Scaled(
                            binomial(e, j) / radius.powi(j as i32),
                            Box::new(SurfaceFunction::omega_monomial(1.0, vec![j as u32])),
                        )
                        .jet(m, p)
                    }
                    ShapeOracle::Circle3d { radius } => match j {
                        0 => Ok(Jet::constant(1.0, n, d)),
                        1 => SurfaceFunction::omega_monomial(1.0 / radius, vec![1, 0]).jet(m, p),
                        _ => Ok(Jet::zero(n, d)),
                    },
                }
            })
            .collect::<Result<_>>()?;
        Ok(Some(jets))
    }

    fn remainder(&self, m: &Submanifold, p: &TubePoint, q: i32) -> Result<Option<f64>> {
        if m.oracle().is_none() {
            return Ok(None);
        }
        let c = self.coefficients(m, p.fiber, 8)?.unwrap_or_default();
        Ok(Some(
            c.iter()
                .enumerate()
                .filter(|(j, _)| *j as i32 >= q)
                .map(|(j, cj)| cj * p.rho.powi(j as i32))
                .sum(),
        ))
    }
}

fn series_exp(a: &[f64], len: usize) -> Vec<f64> {
    let get = |j: usize| a.get(j).copied().unwrap_or(0.0);
    let mut b = vec![0.0; len.max(1)];
    b[0] = get(0).exp();
    for k in 1..len {
        let mut s = 0.0;
        for j in 1..=k {
            s += j as f64 * get(j) * b[k - j];
        }
        b[k] = s / k as f64;
    }
    b
}

// ---------------------------------------------------------------------------
// operations

/// Coefficients ladder fit: Chebyshev radii in (0, ρ_0] and this many guard powers.
pub const FIT_GUARDS: i32 = 6;
/// Window shrink steps (factor 4 each) tried by the fit.
pub const FIT_WINDOWS: i32 = 3;
/// Relative residual treated as an exact fit.
pub const FIT_ROUNDOFF: f64 = 2e-15;

/// Outcome of a least-squares coefficient fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub expansion: Expansion,
    pub residual: f64,
    pub condition: f64,
}

/// a_m..a_J at (ξ, ω): closed form when available, else a least-squares fit.
pub fn extract_coeffs(m: &Submanifold, phi: &dyn ThickTestFunction, p: &FiberPoint, top: i32) -> Result<Expansion> {
    let lead = phi.leading_order();
    if top < lead {
        return Ok(Expansion { m: lead, a: Vec::new() });
    }
    if let Some(a) = phi.coefficients(m, p, top)? {
        return Ok(Expansion { m: lead, a });
    }
    Ok(fit_coeffs(m, phi, p, top)?.expansion)
}

/// Least-squares fit of ρ^{-m}φ along the fiber ray against 1, ρ, …, ρ^{J−m+G}.
pub fn fit_coeffs(m: &Submanifold, phi: &dyn ThickTestFunction, p: &FiberPoint, top: i32) -> Result<FitReport> {
    let lead = phi.leading_order();
    let span = top - lead;
    if span > MAX_FIT_SPAN {
        return Err(Error::ExpansionUnavailable {
            order: top,
            reason: format!("fit span {span} exceeds {MAX_FIT_SPAN}"),
        });
    }
    if span < 0 {
        return Ok(FitReport {
            expansion: Expansion { m: lead, a: Vec::new() },
            residual: 0.0,
            condition: 1.0,
        });
    }
    let max_guards = (12 - span).clamp(2, FIT_GUARDS);
    let mut base = 0.25 * m.tube_radius();
    if let Some(b) = phi.breakpoints().into_iter().find(|b| *b > 0.0) {
        base = base.min(b);
    }
    base = base.min(phi.support_radius());
    // Shrink the window while that clearly improves the fit; noise-limited
    // samples keep the widest window.
    let mut best: Option<FitReport> = None;
    for level in 0..FIT_WINDOWS {
        let rho0 = base * 0.25f64.powi(level);
        let report = fit_window(m, phi, p, lead, span, max_guards, rho0)?;
        let better = best.as_ref().is_none_or(|b| report.residual < 0.1 * b.residual);
        if better {
            best = Some(report);
        }
        let b = best.as_ref().unwrap();
        if b.residual < FIT_ROUNDOFF || !better {
            break;
        }
    }
    Ok(best.expect("at least one window"))
}

fn fit_window(
    m: &Submanifold,
    phi: &dyn ThickTestFunction,
    p: &FiberPoint,
    lead: i32,
    span: i32,
    max_guards: i32,
    rho0: f64,
) -> Result<FitReport> {
    let nrows = (span + 1 + max_guards) as usize + 4;
    let mut ts = Vec::with_capacity(nrows);
    let mut y = DVector::zeros(nrows);
    for k in 0..nrows {
        let t = 0.5 * (1.0 + ((k as f64 + 0.5) * std::f64::consts::PI / nrows as f64).cos());
        let rho = rho0 * t;
        y[k] = phi.value(m, &p.at(rho))? * rho.powi(-lead);
        ts.push(t);
    }
    // Fewest guard powers whose fit already reproduces the samples to roundoff.
    let mut best = None;
    for guards in 2..=max_guards {
        let ncols = (span + 1 + guards) as usize;
        let a = DMatrix::from_fn(nrows, ncols, |k, c| ts[k].powi(c as i32));
        let svd = a.clone().svd(true, true);
        let condition = svd.singular_values.max() / svd.singular_values.min();
        if !(condition <= FIT_CONDITION_LIMIT) {
            return Err(Error::IllConditioned { condition });
        }
        let c = svd
            .solve(&y, 0.0)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let residual = (&a * &c - &y).norm() / y.norm().max(1e-300);
        let done = residual < FIT_ROUNDOFF || guards == max_guards;
        best = Some((c, residual, condition));
        if done {
            break;
        }
    }
    let (c, resid, condition) = best.expect("at least one fit");
    let coeffs = (0..=span as usize).map(|p| c[p] / rho0.powi(p as i32)).collect();
    Ok(FitReport {
        expansion: Expansion { m: lead, a: coeffs },
        residual: resid,
        condition,
    })
}

/// a_0..a_J of a smooth field: a_j = Σ_{|α|=j} D_n^α φ(ξ) ω^α/α!.
pub fn taylor_coeffs_smooth(
    m: &Submanifold,
    phi: &dyn Fn(&DVector<f64>) -> Result<f64>,
    p: &FiberPoint,
    top: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(top + 1);
    for j in 0..=top {
        let mut s = 0.0;
        for alpha in multi_indices(m.codim(), j) {
            let w = omega_power(&p.omega, &alpha) / multi_factorial(&alpha);
            if w == 0.0 {
                continue;
            }
            s += w * normal_derivative(m, phi, p.xi(), &alpha)?;
        }
        out.push(s);
    }
    Ok(out)
}

/// Coefficient jets: closed form, else central differences of coefficients.
pub fn coefficient_jets(m: &Submanifold, phi: &dyn ThickTestFunction, p: &FiberPoint, top: i32) -> Result<Vec<Jet>> {
    if let Some(j) = phi.coefficient_jets(m, p, top)? {
        return Ok(j);
    }
    let n = m.ambient_dim();
    let d = m.codim();
    let lead = phi.leading_order();
    let len = (top - lead + 1).max(0) as usize;
    let base = extract_coeffs(m, phi, p, top)?;
    let mut jets: Vec<Jet> = base.a.iter().map(|v| Jet::constant(*v, n, d)).collect();
    let h = FD_STEP * p.xi().norm().max(1.0);
    for i in 0..n {
        let at = |t: f64| -> Result<Vec<f64>> {
            let mut x = p.xi().clone();
            x[i] += t;
            let foot = project(m, &x)?;
            Ok(extract_coeffs(m, phi, &fiber_point(m, &foot, &p.omega)?, top)?.a)
        };
        let (plus, minus) = (at(h)?, at(-h)?);
        for k in 0..len {
            jets[k].d_xi[i] = (plus[k] - minus[k]) / (2.0 * h);
        }
    }
    if d > 1 {
        for kk in 0..d {
            for k in 0..len {
                let coeff = |q: &FiberPoint| -> Result<f64> {
                    Ok(extract_coeffs(m, phi, q, top)?.a[k])
                };
                jets[k].d_omega[kk] = delta_derivative_omega_fn(m, &coeff, p, kk)?;
            }
        }
    }
    Ok(jets)
}

/// Expansion of ∂φ/∂x_i at (ξ, ω), orders m−1..J:
///
/// a_{j,i} = (j+1)a_{j+1}θ_i + δa_j/δξ_i + Σ_{k<j} Σ_l b_{l,i,j−k} δa_k/δξ_l
///         + Σ_k [δa_{j+1}/δω_k (n_{k,i} − ω_kθ_i) + δa_j/δω_k Σ_h ω_h n_h·δn_k/δx_i].
pub fn expand_derivative(
    m: &Submanifold,
    phi: &dyn ThickTestFunction,
    i: usize,
    p: &FiberPoint,
    top: i32,
) -> Result<Expansion> {
    let lead = phi.leading_order();
    let out_m = lead - 1;
    if top < out_m {
        return Ok(Expansion { m: out_m, a: Vec::new() });
    }
    let jets = coefficient_jets(m, phi, p, top + 1)?;
    let jet = |j: i32| -> Option<&Jet> {
        if j < lead {
            None
        } else {
            jets.get((j - lead) as usize)
        }
    };
    let n = m.ambient_dim();
    let d = m.codim();
    // Σ_h ω_h n_h · δn_k/δx_i for each k (zero for hypersurfaces)
    let mut rot = vec![0.0; d];
    if d > 1 {
        let w = weingarten(m, p.xi())?;
        for (k, wk) in w.iter().enumerate() {
            let row = wk.row(i).transpose();
            rot[k] = p.theta.dot(&row);
        }
    }
    let max_q = (top - lead).max(0) as usize;
    let mut b = vec![DVector::zeros(n); max_q + 1];
    for (q, bq) in b.iter_mut().enumerate().skip(1) {
        for l in 0..n {
            bq[l] = b_coeff(m, l, i, q, p)?;
        }
    }
    let mut out = Vec::with_capacity((top - out_m + 1) as usize);
    for j in out_m..=top {
        let mut v = 0.0;
        if let Some(up) = jet(j + 1) {
            v += (j + 1) as f64 * up.value * p.theta[i];
            for k in 0..d {
                v += up.d_omega[k] * (p.frame.vectors[k][i] - p.omega[k] * p.theta[i]);
            }
        }
        if let Some(cur) = jet(j) {
            v += cur.d_xi[i];
            for k in 0..d {
                v += cur.d_omega[k] * rot[k];
            }
        }
        for k in lead..j {
            if let Some(low) = jet(k) {
                v += b[(j - k) as usize].dot(&low.d_xi);
            }
        }
        out.push(v);
    }
    Ok(Expansion { m: out_m, a: out })
}

/// φ − Σ_{j<q} a_j ρ^j, preferring the cancellation-free form.
pub fn remainder_at(
    m: &Submanifold,
    phi: &dyn ThickTestFunction,
    p: &TubePoint,
    q: i32,
    coeffs: &Expansion,
) -> Result<f64> {
    if let Some(r) = phi.remainder(m, p, q)? {
        return Ok(r);
    }
    Ok(phi.value(m, p)? - coeffs.partial_sum(q, p.rho))
}

/// Outcome of [`validate_strong_expansion`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionCheck {
    pub label: String,
    /// Fitted log–log slopes of the remainder, one per sample and function.
    pub slopes: Vec<f64>,
    pub expected: f64,
    pub pass: bool,
}

/// ∂φ/∂x_axis from pointwise values only: the analytic gradient when the inner
/// function has one, central differences otherwise. Coefficients come from fits.
#[derive(Clone)]
pub struct PointwiseDerivative {
    pub inner: TestFn,
    pub axis: usize,
}

impl PointwiseDerivative {
    pub fn new(inner: TestFn, axis: usize) -> Self {
        PointwiseDerivative { inner, axis }
    }
}

impl ThickTestFunction for PointwiseDerivative {
    fn label(&self) -> String {
        format!("pd{}[{}]", self.axis + 1, self.inner.label())
    }

    fn leading_order(&self) -> i32 {
        self.inner.leading_order() - 1
    }

    fn support_radius(&self) -> f64 {
        self.inner.support_radius()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }

    fn value(&self, m: &Submanifold, p: &TubePoint) -> Result<f64> {
        match self.inner.gradient(m, p)? {
            Some(g) => Ok(g[self.axis]),
            None => fd_partial(m, &*self.inner, &p.x, self.axis),
        }
    }
}

/// Checks on sample (ξ, ω) that the remainder after J = m+2 terms decays at
/// least like ρ^{J+1} (slope tolerance 0.2), for φ and its first derivatives.
pub fn validate_strong_expansion(
    m: &Submanifold,
    phi: &TestFn,
    samples: &[FiberPoint],
) -> Result<Vec<ExpansionCheck>> {
    let mut funcs: Vec<TestFn> = vec![phi.clone()];
    for i in 0..m.ambient_dim() {
        funcs.push(Arc::new(FdDerivative::new(phi.clone(), i)));
    }
    let mut out = Vec::new();
    for f in funcs {
        let lead = f.leading_order();
        let top = lead + 2;
        let expected = (top + 1) as f64;
        let mut slopes = Vec::new();
        let mut pass = true;
        for p in samples {
            let coeffs = extract_coeffs(m, &*f, p, top)?;
            let mut rho0 = 0.25 * m.tube_radius();
            if let Some(b) = f.breakpoints().into_iter().find(|b| *b > 0.0) {
                rho0 = rho0.min(b);
            }
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for k in 1..=5 {
                let rho = rho0 * 0.5f64.powi(k);
                let tp = p.at(rho);
                let r = f.value(m, &tp)? - coeffs.partial_sum(top + 1, rho);
                let scale = f.value(m, &tp)?.abs().max(rho.powi(lead));
                if r.abs() > 1e-11 * scale {
                    xs.push(rho.ln());
                    ys.push(r.abs().ln());
                }
            }
            if xs.len() >= 3 {
                let slope = least_squares_slope(&xs, &ys);
                if slope < expected - 0.2 {
                    pass = false;
                }
                slopes.push(slope);
            }
        }
        out.push(ExpansionCheck {
            label: f.label(),
            slopes,
            expected,
            pass,
        });
    }
    Ok(out)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// A test function given by a callback with declared order and support.
#[derive(Clone)]
pub struct CallbackFn {
    pub name: String,
    pub m: i32,
    pub support: f64,
    pub f: Arc<dyn Fn(&TubePoint) -> f64 + Send + Sync>,
}

impl CallbackFn {
    pub fn new(
        name: impl Into<String>,
        m: i32,
        support: f64,
        f: impl Fn(&TubePoint) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CallbackFn {
            name: name.into(),
            m,
            support,
            f: Arc::new(f),
        }
    }
}

impl ThickTestFunction for CallbackFn {
    fn label(&self) -> String {
        self.name.clone()
    }

    fn leading_order(&self) -> i32 {
        self.m
    }

    fn support_radius(&self) -> f64 {
        self.support
    }

    fn value(&self, _m: &Submanifold, p: &TubePoint) -> Result<f64> {
        Ok((self.f)(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{make_circle3d, make_sphere};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn cutoff_is_smooth_step() {
        let c = Cutoff::new(0.5);
        assert_eq!(c.value(0.1), 1.0);
        assert_eq!(c.value(0.6), 0.0);
        assert!((c.value(0.375) - 0.5).abs() < 1e-15);
        for &r in &[0.26, 0.3, 0.41, 0.49] {
            for k in 0..3 {
                let h = 1e-6;
                let fd = (c.derivative(k, r + h) - c.derivative(k, r - h)) / (2.0 * h);
                let an = c.derivative(k + 1, r);
                assert!((fd - an).abs() < 1e-4 * an.abs().max(1.0), "k {k} r {r}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn extract_sin_example() {
        let s = make_sphere(3, 1.0).unwrap();
        let p = fiber_point(&s, &v(&[1.0, 0.0, 0.0]), &v(&[1.0])).unwrap();
        let f = CallbackFn::new("1/rho+sin", -1, 1.0, |t: &TubePoint| 1.0 / t.rho + t.rho.sin());
        let e = extract_coeffs(&s, &f, &p, 3).unwrap();
        let exact = [1.0, 0.0, 1.0, 0.0, -1.0 / 6.0];
        for (a, b) in e.a.iter().zip(exact) {
            assert!((a - b).abs() < 1e-7, "{:?}", e.a);
        }
    }

    #[test]
    fn extract_inverse_square_on_circle() {
        let c = make_circle3d(1.0).unwrap();
        let p = fiber_point(&c, &v(&[0.0, 1.0, 0.0]), &v(&[0.6, 0.8])).unwrap();
        let f = CallbackFn::new("rho^-2", -2, 1.0, |t: &TubePoint| t.rho.powi(-2));
        let e = extract_coeffs(&c, &f, &p, 2).unwrap();
        assert!((e.a[0] - 1.0).abs() < 1e-8);
        for a in &e.a[1..] {
            assert!(a.abs() < 1e-8);
        }
    }

    #[test]
    fn smooth_x1_coefficients() {
        let s = make_sphere(3, 1.0).unwrap();
        let f = SmoothPoly::new(Polynomial::new(vec![(1.0, vec![1, 0, 0])]), 0.5);
        for om in [1.0, -1.0] {
            let p = fiber_point(&s, &v(&[1.0, 0.0, 0.0]), &v(&[om])).unwrap();
            let e = extract_coeffs(&s, &f, &p, 2).unwrap();
            assert!((e.a[0] - 1.0).abs() < 1e-15 && (e.a[1] - om).abs() < 1e-15);
            let fit = fit_coeffs(&s, &f, &p, 2).unwrap().expansion;
            assert!((fit.a[0] - 1.0).abs() < 1e-10 && (fit.a[1] - om).abs() < 1e-9);
            let field = f.field(&s);
            let t = taylor_coeffs_smooth(&s, &*field.f, &p, 2).unwrap();
            assert!((t[0] - 1.0).abs() < 1e-12 && (t[1] - om).abs() < 1e-8 && t[2].abs() < 1e-6);
        }
    }

    #[test]
    fn taylor_circle_example() {
        let c = make_circle3d(1.0).unwrap();
        let p = fiber_point(&c, &v(&[1.0, 0.0, 0.0]), &v(&[0.6, 0.8])).unwrap();
        let f = |x: &DVector<f64>| Ok(x[2] * x[2]);
        let t = taylor_coeffs_smooth(&c, &f, &p, 2).unwrap();
        assert!(t[0].abs() < 1e-12 && t[1].abs() < 1e-8 && (t[2] - 0.64).abs() < 1e-6);
        let k = |_x: &DVector<f64>| Ok(2.5);
        let t = taylor_coeffs_smooth(&c, &k, &p, 3).unwrap();
        assert_eq!(t[0], 2.5);
        assert!(t[1..].iter().all(|a| a.abs() < 1e-9));
    }

    #[test]
    fn derivative_of_rho_is_theta() {
        let s = make_sphere(3, 1.0).unwrap();
        let rho = Separable::rho_power(1);
        let p = fiber_point(&s, &v(&[0.6, 0.8, 0.0]), &v(&[-1.0])).unwrap();
        let e = expand_derivative(&s, &rho, 0, &p, 2).unwrap();
        assert_eq!(e.m, 0);
        assert!((e.a[0] - p.theta[0]).abs() < 1e-12);
        assert!(e.a[1..].iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn derivative_of_inverse_rho_on_circle() {
        let c = make_circle3d(1.0).unwrap();
        let inv = Separable::rho_power(-1);
        let p = fiber_point(&c, &v(&[0.0, 1.0, 0.0]), &v(&[0.6, 0.8])).unwrap();
        let e = expand_derivative(&c, &inv, 2, &p, 0).unwrap();
        assert_eq!(e.m, -2);
        assert!((e.a[0] + 0.8).abs() < 1e-12);
        // cross-check with a fit of the differenced function
        let fd = FdDerivative::new(Arc::new(inv), 2);
        let fit = fit_coeffs(&c, &fd, &p, 0).unwrap().expansion;
        for (a, b) in fit.a.iter().zip(&e.a) {
            assert!((a - b).abs() < 1e-5, "{:?} vs {:?}", fit.a, e.a);
        }
    }

    #[test]
    fn validate_expansion_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        let samples = vec![
            fiber_point(&s, &v(&[1.0, 0.0, 0.0]), &v(&[1.0])).unwrap(),
            fiber_point(&s, &v(&[0.0, 0.6, 0.8]), &v(&[-1.0])).unwrap(),
        ];
        let good: TestFn = Arc::new(CallbackFn::new("1/rho+sin", -1, 1.0, |t: &TubePoint| {
            1.0 / t.rho + t.rho.sin()
        }));
        assert!(validate_strong_expansion(&s, &good, &samples).unwrap().iter().all(|c| c.pass));
        let bad: TestFn = Arc::new(CallbackFn::new("rho log rho", 1, 1.0, |t: &TubePoint| {
            t.rho * t.rho.ln()
        }));
        assert!(!validate_strong_expansion(&s, &bad, &samples).unwrap()[0].pass);
        let bump: TestFn = Arc::new(Separable::bump(0.5));
        assert!(validate_strong_expansion(&s, &bump, &samples).unwrap().iter().all(|c| c.pass));
    }
}
