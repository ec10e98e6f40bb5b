//! Thick distributions: Pf(ρ^λ), Pf(ψ), thick deltas gδ^{[j]} and their
//! combinations, with pairings, derivatives, projection and residues.

use std::fmt;
use std::sync::Arc;

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{
    derivative_of, extract_coeffs, remainder_at, Expansion, MeasureCorrection, Product, Separable, SmoothField,
    TestFn, ThickTestFunction, TubeJacobian,
};
use crate::geometry::{fiber_point, FiberPoint, Submanifold};
use crate::quadrature::{
    fiber_rule, fp_radial_complex, gauss_jacobi_unit, gauss_laguerre, gauss_legendre, pairwise_sum,
    pairwise_sum_complex, sigma_rule, unit_sphere_area, Levels, TubeRule,
};
use crate::tangent_calculus::{multi_factorial, multi_indices, normal_derivative, omega_power, SurfaceFunction};

/// λ within this distance of an integer is treated as that integer.
pub const INTEGER_SNAP: f64 = 1e-9;
/// Relative η-independence tolerance recorded on every finite-part pairing.
pub const ETA_TOLERANCE: f64 = 1e-7;
/// Allowed gap between the two projection routes.
pub const PROJECTION_ROUTE_TOL: f64 = 1e-4;
/// Offset of λ from k in the residue limit.
pub const RESIDUE_STEP: f64 = 1e-3;

/// Reference measure for tube integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// ρ^{d-1} dρ dω dσ(ξ).
    #[default]
    Product,
    /// Ambient Lebesgue measure, J ρ^{d-1} dρ dω dσ(ξ).
    Lebesgue,
}

#[derive(Clone)]
pub enum ThickDistribution {
    PfRhoLambda(Complex<f64>),
    /// Pf(ψ) = ψ·Pf(1).
    PfPsi(TestFn),
    /// ∂_{axes}(g δ^{[degree]}), axes applied left to right.
    ThickDelta {
        g: SurfaceFunction,
        degree: i32,
        axes: Vec<usize>,
    },
    /// ψ·T.
    Weighted {
        psi: TestFn,
        inner: Box<ThickDistribution>,
    },
    LinearCombination(Vec<(Complex<f64>, ThickDistribution)>),
}

impl fmt::Debug for ThickDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn snap(lam: Complex<f64>) -> Complex<f64> {
    if lam.im == 0.0 && (lam.re - lam.re.round()).abs() < INTEGER_SNAP {
        Complex::new(lam.re.round(), 0.0)
    } else {
        lam
    }
}

fn fmt_complex(z: Complex<f64>) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("({}{:+}i)", z.re, z.im)
    }
}

impl ThickDistribution {
    pub fn pf(lambda: f64) -> Self {
        ThickDistribution::PfRhoLambda(Complex::new(lambda, 0.0))
    }

    pub fn pf_complex(lambda: Complex<f64>) -> Self {
        ThickDistribution::PfRhoLambda(lambda)
    }

    pub fn pf_psi(psi: TestFn) -> Self {
        ThickDistribution::PfPsi(psi)
    }

    /// δ^{[j]}_{*,Σ} (g ≡ 1).
    pub fn delta(degree: i32) -> Self {
        ThickDistribution::thick_delta(SurfaceFunction::Constant(1.0), degree)
    }

    pub fn thick_delta(g: SurfaceFunction, degree: i32) -> Self {
        ThickDistribution::ThickDelta {
            g,
            degree,
            axes: Vec::new(),
        }
    }

    pub fn weighted(psi: TestFn, inner: ThickDistribution) -> Self {
        ThickDistribution::Weighted {
            psi,
            inner: Box::new(inner),
        }
    }

    pub fn combination(parts: Vec<(f64, ThickDistribution)>) -> Self {
        ThickDistribution::LinearCombination(
            parts.into_iter().map(|(c, t)| (Complex::new(c, 0.0), t)).collect(),
        )
    }

    /// Integer exponent of a Pf(ρ^λ), if any.
    pub fn integer_lambda(&self) -> Option<i32> {
        match self {
            ThickDistribution::PfRhoLambda(l) => {
                let l = snap(*l);
                (l.im == 0.0 && l.re.fract() == 0.0).then_some(l.re as i32)
            }
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ThickDistribution::PfRhoLambda(l) => format!("Pf(rho^{})", fmt_complex(*l)),
            ThickDistribution::PfPsi(psi) => format!("Pf({})", psi.label()),
            ThickDistribution::ThickDelta { g, degree, axes } => {
                let base = match g {
                    SurfaceFunction::Constant(c) if *c == 1.0 => format!("delta[{degree}]"),
                    _ => format!("({})delta[{degree}]", g.label()),
                };
                axes.iter().fold(base, |acc, a| format!("d{}({acc})", a + 1))
            }
            ThickDistribution::Weighted { psi, inner } => format!("({})*{}", psi.label(), inner.label()),
            ThickDistribution::LinearCombination(parts) => parts
                .iter()
                .map(|(c, t)| format!("{}*{}", fmt_complex(*c), t.label()))
                .collect::<Vec<_>>()
                .join(" + "),
        }
    }

    /// True when pairing depends on η (contains a finite part).
    pub fn has_finite_part(&self) -> bool {
        match self {
            ThickDistribution::PfRhoLambda(_) | ThickDistribution::PfPsi(_) => true,
            ThickDistribution::ThickDelta { .. } => false,
            ThickDistribution::Weighted { inner, .. } => inner.has_finite_part(),
            ThickDistribution::LinearCombination(p) => p.iter().any(|(_, t)| t.has_finite_part()),
        }
    }

    /// Flattens nested combinations, distributes weights over sums and drops
    /// zero coefficients.
    pub fn normalize(self) -> ThickDistribution {
        let mut flat = Vec::new();
        self.flatten_into(Complex::new(1.0, 0.0), &mut flat);
        if flat.len() == 1 && flat[0].0 == Complex::new(1.0, 0.0) {
            return flat.pop().unwrap().1;
        }
        ThickDistribution::LinearCombination(flat)
    }

    fn flatten_into(self, scale: Complex<f64>, out: &mut Vec<(Complex<f64>, ThickDistribution)>) {
        match self {
            ThickDistribution::LinearCombination(parts) => {
                for (c, t) in parts {
                    t.flatten_into(scale * c, out);
                }
            }
            ThickDistribution::Weighted { psi, inner } => {
                let inner = inner.normalize();
                match inner {
                    ThickDistribution::LinearCombination(parts) => {
                        for (c, t) in parts {
                            if c * scale != Complex::new(0.0, 0.0) {
                                out.push((scale * c, ThickDistribution::weighted(psi.clone(), t)));
                            }
                        }
                    }
                    t => {
                        if scale != Complex::new(0.0, 0.0) {
                            out.push((scale, ThickDistribution::weighted(psi, t)));
                        }
                    }
                }
            }
            t => {
                if scale != Complex::new(0.0, 0.0) {
                    out.push((scale, t));
                }
            }
        }
    }
}

/// Outcome of a pairing; Pf pairings carry the η/2 self-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub value: f64,
    pub imag: f64,
    pub eta: Option<f64>,
    pub value_eta_half: Option<f64>,
    pub abs_diff: f64,
    pub eta_consistent: bool,
}

/// ⟨Res Pf(ρ^λ), φ⟩ two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidueResult {
    /// |S^{d-1}|⟨δ^{[−k−d]}, φ⟩.
    pub formula: f64,
    /// Richardson-extrapolated (λ−k)⟨Pf(ρ^λ), φ⟩ at λ = k ± h.
    pub limit: f64,
}

/// ⟨Π(T), φ⟩ two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResult {
    pub value: f64,
    /// Multilayer route, available for underived thick deltas.
    pub multilayer: Option<f64>,
}

/// Pairing engine bound to one submanifold and quadrature resolution.
#[derive(Clone)]
pub struct Engine {
    manifold: Submanifold,
    levels: Levels,
    measure: Measure,
    rule: Arc<TubeRule>,
}

impl Engine {
    pub fn new(manifold: Submanifold, levels: Levels) -> Result<Engine> {
        let rule = Arc::new(TubeRule::new(&manifold, levels)?);
        Ok(Engine {
            manifold,
            levels,
            measure: Measure::Product,
            rule,
        })
    }

    pub fn with_measure(mut self, measure: Measure) -> Engine {
        self.measure = measure;
        self
    }

    pub fn manifold(&self) -> &Submanifold {
        &self.manifold
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn fiber_area(&self) -> f64 {
        unit_sphere_area(self.manifold.codim() - 1)
    }

    fn check_support(&self, phi: &dyn ThickTestFunction) -> Result<f64> {
        let s = phi.support_radius();
        if !(s <= self.manifold.tube_radius()) {
            return Err(Error::SupportExceedsTube {
                support: s,
                tube: self.manifold.tube_radius(),
            });
        }
        Ok(s)
    }

    /// ⟨T, φ⟩; η defaults to half the support radius and Pf pairings are
    /// recomputed at η/2.
    pub fn pair(&self, t: &ThickDistribution, phi: &TestFn, eta: Option<f64>) -> Result<PairingResult> {
        let s = self.check_support(&**phi)?;
        if !t.has_finite_part() {
            let v = self.pair_at(t, phi, &[s])?[0];
            return Ok(PairingResult {
                value: v.re,
                imag: v.im,
                eta: None,
                value_eta_half: None,
                abs_diff: 0.0,
                eta_consistent: true,
            });
        }
        let eta = eta.unwrap_or(0.5 * s);
        if !(eta > 0.0 && eta <= s) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, {s}], got {eta}")));
        }
        let v = self.pair_at(t, phi, &[eta, 0.5 * eta])?;
        let diff = (v[0] - v[1]).norm();
        Ok(PairingResult {
            value: v[0].re,
            imag: v[0].im,
            eta: Some(eta),
            value_eta_half: Some(v[1].re),
            abs_diff: diff,
            eta_consistent: diff < ETA_TOLERANCE * (1.0 + v[0].norm()),
        })
    }

    /// ⟨T, φ⟩ at each η in `etas` (one value per η).
    pub fn pair_at(&self, t: &ThickDistribution, phi: &TestFn, etas: &[f64]) -> Result<Vec<Complex<f64>>> {
        match t {
            ThickDistribution::PfRhoLambda(l) => self.pf(*l, &self.with_density(phi.clone()), etas),
            ThickDistribution::PfPsi(psi) => {
                let f: TestFn = Arc::new(Product::new(psi.clone(), phi.clone()));
                self.pf(Complex::new(0.0, 0.0), &self.with_density(f), etas)
            }
            ThickDistribution::ThickDelta { g, degree, axes } => {
                let v = self.delta(g, *degree, axes, phi)?;
                Ok(vec![Complex::new(v, 0.0); etas.len()])
            }
            ThickDistribution::Weighted { psi, inner } => {
                let f: TestFn = Arc::new(Product::new(psi.clone(), phi.clone()));
                self.pair_at(inner, &f, etas)
            }
            ThickDistribution::LinearCombination(parts) => {
                let mut acc = vec![Complex::new(0.0, 0.0); etas.len()];
                for (c, part) in parts {
                    for (a, v) in acc.iter_mut().zip(self.pair_at(part, phi, etas)?) {
                        *a += c * v;
                    }
                }
                Ok(acc)
            }
        }
    }

    fn with_density(&self, phi: TestFn) -> TestFn {
        match self.measure {
            Measure::Product => phi,
            Measure::Lebesgue => Arc::new(Product::new(Arc::new(TubeJacobian), phi)),
        }
    }

    /// (1/|S^{d-1}|) ∬ g a_j(∂_{axes}φ) dσ dω with sign (−1)^{|axes|}.
    fn delta(&self, g: &SurfaceFunction, degree: i32, axes: &[usize], phi: &TestFn) -> Result<f64> {
        let target = axes.iter().fold(phi.clone(), |f, &a| derivative_of(&f, a));
        if degree < target.leading_order() {
            return Ok(0.0);
        }
        let m = &self.manifold;
        let v = self.rule.integrate(|p| {
            let gv = g.value(p);
            if gv == 0.0 {
                return Ok(0.0);
            }
            Ok(gv * extract_coeffs(m, &*target, p, degree)?.get(degree))
        })?;
        let sign = if axes.len().is_multiple_of(2) { 1.0 } else { -1.0 };
        Ok(sign * v / self.fiber_area())
    }

    /// Finite part of ∬∫ ρ^{λ+d-1} φ dρ dω dσ, split at each η.
    fn pf(&self, lambda: Complex<f64>, phi: &TestFn, etas: &[f64]) -> Result<Vec<Complex<f64>>> {
        let m = &self.manifold;
        let lam = snap(lambda);
        let d = m.codim() as f64;
        let jstar = (-lam.re - d).floor() as i32;
        let lead = phi.leading_order();
        let q = lead.max(jstar + 1);
        let s = self.check_support(&**phi)?;
        for &eta in etas {
            if !(eta > 0.0 && eta <= s) {
                return Err(Error::InvalidArgument(format!("eta must lie in (0, {s}], got {eta}")));
            }
        }
        let beta = lam + (d - 1.0 + q as f64);
        if beta.re <= -1.0 {
            return Err(Error::ExpansionUnavailable {
                order: q,
                reason: "remainder not integrable".into(),
            });
        }
        let ctx = RadialContext::new(self.levels, lam, d, beta);
        let breaks: Vec<f64> = phi.breakpoints().into_iter().filter(|b| *b > 0.0 && *b < s).collect();
        let per_node: Vec<Vec<Complex<f64>>> = self
            .rule
            .points
            .par_iter()
            .map(|p| {
                let coeffs = if q > lead {
                    extract_coeffs(m, &**phi, p, q - 1)?
                } else {
                    Expansion { m: lead, a: Vec::new() }
                };
                etas.iter()
                    .map(|&eta| ctx.node_value(m, &**phi, p, &coeffs, q, jstar, eta, s, &breaks))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok((0..etas.len())
            .map(|k| {
                let terms: Vec<Complex<f64>> = per_node
                    .iter()
                    .zip(&self.rule.weights)
                    .map(|(v, w)| v[k] * *w)
                    .collect();
                pairwise_sum_complex(&terms)
            })
            .collect())
    }

    /// ∂T/∂x_axis as the transpose of ∂/∂x_axis under this engine's pairing.
    pub fn derivative(&self, t: &ThickDistribution, axis: usize) -> ThickDistribution {
        self.derivative_raw(t, axis).normalize()
    }

    fn derivative_raw(&self, t: &ThickDistribution, axis: usize) -> ThickDistribution {
        let one = Complex::new(1.0, 0.0);
        match t {
            ThickDistribution::PfRhoLambda(l) => {
                let lam = snap(*l);
                let d = self.manifold.codim() as i32;
                let theta: TestFn = Arc::new(Separable::theta(axis));
                let mut parts = vec![(
                    lam,
                    ThickDistribution::weighted(theta, ThickDistribution::PfRhoLambda(lam - 1.0)),
                )];
                if self.measure == Measure::Product {
                    parts.push((
                        -one,
                        ThickDistribution::weighted(
                            Arc::new(MeasureCorrection::new(&self.manifold, axis)),
                            ThickDistribution::PfRhoLambda(lam),
                        ),
                    ));
                }
                if let Some(k) = t.integer_lambda() {
                    let delta = ThickDistribution::thick_delta(SurfaceFunction::Theta { axis }, 1 - d - k);
                    let term = match self.measure {
                        Measure::Product => delta,
                        Measure::Lebesgue => ThickDistribution::weighted(Arc::new(TubeJacobian), delta),
                    };
                    parts.push((Complex::new(self.fiber_area(), 0.0), term));
                }
                ThickDistribution::LinearCombination(parts)
            }
            ThickDistribution::PfPsi(psi) => ThickDistribution::LinearCombination(vec![
                (one, ThickDistribution::PfPsi(derivative_of(psi, axis))),
                (
                    one,
                    ThickDistribution::weighted(psi.clone(), self.derivative_raw(&ThickDistribution::pf(0.0), axis)),
                ),
            ]),
            ThickDistribution::ThickDelta { g, degree, axes } => {
                let mut axes = axes.clone();
                axes.push(axis);
                ThickDistribution::ThickDelta {
                    g: g.clone(),
                    degree: *degree,
                    axes,
                }
            }
            ThickDistribution::Weighted { psi, inner } => self.leibniz(psi, inner, axis),
            ThickDistribution::LinearCombination(parts) => ThickDistribution::LinearCombination(
                parts.iter().map(|(c, t)| (*c, self.derivative_raw(t, axis))).collect(),
            ),
        }
    }

    /// (∂ψ/∂x_i)·T + ψ·∂T/∂x_i.
    pub fn leibniz(&self, psi: &TestFn, t: &ThickDistribution, axis: usize) -> ThickDistribution {
        let one = Complex::new(1.0, 0.0);
        ThickDistribution::LinearCombination(vec![
            (one, ThickDistribution::weighted(derivative_of(psi, axis), t.clone())),
            (one, ThickDistribution::weighted(psi.clone(), self.derivative_raw(t, axis))),
        ])
        .normalize()
    }

    /// ⟨Π(T), φ⟩ for a smooth field; thick deltas are cross-checked against the
    /// multilayer formula.
    pub fn project_pair(&self, t: &ThickDistribution, phi: &SmoothField) -> Result<ProjectionResult> {
        let f: TestFn = Arc::new(phi.clone());
        let value = self.pair(t, &f, None)?.value;
        let multilayer = match t {
            ThickDistribution::ThickDelta { g, degree, axes } if axes.is_empty() => {
                Some(self.multilayer(g, *degree, phi)?)
            }
            _ => None,
        };
        if let Some(b) = multilayer {
            let gap = (value - b).abs();
            if gap > PROJECTION_ROUTE_TOL * value.abs().max(1.0) {
                return Err(Error::NotConverged {
                    what: "projection routes".into(),
                    change: gap,
                });
            }
        }
        Ok(ProjectionResult { value, multilayer })
    }

    /// (1/|S^{d-1}|) Σ_{|α|=j} (1/α!) ∫_Σ h_α D_n^α φ dσ with h_α(ξ) = ∫ g(ξ,ω) ω^α dω.
    pub fn multilayer(&self, g: &SurfaceFunction, degree: i32, phi: &SmoothField) -> Result<f64> {
        if degree < 0 {
            return Ok(0.0);
        }
        let m = &self.manifold;
        let sigma = sigma_rule(m, self.levels.sigma_level)?;
        let fiber = fiber_rule(m.codim(), self.levels.fiber_level)?;
        let alphas = multi_indices(m.codim(), degree as usize);
        let terms: Vec<f64> = sigma
            .nodes
            .par_iter()
            .zip(sigma.weights.par_iter())
            .map(|(xi, w)| {
                let fps: Vec<FiberPoint> = fiber
                    .nodes
                    .iter()
                    .map(|om| fiber_point(m, xi, om))
                    .collect::<Result<_>>()?;
                let mut s = 0.0;
                for alpha in &alphas {
                    let h = pairwise_sum(
                        &fps.iter()
                            .zip(&fiber.weights)
                            .map(|(p, wf)| wf * g.value(p) * omega_power(&p.omega, alpha))
                            .collect::<Vec<_>>(),
                    );
                    if h.abs() < 1e-15 {
                        continue;
                    }
                    s += h * normal_derivative(m, &*phi.f, xi, alpha)? / multi_factorial(alpha);
                }
                Ok(w * s)
            })
            .collect::<Result<_>>()?;
        Ok(pairwise_sum(&terms) / self.fiber_area())
    }

    /// ⟨Res_{λ=k} Pf(ρ^λ), φ⟩ from the delta formula and from the λ-limit.
    pub fn residue(&self, k: i32, phi: &TestFn) -> Result<ResidueResult> {
        let d = self.manifold.codim() as i32;
        let s = self.check_support(&**phi)?;
        let formula =
            self.fiber_area() * self.pair(&ThickDistribution::delta(-k - d), phi, None)?.value;
        let eta = 0.5 * s;
        let scaled = |h: f64| -> Result<f64> {
            let up = self.pair_at(&ThickDistribution::pf(k as f64 + h), phi, &[eta])?[0].re;
            let down = self.pair_at(&ThickDistribution::pf(k as f64 - h), phi, &[eta])?[0].re;
            Ok(0.5 * h * (up - down))
        };
        let coarse = scaled(RESIDUE_STEP)?;
        let fine = scaled(0.5 * RESIDUE_STEP)?;
        Ok(ResidueResult {
            formula,
            limit: (4.0 * fine - coarse) / 3.0,
        })
    }
}

/// Radial rules shared by every fiber node of one Pf pairing.
struct RadialContext {
    lam: Complex<f64>,
    expo: Complex<f64>,
    beta: Complex<f64>,
    jacobi: Option<(Vec<f64>, Vec<f64>)>,
    laguerre: Option<(Vec<f64>, Vec<f64>)>,
    legendre: (Vec<f64>, Vec<f64>),
    d: f64,
}

fn cpow(rho: f64, a: Complex<f64>) -> Complex<f64> {
    if a.im == 0.0 {
        Complex::new(rho.powf(a.re), 0.0)
    } else {
        (a * rho.ln()).exp()
    }
}

impl RadialContext {
    fn new(levels: Levels, lam: Complex<f64>, d: f64, beta: Complex<f64>) -> Self {
        let n = (levels.radial_points / 2).max(8);
        let (jacobi, laguerre) = if beta.im == 0.0 {
            (Some(gauss_jacobi_unit(n, beta.re)), None)
        } else {
            (None, Some(gauss_laguerre(levels.radial_points.max(16))))
        };
        RadialContext {
            lam,
            expo: lam + (d - 1.0),
            beta,
            jacobi,
            laguerre,
            legendre: gauss_legendre(levels.radial_points.max(16)),
            d,
        }
    }

    /// ∫_a^b f over Gauss–Legendre panels split at `cuts`.
    fn panels(&self, a: f64, b: f64, cuts: &[f64], f: &dyn Fn(f64) -> Result<Complex<f64>>) -> Result<Complex<f64>> {
        if b <= a {
            return Ok(Complex::new(0.0, 0.0));
        }
        let mut edges = vec![a];
        edges.extend(cuts.iter().copied().filter(|c| *c > a && *c < b));
        edges.push(b);
        let (x, w) = &self.legendre;
        let mut terms = Vec::new();
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (xi, wi) in x.iter().zip(w) {
                terms.push(f(mid + half * xi)? * (wi * half));
            }
        }
        Ok(pairwise_sum_complex(&terms))
    }

    #[allow(clippy::too_many_arguments)]
    fn node_value(
        &self,
        m: &Submanifold,
        phi: &dyn ThickTestFunction,
        p: &FiberPoint,
        coeffs: &Expansion,
        q: i32,
        jstar: i32,
        eta: f64,
        support: f64,
        breaks: &[f64],
    ) -> Result<Complex<f64>> {
        let lead = phi.leading_order();
        let mut total = Complex::new(0.0, 0.0);
        for j in lead..=jstar {
            let a = coeffs.get(j);
            if a != 0.0 {
                total += fp_radial_complex(self.lam + (j as f64 + self.d - 1.0), eta) * a;
            }
        }
        let rem = |rho: f64| -> Result<f64> { remainder_at(m, phi, &p.at(rho), q, coeffs) };
        // [0, b1]: ρ^β · (R_q/ρ^q), with b1 the first breakpoint below η
        let b1 = breaks.iter().copied().find(|b| *b < eta).unwrap_or(eta).min(eta);
        let g = |rho: f64| -> Result<f64> { Ok(rem(rho)? / rho.powi(q)) };
        let inner = if let Some((t, w)) = &self.jacobi {
            let mut terms = Vec::with_capacity(t.len());
            for (tk, wk) in t.iter().zip(w) {
                terms.push(wk * g(b1 * tk)?);
            }
            cpow(b1, self.beta + 1.0) * pairwise_sum(&terms)
        } else {
            let (u, w) = self.laguerre.as_ref().expect("laguerre rule");
            let c = self.beta.re + 1.0;
            let mut terms = Vec::with_capacity(u.len());
            for (uk, wk) in u.iter().zip(w) {
                let phase = Complex::new(0.0, -self.beta.im * uk / c).exp();
                terms.push(phase * (wk * g(b1 * (-uk / c).exp())?));
            }
            cpow(b1, self.beta + 1.0) / c * pairwise_sum_complex(&terms)
        };
        total += inner;
        total += self.panels(b1, eta, breaks, &|rho| Ok(cpow(rho, self.expo) * rem(rho)?))?;
        total += self.panels(eta, support, breaks, &|rho| {
            Ok(cpow(rho, self.expo) * phi.value(m, &p.at(rho))?)
        })?;
        Ok(total)
    }
}

fn default_engine(m: &Submanifold) -> Result<Engine> {
    Engine::new(m.clone(), Levels::default())
}

/// ⟨T, φ⟩ with default quadrature levels.
pub fn pair(m: &Submanifold, t: &ThickDistribution, phi: &TestFn, eta: Option<f64>) -> Result<PairingResult> {
    default_engine(m)?.pair(t, phi, eta)
}

/// ∂T/∂x_i under the product-measure pairing.
pub fn derivative(m: &Submanifold, t: &ThickDistribution, axis: usize) -> Result<ThickDistribution> {
    Ok(default_engine(m)?.derivative(t, axis))
}

pub fn leibniz(m: &Submanifold, psi: &TestFn, t: &ThickDistribution, axis: usize) -> Result<ThickDistribution> {
    Ok(default_engine(m)?.leibniz(psi, t, axis))
}

pub fn project_pair(m: &Submanifold, t: &ThickDistribution, phi: &SmoothField) -> Result<ProjectionResult> {
    default_engine(m)?.project_pair(t, phi)
}

pub fn residue(m: &Submanifold, k: i32, phi: &TestFn) -> Result<ResidueResult> {
    default_engine(m)?.residue(k, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::{Polynomial, SmoothPoly};
    use crate::shapes::{make_circle3d, make_sphere, sphere_delta_derivative_oracle};
    use std::f64::consts::PI;

    fn quick() -> Levels {
        Levels {
            sigma_level: 8,
            fiber_level: 2,
            radial_points: 32,
        }
    }

    #[test]
    fn delta_of_one_on_circle() {
        let e = Engine::new(make_circle3d(1.0).unwrap(), quick()).unwrap();
        let bump: TestFn = Arc::new(Separable::bump(0.5));
        let r = e.pair(&ThickDistribution::delta(0), &bump, None).unwrap();
        assert!((r.value - 2.0 * PI).abs() < 1e-12);
        let g = SurfaceFunction::omega_monomial(1.0, vec![1, 0]);
        let phi: TestFn = Arc::new(Separable::angular(g.clone(), 0, vec![1.0], 0.5));
        let r = e.pair(&ThickDistribution::thick_delta(g, 0), &phi, None).unwrap();
        assert!((r.value - PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_delta_derivative_value() {
        let e = Engine::new(make_sphere(3, 1.0).unwrap(), quick()).unwrap();
        let phi: TestFn = Arc::new(Separable::normal_component(0, 0.5));
        let t = e.derivative(&ThickDistribution::delta(0), 0);
        let v = e.pair(&t, &phi, None).unwrap().value;
        let oracle = sphere_delta_derivative_oracle(3, 1.0, 0, 0, 0);
        assert!((v - oracle).abs() < 1e-8 * oracle.abs(), "{v} vs {oracle}");
    }

    #[test]
    fn pf_convergent_matches_direct() {
        let m = make_sphere(3, 1.0).unwrap();
        let e = Engine::new(m.clone(), quick()).unwrap();
        let bump: TestFn = Arc::new(Separable::bump(0.5));
        let r = e.pair(&ThickDistribution::pf(0.5), &bump, None).unwrap();
        let f = bump.clone();
        let direct = crate::quadrature::integrate_tube(
            &m,
            |p, rho| rho.sqrt() * f.value(&m, &p.at(rho)).unwrap(),
            0.0,
            0.5,
            quick(),
        )
        .unwrap();
        assert!((r.value - direct).abs() < 1e-8, "{} vs {direct}", r.value);
        assert!(r.eta_consistent);
    }

    #[test]
    fn residue_examples() {
        let e = Engine::new(make_circle3d(1.0).unwrap(), quick()).unwrap();
        let bump: TestFn = Arc::new(Separable::bump(0.5));
        let r = e.residue(-2, &bump).unwrap();
        assert!((r.formula - 4.0 * PI * PI).abs() < 1e-10);
        assert!((r.limit - r.formula).abs() < 1e-3 * r.formula);
        let s = Engine::new(make_sphere(3, 1.0).unwrap(), quick()).unwrap();
        let r = s.residue(-1, &bump).unwrap();
        assert!((r.formula - 8.0 * PI).abs() < 1e-10);
        assert!((r.limit - r.formula).abs() < 1e-3 * r.formula);
        let r = s.residue(3, &bump).unwrap();
        assert_eq!(r.formula, 0.0);
    }

    #[test]
    fn negative_degree_projects_to_zero() {
        let m = make_circle3d(1.0).unwrap();
        let e = Engine::new(m.clone(), quick()).unwrap();
        let sp = SmoothPoly::new(Polynomial::new(vec![(1.0, vec![0, 0, 0]), (0.5, vec![1, 0, 0])]), 0.5);
        let field = sp.field(&m);
        let r = e.project_pair(&ThickDistribution::delta(-1), &field).unwrap();
        assert_eq!(r.value, 0.0);
        let r = e.project_pair(&ThickDistribution::delta(0), &field).unwrap();
        assert!((r.value - 2.0 * PI).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn normalize_flattens() {
        let t = ThickDistribution::combination(vec![
            (2.0, ThickDistribution::combination(vec![(3.0, ThickDistribution::delta(0))])),
            (0.0, ThickDistribution::pf(1.0)),
        ])
        .normalize();
        match t {
            ThickDistribution::LinearCombination(p) => {
                assert_eq!(p.len(), 1);
                assert_eq!(p[0].0.re, 6.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
