//! Finite-part and residue values checked against oracles computed here from
//! scratch: plain Simpson quadrature of the radial profile plus a least-squares
//! fit of the divergent ε-behaviour.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use tubecalc::distributions::{Engine, ThickDistribution};
use tubecalc::expansion::{Separable, TestFn};
use tubecalc::quadrature::{integrate_tube, Levels};
use tubecalc::shapes::sphere_delta_derivative_oracle;
use tubecalc::tangent_calculus::SurfaceFunction;
use tubecalc::{make_circle3d, make_sphere};

fn quick() -> Levels {
    Levels {
        sigma_level: 16,
        fiber_level: 2,
        radial_points: 32,
    }
}

/// Smooth step: 1 on [0, s/2], 0 beyond s.
fn chi(rho: f64, s: f64) -> f64 {
    let a = 0.5 * s;
    if rho <= a {
        return 1.0;
    }
    if rho >= s {
        return 0.0;
    }
    let u = (s - rho) / (s - a);
    let f = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
    f(u) / (f(u) + f(1.0 - u))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// ∫_ε^s g(ρ) dρ, with ρ = e^t on [ε, s/2] so small ε stays cheap.
fn truncated(g: &dyn Fn(f64) -> f64, eps: f64, s: f64) -> f64 {
    let a = 0.5 * s;
    let inner = simpson(|t| g(t.exp()) * t.exp(), eps.ln(), a.ln(), 40_000);
    inner + simpson(g, a, s, 40_000)
}

/// Constant term of ε ↦ ∫_ε^s g against the divergent basis plus a few
/// vanishing powers, least squares over ε ∈ [1e-4, 1e-2].
fn epsilon_fit(g: &dyn Fn(f64) -> f64, s: f64, basis: &[&dyn Fn(f64) -> f64]) -> f64 {
    let eps: Vec<f64> = (0..24).map(|k| 1e-2 * 10f64.powf(-2.0 * k as f64 / 23.0)).collect();
    let a = DMatrix::from_fn(eps.len(), basis.len() + 1, |r, c| if c == 0 { 1.0 } else { basis[c - 1](eps[r]) });
    let y = DVector::from_iterator(eps.len(), eps.iter().map(|&e| truncated(g, e, s)));
    let sol = a.svd(true, true).solve(&y, 0.0).unwrap();
    sol[0]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn pf_inverse_square_bump_on_circle_matches_epsilon_fit() {
    // d = 2: ρ^{-2}·ρ^{d-1} = ρ^{-1}, only a logarithmic divergence
    let s = 0.5;
    let g = |r: f64| chi(r, s) / r;
    let radial = epsilon_fit(&g, s, &[&|e: f64| 1.0 / e, &|e: f64| e.ln(), &|e: f64| e]);
    let oracle = 4.0 * PI * PI * radial;
    let e = Engine::new(make_circle3d(1.0).unwrap(), quick()).unwrap();
    let phi: TestFn = Arc::new(Separable::bump(s));
    let v = e.pair(&ThickDistribution::pf(-2.0), &phi, None).unwrap();
    assert!(rel(v.value, oracle) < 1e-6, "{} vs {oracle}", v.value);
    // analytic constant: ln(s/2) + ∫_{s/2}^s χ/ρ
    let closed = (0.5 * s).ln() + simpson(g, 0.5 * s, s, 200_000);
    assert!(rel(radial, closed) < 1e-8, "{radial} vs {closed}");
}

#[test]
fn pf_inverse_cube_bump_on_sphere_matches_epsilon_fit() {
    let s = 0.5;
    let g = |r: f64| chi(r, s) * r.powi(-3);
    let radial = epsilon_fit(
        &g,
        s,
        &[&|e: f64| e.powi(-2), &|e: f64| 1.0 / e, &|e: f64| e.ln(), &|e: f64| e],
    );
    let oracle = 8.0 * PI * radial;
    let e = Engine::new(make_sphere(3, 1.0).unwrap(), quick()).unwrap();
    let phi: TestFn = Arc::new(Separable::bump(s));
    let v = e.pair(&ThickDistribution::pf(-3.0), &phi, None).unwrap();
    assert!(rel(v.value, oracle) < 1e-6, "{} vs {oracle}", v.value);
}

#[test]
fn pf_half_integer_laurent_on_sphere_matches_epsilon_fit() {
    let s = 0.5;
    let c = [1.0, 0.5, 0.25, 0.125];
    let profile = move |r: f64| chi(r, s) * c.iter().enumerate().map(|(j, cj)| cj * r.powi(j as i32 - 1)).sum::<f64>();
    let g = |r: f64| r.powf(-1.5) * profile(r);
    let radial = epsilon_fit(
        &g,
        s,
        &[
            &|e: f64| e.powf(-1.5),
            &|e: f64| e.powf(-0.5),
            &|e: f64| e.powf(0.5),
            &|e: f64| e.powf(1.5),
        ],
    );
    let oracle = 8.0 * PI * radial;
    let e = Engine::new(make_sphere(3, 1.0).unwrap(), quick()).unwrap();
    let phi: TestFn = Arc::new(Separable::laurent(-1, c.to_vec(), s));
    let v = e.pair(&ThickDistribution::pf(-1.5), &phi, None).unwrap();
    assert!(rel(v.value, oracle) < 1e-6, "{} vs {oracle}", v.value);
}

#[test]
fn pf_complex_exponent_matches_continuation() {
    // fp ∫_0^s χ ρ^λ = a^{λ+1}/(λ+1) + ∫_a^s χ ρ^λ, a = s/2, on the sphere (d = 1)
    let s = 0.5;
    let a = 0.5 * s;
    let lam = Complex::new(-1.5, 0.7);
    let head = Complex::new(a, 0.0).powc(lam + 1.0) / (lam + 1.0);
    let re = simpson(|r| chi(r, s) * Complex::new(r, 0.0).powc(lam).re, a, s, 200_000);
    let im = simpson(|r| chi(r, s) * Complex::new(r, 0.0).powc(lam).im, a, s, 200_000);
    let oracle = (head + Complex::new(re, im)) * (8.0 * PI);
    let e = Engine::new(make_sphere(3, 1.0).unwrap(), quick()).unwrap();
    let phi: TestFn = Arc::new(Separable::bump(s));
    let v = e.pair(&ThickDistribution::pf_complex(lam), &phi, None).unwrap();
    assert!((v.value - oracle.re).abs() < 1e-7 * oracle.norm(), "{} vs {}", v.value, oracle.re);
    assert!((v.imag - oracle.im).abs() < 1e-7 * oracle.norm(), "{} vs {}", v.imag, oracle.im);
}

#[test]
fn weighting_by_rho_shifts_the_exponent() {
    let e = Engine::new(make_sphere(3, 1.0).unwrap(), quick()).unwrap();
    let phi: TestFn = Arc::new(Separable::laurent(-1, vec![1.0, -0.5, 0.2], 0.5));
    let rho: TestFn = Arc::new(Separable::rho_power(1));
    let weighted = e
        .pair(&ThickDistribution::weighted(rho, ThickDistribution::pf(0.5)), &phi, None)
        .unwrap()
        .value;
    let shifted = e.pair(&ThickDistribution::pf(1.5), &phi, None).unwrap().value;
    assert!((weighted - shifted).abs() < 1e-10 * (1.0 + shifted.abs()), "{weighted} vs {shifted}");
}

#[test]
fn residues_reduce_to_fiber_integrals_of_a0() {
    let phi: TestFn = Arc::new(Separable::bump(0.5));
    // circle3d, k = −2 (d = 2): ∬ a_0 = 2π · 2π
    let e = Engine::new(make_circle3d(1.0).unwrap(), quick()).unwrap();
    let r = e.residue(-2, &phi).unwrap();
    assert!(rel(r.formula, 4.0 * PI * PI) < 1e-10, "{}", r.formula);
    assert!(rel(r.limit, 4.0 * PI * PI) < 1e-3, "{}", r.limit);
    // unit sphere, k = −1 (d = 1): ∬ a_0 over S² × S^0 = 8π
    let e = Engine::new(make_sphere(3, 1.0).unwrap(), quick()).unwrap();
    let r = e.residue(-1, &phi).unwrap();
    assert!(rel(r.formula, 8.0 * PI) < 1e-10, "{}", r.formula);
    assert!(rel(r.limit, 8.0 * PI) < 1e-3, "{}", r.limit);
}

#[test]
fn angular_delta_on_circle() {
    // g = ω_1, a_0 = ω_1: (1/2π)·2π·∫ω_1² dω = π
    let e = Engine::new(make_circle3d(1.0).unwrap(), quick()).unwrap();
    let w1 = SurfaceFunction::omega_monomial(1.0, vec![1, 0]);
    let phi: TestFn = Arc::new(Separable::angular(w1.clone(), 0, vec![1.0], 0.5));
    let v = e.pair(&ThickDistribution::thick_delta(w1, 0), &phi, None).unwrap();
    assert!((v.value - PI).abs() < 1e-10, "{}", v.value);
}

#[test]
fn sphere_table_values() {
    assert!((sphere_delta_derivative_oracle(3, 1.0, 0, 0, 0) + 8.0 * PI / 3.0).abs() < 1e-12);
    assert!((sphere_delta_derivative_oracle(3, 2.0, 1, 1, 2) + 4.0 * PI / 3.0).abs() < 1e-12);
    assert_eq!(sphere_delta_derivative_oracle(3, 2.0, 0, 2, 0), 0.0);
    assert_eq!(sphere_delta_derivative_oracle(4, 1.5, 3, 1, 2), 0.0);
}

#[test]
fn derivative_of_delta_paired_with_normal_components() {
    for r in [1.0, 2.0] {
        let e = Engine::new(make_sphere(3, r).unwrap(), quick()).unwrap();
        for k in 0..3 {
            let phi: TestFn = Arc::new(Separable::normal_component(k, 0.5 * r));
            for j in [0, 2] {
                let t = e.derivative(&ThickDistribution::delta(j), k);
                let v = e.pair(&t, &phi, None).unwrap().value;
                let expect = sphere_delta_derivative_oracle(3, r, k, k, j);
                assert!(rel(v, expect) < 1e-6, "r={r} k={k} j={j}: {v} vs {expect}");
            }
        }
    }
}

#[test]
fn tube_volumes() {
    let one = |_: &tubecalc::FiberPoint, _: f64| 1.0;
    let c = make_circle3d(1.0).unwrap();
    let v = integrate_tube(&c, one, 0.0, 1.0, quick()).unwrap();
    assert!((v - 2.0 * PI * PI).abs() < 1e-9, "{v}");
    let s = make_sphere(3, 1.0).unwrap();
    let v = integrate_tube(&s, one, 0.0, 0.5, quick()).unwrap();
    assert!((v - 4.0 * PI).abs() < 1e-9, "{v}");
}
