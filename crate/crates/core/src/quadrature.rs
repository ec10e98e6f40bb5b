//! Quadrature rules over Σ, over the fiber sphere S^{d-1} and over radial
//! intervals, plus the closed-form finite-part radial primitive.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{fiber_point, FiberPoint, Submanifold};
use crate::shapes::ShapeOracle;

/// Nodes with positive weights; `measure_total` is the exact measure of the domain.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<f64>,
    pub measure_total: f64,
}

impl<T> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Weighted sum of `f` over the nodes.
    pub fn integrate(&self, mut f: impl FnMut(&T) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .collect();
        pairwise_sum(&terms)
    }
}

/// Resolution knobs shared by every tube integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Levels {
    pub sigma_level: usize,
    pub fiber_level: usize,
    pub radial_points: usize,
}

impl Default for Levels {
    fn default() -> Self {
        Levels {
            sigma_level: 32,
            fiber_level: 4,
            radial_points: 64,
        }
    }
}

impl Levels {
    pub fn doubled(self) -> Levels {
        Levels {
            sigma_level: 2 * self.sigma_level,
            fiber_level: 2 * self.fiber_level,
            radial_points: 2 * self.radial_points,
        }
    }
}

/// Tree summation: run-to-run identical and with O(log n) error growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_complex(xs: &[Complex<f64>]) -> Complex<f64> {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
}

/// Gauss–Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Golub–Welsch: nodes are eigenvalues of the Jacobi matrix, weights come from
/// the first eigenvector components.
fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = diag[i];
        if i + 1 < n {
            t[(i, i + 1)] = off[i];
            t[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Nodes and weights on [0, 1] for the weight t^β (β > -1).
pub fn gauss_jacobi_unit(n: usize, beta: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(beta > -1.0, "Gauss–Jacobi weight exponent must exceed -1");
    // Jacobi weight (1-x)^0 (1+x)^β on [-1,1], mapped with t = (1+x)/2.
    let a = 0.0;
    let b = beta;
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let dk = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        diag.push(dk);
        if k + 1 < n {
            let j = kf + 1.0;
            let s1 = 2.0 * j + a + b;
            let num = 4.0 * j * (j + a) * (j + b) * (j + a + b);
            let den = s1 * s1 * (s1 + 1.0) * (s1 - 1.0);
            off.push((num / den).sqrt());
        }
    }
    let mu0 = 2f64.powf(a + b + 1.0) / (b + 1.0);
    let (x, w) = golub_welsch(&diag, &off, mu0);
    let scale = 2f64.powf(-(b + 1.0));
    let t = x.iter().map(|&xi| 0.5 * (1.0 + xi)).collect();
    let wt = w.iter().map(|&wi| wi * scale).collect();
    (t, wt)
}

/// Gauss–Laguerre nodes and weights for ∫_0^∞ e^{-u} f(u) du.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    golub_welsch(&diag, &off, 1.0)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> QuadratureRule<f64> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    QuadratureRule {
        nodes: x.iter().map(|&xi| mid + half * xi).collect(),
        weights: w.iter().map(|&wi| wi * half).collect(),
        measure_total: b - a,
    }
}

/// Composite Gauss–Legendre on [a, b] with subintervals shrinking
/// geometrically toward `a`; integrates endpoint algebraic singularities.
pub fn graded_rule(n: usize, a: f64, b: f64, depth: usize) -> QuadratureRule<f64> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let len = b - a;
    let mut hi = b;
    for k in 1..=depth {
        let lo = if k == depth { a } else { a + len * 0.5f64.powi(k as i32) };
        let r = gauss_legendre_interval(n, lo, hi);
        nodes.extend(r.nodes);
        weights.extend(r.weights);
        hi = lo;
    }
    QuadratureRule {
        nodes,
        weights,
        measure_total: len,
    }
}

/// |S^{k}|, the area of the unit k-sphere in R^{k+1}.
pub fn unit_sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * unit_sphere_area(k - 2),
    }
}

/// Finite part of ∫_0^η ρ^a dρ.
pub fn fp_radial(a: f64, eta: f64) -> f64 {
    assert!(eta > 0.0, "fp_radial needs eta > 0");
    if a == -1.0 {
        eta.ln()
    } else {
        eta.powf(a + 1.0) / (a + 1.0)
    }
}

/// Complex-exponent version of [`fp_radial`].
pub fn fp_radial_complex(a: Complex<f64>, eta: f64) -> Complex<f64> {
    assert!(eta > 0.0, "fp_radial needs eta > 0");
    if a == Complex::new(-1.0, 0.0) {
        Complex::new(eta.ln(), 0.0)
    } else {
        let e = a + 1.0;
        (e * eta.ln()).exp() / e
    }
}

/// Product rule on Σ for the shipped shapes.
///
/// Level `L` gives `L` Gauss–Legendre nodes in the polar cosine times `2L`
/// azimuths on the 2-sphere, and `8L` uniform nodes on circles.
pub fn sigma_rule(m: &Submanifold, level: usize) -> Result<QuadratureRule<DVector<f64>>> {
    let level = level.max(1);
    match m.oracle() {
        Some(ShapeOracle::Sphere { ambient_dim: 3, radius }) => {
            let r = *radius;
            let (ct, wt) = gauss_legendre(level);
            let naz = 2 * level;
            let mut nodes = Vec::with_capacity(level * naz);
            let mut weights = Vec::with_capacity(level * naz);
            for (c, w) in ct.iter().zip(&wt) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for k in 0..naz {
                    let phi = 2.0 * PI * k as f64 / naz as f64;
                    nodes.push(DVector::from_vec(vec![
                        r * s * phi.cos(),
                        r * s * phi.sin(),
                        r * c,
                    ]));
                    weights.push(w * 2.0 * PI / naz as f64 * r * r);
                }
            }
            Ok(QuadratureRule {
                nodes,
                weights,
                measure_total: 4.0 * PI * r * r,
            })
        }
        Some(ShapeOracle::Sphere { ambient_dim: 2, radius }) => {
            let r = *radius;
            Ok(circle_rule(8 * level, r, |c, s| vec![r * c, r * s]))
        }
        Some(ShapeOracle::Circle3d { radius }) => {
            let r = *radius;
            Ok(circle_rule(8 * level, r, |c, s| vec![r * c, r * s, 0.0]))
        }
        Some(other) => Err(Error::ShapeUnsupported(other.id())),
        None => Err(Error::ShapeUnsupported("generic".into())),
    }
}

fn circle_rule(
    n: usize,
    r: f64,
    point: impl Fn(f64, f64) -> Vec<f64>,
) -> QuadratureRule<DVector<f64>> {
    let h = 2.0 * PI / n as f64;
    QuadratureRule {
        nodes: (0..n)
            .map(|k| {
                let t = h * k as f64;
                DVector::from_vec(point(t.cos(), t.sin()))
            })
            .collect(),
        weights: vec![h * r; n],
        measure_total: 2.0 * PI * r,
    }
}

/// Rule on the fiber sphere S^{d-1}; nodes are frame coordinates ω.
pub fn fiber_rule(d: usize, level: usize) -> Result<QuadratureRule<DVector<f64>>> {
    let level = level.max(1);
    match d {
        1 => Ok(QuadratureRule {
            nodes: vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            weights: vec![1.0, 1.0],
            measure_total: 2.0,
        }),
        2 => {
            let n = 8 * level;
            let h = 2.0 * PI / n as f64;
            Ok(QuadratureRule {
                nodes: (0..n)
                    .map(|k| {
                        let t = h * k as f64;
                        DVector::from_vec(vec![t.cos(), t.sin()])
                    })
                    .collect(),
                weights: vec![h; n],
                measure_total: 2.0 * PI,
            })
        }
        3 => {
            let npolar = 4 * level;
            let naz = 8 * level;
            let (ct, wt) = gauss_legendre(npolar);
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            for (c, w) in ct.iter().zip(&wt) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for k in 0..naz {
                    let phi = 2.0 * PI * k as f64 / naz as f64;
                    nodes.push(DVector::from_vec(vec![s * phi.cos(), s * phi.sin(), *c]));
                    weights.push(w * 2.0 * PI / naz as f64);
                }
            }
            Ok(QuadratureRule {
                nodes,
                weights,
                measure_total: 4.0 * PI,
            })
        }
        _ => Err(Error::DimUnsupported(d)),
    }
}

/// Product of the Σ rule and the fiber rule, with frames precomputed.
#[derive(Debug, Clone)]
pub struct TubeRule {
    pub points: Vec<FiberPoint>,
    pub weights: Vec<f64>,
    pub levels: Levels,
}

impl TubeRule {
    pub fn new(m: &Submanifold, levels: Levels) -> Result<TubeRule> {
        let sigma = sigma_rule(m, levels.sigma_level)?;
        let fiber = fiber_rule(m.codim(), levels.fiber_level)?;
        let mut points = Vec::with_capacity(sigma.len() * fiber.len());
        let mut weights = Vec::with_capacity(sigma.len() * fiber.len());
        for (xi, ws) in sigma.nodes.iter().zip(&sigma.weights) {
            for (om, wf) in fiber.nodes.iter().zip(&fiber.weights) {
                points.push(fiber_point(m, xi, om)?);
                weights.push(ws * wf);
            }
        }
        Ok(TubeRule {
            points,
            weights,
            levels,
        })
    }

    /// Σ_nodes w·f(node), evaluated in parallel and summed in a fixed order.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&FiberPoint) -> Result<f64> + Sync,
    {
        let vals: Vec<f64> = self
            .points
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(p, w)| f(p).map(|v| w * v))
            .collect::<Result<Vec<f64>>>()?;
        Ok(pairwise_sum(&vals))
    }

    pub fn integrate_complex<F>(&self, f: F) -> Result<Complex<f64>>
    where
        F: Fn(&FiberPoint) -> Result<Complex<f64>> + Sync,
    {
        let vals: Vec<Complex<f64>> = self
            .points
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(p, w)| f(p).map(|v| v * *w))
            .collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum_complex(&vals))
    }
}

/// Gate used by [`integrate_tube`]: relative change allowed under doubling.
pub const CONVERGENCE_GATE: f64 = 1e-8;

/// ∫∫∫ f(ξ, ω, ρ) ρ^{d-1} dρ dω dσ(ξ) over ρ ∈ [a, b], product measure.
///
/// The radial rule is composite Gauss–Legendre graded toward `a`, so
/// integrable algebraic endpoint singularities are resolved. The result at
/// `levels` is compared with doubled levels and doubled once more if needed.
pub fn integrate_tube<F>(m: &Submanifold, integrand: F, a: f64, b: f64, levels: Levels) -> Result<f64>
where
    F: Fn(&FiberPoint, f64) -> f64 + Sync,
{
    let run = |lv: Levels| -> Result<f64> {
        let rule = TubeRule::new(m, lv)?;
        let radial = graded_rule((lv.radial_points / 2).clamp(16, 32), a, b, tube_grading_depth(lv));
        let d = m.codim() as i32;
        rule.integrate(|p| {
            Ok(radial.integrate(|&rho| integrand(p, rho) * rho.powi(d - 1)))
        })
    };
    let coarse = run(levels)?;
    let fine = run(levels.doubled())?;
    let tol = |v: f64| CONVERGENCE_GATE * (1.0 + v.abs());
    if (fine - coarse).abs() <= tol(fine) {
        return Ok(fine);
    }
    let finer = run(levels.doubled().doubled())?;
    let change = (finer - fine).abs();
    if change <= tol(finer) {
        Ok(finer)
    } else {
        Err(Error::NotConverged {
            what: "tube integral".into(),
            change,
        })
    }
}

fn tube_grading_depth(lv: Levels) -> usize {
    // Radial point budget grows the number of graded panels.
    (lv.radial_points / 4).clamp(8, 32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_weight_moments() {
        for &beta in &[-0.999, -0.5, 0.0, 0.5, 2.5] {
            let (t, w) = gauss_jacobi_unit(20, beta);
            for p in 0..30 {
                let s: f64 = t.iter().zip(&w).map(|(t, w)| w * t.powi(p)).sum();
                let exact = 1.0 / (beta + p as f64 + 1.0);
                assert!(
                    (s - exact).abs() < 1e-12 * exact.max(1.0),
                    "beta {beta} p {p}: {s} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn laguerre_moments() {
        let (u, w) = gauss_laguerre(30);
        let mut fact = 1.0;
        for p in 0..20 {
            if p > 0 {
                fact *= p as f64;
            }
            let s: f64 = u.iter().zip(&w).map(|(u, w)| w * u.powi(p)).sum();
            assert!((s - fact).abs() < 1e-10 * fact, "p {p}");
        }
    }

    #[test]
    fn fp_radial_examples() {
        assert!((fp_radial(0.0, 0.5) - 0.5).abs() < 1e-15);
        assert!((fp_radial(-1.0, 0.1) + std::f64::consts::LN_10).abs() < 1e-12);
        assert!((fp_radial(-2.0, 0.5) + 2.0).abs() < 1e-15);
        let c = fp_radial_complex(Complex::new(-2.0, 0.0), 0.5);
        assert!((c.re + 2.0).abs() < 1e-14 && c.im.abs() < 1e-14);
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn fiber_rules() {
        assert_eq!(fiber_rule(1, 1).unwrap().weight_sum(), 2.0);
        let f2 = fiber_rule(2, 2).unwrap();
        let s = f2.integrate(|w| w[0] * w[0]);
        assert!((s - PI).abs() < 1e-13);
        assert!(f2.integrate(|w| w[0]).abs() < 1e-13);
        let f3 = fiber_rule(3, 2).unwrap();
        assert!((f3.weight_sum() - 4.0 * PI).abs() < 1e-12);
        assert!((f3.integrate(|w| w[2] * w[2]) - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!(matches!(fiber_rule(4, 1), Err(Error::DimUnsupported(4))));
    }

    #[test]
    fn graded_rule_handles_sqrt() {
        let r = graded_rule(16, 0.0, 1.0, 60);
        let s = r.integrate(|&x| x.sqrt());
        assert!((s - 2.0 / 3.0).abs() < 1e-14);
        let s = r.integrate(|&x| x.powf(-0.5));
        assert!((s - 2.0).abs() < 1e-8);
    }
}
