//! δ-derivatives on Σ, normal derivatives D_n^α, the Jacobian of π, the b
//! coefficients of its ρ-expansion, θ and second-fundamental-form data.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{fiber_point, frame_numeric, project, FiberPoint, Submanifold};

/// Relative step of first-order central differences.
pub const FD_STEP: f64 = 1e-5;
/// Steps of D_n^α by total order |α| = 1, 2, 3.
pub const NORMAL_STEPS: [f64; 3] = [1e-4, 1e-3, 1e-2];
/// Steps when the differentiated field is itself a finite difference.
pub const NESTED_STEPS: [f64; 2] = [1e-3, 1e-2];
pub const MAX_NUMERIC_ORDER: usize = 3;
pub const MAX_NUMERIC_B_ORDER: usize = 2;

/// Value of a function on Σ × S^{d-1} with its δ-derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    /// δa/δξ_i, tangential.
    pub d_xi: DVector<f64>,
    /// δa/δω_k, tangential to the fiber sphere.
    pub d_omega: DVector<f64>,
}

impl Jet {
    pub fn zero(n: usize, d: usize) -> Jet {
        Jet {
            value: 0.0,
            d_xi: DVector::zeros(n),
            d_omega: DVector::zeros(d),
        }
    }

    pub fn constant(c: f64, n: usize, d: usize) -> Jet {
        Jet {
            value: c,
            ..Jet::zero(n, d)
        }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            value: self.value * c,
            d_xi: &self.d_xi * c,
            d_omega: &self.d_omega * c,
        }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet {
            value: self.value + o.value,
            d_xi: &self.d_xi + &o.d_xi,
            d_omega: &self.d_omega + &o.d_omega,
        }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        Jet {
            value: self.value * o.value,
            d_xi: &self.d_xi * o.value + &o.d_xi * self.value,
            d_omega: &self.d_omega * o.value + &o.d_omega * self.value,
        }
    }
}

pub type FiberFn = Arc<dyn Fn(&FiberPoint) -> f64 + Send + Sync>;

/// Functions a(ξ, ω) on Σ × S^{d-1}; ω is in frame coordinates.
#[derive(Clone)]
pub enum SurfaceFunction {
    Constant(f64),
    /// Σ c ω^a with one exponent per fiber slot.
    OmegaPoly(Vec<(f64, Vec<u32>)>),
    /// Component `axis` of the frame vector n_slot(ξ).
    NormalComponent { slot: usize, axis: usize },
    /// θ_axis = Σ_k ω_k n_{k,axis}(ξ).
    Theta { axis: usize },
    /// ξ_axis.
    Coordinate { axis: usize },
    Sum(Vec<SurfaceFunction>),
    Product(Vec<SurfaceFunction>),
    Scaled(f64, Box<SurfaceFunction>),
    /// Callback without analytic derivatives.
    Custom { label: String, f: FiberFn },
}

impl fmt::Debug for SurfaceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl SurfaceFunction {
    pub fn omega_monomial(coeff: f64, powers: Vec<u32>) -> Self {
        SurfaceFunction::OmegaPoly(vec![(coeff, powers)])
    }

    pub fn custom(label: &str, f: impl Fn(&FiberPoint) -> f64 + Send + Sync + 'static) -> Self {
        SurfaceFunction::Custom {
            label: label.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SurfaceFunction::Constant(c) => format!("{c}"),
            SurfaceFunction::OmegaPoly(terms) => terms
                .iter()
                .map(|(c, p)| {
                    let mono: Vec<String> = p
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| **e > 0)
                        .map(|(k, e)| if *e == 1 { format!("w{}", k + 1) } else { format!("w{}^{e}", k + 1) })
                        .collect();
                    if mono.is_empty() {
                        format!("{c}")
                    } else {
                        format!("{c}*{}", mono.join("*"))
                    }
                })
                .collect::<Vec<_>>()
                .join("+"),
            SurfaceFunction::NormalComponent { slot, axis } => format!("n{}_{}", slot + 1, axis + 1),
            SurfaceFunction::Theta { axis } => format!("theta{}", axis + 1),
            SurfaceFunction::Coordinate { axis } => format!("xi{}", axis + 1),
            SurfaceFunction::Sum(fs) => fs.iter().map(|f| f.label()).collect::<Vec<_>>().join("+"),
            SurfaceFunction::Product(fs) => fs
                .iter()
                .map(|f| format!("({})", f.label()))
                .collect::<Vec<_>>()
                .join("*"),
            SurfaceFunction::Scaled(c, f) => format!("{c}*({})", f.label()),
            SurfaceFunction::Custom { label, .. } => label.clone(),
        }
    }

    pub fn value(&self, p: &FiberPoint) -> f64 {
        match self {
            SurfaceFunction::Constant(c) => *c,
            SurfaceFunction::OmegaPoly(terms) => terms
                .iter()
                .map(|(c, pw)| c * pw.iter().enumerate().map(|(k, e)| p.omega[k].powi(*e as i32)).product::<f64>())
                .sum(),
            SurfaceFunction::NormalComponent { slot, axis } => p.frame.vectors[*slot][*axis],
            SurfaceFunction::Theta { axis } => p.theta[*axis],
            SurfaceFunction::Coordinate { axis } => p.xi()[*axis],
            SurfaceFunction::Sum(fs) => fs.iter().map(|f| f.value(p)).sum(),
            SurfaceFunction::Product(fs) => fs.iter().map(|f| f.value(p)).product(),
            SurfaceFunction::Scaled(c, f) => c * f.value(p),
            SurfaceFunction::Custom { f, .. } => f(p),
        }
    }

    /// Value and δ-derivatives; analytic except for callbacks.
    pub fn jet(&self, m: &Submanifold, p: &FiberPoint) -> Result<Jet> {
        let n = m.ambient_dim();
        let d = m.codim();
        Ok(match self {
            SurfaceFunction::Constant(c) => Jet::constant(*c, n, d),
            SurfaceFunction::OmegaPoly(terms) => {
                let mut raw = DVector::zeros(d);
                for (c, pw) in terms {
                    for k in 0..d {
                        if pw[k] == 0 {
                            continue;
                        }
                        let mut t = c * pw[k] as f64;
                        for (h, e) in pw.iter().enumerate() {
                            let e = if h == k { *e as i32 - 1 } else { *e as i32 };
                            t *= p.omega[h].powi(e);
                        }
                        raw[k] += t;
                    }
                }
                Jet {
                    value: self.value(p),
                    d_xi: DVector::zeros(n),
                    d_omega: sphere_tangential(&raw, &p.omega),
                }
            }
            SurfaceFunction::NormalComponent { slot, axis } => {
                let w = weingarten(m, p.xi())?;
                Jet {
                    value: self.value(p),
                    d_xi: w[*slot].column(*axis).into_owned(),
                    d_omega: DVector::zeros(d),
                }
            }
            SurfaceFunction::Theta { axis } => {
                let w = weingarten(m, p.xi())?;
                let mut dx = DVector::zeros(n);
                for (h, wh) in w.iter().enumerate() {
                    dx.axpy(p.omega[h], &wh.column(*axis), 1.0);
                }
                let raw = DVector::from_iterator(d, p.frame.vectors.iter().map(|v| v[*axis]));
                Jet {
                    value: self.value(p),
                    d_xi: dx,
                    d_omega: sphere_tangential(&raw, &p.omega),
                }
            }
            SurfaceFunction::Coordinate { axis } => Jet {
                value: self.value(p),
                d_xi: p.frame.tangent_projector().column(*axis).into_owned(),
                d_omega: DVector::zeros(d),
            },
            SurfaceFunction::Sum(fs) => {
                let mut acc = Jet::zero(n, d);
                for f in fs {
                    acc = acc.add(&f.jet(m, p)?);
                }
                acc
            }
            SurfaceFunction::Product(fs) => {
                let mut acc = Jet::constant(1.0, n, d);
                for f in fs {
                    acc = acc.mul(&f.jet(m, p)?);
                }
                acc
            }
            SurfaceFunction::Scaled(c, f) => f.jet(m, p)?.scale(*c),
            SurfaceFunction::Custom { f, .. } => {
                let g = |q: &FiberPoint| Ok(f(q));
                numeric_jet(m, &g, p)?
            }
        })
    }
}

/// v − ω(ω·v).
pub fn sphere_tangential(v: &DVector<f64>, omega: &DVector<f64>) -> DVector<f64> {
    v - omega * omega.dot(v)
}

/// Value and δ-derivatives of a callback by central differences.
pub fn numeric_jet(
    m: &Submanifold,
    f: &dyn Fn(&FiberPoint) -> Result<f64>,
    p: &FiberPoint,
) -> Result<Jet> {
    let n = m.ambient_dim();
    let d = m.codim();
    let mut d_xi = DVector::zeros(n);
    for i in 0..n {
        d_xi[i] = delta_derivative_fn(m, f, p, i)?;
    }
    let mut d_omega = DVector::zeros(d);
    if d > 1 {
        for k in 0..d {
            d_omega[k] = delta_derivative_omega_fn(m, f, p, k)?;
        }
    }
    Ok(Jet {
        value: f(p)?,
        d_xi,
        d_omega,
    })
}

/// δf/δx_i at ξ: derivative of t ↦ f(π(ξ + t e_i), ω) at t = 0.
pub fn delta_derivative(m: &Submanifold, f: &SurfaceFunction, p: &FiberPoint, i: usize) -> Result<f64> {
    delta_derivative_fn(m, &|q: &FiberPoint| Ok(f.value(q)), p, i)
}

pub fn delta_derivative_fn(
    m: &Submanifold,
    f: &dyn Fn(&FiberPoint) -> Result<f64>,
    p: &FiberPoint,
    i: usize,
) -> Result<f64> {
    let h = FD_STEP * p.xi().norm().max(1.0);
    let shifted = |t: f64| -> Result<f64> {
        let mut x = p.xi().clone();
        x[i] += t;
        let xi = project(m, &x)?;
        f(&fiber_point(m, &xi, &p.omega)?)
    };
    Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
}

/// δa/δω_k: derivative of t ↦ a(ξ, (ω + t e_k)/‖ω + t e_k‖) at t = 0.
pub fn delta_derivative_omega(m: &Submanifold, a: &SurfaceFunction, p: &FiberPoint, k: usize) -> Result<f64> {
    delta_derivative_omega_fn(m, &|q: &FiberPoint| Ok(a.value(q)), p, k)
}

pub fn delta_derivative_omega_fn(
    _m: &Submanifold,
    f: &dyn Fn(&FiberPoint) -> Result<f64>,
    p: &FiberPoint,
    k: usize,
) -> Result<f64> {
    let h = FD_STEP;
    let shifted = |t: f64| -> Result<f64> {
        let mut om = p.omega.clone();
        om[k] += t;
        let om = om.normalize();
        let theta = p.frame.combine(&om);
        f(&FiberPoint {
            frame: p.frame.clone(),
            omega: om,
            theta,
        })
    };
    Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
}

fn stencil(order: usize) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        _ => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
    }
}

fn tensor_difference(
    phi: &dyn Fn(&DVector<f64>) -> Result<f64>,
    xi: &DVector<f64>,
    normals: &[DVector<f64>],
    alpha: &[usize],
    h: f64,
) -> Result<f64> {
    // Enumerate the tensor-product stencil slot by slot.
    let mut acc = 0.0;
    let mut idx = vec![0usize; alpha.len()];
    let stencils: Vec<&[(i32, f64)]> = alpha.iter().map(|&a| stencil(a)).collect();
    loop {
        let mut x = xi.clone();
        let mut w = 1.0;
        for (k, st) in stencils.iter().enumerate() {
            let (off, c) = st[idx[k]];
            w *= c;
            x.axpy(off as f64 * h, &normals[k], 1.0);
        }
        acc += w * phi(&x)?;
        let mut k = 0;
        loop {
            if k == idx.len() {
                let q: usize = alpha.iter().sum();
                return Ok(acc / h.powi(q as i32));
            }
            idx[k] += 1;
            if idx[k] < stencils[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// D_n^α φ(ξ) = ∂^α_y φ(ξ + Σ y_k n_k(ξ)) at y = 0.
pub fn normal_derivative(
    m: &Submanifold,
    phi: &dyn Fn(&DVector<f64>) -> Result<f64>,
    xi: &DVector<f64>,
    alpha: &[usize],
) -> Result<f64> {
    let q: usize = alpha.iter().sum();
    if q > MAX_NUMERIC_ORDER {
        return Err(Error::OrderTooHigh {
            order: q,
            max: MAX_NUMERIC_ORDER,
        });
    }
    if q == 0 {
        return phi(xi);
    }
    let h = NORMAL_STEPS[q - 1] * xi.norm().max(1.0);
    normal_derivative_with_step(m, phi, xi, alpha, h)
}

fn normal_derivative_with_step(
    m: &Submanifold,
    phi: &dyn Fn(&DVector<f64>) -> Result<f64>,
    xi: &DVector<f64>,
    alpha: &[usize],
    h: f64,
) -> Result<f64> {
    if alpha.len() != m.codim() {
        return Err(Error::InvalidArgument(format!(
            "multi-index has {} slots, codimension is {}",
            alpha.len(),
            m.codim()
        )));
    }
    let fr = crate::geometry::frame(m, xi)?;
    let coarse = tensor_difference(phi, xi, &fr.vectors, alpha, h)?;
    let fine = tensor_difference(phi, xi, &fr.vectors, alpha, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// ∂ξ_l/∂x_i by central differences of the projection (row l, column i).
pub fn jacobian_pi_numeric(m: &Submanifold, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = m.ambient_dim();
    let h = FD_STEP * x.norm().max(1.0);
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let col = (project(m, &xp)? - project(m, &xm)?) / (2.0 * h);
        j.set_column(i, &col);
    }
    Ok(j)
}

/// Closed form when the shape has one, otherwise [`jacobian_pi_numeric`].
pub fn jacobian_pi(m: &Submanifold, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    match m.oracle() {
        Some(o) => Ok(o.jacobian_pi(x)),
        None => jacobian_pi_numeric(m, x),
    }
}

/// Multi-indices α over `d` slots with |α| = q.
pub fn multi_indices(d: usize, q: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![q]];
    }
    let mut out = Vec::new();
    for first in (0..=q).rev() {
        for mut rest in multi_indices(d - 1, q - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn multi_factorial(alpha: &[usize]) -> f64 {
    alpha
        .iter()
        .map(|&a| (1..=a).map(|k| k as f64).product::<f64>())
        .product()
}

pub fn omega_power(omega: &DVector<f64>, alpha: &[usize]) -> f64 {
    alpha.iter().enumerate().map(|(k, &a)| omega[k].powi(a as i32)).product()
}

/// b_{l,i,q} = Σ_{|α|=q} ω^α/α! D_n^α(∂ξ_l/∂x_i), nested differences.
pub fn b_coeff_numeric(m: &Submanifold, l: usize, i: usize, q: usize, p: &FiberPoint) -> Result<f64> {
    if q > MAX_NUMERIC_B_ORDER {
        return Err(Error::OrderTooHigh {
            order: q,
            max: MAX_NUMERIC_B_ORDER,
        });
    }
    if q == 0 {
        return Ok(if l == i { 1.0 } else { 0.0 } - crate::geometry::frame(m, p.xi())?
            .vectors
            .iter()
            .map(|v| v[l] * v[i])
            .sum::<f64>());
    }
    let field = |x: &DVector<f64>| -> Result<f64> { Ok(jacobian_pi_numeric(m, x)?[(l, i)]) };
    let h = NESTED_STEPS[q - 1] * p.xi().norm().max(1.0);
    let mut total = 0.0;
    for alpha in multi_indices(m.codim(), q) {
        let w = omega_power(&p.omega, &alpha) / multi_factorial(&alpha);
        if w == 0.0 {
            continue;
        }
        total += w * normal_derivative_with_step(m, &field, p.xi(), &alpha, h)?;
    }
    Ok(total)
}

/// Closed form when available (any q), otherwise [`b_coeff_numeric`].
pub fn b_coeff(m: &Submanifold, l: usize, i: usize, q: usize, p: &FiberPoint) -> Result<f64> {
    match m.oracle() {
        Some(o) => Ok(o.b_coeff(l, i, q, p.xi(), &p.omega)),
        None => b_coeff_numeric(m, l, i, q, p),
    }
}

/// θ_i(ξ, ω) = Σ_k ω_k n_{k,i}(ξ).
pub fn theta(m: &Submanifold, xi: &DVector<f64>, omega: &DVector<f64>, i: usize) -> Result<f64> {
    let fr = crate::geometry::frame(m, xi)?;
    Ok(fr.combine(omega)[i])
}

/// Per frame vector k, entries (i, a) = δn_{k,a}/δx_i by central differences.
pub fn weingarten_numeric(m: &Submanifold, xi: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    let n = m.ambient_dim();
    let d = m.codim();
    let h = FD_STEP * xi.norm().max(1.0);
    let mut out = vec![DMatrix::zeros(n, n); d];
    for i in 0..n {
        let at = |t: f64| -> Result<Vec<DVector<f64>>> {
            let mut x = xi.clone();
            x[i] += t;
            let foot = project(m, &x)?;
            Ok(frame_numeric(m, &foot)?.vectors)
        };
        let plus = at(h)?;
        let minus = at(-h)?;
        for k in 0..d {
            let col = (&plus[k] - &minus[k]) / (2.0 * h);
            for a in 0..n {
                out[k][(i, a)] = col[a];
            }
        }
    }
    Ok(out)
}

pub fn weingarten(m: &Submanifold, xi: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    match m.oracle() {
        Some(o) => Ok(o.weingarten(xi)),
        None => weingarten_numeric(m, xi),
    }
}

/// μ and mean curvature of a hypersurface at ξ.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondFundamentalData {
    pub base_point: DVector<f64>,
    /// μ_ik = δn_k/δx_i.
    pub mu: DMatrix<f64>,
    pub mean_curvature: f64,
}

fn second_fundamental_from(m: &Submanifold, xi: &DVector<f64>, mu: DMatrix<f64>) -> SecondFundamentalData {
    let h = mu.trace() / (m.ambient_dim() as f64 - 1.0);
    SecondFundamentalData {
        base_point: xi.clone(),
        mu,
        mean_curvature: h,
    }
}

pub fn second_fundamental(m: &Submanifold, xi: &DVector<f64>) -> Result<SecondFundamentalData> {
    if m.codim() != 1 {
        return Err(Error::CodimUnsupported(m.codim()));
    }
    let mu = weingarten(m, xi)?.remove(0);
    Ok(second_fundamental_from(m, xi, mu))
}

pub fn second_fundamental_numeric(m: &Submanifold, xi: &DVector<f64>) -> Result<SecondFundamentalData> {
    if m.codim() != 1 {
        return Err(Error::CodimUnsupported(m.codim()));
    }
    let mu = weingarten_numeric(m, xi)?.remove(0);
    Ok(second_fundamental_from(m, xi, mu))
}

/// ∂ω_k/∂x_i at ξ + ρθ (d×n):
/// (n_{k,i} − ω_k θ_i)/ρ + Σ_l (W_k θ)_l ∂ξ_l/∂x_i.
pub fn omega_jacobian(m: &Submanifold, p: &FiberPoint, rho: f64) -> Result<DMatrix<f64>> {
    if let Some(o) = m.oracle() {
        return Ok(o.omega_jacobian(p, rho));
    }
    omega_jacobian_numeric(m, p, rho)
}

pub fn omega_jacobian_numeric(m: &Submanifold, p: &FiberPoint, rho: f64) -> Result<DMatrix<f64>> {
    let n = m.ambient_dim();
    let d = m.codim();
    let w = weingarten_numeric(m, p.xi())?;
    let x = p.xi() + &p.theta * rho;
    let jp = jacobian_pi_numeric(m, &x)?;
    let mut out = DMatrix::zeros(d, n);
    for k in 0..d {
        let wt = &w[k] * &p.theta;
        let rot = jp.transpose() * wt;
        for i in 0..n {
            out[(k, i)] = (p.frame.vectors[k][i] - p.omega[k] * p.theta[i]) / rho + rot[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{make_circle3d, make_sphere};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn delta_derivative_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        let f = SurfaceFunction::Coordinate { axis: 0 };
        let p = fiber_point(&s, &v(&[0.0, 0.0, 1.0]), &v(&[1.0])).unwrap();
        assert!((delta_derivative(&s, &f, &p, 0).unwrap() - 1.0).abs() < 1e-9);
        let p = fiber_point(&s, &v(&[1.0, 0.0, 0.0]), &v(&[1.0])).unwrap();
        assert!(delta_derivative(&s, &f, &p, 0).unwrap().abs() < 1e-9);
        let c = SurfaceFunction::Constant(3.0);
        assert_eq!(delta_derivative(&s, &c, &p, 2).unwrap(), 0.0);
    }

    #[test]
    fn omega_derivative_examples() {
        let c = make_circle3d(1.0).unwrap();
        let a = SurfaceFunction::omega_monomial(1.0, vec![1, 0]);
        let p = fiber_point(&c, &v(&[1.0, 0.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert!((delta_derivative_omega(&c, &a, &p, 0).unwrap() - 1.0).abs() < 1e-9);
        let p = fiber_point(&c, &v(&[1.0, 0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert!(delta_derivative_omega(&c, &a, &p, 0).unwrap().abs() < 1e-9);
        assert!((a.jet(&c, &p).unwrap().d_omega[0]).abs() < 1e-15);
    }

    #[test]
    fn normal_derivative_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        let xi = v(&[1.0, 0.0, 0.0]);
        let sq = |x: &DVector<f64>| Ok(x[0] * x[0]);
        assert!((normal_derivative(&s, &sq, &xi, &[2]).unwrap() - 2.0).abs() < 1e-7);
        let ex = |x: &DVector<f64>| Ok(x[0].exp());
        let e = std::f64::consts::E;
        assert!((normal_derivative(&s, &ex, &xi, &[1]).unwrap() - e).abs() < 1e-6);
        assert!((normal_derivative(&s, &ex, &xi, &[3]).unwrap() - e).abs() < 1e-6);
        assert!(matches!(
            normal_derivative(&s, &ex, &xi, &[4]),
            Err(Error::OrderTooHigh { .. })
        ));
        let c = make_circle3d(1.0).unwrap();
        let z = |x: &DVector<f64>| Ok(x[2]);
        assert!((normal_derivative(&c, &z, &xi, &[0, 1]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn jacobian_pi_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        let j = jacobian_pi_numeric(&s, &v(&[2.0, 0.0, 0.0])).unwrap();
        assert!((j - DMatrix::from_diagonal(&v(&[0.0, 0.5, 0.5]))).norm() < 1e-8);
        let j = jacobian_pi_numeric(&s, &v(&[1.0, 0.0, 0.0])).unwrap();
        assert!((j - DMatrix::from_diagonal(&v(&[0.0, 1.0, 1.0]))).norm() < 1e-8);
        let c = make_circle3d(1.0).unwrap();
        let j = jacobian_pi_numeric(&c, &v(&[1.5, 0.0, 0.0])).unwrap();
        assert!((j[(1, 1)] - 2.0 / 3.0).abs() < 1e-8);
        assert!(j[(0, 0)].abs() < 1e-8 && j[(2, 2)].abs() < 1e-8);
    }

    #[test]
    fn b_coeff_numeric_matches_closed_form() {
        let s = make_sphere(3, 1.0).unwrap();
        let p = fiber_point(&s, &v(&[0.0, 0.0, 1.0]), &v(&[-1.0])).unwrap();
        let b = b_coeff_numeric(&s, 0, 0, 2, &p).unwrap();
        assert!((b - 1.0).abs() < 1e-4, "{b}");
        let b = b_coeff_numeric(&s, 2, 2, 1, &p).unwrap();
        assert!(b.abs() < 1e-6);
        assert!(matches!(b_coeff_numeric(&s, 0, 0, 3, &p), Err(Error::OrderTooHigh { .. })));
        let s2 = make_sphere(3, 2.0).unwrap();
        let p = fiber_point(&s2, &v(&[2.0, 0.0, 0.0]), &v(&[1.0])).unwrap();
        let b = b_coeff_numeric(&s2, 1, 1, 1, &p).unwrap();
        assert!((b + 0.5).abs() < 1e-6, "{b}");
    }

    #[test]
    fn theta_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        assert_eq!(theta(&s, &v(&[0.0, 1.0, 0.0]), &v(&[1.0]), 1).unwrap(), 1.0);
        assert_eq!(theta(&s, &v(&[0.0, 1.0, 0.0]), &v(&[-1.0]), 1).unwrap(), -1.0);
        let c = make_circle3d(1.0).unwrap();
        assert_eq!(theta(&c, &v(&[1.0, 0.0, 0.0]), &v(&[0.0, 1.0]), 2).unwrap(), 1.0);
    }

    #[test]
    fn second_fundamental_examples() {
        let s = make_sphere(3, 2.0).unwrap();
        let sf = second_fundamental_numeric(&s, &v(&[2.0, 0.0, 0.0])).unwrap();
        assert!((sf.mu - DMatrix::from_diagonal(&v(&[0.0, 0.5, 0.5]))).norm() < 1e-8);
        assert!((sf.mean_curvature - 0.5).abs() < 1e-8);
        let big = make_sphere(3, 100.0).unwrap();
        let sf = second_fundamental_numeric(&big, &v(&[0.0, 100.0, 0.0])).unwrap();
        assert!((sf.mean_curvature - 0.01).abs() < 1e-6);
        let c = make_circle3d(1.0).unwrap();
        assert!(matches!(
            second_fundamental(&c, &v(&[1.0, 0.0, 0.0])),
            Err(Error::CodimUnsupported(2))
        ));
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(1, 3), vec![vec![3]]);
        assert_eq!(multi_indices(3, 1).len(), 3);
    }
}
