//! Analytic catalog: spheres rS^{n-1} ⊂ R^n and a circle of radius R in the
//! plane z = 0 of R^3, with closed-form geometry and reference values.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{FiberPoint, Submanifold};
use crate::quadrature::unit_sphere_area;

/// Closed-form data of a shipped shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeOracle {
    Sphere { ambient_dim: usize, radius: f64 },
    Circle3d { radius: f64 },
}

impl ShapeOracle {
    pub fn id(&self) -> String {
        match self {
            ShapeOracle::Sphere { .. } => "sphere".into(),
            ShapeOracle::Circle3d { .. } => "circle3d".into(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ShapeOracle::Sphere { ambient_dim, radius } => {
                format!("sphere(n={ambient_dim},r={radius})")
            }
            ShapeOracle::Circle3d { radius } => format!("circle3d(R={radius})"),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ShapeOracle::Sphere { ambient_dim, .. } => *ambient_dim,
            ShapeOracle::Circle3d { .. } => 3,
        }
    }

    pub fn codim(&self) -> usize {
        match self {
            ShapeOracle::Sphere { .. } => 1,
            ShapeOracle::Circle3d { .. } => 2,
        }
    }

    /// |Σ|.
    pub fn area(&self) -> f64 {
        match self {
            ShapeOracle::Sphere { ambient_dim, radius } => {
                unit_sphere_area(ambient_dim - 1) * radius.powi(*ambient_dim as i32 - 1)
            }
            ShapeOracle::Circle3d { radius } => 2.0 * std::f64::consts::PI * radius,
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ShapeOracle::Sphere { radius, .. } => x * (*radius / x.norm()),
            ShapeOracle::Circle3d { radius } => {
                let s = x[0].hypot(x[1]);
                DVector::from_vec(vec![radius * x[0] / s, radius * x[1] / s, 0.0])
            }
        }
    }

    pub fn frame(&self, xi: &DVector<f64>) -> Vec<DVector<f64>> {
        match self {
            ShapeOracle::Sphere { radius, .. } => vec![xi / *radius],
            ShapeOracle::Circle3d { radius } => vec![
                DVector::from_vec(vec![xi[0] / radius, xi[1] / radius, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 1.0]),
            ],
        }
    }

    /// Unit tangent projector at ξ.
    pub fn tangent_projector(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        match self {
            ShapeOracle::Sphere { ambient_dim, radius } => {
                DMatrix::identity(*ambient_dim, *ambient_dim) - xi * xi.transpose() / (radius * radius)
            }
            ShapeOracle::Circle3d { radius } => {
                let t = DVector::from_vec(vec![-xi[1] / radius, xi[0] / radius, 0.0]);
                &t * t.transpose()
            }
        }
    }

    /// Signed normal curvature along ω: sphere ω/r, circle ω_1/R.
    fn kappa(&self, omega: &DVector<f64>) -> f64 {
        match self {
            ShapeOracle::Sphere { radius, .. } => omega[0] / radius,
            ShapeOracle::Circle3d { radius } => omega[0] / radius,
        }
    }

    /// ∂ξ_l/∂x_i at x (row l, column i).
    pub fn jacobian_pi(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let xi = self.project(x);
        let p = self.tangent_projector(&xi);
        match self {
            ShapeOracle::Sphere { radius, .. } => p * (radius / x.norm()),
            ShapeOracle::Circle3d { radius } => p * (radius / x[0].hypot(x[1])),
        }
    }

    /// b_{l,i,q}(ξ, ω) = P_il (−κ_ω)^q.
    pub fn b_coeff(&self, l: usize, i: usize, q: usize, xi: &DVector<f64>, omega: &DVector<f64>) -> f64 {
        let p = self.tangent_projector(xi);
        p[(l, i)] * (-self.kappa(omega)).powi(q as i32)
    }

    /// Per frame vector k, the matrix with entries (i, a) = δn_{k,a}/δx_i.
    pub fn weingarten(&self, xi: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let p = self.tangent_projector(xi);
        match self {
            ShapeOracle::Sphere { radius, .. } => vec![p / *radius],
            ShapeOracle::Circle3d { radius } => vec![p / *radius, DMatrix::zeros(3, 3)],
        }
    }

    /// ∂ω_k/∂x_i at ξ + ρθ (d×n).
    pub fn omega_jacobian(&self, fp: &FiberPoint, rho: f64) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let d = self.codim();
        let mut out = DMatrix::zeros(d, n);
        if let ShapeOracle::Circle3d { .. } = self {
            for k in 0..d {
                for i in 0..n {
                    out[(k, i)] = (fp.frame.vectors[k][i] - fp.omega[k] * fp.theta[i]) / rho;
                }
            }
        }
        out
    }

    /// Coefficients of the tube Jacobian J(ξ, ω, ρ) = Σ_p J_p ρ^p of the map
    /// (ξ, ω, ρ) ↦ ξ + ρθ relative to the product measure.
    pub fn tube_jacobian_coeffs(&self, omega: &DVector<f64>) -> Vec<f64> {
        let k = self.kappa(omega);
        match self {
            ShapeOracle::Sphere { ambient_dim, .. } => {
                let e = ambient_dim - 1;
                (0..=e).map(|p| binomial(e, p) * k.powi(p as i32)).collect()
            }
            ShapeOracle::Circle3d { .. } => vec![1.0, k],
        }
    }

    pub fn tube_jacobian(&self, omega: &DVector<f64>, rho: f64) -> f64 {
        let k = self.kappa(omega);
        match self {
            ShapeOracle::Sphere { ambient_dim, .. } => (1.0 + k * rho).powi(*ambient_dim as i32 - 1),
            ShapeOracle::Circle3d { .. } => 1.0 + k * rho,
        }
    }

    /// ∂_i ln J at ξ + ρθ; its ρ-expansion is c_0 Σ_p (−κ_ω ρ)^p.
    pub fn log_jacobian_gradient(&self, fp: &FiberPoint, rho: f64, i: usize) -> f64 {
        self.log_jacobian_leading(fp, i) / (1.0 + self.kappa(&fp.omega) * rho)
    }

    /// c_0 of the ∂_i ln J expansion.
    pub fn log_jacobian_leading(&self, fp: &FiberPoint, i: usize) -> f64 {
        match self {
            ShapeOracle::Sphere { ambient_dim, radius } => {
                (*ambient_dim as f64 - 1.0) * fp.xi()[i] / (radius * radius)
            }
            ShapeOracle::Circle3d { radius } => fp.frame.vectors[0][i] / radius,
        }
    }

    pub fn curvature_along(&self, omega: &DVector<f64>) -> f64 {
        self.kappa(omega)
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Σ = rS^{n-1} ⊂ R^n with F(x) = ‖x‖² − r² and outward normal.
pub fn make_sphere(n: usize, r: f64) -> Result<Submanifold> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("sphere needs n >= 2, got {n}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("sphere radius must be positive, got {r}")));
    }
    let oracle = ShapeOracle::Sphere {
        ambient_dim: n,
        radius: r,
    };
    let m = Submanifold::new(
        n,
        1,
        r,
        Arc::new(move |x: &DVector<f64>| DVector::from_element(1, x.norm_squared() - r * r)),
    )?
    .with_jacobian(Arc::new(|x: &DVector<f64>| DMatrix::from_row_slice(1, x.len(), (x * 2.0).as_slice())))
    .with_hessians(Arc::new(move |_x: &DVector<f64>| vec![DMatrix::identity(n, n) * 2.0]))
    .with_closed_form_projection(Arc::new(move |x: &DVector<f64>| oracle.project(x)))
    .with_oracle(oracle);
    Ok(m)
}

/// Σ = {x² + y² = R², z = 0} ⊂ R^3.
pub fn make_circle3d(radius: f64) -> Result<Submanifold> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "circle radius must be positive, got {radius}"
        )));
    }
    let oracle = ShapeOracle::Circle3d { radius };
    let m = Submanifold::new(
        3,
        2,
        radius,
        Arc::new(move |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - radius * radius, x[2]])
        }),
    )?
    .with_jacobian(Arc::new(|x: &DVector<f64>| {
        DMatrix::from_row_slice(2, 3, &[2.0 * x[0], 2.0 * x[1], 0.0, 0.0, 0.0, 1.0])
    }))
    .with_hessians(Arc::new(|_x: &DVector<f64>| {
        vec![
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 0.0])),
            DMatrix::zeros(3, 3),
        ]
    }))
    .with_closed_form_projection(Arc::new(move |x: &DVector<f64>| oracle.project(x)))
    .with_oracle(oracle);
    Ok(m)
}

/// ⟨∂δ^{[j]}/∂x_i, φ_k⟩ on rS^{n-1} for test functions with expansion a = n_k δ_{j0}.
pub fn sphere_delta_derivative_oracle(n: usize, r: f64, i: usize, k: usize, j: i32) -> f64 {
    if i != k || j <= -1 || j % 2 == 1 {
        return 0.0;
    }
    let nf = n as f64;
    r.powi(n as i32 - j - 2) * unit_sphere_area(n - 1) * (1.0 / nf - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn oracle_table() {
        assert!((sphere_delta_derivative_oracle(3, 1.0, 0, 0, 0) + 8.0 * PI / 3.0).abs() < 1e-14);
        assert!((sphere_delta_derivative_oracle(3, 2.0, 1, 1, 2) + 4.0 * PI / 3.0).abs() < 1e-14);
        assert_eq!(sphere_delta_derivative_oracle(3, 2.0, 0, 1, 0), 0.0);
        assert_eq!(sphere_delta_derivative_oracle(3, 1.0, 0, 0, 1), 0.0);
        assert_eq!(sphere_delta_derivative_oracle(3, 1.0, 0, 0, -1), 0.0);
    }

    #[test]
    fn sphere_closed_forms() {
        let o = ShapeOracle::Sphere {
            ambient_dim: 3,
            radius: 1.0,
        };
        assert!((o.project(&v(&[3.0, 4.0, 0.0])) - v(&[0.6, 0.8, 0.0])).norm() < 1e-15);
        let j = o.jacobian_pi(&v(&[2.0, 0.0, 0.0]));
        assert!((j - DMatrix::from_diagonal(&v(&[0.0, 0.5, 0.5]))).norm() < 1e-15);
        let xi = v(&[0.0, 0.0, 1.0]);
        for om in [1.0, -1.0] {
            assert!((o.b_coeff(0, 0, 2, &xi, &v(&[om])) - 1.0).abs() < 1e-15);
            assert_eq!(o.b_coeff(2, 2, 3, &xi, &v(&[om])), 0.0);
        }
        let o2 = ShapeOracle::Sphere {
            ambient_dim: 3,
            radius: 2.0,
        };
        assert!((o2.b_coeff(1, 1, 1, &v(&[2.0, 0.0, 0.0]), &v(&[1.0])) + 0.5).abs() < 1e-15);
        let mu = &o2.weingarten(&v(&[2.0, 0.0, 0.0]))[0];
        assert!((mu - DMatrix::from_diagonal(&v(&[0.0, 0.5, 0.5]))).norm() < 1e-15);
        assert!((o.area() - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn circle_closed_forms() {
        let o = ShapeOracle::Circle3d { radius: 1.0 };
        let j = o.jacobian_pi(&v(&[1.5, 0.0, 0.0]));
        assert!((j[(1, 1)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(j[(0, 0)], 0.0);
        assert_eq!(j[(2, 2)], 0.0);
        assert!((o.project(&v(&[1.1, 0.0, 0.2])) - v(&[1.0, 0.0, 0.0])).norm() < 1e-15);
        assert!((o.area() - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn constructors_validate() {
        assert!(make_sphere(1, 1.0).is_err());
        assert!(make_sphere(3, 0.0).is_err());
        assert!(make_circle3d(-1.0).is_err());
    }
}
