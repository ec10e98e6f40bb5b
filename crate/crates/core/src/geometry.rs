//! Closed submanifolds given as zero sets, closest-point projection, normal
//! frames and tubular coordinates (ξ, ω, ρ).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::shapes::ShapeOracle;

pub type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type HessianMap = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

pub const PROJECTION_MAX_ITER: usize = 50;
pub const PROJECTION_TOL: f64 = 1e-12;
pub const ON_MANIFOLD_RHO: f64 = 1e-13;

/// Σ = {F = 0} ⊂ R^n with F: R^n → R^d of full rank on Σ.
#[derive(Clone)]
pub struct Submanifold {
    ambient_dim: usize,
    codim: usize,
    tube_radius: f64,
    constraint: VectorMap,
    constraint_jacobian: Option<MatrixMap>,
    constraint_hessians: Option<HessianMap>,
    closed_form_projection: Option<VectorMap>,
    oracle: Option<ShapeOracle>,
}

impl fmt::Debug for Submanifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Submanifold")
            .field("ambient_dim", &self.ambient_dim)
            .field("codim", &self.codim)
            .field("tube_radius", &self.tube_radius)
            .field("oracle", &self.oracle)
            .finish()
    }
}

impl Submanifold {
    /// Generic implicit submanifold; derivatives of F fall back to finite differences.
    pub fn new(
        ambient_dim: usize,
        codim: usize,
        tube_radius: f64,
        constraint: VectorMap,
    ) -> Result<Submanifold> {
        if ambient_dim < 2 || codim == 0 || codim >= ambient_dim {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= d < n and n >= 2, got n={ambient_dim}, d={codim}"
            )));
        }
        if !(tube_radius > 0.0 && tube_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tube radius must be positive, got {tube_radius}"
            )));
        }
        Ok(Submanifold {
            ambient_dim,
            codim,
            tube_radius,
            constraint,
            constraint_jacobian: None,
            constraint_hessians: None,
            closed_form_projection: None,
            oracle: None,
        })
    }

    pub fn with_jacobian(mut self, jac: MatrixMap) -> Self {
        self.constraint_jacobian = Some(jac);
        self
    }

    pub fn with_hessians(mut self, hess: HessianMap) -> Self {
        self.constraint_hessians = Some(hess);
        self
    }

    pub fn with_closed_form_projection(mut self, proj: VectorMap) -> Self {
        self.closed_form_projection = Some(proj);
        self
    }

    pub(crate) fn with_oracle(mut self, oracle: ShapeOracle) -> Self {
        self.oracle = Some(oracle);
        self
    }

    /// Same zero set without any shape-specific closed forms.
    pub fn generic_view(&self) -> Submanifold {
        Submanifold {
            closed_form_projection: None,
            oracle: None,
            ..self.clone()
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    pub fn oracle(&self) -> Option<&ShapeOracle> {
        self.oracle.as_ref()
    }

    pub fn has_closed_form_projection(&self) -> bool {
        self.closed_form_projection.is_some()
    }

    pub fn constraint(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.constraint)(x)
    }

    /// d×n matrix dF_x.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.constraint_jacobian {
            return j(x);
        }
        let n = self.ambient_dim;
        let h = 1e-6 * x.norm().max(1.0);
        let mut jac = DMatrix::zeros(self.codim, n);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let col = (self.constraint(&xp) - self.constraint(&xm)) / (2.0 * h);
            jac.set_column(i, &col);
        }
        jac
    }

    /// Hessians ∇²F_k, one n×n matrix per constraint.
    pub fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        if let Some(h) = &self.constraint_hessians {
            return h(x);
        }
        let n = self.ambient_dim;
        let h = 1e-5 * x.norm().max(1.0);
        let mut out = vec![DMatrix::zeros(n, n); self.codim];
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let dj = (self.jacobian(&xp) - self.jacobian(&xm)) / (2.0 * h);
            for (k, hk) in out.iter_mut().enumerate() {
                for a in 0..n {
                    hk[(a, i)] = dj[(k, a)];
                }
            }
        }
        for hk in &mut out {
            *hk = (hk.clone() + hk.transpose()) * 0.5;
        }
        out
    }
}

/// Orthonormal basis n_1..n_d of the normal space at a foot point.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFrame {
    pub base_point: DVector<f64>,
    pub vectors: Vec<DVector<f64>>,
}

impl NormalFrame {
    /// Σ_k ω_k n_k.
    pub fn combine(&self, omega: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.base_point.len());
        for (k, n) in self.vectors.iter().enumerate() {
            v.axpy(omega[k], n, 1.0);
        }
        v
    }

    /// Orthogonal projector onto T_ξΣ.
    pub fn tangent_projector(&self) -> DMatrix<f64> {
        let n = self.base_point.len();
        let mut p = DMatrix::identity(n, n);
        for v in &self.vectors {
            p -= v * v.transpose();
        }
        p
    }
}

/// (ξ, ω, ρ): foot point, frame coordinates of the fiber direction, distance.
#[derive(Debug, Clone, PartialEq)]
pub struct TubularCoordinates {
    pub foot: DVector<f64>,
    pub omega: DVector<f64>,
    pub rho: f64,
}

/// A point of Σ × S^{d-1} together with its frame and θ = Σ ω_k n_k.
#[derive(Debug, Clone)]
pub struct FiberPoint {
    pub frame: NormalFrame,
    pub omega: DVector<f64>,
    pub theta: DVector<f64>,
}

impl FiberPoint {
    pub fn xi(&self) -> &DVector<f64> {
        &self.frame.base_point
    }

    pub fn at(&self, rho: f64) -> TubePoint<'_> {
        let x = &self.frame.base_point + &self.theta * rho;
        TubePoint { fiber: self, rho, x }
    }
}

/// Ambient point x = ξ + ρθ carrying its tubular coordinates.
#[derive(Debug, Clone)]
pub struct TubePoint<'a> {
    pub fiber: &'a FiberPoint,
    pub rho: f64,
    pub x: DVector<f64>,
}

/// Builds the fiber point for a foot point on Σ and frame coordinates ω.
pub fn fiber_point(m: &Submanifold, xi: &DVector<f64>, omega: &DVector<f64>) -> Result<FiberPoint> {
    let frame = frame(m, xi)?;
    let theta = frame.combine(omega);
    Ok(FiberPoint {
        frame,
        omega: omega.clone(),
        theta,
    })
}

/// Closest point of Σ to `x` (Newton iteration on the Lagrange system).
pub fn project(m: &Submanifold, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = m.ambient_dim;
    let d = m.codim;
    let mut xi = match &m.closed_form_projection {
        Some(p) => p(x),
        None => x.clone(),
    };
    let scale = x.norm().max(1.0);
    let res_tol = PROJECTION_TOL * scale * scale;
    let step_tol = PROJECTION_TOL * scale;
    // Multiplier estimate from least squares at the initial guess.
    let mut nu = {
        let a = m.jacobian(&xi);
        let g = &a * a.transpose();
        let rhs = &a * (x - &xi);
        g.cholesky()
            .map(|c| c.solve(&rhs))
            .unwrap_or_else(|| DVector::zeros(d))
    };
    let mut residual = f64::INFINITY;
    for _ in 0..PROJECTION_MAX_ITER {
        let f = m.constraint(&xi);
        let a = m.jacobian(&xi);
        residual = f.norm();
        let mut h = DMatrix::identity(n, n);
        if nu.iter().any(|v| *v != 0.0) {
            for (k, hk) in m.hessians(&xi).iter().enumerate() {
                h += hk * nu[k];
            }
        }
        let mut kkt = DMatrix::zeros(n + d, n + d);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        kkt.view_mut((0, n), (n, d)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (d, n)).copy_from(&a);
        let mut rhs = DVector::zeros(n + d);
        rhs.rows_mut(0, n).copy_from(&(x - &xi));
        rhs.rows_mut(n, d).copy_from(&(-&f));
        let sol = kkt.lu().solve(&rhs).ok_or(Error::RankDeficient)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient);
        }
        let step = sol.rows(0, n).into_owned();
        nu = sol.rows(n, d).into_owned();
        xi += &step;
        if residual < res_tol && step.norm() < step_tol {
            return Ok(xi);
        }
    }
    Err(Error::NoConvergence {
        iterations: PROJECTION_MAX_ITER,
        residual,
    })
}

/// Gram–Schmidt of the rows of dF_ξ in constraint order.
pub fn frame(m: &Submanifold, xi: &DVector<f64>) -> Result<NormalFrame> {
    if let Some(o) = &m.oracle {
        return Ok(NormalFrame {
            base_point: xi.clone(),
            vectors: o.frame(xi),
        });
    }
    frame_from_jacobian(&m.jacobian(xi), xi)
}

/// Frame built only from dF, ignoring closed forms.
pub fn frame_numeric(m: &Submanifold, xi: &DVector<f64>) -> Result<NormalFrame> {
    frame_from_jacobian(&m.jacobian(xi), xi)
}

fn frame_from_jacobian(a: &DMatrix<f64>, xi: &DVector<f64>) -> Result<NormalFrame> {
    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(a.nrows());
    for k in 0..a.nrows() {
        let row = a.row(k).transpose();
        let scale = row.norm();
        let mut v = row.clone();
        // Two passes keep orthogonality at rounding level.
        for _ in 0..2 {
            for u in &vectors {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let nv = v.norm();
        if !(nv > 1e-12 * scale.max(1e-300)) || scale == 0.0 {
            return Err(Error::RankDeficient);
        }
        vectors.push(v / nv);
    }
    Ok(NormalFrame {
        base_point: xi.clone(),
        vectors,
    })
}

/// (ξ, ω, ρ) of a point in the tube.
pub fn tube_coords(m: &Submanifold, x: &DVector<f64>) -> Result<TubularCoordinates> {
    let (c, _) = tube_coords_with_frame(m, x)?;
    Ok(c)
}

pub(crate) fn tube_coords_with_frame(
    m: &Submanifold,
    x: &DVector<f64>,
) -> Result<(TubularCoordinates, NormalFrame)> {
    let xi = project(m, x)?;
    let diff = x - &xi;
    let rho = diff.norm();
    if rho < ON_MANIFOLD_RHO {
        return Err(Error::OnManifold { rho });
    }
    let fr = frame(m, &xi)?;
    let omega = DVector::from_iterator(m.codim, fr.vectors.iter().map(|n| n.dot(&diff) / rho));
    Ok((
        TubularCoordinates {
            foot: xi,
            omega,
            rho,
        },
        fr,
    ))
}

/// ξ + ρ Σ ω_k n_k(ξ).
pub fn embed(m: &Submanifold, c: &TubularCoordinates) -> Result<DVector<f64>> {
    let fr = frame(m, &c.foot)?;
    Ok(&c.foot + fr.combine(&c.omega) * c.rho)
}

/// ∇ρ = Σ ω_k n_k(ξ_x).
pub fn grad_rho(m: &Submanifold, x: &DVector<f64>) -> Result<DVector<f64>> {
    let (c, fr) = tube_coords_with_frame(m, x)?;
    Ok(fr.combine(&c.omega))
}

/// Fiber point and distance of an ambient point.
pub fn locate(m: &Submanifold, x: &DVector<f64>) -> Result<(FiberPoint, f64)> {
    let (c, fr) = tube_coords_with_frame(m, x)?;
    let theta = fr.combine(&c.omega);
    Ok((
        FiberPoint {
            frame: fr,
            omega: c.omega,
            theta,
        },
        c.rho,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{make_circle3d, make_sphere};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn sphere_projection_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        let xi = project(&s, &v(&[0.9, 0.0, 0.0])).unwrap();
        assert!((xi - v(&[1.0, 0.0, 0.0])).norm() < 1e-14);
        let g = s.generic_view();
        let xi = project(&g, &v(&[2.0, 0.0, 0.0])).unwrap();
        assert!((xi - v(&[1.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn circle_projection_generic() {
        let c = make_circle3d(1.0).unwrap().generic_view();
        let xi = project(&c, &v(&[1.0, 0.0, 0.3])).unwrap();
        assert!((xi - v(&[1.0, 0.0, 0.0])).norm() < 1e-12);
        // near the edge of the tube the Newton iteration still converges
        let xi = project(&c, &v(&[0.15, 0.05, 0.2])).unwrap();
        let exact = v(&[0.15, 0.05, 0.0]).normalize();
        assert!((xi - exact).norm() < 1e-10);
    }

    #[test]
    fn frames() {
        let s = make_sphere(3, 2.0).unwrap();
        let f = frame_numeric(&s, &v(&[0.0, 2.0, 0.0])).unwrap();
        assert!((&f.vectors[0] - v(&[0.0, 1.0, 0.0])).norm() < 1e-14);
        let c = make_circle3d(1.0).unwrap();
        let f = frame_numeric(&c, &v(&[1.0, 0.0, 0.0])).unwrap();
        assert!((&f.vectors[0] - v(&[1.0, 0.0, 0.0])).norm() < 1e-14);
        assert!((&f.vectors[1] - v(&[0.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn tube_coordinates_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        let c = tube_coords(&s, &v(&[1.2, 0.0, 0.0])).unwrap();
        assert!((c.rho - 0.2).abs() < 1e-14 && (c.omega[0] - 1.0).abs() < 1e-14);
        let c = tube_coords(&s, &v(&[0.8, 0.0, 0.0])).unwrap();
        assert!((c.rho - 0.2).abs() < 1e-14 && (c.omega[0] + 1.0).abs() < 1e-14);
        assert!(matches!(
            tube_coords(&s, &v(&[1.0, 0.0, 0.0])),
            Err(Error::OnManifold { .. })
        ));
        let circ = make_circle3d(1.0).unwrap();
        let c = tube_coords(&circ, &v(&[1.1, 0.0, 0.1])).unwrap();
        let h = 0.5f64.sqrt();
        assert!((c.rho - 0.02f64.sqrt()).abs() < 1e-14);
        assert!((c.omega[0] - h).abs() < 1e-13 && (c.omega[1] - h).abs() < 1e-13);
        let x = embed(
            &circ,
            &TubularCoordinates {
                foot: v(&[1.0, 0.0, 0.0]),
                omega: v(&[0.0, 1.0]),
                rho: 0.2,
            },
        )
        .unwrap();
        assert!((x - v(&[1.0, 0.0, 0.2])).norm() < 1e-15);
    }

    #[test]
    fn grad_rho_examples() {
        let s = make_sphere(3, 1.0).unwrap();
        assert!((grad_rho(&s, &v(&[1.5, 0.0, 0.0])).unwrap() - v(&[1.0, 0.0, 0.0])).norm() < 1e-14);
        assert!((grad_rho(&s, &v(&[0.5, 0.0, 0.0])).unwrap() - v(&[-1.0, 0.0, 0.0])).norm() < 1e-14);
        let c = make_circle3d(1.0).unwrap();
        assert!((grad_rho(&c, &v(&[1.0, 0.0, 0.3])).unwrap() - v(&[0.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let f: VectorMap = Arc::new(|x: &DVector<f64>| x.clone());
        assert!(Submanifold::new(3, 3, 1.0, f.clone()).is_err());
        assert!(Submanifold::new(3, 1, -1.0, f).is_err());
    }
}
