//! Riemannian manifolds in a global trivialization.
//!
//! Every manifold here is parallelizable, so tangent vectors are plain
//! length-n coordinate vectors in one declared global frame (standard basis
//! for R^n, body coordinates for SO(3)). The connection enters as a bilinear
//! map B so that, for a vector field k, `grad_v k = Dk(v) + B(v, k)` in the
//! trivialization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Central-difference step for directional derivatives of user vector fields.
pub const FD_STEP: f64 = 1e-6;

/// A manifold presented in a global trivialization: metric, connection
/// bilinear map, and retraction. Instances are immutable and thread-safe.
pub trait Manifold: Send + Sync {
    type Point: Clone + Send + Sync;

    fn dim(&self) -> usize;

    /// Symmetric positive-definite metric matrix M(p) in the global frame.
    fn metric(&self, p: &Self::Point) -> DMatrix<f64>;

    /// Connection bilinear map B(p; u, v), so grad_u v = Dv(u) + B(u, v).
    fn connection(&self, p: &Self::Point, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// Flow from p along u for time t (exponential map for SO(3), straight
    /// line for R^n).
    fn retract(&self, p: &Self::Point, u: &DVector<f64>, t: f64) -> Self::Point;

    /// Inverse differential of the retraction's local chart at coordinate u,
    /// applied to w. Identity for flat space; the truncated dexp-inverse
    /// series for Lie groups. Used by the Munthe-Kaas integrator.
    fn dexp_inv(&self, _u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        w.clone()
    }

    /// Re-impose point-representation constraints when drift accumulates.
    fn reproject(&self, p: Self::Point) -> Self::Point {
        p
    }

    /// Violation of the point-representation constraints (0 for R^n).
    fn point_defect(&self, _p: &Self::Point) -> f64 {
        0.0
    }
}

/// Lower the index: flat(v) = M(p) v.
pub fn flat<M: Manifold>(m: &M, p: &M::Point, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(m.dim(), v.len())?;
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { context: "flat argument" });
    }
    Ok(m.metric(p) * v)
}

/// Raise the index: sharp(w) = M(p)^{-1} w.
pub fn sharp<M: Manifold>(m: &M, p: &M::Point, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(m.dim(), w.len())?;
    if !w.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { context: "sharp argument" });
    }
    let metric = m.metric(p);
    if metric.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    metric
        .lu()
        .solve(w)
        .ok_or(Error::NotPositiveDefinite)
}

/// Riemannian gradient of a function with differential dh at p.
pub fn riemannian_grad<M: Manifold>(m: &M, p: &M::Point, dh: &DVector<f64>) -> Result<DVector<f64>> {
    sharp(m, p, dh)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// A vector field on the manifold, evaluated in trivialized coordinates.
///
/// The directional derivative defaults to central finite differences along
/// the retraction; fields with a known analytic derivative override it.
pub trait VectorField<M: Manifold>: Send + Sync {
    fn eval(&self, m: &M, p: &M::Point) -> Result<DVector<f64>>;

    fn directional_derivative(
        &self,
        m: &M,
        p: &M::Point,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let fwd = self.eval(m, &m.retract(p, v, FD_STEP))?;
        let bwd = self.eval(m, &m.retract(p, v, -FD_STEP))?;
        Ok((fwd - bwd) / (2.0 * FD_STEP))
    }
}

/// Vector field defined by a closure (finite-difference derivative).
pub struct ClosureField<M: Manifold> {
    f: Box<dyn Fn(&M, &M::Point) -> Result<DVector<f64>> + Send + Sync>,
}

impl<M: Manifold> ClosureField<M> {
    pub fn new(f: impl Fn(&M, &M::Point) -> Result<DVector<f64>> + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl<M: Manifold> VectorField<M> for ClosureField<M> {
    fn eval(&self, m: &M, p: &M::Point) -> Result<DVector<f64>> {
        (self.f)(m, p)
    }
}

/// Covariant derivative of a vector field along v at p:
/// Dk(v) + B(p; v, k(p)).
pub fn covariant_derivative_of_field<M: Manifold>(
    m: &M,
    p: &M::Point,
    v: &DVector<f64>,
    field: &dyn VectorField<M>,
) -> Result<DVector<f64>> {
    let dk = field.directional_derivative(m, p, v)?;
    let k = field.eval(m, p)?;
    let out = dk + m.connection(p, v, &k);
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { context: "covariant derivative" });
    }
    Ok(out)
}

/// Covariant derivative of a constant-coefficient projection tensor applied
/// to e: (grad_v proj)(e) = B(v, proj e) - proj B(v, e).
pub fn covariant_derivative_of_projection<M: Manifold>(
    m: &M,
    p: &M::Point,
    v: &DVector<f64>,
    proj: &DMatrix<f64>,
    e: &DVector<f64>,
) -> Result<DVector<f64>> {
    let defect = (proj * proj - proj).norm();
    if defect > 1e-10 {
        return Err(Error::NotIdempotent);
    }
    let projected = proj * e;
    Ok(m.connection(p, v, &projected) - proj * m.connection(p, v, e))
}

/// Flat R^n with a constant metric (mass matrix). B vanishes identically and
/// the retraction is a straight line.
#[derive(Debug, Clone)]
pub struct EuclideanSpace {
    metric: DMatrix<f64>,
}

impl EuclideanSpace {
    pub fn new(metric: DMatrix<f64>) -> Result<Self> {
        if metric.nrows() != metric.ncols() {
            return Err(Error::DimensionMismatch {
                expected: metric.nrows(),
                got: metric.ncols(),
            });
        }
        if (metric.transpose() - &metric).norm() > 1e-12 * metric.norm().max(1.0)
            || metric.clone().cholesky().is_none()
        {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { metric })
    }

    pub fn standard(dim: usize) -> Self {
        Self { metric: DMatrix::identity(dim, dim) }
    }
}

impl Manifold for EuclideanSpace {
    type Point = DVector<f64>;

    fn dim(&self) -> usize {
        self.metric.nrows()
    }

    fn metric(&self, _p: &Self::Point) -> DMatrix<f64> {
        self.metric.clone()
    }

    fn connection(&self, _p: &Self::Point, _u: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    fn retract(&self, p: &Self::Point, u: &DVector<f64>, t: f64) -> Self::Point {
        p + u * t
    }
}
