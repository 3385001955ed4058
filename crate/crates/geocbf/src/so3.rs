//! SO(3) in body coordinates: Rodrigues exponential/logarithm, the hat/vee
//! pair, and the left-trivialized manifold model with kinetic-energy metric
//! w^T J w.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::manifold::Manifold;

/// A rotation matrix. Orthonormality is checked on construction and can be
/// re-imposed by polar projection after long integrations.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(pub Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let r = Rotation(m);
        if r.defect() > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::NonFinite { context: "rotation matrix constraints" });
        }
        Ok(r)
    }

    /// Frobenius norm of R^T R - I.
    pub fn defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    /// Polar projection onto SO(3) via SVD.
    pub fn polar_project(&self) -> Rotation {
        let svd = self.0.svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Rotation(r)
    }
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>> {
    if (s + s.transpose()).norm() > 1e-12 {
        return Err(Error::NotSkew);
    }
    Ok(Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

const SMALL_ANGLE: f64 = 1e-4;

/// Rodrigues formula with a series branch below the small-angle threshold.
pub fn exp_so3(w: &Vector3<f64>) -> Rotation {
    let theta = w.norm();
    let k = hat(w);
    let (c1, c2) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Rotation(Matrix3::identity() + k * c1 + k * k * c2)
}

/// Principal logarithm; undefined within 1e-6 of angle pi.
pub fn log_so3(r: &Rotation) -> Result<Vector3<f64>> {
    let cos_theta = ((r.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    if theta > std::f64::consts::PI - 1e-6 {
        return Err(Error::LogBranchAmbiguity);
    }
    let skew = (r.0 - r.0.transpose()) / 2.0;
    let w = Vector3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]);
    if theta < SMALL_ANGLE {
        // w = vee((R - R^T)/2) has norm sin(theta); correct to third order.
        Ok(w * (1.0 + theta * theta / 6.0))
    } else {
        Ok(w * (theta / theta.sin()))
    }
}

/// SO(3) with left-invariant metric <u, v> = u^T J v, body coordinates.
///
/// The connection bilinear map is the Levi-Civita one,
/// B(u, v) = (u x v - J^{-1}((Jv) x u) - J^{-1}((Ju) x v)) / 2,
/// which the oracle suite pins down via metric compatibility, torsion
/// freeness, and reproduction of Euler's rigid-body equation.
#[derive(Debug, Clone)]
pub struct So3 {
    inertia: Vector3<f64>,
}

impl So3 {
    pub fn new(inertia: Vector3<f64>) -> Result<Self> {
        if !(inertia.x > 0.0 && inertia.y > 0.0 && inertia.z > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { inertia })
    }

    pub fn inertia(&self) -> Vector3<f64> {
        self.inertia
    }

    fn b(&self, u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        let j = self.inertia;
        let ju = j.component_mul(u);
        let jv = j.component_mul(v);
        let raw = jv.cross(u) + ju.cross(v);
        0.5 * (u.cross(v) - raw.component_div(&j))
    }
}

pub(crate) fn v3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

pub(crate) fn dv(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

impl Manifold for So3 {
    type Point = Rotation;

    fn dim(&self) -> usize {
        3
    }

    fn metric(&self, _p: &Rotation) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(self.inertia.as_slice()))
    }

    fn connection(&self, _p: &Rotation, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        dv(&self.b(&v3(u), &v3(v)))
    }

    fn retract(&self, p: &Rotation, u: &DVector<f64>, t: f64) -> Rotation {
        Rotation(p.0 * exp_so3(&(v3(u) * t)).0)
    }

    fn dexp_inv(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let u = v3(u);
        let w = v3(w);
        // chart rate for the body-frame retraction q exp(u): the inverse
        // left-trivialized differential, dexpinv_{-u}(w)
        dv(&(w + 0.5 * u.cross(&w) + u.cross(&u.cross(&w)) / 12.0))
    }

    fn reproject(&self, p: Rotation) -> Rotation {
        if p.defect() > 1e-9 {
            p.polar_project()
        } else {
            p
        }
    }

    fn point_defect(&self, p: &Rotation) -> f64 {
        p.defect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{flat, riemannian_grad, sharp};
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rand_vec(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    #[test]
    fn hat_vee_examples() {
        let w = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(hat(&w) * Vector3::x(), Vector3::y());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = rand_vec(&mut rng, 5.0);
            assert!((vee(&hat(&w)).unwrap() - w).norm() < 1e-15);
            assert_eq!((hat(&w) + hat(&w).transpose()).norm(), 0.0);
        }
        assert!(matches!(vee(&Matrix3::identity()), Err(Error::NotSkew)));
    }

    #[test]
    fn exp_log_examples() {
        assert!((exp_so3(&Vector3::zeros()).0 - Matrix3::identity()).norm() < 1e-15);
        let quarter = exp_so3(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert!((quarter.0 * Vector3::x() - Vector3::y()).norm() < 1e-14);
        let near_pi = exp_so3(&Vector3::new(PI - 1e-9, 0.0, 0.0));
        assert!(matches!(log_so3(&near_pi), Err(Error::LogBranchAmbiguity)));
    }

    #[test]
    fn exp_log_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let w = rand_vec(&mut rng, 1.0) * rng.gen_range(0.0..3.0f64).min(2.9) / 3.0f64.sqrt();
            let r = exp_so3(&w);
            if w.norm() >= PI - 1e-6 {
                continue;
            }
            assert!((log_so3(&r).unwrap() - w).norm() < 1e-10, "w = {w:?}");
        }
        // small-angle branch
        let w = Vector3::new(1e-6, -2e-6, 5e-7);
        assert!((log_so3(&exp_so3(&w)).unwrap() - w).norm() < 1e-15);
    }

    #[test]
    fn retract_preserves_orthonormality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = So3::new(Vector3::new(1.0, 1.0, 2.0)).unwrap();
        let mut p = Rotation::identity();
        for _ in 0..100 {
            let u = dv(&rand_vec(&mut rng, 2.0));
            assert!((m.retract(&p, &u, 0.0).0 - p.0).norm() == 0.0);
            p = m.retract(&p, &u, 0.1);
            assert!(p.defect() < 1e-10);
        }
    }

    #[test]
    fn flat_sharp_with_inertia() {
        let m = So3::new(Vector3::new(1.0, 1.0, 2.0)).unwrap();
        let p = Rotation::identity();
        assert_eq!(
            flat(&m, &p, &dvector![0.0, 0.0, 1.0]).unwrap(),
            dvector![0.0, 0.0, 2.0]
        );
        assert_eq!(
            sharp(&m, &p, &dvector![0.0, 0.0, 2.0]).unwrap(),
            dvector![0.0, 0.0, 1.0]
        );
        assert_eq!(
            riemannian_grad(&m, &p, &dvector![0.0, 2.0, 0.0]).unwrap(),
            dvector![0.0, 2.0, 0.0]
        );
        let m2 = So3::new(Vector3::new(2.0, 2.0, 4.0)).unwrap();
        let g = riemannian_grad(&m2, &p, &dvector![2.0, 0.0, 4.0]).unwrap();
        assert_eq!(g, dvector![1.0, 0.0, 1.0]);
        // pairing identity <grad h, v> = dh . v
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let v = dv(&rand_vec(&mut rng, 3.0));
            let lhs = (m2.metric(&p) * &g).dot(&v);
            let rhs = dvector![2.0, 0.0, 4.0].dot(&v);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn torsion_free_in_trivialization() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let m = So3::new(Vector3::new(1.3, 1.3, 0.7)).unwrap();
        let _p = Rotation::identity();
        for _ in 0..1000 {
            let u = rand_vec(&mut rng, 3.0);
            let v = rand_vec(&mut rng, 3.0);
            let lhs = m.b(&u, &v) - m.b(&v, &u);
            assert!((lhs - u.cross(&v)).norm() < 1e-10);
        }
    }

    #[test]
    fn connection_metric_compatible_along_geodesics() {
        // d/dt <k, k> = 2 <grad_u k, k> for the left-invariant field k along
        // retract(p, u, t), with grad_u k = B(u, k) (k constant in body frame).
        let m = So3::new(Vector3::new(1.0, 1.0, 2.0)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let u = rand_vec(&mut rng, 2.0);
            let k = rand_vec(&mut rng, 2.0);
            // In left trivialization the metric matrix is constant, so the
            // invariant inner product of body-constant fields is constant and
            // compatibility reads <B(u,k), k> + <k, B(u,k)> = d/dt <k,k> = 0.
            let j = m.inertia();
            let b = m.b(&u, &k);
            let pairing = 2.0 * b.dot(&j.component_mul(&k));
            assert!(pairing.abs() < 1e-10, "pairing = {pairing}");
        }
    }
}
