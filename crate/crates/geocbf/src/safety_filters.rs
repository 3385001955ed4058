//! Closed-form safety filters for metric control-affine systems.
//!
//! The filters consume pointwise trivialized data only: the pairing dh.f, the
//! row dh.G in fiber coordinates, the fiber metric W, the barrier value, and
//! the desired input. The QP filter returns the unique minimizer of
//! ||u - u_des||_W^2 subject to the barrier constraint; the half-Sontag filter
//! is its smooth overapproximation. The adjoint G* grad h is realized as
//! W^{-1} (dh G)^T.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{riemannian_grad, Manifold};
use crate::scalar_filters::{lambda_hs, lambda_qp, AlphaSpec};

/// Everything the closed-form filters need at a single point.
#[derive(Debug, Clone)]
pub struct ControlAffinePointData {
    /// dh_p f_p
    pub dhf: f64,
    /// Row vector dh_p G_p in fiber coordinates (length m).
    pub dhg: DVector<f64>,
    /// Fiber metric W(p), m x m SPD.
    pub fiber_metric: DMatrix<f64>,
    /// Barrier value h(p).
    pub h: f64,
    /// Desired input kappa_des(p), length m.
    pub u_des: DVector<f64>,
}

impl ControlAffinePointData {
    pub fn validate(&self) -> Result<()> {
        let m = self.dhg.len();
        if self.u_des.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.u_des.len() });
        }
        if self.fiber_metric.nrows() != m || self.fiber_metric.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.fiber_metric.nrows() });
        }
        let finite = self.dhf.is_finite()
            && self.h.is_finite()
            && self.dhg.iter().all(|x| x.is_finite())
            && self.u_des.iter().all(|x| x.is_finite())
            && self.fiber_metric.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite { context: "control-affine point data" });
        }
        let sym = (&self.fiber_metric - self.fiber_metric.transpose()).norm();
        if sym > 1e-10 * self.fiber_metric.norm().max(1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }
}

/// Filter result. `u = u_des + lambda * W^{-1} dhg^T` holds exactly.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub u: DVector<f64>,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub active: bool,
}

fn adjoint_direction(d: &ControlAffinePointData) -> Result<DVector<f64>> {
    let chol = d
        .fiber_metric
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(&d.dhg))
}

/// a = alpha(h) + dh.f + dh.G u_des; b = dh.G W^{-1} (dh.G)^T.
pub fn compute_a_b(d: &ControlAffinePointData, alpha: AlphaSpec) -> Result<(f64, f64)> {
    d.validate()?;
    let a = alpha.eval(d.h)? + d.dhf + d.dhg.dot(&d.u_des);
    let b = d.dhg.dot(&adjoint_direction(d)?);
    Ok((a, b.max(0.0)))
}

fn filter_with(
    d: &ControlAffinePointData,
    alpha: AlphaSpec,
    lambda_fn: fn(f64, f64) -> Result<f64>,
) -> Result<FilterOutput> {
    d.validate()?;
    let dir = adjoint_direction(d)?;
    let a = alpha.eval(d.h)? + d.dhf + d.dhg.dot(&d.u_des);
    let b = d.dhg.dot(&dir).max(0.0);
    let lambda = lambda_fn(a, b)?;
    let u = if lambda == 0.0 {
        d.u_des.clone()
    } else {
        &d.u_des + dir * lambda
    };
    Ok(FilterOutput { u, lambda, a, b, active: lambda > 0.0 })
}

/// Closed-form CBF-QP filter: unique minimizer of ||u - u_des||_W^2 subject
/// to dh.f + dh.G u >= -alpha(h). Returns u_des bit-exactly when inactive.
pub fn qp_filter(d: &ControlAffinePointData, alpha: AlphaSpec) -> Result<FilterOutput> {
    filter_with(d, alpha, lambda_qp)
}

/// Smooth half-Sontag filter; satisfies the same barrier constraint with
/// slack and is smooth in the point data on P.
pub fn hs_filter(d: &ControlAffinePointData, alpha: AlphaSpec) -> Result<FilterOutput> {
    filter_with(d, alpha, lambda_hs)
}

/// Safe velocity filter for the single integrator on a manifold: the input is
/// a tangent vector, actuation is the identity, and the fiber metric is the
/// manifold metric. Adds `delta * grad h0` on top of the filtered field so
/// the barrier inequality is strict for delta > 0.
#[allow(clippy::too_many_arguments)]
pub fn single_integrator_filter<M: Manifold>(
    m: &M,
    p: &M::Point,
    dh0: &DVector<f64>,
    h0val: f64,
    kappa_des: &DVector<f64>,
    alpha: AlphaSpec,
    delta: f64,
    smooth: bool,
) -> Result<DVector<f64>> {
    if h0val <= 0.0 && dh0.norm() == 0.0 {
        return Err(Error::OutsideDomain { h0: h0val });
    }
    let data = ControlAffinePointData {
        dhf: 0.0,
        dhg: dh0.clone(),
        fiber_metric: m.metric(p),
        h: h0val,
        u_des: kappa_des.clone(),
    };
    let out = if smooth {
        hs_filter(&data, alpha)?
    } else {
        qp_filter(&data, alpha)?
    };
    if delta == 0.0 {
        return Ok(out.u);
    }
    Ok(out.u + riemannian_grad(m, p, dh0)? * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::EuclideanSpace;
    use crate::so3::{dv, So3};
    use nalgebra::{dvector, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simple(dhf: f64, dhg: DVector<f64>, h: f64, u_des: DVector<f64>) -> ControlAffinePointData {
        let m = dhg.len();
        ControlAffinePointData { dhf, dhg, fiber_metric: DMatrix::identity(m, m), h, u_des }
    }

    #[test]
    fn compute_a_b_examples() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        let d = simple(0.0, dvector![0.0], 1.0, dvector![0.0]);
        assert_eq!(compute_a_b(&d, alpha).unwrap(), (1.0, 0.0));

        let d = simple(-1.0, dvector![2.0, 0.0], 0.0, dvector![0.0, 0.0]);
        assert_eq!(compute_a_b(&d, alpha).unwrap(), (-1.0, 4.0));

        let d = ControlAffinePointData {
            dhf: 0.0,
            dhg: dvector![1.0, 1.0],
            fiber_metric: DMatrix::from_diagonal(&dvector![2.0, 2.0]),
            h: 0.0,
            u_des: dvector![0.0, 0.0],
        };
        let (_, b) = compute_a_b(&d, alpha).unwrap();
        assert!((b - 1.0).abs() < 1e-14);
    }

    /// b equals ||G* grad h||_W^2 with the adjoint built explicitly on a
    /// random small system: G* = W^{-1} G^T M.
    #[test]
    fn b_matches_explicit_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..5usize);
            let m = rng.gen_range(1..5usize);
            let base = random_spd(&mut rng, n);
            let w = random_spd(&mut rng, m);
            let g = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
            let dh = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            // grad h and the explicit adjoint route
            let grad = base.clone().cholesky().unwrap().solve(&dh);
            let gstar_grad = w
                .clone()
                .cholesky()
                .unwrap()
                .solve(&(g.transpose() * &base * &grad));
            let b_explicit = (&w * &gstar_grad).dot(&gstar_grad);
            // filter route: dhg row = dh^T G
            let dhg = g.transpose() * &dh;
            let d = ControlAffinePointData {
                dhf: 0.0,
                dhg,
                fiber_metric: w.clone(),
                h: 0.0,
                u_des: DVector::zeros(m),
            };
            let (_, b) = compute_a_b(&d, AlphaSpec::Linear { gain: 1.0 }).unwrap();
            assert!((b - b_explicit).abs() < 1e-9 * (1.0 + b.abs()), "{b} vs {b_explicit}");
        }
    }

    #[test]
    fn qp_filter_examples() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        // Case I: b = 0, a > 0
        let d = simple(2.0, dvector![0.0, 0.0], 0.0, dvector![5.0, 5.0]);
        let out = qp_filter(&d, alpha).unwrap();
        assert_eq!(out.u, dvector![5.0, 5.0]);
        assert!(!out.active);

        // Case III: active constraint
        let d = simple(-2.0, dvector![1.0, 0.0], 0.0, dvector![0.0, 0.0]);
        let out = qp_filter(&d, alpha).unwrap();
        assert_eq!(out.lambda, 2.0);
        assert_eq!(out.u, dvector![2.0, 0.0]);

        // Case II: u_des already satisfies the constraint
        let d = simple(0.0, dvector![1.0, 0.0], 1.0, dvector![1.0, 0.0]);
        let out = qp_filter(&d, alpha).unwrap();
        assert_eq!(out.u, dvector![1.0, 0.0]);
        assert_eq!(out.lambda, 0.0);
    }

    #[test]
    fn hs_filter_examples() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        let d = simple(3.0, dvector![0.0], 0.0, dvector![7.0]);
        assert_eq!(hs_filter(&d, alpha).unwrap().u, dvector![7.0]);

        let d = simple(0.0, dvector![2.0, 0.0], 0.0, dvector![0.0, 0.0]);
        let out = hs_filter(&d, alpha).unwrap();
        assert_eq!(out.a, 0.0);
        assert_eq!(out.b, 4.0);
        assert_eq!(out.lambda, 0.5);
        assert_eq!(out.u, dvector![1.0, 0.0]);
    }

    pub(crate) fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(m, m) * rng.gen_range(0.1..2.0)
    }

    pub(crate) fn random_data(rng: &mut ChaCha8Rng, m: usize) -> ControlAffinePointData {
        ControlAffinePointData {
            dhf: rng.gen_range(-5.0..5.0),
            dhg: DVector::from_fn(m, |_, _| rng.gen_range(-3.0..3.0)),
            fiber_metric: random_spd(rng, m),
            h: rng.gen_range(-2.0..2.0),
            u_des: DVector::from_fn(m, |_, _| rng.gen_range(-3.0..3.0)),
        }
    }

    #[test]
    fn constraint_satisfaction_and_overapproximation() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        while checked < 10_000 {
            let m = rng.gen_range(1..7usize);
            let d = random_data(&mut rng, m);
            let (a, b) = compute_a_b(&d, alpha).unwrap();
            if !crate::scalar_filters::in_domain(a, b) {
                continue;
            }
            checked += 1;
            let qp = qp_filter(&d, alpha).unwrap();
            let hs = hs_filter(&d, alpha).unwrap();
            let scale = 1.0 + a.abs() + b;
            for out in [&qp, &hs] {
                let slack =
                    d.dhf + d.dhg.dot(&out.u) + alpha.eval(d.h).unwrap();
                assert!(slack >= -1e-12 * scale, "slack = {slack}");
            }
            assert!(hs.lambda >= qp.lambda - 1e-12 * scale);
            let qp_slack = d.dhf + d.dhg.dot(&qp.u) + alpha.eval(d.h).unwrap();
            let hs_slack = d.dhf + d.dhg.dot(&hs.u) + alpha.eval(d.h).unwrap();
            assert!(hs_slack >= qp_slack - 1e-9 * scale);
            // minimal intervention
            if a >= 0.0 {
                assert_eq!(qp.u, d.u_des);
            }
        }
    }

    /// Equality-constrained KKT solve, the independent optimality oracle for
    /// the QP filter: if u_des is feasible return it, else solve the
    /// active-constraint system [W g; g^T 0][u; nu] = [W u_des; -c] by LU.
    pub(crate) fn kkt_oracle(d: &ControlAffinePointData, alpha: AlphaSpec) -> DVector<f64> {
        let m = d.dhg.len();
        let c = alpha.eval(d.h).unwrap() + d.dhf;
        if c + d.dhg.dot(&d.u_des) >= 0.0 {
            return d.u_des.clone();
        }
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        kkt.view_mut((0, 0), (m, m)).copy_from(&d.fiber_metric);
        for i in 0..m {
            kkt[(i, m)] = -d.dhg[i];
            kkt[(m, i)] = d.dhg[i];
        }
        let mut rhs = DVector::zeros(m + 1);
        rhs.rows_mut(0, m).copy_from(&(&d.fiber_metric * &d.u_des));
        rhs[m] = -c;
        let sol = kkt.lu().solve(&rhs).expect("KKT system singular");
        sol.rows(0, m).into_owned()
    }

    #[test]
    fn qp_matches_kkt_oracle() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut checked = 0;
        while checked < 2000 {
            let m = rng.gen_range(1..7usize);
            let d = random_data(&mut rng, m);
            let (a, b) = compute_a_b(&d, alpha).unwrap();
            if !crate::scalar_filters::in_domain(a, b) || b < 1e-9 {
                continue;
            }
            checked += 1;
            let out = qp_filter(&d, alpha).unwrap();
            let oracle = kkt_oracle(&d, alpha);
            let diff = &out.u - &oracle;
            let w_norm = (&d.fiber_metric * &diff).dot(&diff).sqrt();
            assert!(w_norm < 1e-8, "W-norm gap {w_norm}");
        }
    }

    #[test]
    fn reconstruction_identity() {
        let alpha = AlphaSpec::Cubic { gain: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let d = random_data(&mut rng, 3);
            let (a, b) = compute_a_b(&d, alpha).unwrap();
            if !crate::scalar_filters::in_domain(a, b) {
                continue;
            }
            let out = hs_filter(&d, alpha).unwrap();
            let dir = d.fiber_metric.clone().cholesky().unwrap().solve(&d.dhg);
            let rebuilt = &d.u_des + dir * out.lambda;
            assert!((rebuilt - &out.u).norm() == 0.0);
        }
    }

    #[test]
    fn single_integrator_examples() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        // R^2, h0 = 1 - |x|^2 at the origin: dh0 = 0, h0 = 1 > 0 => kappa = 0
        let r2 = EuclideanSpace::standard(2);
        let p = DVector::zeros(2);
        let k = single_integrator_filter(
            &r2, &p, &dvector![0.0, 0.0], 1.0, &dvector![0.0, 0.0], alpha, 0.1, true,
        )
        .unwrap();
        assert_eq!(k, dvector![0.0, 0.0]);

        // R^1, h0(x) = x at 0: a = 0, b = 1 => kappa = 0.5
        let r1 = EuclideanSpace::standard(1);
        let k = single_integrator_filter(
            &r1,
            &DVector::zeros(1),
            &dvector![1.0],
            0.0,
            &dvector![0.0],
            alpha,
            0.0,
            true,
        )
        .unwrap();
        assert!((k[0] - 0.5).abs() < 1e-15);

        // SO(3) at R = I: dh0 = 0, h0 > 0 => kappa = 0
        let so3 = So3::new(Vector3::new(1.0, 1.0, 2.0)).unwrap();
        let h0 = 1.0 - (std::f64::consts::FRAC_PI_4).cos();
        let k = single_integrator_filter(
            &so3,
            &crate::so3::Rotation::identity(),
            &dv(&Vector3::zeros()),
            h0,
            &dv(&Vector3::zeros()),
            alpha,
            0.1,
            true,
        )
        .unwrap();
        assert_eq!(k.norm(), 0.0);

        // degenerate point rejected
        assert!(matches!(
            single_integrator_filter(
                &r1,
                &DVector::zeros(1),
                &dvector![0.0],
                -1.0,
                &dvector![0.0],
                alpha,
                0.1,
                true,
            ),
            Err(Error::OutsideDomain { .. })
        ));
    }

    /// Lipschitz probe: difference quotients of the QP output stay bounded
    /// along curves approaching b = 0 with a bounded away from 0.
    #[test]
    fn qp_output_lipschitz_along_curves() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..50 {
            let u_des = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let h = rng.gen_range(0.5..1.5);
            let mut prev: Option<(f64, DVector<f64>)> = None;
            let mut max_quotient: f64 = 0.0;
            for i in 0..200 {
                let s = 1.0 - i as f64 / 200.0; // shrinks dhg toward 0
                let d = ControlAffinePointData {
                    dhf: -0.2,
                    dhg: dvector![s, 0.5 * s],
                    fiber_metric: DMatrix::identity(2, 2),
                    h,
                    u_des: u_des.clone(),
                };
                let out = qp_filter(&d, alpha).unwrap();
                if let Some((sp, up)) = prev {
                    let q = (&out.u - up).norm() / (s - sp).abs();
                    max_quotient = max_quotient.max(q);
                }
                prev = Some((s, out.u));
            }
            assert!(max_quotient < 100.0, "quotient blew up: {max_quotient}");
        }
    }

    /// Smoothness probe: second-order convergence of central differences of
    /// the half-Sontag output along a curve through P.
    #[test]
    fn hs_output_smooth_along_curves() {
        let alpha = AlphaSpec::Linear { gain: 1.0 };
        let curve = |t: f64| ControlAffinePointData {
            dhf: -1.0 + t,
            dhg: dvector![1.0 + 0.5 * t, t],
            fiber_metric: DMatrix::identity(2, 2),
            h: 0.3 * t,
            u_des: dvector![0.2, -0.1 * t],
        };
        let out = |t: f64| hs_filter(&curve(t), alpha).unwrap().u;
        let deriv = |t: f64, step: f64| (out(t + step) - out(t - step)) / (2.0 * step);
        let reference = deriv(0.1, 1e-6);
        let e1 = (deriv(0.1, 1e-2) - &reference).norm();
        let e2 = (deriv(0.1, 5e-3) - &reference).norm();
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "observed order {order}");
    }
}
