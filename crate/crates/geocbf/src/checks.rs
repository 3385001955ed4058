//! Named invariant suites behind `geocbf check` and the acceptance tests.
//!
//! Each check is an independent oracle: finite differences, conservation
//! laws, a KKT solve for QP optimality, or an algebraic identity that pins
//! down the connection. Checks are deterministic (seeded RNG) and
//! parameterized so tests can run them against deliberately tampered inputs.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::integrators::{hdot_finite_difference, simulate, step, ControlSampling};
use crate::manifold::{ClosureField, EuclideanSpace, Manifold, VectorField};
use crate::mechanical::{
    backstepping_h, build_actuation_split, check_underactuation_condition, hdot, safe_force,
    BacksteppingCbf, MechState, Smcs,
};
use crate::safety_filters::{compute_a_b, hs_filter, qp_filter, ControlAffinePointData};
use crate::satellite::{
    nominal_pd, satellite_cbf, satellite_smcs, satellite_smcs_e23, SatelliteParams,
};
use crate::scalar_filters::{in_domain, lambda_hs, lambda_qp, AlphaSpec};
use crate::so3::{dv, exp_so3, log_so3, v3, Rotation, So3};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn from_result(name: &'static str, r: Result<String>) -> Self {
        match r {
            Ok(detail) => CheckOutcome { name, passed: true, detail },
            Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
        }
    }
}

fn ensure(cond: bool, msg: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg))
    }
}

pub fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(m, m) * rng.gen_range(0.1..2.0)
}

pub fn random_point_data(rng: &mut ChaCha8Rng, m: usize) -> ControlAffinePointData {
    ControlAffinePointData {
        dhf: rng.gen_range(-5.0..5.0),
        dhg: DVector::from_fn(m, |_, _| rng.gen_range(-3.0..3.0)),
        fiber_metric: random_spd(rng, m),
        h: rng.gen_range(-2.0..2.0),
        u_des: DVector::from_fn(m, |_, _| rng.gen_range(-3.0..3.0)),
    }
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    exp_so3(&Vector3::new(
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-1.5..1.5),
    ))
}

/// Independent QP optimality oracle: feasibility test plus an
/// active-constraint KKT solve by LU factorization.
pub fn kkt_oracle(d: &ControlAffinePointData, alpha: AlphaSpec) -> DVector<f64> {
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

/// qp_filter matches the KKT oracle to 1e-8 in W-norm.
pub fn check_qp_vs_oracle(samples: usize) -> Result<String> {
    let alpha = AlphaSpec::Linear { gain: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < samples {
        let m = rng.gen_range(1..7usize);
        let d = random_point_data(&mut rng, m);
        let (a, b) = compute_a_b(&d, alpha)?;
        if !in_domain(a, b) {
            continue;
        }
        checked += 1;
        let out = qp_filter(&d, alpha)?;
        let oracle = kkt_oracle(&d, alpha);
        let diff = &out.u - &oracle;
        let gap = (&d.fiber_metric * &diff).dot(&diff).sqrt();
        worst = worst.max(gap);
        ensure(gap < 1e-8, format!("QP/KKT W-norm gap {gap:e}"))?;
    }
    Ok(format!("{checked} instances, worst W-norm gap {worst:.2e}"))
}

/// Both filters satisfy the barrier constraint; lambda_hs >= lambda_qp.
pub fn check_filter_constraints(samples: usize) -> Result<String> {
    let alpha = AlphaSpec::Linear { gain: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    while checked < samples {
        let m = rng.gen_range(1..7usize);
        let d = random_point_data(&mut rng, m);
        let (a, b) = compute_a_b(&d, alpha)?;
        if !in_domain(a, b) {
            continue;
        }
        checked += 1;
        let scale = 1.0 + a.abs() + b;
        let qp = qp_filter(&d, alpha)?;
        let hs = hs_filter(&d, alpha)?;
        for out in [&qp, &hs] {
            let slack = d.dhf + d.dhg.dot(&out.u) + alpha.eval(d.h)?;
            worst = worst.min(slack / scale);
            ensure(slack >= -1e-12 * scale, format!("constraint slack {slack:e}"))?;
        }
        ensure(
            hs.lambda >= qp.lambda - 1e-12 * scale,
            format!("lambda_hs {} < lambda_qp {}", hs.lambda, qp.lambda),
        )?;
    }
    Ok(format!("{checked} instances, worst normalized slack {worst:.2e}"))
}

/// lambda kernels: exact branch values and the stabilized-form agreement.
pub fn check_lambda_properties(samples: usize) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..samples {
        let a: f64 = rng.gen_range(-50.0..50.0);
        let b: f64 = rng.gen_range(1e-6..50.0);
        let l_qp = lambda_qp(a, b)?;
        let l_hs = lambda_hs(a, b)?;
        let tol = 1e-12 * (1.0 + a.abs() + b);
        ensure((a + b * l_qp - a.max(0.0)).abs() <= tol, format!("qp identity at ({a},{b})"))?;
        ensure(a + b * l_hs >= -tol, format!("hs nonnegativity at ({a},{b})"))?;
        ensure(l_hs >= l_qp - tol, format!("overapproximation at ({a},{b})"))?;
    }
    ensure(lambda_qp(1.0, 0.0)? == 0.0, "b=0 branch".into())?;
    ensure(lambda_qp(-1.0, 0.0).is_err(), "domain violation must error".into())?;
    Ok(format!("{samples} random (a, b) pairs"))
}

/// Torsion of the SO(3) connection in the trivialization:
/// B(u, v) - B(v, u) = u x v to 1e-10.
pub fn check_so3_torsion<M: Manifold<Point = Rotation>>(m: &M, samples: usize) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let p = Rotation::identity();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
        let v = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
        let lhs = m.connection(&p, &u, &v) - m.connection(&p, &v, &u);
        let gap = (v3(&lhs) - v3(&u).cross(&v3(&v))).norm();
        worst = worst.max(gap);
        ensure(gap < 1e-10, format!("torsion defect {gap:e}"))?;
    }
    Ok(format!("{samples} pairs, worst defect {worst:.2e}"))
}

/// Metric compatibility: the finite-difference derivative of the inner
/// product of two configuration-dependent fields along retract curves matches
/// the product rule with B-corrected covariant derivatives (rel tol 1e-4,
/// step 1e-5); plus the trivialized skewness identity
/// <B(u,v), w> + <v, B(u,w)> = 0 to 1e-10.
pub fn check_so3_metric_compatibility<M: Manifold<Point = Rotation>>(
    m: &M,
    samples: usize,
) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let p = Rotation::identity();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let v = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let w = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let metric = m.metric(&p);
        let pairing = (&metric * m.connection(&p, &u, &v)).dot(&w)
            + (&metric * &v).dot(&m.connection(&p, &u, &w));
        worst = worst.max(pairing.abs());
        ensure(pairing.abs() < 1e-10, format!("skewness defect {pairing:e}"))?;
    }
    // finite-difference product rule along retract curves with the
    // configuration-dependent fields k1(R) = R^T e3, k2(R) = R^T e1
    let k1 = ClosureField::new(|_: &M, r: &Rotation| Ok(dv(&(r.0.transpose() * Vector3::z()))));
    let k2 = ClosureField::new(|_: &M, r: &Rotation| Ok(dv(&(r.0.transpose() * Vector3::x()))));
    let fd_samples = (samples / 20).max(10);
    for _ in 0..fd_samples {
        let r = random_rotation(&mut rng);
        let u = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let metric = m.metric(&r);
        let inner = |r: &Rotation| -> Result<f64> {
            Ok((&metric * k1.eval(m, r)?).dot(&k2.eval(m, r)?))
        };
        let step = 1e-5;
        let fd = (inner(&m.retract(&r, &u, step))? - inner(&m.retract(&r, &u, -step))?)
            / (2.0 * step);
        let c1 = k1.directional_derivative(m, &r, &u)? + m.connection(&r, &u, &k1.eval(m, &r)?);
        let c2 = k2.directional_derivative(m, &r, &u)? + m.connection(&r, &u, &k2.eval(m, &r)?);
        let rule = (&metric * &c1).dot(&k2.eval(m, &r)?) + (&metric * k1.eval(m, &r)?).dot(&c2);
        let gap = (fd - rule).abs() / fd.abs().max(1.0);
        ensure(gap < 1e-4, format!("product rule defect {gap:e}"))?;
    }
    Ok(format!("{samples} skewness triples, worst {worst:.2e}; {fd_samples} FD curves"))
}

/// Free rigid-body motion conserves kinetic energy and spatial angular
/// momentum to relative drift < 1e-8 over `steps` steps at dt = 1e-3.
pub fn check_free_motion_conservation<M: Manifold<Point = Rotation>>(
    params: &SatelliteParams,
    manifold: M,
    steps: usize,
) -> Result<String> {
    let j = params.inertia;
    let smcs = Smcs::free(manifold, Arc::new(|_: &Rotation| DMatrix::from_row_slice(0, 3, &[])));
    let mut st = MechState { q: Rotation::identity(), v: DVector::from_column_slice(&[1.0, 0.5, 0.2]) };
    let energy = |st: &MechState<Rotation>| v3(&st.v).dot(&j.component_mul(&v3(&st.v)));
    let momentum = |st: &MechState<Rotation>| st.q.0 * j.component_mul(&v3(&st.v));
    let e0 = energy(&st);
    let l0 = momentum(&st);
    for _ in 0..steps {
        st = step(&smcs, &st, &DVector::zeros(0), 1e-3)?;
    }
    let de = (energy(&st) - e0).abs() / e0;
    let dl = (momentum(&st) - l0).norm() / l0.norm();
    ensure(de < 1e-8, format!("energy drift {de:e}"))?;
    ensure(dl < 1e-8, format!("momentum drift {dl:e}"))?;
    Ok(format!("{steps} steps, energy drift {de:.2e}, momentum drift {dl:.2e}"))
}

/// The analytic h0 differential matches central finite differences along the
/// retraction (tolerance 1e-7, step 1e-5). `dh0` is injectable so mutation
/// tests can flip its sign.
pub fn check_h0_differential(
    dh0: &dyn Fn(&Rotation) -> Vector3<f64>,
    theta_safe: f64,
    samples: usize,
) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let m = So3::new(Vector3::new(1.0, 1.0, 2.0))?;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let r = random_rotation(&mut rng);
        let xi = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let step = 1e-5;
        let fd = (crate::satellite::h0_satellite(&m.retract(&r, &xi, step), theta_safe)
            - crate::satellite::h0_satellite(&m.retract(&r, &xi, -step), theta_safe))
            / (2.0 * step);
        let gap = (fd - dh0(&r).dot(&v3(&xi))).abs();
        worst = worst.max(gap);
        ensure(gap < 1e-7, format!("dh0 FD gap {gap:e}"))?;
    }
    Ok(format!("{samples} random (R, xi), worst gap {worst:.2e}"))
}

/// Analytic hdot vs central differences of the barrier along the closed-loop
/// flow (rel tol 1e-4, FD step 1e-6), satellite instance. The manifold is
/// injectable so a sign-flipped connection fails here.
pub fn check_hdot_fd_satellite<M: Manifold<Point = Rotation> + 'static>(
    manifold: M,
    params: &SatelliteParams,
    samples: usize,
) -> Result<String> {
    let s = Smcs::free(
        manifold,
        Arc::new(|_: &Rotation| DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])),
    );
    let c = {
        let theta = params.theta_safe;
        BacksteppingCbf::new(
            Arc::new(move |r: &Rotation| crate::satellite::h0_satellite(r, theta)),
            Arc::new(|r: &Rotation| dv(&crate::satellite::dh0_satellite(r))),
            params.epsilon,
            params.alpha,
            params.delta,
        )
    };
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < samples {
        let q = random_rotation(&mut rng);
        if crate::satellite::h0_satellite(&q, params.theta_safe) <= -0.2 {
            continue; // keep kappa well inside its domain
        }
        let v = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let st = MechState { q, v };
        let tau = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let f = s.force_covector(&st.q, &tau);
        let analytic = hdot(&c, &s, &st, &f)?;
        let fd = hdot_finite_difference(&s, &c, &st, &f, 1e-6)?;
        let gap = (analytic - fd).abs() / analytic.abs().max(1.0);
        worst = worst.max(gap);
        ensure(gap <= 1e-4, format!("hdot FD gap {gap:e} (analytic {analytic}, fd {fd})"))?;
        checked += 1;
    }
    Ok(format!("{checked} states, worst relative gap {worst:.2e}"))
}

/// Same FD oracle on a flat R^3 double integrator with nonzero potential.
pub fn check_hdot_fd_flat(samples: usize) -> Result<String> {
    let k = 0.6;
    let s = Smcs {
        manifold: EuclideanSpace::standard(3),
        potential: Arc::new(move |x: &DVector<f64>| 0.5 * k * x.norm_squared()),
        potential_diff: Arc::new(move |x: &DVector<f64>| k * x),
        input_codistribution: Arc::new(|_: &DVector<f64>| DMatrix::identity(3, 3)),
    };
    let c = BacksteppingCbf::<EuclideanSpace>::new(
        Arc::new(|x: &DVector<f64>| 1.0 - x.norm_squared()),
        Arc::new(|x: &DVector<f64>| -2.0 * x),
        0.5,
        AlphaSpec::Linear { gain: 1.0 },
        0.1,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let v = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let st = MechState { q, v };
        let tau = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let f = s.force_covector(&st.q, &tau);
        let analytic = hdot(&c, &s, &st, &f)?;
        let fd = hdot_finite_difference(&s, &c, &st, &f, 1e-6)?;
        let gap = (analytic - fd).abs() / analytic.abs().max(1.0);
        worst = worst.max(gap);
        ensure(gap <= 1e-4, format!("flat hdot FD gap {gap:e}"))?;
    }
    Ok(format!("{samples} states, worst relative gap {worst:.2e}"))
}

/// Underactuation hypothesis: satellite passes at random rotations, the
/// e2/e3-actuated variant fails at generic rotations.
pub fn check_underactuation(samples: usize) -> Result<String> {
    let params = SatelliteParams::default();
    let s = satellite_smcs(&params)?;
    let c = satellite_cbf(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let points: Vec<Rotation> = (0..samples).map(|_| random_rotation(&mut rng)).collect();
    let report = check_underactuation_condition(&c, &s, &points)?;
    ensure(report.pass, format!("satellite worst pairing {:e}", report.worst))?;
    ensure(report.worst < 1e-12, format!("satellite worst pairing {:e}", report.worst))?;
    let s_bad = satellite_smcs_e23(&params)?;
    let bad = check_underactuation_condition(&c, &s_bad, &points)?;
    ensure(!bad.pass, "e2/e3 variant unexpectedly passed".into())?;
    Ok(format!(
        "satellite worst {:.2e}; counterexample fails at {} of {} points",
        report.worst,
        bad.failures.len(),
        points.len()
    ))
}

/// Closed-loop safety end-to-end: the unfiltered PD run violates h0, both
/// filtered runs keep min h and min h0 above -1e-6.
pub fn check_closed_loop_safety(t_final: f64) -> Result<String> {
    let params = SatelliteParams::default();
    let unfiltered = run_satellite(&params, None, t_final)?;
    ensure(
        unfiltered.0 < -0.05,
        format!("nominal run min h0 = {} (expected < -0.05)", unfiltered.0),
    )?;
    let mut detail = format!("nominal min h0 {:.3}", unfiltered.0);
    for smooth in [false, true] {
        let (min_h0, min_h) = run_satellite(&params, Some(smooth), t_final)?;
        let name = if smooth { "hs" } else { "qp" };
        ensure(min_h >= -1e-6, format!("{name} run min h = {min_h:e}"))?;
        ensure(min_h0 >= -1e-6, format!("{name} run min h0 = {min_h0:e}"))?;
        detail.push_str(&format!("; {name} min h {min_h:.2e}, min h0 {min_h0:.2e}"));
    }
    Ok(detail)
}

/// Run the default satellite scenario; returns (min h0, min h). `filter` of
/// None means the raw nominal controller.
pub fn run_satellite(
    params: &SatelliteParams,
    filter: Option<bool>,
    t_final: f64,
) -> Result<(f64, f64)> {
    let s = satellite_smcs(params)?;
    let c = satellite_cbf(params);
    let p = params.clone();
    let controller = move |st: &MechState<Rotation>| -> Result<DVector<f64>> {
        let tau_des = nominal_pd(&p, st);
        match filter {
            None => Ok(tau_des),
            Some(smooth) => Ok(safe_force(&c, &s, st, &tau_des, smooth, false)?.u),
        }
    };
    let s2 = satellite_smcs(params)?;
    let c2 = satellite_cbf(params);
    let observer = |st: &MechState<Rotation>, _tau: &DVector<f64>| {
        let h0 = crate::satellite::h0_satellite(&st.q, params.theta_safe);
        let h = backstepping_h(&c2, &s2, st).unwrap_or(f64::NAN);
        (h, h0, 0.0)
    };
    let st0 = MechState { q: Rotation::identity(), v: DVector::zeros(3) };
    let traj = simulate(
        &s2,
        &controller,
        &st0,
        1e-3,
        t_final,
        &observer,
        ControlSampling::EveryStage,
        "check",
    )?;
    if let Some(t) = traj.divergence {
        return Err(Error::Divergence { t });
    }
    Ok((traj.min_h0(), traj.min_h()))
}

/// Richardson order estimate across dt in {4e-3, 2e-3, 1e-3} on a smooth
/// (half-Sontag-filtered) closed-loop satellite scenario; requires >= 3.5.
pub fn check_integrator_order(t_final: f64) -> Result<String> {
    let params = SatelliteParams::default();
    let endpoint = |dt: f64| -> Result<MechState<Rotation>> {
        let s = satellite_smcs(&params)?;
        let c = satellite_cbf(&params);
        let p = params.clone();
        let controller = move |st: &MechState<Rotation>| -> Result<DVector<f64>> {
            let tau_des = nominal_pd(&p, st);
            Ok(safe_force(&c, &s, st, &tau_des, true, false)?.u)
        };
        let s2 = satellite_smcs(&params)?;
        let mut st = MechState { q: Rotation::identity(), v: DVector::from_column_slice(&[0.3, -0.2, 0.4]) };
        let steps = (t_final / dt).round() as usize;
        for _ in 0..steps {
            st = crate::integrators::step_with(
                &s2,
                &st,
                dt,
                &controller,
                ControlSampling::EveryStage,
            )?;
        }
        Ok(st)
    };
    let reference = endpoint(1.25e-4)?;
    let dist = |a: &MechState<Rotation>, b: &MechState<Rotation>| -> f64 {
        let rel = Rotation(b.q.0.transpose() * a.q.0);
        let ang = log_so3(&rel.polar_project()).map(|w| w.norm()).unwrap_or(f64::NAN);
        ang + (&a.v - &b.v).norm()
    };
    let errors: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&dt| endpoint(dt).map(|st| dist(&st, &reference)))
        .collect::<Result<_>>()?;
    let o1 = (errors[0] / errors[1]).log2();
    let o2 = (errors[1] / errors[2]).log2();
    let order = o1.min(o2);
    ensure(
        order >= 3.5,
        format!("observed order {order:.2} (errors {errors:?})"),
    )?;
    Ok(format!("observed order {order:.2} (ratios {o1:.2}, {o2:.2})"))
}

/// Backstepping penalty identities: h <= h0 everywhere, h = h0 on the graph
/// of kappa and in purely unactuated error directions.
pub fn check_backstepping_identities(samples: usize) -> Result<String> {
    let params = SatelliteParams::default();
    let s = satellite_smcs(&params)?;
    let c = satellite_cbf(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    for _ in 0..samples {
        let q = random_rotation(&mut rng);
        let v = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
        let st = MechState { q: q.clone(), v };
        let h = backstepping_h(&c, &s, &st)?;
        let h0 = (c.h0)(&q);
        ensure(h <= h0 + 1e-12, format!("h = {h} exceeds h0 = {h0}"))?;
        if h0 > -0.2 {
            let kappa = c.kappa.eval(&s.manifold, &q)?;
            let graph = MechState { q: q.clone(), v: kappa };
            let hg = backstepping_h(&c, &s, &graph)?;
            ensure((hg - h0).abs() < 1e-12, format!("graph identity gap {:e}", hg - h0))?;
        }
    }
    Ok(format!("{samples} states"))
}

/// Rotation validity along a filtered closed-loop run.
pub fn check_rotation_validity(t_final: f64) -> Result<String> {
    let params = SatelliteParams::default();
    let s = satellite_smcs(&params)?;
    let c = satellite_cbf(&params);
    let p = params.clone();
    let controller = move |st: &MechState<Rotation>| -> Result<DVector<f64>> {
        let tau_des = nominal_pd(&p, st);
        Ok(safe_force(&c, &s, st, &tau_des, false, false)?.u)
    };
    let s2 = satellite_smcs(&params)?;
    let st0 = MechState { q: Rotation::identity(), v: DVector::zeros(3) };
    let observer = |_: &MechState<Rotation>, _: &DVector<f64>| (0.0, 0.0, 0.0);
    let traj = simulate(
        &s2,
        &controller,
        &st0,
        1e-3,
        t_final,
        &observer,
        ControlSampling::EveryStage,
        "validity",
    )?;
    let worst = traj
        .samples
        .iter()
        .map(|smp| smp.q.defect())
        .fold(0.0f64, f64::max);
    ensure(worst < 1e-8, format!("orthonormality defect {worst:e}"))?;
    Ok(format!("worst defect {worst:.2e} over {} samples", traj.samples.len()))
}

/// Actuation split invariants at random configurations.
pub fn check_actuation_split(samples: usize) -> Result<String> {
    let params = SatelliteParams::default();
    let s = satellite_smcs(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    for _ in 0..samples {
        let q = random_rotation(&mut rng);
        let split = build_actuation_split(&s, &q)?;
        let n = 3;
        let id = DMatrix::identity(n, n);
        ensure(
            (&split.proj_a + &split.proj_u - id).norm() < 1e-12,
            "proj_a + proj_u != I".into(),
        )?;
        ensure(
            (&split.proj_a * &split.proj_a - &split.proj_a).norm() < 1e-12,
            "proj_a not idempotent".into(),
        )?;
        let f = (s.input_codistribution)(&q);
        ensure((&f * &split.proj_u).norm() < 1e-12, "rows do not annihilate U".into())?;
        let metric = s.manifold.metric(&q);
        ensure(
            (split.proj_a.transpose() * &metric * &split.proj_u).norm() < 1e-10,
            "splitting not g-orthogonal".into(),
        )?;
    }
    Ok(format!("{samples} configurations"))
}

/// Run every suite; `quick` shrinks sample counts to land well under a
/// minute.
pub fn run_all(quick: bool) -> Vec<CheckOutcome> {
    let n_big = if quick { 1000 } else { 10_000 };
    let n_mid = if quick { 200 } else { 1000 };
    let n_small = if quick { 30 } else { 100 };
    let steps = if quick { 2000 } else { 10_000 };
    let t_loop = if quick { 4.0 } else { 20.0 };
    let t_order = if quick { 1.0 } else { 2.0 };
    let params = SatelliteParams::default();
    let so3 = So3::new(params.inertia).unwrap();

    vec![
        CheckOutcome::from_result("lambda-properties", check_lambda_properties(n_big)),
        CheckOutcome::from_result("qp-vs-kkt-oracle", check_qp_vs_oracle(n_big)),
        CheckOutcome::from_result("filter-constraints", check_filter_constraints(n_big)),
        CheckOutcome::from_result("so3-torsion", check_so3_torsion(&so3, n_mid)),
        CheckOutcome::from_result(
            "so3-metric-compatibility",
            check_so3_metric_compatibility(&so3, n_mid),
        ),
        CheckOutcome::from_result(
            "free-motion-conservation",
            check_free_motion_conservation(&params, so3.clone(), steps),
        ),
        CheckOutcome::from_result(
            "h0-differential-fd",
            check_h0_differential(&crate::satellite::dh0_satellite, params.theta_safe, n_small),
        ),
        CheckOutcome::from_result(
            "hdot-fd-satellite",
            check_hdot_fd_satellite(so3, &params, n_small),
        ),
        CheckOutcome::from_result("hdot-fd-flat", check_hdot_fd_flat(n_small)),
        CheckOutcome::from_result("underactuation", check_underactuation(n_mid)),
        CheckOutcome::from_result("actuation-split", check_actuation_split(n_small)),
        CheckOutcome::from_result(
            "backstepping-identities",
            check_backstepping_identities(n_mid),
        ),
        CheckOutcome::from_result("closed-loop-safety", check_closed_loop_safety(t_loop)),
        CheckOutcome::from_result("rotation-validity", check_rotation_validity(t_loop)),
        CheckOutcome::from_result("integrator-order", check_integrator_order(t_order)),
    ]
}

/// Manifold wrapper that flips the sign of the connection; the mutation used
/// to prove the oracle suite has teeth.
#[derive(Clone)]
pub struct FlippedConnection<M: Manifold>(pub M);

impl<M: Manifold> Manifold for FlippedConnection<M> {
    type Point = M::Point;

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn metric(&self, p: &Self::Point) -> DMatrix<f64> {
        self.0.metric(p)
    }

    fn connection(&self, p: &Self::Point, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        -self.0.connection(p, u, v)
    }

    fn retract(&self, p: &Self::Point, u: &DVector<f64>, t: f64) -> Self::Point {
        self.0.retract(p, u, t)
    }

    fn dexp_inv(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.0.dexp_inv(u, w)
    }

    fn reproject(&self, p: Self::Point) -> Self::Point {
        self.0.reproject(p)
    }

    fn point_defect(&self, p: &Self::Point) -> f64 {
        self.0.point_defect(p)
    }
}
