//! Fixed-step explicit integration of mechanical systems on manifolds.
//!
//! Configuration updates follow the Munthe-Kaas pattern: stage increments are
//! accumulated in the local chart at the step's base point and composed
//! through the retraction, never by raw addition on the point representation.
//! Velocities integrate v' = -B(v, v) - grad V + sharp(F).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::manifold::{riemannian_grad, sharp, Manifold};
use crate::mechanical::{backstepping_h, BacksteppingCbf, MechState, Smcs};

/// How the controller is queried inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlSampling {
    /// Re-evaluate at every RK stage (default; minimizes discretization gap).
    EveryStage,
    /// Zero-order hold: evaluate once at the step's start.
    ZeroOrderHold,
}

/// One recorded sample of a simulation.
#[derive(Debug, Clone)]
pub struct TrajectorySample<P> {
    pub t: f64,
    pub q: P,
    pub v: DVector<f64>,
    /// Applied force coefficients against the codistribution basis.
    pub tau: DVector<f64>,
    pub h: f64,
    pub h0: f64,
    pub hdot_margin: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory<P> {
    pub samples: Vec<TrajectorySample<P>>,
    pub dt: f64,
    pub integrator_name: String,
    pub scenario_hash: String,
    /// Time at which the state became non-finite, if the run diverged.
    pub divergence: Option<f64>,
}

impl<P> Trajectory<P> {
    pub fn min_h(&self) -> f64 {
        self.samples.iter().map(|s| s.h).fold(f64::INFINITY, f64::min)
    }

    pub fn min_h0(&self) -> f64 {
        self.samples.iter().map(|s| s.h0).fold(f64::INFINITY, f64::min)
    }

    pub fn max_torque_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.tau.norm()).fold(0.0, f64::max)
    }
}

/// v' at a state under a force covector.
pub fn acceleration<M: Manifold>(
    s: &Smcs<M>,
    st: &MechState<M::Point>,
    force_covector: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = &s.manifold;
    let grad_v = riemannian_grad(m, &st.q, &(s.potential_diff)(&st.q))?;
    let forced = sharp(m, &st.q, force_covector)?;
    Ok(-m.connection(&st.q, &st.v, &st.v) - grad_v + forced)
}

struct Stage {
    /// Chart-coordinate rate dexpinv_u(v).
    du: DVector<f64>,
    dv: DVector<f64>,
}

/// One RK4 step of the coupled system; the controller maps a state to force
/// coefficients tau and is queried per `sampling`.
pub fn step_with<M: Manifold>(
    s: &Smcs<M>,
    st: &MechState<M::Point>,
    dt: f64,
    controller: &dyn Fn(&MechState<M::Point>) -> Result<DVector<f64>>,
    sampling: ControlSampling,
) -> Result<MechState<M::Point>> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::NonFinite { context: "step size" });
    }
    let m = &s.manifold;
    let n = m.dim();
    let held_tau = match sampling {
        ControlSampling::ZeroOrderHold => Some(controller(st)?),
        ControlSampling::EveryStage => None,
    };
    let eval = |u: &DVector<f64>, v: &DVector<f64>| -> Result<Stage> {
        let q = m.retract(&st.q, u, 1.0);
        let state = MechState { q, v: v.clone() };
        let tau = match &held_tau {
            Some(t) => t.clone(),
            None => controller(&state)?,
        };
        let f = s.force_covector(&state.q, &tau);
        let dv = acceleration(s, &state, &f)?;
        Ok(Stage { du: m.dexp_inv(u, v), dv })
    };
    let zero = DVector::zeros(n);
    let k1 = eval(&zero, &st.v)?;
    let k2 = eval(&(&k1.du * (dt / 2.0)), &(&st.v + &k1.dv * (dt / 2.0)))?;
    let k3 = eval(&(&k2.du * (dt / 2.0)), &(&st.v + &k2.dv * (dt / 2.0)))?;
    let k4 = eval(&(&k3.du * dt), &(&st.v + &k3.dv * dt))?;
    let u = (&k1.du + &k2.du * 2.0 + &k3.du * 2.0 + &k4.du) * (dt / 6.0);
    let v = &st.v + (&k1.dv + &k2.dv * 2.0 + &k3.dv * 2.0 + &k4.dv) * (dt / 6.0);
    if !v.iter().all(|x| x.is_finite()) || !u.iter().all(|x| x.is_finite()) {
        return Err(Error::Divergence { t: 0.0 });
    }
    let q = m.reproject(m.retract(&st.q, &u, 1.0));
    Ok(MechState { q, v })
}

/// One RK4 step under constant force coefficients.
pub fn step<M: Manifold>(
    s: &Smcs<M>,
    st: &MechState<M::Point>,
    tau: &DVector<f64>,
    dt: f64,
) -> Result<MechState<M::Point>> {
    let tau = tau.clone();
    step_with(s, st, dt, &move |_| Ok(tau.clone()), ControlSampling::ZeroOrderHold)
}

/// Observed quantities recorded per sample.
pub type Observer<'a, P> = dyn Fn(&MechState<P>, &DVector<f64>) -> (f64, f64, f64) + 'a;

/// Iterate `step_with` for floor(T/dt) steps, recording each sample. On
/// divergence the trajectory is returned with the offending time recorded
/// rather than an error, so partial data survives.
pub fn simulate<M: Manifold>(
    s: &Smcs<M>,
    controller: &dyn Fn(&MechState<M::Point>) -> Result<DVector<f64>>,
    st0: &MechState<M::Point>,
    dt: f64,
    t_final: f64,
    observer: &Observer<'_, M::Point>,
    sampling: ControlSampling,
    scenario_hash: &str,
) -> Result<Trajectory<M::Point>> {
    if !(t_final > 0.0 && dt > 0.0 && dt <= t_final) {
        return Err(Error::Config("require 0 < dt <= T".into()));
    }
    let steps = (t_final / dt).floor() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut st = st0.clone();
    let mut divergence = None;
    for i in 0..=steps {
        let t = i as f64 * dt;
        let tau = match controller(&st) {
            Ok(tau) => tau,
            Err(Error::Divergence { .. }) | Err(Error::NonFinite { .. }) => {
                divergence = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        let (h, h0, hdot_margin) = observer(&st, &tau);
        samples.push(TrajectorySample {
            t,
            q: st.q.clone(),
            v: st.v.clone(),
            tau,
            h,
            h0,
            hdot_margin,
        });
        if i == steps {
            break;
        }
        match step_with(s, &st, dt, controller, sampling) {
            Ok(next) => st = next,
            Err(Error::Divergence { .. }) | Err(Error::NonFinite { .. }) => {
                divergence = Some(t + dt);
                break;
            }
            Err(e) => return Err(e),
        }
        if !st.v.iter().all(|x| x.is_finite()) {
            divergence = Some(t + dt);
            break;
        }
    }
    Ok(Trajectory {
        samples,
        dt,
        integrator_name: "rkmk4".into(),
        scenario_hash: scenario_hash.into(),
        divergence,
    })
}

/// Central finite difference of the backstepping barrier along the
/// closed-loop flow under a constant force covector; the independent oracle
/// for the analytic hdot.
pub fn hdot_finite_difference<M: Manifold>(
    s: &Smcs<M>,
    c: &BacksteppingCbf<M>,
    st: &MechState<M::Point>,
    force_covector: &DVector<f64>,
    dt: f64,
) -> Result<f64> {
    let rows = (s.input_codistribution)(&st.q);
    let tau = rows
        .transpose()
        .svd(true, true)
        .solve(force_covector, 1e-12)
        .map_err(|_| Error::RankDeficient)?;
    let fwd = step(s, st, &tau, dt)?;
    let bwd = step(s, st, &tau, -dt)?;
    Ok((backstepping_h(c, s, &fwd)? - backstepping_h(c, s, &bwd)?) / (2.0 * dt))
}
