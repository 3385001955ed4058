//! The underactuated satellite on SO(3): rigid-body dynamics with J1 = J2,
//! torques about the body e1/e2 axes, the heat-shield cone constraint
//! h0(R) = e3^T R e3 - cos(theta_safe), and the unsafe nominal PD controller
//! that the filters correct.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::mechanical::{BacksteppingCbf, MechState, Smcs};
use crate::scalar_filters::AlphaSpec;
use crate::so3::{dv, v3, Rotation, So3};

#[derive(Debug, Clone)]
pub struct SatelliteParams {
    /// Diagonal inertia, J1 = J2 required.
    pub inertia: Vector3<f64>,
    /// Half-angle of the safe cone, in (0, pi).
    pub theta_safe: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: AlphaSpec,
    pub kp: f64,
    pub kd: f64,
    /// Unsafe spatial target direction for the heat shield (unit vector).
    pub reference_dir: Vector3<f64>,
}

impl Default for SatelliteParams {
    fn default() -> Self {
        let theta_safe = std::f64::consts::FRAC_PI_4;
        SatelliteParams {
            inertia: Vector3::new(1.0, 1.0, 2.0),
            theta_safe,
            epsilon: 0.5,
            delta: 0.1,
            alpha: AlphaSpec::Linear { gain: 1.0 },
            kp: 4.0,
            kd: 2.0,
            reference_dir: direction_from_polar(theta_safe + 0.5, 0.0),
        }
    }
}

impl SatelliteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inertia.x > 0.0 && self.inertia.y > 0.0 && self.inertia.z > 0.0) {
            return Err(Error::Config("inertia must be positive".into()));
        }
        if self.inertia.x != self.inertia.y {
            return Err(Error::Config("J1 = J2 is required".into()));
        }
        if !(self.theta_safe > 0.0 && self.theta_safe < std::f64::consts::PI) {
            return Err(Error::Config("theta_safe must lie in (0, pi)".into()));
        }
        if self.epsilon <= 0.0 || self.delta <= 0.0 || self.kp <= 0.0 || self.kd <= 0.0 {
            return Err(Error::Config("epsilon, delta, kp, kd must be positive".into()));
        }
        if (self.reference_dir.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("reference direction must be a unit vector".into()));
        }
        Ok(())
    }
}

/// Spatial unit vector at the given polar angle from e3 and azimuth.
pub fn direction_from_polar(polar: f64, azimuth: f64) -> Vector3<f64> {
    Vector3::new(
        polar.sin() * azimuth.cos(),
        polar.sin() * azimuth.sin(),
        polar.cos(),
    )
}

pub fn h0_satellite(r: &Rotation, theta_safe: f64) -> f64 {
    (r.0 * Vector3::z()).z - theta_safe.cos()
}

/// Body-coordinate differential of h0: dh0(xi) = dh0 . xi with
/// dh0 = e3 x (R^T e3). The sign is pinned by the finite-difference oracle.
pub fn dh0_satellite(r: &Rotation) -> Vector3<f64> {
    Vector3::z().cross(&(r.0.transpose() * Vector3::z()))
}

/// The SMCS of the satellite: kinetic metric diag(J), zero potential, input
/// codistribution spanned by e1^T and e2^T in body coordinates.
pub fn satellite_smcs(params: &SatelliteParams) -> Result<Smcs<So3>> {
    params.validate()?;
    let manifold = So3::new(params.inertia)?;
    Ok(Smcs::free(
        manifold,
        Arc::new(|_: &Rotation| {
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        }),
    ))
}

/// Counterexample variant actuated about e2 and e3; violates the
/// underactuation hypothesis for the heat-shield constraint.
pub fn satellite_smcs_e23(params: &SatelliteParams) -> Result<Smcs<So3>> {
    let manifold = So3::new(params.inertia)?;
    Ok(Smcs::free(
        manifold,
        Arc::new(|_: &Rotation| {
            DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        }),
    ))
}

/// Backstepping CBF for the heat-shield constraint with the Lemma-2 safe
/// velocity field (zero desired velocity).
pub fn satellite_cbf(params: &SatelliteParams) -> BacksteppingCbf<So3> {
    let theta = params.theta_safe;
    BacksteppingCbf::new(
        Arc::new(move |r: &Rotation| h0_satellite(r, theta)),
        Arc::new(|r: &Rotation| dv(&dh0_satellite(r))),
        params.epsilon,
        params.alpha,
        params.delta,
    )
}

/// Geometric PD controller toward the (unsafe) reference direction:
/// tau_i = -kp (Gamma x Gamma_ref) . e_i - kd w_i for i in {1, 2}, with
/// Gamma = R^T e3 and Gamma_ref the body-frame target.
pub fn nominal_pd(params: &SatelliteParams, st: &MechState<Rotation>) -> DVector<f64> {
    let gamma = st.q.0.transpose() * Vector3::z();
    let gamma_ref = st.q.0.transpose() * params.reference_dir;
    let err = gamma.cross(&gamma_ref);
    let w = v3(&st.v);
    DVector::from_column_slice(&[
        -params.kp * err.x - params.kd * w.x,
        -params.kp * err.y - params.kd * w.y,
    ])
}
