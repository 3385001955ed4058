//! Simple mechanical control systems and the backstepping CBF construction.
//!
//! A configuration constraint h0 on Q is lifted to a barrier on TQ by
//! penalizing the actuated component of the velocity error to a safe velocity
//! field: h(v_q) = h0(q) - (eps/2) ||(v_q - kappa_q)^A||^2. The closed-form
//! time derivative avoids any computation on T(TQ) and feeds directly into
//! the scalar filters.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{
    covariant_derivative_of_field, covariant_derivative_of_projection, riemannian_grad, sharp,
    ClosureField, Manifold, VectorField,
};
use crate::safety_filters::{
    hs_filter, qp_filter, single_integrator_filter, ControlAffinePointData, FilterOutput,
};
use crate::scalar_filters::AlphaSpec;

pub type ScalarFn<P> = Arc<dyn Fn(&P) -> f64 + Send + Sync>;
pub type CovectorFn<P> = Arc<dyn Fn(&P) -> DVector<f64> + Send + Sync>;
pub type CodistributionFn<P> = Arc<dyn Fn(&P) -> DMatrix<f64> + Send + Sync>;

/// State of a mechanical system: configuration point plus trivialized velocity.
#[derive(Debug, Clone)]
pub struct MechState<P> {
    pub q: P,
    pub v: DVector<f64>,
}

/// Simple mechanical control system: configuration manifold with kinetic
/// metric, potential (value and differential), and input codistribution whose
/// rows span the achievable force covectors.
pub struct Smcs<M: Manifold> {
    pub manifold: M,
    pub potential: ScalarFn<M::Point>,
    pub potential_diff: CovectorFn<M::Point>,
    pub input_codistribution: CodistributionFn<M::Point>,
}

impl<M: Manifold> Smcs<M> {
    /// System with zero potential.
    pub fn free(manifold: M, input_codistribution: CodistributionFn<M::Point>) -> Self {
        let n = manifold.dim();
        Smcs {
            manifold,
            potential: Arc::new(|_| 0.0),
            potential_diff: Arc::new(move |_| DVector::zeros(n)),
            input_codistribution,
        }
    }

    /// Number of independent force directions at q.
    pub fn num_inputs(&self, q: &M::Point) -> usize {
        (self.input_codistribution)(q).nrows()
    }

    /// Map force coefficients (against the codistribution rows) to a covector.
    pub fn force_covector(&self, q: &M::Point, tau: &DVector<f64>) -> DVector<f64> {
        (self.input_codistribution)(q).transpose() * tau
    }
}

/// g-orthogonal splitting of the tangent space induced by the input
/// codistribution: proj_u onto the coannihilator, proj_a onto its complement.
#[derive(Debug, Clone)]
pub struct ActuationSplit {
    pub proj_a: DMatrix<f64>,
    pub proj_u: DMatrix<f64>,
}

impl ActuationSplit {
    /// Basis of the unactuated subspace (columns), or an empty matrix when
    /// fully actuated.
    pub fn unactuated_basis(&self) -> DMatrix<f64> {
        let n = self.proj_u.nrows();
        let svd = self.proj_u.clone().svd(true, false);
        let u = svd.u.as_ref().unwrap();
        let cols: Vec<usize> =
            (0..n).filter(|&i| svd.singular_values[i] > 0.5).collect();
        let mut basis = DMatrix::zeros(n, cols.len());
        for (j, &i) in cols.iter().enumerate() {
            basis.set_column(j, &u.column(i));
        }
        basis
    }
}

/// Build the actuated/unactuated projections at q. proj_u projects onto
/// {v : F_q v = 0} along its g-orthogonal complement; proj_a = I - proj_u.
pub fn build_actuation_split<M: Manifold>(s: &Smcs<M>, q: &M::Point) -> Result<ActuationSplit> {
    let f = (s.input_codistribution)(q);
    let n = s.manifold.dim();
    let m = f.nrows();
    if f.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.ncols() });
    }
    // pad with zero rows so the SVD's V^T is the full n x n orthogonal
    // factor (nalgebra computes the thin decomposition)
    let mut padded = DMatrix::zeros(n.max(m), n);
    padded.rows_mut(0, m).copy_from(&f);
    let svd = padded.svd(false, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let rank = svd.singular_values.iter().filter(|&&sv| sv > tol).count();
    if rank < m {
        return Err(Error::RankDeficient);
    }
    if m == n {
        return Ok(ActuationSplit {
            proj_a: DMatrix::identity(n, n),
            proj_u: DMatrix::zeros(n, n),
        });
    }
    // kernel basis: rows of V^T beyond the rank, as columns
    let vt = svd.v_t.unwrap();
    let k = vt.nrows() - rank;
    let mut kernel = DMatrix::zeros(n, k);
    for j in 0..k {
        kernel.set_column(j, &vt.row(rank + j).transpose());
    }
    let metric = s.manifold.metric(q);
    // g-orthogonal projector onto span(kernel): N (N^T M N)^{-1} N^T M
    let gram = kernel.transpose() * &metric * &kernel;
    let gram_inv = gram.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let proj_u = &kernel * gram_inv.solve(&(kernel.transpose() * &metric));
    let proj_a = DMatrix::identity(n, n) - &proj_u;
    Ok(ActuationSplit { proj_a, proj_u })
}

/// The backstepping barrier: h0 with differential, the safe velocity field,
/// and the penalty/filter parameters.
pub struct BacksteppingCbf<M: Manifold> {
    pub h0: ScalarFn<M::Point>,
    pub dh0: CovectorFn<M::Point>,
    pub kappa: Box<dyn VectorField<M>>,
    pub epsilon: f64,
    pub alpha: AlphaSpec,
    pub delta: f64,
}

impl<M: Manifold + 'static> BacksteppingCbf<M> {
    /// Standard construction: the safe velocity field is the smooth
    /// single-integrator filter of h0 with zero desired velocity, plus
    /// delta * grad h0.
    pub fn new(
        h0: ScalarFn<M::Point>,
        dh0: CovectorFn<M::Point>,
        epsilon: f64,
        alpha: AlphaSpec,
        delta: f64,
    ) -> Self {
        let kh0 = Arc::clone(&h0);
        let kdh0 = Arc::clone(&dh0);
        let kappa = ClosureField::new(move |m: &M, p: &M::Point| {
            let dh = kdh0(p);
            let zero = DVector::zeros(dh.len());
            single_integrator_filter(m, p, &dh, kh0(p), &zero, alpha, delta, true)
        });
        BacksteppingCbf { h0, dh0, kappa: Box::new(kappa), epsilon, alpha, delta }
    }
}

fn velocity_error<M: Manifold>(
    c: &BacksteppingCbf<M>,
    s: &Smcs<M>,
    st: &MechState<M::Point>,
) -> Result<DVector<f64>> {
    Ok(&st.v - c.kappa.eval(&s.manifold, &st.q)?)
}

/// h(v_q) = h0(q) - (eps/2) <e^A, e^A> with e = v - kappa(q).
pub fn backstepping_h<M: Manifold>(
    c: &BacksteppingCbf<M>,
    s: &Smcs<M>,
    st: &MechState<M::Point>,
) -> Result<f64> {
    let split = build_actuation_split(s, &st.q)?;
    let e_a = &split.proj_a * velocity_error(c, s, st)?;
    let metric = s.manifold.metric(&st.q);
    Ok((c.h0)(&st.q) - 0.5 * c.epsilon * (&metric * &e_a).dot(&e_a))
}

/// Force-independent part of hdot plus the coefficient row against the input
/// codistribution basis, so hdot(F) = base + dhg . tau for F = rows^T tau.
pub fn hdot_split<M: Manifold>(
    c: &BacksteppingCbf<M>,
    s: &Smcs<M>,
    st: &MechState<M::Point>,
) -> Result<(f64, DVector<f64>)> {
    let q = &st.q;
    let m = &s.manifold;
    let split = build_actuation_split(s, q)?;
    let e = velocity_error(c, s, st)?;
    let e_a = &split.proj_a * &e;
    let metric = m.metric(q);

    let grad_kappa = covariant_derivative_of_field(m, q, &st.v, c.kappa.as_ref())?;
    let grad_v_potential = riemannian_grad(m, q, &(s.potential_diff)(q))?;
    let proj_term = covariant_derivative_of_projection(m, q, &st.v, &split.proj_a, &e)?;
    let bracket = grad_kappa + grad_v_potential - proj_term;

    let base = (c.dh0)(q).dot(&st.v) + c.epsilon * (&metric * &e_a).dot(&bracket);
    let rows = (s.input_codistribution)(q);
    let dhg = -c.epsilon * (&rows * &e_a);
    Ok((base, dhg))
}

/// Closed-form hdot for a force covector lying in the codistribution span.
pub fn hdot<M: Manifold>(
    c: &BacksteppingCbf<M>,
    s: &Smcs<M>,
    st: &MechState<M::Point>,
    force: &DVector<f64>,
) -> Result<f64> {
    let rows = (s.input_codistribution)(&st.q);
    // least-squares coefficients; residual must vanish
    let tau = rows
        .transpose()
        .svd(true, true)
        .solve(force, 1e-12)
        .map_err(|_| Error::RankDeficient)?;
    let residual = (rows.transpose() * &tau - force).norm();
    if residual > 1e-10 * force.norm().max(1.0) {
        return Err(Error::ForceOutsideSpan { residual });
    }
    let (base, dhg) = hdot_split(c, s, st)?;
    Ok(base + dhg.dot(&tau))
}

/// Per-point outcome of the underactuation hypothesis check.
#[derive(Debug, Clone)]
pub struct UnderactuationReport {
    pub worst: f64,
    pub failures: Vec<(usize, f64)>,
    pub pass: bool,
}

/// Verify U_q Q is contained in ker d(h0)_q at each sample point: every basis
/// vector u of the unactuated subspace must satisfy |d(h0) u| < 1e-10.
pub fn check_underactuation_condition<M: Manifold>(
    c: &BacksteppingCbf<M>,
    s: &Smcs<M>,
    points: &[M::Point],
) -> Result<UnderactuationReport> {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, q) in points.iter().enumerate() {
        let split = build_actuation_split(s, q)?;
        let basis = split.unactuated_basis();
        let dh0 = (c.dh0)(q);
        let mut local: f64 = 0.0;
        for j in 0..basis.ncols() {
            local = local.max(dh0.dot(&basis.column(j).into_owned()).abs());
        }
        worst = worst.max(local);
        if local >= 1e-10 {
            failures.push((i, local));
        }
    }
    Ok(UnderactuationReport { worst, pass: failures.is_empty(), failures })
}

/// Safe force filter: builds the pointwise control-affine data for the
/// backstepping barrier in force coefficients and applies the closed-form
/// filter. The fiber metric defaults to the dual-metric Gram matrix of the
/// codistribution rows; `euclidean_cost` switches to the identity for
/// ablation.
pub fn safe_force<M: Manifold>(
    c: &BacksteppingCbf<M>,
    s: &Smcs<M>,
    st: &MechState<M::Point>,
    tau_des: &DVector<f64>,
    smooth: bool,
    euclidean_cost: bool,
) -> Result<FilterOutput> {
    let (base, dhg) = hdot_split(c, s, st)?;
    let rows = (s.input_codistribution)(&st.q);
    let m = rows.nrows();
    let fiber_metric = if euclidean_cost {
        DMatrix::identity(m, m)
    } else {
        // dual-metric Gram: W_ij = <row_i, row_j>_{g^{-1}}
        let mut w = DMatrix::zeros(m, m);
        for j in 0..m {
            let raised = sharp(&s.manifold, &st.q, &rows.row(j).transpose())?;
            for i in 0..m {
                w[(i, j)] = rows.row(i).transpose().dot(&raised);
            }
        }
        w
    };
    let data = ControlAffinePointData {
        dhf: base,
        dhg,
        fiber_metric,
        h: backstepping_h(c, s, st)?,
        u_des: tau_des.clone(),
    };
    if smooth {
        hs_filter(&data, c.alpha)
    } else {
        qp_filter(&data, c.alpha)
    }
}
