//! Scenario configuration, experiment execution, and file outputs for the
//! CLI: trajectory CSV (17 significant digits, round-trippable), a JSON run
//! report, and static SVG plots. Output files are written atomically
//! (temp-then-rename).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::integrators::{simulate, ControlSampling, Trajectory};
use crate::manifold::EuclideanSpace;
use crate::mechanical::{backstepping_h, hdot_split, safe_force, BacksteppingCbf, MechState, Smcs};
use crate::satellite::{
    direction_from_polar, nominal_pd, satellite_cbf, satellite_smcs, SatelliteParams,
};
use crate::scalar_filters::AlphaSpec;
use crate::so3::{exp_so3, Rotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Satellite,
    EuclideanDoubleIntegrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    None,
    Qp,
    Hs,
}

impl FilterKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FilterKind::None),
            "qp" => Ok(FilterKind::Qp),
            "hs" => Ok(FilterKind::Hs),
            other => Err(Error::Config(format!("unknown filter '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Qp => "qp",
            FilterKind::Hs => "hs",
        }
    }
}

/// A full experiment description, readable from a flat key = value file.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub system: SystemKind,
    pub inertia: Vector3<f64>,
    pub mass: f64,
    pub theta_safe: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: AlphaSpec,
    pub filter: FilterKind,
    pub kp: f64,
    pub kd: f64,
    /// Axis-angle initial attitude (satellite) or initial position (euclidean).
    pub initial_attitude: Vector3<f64>,
    pub initial_omega: Vector3<f64>,
    pub reference_polar: f64,
    pub reference_azimuth: f64,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let theta_safe = std::f64::consts::FRAC_PI_4;
        ScenarioConfig {
            system: SystemKind::Satellite,
            inertia: Vector3::new(1.0, 1.0, 2.0),
            mass: 1.0,
            theta_safe,
            epsilon: 0.5,
            delta: 0.1,
            alpha: AlphaSpec::Linear { gain: 1.0 },
            filter: FilterKind::Qp,
            kp: 4.0,
            kd: 2.0,
            initial_attitude: Vector3::zeros(),
            initial_omega: Vector3::zeros(),
            reference_polar: theta_safe + 0.5,
            reference_azimuth: 0.0,
            dt: 1e-3,
            t_final: 20.0,
            seed: 0,
            output_dir: None,
        }
    }
}

fn parse_f64(key: &str, val: &str) -> Result<f64> {
    val.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{val}' as a number")))
}

fn parse_vec3(key: &str, val: &str) -> Result<Vector3<f64>> {
    let parts: Vec<f64> = val
        .split_whitespace()
        .map(|p| parse_f64(key, p))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Config(format!("{key}: expected 3 numbers, got {}", parts.len())));
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

impl ScenarioConfig {
    /// Parse the flat `key = value` format (`#` comments, dotted keys).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut alpha_kind = "linear".to_string();
        let mut alpha_gain = 1.0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, val) = (key.trim(), val.trim());
            match key {
                "system" => {
                    cfg.system = match val {
                        "satellite" => SystemKind::Satellite,
                        "euclidean-double-integrator" => SystemKind::EuclideanDoubleIntegrator,
                        other => return Err(Error::Config(format!("unknown system '{other}'"))),
                    }
                }
                "inertia" => cfg.inertia = parse_vec3(key, val)?,
                "mass" => cfg.mass = parse_f64(key, val)?,
                "theta_safe" => cfg.theta_safe = parse_f64(key, val)?,
                "epsilon" => cfg.epsilon = parse_f64(key, val)?,
                "delta" => cfg.delta = parse_f64(key, val)?,
                "alpha.kind" => alpha_kind = val.to_string(),
                "alpha.gain" => alpha_gain = parse_f64(key, val)?,
                "filter" => cfg.filter = FilterKind::parse(val)?,
                "gains.kp" => cfg.kp = parse_f64(key, val)?,
                "gains.kd" => cfg.kd = parse_f64(key, val)?,
                "initial.attitude" => cfg.initial_attitude = parse_vec3(key, val)?,
                "initial.omega" => cfg.initial_omega = parse_vec3(key, val)?,
                "reference.polar" => cfg.reference_polar = parse_f64(key, val)?,
                "reference.azimuth" => cfg.reference_azimuth = parse_f64(key, val)?,
                "dt" => cfg.dt = parse_f64(key, val)?,
                "T" => cfg.t_final = parse_f64(key, val)?,
                "seed" => {
                    cfg.seed = val
                        .parse::<u64>()
                        .map_err(|_| Error::Config(format!("seed: cannot parse '{val}'")))?
                }
                "output_dir" => cfg.output_dir = Some(PathBuf::from(val)),
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        cfg.alpha = match alpha_kind.as_str() {
            "linear" => AlphaSpec::Linear { gain: alpha_gain },
            "cubic" => AlphaSpec::Cubic { gain: alpha_gain },
            other => return Err(Error::Config(format!("unknown alpha kind '{other}'"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_safe > 0.0 && self.theta_safe < std::f64::consts::PI) {
            return Err(Error::Config("theta_safe must lie in (0, pi)".into()));
        }
        let positives = [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("alpha gain", self.alpha.gain()),
            ("kp", self.kp),
            ("kd", self.kd),
            ("dt", self.dt),
            ("T", self.t_final),
            ("mass", self.mass),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.dt > self.t_final {
            return Err(Error::Config("dt must not exceed T".into()));
        }
        if !(self.inertia.x > 0.0 && self.inertia.y > 0.0 && self.inertia.z > 0.0) {
            return Err(Error::Config("inertia must be positive".into()));
        }
        Ok(())
    }

    /// Canonical listing used for the deterministic scenario hash.
    pub fn canonical_string(&self) -> String {
        format!(
            "system={:?};inertia={:?};mass={};theta_safe={};epsilon={};delta={};alpha={:?};\
             filter={:?};kp={};kd={};att={:?};omega={:?};ref=({},{});dt={};T={};seed={}",
            self.system,
            self.inertia,
            self.mass,
            self.theta_safe,
            self.epsilon,
            self.delta,
            self.alpha,
            self.filter,
            self.kp,
            self.kd,
            self.initial_attitude,
            self.initial_omega,
            self.reference_polar,
            self.reference_azimuth,
            self.dt,
            self.t_final,
            self.seed,
        )
    }

    pub fn scenario_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        format!("{digest:x}")
    }

    pub fn satellite_params(&self) -> SatelliteParams {
        SatelliteParams {
            inertia: self.inertia,
            theta_safe: self.theta_safe,
            epsilon: self.epsilon,
            delta: self.delta,
            alpha: self.alpha,
            kp: self.kp,
            kd: self.kd,
            reference_dir: direction_from_polar(self.reference_polar, self.reference_azimuth),
        }
    }
}

/// Process exit code for a failed CLI invocation: 1 check failure, 2 bad
/// config or I/O, 3 divergence, 4 barrier condition violated.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io(_) => 2,
        Error::Divergence { .. } => 3,
        Error::CbfConditionViolated { .. } | Error::OutsideDomain { .. } => 4,
        _ => 1,
    }
}

/// Summary statistics required from every run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub min_h: f64,
    pub min_h0: f64,
    pub constraint_active_fraction: f64,
    pub max_torque_norm: f64,
    pub divergence_flag: bool,
    pub wall_time: f64,
}

/// A finished run: the trajectory in one of the two point representations
/// plus its report.
pub enum SimOutput {
    Satellite(Trajectory<Rotation>),
    Euclidean(Trajectory<DVector<f64>>),
}

impl SimOutput {
    pub fn divergence(&self) -> Option<f64> {
        match self {
            SimOutput::Satellite(t) => t.divergence,
            SimOutput::Euclidean(t) => t.divergence,
        }
    }
}

/// Execute a scenario and compute its report.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SimOutput, RunReport)> {
    let start = Instant::now();
    let hash = cfg.scenario_hash();
    let output = match cfg.system {
        SystemKind::Satellite => SimOutput::Satellite(run_satellite(cfg, &hash)?),
        SystemKind::EuclideanDoubleIntegrator => {
            SimOutput::Euclidean(run_euclidean(cfg, &hash)?)
        }
    };
    let (min_h, min_h0, max_tau, active_fraction) = match &output {
        SimOutput::Satellite(t) => {
            (t.min_h(), t.min_h0(), t.max_torque_norm(), activity_fraction(t))
        }
        SimOutput::Euclidean(t) => {
            (t.min_h(), t.min_h0(), t.max_torque_norm(), activity_fraction(t))
        }
    };
    let report = RunReport {
        min_h,
        min_h0,
        constraint_active_fraction: active_fraction,
        max_torque_norm: max_tau,
        divergence_flag: output.divergence().is_some(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((output, report))
}

fn activity_fraction<P>(t: &Trajectory<P>) -> f64 {
    if t.samples.is_empty() {
        return 0.0;
    }
    let active = t
        .samples
        .iter()
        .filter(|s| s.hdot_margin.is_finite() && s.hdot_margin.abs() < 1e-6)
        .count();
    active as f64 / t.samples.len() as f64
}

fn filtered_controller<'a, M: crate::manifold::Manifold>(
    cfg: &ScenarioConfig,
    c: &'a BacksteppingCbf<M>,
    s: &'a Smcs<M>,
    nominal: impl Fn(&MechState<M::Point>) -> DVector<f64> + 'a,
) -> impl Fn(&MechState<M::Point>) -> Result<DVector<f64>> + 'a {
    let filter = cfg.filter;
    move |st: &MechState<M::Point>| {
        let tau_des = nominal(st);
        match filter {
            FilterKind::None => Ok(tau_des),
            FilterKind::Qp | FilterKind::Hs => {
                let out = safe_force(c, s, st, &tau_des, filter == FilterKind::Hs, false)?;
                Ok(out.u)
            }
        }
    }
}

fn run_satellite(cfg: &ScenarioConfig, hash: &str) -> Result<Trajectory<Rotation>> {
    let params = cfg.satellite_params();
    params.validate()?;
    let s = satellite_smcs(&params)?;
    let c = satellite_cbf(&params);
    let s_obs = satellite_smcs(&params)?;
    let c_obs = satellite_cbf(&params);
    let p = params.clone();
    let controller = filtered_controller(cfg, &c, &s, move |st| nominal_pd(&p, st));
    let theta = cfg.theta_safe;
    let alpha = cfg.alpha;
    let observer = |st: &MechState<Rotation>, tau: &DVector<f64>| {
        let h0 = crate::satellite::h0_satellite(&st.q, theta);
        match backstepping_h(&c_obs, &s_obs, st) {
            Ok(h) => {
                let margin = hdot_split(&c_obs, &s_obs, st)
                    .map(|(base, dhg)| base + dhg.dot(tau) + alpha.eval(h).unwrap_or(f64::NAN))
                    .unwrap_or(f64::NAN);
                (h, h0, margin)
            }
            Err(_) => (f64::NAN, h0, f64::NAN),
        }
    };
    let st0 = MechState {
        q: exp_so3(&cfg.initial_attitude),
        v: DVector::from_column_slice(cfg.initial_omega.as_slice()),
    };
    simulate(
        &s,
        &controller,
        &st0,
        cfg.dt,
        cfg.t_final,
        &observer,
        ControlSampling::EveryStage,
        hash,
    )
}

/// Fully actuated double integrator in R^3 with mass m, safe set the unit
/// ball (h0 = 1 - |x|^2), PD toward an unsafe reference point.
fn run_euclidean(cfg: &ScenarioConfig, hash: &str) -> Result<Trajectory<DVector<f64>>> {
    let mass = cfg.mass;
    let metric = DMatrix::identity(3, 3) * mass;
    let s = Smcs::free(
        EuclideanSpace::new(metric.clone())?,
        Arc::new(|_: &DVector<f64>| DMatrix::identity(3, 3)),
    );
    let c = BacksteppingCbf::<EuclideanSpace>::new(
        Arc::new(|x: &DVector<f64>| 1.0 - x.norm_squared()),
        Arc::new(|x: &DVector<f64>| -2.0 * x),
        cfg.epsilon,
        cfg.alpha,
        cfg.delta,
    );
    let s_obs = Smcs::free(
        EuclideanSpace::new(metric)?,
        Arc::new(|_: &DVector<f64>| DMatrix::identity(3, 3)),
    );
    let c_obs = BacksteppingCbf::<EuclideanSpace>::new(
        Arc::new(|x: &DVector<f64>| 1.0 - x.norm_squared()),
        Arc::new(|x: &DVector<f64>| -2.0 * x),
        cfg.epsilon,
        cfg.alpha,
        cfg.delta,
    );
    let target = direction_from_polar(cfg.reference_polar, cfg.reference_azimuth) * 1.5;
    let target = DVector::from_column_slice(target.as_slice());
    let (kp, kd) = (cfg.kp, cfg.kd);
    let controller = filtered_controller(cfg, &c, &s, move |st: &MechState<DVector<f64>>| {
        (&target - &st.q) * kp - &st.v * kd
    });
    let alpha = cfg.alpha;
    let observer = |st: &MechState<DVector<f64>>, tau: &DVector<f64>| {
        let h0 = 1.0 - st.q.norm_squared();
        match backstepping_h(&c_obs, &s_obs, st) {
            Ok(h) => {
                let margin = hdot_split(&c_obs, &s_obs, st)
                    .map(|(base, dhg)| base + dhg.dot(tau) + alpha.eval(h).unwrap_or(f64::NAN))
                    .unwrap_or(f64::NAN);
                (h, h0, margin)
            }
            Err(_) => (f64::NAN, h0, f64::NAN),
        }
    };
    let st0 = MechState {
        q: DVector::from_column_slice(cfg.initial_attitude.as_slice()),
        v: DVector::from_column_slice(cfg.initial_omega.as_slice()),
    };
    simulate(
        &s,
        &controller,
        &st0,
        cfg.dt,
        cfg.t_final,
        &observer,
        ControlSampling::EveryStage,
        hash,
    )
}

fn fmt17(x: f64) -> String {
    format!("{x:.17e}")
}

/// Serialize the trajectory to CSV. Rotations are flattened row-major as
/// qw00..qw22; Euclidean points as x0..; all values with 17 significant
/// digits.
pub fn trajectory_csv(output: &SimOutput) -> String {
    let mut out = String::new();
    match output {
        SimOutput::Satellite(t) => {
            out.push_str(
                "t,qw00,qw01,qw02,qw10,qw11,qw12,qw20,qw21,qw22,v0,v1,v2,tau0,tau1,h,h0,hdot_margin\n",
            );
            for s in &t.samples {
                let mut fields = vec![fmt17(s.t)];
                for i in 0..3 {
                    for j in 0..3 {
                        fields.push(fmt17(s.q.0[(i, j)]));
                    }
                }
                fields.extend(s.v.iter().map(|&x| fmt17(x)));
                fields.extend(s.tau.iter().map(|&x| fmt17(x)));
                fields.push(fmt17(s.h));
                fields.push(fmt17(s.h0));
                fields.push(fmt17(s.hdot_margin));
                let _ = writeln!(out, "{}", fields.join(","));
            }
        }
        SimOutput::Euclidean(t) => {
            let n = t.samples.first().map_or(3, |s| s.q.len());
            let m = t.samples.first().map_or(3, |s| s.tau.len());
            let mut header = vec!["t".to_string()];
            header.extend((0..n).map(|i| format!("x{i}")));
            header.extend((0..n).map(|i| format!("v{i}")));
            header.extend((0..m).map(|i| format!("tau{i}")));
            header.extend(["h".into(), "h0".into(), "hdot_margin".into()]);
            let _ = writeln!(out, "{}", header.join(","));
            for s in &t.samples {
                let mut fields = vec![fmt17(s.t)];
                fields.extend(s.q.iter().map(|&x| fmt17(x)));
                fields.extend(s.v.iter().map(|&x| fmt17(x)));
                fields.extend(s.tau.iter().map(|&x| fmt17(x)));
                fields.push(fmt17(s.h));
                fields.push(fmt17(s.h0));
                fields.push(fmt17(s.hdot_margin));
                let _ = writeln!(out, "{}", fields.join(","));
            }
        }
    }
    out
}

/// Parse a trajectory CSV back into (header fields, numeric rows).
pub fn parse_trajectory_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad CSV field '{f}'")))
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::Config("CSV row width mismatch".into()));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// SVG line plot of h(t) and h0(t) with the zero level marked.
pub fn h_plot_svg(output: &SimOutput) -> String {
    let series: Vec<(f64, f64, f64)> = match output {
        SimOutput::Satellite(t) => t.samples.iter().map(|s| (s.t, s.h, s.h0)).collect(),
        SimOutput::Euclidean(t) => t.samples.iter().map(|s| (s.t, s.h, s.h0)).collect(),
    };
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let t_max = series.last().map_or(1.0, |s| s.0).max(1e-9);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &(_, a, b) in &series {
        for v in [a, b] {
            if v.is_finite() {
                y_min = y_min.min(v);
                y_max = y_max.max(v);
            }
        }
    }
    if !y_min.is_finite() {
        y_min = -1.0;
        y_max = 1.0;
    }
    y_min = y_min.min(0.0) - 0.05;
    y_max = y_max.max(0.0) + 0.05;
    let sx = |t: f64| pad + (w - 2.0 * pad) * t / t_max;
    let sy = |v: f64| h - pad - (h - 2.0 * pad) * (v - y_min) / (y_max - y_min);
    let polyline = |pick: fn(&(f64, f64, f64)) -> f64, color: &str| {
        let pts: Vec<String> = series
            .iter()
            .filter(|s| pick(s).is_finite())
            .map(|s| format!("{:.2},{:.2}", sx(s.0), sy(pick(s))))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        )
    };
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\
         <line x1=\"{pad}\" y1=\"{z}\" x2=\"{xe}\" y2=\"{z}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\
         {h_line}{h0_line}\
         <text x=\"{pad}\" y=\"20\" font-family=\"monospace\" font-size=\"12\">h (red), h0 (blue) vs t</text>\
         </svg>",
        z = sy(0.0),
        xe = w - pad,
        h_line = polyline(|s| s.1, "#c22"),
        h0_line = polyline(|s| s.2, "#36c"),
    )
}

/// SVG trace of R e3 on the unit sphere with the safe-cone boundary, in an
/// oblique orthographic projection. Euclidean runs trace position instead.
pub fn sphere_trace_svg(output: &SimOutput, theta_safe: f64) -> String {
    let pts: Vec<Vector3<f64>> = match output {
        SimOutput::Satellite(t) => {
            t.samples.iter().map(|s| s.q.0 * Vector3::z()).collect()
        }
        SimOutput::Euclidean(t) => t
            .samples
            .iter()
            .map(|s| Vector3::new(s.q[0], s.q[1], s.q[2]))
            .collect(),
    };
    let (w, h) = (420.0, 420.0);
    let tilt = -1.05f64; // view tilt about x
    let project = |p: &Vector3<f64>| {
        let y = p.y * tilt.cos() - p.z * tilt.sin();
        (w / 2.0 + p.x * 160.0, h / 2.0 + y * 160.0)
    };
    let path_of = |pts: &[Vector3<f64>]| {
        pts.iter()
            .map(|p| {
                let (x, y) = project(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let cone: Vec<Vector3<f64>> = (0..=128)
        .map(|i| {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / 128.0;
            Vector3::new(
                theta_safe.sin() * phi.cos(),
                theta_safe.sin() * phi.sin(),
                theta_safe.cos(),
            )
        })
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\
         <circle cx=\"{cx}\" cy=\"{cy}\" r=\"160\" fill=\"none\" stroke=\"#ccc\"/>\
         <polyline fill=\"none\" stroke=\"#2a2\" stroke-width=\"1.5\" points=\"{cone}\"/>\
         <polyline fill=\"none\" stroke=\"#c22\" stroke-width=\"1.5\" points=\"{trace}\"/>\
         </svg>",
        cx = w / 2.0,
        cy = h / 2.0,
        cone = path_of(&cone),
        trace = path_of(&pts),
    )
}

/// Run a scenario and write its artifacts into `dir`.
pub fn run_and_export(
    cfg: &ScenarioConfig,
    dir: &Path,
    csv: bool,
    svg: bool,
) -> Result<RunReport> {
    let (output, report) = run_scenario(cfg)?;
    std::fs::create_dir_all(dir)?;
    write_atomic(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serialization"),
    )?;
    if csv {
        write_atomic(&dir.join("trajectory.csv"), &trajectory_csv(&output))?;
    }
    if svg {
        write_atomic(&dir.join("h_plot.svg"), &h_plot_svg(&output))?;
        write_atomic(&dir.join("sphere_trace.svg"), &sphere_trace_svg(&output, cfg.theta_safe))?;
    }
    Ok(report)
}

/// Sweepable parameter names.
pub fn apply_sweep_param(cfg: &ScenarioConfig, param: &str, value: f64) -> Result<ScenarioConfig> {
    let mut out = cfg.clone();
    match param {
        "epsilon" => out.epsilon = value,
        "delta" => out.delta = value,
        "alpha-gain" => {
            out.alpha = match out.alpha {
                AlphaSpec::Linear { .. } => AlphaSpec::Linear { gain: value },
                AlphaSpec::Cubic { .. } => AlphaSpec::Cubic { gain: value },
            }
        }
        "theta-safe" => out.theta_safe = value,
        other => return Err(Error::Config(format!("unknown sweep parameter '{other}'"))),
    }
    out.validate()?;
    Ok(out)
}

/// Run the sweep in parallel workers; returns (value, report) per value in
/// input order.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    param: &str,
    values: &[f64],
) -> Result<Vec<(f64, RunReport)>> {
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|&v| apply_sweep_param(cfg, param, v))
        .collect::<Result<_>>()?;
    let mut results: Vec<Option<Result<RunReport>>> = Vec::new();
    results.resize_with(values.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for c in &configs {
            handles.push(scope.spawn(move || run_scenario(c).map(|(_, r)| r)));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("sweep worker panicked"));
        }
    });
    values
        .iter()
        .zip(results)
        .map(|(&v, r)| r.expect("worker slot filled").map(|rep| (v, rep)))
        .collect()
}

/// Summary CSV for a sweep: value, min_h0, max_torque_norm.
pub fn sweep_summary_csv(rows: &[(f64, RunReport)]) -> String {
    let mut out = String::from("value,min_h0,max_torque_norm\n");
    for (v, r) in rows {
        let _ = writeln!(out, "{},{},{}", fmt17(*v), fmt17(r.min_h0), fmt17(r.max_torque_norm));
    }
    out
}
