//! Closed-loop validation plant: a 3-link serial manipulator under three
//! independent Fuzzy-PI channels.
//!
//! The model is a standard point-mass rigid-body arm: link 1 rotates about
//! the vertical axis, links 2 and 3 swing in the plane that rotates with
//! it. Masses sit at the distal ends of links 2 and 3, each joint carries a
//! rotor inertia and viscous friction. The inertia matrix, Coriolis matrix
//! (Christoffel form) and gravity vector all derive from one Lagrangian, so
//! the unforced frictionless model conserves energy exactly up to the
//! integration error; the tests lean on that.
//!
//! Angles are controlled in degrees at the sensor boundary and normalized
//! by 180 before entering the fixed-point controllers, which therefore run
//! with `y_max = 1`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerConfig, ControllerError, StepFlags};
use crate::inference::RuleBase;
use crate::membership::MembershipBank;
use crate::oracle::fim_reference;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid plant parameters: {0}")]
    BadParams(String),
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("simulation diverged (non-finite state) at t = {t}")]
    NonFinite { t: f64 },
    #[error("inertia matrix is singular at t = {t}")]
    SingularInertia { t: f64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Geometry, masses and losses of the manipulator. The segment lengths
/// follow the reference device (`l1 = l2 = 0.135 m`, base offset
/// `l3 = 0.025 m`, tool offset `l4 = l1 + 0.035 m`); masses, rotor inertias
/// and friction are documented defaults chosen for a well-damped closed
/// loop, not manufacturer data. `l3` and `l4` do not enter the point-mass
/// dynamics (the base offset shifts no mass off the yaw axis and no mass is
/// assigned to the tool tip); they are kept for the kinematic record.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    /// Point masses at the distal ends of links 2 and 3; index 0 is unused
    /// by the dynamics (the base link only spins) but kept positive.
    pub masses: [f64; 3],
    /// Viscous joint friction, N*m*s/rad.
    pub friction: [f64; 3],
    /// Rotor inertia added to each joint's diagonal.
    pub rotor_inertia: [f64; 3],
    pub gravity: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            l1: 0.135,
            l2: 0.135,
            l3: 0.025,
            l4: 0.170,
            masses: [0.20, 0.15, 0.10],
            friction: [1.2, 1.2, 0.8],
            rotor_inertia: [5e-4, 2e-4, 1e-4],
            gravity: 9.81,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = self
            .masses
            .iter()
            .chain(&self.friction)
            .chain(&self.rotor_inertia);
        for v in positive {
            if !(v.is_finite() && *v > 0.0) {
                return Err(SimError::BadParams(
                    "masses, friction and rotor inertia must be positive".into(),
                ));
            }
        }
        if !(self.l1.is_finite() && self.l2.is_finite()) || self.l1 <= 0.0 || self.l2 <= 0.0 {
            return Err(SimError::BadParams("link lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Joint angles (rad) and velocities (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub theta: Vector3<f64>,
    pub theta_dot: Vector3<f64>,
}

impl PlantState {
    pub fn at_rest(theta: Vector3<f64>) -> Self {
        Self {
            theta,
            theta_dot: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta
            .iter()
            .chain(self.theta_dot.iter())
            .all(|v| v.is_finite())
    }
}

/// Inertia matrix (rotor inertias on the diagonal keep it positive
/// definite in every configuration).
pub fn mass_matrix(theta: &Vector3<f64>, p: &PlantParams) -> Matrix3<f64> {
    let (m2, m3) = (p.masses[1], p.masses[2]);
    let (l1, l2) = (p.l1, p.l2);
    let c2 = theta[1].cos();
    let c23 = (theta[1] + theta[2]).cos();
    let c3 = theta[2].cos();
    let r3 = l1 * c2 + l2 * c23;

    let m11 = p.rotor_inertia[0] + m2 * l1 * l1 * c2 * c2 + m3 * r3 * r3;
    let m22 = p.rotor_inertia[1] + m2 * l1 * l1 + m3 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c3);
    let m23 = m3 * (l2 * l2 + l1 * l2 * c3);
    let m33 = p.rotor_inertia[2] + m3 * l2 * l2;

    Matrix3::new(m11, 0.0, 0.0, 0.0, m22, m23, 0.0, m23, m33)
}

/// Coriolis/centrifugal matrix in Christoffel form, consistent with
/// [`mass_matrix`] (`dM/dt - 2C` is skew-symmetric).
pub fn coriolis_matrix(
    theta: &Vector3<f64>,
    theta_dot: &Vector3<f64>,
    p: &PlantParams,
) -> Matrix3<f64> {
    let (m2, m3) = (p.masses[1], p.masses[2]);
    let (l1, l2) = (p.l1, p.l2);
    let (s2, c2) = theta[1].sin_cos();
    let (s23, c23) = (theta[1] + theta[2]).sin_cos();
    let s3 = theta[2].sin();
    let r3 = l1 * c2 + l2 * c23;

    // partial derivatives of the mass matrix entries
    let d2 = -2.0 * m2 * l1 * l1 * c2 * s2 + 2.0 * m3 * r3 * (-l1 * s2 - l2 * s23);
    let d3 = 2.0 * m3 * r3 * (-l2 * s23);
    let e3 = -2.0 * m3 * l1 * l2 * s3;

    let (q1, q2, q3) = (theta_dot[0], theta_dot[1], theta_dot[2]);
    Matrix3::new(
        0.5 * (d2 * q2 + d3 * q3),
        0.5 * d2 * q1,
        0.5 * d3 * q1,
        -0.5 * d2 * q1,
        0.5 * e3 * q3,
        0.5 * e3 * (q2 + q3),
        -0.5 * d3 * q1,
        -0.5 * e3 * q2,
        0.0,
    )
}

/// Gravity torque vector.
pub fn gravity_vector(theta: &Vector3<f64>, p: &PlantParams) -> Vector3<f64> {
    let (m2, m3) = (p.masses[1], p.masses[2]);
    let c2 = theta[1].cos();
    let c23 = (theta[1] + theta[2]).cos();
    Vector3::new(
        0.0,
        p.gravity * ((m2 + m3) * p.l1 * c2 + m3 * p.l2 * c23),
        p.gravity * m3 * p.l2 * c23,
    )
}

/// Total mechanical energy (kinetic plus potential), the conservation
/// oracle for the unforced frictionless model.
pub fn energy(state: &PlantState, p: &PlantParams) -> f64 {
    let m = mass_matrix(&state.theta, p);
    let kinetic = 0.5 * state.theta_dot.dot(&(m * state.theta_dot));
    let (m2, m3) = (p.masses[1], p.masses[2]);
    let s2 = state.theta[1].sin();
    let s23 = (state.theta[1] + state.theta[2]).sin();
    let potential = p.gravity * (m2 * p.l1 * s2 + m3 * (p.l1 * s2 + p.l2 * s23));
    kinetic + potential
}

/// Joint accelerations under the applied torques:
/// `M(theta) acc + C(theta, vel) vel + g(theta) - f(vel) = tau` with
/// viscous friction `f = -b vel`.
pub fn dynamics(
    state: &PlantState,
    tau: &Vector3<f64>,
    p: &PlantParams,
) -> Result<Vector3<f64>, SimError> {
    if !state.is_finite() {
        return Err(SimError::NonFinite { t: f64::NAN });
    }
    let m = mass_matrix(&state.theta, p);
    let c = coriolis_matrix(&state.theta, &state.theta_dot, p);
    let g = gravity_vector(&state.theta, p);
    let friction = Vector3::new(
        -p.friction[0] * state.theta_dot[0],
        -p.friction[1] * state.theta_dot[1],
        -p.friction[2] * state.theta_dot[2],
    );
    let rhs = tau - c * state.theta_dot - g + friction;
    m.try_inverse()
        .map(|inv| inv * rhs)
        .ok_or(SimError::SingularInertia { t: f64::NAN })
}

/// One fixed-step RK4 update with the torque held over the step.
pub fn rk4_step(
    state: &PlantState,
    tau: &Vector3<f64>,
    dt: f64,
    p: &PlantParams,
) -> Result<PlantState, SimError> {
    let deriv = |s: &PlantState| -> Result<(Vector3<f64>, Vector3<f64>), SimError> {
        Ok((s.theta_dot, dynamics(s, tau, p)?))
    };
    let (k1_q, k1_v) = deriv(state)?;
    let mid1 = PlantState {
        theta: state.theta + 0.5 * dt * k1_q,
        theta_dot: state.theta_dot + 0.5 * dt * k1_v,
    };
    let (k2_q, k2_v) = deriv(&mid1)?;
    let mid2 = PlantState {
        theta: state.theta + 0.5 * dt * k2_q,
        theta_dot: state.theta_dot + 0.5 * dt * k2_v,
    };
    let (k3_q, k3_v) = deriv(&mid2)?;
    let end = PlantState {
        theta: state.theta + dt * k3_q,
        theta_dot: state.theta_dot + dt * k3_v,
    };
    let (k4_q, k4_v) = deriv(&end)?;
    Ok(PlantState {
        theta: state.theta + dt / 6.0 * (k1_q + 2.0 * k2_q + 2.0 * k3_q + k4_q),
        theta_dot: state.theta_dot + dt / 6.0 * (k1_v + 2.0 * k2_v + 2.0 * k3_v + k4_v),
    })
}

/// Piecewise-constant set points, one list per joint, switching every
/// `segment_s` seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySchedule {
    pub segment_s: f64,
    pub joint_deg: [Vec<f64>; 3],
}

impl Default for TrajectorySchedule {
    fn default() -> Self {
        Self {
            segment_s: 2.0,
            joint_deg: [
                vec![90.0, 0.0, 45.0, -45.0, 90.0],
                vec![45.0, 45.0, 0.0, 22.5, 45.0],
                vec![45.0, 22.5, 0.0, 22.5, 45.0],
            ],
        }
    }
}

impl TrajectorySchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.segment_s.is_finite() || self.segment_s <= 0.0 {
            return Err(SimError::BadSchedule("segment_s must be positive".into()));
        }
        let len = self.joint_deg[0].len();
        if len == 0 || self.joint_deg.iter().any(|j| j.len() != len) {
            return Err(SimError::BadSchedule(
                "all three joints need the same nonzero segment count".into(),
            ));
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.joint_deg[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.segment_s * self.segments() as f64
    }

    pub fn segment_at(&self, t: f64) -> usize {
        ((t / self.segment_s) as usize).min(self.segments() - 1)
    }

    pub fn setpoint_deg(&self, joint: usize, t: f64) -> f64 {
        self.joint_deg[joint][self.segment_at(t)]
    }
}

/// Which controller implementation closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopEngine {
    /// The bit-exact fixed-point channels.
    FixedPoint,
    /// Double-precision channels around the reference inference, the
    /// yardstick the fixed runs are compared against.
    Reference,
}

/// Mirror of the control loop in plain f64 around [`fim_reference`].
struct ReferenceChannel {
    kp: f64,
    ki: f64,
    v_min: f64,
    v_max: f64,
    prev_e: f64,
    v: f64,
    div_by_zero: bool,
}

impl ReferenceChannel {
    fn new(cfg: &ControllerConfig) -> Self {
        Self {
            kp: cfg.kp,
            ki: cfg.ki,
            v_min: cfg.v_min,
            v_max: cfg.v_max,
            prev_e: 0.0,
            v: 0.0,
            div_by_zero: false,
        }
    }

    fn step(&mut self, y: f64, y_sp: f64, bank: &MembershipBank, rules: &RuleBase) -> f64 {
        let e = y_sp - y;
        let e_d = e - self.prev_e;
        self.prev_e = e;
        // the gain stages saturate into (-1, 1) like the sV.N hardware path
        let x0 = (self.kp * e_d).clamp(-1.0, 1.0);
        let x1 = (self.ki * e).clamp(-1.0, 1.0);
        let (v_d, flag) = fim_reference(x0, x1, bank, rules);
        self.div_by_zero |= flag;
        self.v = (self.v + v_d).clamp(self.v_min, self.v_max);
        self.v
    }
}

/// Downsampled trajectory log of one closed-loop run.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub t: Vec<f64>,
    pub theta_deg: Vec<[f64; 3]>,
    pub sp_deg: Vec<[f64; 3]>,
    pub tau: Vec<[f64; 3]>,
}

/// Settling figures for one joint over one schedule segment. The band is
/// five percent of the larger of the set point magnitude and the step
/// amplitude entering the segment, so a return-to-zero segment is judged
/// against the size of its transition.
#[derive(Debug, Clone, Copy)]
pub struct SegmentMetric {
    pub joint: usize,
    pub segment: usize,
    pub sp_deg: f64,
    pub step_deg: f64,
    pub band_deg: f64,
    /// Largest |error| over the trailing tenth of the segment.
    pub tail_err_deg: f64,
    /// |error| at the last sample of the segment.
    pub end_err_deg: f64,
}

impl SegmentMetric {
    pub fn settled(&self) -> bool {
        self.tail_err_deg <= self.band_deg
    }
}

/// One finished closed-loop run.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub log: RunLog,
    pub metrics: Vec<SegmentMetric>,
    pub flags: StepFlags,
}

/// Runs the three-channel loop for `duration_s` at the controllers' sample
/// time. Each tick samples the joint angles, steps the three controllers
/// (sequentially, for determinism), applies the commanded torques and
/// integrates the plant one step with RK4.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop(
    cfgs: &[ControllerConfig; 3],
    engine: LoopEngine,
    bank: &MembershipBank,
    rules: &RuleBase,
    schedule: &TrajectorySchedule,
    params: &PlantParams,
    duration_s: f64,
    log_every: usize,
) -> Result<SimRun, SimError> {
    params.validate()?;
    schedule.validate()?;
    if cfgs.iter().any(|c| c.t_s != cfgs[0].t_s) {
        return Err(SimError::BadParams(
            "all three channels must share one sample time".into(),
        ));
    }
    let t_s = cfgs[0].t_s;
    let steps = (duration_s / t_s).round() as usize;
    let log_every = log_every.max(1);

    let mut fixed: Vec<Controller> = Vec::new();
    let mut reference: Vec<ReferenceChannel> = Vec::new();
    match engine {
        LoopEngine::FixedPoint => {
            for cfg in cfgs {
                fixed.push(Controller::new(*cfg)?);
            }
        }
        LoopEngine::Reference => {
            for cfg in cfgs {
                cfg.validate()?;
                reference.push(ReferenceChannel::new(cfg));
            }
        }
    }

    let mut state = PlantState::at_rest(Vector3::zeros());
    let mut log = RunLog::default();
    let mut tracker = MetricsTracker::new(schedule, t_s);

    for step_idx in 0..steps {
        let t = step_idx as f64 * t_s;
        let mut sp = [0.0f64; 3];
        let mut tau = Vector3::zeros();
        let theta_deg = [
            state.theta[0].to_degrees(),
            state.theta[1].to_degrees(),
            state.theta[2].to_degrees(),
        ];
        for j in 0..3 {
            sp[j] = schedule.setpoint_deg(j, t);
            // the sensor normalizes degrees into [-1, 1] ahead of the
            // fixed-point boundary
            let y = theta_deg[j] / 180.0;
            let y_sp = sp[j] / 180.0;
            tau[j] = match engine {
                LoopEngine::FixedPoint => fixed[j].step(y, y_sp, bank, rules)?.r.value(),
                LoopEngine::Reference => reference[j].step(y, y_sp, bank, rules),
            };
            debug_assert!(tau[j] >= cfgs[j].v_min && tau[j] <= cfgs[j].v_max);
        }

        if step_idx % log_every == 0 {
            log.t.push(t);
            log.theta_deg.push(theta_deg);
            log.sp_deg.push(sp);
            log.tau.push([tau[0], tau[1], tau[2]]);
        }
        tracker.observe(step_idx, &theta_deg, &sp);

        state = rk4_step(&state, &tau, t_s, params)?;
        if !state.is_finite() {
            return Err(SimError::NonFinite { t });
        }
    }
    tracker.finish(steps, &state);

    let flags = match engine {
        LoopEngine::FixedPoint => fixed.iter().fold(StepFlags::default(), |acc, c| StepFlags {
            input_overrange: acc.input_overrange | c.sticky_flags().input_overrange,
            div_by_zero: acc.div_by_zero | c.sticky_flags().div_by_zero,
        }),
        LoopEngine::Reference => StepFlags {
            input_overrange: false,
            div_by_zero: reference.iter().any(|c| c.div_by_zero),
        },
    };

    Ok(SimRun {
        log,
        metrics: tracker.metrics,
        flags,
    })
}

struct MetricsTracker {
    segment_s: f64,
    t_s: f64,
    segments: usize,
    sp: [Vec<f64>; 3],
    prev_sp: [f64; 3],
    tail_max: [f64; 3],
    last_theta: [f64; 3],
    current_segment: usize,
    metrics: Vec<SegmentMetric>,
}

impl MetricsTracker {
    fn new(schedule: &TrajectorySchedule, t_s: f64) -> Self {
        Self {
            segment_s: schedule.segment_s,
            t_s,
            segments: schedule.segments(),
            sp: schedule.joint_deg.clone(),
            prev_sp: [0.0; 3], // the plant starts at rest at zero
            tail_max: [0.0; 3],
            last_theta: [0.0; 3],
            current_segment: 0,
            metrics: Vec::new(),
        }
    }

    fn observe(&mut self, step_idx: usize, theta_deg: &[f64; 3], sp: &[f64; 3]) {
        let t = step_idx as f64 * self.t_s;
        let seg = ((t / self.segment_s) as usize).min(self.segments - 1);
        if seg != self.current_segment {
            self.close_segment();
            self.current_segment = seg;
        }
        let within = t - seg as f64 * self.segment_s;
        if within >= 0.9 * self.segment_s {
            for j in 0..3 {
                self.tail_max[j] = self.tail_max[j].max((theta_deg[j] - sp[j]).abs());
            }
        }
        self.last_theta = *theta_deg;
    }

    fn finish(&mut self, _steps: usize, state: &PlantState) {
        self.last_theta = [
            state.theta[0].to_degrees(),
            state.theta[1].to_degrees(),
            state.theta[2].to_degrees(),
        ];
        self.close_segment();
    }

    fn close_segment(&mut self) {
        let seg = self.current_segment;
        for j in 0..3 {
            let sp = self.sp[j][seg];
            let step = (sp - self.prev_sp[j]).abs();
            let band = 0.05 * sp.abs().max(step);
            self.metrics.push(SegmentMetric {
                joint: j,
                segment: seg,
                sp_deg: sp,
                step_deg: step,
                band_deg: band,
                tail_err_deg: self.tail_max[j].max((self.last_theta[j] - sp).abs()),
                end_err_deg: (self.last_theta[j] - sp).abs(),
            });
            self.prev_sp[j] = sp;
        }
        self.tail_max = [0.0; 3];
    }
}

/// Largest per-joint trajectory gap between two runs, ignoring the first
/// `settle_window_s` of every segment (the transient window).
pub fn trajectory_divergence(
    a: &RunLog,
    b: &RunLog,
    schedule: &TrajectorySchedule,
    settle_window_s: f64,
) -> f64 {
    assert_eq!(a.t.len(), b.t.len(), "runs must share the sampling grid");
    let mut worst = 0.0f64;
    for (i, &t) in a.t.iter().enumerate() {
        let seg_start = schedule.segment_at(t) as f64 * schedule.segment_s;
        if t - seg_start < settle_window_s {
            continue;
        }
        for j in 0..3 {
            worst = worst.max((a.theta_deg[i][j] - b.theta_deg[i][j]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_bank_shapes, default_rule_rows};

    fn params() -> PlantParams {
        PlantParams::default()
    }

    #[test]
    fn gravity_compensation_keeps_rest_state() {
        let p = params();
        let state = PlantState::at_rest(Vector3::new(0.3, 0.7, -0.4));
        let tau = gravity_vector(&state.theta, &p);
        let acc = dynamics(&state, &tau, &p).unwrap();
        assert!(acc.norm() < 1e-12, "acc = {acc:?}");
    }

    #[test]
    fn zero_everything_stays_at_rest() {
        let p = PlantParams {
            gravity: 0.0,
            ..params()
        };
        let state = PlantState::at_rest(Vector3::new(0.1, 0.2, 0.3));
        let acc = dynamics(&state, &Vector3::zeros(), &p).unwrap();
        assert!(acc.norm() < 1e-15);
    }

    #[test]
    fn unforced_frictionless_energy_is_conserved() {
        let mut p = params();
        p.friction = [1e-12; 3]; // validation requires positive friction
        let mut state = PlantState {
            theta: Vector3::new(0.3, 0.5, -0.4),
            theta_dot: Vector3::new(0.8, -0.6, 0.5),
        };
        let e0 = energy(&state, &p);
        assert!(
            e0.abs() > 1e-3,
            "pick an initial condition with real energy"
        );
        let dt = 1e-3;
        for _ in 0..10_000 {
            state = rk4_step(&state, &Vector3::zeros(), dt, &p).unwrap();
        }
        let drift = (energy(&state, &p) - e0).abs() / e0.abs();
        assert!(drift < 1e-3, "energy drift {drift}");
    }

    #[test]
    fn coriolis_satisfies_skew_symmetry() {
        // dM/dt - 2C must be skew-symmetric when C comes from Christoffel
        // symbols of M; check against a finite-difference dM/dt.
        let p = params();
        let theta = Vector3::new(0.4, 0.9, -0.7);
        let theta_dot = Vector3::new(1.3, -0.8, 0.6);
        let eps = 1e-6;
        let m_plus = mass_matrix(&(theta + eps * theta_dot), &p);
        let m_minus = mass_matrix(&(theta - eps * theta_dot), &p);
        let m_dot = (m_plus - m_minus) / (2.0 * eps);
        let s = m_dot - 2.0 * coriolis_matrix(&theta, &theta_dot, &p);
        let sym = s + s.transpose();
        assert!(sym.norm() < 1e-6, "symmetric residual {}", sym.norm());
    }

    #[test]
    fn schedule_defaults_match_experiment_table() {
        let s = TrajectorySchedule::default();
        assert_eq!(s.segment_s, 2.0);
        assert_eq!(s.joint_deg[0], vec![90.0, 0.0, 45.0, -45.0, 90.0]);
        assert_eq!(s.joint_deg[1], vec![45.0, 45.0, 0.0, 22.5, 45.0]);
        assert_eq!(s.joint_deg[2], vec![45.0, 22.5, 0.0, 22.5, 45.0]);
        assert_eq!(s.setpoint_deg(0, 0.0), 90.0);
        assert_eq!(s.setpoint_deg(0, 3.999), 0.0);
        assert_eq!(s.setpoint_deg(0, 4.0), 45.0);
        assert_eq!(s.setpoint_deg(2, 11.0), 45.0); // clamps to the last segment
    }

    #[test]
    fn short_closed_loop_run_moves_toward_setpoint() {
        let cfg = ControllerConfig {
            n_bits: 12,
            t_bits: 6,
            ..ControllerConfig::default()
        };
        let bank =
            MembershipBank::compile(&default_bank_shapes(), cfg.n_bits, cfg.t_bits, cfg.rounding)
                .unwrap();
        let rules =
            RuleBase::compile(&default_rule_rows(), 7, 7, cfg.t_bits, cfg.rounding).unwrap();
        let schedule = TrajectorySchedule {
            segment_s: 0.5,
            joint_deg: [vec![30.0], vec![20.0], vec![10.0]],
        };
        let run = simulate_closed_loop(
            &[cfg; 3],
            LoopEngine::FixedPoint,
            &bank,
            &rules,
            &schedule,
            &params(),
            0.5,
            100,
        )
        .unwrap();
        let last = run.log.theta_deg.last().unwrap();
        assert!((last[0] - 30.0).abs() < 3.0, "joint 1 at {}", last[0]);
        assert!((last[1] - 20.0).abs() < 3.0, "joint 2 at {}", last[1]);
        assert!((last[2] - 10.0).abs() < 3.0, "joint 3 at {}", last[2]);
        // torque bound observed at the plant boundary
        for tau in run.log.tau.iter().flatten() {
            assert!(*tau >= cfg.v_min && *tau <= cfg.v_max);
        }
    }

    #[test]
    fn zero_error_start_holds_against_gravity() {
        // matching set point and zero initial error: the joints may sag
        // only within the band gravity can pull before the loop reacts
        let cfg = ControllerConfig {
            n_bits: 12,
            t_bits: 6,
            ..ControllerConfig::default()
        };
        let bank =
            MembershipBank::compile(&default_bank_shapes(), cfg.n_bits, cfg.t_bits, cfg.rounding)
                .unwrap();
        let rules =
            RuleBase::compile(&default_rule_rows(), 7, 7, cfg.t_bits, cfg.rounding).unwrap();
        let schedule = TrajectorySchedule {
            segment_s: 0.2,
            joint_deg: [vec![0.0], vec![0.0], vec![0.0]],
        };
        let run = simulate_closed_loop(
            &[cfg; 3],
            LoopEngine::FixedPoint,
            &bank,
            &rules,
            &schedule,
            &params(),
            0.2,
            20,
        )
        .unwrap();
        for (j, theta) in run.log.theta_deg.iter().flat_map(|t| t.iter().enumerate()) {
            assert!(theta.abs() < 0.5, "joint {j} drifted to {theta} deg");
        }
    }

    #[test]
    fn closed_loop_runs_are_deterministic() {
        let cfg = ControllerConfig {
            n_bits: 10,
            t_bits: 4,
            ..ControllerConfig::default()
        };
        let bank =
            MembershipBank::compile(&default_bank_shapes(), cfg.n_bits, cfg.t_bits, cfg.rounding)
                .unwrap();
        let rules =
            RuleBase::compile(&default_rule_rows(), 7, 7, cfg.t_bits, cfg.rounding).unwrap();
        let schedule = TrajectorySchedule {
            segment_s: 0.05,
            joint_deg: [vec![15.0, -10.0], vec![5.0, 20.0], vec![-5.0, 10.0]],
        };
        let run = || {
            simulate_closed_loop(
                &[cfg; 3],
                LoopEngine::FixedPoint,
                &bank,
                &rules,
                &schedule,
                &params(),
                0.1,
                10,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log.theta_deg, b.log.theta_deg);
        assert_eq!(a.log.tau, b.log.tau);
    }

    #[test]
    fn divergence_helper_skips_transients() {
        let schedule = TrajectorySchedule::default();
        let mut a = RunLog::default();
        let mut b = RunLog::default();
        for i in 0..20 {
            let t = i as f64 * 0.5;
            a.t.push(t);
            b.t.push(t);
            let gap = if t % 2.0 < 1.0 { 10.0 } else { 0.25 };
            a.theta_deg.push([gap, 0.0, 0.0]);
            b.theta_deg.push([0.0, 0.0, 0.0]);
            a.sp_deg.push([0.0; 3]);
            b.sp_deg.push([0.0; 3]);
            a.tau.push([0.0; 3]);
            b.tau.push([0.0; 3]);
        }
        // the 10-degree gaps all live in the first second of each segment
        assert_eq!(trajectory_divergence(&a, &b, &schedule, 1.0), 0.25);
    }
}
