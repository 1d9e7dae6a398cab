//! Closed-loop episodes: nominal control, barrier constraint, QP filter,
//! integration and logging, one fixed step at a time.

mod record;
mod verify;

pub use self::record::{LogRecord, LogSummary, RecordStatus, TrajectoryLog};
pub use self::verify::{verify_log, CheckOutcome, CheckResult, InvariantReport};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::{self, ControlError, GainSet, Setpoint};
use crate::dynamics::{
    self, point_mass_derivative, rk4_step, tuav_derivative, DynamicsError, PointMassState,
    SystemParams, TuavState, INPUT_DIM,
};
use crate::qp::{self, QpError, QpProblem, QpStatus};
use crate::safety::{self, CbfMode, CbfSpec, HalfspaceConstraint};

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dynamics fault at t = {t}: {source}")]
    Dynamics { t: f64, source: DynamicsError },
    #[error("control fault at t = {t}: {source}")]
    Control { t: f64, source: ControlError },
    #[error("QP error at t = {t}: {source}")]
    Qp { t: f64, source: QpError },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `ξ̇ = u`, velocity input.
    SingleIntegrator,
    /// `ξ̈ = u`, acceleration input.
    DoubleIntegrator,
    /// Full rigid-body TUAV with winch; filtered through its point-mass outer
    /// loop when the filter is enabled.
    FullTuav,
}

impl Model {
    pub const ALL: [Model; 3] = [
        Model::SingleIntegrator,
        Model::DoubleIntegrator,
        Model::FullTuav,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Model::SingleIntegrator => "single_integrator",
            Model::DoubleIntegrator => "double_integrator",
            Model::FullTuav => "full_tuav",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Relative degree of the barrier under this model's filtered input.
    pub fn cbf_mode(&self) -> CbfMode {
        match self {
            Model::SingleIntegrator => CbfMode::FirstOrder,
            Model::DoubleIntegrator | Model::FullTuav => CbfMode::ExponentialSecondOrder,
        }
    }

    /// Number of input channels the log reports.
    pub fn input_dim(&self) -> usize {
        match self {
            Model::SingleIntegrator | Model::DoubleIntegrator => 3,
            Model::FullTuav => INPUT_DIM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Setpoint,
    LinearTrack,
    CircularTrack,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Setpoint,
        ScenarioKind::LinearTrack,
        ScenarioKind::CircularTrack,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Setpoint => "setpoint",
            ScenarioKind::LinearTrack => "linear_track",
            ScenarioKind::CircularTrack => "circular_track",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Zero input for the tick.
    HoldZero,
    /// Nominal input, clipped to the box bounds when configured.
    ClipNominal,
}

impl InfeasiblePolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            InfeasiblePolicy::HoldZero => "hold_zero",
            InfeasiblePolicy::ClipNominal => "clip_nominal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [InfeasiblePolicy::HoldZero, InfeasiblePolicy::ClipNominal]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

/// Reference trajectory parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Setpoint, or end point of the linear track.
    pub target: [f64; 3],
    /// Circle centre.
    pub center: [f64; 3],
    /// Circle radius, m.
    pub radius: f64,
    /// Circle angular rate, rad/s.
    pub angular_rate: f64,
    /// Linear-track reference speed, m/s.
    pub speed: f64,
    /// Initial position; the vehicle starts at rest.
    pub start: [f64; 3],
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Setpoint,
            target: [2.0, 2.0, 5.0],
            center: [0.0, 0.0, 6.0],
            radius: 15.0,
            angular_rate: 0.2,
            speed: 1.0,
            start: [0.0; 3],
        }
    }
}

impl ScenarioSpec {
    /// Reference position and velocity at time `t`.
    pub fn reference(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        match self.kind {
            ScenarioKind::Setpoint => (Vector3::from(self.target), Vector3::zeros()),
            ScenarioKind::LinearTrack => {
                let start = Vector3::from(self.start);
                let delta = Vector3::from(self.target) - start;
                let length = delta.norm();
                if length == 0.0 {
                    return (start, Vector3::zeros());
                }
                let dir = delta / length;
                let travelled = self.speed * t;
                if travelled >= length {
                    (Vector3::from(self.target), Vector3::zeros())
                } else {
                    (start + dir * travelled, dir * self.speed)
                }
            }
            ScenarioKind::CircularTrack => {
                let (s, c) = (self.angular_rate * t).sin_cos();
                let center = Vector3::from(self.center);
                (
                    center + Vector3::new(c, s, 0.0) * self.radius,
                    Vector3::new(-s, c, 0.0) * (self.radius * self.angular_rate),
                )
            }
        }
    }
}

/// Upper bound on steps per episode; the log is held in memory.
pub const MAX_STEPS: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: Model,
    pub scenario: ScenarioSpec,
    pub duration: f64,
    pub dt: f64,
    pub gains: GainSet,
    /// Barrier parameters. `mode` is overridden by [`Model::cbf_mode`].
    pub cbf: CbfSpec,
    pub params: SystemParams,
    pub filter_enabled: bool,
    pub infeasible_policy: InfeasiblePolicy,
    /// Symmetric box on every filtered input component (point-mass models).
    pub input_bound: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: Model::DoubleIntegrator,
            scenario: ScenarioSpec::default(),
            duration: 60.0,
            dt: 0.01,
            gains: GainSet::default(),
            cbf: CbfSpec::default(),
            params: SystemParams::default(),
            filter_enabled: true,
            infeasible_policy: InfeasiblePolicy::HoldZero,
            input_bound: None,
        }
    }
}

impl ScenarioConfig {
    /// In-sphere setpoint (2, 2, 5).
    pub fn in_sphere_setpoint() -> Self {
        Self::default()
    }

    /// Setpoint (10, 10, 8), about 16.1 m from the anchor.
    pub fn out_of_sphere_setpoint() -> Self {
        let mut c = Self::default();
        c.scenario.target = [10.0, 10.0, 8.0];
        c
    }

    /// Horizontal circle of radius 15 m centred at (0, 0, 6).
    pub fn over_radius_circle() -> Self {
        let mut c = Self::default();
        c.scenario.kind = ScenarioKind::CircularTrack;
        c
    }

    pub fn with_model(mut self, model: Model) -> Self {
        self.model = model;
        if model == Model::FullTuav {
            self.filter_enabled = false;
        }
        self
    }

    pub fn with_l_max(mut self, l_max: f64) -> Self {
        self.cbf.l_max = l_max;
        self.params.l_max = l_max;
        self
    }

    /// Number of integration steps; the log holds one more record.
    pub fn step_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Barrier spec as used by the filter for this model.
    pub fn effective_cbf(&self) -> CbfSpec {
        let spec = CbfSpec {
            mode: self.model.cbf_mode(),
            ..self.cbf
        };
        match spec.mode {
            CbfMode::FirstOrder => spec.held_over(self.dt),
            CbfMode::ExponentialSecondOrder => spec,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err("sim.duration must be > 0".into());
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err("sim.dt must be in (0, 0.1]".into());
        }
        if self.duration / self.dt > MAX_STEPS {
            return Err(format!("sim.duration / sim.dt must not exceed {MAX_STEPS:e} steps"));
        }
        let sc = &self.scenario;
        let vectors = [
            ("scenario.target", sc.target),
            ("scenario.center", sc.center),
            ("scenario.start", sc.start),
        ];
        for (name, v) in vectors {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(format!("{name} must be finite"));
            }
        }
        if !(sc.radius > 0.0 && sc.radius.is_finite()) {
            return Err("scenario.radius must be > 0".into());
        }
        if !sc.angular_rate.is_finite() {
            return Err("scenario.angular_rate must be finite".into());
        }
        if !(sc.speed > 0.0 && sc.speed.is_finite()) {
            return Err("scenario.speed must be > 0".into());
        }
        self.gains.validate()?;
        self.cbf.validate().map_err(|e| format!("cbf.{e}"))?;
        self.params.validate().map_err(|e| format!("params.{e}"))?;
        if self.cbf.l_max != self.params.l_max {
            return Err("cbf.l_max and params.l_max disagree".into());
        }
        if let Some(b) = self.input_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err("filter.input_bound must be > 0".into());
            }
            if self.model == Model::FullTuav {
                return Err("filter.input_bound applies to point-mass models only".into());
            }
        }
        Ok(())
    }

    fn setpoint(&self, t: f64) -> Setpoint {
        let (position, velocity) = self.scenario.reference(t);
        Setpoint {
            position,
            velocity,
            yaw: 0.0,
            tether_length: self.params.l_max,
        }
    }
}

/// Plant state for whichever model the episode runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Plant {
    Single(Vector3<f64>),
    Double(PointMassState),
    Tuav(TuavState),
}

impl Plant {
    pub fn position(&self) -> Vector3<f64> {
        match self {
            Plant::Single(p) => *p,
            Plant::Double(s) => s.position,
            Plant::Tuav(s) => s.position(),
        }
    }

    pub fn point_mass(&self) -> PointMassState {
        match self {
            Plant::Single(p) => PointMassState::at_rest(*p),
            Plant::Double(s) => *s,
            Plant::Tuav(s) => s.point_mass(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Plant::Single(p) => p.as_slice().to_vec(),
            Plant::Double(s) => s.to_vector().as_slice().to_vec(),
            Plant::Tuav(s) => s.to_vector().as_slice().to_vec(),
        }
    }

    fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub step: usize,
    pub t: f64,
    pub plant: Plant,
}

impl SimState {
    /// At rest at the scenario start; a TUAV starts level with the tether
    /// paid out to `L_max`.
    pub fn initial(config: &ScenarioConfig) -> Self {
        let start = Vector3::from(config.scenario.start);
        let plant = match config.model {
            Model::SingleIntegrator => Plant::Single(start),
            Model::DoubleIntegrator => Plant::Double(PointMassState::at_rest(start)),
            Model::FullTuav => Plant::Tuav(TuavState {
                x: start.x,
                y: start.y,
                z: start.z,
                winch_angle: config.params.l_max / config.params.r_w,
                ..Default::default()
            }),
        };
        Self {
            step: 0,
            t: 0.0,
            plant,
        }
    }
}

/// Filter decision for one tick, in the space the QP acts on.
struct Filtered {
    value: DVector<f64>,
    active: bool,
    status: RecordStatus,
}

fn filter(
    nominal: &DVector<f64>,
    constraint: HalfspaceConstraint,
    config: &ScenarioConfig,
    t: f64,
) -> Result<Filtered, SimError> {
    let dim = nominal.len();
    let mut problem = QpProblem::new(nominal.clone(), vec![constraint.mark_activity(nominal)]);
    if let Some(b) = config.input_bound {
        problem = problem.with_bounds(vec![(-b, b); dim]);
    }
    let sol = qp::solve_active_set(&problem).map_err(|source| SimError::Qp { t, source })?;
    match sol.status {
        QpStatus::Optimal => Ok(Filtered {
            active: !sol.active_set.is_empty(),
            value: sol.u_star,
            status: RecordStatus::Optimal,
        }),
        status => {
            log::warn!(
                "QP {} at t = {t}; applying {}",
                status.as_str(),
                config.infeasible_policy.as_str()
            );
            let value = match config.infeasible_policy {
                InfeasiblePolicy::HoldZero => DVector::zeros(dim),
                InfeasiblePolicy::ClipNominal => match config.input_bound {
                    Some(b) => nominal.map(|v| v.clamp(-b, b)),
                    None => nominal.clone(),
                },
            };
            Ok(Filtered {
                value,
                active: true,
                status: if status == QpStatus::Infeasible {
                    RecordStatus::Infeasible
                } else {
                    RecordStatus::MaxIter
                },
            })
        }
    }
}

fn pad(v: &[f64]) -> [f64; INPUT_DIM] {
    let mut out = [0.0; INPUT_DIM];
    out[..v.len()].copy_from_slice(v);
    out
}

/// Inputs chosen at the current state, plus the log record describing them.
struct Evaluation {
    record: LogRecord,
    /// Input applied over the next step, in the model's own channels.
    applied: DVector<f64>,
}

fn evaluate(state: &SimState, config: &ScenarioConfig) -> Result<Evaluation, SimError> {
    let t = state.t;
    let cbf = config.effective_cbf();
    let sp = config.setpoint(t);
    let position = state.plant.position();
    let r = position.norm();
    let h = safety::barrier_value(&position, &cbf);
    let psi1 = match cbf.mode {
        CbfMode::FirstOrder => None,
        CbfMode::ExponentialSecondOrder => Some(safety::psi1(&state.plant.point_mass(), &cbf)),
    };

    let disabled = |nominal: &DVector<f64>| Filtered {
        value: nominal.clone(),
        active: false,
        status: RecordStatus::Disabled,
    };

    let (u_nom, u_star, filtered) = match &state.plant {
        Plant::Single(p) => {
            let nominal = control::single_integrator_nominal(p, &sp, &config.gains);
            let nominal = DVector::from_column_slice(nominal.as_slice());
            let f = if config.filter_enabled {
                let c = safety::cbf_halfspace_first_order(
                    p,
                    &cbf,
                    &Vector3::zeros(),
                    &DMatrix::identity(3, 3),
                );
                filter(&nominal, c, config, t)?
            } else {
                disabled(&nominal)
            };
            (nominal.clone(), f.value.clone(), f)
        }
        Plant::Double(s) => {
            let nominal = control::point_mass_nominal(s, &sp, &config.gains);
            let nominal = DVector::from_column_slice(nominal.as_slice());
            let f = if config.filter_enabled {
                filter(&nominal, safety::cbf_halfspace_exponential(s, &cbf), config, t)?
            } else {
                disabled(&nominal)
            };
            (nominal.clone(), f.value.clone(), f)
        }
        Plant::Tuav(s) => {
            let tether = dynamics::tether_force(s, &config.params);
            let accel = control::translational_accel_command(&s.point_mass(), &sp, &config.gains);
            let accel_d = DVector::from_column_slice(accel.as_slice());
            let f = if config.filter_enabled {
                filter(
                    &accel_d,
                    safety::cbf_halfspace_exponential(&s.point_mass(), &cbf),
                    config,
                    t,
                )?
            } else {
                disabled(&accel_d)
            };
            let to_input = |a: &Vector3<f64>| {
                control::tuav_input_for_accel(s, a, &sp, &config.gains, &tether, &config.params)
                    .map(|(input, _)| DVector::from_column_slice(&input.to_array()))
                    .map_err(|source| SimError::Control { t, source })
            };
            let nominal = to_input(&accel)?;
            let safe_accel = Vector3::new(f.value[0], f.value[1], f.value[2]);
            let applied = if f.status == RecordStatus::Disabled {
                nominal.clone()
            } else {
                to_input(&safe_accel)?
            };
            (nominal, applied, f)
        }
    };

    let record = LogRecord {
        t,
        state: state.plant.to_vec(),
        position: [position.x, position.y, position.z],
        r,
        h,
        psi1,
        u_star: pad(u_star.as_slice()),
        u_nom: pad(u_nom.as_slice()),
        qp_active: filtered.active,
        qp_status: filtered.status,
    };
    Ok(Evaluation {
        record,
        applied: u_star,
    })
}

fn integrate(
    plant: &Plant,
    input: &DVector<f64>,
    config: &ScenarioConfig,
    t: f64,
) -> Result<Plant, SimError> {
    let dt = config.dt;
    let wrap = |source| SimError::Dynamics { t, source };
    let next = match plant {
        Plant::Single(p) => {
            let u = Vector3::new(input[0], input[1], input[2]);
            Plant::Single(rk4_step(|_| Ok(u), p, dt).map_err(wrap)?)
        }
        Plant::Double(s) => {
            let a = Vector3::new(input[0], input[1], input[2]);
            let next = rk4_step(
                |x| Ok(point_mass_derivative(&PointMassState::from_vector(x), &a)),
                &s.to_vector(),
                dt,
            )
            .map_err(wrap)?;
            Plant::Double(PointMassState::from_vector(&next))
        }
        Plant::Tuav(s) => {
            let u = dynamics::ControlInput::from_array(pad(input.as_slice()));
            let params = &config.params;
            let next = rk4_step(
                |x| {
                    let st = TuavState::from_vector(x);
                    tuav_derivative(&st, &u, &dynamics::tether_force(&st, params), params)
                },
                &s.to_vector(),
                dt,
            )
            .map_err(wrap)?;
            Plant::Tuav(TuavState::from_vector(&next))
        }
    };
    if !next.is_finite() {
        return Err(SimError::NonFiniteState { t: t + dt });
    }
    Ok(next)
}

/// Advances one tick: nominal input, constraint, QP, then an RK4 step with
/// the filtered input held. Returns the new state and the record for the
/// state that was left.
pub fn sim_step(state: &SimState, config: &ScenarioConfig) -> Result<(SimState, LogRecord), SimError> {
    let eval = evaluate(state, config)?;
    let plant = integrate(&state.plant, &eval.applied, config, state.t)?;
    let step = state.step + 1;
    Ok((
        SimState {
            step,
            t: step as f64 * config.dt,
            plant,
        },
        eval.record,
    ))
}

/// Runs a whole episode; deterministic in `config`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<TrajectoryLog, SimError> {
    config.validate().map_err(SimError::Config)?;
    let steps = config.step_count();
    let mut records = Vec::with_capacity(steps + 1);
    let mut state = SimState::initial(config);
    for _ in 0..steps {
        let (next, record) = sim_step(&state, config)?;
        records.push(record);
        state = next;
    }
    records.push(evaluate(&state, config)?.record);
    Ok(TrajectoryLog::new(records, config))
}
