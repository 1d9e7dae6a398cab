//! Nominal (unfiltered) controllers.
//!
//! Every backstepping loop here follows the same two-step pattern on an error
//! coordinate `e` with rate `ė`: virtual control `-k1 e`, transformed error
//! `z1 = ė + k1 e`, and the closing choice `ż1 = -k2 z1 - e`. Substituting
//! gives the commanded second derivative `-(k1 + k2) ė - (1 + k1 k2) e`, which
//! each loop then inverts through its row of the equations of motion.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    deployed_length, ControlInput, PointMassState, SystemParams, TetherForce, TuavState,
};

/// Smallest `|cos θ cos φ|` the thrust inversion accepts.
pub const MIN_TILT_FACTOR: f64 = 1e-6;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum ControlError {
    #[error("gimbal-singular thrust: cos(theta)cos(phi) = {0:e}")]
    GimbalSingular(f64),
}

/// `(k1, k2)` for one backstepping loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisGains {
    pub k1: f64,
    pub k2: f64,
}

impl AxisGains {
    pub const fn new(k1: f64, k2: f64) -> Self {
        Self { k1, k2 }
    }

    /// Second derivative that makes `ż1 = -k2 z1 - e` hold.
    pub fn accel_command(&self, err: f64, err_rate: f64) -> f64 {
        -(self.k1 + self.k2) * err_rate - (1.0 + self.k1 * self.k2) * err
    }

    /// Transformed error `z1 = ė - φ(e)` with virtual control `φ(e) = -k1 e`.
    pub fn transformed_error(&self, err: f64, err_rate: f64) -> f64 {
        err_rate + self.k1 * err
    }
}

impl Default for AxisGains {
    fn default() -> Self {
        Self::new(2.0, 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub altitude: AxisGains,
    pub lateral_x: AxisGains,
    pub lateral_y: AxisGains,
    pub roll: AxisGains,
    pub pitch: AxisGains,
    pub yaw: AxisGains,
    pub winch: AxisGains,
    /// Point-mass position gain, 1/s².
    pub kp: f64,
    /// Point-mass velocity gain, 1/s.
    pub kd: f64,
    /// Commanded roll/pitch saturation, rad.
    pub tilt_limit: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            altitude: AxisGains::default(),
            // Lateral loops run slower than roll/pitch so the commanded tilt
            // is tracked before the position error reacts to it.
            lateral_x: AxisGains::new(1.0, 1.0),
            lateral_y: AxisGains::new(1.0, 1.0),
            roll: AxisGains::new(4.0, 4.0),
            pitch: AxisGains::new(4.0, 4.0),
            yaw: AxisGains::default(),
            // Heavier than the other loops so the commanded torque always
            // opposes a winch overspeed (see `winch_nominal`).
            winch: AxisGains::new(3.0, 3.0),
            kp: 4.0,
            kd: 4.0,
            tilt_limit: 0.5,
        }
    }
}

impl GainSet {
    pub fn axes(&self) -> [(&'static str, AxisGains); 7] {
        [
            ("altitude", self.altitude),
            ("lateral_x", self.lateral_x),
            ("lateral_y", self.lateral_y),
            ("roll", self.roll),
            ("pitch", self.pitch),
            ("yaw", self.yaw),
            ("winch", self.winch),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, g) in self.axes() {
            if !(g.k1 > 0.0 && g.k1.is_finite()) {
                return Err(format!("gains.{name}.k1 must be > 0"));
            }
            if !(g.k2 > 0.0 && g.k2.is_finite()) {
                return Err(format!("gains.{name}.k2 must be > 0"));
            }
        }
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            return Err("gains.kp must be > 0".into());
        }
        if !(self.kd > 0.0 && self.kd.is_finite()) {
            return Err("gains.kd must be > 0".into());
        }
        if !(self.tilt_limit > 0.0 && self.tilt_limit < std::f64::consts::FRAC_PI_2) {
            return Err("gains.tilt_limit must be in (0, pi/2)".into());
        }
        Ok(())
    }
}

/// Instantaneous reference for the translational loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: Vector3<f64>,
    /// Reference velocity; zero for static targets.
    pub velocity: Vector3<f64>,
    pub yaw: f64,
    pub tether_length: f64,
}

impl Setpoint {
    pub fn fixed(position: Vector3<f64>, tether_length: f64) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            yaw: 0.0,
            tether_length,
        }
    }
}

/// Thrust that realises vertical acceleration `accel` through the `z̈` row.
pub fn thrust_for_vertical_accel(
    state: &TuavState,
    accel: f64,
    tether: &TetherForce,
    params: &SystemParams,
) -> Result<f64, ControlError> {
    let c = state.tilt_factor();
    if c.abs() <= MIN_TILT_FACTOR {
        return Err(ControlError::GimbalSingular(c));
    }
    let m = params.m;
    let s = state;
    Ok((m * accel - m * s.q * s.u + m * s.p * s.v - m * params.g * c
        + tether.components[2]
        + params.az * s.w)
        / c)
}

/// Altitude backstepping law on the error coordinate `x5 = z - z_des`,
/// `x6 = ż`.
pub fn backstepping_altitude(
    state: &TuavState,
    z_des: f64,
    gains: &GainSet,
    tether: &TetherForce,
    params: &SystemParams,
) -> Result<f64, ControlError> {
    let accel = gains.altitude.accel_command(state.z - z_des, state.w);
    thrust_for_vertical_accel(state, accel, tether, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovPair {
    pub value: f64,
    pub rate: f64,
}

/// Composite altitude Lyapunov function `½x5² + ½z1²` and its closed-loop
/// derivative `-k1 x5² - k2 z1²`.
pub fn lyapunov_diagnostics(state: &TuavState, z_des: f64, gains: &GainSet) -> LyapunovPair {
    let g = gains.altitude;
    let x5 = state.z - z_des;
    let z1 = g.transformed_error(x5, state.w);
    LyapunovPair {
        value: 0.5 * x5 * x5 + 0.5 * z1 * z1,
        rate: -g.k1 * x5 * x5 - g.k2 * z1 * z1,
    }
}

/// Roll, pitch and yaw torques driving the attitude toward `target`
/// (zero reference rates), with the gyroscopic terms cancelled.
pub fn attitude_torques(
    state: &TuavState,
    target: [f64; 3],
    gains: &GainSet,
    params: &SystemParams,
) -> [f64; 3] {
    let s = state;
    let roll = gains.roll.accel_command(s.phi - target[0], s.p);
    let pitch = gains.pitch.accel_command(s.theta - target[1], s.q);
    let yaw = gains.yaw.accel_command(s.psi - target[2], s.r);
    [
        params.ixx * roll + s.q * s.r * (params.iyy - params.izz),
        params.iyy * pitch - s.p * s.r * (params.ixx - params.izz),
        params.izz * yaw + s.p * s.q * (params.ixx - params.iyy),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltCommand {
    pub roll: f64,
    pub pitch: f64,
    pub saturated: bool,
}

/// Roll/pitch that produce the requested horizontal accelerations, from the
/// `ẍ`/`ÿ` rows linearised about level hover (`U_f = -mg`) at the current yaw.
///
/// At hover the two rows are linearly dependent for every yaw, so only one
/// horizontal direction is actuated to first order (the `x` direction at
/// `ψ = 0`). Damped least squares returns no tilt along the other one.
pub fn lateral_tilt(
    state: &TuavState,
    accel_xy: [f64; 2],
    tether: &TetherForce,
    params: &SystemParams,
    tilt_limit: f64,
) -> TiltCommand {
    let s = state;
    let m = params.m;
    let g = params.g;
    let (spsi, cpsi) = s.psi.sin_cos();
    let ca = tether.elevation.cos();
    let (sb, cb) = tether.azimuth.sin_cos();
    let t1 = tether.magnitude;

    // Attitude-independent parts of the two rows.
    let x_rest = s.r * s.v - s.q * s.w - (t1 * ca * sb + params.ax * s.u) / m;
    let y_rest = s.r * s.u - s.p * s.w + (t1 * ca * cb + params.ay * s.v) / m;

    let hover = -m * g;
    let jac = Matrix2::new(
        hover * spsi / m,
        (hover * cpsi - m * g) / m,
        (-hover * cpsi - m * g) / m,
        hover * spsi / m,
    );
    let rhs = Vector2::new(accel_xy[0] - x_rest, accel_xy[1] - y_rest);
    let damping = (0.1 * g).powi(2);
    let normal = jac.transpose() * jac + Matrix2::identity() * damping;
    let tilt = normal
        .try_inverse()
        .map(|inv| inv * jac.transpose() * rhs)
        .unwrap_or_else(Vector2::zeros);

    let clamp = |v: f64| v.clamp(-tilt_limit, tilt_limit);
    let (roll, pitch) = (clamp(tilt[0]), clamp(tilt[1]));
    TiltCommand {
        roll,
        pitch,
        saturated: roll != tilt[0] || pitch != tilt[1],
    }
}

/// Per-axis backstepping accelerations toward the setpoint.
pub fn translational_accel_command(state: &PointMassState, sp: &Setpoint, gains: &GainSet) -> Vector3<f64> {
    let e = state.position - sp.position;
    let de = state.velocity - sp.velocity;
    Vector3::new(
        gains.lateral_x.accel_command(e.x, de.x),
        gains.lateral_y.accel_command(e.y, de.y),
        gains.altitude.accel_command(e.z, de.z),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    /// `[U_φ, U_θ, U_ψ]`.
    pub torques: [f64; 3],
    pub tilt: TiltCommand,
}

/// Lateral and attitude loops for a given translational acceleration demand.
pub fn attitude_for_accel(
    state: &TuavState,
    accel: &Vector3<f64>,
    yaw: f64,
    gains: &GainSet,
    tether: &TetherForce,
    params: &SystemParams,
) -> AttitudeCommand {
    let tilt = lateral_tilt(
        state,
        [accel.x, accel.y],
        tether,
        params,
        gains.tilt_limit,
    );
    AttitudeCommand {
        torques: attitude_torques(state, [tilt.roll, tilt.pitch, yaw], gains, params),
        tilt,
    }
}

/// Attitude torques and commanded tilt for the setpoint.
pub fn attitude_and_lateral_nominal(
    state: &TuavState,
    sp: &Setpoint,
    gains: &GainSet,
    tether: &TetherForce,
    params: &SystemParams,
) -> AttitudeCommand {
    let accel = translational_accel_command(&state.point_mass(), sp, gains);
    attitude_for_accel(state, &accel, sp.yaw, gains, tether, params)
}

/// Winch torque driving the deployed length `r_w ϑ` toward `l_des`; the
/// viscous term `β_w ϑ̇` is compensated exactly.
pub fn winch_nominal(state: &TuavState, l_des: f64, gains: &GainSet, params: &SystemParams) -> f64 {
    let err = deployed_length(state, params) - l_des;
    let err_rate = params.r_w * state.winch_rate;
    let length_accel = gains.winch.accel_command(err, err_rate);
    let angle_accel = length_accel / params.r_w;
    (params.i_w * angle_accel + params.beta_w * state.winch_rate) / params.r_w
}

/// Full five-channel input for a translational acceleration demand.
pub fn tuav_input_for_accel(
    state: &TuavState,
    accel: &Vector3<f64>,
    sp: &Setpoint,
    gains: &GainSet,
    tether: &TetherForce,
    params: &SystemParams,
) -> Result<(ControlInput, TiltCommand), ControlError> {
    let thrust = thrust_for_vertical_accel(state, accel.z, tether, params)?;
    let att = attitude_for_accel(state, accel, sp.yaw, gains, tether, params);
    let input = ControlInput {
        thrust,
        torque_roll: att.torques[0],
        torque_pitch: att.torques[1],
        torque_yaw: att.torques[2],
        winch_torque: winch_nominal(state, sp.tether_length, gains, params),
    };
    Ok((input, att.tilt))
}

/// Point-mass PD law `kp (ξ_des - ξ) + kd (v_des - v)`.
pub fn point_mass_nominal(state: &PointMassState, sp: &Setpoint, gains: &GainSet) -> Vector3<f64> {
    (sp.position - state.position) * gains.kp + (sp.velocity - state.velocity) * gains.kd
}

/// Velocity command for a single integrator: reference feed-forward plus
/// proportional position feedback.
pub fn single_integrator_nominal(
    position: &Vector3<f64>,
    sp: &Setpoint,
    gains: &GainSet,
) -> Vector3<f64> {
    sp.velocity + (sp.position - position) * gains.kp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{point_mass_derivative, rk4_step, tuav_derivative};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn hover_thrust_at_setpoint() {
        let s = TuavState {
            z: 5.0,
            ..Default::default()
        };
        let uf = backstepping_altitude(&s, 5.0, &GainSet::default(), &TetherForce::slack(), &params())
            .unwrap();
        assert_relative_eq!(uf, -27.8604, epsilon = 1e-12);
    }

    #[test]
    fn unit_altitude_error_thrust() {
        let s = TuavState {
            z: 1.0,
            ..Default::default()
        };
        let uf = backstepping_altitude(&s, 0.0, &GainSet::default(), &TetherForce::slack(), &params())
            .unwrap();
        assert_relative_eq!(uf, -42.0604, epsilon = 1e-12);
    }

    #[test]
    fn hover_compensates_tether_pull() {
        let p = params();
        let s = TuavState {
            z: 11.0,
            winch_angle: 200.0,
            ..Default::default()
        };
        let tether = crate::dynamics::tether_force(&s, &p);
        let uf = backstepping_altitude(&s, 11.0, &GainSet::default(), &tether, &p).unwrap();
        assert_relative_eq!(uf, -p.m * p.g + 1000.0, epsilon = 1e-9);
        let input = ControlInput {
            thrust: uf,
            ..Default::default()
        };
        let d = tuav_derivative(&s, &input, &tether, &p).unwrap();
        assert!(d[8].abs() < 1e-12);
    }

    #[test]
    fn singular_attitude_is_a_fault() {
        let s = TuavState {
            theta: std::f64::consts::FRAC_PI_2,
            ..Default::default()
        };
        let err = backstepping_altitude(&s, 0.0, &GainSet::default(), &TetherForce::slack(), &params())
            .unwrap_err();
        assert!(matches!(err, ControlError::GimbalSingular(_)));
    }

    #[test]
    fn lyapunov_values() {
        let g = GainSet::default();
        let s = TuavState::default();
        let l = lyapunov_diagnostics(&s, 0.0, &g);
        assert_eq!((l.value, l.rate), (0.0, 0.0));

        let s = TuavState {
            z: 1.0,
            w: -2.0,
            ..Default::default()
        };
        let l = lyapunov_diagnostics(&s, 0.0, &g);
        assert_relative_eq!(l.value, 0.5, epsilon = 1e-15);
        assert_relative_eq!(l.rate, -2.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn lyapunov_rate_is_never_positive(
            z in -50.0..50.0f64, w in -20.0..20.0f64, z_des in -20.0..20.0f64,
            k1 in 0.01..10.0f64, k2 in 0.01..10.0f64,
        ) {
            let mut g = GainSet::default();
            g.altitude = AxisGains::new(k1, k2);
            let s = TuavState { z, w, ..Default::default() };
            prop_assert!(lyapunov_diagnostics(&s, z_des, &g).rate <= 0.0);
        }

        // The altitude law substituted into the z row closes ż1 = -k2 z1 - x5.
        #[test]
        fn altitude_law_closes_transformed_error(
            z in -20.0..20.0f64, w in -5.0..5.0f64, u in -5.0..5.0f64, v in -5.0..5.0f64,
            phi in -0.6..0.6f64, theta in -0.6..0.6f64, psi in -3.0..3.0f64,
            p in -2.0..2.0f64, q in -2.0..2.0f64,
            z_des in -10.0..10.0f64, tension in 0.0..50.0f64,
            elevation in -1.5..1.5f64, azimuth in -3.0..3.0f64, az in 0.0..1.0f64,
        ) {
            let mut prm = params();
            prm.az = az;
            let gains = GainSet::default();
            let s = TuavState { z, w, u, v, phi, theta, psi, p, q, ..Default::default() };
            let tether = TetherForce::from_angles(tension, elevation, azimuth);
            let uf = backstepping_altitude(&s, z_des, &gains, &tether, &prm).unwrap();
            let d = tuav_derivative(&s, &ControlInput { thrust: uf, ..Default::default() }, &tether, &prm).unwrap();
            let k = gains.altitude;
            let x5 = z - z_des;
            let z1 = k.transformed_error(x5, w);
            let z1_dot = d[8] + k.k1 * w;
            prop_assert!((z1_dot + k.k2 * z1 + x5).abs() <= 1e-9 * (1.0 + uf.abs()));
        }
    }

    #[test]
    fn attitude_equilibrium_has_zero_torque() {
        let t = attitude_torques(&TuavState::default(), [0.0; 3], &GainSet::default(), &params());
        assert_eq!(t, [0.0; 3]);
    }

    #[test]
    fn yaw_error_torque_follows_pattern() {
        let s = TuavState {
            psi: 0.1,
            ..Default::default()
        };
        let p = params();
        let t = attitude_torques(&s, [0.0; 3], &GainSet::default(), &p);
        assert_relative_eq!(t[2], p.izz * -(1.0 + 4.0) * 0.1, epsilon = 1e-15);
        assert_eq!((t[0], t[1]), (0.0, 0.0));
    }

    #[test]
    fn attitude_setpoint_nominal_is_zero_at_equilibrium() {
        let p = params();
        let s = TuavState {
            x: 1.0,
            y: 2.0,
            z: 3.0,
            ..Default::default()
        };
        let sp = Setpoint::fixed(Vector3::new(1.0, 2.0, 3.0), 13.0);
        let cmd = attitude_and_lateral_nominal(&s, &sp, &GainSet::default(), &TetherForce::slack(), &p);
        assert_eq!(cmd.torques, [0.0; 3]);
        assert!(!cmd.tilt.saturated);
        assert_eq!((cmd.tilt.roll, cmd.tilt.pitch), (0.0, 0.0));
    }

    #[test]
    fn lateral_tilt_saturates_with_flag() {
        let p = params();
        let cmd = lateral_tilt(
            &TuavState::default(),
            [100.0, 0.0],
            &TetherForce::slack(),
            &p,
            0.5,
        );
        assert!(cmd.saturated);
        assert_eq!(cmd.pitch, -0.5);
    }

    #[test]
    fn lateral_tilt_recovers_pitch_for_x_accel() {
        // At hover and zero yaw the x row gives ẍ ≈ -2 g θ.
        let p = params();
        let cmd = lateral_tilt(
            &TuavState::default(),
            [-0.5, 0.0],
            &TetherForce::slack(),
            &p,
            0.5,
        );
        let exact = 0.5 / (2.0 * p.g);
        // Damping biases the solution by (0.1 g)² / ((2 g)² + (0.1 g)²).
        assert!((cmd.pitch - exact).abs() < 5e-3 * exact);
        assert_eq!(cmd.roll, 0.0);
    }

    // Attitude-only closed loop from 0.1 rad on every axis.
    #[test]
    fn attitude_loop_converges_monotone_envelope() {
        let p = params();
        let gains = GainSet::default();
        let mut s = TuavState {
            phi: 0.1,
            theta: 0.1,
            psi: 0.1,
            winch_angle: 260.0,
            ..Default::default()
        };
        let dt = 0.01;
        for _ in 0..1000 {
            let t = attitude_torques(&s, [0.0; 3], &gains, &p);
            let input = ControlInput {
                thrust: p.hover_thrust() / s.tilt_factor(),
                torque_roll: t[0],
                torque_pitch: t[1],
                torque_yaw: t[2],
                winch_torque: 0.0,
            };
            let next = rk4_step(
                |x| tuav_derivative(&TuavState::from_vector(x), &input, &TetherForce::slack(), &p),
                &s.to_vector(),
                dt,
            )
            .unwrap();
            s = TuavState::from_vector(&next);
            for e in [s.phi, s.theta, s.psi] {
                assert!(e.abs() <= 0.1 + 1e-12);
            }
        }
        for e in [s.phi, s.theta, s.psi] {
            assert!(e.abs() < 1e-3, "{e}");
        }
    }

    #[test]
    fn winch_at_target_and_at_rest_is_zero() {
        let p = params();
        let s = TuavState {
            winch_angle: 200.0,
            ..Default::default()
        };
        assert_eq!(winch_nominal(&s, 10.0, &GainSet::default(), &p), 0.0);
    }

    #[test]
    fn winch_torque_opposes_overspeed() {
        let p = params();
        let s = TuavState {
            winch_angle: 200.0,
            winch_rate: 1.0,
            ..Default::default()
        };
        assert!(winch_nominal(&s, 10.0, &GainSet::default(), &p) < 0.0);
        let s = TuavState {
            winch_rate: -1.0,
            ..s
        };
        assert!(winch_nominal(&s, 10.0, &GainSet::default(), &p) > 0.0);
    }

    #[test]
    fn winch_reels_out_without_large_overshoot() {
        let p = params();
        let gains = GainSet::default();
        let mut s = TuavState {
            winch_angle: 5.0 / p.r_w,
            ..Default::default()
        };
        let dt = 0.01;
        let mut max_len = 0.0f64;
        for _ in 0..2000 {
            let input = ControlInput {
                thrust: p.hover_thrust(),
                winch_torque: winch_nominal(&s, 10.0, &gains, &p),
                ..Default::default()
            };
            let next = rk4_step(
                |x| tuav_derivative(&TuavState::from_vector(x), &input, &TetherForce::slack(), &p),
                &s.to_vector(),
                dt,
            )
            .unwrap();
            s = TuavState::from_vector(&next);
            max_len = max_len.max(deployed_length(&s, &p));
        }
        assert!((deployed_length(&s, &p) - 10.0).abs() < 0.01);
        assert!(max_len <= 10.5);
    }

    #[test]
    fn point_mass_pd() {
        let g = GainSet::default();
        let sp = Setpoint::fixed(Vector3::new(1.0, 0.0, 0.0), 13.0);
        assert_eq!(
            point_mass_nominal(&PointMassState::at_rest(sp.position), &sp, &g),
            Vector3::zeros()
        );
        assert_eq!(
            point_mass_nominal(&PointMassState::default(), &sp, &g),
            Vector3::new(4.0, 0.0, 0.0)
        );
    }

    #[test]
    fn critically_damped_pd_does_not_overshoot() {
        let g = GainSet::default();
        assert_eq!(g.kd, 2.0 * g.kp.sqrt());
        let target = Vector3::new(3.0, -2.0, 5.0);
        let sp = Setpoint::fixed(target, 13.0);
        let mut s = PointMassState::default();
        for _ in 0..3000 {
            let a = point_mass_nominal(&s, &sp, &g);
            let next = rk4_step(|x| Ok(point_mass_derivative(&PointMassState::from_vector(x), &a)), &s.to_vector(), 0.01)
                .unwrap();
            s = PointMassState::from_vector(&next);
            for i in 0..3 {
                // Approaches each target coordinate from the starting side.
                assert!(s.position[i] * target[i].signum() <= target[i].abs() + 1e-9);
            }
        }
        assert!((s.position - target).norm() < 1e-6);
    }

    #[test]
    fn gain_validation_names_field() {
        let mut g = GainSet::default();
        g.pitch.k2 = 0.0;
        assert_eq!(g.validate().unwrap_err(), "gains.pitch.k2 must be > 0");
    }
}
