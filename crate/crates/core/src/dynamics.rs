//! Tethered UAV equations of motion, the straight-line elastic tether model,
//! the point-mass abstraction used by the outer safety loop, and a fixed-step
//! RK4 integrator.
//!
//! The translational rows are implemented exactly as the reference model
//! writes them: `(u, v, w)` are the inertial rates `(ẋ, ẏ, ż)`, gravity enters
//! `z̈` with a positive sign (hover therefore needs `U_f = -m g`), and the
//! drag/tether signs are kept verbatim, including the `+A_y v` and `+T_Y`
//! terms of the `ÿ` row.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

/// Number of scalar states carried by [`TuavState`].
pub const TUAV_DIM: usize = 14;
/// Number of actuator channels carried by [`ControlInput`].
pub const INPUT_DIM: usize = 5;

/// Time derivative of a [`TuavState`], in the same row order as
/// [`TuavState::to_vector`].
pub type TuavStateDerivative = SVector<f64, TUAV_DIM>;
/// Time derivative of a [`PointMassState`]: `[ξ̇; v̇]`.
pub type PointMassDerivative = SVector<f64, 6>;

const ROW_NAMES: [&str; TUAV_DIM] = [
    "x", "y", "z", "phi", "theta", "psi", "u", "v", "w", "p", "q", "r", "winch_angle",
    "winch_rate",
];

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite derivative in row `{row}` ({value})")]
    NonFiniteRow { row: &'static str, value: f64 },
    #[error("non-finite value in RK4 stage {stage}")]
    NonFiniteStage { stage: usize },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// Full TUAV state: inertial position, Euler attitude, their rates, and the
/// winch angle/rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TuavState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub winch_angle: f64,
    pub winch_rate: f64,
}

impl TuavState {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, self.w)
    }

    /// Translational part as a point mass.
    pub fn point_mass(&self) -> PointMassState {
        PointMassState::new(self.position(), self.velocity())
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// `cos θ cos φ`, the factor the thrust inversion divides by.
    pub fn tilt_factor(&self) -> f64 {
        self.theta.cos() * self.phi.cos()
    }

    pub fn to_vector(&self) -> SVector<f64, TUAV_DIM> {
        SVector::from([
            self.x,
            self.y,
            self.z,
            self.phi,
            self.theta,
            self.psi,
            self.u,
            self.v,
            self.w,
            self.p,
            self.q,
            self.r,
            self.winch_angle,
            self.winch_rate,
        ])
    }

    pub fn from_vector(s: &SVector<f64, TUAV_DIM>) -> Self {
        Self {
            x: s[0],
            y: s[1],
            z: s[2],
            phi: s[3],
            theta: s[4],
            psi: s[5],
            u: s[6],
            v: s[7],
            w: s[8],
            p: s[9],
            q: s[10],
            r: s[11],
            winch_angle: s[12],
            winch_rate: s[13],
        }
    }
}

/// Actuator channels `[U_f, U_φ, U_θ, U_ψ, U_win]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrust: f64,
    pub torque_roll: f64,
    pub torque_pitch: f64,
    pub torque_yaw: f64,
    pub winch_torque: f64,
}

impl ControlInput {
    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        [
            self.thrust,
            self.torque_roll,
            self.torque_pitch,
            self.torque_yaw,
            self.winch_torque,
        ]
    }

    pub fn from_array(a: [f64; INPUT_DIM]) -> Self {
        Self {
            thrust: a[0],
            torque_roll: a[1],
            torque_pitch: a[2],
            torque_yaw: a[3],
            winch_torque: a[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// True when every channel satisfies `|u_i| <= bound`.
    pub fn within_bound(&self, bound: f64) -> bool {
        self.to_array().iter().all(|v| v.abs() <= bound)
    }
}

/// Physical constants of the vehicle, tether and winch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Vehicle mass, kg.
    pub m: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    /// Linear drag coefficients, N·s/m.
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    /// Tether linear density, kg/m. Carried for completeness; the straight
    /// tether model applies no weight.
    pub rho_tether: f64,
    /// Tether cross-sectional area, m².
    pub tether_area: f64,
    /// Maximum tether length, m.
    pub l_max: f64,
    /// Winch effective radius, m.
    pub r_w: f64,
    /// Winch viscous friction, N·m·s/rad.
    pub beta_w: f64,
    /// Winch moment of inertia, kg·m².
    pub i_w: f64,
    /// Tether stiffness, N/m.
    pub k_t: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            m: 2.84,
            g: 9.81,
            ixx: 0.5192,
            iyy: 0.4929,
            izz: 0.0947,
            ax: 0.0,
            ay: 0.0,
            az: 0.0,
            rho_tether: 0.034,
            tether_area: 1.1e-4,
            l_max: 13.0,
            r_w: 0.05,
            beta_w: 0.01,
            i_w: 0.002,
            k_t: 1000.0,
        }
    }
}

impl SystemParams {
    /// Returns the name of the first violated invariant, if any.
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("m", self.m),
            ("g", self.g),
            ("ixx", self.ixx),
            ("iyy", self.iyy),
            ("izz", self.izz),
            ("ax", self.ax),
            ("ay", self.ay),
            ("az", self.az),
            ("rho_tether", self.rho_tether),
            ("tether_area", self.tether_area),
            ("l_max", self.l_max),
            ("r_w", self.r_w),
            ("beta_w", self.beta_w),
            ("i_w", self.i_w),
            ("k_t", self.k_t),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name} must be finite"));
        }
        let positive = [
            ("m", self.m),
            ("ixx", self.ixx),
            ("iyy", self.iyy),
            ("izz", self.izz),
            ("l_max", self.l_max),
            ("r_w", self.r_w),
            ("i_w", self.i_w),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v <= 0.0) {
            return Err(format!("{name} must be > 0"));
        }
        if self.k_t < 0.0 {
            return Err("k_t must be >= 0".into());
        }
        Ok(())
    }

    /// Hover thrust under the model's sign convention.
    pub fn hover_thrust(&self) -> f64 {
        -self.m * self.g
    }
}

/// Tether tension magnitude, direction angles and inertial components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TetherForce {
    pub magnitude: f64,
    /// Elevation angle of the tether line.
    pub elevation: f64,
    /// Azimuth angle of the tether line, measured from the +y axis toward +x.
    pub azimuth: f64,
    pub components: [f64; 3],
}

impl TetherForce {
    /// Builds a consistent force from magnitude and angles.
    pub fn from_angles(magnitude: f64, elevation: f64, azimuth: f64) -> Self {
        let (se, ce) = elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Self {
            magnitude,
            elevation,
            azimuth,
            components: [magnitude * ce * sa, magnitude * ce * ca, magnitude * se],
        }
    }

    pub fn slack() -> Self {
        Self::default()
    }
}

/// Deployed tether length `r_w · ϑ`.
pub fn deployed_length(state: &TuavState, params: &SystemParams) -> f64 {
    params.r_w * state.winch_angle
}

/// One-sided linear spring along the straight line between the anchor at the
/// origin and the vehicle.
///
/// The angles describe the tether line direction `ξ/‖ξ‖`, so a taut tether
/// above the anchor has `T_Z > 0`; the equations of motion apply the sign.
pub fn tether_force(state: &TuavState, params: &SystemParams) -> TetherForce {
    let xi = state.position();
    let dist = xi.norm();
    let stretch = dist - deployed_length(state, params);
    if stretch <= 0.0 || dist == 0.0 {
        return TetherForce::slack();
    }
    let magnitude = params.k_t * stretch;
    let elevation = (xi.z / dist).clamp(-1.0, 1.0).asin();
    let azimuth = xi.x.atan2(xi.y);
    TetherForce::from_angles(magnitude, elevation, azimuth)
}

/// Continuous-time TUAV equations of motion.
pub fn tuav_derivative(
    state: &TuavState,
    input: &ControlInput,
    tether: &TetherForce,
    params: &SystemParams,
) -> Result<TuavStateDerivative, DynamicsError> {
    let s = state;
    let m = params.m;
    let g = params.g;
    let (sphi, cphi) = s.phi.sin_cos();
    let (sth, cth) = s.theta.sin_cos();
    let (spsi, cpsi) = s.psi.sin_cos();
    let (sa, ca) = tether.elevation.sin_cos();
    let (sb, cb) = tether.azimuth.sin_cos();
    let t1 = tether.magnitude;
    let uf = input.thrust;

    let xdd = (uf * (cpsi * cphi * sth + spsi * sphi) + m * s.r * s.v - m * s.q * s.w) / m
        - (m * g * sth + t1 * ca * sb + params.ax * s.u) / m;
    let ydd = (uf * (cphi * spsi * sth - cpsi * sphi) + m * s.r * s.u - m * s.p * s.w) / m
        - (m * g * cth * sphi - t1 * ca * cb - params.ay * s.v) / m;
    let zdd = (uf * cth * cphi + m * s.q * s.u - m * s.p * s.v + m * g * cth * cphi
        - t1 * sa
        - params.az * s.w)
        / m;
    let phidd = (input.torque_roll - s.q * s.r * (params.iyy - params.izz)) / params.ixx;
    let thetadd = (input.torque_pitch + s.p * s.r * (params.ixx - params.izz)) / params.iyy;
    let psidd = (input.torque_yaw - s.p * s.q * (params.ixx - params.iyy)) / params.izz;
    let winchdd = (-params.beta_w * s.winch_rate + params.r_w * input.winch_torque) / params.i_w;

    let d = SVector::from([
        s.u, s.v, s.w, s.p, s.q, s.r, xdd, ydd, zdd, phidd, thetadd, psidd, s.winch_rate, winchdd,
    ]);
    if let Some((i, value)) = d.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(DynamicsError::NonFiniteRow {
            row: ROW_NAMES[i],
            value: *value,
        });
    }
    Ok(d)
}

/// Translational state of the point-mass abstraction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointMassState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl PointMassState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self::new(position, Vector3::zeros())
    }

    pub fn to_vector(&self) -> SVector<f64, 6> {
        let (p, v) = (&self.position, &self.velocity);
        SVector::from([p.x, p.y, p.z, v.x, v.y, v.z])
    }

    pub fn from_vector(s: &SVector<f64, 6>) -> Self {
        Self::new(
            Vector3::new(s[0], s[1], s[2]),
            Vector3::new(s[3], s[4], s[5]),
        )
    }
}

/// Double integrator: `ξ̇ = v`, `v̇ = a`.
pub fn point_mass_derivative(state: &PointMassState, accel: &Vector3<f64>) -> PointMassDerivative {
    let v = &state.velocity;
    SVector::from([v.x, v.y, v.z, accel.x, accel.y, accel.z])
}

/// Classical fourth-order Runge-Kutta step. Whatever input `deriv` closes
/// over is held constant for the whole step.
pub fn rk4_step<const N: usize, F>(
    deriv: F,
    state: &SVector<f64, N>,
    dt: f64,
) -> Result<SVector<f64, N>, DynamicsError>
where
    F: Fn(&SVector<f64, N>) -> Result<SVector<f64, N>, DynamicsError>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let check = |stage: usize, v: SVector<f64, N>| {
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(DynamicsError::NonFiniteStage { stage })
        }
    };
    let k1 = check(1, deriv(state)?)?;
    let k2 = check(2, deriv(&(state + k1 * (0.5 * dt)))?)?;
    let k3 = check(3, deriv(&(state + k2 * (0.5 * dt)))?)?;
    let k4 = check(4, deriv(&(state + k3 * dt))?)?;
    check(5, state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}
