//! Tether-length barrier `h(ξ) = L_max - ‖ξ‖` and the half-space constraints
//! it induces on the input.
//!
//! Two constraint forms are provided. The first-order form is the direct CBF
//! inequality `ξᵀ g_pos u ≤ ‖ξ‖ α(h) + ξᵀ f_pos` and is only meaningful when
//! the input moves the position directly (velocity control). Under
//! acceleration control `h` has relative degree two, so the exponential form
//! enforces `ψ̇₁ ≥ -γ ψ₁` on `ψ₁ = ḣ + λ h` instead.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::PointMassState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbfMode {
    FirstOrder,
    ExponentialSecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfSpec {
    pub l_max: f64,
    /// Slope of the linear class-K function, 1/s.
    pub gamma: f64,
    /// Pole of `ψ₁ = ḣ + λ h`, 1/s.
    pub lambda: f64,
    /// Below this radius the gradient is undefined in practice and the
    /// constraint is vacuous.
    pub epsilon_origin: f64,
    pub mode: CbfMode,
}

impl Default for CbfSpec {
    fn default() -> Self {
        Self {
            l_max: 13.0,
            gamma: 1.0,
            lambda: 1.0,
            epsilon_origin: 0.01,
            mode: CbfMode::ExponentialSecondOrder,
        }
    }
}

impl CbfSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.l_max > 0.0 && self.l_max.is_finite()) {
            return Err("l_max must be > 0".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err("gamma must be > 0".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err("lambda must be > 0".into());
        }
        if !(self.epsilon_origin > 0.0 && self.epsilon_origin <= self.l_max / 100.0) {
            return Err("epsilon_origin must be in (0, l_max/100]".into());
        }
        Ok(())
    }

    /// Copy whose class-K slope reproduces `e^{-γ dt}` decay exactly when
    /// the input is held for `dt` on a single integrator moving radially.
    ///
    /// With a zero-order hold the active first-order constraint gives
    /// `h⁺ = (1 - γ' dt) h`; choosing `γ' = (1 - e^{-γ dt}) / dt` makes that
    /// the sampled continuous-time solution.
    pub fn held_over(&self, dt: f64) -> Self {
        Self {
            gamma: (1.0 - (-self.gamma * dt).exp()) / dt,
            ..*self
        }
    }
}

/// One affine input constraint `aᵀu ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceConstraint {
    pub normal: DVector<f64>,
    pub offset: f64,
    /// Whether the nominal input violated the constraint when it was built.
    pub active_hint: bool,
}

impl HalfspaceConstraint {
    pub fn new(normal: DVector<f64>, offset: f64) -> Self {
        Self {
            normal,
            offset,
            active_hint: false,
        }
    }

    /// `0ᵀu ≤ 0`: satisfied by every input.
    pub fn vacuous(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn is_vacuous(&self) -> bool {
        self.normal.iter().all(|&a| a == 0.0) && self.offset >= 0.0
    }

    /// `aᵀu - b`; positive when violated.
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        self.normal.dot(u) - self.offset
    }

    pub fn mark_activity(mut self, u_nom: &DVector<f64>) -> Self {
        self.active_hint = self.violation(u_nom) > 0.0;
        self
    }
}

pub fn barrier_value(xi: &Vector3<f64>, spec: &CbfSpec) -> f64 {
    spec.l_max - xi.norm()
}

/// `∇h = -ξ/‖ξ‖`, zero inside the origin guard.
pub fn barrier_gradient(xi: &Vector3<f64>, spec: &CbfSpec) -> Vector3<f64> {
    let r = xi.norm();
    if r < spec.epsilon_origin {
        return Vector3::zeros();
    }
    -xi / r
}

/// Linear extended class-K function `α(h) = γ h`.
pub fn class_kappa(h: f64, spec: &CbfSpec) -> f64 {
    spec.gamma * h
}

/// `ξᵀ g_pos u ≤ ‖ξ‖ α(h) + ξᵀ f_pos` for a model with position drift `f_pos`
/// and input matrix `g_pos` (3 × m).
pub fn cbf_halfspace_first_order(
    xi: &Vector3<f64>,
    spec: &CbfSpec,
    f_pos: &Vector3<f64>,
    g_pos: &DMatrix<f64>,
) -> HalfspaceConstraint {
    assert_eq!(g_pos.nrows(), 3, "g_pos must have three rows");
    let r = xi.norm();
    if r < spec.epsilon_origin {
        return HalfspaceConstraint::vacuous(g_pos.ncols());
    }
    let xi_d = DVector::from_column_slice(xi.as_slice());
    let normal = g_pos.transpose() * xi_d;
    let offset = r * class_kappa(barrier_value(xi, spec), spec) + xi.dot(f_pos);
    HalfspaceConstraint::new(normal, offset)
}

/// `ḣ = -ξᵀv/‖ξ‖` for the point-mass abstraction (zero inside the guard).
pub fn barrier_rate(state: &PointMassState, spec: &CbfSpec) -> f64 {
    barrier_gradient(&state.position, spec).dot(&state.velocity)
}

/// `ψ₁ = ḣ + λ h`.
pub fn psi1(state: &PointMassState, spec: &CbfSpec) -> f64 {
    barrier_rate(state, spec) + spec.lambda * barrier_value(&state.position, spec)
}

/// Acceleration constraint enforcing `ψ̇₁ ≥ -γ ψ₁` on a double integrator:
/// `a = ξ/‖ξ‖`, `b = -‖v‖²/‖ξ‖ + (ξᵀv)²/‖ξ‖³ + (γ + λ) ḣ + γ λ h`.
///
/// Still returned when `ψ₁ < 0`; the constraint then pulls `ψ₁` back up.
pub fn cbf_halfspace_exponential(state: &PointMassState, spec: &CbfSpec) -> HalfspaceConstraint {
    let xi = &state.position;
    let v = &state.velocity;
    let r = xi.norm();
    if r < spec.epsilon_origin {
        return HalfspaceConstraint::vacuous(3);
    }
    let radial = xi.dot(v);
    let h = barrier_value(xi, spec);
    let h_dot = -radial / r;
    let offset = -v.norm_squared() / r
        + radial * radial / (r * r * r)
        + (spec.gamma + spec.lambda) * h_dot
        + spec.gamma * spec.lambda * h;
    HalfspaceConstraint::new(DVector::from_column_slice((xi / r).as_slice()), offset)
}

/// Solution of `ẏ = -α(y)`, `y(0) = h0`: the comparison-lemma lower bound on
/// `h(t)` for the first-order constraint.
pub fn comparison_bound(h0: f64, spec: &CbfSpec, t: f64) -> f64 {
    h0 * (-spec.gamma * t).exp()
}
