//! Safety-filter quadratic program
//!
//! ```text
//! minimise   ½‖u - u_nom‖²
//! subject to aᵢᵀu ≤ bᵢ      (half-space constraints)
//!            lo ≤ u ≤ hi    (optional box)
//! ```
//!
//! The Hessian is the identity, so the dual active-set method of Goldfarb and
//! Idnani applies directly: start from the unconstrained optimum `u_nom`, add
//! the most violated constraint, and take primal/dual steps that keep every
//! working multiplier non-negative, dropping constraints whose multiplier
//! would cross zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::safety::HalfspaceConstraint;

/// Primal feasibility tolerance on `aᵀu - b`.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Bound on the KKT residual of a solution reported as optimal.
pub const KKT_TOL: f64 = 1e-8;
/// Iteration cap per input dimension.
pub const ITERATIONS_PER_DIM: usize = 50;

/// Relative size of the null-space component below which an entering
/// constraint is treated as linearly dependent on the working set.
const DEPENDENCE_TOL: f64 = 1e-12;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum QpError {
    #[error("constraint {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("bounds for component {0} have lo > hi")]
    InvertedBounds(usize),
    #[error("bounds list has {got} entries, expected {expected}")]
    BoundsLength { expected: usize, got: usize },
    #[error("problem data is not finite")]
    NonFinite,
    #[error("multiplier count {got} does not match {expected} constraint rows")]
    MultiplierCount { expected: usize, got: usize },
    #[error("constraint has zero normal and negative offset; no input satisfies it")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub u_nom: DVector<f64>,
    pub constraints: Vec<HalfspaceConstraint>,
    /// Per-component `[lo, hi]`.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl QpProblem {
    pub fn new(u_nom: DVector<f64>, constraints: Vec<HalfspaceConstraint>) -> Self {
        Self {
            u_nom,
            constraints,
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn dim(&self) -> usize {
        self.u_nom.len()
    }

    /// Number of inequality rows after expanding the box: constraints first,
    /// then `(upper, lower)` per bounded component.
    pub fn row_count(&self) -> usize {
        self.constraints.len() + self.bounds.as_ref().map_or(0, |b| 2 * b.len())
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.u_nom.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite);
        }
        for (index, c) in self.constraints.iter().enumerate() {
            if c.dim() != n {
                return Err(QpError::DimensionMismatch {
                    index,
                    expected: n,
                    got: c.dim(),
                });
            }
            if !c.offset.is_finite() || c.normal.iter().any(|v| !v.is_finite()) {
                return Err(QpError::NonFinite);
            }
        }
        if let Some(bounds) = &self.bounds {
            if bounds.len() != n {
                return Err(QpError::BoundsLength {
                    expected: n,
                    got: bounds.len(),
                });
            }
            for (i, &(lo, hi)) in bounds.iter().enumerate() {
                if lo.is_nan() || hi.is_nan() {
                    return Err(QpError::NonFinite);
                }
                if lo > hi {
                    return Err(QpError::InvertedBounds(i));
                }
            }
        }
        Ok(())
    }

    /// All rows as `(a, b)` pairs in [`row_count`](Self::row_count) order.
    fn rows(&self) -> Vec<(DVector<f64>, f64)> {
        let n = self.dim();
        let mut rows: Vec<_> = self
            .constraints
            .iter()
            .map(|c| (c.normal.clone(), c.offset))
            .collect();
        if let Some(bounds) = &self.bounds {
            for (i, &(lo, hi)) in bounds.iter().enumerate() {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                rows.push((e.clone(), hi));
                rows.push((-e, -lo));
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    /// Row indices with a positive multiplier at the returned point.
    pub active_set: Vec<usize>,
    /// One multiplier per row.
    pub multipliers: DVector<f64>,
    pub kkt_residual: f64,
    pub status: QpStatus,
    /// For infeasible problems: `y ≥ 0` with `Aᵀy = 0` and `bᵀy < 0`.
    pub farkas_witness: Option<DVector<f64>>,
    pub iterations: usize,
}

/// Euclidean projection of `u_nom` onto a single half-space.
pub fn project_halfspace(
    u_nom: &DVector<f64>,
    c: &HalfspaceConstraint,
) -> Result<DVector<f64>, QpError> {
    let viol = c.violation(u_nom);
    if viol <= 0.0 {
        return Ok(u_nom.clone());
    }
    let nn = c.normal.norm_squared();
    if nn == 0.0 {
        return Err(QpError::Infeasible);
    }
    Ok(u_nom - &c.normal * (viol / nn))
}

/// Largest of stationarity `‖(u - u_nom) + Aᵀμ‖∞`, primal violation, dual
/// negativity and complementary slackness.
pub fn kkt_residual(
    p: &QpProblem,
    u: &DVector<f64>,
    multipliers: &DVector<f64>,
) -> Result<f64, QpError> {
    let rows = p.rows();
    if multipliers.len() != rows.len() {
        return Err(QpError::MultiplierCount {
            expected: rows.len(),
            got: multipliers.len(),
        });
    }
    let mut grad = u - &p.u_nom;
    let mut worst = 0.0f64;
    for ((a, b), &mu) in rows.iter().zip(multipliers.iter()) {
        grad += a * mu;
        let slack = a.dot(u) - b;
        worst = worst.max(slack).max(-mu).max((mu * slack).abs());
    }
    Ok(worst.max(grad.amax()))
}

fn solve_gram(a_w: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let gram = a_w * a_w.transpose();
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => gram.lu().solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
    }
}

fn stack(rows: &[(DVector<f64>, f64)], working: &[usize], n: usize) -> DMatrix<f64> {
    let mut a_w = DMatrix::zeros(working.len(), n);
    for (k, &i) in working.iter().enumerate() {
        a_w.set_row(k, &rows[i].0.transpose());
    }
    a_w
}

/// Active-set solve of the safety-filter QP.
pub fn solve_active_set(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.validate()?;
    let n = p.dim();
    let rows = p.rows();
    let cap = ITERATIONS_PER_DIM * n.max(1);

    let finish = |u: DVector<f64>, working: &[usize], mu: &[f64], status, witness, iterations| {
        let mut multipliers = DVector::zeros(rows.len());
        for (&i, &m) in working.iter().zip(mu) {
            multipliers[i] = m;
        }
        let kkt = kkt_residual(p, &u, &multipliers).expect("row count is consistent");
        let mut active_set: Vec<usize> = working
            .iter()
            .zip(mu)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&i, _)| i)
            .collect();
        active_set.sort_unstable();
        QpSolution {
            u_star: u,
            active_set,
            multipliers,
            kkt_residual: kkt,
            status,
            farkas_witness: witness,
            iterations,
        }
    };

    // A zero row with a negative offset is infeasible on its own.
    if let Some(j) = rows
        .iter()
        .position(|(a, b)| a.iter().all(|&v| v == 0.0) && *b < -FEASIBILITY_TOL)
    {
        let mut y = DVector::zeros(rows.len());
        y[j] = 1.0;
        return Ok(finish(p.u_nom.clone(), &[], &[], QpStatus::Infeasible, Some(y), 0));
    }

    let norms: Vec<f64> = rows.iter().map(|(a, _)| a.norm()).collect();
    let mut u = p.u_nom.clone();
    let mut working: Vec<usize> = Vec::new();
    let mut mu: Vec<f64> = Vec::new();
    let mut iterations = 0;

    loop {
        // Most violated row outside the working set, scaled by its normal.
        let entering = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !working.contains(i) && norms[*i] > 0.0)
            .map(|(i, (a, b))| (i, a.dot(&u) - b, (a.dot(&u) - b) / norms[i]))
            .filter(|&(_, viol, _)| viol > FEASIBILITY_TOL)
            .max_by(|x, y| x.2.total_cmp(&y.2));

        let Some((j, _, _)) = entering else {
            if working.is_empty() {
                return Ok(finish(u, &working, &mu, QpStatus::Optimal, None, iterations));
            }
            // Recompute the iterate from the working set to shed the rounding
            // accumulated over the partial steps.
            let a_w = stack(&rows, &working, n);
            let b_w = DVector::from_iterator(working.len(), working.iter().map(|&i| rows[i].1));
            let polished_mu = solve_gram(&a_w, &(&a_w * &p.u_nom - b_w));
            if polished_mu.iter().all(|&m| m >= 0.0) {
                let polished = &p.u_nom - a_w.transpose() * &polished_mu;
                let still_feasible = rows
                    .iter()
                    .all(|(a, b)| a.dot(&polished) - b <= FEASIBILITY_TOL);
                if still_feasible {
                    u = polished;
                    mu = polished_mu.iter().copied().collect();
                }
            }
            let s = finish(u, &working, &mu, QpStatus::Optimal, None, iterations);
            if s.kkt_residual <= KKT_TOL {
                return Ok(s);
            }
            log::warn!("active-set QP stopped with KKT residual {:e}", s.kkt_residual);
            return Ok(QpSolution {
                status: QpStatus::MaxIter,
                ..s
            });
        };

        let (a_j, b_j) = (&rows[j].0, rows[j].1);
        let mut mu_j = 0.0;
        loop {
            iterations += 1;
            if iterations > cap {
                return Ok(finish(u, &working, &mu, QpStatus::MaxIter, None, iterations));
            }
            let (r, z) = if working.is_empty() {
                (DVector::zeros(0), a_j.clone())
            } else {
                let a_w = stack(&rows, &working, n);
                let r = solve_gram(&a_w, &(&a_w * a_j));
                let z = a_j - a_w.transpose() * &r;
                (r, z)
            };
            let zz = z.norm_squared();
            let dependent = zz <= DEPENDENCE_TOL * a_j.norm_squared();

            // Partial step: first working multiplier to hit zero. Ties go to
            // the most recently added row.
            let mut blocking: Option<(usize, f64)> = None;
            for (k, (&rk, &mk)) in r.iter().zip(&mu).enumerate() {
                if rk > 0.0 {
                    let t = mk / rk;
                    if blocking.is_none_or(|(_, best)| t <= best) {
                        blocking = Some((k, t));
                    }
                }
            }

            if dependent && blocking.is_none() {
                // a_j = A_Wᵀ r with r ≤ 0: combine into a Farkas certificate.
                let mut y = DVector::zeros(rows.len());
                for (k, &i) in working.iter().enumerate() {
                    y[i] = -r[k];
                }
                y[j] = 1.0;
                return Ok(finish(
                    u,
                    &working,
                    &mu,
                    QpStatus::Infeasible,
                    Some(y),
                    iterations,
                ));
            }

            let full = if dependent {
                f64::INFINITY
            } else {
                (a_j.dot(&u) - b_j) / zz
            };
            match blocking {
                Some((k, t)) if t < full => {
                    if !dependent {
                        u -= &z * t;
                    }
                    for (m, rk) in mu.iter_mut().zip(r.iter()) {
                        *m -= t * rk;
                    }
                    mu_j += t;
                    working.remove(k);
                    mu.remove(k);
                }
                _ => {
                    u -= &z * full;
                    for (m, rk) in mu.iter_mut().zip(r.iter()) {
                        *m -= full * rk;
                    }
                    working.push(j);
                    mu.push(mu_j + full);
                    break;
                }
            }
        }
    }
}
