use serde::{Deserialize, Serialize};

use super::ScenarioConfig;
use crate::dynamics::INPUT_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Optimal,
    Infeasible,
    MaxIter,
    /// Filter switched off; `u_star == u_nom`.
    Disabled,
}

impl RecordStatus {
    pub const ALL: [RecordStatus; 4] = [
        RecordStatus::Optimal,
        RecordStatus::Infeasible,
        RecordStatus::MaxIter,
        RecordStatus::Disabled,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Optimal => "optimal",
            RecordStatus::Infeasible => "infeasible",
            RecordStatus::MaxIter => "max_iter",
            RecordStatus::Disabled => "disabled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

/// One tick. Point-mass models pad the input arrays with zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    /// Full model state; empty when read back from CSV.
    pub state: Vec<f64>,
    pub position: [f64; 3],
    pub r: f64,
    pub h: f64,
    pub psi1: Option<f64>,
    pub u_star: [f64; INPUT_DIM],
    pub u_nom: [f64; INPUT_DIM],
    pub qp_active: bool,
    pub qp_status: RecordStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub min_h: f64,
    pub max_r: f64,
    /// Distance to the reference at the last record.
    pub final_error_norm: f64,
    pub filter_interventions: usize,
    pub infeasible_ticks: usize,
}

impl LogSummary {
    pub fn compute(records: &[LogRecord], config: &ScenarioConfig) -> Self {
        let final_error_norm = records
            .last()
            .map(|r| {
                let (p, _) = config.scenario.reference(r.t);
                (nalgebra::Vector3::from(r.position) - p).norm()
            })
            .unwrap_or(f64::NAN);
        Self {
            min_h: records.iter().map(|r| r.h).fold(f64::INFINITY, f64::min),
            max_r: records.iter().map(|r| r.r).fold(f64::NEG_INFINITY, f64::max),
            final_error_norm,
            filter_interventions: records.iter().filter(|r| r.qp_active).count(),
            infeasible_ticks: records
                .iter()
                .filter(|r| r.qp_status == RecordStatus::Infeasible)
                .count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
    pub summary: LogSummary,
}

impl TrajectoryLog {
    pub fn new(records: Vec<LogRecord>, config: &ScenarioConfig) -> Self {
        let summary = LogSummary::compute(&records, config);
        Self { records, summary }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
