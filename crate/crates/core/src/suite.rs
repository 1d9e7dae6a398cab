//! Batch runs: the canonical scenarios plus the filter-off ablation, or a
//! manifest's own list, executed in parallel and reported in order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{load_config, ConfigError};
use crate::manifest::{RunManifest, Verbosity};
use crate::output::{write_trajectory, Format};
use crate::sim::{
    run_scenario, verify_log, CheckOutcome, InvariantReport, LogSummary, ScenarioConfig,
    ScenarioKind, ScenarioSpec,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_SAFETY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    pub config: ScenarioConfig,
    pub ablation: bool,
}

/// In-sphere setpoint, out-of-sphere setpoint, over-radius circle, and the
/// out-of-sphere case with the filter off. Model, gains and limits come from
/// `base`; the scenario block is replaced.
pub fn canonical_entries(base: &ScenarioConfig) -> Vec<SuiteEntry> {
    let start = base.scenario.start;
    let spec = |s: ScenarioConfig| ScenarioSpec { start, ..s.scenario };
    let with = |scenario: ScenarioSpec, filter: bool| ScenarioConfig {
        scenario,
        filter_enabled: filter,
        ..*base
    };
    let inside = spec(ScenarioConfig::in_sphere_setpoint());
    let outside = spec(ScenarioConfig::out_of_sphere_setpoint());
    let circle = spec(ScenarioConfig::over_radius_circle());
    debug_assert_eq!(circle.kind, ScenarioKind::CircularTrack);
    vec![
        SuiteEntry {
            name: "in_sphere_setpoint".into(),
            config: with(inside, true),
            ablation: false,
        },
        SuiteEntry {
            name: "out_of_sphere_setpoint".into(),
            config: with(outside, true),
            ablation: false,
        },
        SuiteEntry {
            name: "over_radius_circle".into(),
            config: with(circle, true),
            ablation: false,
        },
        SuiteEntry {
            name: "out_of_sphere_ablation".into(),
            config: with(outside, false),
            ablation: true,
        },
    ]
}

/// Entries for a manifest, with `no_filter` applied.
pub fn manifest_entries(m: &RunManifest) -> Result<Vec<SuiteEntry>, ConfigError> {
    let base = m.base()?;
    let mut entries = if m.scenarios.is_empty() {
        canonical_entries(&base)
    } else {
        m.scenarios
            .iter()
            .map(|s| {
                let config = match &s.config {
                    Some(p) => load_config(p)?,
                    None => base,
                };
                Ok(SuiteEntry {
                    name: s.name.clone(),
                    config,
                    ablation: s.ablation,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?
    };
    if m.no_filter {
        for e in &mut entries {
            e.config.filter_enabled = false;
        }
    }
    Ok(entries)
}

#[derive(Debug)]
pub enum ScenarioResult {
    Completed {
        summary: LogSummary,
        report: InvariantReport,
        files: Vec<PathBuf>,
    },
    Aborted(String),
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub name: String,
    pub ablation: bool,
    pub result: ScenarioResult,
}

impl ScenarioOutcome {
    pub fn safety_failed(&self) -> bool {
        matches!(&self.result, ScenarioResult::Completed { report, .. } if !report.safety_ok())
    }
}

#[derive(Debug)]
pub struct SuiteReport {
    pub outcomes: Vec<ScenarioOutcome>,
}

impl SuiteReport {
    /// Safety failures outside ablations take precedence over aborts.
    pub fn exit_code(&self) -> i32 {
        let relevant = || self.outcomes.iter().filter(|o| !o.ablation);
        if relevant().any(|o| o.safety_failed()) {
            EXIT_SAFETY
        } else if self
            .outcomes
            .iter()
            .any(|o| matches!(o.result, ScenarioResult::Aborted(_)))
        {
            EXIT_RUNTIME
        } else {
            EXIT_PASS
        }
    }

    pub fn files(&self) -> Vec<&Path> {
        self.outcomes
            .iter()
            .flat_map(|o| match &o.result {
                ScenarioResult::Completed { files, .. } => files.iter().map(|p| p.as_path()).collect(),
                ScenarioResult::Aborted(_) => Vec::new(),
            })
            .collect()
    }

    pub fn render(&self, verbosity: Verbosity) -> String {
        let mut s = String::new();
        if verbosity != Verbosity::Quiet {
            for o in &self.outcomes {
                render_outcome(&mut s, o, verbosity);
            }
        }
        let code = self.exit_code();
        let _ = writeln!(
            s,
            "suite: {} scenario(s), exit {code} ({})",
            self.outcomes.len(),
            match code {
                EXIT_PASS => "pass",
                EXIT_SAFETY => "safety check failed",
                _ => "runtime fault",
            }
        );
        s
    }
}

fn render_outcome(s: &mut String, o: &ScenarioOutcome, verbosity: Verbosity) {
    match &o.result {
        ScenarioResult::Aborted(msg) => {
            let _ = writeln!(s, "[ABORT] {}: {msg}", o.name);
        }
        ScenarioResult::Completed { summary, report, .. } => {
            let label = match (o.ablation, report.safety_ok()) {
                (false, true) => "PASS",
                (false, false) => "FAIL",
                (true, false) => "ABLATION violates as expected",
                (true, true) => "ABLATION holds (filter not shown necessary)",
            };
            let _ = writeln!(
                s,
                "[{label}] {}: min_h={:.6e} max_r={:.6e} final_err={:.6e} interventions={}",
                o.name,
                summary.min_h,
                summary.max_r,
                summary.final_error_norm,
                summary.filter_interventions
            );
            for c in &report.checks {
                let show = verbosity == Verbosity::Full
                    || (c.outcome == CheckOutcome::Fail && !o.ablation);
                if show {
                    let outcome = match c.outcome {
                        CheckOutcome::Pass => "pass",
                        CheckOutcome::Fail => "fail",
                        CheckOutcome::NotApplicable => "n/a",
                    };
                    let _ = writeln!(s, "    {}: {outcome} ({})", c.name, c.detail);
                }
            }
        }
    }
}

fn run_one(entry: &SuiteEntry, out: &Path, format: Format) -> ScenarioOutcome {
    let result = match run_scenario(&entry.config) {
        Err(e) => ScenarioResult::Aborted(e.to_string()),
        Ok(log) => {
            let report = verify_log(&log, &entry.config);
            match write_trajectory(&log, out, &entry.name, format) {
                Ok(files) => ScenarioResult::Completed {
                    summary: log.summary,
                    report,
                    files,
                },
                Err(e) => ScenarioResult::Aborted(e.to_string()),
            }
        }
    };
    ScenarioOutcome {
        name: entry.name.clone(),
        ablation: entry.ablation,
        result,
    }
}

/// Runs every entry on its own thread; one abort does not stop the rest.
pub fn run_entries(entries: &[SuiteEntry], out: &Path, format: Format) -> SuiteReport {
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .iter()
            .map(|e| scope.spawn(move || run_one(e, out, format)))
            .collect();
        handles
            .into_iter()
            .zip(entries)
            .map(|(h, e)| {
                h.join().unwrap_or_else(|_| ScenarioOutcome {
                    name: e.name.clone(),
                    ablation: e.ablation,
                    result: ScenarioResult::Aborted("worker panicked".into()),
                })
            })
            .collect()
    });
    SuiteReport { outcomes }
}

pub fn run_suite(manifest: &RunManifest) -> Result<SuiteReport, ConfigError> {
    let entries = manifest_entries(manifest)?;
    Ok(run_entries(&entries, &manifest.out, manifest.format))
}
