//! TOML scenario configuration.
//!
//! ```toml
//! model = "double_integrator"        # single_integrator | double_integrator | full_tuav
//!
//! [scenario]
//! type = "setpoint"                  # setpoint | linear_track | circular_track
//! target = [2.0, 2.0, 5.0]
//! center = [0.0, 0.0, 6.0]
//! radius = 15.0
//! omega = 0.2
//! speed = 1.0
//! start = [0.0, 0.0, 0.0]
//!
//! [sim]
//! dt = 0.01
//! duration = 60.0
//!
//! [gains]
//! kp = 4.0
//! kd = 4.0
//! tilt_limit = 0.5
//! altitude = { k1 = 2.0, k2 = 2.0 }  # also lateral_x, lateral_y, roll, pitch, yaw, winch
//!
//! [cbf]
//! gamma = 1.0
//! lambda = 1.0
//! l_max = 13.0
//! epsilon_origin = 0.01
//!
//! [params]                           # m, g, ixx, iyy, izz, ax, ay, az, rho_tether,
//! m = 2.84                           # tether_area, r_w, beta_w, i_w, k_t
//!
//! [filter]
//! enabled = true
//! infeasible_policy = "hold_zero"    # hold_zero | clip_nominal
//! input_bound = 50.0                 # optional
//! ```
//!
//! Every key is optional. Unknown keys are errors.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::control::{AxisGains, GainSet};
use crate::sim::{InfeasiblePolicy, Model, ScenarioConfig, ScenarioKind};

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` must be {expected}")]
    Type { key: String, expected: &'static str },
    #[error("{0}")]
    Invalid(String),
}

struct Section<'a> {
    prefix: String,
    table: Table,
    defaulted: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn key(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    fn take(&mut self, name: &str) -> Option<Value> {
        let v = self.table.remove(name);
        if v.is_none() {
            let key = self.key(name);
            self.defaulted.push(key);
        }
        v
    }

    fn type_err(&self, name: &str, expected: &'static str) -> ConfigError {
        ConfigError::Type {
            key: self.key(name),
            expected,
        }
    }

    fn float(&mut self, name: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(name) {
            None => Ok(default),
            Some(Value::Float(f)) => Ok(f),
            Some(Value::Integer(i)) => Ok(i as f64),
            Some(_) => Err(self.type_err(name, "a number")),
        }
    }

    fn opt_float(&mut self, name: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(name) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(f)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(_) => Err(self.type_err(name, "a number")),
        }
    }

    fn boolean(&mut self, name: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(name) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(self.type_err(name, "true or false")),
        }
    }

    fn string(&mut self, name: &str) -> Result<Option<String>, ConfigError> {
        match self.take(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.type_err(name, "a string")),
        }
    }

    fn vec3(&mut self, name: &str, default: [f64; 3]) -> Result<[f64; 3], ConfigError> {
        let Some(v) = self.take(name) else {
            return Ok(default);
        };
        let err = || self.type_err(name, "an array of 3 numbers");
        let Value::Array(items) = v else {
            return Err(err());
        };
        if items.len() != 3 {
            return Err(err());
        }
        let mut out = [0.0; 3];
        for (slot, item) in out.iter_mut().zip(items) {
            *slot = match item {
                Value::Float(f) => f,
                Value::Integer(i) => i as f64,
                _ => return Err(err()),
            };
        }
        Ok(out)
    }

    fn section(&mut self, name: &str) -> Result<Section<'_>, ConfigError> {
        let key = self.key(name);
        let table = match self.table.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => return Err(self.type_err(name, "a table")),
        };
        Ok(Section {
            prefix: key,
            table,
            defaulted: self.defaulted,
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().next() {
            Some(k) => Err(ConfigError::UnknownKey(if self.prefix.is_empty() {
                k.clone()
            } else {
                format!("{}.{}", self.prefix, k)
            })),
            None => Ok(()),
        }
    }
}

fn axis(gains: &mut Section, name: &str, default: AxisGains) -> Result<AxisGains, ConfigError> {
    let mut s = gains.section(name)?;
    let out = AxisGains {
        k1: s.float("k1", default.k1)?,
        k2: s.float("k2", default.k2)?,
    };
    s.finish()?;
    Ok(out)
}

/// Parses configuration text; missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
    let mut defaulted = Vec::new();
    let mut root = Section {
        prefix: String::new(),
        table,
        defaulted: &mut defaulted,
    };
    let d = ScenarioConfig::default();
    let mut c = d;

    if let Some(m) = root.string("model")? {
        c.model = Model::parse(&m).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "model must be one of single_integrator, double_integrator, full_tuav (got `{m}`)"
            ))
        })?;
    }

    {
        let mut s = root.section("scenario")?;
        if let Some(k) = s.string("type")? {
            c.scenario.kind = ScenarioKind::parse(&k).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "scenario.type must be one of setpoint, linear_track, circular_track (got `{k}`)"
                ))
            })?;
        }
        c.scenario.target = s.vec3("target", d.scenario.target)?;
        c.scenario.center = s.vec3("center", d.scenario.center)?;
        c.scenario.radius = s.float("radius", d.scenario.radius)?;
        c.scenario.angular_rate = s.float("omega", d.scenario.angular_rate)?;
        c.scenario.speed = s.float("speed", d.scenario.speed)?;
        c.scenario.start = s.vec3("start", d.scenario.start)?;
        s.finish()?;
    }

    {
        let mut s = root.section("sim")?;
        c.dt = s.float("dt", d.dt)?;
        c.duration = s.float("duration", d.duration)?;
        s.finish()?;
    }

    {
        let mut s = root.section("gains")?;
        let g = &mut c.gains;
        g.kp = s.float("kp", d.gains.kp)?;
        g.kd = s.float("kd", d.gains.kd)?;
        g.tilt_limit = s.float("tilt_limit", d.gains.tilt_limit)?;
        g.altitude = axis(&mut s, "altitude", d.gains.altitude)?;
        g.lateral_x = axis(&mut s, "lateral_x", d.gains.lateral_x)?;
        g.lateral_y = axis(&mut s, "lateral_y", d.gains.lateral_y)?;
        g.roll = axis(&mut s, "roll", d.gains.roll)?;
        g.pitch = axis(&mut s, "pitch", d.gains.pitch)?;
        g.yaw = axis(&mut s, "yaw", d.gains.yaw)?;
        g.winch = axis(&mut s, "winch", d.gains.winch)?;
        s.finish()?;
    }

    {
        let mut s = root.section("cbf")?;
        c.cbf.gamma = s.float("gamma", d.cbf.gamma)?;
        c.cbf.lambda = s.float("lambda", d.cbf.lambda)?;
        c.cbf.l_max = s.float("l_max", d.cbf.l_max)?;
        c.cbf.epsilon_origin = s.float("epsilon_origin", d.cbf.epsilon_origin)?;
        c.params.l_max = c.cbf.l_max;
        s.finish()?;
    }

    {
        let mut s = root.section("params")?;
        let (p, dp) = (&mut c.params, &d.params);
        p.m = s.float("m", dp.m)?;
        p.g = s.float("g", dp.g)?;
        p.ixx = s.float("ixx", dp.ixx)?;
        p.iyy = s.float("iyy", dp.iyy)?;
        p.izz = s.float("izz", dp.izz)?;
        p.ax = s.float("ax", dp.ax)?;
        p.ay = s.float("ay", dp.ay)?;
        p.az = s.float("az", dp.az)?;
        p.rho_tether = s.float("rho_tether", dp.rho_tether)?;
        p.tether_area = s.float("tether_area", dp.tether_area)?;
        p.r_w = s.float("r_w", dp.r_w)?;
        p.beta_w = s.float("beta_w", dp.beta_w)?;
        p.i_w = s.float("i_w", dp.i_w)?;
        p.k_t = s.float("k_t", dp.k_t)?;
        s.finish()?;
    }

    {
        let mut s = root.section("filter")?;
        c.filter_enabled = s.boolean("enabled", c.model != Model::FullTuav)?;
        if let Some(p) = s.string("infeasible_policy")? {
            c.infeasible_policy = InfeasiblePolicy::parse(&p).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "filter.infeasible_policy must be hold_zero or clip_nominal (got `{p}`)"
                ))
            })?;
        }
        c.input_bound = s.opt_float("input_bound")?;
        s.finish()?;
    }

    root.finish()?;

    // `input_bound` is optional by design; everything else is a real default.
    defaulted.retain(|k| k != "filter.input_bound");
    if !defaulted.is_empty() {
        log::info!("config: defaults used for {}", defaulted.join(", "));
    }

    c.validate().map_err(ConfigError::Invalid)?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

fn vec3(v: [f64; 3]) -> Value {
    Value::Array(v.iter().map(|x| Value::Float(*x)).collect())
}

fn table<const N: usize>(entries: [(&str, Value); N]) -> Value {
    Value::Table(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn axis_value(a: AxisGains) -> Value {
    table([("k1", Value::Float(a.k1)), ("k2", Value::Float(a.k2))])
}

/// Full, explicit TOML for a config; [`parse_config`] reads it back exactly.
pub fn config_to_toml(c: &ScenarioConfig) -> String {
    let f = Value::Float;
    let g: &GainSet = &c.gains;
    let p = &c.params;
    let mut filter = table([
        ("enabled", Value::Boolean(c.filter_enabled)),
        (
            "infeasible_policy",
            Value::String(c.infeasible_policy.as_str().into()),
        ),
    ]);
    if let (Some(b), Value::Table(t)) = (c.input_bound, &mut filter) {
        t.insert("input_bound".into(), f(b));
    }
    let root = table([
        ("model", Value::String(c.model.as_str().into())),
        (
            "scenario",
            table([
                ("type", Value::String(c.scenario.kind.as_str().into())),
                ("target", vec3(c.scenario.target)),
                ("center", vec3(c.scenario.center)),
                ("radius", f(c.scenario.radius)),
                ("omega", f(c.scenario.angular_rate)),
                ("speed", f(c.scenario.speed)),
                ("start", vec3(c.scenario.start)),
            ]),
        ),
        ("sim", table([("dt", f(c.dt)), ("duration", f(c.duration))])),
        (
            "gains",
            table([
                ("kp", f(g.kp)),
                ("kd", f(g.kd)),
                ("tilt_limit", f(g.tilt_limit)),
                ("altitude", axis_value(g.altitude)),
                ("lateral_x", axis_value(g.lateral_x)),
                ("lateral_y", axis_value(g.lateral_y)),
                ("roll", axis_value(g.roll)),
                ("pitch", axis_value(g.pitch)),
                ("yaw", axis_value(g.yaw)),
                ("winch", axis_value(g.winch)),
            ]),
        ),
        (
            "cbf",
            table([
                ("gamma", f(c.cbf.gamma)),
                ("lambda", f(c.cbf.lambda)),
                ("l_max", f(c.cbf.l_max)),
                ("epsilon_origin", f(c.cbf.epsilon_origin)),
            ]),
        ),
        (
            "params",
            table([
                ("m", f(p.m)),
                ("g", f(p.g)),
                ("ixx", f(p.ixx)),
                ("iyy", f(p.iyy)),
                ("izz", f(p.izz)),
                ("ax", f(p.ax)),
                ("ay", f(p.ay)),
                ("az", f(p.az)),
                ("rho_tether", f(p.rho_tether)),
                ("tether_area", f(p.tether_area)),
                ("r_w", f(p.r_w)),
                ("beta_w", f(p.beta_w)),
                ("i_w", f(p.i_w)),
                ("k_t", f(p.k_t)),
            ]),
        ),
        ("filter", filter),
    ]);
    match root {
        Value::Table(t) => toml::to_string(&t).expect("config tables always serialise"),
        _ => unreachable!(),
    }
}
