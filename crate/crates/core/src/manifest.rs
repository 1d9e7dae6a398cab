//! Batch manifest for `suite`.
//!
//! ```toml
//! out = "suite_out"          # relative to the manifest file
//! format = "csv"             # csv | json | both
//! verbosity = "summary"      # quiet | summary | full
//! config = "base.toml"       # optional base config for the canonical scenarios
//! no_filter = false          # force the filter off everywhere
//!
//! [[scenario]]               # optional; replaces the canonical four
//! name = "tight"
//! config = "tight.toml"
//! ablation = false
//! ```

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::config::{load_config, ConfigError};
use crate::output::Format;
use crate::sim::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verbosity {
    Quiet,
    Summary,
    Full,
}

impl Verbosity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quiet" => Some(Verbosity::Quiet),
            "summary" => Some(Verbosity::Summary),
            "full" => Some(Verbosity::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestScenario {
    pub name: String,
    pub config: Option<PathBuf>,
    /// Expected to violate; reported but never fails the suite.
    pub ablation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub out: PathBuf,
    pub format: Format,
    pub verbosity: Verbosity,
    pub base_config: Option<PathBuf>,
    pub no_filter: bool,
    /// Empty means the canonical suite.
    pub scenarios: Vec<ManifestScenario>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            out: PathBuf::from("suite_out"),
            format: Format::Csv,
            verbosity: Verbosity::Summary,
            base_config: None,
            no_filter: false,
            scenarios: Vec::new(),
        }
    }
}

impl RunManifest {
    /// Base config for the canonical scenarios.
    pub fn base(&self) -> Result<ScenarioConfig, ConfigError> {
        match &self.base_config {
            Some(p) => load_config(p),
            None => Ok(ScenarioConfig::default()),
        }
    }
}

fn type_err(key: &str, expected: &'static str) -> ConfigError {
    ConfigError::Type {
        key: key.to_string(),
        expected,
    }
}

fn take_str(t: &mut Table, key: &str, full: &str) -> Result<Option<String>, ConfigError> {
    match t.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(type_err(full, "a string")),
    }
}

fn take_bool(t: &mut Table, key: &str, full: &str) -> Result<Option<bool>, ConfigError> {
    match t.remove(key) {
        None => Ok(None),
        Some(Value::Boolean(b)) => Ok(Some(b)),
        Some(_) => Err(type_err(full, "true or false")),
    }
}

fn reject_rest(t: &Table, prefix: &str) -> Result<(), ConfigError> {
    match t.keys().next() {
        Some(k) => Err(ConfigError::UnknownKey(format!("{prefix}{k}"))),
        None => Ok(()),
    }
}

/// Parses manifest text; relative paths are resolved against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<RunManifest, ConfigError> {
    let mut t: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
    let mut m = RunManifest::default();
    let resolve = |p: String| base_dir.join(p);

    if let Some(out) = take_str(&mut t, "out", "out")? {
        if out.is_empty() {
            return Err(ConfigError::Invalid("out must not be empty".into()));
        }
        m.out = resolve(out);
    } else {
        m.out = base_dir.join(&m.out);
    }
    if let Some(f) = take_str(&mut t, "format", "format")? {
        m.format = Format::parse(&f).ok_or_else(|| {
            ConfigError::Invalid(format!("format must be csv, json or both (got `{f}`)"))
        })?;
    }
    if let Some(v) = take_str(&mut t, "verbosity", "verbosity")? {
        m.verbosity = Verbosity::parse(&v).ok_or_else(|| {
            ConfigError::Invalid(format!("verbosity must be quiet, summary or full (got `{v}`)"))
        })?;
    }
    m.base_config = take_str(&mut t, "config", "config")?.map(resolve);
    m.no_filter = take_bool(&mut t, "no_filter", "no_filter")?.unwrap_or(false);

    match t.remove("scenario") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.into_iter().enumerate() {
                let prefix = format!("scenario[{i}].");
                let Value::Table(mut s) = item else {
                    return Err(type_err(&format!("scenario[{i}]"), "a table"));
                };
                let name = take_str(&mut s, "name", &format!("{prefix}name"))?
                    .ok_or_else(|| ConfigError::Invalid(format!("{prefix}name is required")))?;
                let valid = !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                if !valid {
                    return Err(ConfigError::Invalid(format!(
                        "{prefix}name must be non-empty [A-Za-z0-9_-] (got `{name}`)"
                    )));
                }
                if m.scenarios.iter().any(|o: &ManifestScenario| o.name == name) {
                    return Err(ConfigError::Invalid(format!("duplicate scenario name `{name}`")));
                }
                let config = take_str(&mut s, "config", &format!("{prefix}config"))?.map(resolve);
                let ablation = take_bool(&mut s, "ablation", &format!("{prefix}ablation"))?
                    .unwrap_or(false);
                reject_rest(&s, &prefix)?;
                m.scenarios.push(ManifestScenario {
                    name,
                    config,
                    ablation,
                });
            }
        }
        Some(_) => return Err(type_err("scenario", "an array of tables")),
    }
    reject_rest(&t, "")?;
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_is_canonical_suite() {
        let m = parse_manifest("", Path::new("/tmp/x")).unwrap();
        assert_eq!(m.out, PathBuf::from("/tmp/x/suite_out"));
        assert_eq!(m.format, Format::Csv);
        assert!(m.scenarios.is_empty());
    }

    #[test]
    fn paths_resolve_against_manifest_dir() {
        let text = r#"
out = "o"
format = "both"
verbosity = "full"
config = "base.toml"
[[scenario]]
name = "a"
config = "a.toml"
[[scenario]]
name = "b"
ablation = true
"#;
        let m = parse_manifest(text, Path::new("/d")).unwrap();
        assert_eq!(m.out, PathBuf::from("/d/o"));
        assert_eq!(m.base_config, Some(PathBuf::from("/d/base.toml")));
        assert_eq!(m.format, Format::Both);
        assert_eq!(m.verbosity, Verbosity::Full);
        assert_eq!(m.scenarios.len(), 2);
        assert_eq!(m.scenarios[0].config, Some(PathBuf::from("/d/a.toml")));
        assert!(m.scenarios[1].ablation);
    }

    #[test]
    fn rejects_bad_manifests() {
        let dir = Path::new(".");
        assert!(matches!(
            parse_manifest("outt = \"x\"", dir),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(parse_manifest("format = \"xml\"", dir).is_err());
        assert!(parse_manifest("[[scenario]]\nconfig = \"a\"\n", dir).is_err());
        assert!(parse_manifest("[[scenario]]\nname = \"../x\"\n", dir).is_err());
        assert!(parse_manifest("[[scenario]]\nname = \"a\"\n[[scenario]]\nname = \"a\"\n", dir).is_err());
        assert!(parse_manifest("scenario = 3", dir).is_err());
    }
}
