use std::path::{Path, PathBuf};

use fedigw::base::GammaSchedule;
use fedigw::flprotocols::FLRoutineConfig;
use fedigw::policies::PolicyConfig;
use fedigw::sim::{ModelSpec, RunConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// One grid cell: the template run with these fields replaced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Method {
    pub name: String,
    pub policy: PolicyConfig,
    pub fl: FLRoutineConfig,
    pub model: ModelSpec,
    pub gamma: GammaSchedule,
}

impl Method {
    /// Resolved run for one seed.
    pub fn run_config(&self, template: &RunConfig, seed: u64) -> RunConfig {
        RunConfig {
            policy: self.policy,
            fl: self.fl,
            model: self.model,
            gamma: self.gamma,
            seed,
            ..template.clone()
        }
    }
}

/// A fully resolved experiment. Serialising it gives the run manifest,
/// which parses back to an identical config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Version of the tool that wrote the manifest (absent in user configs).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fedigw_version: Option<String>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub per_step: bool,
    pub run: RunConfig,
    pub methods: Vec<Method>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    policy: Option<PolicyConfig>,
    /// Merged key by key over the template's `fl` table.
    #[serde(default)]
    fl: Option<toml::Table>,
    #[serde(default)]
    model: Option<ModelSpec>,
    #[serde(default)]
    gamma: Option<GammaSchedule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    fedigw_version: Option<String>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_out")]
    out_dir: PathBuf,
    #[serde(default)]
    per_step: bool,
    run: toml::Table,
    #[serde(default)]
    methods: Vec<RawMethod>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// Default method label: `fedigw-<routine>` for IGW, `<policy>-<routine>` otherwise.
pub fn method_name(policy: &PolicyConfig, fl: &FLRoutineConfig) -> String {
    let p = match policy {
        PolicyConfig::Igw => "fedigw".to_string(),
        other => other.name().replace('_', "-"),
    };
    format!("{p}-{}", fl.kind.name().replace('_', "-"))
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Parse config text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> CliResult<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(config_err)?;
    let template_table = raw.run.clone();
    let mut run: RunConfig = toml::Value::Table(raw.run).try_into().map_err(|e| config_err(format!("[run]: {e}")))?;
    if let Some(p) = &run.env.dataset_path {
        run.env.dataset_path = Some(resolve_path(base_dir, p));
    }
    let template_fl = match template_table.get("fl") {
        Some(toml::Value::Table(t)) => t.clone(),
        _ => toml::Table::new(),
    };
    let mut methods = Vec::new();
    if raw.methods.is_empty() {
        methods.push(Method {
            name: method_name(&run.policy, &run.fl),
            policy: run.policy,
            fl: run.fl,
            model: run.model,
            gamma: run.gamma,
        });
    }
    for (i, m) in raw.methods.into_iter().enumerate() {
        let fl = match m.fl {
            None => run.fl,
            Some(over) => {
                let mut merged = template_fl.clone();
                merged.extend(over);
                toml::Value::Table(merged)
                    .try_into()
                    .map_err(|e| config_err(format!("methods[{i}].fl: {e}")))?
            }
        };
        let policy = m.policy.unwrap_or(run.policy);
        methods.push(Method {
            name: m.name.unwrap_or_else(|| method_name(&policy, &fl)),
            policy,
            fl,
            model: m.model.unwrap_or(run.model),
            gamma: m.gamma.unwrap_or(run.gamma),
        });
    }
    let cfg = ExperimentConfig {
        fedigw_version: raw.fedigw_version,
        seeds: raw.seeds,
        out_dir: resolve_path(base_dir, &raw.out_dir),
        per_step: raw.per_step,
        run,
        methods,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let base = parent.canonicalize().unwrap_or_else(|_| parent.to_path_buf());
    parse_config_str(&text, &base).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(CliError::Config("seed list has duplicates".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("no methods to run".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if m.name.is_empty() || !m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(CliError::Config(format!(
                    "method name `{}` must be nonempty and use only letters, digits, '-' or '_'",
                    m.name
                )));
            }
            if self.methods[..i].iter().any(|o| o.name == m.name) {
                return Err(CliError::Config(format!("duplicate method name `{}`", m.name)));
            }
            m.run_config(&self.run, self.seeds[0])
                .validate()
                .map_err(|e| CliError::Config(format!("method `{}`: {e}", m.name)))?;
        }
        Ok(())
    }

    /// Restrict seeds and/or methods (command-line overrides).
    pub fn restrict(&mut self, seeds: Option<Vec<u64>>, method: Option<&str>) -> CliResult<()> {
        if let Some(s) = seeds {
            if s.is_empty() {
                return Err(CliError::Usage("--seeds needs at least one seed".into()));
            }
            self.seeds = s;
        }
        if let Some(name) = method {
            let known: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
            if !known.contains(&name) {
                return Err(CliError::Usage(format!(
                    "unknown method `{name}` (available: {})",
                    known.join(", ")
                )));
            }
            self.methods.retain(|m| m.name == name);
        }
        self.validate()
    }

    /// Manifest text recording every value that affects results.
    pub fn manifest(&self) -> CliResult<String> {
        let mut stamped = self.clone();
        stamped.fedigw_version = Some(env!("CARGO_PKG_VERSION").to_string());
        toml::to_string(&stamped).map_err(|e| CliError::Config(format!("cannot serialise manifest: {e}")))
    }
}
