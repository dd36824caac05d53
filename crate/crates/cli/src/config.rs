//! TOML run configuration and its resolution against environment variables
//! and command-line flags. Precedence: CLI flags > environment > config file
//! > defaults.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mechanic_core::pipeline::RunConfig;
use mechanic_core::roles::{Role, RoleConfig};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub chat: ChatSection,
    #[serde(default)]
    pub roles: RolesSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub informal_rounds: Option<usize>,
    pub verify_passes: Option<usize>,
    pub fix_rounds: Option<usize>,
    pub sorrifier_max_iterations: Option<usize>,
    pub retry_threshold: Option<usize>,
    pub parallel_width: Option<usize>,
    pub fast_prove: Option<bool>,
    pub budget_usd: Option<f64>,
    pub time_limit_min: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    /// "toy" (default) or "http".
    pub mode: Option<String>,
    pub verify_url: Option<String>,
    pub search_url: Option<String>,
    pub verify_timeout_s: Option<u64>,
    pub in_flight_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatSection {
    /// "http" (default) or "scripted" for hermetic replays.
    pub mode: Option<String>,
    /// Per-role fallback completions for scripted mode.
    pub defaults: Option<HashMap<String, String>>,
    /// Queued completions for scripted mode, consumed in order per role.
    #[serde(default)]
    pub responses: Vec<ScriptedResponse>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedResponse {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolesSection {
    pub reasoner: Option<RoleSection>,
    pub verifier: Option<RoleSection>,
    pub prover: Option<RoleSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSection {
    pub model_id: Option<String>,
    pub endpoint: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<usize>,
    pub input_cost: Option<f64>,
    pub output_cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    Toy,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatMode {
    Http,
    Scripted,
}

/// CLI flag overrides applied on top of environment and file values.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub budget_usd: Option<f64>,
    pub time_limit_min: Option<f64>,
    pub fast_prove: bool,
    pub parallel: Option<usize>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct Settings {
    pub run: RunConfig,
    pub budget_usd: f64,
    pub time_limit: Duration,
    pub time_limit_min: Option<f64>,
    pub gateway_mode: GatewayMode,
    pub verify_url: Option<String>,
    pub search_url: Option<String>,
    pub verify_timeout: Duration,
    pub in_flight_cap: usize,
    pub chat_mode: ChatMode,
    pub chat_defaults: Vec<(Role, String)>,
    pub chat_responses: Vec<(Role, String)>,
    pub role_configs: [RoleConfig; 3],
}

/// The resolved values persisted into the run record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub run: RunConfig,
    /// None means unlimited; keeps the JSON finite.
    pub budget_usd: Option<f64>,
    pub time_limit_min: Option<f64>,
    pub gateway_mode: GatewayMode,
    pub chat_mode: ChatMode,
    pub roles: Vec<RoleConfig>,
}

pub fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

fn parse_role(name: &str) -> Result<Role> {
    match name {
        "reasoner" => Ok(Role::Reasoner),
        "verifier" => Ok(Role::Verifier),
        "prover" => Ok(Role::Prover),
        other => bail!("unknown role '{other}' (expected reasoner, verifier, or prover)"),
    }
}

fn env_f64(name: &str) -> Result<Option<f64>> {
    match std::env::var(name) {
        Ok(value) => Ok(Some(value.parse().with_context(|| {
            format!("environment variable {name} is not a number: {value}")
        })?)),
        Err(_) => Ok(None),
    }
}

fn merge_role(role: Role, section: Option<&RoleSection>) -> RoleConfig {
    let mut config = RoleConfig::default_for(role);
    if let Some(section) = section {
        if let Some(v) = &section.model_id {
            config.model_id = v.clone();
        }
        if let Some(v) = &section.endpoint {
            config.endpoint = v.clone();
        }
        if let Some(v) = section.temperature {
            config.temperature = v;
        }
        if let Some(v) = section.max_tokens {
            config.max_tokens = v;
        }
        if let Some(v) = section.input_cost {
            config.input_cost = v;
        }
        if let Some(v) = section.output_cost {
            config.output_cost = v;
        }
    }
    config
}

/// Resolve a file config against the environment and CLI overrides.
///
/// Environment variables: `MECHANIC_BUDGET_USD`, `MECHANIC_TIME_LIMIT_MIN`,
/// `LEAN_SERVER_URL`, `SEARCH_URL`.
pub fn resolve(file: &FileConfig, cli: &CliOverrides) -> Result<Settings> {
    let defaults = RunConfig::default();
    let mut run = RunConfig {
        informal_rounds: file.run.informal_rounds.unwrap_or(defaults.informal_rounds),
        verify_passes: file.run.verify_passes.unwrap_or(defaults.verify_passes),
        fix_rounds: file.run.fix_rounds.unwrap_or(defaults.fix_rounds),
        sorrifier_max_iterations: file
            .run
            .sorrifier_max_iterations
            .unwrap_or(defaults.sorrifier_max_iterations),
        retry_threshold: file.run.retry_threshold.unwrap_or(defaults.retry_threshold),
        parallel_width: file.run.parallel_width.unwrap_or(defaults.parallel_width),
        fast_prove_enabled: file.run.fast_prove.unwrap_or(defaults.fast_prove_enabled),
    };
    if let Some(parallel) = cli.parallel {
        run.parallel_width = parallel;
    }
    if cli.fast_prove {
        run.fast_prove_enabled = true;
    }
    run.validate().map_err(|e| anyhow::anyhow!(e))?;

    let budget_usd = cli
        .budget_usd
        .or(env_f64("MECHANIC_BUDGET_USD")?)
        .or(file.run.budget_usd)
        .unwrap_or(f64::INFINITY);
    if budget_usd < 0.0 {
        bail!("budget_usd must be non-negative");
    }
    let time_limit_min = cli
        .time_limit_min
        .or(env_f64("MECHANIC_TIME_LIMIT_MIN")?)
        .or(file.run.time_limit_min);
    let time_limit = match time_limit_min {
        Some(minutes) if minutes < 0.0 => bail!("time_limit_min must be non-negative"),
        Some(minutes) => Duration::from_secs_f64(minutes * 60.0),
        None => Duration::MAX,
    };

    let gateway_mode = match file.gateway.mode.as_deref().unwrap_or("toy") {
        "toy" => GatewayMode::Toy,
        "http" => GatewayMode::Http,
        other => bail!("unknown gateway mode '{other}' (expected toy or http)"),
    };
    let verify_url = std::env::var("LEAN_SERVER_URL")
        .ok()
        .or_else(|| file.gateway.verify_url.clone());
    let search_url = std::env::var("SEARCH_URL")
        .ok()
        .or_else(|| file.gateway.search_url.clone());
    if gateway_mode == GatewayMode::Http && verify_url.is_none() {
        bail!("gateway mode http requires gateway.verify_url or LEAN_SERVER_URL");
    }

    let chat_mode = match file.chat.mode.as_deref().unwrap_or("http") {
        "http" => ChatMode::Http,
        "scripted" => ChatMode::Scripted,
        other => bail!("unknown chat mode '{other}' (expected http or scripted)"),
    };
    let mut chat_defaults = Vec::new();
    if let Some(defaults) = &file.chat.defaults {
        for (name, content) in defaults {
            chat_defaults.push((parse_role(name)?, content.clone()));
        }
        chat_defaults.sort_by_key(|(role, _)| format!("{role:?}"));
    }
    let mut chat_responses = Vec::new();
    for response in &file.chat.responses {
        chat_responses.push((parse_role(&response.role)?, response.content.clone()));
    }

    let role_configs = [
        merge_role(Role::Reasoner, file.roles.reasoner.as_ref()),
        merge_role(Role::Verifier, file.roles.verifier.as_ref()),
        merge_role(Role::Prover, file.roles.prover.as_ref()),
    ];
    Ok(Settings {
        run,
        budget_usd,
        time_limit,
        time_limit_min,
        gateway_mode,
        verify_url,
        search_url,
        verify_timeout: Duration::from_secs(file.gateway.verify_timeout_s.unwrap_or(300)),
        in_flight_cap: file.gateway.in_flight_cap.unwrap_or(8),
        chat_mode,
        chat_defaults,
        chat_responses,
        role_configs,
    })
}

impl Settings {
    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            run: self.run.clone(),
            budget_usd: self.budget_usd.is_finite().then_some(self.budget_usd),
            time_limit_min: self.time_limit_min,
            gateway_mode: self.gateway_mode,
            chat_mode: self.chat_mode,
            roles: self.role_configs.to_vec(),
        }
    }
}
