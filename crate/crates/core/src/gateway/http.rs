//! HTTP backend speaking to a Lean verification server and a retrieval
//! service. Wire format:
//!
//! `POST {verify_url}` with `{"code": "...", "timeout_s": 300}` returning
//! `{"verdict": "valid|valid_with_sorries|invalid|timeout",
//!   "diagnostics": [{"severity", "line", "column", "end_line?",
//!                    "end_column?", "message"}],
//!   "goals": [{"sorry_index", "hypotheses": [{"name", "type"}], "goal"}],
//!   "elapsed_ms": 123}`
//!
//! `GET {search_url}?q=...&limit=n` returning
//! `[{"name", "statement", "score"}]`.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;

use crate::document::Position;
use crate::gateway::{
    Backend, Diagnostic, GatewayError, GoalState, SearchResult, Severity, Verdict,
    VerificationReport,
};

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub verify_url: String,
    /// Empty disables search; queries return no results.
    pub search_url: String,
    /// Extra slack on top of the verification timeout for transport.
    pub transport_slack: Duration,
}

impl HttpBackendConfig {
    pub fn from_env() -> Option<Self> {
        let verify_url = std::env::var("LEAN_SERVER_URL").ok()?;
        Some(HttpBackendConfig {
            verify_url,
            search_url: std::env::var("SEARCH_URL").unwrap_or_default(),
            transport_slack: Duration::from_secs(30),
        })
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireDiagnostic {
    severity: Severity,
    line: usize,
    column: usize,
    end_line: Option<usize>,
    end_column: Option<usize>,
    message: String,
}

#[derive(Deserialize)]
struct WireHypothesis {
    name: String,
    #[serde(rename = "type")]
    ty: String,
}

#[derive(Deserialize)]
struct WireGoal {
    sorry_index: usize,
    hypotheses: Vec<WireHypothesis>,
    goal: String,
}

#[derive(Deserialize)]
struct WireReport {
    verdict: Verdict,
    #[serde(default)]
    diagnostics: Vec<WireDiagnostic>,
    #[serde(default)]
    goals: Vec<WireGoal>,
    #[serde(default)]
    elapsed_ms: u64,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }
}

impl Backend for HttpBackend {
    fn verify(&self, code: &str, timeout: Duration) -> Result<VerificationReport, GatewayError> {
        let body = serde_json::json!({
            "code": code,
            "timeout_s": timeout.as_secs(),
        });
        let response = self
            .client
            .post(&self.config.verify_url)
            .timeout(timeout + self.config.transport_slack)
            .json(&body)
            .send()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(GatewayError::BackendUnavailable(format!(
                "verify endpoint returned {}",
                response.status()
            )));
        }
        let wire: WireReport = response
            .json()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        let diagnostics = wire
            .diagnostics
            .into_iter()
            .map(|d| Diagnostic {
                severity: d.severity,
                position: Position::new(d.line, d.column),
                end_position: d
                    .end_line
                    .zip(d.end_column)
                    .map(|(l, c)| Position::new(l, c)),
                message: d.message,
            })
            .collect();
        let goal_states: BTreeMap<usize, GoalState> = wire
            .goals
            .into_iter()
            .map(|g| {
                (
                    g.sorry_index,
                    GoalState {
                        hypotheses: g.hypotheses.into_iter().map(|h| (h.name, h.ty)).collect(),
                        goal: g.goal,
                    },
                )
            })
            .collect();
        Ok(VerificationReport::new(
            wire.verdict,
            diagnostics,
            goal_states,
            Duration::from_millis(wire.elapsed_ms),
        ))
    }

    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, GatewayError> {
        if self.config.search_url.is_empty() {
            return Ok(Vec::new());
        }
        let response = self
            .client
            .get(&self.config.search_url)
            .query(&[("q", query), ("limit", &limit.to_string())])
            .timeout(Duration::from_secs(30))
            .send()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(GatewayError::BackendUnavailable(format!(
                "search endpoint returned {}",
                response.status()
            )));
        }
        response
            .json()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_report_parses() {
        let json = r#"{
            "verdict": "invalid",
            "diagnostics": [
                {"severity": "error", "line": 7, "column": 5,
                 "message": "unknown identifier 'foo'"}
            ],
            "goals": [],
            "elapsed_ms": 42
        }"#;
        let wire: WireReport = serde_json::from_str(json).unwrap();
        assert_eq!(wire.verdict, Verdict::Invalid);
        assert_eq!(wire.diagnostics.len(), 1);
        assert_eq!(wire.elapsed_ms, 42);
    }

    #[test]
    fn wire_goal_state_parses() {
        let json = r#"{
            "verdict": "valid_with_sorries",
            "goals": [{"sorry_index": 0,
                       "hypotheses": [{"name": "h1", "type": "a = b"}],
                       "goal": "b = c"}]
        }"#;
        let wire: WireReport = serde_json::from_str(json).unwrap();
        assert_eq!(wire.goals[0].hypotheses[0].ty, "a = b");
        assert_eq!(wire.goals[0].goal, "b = c");
    }

    #[test]
    fn config_from_env_requires_server_url() {
        // The test environment does not set LEAN_SERVER_URL.
        if std::env::var("LEAN_SERVER_URL").is_err() {
            assert!(HttpBackendConfig::from_env().is_none());
        }
    }
}
