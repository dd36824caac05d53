//! Uniform interface to Lean verification and theorem retrieval.
//!
//! Two backends implement the same contract: an HTTP client speaking to a
//! Lean verification server, and a deterministic scripted backend (with a
//! built-in toy checker) for hermetic tests.

mod http;
mod scripted;
mod toy;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::{script_key, BackendCall, ScriptedBackend};
pub use toy::toy_check;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{Position, ProofDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub position: Position,
    pub end_position: Option<Position>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: usize, column: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            position: Position::new(line, column),
            end_position: None,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    ValidWithSorries,
    Invalid,
    Timeout,
}

impl Verdict {
    /// Valid "allowing sorry": the state the sorrifier drives toward.
    pub fn is_valid_modulo_sorry(self) -> bool {
        matches!(self, Verdict::Valid | Verdict::ValidWithSorries)
    }
}

/// Hypotheses and goal at one `sorry` position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalState {
    /// Ordered (name, type) pairs; names are unique within one state.
    pub hypotheses: Vec<(String, String)>,
    /// The `⊢` line.
    pub goal: String,
}

impl GoalState {
    pub fn hypothesis(&self, name: &str) -> Option<&str> {
        self.hypotheses
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_str())
    }
}

impl std::fmt::Display for GoalState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, ty) in &self.hypotheses {
            writeln!(f, "{name} : {ty}")?;
        }
        write!(f, "⊢ {}", self.goal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    /// Sorted by (line, column, severity) on ingestion.
    pub diagnostics: Vec<Diagnostic>,
    /// SorrySite index → goal state; populated when no error diagnostics.
    pub goal_states: BTreeMap<usize, GoalState>,
    pub elapsed: Duration,
}

impl VerificationReport {
    pub fn new(
        verdict: Verdict,
        mut diagnostics: Vec<Diagnostic>,
        goal_states: BTreeMap<usize, GoalState>,
        elapsed: Duration,
    ) -> Self {
        diagnostics.sort_by(|a, b| {
            (a.position, a.severity)
                .cmp(&(b.position, b.severity))
                .then_with(|| a.message.cmp(&b.message))
        });
        VerificationReport {
            verdict,
            diagnostics,
            goal_states,
            elapsed,
        }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    UnknownIdentifier,
    TacticFailure,
    TypeMismatch,
    Syntax,
    Other,
}

/// Classify a diagnostic by its message text alone. Total and pure.
pub fn classify(d: &Diagnostic) -> ErrorClass {
    let msg = d.message.to_ascii_lowercase();
    if msg.contains("unknown identifier") || msg.contains("unknown constant") {
        ErrorClass::UnknownIdentifier
    } else if msg.contains("type mismatch") {
        ErrorClass::TypeMismatch
    } else if msg.contains("failed to") || msg.contains("tactic failed") {
        ErrorClass::TacticFailure
    } else if msg.contains("unexpected token") || msg.contains("syntax") {
        ErrorClass::Syntax
    } else {
        ErrorClass::Other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub name: String,
    pub statement: String,
    /// Relevance in [0, 1].
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("verification backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("budget exhausted; no further service calls permitted")]
    BudgetExhausted,
}

/// A verification/search backend. Implementations must accept concurrent
/// calls; fairness and the in-flight cap are enforced by [`Gateway`].
pub trait Backend: Send + Sync {
    fn verify(&self, code: &str, timeout: Duration) -> Result<VerificationReport, GatewayError>;

    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, GatewayError>;
}

/// Counting semaphore; FIFO fairness is approximated by Condvar wakeups.
struct InFlightCap {
    state: Mutex<usize>,
    cv: Condvar,
    cap: usize,
}

impl InFlightCap {
    fn new(cap: usize) -> Self {
        InFlightCap {
            state: Mutex::new(0),
            cv: Condvar::new(),
            cap: cap.max(1),
        }
    }

    fn acquire(&self) {
        let mut in_flight = self.state.lock().unwrap();
        while *in_flight >= self.cap {
            in_flight = self.cv.wait(in_flight).unwrap();
        }
        *in_flight += 1;
    }

    fn release(&self) {
        let mut in_flight = self.state.lock().unwrap();
        *in_flight -= 1;
        self.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Wall-clock limit per verify call.
    pub verify_timeout: Duration,
    /// Maximum concurrent backend calls.
    pub in_flight_cap: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            verify_timeout: Duration::from_secs(300),
            in_flight_cap: 8,
        }
    }
}

/// Front door for verification and retrieval. Re-sorts diagnostics, dedupes
/// search results, and caps concurrent in-flight calls.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    cap: Arc<InFlightCap>,
    config: GatewayConfig,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, config: GatewayConfig) -> Self {
        Gateway {
            cap: Arc::new(InFlightCap::new(config.in_flight_cap)),
            backend,
            config,
        }
    }

    pub fn with_backend(backend: Arc<dyn Backend>) -> Self {
        Gateway::new(backend, GatewayConfig::default())
    }

    pub fn verify(&self, doc: &ProofDocument) -> Result<VerificationReport, GatewayError> {
        self.verify_text(doc.text())
    }

    pub fn verify_text(&self, code: &str) -> Result<VerificationReport, GatewayError> {
        self.cap.acquire();
        let result = self.backend.verify(code, self.config.verify_timeout);
        self.cap.release();
        // Reports are re-sorted so primary-error selection is deterministic
        // regardless of backend emission order.
        result.map(|r| VerificationReport::new(r.verdict, r.diagnostics, r.goal_states, r.elapsed))
    }

    pub fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, GatewayError> {
        if query.is_empty() || limit == 0 {
            return Ok(Vec::new());
        }
        self.cap.acquire();
        let result = self.backend.search(query, limit);
        self.cap.release();
        let mut results = result?;
        results.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
        let mut seen = std::collections::HashSet::new();
        results.retain(|r| seen.insert(r.name.clone()));
        results.truncate(limit);
        Ok(results)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_paper_messages() {
        let d = Diagnostic::error(1, 1, "unknown identifier 'Nat.add_comm'");
        assert_eq!(classify(&d), ErrorClass::UnknownIdentifier);
        let d = Diagnostic::error(1, 1, "linarith failed to find a contradiction");
        assert_eq!(classify(&d), ErrorClass::TacticFailure);
        let d = Diagnostic::error(1, 1, "");
        assert_eq!(classify(&d), ErrorClass::Other);
        let d = Diagnostic::error(
            1,
            1,
            "Type mismatch\n  h1\nhas type\n  a = b\nbut is expected to have type\n  b = c",
        );
        assert_eq!(classify(&d), ErrorClass::TypeMismatch);
        let d = Diagnostic::error(1, 1, "unexpected token ','; expected command");
        assert_eq!(classify(&d), ErrorClass::Syntax);
    }

    #[test]
    fn report_sorts_diagnostics() {
        let report = VerificationReport::new(
            Verdict::Invalid,
            vec![
                Diagnostic::error(9, 5, "b"),
                Diagnostic::error(7, 5, "a"),
                Diagnostic::error(7, 2, "c"),
            ],
            BTreeMap::new(),
            Duration::ZERO,
        );
        let positions: Vec<_> = report.diagnostics.iter().map(|d| d.position).collect();
        assert_eq!(
            positions,
            vec![
                Position::new(7, 2),
                Position::new(7, 5),
                Position::new(9, 5)
            ]
        );
    }
}
