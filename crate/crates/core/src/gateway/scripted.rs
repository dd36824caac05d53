//! Deterministic backend for tests: scripted responses keyed by source hash,
//! with the toy checker as fallback and a call log for assertions.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::gateway::{
    toy_check, Backend, GatewayError, SearchResult, VerificationReport,
};

/// Key for scripting: SHA-256 of the whitespace-normalized source, so
/// logically identical submissions share an entry.
pub fn script_key(code: &str) -> String {
    let normalized = code
        .lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n");
    let digest = Sha256::digest(normalized.trim_end().as_bytes());
    format!("{digest:x}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendCall {
    Verify { key: String, code: String },
    Search { query: String, limit: usize },
}

#[derive(Default)]
pub struct ScriptedBackend {
    verify_scripts: HashMap<String, VerificationReport>,
    search_scripts: HashMap<String, Vec<SearchResult>>,
    /// When true, unscripted verifies run the toy checker instead of erroring.
    toy_fallback: bool,
    unavailable: bool,
    calls: Mutex<Vec<BackendCall>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend {
            toy_fallback: true,
            ..Default::default()
        }
    }

    /// A backend that answers only scripted keys and errors otherwise.
    pub fn strict() -> Self {
        ScriptedBackend::default()
    }

    /// A backend whose every call fails, for outage handling tests.
    pub fn offline() -> Self {
        ScriptedBackend {
            unavailable: true,
            ..Default::default()
        }
    }

    pub fn script_verify(&mut self, code: &str, report: VerificationReport) {
        self.verify_scripts.insert(script_key(code), report);
    }

    pub fn script_search(&mut self, query: &str, results: Vec<SearchResult>) {
        self.search_scripts.insert(query.to_string(), results);
    }

    pub fn calls(&self) -> Vec<BackendCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn verify_call_count(&self) -> usize {
        self.calls
            .lock()
            .unwrap()
            .iter()
            .filter(|c| matches!(c, BackendCall::Verify { .. }))
            .count()
    }
}

impl Backend for ScriptedBackend {
    fn verify(&self, code: &str, _timeout: Duration) -> Result<VerificationReport, GatewayError> {
        let key = script_key(code);
        self.calls.lock().unwrap().push(BackendCall::Verify {
            key: key.clone(),
            code: code.to_string(),
        });
        if self.unavailable {
            return Err(GatewayError::BackendUnavailable(
                "scripted backend is offline".into(),
            ));
        }
        if let Some(report) = self.verify_scripts.get(&key) {
            return Ok(report.clone());
        }
        if self.toy_fallback {
            return Ok(toy_check(code));
        }
        Err(GatewayError::BackendUnavailable(format!(
            "no scripted response for key {key}"
        )))
    }

    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, GatewayError> {
        self.calls.lock().unwrap().push(BackendCall::Search {
            query: query.to_string(),
            limit,
        });
        if self.unavailable {
            return Err(GatewayError::BackendUnavailable(
                "scripted backend is offline".into(),
            ));
        }
        Ok(self
            .search_scripts
            .get(query)
            .cloned()
            .unwrap_or_default())
    }
}
