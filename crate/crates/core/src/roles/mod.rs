//! The three model roles (Reasoner, Verifier, Prover) behind one
//! chat-completion abstraction, with per-call budget admission, transport
//! retries, and a transcript for cost attribution.

mod client;
mod ops;
mod prompts;

pub use client::{ChatCall, ChatClient, ChatError, ChatRequest, ChatResponse, HttpChatClient, ScriptedChat};
pub use ops::{
    comment_on_proof, fix_round, format_diagnostics, formalize, informal_loop, search_routing,
    InformalConfig, InformalSolution,
};
pub use prompts::{placeholders, render_prompt, template, PromptError, TemplateId, ALL_TEMPLATES, SLOT_SCHEMA};

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{BudgetError, BudgetLedger};
use crate::document::DocumentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reasoner,
    Verifier,
    Prover,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleConfig {
    pub role: Role,
    pub model_id: String,
    pub endpoint: String,
    pub temperature: f64,
    pub max_tokens: usize,
    /// USD per input token.
    pub input_cost: f64,
    /// USD per output token.
    pub output_cost: f64,
}

impl RoleConfig {
    /// Defaults per role; the paper specifies none, so these are plain
    /// sensible settings (reasoner sampled hotter than the checkers).
    pub fn default_for(role: Role) -> Self {
        let temperature = match role {
            Role::Reasoner => 1.0,
            Role::Verifier | Role::Prover => 0.6,
        };
        RoleConfig {
            role,
            model_id: String::new(),
            endpoint: String::new(),
            temperature,
            max_tokens: 32_000,
            input_cost: 0.0,
            output_cost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.input_cost < 0.0 || self.output_cost < 0.0 {
            return Err(AgentError::InvalidConfig(
                "token prices must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub prompt: String,
    pub completion: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub cost_usd: f64,
    pub wall_time: Duration,
}

/// Append-only record of every model call.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    pub fn append(&self, entry: TranscriptEntry) {
        self.entries.lock().unwrap().push(entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_cost_usd(&self) -> f64 {
        self.entries.lock().unwrap().iter().map(|e| e.cost_usd).sum()
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error("model transport failed after retries: {0}")]
    Transport(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("completion contained no lean4 code block")]
    NoCodeBlock,
    #[error("completion contained more than one lean4 code block")]
    MultipleCodeBlocks,
    #[error("completion mutated the formal statement header")]
    HeaderMutated,
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("invalid role configuration: {0}")]
    InvalidConfig(String),
}

/// Exact score scale of the informal verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    Zero,
    Half,
    One,
}

impl Score {
    pub fn value(self) -> f64 {
        match self {
            Score::Zero => 0.0,
            Score::Half => 0.5,
            Score::One => 1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no parsable \\boxed score in completion")]
pub struct UnparsableScore;

/// The last `\boxed{...}` token, parsed strictly as 0, 0.5, or 1.
pub fn parse_score(completion: &str) -> Result<Score, UnparsableScore> {
    let idx = completion.rfind("\\boxed{").ok_or(UnparsableScore)?;
    let after = &completion[idx + "\\boxed{".len()..];
    let inner = after.split('}').next().ok_or(UnparsableScore)?;
    match inner.trim() {
        "0" => Ok(Score::Zero),
        "0.5" | "1/2" => Ok(Score::Half),
        "1" => Ok(Score::One),
        _ => Err(UnparsableScore),
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Transport retries after the first attempt.
    pub transport_retries: usize,
    /// Base backoff, doubled per retry. Zero in tests.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            transport_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// The three roles with shared transport, transcript, and budget.
#[derive(Clone)]
pub struct Agents {
    client: Arc<dyn ChatClient>,
    configs: [RoleConfig; 3],
    transcript: Arc<Transcript>,
    ledger: Option<Arc<BudgetLedger>>,
    retry: RetryPolicy,
}

impl Agents {
    pub fn new(
        client: Arc<dyn ChatClient>,
        configs: [RoleConfig; 3],
        retry: RetryPolicy,
    ) -> Result<Self, AgentError> {
        for config in &configs {
            config.validate()?;
        }
        Ok(Agents {
            client,
            configs,
            transcript: Arc::new(Transcript::new()),
            ledger: None,
            retry,
        })
    }

    /// A scripted-agent set with zero backoff, for tests.
    pub fn scripted(client: Arc<ScriptedChat>) -> Self {
        Agents::new(
            client,
            [
                RoleConfig::default_for(Role::Reasoner),
                RoleConfig::default_for(Role::Verifier),
                RoleConfig::default_for(Role::Prover),
            ],
            RetryPolicy {
                transport_retries: 3,
                backoff: Duration::ZERO,
            },
        )
        .expect("default configs are valid")
    }

    pub fn with_ledger(mut self, ledger: Arc<BudgetLedger>) -> Self {
        self.ledger = Some(ledger);
        self
    }

    /// A clone writing to a fresh transcript; transport, configs, and the
    /// budget ledger stay shared. Used for per-node cost attribution.
    pub fn fork_transcript(&self) -> Self {
        let mut forked = self.clone();
        forked.transcript = Arc::new(Transcript::new());
        forked
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn config(&self, role: Role) -> &RoleConfig {
        self.configs
            .iter()
            .find(|c| c.role == role)
            .expect("one config per role")
    }

    /// One billable model call: admission check, transport retries with
    /// backoff, cost attribution, transcript append.
    pub fn call(
        &self,
        role: Role,
        system: Option<&str>,
        prompt: &str,
    ) -> Result<String, AgentError> {
        let config = self.config(role);
        let request = ChatRequest {
            model: config.model_id.clone(),
            system: system.map(str::to_string),
            prompt: prompt.to_string(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        };
        let mut last_error = String::new();
        for attempt in 0..=self.retry.transport_retries {
            if let Some(ledger) = &self.ledger {
                ledger.admit()?;
            }
            let started = Instant::now();
            match self.client.complete(role, &request) {
                Ok(response) => {
                    let cost_usd = response.prompt_tokens as f64 * config.input_cost
                        + response.completion_tokens as f64 * config.output_cost;
                    if let Some(ledger) = &self.ledger {
                        ledger.charge(cost_usd);
                    }
                    self.transcript.append(TranscriptEntry {
                        role,
                        prompt: prompt.to_string(),
                        completion: response.content.clone(),
                        prompt_tokens: response.prompt_tokens,
                        completion_tokens: response.completion_tokens,
                        cost_usd,
                        wall_time: started.elapsed(),
                    });
                    return Ok(response.content);
                }
                Err(ChatError::Transport(message)) => {
                    last_error = message;
                    if attempt < self.retry.transport_retries && !self.retry.backoff.is_zero() {
                        std::thread::sleep(self.retry.backoff * 2u32.pow(attempt as u32));
                    }
                }
            }
        }
        Err(AgentError::Transport(last_error))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_score_reads_last_boxed_token() {
        assert_eq!(parse_score("the score should be: \\boxed{1}"), Ok(Score::One));
        assert_eq!(parse_score("\\boxed{0}"), Ok(Score::Zero));
        assert_eq!(parse_score("\\boxed{0} then \\boxed{0.5}"), Ok(Score::Half));
        assert_eq!(parse_score("\\boxed{0.7}"), Err(UnparsableScore));
        assert_eq!(parse_score("no score"), Err(UnparsableScore));
        assert_eq!(parse_score("\\boxed{}"), Err(UnparsableScore));
    }

    #[test]
    fn call_appends_transcript_and_charges_ledger() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Reasoner, "four words in here");
        let mut configs = [
            RoleConfig::default_for(Role::Reasoner),
            RoleConfig::default_for(Role::Verifier),
            RoleConfig::default_for(Role::Prover),
        ];
        configs[0].input_cost = 0.001;
        configs[0].output_cost = 0.002;
        let ledger = Arc::new(BudgetLedger::unlimited());
        let agents = Agents::new(
            chat,
            configs,
            RetryPolicy {
                transport_retries: 0,
                backoff: Duration::ZERO,
            },
        )
        .unwrap()
        .with_ledger(ledger.clone());
        let out = agents.call(Role::Reasoner, None, "two words").unwrap();
        assert_eq!(out, "four words in here");
        let entries = agents.transcript().entries();
        assert_eq!(entries.len(), 1);
        // 2 prompt words at 0.001 plus 4 completion words at 0.002.
        assert!((entries[0].cost_usd - 0.010).abs() < 1e-12);
        assert!((ledger.spent_usd() - 0.010).abs() < 1e-12);
        assert!((agents.transcript().total_cost_usd() - 0.010).abs() < 1e-12);
    }

    #[test]
    fn transport_retries_then_succeed() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Prover, "ok");
        chat.fail_next(2);
        let agents = Agents::scripted(chat.clone());
        let out = agents.call(Role::Prover, None, "p").unwrap();
        assert_eq!(out, "ok");
        assert_eq!(chat.call_count(), 3);
    }

    #[test]
    fn persistent_transport_failure_errors() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Prover, "never reached");
        chat.fail_next(10);
        let agents = Agents::scripted(chat.clone());
        assert!(matches!(
            agents.call(Role::Prover, None, "p"),
            Err(AgentError::Transport(_))
        ));
        // 1 attempt + 3 retries.
        assert_eq!(chat.call_count(), 4);
    }

    #[test]
    fn zero_budget_blocks_before_any_call() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Reasoner, "should not be used");
        let ledger = Arc::new(BudgetLedger::new(0.0, Duration::MAX));
        let agents = Agents::scripted(chat.clone()).with_ledger(ledger);
        assert!(matches!(
            agents.call(Role::Reasoner, None, "p"),
            Err(AgentError::Budget(BudgetError::CostExhausted))
        ));
        assert_eq!(chat.call_count(), 0);
    }

    #[test]
    fn negative_price_rejected() {
        let mut config = RoleConfig::default_for(Role::Prover);
        config.input_cost = -1.0;
        assert!(config.validate().is_err());
    }
}
