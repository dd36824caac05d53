//! Chat-completion transport: an HTTP client for real model endpoints and a
//! scripted client for hermetic tests.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use serde::Deserialize;
use thiserror::Error;

use crate::roles::Role;

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub model: String,
    pub system: Option<String>,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("chat transport failure: {0}")]
    Transport(String),
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, role: Role, request: &ChatRequest) -> Result<ChatResponse, ChatError>;
}

pub struct HttpChatClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: usize,
    completion_tokens: usize,
}

#[derive(Deserialize)]
struct WireChatResponse {
    content: String,
    usage: WireUsage,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, ChatError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        Ok(HttpChatClient {
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, _role: Role, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(serde_json::json!({"role": "system", "content": system}));
        }
        messages.push(serde_json::json!({"role": "user", "content": request.prompt}));
        let body = serde_json::json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ChatError::Transport(format!(
                "chat endpoint returned {}",
                response.status()
            )));
        }
        let wire: WireChatResponse = response
            .json()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        Ok(ChatResponse {
            content: wire.content,
            prompt_tokens: wire.usage.prompt_tokens,
            completion_tokens: wire.usage.completion_tokens,
        })
    }
}

/// One logged call: the role and the rendered prompt it received.
#[derive(Debug, Clone)]
pub struct ChatCall {
    pub role: Role,
    pub system: Option<String>,
    pub prompt: String,
}

/// Deterministic client: per-role response queues with an optional per-role
/// default once a queue runs dry, plus injectable transport failures.
/// Token usage is the whitespace word count, making costs reproducible.
#[derive(Default)]
pub struct ScriptedChat {
    queues: Mutex<HashMap<Role, VecDeque<String>>>,
    defaults: Mutex<HashMap<Role, String>>,
    fail_next: Mutex<usize>,
    log: Mutex<Vec<ChatCall>>,
}

impl ScriptedChat {
    pub fn new() -> Self {
        ScriptedChat::default()
    }

    pub fn push_response(&self, role: Role, content: impl Into<String>) {
        self.queues
            .lock()
            .unwrap()
            .entry(role)
            .or_default()
            .push_back(content.into());
    }

    pub fn set_default(&self, role: Role, content: impl Into<String>) {
        self.defaults.lock().unwrap().insert(role, content.into());
    }

    /// Make the next `n` calls fail with a transport error.
    pub fn fail_next(&self, n: usize) {
        *self.fail_next.lock().unwrap() = n;
    }

    pub fn calls(&self) -> Vec<ChatCall> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl ChatClient for ScriptedChat {
    fn complete(&self, role: Role, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        self.log.lock().unwrap().push(ChatCall {
            role,
            system: request.system.clone(),
            prompt: request.prompt.clone(),
        });
        {
            let mut fail = self.fail_next.lock().unwrap();
            if *fail > 0 {
                *fail -= 1;
                return Err(ChatError::Transport("injected failure".into()));
            }
        }
        let content = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&role)
            .and_then(|q| q.pop_front())
            .or_else(|| self.defaults.lock().unwrap().get(&role).cloned())
            .ok_or_else(|| {
                ChatError::Transport(format!("no scripted response for role {role:?}"))
            })?;
        Ok(ChatResponse {
            prompt_tokens: request.prompt.split_whitespace().count(),
            completion_tokens: content.split_whitespace().count(),
            content,
        })
    }
}
