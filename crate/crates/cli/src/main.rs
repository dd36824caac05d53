//! `mechanic`: command-line front end for the proving pipeline.
//!
//! Exit codes for `prove`: 0 proven, 1 unproven, 2 configuration error,
//! 3 backend unreachable at startup.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use mechanic_core::budget::BudgetLedger;
use mechanic_core::gateway::{
    Gateway, GatewayConfig, HttpBackend, HttpBackendConfig, ScriptedBackend,
};
use mechanic_core::pipeline::{
    prove, tree_metrics, NodeId, NodeStatus, ProgressSink, ProveError, Services, TreeMetrics,
};
use mechanic_core::roles::{
    Agents, ChatClient, ChatError, ChatRequest, ChatResponse, HttpChatClient, RetryPolicy, Role,
    ScriptedChat,
};

use mechanic_cli::config::{self, ChatMode, CliOverrides, GatewayMode, Settings};
use mechanic_cli::lint;
use mechanic_cli::record::{self, RunRecord};

#[derive(Parser)]
#[command(name = "mechanic", version, about = "Recursive theorem-proving agent for Lean 4")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prove a statement and persist the run record.
    Prove {
        /// Natural-language problem file.
        #[arg(long)]
        problem: PathBuf,
        /// Lean statement file ending in `:= by sorry` or `:= by`.
        #[arg(long)]
        statement: PathBuf,
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Cost limit in USD.
        #[arg(long)]
        budget_usd: Option<f64>,
        /// Wall-clock limit in minutes.
        #[arg(long)]
        time_limit_min: Option<f64>,
        /// Emit progress events as newline-delimited JSON.
        #[arg(long)]
        json: bool,
        /// Enable the fast-prove first attempt.
        #[arg(long)]
        fast_prove: bool,
        /// Sibling parallelism cap.
        #[arg(long)]
        parallel: Option<usize>,
        /// Output path of the run record.
        #[arg(long, default_value = "run.json")]
        record: PathBuf,
    },
    /// Print metrics of a recorded run and write its depth histogram.
    Report {
        record: PathBuf,
        /// Output path of the histogram data file (default: <record>.histogram.csv).
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Check a Lean file for forbidden tactics and header mutations.
    Lint {
        file: PathBuf,
        /// Reference statement file for the header check.
        #[arg(long)]
        statement: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Prove {
            problem,
            statement,
            config,
            budget_usd,
            time_limit_min,
            json,
            fast_prove,
            parallel,
            record,
        } => cmd_prove(
            &problem,
            &statement,
            &config,
            CliOverrides {
                budget_usd,
                time_limit_min,
                fast_prove,
                parallel,
            },
            json,
            &record,
        ),
        Command::Report { record, histogram } => cmd_report(&record, histogram.as_deref()),
        Command::Lint { file, statement } => cmd_lint(&file, statement.as_deref()),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

/// Dispatches each role's requests to its configured endpoint.
struct RouterChatClient {
    clients: Vec<(Role, HttpChatClient)>,
}

impl ChatClient for RouterChatClient {
    fn complete(&self, role: Role, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let (_, client) = self
            .clients
            .iter()
            .find(|(r, _)| *r == role)
            .ok_or_else(|| ChatError::Transport(format!("no endpoint for role {role:?}")))?;
        client.complete(role, request)
    }
}

struct StdoutSink {
    json: bool,
    started: Instant,
    lock: Mutex<()>,
}

impl ProgressSink for StdoutSink {
    fn on_status(&self, node: NodeId, status: NodeStatus) {
        let _guard = self.lock.lock().unwrap();
        let elapsed_ms = self.started.elapsed().as_millis();
        if self.json {
            println!(
                "{}",
                serde_json::json!({
                    "event": "node_status",
                    "elapsed_ms": elapsed_ms,
                    "node": node,
                    "status": status_name(status),
                })
            );
        } else {
            println!("[{elapsed_ms:>7} ms] node {node} -> {}", status_name(status));
        }
    }
}

fn status_name(status: NodeStatus) -> &'static str {
    match status {
        NodeStatus::Pending => "pending",
        NodeStatus::Informal => "informal",
        NodeStatus::Formal => "formal",
        NodeStatus::Split => "split",
        NodeStatus::Proven => "proven",
        NodeStatus::Unprovable => "unprovable",
        NodeStatus::BudgetExhausted => "budget_exhausted",
    }
}

fn read_file(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn build_gateway(settings: &Settings) -> Result<Gateway, String> {
    let config = GatewayConfig {
        verify_timeout: settings.verify_timeout,
        in_flight_cap: settings.in_flight_cap,
    };
    match settings.gateway_mode {
        GatewayMode::Toy => Ok(Gateway::new(Arc::new(ScriptedBackend::new()), config)),
        GatewayMode::Http => {
            let backend = HttpBackend::new(HttpBackendConfig {
                verify_url: settings.verify_url.clone().expect("checked in resolve"),
                search_url: settings.search_url.clone().unwrap_or_default(),
                transport_slack: std::time::Duration::from_secs(30),
            })
            .map_err(|e| e.to_string())?;
            let gateway = Gateway::new(Arc::new(backend), config);
            // Startup reachability probe.
            gateway
                .verify_text("theorem mechanic_probe : True := by\n  trivial\n")
                .map_err(|e| e.to_string())?;
            Ok(gateway)
        }
    }
}

fn build_chat(settings: &Settings) -> Result<Arc<dyn ChatClient>> {
    match settings.chat_mode {
        ChatMode::Scripted => {
            let chat = ScriptedChat::new();
            for (role, content) in &settings.chat_responses {
                chat.push_response(*role, content.clone());
            }
            for (role, content) in &settings.chat_defaults {
                chat.set_default(*role, content.clone());
            }
            Ok(Arc::new(chat))
        }
        ChatMode::Http => {
            let mut clients = Vec::new();
            for role_config in &settings.role_configs {
                if role_config.endpoint.is_empty() {
                    anyhow::bail!(
                        "chat mode http requires an endpoint for role {:?}",
                        role_config.role
                    );
                }
                let client = HttpChatClient::new(role_config.endpoint.clone())
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                clients.push((role_config.role, client));
            }
            Ok(Arc::new(RouterChatClient { clients }))
        }
    }
}

fn cmd_prove(
    problem_path: &Path,
    statement_path: &Path,
    config_path: &Path,
    overrides: CliOverrides,
    json: bool,
    record_path: &Path,
) -> Result<u8> {
    let problem = read_file(problem_path, "problem file")?;
    let statement = read_file(statement_path, "statement file")?;
    let file_config = config::load_file(config_path)?;
    let settings = config::resolve(&file_config, &overrides)?;

    let gateway = match build_gateway(&settings) {
        Ok(gateway) => gateway,
        Err(message) => {
            eprintln!("error: verification backend unreachable: {message}");
            return Ok(3);
        }
    };
    let chat = build_chat(&settings)?;
    let agents = Agents::new(chat, settings.role_configs.clone(), RetryPolicy::default())
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let ledger = Arc::new(BudgetLedger::new(settings.budget_usd, settings.time_limit));
    let services = Services::new(gateway, agents, ledger);

    let started_unix_ms = unix_ms();
    let sink = StdoutSink {
        json,
        started: Instant::now(),
        lock: Mutex::new(()),
    };
    let outcome = match prove(&problem, &statement, &settings.run, &services, &sink) {
        Ok(outcome) => outcome,
        Err(err @ (ProveError::Config(_) | ProveError::InvalidStatement(_))) => {
            return Err(err.into())
        }
    };
    let finished_unix_ms = unix_ms();

    let final_document = outcome.document.as_ref().map(|d| d.text().to_string());
    let metrics = tree_metrics(&outcome.tree, final_document.as_deref());
    let run_record = RunRecord {
        schema_version: record::SCHEMA_VERSION,
        problem_id: problem_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "problem".into()),
        problem,
        statement: statement.trim().to_string(),
        config: settings.snapshot(),
        tree: outcome.tree,
        transcripts: outcome.node_transcripts,
        metrics: metrics.clone(),
        started_unix_ms,
        finished_unix_ms,
        outcome: outcome.status,
        final_document: final_document.clone(),
    };
    run_record.save(record_path)?;

    let mut document_path = None;
    if let Some(text) = &final_document {
        let path = record_path.with_extension("lean");
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write proof {}", path.display()))?;
        document_path = Some(path);
    }

    println!("outcome: {}", status_name(outcome.status));
    println!("record: {}", record_path.display());
    if let Some(path) = &document_path {
        println!("proof: {}", path.display());
    }
    print_metrics(&metrics, run_record.transcript_cost_usd(), run_record.elapsed_minutes());
    Ok(if outcome.status == NodeStatus::Proven { 0 } else { 1 })
}

fn print_metrics(metrics: &TreeMetrics, cost_usd: f64, minutes: f64) {
    println!("time_min: {minutes:.2}");
    println!("cost_usd: {cost_usd:.4}");
    println!("proof_lines: {}", metrics.proof_lines);
    println!("lemmas: {}", metrics.lemma_count);
    let histogram: Vec<String> = metrics
        .depth_histogram
        .iter()
        .map(|(depth, count)| format!("{depth}:{count}"))
        .collect();
    println!("depth_histogram: {}", histogram.join(" "));
}

fn cmd_report(record_path: &Path, histogram_path: Option<&Path>) -> Result<u8> {
    let record = RunRecord::load(record_path)?;
    let metrics = record.recompute_metrics();
    print_metrics(&metrics, record.transcript_cost_usd(), record.elapsed_minutes());

    let default_path = record_path.with_extension("histogram.csv");
    let histogram_path = histogram_path.unwrap_or(&default_path);
    let mut csv = String::from("depth,count\n");
    for (depth, count) in &metrics.depth_histogram {
        csv.push_str(&format!("{depth},{count}\n"));
    }
    std::fs::write(histogram_path, csv)
        .with_context(|| format!("cannot write histogram {}", histogram_path.display()))?;
    println!("histogram: {}", histogram_path.display());
    Ok(0)
}

fn cmd_lint(file: &Path, statement_path: Option<&Path>) -> Result<u8> {
    let text = read_file(file, "lean file")?;
    let statement = match statement_path {
        Some(path) => Some(read_file(path, "statement file")?),
        None => None,
    };
    let findings = lint::lint_document(&text, statement.as_deref());
    for finding in &findings {
        println!(
            "{}:{}:{}: {}",
            file.display(),
            finding.line,
            finding.column,
            finding.message
        );
    }
    println!("{} finding(s)", findings.len());
    Ok(if findings.is_empty() { 0 } else { 1 })
}
