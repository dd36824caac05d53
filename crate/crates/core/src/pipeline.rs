//! The four-stage recursive orchestrator: informal prove, formal prove,
//! subgoal split, subgoal process. Keeps the proof tree, enforces the budget,
//! and terminates via retry counters and the no-progress guard.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::BudgetLedger;
use crate::document::ProofDocument;
use crate::gateway::{Gateway, GoalState, Verdict};
use crate::roles::{
    comment_on_proof, fix_round, formalize, informal_loop, search_routing, AgentError, Agents,
    InformalConfig, Role, TranscriptEntry,
};
use crate::sorrifier::sorrify;
use crate::subgoal::{
    extract_subgoal, parse_semantic_verdict, select_hypotheses, validate_syntactic, Assembler,
    SemanticVerdict, Subgoal,
};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Pending,
    Informal,
    Formal,
    Split,
    Proven,
    Unprovable,
    BudgetExhausted,
}

impl NodeStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            NodeStatus::Proven | NodeStatus::Unprovable | NodeStatus::BudgetExhausted
        )
    }
}

/// Cost and wall time attributed to one node's own service calls.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeCharges {
    pub cost_usd: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofTreeNode {
    pub id: NodeId,
    /// Formal lemma/theorem statement text.
    pub statement: String,
    pub parent: Option<NodeId>,
    /// Root depth is 1.
    pub depth: usize,
    pub status: NodeStatus,
    /// Last persisted document text: the proof when proven, the sorried
    /// document when the budget ran out mid-split.
    pub document: Option<String>,
    pub retries: usize,
    pub children: Vec<NodeId>,
    pub charges: NodeCharges,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeInvariantError {
    #[error("tree has no root node")]
    NoRoot,
    #[error("tree has {0} roots, expected exactly one")]
    MultipleRoots(usize),
    #[error("node {0} has an inconsistent parent/child link")]
    BadLink(NodeId),
    #[error("node {child} has depth {found}, expected {expected}")]
    BadDepth {
        child: NodeId,
        expected: usize,
        found: usize,
    },
    #[error("node {0} is unreachable from a root or part of a cycle")]
    Unreachable(NodeId),
    #[error("node {0} is proven but has no document")]
    ProvenWithoutDocument(NodeId),
}

/// Append-only proof tree; ids are indices into the node vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofTree {
    nodes: Vec<ProofTreeNode>,
}

impl ProofTree {
    pub fn new(statement: String) -> (ProofTree, NodeId) {
        let root = ProofTreeNode {
            id: 0,
            statement,
            parent: None,
            depth: 1,
            status: NodeStatus::Pending,
            document: None,
            retries: 0,
            children: Vec::new(),
            charges: NodeCharges::default(),
        };
        (ProofTree { nodes: vec![root] }, 0)
    }

    pub fn nodes(&self) -> &[ProofTreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&ProofTreeNode> {
        self.nodes.get(id)
    }

    pub fn roots(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.id)
            .collect()
    }

    pub fn add_child(&mut self, parent: NodeId, statement: String) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(ProofTreeNode {
            id,
            statement,
            parent: Some(parent),
            depth,
            status: NodeStatus::Pending,
            document: None,
            retries: 0,
            children: Vec::new(),
            charges: NodeCharges::default(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Structural invariants with exactly one root.
    pub fn validate(&self) -> Result<(), TreeInvariantError> {
        let roots = self.roots();
        match roots.len() {
            0 => return Err(TreeInvariantError::NoRoot),
            1 => {}
            n => return Err(TreeInvariantError::MultipleRoots(n)),
        }
        self.validate_forest()
    }

    /// Structural invariants, allowing multiple roots. Loaded run records may
    /// aggregate several trees of one problem into a forest.
    pub fn validate_forest(&self) -> Result<(), TreeInvariantError> {
        let roots = self.roots();
        if roots.is_empty() && !self.nodes.is_empty() {
            return Err(TreeInvariantError::NoRoot);
        }
        let mut visited = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = roots;
        while let Some(id) = stack.pop() {
            let node = self.nodes.get(id).ok_or(TreeInvariantError::BadLink(id))?;
            if node.id != id {
                return Err(TreeInvariantError::BadLink(id));
            }
            if visited[id] {
                return Err(TreeInvariantError::Unreachable(id));
            }
            visited[id] = true;
            if node.status == NodeStatus::Proven && node.document.is_none() {
                return Err(TreeInvariantError::ProvenWithoutDocument(id));
            }
            for &child in &node.children {
                let c = self
                    .nodes
                    .get(child)
                    .ok_or(TreeInvariantError::BadLink(id))?;
                if c.parent != Some(id) {
                    return Err(TreeInvariantError::BadLink(child));
                }
                if c.depth != node.depth + 1 {
                    return Err(TreeInvariantError::BadDepth {
                        child,
                        expected: node.depth + 1,
                        found: c.depth,
                    });
                }
                stack.push(child);
            }
        }
        if let Some(id) = visited.iter().position(|v| !v) {
            return Err(TreeInvariantError::Unreachable(id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub informal_rounds: usize,
    pub verify_passes: usize,
    pub fix_rounds: usize,
    pub sorrifier_max_iterations: usize,
    pub retry_threshold: usize,
    pub parallel_width: usize,
    pub fast_prove_enabled: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            informal_rounds: 16,
            verify_passes: 3,
            fix_rounds: 4,
            sorrifier_max_iterations: 32,
            retry_threshold: 3,
            parallel_width: 4,
            fast_prove_enabled: false,
        }
    }
}

impl RunConfig {
    /// All counts must be at least 1 except fix_rounds, which may be 0.
    pub fn validate(&self) -> Result<(), String> {
        for (name, value) in [
            ("informal_rounds", self.informal_rounds),
            ("verify_passes", self.verify_passes),
            ("sorrifier_max_iterations", self.sorrifier_max_iterations),
            ("retry_threshold", self.retry_threshold),
            ("parallel_width", self.parallel_width),
        ] {
            if value == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }

    fn informal(&self) -> InformalConfig {
        InformalConfig {
            max_rounds: self.informal_rounds,
            passes: self.verify_passes,
        }
    }
}

/// Shared services of one run. The agents are bound to the ledger so every
/// model call passes budget admission.
pub struct Services {
    pub gateway: Gateway,
    pub agents: Agents,
    pub ledger: Arc<BudgetLedger>,
}

impl Services {
    pub fn new(gateway: Gateway, agents: Agents, ledger: Arc<BudgetLedger>) -> Self {
        Services {
            gateway,
            agents: agents.with_ledger(ledger.clone()),
            ledger,
        }
    }
}

/// Receives node lifecycle events; implementations must be thread-safe
/// because siblings report concurrently.
pub trait ProgressSink: Send + Sync {
    fn on_status(&self, node: NodeId, status: NodeStatus);
}

pub struct NullSink;

impl ProgressSink for NullSink {
    fn on_status(&self, _node: NodeId, _status: NodeStatus) {}
}

#[derive(Debug, Error)]
pub enum ProveError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("invalid formal statement: {0}")]
    InvalidStatement(String),
}

/// Model calls of one node, in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeTranscript {
    pub node: NodeId,
    pub entries: Vec<TranscriptEntry>,
}

#[derive(Debug)]
pub struct ProveOutcome {
    pub tree: ProofTree,
    pub status: NodeStatus,
    /// The assembled sorry-free proof, present iff the root is proven.
    pub document: Option<ProofDocument>,
    pub node_transcripts: Vec<NodeTranscript>,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    services: &'a Services,
    store: Mutex<ProofTree>,
    sink: &'a dyn ProgressSink,
    transcripts: Mutex<Vec<NodeTranscript>>,
}

impl Ctx<'_> {
    fn set_status(&self, id: NodeId, status: NodeStatus) {
        let changed = {
            let mut tree = self.store.lock().unwrap();
            let node = &mut tree.nodes[id];
            if node.status == status {
                false
            } else {
                node.status = status;
                true
            }
        };
        if changed {
            self.sink.on_status(id, status);
        }
    }

    fn bump_retries(&self, id: NodeId) {
        self.store.lock().unwrap().nodes[id].retries += 1;
    }

    fn retries(&self, id: NodeId) -> usize {
        self.store.lock().unwrap().nodes[id].retries
    }
}

/// Informal stand-in used by the fast-prove path and when the informal stage
/// degrades to nothing.
const STUB_INFORMAL: &str =
    "Step 1: Prove the statement directly from its hypotheses using basic tactics.";

fn decl_name(statement: &str) -> String {
    let mut words = statement.split_whitespace();
    match words.next() {
        Some("example") => "example".to_string(),
        Some(_) => words.next().unwrap_or("goal").to_string(),
        None => "goal".to_string(),
    }
}

fn hypothesis_prompt(state: &GoalState) -> String {
    format!(
        "A Lean 4 proof is stuck at the following goal state:\n\n{state}\n\nWhich hypotheses are needed to prove the goal? Answer with their names, one per line. When unsure about a hypothesis, include it.",
    )
}

fn semantic_prompt(parent: &ProofDocument, subgoal: &Subgoal) -> String {
    format!(
        "A standalone lemma was extracted from a sorry site of the Lean 4 proof below.\n\n### Parent proof:\n{}\n\n### Extracted lemma statement:\n{}\n\nJudge whether the lemma faithfully captures the goal at the sorry site and whether it is plausibly provable. Explain briefly, then end with exactly one verdict tag on the last line: SOUND, EXTRACTION_MISMATCH, or LOGICALLY_FLAWED.",
        parent.text().trim_end(),
        subgoal.statement
    )
}

/// Drive the four-stage pipeline on `statement`. Creates the root node and
/// recurses through subgoal children; returns the tree, the terminal root
/// status, and the assembled document iff the root was proven.
pub fn prove(
    problem: &str,
    statement: &str,
    config: &RunConfig,
    services: &Services,
    sink: &dyn ProgressSink,
) -> Result<ProveOutcome, ProveError> {
    config.validate().map_err(ProveError::Config)?;
    let trimmed = statement.trim();
    let probe = ProofDocument::parse(format!("{trimmed}\n"))
        .map_err(|e| ProveError::InvalidStatement(e.to_string()))?;
    let body = probe.body_text().trim();
    if !(body.is_empty() || body == "sorry") {
        return Err(ProveError::InvalidStatement(
            "statement body must be empty or a sorry placeholder".into(),
        ));
    }
    let (tree, root) = ProofTree::new(trimmed.to_string());
    let ctx = Ctx {
        config,
        services,
        store: Mutex::new(tree),
        sink,
        transcripts: Mutex::new(Vec::new()),
    };
    let status = process_node(&ctx, root, problem);
    let tree = ctx.store.into_inner().unwrap();
    let document = if status == NodeStatus::Proven {
        tree.nodes[root]
            .document
            .clone()
            .map(|t| ProofDocument::parse(t).expect("proven document reparses"))
    } else {
        None
    };
    Ok(ProveOutcome {
        tree,
        status,
        document,
        node_transcripts: ctx.transcripts.into_inner().unwrap(),
    })
}

fn process_node(ctx: &Ctx, id: NodeId, problem: &str) -> NodeStatus {
    let started = Instant::now();
    let agents = ctx.services.agents.fork_transcript();
    let (status, document) = drive_node(ctx, id, problem, &agents);
    let entries = agents.transcript().entries();
    let cost: f64 = entries.iter().map(|e| e.cost_usd).sum();
    {
        let mut tree = ctx.store.lock().unwrap();
        let node = &mut tree.nodes[id];
        node.charges.cost_usd += cost;
        node.charges.wall_time += started.elapsed();
        node.document = document.as_ref().map(|d| d.text().to_string());
    }
    ctx.transcripts
        .lock()
        .unwrap()
        .push(NodeTranscript { node: id, entries });
    ctx.set_status(id, status);
    status
}

enum SplitFailure {
    /// Verifier commentary to route back into the fix loop.
    Flawed(String),
    /// A subgoal normalized to the node's own statement.
    NoProgress,
}

fn drive_node(
    ctx: &Ctx,
    id: NodeId,
    problem: &str,
    agents: &Agents,
) -> (NodeStatus, Option<ProofDocument>) {
    let statement = ctx.store.lock().unwrap().nodes[id].statement.clone();
    let name = decl_name(&statement);
    let gateway = &ctx.services.gateway;
    let ledger = &ctx.services.ledger;
    let mut informal: Option<String> = None;
    let mut current_doc: Option<ProofDocument> = None;
    let mut tried_fast = false;
    // Sorried document persisted on budget exhaustion mid-split.
    let mut best_sorried: Option<ProofDocument> = None;

    loop {
        if ledger.admit().is_err() {
            return (NodeStatus::BudgetExhausted, best_sorried);
        }
        if ctx.retries(id) >= ctx.config.retry_threshold {
            return (NodeStatus::Unprovable, None);
        }

        if ctx.config.fast_prove_enabled && !tried_fast {
            tried_fast = true;
            match fast_prove(&statement, agents, gateway, ctx.config) {
                Ok(Some(doc)) => return (NodeStatus::Proven, Some(doc)),
                Ok(None) => {}
                Err(_) => return (NodeStatus::BudgetExhausted, best_sorried),
            }
        }

        if informal.is_none() {
            ctx.set_status(id, NodeStatus::Informal);
            match informal_loop(problem, agents, &ctx.config.informal()) {
                Ok(solution) => {
                    let text = if solution.text.trim().is_empty() {
                        STUB_INFORMAL.to_string()
                    } else {
                        solution.text
                    };
                    informal = Some(text);
                }
                Err(AgentError::Budget(_)) => {
                    return (NodeStatus::BudgetExhausted, best_sorried)
                }
                Err(_) => {
                    ctx.bump_retries(id);
                    continue;
                }
            }
        }

        ctx.set_status(id, NodeStatus::Formal);
        let mut doc = match current_doc.take() {
            Some(doc) => doc,
            None => match formalize(&statement, informal.as_deref().unwrap(), agents) {
                Ok(doc) => doc,
                Err(AgentError::Budget(_)) => {
                    return (NodeStatus::BudgetExhausted, best_sorried)
                }
                Err(_) => {
                    ctx.bump_retries(id);
                    continue;
                }
            },
        };
        if ledger.admit().is_err() {
            return (NodeStatus::BudgetExhausted, best_sorried);
        }
        let mut report = match gateway.verify(&doc) {
            Ok(report) => report,
            Err(_) => {
                ctx.bump_retries(id);
                continue;
            }
        };

        let mut verify_lost = false;
        for _ in 0..ctx.config.fix_rounds {
            if report.verdict == Verdict::Valid || !report.has_errors() {
                break;
            }
            if ledger.admit().is_err() {
                return (NodeStatus::BudgetExhausted, best_sorried);
            }
            let search = search_routing(&report, gateway);
            let comments = match comment_on_proof(&doc, agents) {
                Ok(comments) => comments,
                Err(AgentError::Budget(_)) => {
                    return (NodeStatus::BudgetExhausted, best_sorried)
                }
                Err(_) => String::new(),
            };
            let fixed = match fix_round(&doc, &report, &comments, &search, agents) {
                Ok(fixed) => fixed,
                Err(AgentError::Budget(_)) => {
                    return (NodeStatus::BudgetExhausted, best_sorried)
                }
                Err(_) => break,
            };
            if fixed.text() == doc.text() {
                break;
            }
            doc = fixed;
            if ledger.admit().is_err() {
                return (NodeStatus::BudgetExhausted, best_sorried);
            }
            report = match gateway.verify(&doc) {
                Ok(report) => report,
                Err(_) => {
                    verify_lost = true;
                    break;
                }
            };
        }
        if verify_lost {
            ctx.bump_retries(id);
            continue;
        }
        if report.verdict == Verdict::Valid {
            return (NodeStatus::Proven, Some(doc));
        }

        // The fix loop could not repair the proof: sorrify and split.
        if ledger.admit().is_err() {
            return (NodeStatus::BudgetExhausted, best_sorried);
        }
        let outcome = match sorrify(&doc, gateway, ctx.config.sorrifier_max_iterations) {
            Ok(outcome) => outcome,
            Err(_) => {
                ctx.bump_retries(id);
                continue;
            }
        };
        if !outcome.success {
            ctx.bump_retries(id);
            continue;
        }
        let sorried = outcome.document;
        let Some(sorried_report) = outcome.last_report else {
            ctx.bump_retries(id);
            continue;
        };
        if sorried_report.verdict == Verdict::Valid {
            return (NodeStatus::Proven, Some(sorried));
        }
        best_sorried = Some(sorried.clone());
        let sites = sorried.list_sorry_sites();
        if sites.is_empty() {
            ctx.bump_retries(id);
            continue;
        }
        ctx.set_status(id, NodeStatus::Split);

        let mut subgoals: Vec<Subgoal> = Vec::with_capacity(sites.len());
        let mut failure: Option<SplitFailure> = None;
        for site in &sites {
            let Some(state) = sorried_report.goal_states.get(&site.index) else {
                failure = Some(SplitFailure::Flawed(format!(
                    "No goal state was recorded for sorry site {}.",
                    site.index
                )));
                break;
            };
            if ledger.admit().is_err() {
                return (NodeStatus::BudgetExhausted, best_sorried);
            }
            let proposal = match agents.call(Role::Reasoner, None, &hypothesis_prompt(state)) {
                Ok(text) => Some(text),
                Err(AgentError::Budget(_)) => {
                    return (NodeStatus::BudgetExhausted, best_sorried)
                }
                Err(_) => None,
            };
            let kept = select_hypotheses(state, proposal.as_deref());
            let mut subgoal = extract_subgoal(&name, site.index, state, &kept);
            if !matches!(validate_syntactic(gateway, &subgoal), Ok(true)) {
                // The trimmed statement does not compile; retry keeping every
                // hypothesis, which is always sound.
                let all = select_hypotheses(state, None);
                subgoal = extract_subgoal(&name, site.index, state, &all);
                if !matches!(validate_syntactic(gateway, &subgoal), Ok(true)) {
                    failure = Some(SplitFailure::Flawed(format!(
                        "The extracted subgoal {} does not compile as a standalone statement.",
                        subgoal.name
                    )));
                    break;
                }
            }
            let response = match agents.call(Role::Verifier, None, &semantic_prompt(&sorried, &subgoal)) {
                Ok(text) => text,
                Err(AgentError::Budget(_)) => {
                    return (NodeStatus::BudgetExhausted, best_sorried)
                }
                Err(_) => String::new(),
            };
            let (verdict, _confident) = parse_semantic_verdict(&response);
            if verdict != SemanticVerdict::Sound {
                failure = Some(SplitFailure::Flawed(response));
                break;
            }
            if detect_no_progress(&statement, &subgoal.statement) {
                failure = Some(SplitFailure::NoProgress);
                break;
            }
            subgoals.push(subgoal);
        }

        match failure {
            Some(SplitFailure::Flawed(commentary)) => {
                // A flawed subgoal may stem from a flawed proof approach:
                // route the commentary back through a fix round before
                // counting the retry.
                if ledger.admit().is_ok() {
                    if let Ok(fixed) = fix_round(&doc, &report, &commentary, "", agents) {
                        if fixed.text() != doc.text() {
                            current_doc = Some(fixed);
                        }
                    }
                }
                ctx.bump_retries(id);
                continue;
            }
            Some(SplitFailure::NoProgress) => {
                // Decomposition reproduced the statement itself: revert to a
                // fresh formal attempt with a note in the prompt context.
                informal = informal.map(|text| {
                    format!(
                        "{text}\n\nNote: a previous decomposition produced a subgoal identical to the statement itself. Prove the statement directly with a different approach instead of restating it."
                    )
                });
                current_doc = None;
                ctx.bump_retries(id);
                continue;
            }
            None => {}
        }

        let child_ids: Vec<NodeId> = {
            let mut tree = ctx.store.lock().unwrap();
            subgoals
                .iter()
                .map(|s| tree.add_child(id, s.statement.clone()))
                .collect()
        };
        for &child in &child_ids {
            ctx.sink.on_status(child, NodeStatus::Pending);
        }
        let width = ctx.config.parallel_width.max(1);
        let mut statuses: Vec<NodeStatus> = Vec::with_capacity(child_ids.len());
        for (ids_chunk, subs_chunk) in child_ids.chunks(width).zip(subgoals.chunks(width)) {
            let chunk_statuses: Vec<NodeStatus> = std::thread::scope(|scope| {
                let handles: Vec<_> = ids_chunk
                    .iter()
                    .zip(subs_chunk)
                    .map(|(&child, subgoal)| {
                        scope.spawn(move || process_node(ctx, child, &subgoal.statement))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            statuses.extend(chunk_statuses);
        }

        if statuses.contains(&NodeStatus::BudgetExhausted) {
            return (NodeStatus::BudgetExhausted, best_sorried);
        }
        if let Some(i) = statuses.iter().position(|s| *s != NodeStatus::Proven) {
            let commentary = format!(
                "The subgoal {} could not be proven; the decomposition or the overall proof approach may be flawed.",
                subgoals[i].name
            );
            if ledger.admit().is_ok() {
                if let Ok(fixed) = fix_round(&doc, &report, &commentary, "", agents) {
                    if fixed.text() != doc.text() {
                        current_doc = Some(fixed);
                    }
                }
            }
            ctx.bump_retries(id);
            continue;
        }

        let mut assembler = Assembler::new(sorried.clone());
        let mut assembly_failed = false;
        for (subgoal, &child) in subgoals.iter().zip(&child_ids) {
            let lemma_text = ctx.store.lock().unwrap().nodes[child].document.clone();
            let Some(lemma_text) = lemma_text else {
                assembly_failed = true;
                break;
            };
            if assembler.assemble(subgoal, &lemma_text).is_err() {
                assembly_failed = true;
                break;
            }
        }
        if assembly_failed {
            ctx.bump_retries(id);
            continue;
        }
        let assembled = assembler.into_document();
        if ledger.admit().is_err() {
            return (NodeStatus::BudgetExhausted, best_sorried);
        }
        match gateway.verify(&assembled) {
            Ok(report) if report.verdict == Verdict::Valid => {
                return (NodeStatus::Proven, Some(assembled))
            }
            _ => {
                current_doc = None;
                ctx.bump_retries(id);
                continue;
            }
        }
    }
}

/// One direct formalization attempt with a stub informal solution and at most
/// one fix round. Returns a document only if it verifies fully valid; every
/// other failure is absent so the pipeline proceeds to the informal stage.
pub fn fast_prove(
    statement: &str,
    agents: &Agents,
    gateway: &Gateway,
    _config: &RunConfig,
) -> Result<Option<ProofDocument>, AgentError> {
    let doc = match formalize(statement, STUB_INFORMAL, agents) {
        Ok(doc) => doc,
        Err(err @ AgentError::Budget(_)) => return Err(err),
        Err(_) => return Ok(None),
    };
    let Ok(report) = gateway.verify(&doc) else {
        return Ok(None);
    };
    if report.verdict == Verdict::Valid {
        return Ok(Some(doc));
    }
    if !report.has_errors() {
        return Ok(None);
    }
    let search = search_routing(&report, gateway);
    let fixed = match fix_round(&doc, &report, "", &search, agents) {
        Ok(fixed) => fixed,
        Err(err @ AgentError::Budget(_)) => return Err(err),
        Err(_) => return Ok(None),
    };
    match gateway.verify(&fixed) {
        Ok(report) if report.verdict == Verdict::Valid => Ok(Some(fixed)),
        _ => Ok(None),
    }
}

/// True iff the child statement is the parent statement restated: equal after
/// collapsing whitespace, stripping the declaration keyword and name, and
/// renaming binders positionally (the rename is substituted into binder types
/// and the goal, so alpha-equivalent statements compare equal).
pub fn detect_no_progress(parent_statement: &str, child_statement: &str) -> bool {
    normalize_statement(parent_statement) == normalize_statement(child_statement)
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_statement(statement: &str) -> String {
    let mut text = collapse_ws(statement);
    for suffix in [":= by sorry", ":= by", ":="] {
        if let Some(stripped) = text.strip_suffix(suffix) {
            text = stripped.trim_end().to_string();
            break;
        }
    }
    let mut words = text.splitn(2, ' ');
    let rest = match words.next() {
        Some("example") => words.next().unwrap_or("").to_string(),
        Some("lemma") | Some("theorem") => {
            let after = words.next().unwrap_or("");
            after.splitn(2, ' ').nth(1).unwrap_or("").to_string()
        }
        _ => text.clone(),
    };
    match split_binders(&rest) {
        Some((binders, goal)) => {
            let mut rename: Vec<(String, String)> = Vec::new();
            for (names, _) in &binders {
                for name in names {
                    if !rename.iter().any(|(n, _)| n == name) {
                        let fresh = format!("v{}", rename.len() + 1);
                        rename.push((name.clone(), fresh));
                    }
                }
            }
            let types: Vec<String> = binders
                .iter()
                .map(|(_, ty)| format!("({})", rename_tokens(ty, &rename)))
                .collect();
            format!("{} : {}", types.join(" "), rename_tokens(&goal, &rename))
        }
        None => rest,
    }
}

/// Split `"(a b : T) (h : P) : goal"` into binder groups and the goal. The
/// goal starts at the first top-level `:`.
fn split_binders(rest: &str) -> Option<(Vec<(Vec<String>, String)>, String)> {
    let bytes = rest.as_bytes();
    let mut depth = 0usize;
    let mut colon = None;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth = depth.saturating_sub(1),
            b':' if depth == 0 => {
                colon = Some(i);
                break;
            }
            _ => {}
        }
    }
    let colon = colon?;
    let binder_region = rest[..colon].trim();
    let goal = rest[colon + 1..].trim().to_string();
    let mut binders = Vec::new();
    let mut depth = 0usize;
    let mut start = None;
    for (i, c) in binder_region.char_indices() {
        match c {
            '(' | '[' | '{' => {
                if depth == 0 {
                    start = Some(i + 1);
                }
                depth += 1;
            }
            ')' | ']' | '}' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    let inner = &binder_region[start?..i];
                    let (names, ty) = inner.rsplit_once(':')?;
                    binders.push((
                        names.split_whitespace().map(str::to_string).collect(),
                        ty.trim().to_string(),
                    ));
                    start = None;
                }
            }
            _ => {}
        }
    }
    Some((binders, goal))
}

fn rename_tokens(text: &str, rename: &[(String, String)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' || c == '\'' {
            token.push(c);
        } else {
            flush_token(&mut out, &mut token, rename);
            out.push(c);
        }
    }
    flush_token(&mut out, &mut token, rename);
    out
}

fn flush_token(out: &mut String, token: &mut String, rename: &[(String, String)]) {
    if token.is_empty() {
        return;
    }
    match rename.iter().find(|(n, _)| n == token.as_str()) {
        Some((_, fresh)) => out.push_str(fresh),
        None => out.push_str(token.as_str()),
    }
    token.clear();
}

/// Per-depth node counts, lemma count, final proof length, and charge totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMetrics {
    pub depth_histogram: BTreeMap<usize, usize>,
    /// Non-root nodes.
    pub lemma_count: usize,
    /// Line count of the final document, 0 when absent.
    pub proof_lines: usize,
    pub cost_usd: f64,
    /// Summed root wall time; children run within their root's span.
    pub wall_time: Duration,
}

pub fn tree_metrics(tree: &ProofTree, final_document: Option<&str>) -> TreeMetrics {
    let mut depth_histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for node in tree.nodes() {
        *depth_histogram.entry(node.depth).or_insert(0) += 1;
    }
    let roots = tree.roots().len();
    TreeMetrics {
        depth_histogram,
        lemma_count: tree.len().saturating_sub(roots),
        proof_lines: final_document.map(|t| t.lines().count()).unwrap_or(0),
        cost_usd: tree.nodes().iter().map(|n| n.charges.cost_usd).sum(),
        wall_time: tree
            .nodes()
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.charges.wall_time)
            .sum(),
    }
}
