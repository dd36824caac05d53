//! The interaction loops built on the role abstraction: informal
//! generate-verify-refine, formalization, proof commentary, fix rounds, and
//! search routing for unknown identifiers.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::document::ProofDocument;
use crate::gateway::{classify, ErrorClass, Gateway, Severity, VerificationReport};
use crate::roles::prompts::{render_prompt, template, TemplateId};
use crate::roles::{parse_score, AgentError, Agents, Role, Score};

#[derive(Debug, Clone)]
pub struct InformalConfig {
    pub max_rounds: usize,
    pub passes: usize,
}

impl Default for InformalConfig {
    fn default() -> Self {
        InformalConfig {
            max_rounds: 16,
            passes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformalSolution {
    pub text: String,
    pub steps: Vec<String>,
    pub accepted: bool,
    pub rounds_used: usize,
    pub diagnostic: Option<String>,
}

impl InformalSolution {
    fn from_text(text: String, accepted: bool, rounds_used: usize, diagnostic: Option<String>) -> Self {
        InformalSolution {
            steps: parse_steps(&text),
            text,
            accepted,
            rounds_used,
            diagnostic,
        }
    }
}

fn step_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\s*(?:[-*•·.]\s*)?(Step \d+:.*)$").unwrap())
}

/// `Step X:` items of an informal solution, in order.
pub fn parse_steps(text: &str) -> Vec<String> {
    step_regex()
        .captures_iter(text)
        .map(|c| c[1].trim().to_string())
        .collect()
}

fn slots<'a>(pairs: &[(&'a str, &str)]) -> BTreeMap<&'a str, String> {
    pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
}

/// Generate-verify-refine loop. Each round's verification passes run
/// concurrently; the solution is accepted only when all passes score 1.
/// Transport failures surface as an unaccepted solution with a diagnostic;
/// budget exhaustion propagates as an error.
pub fn informal_loop(
    problem: &str,
    agents: &Agents,
    config: &InformalConfig,
) -> Result<InformalSolution, AgentError> {
    let generate = render_prompt(TemplateId::GenerateInformal, &slots(&[("problem", problem)]))?;
    let mut solution = match agents.call(Role::Reasoner, None, &generate) {
        Ok(text) => text,
        Err(AgentError::Transport(message)) => {
            return Ok(InformalSolution::from_text(String::new(), false, 0, Some(message)))
        }
        Err(err) => return Err(err),
    };
    let mut best: (f64, String, usize) = (f64::NEG_INFINITY, solution.clone(), 1);

    for round in 1..=config.max_rounds.max(1) {
        let verify = render_prompt(
            TemplateId::VerifyInformal,
            &slots(&[("problem", problem), ("student_solution", &solution)]),
        )?;
        let results: Vec<Result<String, AgentError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..config.passes)
                .map(|_| scope.spawn(|| agents.call(Role::Verifier, None, &verify)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut evaluations = Vec::with_capacity(results.len());
        for result in results {
            match result {
                Ok(text) => evaluations.push(text),
                Err(AgentError::Transport(message)) => {
                    return Ok(InformalSolution::from_text(solution, false, round, Some(message)))
                }
                Err(err) => return Err(err),
            }
        }
        let scores: Vec<Score> = evaluations
            .iter()
            .map(|e| parse_score(e).unwrap_or(Score::Zero))
            .collect();
        let total: f64 = scores.iter().map(|s| s.value()).sum();
        if total > best.0 {
            best = (total, solution.clone(), round);
        }
        if !scores.is_empty() && scores.iter().all(|s| *s == Score::One) {
            return Ok(InformalSolution::from_text(solution, true, round, None));
        }
        if round == config.max_rounds {
            break;
        }
        // All passes feed the refinement, prefixed by pass index, so the
        // reasoner can weigh agreeing and dissenting evaluations.
        let feedback = evaluations
            .iter()
            .enumerate()
            .map(|(i, e)| format!("Pass {} evaluation:\n{}", i + 1, e))
            .collect::<Vec<_>>()
            .join("\n\n");
        let refine = render_prompt(
            TemplateId::RefineInformal,
            &slots(&[("problem", problem), ("solution", &solution), ("feedback", &feedback)]),
        )?;
        solution = match agents.call(Role::Reasoner, None, &refine) {
            Ok(text) => text,
            Err(AgentError::Transport(message)) => {
                return Ok(InformalSolution::from_text(solution, false, round, Some(message)))
            }
            Err(err) => return Err(err),
        };
    }
    Ok(InformalSolution::from_text(best.1, false, config.max_rounds, None))
}

/// Extract the single ```lean4 code block from a completion.
fn extract_code_block(completion: &str) -> Result<String, AgentError> {
    const FENCE: &str = "```lean4";
    let count = completion.matches(FENCE).count();
    if count == 0 {
        return Err(AgentError::NoCodeBlock);
    }
    if count > 1 {
        return Err(AgentError::MultipleCodeBlocks);
    }
    let start = completion.find(FENCE).unwrap() + FENCE.len();
    let after = &completion[start..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    let end = body.find("```").ok_or(AgentError::NoCodeBlock)?;
    Ok(body[..end].trim_end().to_string())
}

/// The statement header the prover must reproduce byte-for-byte: the formal
/// statement without a trailing `sorry` placeholder.
fn expected_header(formal_statement: &str) -> String {
    let trimmed = formal_statement.trim();
    trimmed
        .strip_suffix("sorry")
        .map(|s| s.trim_end())
        .unwrap_or(trimmed)
        .to_string()
}

fn proof_from_completion(
    completion: &str,
    formal_statement: &str,
    preamble: &str,
) -> Result<ProofDocument, AgentError> {
    let code = extract_code_block(completion)?;
    let code = code.trim();
    if !code.starts_with(&expected_header(formal_statement)) {
        return Err(AgentError::HeaderMutated);
    }
    let mut text = String::with_capacity(preamble.len() + code.len() + 1);
    text.push_str(preamble);
    text.push_str(code);
    text.push('\n');
    Ok(ProofDocument::parse(text)?)
}

fn is_content_error(err: &AgentError) -> bool {
    matches!(
        err,
        AgentError::NoCodeBlock
            | AgentError::MultipleCodeBlocks
            | AgentError::HeaderMutated
            | AgentError::Document(_)
    )
}

/// Call the prover and parse its proof, with exactly one re-ask on a
/// malformed completion.
fn prover_roundtrip(
    agents: &Agents,
    prompt: &str,
    formal_statement: &str,
    preamble: &str,
) -> Result<ProofDocument, AgentError> {
    let system = template(TemplateId::SystemFormal);
    let first = agents.call(Role::Prover, Some(system), prompt)?;
    match proof_from_completion(&first, formal_statement, preamble) {
        Ok(doc) => Ok(doc),
        Err(err) if is_content_error(&err) => {
            let second = agents.call(Role::Prover, Some(system), prompt)?;
            proof_from_completion(&second, formal_statement, preamble)
        }
        Err(err) => Err(err),
    }
}

/// Produce a formal proof of `formal_statement` following the informal
/// solution.
pub fn formalize(
    formal_statement: &str,
    informal_solution: &str,
    agents: &Agents,
) -> Result<ProofDocument, AgentError> {
    let prompt = render_prompt(
        TemplateId::GenerateFormal,
        &slots(&[
            ("formal_statement", formal_statement),
            ("informal_solution", informal_solution),
        ]),
    )?;
    prover_roundtrip(agents, &prompt, formal_statement, "")
}

/// Pretty-print a report's diagnostics for the `{error_message}` slot.
pub fn format_diagnostics(report: &VerificationReport) -> String {
    report
        .diagnostics
        .iter()
        .map(|d| {
            let severity = match d.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
                Severity::Info => "info",
            };
            format!(
                "{severity}: line {}, column {}:\n{}",
                d.position.line, d.position.column, d.message
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Ask the verifier for strategic commentary on a proof. Degrades to empty
/// commentary on persistent transport failure.
pub fn comment_on_proof(doc: &ProofDocument, agents: &Agents) -> Result<String, AgentError> {
    let prompt = render_prompt(
        TemplateId::CommentProof,
        &slots(&[("lean_code", doc.text().trim_end())]),
    )?;
    match agents.call(Role::Verifier, None, &prompt) {
        Ok(comments) => Ok(comments),
        Err(AgentError::Transport(_)) => Ok(String::new()),
        Err(err) => Err(err),
    }
}

/// One fix round: feed the compiler errors, reviewer comments, and search
/// results back to the prover. The statement header and any preamble of
/// already-assembled lemmas are preserved.
pub fn fix_round(
    doc: &ProofDocument,
    report: &VerificationReport,
    comments: &str,
    search_results: &str,
    agents: &Agents,
) -> Result<ProofDocument, AgentError> {
    let error_message = format_diagnostics(report);
    let prompt = render_prompt(
        TemplateId::FixFormal,
        &slots(&[
            ("error_message", &error_message),
            ("llm_comments", comments),
            ("search_results", search_results),
        ]),
    )?;
    prover_roundtrip(agents, &prompt, doc.header_text(), doc.preamble_text())
}

fn unknown_identifier_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"unknown (?:identifier|constant) '([^']+)'").unwrap())
}

/// For each unknown-identifier error, query the retrieval service and render
/// a result list for the `{search_results}` slot. Degrades to empty on
/// search failures.
pub fn search_routing(report: &VerificationReport, gateway: &Gateway) -> String {
    let mut names: Vec<String> = Vec::new();
    for diagnostic in report.errors() {
        if classify(diagnostic) != ErrorClass::UnknownIdentifier {
            continue;
        }
        for capture in unknown_identifier_regex().captures_iter(&diagnostic.message) {
            let name = capture[1].to_string();
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    let mut lines: Vec<String> = Vec::new();
    for name in names {
        let Ok(results) = gateway.search(&name, 5) else { continue };
        for result in results {
            let line = format!("- {} : {}", result.name, result.statement);
            if !lines.contains(&line) {
                lines.push(line);
            }
        }
    }
    if lines.is_empty() {
        String::new()
    } else {
        format!("### Search Results:\n{}", lines.join("\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Diagnostic, ScriptedBackend, SearchResult, Verdict};
    use crate::roles::ScriptedChat;
    use std::sync::Arc;
    use std::time::Duration;

    const FIGURE3_STATEMENT: &str = "theorem eq_trans (a b c : Nat)\n  (h1 : a = b) (h2 : b = c) :\n  a = c := by sorry";

    const FIGURE3_PROOF: &str = "theorem eq_trans (a b c : Nat)\n  (h1 : a = b) (h2 : b = c) :\n  a = c := by\n  have step1 : a = b := by\n    exact h1\n  have step2 : b = c := by\n    exact h1\n  have step3 : a = c := by\n    exact Eq.trans step1 step2\n  exact step3";

    fn lean_block(code: &str) -> String {
        format!("Here is the proof.\n```lean4\n{code}\n```\n")
    }

    #[test]
    fn informal_loop_accepts_on_unanimous_ones() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Reasoner, "<informal_solution>\n- Step 1: done.\n</informal_solution>");
        chat.set_default(Role::Verifier, "\\boxed{1}");
        let agents = Agents::scripted(chat.clone());
        let solution = informal_loop("prove it", &agents, &InformalConfig::default()).unwrap();
        assert!(solution.accepted);
        assert_eq!(solution.rounds_used, 1);
        assert_eq!(solution.steps, ["Step 1: done."]);
        // 1 generate + 3 verification passes.
        assert_eq!(chat.call_count(), 4);
    }

    #[test]
    fn informal_loop_refines_with_feedback() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Reasoner, "draft solution");
        chat.push_response(Role::Reasoner, "refined solution");
        chat.push_response(Role::Verifier, "missing a case, score: \\boxed{0.5}");
        chat.push_response(Role::Verifier, "fine \\boxed{1}");
        chat.push_response(Role::Verifier, "fine \\boxed{1}");
        chat.set_default(Role::Verifier, "\\boxed{1}");
        let agents = Agents::scripted(chat.clone());
        let solution = informal_loop("p", &agents, &InformalConfig::default()).unwrap();
        assert!(solution.accepted);
        assert_eq!(solution.rounds_used, 2);
        assert_eq!(solution.text, "refined solution");
        let refine_call = &chat.calls()[4];
        assert_eq!(refine_call.role, Role::Reasoner);
        assert!(refine_call.prompt.contains("missing a case"));
        assert!(refine_call.prompt.contains("draft solution"));
    }

    #[test]
    fn informal_loop_exhausts_rounds_on_zeros() {
        let chat = Arc::new(ScriptedChat::new());
        chat.set_default(Role::Reasoner, "attempt");
        chat.set_default(Role::Verifier, "\\boxed{0}");
        let agents = Agents::scripted(chat.clone());
        let solution = informal_loop("p", &agents, &InformalConfig::default()).unwrap();
        assert!(!solution.accepted);
        assert_eq!(solution.rounds_used, 16);
        let verifier_calls = chat
            .calls()
            .iter()
            .filter(|c| c.role == Role::Verifier)
            .count();
        assert_eq!(verifier_calls, 48);
    }

    #[test]
    fn informal_loop_transport_failure_degrades() {
        let chat = Arc::new(ScriptedChat::new());
        chat.fail_next(100);
        let agents = Agents::scripted(chat);
        let solution = informal_loop("p", &agents, &InformalConfig::default()).unwrap();
        assert!(!solution.accepted);
        assert!(solution.diagnostic.is_some());
    }

    #[test]
    fn formalize_parses_single_block_and_checks_header() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Prover, lean_block(FIGURE3_PROOF));
        let agents = Agents::scripted(chat.clone());
        let doc = formalize(FIGURE3_STATEMENT, "steps", &agents).unwrap();
        assert_eq!(doc.parse_blocks().len(), 3);
        let call = &chat.calls()[0];
        assert!(call.system.as_deref().unwrap().starts_with("You are a Lean 4 and Mathlib expert."));
        assert!(call.prompt.contains(FIGURE3_STATEMENT));
    }

    #[test]
    fn formalize_reasks_once_then_fails_on_two_blocks() {
        let chat = Arc::new(ScriptedChat::new());
        let double = format!("{}\n{}", lean_block(FIGURE3_PROOF), lean_block(FIGURE3_PROOF));
        chat.push_response(Role::Prover, double.clone());
        chat.push_response(Role::Prover, double);
        let agents = Agents::scripted(chat.clone());
        let err = formalize(FIGURE3_STATEMENT, "steps", &agents).unwrap_err();
        assert!(matches!(err, AgentError::MultipleCodeBlocks));
        assert_eq!(chat.call_count(), 2);
    }

    #[test]
    fn formalize_rejects_header_mutation() {
        let mutated = FIGURE3_PROOF.replace("eq_trans (a b c : Nat)", "eq_trans (a b d : Nat)");
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Prover, lean_block(&mutated));
        chat.push_response(Role::Prover, lean_block(&mutated));
        let agents = Agents::scripted(chat);
        assert!(matches!(
            formalize(FIGURE3_STATEMENT, "steps", &agents).unwrap_err(),
            AgentError::HeaderMutated
        ));
    }

    #[test]
    fn formalize_recovers_after_reask() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Prover, "no code here");
        chat.push_response(Role::Prover, lean_block(FIGURE3_PROOF));
        let agents = Agents::scripted(chat);
        assert!(formalize(FIGURE3_STATEMENT, "steps", &agents).is_ok());
    }

    #[test]
    fn comment_transport_failure_degrades_to_empty() {
        let chat = Arc::new(ScriptedChat::new());
        chat.fail_next(100);
        let agents = Agents::scripted(chat);
        let doc = ProofDocument::parse("theorem t (h : True) : True := by\n  exact h\n").unwrap();
        assert_eq!(comment_on_proof(&doc, &agents).unwrap(), "");
    }

    #[test]
    fn comment_passes_numbered_list_verbatim() {
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(Role::Verifier, "1. Dead end in step2.\n2. Use have blocks.");
        let agents = Agents::scripted(chat.clone());
        let doc = ProofDocument::parse("theorem t (h : True) : True := by\n  exact h\n").unwrap();
        let comments = comment_on_proof(&doc, &agents).unwrap();
        assert_eq!(comments, "1. Dead end in step2.\n2. Use have blocks.");
        assert!(chat.calls()[0].prompt.contains("theorem t (h : True) : True := by"));
    }

    #[test]
    fn fix_round_renders_errors_comments_and_search() {
        let doc = ProofDocument::parse(
            "theorem t (h : True) : True := by\n  exact missing\n",
        )
        .unwrap();
        let report = VerificationReport::new(
            Verdict::Invalid,
            vec![Diagnostic::error(2, 3, "unknown identifier 'missing'")],
            Default::default(),
            Duration::ZERO,
        );
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(
            Role::Prover,
            lean_block("theorem t (h : True) : True := by\n  exact h"),
        );
        let agents = Agents::scripted(chat.clone());
        let fixed = fix_round(&doc, &report, "1. exact h instead", "- Nat.le : ...", &agents).unwrap();
        assert_eq!(fixed.text(), "theorem t (h : True) : True := by\n  exact h\n");
        let prompt = &chat.calls()[0].prompt;
        assert!(prompt.contains("error: line 2, column 3:\nunknown identifier 'missing'"));
        assert!(prompt.contains("1. exact h instead"));
        assert!(prompt.contains("- Nat.le : ..."));
    }

    #[test]
    fn fix_round_preserves_preamble() {
        let doc = ProofDocument::parse(
            "lemma pre (h : True) : True := by\n  exact h\n\ntheorem t (h : True) : True := by\n  exact missing\n",
        )
        .unwrap();
        let report = VerificationReport::new(
            Verdict::Invalid,
            vec![Diagnostic::error(5, 3, "unknown identifier 'missing'")],
            Default::default(),
            Duration::ZERO,
        );
        let chat = Arc::new(ScriptedChat::new());
        chat.push_response(
            Role::Prover,
            lean_block("theorem t (h : True) : True := by\n  exact h"),
        );
        let agents = Agents::scripted(chat);
        let fixed = fix_round(&doc, &report, "", "", &agents).unwrap();
        assert!(fixed.text().starts_with("lemma pre (h : True) : True := by"));
        assert!(fixed.text().ends_with("theorem t (h : True) : True := by\n  exact h\n"));
    }

    #[test]
    fn search_routing_queries_each_unknown_identifier_once() {
        let mut backend = ScriptedBackend::new();
        backend.script_search(
            "Real.mul_le_sin",
            vec![SearchResult {
                name: "Real.mul_le_sin".into(),
                statement: "∀ x, 0 ≤ x → x ≤ 1 → x * sin 1 ≤ sin x".into(),
                score: 0.9,
            }],
        );
        let backend = Arc::new(backend);
        let gateway = Gateway::with_backend(backend.clone());
        let report = VerificationReport::new(
            Verdict::Invalid,
            vec![
                Diagnostic::error(2, 3, "unknown identifier 'Real.mul_le_sin'"),
                Diagnostic::error(5, 3, "unknown identifier 'Real.mul_le_sin'"),
                Diagnostic::error(7, 3, "linarith failed to find a contradiction"),
            ],
            Default::default(),
            Duration::ZERO,
        );
        let rendered = search_routing(&report, &gateway);
        assert!(rendered.starts_with("### Search Results:"));
        assert!(rendered.contains("- Real.mul_le_sin : ∀ x, 0 ≤ x → x ≤ 1 → x * sin 1 ≤ sin x"));
        let searches = backend
            .calls()
            .iter()
            .filter(|c| matches!(c, crate::gateway::BackendCall::Search { .. }))
            .count();
        assert_eq!(searches, 1);
    }

    #[test]
    fn search_routing_empty_for_non_identifier_errors() {
        let gateway = Gateway::with_backend(Arc::new(ScriptedBackend::new()));
        let report = VerificationReport::new(
            Verdict::Invalid,
            vec![Diagnostic::error(2, 3, "linarith failed to find a contradiction")],
            Default::default(),
            Duration::ZERO,
        );
        assert_eq!(search_routing(&report, &gateway), "");
    }
}
