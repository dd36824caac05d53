//! Iterative error patching: turn a broken proof into one that is valid
//! modulo `sorry` by localizing each primary error to its innermost block
//! and replacing the offending region with `sorry`.

use thiserror::Error;

use crate::document::{innermost, BlockKind, DocumentError, Position, ProofDocument, Span};
use crate::gateway::{Diagnostic, Gateway, GatewayError, Verdict, VerificationReport};

pub const DEFAULT_MAX_ITERATIONS: usize = 32;

/// One planned edit, fully determined by the document and the primary error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatchAction {
    /// Replace the proof body of a block with `sorry`.
    ReplaceProofBody { body: Span },
    /// Replace a whole block; the replacement restates a recoverable
    /// `have`-style header so the hypothesis stays available.
    ReplaceEntireBlock { block: Span, replacement: String },
    /// No enclosing block: drop the error line and the rest of the body,
    /// appending `sorry`.
    TruncateLine { position: Position },
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub error: Diagnostic,
    pub action: PatchAction,
}

#[derive(Debug, Clone)]
pub struct SorrifyOutcome {
    pub document: ProofDocument,
    /// True iff the final document is valid modulo `sorry`.
    pub success: bool,
    pub iterations: Vec<IterationRecord>,
    pub last_report: Option<VerificationReport>,
}

#[derive(Debug, Error)]
pub enum SorrifyError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Document(#[from] DocumentError),
}

/// The error to patch first: the earliest error diagnostic by position.
/// Reports keep diagnostics sorted, so this is the first error entry.
pub fn select_primary_error(report: &VerificationReport) -> Option<&Diagnostic> {
    report.errors().next()
}

/// Decide how to patch the document given its primary error.
pub fn plan_patch(doc: &ProofDocument, error: &Diagnostic) -> PatchAction {
    let forest = doc.parse_blocks();
    let containing = forest.containing_line(error.position.line);
    let Ok(block) = innermost(&containing) else {
        return PatchAction::TruncateLine {
            position: error.position,
        };
    };
    let replace_whole = matches!(block.kind, BlockKind::Calc | BlockKind::Choose)
        || block.body_span.map(|b| b.is_empty()).unwrap_or(true);
    if replace_whole {
        let replacement = match (&block.label, &block.stated_type) {
            // Restating the binding keeps later references to the label valid.
            (Some(label), Some(ty)) if block.kind != BlockKind::Calc => {
                format!("have {label} : {ty} := by sorry")
            }
            _ => "sorry".to_string(),
        };
        PatchAction::ReplaceEntireBlock {
            block: block.span,
            replacement,
        }
    } else {
        PatchAction::ReplaceProofBody {
            body: block.body_span.expect("checked above"),
        }
    }
}

pub fn apply_patch(
    doc: &ProofDocument,
    action: &PatchAction,
) -> Result<ProofDocument, DocumentError> {
    match action {
        PatchAction::ReplaceProofBody { body } => doc.replace_span(*body, "sorry"),
        PatchAction::ReplaceEntireBlock { block, replacement } => {
            doc.replace_span(*block, replacement)
        }
        PatchAction::TruncateLine { position } => doc.truncate_line_and_append_sorry(*position),
    }
}

/// Algorithm: clean up after sorries, verify, and patch the primary error,
/// until the document is valid modulo `sorry`, the patch budget runs out, or
/// a patch no longer changes the text.
pub fn sorrify(
    doc: &ProofDocument,
    gateway: &Gateway,
    max_iterations: usize,
) -> Result<SorrifyOutcome, SorrifyError> {
    let mut current = doc.clone();
    let mut iterations = Vec::new();
    let mut last_report = None;
    for _ in 0..max_iterations.max(1) {
        current = current.cleanup_after_sorry();
        let report = gateway.verify(&current)?;
        let verdict = report.verdict;
        let done = verdict.is_valid_modulo_sorry();
        let stuck = verdict == Verdict::Timeout || !report.has_errors();
        if done || stuck {
            return Ok(SorrifyOutcome {
                document: current,
                success: done,
                iterations,
                last_report: Some(report),
            });
        }
        let error = select_primary_error(&report)
            .expect("invalid verdict implies an error diagnostic")
            .clone();
        last_report = Some(report);
        let action = plan_patch(&current, &error);
        let next = apply_patch(&current, &action)?;
        let unchanged = next.text() == current.text();
        iterations.push(IterationRecord { error, action });
        if unchanged {
            return Ok(SorrifyOutcome {
                document: current,
                success: false,
                iterations,
                last_report,
            });
        }
        current = next;
    }
    Ok(SorrifyOutcome {
        document: current,
        success: false,
        iterations,
        last_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use std::sync::Arc;

    const FIGURE3_BROKEN: &str = "theorem eq_trans (a b c : Nat)\n  (h1 : a = b) (h2 : b = c) :\n  a = c := by\n  have step1 : a = b := by\n    exact h1\n  have step2 : b = c := by\n    exact h1\n  have step3 : a = c := by\n    exact Eq.trans step1 step2\n  exact step3\n";

    const FIGURE3_SORRIED: &str = "theorem eq_trans (a b c : Nat)\n  (h1 : a = b) (h2 : b = c) :\n  a = c := by\n  have step1 : a = b := by\n    exact h1\n  have step2 : b = c := by\n    sorry\n  have step3 : a = c := by\n    exact Eq.trans step1 step2\n  exact step3\n";

    fn toy_gateway() -> Gateway {
        Gateway::with_backend(Arc::new(ScriptedBackend::new()))
    }

    #[test]
    fn figure3_sorrifies_in_one_patch() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let outcome = sorrify(&doc, &toy_gateway(), DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(outcome.success);
        assert_eq!(outcome.iterations.len(), 1);
        assert_eq!(outcome.document.text(), FIGURE3_SORRIED);
        assert!(matches!(
            outcome.iterations[0].action,
            PatchAction::ReplaceProofBody { .. }
        ));
    }

    #[test]
    fn valid_document_needs_no_patch() {
        let fixed = FIGURE3_BROKEN.replace("    exact h1\n  have step3", "    exact h2\n  have step3");
        let doc = ProofDocument::parse(fixed).unwrap();
        let outcome = sorrify(&doc, &toy_gateway(), DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(outcome.success);
        assert!(outcome.iterations.is_empty());
    }

    #[test]
    fn error_outside_blocks_truncates_line() {
        let doc = ProofDocument::parse(
            "theorem t (h : True) : True := by\n  exact missing\n",
        )
        .unwrap();
        let outcome = sorrify(&doc, &toy_gateway(), DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(outcome.success);
        assert_eq!(
            outcome.document.text(),
            "theorem t (h : True) : True := by\n  sorry\n"
        );
        assert!(matches!(
            outcome.iterations[0].action,
            PatchAction::TruncateLine { .. }
        ));
    }

    #[test]
    fn calc_block_replaced_wholesale() {
        let doc = ProofDocument::parse(
            "theorem t (a b : Nat) (h : a = b) : a = b := by\n  calc a = b := by\n    exact h\n",
        )
        .unwrap();
        let outcome = sorrify(&doc, &toy_gateway(), DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(outcome.success, "{:?}", outcome.last_report);
        assert_eq!(
            outcome.document.text(),
            "theorem t (a b : Nat) (h : a = b) : a = b := by\n  sorry\n"
        );
        assert!(matches!(
            outcome.iterations[0].action,
            PatchAction::ReplaceEntireBlock { .. }
        ));
    }

    #[test]
    fn statement_error_terminates_without_success() {
        // The goal itself is ill-formed; no patch can help and the loop must
        // stop on the no-change guard.
        let doc = ProofDocument::parse("theorem t (a : Nat) : a = d := by\n  sorry\n").unwrap();
        let outcome = sorrify(&doc, &toy_gateway(), DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(!outcome.success);
    }

    #[test]
    fn iteration_budget_bounds_work() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let outcome = sorrify(&doc, &toy_gateway(), 1).unwrap();
        // One iteration only patches; success requires the follow-up verify.
        assert!(!outcome.success);
        assert_eq!(outcome.iterations.len(), 1);
    }
}
