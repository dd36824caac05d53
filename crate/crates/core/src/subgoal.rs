//! Turning goal states at `sorry` sites into standalone lemma statements,
//! and splicing proven lemmas back into the parent proof.

use thiserror::Error;

use crate::document::{DocumentError, ProofDocument, Span};
use crate::gateway::{Gateway, GatewayError, GoalState};

/// Base types whose inhabitants are treated as variables rather than
/// hypotheses when binders are reconstructed.
const BASE_TYPES: &[&str] = &[
    "Nat", "Int", "Real", "Rat", "Bool", "Prop", "ℕ", "ℤ", "ℝ", "ℚ",
];

pub fn is_base_type(ty: &str) -> bool {
    BASE_TYPES.contains(&ty.trim())
}

/// Deterministic child lemma name: parent name, underscore, site index.
pub fn mangle_name(parent: &str, site_index: usize) -> String {
    format!("{parent}_{site_index}")
}

/// A lemma statement extracted from one `sorry` site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgoal {
    pub name: String,
    pub site_index: usize,
    /// Full statement line ending in `:= by`.
    pub statement: String,
    /// Binder names in order; these double as application arguments at the
    /// original site, where they denote the same objects.
    pub binder_names: Vec<String>,
    pub goal_state: GoalState,
}

/// Hypothesis names to keep, given the reasoner's proposal. Unknown names are
/// dropped; an empty or missing proposal keeps every hypothesis, which is
/// always sound.
pub fn select_hypotheses(state: &GoalState, proposal: Option<&str>) -> Vec<String> {
    let candidates: Vec<&str> = state
        .hypotheses
        .iter()
        .filter(|(_, ty)| !is_base_type(ty))
        .map(|(n, _)| n.as_str())
        .collect();
    if let Some(text) = proposal {
        let mut kept: Vec<String> = Vec::new();
        for token in identifier_tokens(text) {
            if candidates.contains(&token.as_str()) && !kept.contains(&token) {
                kept.push(token);
            }
        }
        if !kept.is_empty() {
            return kept;
        }
    }
    candidates.into_iter().map(str::to_string).collect()
}

/// Build the standalone statement for a goal state, keeping the named
/// hypotheses plus every variable they or the goal mention.
pub fn extract_subgoal(
    parent_name: &str,
    site_index: usize,
    state: &GoalState,
    kept_hypotheses: &[String],
) -> Subgoal {
    let name = mangle_name(parent_name, site_index);
    let kept: Vec<(&str, &str)> = state
        .hypotheses
        .iter()
        .filter(|(n, _)| kept_hypotheses.iter().any(|k| k == n))
        .map(|(n, t)| (n.as_str(), t.as_str()))
        .collect();

    // Variables referenced by the kept hypotheses or the goal, in order of
    // first occurrence across the hypothesis types and the goal.
    let mut used: Vec<(&str, &str)> = Vec::new();
    for text in kept
        .iter()
        .map(|(_, t)| *t)
        .chain(std::iter::once(state.goal.as_str()))
    {
        for token in identifier_tokens(text) {
            let var = state
                .hypotheses
                .iter()
                .find(|(n, ty)| *n == token && is_base_type(ty));
            if let Some((n, t)) = var {
                if !used.iter().any(|(u, _)| *u == n.as_str()) {
                    used.push((n.as_str(), t.as_str()));
                }
            }
        }
    }

    let mut binders: Vec<String> = Vec::new();
    let mut binder_names: Vec<String> = Vec::new();
    // Consecutive variables of one type share a binder group.
    let mut i = 0;
    while i < used.len() {
        let ty = used[i].1;
        let mut names = vec![used[i].0];
        while i + 1 < used.len() && used[i + 1].1 == ty {
            i += 1;
            names.push(used[i].0);
        }
        binder_names.extend(names.iter().map(|n| n.to_string()));
        binders.push(format!("({} : {ty})", names.join(" ")));
        i += 1;
    }
    for (n, t) in &kept {
        binders.push(format!("({n} : {t})"));
        binder_names.push(n.to_string());
    }

    let statement = format!(
        "lemma {name} {} : {} := by",
        binders.join(" "),
        state.goal
    );
    Subgoal {
        name,
        site_index,
        statement,
        binder_names,
        goal_state: state.clone(),
    }
}

/// A statement is syntactically valid when the compiler accepts it with a
/// `sorry` body.
pub fn validate_syntactic(gateway: &Gateway, subgoal: &Subgoal) -> Result<bool, GatewayError> {
    let probe = format!("{}\n  sorry\n", subgoal.statement);
    let report = gateway.verify_text(&probe)?;
    Ok(report.verdict.is_valid_modulo_sorry())
}

/// The verifier's judgement of an extracted subgoal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticVerdict {
    Sound,
    ExtractionMismatch,
    LogicallyFlawed,
}

/// Read the last verdict tag out of a free-form verifier response. An
/// unparsable response counts as sound with low confidence, so the pipeline
/// proceeds rather than discarding work on noise.
pub fn parse_semantic_verdict(response: &str) -> (SemanticVerdict, bool) {
    let lower = response.to_ascii_lowercase();
    let tags = [
        ("logically_flawed", SemanticVerdict::LogicallyFlawed),
        ("extraction_mismatch", SemanticVerdict::ExtractionMismatch),
        ("sound", SemanticVerdict::Sound),
    ];
    let mut best: Option<(usize, SemanticVerdict)> = None;
    for (tag, verdict) in tags {
        if let Some(i) = lower.rfind(tag) {
            if best.map(|(j, _)| i > j).unwrap_or(true) {
                best = Some((i, verdict));
            }
        }
    }
    match best {
        Some((_, v)) => (v, true),
        None => (SemanticVerdict::Sound, false),
    }
}

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("sorry site {0} no longer exists in the document")]
    SiteVanished(usize),
    #[error(transparent)]
    Document(#[from] DocumentError),
}

/// Splices proven child lemmas back into the parent, in any order. Site
/// indices are those of the document given at construction; the assembler
/// compensates for sorries removed by earlier splices.
pub struct Assembler {
    doc: ProofDocument,
    original_sites: usize,
    assembled: Vec<usize>,
}

impl Assembler {
    pub fn new(doc: ProofDocument) -> Self {
        let original_sites = doc.list_sorry_sites().len();
        Assembler {
            doc,
            original_sites,
            assembled: Vec::new(),
        }
    }

    pub fn document(&self) -> &ProofDocument {
        &self.doc
    }

    pub fn into_document(self) -> ProofDocument {
        self.doc
    }

    /// Replace the site's `sorry` with an application of the lemma and
    /// prepend the lemma's full text (including its own prepended lemmas).
    pub fn assemble(
        &mut self,
        subgoal: &Subgoal,
        lemma_text: &str,
    ) -> Result<(), AssembleError> {
        let original = subgoal.site_index;
        if original >= self.original_sites || self.assembled.contains(&original) {
            return Err(AssembleError::SiteVanished(original));
        }
        let current = original - self.assembled.iter().filter(|&&i| i < original).count();
        let sites = self.doc.list_sorry_sites();
        let site = sites
            .get(current)
            .ok_or(AssembleError::SiteVanished(original))?;
        let offset = self
            .doc
            .line_index()
            .offset(site.position)
            .ok_or(AssembleError::SiteVanished(original))?;
        let span = Span::new(offset, offset + "sorry".len());
        if &self.doc.text()[span.start..span.end] != "sorry" {
            return Err(AssembleError::SiteVanished(original));
        }
        let call = if subgoal.binder_names.is_empty() {
            format!("exact {}", subgoal.name)
        } else {
            format!("exact {} {}", subgoal.name, subgoal.binder_names.join(" "))
        };
        let patched = self.doc.replace_span(span, &call)?;
        let mut text = String::with_capacity(lemma_text.len() + patched.text().len() + 2);
        text.push_str(lemma_text.trim_end());
        text.push_str("\n\n");
        text.push_str(patched.text());
        self.doc = ProofDocument::parse(text)?;
        self.assembled.push(original);
        Ok(())
    }
}

fn identifier_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || c == '_' || c == '\'' {
            current.push(c);
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out.retain(|t| {
        t.chars()
            .next()
            .map(|c| c.is_alphabetic() || c == '_')
            .unwrap_or(false)
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use std::sync::Arc;

    fn figure3_state() -> GoalState {
        GoalState {
            hypotheses: vec![
                ("a".into(), "Nat".into()),
                ("b".into(), "Nat".into()),
                ("c".into(), "Nat".into()),
                ("h1".into(), "a = b".into()),
                ("h2".into(), "b = c".into()),
                ("step1".into(), "a = b".into()),
            ],
            goal: "b = c".into(),
        }
    }

    #[test]
    fn figure3_extraction_matches_expected_statement() {
        let state = figure3_state();
        let kept = select_hypotheses(&state, Some("We only need h2 to conclude."));
        assert_eq!(kept, ["h2"]);
        let subgoal = extract_subgoal("eq_trans", 0, &state, &kept);
        assert_eq!(
            subgoal.statement,
            "lemma eq_trans_0 (b c : Nat) (h2 : b = c) : b = c := by"
        );
        assert_eq!(subgoal.binder_names, ["b", "c", "h2"]);
    }

    #[test]
    fn garbage_proposal_keeps_all_hypotheses() {
        let state = figure3_state();
        let kept = select_hypotheses(&state, Some("no usable names here!!"));
        assert_eq!(kept, ["h1", "h2", "step1"]);
        let kept = select_hypotheses(&state, None);
        assert_eq!(kept, ["h1", "h2", "step1"]);
    }

    #[test]
    fn variable_grouping_spans_consecutive_same_type() {
        let state = GoalState {
            hypotheses: vec![
                ("a".into(), "Nat".into()),
                ("x".into(), "Int".into()),
                ("b".into(), "Nat".into()),
                ("h".into(), "a = b".into()),
            ],
            goal: "a = b".into(),
        };
        let subgoal = extract_subgoal("t", 2, &state, &["h".to_string()]);
        // `x` is unused and dropped; `a` and `b` are non-adjacent after the
        // drop and still group because they become consecutive.
        assert_eq!(
            subgoal.statement,
            "lemma t_2 (a b : Nat) (h : a = b) : a = b := by"
        );
    }

    #[test]
    fn syntactic_validation_accepts_wellformed_and_rejects_unbound() {
        let gateway = Gateway::with_backend(Arc::new(ScriptedBackend::new()));
        let state = figure3_state();
        let good = extract_subgoal("eq_trans", 0, &state, &["h2".to_string()]);
        assert!(validate_syntactic(&gateway, &good).unwrap());
        let mut bad = good.clone();
        bad.statement = "lemma eq_trans_0 (b c : Nat) (h2 : b = c) : b = d := by".into();
        assert!(!validate_syntactic(&gateway, &bad).unwrap());
    }

    #[test]
    fn semantic_verdict_parsing() {
        assert_eq!(
            parse_semantic_verdict("Verdict: sound"),
            (SemanticVerdict::Sound, true)
        );
        assert_eq!(
            parse_semantic_verdict("sound at first glance, but ultimately logically_flawed"),
            (SemanticVerdict::LogicallyFlawed, true)
        );
        assert_eq!(
            parse_semantic_verdict("the lemma drops h2: extraction_mismatch"),
            (SemanticVerdict::ExtractionMismatch, true)
        );
        assert_eq!(
            parse_semantic_verdict("no idea"),
            (SemanticVerdict::Sound, false)
        );
    }

    #[test]
    fn assemble_figure3() {
        let sorried = "theorem eq_trans (a b c : Nat)\n  (h1 : a = b) (h2 : b = c) :\n  a = c := by\n  have step1 : a = b := by\n    exact h1\n  have step2 : b = c := by\n    sorry\n  have step3 : a = c := by\n    exact Eq.trans step1 step2\n  exact step3\n";
        let doc = ProofDocument::parse(sorried).unwrap();
        let subgoal = extract_subgoal("eq_trans", 0, &figure3_state(), &["h2".to_string()]);
        let lemma_text = format!("{}\n  exact h2\n", subgoal.statement);
        let mut assembler = Assembler::new(doc);
        assembler.assemble(&subgoal, &lemma_text).unwrap();
        let out = assembler.into_document();
        assert!(out
            .text()
            .starts_with("lemma eq_trans_0 (b c : Nat) (h2 : b = c) : b = c := by\n  exact h2\n\ntheorem eq_trans"));
        assert!(out.text().contains("    exact eq_trans_0 b c h2\n"));
        assert!(!out.text().contains("sorry"));
        let gateway = Gateway::with_backend(Arc::new(ScriptedBackend::new()));
        let report = gateway.verify(&out).unwrap();
        assert_eq!(report.verdict, crate::gateway::Verdict::Valid);
    }

    #[test]
    fn assemble_out_of_order_sites() {
        let doc = ProofDocument::parse(
            "theorem t (p q : Prop) (hp : p) (hq : q) : q := by\n  have a : p := by\n    sorry\n  have b : q := by\n    sorry\n  exact b\n",
        )
        .unwrap();
        let state0 = GoalState {
            hypotheses: vec![("p".into(), "Prop".into()), ("hp".into(), "p".into())],
            goal: "p".into(),
        };
        let state1 = GoalState {
            hypotheses: vec![("q".into(), "Prop".into()), ("hq".into(), "q".into())],
            goal: "q".into(),
        };
        let sub0 = extract_subgoal("t", 0, &state0, &["hp".to_string()]);
        let sub1 = extract_subgoal("t", 1, &state1, &["hq".to_string()]);
        let mut assembler = Assembler::new(doc);
        // Later site first; indices still refer to the original document.
        assembler
            .assemble(&sub1, &format!("{}\n  exact hq\n", sub1.statement))
            .unwrap();
        assembler
            .assemble(&sub0, &format!("{}\n  exact hp\n", sub0.statement))
            .unwrap();
        let out = assembler.into_document();
        assert!(out.text().contains("exact t_0 p hp"));
        assert!(out.text().contains("exact t_1 q hq"));
        assert!(!out.text().contains("sorry"));
    }

    #[test]
    fn assemble_vanished_site_errors() {
        let doc =
            ProofDocument::parse("theorem t (h : True) : True := by\n  sorry\n").unwrap();
        let state = GoalState {
            hypotheses: vec![("h".into(), "True".into())],
            goal: "True".into(),
        };
        let sub = extract_subgoal("t", 3, &state, &["h".to_string()]);
        let mut assembler = Assembler::new(doc);
        let err = assembler
            .assemble(&sub, "lemma t_3 (h : True) : True := by\n  exact h\n")
            .unwrap_err();
        assert!(matches!(err, AssembleError::SiteVanished(3)));
    }
}
