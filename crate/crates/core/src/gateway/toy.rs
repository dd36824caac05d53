//! A miniature tactic checker with Lean-shaped diagnostics.
//!
//! Supports `exact`/`apply` over a finite hypothesis environment, `sorry`,
//! nested `have`/`replace`, `let` bindings, and `rfl`. `calc` and `choose`
//! blocks always fail, which is enough to drive every patching strategy.
//! Diagnostics use Lean's positions and phrasing so the sorrifier exercises
//! real branch logic without a Lean install.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use crate::document::{LineIndex, Position};
use crate::gateway::{Diagnostic, GoalState, Severity, Verdict, VerificationReport};

const TYPE_NAMES: &[&str] = &[
    "Nat", "Int", "Real", "Rat", "Bool", "Prop", "ℕ", "ℤ", "ℝ", "ℚ", "True", "False",
];

#[derive(Debug, Clone)]
struct Binder {
    name: String,
    ty: String,
}

#[derive(Debug, Clone)]
struct LemmaSig {
    binders: Vec<Binder>,
    conclusion: String,
}

#[derive(Debug, Clone, Copy)]
struct BodyLine<'a> {
    line: usize,
    indent: usize,
    /// Column of the first non-space character, 1-based.
    col: usize,
    content: &'a str,
}

struct Checker<'a> {
    lemmas: HashMap<String, LemmaSig>,
    diagnostics: Vec<Diagnostic>,
    /// Goal states at `sorry` sites of the final declaration, in order.
    final_sorries: Vec<GoalState>,
    any_sorry: bool,
    in_final_decl: bool,
    text: &'a str,
}

/// Check a whole source text: every column-0 `lemma`/`theorem` declaration in
/// order, each usable by later declarations.
pub fn toy_check(code: &str) -> VerificationReport {
    let started = Instant::now();
    let mut checker = Checker {
        lemmas: HashMap::new(),
        diagnostics: Vec::new(),
        final_sorries: Vec::new(),
        any_sorry: false,
        in_final_decl: false,
        text: code,
    };
    if code.contains('\t') {
        checker.diagnostics.push(Diagnostic::error(
            1,
            1,
            "unexpected token; tab characters are not supported",
        ));
    } else {
        checker.run();
    }
    let has_errors = checker
        .diagnostics
        .iter()
        .any(|d| d.severity == Severity::Error);
    let verdict = if has_errors {
        Verdict::Invalid
    } else if checker.any_sorry {
        Verdict::ValidWithSorries
    } else {
        Verdict::Valid
    };
    let goal_states: BTreeMap<usize, GoalState> = if has_errors {
        BTreeMap::new()
    } else {
        checker.final_sorries.into_iter().enumerate().collect()
    };
    VerificationReport::new(verdict, checker.diagnostics, goal_states, started.elapsed())
}

impl<'a> Checker<'a> {
    fn run(&mut self) {
        let index = LineIndex::new(self.text);
        let decl_lines = decl_start_lines(self.text, &index);
        if decl_lines.is_empty() {
            self.diagnostics.push(Diagnostic::error(
                1,
                1,
                "unexpected token; expected 'theorem' or 'lemma'",
            ));
            return;
        }
        for (i, &start_line) in decl_lines.iter().enumerate() {
            let end_line = decl_lines
                .get(i + 1)
                .map(|&l| l - 1)
                .unwrap_or(index.line_count());
            self.in_final_decl = i + 1 == decl_lines.len();
            self.check_decl(&index, start_line, end_line);
        }
    }

    fn check_decl(&mut self, index: &LineIndex, start_line: usize, end_line: usize) {
        let lines: Vec<BodyLine> = (start_line..=end_line)
            .filter_map(|n| {
                let span = index.line_span(n)?;
                let raw = &self.text[span.start..span.end];
                let indent = raw.len() - raw.trim_start().len();
                let content = raw.trim();
                if content.is_empty() {
                    return None;
                }
                Some(BodyLine {
                    line: n,
                    indent,
                    col: indent + 1,
                    content,
                })
            })
            .collect();
        if lines.is_empty() {
            return;
        }
        let header_pos = Position::new(lines[0].line, 1);
        // Locate the `:= by` marker among the declaration lines.
        let Some((marker_line_idx, marker_col)) = find_marker(&lines, ":= by") else {
            self.diagnostics.push(Diagnostic {
                severity: Severity::Error,
                position: header_pos,
                end_position: None,
                message: "unexpected end of input; expected ':= by'".into(),
            });
            return;
        };
        let header_text: String = lines[..marker_line_idx]
            .iter()
            .map(|l| l.content)
            .chain(std::iter::once(
                lines[marker_line_idx].content[..marker_col].trim(),
            ))
            .collect::<Vec<_>>()
            .join(" ");
        let (name, binders, conclusion) = match parse_header(&header_text) {
            Ok(sig) => sig,
            Err(msg) => {
                self.diagnostics.push(Diagnostic {
                    severity: Severity::Error,
                    position: header_pos,
                    end_position: None,
                    message: msg,
                });
                return;
            }
        };
        // Well-formedness: identifiers in binder types and the goal must be
        // bound, a known type, a known lemma, or a literal.
        let mut bound: Vec<String> = Vec::new();
        for b in &binders {
            for ident in identifiers(&b.ty) {
                if !self.is_known(&ident, &bound) {
                    self.diagnostics.push(Diagnostic {
                        severity: Severity::Error,
                        position: header_pos,
                        end_position: None,
                        message: format!("unknown identifier '{ident}'"),
                    });
                }
            }
            bound.push(b.name.clone());
        }
        for ident in identifiers(&conclusion) {
            if !self.is_known(&ident, &bound) {
                self.diagnostics.push(Diagnostic {
                    severity: Severity::Error,
                    position: header_pos,
                    end_position: None,
                    message: format!("unknown identifier '{ident}'"),
                });
            }
        }

        let mut env: Vec<(String, String)> = binders
            .iter()
            .map(|b| (b.name.clone(), normalize(&b.ty)))
            .collect();
        let goal = normalize(&conclusion);

        // Body: payload after the marker plus the remaining lines.
        let marker_line = lines[marker_line_idx];
        let after = &marker_line.content[marker_col + ":= by".len()..];
        let payload = after.trim();
        let mut body: Vec<BodyLine> = Vec::new();
        let rest = &lines[marker_line_idx + 1..];
        if !payload.is_empty() {
            let payload_col = marker_line.col + marker_col + ":= by".len()
                + (after.len() - after.trim_start().len());
            let indent = rest.iter().map(|l| l.indent).min().unwrap_or(0);
            body.push(BodyLine {
                line: marker_line.line,
                indent,
                col: payload_col,
                content: payload,
            });
        }
        body.extend_from_slice(rest);

        let errors_before = self.error_count();
        let closed = self.run_body(&body, &mut env, &goal);
        if !closed && self.error_count() == errors_before {
            self.diagnostics.push(Diagnostic {
                severity: Severity::Error,
                position: header_pos,
                end_position: None,
                message: format!("unsolved goals\n⊢ {goal}"),
            });
        }
        // The declaration enters the global environment even when its body
        // erred or contains sorries, mirroring Lean's recovery.
        self.lemmas.insert(
            name,
            LemmaSig {
                binders,
                conclusion: goal,
            },
        );
    }

    fn error_count(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .count()
    }

    fn is_known(&self, ident: &str, bound: &[String]) -> bool {
        TYPE_NAMES.contains(&ident)
            || bound.iter().any(|b| b == ident)
            || self.lemmas.contains_key(ident)
            || matches!(ident, "Eq" | "trans" | "symm")
    }

    /// Interpret sibling tactics at the indentation of the first line.
    /// Returns whether the goal was closed (errors count as closed, mirroring
    /// Lean's per-tactic recovery, which is what keeps cascades local).
    fn run_body(&mut self, lines: &[BodyLine], env: &mut Vec<(String, String)>, goal: &str) -> bool {
        if lines.is_empty() {
            return false;
        }
        let base = lines[0].indent;
        let mut closed = false;
        let mut i = 0;
        while i < lines.len() {
            let line = lines[i];
            if line.indent > base {
                // Stray continuation; attached to the previous sibling.
                i += 1;
                continue;
            }
            let mut end = i + 1;
            while end < lines.len() && lines[end].indent > base {
                end += 1;
            }
            let sibling = &lines[i..end];
            closed = self.run_tactic(sibling, env, goal, closed);
            i = end;
        }
        closed
    }

    fn run_tactic(
        &mut self,
        sibling: &[BodyLine],
        env: &mut Vec<(String, String)>,
        goal: &str,
        closed: bool,
    ) -> bool {
        let head_line = sibling[0];
        let pos = Position::new(head_line.line, head_line.col);
        let mut content = head_line.content;
        // Focus markers keep the tactic position.
        loop {
            if let Some(rest) = content.strip_prefix("· ") {
                content = rest.trim_start();
            } else if let Some(rest) = content.strip_prefix(". ") {
                content = rest.trim_start();
            } else {
                break;
            }
        }
        let word = content
            .split_whitespace()
            .next()
            .unwrap_or("");
        match word {
            "sorry" => {
                if closed {
                    self.push_error(pos, "no goals to be solved");
                } else {
                    self.any_sorry = true;
                    if self.in_final_decl {
                        self.final_sorries.push(GoalState {
                            hypotheses: env.clone(),
                            goal: goal.to_string(),
                        });
                    }
                }
                true
            }
            "have" | "replace" => {
                self.run_have(sibling, content, env, pos, word == "replace");
                closed
            }
            "let" => {
                self.run_let(sibling, content, env, pos);
                closed
            }
            "calc" => {
                if closed {
                    self.push_error(pos, "no goals to be solved");
                } else {
                    self.push_error(pos, format!("calc failed to prove the goal\n⊢ {goal}"));
                }
                true
            }
            "choose" => {
                self.push_error(pos, "choose failed to produce witnesses");
                true
            }
            "exact" | "apply" => {
                if closed {
                    self.push_error(pos, "no goals to be solved");
                    return true;
                }
                let term = content[word.len()..].trim();
                match self.resolve_term(term, env) {
                    Ok(ty) if ty == goal => {}
                    Ok(ty) => {
                        self.push_error(
                            pos,
                            format!(
                                "Type mismatch\n  {term}\nhas type\n  {ty}\nbut is expected to have type\n  {goal}"
                            ),
                        );
                    }
                    Err(msg) => self.push_error(pos, msg),
                }
                true
            }
            "rfl" => {
                if closed {
                    self.push_error(pos, "no goals to be solved");
                    return true;
                }
                let trivially_equal = goal
                    .split_once('=')
                    .map(|(l, r)| l.trim() == r.trim())
                    .unwrap_or(false);
                if !trivially_equal {
                    self.push_error(pos, format!("rfl failed to prove the goal\n⊢ {goal}"));
                }
                true
            }
            "trivial" => {
                if closed {
                    self.push_error(pos, "no goals to be solved");
                } else if goal != "True" {
                    self.push_error(pos, format!("trivial failed to close the goal\n⊢ {goal}"));
                }
                true
            }
            "linarith" | "nlinarith" => {
                if closed {
                    self.push_error(pos, "no goals to be solved");
                } else {
                    self.push_error(pos, format!("{word} failed to find a contradiction"));
                }
                true
            }
            "" => closed,
            other => {
                self.push_error(pos, format!("unexpected token '{other}'; expected tactic"));
                true
            }
        }
    }

    fn run_have(
        &mut self,
        sibling: &[BodyLine],
        head_content: &str,
        env: &mut Vec<(String, String)>,
        pos: Position,
        is_replace: bool,
    ) {
        // Reconstruct the full sibling text to locate `:= by` and the stated
        // type, which may span continuation lines.
        let joined: String = std::iter::once(head_content)
            .chain(sibling[1..].iter().map(|l| l.content.trim()))
            .collect::<Vec<_>>()
            .join(" ");
        let (label, ty, body_kind) = match parse_have_head(&joined) {
            Ok(v) => v,
            Err(msg) => {
                self.push_error(pos, msg);
                return;
            }
        };
        let ty = normalize(&ty);
        match body_kind {
            HaveBody::Term(term) => {
                match self.resolve_term(term.trim(), env) {
                    Ok(t) if t == ty => {}
                    Ok(t) => self.push_error(
                        pos,
                        format!(
                            "Type mismatch\n  {term}\nhas type\n  {t}\nbut is expected to have type\n  {ty}"
                        ),
                    ),
                    Err(msg) => self.push_error(pos, msg),
                }
            }
            HaveBody::Tactic => {
                // Body lines: same-line payload after `:= by` plus deeper
                // continuation lines after the marker line.
                let (marker_line_idx, marker_col) =
                    find_marker(sibling, ":= by").expect("parse_have_head saw the marker");
                let marker_line = sibling[marker_line_idx];
                let after = &marker_line.content[marker_col + ":= by".len()..];
                let payload = after.trim();
                let mut body: Vec<BodyLine> = Vec::new();
                let rest = &sibling[marker_line_idx + 1..];
                if !payload.is_empty() {
                    let payload_col = marker_line.col + marker_col + ":= by".len()
                        + (after.len() - after.trim_start().len());
                    let indent = rest
                        .iter()
                        .map(|l| l.indent)
                        .min()
                        .unwrap_or(0);
                    body.push(BodyLine {
                        line: marker_line.line,
                        indent,
                        col: payload_col,
                        content: payload,
                    });
                }
                body.extend_from_slice(rest);
                let mut inner_env = env.clone();
                let errors_before = self.error_count();
                let closed = self.run_body(&body, &mut inner_env, &ty);
                if !closed && self.error_count() == errors_before {
                    self.push_error(pos, format!("unsolved goals\n⊢ {ty}"));
                }
            }
        }
        let label = label.unwrap_or_else(|| "this".to_string());
        if is_replace {
            if let Some(entry) = env.iter_mut().find(|(n, _)| *n == label) {
                entry.1 = ty;
                return;
            }
        }
        env.push((label, ty));
    }

    fn run_let(
        &mut self,
        sibling: &[BodyLine],
        head_content: &str,
        env: &mut Vec<(String, String)>,
        pos: Position,
    ) {
        let joined: String = std::iter::once(head_content)
            .chain(sibling[1..].iter().map(|l| l.content.trim()))
            .collect::<Vec<_>>()
            .join(" ");
        if joined.contains(":= by") {
            // `let x : t := by ...` behaves like `have` for checking purposes.
            self.run_have(sibling, head_content, env, pos, false);
            return;
        }
        // `let x := e` registers the name without further checking.
        let after = joined.trim_start_matches("let").trim();
        let name = after
            .split(|c: char| c == ':' || c.is_whitespace())
            .next()
            .unwrap_or("");
        if name.is_empty() || !crate::document::is_identifier(name) {
            self.push_error(pos, "unexpected token; expected identifier after 'let'");
            return;
        }
        let value = after.split_once(":=").map(|(_, v)| v.trim()).unwrap_or("");
        env.push((name.to_string(), normalize(value)));
    }

    fn resolve_term(&self, term: &str, env: &[(String, String)]) -> Result<String, String> {
        let mut parts = term.split_whitespace();
        let head = parts.next().ok_or("unexpected token; expected term")?;
        let args: Vec<&str> = parts.collect();
        if let Some((_, ty)) = env.iter().find(|(n, _)| n == head) {
            if args.is_empty() {
                return Ok(ty.clone());
            }
            return Err(format!("function expected at\n  {head}"));
        }
        match head {
            "Eq.trans" => {
                let [a, b] = args[..] else {
                    return Err("Eq.trans failed to elaborate: expected two arguments".into());
                };
                let ta = self.arg_type(a, env)?;
                let tb = self.arg_type(b, env)?;
                let (x, y1) = split_eq(&ta)
                    .ok_or_else(|| format!("Eq.trans failed to elaborate: '{a}' is not an equality"))?;
                let (y2, z) = split_eq(&tb)
                    .ok_or_else(|| format!("Eq.trans failed to elaborate: '{b}' is not an equality"))?;
                if y1 != y2 {
                    return Err(format!(
                        "Type mismatch\n  {b}\nhas type\n  {tb}\nbut is expected to have type\n  {y1} = ?"
                    ));
                }
                Ok(format!("{x} = {z}"))
            }
            "Eq.symm" => {
                let [a] = args[..] else {
                    return Err("Eq.symm failed to elaborate: expected one argument".into());
                };
                let ta = self.arg_type(a, env)?;
                let (x, y) = split_eq(&ta)
                    .ok_or_else(|| format!("Eq.symm failed to elaborate: '{a}' is not an equality"))?;
                Ok(format!("{y} = {x}"))
            }
            _ => {
                let sig = self
                    .lemmas
                    .get(head)
                    .ok_or_else(|| format!("unknown identifier '{head}'"))?;
                self.apply_lemma(head, sig, &args, env)
            }
        }
    }

    fn arg_type(&self, arg: &str, env: &[(String, String)]) -> Result<String, String> {
        if let Some((_, ty)) = env.iter().find(|(n, _)| n == arg) {
            return Ok(ty.clone());
        }
        if arg.chars().all(|c| c.is_ascii_digit()) {
            return Ok("Nat".into());
        }
        Err(format!("unknown identifier '{arg}'"))
    }

    fn apply_lemma(
        &self,
        name: &str,
        sig: &LemmaSig,
        args: &[&str],
        env: &[(String, String)],
    ) -> Result<String, String> {
        if args.len() != sig.binders.len() {
            return Err(format!(
                "application failed to elaborate: '{name}' expects {} argument(s), got {}",
                sig.binders.len(),
                args.len()
            ));
        }
        let mut subst: HashMap<String, String> = HashMap::new();
        for (binder, arg) in sig.binders.iter().zip(args) {
            let expected = subst_idents(&binder.ty, &subst);
            if TYPE_NAMES.contains(&expected.as_str()) {
                // Variable binder: the argument stands for a term of a base
                // type.
                let actual = self.arg_type(arg, env)?;
                if actual != expected {
                    return Err(format!(
                        "Type mismatch\n  {arg}\nhas type\n  {actual}\nbut is expected to have type\n  {expected}"
                    ));
                }
                subst.insert(binder.name.clone(), arg.to_string());
            } else {
                let actual = self.arg_type(arg, env)?;
                if normalize(&actual) != normalize(&expected) {
                    return Err(format!(
                        "Type mismatch\n  {arg}\nhas type\n  {actual}\nbut is expected to have type\n  {expected}"
                    ));
                }
                subst.insert(binder.name.clone(), arg.to_string());
            }
        }
        Ok(subst_idents(&sig.conclusion, &subst))
    }

    fn push_error(&mut self, pos: Position, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            position: pos,
            end_position: None,
            message: message.into(),
        });
    }
}

enum HaveBody<'a> {
    Tactic,
    Term(&'a str),
}

/// `have [label] : <type> := by` or `have [label] : <type> := <term>`.
fn parse_have_head(joined: &str) -> Result<(Option<String>, String, HaveBody<'_>), String> {
    let after_kw = joined
        .split_once(char::is_whitespace)
        .map(|(_, r)| r.trim_start())
        .ok_or("unexpected end of input after 'have'")?;
    let (head, tail) = match after_kw.find(":=") {
        Some(i) => (&after_kw[..i], &after_kw[i + 2..]),
        None => return Err("unexpected end of input; expected ':=' in 'have'".into()),
    };
    let (label_part, ty) = head
        .split_once(':')
        .ok_or("unexpected token; expected ':' in 'have'")?;
    let label = label_part
        .trim()
        .split_whitespace()
        .next()
        .filter(|w| crate::document::is_identifier(w))
        .map(str::to_string);
    let ty = ty.trim().to_string();
    if ty.is_empty() {
        return Err("unexpected token; expected type after ':'".into());
    }
    let tail = tail.trim_start();
    if tail == "by" || tail.starts_with("by ") || tail.is_empty() {
        Ok((label, ty, HaveBody::Tactic))
    } else {
        Ok((label, ty, HaveBody::Term(tail)))
    }
}

/// `theorem <name> (binders)* : <goal>` with `:= by` already stripped.
fn parse_header(header: &str) -> Result<(String, Vec<Binder>, String), String> {
    let mut rest = header.trim();
    for kw in ["theorem", "lemma", "example"] {
        if let Some(r) = rest.strip_prefix(kw) {
            rest = r.trim_start();
            break;
        }
    }
    let name_len = rest
        .find(|c: char| c.is_whitespace() || c == '(' || c == ':')
        .unwrap_or(rest.len());
    let name = rest[..name_len].to_string();
    if name.is_empty() {
        return Err("unexpected token; expected declaration name".into());
    }
    let mut rest = rest[name_len..].trim_start();
    let mut binders = Vec::new();
    loop {
        if let Some(stripped) = rest.strip_prefix('(') {
            let close = matching_paren(stripped)
                .ok_or("unexpected end of input; unbalanced '('")?;
            let group = &stripped[..close];
            let (names, ty) = group
                .split_once(':')
                .ok_or("unexpected token; expected ':' in binder group")?;
            for n in names.split_whitespace() {
                binders.push(Binder {
                    name: n.to_string(),
                    ty: ty.trim().to_string(),
                });
            }
            rest = stripped[close + 1..].trim_start();
        } else if let Some(goal) = rest.strip_prefix(':') {
            let goal = goal.trim();
            if goal.is_empty() {
                return Err("unexpected token; expected goal after ':'".into());
            }
            return Ok((name, binders, goal.to_string()));
        } else {
            return Err(format!(
                "unexpected token '{}'; expected binder or ':'",
                rest.chars().next().map(String::from).unwrap_or_default()
            ));
        }
    }
}

fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 1;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn split_eq(ty: &str) -> Option<(String, String)> {
    let (l, r) = ty.split_once('=')?;
    Some((l.trim().to_string(), r.trim().to_string()))
}

/// Replace identifier tokens per the substitution map, leaving punctuation
/// and unmapped tokens untouched.
fn subst_idents(s: &str, subst: &HashMap<String, String>) -> String {
    let mut out = String::with_capacity(s.len());
    let mut token = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || c == '_' || c == '\'' || c == '.' {
            token.push(c);
        } else {
            if !token.is_empty() {
                out.push_str(subst.get(&token).unwrap_or(&token));
                token.clear();
            }
            out.push(c);
        }
    }
    if !token.is_empty() {
        out.push_str(subst.get(&token).unwrap_or(&token));
    }
    out
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identifier tokens of a type expression.
fn identifiers(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || c == '_' || c == '\'' || c == '.' {
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
    // Qualified names count as single known constants.
    out.into_iter()
        .map(|t| t.split('.').next().unwrap_or(&t).to_string())
        .collect()
}

/// 1-based line numbers of column-0 declaration keywords.
fn decl_start_lines(text: &str, index: &LineIndex) -> Vec<usize> {
    let mut lines = Vec::new();
    for n in 1..=index.line_count() {
        let Some(span) = index.line_span(n) else { continue };
        let raw = &text[span.start..span.end];
        for kw in ["theorem ", "lemma ", "example "] {
            if raw.starts_with(kw) {
                lines.push(n);
                break;
            }
        }
    }
    lines
}

/// First occurrence of `needle` across lines; returns (line index, byte index
/// within the content of that line).
fn find_marker(lines: &[BodyLine], needle: &str) -> Option<(usize, usize)> {
    for (i, l) in lines.iter().enumerate() {
        if let Some(j) = l.content.find(needle) {
            return Some((i, j));
        }
    }
    None
}
