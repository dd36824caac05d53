//! Lint for final proof documents: forbidden tactics at tactic position
//! (standalone tokens outside comments and strings) and statement-header
//! mutations against a reference statement.

use serde::Serialize;

use mechanic_core::ProofDocument;

const FORBIDDEN: &[&str] = &["sorry", "admit", "native_decide", "aesop"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Standalone occurrences of forbidden tactic tokens, skipping `--` line
/// comments, `/- -/` block comments (nested), and string literals.
pub fn scan_forbidden(text: &str) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut line = 1usize;
    let mut column = 1usize;
    let mut block_depth = 0usize;
    let mut in_line_comment = false;
    let mut in_string = false;
    let mut token = String::new();
    let mut token_pos = (0usize, 0usize);

    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' {
            flush(&mut token, token_pos, &mut findings);
            in_line_comment = false;
            in_string = false;
            line += 1;
            column = 1;
            continue;
        }
        if in_line_comment {
            column += 1;
            continue;
        }
        if block_depth > 0 {
            if c == '-' && chars.peek() == Some(&'/') {
                chars.next();
                block_depth -= 1;
                column += 2;
                continue;
            }
            if c == '/' && chars.peek() == Some(&'-') {
                chars.next();
                block_depth += 1;
                column += 2;
                continue;
            }
            column += 1;
            continue;
        }
        if in_string {
            if c == '\\' {
                chars.next();
                column += 2;
                continue;
            }
            if c == '"' {
                in_string = false;
            }
            column += 1;
            continue;
        }
        if c == '"' {
            flush(&mut token, token_pos, &mut findings);
            in_string = true;
            column += 1;
            continue;
        }
        if c == '-' && chars.peek() == Some(&'-') {
            flush(&mut token, token_pos, &mut findings);
            chars.next();
            in_line_comment = true;
            column += 2;
            continue;
        }
        if c == '/' && chars.peek() == Some(&'-') {
            flush(&mut token, token_pos, &mut findings);
            chars.next();
            block_depth += 1;
            column += 2;
            continue;
        }
        if c.is_alphanumeric() || c == '_' || c == '\'' {
            if token.is_empty() {
                token_pos = (line, column);
            }
            token.push(c);
        } else {
            flush(&mut token, token_pos, &mut findings);
        }
        column += 1;
    }
    flush(&mut token, token_pos, &mut findings);
    findings
}

fn flush(token: &mut String, pos: (usize, usize), findings: &mut Vec<Finding>) {
    if FORBIDDEN.contains(&token.as_str()) {
        findings.push(Finding {
            line: pos.0,
            column: pos.1,
            message: format!("forbidden tactic `{token}`"),
        });
    }
    token.clear();
}

/// Full lint: forbidden tokens, plus a header comparison when a reference
/// statement is given.
pub fn lint_document(text: &str, statement: Option<&str>) -> Vec<Finding> {
    let mut findings = scan_forbidden(text);
    if let Some(statement) = statement {
        let expected = statement
            .trim()
            .strip_suffix("sorry")
            .map(str::trim_end)
            .unwrap_or_else(|| statement.trim());
        match ProofDocument::parse(text.to_string()) {
            Ok(doc) if doc.header_text() != expected => findings.push(Finding {
                line: 1,
                column: 1,
                message: "statement header differs from the reference statement".into(),
            }),
            Ok(_) => {}
            Err(e) => findings.push(Finding {
                line: 1,
                column: 1,
                message: format!("document does not parse: {e}"),
            }),
        }
    }
    findings
}
