//! Lean 4 source modeled as an addressable text document.
//!
//! The document is split into a header (the theorem/lemma signature up to and
//! including `:= by`) and a tactic body. All mutating operations return new
//! values and refuse to touch the header. Block recognition is an
//! indentation-based scanner over the tactic body, not a Lean grammar.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open byte range into a document's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, offset: usize) -> bool {
        offset >= self.start && offset < self.end
    }

    pub fn contains_span(&self, other: Span) -> bool {
        other.start >= self.start && other.end <= self.end
    }

    pub fn intersects(&self, other: Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// 1-based line/column position, matching Lean compiler diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl Position {
    pub fn new(line: usize, column: usize) -> Self {
        Position { line, column }
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("malformed proof: no `theorem`/`lemma` declaration ending in `:= by`")]
    MalformedProof,
    #[error("normalization error: tab characters in indentation are not supported")]
    NormalizationError,
    #[error("operation would modify the immutable statement header")]
    HeaderViolation,
    #[error("position {0} is outside the proof body")]
    OutOfBounds(Position),
    #[error("empty block selection")]
    EmptySelection,
}

/// Offset ↔ (line, column) conversion table. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIndex {
    line_starts: Vec<usize>,
    len: usize,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut line_starts = vec![0];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        LineIndex {
            line_starts,
            len: text.len(),
        }
    }

    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    /// Byte offset of the start of a 1-based line, if it exists.
    pub fn line_start(&self, line: usize) -> Option<usize> {
        if line == 0 {
            return None;
        }
        self.line_starts.get(line - 1).copied()
    }

    /// Span of a 1-based line, excluding the trailing newline.
    pub fn line_span(&self, line: usize) -> Option<Span> {
        let start = self.line_start(line)?;
        let end = self
            .line_starts
            .get(line)
            .map(|next| next - 1)
            .unwrap_or(self.len);
        Some(Span::new(start, end))
    }

    pub fn position(&self, offset: usize) -> Position {
        let line = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Position::new(line + 1, offset - self.line_starts[line] + 1)
    }

    pub fn offset(&self, pos: Position) -> Option<usize> {
        let span = self.line_span(pos.line)?;
        if pos.column == 0 {
            return None;
        }
        let offset = span.start + pos.column - 1;
        // Allow pointing one past the end of the line (caret after last char).
        if offset <= span.end {
            Some(offset)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Have,
    Calc,
    Let,
    Choose,
    Replace,
}

impl BlockKind {
    fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "have" => Some(BlockKind::Have),
            "calc" => Some(BlockKind::Calc),
            "let" => Some(BlockKind::Let),
            "choose" => Some(BlockKind::Choose),
            "replace" => Some(BlockKind::Replace),
            _ => None,
        }
    }
}

/// A structural proof region recognized by the indentation scanner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    /// Span of the whole block, from the keyword to the end of its last line.
    pub span: Span,
    /// Span of the proof body following `:= by` (or the `:=` payload for
    /// `let`). Absent for `calc`/`choose`, which are replaced wholesale.
    pub body_span: Option<Span>,
    /// Hypothesis name introduced by the block, e.g. `step2`.
    pub label: Option<String>,
    /// The stated type between `:` and `:=`, when present.
    pub stated_type: Option<String>,
    /// Indentation (spaces) of the keyword line.
    pub indent: usize,
    /// 1-based first and last line covered by `span`.
    pub start_line: usize,
    pub end_line: usize,
}

/// Blocks in document order with parent links forming a forest under span
/// containment.
#[derive(Debug, Clone, Default)]
pub struct BlockForest {
    blocks: Vec<Block>,
    parents: Vec<Option<usize>>,
}

impl BlockForest {
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn parent(&self, index: usize) -> Option<usize> {
        self.parents.get(index).copied().flatten()
    }

    /// All blocks whose span covers the given 1-based line, outermost first.
    pub fn containing_line(&self, line: usize) -> Vec<&Block> {
        let mut hits: Vec<&Block> = self
            .blocks
            .iter()
            .filter(|b| b.start_line <= line && line <= b.end_line)
            .collect();
        // Document order already puts outer blocks before their children, but
        // sort by span size to be explicit about outermost→innermost.
        hits.sort_by(|a, b| {
            b.span
                .len()
                .cmp(&a.span.len())
                .then(a.span.start.cmp(&b.span.start))
        });
        hits
    }
}

/// The block with minimum span length; ties broken by latest span start.
pub fn innermost<'a>(blocks: &[&'a Block]) -> Result<&'a Block, DocumentError> {
    blocks
        .iter()
        .copied()
        .min_by(|a, b| {
            a.span
                .len()
                .cmp(&b.span.len())
                .then(b.span.start.cmp(&a.span.start))
        })
        .ok_or(DocumentError::EmptySelection)
}

/// A `sorry` token at tactic position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SorrySite {
    /// Ordinal of this `sorry` in document order, 0-based.
    pub index: usize,
    pub position: Position,
    /// Label of the innermost enclosing block, when any.
    pub enclosing_block: Option<String>,
}

/// Lean source with the statement header and tactic body located.
///
/// Immutable after construction; every mutating operation returns a new value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofDocument {
    text: String,
    header_span: Span,
    body_span: Span,
    line_index: LineIndex,
}

impl ProofDocument {
    /// Locate the last top-level `theorem`/`lemma` declaration and split it at
    /// `:= by`. Earlier declarations (prepended lemmas) become an immutable
    /// preamble outside both spans.
    pub fn parse(text: impl Into<String>) -> Result<Self, DocumentError> {
        let text = text.into();
        if text.contains('\t') {
            return Err(DocumentError::NormalizationError);
        }
        let line_index = LineIndex::new(&text);
        let decl_start = last_decl_start(&text).ok_or(DocumentError::MalformedProof)?;
        let by_end = find_by_marker(&text, decl_start).ok_or(DocumentError::MalformedProof)?;
        Ok(ProofDocument {
            header_span: Span::new(decl_start, by_end),
            body_span: Span::new(by_end, text.len()),
            line_index,
            text,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn header_span(&self) -> Span {
        self.header_span
    }

    pub fn body_span(&self) -> Span {
        self.body_span
    }

    pub fn header_text(&self) -> &str {
        &self.text[self.header_span.start..self.header_span.end]
    }

    pub fn body_text(&self) -> &str {
        &self.text[self.body_span.start..self.body_span.end]
    }

    /// Text before the statement being proven (previously assembled lemmas).
    pub fn preamble_text(&self) -> &str {
        &self.text[..self.header_span.start]
    }

    pub fn line_index(&self) -> &LineIndex {
        &self.line_index
    }

    /// Recognize `have`/`calc`/`let`/`choose`/`replace` blocks in the tactic
    /// body. Keywords count only at tactic position: the start of a trimmed
    /// line, optionally after `·`/`.` focus markers. Nesting follows
    /// indentation.
    pub fn parse_blocks(&self) -> BlockForest {
        let mut blocks: Vec<Block> = Vec::new();
        let mut parents: Vec<Option<usize>> = Vec::new();
        // (indent, block index) stack of currently open blocks.
        let mut stack: Vec<(usize, usize)> = Vec::new();

        let lines = self.body_lines();
        for (i, line) in lines.iter().enumerate() {
            if line.blank {
                continue;
            }
            while let Some(&(indent, _)) = stack.last() {
                if line.indent <= indent {
                    stack.pop();
                } else {
                    break;
                }
            }
            let Some((kind, kw_offset)) = tactic_keyword(&self.text, line) else {
                continue;
            };
            let end_line_idx = block_end_line(&lines, i);
            let span = Span::new(kw_offset, lines[end_line_idx].span.end);
            let block_text = &self.text[span.start..span.end];
            let (label, stated_type) = parse_label_and_type(kind, block_text);
            let body_span = parse_body_span(self, &lines, i, end_line_idx, span, kind);
            let parent = stack.last().map(|&(_, idx)| idx);
            let index = blocks.len();
            blocks.push(Block {
                kind,
                span,
                body_span,
                label,
                stated_type,
                indent: line.indent,
                start_line: line.number,
                end_line: lines[end_line_idx].number,
            });
            parents.push(parent);
            stack.push((line.indent, index));
        }
        BlockForest { blocks, parents }
    }

    /// Replace `span` with `replacement`, rebuilding the index. The header is
    /// immutable: any intersection with it is refused.
    pub fn replace_span(
        &self,
        span: Span,
        replacement: &str,
    ) -> Result<ProofDocument, DocumentError> {
        if span.start < self.body_span.start {
            return Err(DocumentError::HeaderViolation);
        }
        if span.end > self.text.len() {
            return Err(DocumentError::OutOfBounds(
                self.line_index.position(self.text.len().saturating_sub(1)),
            ));
        }
        let mut new_text = String::with_capacity(self.text.len());
        new_text.push_str(&self.text[..span.start]);
        new_text.push_str(replacement);
        new_text.push_str(&self.text[span.end..]);
        let doc = ProofDocument::parse(new_text)?;
        debug_assert_eq!(doc.header_text(), self.header_text());
        Ok(doc)
    }

    /// Drop the line at `position` and everything after it in the body, then
    /// append a single `sorry` at that line's indentation.
    pub fn truncate_line_and_append_sorry(
        &self,
        position: Position,
    ) -> Result<ProofDocument, DocumentError> {
        self.line_index
            .offset(position)
            .ok_or(DocumentError::OutOfBounds(position))?;
        let line_span = self
            .line_index
            .line_span(position.line)
            .ok_or(DocumentError::OutOfBounds(position))?;
        if line_span.start < self.body_span.start {
            // Error on the header's own line: keep `:= by` and start a fresh
            // body line.
            let mut new_text = self.text[..self.body_span.start].to_string();
            new_text.push_str("\n  sorry\n");
            return ProofDocument::parse(new_text);
        }
        let cut = line_span.start;
        let line_text = &self.text[line_span.start..line_span.end];
        let indent: String = line_text
            .chars()
            .take_while(|c| *c == ' ')
            .collect();
        let mut new_text = self.text[..cut].to_string();
        new_text.push_str(&indent);
        new_text.push_str("sorry\n");
        ProofDocument::parse(new_text)
    }

    /// All `sorry` tokens in the body, in document order, skipping comments
    /// and string literals. Enclosing block labels come from `parse_blocks`.
    pub fn list_sorry_sites(&self) -> Vec<SorrySite> {
        let forest = self.parse_blocks();
        let mut sites = Vec::new();
        for offset in sorry_token_offsets(&self.text, self.body_span) {
            let enclosing = forest
                .blocks()
                .iter()
                .filter(|b| b.span.contains(offset))
                .min_by(|a, b| {
                    a.span
                        .len()
                        .cmp(&b.span.len())
                        .then(b.span.start.cmp(&a.span.start))
                })
                .and_then(|b| b.label.clone());
            sites.push(SorrySite {
                index: sites.len(),
                position: self.line_index.position(offset),
                enclosing_block: enclosing,
            });
        }
        sites
    }

    /// Within each body containing a sibling-level `sorry`, drop the sibling
    /// tactics that follow it. Idempotent; never removes text before the
    /// first `sorry` of a body.
    pub fn cleanup_after_sorry(&self) -> ProofDocument {
        let forest = self.parse_blocks();
        let mut removals: Vec<Span> = Vec::new();

        // Root body counts as a body too.
        if let Some(span) = self.root_body_cleanup_span() {
            removals.push(span);
        }
        for block in forest.blocks() {
            let Some(body) = block.body_span else { continue };
            if body.is_empty() {
                continue;
            }
            if let Some(span) = cleanup_span_for_body(&self.text, body) {
                removals.push(span);
            }
        }
        if removals.is_empty() {
            return self.clone();
        }
        // Merge overlapping ranges and rebuild.
        removals.sort_by_key(|s| s.start);
        let mut merged: Vec<Span> = Vec::new();
        for r in removals {
            if let Some(last) = merged.last_mut() {
                if r.start <= last.end {
                    last.end = last.end.max(r.end);
                    continue;
                }
            }
            merged.push(r);
        }
        let mut new_text = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for r in &merged {
            new_text.push_str(&self.text[cursor..r.start]);
            cursor = r.end;
        }
        new_text.push_str(&self.text[cursor..]);
        ProofDocument::parse(new_text).expect("cleanup preserves document shape")
    }

    fn root_body_cleanup_span(&self) -> Option<Span> {
        if self.body_span.is_empty() {
            return None;
        }
        cleanup_span_for_body(&self.text, self.body_span)
    }

    /// Physical lines fully contained in the body span.
    fn body_lines(&self) -> Vec<Line> {
        let mut lines = Vec::new();
        for number in 1..=self.line_index.line_count() {
            let span = self.line_index.line_span(number).unwrap();
            if span.start < self.body_span.start {
                continue;
            }
            let text = &self.text[span.start..span.end];
            let indent = text.chars().take_while(|c| *c == ' ').count();
            lines.push(Line {
                number,
                span,
                indent,
                blank: text.trim().is_empty(),
            });
        }
        lines
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    number: usize,
    span: Span,
    indent: usize,
    blank: bool,
}

fn last_decl_start(text: &str) -> Option<usize> {
    let mut result = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.len() == line.len() {
            // Column 0 only.
            for kw in ["theorem ", "lemma ", "example "] {
                if line.starts_with(kw) {
                    result = Some(offset);
                }
            }
        }
        offset += line.len();
    }
    result
}

/// End offset (exclusive) of the first `:= by` marker at or after `from`.
fn find_by_marker(text: &str, from: usize) -> Option<usize> {
    let mut search = from;
    loop {
        let rel = text[search..].find(":= by")?;
        let idx = search + rel;
        let end = idx + ":= by".len();
        let ok_after = text[end..]
            .chars()
            .next()
            .map(|c| c.is_whitespace())
            .unwrap_or(true);
        if ok_after {
            return Some(end);
        }
        search = end;
    }
}

/// Keyword at tactic position on this line, with the keyword's byte offset.
fn tactic_keyword(text: &str, line: &Line) -> Option<(BlockKind, usize)> {
    let content = &text[line.span.start..line.span.end];
    let mut rest = content.trim_start();
    // Focus markers introduce a nested tactic position.
    loop {
        if let Some(stripped) = rest.strip_prefix("· ") {
            rest = stripped.trim_start();
        } else if rest.starts_with(". ") {
            rest = rest[2..].trim_start();
        } else {
            break;
        }
    }
    let word_len = rest
        .find(|c: char| !c.is_alphanumeric() && c != '_')
        .unwrap_or(rest.len());
    let kind = BlockKind::from_keyword(&rest[..word_len])?;
    let kw_offset = line.span.start + (rest.as_ptr() as usize - content.as_ptr() as usize);
    Some((kind, kw_offset))
}

/// Index of the last line belonging to the block starting at `start`:
/// the last non-blank line indented deeper than the keyword line.
fn block_end_line(lines: &[Line], start: usize) -> usize {
    let base = lines[start].indent;
    let mut end = start;
    for (j, line) in lines.iter().enumerate().skip(start + 1) {
        if line.blank {
            continue;
        }
        if line.indent > base {
            end = j;
        } else {
            break;
        }
    }
    end
}

fn parse_label_and_type(kind: BlockKind, block_text: &str) -> (Option<String>, Option<String>) {
    if matches!(kind, BlockKind::Calc | BlockKind::Choose) {
        return (None, None);
    }
    // `<kw> <label> : <type> := ...` with an anonymous form `<kw> : <type>`.
    let after_kw = block_text
        .split_once(char::is_whitespace)
        .map(|(_, rest)| rest)
        .unwrap_or("");
    let head = match after_kw.find(":=") {
        Some(i) => &after_kw[..i],
        None => after_kw,
    };
    let (label_part, type_part) = match head.split_once(':') {
        Some((l, t)) => (l.trim(), Some(t.trim())),
        None => (head.trim(), None),
    };
    let label = label_part
        .split_whitespace()
        .next()
        .filter(|w| is_identifier(w))
        .map(str::to_string);
    let stated_type = type_part
        .filter(|t| !t.is_empty())
        .map(|t| collapse_ws(t));
    (label, stated_type)
}

fn parse_body_span(
    doc: &ProofDocument,
    lines: &[Line],
    start: usize,
    end: usize,
    span: Span,
    kind: BlockKind,
) -> Option<Span> {
    if matches!(kind, BlockKind::Calc | BlockKind::Choose) {
        return None;
    }
    let block_text = &doc.text()[span.start..span.end];
    let marker = if let Some(i) = find_subslice(block_text, ":= by") {
        Some(i + ":= by".len())
    } else if kind == BlockKind::Let {
        find_subslice(block_text, ":=").map(|i| i + 2)
    } else {
        None
    }?;
    let after = span.start + marker;
    // Same-line payload, if any.
    let marker_line = lines
        .iter()
        .position(|l| l.span.contains(after) || l.span.end == after)
        .unwrap_or(start);
    let line_end = lines[marker_line].span.end;
    let tail = &doc.text()[after..line_end];
    if !tail.trim().is_empty() {
        let payload_start = after + (tail.len() - tail.trim_start().len());
        return Some(Span::new(payload_start, span.end));
    }
    // Body is the indented lines after the marker line.
    for line in lines.iter().take(end + 1).skip(marker_line + 1) {
        if line.blank {
            continue;
        }
        let content_start = line.span.start + line.indent;
        return Some(Span::new(content_start, span.end));
    }
    Some(Span::new(span.end, span.end))
}

fn find_subslice(haystack: &str, needle: &str) -> Option<usize> {
    haystack.find(needle)
}

/// `sorry` token offsets inside `region`, skipping `--` line comments,
/// `/- -/` block comments (nested) and string literals.
fn sorry_token_offsets(text: &str, region: Span) -> Vec<usize> {
    let bytes = text.as_bytes();
    let mut offsets = Vec::new();
    let mut i = region.start;
    let mut block_depth = 0usize;
    while i < region.end {
        let rest = &text[i..];
        if block_depth > 0 {
            if rest.starts_with("/-") {
                block_depth += 1;
                i += 2;
            } else if rest.starts_with("-/") {
                block_depth -= 1;
                i += 2;
            } else {
                i += utf8_len(bytes[i]);
            }
            continue;
        }
        if rest.starts_with("--") {
            i += rest.find('\n').map(|n| n + 1).unwrap_or(rest.len());
            continue;
        }
        if rest.starts_with("/-") {
            block_depth = 1;
            i += 2;
            continue;
        }
        if bytes[i] == b'"' {
            // Skip string literal with escapes.
            i += 1;
            while i < region.end {
                if bytes[i] == b'\\' {
                    i += 2;
                } else if bytes[i] == b'"' {
                    i += 1;
                    break;
                } else {
                    i += utf8_len(bytes[i]);
                }
            }
            continue;
        }
        if rest.starts_with("sorry") {
            let before_ok = i == 0 || !is_ident_byte(bytes[i - 1]);
            let after = i + 5;
            let after_ok = after >= text.len() || !is_ident_byte(bytes[after]);
            if before_ok && after_ok {
                offsets.push(i);
                i = after;
                continue;
            }
        }
        i += utf8_len(bytes[i]);
    }
    offsets
}

fn utf8_len(b: u8) -> usize {
    if b < 0x80 {
        1
    } else if b < 0xE0 {
        2
    } else if b < 0xF0 {
        3
    } else {
        4
    }
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'\''
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
}

pub(crate) fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removal span for one body: everything after the first sibling-level
/// `sorry` tactic, when something still follows it. Deeper-indented lines
/// belong to nested bodies and are not siblings.
fn cleanup_span_for_body(text: &str, body: Span) -> Option<Span> {
    let body_text = &text[body.start..body.end];
    // A trailing newline belongs to the document, not the removed tactics.
    let end = if body_text.ends_with('\n') {
        body.end - 1
    } else {
        body.end
    };
    let first_line_end = body_text.find('\n').unwrap_or(body_text.len());
    let head = body_text[..first_line_end].trim();
    // A same-line payload after `:= by` counts as the first sibling.
    if head == "sorry" {
        if body_text[first_line_end..].trim().is_empty() {
            return None;
        }
        return Some(Span::new(body.start + first_line_end, end));
    }
    let mut base: Option<usize> = None;
    let mut pos = first_line_end;
    for line in body_text[first_line_end..].split_inclusive('\n') {
        let content = line.trim_end_matches('\n');
        if !content.trim().is_empty() {
            let indent = content.len() - content.trim_start().len();
            let sibling_indent = *base.get_or_insert(indent);
            if indent == sibling_indent && content.trim() == "sorry" {
                let cut = pos + content.len();
                if body_text[cut..].trim().is_empty() {
                    return None;
                }
                return Some(Span::new(body.start + cut, end));
            }
        }
        pos += line.len();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const FIGURE3_BROKEN: &str = "theorem eq_trans (a b c : Nat)\n  (h1 : a = b) (h2 : b = c) :\n  a = c := by\n  have step1 : a = b := by\n    exact h1\n  have step2 : b = c := by\n    exact h1\n  have step3 : a = c := by\n    exact Eq.trans step1 step2\n  exact step3\n";

    #[test]
    fn parse_splits_header_and_body() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        assert!(doc.header_text().ends_with(":= by"));
        assert!(doc.header_text().starts_with("theorem eq_trans"));
        assert!(doc.body_text().contains("have step1"));
    }

    #[test]
    fn missing_by_is_malformed() {
        let err = ProofDocument::parse("theorem t : True := trivial\n").unwrap_err();
        assert_eq!(err, DocumentError::MalformedProof);
    }

    #[test]
    fn tabs_are_rejected() {
        let err = ProofDocument::parse("theorem t : True := by\n\texact trivial\n").unwrap_err();
        assert_eq!(err, DocumentError::NormalizationError);
    }

    #[test]
    fn figure3_has_three_have_blocks() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let forest = doc.parse_blocks();
        let labels: Vec<_> = forest
            .blocks()
            .iter()
            .map(|b| b.label.clone().unwrap())
            .collect();
        assert_eq!(labels, ["step1", "step2", "step3"]);
        for b in forest.blocks() {
            assert_eq!(b.kind, BlockKind::Have);
            let body = b.body_span.unwrap();
            assert!(b.span.contains_span(body));
            assert!(body.len() < b.span.len());
        }
        // All three are children of the root body (no parents).
        for i in 0..forest.len() {
            assert_eq!(forest.parent(i), None);
        }
    }

    #[test]
    fn no_blocks_in_bare_tactic_proof() {
        let doc =
            ProofDocument::parse("theorem t (h : True) : True := by\n  exact h\n").unwrap();
        assert!(doc.parse_blocks().is_empty());
    }

    #[test]
    fn containing_line_figure3() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let forest = doc.parse_blocks();
        // `exact h1` inside step2 is line 7.
        let hits = forest.containing_line(7);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].label.as_deref(), Some("step2"));
        // Final `exact step3` is line 10: bare tactic position.
        assert!(forest.containing_line(10).is_empty());
        // Out of range → empty.
        assert!(forest.containing_line(999).is_empty());
    }

    #[test]
    fn innermost_picks_min_length_latest_start() {
        let doc = ProofDocument::parse(
            "theorem t (h : True) : True := by\n  have a : True := by\n    have b : True := by\n      exact h\n    exact b\n  exact a\n",
        )
        .unwrap();
        let forest = doc.parse_blocks();
        let all: Vec<&Block> = forest.blocks().iter().collect();
        let inner = innermost(&all).unwrap();
        assert_eq!(inner.label.as_deref(), Some("b"));
        assert!(matches!(
            innermost(&[]),
            Err(DocumentError::EmptySelection)
        ));
    }

    #[test]
    fn replace_step2_body_with_sorry() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let forest = doc.parse_blocks();
        let step2 = &forest.blocks()[1];
        let patched = doc
            .replace_span(step2.body_span.unwrap(), "sorry")
            .unwrap();
        assert!(patched.text().contains("have step2 : b = c := by\n    sorry"));
        assert_eq!(patched.header_text(), doc.header_text());
    }

    #[test]
    fn replace_span_identity() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let span = Span::new(doc.body_span().start, doc.body_span().end);
        let same = doc.replace_span(span, doc.body_text()).unwrap();
        assert_eq!(same.text(), doc.text());
    }

    #[test]
    fn replace_span_header_violation() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let err = doc.replace_span(Span::new(0, 10), "oops").unwrap_err();
        assert_eq!(err, DocumentError::HeaderViolation);
    }

    #[test]
    fn truncate_final_tactic() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        // Final `exact step3` is line 10, column 3.
        let out = doc
            .truncate_line_and_append_sorry(Position::new(10, 3))
            .unwrap();
        assert!(out.text().ends_with("exact Eq.trans step1 step2\n  sorry\n"));
        assert_eq!(out.header_text(), doc.header_text());
    }

    #[test]
    fn truncate_only_body_line() {
        let doc = ProofDocument::parse("theorem t (h : True) : True := by\n  exact missing\n")
            .unwrap();
        let out = doc
            .truncate_line_and_append_sorry(Position::new(2, 1))
            .unwrap();
        assert_eq!(out.body_text().trim(), "sorry");
    }

    #[test]
    fn sorry_sites_resolve_enclosing_blocks() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        let forest = doc.parse_blocks();
        let step2 = &forest.blocks()[1];
        let sorried = doc.replace_span(step2.body_span.unwrap(), "sorry").unwrap();
        let sites = sorried.list_sorry_sites();
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].index, 0);
        assert_eq!(sites[0].enclosing_block.as_deref(), Some("step2"));
    }

    #[test]
    fn sorry_in_comments_and_strings_ignored() {
        let doc = ProofDocument::parse(
            "theorem t (h : True) : True := by\n  -- sorry in a comment\n  /- sorry in /- nested -/ block -/\n  exact h\n",
        )
        .unwrap();
        assert!(doc.list_sorry_sites().is_empty());
    }

    #[test]
    fn sorry_sites_dense_indices() {
        let doc = ProofDocument::parse(
            "theorem t : True := by\n  have a : True := by\n    sorry\n  have b : True := by\n    sorry\n  sorry\n",
        )
        .unwrap();
        let sites = doc.list_sorry_sites();
        assert_eq!(sites.len(), 3);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(s.index, i);
        }
        assert_eq!(sites[0].enclosing_block.as_deref(), Some("a"));
        assert_eq!(sites[2].enclosing_block, None);
    }

    #[test]
    fn cleanup_removes_tactics_after_sorry() {
        let doc = ProofDocument::parse(
            "theorem t (h : True) : True := by\n  have a : True := by\n    sorry\n    exact h\n  exact a\n",
        )
        .unwrap();
        let cleaned = doc.cleanup_after_sorry();
        assert!(!cleaned.text().contains("exact h"));
        assert!(cleaned.text().contains("exact a"));
        // Idempotent.
        assert_eq!(cleaned.cleanup_after_sorry().text(), cleaned.text());
    }

    #[test]
    fn cleanup_removes_siblings_after_mid_body_sorry() {
        let doc = ProofDocument::parse(
            "theorem t (h : True) : True := by\n  have a : True := by\n    exact h\n  sorry\n  exact a\n",
        )
        .unwrap();
        let cleaned = doc.cleanup_after_sorry();
        assert!(cleaned.text().contains("exact h"));
        assert!(!cleaned.text().contains("exact a"));
        assert!(cleaned.text().ends_with("  sorry\n"));
    }

    #[test]
    fn cleanup_no_sorry_unchanged() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        assert_eq!(doc.cleanup_after_sorry().text(), doc.text());
    }

    #[test]
    fn calc_and_choose_have_no_body_span() {
        let doc = ProofDocument::parse(
            "theorem t (h : True) : True := by\n  calc True := h\n  choose x hx using h\n",
        )
        .unwrap();
        let forest = doc.parse_blocks();
        assert_eq!(forest.len(), 2);
        assert!(forest.blocks().iter().all(|b| b.body_span.is_none()));
    }

    #[test]
    fn line_index_round_trip() {
        let doc = ProofDocument::parse(FIGURE3_BROKEN).unwrap();
        for offset in 0..doc.text().len() {
            let pos = doc.line_index().position(offset);
            assert_eq!(doc.line_index().offset(pos), Some(offset));
        }
    }

    #[test]
    fn preamble_excluded_from_spans() {
        let text = "lemma helper (h : True) : True := by\n  exact h\n\ntheorem t (h : True) : True := by\n  exact h\n";
        let doc = ProofDocument::parse(text).unwrap();
        assert!(doc.preamble_text().starts_with("lemma helper"));
        assert!(doc.header_text().starts_with("theorem t"));
    }
}
