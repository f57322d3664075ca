//! Turns raw model output into schema-valid sentiment tuples.
//!
//! The expected shape is a two-dimensional list of quoted strings, e.g.
//! `[["burger", "delicious", "positive"]]`. Only the first list-looking
//! region is read; anything after it is ignored. Malformed pieces are dropped
//! with a diagnostic and the rest is kept, so every output yields a
//! (possibly empty) prediction.

use serde::{Deserialize, Serialize};

use crate::corpus::{Element, Polarity, SentimentTuple, Subtask, IMPLICIT};
use crate::text::{collapse_whitespace, is_edge_punct};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Clean,
    Salvaged,
    Failed,
}

impl ParseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseStatus::Clean => "clean",
            ParseStatus::Salvaged => "salvaged",
            ParseStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    NoList,
    Unterminated,
    Arity,
    Polarity,
    EmptyElement,
    BareElement,
    Unquoted,
    Parenthesized,
    Nested,
    StrayComma,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Byte offset into the raw output.
    pub position: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub tuples: Vec<SentimentTuple>,
    pub status: ParseStatus,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    pub fn count(&self, kind: DiagnosticKind) -> usize {
        self.diagnostics.iter().filter(|d| d.kind == kind).count()
    }
}

/// Case-folds and whitespace-collapses every span, trims surrounding
/// punctuation, and keeps the implicit marker as `NULL`.
pub fn normalize_tuple(tuple: &SentimentTuple) -> SentimentTuple {
    SentimentTuple {
        aspect: tuple.aspect.as_deref().map(normalize_span),
        category: tuple.category.as_deref().map(normalize_span),
        opinion: tuple.opinion.as_deref().map(normalize_span),
        polarity: tuple.polarity,
    }
}

pub fn normalize_span(span: &str) -> String {
    let collapsed = collapse_whitespace(&span.to_lowercase());
    if collapsed.eq_ignore_ascii_case(IMPLICIT) {
        return IMPLICIT.to_string();
    }
    let trimmed = collapsed.trim_matches(|c: char| is_edge_punct(c) || c.is_whitespace()).to_string();
    // A span made only of punctuation (an emoticon, say) is kept as is.
    if trimmed.is_empty() {
        collapsed
    } else if trimmed.eq_ignore_ascii_case(IMPLICIT) {
        IMPLICIT.to_string()
    } else {
        trimmed
    }
}

/// Parses `text` under `subtask`'s output schema. Never fails; problems are
/// reported through [`ParseOutcome::status`] and its diagnostics.
pub fn parse_output(text: &str, subtask: Subtask) -> ParseOutcome {
    let mut scanner = Scanner::new(text);
    let Some(start) = scanner.find_list_start() else {
        return ParseOutcome {
            tuples: Vec::new(),
            status: ParseStatus::Failed,
            diagnostics: vec![Diagnostic {
                position: 0,
                kind: DiagnosticKind::NoList,
                message: "no bracketed list found".into(),
            }],
        };
    };
    scanner.pos = start + 1;
    let items = scanner.outer_list();

    let elements = subtask.output_elements();
    let mut diagnostics = scanner.diagnostics;
    let mut candidates: Vec<(usize, Vec<String>)> = Vec::new();
    let mut bare: Vec<(usize, String)> = Vec::new();
    let mut saw_inner = false;
    for item in items {
        match item {
            Item::Inner(pos, values) => {
                saw_inner = true;
                candidates.push((pos, values));
            }
            Item::MalformedInner => saw_inner = true,
            Item::Bare(pos, value) => bare.push((pos, value)),
        }
    }
    if elements.len() == 1 {
        for (pos, value) in bare {
            diagnostics.push(diag(pos, DiagnosticKind::BareElement, "element outside an inner list"));
            candidates.push((pos, vec![value]));
        }
    } else if !bare.is_empty() {
        let pos = bare[0].0;
        if !saw_inner && bare.len() == elements.len() {
            diagnostics.push(diag(pos, DiagnosticKind::BareElement, "flat list read as a single tuple"));
            candidates.push((pos, bare.into_iter().map(|(_, v)| v).collect()));
        } else {
            diagnostics.push(diag(pos, DiagnosticKind::BareElement, "elements outside inner lists dropped"));
        }
    }
    candidates.sort_by_key(|(pos, _)| *pos);

    let mut tuples: Vec<SentimentTuple> = Vec::new();
    for (pos, values) in candidates {
        if values.len() != elements.len() {
            diagnostics.push(diag(
                pos,
                DiagnosticKind::Arity,
                &format!("expected {} elements, found {}", elements.len(), values.len()),
            ));
            continue;
        }
        match build_tuple(elements, &values) {
            Ok(tuple) => {
                if !tuples.contains(&tuple) {
                    tuples.push(tuple);
                }
            }
            Err((kind, message)) => diagnostics.push(diag(pos, kind, &message)),
        }
    }
    diagnostics.sort_by_key(|d| d.position);

    let status = if diagnostics.is_empty() {
        ParseStatus::Clean
    } else if tuples.is_empty() {
        ParseStatus::Failed
    } else {
        ParseStatus::Salvaged
    };
    ParseOutcome { tuples, status, diagnostics }
}

fn diag(position: usize, kind: DiagnosticKind, message: &str) -> Diagnostic {
    Diagnostic { position, kind, message: message.to_string() }
}

fn build_tuple(elements: &[Element], values: &[String]) -> Result<SentimentTuple, (DiagnosticKind, String)> {
    let mut tuple = SentimentTuple::default();
    for (&element, value) in elements.iter().zip(values) {
        if element == Element::Polarity {
            let polarity = Polarity::from_label(value)
                .ok_or_else(|| (DiagnosticKind::Polarity, format!("unknown polarity {value:?}")))?;
            tuple.polarity = Some(polarity);
            continue;
        }
        let span = normalize_span(value);
        if span.is_empty() {
            return Err((DiagnosticKind::EmptyElement, format!("empty {}", element.label())));
        }
        match element {
            Element::Aspect => tuple.aspect = Some(span),
            Element::Category => tuple.category = Some(span),
            _ => tuple.opinion = Some(span),
        }
    }
    Ok(tuple)
}

enum Item {
    Inner(usize, Vec<String>),
    MalformedInner,
    Bare(usize, String),
}

struct Scanner<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    diagnostics: Vec<Diagnostic>,
}

fn is_quote(b: u8) -> bool {
    b == b'"' || b == b'\''
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner { text, bytes: text.as_bytes(), pos: 0, diagnostics: Vec::new() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn next_non_ws(&self, from: usize) -> Option<u8> {
        self.text[from..].chars().find(|c| !c.is_whitespace()).map(|c| if c.is_ascii() { c as u8 } else { 0 })
    }

    fn push(&mut self, position: usize, kind: DiagnosticKind, message: &str) {
        self.diagnostics.push(diag(position, kind, message));
    }

    /// First `[` that opens something list-like; falls back to the first `[`.
    fn find_list_start(&self) -> Option<usize> {
        let mut first = None;
        for (i, &b) in self.bytes.iter().enumerate() {
            if b != b'[' {
                continue;
            }
            first.get_or_insert(i);
            if matches!(self.next_non_ws(i + 1), Some(b'[' | b'(' | b']' | b'"' | b'\'')) {
                return Some(i);
            }
        }
        first
    }

    fn outer_list(&mut self) -> Vec<Item> {
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            let Some(c) = self.peek() else {
                self.push(self.pos, DiagnosticKind::Unterminated, "list is not closed");
                return items;
            };
            let item_pos = self.pos;
            match c {
                b']' => {
                    self.pos += 1;
                    return items;
                }
                b',' => {
                    self.push(item_pos, DiagnosticKind::StrayComma, "stray comma");
                    self.pos += 1;
                    continue;
                }
                b'[' | b'(' => {
                    if c == b'(' {
                        self.push(item_pos, DiagnosticKind::Parenthesized, "parenthesized tuple");
                    }
                    self.pos += 1;
                    match self.inner_list(item_pos) {
                        Some(values) => items.push(Item::Inner(item_pos, values)),
                        None => items.push(Item::MalformedInner),
                    }
                }
                b')' => {
                    self.push(item_pos, DiagnosticKind::Malformed, "unexpected `)`");
                    self.pos += 1;
                    continue;
                }
                q if is_quote(q) => match self.string() {
                    Some(s) => items.push(Item::Bare(item_pos, s)),
                    None => {
                        self.push(item_pos, DiagnosticKind::Unterminated, "string is not closed");
                        return items;
                    }
                },
                _ => {
                    let atom = self.atom();
                    if !atom.is_empty() {
                        self.push(item_pos, DiagnosticKind::Unquoted, "unquoted element");
                        items.push(Item::Bare(item_pos, atom));
                    }
                }
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        self.push(self.pos, DiagnosticKind::StrayComma, "trailing comma");
                    }
                }
                Some(b']') | None => {}
                Some(_) => self.push(self.pos, DiagnosticKind::Malformed, "expected `,` or `]`"),
            }
        }
    }

    /// Reads the rest of an inner list. `None` means it was dropped.
    fn inner_list(&mut self, start: usize) -> Option<Vec<String>> {
        let mut values = Vec::new();
        let mut ok = true;
        loop {
            self.skip_ws();
            let Some(c) = self.peek() else {
                self.push(start, DiagnosticKind::Unterminated, "inner list is not closed");
                return None;
            };
            match c {
                b']' | b')' => {
                    self.pos += 1;
                    return ok.then_some(values);
                }
                b'[' | b'(' => {
                    self.push(self.pos, DiagnosticKind::Nested, "nested list inside a tuple");
                    if !self.skip_balanced() {
                        self.push(start, DiagnosticKind::Unterminated, "inner list is not closed");
                        return None;
                    }
                    ok = false;
                }
                b',' => {
                    self.push(self.pos, DiagnosticKind::StrayComma, "stray comma");
                    self.pos += 1;
                    continue;
                }
                q if is_quote(q) => {
                    let at = self.pos;
                    match self.string() {
                        Some(s) => values.push(s),
                        None => {
                            self.push(at, DiagnosticKind::Unterminated, "string is not closed");
                            return None;
                        }
                    }
                }
                _ => {
                    let at = self.pos;
                    let atom = self.atom();
                    if atom.is_empty() {
                        // A lone closing bracket of the other kind or similar junk.
                        self.pos += self.text[self.pos..].chars().next().map_or(1, char::len_utf8);
                        self.push(at, DiagnosticKind::Malformed, "unexpected character");
                        ok = false;
                        continue;
                    }
                    self.push(at, DiagnosticKind::Unquoted, "unquoted element");
                    values.push(atom);
                }
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.skip_ws();
                    if matches!(self.peek(), Some(b']' | b')')) {
                        self.push(self.pos, DiagnosticKind::StrayComma, "trailing comma");
                    }
                }
                Some(b']' | b')') | None => {}
                Some(_) => {
                    self.push(self.pos, DiagnosticKind::Malformed, "expected `,` or `]`");
                    ok = false;
                    // Resynchronise on the next separator.
                    while let Some(c) = self.peek() {
                        if matches!(c, b',' | b']' | b')' | b'[' | b'(') || is_quote(c) {
                            break;
                        }
                        self.pos += self.text[self.pos..].chars().next().map_or(1, char::len_utf8);
                    }
                }
            }
        }
    }

    /// Skips a bracketed region starting at the current opener. Returns false
    /// when input ends first.
    fn skip_balanced(&mut self) -> bool {
        let mut depth = 0usize;
        while let Some(c) = self.peek() {
            match c {
                b'[' | b'(' => {
                    depth += 1;
                    self.pos += 1;
                }
                b']' | b')' => {
                    self.pos += 1;
                    depth -= 1;
                    if depth == 0 {
                        return true;
                    }
                }
                q if is_quote(q) => {
                    if self.string().is_none() {
                        return false;
                    }
                }
                _ => self.pos += self.text[self.pos..].chars().next().map_or(1, char::len_utf8),
            }
        }
        false
    }

    /// Quoted string with backslash escapes. A quote only closes the string
    /// when the next non-blank character is a separator, so apostrophes inside
    /// single-quoted text survive.
    fn string(&mut self) -> Option<String> {
        let quote = self.peek()?;
        self.pos += 1;
        let mut out = String::new();
        while let Some(c) = self.text[self.pos..].chars().next() {
            self.pos += c.len_utf8();
            match c {
                '\\' => {
                    let next = self.text[self.pos..].chars().next()?;
                    self.pos += next.len_utf8();
                    match next {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        'u' => {
                            let hex = self.text.get(self.pos..self.pos + 4);
                            match hex.and_then(|h| u32::from_str_radix(h, 16).ok()).and_then(char::from_u32) {
                                Some(ch) => {
                                    out.push(ch);
                                    self.pos += 4;
                                }
                                None => out.push('u'),
                            }
                        }
                        other => out.push(other),
                    }
                }
                c if c as u32 == quote as u32 => {
                    if matches!(self.next_non_ws(self.pos), None | Some(b',' | b']' | b')')) {
                        return Some(out);
                    }
                    out.push(c);
                }
                c => out.push(c),
            }
        }
        None
    }

    /// Unquoted run up to the next separator.
    fn atom(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if matches!(c, b',' | b'[' | b']' | b'(' | b')') || is_quote(c) {
                break;
            }
            self.pos += self.text[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
        self.text[start..self.pos].trim().to_string()
    }
}
