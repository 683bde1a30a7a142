//! Triple dumps: a subset of N-Triples and a three-column TSV.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chainqa_core::kg::{RawTriple, Term};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    /// `<s> <p> <o> .` with `"literal"` objects.
    Ntriples,
    /// `subject<TAB>predicate<TAB>object`.
    Tsv3,
    /// Decided by the first data line.
    #[default]
    Auto,
}

impl FromStr for TripleFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ntriples" | "nt" => Ok(TripleFormat::Ntriples),
            "tsv3" | "tsv" => Ok(TripleFormat::Tsv3),
            "auto" => Ok(TripleFormat::Auto),
            other => Err(format!("unknown triple format {other:?}")),
        }
    }
}

impl fmt::Display for TripleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripleFormat::Ntriples => "ntriples",
            TripleFormat::Tsv3 => "tsv3",
            TripleFormat::Auto => "auto",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: mixed formats, expected {expected} but found {found}")]
    Mixed { line: usize, expected: TripleFormat, found: TripleFormat },
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Line { line, message: message.into() }
}

fn looks_like(line: &str) -> TripleFormat {
    if line.starts_with('<') || line.starts_with("_:") {
        TripleFormat::Ntriples
    } else {
        TripleFormat::Tsv3
    }
}

/// Parses a dump. Blank lines and lines starting with `#` are skipped.
pub fn parse_triples(text: &str, format: TripleFormat) -> Result<Vec<RawTriple>, ParseError> {
    let mut fixed = match format {
        TripleFormat::Auto => None,
        f => Some(f),
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let kind = looks_like(trimmed);
        let expected = *fixed.get_or_insert(kind);
        if kind != expected {
            return Err(ParseError::Mixed { line: line_no, expected, found: kind });
        }
        out.push(match expected {
            TripleFormat::Ntriples => parse_nt_line(trimmed, line_no)?,
            _ => parse_tsv_line(line, line_no)?,
        });
    }
    Ok(out)
}

fn parse_tsv_line(line: &str, n: usize) -> Result<RawTriple, ParseError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(err(n, "expected 3 fields"));
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err(err(n, "empty field"));
    }
    if fields[0].starts_with('"') || fields[1].starts_with('"') {
        return Err(err(n, "subject and predicate must be terms, not literals"));
    }
    let object = if let Some(body) = fields[2].strip_prefix('"') {
        let body = body.strip_suffix('"').ok_or_else(|| err(n, "unterminated literal"))?;
        Term::Literal(unescape(body).map_err(|m| err(n, m))?)
    } else {
        Term::Entity(fields[2].to_string())
    };
    Ok(RawTriple { subject: fields[0].to_string(), predicate: fields[1].to_string(), object })
}

struct Cursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn iri(&mut self, what: &str) -> Result<String, ParseError> {
        self.skip_ws();
        if self.rest.starts_with("_:") {
            return Err(err(self.line, "blank nodes are not supported"));
        }
        let body = self.rest.strip_prefix('<').ok_or_else(|| err(self.line, format!("expected <{what}>")))?;
        let end = body.find('>').ok_or_else(|| err(self.line, format!("unterminated <{what}>")))?;
        let term = &body[..end];
        if term.is_empty() || term.contains(char::is_whitespace) {
            return Err(err(self.line, format!("invalid {what} term")));
        }
        self.rest = &body[end + 1..];
        Ok(term.to_string())
    }

    fn object(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        if !self.rest.starts_with('"') {
            return self.iri("object").map(Term::Entity);
        }
        let body = &self.rest[1..];
        let mut end = None;
        let mut escaped = false;
        for (i, c) in body.char_indices() {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => {
                    end = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let end = end.ok_or_else(|| err(self.line, "unterminated literal"))?;
        let text = unescape(&body[..end]).map_err(|m| err(self.line, m))?;
        self.rest = &body[end + 1..];
        if self.rest.starts_with("^^") {
            return Err(err(self.line, "typed literals are not supported"));
        }
        if self.rest.starts_with('@') {
            return Err(err(self.line, "language-tagged literals are not supported"));
        }
        Ok(Term::Literal(text))
    }
}

fn parse_nt_line(line: &str, n: usize) -> Result<RawTriple, ParseError> {
    let mut c = Cursor { rest: line, line: n };
    let subject = c.iri("subject")?;
    let predicate = c.iri("predicate")?;
    let object = c.object()?;
    c.skip_ws();
    let tail = c.rest.strip_prefix('.').ok_or_else(|| err(n, "expected terminating ."))?.trim();
    if !(tail.is_empty() || tail.starts_with('#')) {
        return Err(err(n, "unexpected text after ."));
    }
    Ok(RawTriple { subject, predicate, object })
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('"') => out.push('"'),
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('u') => {
                let hex: String = chars.by_ref().take(4).collect();
                let cp = u32::from_str_radix(&hex, 16).map_err(|_| format!("bad escape \\u{hex}"))?;
                out.push(char::from_u32(cp).ok_or_else(|| format!("bad code point \\u{hex}"))?);
            }
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// Canonical tsv3 text: one line per triple, in the given order.
pub fn dump_tsv3(triples: &[RawTriple]) -> String {
    let mut out = String::new();
    for t in triples {
        let o = match &t.object {
            Term::Entity(e) => e.clone(),
            Term::Literal(l) => format!("\"{}\"", escape(l)),
        };
        out.push_str(&format!("{}\t{}\t{}\n", t.subject, t.predicate, o));
    }
    out
}

/// Label overrides: `term<TAB>label` per line.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, String>, ParseError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (term, label) = line.split_once('\t').ok_or_else(|| err(i + 1, "expected term<TAB>label"))?;
        if term.is_empty() || label.trim().is_empty() {
            return Err(err(i + 1, "empty term or label"));
        }
        out.insert(term.to_string(), label.trim().to_string());
    }
    Ok(out)
}

/// Seed entities, one term per line; `<...>` brackets are optional.
pub fn parse_seeds(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.strip_prefix('<').and_then(|l| l.strip_suffix('>')).unwrap_or(l).to_string())
        .collect()
}
