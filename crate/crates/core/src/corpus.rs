//! Corpus ingestion: normalize Solidity sources, deduplicate by content
//! hash, extract function spans, and compute dataset statistics.
//!
//! Normalization removes `//` and `/* */` comments and blank lines. It is
//! lexer-based, not regex-based: comment-looking sequences inside string
//! literals survive untouched. Hashing is SHA-256 over the normalized bytes
//! so dedup is independent of file paths and comment noise.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::LabelRecord;
use crate::error::{Error, Result};
use crate::taxonomy::Severity;

/// One Solidity source unit, normalized and indexed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractSample {
    pub id: String,
    pub source: String,
    pub normalized: String,
    pub compiler_version: Option<String>,
    pub hash: String,
    pub functions: Vec<FunctionSpan>,
    pub loc: usize,
}

/// Line range of one function declaration, 1-based inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub name: String,
    pub start_line: usize,
    pub end_line: usize,
}

impl ContractSample {
    /// Build a sample from raw source: normalize, hash, extract functions.
    pub fn from_source(id: impl Into<String>, source: impl Into<String>) -> Result<ContractSample> {
        let source = source.into();
        let normalized = strip_comments(&source)?;
        let functions = extract_functions(&normalized)?;
        let loc = normalized.lines().count();
        Ok(ContractSample {
            id: id.into(),
            compiler_version: compiler_version(&normalized),
            hash: content_hash(&normalized),
            source,
            normalized,
            functions,
            loc,
        })
    }
}

/// Parse the version expression of the first `pragma solidity` directive.
fn compiler_version(normalized: &str) -> Option<String> {
    for line in normalized.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("pragma") {
            let rest = rest.trim_start();
            if let Some(version) = rest.strip_prefix("solidity") {
                let version = version.trim().trim_end_matches(';').trim();
                if !version.is_empty() {
                    return Some(version.to_string());
                }
            }
        }
    }
    None
}

/// Remove `//` and `/* */` comments and blank lines.
///
/// String-literal state is tracked so comment markers inside strings are
/// preserved. Block comments are replaced by a single space to keep the
/// surrounding token stream intact; lines left empty by comment removal are
/// dropped along with pre-existing blank lines, and trailing whitespace is
/// trimmed. The result carries no trailing newline, which makes the
/// operation idempotent.
pub fn strip_comments(source: &str) -> Result<String> {
    enum State {
        Normal,
        Str(char),
        LineComment,
        BlockComment { open_line: usize },
    }

    let mut out = String::with_capacity(source.len());
    let mut state = State::Normal;
    let mut line = 1usize;
    let mut chars = source.chars().peekable();

    while let Some(c) = chars.next() {
        if c == '\n' {
            line += 1;
        }
        match state {
            State::Normal => match c {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    state = State::LineComment;
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    state = State::BlockComment { open_line: line };
                }
                '"' | '\'' => {
                    out.push(c);
                    state = State::Str(c);
                }
                _ => out.push(c),
            },
            State::Str(quote) => {
                out.push(c);
                if c == '\\' {
                    if let Some(escaped) = chars.next() {
                        if escaped == '\n' {
                            line += 1;
                        }
                        out.push(escaped);
                    }
                } else if c == quote || c == '\n' {
                    // Solidity strings do not span lines; a newline here means
                    // the literal was malformed, so fall back to normal state.
                    state = State::Normal;
                }
            }
            State::LineComment => {
                if c == '\n' {
                    out.push('\n');
                    state = State::Normal;
                }
            }
            State::BlockComment { .. } => {
                if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    out.push(' ');
                    state = State::Normal;
                } else if c == '\n' {
                    // keep line structure so code after the comment stays put
                    out.push('\n');
                }
            }
        }
    }

    if let State::BlockComment { open_line } = state {
        return Err(Error::UnterminatedComment { line: open_line });
    }

    let cleaned: Vec<&str> = out
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
        .collect();
    Ok(cleaned.join("\n"))
}

/// SHA-256 over the normalized text, as lowercase hex.
pub fn content_hash(normalized: &str) -> String {
    let digest = Sha256::digest(normalized.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Keep the first sample per content hash, preserving input order.
pub fn dedup(samples: Vec<ContractSample>) -> Vec<ContractSample> {
    let mut seen = HashSet::new();
    samples
        .into_iter()
        .filter(|s| seen.insert(s.hash.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
}

/// Lightweight token scan: identifiers, braces, parens, semicolons, with
/// line numbers. Strings and comments are skipped, so this works on raw and
/// normalized text alike. Everything else (operators, numbers) is dropped.
fn tokenize(source: &str) -> Result<Vec<(usize, Tok<'_>)>> {
    let bytes = source.as_bytes();
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut i = 0usize;

    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            '\n' => {
                line += 1;
                i += 1;
            }
            '/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '/' if bytes.get(i + 1) == Some(&b'*') => {
                let open_line = line;
                i += 2;
                loop {
                    if i >= bytes.len() {
                        return Err(Error::UnterminatedComment { line: open_line });
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                    }
                    if bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/') {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
            }
            '"' | '\'' => {
                let quote = bytes[i];
                i += 1;
                while i < bytes.len() {
                    if bytes[i] == b'\\' {
                        i += 2;
                        continue;
                    }
                    if bytes[i] == quote {
                        i += 1;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        // malformed literal; resync at the newline
                        break;
                    }
                    i += 1;
                }
            }
            '{' => {
                toks.push((line, Tok::LBrace));
                i += 1;
            }
            '}' => {
                toks.push((line, Tok::RBrace));
                i += 1;
            }
            '(' => {
                toks.push((line, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((line, Tok::RParen));
                i += 1;
            }
            ';' => {
                toks.push((line, Tok::Semi));
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' || c == '$' => {
                let start = i;
                while i < bytes.len() {
                    let b = bytes[i] as char;
                    if b.is_ascii_alphanumeric() || b == '_' || b == '$' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                toks.push((line, Tok::Ident(&source[start..i])));
            }
            c if c.is_ascii_digit() => {
                // consume the whole literal so `0x1f` does not shed an ident
                while i < bytes.len() {
                    let b = bytes[i] as char;
                    if b.is_ascii_alphanumeric() || b == '.' || b == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
            }
            _ => i += 1,
        }
    }
    Ok(toks)
}

/// One span per `function` declaration plus `constructor`/`fallback`/
/// `receive`. A lightweight brace matcher, not a grammar: sufficient for
/// counting and for locating injection sites.
pub fn extract_functions(normalized: &str) -> Result<Vec<FunctionSpan>> {
    let toks = tokenize(normalized)?;
    let mut spans = Vec::new();
    let mut depth: isize = 0;
    let mut open_lines: Vec<usize> = Vec::new();
    let mut i = 0usize;

    while i < toks.len() {
        let (line, tok) = toks[i];
        match tok {
            Tok::LBrace => {
                depth += 1;
                open_lines.push(line);
                i += 1;
            }
            Tok::RBrace => {
                if depth == 0 {
                    return Err(Error::UnbalancedBrace { line });
                }
                depth -= 1;
                open_lines.pop();
                i += 1;
            }
            Tok::Ident(word @ ("function" | "constructor" | "fallback" | "receive")) => {
                let header = parse_function_header(&toks, i, word);
                let Some((name, header_end)) = header else {
                    i += 1;
                    continue;
                };
                let (end_line, next) = scan_function_extent(&toks, header_end)?;
                spans.push(FunctionSpan {
                    name,
                    start_line: line,
                    end_line,
                });
                // replay brace bookkeeping for the consumed tokens
                for &(l, t) in &toks[i..next] {
                    match t {
                        Tok::LBrace => {
                            depth += 1;
                            open_lines.push(l);
                        }
                        Tok::RBrace => {
                            if depth == 0 {
                                return Err(Error::UnbalancedBrace { line: l });
                            }
                            depth -= 1;
                            open_lines.pop();
                        }
                        _ => {}
                    }
                }
                i = next;
            }
            _ => i += 1,
        }
    }

    if depth != 0 {
        return Err(Error::UnbalancedBrace {
            line: open_lines.last().copied().unwrap_or(1),
        });
    }
    Ok(spans)
}

/// Resolve the declared name, or `None` when the keyword is not actually a
/// declaration (e.g. `receive` used as an ordinary identifier).
fn parse_function_header(
    toks: &[(usize, Tok<'_>)],
    at: usize,
    word: &str,
) -> Option<(String, usize)> {
    match word {
        "function" => match toks.get(at + 1) {
            Some((_, Tok::Ident(name))) => Some(((*name).to_string(), at + 2)),
            // old-style unnamed fallback: `function() public { ... }`
            Some((_, Tok::LParen)) => Some(("fallback".to_string(), at + 1)),
            _ => None,
        },
        _ => match toks.get(at + 1) {
            Some((_, Tok::LParen)) => Some((word.to_string(), at + 1)),
            _ => None,
        },
    }
}

/// From the end of a function header, find where the declaration ends:
/// either a `;` (body-less) or the matching `}` of its body, both taken
/// outside any parameter-list parentheses. Returns (end_line, next index).
fn scan_function_extent(toks: &[(usize, Tok<'_>)], from: usize) -> Result<(usize, usize)> {
    let mut paren_depth: isize = 0;
    let mut j = from;
    while j < toks.len() {
        let (line, tok) = toks[j];
        match tok {
            Tok::LParen => paren_depth += 1,
            Tok::RParen => paren_depth -= 1,
            Tok::Semi if paren_depth == 0 => return Ok((line, j + 1)),
            Tok::LBrace if paren_depth == 0 => {
                let mut brace_depth = 0isize;
                let mut open_line = line;
                for (k, &(l, t)) in toks.iter().enumerate().skip(j) {
                    match t {
                        Tok::LBrace => {
                            brace_depth += 1;
                            open_line = l;
                        }
                        Tok::RBrace => {
                            brace_depth -= 1;
                            if brace_depth == 0 {
                                return Ok((l, k + 1));
                            }
                        }
                        _ => {}
                    }
                }
                return Err(Error::UnbalancedBrace { line: open_line });
            }
            _ => {}
        }
        j += 1;
    }
    let last_line = toks.last().map(|&(l, _)| l).unwrap_or(1);
    Err(Error::UnbalancedBrace { line: last_line })
}

/// Line range of one `contract`/`library`/`interface` body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractBody {
    pub name: String,
    pub open_line: usize,
    pub close_line: usize,
}

/// Locate contract-level bodies. Works on raw source (comments and strings
/// are skipped by the token scan), which is what injection needs.
pub fn contract_bodies(source: &str) -> Result<Vec<ContractBody>> {
    let toks = tokenize(source)?;
    let mut bodies = Vec::new();
    let mut i = 0usize;
    while i < toks.len() {
        if let (_, Tok::Ident("contract" | "library" | "interface")) = toks[i] {
            if let Some((_, Tok::Ident(name))) = toks.get(i + 1) {
                // skip inheritance clauses up to the body brace
                let mut j = i + 2;
                while j < toks.len() && !matches!(toks[j].1, Tok::LBrace | Tok::Semi) {
                    j += 1;
                }
                if let Some(&(open_line, Tok::LBrace)) = toks.get(j) {
                    let mut depth = 0isize;
                    for (k, &(l, t)) in toks.iter().enumerate().skip(j) {
                        match t {
                            Tok::LBrace => depth += 1,
                            Tok::RBrace => {
                                depth -= 1;
                                if depth == 0 {
                                    bodies.push(ContractBody {
                                        name: (*name).to_string(),
                                        open_line,
                                        close_line: l,
                                    });
                                    i = k;
                                    break;
                                }
                            }
                            _ => {}
                        }
                    }
                    if depth != 0 {
                        return Err(Error::UnbalancedBrace { line: open_line });
                    }
                }
            }
        }
        i += 1;
    }
    Ok(bodies)
}

/// Count `contract`/`library`/`interface` declarations in normalized text.
pub fn count_contract_decls(normalized: &str) -> Result<usize> {
    let toks = tokenize(normalized)?;
    let mut count = 0;
    for w in toks.windows(2) {
        if let [(_, Tok::Ident("contract" | "library" | "interface")), (_, Tok::Ident(_))] = w {
            count += 1;
        }
    }
    Ok(count)
}

/// Aggregate dataset statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub contracts: usize,
    pub functions: usize,
    pub loc: usize,
    pub true_labels: usize,
    pub false_labels: usize,
    pub type_counts: BTreeMap<String, usize>,
    pub severity_counts: BTreeMap<String, usize>,
}

/// Compute corpus statistics over samples and their labels.
///
/// Labels must reference existing sample ids. At full dataset scale the
/// reference target is 1125 samples / 6085 contracts / 26618 functions /
/// 293421 LOC with 484 true and 641 false labels (384 High, 99 Medium,
/// 1 Low, 641 NotMentioned).
pub fn corpus_stats(samples: &[ContractSample], labels: &[LabelRecord]) -> Result<CorpusStats> {
    let ids: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let mut stats = CorpusStats {
        samples: samples.len(),
        contracts: 0,
        functions: 0,
        loc: 0,
        true_labels: 0,
        false_labels: 0,
        type_counts: BTreeMap::new(),
        severity_counts: BTreeMap::new(),
    };
    for sample in samples {
        stats.contracts += count_contract_decls(&sample.normalized)?;
        stats.functions += sample.functions.len();
        stats.loc += sample.loc;
    }
    for sev in Severity::ALL {
        stats.severity_counts.insert(sev.canonical().to_string(), 0);
    }
    for label in labels {
        if !ids.contains(label.contract_id.as_str()) {
            return Err(Error::DanglingLabel(label.contract_id.clone()));
        }
        if label.vulnerable {
            stats.true_labels += 1;
            if let Some(class) = label.class {
                *stats
                    .type_counts
                    .entry(class.canonical().to_string())
                    .or_insert(0) += 1;
            }
        } else {
            stats.false_labels += 1;
        }
        *stats
            .severity_counts
            .entry(label.severity.canonical().to_string())
            .or_insert(0) += 1;
    }
    Ok(stats)
}

/// One line of the corpus manifest (JSON Lines). Field order is the wire
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub path: String,
    pub compiler_version: Option<String>,
    pub hash: String,
    pub loc: usize,
    pub functions: usize,
}

impl ManifestRecord {
    pub fn from_sample(sample: &ContractSample, path: &Path) -> ManifestRecord {
        ManifestRecord {
            id: sample.id.clone(),
            path: path.display().to_string(),
            compiler_version: sample.compiler_version.clone(),
            hash: sample.hash.clone(),
            loc: sample.loc,
            functions: sample.functions.len(),
        }
    }
}

/// Read a JSONL manifest, reporting the offending line on parse failure.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load the samples referenced by a manifest, resolving relative paths
/// against the manifest's parent directory.
pub fn load_samples(manifest_path: &Path) -> Result<Vec<ContractSample>> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    for record in read_manifest(manifest_path)? {
        let path = Path::new(&record.path);
        let resolved = if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        };
        let source = std::fs::read_to_string(&resolved)?;
        samples.push(ContractSample::from_source(record.id, source)?);
    }
    Ok(samples)
}
