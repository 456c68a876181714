//! Strict parsers for the three model output formats.

use std::collections::HashSet;

use serde::Deserialize;
use thiserror::Error;

use crate::supervision::{FormationGroup, FormationTemplate, Intent, VerificationVerdict};
use crate::dynamics::SwarmState;
use crate::Vec3;

/// Byte offsets refer to the text after code fences are removed and whitespace trimmed.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty output")]
    Empty,
    #[error("invalid JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("extra text outside the JSON object at bytes {start}..{end}")]
    ExtraText { start: usize, end: usize },
    #[error("missing field `{field}` in object at bytes {start}..{end}")]
    MissingField { field: String, start: usize, end: usize },
    #[error("invalid value at bytes {start}..{end}: {message}")]
    Invalid { message: String, start: usize, end: usize },
    #[error("expected CSV header `id,x,y,z`, got {0:?}")]
    Header(String),
    #[error("expected {expected} rows, got {got}")]
    RowCount { expected: usize, got: usize },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("duplicate id {0}")]
    DuplicateId(usize),
    #[error("id {id} outside 0..{count}")]
    IdRange { id: usize, count: usize },
    #[error("ids {0} and {1} share a location")]
    DuplicatePoint(usize, usize),
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let body = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => rest,
    };
    body.strip_suffix("```").unwrap_or(body).trim()
}

fn offset_of(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Isolates exactly one JSON object; anything around it is an error.
fn single_object(text: &str) -> Result<(&str, usize), ParseError> {
    if text.is_empty() {
        return Err(ParseError::Empty);
    }
    if !text.starts_with('{') {
        return match text.find('{') {
            Some(i) => Err(ParseError::ExtraText { start: 0, end: i }),
            None => Err(json_error(text, serde_json::from_str::<serde_json::Value>(text).unwrap_err())),
        };
    }
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<serde_json::Value>();
    match stream.next() {
        Some(Ok(_)) => {}
        Some(Err(e)) => return Err(json_error(text, e)),
        None => return Err(ParseError::Empty),
    }
    let end = stream.byte_offset();
    if !text[end..].trim().is_empty() {
        return Err(ParseError::ExtraText { start: end, end: text.len() });
    }
    Ok((&text[..end], end))
}

fn json_error(text: &str, e: serde_json::Error) -> ParseError {
    ParseError::Json { offset: offset_of(text, e.line(), e.column()), message: e.to_string() }
}

fn data_error(e: serde_json::Error, end: usize) -> ParseError {
    let msg = e.to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(field) = rest.split('`').next() {
            return ParseError::MissingField { field: field.to_string(), start: 0, end };
        }
    }
    ParseError::Invalid { message: msg, start: 0, end }
}

/// Motion Descriptor output to an intent; defaults follow the prompt rules.
pub fn parse_motion_descriptor(raw: &str) -> Result<Intent, ParseError> {
    let text = strip_fences(raw);
    let (object, end) = single_object(text)?;
    serde_json::from_str::<Intent>(object).map_err(|e| data_error(e, end))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Feedback {
    feedback: bool,
    reason: String,
}

/// Auto-correction output; `feedback: true` means the formation needs revision.
pub fn parse_feedback_json(raw: &str) -> Result<VerificationVerdict, ParseError> {
    let text = strip_fences(raw);
    let (object, end) = single_object(text)?;
    let f: Feedback = serde_json::from_str(object).map_err(|e| data_error(e, end))?;
    Ok(if f.feedback { VerificationVerdict::revise(f.reason) } else { VerificationVerdict::consistent(f.reason) })
}

/// Formation Instruction output: header `id,x,y,z` and exactly `expected` rows.
pub fn parse_formation_csv(raw: &str, expected: usize) -> Result<FormationTemplate, ParseError> {
    let text = strip_fences(raw);
    if text.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| ParseError::Header(e.to_string()))?.clone();
    let names: Vec<String> = header.iter().map(str::to_ascii_lowercase).collect();
    if names != ["id", "x", "y", "z"] {
        return Err(ParseError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows: Vec<(usize, Vec3)> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| ParseError::Row { row, message: e.to_string() })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 4 {
            return Err(ParseError::Row { row, message: format!("expected 4 fields, got {}", record.len()) });
        }
        let id: usize = record[0]
            .parse()
            .map_err(|_| ParseError::Row { row, message: format!("id {:?} is not a non-negative integer", &record[0]) })?;
        let mut p = Vec3::zeros();
        for c in 0..3 {
            let v: f64 = record[c + 1]
                .parse()
                .map_err(|_| ParseError::Row { row, message: format!("{:?} is not a number", &record[c + 1]) })?;
            if !v.is_finite() {
                return Err(ParseError::Row { row, message: "non-finite coordinate".into() });
            }
            p[c] = v;
        }
        rows.push((id, p));
    }
    if rows.len() != expected {
        return Err(ParseError::RowCount { expected, got: rows.len() });
    }
    let mut seen = HashSet::new();
    for &(id, _) in &rows {
        if !seen.insert(id) {
            return Err(ParseError::DuplicateId(id));
        }
        if id >= expected {
            return Err(ParseError::IdRange { id, count: expected });
        }
    }
    rows.sort_by_key(|&(id, _)| id);
    for (i, (a, p)) in rows.iter().enumerate() {
        for (b, q) in &rows[i + 1..] {
            if (p - q).norm() < 1e-9 {
                return Err(ParseError::DuplicatePoint(*a, *b));
            }
        }
    }
    Ok(FormationTemplate { shape: None, offsets: rows.into_iter().map(|(_, p)| p).collect() })
}

/// Current positions of each group relative to its center, in the checker's input layout.
pub fn feedback_csv(groups: &[FormationGroup], state: &SwarmState) -> String {
    let mut out = String::new();
    for (g, group) in groups.iter().enumerate() {
        out.push_str(&format!("# group {g}\nid,x,y,z\n"));
        for &i in &group.members {
            let d = state.drones[i] - group.center;
            out.push_str(&format!("{i},{:.3},{:.3},{:.3}\n", d.x, d.y, d.z));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supervision::{Mode, Shape};

    #[test]
    fn fences_are_removed() {
        assert_eq!(strip_fences("```json\n{\"a\":1}\n```"), "{\"a\":1}");
        assert_eq!(strip_fences("  {\"a\":1} "), "{\"a\":1}");
        assert_eq!(strip_fences("```\nid,x,y,z\n```"), "id,x,y,z");
    }

    #[test]
    fn descriptor_defaults() {
        let i = parse_motion_descriptor(r#"{"mode":"stationary"}"#).unwrap();
        assert_eq!(i.mode, Mode::Stationary);
        assert_eq!(i.formation, Shape::Grid);
        assert_eq!(i.spacing, 2.0);
        assert!(!i.even_split && !i.tracking);
    }

    #[test]
    fn descriptor_errors_are_typed() {
        assert!(matches!(
            parse_motion_descriptor(r#"here you go: {"mode":"track"}"#),
            Err(ParseError::ExtraText { start: 0, end: 13 })
        ));
        assert!(matches!(
            parse_motion_descriptor(r#"{"formation":"grid"}"#),
            Err(ParseError::MissingField { ref field, .. }) if field == "mode"
        ));
        assert!(matches!(parse_motion_descriptor("{\"mode\":"), Err(ParseError::Json { .. })));
        assert!(matches!(parse_motion_descriptor(""), Err(ParseError::Empty)));
    }

    #[test]
    fn group_names_map_to_targets() {
        let i = parse_motion_descriptor(r#"{"mode":"track","groups":["car1","car3"]}"#).unwrap();
        assert_eq!(i.tracked_targets(), vec![0, 2]);
        assert!(parse_motion_descriptor(r#"{"mode":"track","groups":["car0"]}"#).is_err());
    }

    #[test]
    fn csv_happy_path_orders_by_id() {
        let t = parse_formation_csv("id,x,y,z\n1,2,0,0\n0,0,0,0\n", 2).unwrap();
        assert_eq!(t.offsets, vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]);
    }

    #[test]
    fn feedback_layout() {
        let state = SwarmState::new(0.0, vec![Vec3::new(1.0, 2.0, 3.0)], vec![]);
        let g = FormationGroup {
            anchor: crate::supervision::GroupAnchor::World([0.0, 0.0, 0.0]),
            shape: Shape::Grid,
            members: vec![0],
            slots: vec![0],
            template: vec![Vec3::zeros()],
            center: Vec3::new(1.0, 0.0, 0.0),
            references: vec![Vec3::zeros()],
        };
        assert_eq!(feedback_csv(&[g], &state), "# group 0\nid,x,y,z\n0,0.000,2.000,3.000\n");
    }
}
