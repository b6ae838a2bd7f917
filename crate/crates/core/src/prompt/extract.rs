use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::TopicDescriptor;

/// First topic descriptor found in a model reply.
///
/// Code fences and surrounding prose are skipped; key spelling is matched
/// case-insensitively (`topic_Description` is accepted) and the name is
/// normalized.
pub fn extract_descriptor(text: &str) -> Result<TopicDescriptor> {
    json_values(text)
        .iter()
        .find_map(|v| {
            let mut found = Vec::new();
            collect(v, &mut found);
            found.into_iter().next()
        })
        .ok_or_else(|| no_descriptor(text))
}

/// Every descriptor in a reply, in order of appearance. Accepts separate
/// objects, arrays of objects, or a wrapper object holding either.
pub fn extract_descriptor_set(text: &str) -> Result<Vec<TopicDescriptor>> {
    let mut found = Vec::new();
    for v in json_values(text) {
        collect(&v, &mut found);
    }
    if found.is_empty() {
        return Err(no_descriptor(text));
    }
    Ok(found)
}

fn no_descriptor(text: &str) -> Error {
    let head: String = text.chars().take(80).collect();
    Error::ParseFailure(format!("no JSON object with topic_name and topic_description in {head:?}"))
}

fn collect(value: &Value, out: &mut Vec<TopicDescriptor>) {
    if let Some(d) = descriptor_from(value) {
        out.push(d);
        return;
    }
    match value {
        Value::Array(items) => items.iter().for_each(|v| collect(v, out)),
        Value::Object(map) => map.values().for_each(|v| collect(v, out)),
        _ => {}
    }
}

fn descriptor_from(value: &Value) -> Option<TopicDescriptor> {
    let map = value.as_object()?;
    let field = |want: &str| {
        map.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(want))
            .and_then(|(_, v)| v.as_str())
    };
    let name = field("topic_name")?;
    let description = field("topic_description")?;
    let trimmed = name.trim();
    // an echoed format example such as "<topicName>"
    if trimmed.starts_with('<') && trimmed.ends_with('>') {
        return None;
    }
    TopicDescriptor::new(name, description).ok()
}

/// Parseable top-level JSON objects and arrays embedded in `text`.
fn json_values(text: &str) -> Vec<Value> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'{' | b'[') {
            if let Some(end) = balanced_end(bytes, i) {
                if let Some(v) = parse_lenient(&text[i..=end]) {
                    out.push(v);
                    i = end + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

/// Index of the bracket closing the one at `start`, string-aware.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_lenient(slice: &str) -> Option<Value> {
    serde_json::from_str(slice)
        .ok()
        .or_else(|| serde_json::from_str(&repair(slice)).ok())
}

/// Escapes raw control characters inside strings and drops trailing commas.
fn repair(slice: &str) -> String {
    let mut out = String::with_capacity(slice.len() + 8);
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = slice.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => {
                    escaped = false;
                    out.push(c);
                }
                '\\' => {
                    escaped = true;
                    out.push(c);
                }
                '"' => {
                    in_string = false;
                    out.push(c);
                }
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if c.is_control() => {}
                c => out.push(c),
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(c);
                }
            }
            c => out.push(c),
        }
    }
    out
}
