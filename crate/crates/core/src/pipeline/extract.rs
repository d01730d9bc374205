use crate::query::{parse, Query, QueryError};

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the info string (e.g. `javascript`)
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                out.push(body);
                break;
            }
        }
    }
    out
}

/// End (exclusive) of the statement starting at `start`: brackets balance
/// and no `.` chain continues.
fn statement_end(text: &str, start: usize) -> usize {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    let mut quote: Option<u8> = None;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        if let Some(q) = quote {
            if b == b'\\' {
                i += 2;
                continue;
            }
            if b == q {
                quote = None;
            }
        } else {
            match b {
                b'"' | b'\'' => quote = Some(b),
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => {
                    depth -= 1;
                    if depth <= 0 {
                        let next = text[i + 1..].trim_start();
                        if !next.starts_with('.') {
                            let end = i + 1;
                            return if next.starts_with(';') {
                                end + (text[end..].find(';').unwrap_or(0)) + 1
                            } else {
                                end
                            };
                        }
                    }
                }
                b'\n' if depth == 0 && i > start => {
                    let next = text[i + 1..].trim_start();
                    if !next.starts_with('.') {
                        return i;
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    bytes.len()
}

fn statements(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find("db.") {
        let start = from + pos;
        let boundary = text[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !(c.is_alphanumeric() || c == '_' || c == '.' || c == '$'));
        if !boundary {
            from = start + 3;
            continue;
        }
        let end = statement_end(text, start);
        out.push(text[start..end].trim());
        from = end.max(start + 3);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub text: String,
    pub query: Result<Query, QueryError>,
}

/// Picks the query out of a model answer: the last statement of the last
/// fenced code block, else the last `db.` statement anywhere. Earlier
/// candidates are used only when the preferred one does not parse.
pub fn extract_query(response: &str) -> Extracted {
    let mut candidates: Vec<&str> = Vec::new();
    for block in fenced_blocks(response).into_iter().rev() {
        let stmts = statements(block);
        if stmts.is_empty() {
            candidates.push(block.trim());
        } else {
            candidates.extend(stmts.into_iter().rev());
        }
    }
    candidates.extend(statements(response).into_iter().rev());
    candidates.retain(|c| !c.is_empty());
    for c in &candidates {
        if let Ok(q) = parse(c) {
            return Extracted {
                text: (*c).to_owned(),
                query: Ok(q),
            };
        }
    }
    let text = candidates
        .first()
        .copied()
        .unwrap_or(response.trim())
        .to_owned();
    let query = parse(&text);
    Extracted { text, query }
}
