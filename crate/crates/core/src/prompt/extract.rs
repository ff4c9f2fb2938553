use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct JsonArrayMatch {
    /// Byte offset of the opening `[`.
    pub start: usize,
    /// Byte offset one past the closing `]`.
    pub end: usize,
    pub elements: Vec<Value>,
}

/// Byte offset one past the `]` that balances the `[` at `open`, skipping
/// brackets inside JSON strings.
fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
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
            b'[' => depth += 1,
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn is_object_array(elements: &[Value]) -> bool {
    elements.is_empty() || elements.iter().any(Value::is_object)
}

/// Finds the first `[`-delimited slice of `raw` that parses as a JSON array
/// holding objects (or nothing). Surrounding prose and code fences are
/// ignored; arrays of bare scalars are skipped.
pub fn find_json_array(raw: &str) -> Option<JsonArrayMatch> {
    let bytes = raw.as_bytes();
    for (start, _) in raw.match_indices('[') {
        let Some(end) = balanced_end(bytes, start) else {
            continue;
        };
        if let Ok(Value::Array(elements)) = serde_json::from_str::<Value>(&raw[start..end]) {
            if is_object_array(&elements) {
                return Some(JsonArrayMatch { start, end, elements });
            }
        }
    }
    None
}
