//! Rule-based sentence segmentation for clinical notes.
//!
//! Boundaries are terminator runs (`.`, `!`, `?` plus closing quotes or
//! brackets) followed by whitespace, unless the word before a period is a
//! guarded abbreviation or an initial, or the next word starts lowercase.
//! Blank lines and list-like lines (bullets, numbered items) always break.

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "pt", "pts", "vs", "e.g", "i.e", "approx", "appt", "dept", "hx",
    "dx", "tx", "rx", "sx", "fx", "no", "inc", "mt", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec", "a.m", "p.m", "q.d", "b.i.d", "t.i.d", "q.i.d", "p.o", "y.o", "h.o", "s.p", "w", "min", "max",
    "fig", "ref", "cf",
];

fn is_list_like(line: &str) -> bool {
    let t = line.trim_start();
    let mut chars = t.chars();
    match chars.next() {
        Some('-' | '*' | '•' | '·' | '–' | '▪' | '☐' | '☑' | '☒' | '□' | '■') => true,
        Some('[') => t.starts_with("[ ]") || t.starts_with("[x]") || t.starts_with("[X]"),
        Some(c) if c.is_ascii_digit() => {
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            digits <= 3
                && matches!(t[digits..].chars().next(), Some('.' | ')'))
                && t[digits + 1..].starts_with(char::is_whitespace)
        }
        _ => false,
    }
}

/// Byte ranges of blocks that sentences never cross.
fn blocks(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut block_start: Option<usize> = None;
    let mut block_end = 0;
    let mut prev_list = false;
    let mut offset = 0;
    for raw_line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += raw_line.len();
        let line = raw_line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            if let Some(s) = block_start.take() {
                out.push((s, block_end));
            }
            prev_list = false;
            continue;
        }
        let list = is_list_like(line);
        if (list || prev_list) && block_start.is_some() {
            out.push((block_start.take().unwrap(), block_end));
        }
        block_start.get_or_insert(line_start);
        block_end = line_start + line.len();
        prev_list = list;
    }
    if let Some(s) = block_start {
        out.push((s, block_end));
    }
    out
}

fn guarded_word(before: &str) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(['(', '[', '"', '\'']);
    if word.chars().count() == 1 && word.chars().all(char::is_alphabetic) {
        return true;
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// A bare item number such as the `1` of `1. Follow up`.
fn is_list_number(so_far: &str) -> bool {
    let t = so_far.trim();
    (1..=3).contains(&t.len()) && t.bytes().all(|b| b.is_ascii_digit())
}

fn split_block(block: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = block.char_indices().collect();
    let mut sentence_start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let only_period = c == '.';
        let mut j = i + 1;
        let mut all_periods = only_period;
        while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?' | '"' | '\'' | ')' | ']') {
            if matches!(chars[j].1, '!' | '?') {
                all_periods = false;
            }
            j += 1;
        }
        let end = chars.get(j).map_or(block.len(), |(p, _)| *p);
        let at_end = j >= chars.len();
        let followed_by_space = at_end || chars[j].1.is_whitespace();
        if !followed_by_space {
            i = j;
            continue;
        }
        if !at_end {
            let so_far = &block[sentence_start..pos];
            if all_periods && (guarded_word(so_far) || is_list_number(so_far)) {
                i = j;
                continue;
            }
            let next = chars[j..].iter().find(|(_, ch)| !ch.is_whitespace()).map(|(_, ch)| *ch);
            if next.is_some_and(char::is_lowercase) {
                i = j;
                continue;
            }
        }
        out.push((sentence_start, end));
        sentence_start = end;
        i = j;
    }
    if sentence_start < block.len() {
        out.push((sentence_start, block.len()));
    }
    out
}

/// Splits text into trimmed sentence slices in document order.
pub fn segment_text(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for (bs, be) in blocks(text) {
        let block = &text[bs..be];
        for (s, e) in split_block(block) {
            let sentence = block[s..e].trim();
            if !sentence.is_empty() {
                out.push(sentence);
            }
        }
    }
    out
}
