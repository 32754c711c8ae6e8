//! Word-boundary string matching.
//!
//! A match of `needle` is *standalone* when it is not glued to a word
//! character on either side. Needles that start or end with punctuation
//! (`U.S.`) only need the boundary on their word-character ends.

use crate::model::Span;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_standalone(haystack: &str, start: usize, end: usize) -> bool {
    let needle = &haystack[start..end];
    let left_ok = match (needle.chars().next(), haystack[..start].chars().next_back()) {
        (Some(first), Some(prev)) => !(is_word_char(first) && is_word_char(prev)),
        _ => true,
    };
    let right_ok = match (needle.chars().next_back(), haystack[end..].chars().next()) {
        (Some(last), Some(next)) => !(is_word_char(last) && is_word_char(next)),
        _ => true,
    };
    left_ok && right_ok
}

/// Leftmost non-overlapping standalone occurrences of `needle`.
pub fn find_standalone(haystack: &str, needle: &str) -> Vec<Span> {
    let mut out = Vec::new();
    if needle.is_empty() {
        return out;
    }
    let mut pos = 0;
    while let Some(rel) = haystack[pos..].find(needle) {
        let start = pos + rel;
        let end = start + needle.len();
        if is_standalone(haystack, start, end) {
            out.push(Span::new(start, end));
            pos = end;
        } else {
            pos = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
        }
    }
    out
}

pub fn contains_standalone(haystack: &str, needle: &str) -> bool {
    !find_standalone(haystack, needle).is_empty()
}

pub fn count_standalone(haystack: &str, needle: &str) -> usize {
    find_standalone(haystack, needle).len()
}

/// Replaces every standalone occurrence of `from` with `to`, returning the
/// new text and the spans the insertions occupy in it.
pub fn replace_standalone(text: &str, from: &str, to: &str) -> (String, Vec<Span>) {
    let hits = find_standalone(text, from);
    let mut out = String::with_capacity(text.len());
    let mut inserted = Vec::with_capacity(hits.len());
    let mut last = 0;
    for h in hits {
        out.push_str(&text[last..h.start]);
        let s = out.len();
        out.push_str(to);
        inserted.push(Span::new(s, out.len()));
        last = h.end;
    }
    out.push_str(&text[last..]);
    (out, inserted)
}

/// Simultaneous standalone replacement of several words. At equal start
/// positions the longest source word wins. Matches overlapping a `protected`
/// span are left alone.
pub fn replace_words_simultaneously(
    text: &str,
    mapping: &[(String, String)],
    protected: &[Span],
) -> String {
    let mut hits: Vec<(Span, usize)> = mapping
        .iter()
        .enumerate()
        .flat_map(|(i, (from, _))| find_standalone(text, from).into_iter().map(move |s| (s, i)))
        .filter(|(s, _)| !protected.iter().any(|p| p.overlaps(s)))
        .collect();
    hits.sort_by(|(a, ia), (b, ib)| {
        a.start
            .cmp(&b.start)
            .then(b.len().cmp(&a.len()))
            .then(ia.cmp(ib))
    });

    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (span, i) in hits {
        if span.start < last {
            continue;
        }
        out.push_str(&text[last..span.start]);
        out.push_str(&mapping[i].1);
        last = span.end;
    }
    out.push_str(&text[last..]);
    out
}
