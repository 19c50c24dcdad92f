use serde::{Deserialize, Serialize};

use super::{Lexicon, SemType};
use crate::text::tokenize;

/// One lexicon match in a text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermHit {
    /// Character offsets `[start, end)`.
    pub char_span: (usize, usize),
    pub surface: String,
    pub canonical: String,
    pub semtype: SemType,
}

/// Case-insensitive, token-aligned, leftmost-longest lexicon matching.
/// Returned hits are non-overlapping and sorted by start.
pub fn extract_terms(text: &str, lexicon: &Lexicon) -> Vec<TermHit> {
    let tokens = tokenize(text);
    let mut hits = Vec::new();
    let max = lexicon.max_tokens();
    let mut i = 0;
    while i < tokens.len() {
        let longest = max.min(tokens.len() - i);
        let mut matched = 0;
        for len in (1..=longest).rev() {
            let key = tokens[i..i + len].iter().map(|t| t.norm.as_str()).collect::<Vec<_>>().join(" ");
            if let Some(semtype) = lexicon.get(&key) {
                let (first, last) = (&tokens[i], &tokens[i + len - 1]);
                hits.push(TermHit {
                    char_span: (first.start, last.end),
                    surface: text[first.byte_start..last.byte_end].to_string(),
                    canonical: key,
                    semtype,
                });
                matched = len;
                break;
            }
        }
        i += matched.max(1);
    }
    hits
}

/// Fraction of the text's tokens that fall inside a hit; 0 for text without
/// tokens.
pub fn med_score(hits: &[TermHit], text: &str) -> f64 {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return 0.0;
    }
    let mut covered = 0usize;
    let mut h = 0;
    for t in &tokens {
        while h < hits.len() && hits[h].char_span.1 <= t.start {
            h += 1;
        }
        if let Some(hit) = hits.get(h) {
            if hit.char_span.0 <= t.start && t.end <= hit.char_span.1 {
                covered += 1;
            }
        }
    }
    covered as f64 / tokens.len() as f64
}
