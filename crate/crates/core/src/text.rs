//! Tokenization shared by term extraction and tf-idf featurization.
//!
//! A token is a maximal run of alphanumeric characters; whitespace and every
//! other character (punctuation, symbols) separate tokens. Tokens are
//! lowercased. Spans are counted in Unicode scalar values, not bytes.

/// One token of a source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    /// Character offset of the first character.
    pub start: usize,
    /// Character offset one past the last character.
    pub end: usize,
    /// Byte range into the source, for slicing.
    pub byte_start: usize,
    pub byte_end: usize,
    /// Original surface form.
    pub surface: &'a str,
    /// Lowercased form.
    pub norm: String,
}

pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (char start, byte start)
    let mut char_pos = 0usize;
    for (byte_pos, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if current.is_none() {
                current = Some((char_pos, byte_pos));
            }
        } else if let Some((cs, bs)) = current.take() {
            out.push(make_token(text, cs, char_pos, bs, byte_pos));
        }
        char_pos += 1;
    }
    if let Some((cs, bs)) = current {
        out.push(make_token(text, cs, char_pos, bs, text.len()));
    }
    out
}

fn make_token(text: &str, start: usize, end: usize, byte_start: usize, byte_end: usize) -> Token<'_> {
    let surface = &text[byte_start..byte_end];
    Token { start, end, byte_start, byte_end, surface, norm: surface.to_lowercase() }
}

/// Lowercased tokens only.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.norm).collect()
}

/// Canonical form of a phrase: its normalized tokens joined by single spaces.
pub fn normalize_phrase(text: &str) -> String {
    normalized_tokens(text).join(" ")
}
