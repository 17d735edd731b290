//! Term tokenization shared by the corpus statistics and the lexical index.

/// Lowercases and splits on every non-alphanumeric character. No stemming,
/// no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Number of whitespace-separated tokens, used for average document length.
pub fn whitespace_len(text: &str) -> usize {
    text.split_whitespace().count()
}
