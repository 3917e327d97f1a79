//! Character-offset text utilities: word tokenization and case-folded search.
//!
//! All offsets count Unicode scalar values and are end-exclusive.

use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Token {
    pub value: String,
    pub start: u32,
    pub end: u32,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Splits text into maximal runs of letters, digits and apostrophes.
/// Token values are lowercased; offsets point into the original text.
pub fn tokenize_words(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(u32, String)> = None;
    let mut pos = 0u32;
    for c in text.chars() {
        if is_word_char(c) {
            let (_, value) = current.get_or_insert_with(|| (pos, String::new()));
            value.extend(c.to_lowercase());
        } else if let Some((start, value)) = current.take() {
            tokens.push(Token {
                value,
                start,
                end: pos,
            });
        }
        pos += 1;
    }
    if let Some((start, value)) = current {
        tokens.push(Token {
            value,
            start,
            end: pos,
        });
    }
    tokens
}

/// Per-character lowercase. Unlike `str::to_lowercase` this has no
/// context-sensitive rules, so folded positions map back to source characters.
pub fn fold(text: &str) -> String {
    text.chars().flat_map(char::to_lowercase).collect()
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slice by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(core::iter::once(text.len()));
    let from = indices.nth(start)?;
    let to = if end == start {
        from
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[from..to])
}

/// Substring test with optional case folding.
pub fn contains(haystack: &str, needle: &str, case_sensitive: bool) -> bool {
    if case_sensitive {
        haystack.contains(needle)
    } else {
        fold(haystack).contains(&fold(needle) as &str)
    }
}

/// Text prepared for repeated searches that report source character offsets.
pub struct SearchText {
    chars: Vec<char>,
    source_pos: Vec<u32>,
    source_len: u32,
}

impl SearchText {
    pub fn new(text: &str, case_sensitive: bool) -> Self {
        let mut chars = Vec::with_capacity(text.len());
        let mut source_pos = Vec::with_capacity(text.len());
        let mut n = 0u32;
        for (i, c) in text.chars().enumerate() {
            if case_sensitive {
                chars.push(c);
                source_pos.push(i as u32);
            } else {
                for l in c.to_lowercase() {
                    chars.push(l);
                    source_pos.push(i as u32);
                }
            }
            n += 1;
        }
        Self {
            chars,
            source_pos,
            source_len: n,
        }
    }

    fn map_range(&self, from: usize, to: usize) -> (u32, u32) {
        let start = self.source_pos[from];
        let end = self.source_pos[to - 1] + 1;
        (start, end.min(self.source_len))
    }

    /// First occurrence starting at or after source character `from`.
    pub fn find_from(&self, needle: &[char], from: u32) -> Option<(u32, u32)> {
        if needle.is_empty() || needle.len() > self.chars.len() {
            return None;
        }
        let first = self.source_pos.partition_point(|&p| p < from);
        (first..=self.chars.len() - needle.len())
            .find(|&i| self.chars[i..i + needle.len()] == *needle)
            .map(|i| self.map_range(i, i + needle.len()))
    }

    /// All non-overlapping occurrences, left to right.
    pub fn find_all(&self, needle: &[char]) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let mut from = 0;
        while let Some((s, e)) = self.find_from(needle, from) {
            out.push((s, e));
            from = e;
        }
        out
    }
}

/// Needle characters matching the folding of a [`SearchText`].
pub fn needle(query: &str, case_sensitive: bool) -> Vec<char> {
    if case_sensitive {
        query.chars().collect()
    } else {
        query.chars().flat_map(char::to_lowercase).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tok(value: &str, start: u32, end: u32) -> Token {
        Token {
            value: value.into(),
            start,
            end,
        }
    }

    #[test]
    fn tokenizes_the_match_sentence() {
        assert_eq!(
            tokenize_words("we won the wonderful match"),
            vec![
                tok("we", 0, 2),
                tok("won", 3, 6),
                tok("the", 7, 10),
                tok("wonderful", 11, 20),
                tok("match", 21, 26),
            ]
        );
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize_words("").is_empty());
        assert!(tokenize_words("  -- ").is_empty());
    }

    #[test]
    fn hyphen_splits_and_case_folds() {
        assert_eq!(
            tokenize_words("Data-driven"),
            vec![tok("data", 0, 4), tok("driven", 5, 11)]
        );
    }

    #[test]
    fn apostrophes_stay_inside_words() {
        assert_eq!(tokenize_words("don't stop"), vec![tok("don't", 0, 5), tok("stop", 6, 10)]);
    }

    #[test]
    fn offsets_count_characters_not_bytes() {
        assert_eq!(tokenize_words("café au"), vec![tok("café", 0, 4), tok("au", 5, 7)]);
        assert_eq!(char_slice("café au", 5, 7), Some("au"));
        assert_eq!(char_slice("café", 4, 4), Some(""));
        assert_eq!(char_slice("café", 2, 5), None);
    }

    #[test]
    fn folded_search_maps_back_to_source() {
        let text = SearchText::new("Graph GRAPHS", false);
        assert_eq!(text.find_all(&needle("graph", false)), vec![(0, 5), (6, 11)]);
        let exact = SearchText::new("Graph GRAPHS", true);
        assert_eq!(exact.find_all(&needle("GRAPH", true)), vec![(6, 11)]);
    }

    #[test]
    fn expanding_lowercase_keeps_source_offsets() {
        // U+0130 lowercases to two characters.
        let text = SearchText::new("\u{130}x ab", false);
        assert_eq!(text.find_all(&needle("ab", false)), vec![(3, 5)]);
        assert_eq!(text.find_all(&needle("x", false)), vec![(1, 2)]);
    }

    #[test]
    fn contains_folds_case() {
        assert!(contains("analysis of Graphs", "GRAPH", false));
        assert!(!contains("analysis of Graphs", "GRAPH", true));
    }
}
