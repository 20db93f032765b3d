//! Rule-based sentence splitting and grouping of sentences into passages.
//!
//! A sentence ends at `.`, `!` or `?` when the mark is followed by the end of
//! the text, or by whitespace and then an uppercase letter. A period does not
//! end a sentence when the word it terminates is a known abbreviation
//! (`Dr.`, `e.g.`, `Fig.`, ...) or a single letter (`J. Smith`).
//!
//! Offsets are character offsets, not byte offsets.

use std::num::NonZeroUsize;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Words that never end a sentence when followed by a period.
pub const ABBREVIATIONS: &[&str] = &[
    "Dr", "Mr", "Mrs", "Ms", "Prof", "e.g", "i.e", "etc", "vs", "Fig", "No", "St",
];

/// Default number of sentences per passage.
pub const DEFAULT_GROUP_SIZE: NonZeroUsize = match NonZeroUsize::new(3) {
    Some(n) => n,
    None => unreachable!(),
};

/// A sentence located inside its source paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    /// Character offset of the first character (inclusive).
    pub start: usize,
    /// Character offset one past the last character (exclusive).
    pub end: usize,
    pub text: String,
}

/// A group of consecutive sentences from one paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassageDraft {
    pub paragraph_id: String,
    pub ordinal: usize,
    /// Sentence texts joined by a single space.
    pub text: String,
    /// Indices into the sentence list this passage was built from.
    pub sentences: Range<usize>,
}

impl PassageDraft {
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }
}

/// Split a paragraph into sentences.
pub fn split_sentences(paragraph: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = paragraph.chars().collect();
    let mut spans = Vec::new();
    let mut cursor = 0;

    loop {
        // Skip inter-sentence whitespace.
        while cursor < chars.len() && chars[cursor].is_whitespace() {
            cursor += 1;
        }
        if cursor >= chars.len() {
            break;
        }
        let start = cursor;
        let mut end = None;
        let mut i = start;
        while i < chars.len() {
            if is_boundary(&chars, start, i) {
                end = Some(i + 1);
                break;
            }
            i += 1;
        }
        let end = end.unwrap_or_else(|| {
            // Unterminated tail: trim trailing whitespace.
            let mut e = chars.len();
            while e > start && chars[e - 1].is_whitespace() {
                e -= 1;
            }
            e
        });
        spans.push(SentenceSpan {
            start,
            end,
            text: chars[start..end].iter().collect(),
        });
        cursor = end;
    }
    spans
}

fn is_boundary(chars: &[char], sentence_start: usize, i: usize) -> bool {
    let c = chars[i];
    if !matches!(c, '.' | '!' | '?') {
        return false;
    }
    let mut j = i + 1;
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    let followed_ok = if j == chars.len() {
        true
    } else {
        j > i + 1 && chars[j].is_uppercase()
    };
    if !followed_ok {
        return false;
    }
    if c == '.' && ends_abbreviation(chars, sentence_start, i) {
        return false;
    }
    true
}

/// Whether the token terminated by the period at `dot` is an abbreviation or
/// a single letter.
fn ends_abbreviation(chars: &[char], sentence_start: usize, dot: usize) -> bool {
    let mut k = dot;
    while k > sentence_start && !chars[k - 1].is_whitespace() {
        k -= 1;
    }
    let token: String = chars[k..dot]
        .iter()
        .skip_while(|c| !c.is_alphanumeric())
        .collect();
    let mut letters = token.chars();
    let single_letter =
        matches!((letters.next(), letters.next()), (Some(c), None) if c.is_alphabetic());
    single_letter || ABBREVIATIONS.contains(&token.as_str())
}

/// Group sentences into consecutive, non-overlapping passages of at most
/// `group_size` sentences. A shorter final group is kept.
pub fn make_passages(
    paragraph_id: &str,
    sentences: &[SentenceSpan],
    group_size: NonZeroUsize,
) -> Vec<PassageDraft> {
    sentences
        .chunks(group_size.get())
        .enumerate()
        .map(|(ordinal, group)| {
            let first = ordinal * group_size.get();
            PassageDraft {
                paragraph_id: paragraph_id.to_string(),
                ordinal,
                text: group
                    .iter()
                    .map(|s| s.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                sentences: first..first + group.len(),
            }
        })
        .collect()
}
