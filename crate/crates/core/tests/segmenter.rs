use std::num::NonZeroUsize;

use proptest::prelude::*;
use sciqa_core::segmenter::{make_passages, split_sentences, DEFAULT_GROUP_SIZE};

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{2,9}",
        "[a-z]{3,6},",
        Just("e.g.".to_string()),
        Just("Dr.".to_string()),
        Just("3.14".to_string()),
        "[A-Z][a-z]{1,7}",
    ]
}

fn sentence() -> impl Strategy<Value = String> {
    (
        "[A-Z][a-z]{1,8}",
        prop::collection::vec(word(), 1..12),
        prop_oneof![Just('.'), Just('!'), Just('?')],
    )
        .prop_map(|(head, rest, end)| format!("{head} {}{end}", rest.join(" ")))
}

fn paragraph() -> impl Strategy<Value = (Vec<String>, String)> {
    prop::collection::vec(
        (sentence(), prop_oneof![Just(" "), Just("  "), Just("\n")]),
        1..12,
    )
    .prop_map(|parts| {
        let sentences: Vec<String> = parts.iter().map(|p| p.0.clone()).collect();
        let mut text = String::new();
        for (s, gap) in &parts {
            text.push_str(s);
            text.push_str(gap);
        }
        (sentences, text)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn coverage_is_lossless((expected, text) in paragraph()) {
        let chars: Vec<char> = text.chars().collect();
        let spans = split_sentences(&text);

        let mut covered = vec![false; chars.len()];
        let mut last_end = 0;
        for s in &spans {
            prop_assert!(s.start >= last_end && s.start < s.end);
            let slice: String = chars[s.start..s.end].iter().collect();
            prop_assert_eq!(&slice, &s.text);
            for c in &mut covered[s.start..s.end] {
                *c = true;
            }
            last_end = s.end;
        }
        for (c, seen) in chars.iter().zip(&covered) {
            prop_assert!(*seen || c.is_whitespace(), "dropped {:?}", c);
        }
        // Generated sentences never end inside; an abbreviation or a
        // lowercase continuation never starts one.
        let texts: Vec<&str> = spans.iter().map(|s| s.text.as_str()).collect();
        prop_assert_eq!(texts, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn passages_are_small_and_consecutive((_, text) in paragraph(), group in 1usize..5) {
        let spans = split_sentences(&text);
        let group = NonZeroUsize::new(group).unwrap();
        let passages = make_passages("p", &spans, group);
        let mut next = 0;
        for (i, p) in passages.iter().enumerate() {
            prop_assert_eq!(p.ordinal, i);
            prop_assert_eq!(p.sentences.start, next);
            prop_assert!(p.sentence_count() >= 1 && p.sentence_count() <= group.get());
            let joined: Vec<&str> = spans[p.sentences.clone()].iter().map(|s| s.text.as_str()).collect();
            prop_assert_eq!(&p.text, &joined.join(" "));
            next = p.sentences.end;
        }
        prop_assert_eq!(next, spans.len());
    }
}

#[test]
fn default_groups_are_three() {
    let text = "One a. Two b. Three c. Four d. Five e. Six f. Seven g.";
    // Single letters before a period are not boundaries, so use words.
    assert_eq!(split_sentences(text).len(), 1);

    let text = "One ab. Two ab. Three ab. Four ab. Five ab. Six ab. Seven ab.";
    let spans = split_sentences(text);
    assert_eq!(spans.len(), 7);
    let sizes: Vec<usize> = make_passages("x", &spans, DEFAULT_GROUP_SIZE)
        .iter()
        .map(|p| p.sentence_count())
        .collect();
    assert_eq!(sizes, [3, 3, 1]);
}

#[test]
fn figure_reference_is_not_a_boundary() {
    let spans = split_sentences("See the diagram (Fig. 3) for details. It shows a cell.");
    assert_eq!(spans.len(), 2);
    assert!(spans[0].text.ends_with("details."));
}

#[test]
fn offsets_are_characters_not_bytes() {
    let text = "Água é vital. Ésta es otra.";
    let spans = split_sentences(text);
    assert_eq!(spans.len(), 2);
    assert_eq!(spans[1].start, 14);
    assert_eq!(spans[1].text, "Ésta es otra.");
}
