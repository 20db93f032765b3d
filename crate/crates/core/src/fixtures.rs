//! Seeded synthetic data in the on-disk formats the service ingests:
//! paragraph JSON lines, exam CSV files, topic CSV rows and event logs.
//! Used by tests and for local demos.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{Event, FeedbackEvent, UsageEvent, UsageKind, Vote};
use crate::corpus::{
    is_valid_exam_year, Section, EXAM_CSV_HEADER, FIRST_EXAM_YEAR, LAST_EXAM_YEAR,
};
use crate::topics::default_topic_labels;

pub const SKY_PARAGRAPH: &str =
    "Blue is the color of the Earth's sky and sea. Earth looks blue when seen from outer space by astronauts.";

const FILLER: &[&str] = &[
    "the",
    "study",
    "of",
    "science",
    "shows",
    "that",
    "many",
    "students",
    "learn",
    "about",
    "important",
    "ideas",
    "in",
    "class",
    "and",
    "observe",
    "results",
    "during",
    "experiments",
];

/// Letters-only pseudo-word for keyword `j` of topic `t`.
fn keyword(t: usize, j: usize) -> String {
    const LETTERS: &[u8] = b"bcdfghjklmnpqrstvwxz";
    let mut n = t * 64 + j + 1;
    let mut s = String::from("q");
    while n > 0 {
        s.push(LETTERS[n % LETTERS.len()] as char);
        n /= LETTERS.len();
    }
    s.push_str("ium");
    s
}

fn sentence(rng: &mut impl Rng, topic: usize, keywords: usize) -> String {
    let mut words: Vec<String> = (0..keywords)
        .map(|_| keyword(topic, rng.gen_range(0..12)))
        .collect();
    for _ in 0..4 {
        words.push(FILLER.choose(rng).expect("non-empty").to_string());
    }
    words.shuffle(rng);
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// Topic CSV rows: `per_label` passages for each of the 48 default labels,
/// each passage built from its label's private keywords plus shared filler.
pub fn separable_topic_samples(per_label: usize, seed: u64) -> Vec<(String, String)> {
    let labels = default_topic_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(labels.len() * per_label);
    for (t, label) in labels.iter().enumerate() {
        for _ in 0..per_label {
            out.push((sentence(&mut rng, t, 5), label.clone()));
        }
    }
    out
}

/// Paragraph JSON lines. The first paragraph is [`SKY_PARAGRAPH`]; the rest
/// are synthetic, `sentences` sentences each, cycling through topics.
pub fn paragraph_jsonl(paragraphs: usize, sentences: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_topics = default_topic_labels().len();
    let mut out = String::new();
    for i in 0..paragraphs {
        let text = if i == 0 {
            SKY_PARAGRAPH.to_string()
        } else {
            (0..sentences)
                .map(|_| sentence(&mut rng, i % n_topics, 3))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let line = serde_json::json!({
            "id": format!("para-{i:06}"),
            "source": "textbook_dataset",
            "heading": format!("Lesson {}", i % n_topics),
            "text": text,
            "figure_refs": if i % 50 == 1 { vec![format!("fig-{i}")] } else { vec![] },
        });
        writeln!(out, "{line}").expect("string write");
    }
    out
}

/// Figure manifest lines for every figure [`paragraph_jsonl`] refers to.
pub fn figure_jsonl(paragraphs: usize) -> String {
    let mut out = String::new();
    for i in (1..paragraphs).step_by(50) {
        let line = serde_json::json!({
            "id": format!("fig-{i}"),
            "caption": format!("Diagram for lesson {i}"),
            "uri": format!("figures/fig-{i}.png"),
        });
        writeln!(out, "{line}").expect("string write");
    }
    out
}

/// All exam years: 1993 to 2021 without 2010 (28 years).
pub fn exam_years() -> Vec<i32> {
    (FIRST_EXAM_YEAR..=LAST_EXAM_YEAR)
        .filter(|&y| is_valid_exam_year(y))
        .collect()
}

/// Topic used for each generated question, keyed by `(year, section, number)`.
pub type QuestionTopics = BTreeMap<(i32, Section, usize), String>;

/// One exam CSV per year with `per_section` rows in each section. Topics are
/// not part of the CSV; the topic used to word each question is returned
/// alongside, keyed by `(year, section, number)`.
pub fn exam_csvs(per_section: usize, seed: u64) -> (Vec<(i32, String)>, QuestionTopics) {
    let labels = default_topic_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut files = Vec::new();
    let mut topics = BTreeMap::new();
    for year in exam_years() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(EXAM_CSV_HEADER).expect("in-memory write");
        for section in Section::ALL {
            for n in 1..=per_section {
                let t = rng.gen_range(0..labels.len());
                topics.insert((year, section, n), labels[t].clone());
                let question = format!("Explain {}", sentence(&mut rng, t, 3).to_lowercase());
                let (options, answer, explanation) = match section {
                    Section::Objectives => (
                        ["A", "B", "C", "D"].map(|k| format!("option {k} {}", keyword(t, n % 12))),
                        ["A", "B", "C", "D"][n % 4].to_string(),
                        format!("Because {}", keyword(t, 1)),
                    ),
                    _ => (
                        Default::default(),
                        format!("Expert answer: {}", sentence(&mut rng, t, 2)),
                        String::new(),
                    ),
                };
                let number = n.to_string();
                let figures = if n % 10 == 0 {
                    format!("fig-{year}-{n}")
                } else {
                    String::new()
                };
                let mut rec = vec![
                    year.to_string(),
                    "WASSCE May/June".to_string(),
                    section.to_string(),
                    number,
                    question,
                ];
                rec.extend(options);
                rec.extend([answer, explanation, figures]);
                w.write_record(&rec).expect("in-memory write");
            }
        }
        let bytes = w.into_inner().expect("in-memory flush");
        files.push((year, String::from_utf8(bytes).expect("utf-8")));
    }
    (files, topics)
}

/// Feedback events for `questions` voted questions carrying `answers` votes
/// in total, `upvotes` of them up, with exactly `helped` questions having at
/// least one up vote. Every question gets 1 to 3 votes. Returns `None` when
/// the numbers are inconsistent.
pub fn feedback_events(
    questions: usize,
    answers: usize,
    upvotes: usize,
    helped: usize,
    start: DateTime<Utc>,
) -> Option<Vec<Event>> {
    let unhelped = questions.checked_sub(helped)?;
    let downs = answers.checked_sub(upvotes)?;
    // Unhelped questions: one down vote each.
    let helped_answers = answers.checked_sub(unhelped)?;
    let extra_downs = downs.checked_sub(unhelped)?;
    if helped_answers < helped || helped_answers > 3 * helped || upvotes < helped {
        return None;
    }
    if extra_downs > helped_answers - helped {
        return None;
    }
    let mut votes_per_q = vec![1usize; helped];
    let mut remaining = helped_answers - helped;
    for i in 0..2 * helped {
        if remaining == 0 {
            break;
        }
        votes_per_q[i % helped] += 1;
        remaining -= 1;
    }

    let mut events = Vec::with_capacity(answers);
    let mut ts = start;
    let mut push = |q: usize, position: u8, vote: Vote| {
        ts += Duration::seconds(1);
        events.push(Event::Feedback(FeedbackEvent {
            question_id: format!("q-{q:05}"),
            position,
            vote,
            ts,
        }));
    };
    let mut downs_left = extra_downs;
    for (q, &n) in votes_per_q.iter().enumerate() {
        push(q, 1, Vote::Up);
        for position in 2..=n as u8 {
            if downs_left > 0 {
                downs_left -= 1;
                push(q, position, Vote::Down);
            } else {
                push(q, position, Vote::Up);
            }
        }
    }
    for q in helped..questions {
        push(q, 1, Vote::Down);
    }
    Some(events)
}

/// Usage events with the given per-kind counts, spread evenly over
/// `[start, start + span)`.
pub fn usage_events(
    counts: &[(UsageKind, usize)],
    start: DateTime<Utc>,
    span: Duration,
    seed: u64,
) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = counts.iter().map(|c| c.1).sum();
    let mut kinds: Vec<UsageKind> = counts
        .iter()
        .flat_map(|&(k, n)| std::iter::repeat_n(k, n))
        .collect();
    kinds.shuffle(&mut rng);
    let step = span.num_milliseconds() / total.max(1) as i64;
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            Event::Usage(UsageEvent {
                kind,
                session_id: format!("session-{}", rng.gen_range(0..750)),
                ts: start + Duration::milliseconds(step * i as i64),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_are_distinct_and_alphabetic() {
        let mut all: Vec<String> = (0..48)
            .flat_map(|t| (0..12).map(move |j| keyword(t, j)))
            .collect();
        assert!(all
            .iter()
            .all(|k| k.chars().all(|c| c.is_ascii_lowercase())));
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 48 * 12);
    }

    #[test]
    fn infeasible_feedback_is_rejected() {
        let t = Utc::now();
        assert!(feedback_events(10, 5, 3, 2, t).is_none());
        assert!(feedback_events(2, 6, 1, 2, t).is_none());
        assert!(feedback_events(3, 3, 1, 1, t).is_some());
    }

    #[test]
    fn exam_years_count() {
        let years = exam_years();
        assert_eq!(years.len(), 28);
        assert!(!years.contains(&2010));
    }
}
