//! Helpfulness votes and usage events, kept in an append-only JSON-lines log.
//! Reports are pure folds over the event list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("unknown question {0}")]
    UnknownQuestion(String),
    #[error("answer position must be 1..=3, got {0}")]
    InvalidPosition(u8),
    #[error("unknown usage event kind {0:?}")]
    UnknownKind(String),
    #[error("unknown vote {0:?}")]
    UnknownVote(String),
    #[error("event log {path}: {message}")]
    Storage { path: String, message: String },
}

/// Lookup of asked-question ids that votes may refer to.
pub trait QuestionRegistry {
    fn contains_question(&self, id: &str) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Up,
    Down,
}

impl FromStr for Vote {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(Vote::Up),
            "down" => Ok(Vote::Down),
            _ => Err(AnalyticsError::UnknownVote(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageKind {
    AnswerDetailOpened,
    RelatedQuestionExpanded,
    ShowAnswer,
    SelectYear,
    SelectQuestionType,
    SelectTopic,
}

impl UsageKind {
    pub const ALL: [UsageKind; 6] = [
        UsageKind::AnswerDetailOpened,
        UsageKind::RelatedQuestionExpanded,
        UsageKind::ShowAnswer,
        UsageKind::SelectYear,
        UsageKind::SelectQuestionType,
        UsageKind::SelectTopic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UsageKind::AnswerDetailOpened => "answer_detail_opened",
            UsageKind::RelatedQuestionExpanded => "related_question_expanded",
            UsageKind::ShowAnswer => "show_answer",
            UsageKind::SelectYear => "select_year",
            UsageKind::SelectQuestionType => "select_question_type",
            UsageKind::SelectTopic => "select_topic",
        }
    }
}

impl FromStr for UsageKind {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UsageKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AnalyticsError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub question_id: String,
    pub position: u8,
    pub vote: Vote,
    pub ts: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEvent {
    pub kind: UsageKind,
    pub session_id: String,
    pub ts: DateTime<Utc>,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Feedback(FeedbackEvent),
    Usage(UsageEvent),
}

#[derive(Debug, Default)]
struct LogInner {
    events: Vec<Event>,
    file: Option<File>,
}

/// Append-only event log. Appends are serialized; reports read a copy.
#[derive(Debug, Default)]
pub struct EventLog {
    path: Option<PathBuf>,
    inner: Mutex<LogInner>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create) a log file, replaying existing events.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AnalyticsError> {
        let path = path.as_ref().to_path_buf();
        let storage = |message: String| AnalyticsError::Storage {
            path: path.display().to_string(),
            message,
        };
        let events = if path.exists() {
            read_events(&path).map_err(&storage)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| storage(e.to_string()))?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(LogInner {
                events,
                file: Some(file),
            }),
        })
    }

    fn append(&self, event: Event) -> Result<(), AnalyticsError> {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_vec(&event).expect("event serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| AnalyticsError::Storage {
                path: self
                    .path
                    .as_ref()
                    .map_or_else(String::new, |p| p.display().to_string()),
                message: e.to_string(),
            })?;
        }
        inner.events.push(event);
        Ok(())
    }

    pub fn record_feedback(
        &self,
        event: FeedbackEvent,
        registry: &dyn QuestionRegistry,
    ) -> Result<(), AnalyticsError> {
        if !(1..=3).contains(&event.position) {
            return Err(AnalyticsError::InvalidPosition(event.position));
        }
        if !registry.contains_question(&event.question_id) {
            return Err(AnalyticsError::UnknownQuestion(event.question_id));
        }
        self.append(Event::Feedback(event))
    }

    pub fn record_usage(&self, event: UsageEvent) -> Result<(), AnalyticsError> {
        self.append(Event::Usage(event))
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .events
            .clone()
    }

    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .events
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parse every event in a JSON-lines log file.
pub fn read_events(path: &Path) -> Result<Vec<Event>, String> {
    let file = File::open(path).map_err(|e| e.to_string())?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Upvoted answers over all voted answers.
    pub top1: Option<f64>,
    pub n_answers: usize,
    /// Voted questions with at least one upvoted answer, over voted questions.
    pub top3: Option<f64>,
    pub n_questions: usize,
}

/// Later votes on the same (question, position) replace earlier ones.
pub fn accuracy_report(events: &[Event]) -> AccuracyReport {
    let mut effective: HashMap<(&str, u8), Vote> = HashMap::new();
    for e in events {
        if let Event::Feedback(f) = e {
            effective.insert((f.question_id.as_str(), f.position), f.vote);
        }
    }
    let n_answers = effective.len();
    let upvoted = effective.values().filter(|&&v| v == Vote::Up).count();
    let questions: BTreeSet<&str> = effective.keys().map(|k| k.0).collect();
    let helped: BTreeSet<&str> = effective
        .iter()
        .filter(|(_, &v)| v == Vote::Up)
        .map(|(k, _)| k.0)
        .collect();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    AccuracyReport {
        top1: ratio(upvoted, n_answers),
        n_answers,
        top3: ratio(helped.len(), questions.len()),
        n_questions: questions.len(),
    }
}

/// Half-open time window `[from, to)`; missing ends are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl TimeRange {
    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        self.from.is_none_or(|f| ts >= f) && self.to.is_none_or(|t| ts < t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub counts: BTreeMap<UsageKind, u64>,
    pub questions_asked: u64,
    pub detail_opens_per_question: Option<f64>,
    pub related_expanded_per_question: Option<f64>,
}

impl UsageReport {
    pub fn count(&self, kind: UsageKind) -> u64 {
        self.counts.get(&kind).copied().unwrap_or(0)
    }
}

/// Count usage events per kind inside `range`. Ratios use `questions_asked`
/// (the number of questions asked in the same window).
pub fn usage_report(events: &[Event], range: TimeRange, questions_asked: u64) -> UsageReport {
    let mut counts: BTreeMap<UsageKind, u64> = UsageKind::ALL.iter().map(|&k| (k, 0)).collect();
    for e in events {
        if let Event::Usage(u) = e {
            if range.contains(u.ts) {
                *counts.entry(u.kind).or_default() += 1;
            }
        }
    }
    let per_question = |n: u64| (questions_asked > 0).then(|| n as f64 / questions_asked as f64);
    UsageReport {
        detail_opens_per_question: per_question(counts[&UsageKind::AnswerDetailOpened]),
        related_expanded_per_question: per_question(counts[&UsageKind::RelatedQuestionExpanded]),
        counts,
        questions_asked,
    }
}
