//! The ask flow: validate a question, embed it, retrieve the closest
//! passages and past exam questions, and record the question for history
//! and feedback.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::QuestionRegistry;
use crate::corpus::{CorpusStore, Figure, Section};
use crate::embedder::{truncate_chars, EmbedError, Embedder, MAX_INPUT_CHARS};
use crate::vindex::{
    EntryKind, IndexBuilder, IndexCell, IndexEntry, IndexError, VectorIndex,
    DEFAULT_PASSAGE_THRESHOLD, DEFAULT_QUESTION_THRESHOLD,
};

pub const MAX_QUESTION_CHARS: usize = 500;
pub const ANSWER_COUNT: usize = 3;
pub const RELATED_COUNT: usize = 5;
pub const DEFAULT_SUBJECT: &str = "Integrated Science";
pub const DEFAULT_HISTORY_PAGE_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum QaError {
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("question log {path}: {message}")]
    Storage { path: String, message: String },
}

impl QaError {
    pub fn is_retryable(&self) -> bool {
        match self {
            QaError::Embedding(e) => e.is_retryable(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaConfig {
    pub passage_threshold: f64,
    pub question_threshold: f64,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self {
            passage_threshold: DEFAULT_PASSAGE_THRESHOLD,
            question_threshold: DEFAULT_QUESTION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskRequest {
    pub user_id: String,
    pub question: String,
    #[serde(default)]
    pub subject: Option<String>,
}

impl AskRequest {
    pub fn new(user_id: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            question: question.into(),
            subject: None,
        }
    }

    pub fn validate(&self) -> Result<(), QaError> {
        let len = self.question.chars().count();
        if self.question.trim().is_empty() {
            return Err(QaError::InvalidInput("question must not be empty".into()));
        }
        if len > MAX_QUESTION_CHARS {
            return Err(QaError::InvalidInput(format!(
                "question has {len} characters; the limit is {MAX_QUESTION_CHARS}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCard {
    pub passage_id: String,
    pub passage_text: String,
    pub paragraph_text: String,
    pub confidence: f64,
    pub figures: Vec<Figure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedQuestionCard {
    pub question_id: String,
    pub question_text: String,
    pub answer: String,
    pub year: i32,
    pub exam_label: String,
    pub section: Section,
    pub topic: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub question_id: String,
    pub answers: Vec<AnswerCard>,
    pub related: Vec<RelatedQuestionCard>,
    pub unanswerable: bool,
}

/// A question as persisted in the ask log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub user_id: String,
    pub question: String,
    pub subject: String,
    pub ts: DateTime<Utc>,
    pub answer_ids: Vec<String>,
    pub related_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub question_id: String,
    pub question: String,
    pub subject: String,
    pub ts: DateTime<Utc>,
}

#[derive(Debug, Default)]
struct AskLogInner {
    records: Vec<QuestionRecord>,
    by_id: HashMap<String, usize>,
    file: Option<File>,
}

/// Append-only log of asked questions, optionally backed by a JSON-lines
/// file. Appends are serialized through one lock.
#[derive(Debug, Default)]
pub struct AskLog {
    path: Option<PathBuf>,
    inner: Mutex<AskLogInner>,
}

impl AskLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create) a log file and replay its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, QaError> {
        let path = path.as_ref().to_path_buf();
        let storage = |message: String| QaError::Storage {
            path: path.display().to_string(),
            message,
        };
        let mut inner = AskLogInner::default();
        if path.exists() {
            let file = File::open(&path).map_err(|e| storage(e.to_string()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| storage(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: QuestionRecord = serde_json::from_str(&line)
                    .map_err(|e| storage(format!("line {}: {e}", i + 1)))?;
                inner.by_id.insert(rec.id.clone(), inner.records.len());
                inner.records.push(rec);
            }
        }
        inner.file = Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| storage(e.to_string()))?,
        );
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(inner),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, AskLogInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn append(&self, record: QuestionRecord) -> Result<(), QaError> {
        let mut inner = self.lock();
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| QaError::Storage {
                path: self
                    .path
                    .as_ref()
                    .map_or_else(String::new, |p| p.display().to_string()),
                message: e.to_string(),
            })?;
        }
        let pos = inner.records.len();
        inner.by_id.insert(record.id.clone(), pos);
        inner.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<QuestionRecord> {
        let inner = self.lock();
        inner.by_id.get(id).map(|&i| inner.records[i].clone())
    }

    /// Number of questions asked in `[from, to)`; open ends are unbounded.
    pub fn count_between(&self, from: Option<DateTime<Utc>>, to: Option<DateTime<Utc>>) -> u64 {
        self.lock()
            .records
            .iter()
            .filter(|r| from.is_none_or(|f| r.ts >= f) && to.is_none_or(|t| r.ts < t))
            .count() as u64
    }

    /// A user's questions, newest first. `page` starts at 1.
    pub fn history(&self, user_id: &str, page: usize, page_size: usize) -> Vec<HistoryEntry> {
        let inner = self.lock();
        inner
            .records
            .iter()
            .rev()
            .filter(|r| r.user_id == user_id)
            .skip(page.saturating_sub(1).saturating_mul(page_size))
            .take(page_size)
            .map(|r| HistoryEntry {
                question_id: r.id.clone(),
                question: r.question.clone(),
                subject: r.subject.clone(),
                ts: r.ts,
            })
            .collect()
    }
}

impl QuestionRegistry for AskLog {
    fn contains_question(&self, id: &str) -> bool {
        self.lock().by_id.contains_key(id)
    }
}

/// Texts per embedding call when building an index.
const EMBED_CHUNK: usize = 64;

/// Embed `(id, text)` pairs into an index. Texts longer than the embedder
/// limit are truncated. Chunks are embedded in parallel.
pub fn build_index<'a>(
    embedder: &dyn Embedder,
    kind: EntryKind,
    items: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<VectorIndex, QaError> {
    let items: Vec<(&str, &str)> = items.into_iter().collect();
    let vectors: Vec<Vec<_>> = items
        .par_chunks(EMBED_CHUNK)
        .map(|chunk| {
            let texts: Vec<&str> = chunk
                .iter()
                .map(|(_, t)| truncate_chars(t, MAX_INPUT_CHARS))
                .collect();
            embedder.embed_batch(&texts)
        })
        .collect::<Result<_, _>>()?;
    let mut builder = IndexBuilder::with_capacity(embedder.dim(), items.len());
    for ((id, _), vector) in items.iter().zip(vectors.into_iter().flatten()) {
        builder.push(IndexEntry {
            id: (*id).to_string(),
            vector,
            kind,
        })?;
    }
    Ok(builder.finish())
}

pub fn build_passage_index(
    corpus: &CorpusStore,
    embedder: &dyn Embedder,
) -> Result<VectorIndex, QaError> {
    build_index(
        embedder,
        EntryKind::Passage,
        corpus.passages().map(|p| (p.id.as_str(), p.text.as_str())),
    )
}

pub fn build_question_index(
    corpus: &CorpusStore,
    embedder: &dyn Embedder,
) -> Result<VectorIndex, QaError> {
    build_index(
        embedder,
        EntryKind::ExamQuestion,
        corpus.questions().map(|q| (q.id.as_str(), q.text.as_str())),
    )
}

/// Answers questions against the passage and past-question banks.
pub struct QaEngine {
    embedder: Arc<dyn Embedder>,
    corpus: Arc<RwLock<CorpusStore>>,
    passages: Arc<IndexCell>,
    questions: Arc<IndexCell>,
    log: Arc<AskLog>,
    config: QaConfig,
}

impl QaEngine {
    pub fn new(
        embedder: Arc<dyn Embedder>,
        corpus: Arc<RwLock<CorpusStore>>,
        passages: Arc<IndexCell>,
        questions: Arc<IndexCell>,
        log: Arc<AskLog>,
        config: QaConfig,
    ) -> Self {
        Self {
            embedder,
            corpus,
            passages,
            questions,
            log,
            config,
        }
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn config(&self) -> &QaConfig {
        &self.config
    }

    pub fn log(&self) -> &Arc<AskLog> {
        &self.log
    }

    pub fn corpus(&self) -> &Arc<RwLock<CorpusStore>> {
        &self.corpus
    }

    pub fn passage_index(&self) -> &Arc<IndexCell> {
        &self.passages
    }

    pub fn question_index(&self) -> &Arc<IndexCell> {
        &self.questions
    }

    pub fn ask(&self, request: &AskRequest) -> Result<AskResponse, QaError> {
        request.validate()?;
        let query = self.embedder.embed(&request.question)?;
        let passage_hits =
            self.passages
                .current()
                .top_k(&query, ANSWER_COUNT, self.config.passage_threshold)?;
        let question_hits = self.questions.current().top_k(
            &query,
            RELATED_COUNT,
            self.config.question_threshold,
        )?;

        let (answers, related) = {
            let corpus = self.corpus.read().unwrap_or_else(|e| e.into_inner());
            let answers: Vec<AnswerCard> = passage_hits
                .iter()
                .filter_map(|hit| {
                    let Some(passage) = corpus.passage(&hit.id) else {
                        tracing::warn!("indexed passage {} missing from corpus", hit.id);
                        return None;
                    };
                    let paragraph_text = corpus
                        .paragraph(&passage.paragraph_id)
                        .map_or_else(|| passage.text.clone(), |p| p.text.clone());
                    Some(AnswerCard {
                        passage_id: passage.id.clone(),
                        passage_text: passage.text.clone(),
                        paragraph_text,
                        confidence: hit.score,
                        figures: passage
                            .figure_refs
                            .iter()
                            .filter_map(|f| corpus.figure(f).cloned())
                            .collect(),
                    })
                })
                .collect();
            let related: Vec<RelatedQuestionCard> = question_hits
                .iter()
                .filter_map(|hit| {
                    let Some(q) = corpus.question(&hit.id) else {
                        tracing::warn!("indexed exam question {} missing from bank", hit.id);
                        return None;
                    };
                    Some(RelatedQuestionCard {
                        question_id: q.id.clone(),
                        question_text: q.text.clone(),
                        answer: q.answer.clone(),
                        year: q.year,
                        exam_label: q.exam_label.clone(),
                        section: q.section,
                        topic: q.topic.clone(),
                        confidence: hit.score,
                    })
                })
                .collect();
            (answers, related)
        };

        let record = QuestionRecord {
            id: uuid::Uuid::new_v4().to_string(),
            user_id: request.user_id.clone(),
            question: request.question.clone(),
            subject: request
                .subject
                .clone()
                .unwrap_or_else(|| DEFAULT_SUBJECT.to_string()),
            ts: Utc::now(),
            answer_ids: answers.iter().map(|a| a.passage_id.clone()).collect(),
            related_ids: related.iter().map(|r| r.question_id.clone()).collect(),
        };
        let question_id = record.id.clone();
        self.log.append(record)?;

        Ok(AskResponse {
            question_id,
            unanswerable: answers.is_empty(),
            answers,
            related,
        })
    }

    pub fn history(&self, user_id: &str, page: usize, page_size: usize) -> Vec<HistoryEntry> {
        self.log.history(user_id, page, page_size)
    }
}
