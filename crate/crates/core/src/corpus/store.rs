use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CorpusError, ExamQuestion, Figure, Page, Paragraph, Passage, QuestionFilter};

const PARAGRAPHS_FILE: &str = "paragraphs.jsonl";
const PASSAGES_FILE: &str = "passages.jsonl";
const FIGURES_FILE: &str = "figures.jsonl";
const QUESTIONS_FILE: &str = "questions.jsonl";

#[derive(Debug, Default, Clone)]
pub struct CorpusStore {
    pub(super) paragraphs: BTreeMap<String, Paragraph>,
    pub(super) passages: BTreeMap<String, Passage>,
    pub(super) figures: BTreeMap<String, Figure>,
    pub(super) questions: BTreeMap<String, ExamQuestion>,
}

impl CorpusStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load a store from `dir`. Missing files are treated as empty.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let mut store = Self::new();
        for p in read_jsonl::<Paragraph>(&dir.join(PARAGRAPHS_FILE))? {
            store.paragraphs.insert(p.id.clone(), p);
        }
        for p in read_jsonl::<Passage>(&dir.join(PASSAGES_FILE))? {
            store.passages.insert(p.id.clone(), p);
        }
        for f in read_jsonl::<Figure>(&dir.join(FIGURES_FILE))? {
            store.figures.insert(f.id.clone(), f);
        }
        for q in read_jsonl::<ExamQuestion>(&dir.join(QUESTIONS_FILE))? {
            store.questions.insert(q.id.clone(), q);
        }
        Ok(store)
    }

    /// Persist every collection to `dir`, replacing files atomically.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_jsonl(&dir.join(PARAGRAPHS_FILE), self.paragraphs.values())?;
        write_jsonl(&dir.join(PASSAGES_FILE), self.passages.values())?;
        write_jsonl(&dir.join(FIGURES_FILE), self.figures.values())?;
        write_jsonl(&dir.join(QUESTIONS_FILE), self.questions.values())
    }

    pub fn paragraph(&self, id: &str) -> Option<&Paragraph> {
        self.paragraphs.get(id)
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passages.get(id)
    }

    pub fn figure(&self, id: &str) -> Option<&Figure> {
        self.figures.get(id)
    }

    pub fn question(&self, id: &str) -> Option<&ExamQuestion> {
        self.questions.get(id)
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.paragraphs.values()
    }

    pub fn passages(&self) -> impl Iterator<Item = &Passage> {
        self.passages.values()
    }

    pub fn questions(&self) -> impl Iterator<Item = &ExamQuestion> {
        self.questions.values()
    }

    pub fn paragraph_count(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn passage_count(&self) -> usize {
        self.passages.len()
    }

    pub fn question_count(&self) -> usize {
        self.questions.len()
    }

    pub fn add_figure(&mut self, figure: Figure) {
        self.figures.insert(figure.id.clone(), figure);
    }

    pub fn set_topic(
        &mut self,
        question_id: &str,
        topic: Option<String>,
    ) -> Result<(), CorpusError> {
        let q = self
            .questions
            .get_mut(question_id)
            .ok_or_else(|| CorpusError::UnknownQuestion(question_id.to_string()))?;
        q.topic = topic;
        Ok(())
    }

    /// Questions matching every set criterion, ordered by year descending,
    /// then section, then question number.
    pub fn filter_questions(
        &self,
        filter: &QuestionFilter,
    ) -> Result<Page<ExamQuestion>, CorpusError> {
        filter.validate().map_err(CorpusError::InvalidFilter)?;
        let mut matching: Vec<&ExamQuestion> = self
            .questions
            .values()
            .filter(|q| filter.matches(q))
            .collect();
        matching.sort_by(|a, b| question_order(a, b));
        let total = matching.len();
        let items = matching
            .into_iter()
            .skip((filter.page - 1).saturating_mul(filter.page_size))
            .take(filter.page_size)
            .cloned()
            .collect();
        Ok(Page { items, total })
    }

    /// Distinct values available for each filter dimension.
    pub fn facets(&self) -> Facets {
        let mut f = Facets::default();
        for q in self.questions.values() {
            f.years.push(q.year);
            f.exams.push(q.exam_label.clone());
            if let Some(t) = &q.topic {
                f.topics.push(t.clone());
            }
        }
        f.years.sort_unstable_by(|a, b| b.cmp(a));
        f.years.dedup();
        f.exams.sort();
        f.exams.dedup();
        f.topics.sort();
        f.topics.dedup();
        f
    }

    /// Write the question bank as JSON lines.
    pub fn export_questions(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        write_jsonl(path.as_ref(), self.questions.values())
    }

    /// Replace the question bank from a JSON-lines export.
    pub fn import_questions(&mut self, path: impl AsRef<Path>) -> Result<usize, CorpusError> {
        let path = path.as_ref();
        let questions = read_jsonl::<ExamQuestion>(path)?;
        let mut bank = BTreeMap::new();
        for (i, q) in questions.into_iter().enumerate() {
            q.validate().map_err(|reason| CorpusError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                reason,
            })?;
            bank.insert(q.id.clone(), q);
        }
        let n = bank.len();
        self.questions = bank;
        Ok(n)
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facets {
    pub years: Vec<i32>,
    pub exams: Vec<String>,
    pub topics: Vec<String>,
}

/// Numeric prefix first ("2" before "10"), then the full string.
fn number_order(a: &str, b: &str) -> Ordering {
    fn leading(s: &str) -> Option<u64> {
        let digits: String = s.trim().chars().take_while(char::is_ascii_digit).collect();
        digits.parse().ok()
    }
    match (leading(a), leading(b)) {
        (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

fn question_order(a: &ExamQuestion, b: &ExamQuestion) -> Ordering {
    b.year
        .cmp(&a.year)
        .then_with(|| a.section.cmp(&b.section))
        .then_with(|| number_order(&a.number, &b.number))
        .then_with(|| a.id.cmp(&b.id))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("jsonl.tmp");
    let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    drop(w);
    fs::rename(&tmp, path).map_err(io)
}
