//! On-disk layout of a deployment and loading it into an [`AppState`].

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::{bail, Context};
use sciqa_core::analytics::EventLog;
use sciqa_core::corpus::CorpusStore;
use sciqa_core::embedder::EmbedderConfig;
use sciqa_core::qa::{AskLog, QaConfig, QaEngine};
use sciqa_core::vindex::{IndexCell, VectorIndex};

use crate::routes::{AppState, EmbedderInfo};

/// Files kept under the data directory. The corpus JSON-lines files
/// (paragraphs, passages, figures, questions) live at the top level.
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn passage_index(&self) -> PathBuf {
        self.root.join("passages.kw4s")
    }

    pub fn question_index(&self) -> PathBuf {
        self.root.join("questions.kw4s")
    }

    pub fn topic_dataset(&self) -> PathBuf {
        self.root.join("topic_samples.csv")
    }

    pub fn topic_model(&self) -> PathBuf {
        self.root.join("topic_model.json")
    }

    pub fn ask_log(&self) -> PathBuf {
        self.root.join("asks.jsonl")
    }

    pub fn event_log(&self) -> PathBuf {
        self.root.join("events.jsonl")
    }

    pub fn open_corpus(&self) -> anyhow::Result<CorpusStore> {
        CorpusStore::open(&self.root)
            .with_context(|| format!("loading corpus from {}", self.root.display()))
    }

    pub fn save_corpus(&self, store: &CorpusStore) -> anyhow::Result<()> {
        store
            .save(&self.root)
            .with_context(|| format!("saving corpus to {}", self.root.display()))
    }
}

fn load_index(path: &Path, dim: usize) -> anyhow::Result<VectorIndex> {
    if !path.exists() {
        bail!(
            "index snapshot {} not found; run build-index first",
            path.display()
        );
    }
    let index = VectorIndex::load(path).with_context(|| format!("loading {}", path.display()))?;
    if index.dim() != dim {
        bail!(
            "index snapshot {} has dim {} but the embedder produces dim {dim}",
            path.display(),
            index.dim()
        );
    }
    Ok(index)
}

/// Load everything `serve` needs. Fails naming the path when an index
/// snapshot is missing or unreadable.
pub fn load_state(
    dir: &DataDir,
    embedder: &EmbedderConfig,
    qa: QaConfig,
) -> anyhow::Result<AppState> {
    let built = embedder.build().context("configuring embedder")?;
    let passages = load_index(&dir.passage_index(), built.dim())?;
    let questions = load_index(&dir.question_index(), built.dim())?;
    let corpus = dir.open_corpus()?;
    let asks = AskLog::open(dir.ask_log()).context("opening ask log")?;
    let events = EventLog::open(dir.event_log()).context("opening event log")?;
    let engine = QaEngine::new(
        built,
        Arc::new(RwLock::new(corpus)),
        Arc::new(IndexCell::new(passages)),
        Arc::new(IndexCell::new(questions)),
        Arc::new(asks),
        qa,
    );
    Ok(AppState::new(
        engine,
        events,
        EmbedderInfo::from_config(embedder),
    ))
}
