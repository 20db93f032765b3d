#![allow(dead_code)]

use std::sync::{Arc, RwLock};

use sciqa_core::analytics::EventLog;
use sciqa_core::corpus::{CorpusStore, Source};
use sciqa_core::embedder::{Embedder, EmbedderConfig, ReferenceEmbedder};
use sciqa_core::fixtures::{self, QuestionTopics};
use sciqa_core::qa::{build_passage_index, build_question_index, AskLog, QaConfig, QaEngine};
use sciqa_core::vindex::IndexCell;
use sciqa_server::{AppState, EmbedderInfo};

pub const DIM: usize = 256;

/// Fixture corpus: synthetic paragraphs plus a full 28-year exam bank with
/// topics assigned from the generator.
pub fn corpus(paragraphs: usize, per_section: usize) -> (CorpusStore, QuestionTopics) {
    let mut store = CorpusStore::new();
    store
        .ingest_paragraphs_from(
            fixtures::paragraph_jsonl(paragraphs, 5, 31).as_bytes(),
            "paragraphs.jsonl",
            Source::TextbookDataset,
        )
        .unwrap();
    let (files, topics) = fixtures::exam_csvs(per_section, 31);
    for (year, csv) in files {
        store
            .ingest_exam_csv_from(csv.as_bytes(), &format!("{year}.csv"))
            .unwrap();
    }
    let ids: Vec<(String, String)> = store
        .questions()
        .map(|q| {
            (
                q.id.clone(),
                topics[&(q.year, q.section, q.number.parse().unwrap())].clone(),
            )
        })
        .collect();
    for (id, topic) in ids {
        store.set_topic(&id, Some(topic)).unwrap();
    }
    (store, topics)
}

pub fn engine_for(store: CorpusStore, embedder: Arc<dyn Embedder>) -> QaEngine {
    let reference = ReferenceEmbedder::new(DIM).unwrap();
    let passages = build_passage_index(&store, &reference).unwrap();
    let questions = build_question_index(&store, &reference).unwrap();
    QaEngine::new(
        embedder,
        Arc::new(RwLock::new(store)),
        Arc::new(IndexCell::new(passages)),
        Arc::new(IndexCell::new(questions)),
        Arc::new(AskLog::in_memory()),
        QaConfig::default(),
    )
}

pub fn state(paragraphs: usize, per_section: usize) -> AppState {
    let (store, _) = corpus(paragraphs, per_section);
    let engine = engine_for(store, Arc::new(ReferenceEmbedder::new(DIM).unwrap()));
    AppState::new(
        engine,
        EventLog::in_memory(),
        EmbedderInfo::from_config(&EmbedderConfig::reference(DIM)),
    )
}
