//! Syllabus topic classification.
//!
//! Passages labelled with a syllabus topic are featurized either with
//! TF-IDF over unigrams and bigrams or with sentence embeddings, and a
//! one-vs-rest linear SVM is trained on them. The regularization constant is
//! picked by stratified 5-fold cross-validation on unweighted average recall.

mod eval;
mod svm;
mod tfidf;
mod train;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{truncate_chars, EmbedError, Embedder, EmbedderConfig, MAX_INPUT_CHARS};

pub use eval::{topic_distribution, ConfusionMatrix, Evaluation, TopicShare};
pub use svm::{lambda, objective, train_binary, LinearModel, SvmParams, DEFAULT_EPOCHS};
pub use tfidf::{terms, tokenize, TermStats, TfidfVocabulary};
pub use train::{
    run_pipeline, stratified_folds, stratified_split, train, CvReport, CvScore, FeaturizerChoice,
    PipelineReport, TrainConfig, DEFAULT_C_GRID,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Syllabus topic labels shipped with the crate, one per line.
pub const DEFAULT_TOPIC_LABELS: &str = include_str!("../../config/topics.txt");

pub fn default_topic_labels() -> Vec<String> {
    parse_label_list(DEFAULT_TOPIC_LABELS)
}

/// One label per non-empty line; `#` starts a comment line.
pub fn parse_label_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("need ≥ 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("label {label:?} has {count} sample(s); at least 2 are required")]
    TooFewSamples { label: String, count: usize },
    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("feature dimension {actual} does not match model dimension {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Sort by index, merge duplicates and drop zeros.
    pub fn from_unsorted(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Self { entries: merged }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|e| e.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.entries.iter_mut().for_each(|e| e.1 /= n);
        }
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| dense.get(i as usize).copied().unwrap_or(0.0) * v)
            .sum()
    }
}

/// Labelled passages for topic training.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicDataset {
    labels: Vec<String>,
    texts: Vec<String>,
    targets: Vec<usize>,
}

impl TopicDataset {
    /// Build a dataset. With `label_set`, every sample label must belong to
    /// it and the label order is taken from it; otherwise labels are the
    /// sorted distinct sample labels. Every label needs at least 2 samples.
    pub fn new(
        samples: Vec<(String, String)>,
        label_set: Option<Vec<String>>,
    ) -> Result<Self, TopicError> {
        let labels = match label_set {
            Some(l) => l,
            None => {
                let mut l: Vec<String> = samples.iter().map(|s| s.1.clone()).collect();
                l.sort();
                l.dedup();
                l
            }
        };
        let index: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut texts = Vec::with_capacity(samples.len());
        let mut targets = Vec::with_capacity(samples.len());
        for (text, label) in &samples {
            let t = *index
                .get(label.as_str())
                .ok_or_else(|| TopicError::UnknownLabel(label.clone()))?;
            texts.push(text.clone());
            targets.push(t);
        }
        let mut counts = vec![0usize; labels.len()];
        for &t in &targets {
            counts[t] += 1;
        }
        for (label, &count) in labels.iter().zip(&counts) {
            if count < 2 {
                return Err(TopicError::TooFewSamples {
                    label: label.clone(),
                    count,
                });
            }
        }
        Ok(Self {
            labels,
            texts,
            targets,
        })
    }

    /// Read a CSV with `topic` and `passage` columns.
    pub fn from_csv(
        path: impl AsRef<Path>,
        label_set: Option<Vec<String>>,
    ) -> Result<Self, TopicError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let format = |reason: String| TopicError::Format {
            path: name.clone(),
            reason,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| format(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| format(e.to_string()))?.clone();
        let col = |n: &str| {
            headers
                .iter()
                .position(|h| h.trim() == n)
                .ok_or_else(|| format(format!("missing column {n:?}")))
        };
        let (topic_col, passage_col) = (col("topic")?, col("passage")?);
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| format(e.to_string()))?;
            let topic = record.get(topic_col).unwrap_or_default().trim();
            let passage = record.get(passage_col).unwrap_or_default().trim();
            if topic.is_empty() || passage.is_empty() {
                let line = record.position().map_or(0, |p| p.line());
                return Err(format(format!("line {line}: empty topic or passage")));
            }
            samples.push((passage.to_string(), topic.to_string()));
        }
        Self::new(samples, label_set)
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<(), TopicError> {
        let path = path.as_ref();
        let err = |e: csv::Error| TopicError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["topic", "passage"]).map_err(err)?;
        for (text, &t) in self.texts.iter().zip(&self.targets) {
            w.write_record([self.labels[t].as_str(), text.as_str()])
                .map_err(err)?;
        }
        w.flush().map_err(|source| TopicError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for &t in &self.targets {
            counts[t] += 1;
        }
        counts
    }

    /// Samples at the given positions, keeping the full label set.
    pub fn subset(&self, positions: &[usize]) -> TopicDataset {
        TopicDataset {
            labels: self.labels.clone(),
            texts: positions.iter().map(|&i| self.texts[i].clone()).collect(),
            targets: positions.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// Serialized featurizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeaturizerSpec {
    Tfidf { vocabulary: TfidfVocabulary },
    Embedding { config: EmbedderConfig },
}

/// Lazily built embedding provider for embedding featurizers.
#[derive(Default, Clone)]
struct EmbedderSlot(OnceLock<Arc<dyn Embedder>>);

impl fmt::Debug for EmbedderSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.get().is_some() {
            "EmbedderSlot(ready)"
        } else {
            "EmbedderSlot(empty)"
        })
    }
}

impl PartialEq for EmbedderSlot {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// A featurizer ready to turn text into feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    spec: FeaturizerSpec,
    embedder: EmbedderSlot,
}

impl Serialize for Featurizer {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.spec.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Featurizer {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        FeaturizerSpec::deserialize(deserializer).map(Featurizer::new)
    }
}

impl Featurizer {
    pub fn new(spec: FeaturizerSpec) -> Self {
        Self {
            spec,
            embedder: EmbedderSlot::default(),
        }
    }

    /// Use an existing provider instead of building one from the config.
    pub fn with_embedder(spec: FeaturizerSpec, embedder: Arc<dyn Embedder>) -> Self {
        let slot = EmbedderSlot::default();
        let _ = slot.0.set(embedder);
        Self {
            spec,
            embedder: slot,
        }
    }

    pub fn spec(&self) -> &FeaturizerSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match &self.spec {
            FeaturizerSpec::Tfidf { vocabulary } => vocabulary.len(),
            FeaturizerSpec::Embedding { config } => config.dim,
        }
    }

    fn embedder(&self, config: &EmbedderConfig) -> Result<&Arc<dyn Embedder>, TopicError> {
        if let Some(e) = self.embedder.0.get() {
            return Ok(e);
        }
        let built = config.build()?;
        Ok(self.embedder.0.get_or_init(|| built))
    }

    /// Featurize one text. Embedding inputs are cut to the provider's
    /// character limit.
    pub fn features(&self, text: &str) -> Result<SparseVector, TopicError> {
        match &self.spec {
            FeaturizerSpec::Tfidf { vocabulary } => Ok(vocabulary.transform(text)),
            FeaturizerSpec::Embedding { config } => {
                let v = self
                    .embedder(config)?
                    .embed(truncate_chars(text, MAX_INPUT_CHARS))?;
                Ok(embedding_features(v.as_slice()))
            }
        }
    }

    pub fn features_batch<S: AsRef<str>>(
        &self,
        texts: &[S],
    ) -> Result<Vec<SparseVector>, TopicError> {
        match &self.spec {
            FeaturizerSpec::Tfidf { vocabulary } => Ok(texts
                .iter()
                .map(|t| vocabulary.transform(t.as_ref()))
                .collect()),
            FeaturizerSpec::Embedding { config } => {
                let cut: Vec<&str> = texts
                    .iter()
                    .map(|t| truncate_chars(t.as_ref(), MAX_INPUT_CHARS))
                    .collect();
                let vs = self.embedder(config)?.embed_batch(&cut)?;
                Ok(vs
                    .iter()
                    .map(|v| embedding_features(v.as_slice()))
                    .collect())
            }
        }
    }
}

fn embedding_features(v: &[f32]) -> SparseVector {
    let dense: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    SparseVector::from_dense(&dense)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub c: f64,
    pub epochs: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub cv_scores: Vec<CvScore>,
}

/// Per-class decision scores and the winning label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub label_index: usize,
    pub scores: Vec<f64>,
}

/// Trained one-vs-rest classifier together with its featurizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub format_version: u32,
    pub labels: Vec<String>,
    pub featurizer: Featurizer,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub metadata: TrainingMetadata,
}

impl TopicModel {
    pub(crate) fn from_parts(
        labels: Vec<String>,
        featurizer: Featurizer,
        classes: Vec<LinearModel>,
        metadata: TrainingMetadata,
    ) -> Self {
        let (weights, biases) = classes.into_iter().map(|m| (m.weights, m.bias)).unzip();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            labels,
            featurizer,
            weights,
            biases,
            metadata,
        }
    }

    /// Attach an already-built embedding provider (for embedding models).
    pub fn set_embedder(&mut self, embedder: Arc<dyn Embedder>) {
        self.featurizer = Featurizer::with_embedder(self.featurizer.spec.clone(), embedder);
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Decision scores for an already featurized input; argmax with ties
    /// going to the lowest label index.
    pub fn predict_features(&self, x: &SparseVector) -> Prediction {
        let scores: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| x.dot_dense(w) + b)
            .collect();
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Prediction {
            label: self.labels[best].clone(),
            label_index: best,
            scores,
        }
    }

    pub fn predict(&self, text: &str) -> Result<Prediction, TopicError> {
        let x = self.featurizer.features(text)?;
        Ok(self.predict_features(&x))
    }

    pub fn predict_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Prediction>, TopicError> {
        let xs = self.featurizer.features_batch(texts)?;
        Ok(xs.iter().map(|x| self.predict_features(x)).collect())
    }

    /// Confusion matrix and UAR over labelled `(text, label)` pairs.
    pub fn evaluate(&self, test: &[(String, String)]) -> Result<Evaluation, TopicError> {
        let index: BTreeMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let truths = test
            .iter()
            .map(|(_, l)| {
                index
                    .get(l.as_str())
                    .copied()
                    .ok_or_else(|| TopicError::UnknownLabel(l.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let texts: Vec<&str> = test.iter().map(|(t, _)| t.as_str()).collect();
        let preds = self.predict_batch(&texts)?;
        let mut cm = ConfusionMatrix::new(self.labels.clone());
        for (t, p) in truths.into_iter().zip(preds) {
            cm.add(t, p.label_index);
        }
        let eval = Evaluation::from_confusion(cm);
        for w in &eval.warnings {
            tracing::warn!("{w}");
        }
        Ok(eval)
    }

    pub fn evaluate_dataset(&self, data: &TopicDataset) -> Result<Evaluation, TopicError> {
        let pairs: Vec<(String, String)> = data
            .texts()
            .iter()
            .zip(data.targets())
            .map(|(t, &l)| (t.clone(), data.labels()[l].clone()))
            .collect();
        self.evaluate(&pairs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TopicError> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self).map_err(|e| TopicError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        std::fs::write(path, json).map_err(|source| TopicError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopicError> {
        let path = path.as_ref();
        let format = |reason: String| TopicError::Format {
            path: path.display().to_string(),
            reason,
        };
        let bytes = std::fs::read(path).map_err(|source| TopicError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let model: TopicModel =
            serde_json::from_slice(&bytes).map_err(|e| format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(format(format!(
                "unsupported model version {}",
                model.format_version
            )));
        }
        if model.weights.len() != model.labels.len() || model.biases.len() != model.labels.len() {
            return Err(format(
                "one weight vector and bias per label required".into(),
            ));
        }
        let dim = model.featurizer.dim();
        if model.weights.iter().any(|w| w.len() != dim) {
            return Err(format(format!("weight vectors must have dimension {dim}")));
        }
        Ok(model)
    }
}
