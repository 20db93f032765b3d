//! Stratified splitting, cross-validated grid search and one-vs-rest fitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    train_binary, ConfusionMatrix, Evaluation, Featurizer, FeaturizerSpec, LinearModel,
    SparseVector, SvmParams, TfidfVocabulary, TopicDataset, TopicError, TopicModel,
    TrainingMetadata, DEFAULT_EPOCHS,
};
use crate::embedder::{Embedder, EmbedderConfig};
use std::sync::Arc;

pub const DEFAULT_C_GRID: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub epochs: usize,
    pub seed: u64,
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: 5,
            epochs: DEFAULT_EPOCHS,
            seed: 42,
            test_fraction: 0.2,
        }
    }
}

/// How to featurize passages for training.
#[derive(Clone)]
pub enum FeaturizerChoice {
    Tfidf,
    Embedding {
        config: EmbedderConfig,
        embedder: Option<Arc<dyn Embedder>>,
    },
}

impl std::fmt::Debug for FeaturizerChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeaturizerChoice::Tfidf => f.write_str("Tfidf"),
            FeaturizerChoice::Embedding { config, .. } => {
                f.debug_struct("Embedding").field("config", config).finish()
            }
        }
    }
}

impl FeaturizerChoice {
    pub fn embedding(config: EmbedderConfig) -> Self {
        FeaturizerChoice::Embedding {
            config,
            embedder: None,
        }
    }

    /// Fit featurizer state on the training texts.
    fn fit(&self, texts: &[String]) -> Featurizer {
        match self {
            FeaturizerChoice::Tfidf => Featurizer::new(FeaturizerSpec::Tfidf {
                vocabulary: TfidfVocabulary::fit(texts),
            }),
            FeaturizerChoice::Embedding { config, embedder } => {
                let spec = FeaturizerSpec::Embedding {
                    config: config.clone(),
                };
                match embedder {
                    Some(e) => Featurizer::with_embedder(spec, Arc::clone(e)),
                    None => Featurizer::new(spec),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub c: f64,
    pub mean_uar: f64,
    pub fold_uars: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub scores: Vec<CvScore>,
    pub best_c: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub train_size: usize,
    pub test_size: usize,
    pub cv: CvReport,
    /// Held-out evaluation of the model fitted on the training split.
    pub holdout: Evaluation,
    /// Model fitted on the training split.
    pub model: TopicModel,
    /// Same hyperparameters, refitted on the whole dataset.
    pub final_model: TopicModel,
}

fn class_members(targets: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); n_classes];
    for (i, &t) in targets.iter().enumerate() {
        members[t].push(i);
    }
    members
}

/// Split positions into `(train, test)` so each class contributes
/// `round(n · test_fraction)` test samples, at least one and leaving at least
/// one for training when the class has two or more.
pub fn stratified_split(
    targets: &[usize],
    n_classes: usize,
    test_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut members in class_members(targets, n_classes) {
        let n = members.len();
        if n == 0 {
            continue;
        }
        members.shuffle(&mut rng);
        let n_test = if n < 2 {
            0
        } else {
            ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1)
        };
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Assign each position a fold in `0..k`, dealing each shuffled class
/// round-robin. Classes with fewer than `k` samples get `None` (always in
/// the training part) and produce a warning.
pub fn stratified_folds(
    targets: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> (Vec<Option<usize>>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![None; targets.len()];
    let mut warnings = Vec::new();
    for (class, mut members) in class_members(targets, n_classes).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            warnings.push(format!(
                "class {class} has {} samples (< {k}); excluded from CV stratification",
                members.len()
            ));
            continue;
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            folds[i] = Some(j % k);
        }
    }
    (folds, warnings)
}

fn class_seed(seed: u64, class: usize) -> u64 {
    seed ^ (class as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn fit_one_vs_rest(
    xs: &[SparseVector],
    targets: &[usize],
    n_classes: usize,
    dim: usize,
    params: SvmParams,
    seed: u64,
) -> Vec<LinearModel> {
    (0..n_classes)
        .into_par_iter()
        .map(|class| {
            let ys: Vec<f64> = targets
                .iter()
                .map(|&t| if t == class { 1.0 } else { -1.0 })
                .collect();
            train_binary(xs, &ys, dim, params, class_seed(seed, class))
        })
        .collect()
}

fn fit_model(
    data: &TopicDataset,
    choice: &FeaturizerChoice,
    c: f64,
    config: &TrainConfig,
    cv_scores: Vec<CvScore>,
) -> Result<TopicModel, TopicError> {
    let featurizer = choice.fit(data.texts());
    let xs = featurizer.features_batch(data.texts())?;
    let params = SvmParams {
        c,
        epochs: config.epochs,
    };
    let classes = fit_one_vs_rest(
        &xs,
        data.targets(),
        data.labels().len(),
        featurizer.dim(),
        params,
        config.seed,
    );
    Ok(TopicModel::from_parts(
        data.labels().to_vec(),
        featurizer,
        classes,
        TrainingMetadata {
            seed: config.seed,
            c,
            epochs: config.epochs,
            n_samples: data.len(),
            cv_scores,
        },
    ))
}

/// Choose C by stratified k-fold mean UAR, then refit on all of `data`.
pub fn train(
    data: &TopicDataset,
    choice: &FeaturizerChoice,
    config: &TrainConfig,
) -> Result<(TopicModel, CvReport), TopicError> {
    let present = data.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(TopicError::TooFewClasses(present));
    }
    if config.c_grid.is_empty() {
        return Err(TopicError::EmptyGrid);
    }
    let n_classes = data.labels().len();
    let (folds, mut warnings) =
        stratified_folds(data.targets(), n_classes, config.folds, config.seed);
    for w in &warnings {
        tracing::warn!("{w}");
    }

    let mut fold_uars = vec![Vec::with_capacity(config.folds); config.c_grid.len()];
    for fold in 0..config.folds {
        let (train_idx, val_idx): (Vec<usize>, Vec<usize>) =
            (0..data.len()).partition(|&i| folds[i] != Some(fold));
        if val_idx.is_empty() {
            continue;
        }
        let train_set = data.subset(&train_idx);
        let featurizer = choice.fit(train_set.texts());
        let xs = featurizer.features_batch(train_set.texts())?;
        let val_xs = featurizer.features_batch(data.subset(&val_idx).texts())?;
        for (ci, &c) in config.c_grid.iter().enumerate() {
            let params = SvmParams {
                c,
                epochs: config.epochs,
            };
            let classes = fit_one_vs_rest(
                &xs,
                train_set.targets(),
                n_classes,
                featurizer.dim(),
                params,
                config.seed,
            );
            let mut cm = ConfusionMatrix::new(data.labels().to_vec());
            for (x, &i) in val_xs.iter().zip(&val_idx) {
                cm.add(data.targets()[i], argmax(&classes, x));
            }
            if let Some(uar) = cm.uar() {
                fold_uars[ci].push(uar);
            }
        }
    }

    let scores: Vec<CvScore> = config
        .c_grid
        .iter()
        .zip(fold_uars)
        .map(|(&c, uars)| CvScore {
            c,
            mean_uar: if uars.is_empty() {
                0.0
            } else {
                uars.iter().sum::<f64>() / uars.len() as f64
            },
            fold_uars: uars,
        })
        .collect();
    if scores.iter().all(|s| s.fold_uars.is_empty()) {
        warnings.push("no cross-validation folds could be formed; using the first C".into());
    }
    let best_c = scores
        .iter()
        .fold(None::<&CvScore>, |best, s| match best {
            Some(b) if b.mean_uar >= s.mean_uar => Some(b),
            _ => Some(s),
        })
        .map(|s| s.c)
        .expect("non-empty grid");

    let model = fit_model(data, choice, best_c, config, scores.clone())?;
    Ok((
        model,
        CvReport {
            scores,
            best_c,
            warnings,
        },
    ))
}

fn argmax(classes: &[LinearModel], x: &SparseVector) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, m) in classes.iter().enumerate() {
        let s = m.decision(x);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Stratified train/test split, cross-validated training on the training
/// part, held-out evaluation, and a final refit on the whole dataset.
pub fn run_pipeline(
    data: &TopicDataset,
    choice: &FeaturizerChoice,
    config: &TrainConfig,
) -> Result<PipelineReport, TopicError> {
    let n_classes = data.labels().len();
    let (train_idx, test_idx) =
        stratified_split(data.targets(), n_classes, config.test_fraction, config.seed);
    let train_set = data.subset(&train_idx);
    let test_set = data.subset(&test_idx);
    let (model, cv) = train(&train_set, choice, config)?;
    let holdout = model.evaluate_dataset(&test_set)?;
    let final_model = fit_model(data, choice, cv.best_c, config, cv.scores.clone())?;
    Ok(PipelineReport {
        train_size: train_set.len(),
        test_size: test_set.len(),
        cv,
        holdout,
        model,
        final_model,
    })
}
