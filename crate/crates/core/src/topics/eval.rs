//! Confusion matrices, unweighted average recall and topic distributions.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::corpus::ExamQuestion;

/// Square count matrix; rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn count(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    /// Correct / total for a class; `None` when the class has no samples.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let support = self.support(class);
        (support > 0).then(|| self.counts[class][class] as f64 / support as f64)
    }

    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.labels.len()).map(|c| self.recall(c)).collect()
    }

    /// Mean recall over classes that have samples; `None` if none do.
    pub fn uar(&self) -> Option<f64> {
        let recalls: Vec<f64> = self.recalls().into_iter().flatten().collect();
        (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    /// Labels excluded from the UAR because they have no samples.
    pub fn absent_labels(&self) -> Vec<&str> {
        (0..self.labels.len())
            .filter(|&c| self.support(c) == 0)
            .map(|c| self.labels[c].as_str())
            .collect()
    }

    /// Each row divided by its total; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if total == 0 {
                            0.0
                        } else {
                            c as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// CSV with a header of predicted labels and one row per true label.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(usize::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub uar: Option<f64>,
    pub recalls: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<String>,
}

impl Evaluation {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let warnings = confusion
            .absent_labels()
            .into_iter()
            .map(|l| format!("class {l:?} absent from the test set; excluded from UAR"))
            .collect();
        Self {
            uar: confusion.uar(),
            recalls: confusion.recalls(),
            confusion,
            warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicShare {
    pub topic: String,
    pub count: usize,
    pub fraction: f64,
}

/// Topic counts over questions whose year falls in `years`, most frequent
/// first (ties by topic name). Questions without a topic are skipped.
pub fn topic_distribution<'a>(
    questions: impl IntoIterator<Item = &'a ExamQuestion>,
    years: RangeInclusive<i32>,
) -> Vec<TopicShare> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for q in questions {
        if let (true, Some(topic)) = (years.contains(&q.year), q.topic.as_deref()) {
            *counts.entry(topic).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let mut shares: Vec<TopicShare> = counts
        .into_iter()
        .map(|(topic, count)| TopicShare {
            topic: topic.to_string(),
            count,
            fraction: count as f64 / total as f64,
        })
        .collect();
    shares.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.topic.cmp(&b.topic)));
    shares
}
