//! Unigram + bigram TF-IDF with smoothed idf and L2 normalization.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::SparseVector;

/// Lowercased alphanumeric runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// Unigrams followed by adjacent-token bigrams joined with one space.
pub fn terms(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    let bigrams: Vec<String> = tokens
        .windows(2)
        .map(|w| format!("{} {}", w[0], w[1]))
        .collect();
    let mut out = tokens;
    out.extend(bigrams);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub index: usize,
    pub df: usize,
}

/// Vocabulary fitted on a document collection. Term indices are assigned in
/// lexicographic term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    n_docs: usize,
    terms: BTreeMap<String, TermStats>,
}

impl TfidfVocabulary {
    pub fn fit<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let unique: BTreeSet<String> = terms(doc.as_ref()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let terms = df
            .into_iter()
            .enumerate()
            .map(|(index, (term, df))| (term, TermStats { index, df }))
            .collect();
        Self {
            n_docs: docs.len(),
            terms,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn get(&self, term: &str) -> Option<TermStats> {
        self.terms.get(term).copied()
    }

    /// `ln((1 + N) / (1 + df)) + 1`
    pub fn idf(&self, df: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    /// Raw term counts times idf, L2-normalized. Unknown terms are ignored.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: HashMap<usize, (f64, usize)> = HashMap::new();
        for t in terms(text) {
            if let Some(stats) = self.terms.get(&t) {
                counts.entry(stats.index).or_insert((0.0, stats.df)).0 += 1.0;
            }
        }
        let entries = counts
            .into_iter()
            .map(|(i, (tf, df))| (i as u32, tf * self.idf(df)))
            .collect();
        let mut v = SparseVector::from_unsorted(entries);
        v.normalize();
        v
    }
}
