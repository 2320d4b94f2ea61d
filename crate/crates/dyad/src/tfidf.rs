//! TF-IDF vectorization and cosine-similarity ranking.
//!
//! The weight of word `w` in document `d` is its count in `d` times
//! `ln(N / df(w))`, where `N` is the number of training contexts and
//! `df(w)` how many of them contain `w`. The base of the logarithm does not
//! change any ranking; natural log is used throughout. Tokens appearing
//! only at query time carry no weight.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::preprocess::{Preprocessor, TokenSequence};

/// Inverse document frequencies fitted on training contexts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdfTable {
    weights: HashMap<String, f64>,
    pub n_docs: usize,
}

impl IdfTable {
    pub fn idf(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Entries sorted by token, for serialization.
    pub fn sorted_entries(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.weights.iter().map(|(t, &w)| (t.as_str(), w)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub fn from_entries<I: IntoIterator<Item = (String, f64)>>(entries: I, n_docs: usize) -> Self {
        IdfTable {
            weights: entries.into_iter().collect(),
            n_docs,
        }
    }
}

/// Fits idf weights over a document collection: `idf(w) = ln(N / df(w))`.
pub fn fit_idf<'a, I>(documents: I) -> Result<IdfTable>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut n_docs = 0usize;
    for doc in documents {
        n_docs += 1;
        let unique: HashSet<&String> = doc.iter().collect();
        for tok in unique {
            *df.entry(tok.clone()).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::EmptyCorpus);
    }
    let weights = df
        .into_iter()
        .map(|(tok, d)| (tok, (n_docs as f64 / d as f64).ln()))
        .collect();
    Ok(IdfTable {
        weights,
        n_docs,
    })
}

/// A sparse tf-idf vector. Zero weights are never stored, and the ordered
/// map keeps dot products deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector(pub BTreeMap<String, f64>);

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.0.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        // Iterate the smaller side.
        let (a, b) = if self.0.len() <= other.0.len() {
            (self, other)
        } else {
            (other, self)
        };
        a.0.iter()
            .filter_map(|(t, w)| b.0.get(t).map(|v| w * v))
            .sum()
    }

    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Builds the tf-idf vector of a token sequence: count times idf, with
/// zero-idf and unseen tokens contributing nothing.
pub fn vectorize(seq: &TokenSequence, idf: &IdfTable) -> SparseVector {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in seq.iter() {
        *counts.entry(tok.as_str()).or_default() += 1;
    }
    let mut weights = BTreeMap::new();
    for (tok, count) in counts {
        let w = count as f64 * idf.idf(tok);
        if w != 0.0 {
            weights.insert(tok.to_string(), w);
        }
    }
    SparseVector(weights)
}

/// Ranks candidates by descending cosine similarity to the context. Zero
/// vectors score 0; ties break by ascending candidate index.
pub fn rank_responses(context: &SparseVector, candidates: &[SparseVector]) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, context.cosine(c)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

/// A complete tf-idf response ranker: preprocessing, fitted idf weights,
/// and cosine ranking.
#[derive(Debug, Clone)]
pub struct TfIdfRanker {
    pub idf: IdfTable,
    pub preprocessor: Preprocessor,
}

impl TfIdfRanker {
    /// Fits idf weights on raw training contexts.
    pub fn fit<'a, I: IntoIterator<Item = &'a str>>(
        contexts: I,
        preprocessor: Preprocessor,
    ) -> Result<Self> {
        let docs: Vec<TokenSequence> = contexts.into_iter().map(|c| preprocessor.run(c)).collect();
        let idf = fit_idf(docs.iter())?;
        Ok(TfIdfRanker { idf, preprocessor })
    }

    pub fn vectorize_text(&self, text: &str) -> SparseVector {
        vectorize(&self.preprocessor.run(text), &self.idf)
    }
}

impl crate::eval::ResponseRanker for TfIdfRanker {
    fn rank(&self, context: &str, candidates: &[String]) -> Vec<(usize, f64)> {
        let ctx = self.vectorize_text(context);
        let cands: Vec<SparseVector> =
            candidates.iter().map(|c| self.vectorize_text(c)).collect();
        rank_responses(&ctx, &cands)
    }
}
