//! Recall@k evaluation, corpus statistics, and the dataset-size learning
//! curve.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::dataset::{derive_rng, TestRecord, Triple};
use crate::disentangle::Dialogue;
use crate::encoder::{train, EncoderRanker, TrainConfig};
use crate::error::{Error, Result};
use crate::preprocess::{tokenize, Preprocessor};

/// Anything that can order candidate responses for a context. Scores are
/// returned best first; ties must already be broken (by candidate index)
/// so recall is well-defined.
pub trait ResponseRanker {
    fn rank(&self, context: &str, candidates: &[String]) -> Vec<(usize, f64)>;
}

/// Fraction of records whose true candidate sits at rank `k` or better.
/// Each record is the candidates' flags in ranked order.
pub fn recall_at_k(ranked_flags: &[Vec<bool>], k: usize) -> f64 {
    if ranked_flags.is_empty() {
        return 0.0;
    }
    let hits = ranked_flags
        .iter()
        .filter(|flags| flags.iter().take(k).any(|&f| f))
        .count();
    hits as f64 / ranked_flags.len() as f64
}

/// Recall figures for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    /// `1-in-2`, `1-in-10`, ... — one true candidate among `n`.
    pub setting: String,
    pub n_candidates: usize,
    pub n_records: usize,
    /// `(k, recall)` pairs in ascending `k`.
    pub recalls: Vec<(usize, f64)>,
}

impl RecallReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recalls.iter().find(|(kk, _)| *kk == k).map(|(_, r)| *r)
    }
}

impl std::fmt::Display for RecallReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} next-utterance selection over {} records",
            self.setting, self.n_records
        )?;
        for (k, r) in &self.recalls {
            writeln!(f, "  recall@{k}  {r:.4}")?;
        }
        Ok(())
    }
}

/// Runs a ranker over every record and reports the requested Recall@k
/// values. In the binary (two-candidate) setting only R@1 is reported.
pub fn evaluate_ranker<R: ResponseRanker + ?Sized>(
    ranker: &R,
    records: &[TestRecord],
    ks: &[usize],
) -> Result<RecallReport> {
    if records.is_empty() {
        return Err(Error::Generation("no evaluation records".into()));
    }
    let n_candidates = records[0].distractors.len() + 1;
    if records
        .iter()
        .any(|r| r.distractors.len() + 1 != n_candidates)
    {
        return Err(Error::Generation(
            "records disagree on candidate count".into(),
        ));
    }
    let mut ranked_flags = Vec::with_capacity(records.len());
    for rec in records {
        let candidates = rec.candidates();
        let ranked = ranker.rank(&rec.context, &candidates);
        // The true response sits at candidate index 0 by file convention.
        let flags: Vec<bool> = ranked.iter().map(|&(i, _)| i == 0).collect();
        ranked_flags.push(flags);
    }
    let mut kept: Vec<usize> = ks.iter().copied().filter(|&k| k < n_candidates).collect();
    kept.sort_unstable();
    kept.dedup();
    let recalls = kept
        .into_iter()
        .map(|k| (k, recall_at_k(&ranked_flags, k)))
        .collect();
    Ok(RecallReport {
        setting: format!("1-in-{n_candidates}"),
        n_candidates,
        n_records: records.len(),
        recalls,
    })
}

/// Corpus-level statistics over accepted dialogues.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub utterances: usize,
    pub words: usize,
    pub min_turns: usize,
    pub avg_turns: f64,
    pub avg_words_per_utterance: f64,
    pub median_duration_mins: f64,
    /// Turn count -> number of dialogues.
    pub turn_histogram: BTreeMap<usize, usize>,
    /// Least-squares slope of `ln(count)` against `ln(turns)`; the
    /// histogram tail is roughly linear on that scale.
    pub log_log_slope: Option<f64>,
}

impl std::fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "dialogues             {}", self.dialogues)?;
        writeln!(f, "utterances            {}", self.utterances)?;
        writeln!(f, "words                 {}", self.words)?;
        writeln!(f, "min turns/dialogue    {}", self.min_turns)?;
        writeln!(f, "avg turns/dialogue    {:.2}", self.avg_turns)?;
        writeln!(f, "avg words/utterance   {:.2}", self.avg_words_per_utterance)?;
        writeln!(f, "median duration (min) {:.1}", self.median_duration_mins)?;
        if let Some(slope) = self.log_log_slope {
            writeln!(f, "turn histogram slope  {slope:.3}")?;
        }
        Ok(())
    }
}

/// Exact counts over a corpus; word counts use the model tokenizer.
pub fn corpus_stats(dialogues: &[Dialogue]) -> CorpusStats {
    let mut utterances = 0usize;
    let mut words = 0usize;
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut durations: Vec<u32> = Vec::with_capacity(dialogues.len());
    let mut min_turns = usize::MAX;
    for d in dialogues {
        let turns = d.turns.len();
        min_turns = min_turns.min(turns);
        utterances += turns;
        *histogram.entry(turns).or_default() += 1;
        durations.push(d.duration_mins());
        for t in &d.turns {
            words += tokenize(&t.text).len();
        }
    }
    durations.sort_unstable();
    let median = if durations.is_empty() {
        0.0
    } else if durations.len() % 2 == 1 {
        f64::from(durations[durations.len() / 2])
    } else {
        f64::from(durations[durations.len() / 2 - 1] + durations[durations.len() / 2]) / 2.0
    };
    let points: Vec<(f64, f64)> = histogram
        .iter()
        .filter(|&(_, &c)| c > 0)
        .map(|(&t, &c)| ((t as f64).ln(), (c as f64).ln()))
        .collect();
    CorpusStats {
        dialogues: dialogues.len(),
        utterances,
        words,
        min_turns: if dialogues.is_empty() { 0 } else { min_turns },
        avg_turns: if dialogues.is_empty() {
            0.0
        } else {
            utterances as f64 / dialogues.len() as f64
        },
        avg_words_per_utterance: if utterances == 0 {
            0.0
        } else {
            words as f64 / utterances as f64
        },
        median_duration_mins: median,
        turn_histogram: histogram,
        log_log_slope: least_squares_slope(&points),
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Trains the configured encoder on nested prefixes of the shuffled
/// training set and reports 1-in-10 style R@1 on a fixed test set, one
/// `(training size, recall)` row per fraction.
pub fn learning_curve(
    train_triples: &[Triple],
    test_records: &[TestRecord],
    fractions: &[f64],
    cfg: &TrainConfig,
    preprocessor: &Preprocessor,
) -> Result<Vec<(usize, f64)>> {
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::Config("fractions must lie in (0, 1]".into()));
    }
    let mut shuffled: Vec<Triple> = train_triples.to_vec();
    shuffled.shuffle(&mut derive_rng(cfg.seed, "curve-shuffle", 0));
    let mut sorted = fractions.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rows = Vec::with_capacity(sorted.len());
    for f in sorted {
        let n = ((shuffled.len() as f64) * f).round() as usize;
        let prefix = &shuffled[..n.min(shuffled.len())];
        let trained = train(prefix, preprocessor, cfg, None)?;
        let ranker = EncoderRanker::new(trained, preprocessor.clone());
        let report = evaluate_ranker(&ranker, test_records, &[1])?;
        let r1 = report.recall(1).unwrap_or(0.0);
        rows.push((prefix.len(), r1));
    }
    Ok(rows)
}

/// Test-only ranker that always puts the conventionally-true candidate
/// (index 0) first.
pub struct OracleRanker;

impl ResponseRanker for OracleRanker {
    fn rank(&self, _context: &str, candidates: &[String]) -> Vec<(usize, f64)> {
        (0..candidates.len()).map(|i| (i, -(i as f64))).collect()
    }
}

/// Test-only ranker that always puts the true candidate last.
pub struct AdversarialRanker;

impl ResponseRanker for AdversarialRanker {
    fn rank(&self, _context: &str, candidates: &[String]) -> Vec<(usize, f64)> {
        let mut order: Vec<(usize, f64)> = (1..candidates.len())
            .map(|i| (i, -(i as f64)))
            .collect();
        order.push((0, f64::NEG_INFINITY));
        order
    }
}
