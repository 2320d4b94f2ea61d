//! Corpus splitting and (context, response, flag) record generation.
//!
//! Training records take every turn from the third onward as a response
//! with all previous turns as its context, paired 1:1 with a random
//! negative. Test records sample a stochastic context length per dialogue
//! and rank the true next turn against sampled distractors. All randomness
//! derives from a single seed, so generation is bit-reproducible.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::disentangle::Dialogue;
use crate::error::{Error, Result};

/// Separator between context utterances.
pub const EOS_SEPARATOR: &str = " __EOS__ ";

/// One classification record: a dialogue prefix, a candidate next
/// utterance, and whether the candidate really followed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub context: String,
    pub response: String,
    pub flag: u8,
}

/// One ranking record: a context with its true response and `k` distractors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestRecord {
    pub context: String,
    pub true_response: String,
    pub distractors: Vec<String>,
}

impl TestRecord {
    /// Candidates in file order: the true response first, then distractors.
    pub fn candidates(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(1 + self.distractors.len());
        out.push(self.true_response.clone());
        out.extend(self.distractors.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    /// Fraction of dialogues set aside for the test set.
    pub test_fraction: f64,
    pub seed: u64,
    /// Distractors per test record: 1 for the 1-in-2 setting, 9 for 1-in-10.
    pub negatives_per_positive: usize,
    /// Maximum desired context size `C` for the stochastic sampler.
    pub max_context_turns: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.02,
            seed: 0,
            negatives_per_positive: 1,
            max_context_turns: 20,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("at least one negative per positive".into()));
        }
        if self.max_context_turns == 0 {
            return Err(Error::Config("max context size must be positive".into()));
        }
        Ok(())
    }
}

/// Derives an independent, reproducible RNG stream from the master seed.
pub fn derive_rng(seed: u64, tag: &str, k: u64) -> ChaCha20Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    for b in k.to_le_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha20Rng::seed_from_u64(seed ^ h)
}

fn dialogue_stream_id(d: &Dialogue) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in d.id.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seeded uniform random partition by whole dialogue. The test side gets
/// `round(n * test_fraction)` dialogues; both sides keep input order.
pub fn split_corpus<'a>(
    dialogues: &'a [Dialogue],
    cfg: &SplitConfig,
) -> (Vec<&'a Dialogue>, Vec<&'a Dialogue>) {
    let n = dialogues.len();
    let test_count = ((n as f64) * cfg.test_fraction).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut derive_rng(cfg.seed, "split", 0));
    let mut test_idx: Vec<usize> = indices.into_iter().take(test_count).collect();
    test_idx.sort_unstable();

    let mut train = Vec::with_capacity(n - test_count);
    let mut test = Vec::with_capacity(test_count);
    let mut next_test = test_idx.iter().peekable();
    for (i, d) in dialogues.iter().enumerate() {
        if next_test.peek() == Some(&&i) {
            test.push(d);
            next_test.next();
        } else {
            train.push(d);
        }
    }
    (train, test)
}

/// Samples a context length for a test dialogue of `t` turns.
///
/// `eta` is drawn uniformly from the integers of `[C/2, 10C]` and the
/// context length is `min(t - 1, n - 1)` with `n = 10C/eta + 2` under
/// integer division. For `C = 20` this puts the length in `[2, min(t-1,
/// 21)]` with both endpoints reachable.
pub fn sample_context_length(t: usize, c_max: usize, rng: &mut impl Rng) -> Result<usize> {
    if t < 3 {
        return Err(Error::InvalidDialogue { turns: t, min: 3 });
    }
    if c_max == 0 {
        return Err(Error::Config("max context size must be positive".into()));
    }
    let lo = (c_max / 2).max(1);
    let hi = 10 * c_max;
    let eta = rng.gen_range(lo..=hi);
    let n = (10 * c_max) / eta + 2;
    Ok((t - 1).min(n - 1))
}

fn join_context(turns: &[crate::disentangle::Turn]) -> String {
    turns
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(EOS_SEPARATOR)
}

/// Generates one ranking record per test dialogue. Distractors are other
/// test dialogues' true responses, sampled uniformly without replacement
/// and always different in text from the record's own true response.
pub fn make_test_records(test: &[&Dialogue], cfg: &SplitConfig) -> Result<Vec<TestRecord>> {
    cfg.validate()?;
    let mut partial: Vec<(String, String)> = Vec::with_capacity(test.len());
    for d in test {
        let t = d.turns.len();
        let mut rng = derive_rng(cfg.seed, "context-length", dialogue_stream_id(d));
        let c = sample_context_length(t, cfg.max_context_turns, &mut rng)?;
        let context = join_context(&d.turns[..c]);
        let true_response = d.turns[c].text.clone();
        if true_response.is_empty() {
            return Err(Error::Generation(format!(
                "dialogue {} has an empty response turn",
                d.id
            )));
        }
        partial.push((context, true_response));
    }

    let k = cfg.negatives_per_positive;
    let mut records = Vec::with_capacity(partial.len());
    for (i, (context, true_response)) in partial.iter().enumerate() {
        let mut eligible: Vec<usize> = (0..partial.len())
            .filter(|&j| j != i && partial[j].1 != *true_response)
            .collect();
        if eligible.len() < k {
            return Err(Error::Generation(format!(
                "record {i} has only {} eligible distractors, {k} requested",
                eligible.len()
            )));
        }
        let mut rng = derive_rng(cfg.seed, "distractors", i as u64);
        let (chosen, _) = eligible.partial_shuffle(&mut rng, k);
        let distractors = chosen.iter().map(|&j| partial[j].1.clone()).collect();
        records.push(TestRecord {
            context: context.clone(),
            true_response: true_response.clone(),
            distractors,
        });
    }
    Ok(records)
}

/// Generates training triples: for every turn index `i >= 3` of every
/// dialogue, a positive with turns `1..i-1` as context and turn `i` as
/// response, plus one negative sharing the context with a response sampled
/// from the other training examples. Output order is shuffled.
pub fn make_training_triples(train: &[&Dialogue], cfg: &SplitConfig) -> Result<Vec<Triple>> {
    cfg.validate()?;
    let mut positives: Vec<(String, String)> = Vec::new();
    for d in train {
        for i in 3..=d.turns.len() {
            let response = d.turns[i - 1].text.clone();
            if response.is_empty() {
                continue;
            }
            positives.push((join_context(&d.turns[..i - 1]), response));
        }
    }

    let mut triples = Vec::with_capacity(positives.len() * 2);
    let mut neg_rng = derive_rng(cfg.seed, "train-negatives", 0);
    for (i, (context, response)) in positives.iter().enumerate() {
        triples.push(Triple {
            context: context.clone(),
            response: response.clone(),
            flag: 1,
        });
        let negative = sample_negative(&positives, i, &mut neg_rng)?;
        triples.push(Triple {
            context: context.clone(),
            response: negative,
            flag: 0,
        });
    }
    triples.shuffle(&mut derive_rng(cfg.seed, "train-shuffle", 0));
    Ok(triples)
}

fn sample_negative(
    positives: &[(String, String)],
    this: usize,
    rng: &mut impl Rng,
) -> Result<String> {
    let own = &positives[this].1;
    for _ in 0..1000 {
        let j = rng.gen_range(0..positives.len());
        if j != this && positives[j].1 != *own {
            return Ok(positives[j].1.clone());
        }
    }
    // Nearly everything matched; fall back to a scan for determinism.
    positives
        .iter()
        .enumerate()
        .find(|(j, (_, r))| *j != this && r != own)
        .map(|(_, (_, r))| r.clone())
        .ok_or_else(|| Error::Generation("no distinct negative response exists".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chatlog::MinuteOfDay;
    use crate::disentangle::Turn;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, HashSet};

    fn dialogue(id: usize, turns: usize) -> Dialogue {
        dialogue_with_texts(
            id,
            &(0..turns).map(|i| format!("turn {i} of d{id}")).collect::<Vec<_>>(),
        )
    }

    fn dialogue_with_texts(id: usize, texts: &[String]) -> Dialogue {
        let speakers = ["ada", "bruno"];
        Dialogue {
            id: format!("#t:2004-11-15:{id}"),
            channel: "#t".into(),
            date: NaiveDate::from_ymd_opt(2004, 11, 15).unwrap(),
            participants: ["ada".into(), "bruno".into()],
            turns: texts
                .iter()
                .enumerate()
                .map(|(i, text)| Turn {
                    time: MinuteOfDay::from_minutes(i as u32).unwrap(),
                    sender: speakers[i % 2].into(),
                    recipient: None,
                    text: text.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn split_takes_exact_rounded_fraction() {
        let corpus: Vec<Dialogue> = (0..1000).map(|i| dialogue(i, 3)).collect();
        let cfg = SplitConfig { seed: 7, ..Default::default() };
        let (train, test) = split_corpus(&corpus, &cfg);
        assert_eq!(test.len(), 20);
        assert_eq!(train.len(), 980);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let corpus: Vec<Dialogue> = (0..50).map(|i| dialogue(i, 4)).collect();
        let cfg = SplitConfig { test_fraction: 0.2, seed: 3, ..Default::default() };
        let (train_a, test_a) = split_corpus(&corpus, &cfg);
        let (train_b, test_b) = split_corpus(&corpus, &cfg);
        let ids = |v: &[&Dialogue]| v.iter().map(|d| d.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&train_a), ids(&train_b));
        assert_eq!(ids(&test_a), ids(&test_b));
        let train_set: HashSet<_> = ids(&train_a).into_iter().collect();
        let test_set: HashSet<_> = ids(&test_a).into_iter().collect();
        assert!(train_set.is_disjoint(&test_set));
        assert_eq!(train_set.len() + test_set.len(), 50);
    }

    #[test]
    fn split_of_empty_corpus_is_empty() {
        let (train, test) = split_corpus(&[], &SplitConfig::default());
        assert!(train.is_empty());
        assert!(test.is_empty());
    }

    #[test]
    fn sampler_endpoints_by_hand() {
        // eta at the top of its range gives the minimum context.
        // n = 200/200 + 2 = 3 so c = min(t-1, 2) = 2.
        // eta at the bottom gives n = 200/10 + 2 = 22 so c = min(t-1, 21).
        let mut seen = BTreeMap::new();
        let mut rng = derive_rng(0, "test", 0);
        for _ in 0..100_000 {
            let c = sample_context_length(100, 20, &mut rng).unwrap();
            *seen.entry(c).or_insert(0usize) += 1;
        }
        assert_eq!(*seen.keys().next().unwrap(), 2);
        assert_eq!(*seen.keys().last().unwrap(), 21);
    }

    #[test]
    fn sampler_clamps_to_short_dialogues() {
        let mut rng = derive_rng(1, "test", 0);
        for _ in 0..1000 {
            assert_eq!(sample_context_length(3, 20, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn sampler_rejects_tiny_dialogues() {
        let mut rng = derive_rng(1, "test", 0);
        assert!(sample_context_length(2, 20, &mut rng).is_err());
    }

    #[test]
    fn test_records_have_exactly_one_true_candidate() {
        let corpus: Vec<Dialogue> = (0..30).map(|i| dialogue(i, 5)).collect();
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let cfg = SplitConfig { negatives_per_positive: 9, seed: 11, ..Default::default() };
        let records = make_test_records(&refs, &cfg).unwrap();
        assert_eq!(records.len(), 30);
        for r in &records {
            assert_eq!(r.candidates().len(), 10);
            assert!(r.distractors.iter().all(|d| *d != r.true_response));
            let unique: HashSet<&String> = r.distractors.iter().collect();
            assert_eq!(unique.len(), 9, "distractors drawn without replacement");
        }
    }

    #[test]
    fn test_record_response_is_next_turn_verbatim() {
        let corpus: Vec<Dialogue> = (0..10).map(|i| dialogue(i, 6)).collect();
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let cfg = SplitConfig { seed: 5, ..Default::default() };
        let records = make_test_records(&refs, &cfg).unwrap();
        for (r, d) in records.iter().zip(&corpus) {
            let c = r.context.split(EOS_SEPARATOR).count();
            assert!(c >= 2);
            assert_eq!(r.true_response, d.turns[c].text);
            assert_eq!(r.context, d.turns[..c]
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(EOS_SEPARATOR));
        }
    }

    #[test]
    fn test_records_error_when_distractors_run_out() {
        let corpus: Vec<Dialogue> = (0..5).map(|i| dialogue(i, 4)).collect();
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let cfg = SplitConfig { negatives_per_positive: 9, ..Default::default() };
        assert!(make_test_records(&refs, &cfg).is_err());
    }

    #[test]
    fn training_triple_counts_follow_dialogue_length() {
        // A length-10 dialogue yields 8 positives, 16 triples with 1:1
        // negatives.
        let corpus = vec![dialogue(0, 10)];
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let triples = make_training_triples(&refs, &SplitConfig::default()).unwrap();
        assert_eq!(triples.len(), 16);
        assert_eq!(triples.iter().filter(|t| t.flag == 1).count(), 8);

        let corpus = vec![dialogue(0, 10), dialogue(1, 3)];
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let triples = make_training_triples(&refs, &SplitConfig::default()).unwrap();
        // Length 3 adds exactly one more positive.
        assert_eq!(triples.len(), 18);
        assert_eq!(triples.iter().filter(|t| t.flag == 1).count(), 9);
    }

    #[test]
    fn training_negatives_differ_from_their_positives() {
        let corpus: Vec<Dialogue> = (0..20).map(|i| dialogue(i, 6)).collect();
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let triples = make_training_triples(&refs, &SplitConfig { seed: 2, ..Default::default() }).unwrap();
        let mut by_context: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
        for t in &triples {
            let entry = by_context.entry(&t.context).or_default();
            if t.flag == 1 {
                entry.0.push(&t.response);
            } else {
                entry.1.push(&t.response);
            }
        }
        for (pos, neg) in by_context.values() {
            assert_eq!(pos.len(), neg.len());
            for n in neg {
                assert!(!pos.contains(n));
            }
        }
    }

    #[test]
    fn shuffling_is_a_permutation() {
        let corpus: Vec<Dialogue> = (0..15).map(|i| dialogue(i, 5)).collect();
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let a = make_training_triples(&refs, &SplitConfig { seed: 4, ..Default::default() }).unwrap();
        let b = make_training_triples(&refs, &SplitConfig { seed: 9, ..Default::default() }).unwrap();
        let key = |ts: &[Triple]| {
            let mut v: Vec<String> =
                ts.iter().map(|t| format!("{}|{}|{}", t.context, t.response, t.flag)).collect();
            v.sort();
            v
        };
        // Different seeds shuffle differently but positives are identical.
        let pos = |ts: &[Triple]| {
            let mut v: Vec<&Triple> = ts.iter().filter(|t| t.flag == 1).collect();
            v.sort_by(|x, y| (&x.context, &x.response).cmp(&(&y.context, &y.response)));
            v.iter().map(|t| t.context.clone()).collect::<Vec<_>>()
        };
        assert_eq!(pos(&a), pos(&b));
        assert_eq!(key(&a).len(), key(&b).len());
    }

    #[test]
    fn generation_is_deterministic() {
        let corpus: Vec<Dialogue> = (0..25).map(|i| dialogue(i, 7)).collect();
        let refs: Vec<&Dialogue> = corpus.iter().collect();
        let cfg = SplitConfig { seed: 42, negatives_per_positive: 9, ..Default::default() };
        assert_eq!(make_test_records(&refs, &cfg).unwrap(), make_test_records(&refs, &cfg).unwrap());
        assert_eq!(
            make_training_triples(&refs, &cfg).unwrap(),
            make_training_triples(&refs, &cfg).unwrap()
        );
    }

    proptest! {
        #[test]
        fn sampled_context_lengths_stay_in_bounds(t in 3usize..60, seed in 0u64..1000) {
            let mut rng = derive_rng(seed, "prop", 0);
            let c = sample_context_length(t, 20, &mut rng).unwrap();
            prop_assert!(c >= 2);
            prop_assert!(c <= (t - 1).min(21));
        }

        #[test]
        fn split_partition_is_exhaustive(n in 0usize..120, seed in 0u64..100) {
            let corpus: Vec<Dialogue> = (0..n).map(|i| dialogue(i, 3)).collect();
            let cfg = SplitConfig { test_fraction: 0.25, seed, ..Default::default() };
            let (train, test) = split_corpus(&corpus, &cfg);
            prop_assert_eq!(train.len() + test.len(), n);
            let mut ids: Vec<&str> = train.iter().chain(test.iter()).map(|d| d.id.as_str()).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
        }
    }
}
