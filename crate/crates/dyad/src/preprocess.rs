//! Tokenization, entity tagging, and integer encoding for the rankers.
//!
//! The tokenizer is a self-contained rule set so results are reproducible
//! bit-exactly: lowercase, split on whitespace, peel leading/trailing
//! punctuation into separate tokens, keep URLs / filesystem paths /
//! emoticons whole, and split the `n't` contraction (`don't` -> `do n't`).
//! Entity tagging then replaces whole tokens with generic category tags.

use std::collections::{HashMap, HashSet};

use crate::disentangle::UsernameRoster;

pub const TAG_URL: &str = "__url__";
pub const TAG_PATH: &str = "__path__";
pub const TAG_NAME: &str = "__name__";
pub const TAG_LOCATION: &str = "__location__";
pub const TAG_ORGANIZATION: &str = "__organization__";

pub const PAD_TOKEN: &str = "__pad__";
pub const UNK_TOKEN: &str = "__unk__";
pub const PAD_INDEX: u32 = 0;
pub const UNK_INDEX: u32 = 1;

/// An ordered sequence of lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }

    pub fn from_tokens<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        TokenSequence(tokens.into_iter().map(Into::into).collect())
    }
}

const PUNCTUATION: &[char] = &['.', ',', ':', ';', '!', '?', '(', ')', '"', '\''];

/// URL heuristic: a scheme separator anywhere or a `www.` prefix.
pub fn is_url_token(token: &str) -> bool {
    token.contains("://") || token.starts_with("www.")
}

/// Filesystem-path heuristic: contains `/` and is anchored at `/` or `~`.
pub fn is_path_token(token: &str) -> bool {
    token.contains('/') && (token.starts_with('/') || token.starts_with('~'))
}

/// Emoticon heuristic over a whole token: eyes, optional nose, one mouth.
pub fn is_emoticon_token(token: &str) -> bool {
    let bytes = token.as_bytes();
    let eyes = |b: u8| matches!(b, b':' | b';' | b'=');
    let mouth =
        |b: u8| matches!(b, b')' | b'(' | b'd' | b'p' | b'o' | b'/' | b'\\' | b'|' | b'*' | b'3');
    match bytes.len() {
        2 => eyes(bytes[0]) && mouth(bytes[1]),
        3 => eyes(bytes[0]) && matches!(bytes[1], b'-' | b'\'' | b'^') && mouth(bytes[2]),
        _ => false,
    }
}

fn is_atomic(token: &str) -> bool {
    is_url_token(token) || is_path_token(token) || is_emoticon_token(token)
}

/// Splits lowercased text into tokens.
pub fn tokenize(text: &str) -> TokenSequence {
    let lowered = text.to_lowercase();
    let mut tokens: Vec<String> = Vec::new();
    for word in lowered.split_whitespace() {
        split_word(word, &mut tokens);
    }
    TokenSequence(tokens)
}

fn split_word(word: &str, out: &mut Vec<String>) {
    if is_atomic(word) {
        out.push(word.to_string());
        return;
    }
    let mut core = word;
    // Peel leading punctuation, stopping if the remainder becomes atomic.
    while let Some(c) = core.chars().next() {
        if !PUNCTUATION.contains(&c) || is_atomic(core) {
            break;
        }
        out.push(c.to_string());
        core = &core[c.len_utf8()..];
    }
    // Peel trailing punctuation the same way.
    let mut trailing: Vec<String> = Vec::new();
    while let Some(c) = core.chars().next_back() {
        if !PUNCTUATION.contains(&c) || is_atomic(core) {
            break;
        }
        trailing.push(c.to_string());
        core = &core[..core.len() - c.len_utf8()];
    }
    if !core.is_empty() {
        match core.strip_suffix("n't") {
            Some(stem) if !stem.is_empty() => {
                out.push(stem.to_string());
                out.push("n't".to_string());
            }
            _ => out.push(core.to_string()),
        }
    }
    out.extend(trailing.into_iter().rev());
}

/// Optional gazetteers for location and organization tagging, loaded from
/// plain one-token-per-line files.
#[derive(Debug, Clone, Default)]
pub struct Gazetteers {
    pub locations: Option<HashSet<String>>,
    pub organizations: Option<HashSet<String>>,
}

/// Replaces entity-category tokens with generic tags. Sequence length never
/// changes.
pub fn tag_entities(seq: &TokenSequence, roster: &UsernameRoster) -> TokenSequence {
    tag_entities_with(seq, Some(roster), &Gazetteers::default())
}

pub fn tag_entities_with(
    seq: &TokenSequence,
    roster: Option<&UsernameRoster>,
    gazetteers: &Gazetteers,
) -> TokenSequence {
    let tagged = seq
        .iter()
        .map(|tok| {
            if is_url_token(tok) {
                TAG_URL.to_string()
            } else if is_path_token(tok) {
                TAG_PATH.to_string()
            } else if roster.is_some_and(|r| r.contains(tok)) {
                TAG_NAME.to_string()
            } else if gazetteers
                .locations
                .as_ref()
                .is_some_and(|g| g.contains(tok))
            {
                TAG_LOCATION.to_string()
            } else if gazetteers
                .organizations
                .as_ref()
                .is_some_and(|g| g.contains(tok))
            {
                TAG_ORGANIZATION.to_string()
            } else {
                tok.clone()
            }
        })
        .collect();
    TokenSequence(tagged)
}

/// Tokenize-then-tag bundle used at model input time. Name tagging happens
/// only when a roster is supplied; URL and path tagging always apply.
#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    pub roster: Option<UsernameRoster>,
    pub gazetteers: Gazetteers,
}

impl Preprocessor {
    pub fn run(&self, text: &str) -> TokenSequence {
        tag_entities_with(&tokenize(text), self.roster.as_ref(), &self.gazetteers)
    }
}

/// Token-to-index mapping with reserved entries: padding at 0, unknown at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocabulary {
    fn reserved() -> Self {
        Vocabulary::from_ordered_tokens(vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()])
    }

    /// Rebuilds a vocabulary from its ordered token list (reserved entries
    /// included), as stored in checkpoints.
    pub fn from_ordered_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { index, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Reserved entries are always present.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Builds a vocabulary over token streams: tokens with frequency at least
/// `min_count`, ordered by descending frequency then lexicographically.
pub fn build_vocab<'a, I>(streams: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for seq in streams {
        for tok in seq.iter() {
            *counts.entry(tok.clone()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(tok, n)| *n >= min_count.max(1) && tok != PAD_TOKEN && tok != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut vocab = Vocabulary::reserved();
    for (tok, _) in kept {
        let idx = vocab.tokens.len() as u32;
        vocab.index.insert(tok.clone(), idx);
        vocab.tokens.push(tok);
    }
    vocab
}

/// Maps tokens to indices, unknowns to [`UNK_INDEX`]. Sequences over
/// `max_len` keep their **last** `max_len` tokens: the most recent context
/// matters.
pub fn encode(seq: &TokenSequence, vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    let skip = seq.len().saturating_sub(max_len);
    seq.iter()
        .skip(skip)
        .map(|t| vocab.get(t).unwrap_or(UNK_INDEX))
        .collect()
}

/// Like [`encode`] but keeps the **first** `max_len` tokens, the rule for
/// responses.
pub fn encode_head(seq: &TokenSequence, vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    seq.iter()
        .take(max_len)
        .map(|t| vocab.get(t).unwrap_or(UNK_INDEX))
        .collect()
}

/// Inverse of [`encode`] for in-vocabulary sequences.
pub fn decode(indices: &[u32], vocab: &Vocabulary) -> TokenSequence {
    TokenSequence(
        indices
            .iter()
            .map(|&i| vocab.token(i).unwrap_or(UNK_TOKEN).to_string())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).0
    }

    #[test]
    fn splits_contractions_and_punctuation() {
        assert_eq!(
            toks("reconfiguring apache don't solve it ?"),
            vec!["reconfiguring", "apache", "do", "n't", "solve", "it", "?"]
        );
    }

    #[test]
    fn empty_text_gives_empty_sequence() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn urls_kept_whole() {
        assert_eq!(toks("see http://a.b/c now"), vec!["see", "http://a.b/c", "now"]);
        assert_eq!(
            toks("open www.example.org today"),
            vec!["open", "www.example.org", "today"]
        );
    }

    #[test]
    fn paths_kept_whole() {
        assert_eq!(
            toks("deleted all of /etc/apache2 - which package provides it ?"),
            vec!["deleted", "all", "of", "/etc/apache2", "-", "which", "package", "provides", "it", "?"]
        );
        assert_eq!(toks("see ~/notes.txt please"), vec!["see", "~/notes.txt", "please"]);
    }

    #[test]
    fn emoticons_kept_whole() {
        assert_eq!(toks("great :) thanks"), vec!["great", ":)", "thanks"]);
        assert_eq!(toks("hmm :-/ maybe"), vec!["hmm", ":-/", "maybe"]);
    }

    #[test]
    fn punctuation_peels_from_both_ends() {
        assert_eq!(toks("(PID#)"), vec!["(", "pid#", ")"]);
        assert_eq!(toks("\"ps ax\""), vec!["\"", "ps", "ax", "\""]);
        assert_eq!(toks("wait..."), vec!["wait", ".", ".", "."]);
    }

    #[test]
    fn tag_entities_replaces_categories() {
        let roster = UsernameRoster::from_names(["kuja"]);
        let seq = tokenize("hi kuja see /etc/apache2 or http://a.b");
        let tagged = tag_entities(&seq, &roster);
        assert_eq!(
            tagged.0,
            vec!["hi", "__name__", "see", "__path__", "or", "__url__"]
        );
    }

    #[test]
    fn tag_entities_without_matches_is_identity() {
        let roster = UsernameRoster::from_names(["kuja"]);
        let seq = tokenize("nothing to replace here");
        assert_eq!(tag_entities(&seq, &roster), seq);
    }

    #[test]
    fn gazetteers_tag_when_supplied() {
        let gaz = Gazetteers {
            locations: Some(HashSet::from(["paris".to_string()])),
            organizations: Some(HashSet::from(["canonical".to_string()])),
        };
        let seq = tokenize("canonical is hiring in paris");
        let tagged = tag_entities_with(&seq, None, &gaz);
        assert_eq!(
            tagged.0,
            vec!["__organization__", "is", "hiring", "in", "__location__"]
        );
    }

    #[test]
    fn vocab_orders_by_frequency_then_token() {
        let streams = [tokenize("b a a"), tokenize("a c c")];
        let vocab = build_vocab(&streams, 2);
        assert_eq!(vocab.len(), 4);
        assert_eq!(vocab.get("a"), Some(2));
        assert_eq!(vocab.get("c"), Some(3));
        assert_eq!(vocab.get("b"), None);
    }

    #[test]
    fn vocab_min_count_one_keeps_everything() {
        let streams = [tokenize("x y z")];
        let vocab = build_vocab(&streams, 1);
        assert_eq!(vocab.len(), 5);
    }

    #[test]
    fn empty_stream_gives_reserved_only() {
        let vocab = build_vocab(std::iter::empty(), 1);
        assert_eq!(vocab.len(), 2);
        assert_eq!(vocab.token(PAD_INDEX), Some(PAD_TOKEN));
        assert_eq!(vocab.token(UNK_INDEX), Some(UNK_TOKEN));
    }

    #[test]
    fn encode_keeps_suffix_over_limit() {
        let words: Vec<String> = (0..200).map(|i| format!("w{i:03}")).collect();
        let seq = TokenSequence(words);
        let vocab = build_vocab([&seq], 1);
        let ids = encode(&seq, &vocab, 160);
        assert_eq!(ids.len(), 160);
        assert_eq!(decode(&ids, &vocab).0[0], "w040");
        assert_eq!(decode(&ids, &vocab).0[159], "w199");
    }

    #[test]
    fn encode_under_limit_is_lossless() {
        let seq = tokenize("short and sweet");
        let vocab = build_vocab([&seq], 1);
        let ids = encode(&seq, &vocab, 160);
        assert_eq!(decode(&ids, &vocab), seq);
    }

    #[test]
    fn encode_head_keeps_prefix() {
        let seq = TokenSequence::from_tokens(["a", "b", "c"]);
        let vocab = build_vocab([&seq], 1);
        let ids = encode_head(&seq, &vocab, 2);
        assert_eq!(decode(&ids, &vocab).0, vec!["a", "b"]);
    }

    #[test]
    fn unknown_token_maps_to_reserved_index() {
        let seq = TokenSequence::from_tokens(["known"]);
        let vocab = build_vocab([&seq], 1);
        let ids = encode(&TokenSequence::from_tokens(["mystery"]), &vocab, 10);
        assert_eq!(ids, vec![UNK_INDEX]);
    }

    proptest! {
        #[test]
        fn tokenize_idempotent_on_rejoined_output(text in "[ -~]{0,80}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tagging_preserves_length(text in "[ -~]{0,80}") {
            let roster = UsernameRoster::from_names(["kuja", "taru"]);
            let seq = tokenize(&text);
            prop_assert_eq!(tag_entities(&seq, &roster).len(), seq.len());
        }

        #[test]
        fn encode_decode_round_trip(words in proptest::collection::vec("[a-z]{1,6}", 0..40)) {
            let seq = TokenSequence(words);
            let vocab = build_vocab([&seq], 1);
            let ids = encode(&seq, &vocab, seq.len().max(1));
            prop_assert_eq!(decode(&ids, &vocab), seq);
        }
    }
}
