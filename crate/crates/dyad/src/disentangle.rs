//! Conversion of multi-party message streams into dyadic dialogues.
//!
//! The channel convention that makes this possible is the name mention:
//! users prefix replies with the intended recipient's nickname. Extraction
//! therefore runs in four fixed stages:
//!
//! 1. [`identify_recipient`] — resolve the leading name mention of every
//!    message against a roster of recently seen usernames.
//! 2. [`extract_dialogues`] — pair each first response with the initial
//!    question it replies to and collect the pair's later exchanges.
//! 3. [`fill_holes`] — pull in unaddressed messages from participants who
//!    talk to nobody else.
//! 4. [`merge_consecutive`] + [`filter_dialogue`] — concatenate same-sender
//!    runs into turns and drop degenerate candidates.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::NaiveDate;

use crate::chatlog::{ChannelDay, MinuteOfDay, RawMessage};

/// Nicknames observed as senders, keyed case-insensitively. The first-seen
/// spelling of each name is kept as its canonical form.
#[derive(Debug, Clone, Default)]
pub struct UsernameRoster {
    canon: BTreeMap<String, String>,
    pub window_days: u32,
}

impl UsernameRoster {
    pub fn new(window_days: u32) -> Self {
        UsernameRoster {
            canon: BTreeMap::new(),
            window_days,
        }
    }

    pub fn from_names<I: IntoIterator<Item = S>, S: AsRef<str>>(names: I) -> Self {
        let mut roster = UsernameRoster::new(0);
        for n in names {
            roster.insert(n.as_ref());
        }
        roster
    }

    pub fn insert(&mut self, name: &str) {
        self.canon
            .entry(name.to_lowercase())
            .or_insert_with(|| name.to_string());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.canon.contains_key(&name.to_lowercase())
    }

    /// Canonical (first-seen) spelling for a name, matched case-insensitively.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        self.canon.get(&name.to_lowercase()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.canon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canon.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.canon.values().map(String::as_str)
    }
}

/// Builds the username roster for the most recent day in `history`,
/// including senders from up to `window_days` previous calendar days.
pub fn build_roster(history: &[ChannelDay], window_days: u32) -> UsernameRoster {
    let mut roster = UsernameRoster::new(window_days);
    let current = match history.iter().map(|d| d.date).max() {
        Some(d) => d,
        None => return roster,
    };
    for day in history {
        let age = (current - day.date).num_days();
        if age < 0 || age > i64::from(window_days) {
            continue;
        }
        for msg in &day.messages {
            roster.insert(&msg.sender);
        }
    }
    roster
}

/// Very common English words that are never treated as name mentions even
/// when a user happens to go by one.
#[derive(Debug, Clone, Default)]
pub struct CommonWords(HashSet<String>);

impl CommonWords {
    /// The wordlist bundled with the crate. Deliberately small; pass a
    /// bigger spell-check dictionary for noisier channels.
    pub fn default_list() -> Self {
        Self::from_lines(include_str!("../data/common_words.txt"))
    }

    pub fn from_lines(text: &str) -> Self {
        CommonWords(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn empty() -> Self {
        CommonWords(HashSet::new())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A message after recipient resolution: the leading name mention, when one
/// is found, is stripped from the utterance and recorded separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressedMessage {
    pub date: NaiveDate,
    pub time: MinuteOfDay,
    pub sender: String,
    pub recipient: Option<String>,
    pub utterance: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecipientOptions {
    /// Also try the final token of the utterance when the first word does
    /// not name anyone. Off by default: trailing mentions exist but are far
    /// less reliable than the leading convention.
    pub match_last_token: bool,
}

const MENTION_TRAILING: &[char] = &[':', ',', '.'];

/// Resolves the recipient of a single message.
///
/// The first whitespace token of the body, stripped of trailing `:`, `,` or
/// `.`, names the recipient when it matches a roster entry
/// case-insensitively and is not a common English word. Otherwise the
/// message is treated as unaddressed and the body is kept whole.
pub fn identify_recipient(
    msg: &RawMessage,
    roster: &UsernameRoster,
    common_words: &CommonWords,
) -> AddressedMessage {
    identify_recipient_with(msg, roster, common_words, &RecipientOptions::default())
}

pub fn identify_recipient_with(
    msg: &RawMessage,
    roster: &UsernameRoster,
    common_words: &CommonWords,
    opts: &RecipientOptions,
) -> AddressedMessage {
    let unaddressed = |m: &RawMessage| AddressedMessage {
        date: m.day,
        time: m.time,
        sender: m.sender.clone(),
        recipient: None,
        utterance: m.body.clone(),
    };

    let matches = |token: &str| -> Option<String> {
        let stripped = token.trim_end_matches(MENTION_TRAILING);
        if stripped.is_empty() || common_words.contains(stripped) {
            return None;
        }
        match roster.canonical(stripped) {
            Some(canon) if !canon.eq_ignore_ascii_case(&msg.sender) => Some(canon.to_string()),
            _ => None,
        }
    };

    let mut tokens = msg.body.split_whitespace();
    let first = match tokens.next() {
        Some(t) => t,
        None => return unaddressed(msg),
    };
    if let Some(recipient) = matches(first) {
        let after = &msg.body[msg.body.find(first).unwrap() + first.len()..];
        return AddressedMessage {
            date: msg.day,
            time: msg.time,
            sender: msg.sender.clone(),
            recipient: Some(recipient),
            utterance: after.trim_start().to_string(),
        };
    }
    if opts.match_last_token {
        if let Some(last) = msg.body.split_whitespace().last() {
            if last != first {
                if let Some(recipient) = matches(last) {
                    let cut = msg.body.rfind(last).unwrap();
                    return AddressedMessage {
                        date: msg.day,
                        time: msg.time,
                        sender: msg.sender.clone(),
                        recipient: Some(recipient),
                        utterance: msg.body[..cut].trim_end().to_string(),
                    };
                }
            }
        }
    }
    unaddressed(msg)
}

/// Resolves recipients for a whole day of messages in stream order.
pub fn address_day(
    messages: &[RawMessage],
    roster: &UsernameRoster,
    common_words: &CommonWords,
    opts: &RecipientOptions,
) -> Vec<AddressedMessage> {
    messages
        .iter()
        .map(|m| identify_recipient_with(m, roster, common_words, opts))
        .collect()
}

/// A dialogue candidate between two users: the initial question, the first
/// response, and everything the pair later exchanged. Each message carries
/// its position in the day stream so that later stages can reason about the
/// candidate's span.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub asker: String,
    pub answerer: String,
    pub messages: Vec<(usize, AddressedMessage)>,
}

impl Candidate {
    fn positions(&self) -> HashSet<usize> {
        self.messages.iter().map(|(p, _)| *p).collect()
    }
}

/// Extracts dialogue candidates from one day of addressed messages.
///
/// A first response is a message that addresses someone from the recent
/// conversation history — the addressee must have spoken earlier that day —
/// where that (asker, answerer) pair has not already been formed. Working
/// backwards from it, the initial question is the addressee's most recent
/// utterance posted within `window_mins` minutes, unaddressed ones
/// preferred. Messages qualifying neither as first response, initial
/// question, nor later exchange within a formed pair are dropped, as are
/// questions nobody answered. The window constrains only the question to
/// first-response gap; once a pair is formed its conversation is unbounded
/// in time for the rest of the day.
pub fn extract_dialogues(day: &[AddressedMessage], window_mins: u32) -> Vec<Candidate> {
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut pair_index: HashMap<(String, String), usize> = HashMap::new();
    // lowercase sender -> positions of earlier messages
    let mut spoken: HashMap<String, Vec<usize>> = HashMap::new();

    for (pos, msg) in day.iter().enumerate() {
        if let Some(recipient) = &msg.recipient {
            let key = pair_key(&msg.sender, recipient);
            if let Some(&idx) = pair_index.get(&key) {
                let cand = &mut candidates[idx];
                // Only messages between exactly this pair extend it.
                if recipient.eq_ignore_ascii_case(other_of(cand, &msg.sender)) {
                    cand.messages.push((pos, msg.clone()));
                }
            } else if let Some(question_pos) =
                find_initial_question(day, pos, recipient, window_mins, &spoken)
            {
                let cand = Candidate {
                    asker: recipient.clone(),
                    answerer: msg.sender.clone(),
                    messages: vec![
                        (question_pos, day[question_pos].clone()),
                        (pos, msg.clone()),
                    ],
                };
                pair_index.insert(key, candidates.len());
                candidates.push(cand);
            }
        }
        spoken.entry(msg.sender.to_lowercase()).or_default().push(pos);
    }

    for cand in &mut candidates {
        cand.messages.sort_by_key(|(p, _)| *p);
    }
    candidates
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    let (a, b) = (a.to_lowercase(), b.to_lowercase());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn other_of<'a>(cand: &'a Candidate, sender: &str) -> &'a str {
    if cand.asker.eq_ignore_ascii_case(sender) {
        &cand.answerer
    } else {
        &cand.asker
    }
}

/// The most recent utterance by `recipient` within the window before the
/// response at `response_pos`. Unaddressed utterances are preferred; if the
/// addressee only spoke to people recently, the latest of those messages
/// stands in as the question.
fn find_initial_question(
    day: &[AddressedMessage],
    response_pos: usize,
    recipient: &str,
    window_mins: u32,
    spoken: &HashMap<String, Vec<usize>>,
) -> Option<usize> {
    let positions = spoken.get(&recipient.to_lowercase())?;
    let response_time = day[response_pos].time.minutes();
    let in_window = |p: usize| {
        let t = day[p].time.minutes();
        t <= response_time && response_time - t <= window_mins
    };
    let recent: Vec<usize> = positions
        .iter()
        .copied()
        .filter(|&p| p < response_pos && in_window(p))
        .collect();
    recent
        .iter()
        .rev()
        .find(|&&p| day[p].recipient.is_none())
        .or_else(|| recent.last())
        .copied()
}

/// Inserts unaddressed messages from participants who talk to nobody else.
///
/// A participant qualifies when none of their messages in the day stream
/// address a third party; their unaddressed messages inside the candidate's
/// span are then added in stream order. Participants who do address others
/// contribute only their explicitly addressed messages.
pub fn fill_holes(cand: &Candidate, day: &[AddressedMessage]) -> Candidate {
    let lo = cand.messages.first().map(|(p, _)| *p).unwrap_or(0);
    let hi = cand.messages.last().map(|(p, _)| *p).unwrap_or(0);
    let present = cand.positions();

    let mut filled = cand.clone();
    for participant in [&cand.asker, &cand.answerer] {
        let partner = if participant.eq_ignore_ascii_case(&cand.asker) {
            &cand.answerer
        } else {
            &cand.asker
        };
        let addresses_third_party = day.iter().any(|m| {
            m.sender.eq_ignore_ascii_case(participant)
                && m.recipient
                    .as_deref()
                    .is_some_and(|r| !r.eq_ignore_ascii_case(partner))
        });
        if addresses_third_party {
            continue;
        }
        for pos in lo..=hi {
            let m = &day[pos];
            if m.sender.eq_ignore_ascii_case(participant)
                && m.recipient.is_none()
                && !present.contains(&pos)
            {
                filled.messages.push((pos, m.clone()));
            }
        }
    }
    filled.messages.sort_by_key(|(p, _)| *p);
    filled
}

/// One turn of a finished dialogue: a maximal same-sender block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub time: MinuteOfDay,
    pub sender: String,
    pub recipient: Option<String>,
    pub text: String,
}

/// A candidate after turn concatenation. The pre-merge utterances are kept
/// because the dominance filter counts utterances, not turns.
#[derive(Debug, Clone)]
pub struct MergedCandidate {
    pub asker: String,
    pub answerer: String,
    pub utterances: Vec<(usize, AddressedMessage)>,
    pub turns: Vec<Turn>,
}

/// Concatenates maximal runs of consecutive same-sender utterances into
/// single turns. Texts are joined with one space and no inserted
/// punctuation; the turn keeps the first message's posting time.
pub fn merge_consecutive(cand: &Candidate) -> MergedCandidate {
    let mut turns: Vec<Turn> = Vec::new();
    for (_, msg) in &cand.messages {
        match turns.last_mut() {
            Some(turn) if turn.sender.eq_ignore_ascii_case(&msg.sender) => {
                if !msg.utterance.is_empty() {
                    if !turn.text.is_empty() {
                        turn.text.push(' ');
                    }
                    turn.text.push_str(&msg.utterance);
                }
                if turn.recipient.is_none() {
                    turn.recipient = msg.recipient.clone();
                }
            }
            _ => turns.push(Turn {
                time: msg.time,
                sender: msg.sender.clone(),
                recipient: msg.recipient.clone(),
                text: msg.utterance.clone(),
            }),
        }
    }
    MergedCandidate {
        asker: cand.asker.clone(),
        answerer: cand.answerer.clone(),
        utterances: cand.messages.clone(),
        turns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    /// Maximum gap in minutes between an initial question and its first
    /// response.
    pub window_mins: u32,
    /// Minimum number of post-merge turns for a dialogue to be kept.
    pub min_turns: usize,
    /// Dominance applies only to candidates longer than this many
    /// pre-merge utterances.
    pub dominance_len: usize,
    /// Reject when one sender authored more than this share of the
    /// pre-merge utterances.
    pub dominance_frac: f64,
    /// Previous calendar days whose senders stay in the roster.
    pub roster_window_days: u32,
    pub recipient: RecipientOptions,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            window_mins: 3,
            min_turns: 3,
            dominance_len: 5,
            dominance_frac: 0.8,
            roster_window_days: 1,
            recipient: RecipientOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RejectReason {
    TooFewTurns { turns: usize },
    Dominance { utterances: usize, share: f64 },
}

/// Applies the minimum-turn and dominance filters to a merged candidate.
///
/// Turn counting uses post-merge turns; dominance uses pre-merge
/// utterances.
pub fn filter_dialogue(cand: &MergedCandidate, cfg: &ExtractConfig) -> Result<(), RejectReason> {
    if cand.turns.len() < cfg.min_turns {
        return Err(RejectReason::TooFewTurns {
            turns: cand.turns.len(),
        });
    }
    let n = cand.utterances.len();
    if n > cfg.dominance_len {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for (_, m) in &cand.utterances {
            *counts.entry(m.sender.to_lowercase()).or_default() += 1;
        }
        let max = counts.values().copied().max().unwrap_or(0);
        let share = max as f64 / n as f64;
        if share > cfg.dominance_frac {
            return Err(RejectReason::Dominance {
                utterances: n,
                share,
            });
        }
    }
    Ok(())
}

/// An accepted dyadic dialogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub channel: String,
    pub date: NaiveDate,
    pub participants: [String; 2],
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Wall-clock span from the first to the last turn, in minutes.
    pub fn duration_mins(&self) -> u32 {
        match (self.turns.first(), self.turns.last()) {
            (Some(a), Some(b)) => b.time.minutes().saturating_sub(a.time.minutes()),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionTally {
    pub too_few_turns: usize,
    pub dominance: usize,
}

impl RejectionTally {
    pub fn total(&self) -> usize {
        self.too_few_turns + self.dominance
    }

    pub fn add(&mut self, other: &RejectionTally) {
        self.too_few_turns += other.too_few_turns;
        self.dominance += other.dominance;
    }
}

#[derive(Debug, Clone)]
pub struct DayExtraction {
    pub dialogues: Vec<Dialogue>,
    pub candidates: usize,
    pub rejections: RejectionTally,
}

/// Runs the full extraction pipeline over one addressed day:
/// extract, fill holes, merge, filter. Dialogue ids are
/// `channel:date:sequence` in emission order, so identical inputs always
/// produce identical ids.
pub fn disentangle_day(
    channel: &str,
    date: NaiveDate,
    day: &[AddressedMessage],
    cfg: &ExtractConfig,
) -> DayExtraction {
    let candidates = extract_dialogues(day, cfg.window_mins);
    let mut out = DayExtraction {
        dialogues: Vec::new(),
        candidates: candidates.len(),
        rejections: RejectionTally::default(),
    };
    for cand in &candidates {
        let merged = merge_consecutive(&fill_holes(cand, day));
        match filter_dialogue(&merged, cfg) {
            Ok(()) => {
                let id = format!("{channel}:{date}:{}", out.dialogues.len());
                out.dialogues.push(Dialogue {
                    id,
                    channel: channel.to_string(),
                    date,
                    participants: [merged.asker.clone(), merged.answerer.clone()],
                    turns: merged.turns,
                });
            }
            Err(RejectReason::TooFewTurns { .. }) => out.rejections.too_few_turns += 1,
            Err(RejectReason::Dominance { .. }) => out.rejections.dominance += 1,
        }
    }
    out
}

/// Disentangles every day of one channel in date order, maintaining the
/// sliding roster window across days.
pub fn disentangle_channel(
    days: &[ChannelDay],
    cfg: &ExtractConfig,
    common_words: &CommonWords,
) -> Vec<(NaiveDate, DayExtraction)> {
    let mut out = Vec::new();
    for (i, day) in days.iter().enumerate() {
        let window_start = i.saturating_sub(cfg.roster_window_days as usize);
        let roster = build_roster(&days[window_start..=i], cfg.roster_window_days);
        let addressed = address_day(&day.messages, &roster, common_words, &cfg.recipient);
        out.push((
            day.date,
            disentangle_day(&day.channel, day.date, &addressed, cfg),
        ));
    }
    out
}
