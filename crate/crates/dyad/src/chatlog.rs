//! Parsing of raw chat-log files into ordered message sequences.
//!
//! A log tree is laid out as `root/YYYY/MM/DD/#channel.txt`, one file per
//! channel per day. Message lines look like `[HH:MM] <nick> body`; lines
//! prefixed `===` are server notices and `* ` marks action lines. Timestamps
//! have minute resolution and all time arithmetic in this crate is in whole
//! minutes.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};

/// Minute of day, `0..=1439`. The only time granularity in log files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MinuteOfDay(u16);

impl MinuteOfDay {
    pub fn new(hour: u32, minute: u32) -> Option<Self> {
        if hour < 24 && minute < 60 {
            Some(MinuteOfDay((hour * 60 + minute) as u16))
        } else {
            None
        }
    }

    pub fn from_minutes(mins: u32) -> Option<Self> {
        if mins < 24 * 60 {
            Some(MinuteOfDay(mins as u16))
        } else {
            None
        }
    }

    pub fn hour(self) -> u32 {
        u32::from(self.0) / 60
    }

    pub fn minute(self) -> u32 {
        u32::from(self.0) % 60
    }

    pub fn minutes(self) -> u32 {
        u32::from(self.0)
    }

    /// Parses `HH:MM`.
    pub fn parse(s: &str) -> Option<Self> {
        let (h, m) = s.split_once(':')?;
        if h.len() != 2 || m.len() != 2 {
            return None;
        }
        if !h.bytes().all(|b| b.is_ascii_digit()) || !m.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        MinuteOfDay::new(h.parse().ok()?, m.parse().ok()?)
    }
}

impl std::fmt::Display for MinuteOfDay {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:02}:{:02}", self.hour(), self.minute())
    }
}

/// One timestamped chat line before recipient resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMessage {
    pub day: NaiveDate,
    pub time: MinuteOfDay,
    pub sender: String,
    pub body: String,
}

impl RawMessage {
    /// Renders the message back into the on-disk line format.
    pub fn to_log_line(&self) -> String {
        format!("[{}] <{}> {}", self.time, self.sender, self.body)
    }
}

/// Non-message lines, classified for skip accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipKind {
    /// `===` server notices (joins, parts, mode changes).
    System,
    /// `* nick ...` action without a timestamp.
    UntimedAction,
    /// Empty or whitespace-only line.
    Blank,
    /// Anything else that does not look like a message.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Message(RawMessage),
    /// `[HH:MM] * nick does X`, carried separately so the caller can decide
    /// whether to keep it.
    Action(RawMessage),
    Skip(SkipKind),
}

/// Parses one full log line for the given day.
///
/// Lines opening with `[` must carry a well-formed `[HH:MM]` timestamp and a
/// `<nick>` or `* nick` head; anything else under that prefix is a
/// recoverable parse error carrying the offending line.
pub fn parse_line(line: &str, day: NaiveDate) -> Result<ParsedLine> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.trim().is_empty() {
        return Ok(ParsedLine::Skip(SkipKind::Blank));
    }
    if line.starts_with("===") {
        return Ok(ParsedLine::Skip(SkipKind::System));
    }
    if line.starts_with("* ") {
        return Ok(ParsedLine::Skip(SkipKind::UntimedAction));
    }
    if !line.starts_with('[') {
        return Ok(ParsedLine::Skip(SkipKind::Other));
    }

    let err = |reason: &str| Error::ParseLine {
        line: line.to_string(),
        reason: reason.to_string(),
    };

    let close = line.find(']').ok_or_else(|| err("missing `]`"))?;
    let time = MinuteOfDay::parse(&line[1..close]).ok_or_else(|| err("malformed timestamp"))?;
    let rest = line[close + 1..]
        .strip_prefix(' ')
        .ok_or_else(|| err("missing space after timestamp"))?;

    if let Some(action) = rest.strip_prefix("* ") {
        let (sender, body) = match action.split_once(' ') {
            Some((s, b)) => (s, b),
            None => (action, ""),
        };
        if sender.is_empty() {
            return Err(err("empty action nick"));
        }
        return Ok(ParsedLine::Action(RawMessage {
            day,
            time,
            sender: sender.to_string(),
            body: body.to_string(),
        }));
    }

    let rest = rest.strip_prefix('<').ok_or_else(|| err("missing `<nick>`"))?;
    let gt = rest.find('>').ok_or_else(|| err("missing `>`"))?;
    let sender = &rest[..gt];
    if sender.is_empty() || sender.chars().any(char::is_whitespace) {
        return Err(err("invalid nick"));
    }
    // Exactly one separating space is consumed, so serialization round-trips.
    let body = rest[gt + 1..].strip_prefix(' ').unwrap_or(&rest[gt + 1..]);
    Ok(ParsedLine::Message(RawMessage {
        day,
        time,
        sender: sender.to_string(),
        body: body.to_string(),
    }))
}

/// All messages of one channel on one day, in file order.
#[derive(Debug, Clone)]
pub struct ChannelDay {
    pub channel: String,
    pub date: NaiveDate,
    pub messages: Vec<RawMessage>,
}

/// Line accounting for one parsed file. `message_count + skip_count()` equals
/// the number of input lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub message_count: usize,
    pub included_actions: usize,
    pub skipped_system: usize,
    pub skipped_actions: usize,
    pub skipped_blank: usize,
    pub skipped_other: usize,
    pub malformed: usize,
    pub out_of_order: usize,
}

impl IngestStats {
    pub fn skip_count(&self) -> usize {
        self.skipped_system
            + self.skipped_actions
            + self.skipped_blank
            + self.skipped_other
            + self.malformed
            + self.out_of_order
    }

    pub fn add(&mut self, other: &IngestStats) {
        self.message_count += other.message_count;
        self.included_actions += other.included_actions;
        self.skipped_system += other.skipped_system;
        self.skipped_actions += other.skipped_actions;
        self.skipped_blank += other.skipped_blank;
        self.skipped_other += other.skipped_other;
        self.malformed += other.malformed;
        self.out_of_order += other.out_of_order;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Keep `[HH:MM] * nick does X` lines as messages with the action text as
    /// body.
    pub include_actions: bool,
    /// Abort on malformed or time-regressing lines instead of skipping them.
    pub strict: bool,
}

/// Reads one channel-day file. Invalid UTF-8 byte sequences are replaced,
/// not fatal; chat logs are dirty.
pub fn read_channel_day(
    path: &Path,
    channel: &str,
    date: NaiveDate,
    opts: &ReadOptions,
) -> Result<(ChannelDay, IngestStats)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut messages = Vec::new();
    let mut stats = IngestStats::default();
    let mut last_time: Option<MinuteOfDay> = None;

    for line in text.lines() {
        let parsed = match parse_line(line, date) {
            Ok(p) => p,
            Err(e) => {
                if opts.strict {
                    return Err(e);
                }
                stats.malformed += 1;
                continue;
            }
        };
        let msg = match parsed {
            ParsedLine::Message(m) => m,
            ParsedLine::Action(m) => {
                if opts.include_actions {
                    stats.included_actions += 1;
                    m
                } else {
                    stats.skipped_actions += 1;
                    continue;
                }
            }
            ParsedLine::Skip(kind) => {
                match kind {
                    SkipKind::System => stats.skipped_system += 1,
                    SkipKind::UntimedAction => stats.skipped_actions += 1,
                    SkipKind::Blank => stats.skipped_blank += 1,
                    SkipKind::Other => stats.skipped_other += 1,
                }
                continue;
            }
        };
        if let Some(prev) = last_time {
            if msg.time < prev {
                if opts.strict {
                    return Err(Error::ParseLine {
                        line: line.to_string(),
                        reason: format!("timestamp regressed past {prev}"),
                    });
                }
                stats.out_of_order += 1;
                continue;
            }
        }
        last_time = Some(msg.time);
        stats.message_count += 1;
        messages.push(msg);
    }

    Ok((
        ChannelDay {
            channel: channel.to_string(),
            date,
            messages,
        },
        stats,
    ))
}

/// One discovered log file in a scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFileEntry {
    pub channel: String,
    pub date: NaiveDate,
    pub path: PathBuf,
}

/// Walks a `root/YYYY/MM/DD/#channel.txt` tree and returns entries sorted by
/// `(channel, date)`. Subtrees with malformed names are skipped with a
/// warning; days missing for a channel are simply absent.
pub fn scan_log_tree(root: &Path) -> Result<Vec<LogFileEntry>> {
    let mut entries = Vec::new();
    for (year_name, year_path) in sorted_dir(root)? {
        let year: i32 = match parse_numeric(&year_name, 4) {
            Some(y) => y,
            None => {
                warn!("skipping non-year directory {}", year_path.display());
                continue;
            }
        };
        for (month_name, month_path) in sorted_dir(&year_path)? {
            let month: u32 = match parse_numeric(&month_name, 2) {
                Some(m) if (1..=12).contains(&m) => m as u32,
                _ => {
                    warn!("skipping non-month directory {}", month_path.display());
                    continue;
                }
            };
            for (day_name, day_path) in sorted_dir(&month_path)? {
                let date = parse_numeric(&day_name, 2)
                    .and_then(|d| NaiveDate::from_ymd_opt(year, month, d as u32));
                let date = match date {
                    Some(d) => d,
                    None => {
                        warn!("skipping non-day directory {}", day_path.display());
                        continue;
                    }
                };
                for (file_name, file_path) in sorted_files(&day_path)? {
                    match file_name.strip_suffix(".txt") {
                        Some(channel) if !channel.is_empty() => entries.push(LogFileEntry {
                            channel: channel.to_string(),
                            date,
                            path: file_path,
                        }),
                        _ => warn!("skipping non-log file {}", file_path.display()),
                    }
                }
            }
        }
    }
    entries.sort_by(|a, b| (&a.channel, a.date).cmp(&(&b.channel, b.date)));
    Ok(entries)
}

fn parse_numeric(name: &str, width: usize) -> Option<i32> {
    if name.len() == width && name.bytes().all(|b| b.is_ascii_digit()) {
        name.parse().ok()
    } else {
        None
    }
}

fn sorted_dir(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), p));
        } else {
            warn!("skipping stray file {}", p.display());
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_files(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_file() {
            out.push((entry.file_name().to_string_lossy().into_owned(), p));
        } else {
            warn!("skipping unexpected directory {}", p.display());
        }
    }
    out.sort();
    Ok(out)
}
