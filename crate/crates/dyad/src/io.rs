//! File formats: the corpus TSV, the triples CSVs, idf tables, wordlists,
//! word vectors, and report files. Every writer goes through
//! [`atomic_write`], so partially written outputs never appear on disk.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::chatlog::MinuteOfDay;
use crate::dataset::{TestRecord, Triple};
use crate::disentangle::{Dialogue, Turn, UsernameRoster};
use crate::encoder::EpochStats;
use crate::error::{Error, Result};
use crate::eval::{CorpusStats, RecallReport};
use crate::tfidf::IdfTable;

/// Writes via a temporary file in the same directory plus a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

const CORPUS_HEADER: &str = "dialogue_id\tturn_index\tdate\ttime\tsender\trecipient\ttext";

/// Corpus TSV: one row per turn,
/// `dialogue_id, turn_index, date, time, sender, recipient, text`.
/// Tabs inside text are replaced with spaces; the recipient column is empty
/// for unaddressed turns.
pub fn write_corpus_tsv(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    let mut out = String::from(CORPUS_HEADER);
    out.push('\n');
    for d in dialogues {
        for (i, t) in d.turns.iter().enumerate() {
            let clean = |s: &str| s.replace(['\t', '\n'], " ");
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                clean(&d.id),
                i,
                d.date,
                t.time,
                clean(&t.sender),
                t.recipient.as_deref().map(clean).unwrap_or_default(),
                clean(&t.text),
            ));
        }
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_corpus_tsv(path: &Path) -> Result<Vec<Dialogue>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line_no: usize, why: &str| Error::format(path, format!("line {line_no}: {why}"));
    let mut dialogues: Vec<Dialogue> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 {
            if line != CORPUS_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(bad(line_no + 1, "expected 7 tab-separated fields"));
        }
        let id = fields[0];
        let date: NaiveDate = fields[2]
            .parse()
            .map_err(|_| bad(line_no + 1, "bad date"))?;
        let time =
            MinuteOfDay::parse(fields[3]).ok_or_else(|| bad(line_no + 1, "bad time"))?;
        let turn = Turn {
            time,
            sender: fields[4].to_string(),
            recipient: if fields[5].is_empty() {
                None
            } else {
                Some(fields[5].to_string())
            },
            text: fields[6].to_string(),
        };
        match dialogues.last_mut() {
            Some(d) if d.id == id => d.turns.push(turn),
            _ => {
                // The channel is everything before the trailing
                // `:date:sequence` of the id.
                let channel = id.splitn(2, ':').next().unwrap_or("").to_string();
                dialogues.push(Dialogue {
                    id: id.to_string(),
                    channel,
                    date,
                    participants: [String::new(), String::new()],
                    turns: vec![turn],
                });
            }
        }
    }
    for d in &mut dialogues {
        let mut seen: Vec<String> = Vec::new();
        for t in &d.turns {
            if !seen.iter().any(|s| s.eq_ignore_ascii_case(&t.sender)) {
                seen.push(t.sender.clone());
            }
        }
        if seen.len() != 2 {
            return Err(Error::format(
                path,
                format!("dialogue {} has {} speakers, expected 2", d.id, seen.len()),
            ));
        }
        d.participants = [seen[0].clone(), seen[1].clone()];
    }
    Ok(dialogues)
}

/// Training CSV: `context,response,flag`.
pub fn write_train_csv(path: &Path, triples: &[Triple]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["context", "response", "flag"]).map_err(io_err)?;
    for t in triples {
        w.write_record([t.context.as_str(), t.response.as_str(), if t.flag == 1 { "1" } else { "0" }])
            .map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn read_train_csv(path: &Path) -> Result<Vec<Triple>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::format(path, e.to_string()),
        })?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::format(path, "expected 3 columns"));
        }
        let flag: u8 = match &rec[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::format(path, format!("bad flag {other:?}"))),
        };
        out.push(Triple {
            context: rec[0].to_string(),
            response: rec[1].to_string(),
            flag,
        });
    }
    Ok(out)
}

/// Test CSV: `context,true_response,distractor_1..distractor_k`.
pub fn write_test_csv(path: &Path, records: &[TestRecord]) -> Result<()> {
    let k = records.first().map(|r| r.distractors.len()).unwrap_or(1);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut header = vec!["context".to_string(), "true_response".to_string()];
    header.extend((1..=k).map(|i| format!("distractor_{i}")));
    w.write_record(&header).map_err(io_err)?;
    for r in records {
        let mut row = vec![r.context.clone(), r.true_response.clone()];
        row.extend(r.distractors.iter().cloned());
        w.write_record(&row).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn read_test_csv(path: &Path) -> Result<Vec<TestRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::format(path, e.to_string()),
        })?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        if rec.len() < 3 {
            return Err(Error::format(path, "expected at least 3 columns"));
        }
        out.push(TestRecord {
            context: rec[0].to_string(),
            true_response: rec[1].to_string(),
            distractors: rec.iter().skip(2).map(str::to_string).collect(),
        });
    }
    Ok(out)
}

/// Idf table: two tab-separated columns `token<TAB>idf`, sorted by token.
pub fn write_idf(path: &Path, idf: &IdfTable) -> Result<()> {
    let mut out = String::new();
    for (token, weight) in idf.sorted_entries() {
        out.push_str(token);
        out.push('\t');
        out.push_str(&weight.to_string());
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_idf(path: &Path) -> Result<IdfTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (token, weight) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, format!("line {}: missing tab", i + 1)))?;
        let weight: f64 = weight
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad weight", i + 1)))?;
        entries.push((token.to_string(), weight));
    }
    Ok(IdfTable::from_entries(entries, 0))
}

/// One lowercase word per line; blank lines ignored.
pub fn read_wordlist(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// One nickname per line, loaded into a roster for name tagging.
pub fn read_names(path: &Path) -> Result<UsernameRoster> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(UsernameRoster::from_names(
        text.lines().map(str::trim).filter(|l| !l.is_empty()),
    ))
}

/// Whitespace-separated text word vectors: `token v1 v2 ... vd`.
pub fn read_word_vectors(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::format(path, format!("line {}: empty", i + 1)))?;
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
        let values = values
            .map_err(|_| Error::format(path, format!("line {}: bad float", i + 1)))?;
        if values.is_empty() {
            return Err(Error::format(path, format!("line {}: no vector values", i + 1)));
        }
        out.push((token.to_string(), values));
    }
    Ok(out)
}

/// Recall report CSV: `setting,n_records,k,recall`, one row per k.
pub fn write_recall_csv(path: &Path, report: &RecallReport) -> Result<()> {
    let mut out = String::from("setting,n_records,k,recall\n");
    for (k, r) in &report.recalls {
        out.push_str(&format!("{},{},{k},{r}\n", report.setting, report.n_records));
    }
    atomic_write(path, out.as_bytes())
}

/// Histogram CSV: `turns,count`.
pub fn write_histogram_csv(path: &Path, stats: &CorpusStats) -> Result<()> {
    let mut out = String::from("turns,count\n");
    for (turns, count) in &stats.turn_histogram {
        out.push_str(&format!("{turns},{count}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Stats CSV: `metric,value` rows.
pub fn write_stats_csv(path: &Path, stats: &CorpusStats) -> Result<()> {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("dialogues,{}\n", stats.dialogues));
    out.push_str(&format!("utterances,{}\n", stats.utterances));
    out.push_str(&format!("words,{}\n", stats.words));
    out.push_str(&format!("min_turns,{}\n", stats.min_turns));
    out.push_str(&format!("avg_turns,{}\n", stats.avg_turns));
    out.push_str(&format!(
        "avg_words_per_utterance,{}\n",
        stats.avg_words_per_utterance
    ));
    out.push_str(&format!(
        "median_duration_mins,{}\n",
        stats.median_duration_mins
    ));
    if let Some(slope) = stats.log_log_slope {
        out.push_str(&format!("turn_histogram_log_log_slope,{slope}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Training log CSV: `epoch,loss[,val_recall_at_1]`.
pub fn write_train_log_csv(path: &Path, log: &[EpochStats]) -> Result<()> {
    let with_val = log.iter().any(|e| e.val_recall_at_1.is_some());
    let mut out = String::from(if with_val {
        "epoch,loss,val_recall_at_1\n"
    } else {
        "epoch,loss\n"
    });
    for e in log {
        match (with_val, e.val_recall_at_1) {
            (true, Some(v)) => out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, v)),
            (true, None) => out.push_str(&format!("{},{},\n", e.epoch, e.loss)),
            (false, _) => out.push_str(&format!("{},{}\n", e.epoch, e.loss)),
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Learning-curve CSV: `train_size,recall_at_1`.
pub fn write_curve_csv(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut out = String::from("train_size,recall_at_1\n");
    for (n, r) in rows {
        out.push_str(&format!("{n},{r}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// One candidate response per line.
pub fn read_candidates(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).filter(|l| !l.is_empty()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chatlog::MinuteOfDay;

    fn sample_dialogues() -> Vec<Dialogue> {
        let turn = |m: u32, s: &str, r: Option<&str>, text: &str| Turn {
            time: MinuteOfDay::from_minutes(m).unwrap(),
            sender: s.into(),
            recipient: r.map(Into::into),
            text: text.into(),
        };
        vec![
            Dialogue {
                id: "#ubuntu:2004-11-15:0".into(),
                channel: "#ubuntu".into(),
                date: NaiveDate::from_ymd_opt(2004, 11, 15).unwrap(),
                participants: ["dell".into(), "cucho".into()],
                turns: vec![
                    turn(741, "dell", None, "well, can I move the drives?"),
                    turn(741, "cucho", Some("dell"), "ah not like that"),
                    turn(742, "dell", Some("cucho"), "I guess I could, right?"),
                ],
            },
            Dialogue {
                id: "#ubuntu:2004-11-15:1".into(),
                channel: "#ubuntu".into(),
                date: NaiveDate::from_ymd_opt(2004, 11, 15).unwrap(),
                participants: ["ada".into(), "bruno".into()],
                turns: vec![
                    turn(100, "ada", None, "tab\there and \"quotes\""),
                    turn(101, "bruno", Some("ada"), "seen"),
                    turn(102, "ada", Some("bruno"), "good"),
                ],
            },
        ]
    }

    #[test]
    fn corpus_tsv_round_trips_structure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        let dialogues = sample_dialogues();
        write_corpus_tsv(&path, &dialogues).unwrap();
        let loaded = read_corpus_tsv(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].id, dialogues[0].id);
        assert_eq!(loaded[0].channel, "#ubuntu");
        assert_eq!(loaded[0].turns.len(), 3);
        assert_eq!(loaded[0].turns[1].recipient.as_deref(), Some("dell"));
        assert_eq!(loaded[0].turns[2].text, "I guess I could, right?");
        // The embedded tab was sanitized to a space.
        assert_eq!(loaded[1].turns[0].text, "tab here and \"quotes\"");
        assert_eq!(loaded[1].participants, ["ada".to_string(), "bruno".to_string()]);
    }

    #[test]
    fn train_csv_round_trips_with_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let triples = vec![
            Triple {
                context: "has, commas __EOS__ and \"quotes\"".into(),
                response: "plain".into(),
                flag: 1,
            },
            Triple {
                context: "c2".into(),
                response: "r,2".into(),
                flag: 0,
            },
        ];
        write_train_csv(&path, &triples).unwrap();
        assert_eq!(read_train_csv(&path).unwrap(), triples);
    }

    #[test]
    fn test_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.csv");
        let records = vec![
            TestRecord {
                context: "a __EOS__ b".into(),
                true_response: "yes".into(),
                distractors: vec!["no 1".into(), "no, 2".into()],
            },
            TestRecord {
                context: "c".into(),
                true_response: "y".into(),
                distractors: vec!["n1".into(), "n2".into()],
            },
        ];
        write_test_csv(&path, &records).unwrap();
        assert_eq!(read_test_csv(&path).unwrap(), records);
    }

    #[test]
    fn idf_round_trips() {
        use crate::preprocess::tokenize;
        let docs = [tokenize("a b"), tokenize("a c")];
        let idf = crate::tfidf::fit_idf(docs.iter()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idf.tsv");
        write_idf(&path, &idf).unwrap();
        let loaded = read_idf(&path).unwrap();
        assert_eq!(loaded.idf("b"), idf.idf("b"));
        assert_eq!(loaded.idf("a"), 0.0);
    }

    #[test]
    fn word_vectors_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.txt");
        fs::write(&path, "hello 0.1 -0.2 0.3\nworld 1 2 3\n").unwrap();
        let vecs = read_word_vectors(&path).unwrap();
        assert_eq!(vecs.len(), 2);
        assert_eq!(vecs[0].0, "hello");
        assert_eq!(vecs[0].1, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn atomic_write_replaces_existing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
    }

    #[test]
    fn missing_inputs_are_io_errors() {
        let missing = Path::new("/nonexistent/file.csv");
        assert_eq!(read_train_csv(missing).unwrap_err().exit_code(), 2);
        assert_eq!(read_corpus_tsv(missing).unwrap_err().exit_code(), 2);
        assert_eq!(read_wordlist(missing).unwrap_err().exit_code(), 2);
    }
}
