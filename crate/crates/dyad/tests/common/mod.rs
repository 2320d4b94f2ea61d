//! Shared fixtures for the integration and acceptance suites: hand-checked
//! log transcripts and a synthetic keyword-copy task.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use dyad::chatlog::MinuteOfDay;
use dyad::disentangle::{Dialogue, Turn};

/// Interleaved support chat with two conversations and two stray lines.
/// One extracted dialogue survives the minimum-turn filter; the other
/// (2 utterances) does not.
pub const DAY_A_LOG: &str = "\
[03:44] <Old> I dont run graphical ubuntu, I run ubuntu server.
[03:45] <kuja> Taru: Haha sucker.
[03:45] <Taru> Kuja: ?
[03:45] <bur[n]er> Old: you can use \"ps ax\" and \"kill (PID#)\"
[03:45] <kuja> Taru: Anyways, you made the changes right?
[03:45] <Taru> Kuja: Yes.
[03:45] <LiveCD> or killall speedlink
[03:45] <kuja> Taru: Then from the terminal type: sudo apt-get update
[03:46] <_pm> if i install the beta version, how can i update it when the final version comes out?
[03:46] <Taru> Kuja: I did.
";

/// One question answered by two users. The second answerer addresses only
/// the asker, so their unaddressed aside is pulled in and their
/// consecutive messages merge into one turn; the asker talks to both
/// answerers, so the asker's unaddressed "ok"/"lol" stay out.
pub const DAY_B_LOG: &str = "\
[12:21] <dell> well, can I move the drives?
[12:21] <cucho> dell: ah not like that
[12:21] <RC> dell: you can't move the drives
[12:21] <RC> dell: definitely not
[12:21] <dell> ok
[12:21] <dell> lol
[12:21] <RC> this is the problem with RAID:)
[12:21] <dell> RC haha yeah
[12:22] <dell> cucho, I guess I could just get an enclosure and copy via USB...
[12:22] <cucho> dell: i would advise you to get the disk
";

/// Writes both transcripts into a `root/YYYY/MM/DD/#channel.txt` tree.
pub fn write_fixture_tree(root: &Path) {
    let day_a = root.join("2004").join("11").join("15");
    let day_b = root.join("2004").join("11").join("16");
    fs::create_dir_all(&day_a).unwrap();
    fs::create_dir_all(&day_b).unwrap();
    fs::write(day_a.join("#ubuntu.txt"), DAY_A_LOG).unwrap();
    fs::write(day_b.join("#ubuntu.txt"), DAY_B_LOG).unwrap();
}

/// Builds a keyword-copy corpus of three-turn dialogues: every turn of a
/// dialogue carries the dialogue's keyword, so the true next utterance is
/// the unique candidate sharing a rare token with the context. Keywords
/// cycle over the dialogues; turn texts are deterministic per keyword,
/// which keeps equal-keyword distractors textually identical to the truth
/// (and therefore excluded by record generation).
pub fn keyword_corpus(n_dialogues: usize, n_keywords: usize) -> Vec<Dialogue> {
    let date = NaiveDate::from_ymd_opt(2004, 11, 15).unwrap();
    (0..n_dialogues)
        .map(|i| {
            let kw = format!("kw{:03}", i % n_keywords);
            let speakers = ["asker", "helper"];
            let turns: Vec<Turn> = (0..3)
                .map(|j| Turn {
                    time: MinuteOfDay::from_minutes((i % 1200) as u32).unwrap(),
                    sender: speakers[j % 2].to_string(),
                    recipient: None,
                    text: if j % 2 == 0 {
                        format!("ask {kw}")
                    } else {
                        format!("reply {kw}")
                    },
                })
                .collect();
            Dialogue {
                id: format!("#synth:{date}:{i}"),
                channel: "#synth".into(),
                date,
                participants: ["asker".into(), "helper".into()],
                turns,
            }
        })
        .collect()
}
