//! Tools for carving dyadic dialogues out of multi-party chat logs and for
//! benchmarking next-utterance selection on the result.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`chatlog`] parses raw `[HH:MM] <nick> body` log files.
//! 2. [`disentangle`] resolves recipients via name mentions and extracts
//!    two-person dialogues from the interleaved message stream.
//! 3. [`preprocess`] tokenizes utterances and replaces entity categories
//!    with generic tags.
//! 4. [`dataset`] splits the corpus and generates `(context, response,
//!    flag)` records for next-utterance classification.
//! 5. [`tfidf`] and [`encoder`] rank candidate responses; [`eval`] scores
//!    rankers with Recall@k and reports corpus statistics.
//!
//! The `dyad` binary in this crate ties the stages together; see the book
//! under `book/` for a guided tour.

pub mod chatlog;
pub mod cli;
pub mod dataset;
pub mod disentangle;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod preprocess;
pub mod tfidf;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    //! Runs every fenced Rust snippet in the book as a doc-test.
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/chat-logs.md")]
    mod chat_logs {}
    #[doc = include_str!("../../../book/src/disentanglement.md")]
    mod disentanglement {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/tfidf.md")]
    mod tfidf_chapter {}
    #[doc = include_str!("../../../book/src/dual-encoders.md")]
    mod dual_encoders {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli_chapter {}
}
