//! Command-line surface tying the pipeline together: `extract`, `stats`,
//! `triples`, `train`, `evaluate`, `rank`, and `learning-curve`.
//!
//! Every subcommand is deterministic given identical inputs and `--seed`;
//! output files are written atomically. Exit codes: 0 success, 1
//! validation error, 2 I/O error, 3 internal numeric error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chatlog::{read_channel_day, scan_log_tree, ChannelDay, IngestStats, ReadOptions};
use crate::dataset::{make_test_records, make_training_triples, split_corpus, SplitConfig};
use crate::disentangle::{
    disentangle_channel, CommonWords, Dialogue, ExtractConfig, RecipientOptions, RejectionTally,
};
use crate::encoder::{checkpoint, train, EncoderRanker, ModelKind, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{corpus_stats, evaluate_ranker, learning_curve, ResponseRanker};
use crate::io;
use crate::preprocess::{Gazetteers, Preprocessor};
use crate::tfidf::TfIdfRanker;

#[derive(Parser, Debug)]
#[command(
    name = "dyad",
    version,
    about = "Build dyadic dialogue corpora from chat logs and benchmark next-utterance selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract dyadic dialogues from a chat-log tree into a corpus TSV
    Extract(ExtractArgs),
    /// Report corpus statistics and the turn-count histogram
    Stats(StatsArgs),
    /// Split a corpus and generate training/test classification records
    Triples(TriplesArgs),
    /// Fit a ranker: an idf table for tfidf, a checkpoint for rnn/lstm
    Train(TrainArgs),
    /// Score a ranker on a test file with Recall@k
    Evaluate(EvaluateArgs),
    /// Rank a candidate file against one context
    Rank(RankArgs),
    /// Recall@1 as a function of training-set size
    LearningCurve(LearningCurveArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelArg {
    Tfidf,
    Rnn,
    Lstm,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Log tree root laid out as ROOT/YYYY/MM/DD/#channel.txt
    #[arg(long, value_name = "DIR")]
    pub logs: PathBuf,
    /// Corpus TSV to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Common-word list (one lowercase word per line); bundled default otherwise
    #[arg(long, value_name = "FILE")]
    pub wordlist: Option<PathBuf>,
    /// Previous days whose speakers stay known for name mentions
    #[arg(long, default_value_t = 1)]
    pub prev_days: u32,
    /// Largest question-to-first-response gap in minutes
    #[arg(long, default_value_t = 3)]
    pub window_mins: u32,
    /// Minimum merged turns per dialogue
    #[arg(long, default_value_t = 3)]
    pub min_turns: usize,
    /// Dominance filter applies above this many utterances
    #[arg(long, default_value_t = 5)]
    pub dominance_len: usize,
    /// Largest share of utterances one speaker may hold
    #[arg(long, default_value_t = 0.8)]
    pub dominance_frac: f64,
    /// Keep `* nick ...` action lines as messages
    #[arg(long)]
    pub include_actions: bool,
    /// Abort on malformed lines instead of skipping them
    #[arg(long)]
    pub strict: bool,
    /// Also match name mentions at the end of an utterance
    #[arg(long)]
    pub match_last_token: bool,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Corpus TSV produced by `extract`
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Write the turn histogram as CSV (`turns,count`)
    #[arg(long, value_name = "FILE")]
    pub histogram: Option<PathBuf>,
    /// Write the statistics as CSV (`metric,value`)
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TriplesArgs {
    /// Corpus TSV produced by `extract`
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Training CSV to write (`context,response,flag`)
    #[arg(long, value_name = "FILE")]
    pub train_out: PathBuf,
    /// Test CSV to write (`context,true_response,distractor_1..k`)
    #[arg(long, value_name = "FILE")]
    pub test_out: PathBuf,
    /// Fraction of dialogues held out for the test set
    #[arg(long, default_value_t = 0.02)]
    pub test_fraction: f64,
    /// Distractors per test record (1 for 1-in-2, 9 for 1-in-10)
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    /// Maximum desired context size in turns
    #[arg(long, default_value_t = 20)]
    pub max_context: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct PreprocessArgs {
    /// Nickname list (one per line) enabling name tagging
    #[arg(long, value_name = "FILE")]
    pub names: Option<PathBuf>,
    /// Location gazetteer (one lowercase token per line)
    #[arg(long, value_name = "FILE")]
    pub locations: Option<PathBuf>,
    /// Organization gazetteer (one lowercase token per line)
    #[arg(long, value_name = "FILE")]
    pub organizations: Option<PathBuf>,
}

impl PreprocessArgs {
    fn build(&self) -> Result<Preprocessor> {
        let roster = self.names.as_deref().map(io::read_names).transpose()?;
        let locations = self.locations.as_deref().map(io::read_wordlist).transpose()?;
        let organizations = self
            .organizations
            .as_deref()
            .map(io::read_wordlist)
            .transpose()?;
        Ok(Preprocessor {
            roster,
            gazetteers: Gazetteers {
                locations,
                organizations,
            },
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainHyperArgs {
    /// Hidden units (defaults: rnn 50, lstm 200)
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Word-embedding dimension
    #[arg(long, default_value_t = 50)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Global gradient-norm clip threshold
    #[arg(long, default_value_t = 10.0)]
    pub clip: f64,
    /// L2 penalty on the scoring parameters
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Keep only tokens seen at least this often
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Context token limit (the most recent tokens are kept)
    #[arg(long, default_value_t = 160)]
    pub max_context_tokens: usize,
    /// Response token limit (the leading tokens are kept)
    #[arg(long, default_value_t = 80)]
    pub max_response_tokens: usize,
    /// Triple fraction held out for per-epoch validation recall
    #[arg(long, default_value_t = 0.0)]
    pub val_fraction: f64,
}

impl TrainHyperArgs {
    fn build(&self, model: ModelKind, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::default_for(model);
        cfg.hidden = self.hidden.unwrap_or(cfg.hidden);
        cfg.embed_dim = self.embed_dim;
        cfg.learning_rate = self.lr;
        cfg.batch_size = self.batch;
        cfg.epochs = self.epochs;
        cfg.clip_threshold = self.clip;
        cfg.l2_lambda = self.lambda;
        cfg.min_token_count = self.min_count;
        cfg.max_context_tokens = self.max_context_tokens;
        cfg.max_response_tokens = self.max_response_tokens;
        cfg.validation_fraction = self.val_fraction;
        cfg.seed = seed;
        cfg
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Training CSV from `triples`
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    /// Output: idf table for tfidf, checkpoint for rnn/lstm
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch training log CSV (`epoch,loss[,val_recall_at_1]`)
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
    /// Pretrained word vectors (`token v1 .. vd` per line)
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub hyper: TrainHyperArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Test CSV from `triples`
    #[arg(long, value_name = "FILE")]
    pub test: PathBuf,
    /// tfidf: fit on this training CSV
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    /// tfidf: reuse a saved idf table instead of fitting
    #[arg(long, value_name = "FILE")]
    pub idf: Option<PathBuf>,
    /// rnn/lstm: checkpoint from `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Write the report as CSV
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Context text; utterances separated by ` __EOS__ `
    #[arg(long)]
    pub context: String,
    /// Candidate responses, one per line
    #[arg(long, value_name = "FILE")]
    pub candidates: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub idf: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Args, Debug)]
pub struct LearningCurveArgs {
    /// rnn or lstm
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub test: PathBuf,
    /// Nested training fractions, e.g. 0.25,0.5,1.0
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0])]
    pub fractions: Vec<f64>,
    /// Output CSV (`train_size,recall_at_1`)
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub hyper: TrainHyperArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

/// Parses the process arguments, runs the selected subcommand, and maps
/// errors to exit codes.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract(args) => cmd_extract(&args),
        Command::Stats(args) => cmd_stats(&args),
        Command::Triples(args) => cmd_triples(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Rank(args) => cmd_rank(&args),
        Command::LearningCurve(args) => cmd_learning_curve(&args),
    }
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let common = match &args.wordlist {
        Some(path) => CommonWords::from_lines(
            &std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        ),
        None => CommonWords::default_list(),
    };
    let cfg = ExtractConfig {
        window_mins: args.window_mins,
        min_turns: args.min_turns,
        dominance_len: args.dominance_len,
        dominance_frac: args.dominance_frac,
        roster_window_days: args.prev_days,
        recipient: RecipientOptions {
            match_last_token: args.match_last_token,
        },
    };
    let read_opts = ReadOptions {
        include_actions: args.include_actions,
        strict: args.strict,
    };

    let entries = scan_log_tree(&args.logs)?;
    let mut by_channel: BTreeMap<String, Vec<&crate::chatlog::LogFileEntry>> = BTreeMap::new();
    for e in &entries {
        by_channel.entry(e.channel.clone()).or_default().push(e);
    }

    let mut ingest = IngestStats::default();
    let mut dialogues: Vec<Dialogue> = Vec::new();
    let mut rejections = RejectionTally::default();
    let mut candidates = 0usize;
    for (channel, files) in &by_channel {
        let mut days: Vec<ChannelDay> = Vec::with_capacity(files.len());
        for f in files {
            let (day, stats) = read_channel_day(&f.path, channel, f.date, &read_opts)?;
            ingest.add(&stats);
            days.push(day);
        }
        for (_, extraction) in disentangle_channel(&days, &cfg, &common) {
            candidates += extraction.candidates;
            rejections.add(&extraction.rejections);
            dialogues.extend(extraction.dialogues);
        }
    }
    io::write_corpus_tsv(&args.out, &dialogues)?;

    let turns: usize = dialogues.iter().map(|d| d.turns.len()).sum();
    println!("channel-days      {}", entries.len());
    println!("messages          {}", ingest.message_count);
    println!("skipped lines     {}", ingest.skip_count());
    println!("candidates        {candidates}");
    println!("dialogues         {}", dialogues.len());
    println!("turns             {turns}");
    println!(
        "rejected          min-turns {}, dominance {}",
        rejections.too_few_turns, rejections.dominance
    );
    println!("corpus written to {}", args.out.display());
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let dialogues = io::read_corpus_tsv(&args.corpus)?;
    let stats = corpus_stats(&dialogues);
    print!("{stats}");
    if let Some(path) = &args.histogram {
        io::write_histogram_csv(path, &stats)?;
    }
    if let Some(path) = &args.csv {
        io::write_stats_csv(path, &stats)?;
    }
    Ok(())
}

pub fn cmd_triples(args: &TriplesArgs) -> Result<()> {
    let dialogues = io::read_corpus_tsv(&args.corpus)?;
    let cfg = SplitConfig {
        test_fraction: args.test_fraction,
        seed: args.seed,
        negatives_per_positive: args.negatives,
        max_context_turns: args.max_context,
    };
    cfg.validate()?;
    let (train_dialogues, test_dialogues) = split_corpus(&dialogues, &cfg);
    let triples = make_training_triples(&train_dialogues, &cfg)?;
    let records = make_test_records(&test_dialogues, &cfg)?;
    io::write_train_csv(&args.train_out, &triples)?;
    io::write_test_csv(&args.test_out, &records)?;
    println!(
        "dialogues         {} train / {} test",
        train_dialogues.len(),
        test_dialogues.len()
    );
    println!("training triples  {}", triples.len());
    println!("test records      {}", records.len());
    Ok(())
}

fn model_kind(arg: ModelArg) -> Result<ModelKind> {
    match arg {
        ModelArg::Rnn => Ok(ModelKind::Rnn),
        ModelArg::Lstm => Ok(ModelKind::Lstm),
        ModelArg::Tfidf => Err(Error::Config(
            "this operation needs a trainable model (rnn or lstm)".into(),
        )),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let triples = io::read_train_csv(&args.train)?;
    let preprocessor = args.preprocess.build()?;
    match args.model {
        ModelArg::Tfidf => {
            let ranker =
                TfIdfRanker::fit(triples.iter().map(|t| t.context.as_str()), preprocessor)?;
            io::write_idf(&args.out, &ranker.idf)?;
            println!(
                "idf table over {} tokens written to {}",
                ranker.idf.len(),
                args.out.display()
            );
        }
        model => {
            let cfg = args.hyper.build(model_kind(model)?, args.seed);
            let pretrained = args
                .embeddings
                .as_deref()
                .map(io::read_word_vectors)
                .transpose()?;
            let trained = train(&triples, &preprocessor, &cfg, pretrained.as_deref())?;
            for e in &trained.log {
                match e.val_recall_at_1 {
                    Some(v) => {
                        eprintln!("epoch {:>3}  loss {:.6}  val r@1 {v:.4}", e.epoch, e.loss)
                    }
                    None => eprintln!("epoch {:>3}  loss {:.6}", e.epoch, e.loss),
                }
            }
            if let Some(path) = &args.log {
                io::write_train_log_csv(path, &trained.log)?;
            }
            checkpoint::save(&trained, &args.out)?;
            println!("checkpoint written to {}", args.out.display());
        }
    }
    Ok(())
}

fn build_ranker(
    model: ModelArg,
    train_path: Option<&Path>,
    idf: Option<&Path>,
    ckpt: Option<&Path>,
    preprocessor: Preprocessor,
) -> Result<Box<dyn ResponseRanker>> {
    match model {
        ModelArg::Tfidf => {
            let ranker = match (idf, train_path) {
                (Some(path), _) => TfIdfRanker {
                    idf: io::read_idf(path)?,
                    preprocessor,
                },
                (None, Some(path)) => {
                    let triples = io::read_train_csv(path)?;
                    TfIdfRanker::fit(triples.iter().map(|t| t.context.as_str()), preprocessor)?
                }
                (None, None) => {
                    return Err(Error::Config(
                        "tfidf needs --idf or --train to supply document frequencies".into(),
                    ))
                }
            };
            Ok(Box::new(ranker))
        }
        ModelArg::Rnn | ModelArg::Lstm => {
            let path = ckpt.ok_or_else(|| {
                Error::Config("rnn/lstm evaluation needs --checkpoint".into())
            })?;
            let trained = checkpoint::load(path)?;
            let expected = model_kind(model)?;
            if trained.config.model != expected {
                return Err(Error::Config(format!(
                    "checkpoint holds a {} model, --model says {}",
                    trained.config.model.name(),
                    expected.name()
                )));
            }
            Ok(Box::new(EncoderRanker::new(trained, preprocessor)))
        }
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let records = io::read_test_csv(&args.test)?;
    let ranker = build_ranker(
        args.model,
        args.train.as_deref(),
        args.idf.as_deref(),
        args.checkpoint.as_deref(),
        args.preprocess.build()?,
    )?;
    let report = evaluate_ranker(ranker.as_ref(), &records, &[1, 2, 5])?;
    print!("{report}");
    if let Some(path) = &args.report {
        io::write_recall_csv(path, &report)?;
    }
    Ok(())
}

pub fn cmd_rank(args: &RankArgs) -> Result<()> {
    let candidates = io::read_candidates(&args.candidates)?;
    if candidates.is_empty() {
        return Err(Error::Config("candidate file is empty".into()));
    }
    let ranker = build_ranker(
        args.model,
        args.train.as_deref(),
        args.idf.as_deref(),
        args.checkpoint.as_deref(),
        args.preprocess.build()?,
    )?;
    let ranked = ranker.rank(&args.context, &candidates);
    for (rank, (idx, score)) in ranked.iter().enumerate() {
        println!("{}\t{score:.6}\t{}", rank + 1, candidates[*idx]);
    }
    Ok(())
}

pub fn cmd_learning_curve(args: &LearningCurveArgs) -> Result<()> {
    let triples = io::read_train_csv(&args.train)?;
    let records = io::read_test_csv(&args.test)?;
    let preprocessor = args.preprocess.build()?;
    let cfg = args.hyper.build(model_kind(args.model)?, args.seed);
    let rows = learning_curve(&triples, &records, &args.fractions, &cfg, &preprocessor)?;
    io::write_curve_csv(&args.out, &rows)?;
    for (n, r) in &rows {
        println!("train size {n:>7}  r@1 {r:.4}");
    }
    Ok(())
}
