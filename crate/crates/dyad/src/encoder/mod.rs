//! Siamese sequence encoders with bilinear scoring.
//!
//! A context and a candidate response are run through the same recurrent
//! cell (tied weights) over their word embeddings; the final hidden states
//! `c` and `r` are scored with `sigmoid(c' M r + b)`, the probability that
//! the pair is a valid (context, next utterance) match. Training minimizes
//! cross entropy with exact analytic gradients, Adam updates, and global
//! gradient-norm clipping.

pub mod adam;
pub mod cell;
pub mod checkpoint;
pub mod linalg;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::dataset::{derive_rng, Triple};
use crate::error::{Error, Result};
use crate::eval::ResponseRanker;
use crate::preprocess::{build_vocab, encode, encode_head, Preprocessor, Vocabulary};

use cell::{
    lstm_backward, lstm_forward, rnn_backward, rnn_forward, sigmoid, CellTrace, LstmCell,
    LstmGrads, RnnCell, RnnGrads,
};
use linalg::{axpy, dot, Matrix};

pub use cell::{Gates, GATE_CANDIDATE, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};
pub use linalg::{orthogonal, orthogonality_defect};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rnn,
    Lstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rnn" => Some(ModelKind::Rnn),
            "lstm" => Some(ModelKind::Lstm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Rnn(RnnCell),
    Lstm(LstmCell),
}

/// All learnable tensors of a dual encoder. Both sides of every pair are
/// encoded with the same cell and embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Word embeddings, one row per vocabulary entry.
    pub embed: Matrix,
    pub cell: CellParams,
    /// Bilinear scoring matrix `M`.
    pub bilinear: Matrix,
    /// Scalar scoring bias `b`.
    pub bias: f64,
}

impl EncoderParams {
    pub fn model(&self) -> ModelKind {
        match self.cell {
            CellParams::Rnn(_) => ModelKind::Rnn,
            CellParams::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn hidden(&self) -> usize {
        match &self.cell {
            CellParams::Rnn(c) => c.w_h.rows,
            CellParams::Lstm(c) => c.hidden(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.cols
    }

    pub fn vocab_len(&self) -> usize {
        self.embed.rows
    }

    /// Named views of every parameter tensor, in a fixed order shared with
    /// [`EncoderGrads`], the optimizer state, and checkpoints.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![("embed", &self.embed.data)];
        match &self.cell {
            CellParams::Rnn(c) => {
                out.push(("w_h", &c.w_h.data));
                out.push(("w_x", &c.w_x.data));
            }
            CellParams::Lstm(c) => {
                out.push(("w_i", &c.w[0].data));
                out.push(("w_f", &c.w[1].data));
                out.push(("w_o", &c.w[2].data));
                out.push(("w_g", &c.w[3].data));
                out.push(("b_i", &c.b[0]));
                out.push(("b_f", &c.b[1]));
                out.push(("b_o", &c.b[2]));
                out.push(("b_g", &c.b[3]));
            }
        }
        out.push(("bilinear", &self.bilinear.data));
        out.push(("bias", std::slice::from_ref(&self.bias)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.embed.data];
        match &mut self.cell {
            CellParams::Rnn(c) => {
                out.push(&mut c.w_h.data);
                out.push(&mut c.w_x.data);
            }
            CellParams::Lstm(c) => {
                let [w0, w1, w2, w3] = &mut c.w;
                out.push(&mut w0.data);
                out.push(&mut w1.data);
                out.push(&mut w2.data);
                out.push(&mut w3.data);
                let [b0, b1, b2, b3] = &mut c.b;
                out.push(b0);
                out.push(b1);
                out.push(b2);
                out.push(b3);
            }
        }
        out.push(&mut self.bilinear.data);
        out.push(std::slice::from_mut(&mut self.bias));
        out
    }
}

/// Gradients for every tensor in [`EncoderParams`], same shapes and order.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub embed: Matrix,
    pub cell: CellGrads,
    pub bilinear: Matrix,
    pub bias: f64,
}

#[derive(Debug, Clone)]
pub enum CellGrads {
    Rnn(RnnGrads),
    Lstm(LstmGrads),
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        let cell = match &params.cell {
            CellParams::Rnn(c) => CellGrads::Rnn(RnnGrads {
                w_h: Matrix::zeros(c.w_h.rows, c.w_h.cols),
                w_x: Matrix::zeros(c.w_x.rows, c.w_x.cols),
            }),
            CellParams::Lstm(c) => CellGrads::Lstm(LstmGrads {
                w: std::array::from_fn(|k| Matrix::zeros(c.w[k].rows, c.w[k].cols)),
                b: std::array::from_fn(|k| vec![0.0; c.b[k].len()]),
            }),
        };
        EncoderGrads {
            embed: Matrix::zeros(params.embed.rows, params.embed.cols),
            cell,
            bilinear: Matrix::zeros(params.bilinear.rows, params.bilinear.cols),
            bias: 0.0,
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.embed.data];
        match &self.cell {
            CellGrads::Rnn(c) => {
                out.push(&c.w_h.data);
                out.push(&c.w_x.data);
            }
            CellGrads::Lstm(c) => {
                for w in &c.w {
                    out.push(&w.data);
                }
                for b in &c.b {
                    out.push(b);
                }
            }
        }
        out.push(&self.bilinear.data);
        out.push(std::slice::from_ref(&self.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.embed.data];
        match &mut self.cell {
            CellGrads::Rnn(c) => {
                out.push(&mut c.w_h.data);
                out.push(&mut c.w_x.data);
            }
            CellGrads::Lstm(c) => {
                let [w0, w1, w2, w3] = &mut c.w;
                out.push(&mut w0.data);
                out.push(&mut w1.data);
                out.push(&mut w2.data);
                out.push(&mut w3.data);
                let [b0, b1, b2, b3] = &mut c.b;
                out.push(b0);
                out.push(b1);
                out.push(b2);
                out.push(b3);
            }
        }
        out.push(&mut self.bilinear.data);
        out.push(std::slice::from_mut(&mut self.bias));
        out
    }

    /// Global L2 norm over all tensors.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub hidden: usize,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_threshold: f64,
    pub l2_lambda: f64,
    pub seed: u64,
    pub max_context_tokens: usize,
    pub max_response_tokens: usize,
    pub min_token_count: usize,
    /// Held-out fraction of triples scored as 1-in-2 recall each epoch.
    pub validation_fraction: f64,
    /// Average the batch loss instead of summing it.
    pub mean_loss: bool,
}

impl TrainConfig {
    pub fn default_for(model: ModelKind) -> Self {
        TrainConfig {
            model,
            hidden: match model {
                ModelKind::Rnn => 50,
                ModelKind::Lstm => 200,
            },
            embed_dim: 50,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            clip_threshold: 10.0,
            l2_lambda: 0.0,
            seed: 0,
            max_context_tokens: 160,
            max_response_tokens: 80,
            min_token_count: 1,
            validation_fraction: 0.0,
            mean_loss: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.hidden == 0 || self.embed_dim == 0 {
            return bad("hidden and embedding sizes must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.clip_threshold > 0.0) {
            return bad("clip threshold must be positive");
        }
        if self.l2_lambda < 0.0 {
            return bad("l2 penalty must be non-negative");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if self.max_context_tokens == 0 || self.max_response_tokens == 0 {
            return bad("token limits must be positive");
        }
        Ok(())
    }
}

/// Fresh parameters: orthogonal recurrent weights, uniform input weights in
/// `[-0.01, 0.01]`, embeddings in `[-0.1, 0.1]`, identity `M`, zero bias.
pub fn init_params(vocab_len: usize, cfg: &TrainConfig, rng: &mut ChaCha20Rng) -> EncoderParams {
    let cell = match cfg.model {
        ModelKind::Rnn => CellParams::Rnn(RnnCell::init(cfg.hidden, cfg.embed_dim, rng)),
        ModelKind::Lstm => CellParams::Lstm(LstmCell::init(cfg.hidden, cfg.embed_dim, rng)),
    };
    EncoderParams {
        embed: Matrix::uniform(vocab_len, cfg.embed_dim, -0.1, 0.1, rng),
        cell,
        bilinear: Matrix::identity(cfg.hidden),
        bias: 0.0,
    }
}

/// Overwrites embedding rows for vocabulary tokens present in a pretrained
/// word-vector table. Returns how many rows were replaced.
pub fn load_pretrained_rows(
    params: &mut EncoderParams,
    vocab: &Vocabulary,
    vectors: &[(String, Vec<f64>)],
) -> Result<usize> {
    let dim = params.embed_dim();
    let mut replaced = 0;
    for (token, vec) in vectors {
        if let Some(idx) = vocab.get(token) {
            if vec.len() != dim {
                return Err(Error::Config(format!(
                    "word vector for {token:?} has dimension {}, model uses {dim}",
                    vec.len()
                )));
            }
            params.embed.row_mut(idx as usize).copy_from_slice(vec);
            replaced += 1;
        }
    }
    Ok(replaced)
}

fn forward(params: &EncoderParams, ids: &[u32]) -> CellTrace {
    let xs: Vec<&[f64]> = ids.iter().map(|&i| params.embed.row(i as usize)).collect();
    match &params.cell {
        CellParams::Rnn(c) => rnn_forward(c, &xs),
        CellParams::Lstm(c) => lstm_forward(c, &xs),
    }
}

fn backward(
    params: &EncoderParams,
    ids: &[u32],
    trace: &CellTrace,
    d_final: &[f64],
    grads: &mut EncoderGrads,
) {
    let xs: Vec<&[f64]> = ids.iter().map(|&i| params.embed.row(i as usize)).collect();
    let mut d_xs: Vec<Vec<f64>> = vec![vec![0.0; params.embed_dim()]; ids.len()];
    match (&params.cell, &mut grads.cell) {
        (CellParams::Rnn(c), CellGrads::Rnn(g)) => {
            rnn_backward(c, trace, &xs, d_final, g, &mut d_xs)
        }
        (CellParams::Lstm(c), CellGrads::Lstm(g)) => {
            lstm_backward(c, trace, &xs, d_final, g, &mut d_xs)
        }
        _ => unreachable!("gradient kind matches parameter kind"),
    }
    for (t, &id) in ids.iter().enumerate() {
        axpy(1.0, &d_xs[t], grads.embed.row_mut(id as usize));
    }
}

/// Runs the cell over a token sequence from the zero state and returns the
/// final hidden state; the empty sequence encodes to the zero vector.
pub fn encode_sequence(params: &EncoderParams, ids: &[u32]) -> Vec<f64> {
    forward(params, ids).final_hidden().to_vec()
}

/// `sigmoid(c' M r + b)`, nudged into the open interval so downstream
/// logarithms stay finite.
pub fn score_pair(params: &EncoderParams, context: &[f64], response: &[f64]) -> f64 {
    let mr = params.bilinear.matvec(response);
    let s = dot(context, &mr) + params.bias;
    sigmoid(s).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// One training example with pre-encoded token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainExample {
    pub context: Vec<u32>,
    pub response: Vec<u32>,
    pub flag: bool,
}

/// Cross-entropy loss over a batch plus exact gradients for every
/// parameter tensor, backpropagated through the scorer, both encoder
/// passes, and the embeddings.
pub fn loss_and_grads(
    params: &EncoderParams,
    batch: &[TrainExample],
    cfg: &TrainConfig,
    batch_id: usize,
) -> Result<(f64, EncoderGrads)> {
    let mut grads = EncoderGrads::zeros_like(params);
    let mut loss = 0.0;
    for ex in batch {
        let ctx_trace = forward(params, &ex.context);
        let resp_trace = forward(params, &ex.response);
        let c = ctx_trace.final_hidden().to_vec();
        let r = resp_trace.final_hidden().to_vec();

        let mr = params.bilinear.matvec(&r);
        let s = dot(&c, &mr) + params.bias;
        let y = if ex.flag { 1.0 } else { 0.0 };
        loss += if ex.flag { softplus(-s) } else { softplus(s) };

        let ds = sigmoid(s) - y;
        grads.bilinear.add_scaled_outer(ds, &c, &r);
        grads.bias += ds;

        let mut dc = mr;
        dc.iter_mut().for_each(|v| *v *= ds);
        let mut dr = params.bilinear.matvec_transpose(&c);
        dr.iter_mut().for_each(|v| *v *= ds);

        backward(params, &ex.context, &ctx_trace, &dc, &mut grads);
        backward(params, &ex.response, &resp_trace, &dr, &mut grads);
    }
    if cfg.mean_loss && !batch.is_empty() {
        let inv = 1.0 / batch.len() as f64;
        loss *= inv;
        grads.scale(inv);
    }
    if cfg.l2_lambda > 0.0 {
        loss += cfg.l2_lambda / 2.0
            * (params.bilinear.frobenius_norm_sq() + params.bias * params.bias);
        grads
            .bilinear
            .data
            .iter_mut()
            .zip(&params.bilinear.data)
            .for_each(|(g, m)| *g += cfg.l2_lambda * m);
        grads.bias += cfg.l2_lambda * params.bias;
    }
    if !loss.is_finite() {
        return Err(Error::Training {
            batch: batch_id,
            reason: format!("non-finite loss {loss}"),
        });
    }
    Ok((loss, grads))
}

/// Scores candidates against a context and returns them in descending
/// probability order, ties broken by ascending candidate index.
pub fn predict(
    params: &EncoderParams,
    context: &[u32],
    candidates: &[Vec<u32>],
) -> Vec<(usize, f64)> {
    let c = encode_sequence(params, context);
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, cand)| {
            let r = encode_sequence(params, cand);
            (i, score_pair(params, &c, &r))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall_at_1: Option<f64>,
}

/// A trained encoder bundled with everything needed to score new text.
#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub params: EncoderParams,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    pub log: Vec<EpochStats>,
}

/// Encodes raw triples against a vocabulary built from them.
fn prepare_examples(
    triples: &[Triple],
    preprocessor: &Preprocessor,
    cfg: &TrainConfig,
) -> (Vocabulary, Vec<TrainExample>) {
    let ctx_seqs: Vec<_> = triples.iter().map(|t| preprocessor.run(&t.context)).collect();
    let resp_seqs: Vec<_> = triples.iter().map(|t| preprocessor.run(&t.response)).collect();
    let vocab = build_vocab(ctx_seqs.iter().chain(resp_seqs.iter()), cfg.min_token_count);
    let examples = triples
        .iter()
        .zip(ctx_seqs.iter().zip(&resp_seqs))
        .map(|(t, (cs, rs))| TrainExample {
            context: encode(cs, &vocab, cfg.max_context_tokens),
            response: encode_head(rs, &vocab, cfg.max_response_tokens),
            flag: t.flag == 1,
        })
        .collect();
    (vocab, examples)
}

/// Trains a dual encoder on (context, response, flag) triples.
///
/// Minibatches are reshuffled each epoch from the seeded stream; the
/// returned log carries the mean training loss per epoch and, when a
/// validation fraction is held out, 1-in-2 recall on it.
pub fn train(
    triples: &[Triple],
    preprocessor: &Preprocessor,
    cfg: &TrainConfig,
    pretrained: Option<&[(String, Vec<f64>)]>,
) -> Result<TrainedEncoder> {
    cfg.validate()?;
    let (vocab, mut examples) = prepare_examples(triples, preprocessor, cfg);
    let mut params = init_params(vocab.len(), cfg, &mut derive_rng(cfg.seed, "init", 0));
    if let Some(vectors) = pretrained {
        load_pretrained_rows(&mut params, &vocab, vectors)?;
    }

    // Hold out validation examples before training sees them.
    let mut val_pairs: Vec<(TrainExample, Vec<u32>)> = Vec::new();
    if cfg.validation_fraction > 0.0 && examples.len() > 1 {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..examples.len()).collect();
        idx.shuffle(&mut derive_rng(cfg.seed, "val-split", 0));
        let n_val = ((examples.len() as f64) * cfg.validation_fraction).round() as usize;
        let held: std::collections::HashSet<usize> = idx.into_iter().take(n_val).collect();
        let mut kept = Vec::with_capacity(examples.len() - held.len());
        let mut val: Vec<TrainExample> = Vec::with_capacity(held.len());
        for (i, ex) in examples.into_iter().enumerate() {
            if held.contains(&i) {
                val.push(ex);
            } else {
                kept.push(ex);
            }
        }
        examples = kept;
        let positives: Vec<&TrainExample> = val.iter().filter(|e| e.flag).collect();
        let mut rng = derive_rng(cfg.seed, "val-distractor", 0);
        for (i, pos) in positives.iter().enumerate() {
            for _ in 0..100 {
                let j = rng.gen_range(0..positives.len());
                if j != i && positives[j].response != pos.response {
                    val_pairs.push(((*pos).clone(), positives[j].response.clone()));
                    break;
                }
            }
        }
    }

    let mut state = adam::AdamState::new(&params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut batch_id = 0usize;
    for epoch in 1..=cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut derive_rng(cfg.seed, "epoch-order", epoch as u64));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainExample> =
                chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, mut grads) = loss_and_grads(&params, &batch, cfg, batch_id)?;
            adam::clip_gradients(&mut grads, cfg.clip_threshold);
            state.step(&mut params, &grads, cfg.learning_rate);
            loss_sum += if cfg.mean_loss {
                loss * batch.len() as f64
            } else {
                loss
            };
            batch_id += 1;
        }
        let mean_loss = if examples.is_empty() {
            0.0
        } else {
            loss_sum / examples.len() as f64
        };
        let val_recall = if val_pairs.is_empty() {
            None
        } else {
            let hits = val_pairs
                .iter()
                .filter(|(pos, neg)| {
                    let ranked = predict(
                        &params,
                        &pos.context,
                        &[pos.response.clone(), neg.clone()],
                    );
                    ranked[0].0 == 0
                })
                .count();
            Some(hits as f64 / val_pairs.len() as f64)
        };
        log.push(EpochStats {
            epoch,
            loss: mean_loss,
            val_recall_at_1: val_recall,
        });
    }

    Ok(TrainedEncoder {
        params,
        vocab,
        config: cfg.clone(),
        log,
    })
}

/// Ranks raw-text candidates with a trained encoder.
#[derive(Debug, Clone)]
pub struct EncoderRanker {
    pub params: EncoderParams,
    pub vocab: Vocabulary,
    pub preprocessor: Preprocessor,
    pub max_context_tokens: usize,
    pub max_response_tokens: usize,
}

impl EncoderRanker {
    pub fn new(trained: TrainedEncoder, preprocessor: Preprocessor) -> Self {
        EncoderRanker {
            max_context_tokens: trained.config.max_context_tokens,
            max_response_tokens: trained.config.max_response_tokens,
            params: trained.params,
            vocab: trained.vocab,
            preprocessor,
        }
    }
}

impl ResponseRanker for EncoderRanker {
    fn rank(&self, context: &str, candidates: &[String]) -> Vec<(usize, f64)> {
        let ctx = encode(
            &self.preprocessor.run(context),
            &self.vocab,
            self.max_context_tokens,
        );
        let cands: Vec<Vec<u32>> = candidates
            .iter()
            .map(|c| encode_head(&self.preprocessor.run(c), &self.vocab, self.max_response_tokens))
            .collect();
        predict(&self.params, &ctx, &cands)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(model: ModelKind) -> TrainConfig {
        TrainConfig {
            hidden: 4,
            embed_dim: 3,
            ..TrainConfig::default_for(model)
        }
    }

    fn tiny_params(model: ModelKind, seed: u64) -> EncoderParams {
        init_params(9, &tiny_cfg(model), &mut derive_rng(seed, "test-init", 0))
    }

    #[test]
    fn empty_sequence_encodes_to_zero() {
        let p = tiny_params(ModelKind::Rnn, 1);
        assert_eq!(encode_sequence(&p, &[]), vec![0.0; 4]);
    }

    #[test]
    fn single_token_equals_one_step() {
        let p = tiny_params(ModelKind::Rnn, 2);
        let enc = encode_sequence(&p, &[3]);
        let cell = match &p.cell {
            CellParams::Rnn(c) => c,
            _ => unreachable!(),
        };
        let step = cell.step(&[0.0; 4], p.embed.row(3));
        assert_eq!(enc, step);
    }

    #[test]
    fn token_order_changes_encoding() {
        for model in [ModelKind::Rnn, ModelKind::Lstm] {
            let p = tiny_params(model, 3);
            let ab = encode_sequence(&p, &[2, 5]);
            let ba = encode_sequence(&p, &[5, 2]);
            assert_ne!(ab, ba);
        }
    }

    #[test]
    fn tied_weights_encode_identically_for_both_roles() {
        let p = tiny_params(ModelKind::Lstm, 4);
        let ids = [4, 7, 2];
        assert_eq!(encode_sequence(&p, &ids), encode_sequence(&p, &ids));
    }

    #[test]
    fn score_is_half_for_zero_scorer() {
        let mut p = tiny_params(ModelKind::Rnn, 5);
        p.bilinear = Matrix::zeros(4, 4);
        p.bias = 0.0;
        let c = encode_sequence(&p, &[1, 2]);
        let r = encode_sequence(&p, &[3]);
        assert!((score_pair(&p, &c, &r) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn score_matches_hand_value_on_basis_vectors() {
        let mut p = tiny_params(ModelKind::Rnn, 6);
        p.bilinear = Matrix::identity(4);
        p.bias = 0.0;
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let s = score_pair(&p, &e1, &e1);
        assert!((s - sigmoid(1.0)).abs() < 1e-12);
        assert!((s - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn bias_cancels_bilinear_term() {
        let mut p = tiny_params(ModelKind::Rnn, 7);
        let c = encode_sequence(&p, &[1, 4, 6]);
        let r = encode_sequence(&p, &[2, 8]);
        let mr = p.bilinear.matvec(&r);
        p.bias = -dot(&c, &mr);
        assert!((score_pair(&p, &c, &r) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn score_stays_in_open_interval() {
        let mut p = tiny_params(ModelKind::Rnn, 8);
        p.bias = 1e9;
        let s = score_pair(&p, &[0.0; 4], &[0.0; 4]);
        assert!(s < 1.0);
        p.bias = -1e9;
        let s = score_pair(&p, &[0.0; 4], &[0.0; 4]);
        assert!(s > 0.0);
    }

    #[test]
    fn balanced_uninformed_batch_loss_is_two_ln_two() {
        // Zero scorer means p = 1/2 for both examples; summed loss 2 ln 2.
        let mut p = tiny_params(ModelKind::Rnn, 9);
        p.bilinear = Matrix::zeros(4, 4);
        p.bias = 0.0;
        let batch = vec![
            TrainExample { context: vec![1], response: vec![2], flag: true },
            TrainExample { context: vec![1], response: vec![3], flag: false },
        ];
        let cfg = TrainConfig {
            mean_loss: false,
            ..tiny_cfg(ModelKind::Rnn)
        };
        let (loss, _) = loss_and_grads(&p, &batch, &cfg, 0).unwrap();
        assert!((loss - 2.0 * (2.0f64).ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_predictions_drive_loss_to_zero() {
        let mut p = tiny_params(ModelKind::Rnn, 10);
        p.bias = 40.0;
        let batch = vec![TrainExample { context: vec![1], response: vec![2], flag: true }];
        let (loss, _) = loss_and_grads(&p, &batch, &tiny_cfg(ModelKind::Rnn), 0).unwrap();
        assert!(loss < 1e-12);
    }

    /// Central finite differences against the analytic gradients for every
    /// tensor of both cell types.
    fn finite_difference_check(model: ModelKind, seed: u64) {
        let cfg = TrainConfig {
            hidden: 5,
            embed_dim: 4,
            mean_loss: true,
            ..TrainConfig::default_for(model)
        };
        let mut params = init_params(9, &cfg, &mut derive_rng(seed, "fd-init", 0));
        // Move away from the symmetric init so gradients are generic.
        let mut rng = derive_rng(seed, "fd-jitter", 1);
        for t in params.tensors_mut() {
            for v in t {
                *v += rng.gen_range(-0.05..=0.05);
            }
        }
        let batch = vec![
            TrainExample { context: vec![1, 3, 5], response: vec![2, 4], flag: true },
            TrainExample { context: vec![6, 7], response: vec![8, 1, 2], flag: false },
            TrainExample { context: vec![5], response: vec![5], flag: true },
        ];
        let (_, grads) = loss_and_grads(&params, &batch, &cfg, 0).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

        let eps = 1e-5;
        for (ti, tensor) in analytic.iter().enumerate() {
            for i in 0..tensor.len() {
                let orig = params.tensors()[ti].1[i];
                params.tensors_mut()[ti][i] = orig + eps;
                let (lp, _) = loss_and_grads(&params, &batch, &cfg, 0).unwrap();
                params.tensors_mut()[ti][i] = orig - eps;
                let (lm, _) = loss_and_grads(&params, &batch, &cfg, 0).unwrap();
                params.tensors_mut()[ti][i] = orig;
                let numeric = (lp - lm) / (2.0 * eps);
                let abs_err = (tensor[i] - numeric).abs();
                // Differencing bottoms out around 1e-10; below that only the
                // absolute gap is meaningful.
                if abs_err >= 1e-9 {
                    let rel = abs_err / tensor[i].abs().max(numeric.abs());
                    assert!(
                        rel < 1e-4,
                        "{model:?} tensor {ti} coord {i}: analytic {} vs numeric {numeric}",
                        tensor[i]
                    );
                }
            }
        }
    }

    #[test]
    fn rnn_gradients_match_finite_differences() {
        finite_difference_check(ModelKind::Rnn, 21);
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        finite_difference_check(ModelKind::Lstm, 22);
    }

    #[test]
    fn lambda_regularizes_scorer_only() {
        let cfg = TrainConfig {
            l2_lambda: 0.5,
            ..tiny_cfg(ModelKind::Rnn)
        };
        let p = tiny_params(ModelKind::Rnn, 11);
        let batch = vec![TrainExample { context: vec![1], response: vec![2], flag: true }];
        let (with_reg, grads) = loss_and_grads(&p, &batch, &cfg, 0).unwrap();
        let cfg0 = TrainConfig { l2_lambda: 0.0, ..cfg };
        let (without, grads0) = loss_and_grads(&p, &batch, &cfg0, 0).unwrap();
        let expected = 0.5 / 2.0 * (p.bilinear.frobenius_norm_sq() + p.bias * p.bias);
        assert!((with_reg - without - expected).abs() < 1e-12);
        // Embedding gradients are untouched by the penalty.
        assert_eq!(grads.embed.data, grads0.embed.data);
        assert_ne!(grads.bilinear.data, grads0.bilinear.data);
    }

    #[test]
    fn predict_orders_by_probability_then_index() {
        let p = tiny_params(ModelKind::Rnn, 12);
        let ranked = predict(&p, &[1, 2], &[vec![3], vec![3], vec![4, 5]]);
        assert_eq!(ranked.len(), 3);
        // Identical candidates keep index order.
        let pos_a = ranked.iter().position(|&(i, _)| i == 0).unwrap();
        let pos_b = ranked.iter().position(|&(i, _)| i == 1).unwrap();
        assert!(pos_a < pos_b);
        assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    fn toy_triples() -> Vec<Triple> {
        // Two keyword families: matching keyword means flag 1.
        let mut out = Vec::new();
        for (kw, other) in [("alpha", "beta"), ("beta", "alpha")] {
            for i in 0..12 {
                out.push(Triple {
                    context: format!("ask {kw} v{i}"),
                    response: format!("reply {kw}"),
                    flag: 1,
                });
                out.push(Triple {
                    context: format!("ask {kw} v{i}"),
                    response: format!("reply {other}"),
                    flag: 0,
                });
            }
        }
        out
    }

    #[test]
    fn training_reduces_loss_on_separable_task() {
        let cfg = TrainConfig {
            hidden: 8,
            embed_dim: 6,
            epochs: 8,
            batch_size: 8,
            learning_rate: 0.01,
            seed: 7,
            ..TrainConfig::default_for(ModelKind::Rnn)
        };
        let trained = train(&toy_triples(), &Preprocessor::default(), &cfg, None).unwrap();
        assert_eq!(trained.log.len(), 8);
        assert!(trained.log.last().unwrap().loss < trained.log[0].loss);
    }

    #[test]
    fn zero_epochs_returns_initialized_params() {
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_cfg(ModelKind::Rnn)
        };
        let trained = train(&toy_triples(), &Preprocessor::default(), &cfg, None).unwrap();
        let (vocab, _) = prepare_examples(&toy_triples(), &Preprocessor::default(), &cfg);
        let fresh = init_params(vocab.len(), &cfg, &mut derive_rng(cfg.seed, "init", 0));
        assert_eq!(trained.params, fresh);
        assert!(trained.log.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            hidden: 6,
            embed_dim: 4,
            epochs: 3,
            seed: 13,
            validation_fraction: 0.2,
            ..TrainConfig::default_for(ModelKind::Lstm)
        };
        let a = train(&toy_triples(), &Preprocessor::default(), &cfg, None).unwrap();
        let b = train(&toy_triples(), &Preprocessor::default(), &cfg, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn pretrained_vectors_replace_matching_rows() {
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_cfg(ModelKind::Rnn)
        };
        let vectors = vec![
            ("alpha".to_string(), vec![9.0, 8.0, 7.0]),
            ("unseen-token".to_string(), vec![1.0, 1.0, 1.0]),
        ];
        let trained = train(&toy_triples(), &Preprocessor::default(), &cfg, Some(&vectors)).unwrap();
        let idx = trained.vocab.get("alpha").unwrap();
        assert_eq!(trained.params.embed.row(idx as usize), &[9.0, 8.0, 7.0]);
    }

    #[test]
    fn pretrained_dimension_mismatch_is_config_error() {
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_cfg(ModelKind::Rnn)
        };
        let vectors = vec![("alpha".to_string(), vec![1.0, 2.0])];
        assert!(train(&toy_triples(), &Preprocessor::default(), &cfg, Some(&vectors)).is_err());
    }
}
