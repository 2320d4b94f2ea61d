//! Text checkpoints for trained encoders.
//!
//! A checkpoint is a key-value header (model kind, shapes, training
//! configuration), the vocabulary in index order, and every parameter
//! tensor as row-major decimal arrays. Floats are written in Rust's
//! shortest round-trip form, so save followed by load reproduces the
//! parameters bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::{CellParams, EncoderParams, ModelKind, TrainConfig, TrainedEncoder};
use crate::encoder::cell::{LstmCell, RnnCell};
use crate::encoder::linalg::Matrix;
use crate::error::{Error, Result};
use crate::preprocess::Vocabulary;

const MAGIC: &str = "dyad-checkpoint 1";

pub fn save(trained: &TrainedEncoder, path: &Path) -> Result<()> {
    let mut out = String::new();
    let cfg = &trained.config;
    let p = &trained.params;
    out.push_str(MAGIC);
    out.push('\n');
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} {v}");
    };
    kv("model", cfg.model.name().to_string());
    kv("hidden", p.hidden().to_string());
    kv("embed_dim", p.embed_dim().to_string());
    kv("learning_rate", cfg.learning_rate.to_string());
    kv("batch_size", cfg.batch_size.to_string());
    kv("epochs", cfg.epochs.to_string());
    kv("clip_threshold", cfg.clip_threshold.to_string());
    kv("l2_lambda", cfg.l2_lambda.to_string());
    kv("seed", cfg.seed.to_string());
    kv("max_context_tokens", cfg.max_context_tokens.to_string());
    kv("max_response_tokens", cfg.max_response_tokens.to_string());
    kv("min_token_count", cfg.min_token_count.to_string());
    kv("validation_fraction", cfg.validation_fraction.to_string());
    kv("mean_loss", cfg.mean_loss.to_string());

    let _ = writeln!(out, "vocab {}", trained.vocab.len());
    for token in trained.vocab.tokens() {
        out.push_str(token);
        out.push('\n');
    }

    for (name, data) in p.tensors() {
        let (rows, cols) = tensor_shape(p, name);
        let _ = writeln!(out, "tensor {name} {rows} {cols}");
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            out.push('\n');
        }
    }
    out.push_str("end\n");
    crate::io::atomic_write(path, out.as_bytes())
}

fn tensor_shape(p: &EncoderParams, name: &str) -> (usize, usize) {
    let d = p.hidden();
    let m = p.embed_dim();
    match name {
        "embed" => (p.vocab_len(), m),
        "w_h" | "bilinear" => (d, d),
        "w_x" => (d, m),
        "w_i" | "w_f" | "w_o" | "w_g" => (d, d + m),
        "b_i" | "b_f" | "b_o" | "b_g" => (1, d),
        "bias" => (1, 1),
        _ => unreachable!("unknown tensor {name}"),
    }
}

pub fn load(path: &Path) -> Result<TrainedEncoder> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::format(path, reason);
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing checkpoint magic"));
    }

    let mut header = std::collections::HashMap::new();
    let mut vocab_len = None;
    for line in lines.by_ref() {
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad("malformed header line"))?;
        if key == "vocab" {
            vocab_len = Some(
                value
                    .parse::<usize>()
                    .map_err(|_| bad("bad vocab length"))?,
            );
            break;
        }
        header.insert(key.to_string(), value.to_string());
    }
    let vocab_len = vocab_len.ok_or_else(|| bad("missing vocab section"))?;

    let get = |k: &str| {
        header
            .get(k)
            .cloned()
            .ok_or_else(|| bad(&format!("missing header key {k}")))
    };
    let parse_f = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| bad(&format!("bad value for {k}")))
    };
    let parse_u = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| bad(&format!("bad value for {k}")))
    };

    let model = ModelKind::parse(&get("model")?).ok_or_else(|| bad("unknown model kind"))?;
    let cfg = TrainConfig {
        model,
        hidden: parse_u("hidden")?,
        embed_dim: parse_u("embed_dim")?,
        learning_rate: parse_f("learning_rate")?,
        batch_size: parse_u("batch_size")?,
        epochs: parse_u("epochs")?,
        clip_threshold: parse_f("clip_threshold")?,
        l2_lambda: parse_f("l2_lambda")?,
        seed: get("seed")?.parse().map_err(|_| bad("bad seed"))?,
        max_context_tokens: parse_u("max_context_tokens")?,
        max_response_tokens: parse_u("max_response_tokens")?,
        min_token_count: parse_u("min_token_count")?,
        validation_fraction: parse_f("validation_fraction")?,
        mean_loss: get("mean_loss")? == "true",
    };

    let mut tokens = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        tokens.push(
            lines
                .next()
                .ok_or_else(|| bad("truncated vocab section"))?
                .to_string(),
        );
    }
    let vocab = Vocabulary::from_ordered_tokens(tokens);

    let mut read_tensor = |expect: &str, rows: usize, cols: usize| -> Result<Matrix> {
        let head = lines.next().ok_or_else(|| bad("truncated tensor section"))?;
        let expected = format!("tensor {expect} {rows} {cols}");
        if head != expected {
            return Err(bad(&format!("expected `{expected}`, found `{head}`")));
        }
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated tensor rows"))?;
            let mut count = 0;
            for (c, tok) in line.split_whitespace().enumerate() {
                if c >= cols {
                    return Err(bad("tensor row too long"));
                }
                m.set(r, c, tok.parse().map_err(|_| bad("bad float"))?);
                count += 1;
            }
            if count != cols {
                return Err(bad("tensor row too short"));
            }
        }
        Ok(m)
    };

    let d = cfg.hidden;
    let m_dim = cfg.embed_dim;
    let embed = read_tensor("embed", vocab_len, m_dim)?;
    let cell = match model {
        ModelKind::Rnn => CellParams::Rnn(RnnCell {
            w_h: read_tensor("w_h", d, d)?,
            w_x: read_tensor("w_x", d, m_dim)?,
        }),
        ModelKind::Lstm => {
            let w = [
                read_tensor("w_i", d, d + m_dim)?,
                read_tensor("w_f", d, d + m_dim)?,
                read_tensor("w_o", d, d + m_dim)?,
                read_tensor("w_g", d, d + m_dim)?,
            ];
            let b = [
                read_tensor("b_i", 1, d)?.data,
                read_tensor("b_f", 1, d)?.data,
                read_tensor("b_o", 1, d)?.data,
                read_tensor("b_g", 1, d)?.data,
            ];
            CellParams::Lstm(LstmCell { w, b })
        }
    };
    let bilinear = read_tensor("bilinear", d, d)?;
    let bias = read_tensor("bias", 1, 1)?.data[0];
    if lines.next() != Some("end") {
        return Err(bad("missing end marker"));
    }

    Ok(TrainedEncoder {
        params: EncoderParams {
            embed,
            cell,
            bilinear,
            bias,
        },
        vocab,
        config: cfg,
        log: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{train, ModelKind, TrainConfig};
    use super::*;
    use crate::dataset::Triple;
    use crate::preprocess::Preprocessor;

    fn trained(model: ModelKind) -> TrainedEncoder {
        let triples: Vec<Triple> = (0..6)
            .map(|i| Triple {
                context: format!("hello there number {i}"),
                response: format!("general reply {i}"),
                flag: (i % 2) as u8,
            })
            .collect();
        let cfg = TrainConfig {
            hidden: 4,
            embed_dim: 3,
            epochs: 2,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default_for(model)
        };
        train(&triples, &Preprocessor::default(), &cfg, None).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_for_both_models() {
        for model in [ModelKind::Rnn, ModelKind::Lstm] {
            let t = trained(model);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.ckpt");
            save(&t, &path).unwrap();
            let loaded = load(&path).unwrap();
            assert_eq!(loaded.params, t.params);
            assert_eq!(loaded.vocab, t.vocab);
            assert_eq!(loaded.config, t.config);
        }
    }

    #[test]
    fn save_is_byte_deterministic() {
        let t = trained(ModelKind::Lstm);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save(&t, &a).unwrap();
        save(&t, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        let t = trained(ModelKind::Rnn);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&t, &path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("tensor w_h", "tensor oops");
        std::fs::write(&path, text).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
