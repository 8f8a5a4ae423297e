//! Plain-text checkpoints.
//!
//! A checkpoint echoes the full model configuration followed by every
//! parameter tensor in declaration order. Floats are written with Rust's
//! shortest round-trip formatting, so save → load reproduces every value
//! bit for bit. Optimizer momentum is not persisted; a loaded model
//! resumes with fresh momentum buffers.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::gradcore::RngStream;

use super::heads::{HeadParams, MixConfig};
use super::VariantId;

const HEADER: &str = "SEMSHOT-CKPT v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("checkpoint is inconsistent: {0}")]
    Mismatch(String),
}

/// A saved model: the scoring variant plus every trained head.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub variant: VariantId,
    pub seed: u64,
    pub heads: HeadParams,
}

fn fmt_f64(v: f64) -> String {
    // keep an exponent/point so the value re-parses as float, and make
    // negative zero survive the trip
    if v == 0.0 && v.is_sign_negative() {
        "-0.0".into()
    } else {
        let s = format!("{v}");
        if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
            s
        } else {
            format!("{s}.0")
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> String {
    let h = &ckpt.heads;
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "variant = {}", ckpt.variant);
    let _ = writeln!(out, "d_v = {}", h.d_v);
    let _ = writeln!(out, "d_e = {}", h.d_e);
    let _ = writeln!(out, "attn_width = {}", h.attn_width);
    let _ = writeln!(out, "alpha = {}", fmt_f64(h.mix.alpha));
    let _ = writeln!(out, "dist_scale = {}", fmt_f64(h.mix.dist_scale));
    let _ = writeln!(out, "scale_prior_branch = {}", h.mix.scale_prior_branch);
    let _ = writeln!(out, "seed = {}", ckpt.seed);
    for (name, shape, values) in h.named_values() {
        let _ = writeln!(out, "param {} {} {}", name, shape[0], shape[1]);
        for row in values.chunks(shape[1]) {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn decode_checkpoint(text: &str) -> Result<Checkpoint, CheckpointError> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| CheckpointError::Parse {
            line: 0,
            detail: format!("unexpected end of file, expected {what}"),
        })
    };

    let (_, first) = next("header")?;
    if first.trim() != HEADER {
        return Err(CheckpointError::Parse {
            line: 1,
            detail: format!("bad header '{first}'"),
        });
    }

    let mut kv = |key: &str| -> Result<(usize, String), CheckpointError> {
        let (i, line) = next(key)?;
        let (k, v) = line.split_once('=').ok_or_else(|| CheckpointError::Parse {
            line: i + 1,
            detail: format!("expected '{key} = ...', got '{line}'"),
        })?;
        if k.trim() != key {
            return Err(CheckpointError::Parse {
                line: i + 1,
                detail: format!("expected key '{key}', got '{}'", k.trim()),
            });
        }
        Ok((i + 1, v.trim().to_string()))
    };

    fn parse<T: std::str::FromStr>(line: usize, v: &str, what: &str) -> Result<T, CheckpointError> {
        v.parse().map_err(|_| CheckpointError::Parse {
            line,
            detail: format!("invalid {what} '{v}'"),
        })
    }

    let (ln, v) = kv("variant")?;
    let variant: VariantId = parse(ln, &v, "variant")?;
    let (ln, v) = kv("d_v")?;
    let d_v: usize = parse(ln, &v, "d_v")?;
    let (ln, v) = kv("d_e")?;
    let d_e: usize = parse(ln, &v, "d_e")?;
    let (ln, v) = kv("attn_width")?;
    let attn_width: usize = parse(ln, &v, "attn_width")?;
    let (ln, v) = kv("alpha")?;
    let alpha: f64 = parse(ln, &v, "alpha")?;
    let (ln, v) = kv("dist_scale")?;
    let dist_scale: f64 = parse(ln, &v, "dist_scale")?;
    let (ln, v) = kv("scale_prior_branch")?;
    let scale_prior_branch: bool = parse(ln, &v, "scale_prior_branch")?;
    let (ln, v) = kv("seed")?;
    let seed: u64 = parse(ln, &v, "seed")?;

    let mix = MixConfig {
        alpha,
        dist_scale,
        scale_prior_branch,
    };
    let mut heads = HeadParams::init(d_v, d_e, attn_width, mix, &mut RngStream::new(0, "ckpt-load"))
        .map_err(|e| CheckpointError::Parse {
            line: ln,
            detail: format!("invalid configuration: {e}"),
        })?;

    for param in heads.parameters_mut() {
        let (i, line) = next("param header")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "param" {
            return Err(CheckpointError::Parse {
                line: i + 1,
                detail: format!("expected 'param <name> <rows> <cols>', got '{line}'"),
            });
        }
        if parts[1] != param.name {
            return Err(CheckpointError::Mismatch(format!(
                "expected parameter '{}', file has '{}'",
                param.name, parts[1]
            )));
        }
        let rows: usize = parse(i + 1, parts[2], "row count")?;
        let cols: usize = parse(i + 1, parts[3], "column count")?;
        if param.value.shape() != [rows, cols] {
            return Err(CheckpointError::Mismatch(format!(
                "parameter '{}' has shape {:?} in the file but {:?} for this configuration",
                param.name,
                [rows, cols],
                param.value.shape()
            )));
        }
        let data = param.value.data_mut();
        for r in 0..rows {
            let (i, line) = next("parameter row")?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != cols {
                return Err(CheckpointError::Parse {
                    line: i + 1,
                    detail: format!("expected {cols} values, got {}", fields.len()),
                });
            }
            for (c, field) in fields.iter().enumerate() {
                data[r * cols + c] = parse(i + 1, field, "float")?;
            }
        }
        param.zero_grad();
        param.momentum.data_mut().fill(0.0);
    }

    if let Some((i, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(CheckpointError::Parse {
            line: i + 1,
            detail: format!("trailing content '{line}'"),
        });
    }

    Ok(Checkpoint {
        variant,
        seed,
        heads,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    Ok(std::fs::write(path, encode_checkpoint(ckpt))?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&std::fs::read_to_string(path)?)
}
