//! Text checkpoint container.
//!
//! ```text
//! mpnmt-checkpoint 1
//! config <ModelConfig as one-line JSON>
//! vocab_size <V>
//! vocab_hash <hex>
//! tensor <name> <d1>x<d2>...
//! <values of one row, space separated>
//! ...
//! end
//! ```
//! Tensors appear in [`ModelParams::tensors`] order; a matrix has one line per
//! row, a vector a single line. Values use the shortest exact `f64` notation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::params::ModelParams;
use super::{ModelConfig, ModelError};

pub const CHECKPOINT_MAGIC: &str = "mpnmt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub params: ModelParams,
}

pub fn write_checkpoint(ck: &Checkpoint) -> String {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
    writeln!(out, "config {}", serde_json::to_string(&ck.config).unwrap()).unwrap();
    writeln!(out, "vocab_size {}", ck.params.vocab_size()).unwrap();
    writeln!(out, "vocab_hash {}", ck.vocab_hash).unwrap();
    for (name, shape, data) in ck.params.tensors() {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        writeln!(out, "tensor {name} {}", dims.join("x")).unwrap();
        let row_len = *shape.last().unwrap();
        for row in data.chunks(row_len.max(1)) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", vals.join(" ")).unwrap();
        }
    }
    out.push_str("end\n");
    out
}

fn err(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str, ModelError> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix(' '))
        .ok_or_else(|| err(format!("expected `{key}` line")))
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint, ModelError> {
    let mut lines = text.lines();
    let version = field(lines.next(), CHECKPOINT_MAGIC)?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(err(format!("unsupported version {version}")));
    }
    let config: ModelConfig = serde_json::from_str(field(lines.next(), "config")?)
        .map_err(|e| err(format!("config: {e}")))?;
    config.validate()?;
    let vocab_size: usize = field(lines.next(), "vocab_size")?
        .parse()
        .map_err(|_| err("bad vocab_size"))?;
    let vocab_hash = field(lines.next(), "vocab_hash")?.to_string();

    let mut params = ModelParams::zeros(
        vocab_size,
        config.embed_dim,
        config.hidden_dim,
        config.num_layers,
    );
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    for ((name, shape), slot) in expected.iter().zip(params.tensors_mut()) {
        let header = field(lines.next(), "tensor")?;
        let want = format!(
            "{name} {}",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
        );
        if header != want {
            return Err(err(format!("expected tensor `{want}`, found `{header}`")));
        }
        let row_len = *shape.last().unwrap();
        for row in slot.chunks_mut(row_len.max(1)) {
            let line = lines.next().ok_or_else(|| err(format!("truncated tensor {name}")))?;
            let mut vals = line.split(' ');
            for v in row.iter_mut() {
                *v = vals
                    .next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| err(format!("bad value in tensor {name}")))?;
            }
            if vals.next().is_some() {
                return Err(err(format!("row too long in tensor {name}")));
            }
        }
    }
    if lines.next() != Some("end") {
        return Err(err("missing end marker"));
    }
    if !params.all_finite() {
        return Err(err("non-finite parameter"));
    }
    Ok(Checkpoint {
        config,
        vocab_hash,
        params,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), ModelError> {
    fs::write(path, write_checkpoint(ck)).map_err(|e| err(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let text = fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    read_checkpoint(&text)
}
