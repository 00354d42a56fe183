//! Model checkpoints: an `EMB1` block for the tied matrix followed by named
//! sections for every other tensor.
//!
//! ```text
//! EMB1 <D> <V>
//! ...
//! TOKENS
//! ...
//! MODEL head=<kind> dim=<D> vocab=<V> enc_layers=<n> dec_layers=<n> ffn_dim=<n>
//! SECTION <name> <rows> <cols>
//! <cols floats>          (rows lines)
//! ...
//! END
//! ```

use std::collections::HashMap;

use super::model::{ModelShape, Params, ToyModel};
use crate::embedding::format::{parse_floats, write_floats};
use crate::embedding::{read_emb1_prefix, write_emb1, Vocab};
use crate::error::{Error, Result};
use crate::heads::HeadKind;

pub fn write_checkpoint(model: &ToyModel) -> Result<String> {
    let s = model.shape();
    let vocab = Vocab::synthetic(s.vocab_size)?;
    let mut out = write_emb1(model.embedding(), Some(&vocab))?;
    out.push_str(&format!(
        "MODEL head={} dim={} vocab={} enc_layers={} dec_layers={} ffn_dim={}\n",
        model.head_kind(),
        s.dim,
        s.vocab_size,
        s.enc_layers,
        s.dec_layers,
        s.ffn_dim
    ));
    model.params().visit(&mut |name, rows, cols, values| {
        if name == "embedding" {
            return;
        }
        out.push_str(&format!("SECTION {name} {rows} {cols}\n"));
        for row in values.chunks_exact(cols) {
            write_floats(&mut out, row);
        }
    });
    out.push_str("END\n");
    Ok(out)
}

pub fn read_checkpoint(text: &str) -> Result<ToyModel> {
    let prefix = read_emb1_prefix(text)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = prefix.lines_consumed;

    let model_line = lines.get(pos).ok_or_else(|| Error::parse(pos + 1, "missing MODEL line"))?;
    let mut fields = model_line.split_whitespace();
    if fields.next() != Some("MODEL") {
        return Err(Error::parse(pos + 1, "expected MODEL line"));
    }
    let kv: HashMap<&str, &str> = fields.filter_map(|f| f.split_once('=')).collect();
    let get = |key: &str| -> Result<&str> {
        kv.get(key).copied().ok_or_else(|| Error::parse(pos + 1, format!("missing {key}")))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?.parse().map_err(|_| Error::parse(pos + 1, format!("bad {key}")))
    };
    let head: HeadKind = get("head")?.parse()?;
    let shape = ModelShape {
        dim: num("dim")?,
        vocab_size: num("vocab")?,
        enc_layers: num("enc_layers")?,
        dec_layers: num("dec_layers")?,
        ffn_dim: num("ffn_dim")?,
    };
    if shape.dim != prefix.matrix.dim() || shape.vocab_size != prefix.matrix.vocab_size() {
        return Err(Error::parse(pos + 1, "MODEL shape disagrees with EMB1 header"));
    }
    pos += 1;

    let mut params = Params::init(&shape, 0)?;
    params.embedding = prefix.matrix;
    let mut failure: Option<Error> = None;
    params.visit_mut(&mut |name, rows, cols, values| {
        if name == "embedding" || failure.is_some() {
            return;
        }
        let header = format!("SECTION {name} {rows} {cols}");
        if lines.get(pos).map(|l| l.trim()) != Some(header.as_str()) {
            failure = Some(Error::parse(pos + 1, format!("expected `{header}`")));
            return;
        }
        pos += 1;
        for r in 0..rows {
            let Some(line) = lines.get(pos) else {
                failure = Some(Error::parse(pos + 1, "unexpected end of input"));
                return;
            };
            match parse_floats(line, pos + 1, cols) {
                Ok(row) => values[r * cols..(r + 1) * cols].copy_from_slice(&row),
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            }
            pos += 1;
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if lines.get(pos).map(|l| l.trim()) != Some("END") {
        return Err(Error::parse(pos + 1, "expected END"));
    }
    ToyModel::from_params(shape, head, params)
}
