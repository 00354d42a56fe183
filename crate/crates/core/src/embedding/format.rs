//! The `EMB1` plain-text matrix format.
//!
//! ```text
//! EMB1 <D> <V>
//! <D floats: column 0>
//! ...
//! <D floats: column V-1>
//! TOKENS            (optional)
//! <token 0>
//! ...
//! ```
//!
//! Floats are written in shortest round-trip exponent form, so save/load is
//! exact. Model checkpoints append further sections after this block; see
//! [`read_emb1_prefix`].

use std::fmt::Write as _;

use super::{EmbeddingMatrix, Vocab};
use crate::error::{Error, Result};

pub(crate) fn write_floats(out: &mut String, values: &[f64]) {
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        write!(out, "{v:e}").expect("writing to a String cannot fail");
    }
    out.push('\n');
}

pub(crate) fn parse_floats(line: &str, lineno: usize, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::parse(lineno, format!("bad float {tok:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::parse(
            lineno,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::parse(lineno, format!("non-finite value {v}")));
    }
    Ok(values)
}

/// Serializes `matrix` (and the token list, if given) as an `EMB1` block.
pub fn write_emb1(matrix: &EmbeddingMatrix, vocab: Option<&Vocab>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "EMB1 {} {}", matrix.dim(), matrix.vocab_size()).unwrap();
    for col in matrix.columns() {
        write_floats(&mut out, col);
    }
    if let Some(vocab) = vocab {
        if vocab.len() != matrix.vocab_size() {
            return Err(Error::DimensionMismatch {
                expected: matrix.vocab_size(),
                actual: vocab.len(),
            });
        }
        if let Some(bad) = vocab.tokens().iter().find(|t| t.is_empty() || t.contains(char::is_whitespace)) {
            return Err(Error::InvalidVocab(format!("token {bad:?} cannot be written on one line")));
        }
        out.push_str("TOKENS\n");
        for t in vocab.tokens() {
            out.push_str(t);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Result of parsing an `EMB1` block at the start of a larger document.
#[derive(Debug)]
pub struct Emb1Prefix {
    pub matrix: EmbeddingMatrix,
    pub vocab: Option<Vocab>,
    /// Number of lines consumed, including the optional token section.
    pub lines_consumed: usize,
}

/// Parses the leading `EMB1` block of `text`, leaving any trailing lines unread.
pub fn read_emb1_prefix(text: &str) -> Result<Emb1Prefix> {
    let lines: Vec<&str> = text.lines().collect();
    let header = lines.first().ok_or_else(|| Error::parse(1, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "EMB1" {
        return Err(Error::parse(1, "expected header `EMB1 <D> <V>`"));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::parse(1, format!("bad dimension {s:?}: {e}")))
    };
    let (dim, vocab_size) = (parse_dim(fields[1])?, parse_dim(fields[2])?);
    if dim == 0 || vocab_size < 2 {
        return Err(Error::parse(1, format!("invalid shape D={dim} V={vocab_size}")));
    }
    if lines.len() < 1 + vocab_size {
        return Err(Error::parse(lines.len() + 1, "unexpected end of input in matrix rows"));
    }
    let mut data = Vec::with_capacity(dim * vocab_size);
    for (i, line) in lines[1..=vocab_size].iter().enumerate() {
        data.extend(parse_floats(line, i + 2, dim)?);
    }
    let matrix = EmbeddingMatrix::from_column_major(dim, vocab_size, data)?;

    let mut consumed = 1 + vocab_size;
    let mut vocab = None;
    if lines.get(consumed).map(|l| l.trim()) == Some("TOKENS") {
        let start = consumed + 1;
        if lines.len() < start + vocab_size {
            return Err(Error::parse(lines.len() + 1, "unexpected end of input in TOKENS"));
        }
        let tokens = lines[start..start + vocab_size]
            .iter()
            .map(|t| t.trim().to_string())
            .collect();
        vocab = Some(Vocab::new(tokens)?);
        consumed = start + vocab_size;
    }
    Ok(Emb1Prefix { matrix, vocab, lines_consumed: consumed })
}

/// Parses a complete `EMB1` document. Trailing blank lines are allowed; anything else is an error.
pub fn read_emb1(text: &str) -> Result<(EmbeddingMatrix, Option<Vocab>)> {
    let prefix = read_emb1_prefix(text)?;
    if let Some((n, line)) = text
        .lines()
        .enumerate()
        .skip(prefix.lines_consumed)
        .find(|(_, l)| !l.trim().is_empty())
    {
        return Err(Error::parse(n + 1, format!("unexpected trailing content {line:?}")));
    }
    Ok((prefix.matrix, prefix.vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{init_random, InitScheme};
    use proptest::prelude::*;

    #[test]
    fn writes_expected_layout() {
        let w = EmbeddingMatrix::from_columns(&[[1.0, 0.5], [-2.0, 3.0]]).unwrap();
        let text = write_emb1(&w, None).unwrap();
        assert_eq!(text, "EMB1 2 2\n1e0 5e-1\n-2e0 3e0\n");
    }

    #[test]
    fn round_trips_with_tokens() {
        let w = init_random(3, 5, InitScheme::Gaussian, 2).unwrap();
        let vocab = Vocab::synthetic(5).unwrap();
        let text = write_emb1(&w, Some(&vocab)).unwrap();
        let (back, v) = read_emb1(&text).unwrap();
        assert_eq!(back, w);
        assert_eq!(v.unwrap(), vocab);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_emb1("").is_err());
        assert!(read_emb1("EMB2 2 2\n1 0\n0 1\n").is_err());
        assert!(read_emb1("EMB1 2 2\n1 0\n").is_err());
        assert!(read_emb1("EMB1 2 2\n1 0\n0 x\n").is_err());
        assert!(read_emb1("EMB1 2 2\n1 0\n0 1 2\n").is_err());
        assert!(read_emb1("EMB1 2 2\n1 0\n0 NaN\n").is_err());
        assert!(read_emb1("EMB1 2 2\n1 0\n0 1\nextra\n").is_err());
        assert!(read_emb1("EMB1 2 2\n1 0\n0 1\n\n").is_ok());
    }

    #[test]
    fn prefix_stops_before_trailing_sections() {
        let text = "EMB1 2 2\n1 0\n0 1\nSECTION x 1 1\n5\n";
        let p = read_emb1_prefix(text).unwrap();
        assert_eq!(p.lines_consumed, 3);
        assert_eq!(p.matrix, EmbeddingMatrix::identity(2).unwrap());
    }

    proptest! {
        #[test]
        fn save_load_is_exact(
            dim in 1usize..5,
            vocab in 2usize..6,
            raw in proptest::collection::vec(-1e300f64..1e300, 30),
        ) {
            let data: Vec<f64> = raw.iter().cycle().take(dim * vocab).copied().collect();
            let w = EmbeddingMatrix::from_column_major(dim, vocab, data).unwrap();
            let (back, _) = read_emb1(&write_emb1(&w, None).unwrap()).unwrap();
            prop_assert_eq!(back.as_slice(), w.as_slice());
        }
    }
}
