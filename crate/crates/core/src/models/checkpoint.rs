use std::io::{BufRead, Write};

use super::{Arch, FeatureMap, MlpArch, Model};
use crate::error::{Error, Result};

const MAGIC: &str = "fedigw-checkpoint v1";

/// Write a model as text: a magic line, an architecture line, a parameter
/// count and one IEEE-754 bit pattern (hex) per parameter.
pub fn write_checkpoint(model: &Model, mut out: impl Write) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    match model.arch() {
        Arch::Linear {
            feature_map: FeatureMap::ConcatOnehot { context_dim, arms },
        } => writeln!(out, "linear concat_onehot {context_dim} {arms}")?,
        Arch::Linear {
            feature_map: FeatureMap::Provided { feature_dim, arms },
        } => writeln!(out, "linear provided {feature_dim} {arms}")?,
        Arch::Mlp(m) => writeln!(out, "mlp {} {} {}", m.input_dim, m.hidden, m.arms)?,
    }
    writeln!(out, "params {}", model.params().len())?;
    for p in model.params() {
        writeln!(out, "{:016x}", p.to_bits())?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize> {
    tok.ok_or_else(|| parse_err(line, "missing field"))?
        .parse()
        .map_err(|e| parse_err(line, format!("{e}")))
}

pub fn read_checkpoint(input: impl BufRead) -> Result<Model> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(parse_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(parse_err(n, "not a fedigw checkpoint"));
    }
    let (n, arch_line) = next("architecture")?;
    let mut toks = arch_line.split_whitespace();
    let arch = match (toks.next(), toks.next()) {
        (Some("linear"), Some("concat_onehot")) => Arch::Linear {
            feature_map: FeatureMap::ConcatOnehot {
                context_dim: parse_usize(toks.next(), n)?,
                arms: parse_usize(toks.next(), n)?,
            },
        },
        (Some("linear"), Some("provided")) => Arch::Linear {
            feature_map: FeatureMap::Provided {
                feature_dim: parse_usize(toks.next(), n)?,
                arms: parse_usize(toks.next(), n)?,
            },
        },
        (Some("mlp"), Some(input)) => Arch::Mlp(MlpArch {
            input_dim: parse_usize(Some(input), n)?,
            hidden: parse_usize(toks.next(), n)?,
            arms: parse_usize(toks.next(), n)?,
        }),
        _ => return Err(parse_err(n, format!("unknown architecture `{arch_line}`"))),
    };
    let (n, count_line) = next("parameter count")?;
    let count = match count_line.split_once(' ') {
        Some(("params", c)) => parse_usize(Some(c.trim()), n)?,
        _ => return Err(parse_err(n, "expected `params <count>`")),
    };
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = next("parameter")?;
        let bits = u64::from_str_radix(l.trim(), 16).map_err(|e| parse_err(n, format!("{e}")))?;
        params.push(f64::from_bits(bits));
    }
    Model::unflatten(arch, params.into())
}
