use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use super::{OracleInfo, Step};
use crate::base::Stream;
use crate::error::{invalid, Error, Result};

/// One example: sorted label set and a sparse, L2-normalised context.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilabelExample {
    pub labels: Vec<usize>,
    pub features: Vec<(usize, f64)>,
}

impl MultilabelExample {
    pub fn has_label(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn dense(&self, dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for &(i, v) in &self.features {
            x[i] = v;
        }
        x
    }
}

/// Parsed sparse multi-label dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilabelData {
    pub feature_dim: usize,
    pub label_count: usize,
    pub examples: Vec<MultilabelExample>,
    /// Examples dropped at load because they carried no label.
    pub dropped: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let nums: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(1, format!("bad header field `{t}`"))))
        .collect::<Result<_>>()?;
    match nums[..] {
        [n, d, l] if d > 0 && l > 0 => Ok((n, d, l)),
        [_, _, _] => Err(parse_err(1, "feature and label counts must be positive")),
        _ => Err(parse_err(1, "header must be `<examples> <features> <labels>`")),
    }
}

fn parse_example(text: &str, lineno: usize, dim: usize, labels: usize) -> Result<MultilabelExample> {
    let mut tokens = text.split_whitespace().peekable();
    let mut label_set = Vec::new();
    if let Some(first) = tokens.peek().copied() {
        if !first.contains(':') {
            tokens.next();
            for t in first.split(',').filter(|t| !t.is_empty()) {
                let l: usize = t
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad label `{t}`")))?;
                if l >= labels {
                    return Err(parse_err(lineno, format!("label {l} out of range (< {labels})")));
                }
                label_set.push(l);
            }
        }
    }
    label_set.sort_unstable();
    label_set.dedup();
    let mut features = Vec::new();
    for t in tokens {
        let (i, v) = t
            .split_once(':')
            .ok_or_else(|| parse_err(lineno, format!("expected index:value, got `{t}`")))?;
        let i: usize = i
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad feature index `{i}`")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad feature value `{v}`")))?;
        if i >= dim {
            return Err(parse_err(lineno, format!("feature index {i} out of range (< {dim})")));
        }
        if !v.is_finite() {
            return Err(parse_err(lineno, "non-finite feature value"));
        }
        features.push((i, v));
    }
    features.sort_by_key(|&(i, _)| i);
    if features.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(parse_err(lineno, "duplicate feature index"));
    }
    features.retain(|&(_, v)| v != 0.0);
    let norm = features.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
    // already-unit rows (e.g. written back by `write_multilabel`) are kept bit-for-bit
    if norm > 0.0 && (norm - 1.0).abs() > 8.0 * f64::EPSILON {
        for f in &mut features {
            f.1 /= norm;
        }
    }
    Ok(MultilabelExample {
        labels: label_set,
        features,
    })
}

/// Parse the sparse multi-label text format. Header: `N D L`; each following
/// line: `l1,l2,... i1:v1 i2:v2 ...` with 0-based indices.
pub fn parse_multilabel<R: BufRead>(reader: R) -> Result<MultilabelData> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let (n, feature_dim, label_count) = parse_header(&header)?;
    let mut examples = Vec::with_capacity(n);
    let mut dropped = 0;
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let ex = parse_example(&line, lineno, feature_dim, label_count)?;
        if ex.labels.is_empty() {
            dropped += 1;
        } else {
            examples.push(ex);
        }
    }
    if seen != n {
        return Err(parse_err(1, format!("header declares {n} examples, found {seen}")));
    }
    if dropped > 0 {
        log::info!("dropped {dropped} examples without labels");
    }
    Ok(MultilabelData {
        feature_dim,
        label_count,
        examples,
        dropped,
    })
}

/// Write kept examples back in the same format (values at full precision).
pub fn write_multilabel<W: Write>(data: &MultilabelData, mut out: W) -> Result<()> {
    writeln!(out, "{} {} {}", data.examples.len(), data.feature_dim, data.label_count)?;
    for ex in &data.examples {
        let labels: Vec<String> = ex.labels.iter().map(|l| l.to_string()).collect();
        write!(out, "{}", labels.join(","))?;
        for &(i, v) in &ex.features {
            write!(out, " {i}:{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Multi-label classification as a bandit: arms are labels and pulling a
/// true label pays 1. Every agent samples examples uniformly with replacement.
#[derive(Debug, Clone)]
pub struct MultilabelEnv {
    data: MultilabelData,
    agents: usize,
}

impl MultilabelEnv {
    pub fn load(path: &Path, agents: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::new(parse_multilabel(BufReader::new(file))?, agents)
    }

    pub fn new(data: MultilabelData, agents: usize) -> Result<Self> {
        if data.examples.is_empty() {
            return Err(invalid("dataset has no labelled examples"));
        }
        if agents < 1 {
            return Err(invalid("need at least one agent"));
        }
        Ok(Self { data, agents })
    }

    pub fn data(&self) -> &MultilabelData {
        &self.data
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn arms(&self) -> usize {
        self.data.label_count
    }

    pub fn context_dim(&self) -> usize {
        self.data.feature_dim
    }

    pub(crate) fn step(&self, stream: &mut Stream) -> Step {
        let ex = &self.data.examples[stream.gen_range(0..self.data.examples.len())];
        let rewards: Vec<f64> = (0..self.arms())
            .map(|a| if ex.has_label(a) { 1.0 } else { 0.0 })
            .collect();
        Step::new(ex.dense(self.context_dim()), rewards.clone(), OracleInfo::new(rewards))
    }
}
