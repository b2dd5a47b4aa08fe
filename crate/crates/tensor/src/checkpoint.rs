//! Named-tensor checkpoint files.
//!
//! Layout (UTF-8 text, one record per line):
//!
//! ```text
//! kg-checkpoint 1
//! meta <key> <value...>
//! tensor <name> <rank> <dim>...
//! <value> <value> ...
//! ```
//!
//! Values use Rust's shortest round-trip `{:e}` form, so a save/load cycle
//! reproduces every bit. A tensor line is always followed by exactly one value
//! line (empty for zero-element tensors).

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "kg-checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint has no tensor named {0:?}")]
    Missing(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
        for (k, v) in &self.meta {
            writeln!(w, "meta {k} {v}")?;
        }
        for (name, t) in &self.tensors {
            write!(w, "tensor {name} {}", t.rank())?;
            for d in t.shape() {
                write!(w, " {d}")?;
            }
            writeln!(w)?;
            let mut first = true;
            for v in t.data() {
                if !first {
                    w.write_all(b" ")?;
                }
                first = false;
                write!(w, "{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, CheckpointError> {
        let mut lines = r.lines().enumerate();
        let perr = |line: usize, msg: &str| CheckpointError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };

        let (_, header) = lines.next().ok_or_else(|| perr(0, "empty file"))?;
        let header = header?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| perr(0, "missing kg-checkpoint header"))?
            .parse::<u32>()
            .map_err(|_| perr(0, "bad version"))?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }

        let mut ckpt = Checkpoint::new();
        while let Some((ln, line)) = lines.next() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split(' ');
                let name = parts.next().ok_or_else(|| perr(ln, "missing name"))?;
                let rank: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| perr(ln, "bad rank"))?;
                let shape: Vec<usize> = parts
                    .map(|s| s.parse::<usize>().map_err(|_| perr(ln, "bad dimension")))
                    .collect::<Result<_, _>>()?;
                if shape.len() != rank {
                    return Err(perr(ln, "rank does not match dimensions"));
                }
                let (vln, values) = lines.next().ok_or_else(|| perr(ln + 1, "missing values"))?;
                let values = values?;
                let data: Vec<f64> = values
                    .split_ascii_whitespace()
                    .map(|s| s.parse::<f64>().map_err(|_| perr(vln, "bad value")))
                    .collect::<Result<_, _>>()?;
                let t = Tensor::new(shape, data).map_err(|e| perr(vln, &e.to_string()))?;
                ckpt.tensors.push((name.to_string(), t));
            } else {
                return Err(perr(ln, "unknown record"));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let f = fs::File::open(path)?;
        Self::read_from(BufReader::new(f))
    }
}
