//! Text checkpoints for [`NetworkParams`].
//!
//! ```text
//! CVSDPG1
//! network <num_layers>
//! layer <in> <out> <relu|tanh|linear>
//! <out rows of `in` weights, space separated>
//! <one row of `out` biases>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle reproduces every parameter bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::network::{Layer, NetworkParams};
use crate::error::{Error, Result};

pub const MAGIC: &str = "CVSDPG1";

fn write_row<'a, W: Write>(
    out: &mut W,
    values: impl Iterator<Item = &'a f64>,
) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v}")?;
        first = false;
    }
    out.write_all(b"\n")
}

pub fn write_network<W: Write>(out: &mut W, params: &NetworkParams) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "network {}", params.layers().len())?;
    for layer in params.layers() {
        writeln!(
            out,
            "layer {} {} {}",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation
        )?;
        for row in layer.weight.rows() {
            write_row(out, row.iter())?;
        }
        write_row(out, layer.bias.iter())?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.number += 1;
        match self.inner.next() {
            Some(Ok(line)) => Ok(line),
            Some(Err(e)) => Err(Error::Checkpoint(format!("line {}: {e}", self.number))),
            None => Err(Error::Checkpoint(format!(
                "unexpected end of file at line {}",
                self.number
            ))),
        }
    }

    fn bad(&self, msg: impl std::fmt::Display) -> Error {
        Error::Checkpoint(format!("line {}: {msg}", self.number))
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let values = line
            .split_ascii_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.bad(format!("bad number `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(self.bad(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(values)
    }
}

fn parse_usize<R: BufRead>(lines: &Lines<R>, token: Option<&str>) -> Result<usize> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| lines.bad("expected a count"))
}

pub fn read_network<R: BufRead>(input: R) -> Result<NetworkParams> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    if lines.next_line()?.trim() != MAGIC {
        return Err(lines.bad(format!("missing `{MAGIC}` header")));
    }
    let header = lines.next_line()?;
    let mut tokens = header.split_ascii_whitespace();
    if tokens.next() != Some("network") {
        return Err(lines.bad("expected `network <count>`"));
    }
    let count = parse_usize(&lines, tokens.next())?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let header = lines.next_line()?;
        let mut tokens = header.split_ascii_whitespace();
        if tokens.next() != Some("layer") {
            return Err(lines.bad("expected `layer <in> <out> <activation>`"));
        }
        let in_dim = parse_usize(&lines, tokens.next())?;
        let out_dim = parse_usize(&lines, tokens.next())?;
        let activation = tokens
            .next()
            .ok_or_else(|| lines.bad("missing activation"))?
            .parse()
            .map_err(|e| lines.bad(e))?;
        let mut weights = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..out_dim {
            weights.extend(lines.floats(in_dim)?);
        }
        let bias = lines.floats(out_dim)?;
        let weight = Array2::from_shape_vec((out_dim, in_dim), weights)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        layers.push(Layer {
            weight,
            bias: Array1::from(bias),
            activation,
        });
    }
    NetworkParams::from_layers(layers)
}

pub fn save_network(path: impl AsRef<Path>, params: &NetworkParams) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_network(&mut out, params)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_network(BufReader::new(file))
}
