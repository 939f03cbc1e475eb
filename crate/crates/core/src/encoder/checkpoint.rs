//! Self-describing checkpoint layout.
//!
//! A checkpoint is an ASCII header followed by a binary payload:
//!
//! ```text
//! sepll-checkpoint 1
//! encoder mlp nonlinearity=tanh layers=2 d=64
//! layer in=5000 out=256
//! layer in=256 out=64
//! ...further blocks...
//! end
//! <row-major little-endian f64 values, block by block>
//! ```
//!
//! Each layer contributes its weights (`out x in`, row-major) followed by
//! its bias.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Mlp};

use super::{Encoder, MlpEncoder};

const MAGIC: &str = "sepll-checkpoint 1";
const END: &str = "end";

#[derive(Debug, Default)]
pub struct CheckpointWriter {
    lines: Vec<String>,
    data: Vec<f64>,
}

impl CheckpointWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line(&mut self, line: impl Into<String>) {
        let line = line.into();
        debug_assert!(!line.contains('\n') && line != END);
        self.lines.push(line);
    }

    pub fn values(&mut self, values: &[f64]) {
        self.data.extend_from_slice(values);
    }

    /// Writes a block header `<name> mlp nonlinearity=.. layers=.. <extra>` and its layers.
    pub fn mlp(&mut self, name: &str, net: &Mlp, extra: &str) {
        let mut head = format!("{name} mlp nonlinearity={} layers={}", net.activation, net.layers.len());
        if !extra.is_empty() {
            head.push(' ');
            head.push_str(extra);
        }
        self.line(head);
        for l in &net.layers {
            self.line(format!("layer in={} out={}", l.in_dim, l.out_dim));
            self.data.extend_from_slice(&l.weights);
            self.data.extend_from_slice(&l.bias);
        }
    }

    pub fn finish<W: Write>(self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        for l in &self.lines {
            writeln!(w, "{l}")?;
        }
        writeln!(w, "{END}")?;
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)
    }

    pub fn to_bytes(self) -> Vec<u8> {
        let mut out = Vec::new();
        self.finish(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

/// One header line split into a leading word, positional words and `key=value` pairs.
#[derive(Debug)]
pub struct HeaderLine {
    pub name: String,
    pub words: Vec<String>,
    pub fields: HashMap<String, String>,
}

impl HeaderLine {
    pub fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| corrupt(format!("`{}` line lacks `{key}`", self.name)))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| corrupt(format!("`{}`: `{key}` is not an integer", self.name)))
    }
}

pub struct CheckpointReader {
    lines: Vec<String>,
    pos: usize,
    data: Vec<f64>,
    dpos: usize,
}

fn corrupt(msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("corrupt checkpoint: {msg}"))
}

impl CheckpointReader {
    pub fn from_reader<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Data(format!("reading checkpoint: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut lines = Vec::new();
        let mut start = 0;
        let payload_start = loop {
            let Some(nl) = bytes[start..].iter().position(|&b| b == b'\n') else {
                return Err(corrupt("header is not terminated by `end`"));
            };
            let line = std::str::from_utf8(&bytes[start..start + nl]).map_err(|_| corrupt("header is not UTF-8"))?;
            start += nl + 1;
            if lines.is_empty() && line != MAGIC {
                return Err(corrupt("missing `sepll-checkpoint 1` magic line"));
            }
            if line == END {
                break start;
            }
            lines.push(line.to_string());
        };
        let payload = &bytes[payload_start..];
        if !payload.len().is_multiple_of(8) {
            return Err(corrupt("payload length is not a multiple of 8 bytes"));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(CheckpointReader {
            lines,
            pos: 1,
            data,
            dpos: 0,
        })
    }

    pub fn peek_name(&self) -> Option<&str> {
        self.lines.get(self.pos).and_then(|l| l.split_whitespace().next())
    }

    pub fn next_line(&mut self) -> Result<&str> {
        let line = self.lines.get(self.pos).ok_or_else(|| corrupt("unexpected end of header"))?;
        self.pos += 1;
        Ok(line)
    }

    pub fn expect(&mut self, name: &str) -> Result<HeaderLine> {
        let line = self.next_line()?.to_string();
        let mut parts = line.split_whitespace();
        let first = parts.next().unwrap_or_default();
        if first != name {
            return Err(corrupt(format!("expected `{name}` block, found `{first}`")));
        }
        let mut words = Vec::new();
        let mut fields = HashMap::new();
        for p in parts {
            match p.split_once('=') {
                Some((k, v)) => {
                    fields.insert(k.to_string(), v.to_string());
                }
                None => words.push(p.to_string()),
            }
        }
        Ok(HeaderLine {
            name: name.to_string(),
            words,
            fields,
        })
    }

    pub fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        let end = self.dpos + n;
        if end > self.data.len() {
            return Err(corrupt("payload shorter than header describes"));
        }
        let out = self.data[self.dpos..end].to_vec();
        self.dpos = end;
        Ok(out)
    }

    pub fn mlp(&mut self, name: &str) -> Result<(Mlp, HeaderLine)> {
        let head = self.expect(name)?;
        if head.words.first().map(String::as_str) != Some("mlp") {
            return Err(corrupt(format!("`{name}` is not an mlp block")));
        }
        let activation: Activation = head.get("nonlinearity")?.parse()?;
        let n_layers = head.get_usize("layers")?;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let l = self.expect("layer")?;
            shapes.push((l.get_usize("in")?, l.get_usize("out")?));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (in_dim, out_dim) in shapes {
            let weights = self.take(in_dim * out_dim)?;
            let bias = self.take(out_dim)?;
            layers.push(Dense {
                in_dim,
                out_dim,
                weights,
                bias,
            });
        }
        let net = Mlp::from_layers(layers, activation).map_err(corrupt)?;
        if net.layers.iter().any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite())) {
            return Err(corrupt(format!("`{name}` contains non-finite values")));
        }
        Ok((net, head))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.lines.len() {
            return Err(corrupt(format!("unexpected header line `{}`", self.lines[self.pos])));
        }
        if self.dpos != self.data.len() {
            return Err(corrupt("trailing payload values"));
        }
        Ok(())
    }
}

pub(crate) fn write_encoder_block(w: &mut CheckpointWriter, enc: &MlpEncoder) {
    w.mlp("encoder", enc.net(), &format!("d={}", enc.output_dim()));
}

pub(crate) fn read_encoder_block(r: &mut CheckpointReader) -> Result<MlpEncoder> {
    let (net, head) = r.mlp("encoder")?;
    if head.get_usize("d")? != net.output_dim() {
        return Err(corrupt("encoder `d` disagrees with its last layer"));
    }
    Ok(MlpEncoder::from_mlp(net))
}

pub fn write_encoder<W: Write>(enc: &MlpEncoder, w: W) -> std::io::Result<()> {
    let mut cw = CheckpointWriter::new();
    write_encoder_block(&mut cw, enc);
    cw.finish(w)
}

pub fn read_encoder<R: Read>(r: R) -> Result<MlpEncoder> {
    let mut cr = CheckpointReader::from_reader(r)?;
    let enc = read_encoder_block(&mut cr)?;
    cr.finish()?;
    Ok(enc)
}
