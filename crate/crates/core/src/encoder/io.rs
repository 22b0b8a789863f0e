//! Flat named-tensor weight files: a text header listing every tensor's
//! name and shape, a line `end`, then all values as little-endian f64 in
//! header order.

use std::io::{BufRead, Write};

use super::network::{Architecture, Encoder, NormStats};
use crate::error::{Error, Result};

const MAGIC: &str = "ppgrisk-weights v1";

fn running_names(enc: &Encoder) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for (b, &c) in enc.arch.channels.iter().enumerate() {
        for n in 1..=2 {
            out.push((format!("block{b}.norm{n}.running_mean"), c));
            out.push((format!("block{b}.norm{n}.running_var"), c));
        }
    }
    out
}

pub fn write_weights<W: Write>(mut w: W, enc: &Encoder) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "input_length {}", enc.arch.input_length)?;
    let ch: Vec<String> = enc.arch.channels.iter().map(|c| c.to_string()).collect();
    writeln!(w, "channels {}", ch.join(" "))?;
    writeln!(w, "kernel_size {}", enc.arch.kernel_size)?;
    writeln!(w, "embedding_dim {}", enc.arch.embedding_dim)?;
    for t in enc.tensors() {
        let shape: Vec<String> = t.shape.iter().map(|s| s.to_string()).collect();
        writeln!(w, "tensor {} {}", t.name, shape.join(" "))?;
    }
    for (name, c) in running_names(enc) {
        writeln!(w, "tensor {name} {c}")?;
    }
    writeln!(w, "end")?;
    let mut buf = Vec::with_capacity(8 * (enc.params.len() + 4 * enc.norms.len()));
    for v in &enc.params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for st in &enc.norms {
        for v in st.mean.iter().chain(&st.var) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

pub fn read_weights<R: BufRead>(mut r: R) -> Result<Encoder> {
    let bad = |m: String| Error::invalid(format!("weights file: {m}"));
    let mut line = String::new();
    let mut next = |r: &mut R| -> Result<String> {
        line.clear();
        r.read_line(&mut line).map_err(|e| Error::io("weights", e))?;
        Ok(line.trim_end().to_string())
    };
    if next(&mut r)? != MAGIC {
        return Err(bad("missing header".into()));
    }
    let mut arch = Architecture::default();
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        let l = next(&mut r)?;
        if l.is_empty() {
            return Err(bad("header ended early".into()));
        }
        if l == "end" {
            break;
        }
        let mut parts = l.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let nums = |p: std::str::SplitWhitespace<'_>| -> Result<Vec<usize>> {
            p.map(|v| v.parse().map_err(|_| bad(format!("bad integer {v:?}")))).collect()
        };
        match key {
            "input_length" => arch.input_length = *nums(parts)?.first().ok_or_else(|| bad("empty".into()))?,
            "channels" => arch.channels = nums(parts)?,
            "kernel_size" => arch.kernel_size = *nums(parts)?.first().ok_or_else(|| bad("empty".into()))?,
            "embedding_dim" => arch.embedding_dim = *nums(parts)?.first().ok_or_else(|| bad("empty".into()))?,
            "tensor" => {
                let name = parts.next().ok_or_else(|| bad("tensor without name".into()))?.to_string();
                shapes.push((name, nums(parts)?));
            }
            other => return Err(bad(format!("unknown header key {other}"))),
        }
    }
    let mut enc = Encoder::zeros(&arch)?;
    let expected: Vec<(String, Vec<usize>)> = enc
        .tensors()
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .chain(running_names(&enc).into_iter().map(|(n, c)| (n, vec![c])))
        .collect();
    if shapes != expected {
        return Err(bad("tensor list does not match the declared architecture".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("weights", e))?;
    let total = enc.params.len() + enc.norms.iter().map(|n| 2 * n.mean.len()).sum::<usize>();
    if bytes.len() != 8 * total {
        return Err(bad(format!("expected {} bytes of values, found {}", 8 * total, bytes.len())));
    }
    let mut vals = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for p in enc.params.iter_mut() {
        *p = vals.next().expect("length checked");
    }
    for st in enc.norms.iter_mut() {
        let c = st.mean.len();
        let mean = vals.by_ref().take(c).collect();
        let var = vals.by_ref().take(c).collect();
        *st = NormStats { mean, var };
    }
    Ok(enc)
}
