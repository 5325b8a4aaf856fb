//! Shared plumbing for the plain-text-header file formats (VTV1, VTW1) and the
//! line-oriented text formats (VTC1, VTE1).

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Split a byte buffer into its text header lines (up to the first blank line)
/// and the binary payload that follows.
pub(crate) fn split_header<'a>(
    format: &'static str,
    bytes: &'a [u8],
) -> Result<(Vec<String>, &'a [u8])> {
    let mut lines = Vec::new();
    let mut pos = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::header(format, "header is not terminated by a blank line"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::header(format, "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        pos += end + 1;
        if line.is_empty() {
            return Ok((lines, &bytes[pos..]));
        }
        lines.push(line.to_string());
    }
}

pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    std::io::BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Parse `key v1 v2 ...` into the values after the expected key.
pub(crate) fn keyed<'a>(format: &'static str, line: &'a str, key: &str) -> Result<Vec<&'a str>> {
    let mut it = line.split_whitespace();
    match it.next() {
        Some(k) if k == key => Ok(it.collect()),
        _ => Err(Error::header(
            format,
            format!("expected `{key}`, found `{line}`"),
        )),
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(format: &'static str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::header(format, format!("cannot parse number `{s}`")))
}

pub(crate) fn parse_triple<T: std::str::FromStr + Copy>(
    format: &'static str,
    vals: &[&str],
) -> Result<[T; 3]> {
    if vals.len() != 3 {
        return Err(Error::header(
            format,
            format!("expected 3 values, found {}", vals.len()),
        ));
    }
    Ok([
        parse_num(format, vals[0])?,
        parse_num(format, vals[1])?,
        parse_num(format, vals[2])?,
    ])
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    out.reserve(vals.len() * 4);
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn take_f32s(
    format: &'static str,
    payload: &mut &[u8],
    count: usize,
) -> Result<Vec<f32>> {
    let need = count * 4;
    if payload.len() < need {
        return Err(Error::Truncated {
            format,
            expected: need,
            found: payload.len(),
        });
    }
    let (head, rest) = payload.split_at(need);
    *payload = rest;
    Ok(head
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Shortest decimal that round-trips the f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
