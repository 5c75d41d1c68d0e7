//! LETOR / SVMlight-with-qid text format.
//!
//! ```text
//! <label> qid:<token> <fid>:<value> <fid>:<value> ... [# comment]
//! ```
//!
//! Labels and values are finite decimal floats, feature ids are positive
//! integers in strictly increasing order, and absent features are 0. Blank
//! lines and lines starting with `#` are ignored. Items are grouped by qid,
//! groups ordered by first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use super::{DataError, QueryGroup, Result};

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Feature width; defaults to the largest feature id seen.
    pub num_features: Option<usize>,
}

struct Line {
    label: f64,
    qid: String,
    features: Vec<(usize, f64)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse { line, msg: msg.into() }
}

fn parse_float(tok: &str, what: &str, line: usize) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(line, format!("malformed {what} `{tok}`"))),
    }
}

fn parse_line(text: &str, line: usize) -> Result<Option<Line>> {
    let body = match text.find('#') {
        Some(i) => &text[..i],
        None => text,
    };
    let mut toks = body.split_whitespace();
    let Some(label) = toks.next() else {
        return Ok(None);
    };
    let label = parse_float(label, "label", line)?;
    let qid = toks
        .next()
        .and_then(|t| t.strip_prefix("qid:"))
        .filter(|q| !q.is_empty())
        .ok_or_else(|| parse_err(line, "expected `qid:<token>` after the label"))?
        .to_string();
    let mut features = Vec::new();
    let mut last = 0usize;
    for tok in toks {
        let (fid, value) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("expected `<fid>:<value>`, got `{tok}`")))?;
        if fid.is_empty() || !fid.bytes().all(|b| b.is_ascii_digit()) {
            return Err(parse_err(line, format!("malformed feature id `{fid}`")));
        }
        let fid: usize = fid
            .parse()
            .map_err(|_| parse_err(line, format!("feature id `{fid}` out of range")))?;
        if fid == 0 {
            return Err(parse_err(line, "feature ids start at 1"));
        }
        if fid == last {
            return Err(DataError::DuplicateFeature { line, fid });
        }
        if fid < last {
            return Err(parse_err(line, format!("feature id {fid} after {last}")));
        }
        last = fid;
        features.push((fid, parse_float(value, "feature value", line)?));
    }
    Ok(Some(Line { label, qid, features }))
}

/// Parses a whole LETOR stream.
pub fn parse_letor(reader: impl BufRead, opts: &ParseOptions) -> Result<Vec<QueryGroup>> {
    let mut lines: Vec<(usize, Line)> = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        if text.trim_start().starts_with('#') {
            continue;
        }
        if let Some(l) = parse_line(&text, i + 1)? {
            lines.push((i + 1, l));
        }
    }
    let max_fid = lines
        .iter()
        .filter_map(|(_, l)| l.features.last().map(|f| f.0))
        .max()
        .unwrap_or(0);
    let m = match opts.num_features {
        Some(m) => {
            if let Some((lineno, _)) = lines.iter().find(|(_, l)| l.features.last().is_some_and(|f| f.0 > m)) {
                return Err(parse_err(*lineno, format!("feature id beyond the width {m}")));
            }
            m
        }
        None => max_fid,
    };

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<QueryGroup> = Vec::new();
    for (_, l) in lines {
        let gi = *index.entry(l.qid.clone()).or_insert_with(|| {
            groups.push(QueryGroup::new(l.qid.clone(), Vec::new(), m, Vec::new()));
            groups.len() - 1
        });
        let group = &mut groups[gi];
        let start = group.features.len();
        group.features.resize(start + m, 0.0);
        for (fid, v) in l.features {
            group.features[start + fid - 1] = v;
        }
        group.labels.push(l.label);
        group.mask.push(true);
    }
    Ok(groups)
}

/// Reads a LETOR file, transparently decompressing gzip input.
pub fn read_letor_file(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Vec<QueryGroup>> {
    let mut file = BufReader::new(File::open(path)?);
    let magic = file.fill_buf()?;
    if magic.starts_with(&[0x1f, 0x8b]) {
        let mut text = Vec::new();
        MultiGzDecoder::new(file).read_to_end(&mut text)?;
        parse_letor(&text[..], opts)
    } else {
        parse_letor(file, opts)
    }
}

/// Writes the real items of every group with dense feature ids `1..=m`.
pub fn write_letor(groups: &[QueryGroup], mut w: impl Write) -> std::io::Result<()> {
    for g in groups {
        for i in (0..g.len()).filter(|&i| g.mask[i]) {
            write!(w, "{} qid:{}", g.labels[i], g.qid)?;
            for (f, v) in g.row(i).iter().enumerate() {
                write!(w, " {}:{}", f + 1, v)?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
