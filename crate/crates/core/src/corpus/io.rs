//! Tab-separated dataset files: one record per line, tokens space-joined.

use std::fmt::Write as _;
use std::path::Path;

use super::clicks::ClickLog;
use super::golden::GoldenSet;
use super::queries::{QueryRecord, Tier};
use super::vocab::{Text, Vocab};
use super::world::RelevanceLabel;
use crate::util::fmt_f64;
use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { file: path.display().to_string(), line, msg: msg.into() }
}

/// Reads `path` and splits each non-empty, non-`#` line into exactly `n` fields.
pub fn read_rows(path: &Path, n: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let content = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != n {
            return Err(parse_err(path, i + 1, format!("expected {n} fields, found {}", fields.len())));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| parse_err(path, line, format!("`{s}` is not a number")))
}

pub fn write_pairs(path: &Path, vocab: &Vocab, rows: &[(Text, Text)]) -> Result<()> {
    let mut out = String::new();
    for (a, b) in rows {
        let _ = writeln!(out, "{}\t{}", vocab.decode(a), vocab.decode(b));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_pairs(path: &Path, vocab: &Vocab) -> Result<Vec<(Text, Text)>> {
    Ok(read_rows(path, 2)?
        .into_iter()
        .map(|(_, f)| (vocab.encode(&f[0]), vocab.encode(&f[1])))
        .collect())
}

pub fn write_relevance(path: &Path, vocab: &Vocab, rows: &[(Text, Text, RelevanceLabel)]) -> Result<()> {
    let mut out = String::new();
    for (q, b, l) in rows {
        let _ = writeln!(out, "{}\t{}\t{}", vocab.decode(q), vocab.decode(b), l.name());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_relevance(path: &Path, vocab: &Vocab) -> Result<Vec<(Text, Text, RelevanceLabel)>> {
    read_rows(path, 3)?
        .into_iter()
        .map(|(line, f)| {
            let label = RelevanceLabel::parse(&f[2]).ok_or_else(|| parse_err(path, line, format!("unknown label `{}`", f[2])))?;
            Ok((vocab.encode(&f[0]), vocab.encode(&f[1]), label))
        })
        .collect()
}

pub fn write_labelled(path: &Path, vocab: &Vocab, rows: &[(Text, u8)]) -> Result<()> {
    let mut out = String::new();
    for (t, y) in rows {
        let _ = writeln!(out, "{}\t{y}", vocab.decode(t));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_labelled(path: &Path, vocab: &Vocab) -> Result<Vec<(Text, u8)>> {
    read_rows(path, 2)?
        .into_iter()
        .map(|(line, f)| match f[1].as_str() {
            "0" => Ok((vocab.encode(&f[0]), 0)),
            "1" => Ok((vocab.encode(&f[0]), 1)),
            other => Err(parse_err(path, line, format!("label `{other}` is not 0/1"))),
        })
        .collect()
}

pub fn write_values(path: &Path, vocab: &Vocab, rows: &[(Text, f64)]) -> Result<()> {
    let mut out = String::new();
    for (t, v) in rows {
        let _ = writeln!(out, "{}\t{}", vocab.decode(t), fmt_f64(*v));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_values(path: &Path, vocab: &Vocab) -> Result<Vec<(Text, f64)>> {
    read_rows(path, 2)?
        .into_iter()
        .map(|(line, f)| Ok((vocab.encode(&f[0]), parse_f64(path, line, &f[1])?)))
        .collect()
}

/// One line per query: the query followed by its ranked golden bidwords.
pub fn write_golden(path: &Path, vocab: &Vocab, golden: &GoldenSet) -> Result<()> {
    let mut out = String::new();
    for (q, bs) in golden {
        out.push_str(&vocab.decode(q));
        for b in bs {
            out.push('\t');
            out.push_str(&vocab.decode(b));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_golden(path: &Path, vocab: &Vocab) -> Result<GoldenSet> {
    let content = std::fs::read_to_string(path)?;
    let mut golden = GoldenSet::new();
    for (i, line) in content.lines().enumerate() {
        let mut fields = line.split('\t');
        let Some(q) = fields.next().filter(|q| !q.is_empty()) else { continue };
        let bs: Vec<Text> = fields.map(|b| vocab.encode(b)).collect();
        if bs.is_empty() {
            return Err(parse_err(path, i + 1, "golden query without bidwords"));
        }
        golden.insert(vocab.encode(q), bs);
    }
    Ok(golden)
}

pub fn write_queries(path: &Path, vocab: &Vocab, logs: &ClickLog) -> Result<()> {
    let mut out = String::new();
    for q in &logs.queries {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", vocab.decode(&q.text), q.frequency, q.intent_category, q.tier.name());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_queries(path: &Path, vocab: &Vocab) -> Result<Vec<QueryRecord>> {
    read_rows(path, 4)?
        .into_iter()
        .map(|(line, f)| {
            let num = |s: &str| s.parse::<u64>().map_err(|_| parse_err(path, line, format!("`{s}` is not an integer")));
            Ok(QueryRecord {
                text: vocab.encode(&f[0]),
                frequency: num(&f[1])?,
                intent_category: num(&f[2])? as usize,
                tier: Tier::parse(&f[3]).ok_or_else(|| parse_err(path, line, format!("unknown tier `{}`", f[3])))?,
            })
        })
        .collect()
}

pub fn write_clicks(path: &Path, vocab: &Vocab, logs: &ClickLog) -> Result<()> {
    let mut out = String::new();
    for r in &logs.records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            vocab.decode(&r.query),
            vocab.decode(&r.bidword),
            r.product,
            r.impressions,
            r.clicks,
            fmt_f64(r.revenue)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut out = vocab.words().join("\n");
    out.push('\n');
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let content = std::fs::read_to_string(path)?;
    Ok(Vocab::from_words(content.lines().map(str::to_string).collect()))
}
