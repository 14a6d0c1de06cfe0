//! Plain-text formats for index streams, features, codebooks, memories and reports.
//!
//! Index streams: integers separated by commas or whitespace, any number per line.
//! Chunk lists: one comma-separated chunk per line.
//! Feature matrices: one comma-separated frame per line.
//! Codebook: a `M,d,seed` header line followed by M prototype rows.
//! Memory: a `t,T,U` header, U lines of 0-based rank patterns, then T repository chunks.
//! Blank lines and lines starting with `#` are skipped everywhere.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::chunk::{IndexChunk, IndexSequence, RankChunk};
use crate::error::{Error, Result};
use crate::generator::GenerationTrace;
use crate::harness::CompressionTable;
use crate::memory::RankMemory;
use crate::novelty::DetectionTable;
use crate::quantizer::Codebook;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_fields<T: FromStr>(line: usize, text: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .map(|f| f.parse::<T>().map_err(|e| parse_err(line, format!("{f:?}: {e}"))))
        .collect()
}

fn join<T: Display>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn parse_index_sequence(text: &str) -> Result<IndexSequence> {
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        out.extend(parse_fields::<usize>(line, l)?);
    }
    Ok(out)
}

pub fn write_index_sequence(mut w: impl Write, seq: &[usize]) -> Result<()> {
    for v in seq {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn parse_chunks(text: &str) -> Result<Vec<IndexChunk>> {
    let mut out: Vec<IndexChunk> = Vec::new();
    for (line, l) in content_lines(text) {
        let values = parse_fields::<usize>(line, l)?;
        if let Some(first) = out.first() {
            if first.len() != values.len() {
                return Err(parse_err(
                    line,
                    format!("chunk of length {} after chunks of length {}", values.len(), first.len()),
                ));
            }
        }
        out.push(IndexChunk::new(values));
    }
    Ok(out)
}

pub fn write_chunks(mut w: impl Write, chunks: &[IndexChunk]) -> Result<()> {
    for c in chunks {
        writeln!(w, "{c}")?;
    }
    Ok(())
}

pub fn parse_features(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (line, l) in content_lines(text) {
        let row = parse_fields::<f64>(line, l)?;
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(line, format!("non-finite value {v}")));
        }
        if out.first().is_some_and(|f| f.len() != row.len()) {
            return Err(parse_err(line, format!("expected {} columns, got {}", out[0].len(), row.len())));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_features(mut w: impl Write, frames: &[Vec<f64>]) -> Result<()> {
    for f in frames {
        writeln!(w, "{}", join(f))?;
    }
    Ok(())
}

pub fn parse_codebook(text: &str) -> Result<Codebook> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing codebook header"))?;
    let head = parse_fields::<u64>(hline, header)?;
    let [m, d, seed] = head[..] else {
        return Err(parse_err(hline, "header must be M,d,seed"));
    };
    let mut rows = Vec::with_capacity(m as usize);
    for (line, l) in lines {
        let row = parse_fields::<f64>(line, l)?;
        if row.len() as u64 != d {
            return Err(parse_err(line, format!("expected {d} columns, got {}", row.len())));
        }
        rows.push(row);
    }
    if rows.len() as u64 != m {
        return Err(parse_err(hline, format!("header declares {m} prototypes, found {}", rows.len())));
    }
    Codebook::from_rows(rows, seed)
}

/// Floats are written in shortest round-trip form, so a reload is bit-exact.
pub fn write_codebook(mut w: impl Write, codebook: &Codebook) -> Result<()> {
    writeln!(w, "{},{},{}", codebook.neurons(), codebook.dim(), codebook.seed())?;
    for row in codebook.rows() {
        writeln!(w, "{}", join(row))?;
    }
    Ok(())
}

pub fn parse_memory(text: &str) -> Result<RankMemory> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing memory header"))?;
    let head = parse_fields::<usize>(hline, header)?;
    let [t, total, unique] = head[..] else {
        return Err(parse_err(hline, "header must be t,T,U"));
    };
    let mut ranks = Vec::with_capacity(unique);
    let mut repository = Vec::with_capacity(total);
    for (line, l) in lines {
        let values = parse_fields::<usize>(line, l)?;
        if values.len() != t {
            return Err(parse_err(line, format!("expected {t} values, got {}", values.len())));
        }
        if ranks.len() < unique {
            ranks.push(RankChunk::from_ranks(values).map_err(|e| parse_err(line, e.to_string()))?);
        } else {
            repository.push(IndexChunk::new(values));
        }
    }
    if ranks.len() != unique || repository.len() != total {
        return Err(parse_err(
            hline,
            format!(
                "header declares {unique} patterns and {total} chunks, found {} and {}",
                ranks.len(),
                repository.len()
            ),
        ));
    }
    RankMemory::from_parts(t, ranks, repository)
}

pub fn write_memory(mut w: impl Write, memory: &RankMemory) -> Result<()> {
    writeln!(w, "{},{},{}", memory.chunk_length(), memory.len(), memory.pattern_count())?;
    for r in memory.unique_ranks() {
        writeln!(w, "{}", join(r.ranks()))?;
    }
    write_chunks(w, memory.repository())
}

/// Comma-separated table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<T: Display>(&mut self, row: impl IntoIterator<Item = T>) {
        self.rows.push(row.into_iter().map(|v| v.to_string()).collect());
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("no column named {name:?}")))
    }

    /// Parses every value of a column.
    pub fn column<T: FromStr>(&self, name: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let k = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[k].parse::<T>().map_err(|e| parse_err(i + 2, format!("{name} = {:?}: {e}", r[k])))
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let Some((_, header)) = lines.next() else {
            return Ok(Self::default());
        };
        let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (line, l) in lines {
            let row: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(parse_err(line, format!("expected {} fields, got {}", header.len(), row.len())));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("csv text is utf-8")
    }
}

pub fn detection_csv(table: &DetectionTable) -> CsvTable {
    let mut csv = CsvTable::new(&["n_swaps", "index_fp_pct", "index_fn_pct", "rank_fp_pct", "rank_fn_pct", "trials"]);
    for r in &table.rows {
        csv.push([
            r.n_swaps.to_string(),
            r.index_fp_pct.to_string(),
            r.index_fn_pct.to_string(),
            r.rank_fp_pct.to_string(),
            r.rank_fn_pct.to_string(),
            r.trials.to_string(),
        ]);
    }
    csv
}

pub fn compression_csv(table: &CompressionTable) -> CsvTable {
    let mut csv = CsvTable::new(&[
        "frame_count",
        "minutes",
        "chunk_length",
        "window_count",
        "unique_frame_count",
        "unique_index_chunk_count",
        "unique_rank_chunk_count",
    ]);
    for r in &table.rows {
        csv.push([
            r.frame_count.to_string(),
            format!("{:.4}", crate::harness::frames_to_minutes(r.frame_count)),
            r.chunk_length.to_string(),
            r.window_count.to_string(),
            r.unique_frame_count.to_string(),
            r.unique_index_chunk_count.to_string(),
            r.unique_rank_chunk_count.to_string(),
        ]);
    }
    csv
}

/// One row per accepted candidate of every step.
pub fn trace_csv(trace: &GenerationTrace) -> CsvTable {
    let mut csv = CsvTable::new(&[
        "step",
        "iteration",
        "winner_id",
        "recall_score",
        "score",
        "hamming_error",
        "converged",
        "iterations_used",
    ]);
    for s in &trace.steps {
        for a in &s.acceptances {
            csv.push([
                s.step.to_string(),
                a.iteration.to_string(),
                a.winner_id.to_string(),
                a.recall_score.to_string(),
                a.score.to_string(),
                a.hamming_error.to_string(),
                s.converged.to_string(),
                s.iterations_used.to_string(),
            ]);
        }
    }
    csv
}
