//! Score files: `timestamp,nonconformity,p_value,final_score,flagged`, floats
//! with 9 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use streamad::ScoreRecord;

use crate::error::{IoError, Result};

pub const SCORE_HEADER: [&str; 5] = ["timestamp", "nonconformity", "p_value", "final_score", "flagged"];

const SIGNIFICANT: i32 = 9;

/// `x` with 9 significant digits, trailing zeros removed, in fixed notation
/// for decimal exponents in `[-5, 9)` and scientific notation otherwise.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (SIGNIFICANT - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..SIGNIFICANT).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (SIGNIFICANT - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` after a round trip through [`format_sig`].
pub fn quantize(x: f64) -> f64 {
    format_sig(x).parse().expect("formatted float parses")
}

/// The persisted fields of a record; `ks_significance` is not stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRow {
    pub timestamp: i64,
    pub nonconformity: f64,
    pub p_value: f64,
    pub final_score: f64,
    pub flagged: bool,
}

impl From<&ScoreRecord> for ScoreRow {
    fn from(r: &ScoreRecord) -> Self {
        Self {
            timestamp: r.timestamp,
            nonconformity: r.nonconformity,
            p_value: r.p_value,
            final_score: r.final_score,
            flagged: r.flagged,
        }
    }
}

impl ScoreRow {
    /// The row as it reads back after writing.
    pub fn quantized(&self) -> Self {
        Self {
            nonconformity: quantize(self.nonconformity),
            p_value: quantize(self.p_value),
            final_score: quantize(self.final_score),
            ..*self
        }
    }

    /// A record for metric computation; `ks_significance` reads as NaN.
    pub fn to_record(&self) -> ScoreRecord {
        ScoreRecord {
            timestamp: self.timestamp,
            nonconformity: self.nonconformity,
            p_value: self.p_value,
            ks_significance: f64::NAN,
            final_score: self.final_score,
            flagged: self.flagged,
        }
    }
}

pub fn write_scores_to(mut out: impl Write, records: &[ScoreRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", SCORE_HEADER.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.timestamp,
            format_sig(r.nonconformity),
            format_sig(r.p_value),
            format_sig(r.final_score),
            u8::from(r.flagged)
        )?;
    }
    out.flush()
}

pub fn write_scores(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    write_scores_to(std::io::BufWriter::new(file), records).map_err(|e| IoError::io(path, e))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IoError::data(path, None, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| IoError::data(path, Some(1), e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != SCORE_HEADER {
        return Err(IoError::data(
            path,
            Some(1),
            format!("expected header `{}`", SCORE_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| IoError::data(path, Some(line), e.to_string()))?;
        let bad = |what: &str| IoError::data(path, Some(line), format!("bad {what}"));
        let num = |c: usize, what: &str| -> Result<f64> {
            rec.get(c).and_then(|s| s.parse().ok()).ok_or_else(|| bad(what))
        };
        rows.push(ScoreRow {
            timestamp: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("timestamp"))?,
            nonconformity: num(1, "nonconformity")?,
            p_value: num(2, "p_value")?,
            final_score: num(3, "final_score")?,
            flagged: match rec.get(4) {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(bad("flagged")),
            },
        });
    }
    Ok(rows)
}
