//! File formats: innings score lists, TSV summaries, and the JSON
//! archive that captures a finished fit.
//!
//! Score lists are one innings per line in chronological order, the
//! run count in ASCII digits with a trailing `*` marking a not-out
//! (`45*`). Blank lines are skipped and `#` starts a comment, either
//! on its own line or after a score.

use crate::model::{Career, Innings, ModelError};
use crate::predict::{Comparison, NuCurve};
use crate::sampler::{NsConfig, NsResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const ARCHIVE_FORMAT: &str = "crease-fit";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {reason}: {content:?}")]
    BadLine { line: usize, reason: &'static str, content: String },
    #[error("no innings found in input")]
    NoInnings,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("archive is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a fit archive (format field is {found:?})")]
    WrongFormat { found: String },
    #[error("archive version {found} is not supported (this build reads version {ARCHIVE_VERSION})")]
    WrongVersion { found: u32 },
}

/// Parse a score list into a career.
pub fn parse_scores(text: &str, player_id: &str) -> Result<Career, IoError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut innings = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let data = raw.split('#').next().unwrap_or("").trim();
        if data.is_empty() {
            continue;
        }
        let (digits, dismissed) = match data.strip_suffix('*') {
            Some(rest) => (rest.trim_end(), false),
            None => (data, true),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(IoError::BadLine {
                line,
                reason: "expected a run count, optionally followed by *",
                content: raw.to_string(),
            });
        }
        let score: u32 = digits.parse().map_err(|_| IoError::BadLine {
            line,
            reason: "run count does not fit in 32 bits",
            content: raw.to_string(),
        })?;
        innings.push(Innings { score, dismissed });
    }
    if innings.is_empty() {
        return Err(IoError::NoInnings);
    }
    Ok(Career::new(player_id, innings)?)
}

/// Read and parse a score file; the file stem is not consulted, the
/// caller chooses the player id.
pub fn read_scores(path: &Path, player_id: &str) -> Result<Career, IoError> {
    let text = fs::read_to_string(path)?;
    parse_scores(&text, player_id)
}

/// Render a career back into score-list form.
pub fn emit_scores(career: &Career) -> String {
    let mut out = String::new();
    for i in career.innings() {
        let marker = if i.dismissed { "" } else { "*" };
        writeln!(out, "{}{}", i.score, marker).expect("string write");
    }
    out
}

/// The conventional batting average: runs per dismissal. `None` for a
/// career with no dismissals.
pub fn career_average(career: &Career) -> Option<f64> {
    match career.dismissals() {
        0 => None,
        d => Some(career.total_runs() as f64 / d as f64),
    }
}

/// Everything needed to reproduce and reuse a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArchive {
    pub format: String,
    pub version: u32,
    pub player_id: String,
    pub career: Career,
    pub config: NsConfig,
    pub result: NsResult,
    /// Unix seconds at archive creation; `SOURCE_DATE_EPOCH`
    /// overrides the clock so archives can be byte-reproducible.
    pub created_unix: u64,
    pub app_version: String,
}

impl FitArchive {
    pub fn new(career: Career, config: NsConfig, result: NsResult) -> Self {
        let created_unix = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        FitArchive {
            format: ARCHIVE_FORMAT.to_string(),
            version: ARCHIVE_VERSION,
            player_id: career.player_id().to_string(),
            career,
            config,
            result,
            created_unix,
            app_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn write_fit(path: &Path, archive: &FitArchive) -> Result<(), IoError> {
    let file = fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, archive)?;
    use std::io::Write as _;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_fit(path: &Path) -> Result<FitArchive, IoError> {
    let file = fs::File::open(path)?;
    let archive: FitArchive = serde_json::from_reader(std::io::BufReader::new(file))?;
    if archive.format != ARCHIVE_FORMAT {
        return Err(IoError::WrongFormat { found: archive.format });
    }
    if archive.version != ARCHIVE_VERSION {
        return Err(IoError::WrongVersion { found: archive.version });
    }
    Ok(archive)
}

/// Quantile-summary table: `innings  median  low  high`.
pub fn emit_nu_curve_tsv(curve: &NuCurve) -> String {
    let mut out = String::from("innings\tnu_median\tnu_low\tnu_high\n");
    for (i, &t) in curve.t.iter().enumerate() {
        writeln!(
            out,
            "{t}\t{:.6}\t{:.6}\t{:.6}",
            curve.median[i], curve.band_low[i], curve.band_high[i]
        )
        .expect("string write");
    }
    out
}

/// Long-format table of retained per-draw trajectories:
/// `draw  innings  nu`. Empty if the curve kept no samples.
pub fn emit_sample_curves_tsv(curve: &NuCurve) -> Option<String> {
    let curves = curve.sample_curves.as_ref()?;
    let mut out = String::from("draw\tinnings\tnu\n");
    for (d, c) in curves.iter().enumerate() {
        for (i, &t) in curve.t.iter().enumerate() {
            writeln!(out, "{d}\t{t}\t{:.6}", c[i]).expect("string write");
        }
    }
    Some(out)
}

/// Key-value table summarising a head-to-head comparison.
pub fn emit_comparison_tsv(name_a: &str, name_b: &str, cmp: &Comparison) -> String {
    let mut out = String::from("metric\tvalue\n");
    writeln!(out, "player_a\t{name_a}").expect("string write");
    writeln!(out, "player_b\t{name_b}").expect("string write");
    writeln!(out, "expected_margin\t{:.6}", cmp.expected_margin).expect("string write");
    writeln!(out, "p_outscore\t{:.6}", cmp.p_outscore).expect("string write");
    writeln!(out, "p_tie\t{:.6}", cmp.p_tie).expect("string write");
    writeln!(out, "p_outscored\t{:.6}", cmp.p_outscored).expect("string write");
    writeln!(out, "n_pairs\t{}", cmp.n_pairs).expect("string write");
    out
}
