//! CSV and JSON output with self-describing `#` headers.
//!
//! Numeric cells use Rust's shortest round-trip float formatting, so a value
//! read back parses to the identical bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcsolve::{Jump, TrajectoryRecord};
use crate::model::ChannelTag;

/// Header block written before the column names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvMeta {
    pub model_hash: String,
    /// Echoed verbatim, one `# config:` line per input line.
    pub config_text: String,
    /// Further `# key: value` lines.
    pub extra: Vec<(String, String)>,
}

impl CsvMeta {
    pub fn new(model_hash: impl Into<String>, config_text: impl Into<String>) -> Self {
        Self {
            model_hash: model_hash.into(),
            config_text: config_text.into(),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.extra.push((key.into(), value.to_string()));
        self
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# model_hash: {}", self.model_hash)?;
        for (k, v) in &self.extra {
            writeln!(w, "# {k}: {v}")?;
        }
        for line in self.config_text.lines() {
            writeln!(w, "# config: {line}")?;
        }
        Ok(())
    }
}

/// Round-trip formatting for numeric cells.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("malformed CSV: {other:?}")),
    }
}

/// Write `meta`, the column names and then the rows.
pub fn write_csv<W: Write>(
    out: W,
    meta: &CsvMeta,
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = BufWriter::new(out);
    meta.write_to(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns).map_err(csv_err)?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                actual: row.len(),
            });
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(
    path: &Path,
    meta: &CsvMeta,
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    write_csv(File::create(path)?, meta, columns, rows)
}

/// Numeric table: a column per series, all of equal length.
pub fn write_columns(path: &Path, meta: &CsvMeta, columns: &[&str], data: &[&[f64]]) -> Result<()> {
    let n = data.first().map_or(0, |c| c.len());
    if let Some(bad) = data.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    write_csv_file(
        path,
        meta,
        columns,
        (0..n).map(|i| data.iter().map(|c| fmt_f64(c[i])).collect()),
    )
}

/// One line of a jump-record file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRow {
    pub traj_index: usize,
    pub seed: u64,
    pub t_jump_s: f64,
    #[serde(with = "tag_text")]
    pub channel_tag: ChannelTag,
}

mod tag_text {
    use super::ChannelTag;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &ChannelTag, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(t)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ChannelTag, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl JumpRow {
    pub fn from_records(records: &[TrajectoryRecord]) -> Vec<JumpRow> {
        records
            .iter()
            .flat_map(|r| {
                r.jumps.iter().map(move |j| JumpRow {
                    traj_index: r.index,
                    seed: r.seed,
                    t_jump_s: j.time,
                    channel_tag: j.tag,
                })
            })
            .collect()
    }

    pub fn jump(&self) -> Jump {
        Jump {
            time: self.t_jump_s,
            tag: self.channel_tag,
        }
    }
}

pub const JUMP_COLUMNS: [&str; 4] = ["traj_index", "seed", "t_jump_s", "channel_tag"];

pub fn write_jumps<W: Write>(out: W, meta: &CsvMeta, rows: &[JumpRow]) -> Result<()> {
    write_csv(
        out,
        meta,
        &JUMP_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.traj_index.to_string(),
                r.seed.to_string(),
                fmt_f64(r.t_jump_s),
                r.channel_tag.to_string(),
            ]
        }),
    )
}

/// Parse a jump-record file, skipping `#` header lines.
pub fn read_jumps(input: impl std::io::Read) -> Result<Vec<JumpRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(JUMP_COLUMNS) {
        return Err(Error::Config(format!(
            "jump file columns {headers:?} differ from {JUMP_COLUMNS:?}"
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_then_columns() {
        let meta = CsvMeta::new("abc", "[pump]\nr0 = \"1e13 Hz\"").with("fwhm_nm", 0.01);
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &meta,
            &["a", "b"],
            vec![vec![fmt_f64(1.5), fmt_f64(-2e-12)]],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# model_hash: abc\n# fwhm_nm: 0.01\n# config: [pump]\n# config: r0 = \"1e13 Hz\"\na,b\n1.5e0,-2e-12\n"
        );
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = write_csv(
            Vec::new(),
            &CsvMeta::default(),
            &["a", "b"],
            vec![vec!["1".into()]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn jumps_round_trip_bit_exact() {
        let rows = vec![
            JumpRow {
                traj_index: 0,
                seed: u64::MAX,
                t_jump_s: 1.234_567_890_123_456_7e-11,
                channel_tag: ChannelTag::CavityOut,
            },
            JumpRow {
                traj_index: 3,
                seed: 42,
                t_jump_s: 0.1 + 0.2,
                channel_tag: ChannelTag::Radiative(4),
            },
            JumpRow {
                traj_index: 3,
                seed: 42,
                t_jump_s: 5e-10,
                channel_tag: ChannelTag::Phonon(2),
            },
        ];
        let mut buf = Vec::new();
        write_jumps(&mut buf, &CsvMeta::new("h", "x = 1"), &rows).unwrap();
        let back = read_jumps(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn wrong_columns_rejected() {
        let err = read_jumps("a,b\n1,2\n".as_bytes()).unwrap_err();
        assert!(err.is_config_error());
    }
}
