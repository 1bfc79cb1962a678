//! File formats: 16-bit PGM and CSV images, raw float streams with a text
//! sidecar, and JSON decode reports.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decode::{RecoveredImage, SpectralSets};
use crate::error::{Error, Result};
use crate::plan::Mode;
use crate::sensor::{PdSide, SampleStream};

/// Writes values in `[0, 1]` (clamped) as a binary 16-bit PGM.
pub fn write_pgm16<W: Write>(
    mut out: W,
    columns: usize,
    rows: usize,
    values: &[f64],
) -> Result<()> {
    if values.len() != columns * rows {
        return Err(Error::DimensionMismatch {
            expected: format!("{columns}x{rows}"),
            found: values.len().to_string(),
        });
    }
    write!(out, "P5\n{columns} {rows}\n65535\n")?;
    let mut buf = Vec::with_capacity(values.len() * 2);
    for v in values {
        let x = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&x.to_be_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn pgm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && tok.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(tok)
}

/// Reads a binary PGM (8 or 16 bit) into values scaled to `[0, 1]`.
pub fn read_pgm<R: Read>(input: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = BufReader::new(input);
    if pgm_token(&mut r)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let num = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let columns = num(pgm_token(&mut r)?)?;
    let rows = num(pgm_token(&mut r)?)?;
    let maxval = num(pgm_token(&mut r)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    let wide = maxval > 255;
    let mut data = vec![0u8; columns * rows * if wide { 2 } else { 1 }];
    r.read_exact(&mut data)
        .map_err(|_| Error::Format("truncated PGM raster".into()))?;
    let values = if wide {
        data.chunks(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / maxval as f64)
            .collect()
    } else {
        data.iter().map(|&b| b as f64 / maxval as f64).collect()
    };
    Ok((columns, rows, values))
}

/// Display mapping for dynamic-range images: `floor_db` below the peak maps to 0.
pub fn log_render(values: &[f64], floor_db: f64) -> Vec<f64> {
    let peak = values.iter().copied().fold(0.0, f64::max);
    values
        .iter()
        .map(|&v| {
            if peak <= 0.0 || v <= 0.0 {
                return 0.0;
            }
            let db = 20.0 * (v / peak).log10();
            ((db + floor_db) / floor_db).clamp(0.0, 1.0)
        })
        .collect()
}

pub fn write_grid_csv<W: Write>(mut out: W, columns: usize, values: &[f64]) -> Result<()> {
    for row in values.chunks(columns) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a rectangular CSV of numbers; returns `(columns, rows, values)`.
pub fn read_grid_csv(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut values = Vec::new();
    let mut columns = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad number {s:?}", i + 1)))
            })
            .collect::<Result<_>>()?;
        match columns {
            None => columns = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Format(format!(
                    "line {}: {} columns, expected {c}",
                    i + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok((columns.unwrap_or(0), rows, values))
}

/// Text sidecar describing a raw stream file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSidecar {
    pub format: String,
    pub rate: f64,
    pub length: usize,
    pub bits: usize,
    pub samples_per_bit: usize,
    pub side: PdSide,
}

const STREAM_FORMAT: &str = "f32-le";

/// Sidecar path for a raw stream: `<raw>.toml`.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Writes little-endian `f32` samples plus the sidecar next to them.
pub fn write_stream(raw: &Path, stream: &SampleStream) -> Result<()> {
    let mut bytes = Vec::with_capacity(stream.len() * 4);
    for &x in &stream.samples {
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    fs::write(raw, bytes)?;
    let meta = StreamSidecar {
        format: STREAM_FORMAT.into(),
        rate: stream.rate,
        length: stream.len(),
        bits: stream.bits,
        samples_per_bit: stream.samples_per_bit,
        side: stream.side,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(raw), text)?;
    Ok(())
}

pub fn read_stream(raw: &Path) -> Result<SampleStream> {
    let text = fs::read_to_string(sidecar_path(raw))?;
    let meta: StreamSidecar = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if meta.format != STREAM_FORMAT {
        return Err(Error::Format(format!(
            "unsupported stream format {:?}",
            meta.format
        )));
    }
    let bytes = fs::read(raw)?;
    if bytes.len() != meta.length * 4 {
        return Err(Error::LengthMismatch {
            expected: meta.length,
            found: bytes.len() / 4,
        });
    }
    if meta.length != meta.bits * meta.samples_per_bit {
        return Err(Error::Format(
            "sidecar length is not bits * samples_per_bit".into(),
        ));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(SampleStream {
        rate: meta.rate,
        bits: meta.bits,
        samples_per_bit: meta.samples_per_bit,
        side: meta.side,
        samples,
    })
}

/// Decode report for one image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecodeReport {
    pub schema: String,
    pub mode: Mode,
    pub key_seed: u64,
    pub side: PdSide,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
    pub columns: usize,
    pub rows: usize,
    pub bits: usize,
    pub normalization_reference: f64,
    /// Unclamped correlation outputs, raster order.
    pub raw: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peaks: Option<SpectralSets>,
}

impl DecodeReport {
    pub fn new(img: &RecoveredImage) -> Self {
        DecodeReport {
            schema: "caos-decode/1".into(),
            mode: img.mode,
            key_seed: img.key_seed,
            side: img.side,
            source: img.source,
            columns: img.columns,
            rows: img.rows,
            bits: img.bits,
            normalization_reference: img.normalization_reference,
            raw: img.raw.clone(),
            ground_truth_correlation: None,
            peaks: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Writes `<stem>.pgm`, `<stem>.csv` and `<stem>.json` for one image.
pub fn write_image_set(
    dir: &Path,
    stem: &str,
    img: &RecoveredImage,
    report: &DecodeReport,
    log_floor_db: Option<f64>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let norm = img.normalized();
    let shown = match log_floor_db {
        Some(f) => log_render(&norm, f),
        None => norm.clone(),
    };
    write_pgm16(
        fs::File::create(dir.join(format!("{stem}.pgm")))?,
        img.columns,
        img.rows,
        &shown,
    )?;
    write_grid_csv(
        fs::File::create(dir.join(format!("{stem}.csv")))?,
        img.columns,
        &img.values,
    )?;
    fs::write(dir.join(format!("{stem}.json")), report.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let v: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let mut buf = Vec::new();
        write_pgm16(&mut buf, 4, 3, &v).unwrap();
        let (c, r, back) = read_pgm(&buf[..]).unwrap();
        assert_eq!((c, r), (4, 3));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 65535.0);
        }
    }

    #[test]
    fn pgm_comments_and_bad_magic() {
        let mut data = b"P5\n# note\n2 1\n255\n".to_vec();
        data.extend([0u8, 255]);
        assert_eq!(read_pgm(&data[..]).unwrap().2, vec![0.0, 1.0]);
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let v = vec![0.1, 1e-7, 3.0, 2.5e10, 0.0, 1.0 / 3.0];
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, 3, &v).unwrap();
        let (c, r, back) = read_grid_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!((c, r), (3, 2));
        assert_eq!(back, v);
        assert!(read_grid_csv("1,2\n3\n").is_err());
    }

    #[test]
    fn stream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = SampleStream {
            rate: 64.0,
            bits: 2,
            samples_per_bit: 3,
            side: PdSide::Pd2,
            samples: vec![0.5, 1.0, 0.0, 0.25, 2.0, 4.0],
        };
        let raw = dir.path().join("pd2.f32");
        write_stream(&raw, &s).unwrap();
        assert_eq!(read_stream(&raw).unwrap(), s);
        fs::write(&raw, [0u8; 8]).unwrap();
        assert!(matches!(
            read_stream(&raw),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn log_rendering() {
        let r = log_render(&[1.0, 0.1, 0.001, 0.0], 60.0);
        assert_eq!(r[0], 1.0);
        assert!((r[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(r[2].abs() < 1e-12);
        assert_eq!(r[3], 0.0);
    }
}
