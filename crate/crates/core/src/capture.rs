//! Binary capture container.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                        |
//! |-------:|-----:|----------------------------------------------|
//! | 0      | 8    | magic `CHSNDCAP`                             |
//! | 8      | 4    | format version (`u32`, currently 1)          |
//! | 12     | 4    | metadata block length (`u32`, 24)            |
//! | 16     | 8    | sample rate, Hz (`f64`)                      |
//! | 24     | 8    | band center frequency, GHz (`f64`)           |
//! | 32     | 4    | record length in samples (`u32`)             |
//! | 36     | 1    | kind: 0 calibration, 1 measurement           |
//! | 37     | 3    | reserved, zero                               |
//! | 40     | 8·N  | interleaved `f32` I/Q pairs                  |
//!
//! One file holds one record. A campaign stores one file per
//! (band, position, repetition) plus one calibration file per band.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::largescale::Scenario;
use crate::record::{ComplexRecord, RecordKind};

pub const MAGIC: [u8; 8] = *b"CHSNDCAP";
pub const VERSION: u32 = 1;
pub const METADATA_LEN: u32 = 24;
pub const HEADER_LEN: usize = 16 + METADATA_LEN as usize;

fn fmt_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset,
        reason: reason.into(),
    }
}

fn take<const N: usize>(data: &[u8], offset: usize) -> Result<[u8; N]> {
    data.get(offset..offset + N)
        .map(|s| s.try_into().expect("slice length checked"))
        .ok_or_else(|| fmt_err(data.len(), format!("truncated header, need {} bytes", offset + N)))
}

pub fn encode_capture(record: &ComplexRecord) -> Result<Vec<u8>> {
    let len = u32::try_from(record.len())
        .map_err(|_| Error::invalid("record too long for the capture format"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * record.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&METADATA_LEN.to_le_bytes());
    out.extend_from_slice(&record.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&(record.center_frequency_hz() / 1e9).to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.push(match record.kind() {
        RecordKind::Calibration => 0,
        RecordKind::Measurement => 1,
    });
    out.extend_from_slice(&[0u8; 3]);
    for s in record.samples() {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_capture(data: &[u8]) -> Result<ComplexRecord> {
    let magic: [u8; 8] = take(data, 0)?;
    if magic != MAGIC {
        return Err(fmt_err(0, "bad magic"));
    }
    let version = u32::from_le_bytes(take(data, 8)?);
    if version != VERSION {
        return Err(fmt_err(8, format!("unsupported version {version}")));
    }
    let meta_len = u32::from_le_bytes(take(data, 12)?);
    if meta_len != METADATA_LEN {
        return Err(fmt_err(12, format!("metadata length {meta_len}, expected {METADATA_LEN}")));
    }
    let sample_rate = f64::from_le_bytes(take(data, 16)?);
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(fmt_err(16, "sample rate must be positive"));
    }
    let band_ghz = f64::from_le_bytes(take(data, 24)?);
    if !(band_ghz.is_finite() && band_ghz > 0.0) {
        return Err(fmt_err(24, "band must be positive"));
    }
    let record_len = u32::from_le_bytes(take(data, 32)?) as usize;
    if record_len == 0 {
        return Err(fmt_err(32, "record length is zero"));
    }
    let kind = match take::<1>(data, 36)?[0] {
        0 => RecordKind::Calibration,
        1 => RecordKind::Measurement,
        k => return Err(fmt_err(36, format!("unknown record kind {k}"))),
    };
    if take::<3>(data, 37)? != [0; 3] {
        return Err(fmt_err(37, "reserved bytes are not zero"));
    }
    let payload = &data[HEADER_LEN..];
    let expected = record_len
        .checked_mul(8)
        .ok_or_else(|| fmt_err(32, "record length overflows"))?;
    if payload.len() < expected {
        return Err(fmt_err(
            data.len(),
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(fmt_err(HEADER_LEN + expected, "trailing bytes after payload"));
    }
    let mut samples = Vec::with_capacity(record_len);
    for (i, pair) in payload.chunks_exact(8).enumerate() {
        let re = f32::from_le_bytes(pair[..4].try_into().expect("4 bytes"));
        let im = f32::from_le_bytes(pair[4..].try_into().expect("4 bytes"));
        if !(re.is_finite() && im.is_finite()) {
            return Err(fmt_err(HEADER_LEN + 8 * i, "non-finite sample"));
        }
        samples.push(Complex64::new(re as f64, im as f64));
    }
    ComplexRecord::new(samples, sample_rate, band_ghz * 1e9, kind)
}

pub fn read_capture(path: impl AsRef<Path>) -> Result<ComplexRecord> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_capture(&data)
}

pub fn write_capture(path: impl AsRef<Path>, record: &ComplexRecord) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_capture(record)?).map_err(|e| Error::io(path, e))
}

/// Directory holding one band's captures, e.g. `band_2.4GHz`.
pub fn band_dir(band_ghz: f64) -> String {
    format!("band_{band_ghz}GHz")
}

pub fn calibration_path(root: &Path, band_ghz: f64) -> PathBuf {
    root.join(band_dir(band_ghz)).join("calibration.cap")
}

/// `rep` is zero-based; file names count from 1. LOS and NLOS positions
/// may share ids, so the scenario prefixes the file name.
pub fn measurement_path(root: &Path, band_ghz: f64, scenario: Scenario, position_id: u32, rep: usize) -> PathBuf {
    let prefix = match scenario {
        Scenario::Los => "los",
        Scenario::Nlos => "nlos",
    };
    root.join(band_dir(band_ghz))
        .join(format!("{prefix}_pos_{position_id:03}_rep_{}.cap", rep + 1))
}
