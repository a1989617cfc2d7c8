//! RIFF/WAVE reader and writer for PCM16 mono 16 kHz files.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

use crate::dsp::SAMPLE_RATE;

fn le_u16(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn le_u32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Reads a PCM16 mono 16 kHz WAV file into samples scaled by 1/32768.
pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format(format!(
            "{}: not a RIFF/WAVE file",
            path.display()
        )));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = le_u32(&bytes, off + 4) as usize;
        let body_start = off + 8;
        if body_start + size > bytes.len() {
            return Err(Error::Format(format!(
                "{}: chunk {:?} overruns file",
                path.display(),
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format(format!(
                        "{}: fmt chunk too small",
                        path.display()
                    )));
                }
                fmt = Some((
                    le_u16(&bytes, body_start),
                    le_u16(&bytes, body_start + 2),
                    le_u32(&bytes, body_start + 4),
                    le_u16(&bytes, body_start + 14),
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_start + size]),
            _ => {}
        }
        // chunks are word-aligned
        off = body_start + size + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| {
        Error::Format(format!("{}: missing fmt chunk", path.display()))
    })?;
    if format != 1 || bits != 16 {
        return Err(Error::Unsupported(format!(
            "{}: only PCM16 supported (format {format}, {bits} bits)",
            path.display()
        )));
    }
    if channels != 1 {
        return Err(Error::Unsupported(format!(
            "{}: {channels} channels, expected mono",
            path.display()
        )));
    }
    if rate as usize != SAMPLE_RATE {
        return Err(Error::Unsupported(format!(
            "{}: sample rate {rate}, expected {SAMPLE_RATE}",
            path.display()
        )));
    }
    let data = data.ok_or_else(|| {
        Error::Format(format!("{}: missing data chunk", path.display()))
    })?;
    if data.len() % 2 != 0 {
        return Err(Error::Format(format!(
            "{}: odd data chunk length",
            path.display()
        )));
    }
    Ok(data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect())
}

/// Writes samples as PCM16 mono 16 kHz, clamping to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut buf = Vec::with_capacity(44 + data_len);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&(SAMPLE_RATE as u32).to_le_bytes());
    buf.extend_from_slice(&((SAMPLE_RATE * 2) as u32).to_le_bytes());
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}
