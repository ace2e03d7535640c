//! Minimal mono WAV reading and writing: 16-bit PCM and 32-bit IEEE float.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

fn chunk_header(id: &[u8; 4], size: u32) -> [u8; 8] {
    let mut h = [0u8; 8];
    h[..4].copy_from_slice(id);
    h[4..].copy_from_slice(&size.to_le_bytes());
    h
}

fn write_fmt(out: &mut Vec<u8>, format: u16, sample_rate: u32, bits: u16) {
    let block_align = bits / 8; // mono
    let byte_rate = sample_rate * block_align as u32;
    out.extend_from_slice(&chunk_header(b"fmt ", 16));
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // channels
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
}

/// Writes samples as 32-bit float mono WAV.
pub fn write_wav_f32(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let data_len = (samples.len() * 4) as u32;
    let fact_len = 4u32;
    let riff_len = 4 + (8 + 16) + (8 + fact_len) + (8 + data_len);
    let mut out = Vec::with_capacity(riff_len as usize + 8);
    out.extend_from_slice(&chunk_header(b"RIFF", riff_len));
    out.extend_from_slice(b"WAVE");
    write_fmt(&mut out, 3, sample_rate, 32);
    out.extend_from_slice(&chunk_header(b"fact", fact_len));
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    out.extend_from_slice(&chunk_header(b"data", data_len));
    for &s in samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Writes samples as 16-bit PCM mono WAV; values are clamped to [−1, 1].
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let riff_len = 4 + (8 + 16) + (8 + data_len);
    let mut out = Vec::with_capacity(riff_len as usize + 8);
    out.extend_from_slice(&chunk_header(b"RIFF", riff_len));
    out.extend_from_slice(b"WAVE");
    write_fmt(&mut out, 1, sample_rate, 16);
    out.extend_from_slice(&chunk_header(b"data", data_len));
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Reads a mono WAV (16-bit PCM or 32-bit float); returns samples in
/// [−1, 1] and the recorded sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut format = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let code = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if channels != 1 {
                    return Err(Error::Wav(format!("only mono supported, got {channels} channels")));
                }
                format = Some((code, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1);
    }
    let (code, rate, bits) =
        format.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    let samples = match (code, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        _ => {
            return Err(Error::Wav(format!(
                "unsupported format: code {code}, {bits} bits (want PCM16 or float32)"
            )))
        }
    };
    Ok((samples, rate))
}
