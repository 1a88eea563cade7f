//! Mono RIFF/WAVE input and output.
//!
//! Reads 16-bit PCM (format code 1) and 32-bit IEEE float (format code 3,
//! or WAVE_FORMAT_EXTENSIBLE wrapping either); always writes 32-bit float.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// A mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    samples: Vec<T>,
    sample_rate_hz: u32,
}

impl<T: Scalar> Signal<T> {
    /// Fails with `InvalidParams` on a zero sample rate or a non-finite sample.
    pub fn new(samples: Vec<T>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidParams("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParams(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&s| s * s).sum()
    }

    pub fn rms(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        (self.energy() / T::of(self.samples.len() as f64)).sqrt()
    }

    /// Converts the sample type, e.g. `f64` to `f32`.
    pub fn cast<U: Scalar>(&self) -> Signal<U> {
        Signal {
            samples: self.samples.iter().map(|s| U::of(s.as_f64())).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits_per_sample: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::CorruptHeader(format!("fmt chunk is {} bytes, need 16", body.len())));
    }
    let mut format = u16_at(body, 0);
    if format == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID,
        // whose first two bytes carry the real format code.
        if body.len() < 40 {
            return Err(Error::CorruptHeader("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk".into()));
        }
        format = u16_at(body, 24);
    }
    Ok(FmtChunk {
        format,
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits_per_sample: u16_at(body, 14),
    })
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file, normalizing PCM by 1/32768.
pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<Signal<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_wav(&bytes)
}

/// Decodes an in-memory WAV image; see [`read_wav`].
pub fn decode_wav<T: Scalar>(bytes: &[u8]) -> Result<Signal<T>> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::UnsupportedFormat("not a RIFF/WAVE file".into()));
    }
    let riff_len = u32_at(bytes, 4) as usize;
    if riff_len + 8 > bytes.len() {
        return Err(Error::CorruptHeader(format!("RIFF size {} exceeds file size {}", riff_len + 8, bytes.len())));
    }
    let end = riff_len + 8;

    let mut fmt: Option<FmtChunk> = None;
    let mut pos = 12;
    while pos + 8 <= end {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).filter(|&e| e <= end).ok_or_else(|| {
            Error::CorruptHeader(format!("chunk '{}' of {size} bytes overruns the file", String::from_utf8_lossy(id)))
        })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => {
                let fmt = fmt.ok_or_else(|| Error::CorruptHeader("data chunk before fmt chunk".into()))?;
                return decode_samples(&fmt, body);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    Err(Error::CorruptHeader("no data chunk".into()))
}

fn decode_samples<T: Scalar>(fmt: &FmtChunk, data: &[u8]) -> Result<Signal<T>> {
    if fmt.channels != 1 {
        return Err(Error::UnsupportedFormat(format!("{} channels, only mono is supported", fmt.channels)));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::CorruptHeader("sample rate is zero".into()));
    }
    let samples: Vec<T> = match (fmt.format, fmt.bits_per_sample) {
        (FORMAT_PCM, 16) => {
            check_layout(fmt, data, 2)?;
            data.chunks_exact(2).map(|c| T::of(i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)).collect()
        }
        (FORMAT_IEEE_FLOAT, 32) => {
            check_layout(fmt, data, 4)?;
            let mut out = Vec::with_capacity(data.len() / 4);
            for c in data.chunks_exact(4) {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if !v.is_finite() {
                    return Err(Error::UnsupportedFormat("non-finite float sample".into()));
                }
                out.push(T::of(v as f64));
            }
            out
        }
        (code, bits) => {
            return Err(Error::UnsupportedFormat(format!("format code {code} with {bits} bits per sample")))
        }
    };
    Signal::new(samples, fmt.sample_rate)
}

fn check_layout(fmt: &FmtChunk, data: &[u8], width: usize) -> Result<()> {
    if fmt.block_align as usize != width {
        return Err(Error::CorruptHeader(format!(
            "block align {} does not match {width}-byte mono frames",
            fmt.block_align
        )));
    }
    if !data.len().is_multiple_of(width) {
        return Err(Error::CorruptHeader(format!(
            "data chunk of {} bytes is not a whole number of frames",
            data.len()
        )));
    }
    Ok(())
}

/// Encodes a signal as a mono 32-bit float WAV image. Values are not clipped.
pub fn encode_wav<T: Scalar>(signal: &Signal<T>) -> Vec<u8> {
    let data_len = signal.len() * 4;
    let fmt_len = 18u32;
    let fact_len = 4u32;
    let riff_len = 4 + (8 + fmt_len) + (8 + fact_len) + 8 + data_len as u32;

    let mut out = Vec::with_capacity(riff_len as usize + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&fmt_len.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate_hz() * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());

    out.extend_from_slice(b"fact");
    out.extend_from_slice(&fact_len.to_le_bytes());
    out.extend_from_slice(&(signal.len() as u32).to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in signal.samples() {
        out.extend_from_slice(&(s.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn write_wav<T: Scalar>(path: impl AsRef<Path>, signal: &Signal<T>) -> Result<()> {
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(&encode_wav(signal))?;
    Ok(())
}
