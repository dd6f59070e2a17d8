use std::io::{ErrorKind, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io)
            if matches!(io.kind(), ErrorKind::NotFound | ErrorKind::PermissionDenied) =>
        {
            Error::io(path, io)
        }
        hound::Error::IoError(io) => Error::MalformedWav(format!("{}: {io}", path.display())),
        hound::Error::Unsupported => {
            Error::CodecUnsupported(format!("{}: not PCM or IEEE float", path.display()))
        }
        other => Error::MalformedWav(format!("{}: {other}", path.display())),
    }
}

const TAG_PCM: u16 = 1;
const TAG_FLOAT: u16 = 3;
const TAG_EXTENSIBLE: u16 = 0xfffe;

/// Format tag of the `fmt ` chunk, if the header gets that far.
fn format_tag(header: &[u8]) -> Option<u16> {
    if header.len() < 12 || &header[..4] != b"RIFF" || &header[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    while pos + 8 <= header.len() {
        let size = u32::from_le_bytes(header[pos + 4..pos + 8].try_into().ok()?) as usize;
        if &header[pos..pos + 4] == b"fmt " {
            return header.get(pos + 8..pos + 10).map(|b| u16::from_le_bytes([b[0], b[1]]));
        }
        pos += 8 + size + (size & 1);
    }
    None
}

fn check_codec(path: &Path) -> Result<()> {
    let mut header = Vec::with_capacity(4096);
    std::fs::File::open(path)
        .and_then(|f| f.take(4096).read_to_end(&mut header))
        .map_err(|e| Error::io(path, e))?;
    match format_tag(&header) {
        Some(TAG_PCM | TAG_FLOAT | TAG_EXTENSIBLE) | None => Ok(()),
        Some(tag) => Err(Error::CodecUnsupported(format!(
            "{}: format tag {tag:#06x}",
            path.display()
        ))),
    }
}

/// Reads a 16-bit PCM or 32-bit float WAV file, averaging channels to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    check_codec(path)?;
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::CodecUnsupported(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::CodecUnsupported(format!(
            "{}: {channels} channels",
            path.display()
        )));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(mono, spec.sample_rate)
        .map_err(|e| Error::MalformedWav(format!("{}: {e}", path.display())))
}

/// Writes `clip` as 16-bit PCM mono, clamping to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in clip.samples() {
        w.write_sample(pcm16(s)).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

/// The 16-bit code `write_wav` stores for `s`.
pub fn pcm16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
