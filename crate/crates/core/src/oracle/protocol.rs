//! Line-delimited JSON scorer protocol spoken over a child process's stdio.
//!
//! ```text
//! {"op":"hello"}                                   -> {"ok":true,"dim":D,"rate":R}
//! {"op":"embed","rate":16000,"pcm16_b64":"..."}    -> {"ok":true,"embedding":[...]}
//! any failure                                      -> {"ok":false,"error":"..."}
//! ```
//!
//! PCM payloads are little-endian signed 16-bit mono, base64 encoded.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello,
    Embed { rate: u32, pcm16_b64: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn hello(dim: usize, rate: u32) -> Self {
        Self {
            ok: true,
            dim: Some(dim),
            rate: Some(rate),
            embedding: None,
            error: None,
        }
    }

    pub fn embedding(v: Vec<f64>) -> Self {
        Self {
            ok: true,
            dim: None,
            rate: None,
            embedding: Some(v),
            error: None,
        }
    }

    pub fn failure(msg: impl Into<String>) -> Self {
        Self {
            ok: false,
            dim: None,
            rate: None,
            embedding: None,
            error: Some(msg.into()),
        }
    }
}

/// Quantises to 16-bit PCM (clamped to `[-1, 1]`) and base64-encodes.
pub fn encode_pcm16_b64(clip: &AudioClip) -> String {
    let mut bytes = Vec::with_capacity(clip.len() * 2);
    for s in clip.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_pcm16_b64(payload: &str, rate: u32) -> Result<AudioClip> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| Error::Protocol(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 2 != 0 {
        return Err(Error::Protocol("odd PCM16 byte count".into()));
    }
    let samples = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32767.0)
        .collect();
    AudioClip::new(samples, rate)
}

/// Server side of the protocol. Reads requests until EOF and answers each
/// line with exactly one response line; malformed requests get an error
/// reply and the loop continues.
pub fn serve<R, W, F>(input: R, mut output: W, dim: usize, rate: u32, mut embed: F) -> Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&AudioClip) -> Result<Vec<f64>>,
{
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Hello) => Response::hello(dim, rate),
            Ok(Request::Embed {
                rate: req_rate,
                pcm16_b64,
            }) => {
                if req_rate != rate {
                    Response::failure(format!("expected rate {rate}, got {req_rate}"))
                } else {
                    match decode_pcm16_b64(&pcm16_b64, req_rate).and_then(|c| embed(&c)) {
                        Ok(v) => Response::embedding(v),
                        Err(e) => Response::failure(e.to_string()),
                    }
                }
            }
            Err(e) => Response::failure(format!("malformed request: {e}")),
        };
        serde_json::to_writer(&mut output, &reply)?;
        output
            .write_all(b"\n")
            .and_then(|_| output.flush())
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}
