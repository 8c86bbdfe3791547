//! RIFF/WAVE reader and writer for 16-bit PCM, mono or stereo.

use crate::error::{ParseError, Result};
use crate::tensor::Tensor;

const PCM: u16 = 1;

/// Decoded audio with samples scaled to `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// `[frames, channels]`.
    pub samples: Tensor,
    pub sample_rate: u32,
    pub id: String,
    pub scene_label: Option<usize>,
}

impl Recording {
    pub fn frames(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / f64::from(self.sample_rate)
    }
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

struct Fmt {
    channels: usize,
    sample_rate: u32,
}

fn parse_fmt(b: &[u8], off: usize, size: usize) -> std::result::Result<Fmt, ParseError> {
    if size < 16 {
        return Err(ParseError::MalformedHeader {
            offset: off,
            reason: format!("fmt chunk is {size} bytes, need 16"),
        });
    }
    let format = u16_at(b, off);
    if format != PCM {
        return Err(ParseError::UnsupportedCodec {
            offset: off,
            reason: format!("format tag {format:#06x} is not PCM"),
        });
    }
    let channels = u16_at(b, off + 2);
    if !(1..=2).contains(&channels) {
        return Err(ParseError::UnsupportedCodec {
            offset: off + 2,
            reason: format!("{channels} channels (only mono and stereo are supported)"),
        });
    }
    let sample_rate = u32_at(b, off + 4);
    let block_align = u16_at(b, off + 12);
    let bits = u16_at(b, off + 14);
    if bits != 16 {
        return Err(ParseError::UnsupportedCodec {
            offset: off + 14,
            reason: format!("{bits}-bit samples (only 16-bit PCM is supported)"),
        });
    }
    if usize::from(block_align) != 2 * usize::from(channels) || sample_rate == 0 {
        return Err(ParseError::MalformedHeader {
            offset: off + 4,
            reason: format!("inconsistent rate {sample_rate} / block align {block_align}"),
        });
    }
    Ok(Fmt {
        channels: channels.into(),
        sample_rate,
    })
}

/// Parses a WAV file. Chunks other than `fmt ` and `data` are skipped.
pub fn parse_wav(bytes: &[u8], id: impl Into<String>) -> Result<Recording> {
    Ok(parse_inner(bytes, id.into())?)
}

fn parse_inner(b: &[u8], id: String) -> std::result::Result<Recording, ParseError> {
    if b.len() < 12 {
        return Err(ParseError::Truncated {
            offset: 0,
            expected: 12,
            found: b.len(),
        });
    }
    if &b[0..4] != b"RIFF" {
        return Err(ParseError::MalformedHeader {
            offset: 0,
            reason: "missing RIFF tag".into(),
        });
    }
    if &b[8..12] != b"WAVE" {
        return Err(ParseError::MalformedHeader {
            offset: 8,
            reason: "missing WAVE form type".into(),
        });
    }
    let mut off = 12;
    let mut fmt: Option<Fmt> = None;
    while off + 8 <= b.len() {
        let tag = &b[off..off + 4];
        let size = u32_at(b, off + 4) as usize;
        let body = off + 8;
        let available = b.len() - body;
        match tag {
            b"fmt " => {
                if size > available {
                    return Err(ParseError::Truncated {
                        offset: body,
                        expected: size,
                        found: available,
                    });
                }
                fmt = Some(parse_fmt(b, body, size)?);
            }
            b"data" => {
                let Some(fmt) = fmt else {
                    return Err(ParseError::MalformedHeader {
                        offset: off,
                        reason: "data chunk before fmt chunk".into(),
                    });
                };
                if size > available {
                    return Err(ParseError::Truncated {
                        offset: body,
                        expected: size,
                        found: available,
                    });
                }
                let frame_bytes = 2 * fmt.channels;
                if size % frame_bytes != 0 {
                    return Err(ParseError::Truncated {
                        offset: body + size - size % frame_bytes,
                        expected: frame_bytes,
                        found: size % frame_bytes,
                    });
                }
                let frames = size / frame_bytes;
                if frames == 0 {
                    return Err(ParseError::MalformedHeader {
                        offset: off,
                        reason: "empty data chunk".into(),
                    });
                }
                let data = b[body..body + size]
                    .chunks_exact(2)
                    .map(|s| f64::from(i16::from_le_bytes([s[0], s[1]])) / 32768.0)
                    .collect();
                let samples = Tensor::new(&[frames, fmt.channels], data)
                    .map_err(|e| ParseError::Format(e.to_string()))?;
                return Ok(Recording {
                    samples,
                    sample_rate: fmt.sample_rate,
                    id,
                    scene_label: None,
                });
            }
            _ => {}
        }
        // chunks are word aligned
        off = body + size + (size & 1);
    }
    Err(ParseError::MalformedHeader {
        offset: off.min(b.len()),
        reason: if fmt.is_none() {
            "no fmt chunk".into()
        } else {
            "no data chunk".into()
        },
    })
}

/// Quantizes one sample to 16 bits.
pub fn quantize(v: f64) -> i16 {
    (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes `[frames, channels]` samples as 16-bit PCM.
pub fn write_wav(samples: &Tensor, sample_rate: u32) -> Vec<u8> {
    let channels = samples.shape()[1];
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2 * channels as u32).to_le_bytes());
    out.extend_from_slice(&(2 * channels as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &v in samples.data() {
        out.extend_from_slice(&quantize(v).to_le_bytes());
    }
    out
}
