//! Minimal RIFF/WAV reader and writer: mono PCM16 or IEEE float32.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Wav("sample rate must be positive".to_string()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Wav(format!("non-finite sample at index {i}")));
            }
            if s.abs() > 1.0 + 1e-6 {
                return Err(Error::Wav(format!(
                    "sample {i} out of range after normalization: {s}"
                )));
            }
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let e: f64 = self.samples.iter().map(|s| s * s).sum();
        (e / self.samples.len() as f64).sqrt()
    }
}

fn rd_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn rd_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().unwrap())
}

pub fn load_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Wav(d) => Error::Wav(format!("{}: {d}", path.display())),
        other => other,
    })
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("malformed header: not a RIFF/WAVE file".into()));
    }
    let mut at = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = rd_u32(bytes, at + 4) as usize;
        let body_start = at + 8;
        if body_start + size > bytes.len() {
            return Err(Error::Wav("malformed header: chunk exceeds file".into()));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Wav("malformed fmt chunk".into()));
                }
                fmt = Some((
                    rd_u16(bytes, body_start),
                    rd_u16(bytes, body_start + 2),
                    rd_u32(bytes, body_start + 4),
                    rd_u16(bytes, body_start + 14),
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_start + size]),
            _ => {}
        }
        // chunks are word-aligned
        at = body_start + size + (size & 1);
    }
    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Wav("malformed header: no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("malformed header: no data chunk".into()))?;
    if channels != 1 {
        return Err(Error::Wav(format!(
            "mono required, got {channels} channels; downmix before loading"
        )));
    }
    let samples = match (format, bits) {
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
                "unsupported encoding: format tag {format}, {bits}-bit (need PCM16 or float32)"
            )))
        }
    };
    Waveform::new(samples, rate)
}

/// Encode as mono PCM16.
pub fn encode_wav_pcm16(w: &Waveform) -> Vec<u8> {
    let n = w.samples.len();
    let data_len = n * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in &w.samples {
        let v = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_wav_pcm16(w: &Waveform, path: &Path) -> Result<()> {
    fs::write(path, encode_wav_pcm16(w)).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_round_trip() {
        let w = Waveform::new(vec![0.0; 22050], 22050).unwrap();
        let bytes = encode_wav_pcm16(&w);
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.sample_rate, 22050);
        assert_eq!(back.samples.len(), 22050);
        assert!(back.samples.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn full_scale_square_wave_scaling() {
        // 16-bit full-scale values come back as +/- 32767/32768
        let mut samples = vec![1.0; 8];
        samples.extend(vec![-1.0; 8]);
        let w = Waveform::new(samples, 8000).unwrap();
        let back = decode_wav(&encode_wav_pcm16(&w)).unwrap();
        for s in &back.samples[0..8] {
            assert!((s - 32767.0 / 32768.0).abs() < 1e-9);
        }
        for s in &back.samples[8..16] {
            assert!((s + 32767.0 / 32768.0).abs() < 1e-9 || (s + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stereo_rejected_with_mono_hint() {
        // hand-build a stereo header
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        let err = decode_wav(&bytes).unwrap_err();
        assert!(err.to_string().contains("mono required"));
    }

    #[test]
    fn garbage_rejected() {
        assert!(decode_wav(b"not a wav file at all").is_err());
    }

    #[test]
    fn float32_encoding_supported() {
        let mut bytes = Vec::new();
        let samples = [0.5f32, -0.25, 0.125];
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36 + 12u32).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&22050u32.to_le_bytes());
        bytes.extend_from_slice(&(22050u32 * 4).to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&32u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&12u32.to_le_bytes());
        for s in samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        let w = decode_wav(&bytes).unwrap();
        assert_eq!(w.samples, vec![0.5, -0.25, 0.125]);
    }
}
