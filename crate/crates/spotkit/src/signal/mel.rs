//! STFT magnitude mel-spectrograms.
//!
//! Framing uses center alignment: the signal is reflect-padded by
//! `n_fft / 2` on both ends, frame `t` is centered at sample `t * hop`, and
//! the frame count is `1 + floor(len / hop)`. Filters are Slaney-style
//! triangles (linear below 1 kHz, logarithmic above) with unit-area
//! normalization; magnitudes are compressed with `ln(max(x, 1e-5))`.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::wav::Waveform;

pub const MEL_MAGIC: &[u8; 8] = b"SPOTMEL1";
pub const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_fft: 1024,
            win_length: 1024,
            hop_length: 256,
            n_mels: 80,
            fmin: 0.0,
            fmax: 11025.0,
            sample_rate: 22050,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.win_length > self.n_fft {
            return Err(Error::InvalidArgument(format!(
                "win_length {} > n_fft {}",
                self.win_length, self.n_fft
            )));
        }
        if self.hop_length == 0 || self.hop_length > self.win_length {
            return Err(Error::InvalidArgument(format!(
                "hop_length {} must be in 1..=win_length {}",
                self.hop_length, self.win_length
            )));
        }
        // the style-preserving loss consumes the lower 20 bins
        if self.n_mels < 21 {
            return Err(Error::InvalidArgument(format!(
                "n_mels {} < 21",
                self.n_mels
            )));
        }
        if self.fmax <= self.fmin || self.fmax > self.sample_rate as f64 / 2.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mel band [{}, {}] invalid for sample rate {}",
                self.fmin, self.fmax, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn frames_for(&self, n_samples: usize) -> usize {
        1 + n_samples / self.hop_length
    }
}

/// Log-mel frames, row-major `[n_frames, n_mels]`.
#[derive(Debug, Clone)]
pub struct Mel {
    pub frames: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
}

impl Mel {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.frames[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(16 + self.frames.len() * 4);
        out.extend_from_slice(MEL_MAGIC);
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        for v in &self.frames {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if bytes.len() < 16 || &bytes[0..8] != MEL_MAGIC {
            return Err(Error::Format {
                path: path.display().to_string(),
                detail: "missing SPOTMEL1 magic".to_string(),
            });
        }
        let n_frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n_mels = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let need = 16 + n_frames * n_mels * 4;
        if bytes.len() < need {
            return Err(Error::Format {
                path: path.display().to_string(),
                detail: format!("expected {need} bytes, got {}", bytes.len()),
            });
        }
        let frames = bytes[16..need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Mel {
            frames,
            n_frames,
            n_mels,
        })
    }
}

fn reflect_index(p: isize, len: usize) -> usize {
    let len = len as isize;
    let mut p = p;
    if p < 0 {
        p = -p;
    }
    if p >= len {
        p = 2 * len - 2 - p;
    }
    p as usize
}

/// Periodic Hann window of `win_length`, zero-padded and centered in `n_fft`.
fn hann_padded(win_length: usize, n_fft: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_fft];
    let lead = (n_fft - win_length) / 2;
    for i in 0..win_length {
        let phase = 2.0 * std::f64::consts::PI * i as f64 / win_length as f64;
        w[lead + i] = 0.5 * (1.0 - phase.cos());
    }
    w
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
fn hz_to_mel(f: f64) -> f64 {
    let min_log_hz = 1000.0;
    let lin_step = 200.0 / 3.0;
    if f < min_log_hz {
        f / lin_step
    } else {
        min_log_hz / lin_step + (f / min_log_hz).ln() / (6.4f64.ln() / 27.0)
    }
}

fn mel_to_hz(m: f64) -> f64 {
    let min_log_hz = 1000.0;
    let lin_step = 200.0 / 3.0;
    let min_log_mel = min_log_hz / lin_step;
    if m < min_log_mel {
        m * lin_step
    } else {
        min_log_hz * ((m - min_log_mel) * (6.4f64.ln() / 27.0)).exp()
    }
}

/// Triangular filterbank `[n_mels, n_fft/2 + 1]` with unit-area (Slaney)
/// normalization, evaluated on continuous bin frequencies.
pub fn mel_filterbank(cfg: &MelConfig) -> Vec<f64> {
    let n_bins = cfg.n_fft / 2 + 1;
    let mel_lo = hz_to_mel(cfg.fmin);
    let mel_hi = hz_to_mel(cfg.fmax);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..n_bins)
        .map(|b| b as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64)
        .collect();
    let mut fb = vec![0.0; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (b, f) in bin_hz.iter().enumerate() {
            let up = (f - lo) / (mid - lo);
            let down = (hi - f) / (hi - mid);
            let w = up.min(down).max(0.0);
            fb[m * n_bins + b] = w * norm;
        }
    }
    fb
}

pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<Mel> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "waveform rate {} != config rate {}",
            w.sample_rate, cfg.sample_rate
        )));
    }
    if w.samples.len() < cfg.win_length {
        return Err(Error::InvalidArgument(format!(
            "input too short: {} samples < win_length {}",
            w.samples.len(),
            cfg.win_length
        )));
    }
    let spec = stft_magnitude(&w.samples, cfg);
    let n_bins = cfg.n_fft / 2 + 1;
    let n_frames = cfg.frames_for(w.samples.len());
    let fb = mel_filterbank(cfg);
    let mut frames = vec![0.0; n_frames * cfg.n_mels];
    for t in 0..n_frames {
        let mag = &spec[t * n_bins..(t + 1) * n_bins];
        let out = &mut frames[t * cfg.n_mels..(t + 1) * cfg.n_mels];
        for (m, o) in out.iter_mut().enumerate() {
            let row = &fb[m * n_bins..(m + 1) * n_bins];
            let mut acc = 0.0;
            for (w_, x) in row.iter().zip(mag) {
                acc += w_ * x;
            }
            *o = acc.max(LOG_FLOOR).ln();
        }
    }
    Ok(Mel {
        frames,
        n_frames,
        n_mels: cfg.n_mels,
    })
}

/// Magnitude STFT, row-major `[n_frames, n_fft/2 + 1]`.
fn stft_magnitude(samples: &[f64], cfg: &MelConfig) -> Vec<f64> {
    let pad = cfg.n_fft / 2;
    let n_frames = cfg.frames_for(samples.len());
    let n_bins = cfg.n_fft / 2 + 1;
    let window = hann_padded(cfg.win_length, cfg.n_fft);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut out = vec![0.0; n_frames * n_bins];
    for t in 0..n_frames {
        let start = t as isize * cfg.hop_length as isize - pad as isize;
        for (i, (b, wv)) in buf.iter_mut().zip(&window).enumerate() {
            let s = samples[reflect_index(start + i as isize, samples.len())];
            *b = Complex::new(s * wv, 0.0);
        }
        fft.process(&mut buf);
        for (o, c) in out[t * n_bins..(t + 1) * n_bins].iter_mut().zip(&buf) {
            *o = c.norm();
        }
    }
    out
}
