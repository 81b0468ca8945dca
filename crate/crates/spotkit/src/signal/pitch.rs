//! F0 and voicing estimation via the YIN difference function.
//!
//! Frames are aligned with the mel frontend (same hop, same centers). Each
//! frame computes the cumulative-mean-normalized difference over the search
//! lag range; the first dip under the threshold (or the global minimum)
//! gives the lag, refined by parabolic interpolation. Periodicity is
//! `1 - d'(lag)`; a frame is voiced when periodicity and RMS clear their
//! floors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::mel::MelConfig;
use super::wav::Waveform;

#[derive(Debug, Clone)]
pub struct PitchConfig {
    pub sample_rate: u32,
    pub hop_length: usize,
    pub win_length: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub yin_threshold: f64,
    pub voicing_periodicity: f64,
    pub energy_floor_rms: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig {
            sample_rate: 22050,
            hop_length: 256,
            win_length: 1024,
            fmin_hz: 60.0,
            fmax_hz: 500.0,
            yin_threshold: 0.15,
            voicing_periodicity: 0.5,
            energy_floor_rms: 1e-4,
        }
    }
}

impl PitchConfig {
    pub fn from_mel(cfg: &MelConfig) -> Self {
        PitchConfig {
            sample_rate: cfg.sample_rate,
            hop_length: cfg.hop_length,
            win_length: cfg.win_length,
            ..PitchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate < 8000 {
            return Err(Error::InvalidArgument(format!(
                "sample rate {} < 8000",
                self.sample_rate
            )));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.fmin_hz <= 0.0 || self.fmax_hz <= self.fmin_hz || self.fmax_hz >= nyquist {
            return Err(Error::InvalidArgument(format!(
                "f0 search range [{}, {}] must sit inside (0, {nyquist})",
                self.fmin_hz, self.fmax_hz
            )));
        }
        Ok(())
    }
}

/// Per-frame F0, voicing, and periodicity aligned to mel frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub f0_hz: Vec<f64>,
    pub vuv: Vec<bool>,
    pub periodicity: Vec<f64>,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vuv.len() != self.f0_hz.len() || self.periodicity.len() != self.f0_hz.len() {
            return Err(Error::InvalidArgument(
                "pitch track arrays differ in length".to_string(),
            ));
        }
        for i in 0..self.len() {
            if self.vuv[i] != (self.f0_hz[i] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "vuv[{i}] inconsistent with f0_hz[{i}]"
                )));
            }
            if !(0.0..=1.0).contains(&self.periodicity[i]) {
                return Err(Error::InvalidArgument(format!(
                    "periodicity[{i}] = {} outside [0,1]",
                    self.periodicity[i]
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,f0_hz,vuv,periodicity\n");
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{},{:.6},{},{:.6}",
                i,
                self.f0_hz[i],
                u8::from(self.vuv[i]),
                self.periodicity[i]
            );
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_csv(text: &str, path_for_errors: &str) -> Result<Self> {
        let mut f0 = Vec::new();
        let mut vuv = Vec::new();
        let mut periodicity = Vec::new();
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header.trim() != "frame,f0_hz,vuv,periodicity" {
            return Err(Error::Format {
                path: path_for_errors.to_string(),
                detail: format!("unexpected header '{header}'"),
            });
        }
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Format {
                    path: path_for_errors.to_string(),
                    detail: format!("line {}: expected 4 fields", ln + 2),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::Format {
                    path: path_for_errors.to_string(),
                    detail: format!("line {}: bad number '{s}'", ln + 2),
                })
            };
            f0.push(parse(fields[1])?);
            vuv.push(parse(fields[2])? != 0.0);
            periodicity.push(parse(fields[3])?);
        }
        let track = PitchTrack {
            f0_hz: f0,
            vuv,
            periodicity,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv(&text, &path.display().to_string())
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

pub fn estimate_f0_vuv(w: &Waveform, cfg: &PitchConfig) -> Result<PitchTrack> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "waveform rate {} != pitch config rate {}",
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
    let sr = cfg.sample_rate as f64;
    let tau_min = (sr / cfg.fmax_hz).floor().max(2.0) as usize;
    let tau_max = (sr / cfg.fmin_hz).ceil() as usize;
    let win = cfg.win_length;
    let n_frames = 1 + w.samples.len() / cfg.hop_length;
    let pad = win / 2;

    let mut f0 = Vec::with_capacity(n_frames);
    let mut vuv = Vec::with_capacity(n_frames);
    let mut periodicity = Vec::with_capacity(n_frames);

    let mut frame = vec![0.0f64; win + tau_max + 1];
    let mut diff = vec![0.0f64; tau_max + 1];
    let mut cmnd = vec![0.0f64; tau_max + 1];

    for t in 0..n_frames {
        let start = t as isize * cfg.hop_length as isize - pad as isize;
        for (i, fv) in frame.iter_mut().enumerate() {
            *fv = w.samples[reflect_index(start + i as isize, w.samples.len())];
        }
        let rms = {
            let e: f64 = frame[..win].iter().map(|s| s * s).sum();
            (e / win as f64).sqrt()
        };

        for (tau, d) in diff.iter_mut().enumerate().skip(1) {
            let mut acc = 0.0;
            for i in 0..win {
                let delta = frame[i] - frame[i + tau];
                acc += delta * delta;
            }
            *d = acc;
        }
        cmnd[0] = 1.0;
        let mut running = 0.0;
        for tau in 1..=tau_max {
            running += diff[tau];
            cmnd[tau] = if running > 0.0 {
                diff[tau] * tau as f64 / running
            } else {
                1.0
            };
        }

        // first dip under the threshold, else the global minimum in range
        let hi = tau_max.min(cmnd.len() - 1);
        let mut tau_star = None;
        for tau in tau_min..=hi {
            if cmnd[tau] < cfg.yin_threshold {
                let mut tt = tau;
                while tt + 1 <= hi && cmnd[tt + 1] < cmnd[tt] {
                    tt += 1;
                }
                tau_star = Some(tt);
                break;
            }
        }
        let tau_star = tau_star.unwrap_or_else(|| {
            (tau_min..=hi)
                .min_by(|a, b| cmnd[*a].partial_cmp(&cmnd[*b]).unwrap())
                .unwrap()
        });

        // parabolic interpolation of the minimum
        let (lag, d_min) = if tau_star > tau_min && tau_star < hi {
            let (a, b, c) = (cmnd[tau_star - 1], cmnd[tau_star], cmnd[tau_star + 1]);
            let denom = a - 2.0 * b + c;
            if denom.abs() > 1e-12 {
                let shift = 0.5 * (a - c) / denom;
                let shift = shift.clamp(-1.0, 1.0);
                (
                    tau_star as f64 + shift,
                    (b - 0.25 * (a - c) * shift).max(0.0),
                )
            } else {
                (tau_star as f64, b)
            }
        } else {
            (tau_star as f64, cmnd[tau_star])
        };

        let p = (1.0 - d_min).clamp(0.0, 1.0);
        let freq = sr / lag;
        let voiced = p >= cfg.voicing_periodicity
            && rms >= cfg.energy_floor_rms
            && freq >= cfg.fmin_hz
            && freq <= cfg.fmax_hz;
        f0.push(if voiced { freq } else { 0.0 });
        vuv.push(voiced);
        periodicity.push(p);
    }

    Ok(PitchTrack {
        f0_hz: f0,
        vuv,
        periodicity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, rate: u32, amp: f64) -> Waveform {
        let n = (secs * rate as f64) as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn pure_sine_recovers_f0() {
        let w = sine(220.0, 1.0, 22050, 0.5);
        let track = estimate_f0_vuv(&w, &PitchConfig::default()).unwrap();
        track.validate().unwrap();
        let within: usize = track
            .f0_hz
            .iter()
            .filter(|f| (**f - 220.0).abs() <= 2.0)
            .count();
        assert!(
            within as f64 >= 0.95 * track.len() as f64,
            "only {within}/{} frames within 2 Hz",
            track.len()
        );
        assert!(track.vuv.iter().all(|v| *v));
    }

    #[test]
    fn white_noise_mostly_unvoiced() {
        // deterministic LCG noise at roughly -20 dBFS
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64 - 1.0) * 0.1
        };
        let samples: Vec<f64> = (0..22050).map(|_| next()).collect();
        let w = Waveform::new(samples, 22050).unwrap();
        let track = estimate_f0_vuv(&w, &PitchConfig::default()).unwrap();
        let voiced = track.vuv.iter().filter(|v| **v).count();
        assert!(
            voiced as f64 <= 0.05 * track.len() as f64,
            "{voiced}/{} frames voiced on noise",
            track.len()
        );
    }

    #[test]
    fn digital_silence_is_unvoiced() {
        let w = Waveform::new(vec![0.0; 8192], 22050).unwrap();
        let track = estimate_f0_vuv(&w, &PitchConfig::default()).unwrap();
        assert!(track.vuv.iter().all(|v| !*v));
        assert!(track.f0_hz.iter().all(|f| *f == 0.0));
    }

    #[test]
    fn gain_invariance() {
        let base = sine(173.0, 0.7, 22050, 0.9);
        let ref_track = estimate_f0_vuv(&base, &PitchConfig::default()).unwrap();
        for gain in [0.1, 0.3, 1.0] {
            let scaled = Waveform::new(
                base.samples.iter().map(|s| s * gain).collect(),
                22050,
            )
            .unwrap();
            let track = estimate_f0_vuv(&scaled, &PitchConfig::default()).unwrap();
            assert_eq!(track.vuv, ref_track.vuv);
            for (a, b) in track.f0_hz.iter().zip(&ref_track.f0_hz) {
                assert!((a - b).abs() < 0.1, "f0 moved {a} vs {b} at gain {gain}");
            }
        }
    }

    #[test]
    fn invalid_search_range_rejected() {
        let cfg = PitchConfig {
            fmin_hz: 500.0,
            fmax_hz: 100.0,
            ..PitchConfig::default()
        };
        let w = sine(200.0, 0.2, 22050, 0.5);
        assert!(estimate_f0_vuv(&w, &cfg).is_err());
        let cfg2 = PitchConfig {
            fmax_hz: 20000.0,
            ..PitchConfig::default()
        };
        assert!(estimate_f0_vuv(&w, &cfg2).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let track = PitchTrack {
            f0_hz: vec![220.0, 0.0, 180.5],
            vuv: vec![true, false, true],
            periodicity: vec![0.95, 0.1, 0.8],
        };
        let csv = track.to_csv();
        let back = PitchTrack::from_csv(&csv, "mem").unwrap();
        assert_eq!(back.vuv, track.vuv);
        for (a, b) in back.f0_hz.iter().zip(&track.f0_hz) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn frame_count_matches_mel() {
        let mel_cfg = MelConfig::default();
        let w = sine(200.0, 0.5, 22050, 0.5);
        let track = estimate_f0_vuv(&w, &PitchConfig::from_mel(&mel_cfg)).unwrap();
        assert_eq!(track.len(), mel_cfg.frames_for(w.samples.len()));
    }
}
