//! Audio ingestion and feature extraction: WAV IO, STFT/mel frontend, and
//! F0/voicing estimation aligned to mel frames.

pub mod mel;
pub mod pitch;
pub mod wav;

pub use mel::{mel_filterbank, mel_spectrogram, Mel, MelConfig};
pub use pitch::{estimate_f0_vuv, PitchConfig, PitchTrack};
pub use wav::{load_wav, save_wav_pcm16, Waveform};
