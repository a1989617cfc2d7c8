//! Log-Mel filterbank frontend for 16 kHz mono audio.
//!
//! Pipeline: pre-emphasis, 25 ms frames with 10 ms hop, Hamming window,
//! 512-point FFT power spectrum, 40 triangular mel filters between 20 Hz
//! and 7600 Hz, natural log with an absolute floor.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::io::{Read, Write};
use std::path::Path;

pub const SAMPLE_RATE: usize = 16_000;
pub const FRAME_LEN: usize = 400;
pub const FRAME_HOP: usize = 160;
pub const FFT_LEN: usize = 512;
pub const NUM_MELS: usize = 40;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const MEL_LOW_HZ: f64 = 20.0;
pub const MEL_HIGH_HZ: f64 = 7600.0;
pub const LOG_FLOOR: f64 = 1e-10;

const CACHE_MAGIC: &[u8; 8] = b"FKWSFEAT";
const CACHE_VERSION: u32 = 1;

/// Tunable frontend knobs. Frame geometry (25 ms / 10 ms) and the filter
/// count are fixed by the feature contract; these cover the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendParams {
    pub pre_emphasis: f64,
    pub fft_len: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub log_floor: f64,
}

impl Default for FrontendParams {
    fn default() -> Self {
        FrontendParams {
            pre_emphasis: PRE_EMPHASIS,
            fft_len: FFT_LEN,
            mel_low_hz: MEL_LOW_HZ,
            mel_high_hz: MEL_HIGH_HZ,
            log_floor: LOG_FLOOR,
        }
    }
}

impl FrontendParams {
    pub fn validate(&self) -> Result<()> {
        if self.fft_len < FRAME_LEN {
            return Err(Error::Validation(format!(
                "fft length {} below frame length {FRAME_LEN}",
                self.fft_len
            )));
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if !(0.0 <= self.mel_low_hz
            && self.mel_low_hz < self.mel_high_hz
            && self.mel_high_hz <= nyquist)
        {
            return Err(Error::Validation(format!(
                "mel band {}..{} Hz invalid for {nyquist} Hz Nyquist",
                self.mel_low_hz, self.mel_high_hz
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::Validation("log floor must be positive".into()));
        }
        Ok(())
    }
}

/// Log-Mel features, one row of [`NUM_MELS`] values per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    num_frames: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(num_frames: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_frames * NUM_MELS {
            return Err(Error::Shape(format!(
                "feature matrix: {} values for {num_frames} frames",
                data.len()
            )));
        }
        Ok(FeatureMatrix { num_frames, data })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * NUM_MELS..(t + 1) * NUM_MELS]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Number of complete frames a signal of `num_samples` yields.
pub fn num_frames_for(num_samples: usize) -> Option<usize> {
    if num_samples < FRAME_LEN {
        None
    } else {
        Some((num_samples - FRAME_LEN) / FRAME_HOP + 1)
    }
}

fn hamming(n: usize) -> f64 {
    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (FRAME_LEN - 1) as f64).cos()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filter weights over the one-sided FFT bins, `[NUM_MELS, fft_len/2 + 1]`.
fn mel_filterbank(params: &FrontendParams) -> Vec<f64> {
    let n_bins = params.fft_len / 2 + 1;
    let mel_lo = hz_to_mel(params.mel_low_hz);
    let mel_hi = hz_to_mel(params.mel_high_hz);
    let edges: Vec<f64> = (0..NUM_MELS + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (NUM_MELS + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / params.fft_len as f64;
    let mut weights = vec![0.0; NUM_MELS * n_bins];
    for m in 0..NUM_MELS {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            weights[m * n_bins + k] = w;
        }
    }
    weights
}

/// Computes the log-Mel feature matrix with the default frontend.
pub fn compute_fbank(samples: &[f64]) -> Result<FeatureMatrix> {
    compute_fbank_with(samples, &FrontendParams::default())
}

/// Computes the log-Mel feature matrix for a mono 16 kHz signal.
///
/// Fails with `TooShort` when the signal holds less than one full frame.
/// Trailing samples that do not fill a frame are ignored.
pub fn compute_fbank_with(samples: &[f64], params: &FrontendParams) -> Result<FeatureMatrix> {
    params.validate()?;
    let t_len = num_frames_for(samples.len()).ok_or_else(|| {
        Error::TooShort(format!(
            "signal of {} samples is shorter than one {FRAME_LEN}-sample frame",
            samples.len()
        ))
    })?;

    // pre-emphasis over the whole signal; first sample passes through
    let mut emphasized = Vec::with_capacity(samples.len());
    emphasized.push(samples[0]);
    for i in 1..samples.len() {
        emphasized.push(samples[i] - params.pre_emphasis * samples[i - 1]);
    }

    let window: Vec<f64> = (0..FRAME_LEN).map(hamming).collect();
    let filters = mel_filterbank(params);
    let n_bins = params.fft_len / 2 + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(params.fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); params.fft_len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let mut data = Vec::with_capacity(t_len * NUM_MELS);
    let mut power = vec![0.0; n_bins];
    for t in 0..t_len {
        let start = t * FRAME_HOP;
        for n in 0..FRAME_LEN {
            buf[n] = Complex::new(emphasized[start + n] * window[n], 0.0);
        }
        for slot in buf[FRAME_LEN..].iter_mut() {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n_bins {
            power[k] = buf[k].re * buf[k].re + buf[k].im * buf[k].im;
        }
        for m in 0..NUM_MELS {
            let row = &filters[m * n_bins..(m + 1) * n_bins];
            let mut energy = 0.0;
            for (w, p) in row.iter().zip(power.iter()) {
                energy += w * p;
            }
            data.push(energy.max(params.log_floor).ln());
        }
    }

    FeatureMatrix::new(t_len, data)
}

/// Writes a feature matrix to the binary cache format (values stored f32).
pub fn write_feature_cache(path: &Path, feats: &FeatureMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + feats.data.len() * 4);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(feats.num_frames as u32).to_le_bytes());
    buf.extend_from_slice(&(NUM_MELS as u32).to_le_bytes());
    for &v in &feats.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Reads a feature matrix previously written by [`write_feature_cache`].
pub fn read_feature_cache(path: &Path) -> Result<FeatureMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 {
        return Err(Error::Format(format!(
            "feature cache {}: truncated header",
            path.display()
        )));
    }
    if &bytes[..8] != CACHE_MAGIC {
        return Err(Error::Format(format!(
            "feature cache {}: bad magic",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Unsupported(format!(
            "feature cache {}: version {version}",
            path.display()
        )));
    }
    let t_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if dim != NUM_MELS {
        return Err(Error::Format(format!(
            "feature cache {}: {dim} coefficients per frame, expected {NUM_MELS}",
            path.display()
        )));
    }
    let need = 20 + t_len * NUM_MELS * 4;
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "feature cache {}: {} bytes, expected {need}",
            path.display(),
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(t_len * NUM_MELS);
    for chunk in bytes[20..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    FeatureMatrix::new(t_len, data)
}
