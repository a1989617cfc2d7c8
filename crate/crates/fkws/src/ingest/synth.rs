//! Synthetic three-domain corpus generator.
//!
//! Each generated utterance is a 1.6 s dry signal rendered into all three
//! recording domains: 0.25 m stays clean (plus a tiny dither so silence is
//! not digitally exact), 1 m gets a gentle high-frequency rolloff, a short
//! exponential-decay reverb tail and 15 dB SNR noise, 3 m a strong rolloff,
//! a longer tail, 5 dB SNR and 6 dB attenuation. The rolloff is the part a
//! close-talk model cannot shrug off: it reweights the keyword's segments
//! against each other, while noise and reverb mostly raise the floor.
//! Positives carry a fixed "keyword": three tone-chirp segments in a fixed
//! frequency order with known end samples, so word end frames are exact.
//! Negatives are either unrelated tone sequences or the keyword segments in
//! a shuffled order, which defeats the detector's word-order constraint
//! without changing the per-segment acoustics.

use crate::dsp::{FRAME_HOP, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::ingest::manifest::{write_manifest, Domain, ManifestEntry, Polarity};
use crate::ingest::wav::write_wav;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::path::{Path, PathBuf};

/// Clip length in samples (1.6 s at 16 kHz).
pub const CLIP_SAMPLES: usize = (16 * 16_000) / 10;

/// Keyword segment base frequencies in Hz, one per word, fixed order.
pub const WORD_FREQS: [f64; 3] = [700.0, 1300.0, 2200.0];
const SEG_SAMPLES: usize = 3_520; // 0.22 s
const CHIRP_RATIO: f64 = 1.12;
const FADE_SAMPLES: usize = 160; // 10 ms raised-cosine edges

/// Per-domain, per-split clip counts. Clips are paired: every dry signal is
/// rendered once per domain, so each count applies to all three domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthCounts {
    pub train_positives: usize,
    pub train_negatives: usize,
    pub test_positives: usize,
    pub test_negatives: usize,
}

/// Locations of the generated manifests.
#[derive(Debug, Clone)]
pub struct CorpusLayout {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps the log finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn rms(signal: &[f64]) -> f64 {
    (signal.iter().map(|v| v * v).sum::<f64>() / signal.len() as f64).sqrt()
}

/// Adds a faded linear chirp of `dur` samples starting at `onset`.
fn add_chirp(signal: &mut [f64], onset: usize, dur: usize, f0: f64, f1: f64, amp: f64) {
    let sr = SAMPLE_RATE as f64;
    for n in 0..dur {
        let t = n as f64 / sr;
        // instantaneous phase of a linear sweep f0 -> f1
        let phase = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * (f1 - f0) / (dur as f64 / sr) * t * t);
        let fade_in = (n + 1).min(FADE_SAMPLES) as f64 / FADE_SAMPLES as f64;
        let fade_out = (dur - n).min(FADE_SAMPLES) as f64 / FADE_SAMPLES as f64;
        let env = 0.5 * (1.0 - (std::f64::consts::PI * fade_in).cos())
            * 0.5
            * (1.0 - (std::f64::consts::PI * fade_out).cos());
        signal[onset + n] += amp * env * phase.sin();
    }
}

/// Builds a dry positive clip; returns the signal and per-word end samples.
fn dry_positive(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let mut signal = vec![0.0; CLIP_SAMPLES];
    let mut onset = rng.gen_range(4_800..=6_720); // 0.30 - 0.42 s
    let mut ends = Vec::with_capacity(WORD_FREQS.len());
    for &base in &WORD_FREQS {
        let f0 = base * rng.gen_range(0.96..1.04);
        let amp = 0.25 * rng.gen_range(0.8..1.2);
        add_chirp(&mut signal, onset, SEG_SAMPLES, f0, f0 * CHIRP_RATIO, amp);
        ends.push(onset + SEG_SAMPLES);
        onset += SEG_SAMPLES + rng.gen_range(320..=800); // 20 - 50 ms gap
    }
    (signal, ends)
}

/// Builds a dry negative clip: two thirds are unrelated tone runs, one
/// third reuses the keyword segments in a non-identity order.
fn dry_negative(rng: &mut ChaCha8Rng, index: usize) -> Vec<f64> {
    let mut signal = vec![0.0; CLIP_SAMPLES];
    let mut onset = rng.gen_range(4_800..=6_720);
    if index % 3 == 2 {
        // shuffled keyword: same segments, wrong word order
        let mut order: Vec<usize> = (0..WORD_FREQS.len()).collect();
        loop {
            order.shuffle(rng);
            if order.iter().enumerate().any(|(slot, &w)| slot != w) {
                break;
            }
        }
        for &w in &order {
            let f0 = WORD_FREQS[w] * rng.gen_range(0.96..1.04);
            let amp = 0.25 * rng.gen_range(0.8..1.2);
            add_chirp(&mut signal, onset, SEG_SAMPLES, f0, f0 * CHIRP_RATIO, amp);
            onset += SEG_SAMPLES + rng.gen_range(320..=800);
        }
    } else {
        for _ in 0..3 {
            let f0 = rng.gen_range(400.0..3_000.0);
            let dur = rng.gen_range(2_880..=4_160); // 0.18 - 0.26 s
            let amp = 0.25 * rng.gen_range(0.8..1.2);
            add_chirp(&mut signal, onset, dur, f0, f0 * rng.gen_range(0.9..1.1), amp);
            onset += dur + rng.gen_range(320..=800);
        }
    }
    signal
}

/// Linear convolution via FFT, truncated to the first `out_len` samples.
fn fft_convolve(signal: &[f64], kernel: &[f64], out_len: usize) -> Vec<f64> {
    let full = signal.len() + kernel.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex<f64>> = signal
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut b: Vec<Complex<f64>> = kernel
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x *= *y;
    }
    inv.process(&mut a);
    a[..out_len.min(full)]
        .iter()
        .map(|c| c.re / size as f64)
        .collect()
}

/// One-pole low-pass with unity DC gain, the fixed spectral coloration a
/// microphone picks up with distance; `fc` is the corner frequency in Hz.
fn one_pole_lowpass(signal: &[f64], fc: f64) -> Vec<f64> {
    let a = (-2.0 * std::f64::consts::PI * fc / SAMPLE_RATE as f64).exp();
    let mut state = 0.0;
    signal
        .iter()
        .map(|&x| {
            state = a * state + (1.0 - a) * x;
            state
        })
        .collect()
}

/// Exponentially decaying noise tail with a unit direct path; `rt` is the
/// 60 dB decay time in seconds.
fn impulse_response(rt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = (rt * SAMPLE_RATE as f64) as usize;
    let decay = 1000.0_f64.ln() / (rt * SAMPLE_RATE as f64); // 60 dB over rt seconds
    let mut ir = Vec::with_capacity(len);
    ir.push(1.0);
    for n in 1..len {
        ir.push(0.3 * gaussian(rng) * (-decay * n as f64).exp());
    }
    ir
}

/// Renders a dry signal into one domain.
fn render(dry: &[f64], domain: Domain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = match domain {
        Domain::D025 => {
            // -55 dBFS dither keeps silent stretches off the exact log floor
            let sigma = 10f64.powf(-55.0 / 20.0);
            dry.iter().map(|&v| v + sigma * gaussian(rng)).collect::<Vec<f64>>()
        }
        Domain::D1m | Domain::D3m => {
            let (rt, snr_db, gain, cutoff) = match domain {
                Domain::D1m => (0.25, 15.0, 1.0, 2_500.0),
                _ => (0.6, 5.0, 0.5, 800.0),
            };
            let colored = one_pole_lowpass(dry, cutoff);
            let ir = impulse_response(rt, rng);
            let mut wet = fft_convolve(&colored, &ir, dry.len());
            let dry_rms = rms(dry).max(1e-9);
            let scale = dry_rms / rms(&wet).max(1e-12);
            for v in wet.iter_mut() {
                *v *= scale;
            }
            let sigma = dry_rms / 10f64.powf(snr_db / 20.0);
            for v in wet.iter_mut() {
                *v = gain * (*v + sigma * gaussian(rng));
            }
            wet
        }
    };
    for v in out.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    out
}

fn generate_split(
    dir: &Path,
    positives: usize,
    negatives: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for i in 0..positives {
        let (dry, end_samples) = dry_positive(rng);
        let ends: Vec<usize> = end_samples.iter().map(|&s| s / FRAME_HOP).collect();
        for domain in Domain::ALL {
            let name = format!("pos_{i:04}_{}.wav", domain.slug());
            write_wav(&dir.join(&name), &render(&dry, domain, rng))?;
            entries.push(ManifestEntry {
                path: name,
                domain,
                polarity: Polarity::Positive,
                ends: ends.clone(),
            });
        }
    }
    for i in 0..negatives {
        let dry = dry_negative(rng, i);
        for domain in Domain::ALL {
            let name = format!("neg_{i:04}_{}.wav", domain.slug());
            write_wav(&dir.join(&name), &render(&dry, domain, rng))?;
            entries.push(ManifestEntry {
                path: name,
                domain,
                polarity: Polarity::Negative,
                ends: Vec::new(),
            });
        }
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

/// Generates the full corpus under `root` (train/ and test/ subdirectories).
/// Deterministic: the same seed and counts produce bit-identical files.
pub fn generate_corpus(root: &Path, counts: &SynthCounts, seed: u64) -> Result<CorpusLayout> {
    if counts.train_positives == 0
        || counts.train_negatives == 0
        || counts.test_positives == 0
        || counts.test_negatives == 0
    {
        return Err(Error::Validation(
            "corpus counts must all be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_manifest = generate_split(
        &root.join("train"),
        counts.train_positives,
        counts.train_negatives,
        &mut rng,
    )?;
    let test_manifest = generate_split(
        &root.join("test"),
        counts.test_positives,
        counts.test_negatives,
        &mut rng,
    )?;
    Ok(CorpusLayout {
        train_manifest,
        test_manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::compute_fbank;
    use crate::ingest::manifest::read_manifest;
    use crate::ingest::wav::read_wav;

    fn tiny_counts() -> SynthCounts {
        SynthCounts {
            train_positives: 2,
            train_negatives: 3,
            test_positives: 1,
            test_negatives: 1,
        }
    }

    #[test]
    fn zero_counts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut counts = tiny_counts();
        counts.test_negatives = 0;
        assert!(matches!(
            generate_corpus(dir.path(), &counts, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn same_seed_gives_bit_identical_corpora() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_corpus(d1.path(), &tiny_counts(), 42).unwrap();
        generate_corpus(d2.path(), &tiny_counts(), 42).unwrap();
        for rel in [
            "train/manifest.jsonl",
            "train/pos_0000_d025.wav",
            "train/pos_0001_d3m.wav",
            "train/neg_0002_d1m.wav",
            "test/manifest.jsonl",
            "test/pos_0000_d1m.wav",
        ] {
            let a = std::fs::read(d1.path().join(rel)).unwrap();
            let b = std::fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs between runs");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_corpus(d1.path(), &tiny_counts(), 1).unwrap();
        generate_corpus(d2.path(), &tiny_counts(), 2).unwrap();
        let a = std::fs::read(d1.path().join("train/pos_0000_d025.wav")).unwrap();
        let b = std::fs::read(d2.path().join("train/pos_0000_d025.wav")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn manifest_counts_and_pairing() {
        let dir = tempfile::tempdir().unwrap();
        let layout = generate_corpus(dir.path(), &tiny_counts(), 7).unwrap();
        let train = read_manifest(&layout.train_manifest).unwrap();
        assert_eq!(train.len(), (2 + 3) * 3);
        // the three renders of one dry positive share end frames
        let pos0: Vec<_> = train
            .iter()
            .filter(|e| e.path.starts_with("pos_0000"))
            .collect();
        assert_eq!(pos0.len(), 3);
        assert_eq!(pos0[0].ends, pos0[1].ends);
        assert_eq!(pos0[1].ends, pos0[2].ends);
        assert_eq!(pos0[0].ends.len(), 3);
    }

    #[test]
    fn end_frames_leave_room_for_windows() {
        let dir = tempfile::tempdir().unwrap();
        let layout = generate_corpus(dir.path(), &tiny_counts(), 11).unwrap();
        let frames = (CLIP_SAMPLES - 400) / FRAME_HOP + 1;
        for entry in read_manifest(&layout.train_manifest).unwrap() {
            for &e in &entry.ends {
                assert!(e >= 20, "end frame {e} too early");
                assert!(e + 20 <= frames, "end frame {e} too late for {frames} frames");
            }
        }
    }

    #[test]
    fn far_domain_is_attenuated() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(dir.path(), &tiny_counts(), 13).unwrap();
        let near = read_wav(&dir.path().join("train/pos_0000_d025.wav")).unwrap();
        let far = read_wav(&dir.path().join("train/pos_0000_d3m.wav")).unwrap();
        assert!(rms(&far) < rms(&near), "3m clip should be quieter");
    }

    #[test]
    fn clips_are_valid_decoder_input() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(dir.path(), &tiny_counts(), 17).unwrap();
        for name in ["train/pos_0000_d1m.wav", "train/neg_0000_d3m.wav"] {
            let samples = read_wav(&dir.path().join(name)).unwrap();
            assert_eq!(samples.len(), CLIP_SAMPLES);
            assert!(samples.iter().all(|&v| (-1.0..=1.0).contains(&v)));
            let feats = compute_fbank(&samples).unwrap();
            assert_eq!(feats.num_frames(), (CLIP_SAMPLES - 400) / FRAME_HOP + 1);
        }
    }

    #[test]
    fn far_tail_keeps_energy_after_dry_content_ends() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(dir.path(), &tiny_counts(), 19).unwrap();
        let near = read_wav(&dir.path().join("train/pos_0000_d025.wav")).unwrap();
        let far = read_wav(&dir.path().join("train/pos_0000_d1m.wav")).unwrap();
        // energy in the final 0.1 s: dry clips are silent there, reverb is not
        let tail = CLIP_SAMPLES - 1600;
        let near_tail = rms(&near[tail..]);
        let far_tail = rms(&far[tail..]);
        assert!(far_tail > near_tail * 3.0, "{far_tail} vs {near_tail}");
    }
}
