//! Corpus handling: WAV I/O, manifests, training-window assembly, and the
//! synthetic corpus generator.

pub mod manifest;
pub mod synth;
pub mod wav;
pub mod windows;

pub use manifest::{read_manifest, write_manifest, Domain, ManifestEntry, Polarity};
pub use synth::{generate_corpus, CorpusLayout, SynthCounts};
pub use wav::{read_wav, write_wav};
pub use windows::{make_windows, TrainingWindow, WindowSet, WIN_BACK, WIN_FRAMES};

use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};
use std::path::Path;

/// One audio clip with its labels.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: usize,
    pub clip_id: String,
    pub domain: Domain,
    pub polarity: Polarity,
}

/// Loads the clip an entry points at, attaching its manifest labels.
pub fn load_clip(manifest_path: &Path, entry: &ManifestEntry) -> Result<AudioClip> {
    let path = entry.resolve(manifest_path);
    let samples = read_wav(&path)?;
    if samples.is_empty() {
        return Err(Error::Validation(format!(
            "{}: clip holds no samples",
            path.display()
        )));
    }
    Ok(AudioClip {
        samples,
        sample_rate: SAMPLE_RATE,
        clip_id: entry.path.clone(),
        domain: entry.domain,
        polarity: entry.polarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_clip_resolves_relative_to_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let wav_path = dir.path().join("c.wav");
        write_wav(&wav_path, &vec![0.1; 800]).unwrap();
        let manifest_path = dir.path().join("m.jsonl");
        let entry = ManifestEntry {
            path: "c.wav".into(),
            domain: Domain::D1m,
            polarity: Polarity::Negative,
            ends: vec![],
        };
        let clip = load_clip(&manifest_path, &entry).unwrap();
        assert_eq!(clip.samples.len(), 800);
        assert_eq!(clip.domain, Domain::D1m);
        assert_eq!(clip.clip_id, "c.wav");
    }
}
