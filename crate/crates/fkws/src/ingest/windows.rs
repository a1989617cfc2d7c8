//! Turns labeled feature matrices into fixed 40x40 training windows.
//!
//! A keyword word ending at frame `e` yields the window `[e-20, e+19]`
//! labeled with the word's 1-based index. Filler windows (label 0) come
//! from negative clips anywhere, and from positive clips only where the
//! candidate window sits at least 50 frames from every word end, measured
//! window-center to end frame, which keeps fillers disjoint from every
//! keyword window.

use crate::dsp::{FeatureMatrix, NUM_MELS};
use crate::ingest::manifest::{Domain, Polarity};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Window length in frames; the CNN input is `WIN_FRAMES` x 40.
pub const WIN_FRAMES: usize = 40;
/// Frames taken before the anchor end frame.
pub const WIN_BACK: usize = 20;
/// Minimum center-to-end distance for filler starts in positive clips.
pub const FILLER_EXCLUSION: usize = 50;

/// One labeled CNN input window.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    /// Index of the source clip in the caller's clip list.
    pub clip_index: usize,
    pub domain: Domain,
    /// 0 = filler, 1..=M = keyword word index.
    pub word_label: usize,
    pub start_frame: usize,
    /// Row-major `[WIN_FRAMES, NUM_MELS]` feature patch.
    pub features: Vec<f64>,
}

/// Output of [`make_windows`]; `too_short` flags clips under 40 frames,
/// which yield no windows.
pub struct WindowSet {
    pub windows: Vec<TrainingWindow>,
    pub too_short: bool,
}

fn copy_patch(feats: &FeatureMatrix, start: usize) -> Vec<f64> {
    let mut patch = Vec::with_capacity(WIN_FRAMES * NUM_MELS);
    for t in start..start + WIN_FRAMES {
        patch.extend_from_slice(feats.row(t));
    }
    patch
}

/// Start frames in a positive clip far enough from every word end.
fn allowed_filler_starts(num_frames: usize, ends: &[usize]) -> Vec<usize> {
    (0..=num_frames - WIN_FRAMES)
        .filter(|&s| {
            let center = s + WIN_BACK;
            ends.iter()
                .all(|&e| center.abs_diff(e) >= FILLER_EXCLUSION)
        })
        .collect()
}

/// Builds the labeled windows for one clip.
///
/// Keyword windows that would cross either clip boundary are discarded.
/// `negatives_per_clip` filler windows are drawn uniformly without
/// replacement from the allowed start frames (all of them if fewer).
pub fn make_windows(
    feats: &FeatureMatrix,
    clip_index: usize,
    domain: Domain,
    polarity: Polarity,
    ends: &[usize],
    negatives_per_clip: usize,
    rng: &mut ChaCha8Rng,
) -> WindowSet {
    let t_len = feats.num_frames();
    if t_len < WIN_FRAMES {
        return WindowSet {
            windows: Vec::new(),
            too_short: true,
        };
    }

    let mut windows = Vec::new();
    if polarity == Polarity::Positive {
        for (i, &e) in ends.iter().enumerate() {
            if e < WIN_BACK {
                continue;
            }
            let start = e - WIN_BACK;
            if start + WIN_FRAMES > t_len {
                continue;
            }
            windows.push(TrainingWindow {
                clip_index,
                domain,
                word_label: i + 1,
                start_frame: start,
                features: copy_patch(feats, start),
            });
        }
    }

    let candidates = match polarity {
        Polarity::Negative => (0..=t_len - WIN_FRAMES).collect::<Vec<_>>(),
        Polarity::Positive => allowed_filler_starts(t_len, ends),
    };
    let mut chosen: Vec<usize> = candidates
        .choose_multiple(rng, negatives_per_clip)
        .copied()
        .collect();
    chosen.sort_unstable();
    for start in chosen {
        windows.push(TrainingWindow {
            clip_index,
            domain,
            word_label: 0,
            start_frame: start,
            features: copy_patch(feats, start),
        });
    }

    WindowSet {
        windows,
        too_short: false,
    }
}
