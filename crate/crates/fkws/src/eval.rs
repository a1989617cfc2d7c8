//! Threshold sweeps and the operating metric: false-reject rate at a
//! false-alarm budget per hour of negative audio.
//!
//! Positive clips are scored by their maximum window confidence; negative
//! clips contribute the trigger confidences a threshold-zero streaming
//! pass emits. A sweep then counts, per candidate threshold, the false
//! alarms per hour and the fraction of rejected positives.

use serde::Serialize;

use crate::detect::{
    confidence, smooth, stream_detect, DetectorConfig, KeywordSpec, PosteriorSequence,
};
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::models::{forward_keyword, DomainEmbedding, KeywordNet, INPUT_SIDE};
use crate::netcore::Tensor;

/// Everything a sweep needs: per-clip positive scores, per-clip negative
/// trigger confidences, and how much negative audio produced them.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub positives: Vec<(String, f64)>,
    pub negatives: Vec<(String, Vec<f64>)>,
    pub negative_audio_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fa_per_hour: f64,
    pub fr_rate: f64,
}

/// 1001 uniformly spaced thresholds covering [0, 1].
pub fn default_grid() -> Vec<f64> {
    (0..=1000).map(|i| i as f64 / 1000.0).collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation("empty threshold grid".into()));
    }
    for pair in grid.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::Validation(format!(
                "threshold grid not strictly ascending at {} / {}",
                pair[0], pair[1]
            )));
        }
    }
    if grid[0] < 0.0 || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("thresholds must be finite and nonnegative".into()));
    }
    Ok(())
}

/// One operating point per grid threshold.
pub fn sweep(scored: &ScoredSet, grid: &[f64]) -> Result<Vec<OperatingPoint>> {
    validate_grid(grid)?;
    if scored.positives.is_empty() {
        return Err(Error::Validation("no positive clips scored".into()));
    }
    if scored.negatives.is_empty() {
        return Err(Error::Validation("no negative clips scored".into()));
    }
    if !(scored.negative_audio_hours > 0.0) {
        return Err(Error::Validation(format!(
            "nonpositive negative audio duration {}",
            scored.negative_audio_hours
        )));
    }

    let mut pos: Vec<f64> = scored.positives.iter().map(|(_, h)| *h).collect();
    pos.sort_by(|a, b| a.total_cmp(b));
    let mut neg: Vec<f64> = scored
        .negatives
        .iter()
        .flat_map(|(_, confs)| confs.iter().copied())
        .collect();
    neg.sort_by(|a, b| a.total_cmp(b));

    let mut points = Vec::with_capacity(grid.len());
    for &theta in grid {
        let rejected = pos.partition_point(|&h| h < theta);
        let alarms = neg.len() - neg.partition_point(|&c| c < theta);
        points.push(OperatingPoint {
            threshold: theta,
            fa_per_hour: alarms as f64 / scored.negative_audio_hours,
            fr_rate: rejected as f64 / pos.len() as f64,
        });
    }
    for pair in points.windows(2) {
        assert!(pair[0].fr_rate <= pair[1].fr_rate, "false-reject rate must not fall");
        assert!(pair[0].fa_per_hour >= pair[1].fa_per_hour, "alarm rate must not rise");
    }
    Ok(points)
}

/// The chosen operating point plus its grid neighbors.
#[derive(Debug, Clone, Serialize)]
pub struct FrAtFaResult {
    pub chosen: OperatingPoint,
    /// Last grid point still above the alarm budget (one step tighter).
    pub prev: Option<OperatingPoint>,
    /// Grid point one step past the chosen threshold.
    pub next: Option<OperatingPoint>,
    /// True when no threshold met the budget; `chosen` is then the
    /// highest-threshold point.
    pub saturated: bool,
}

/// Smallest threshold whose alarm rate fits the budget.
pub fn fr_at_fa(points: &[OperatingPoint], target_fa: f64) -> Result<FrAtFaResult> {
    if points.is_empty() {
        return Err(Error::Validation("empty sweep".into()));
    }
    match points.iter().position(|p| p.fa_per_hour <= target_fa) {
        Some(idx) => Ok(FrAtFaResult {
            chosen: points[idx],
            prev: idx.checked_sub(1).map(|i| points[i]),
            next: points.get(idx + 1).copied(),
            saturated: false,
        }),
        None => Ok(FrAtFaResult {
            chosen: *points.last().unwrap(),
            prev: points.len().checked_sub(2).map(|i| points[i]),
            next: None,
            saturated: true,
        }),
    }
}

/// CSV text of the whole sweep, one row per threshold.
pub fn det_points(points: &[OperatingPoint]) -> String {
    let mut out = String::from("threshold,fa_per_hour,fr_rate\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fa_per_hour, p.fr_rate));
    }
    out
}

fn softmax(logits: &Tensor) -> Vec<f64> {
    let zmax = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|&z| (z - zmax).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Runs the classifier over every fully covered 40-frame window of a
/// clip; row `r` of the result holds the posteriors of the window
/// centered on original frame `r + 20`.
pub fn clip_posteriors(
    net: &KeywordNet,
    feats: &FeatureMatrix,
    embedding: Option<&DomainEmbedding>,
) -> Result<PosteriorSequence> {
    let t = feats.num_frames();
    if t < INPUT_SIDE {
        return Err(Error::TooShort(format!(
            "{t} frames cannot fill a {INPUT_SIDE}-frame classifier window"
        )));
    }
    let rows = t - INPUT_SIDE + 1;
    let classes = net.num_words + 1;
    let mut data = Vec::with_capacity(rows * classes);
    let mut window = Vec::with_capacity(INPUT_SIDE * feats.row(0).len());
    for start in 0..rows {
        window.clear();
        for frame in start..start + INPUT_SIDE {
            window.extend_from_slice(feats.row(frame));
        }
        let record = forward_keyword(net, &window, embedding)?;
        data.extend(softmax(&record.word_logits));
    }
    PosteriorSequence::new(rows, classes, data)
}

/// Maximum confidence over every scoring window of the clip — the
/// positive-clip score.
pub fn positive_score(
    p: &PosteriorSequence,
    config: &DetectorConfig,
    spec: &KeywordSpec,
) -> Result<f64> {
    config.validate(spec.num_words())?;
    let ts = config.window;
    if p.frames() < ts {
        return Err(Error::TooShort(format!(
            "{}-frame sequence shorter than the {ts}-frame scoring window",
            p.frames()
        )));
    }
    let smoothed = smooth(p, config.smoothing);
    let mut best = 0.0f64;
    for start in 0..=(p.frames() - ts) {
        best = best.max(confidence(&smoothed.window(start, ts)?, spec)?);
    }
    Ok(best)
}

/// Trigger confidences a threshold-zero streaming pass emits — the
/// negative-clip contribution to false-alarm counting.
pub fn negative_triggers(
    p: &PosteriorSequence,
    config: &DetectorConfig,
    spec: &KeywordSpec,
) -> Result<Vec<f64>> {
    let zero = DetectorConfig { threshold: 0.0, ..*config };
    Ok(stream_detect(p, &zero, spec)?
        .into_iter()
        .map(|e| e.confidence)
        .collect())
}
