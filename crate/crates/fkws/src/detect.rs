//! Posterior smoothing, order-constrained confidence scoring, and the
//! streaming trigger loop.
//!
//! Confidence of a window is the geometric mean of the best per-word
//! posteriors taken at strictly increasing frames:
//! `h = [max over t_1 < t_2 < ... < t_M of prod_i s_{w_i}(t_i)]^(1/M)`,
//! computed by a dynamic program in O(M*T_s) using running prefix maxima.

use crate::error::{Error, Result};

/// Which network classes form the keyword, in spoken order. Class 0 is
/// the filler and can never be part of the sequence.
#[derive(Debug, Clone)]
pub struct KeywordSpec {
    word_classes: Vec<usize>,
}

impl KeywordSpec {
    pub fn new(word_classes: Vec<usize>) -> Result<Self> {
        if word_classes.is_empty() {
            return Err(Error::Validation("keyword needs at least one word".into()));
        }
        for (i, &w) in word_classes.iter().enumerate() {
            if w == 0 {
                return Err(Error::Validation("filler class 0 cannot be a keyword word".into()));
            }
            if word_classes[..i].contains(&w) {
                return Err(Error::Validation(format!("word class {w} listed twice")));
            }
        }
        Ok(KeywordSpec { word_classes })
    }

    /// The classes 1..=M in spoken order.
    pub fn in_class_order(num_words: usize) -> Result<Self> {
        KeywordSpec::new((1..=num_words).collect())
    }

    pub fn word_classes(&self) -> &[usize] {
        &self.word_classes
    }

    pub fn num_words(&self) -> usize {
        self.word_classes.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    /// Trailing-average length L in frames.
    pub smoothing: usize,
    /// Scoring window T_s in frames.
    pub window: usize,
    /// Trigger threshold on the confidence score.
    pub threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { smoothing: 30, window: 100, threshold: 0.5 }
    }
}

impl DetectorConfig {
    pub fn validate(&self, num_words: usize) -> Result<()> {
        if self.smoothing == 0 {
            return Err(Error::Validation("smoothing length must be at least 1".into()));
        }
        if self.window < num_words {
            return Err(Error::Validation(format!(
                "scoring window of {} frames cannot hold {num_words} ordered words",
                self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) || self.threshold.is_nan() {
            return Err(Error::Validation(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Per-frame class posteriors, row-major `[T, classes]`. Rows must be
/// probability distributions.
#[derive(Debug, Clone)]
pub struct PosteriorSequence {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl PosteriorSequence {
    pub fn new(frames: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * classes {
            return Err(Error::Shape(format!(
                "{} values for {frames} frames x {classes} classes",
                data.len()
            )));
        }
        for (t, row) in data.chunks_exact(classes.max(1)).enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "posterior {p} at frame {t} outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "posterior row {t} sums to {sum}"
                )));
            }
        }
        Ok(PosteriorSequence { frames, classes, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }
}

/// Trailing-averaged posteriors; no row-sum requirement (it is preserved
/// by averaging anyway, but windows of it are consumed column-wise).
#[derive(Debug, Clone)]
pub struct SmoothedPosteriors {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl SmoothedPosteriors {
    pub fn from_rows(frames: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * classes {
            return Err(Error::Shape(format!(
                "{} values for {frames} frames x {classes} classes",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("smoothed value {bad} outside [0, 1]")));
        }
        Ok(SmoothedPosteriors { frames, classes, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    /// Copy of `len` consecutive frames starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<SmoothedPosteriors> {
        if start + len > self.frames {
            return Err(Error::Index(format!(
                "window [{start}, {}) of a {}-frame sequence",
                start + len,
                self.frames
            )));
        }
        Ok(SmoothedPosteriors {
            frames: len,
            classes: self.classes,
            data: self.data[start * self.classes..(start + len) * self.classes].to_vec(),
        })
    }
}

/// Trailing average over the last `min(l, t+1)` frames ending at `t`
/// (truncated at stream start, so early frames average what exists).
pub fn smooth(p: &PosteriorSequence, l: usize) -> SmoothedPosteriors {
    assert!(l >= 1, "smoothing length must be at least 1");
    let (t_len, k) = (p.frames, p.classes);
    let mut out = vec![0.0; t_len * k];
    // summed afresh per frame: a rolling sum would not keep L=1 an exact
    // identity, and the window is small enough that this stays cheap
    for t in 0..t_len {
        let first = (t + 1).saturating_sub(l);
        let span = (t + 1 - first) as f64;
        for c in 0..k {
            let sum: f64 = (first..=t).map(|j| p.row(j)[c]).sum();
            // guard the [0,1] invariant against rounding
            out[t * k + c] = (sum / span).clamp(0.0, 1.0);
        }
    }
    SmoothedPosteriors { frames: t_len, classes: k, data: out }
}

fn check_spec_classes(s: &SmoothedPosteriors, spec: &KeywordSpec) -> Result<()> {
    for &w in spec.word_classes() {
        if w >= s.classes {
            return Err(Error::Index(format!(
                "word class {w} out of range for {} classes",
                s.classes
            )));
        }
    }
    Ok(())
}

/// Best order-constrained product of per-word scores, as a geometric mean.
pub fn confidence(s: &SmoothedPosteriors, spec: &KeywordSpec) -> Result<f64> {
    check_spec_classes(s, spec)?;
    let ts = s.frames;
    let m = spec.num_words();
    if ts < m {
        return Err(Error::TooShort(format!(
            "{ts}-frame window cannot align {m} ordered words"
        )));
    }
    // b[t] holds B_i(t); NEG_INFINITY marks "no valid tuple ends here yet"
    let mut prev = vec![0.0f64; ts];
    let w0 = spec.word_classes()[0];
    for t in 0..ts {
        prev[t] = s.row(t)[w0];
    }
    let mut cur = vec![0.0f64; ts];
    for &w in &spec.word_classes()[1..] {
        let mut best_before = f64::NEG_INFINITY;
        for t in 0..ts {
            cur[t] = if best_before >= 0.0 {
                s.row(t)[w] * best_before
            } else {
                f64::NEG_INFINITY
            };
            best_before = best_before.max(prev[t]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let best = prev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(best >= 0.0);
    Ok(best.powf(1.0 / m as f64))
}

/// Exhaustive reference for [`confidence`]; guarded to stay tractable.
pub fn confidence_bruteforce(s: &SmoothedPosteriors, spec: &KeywordSpec) -> Result<f64> {
    check_spec_classes(s, spec)?;
    let ts = s.frames;
    let m = spec.num_words();
    if ts > 16 || m > 4 {
        return Err(Error::OracleRange(format!(
            "brute force limited to T_s <= 16 and M <= 4, got {ts}/{m}"
        )));
    }
    if ts < m {
        return Err(Error::TooShort(format!(
            "{ts}-frame window cannot align {m} ordered words"
        )));
    }
    fn descend(
        s: &SmoothedPosteriors,
        words: &[usize],
        first_t: usize,
        product: f64,
        best: &mut f64,
    ) {
        let Some((&w, rest)) = words.split_first() else {
            *best = best.max(product);
            return;
        };
        // leave enough frames for the remaining words
        for t in first_t..s.frames - rest.len() {
            descend(s, rest, t + 1, product * s.row(t)[w], best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    descend(s, spec.word_classes(), 0, 1.0, &mut best);
    Ok(best.powf(1.0 / m as f64))
}

/// One trigger fired by the streaming detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerEvent {
    /// Last frame of the window that fired.
    pub frame: usize,
    pub confidence: f64,
}

/// Slides a `T_s`-frame window over the smoothed sequence one frame at a
/// time, firing whenever the confidence reaches the threshold and then
/// staying silent until the window has moved fully past the trigger.
pub fn stream_detect(
    p: &PosteriorSequence,
    config: &DetectorConfig,
    spec: &KeywordSpec,
) -> Result<Vec<TriggerEvent>> {
    config.validate(spec.num_words())?;
    let ts = config.window;
    if p.frames < ts {
        return Err(Error::TooShort(format!(
            "{}-frame sequence shorter than the {ts}-frame scoring window",
            p.frames
        )));
    }
    let smoothed = smooth(p, config.smoothing);
    let mut events = Vec::new();
    let mut next_eligible = 0usize;
    for start in 0..=(p.frames - ts) {
        if start < next_eligible {
            continue;
        }
        let h = confidence(&smoothed.window(start, ts)?, spec)?;
        if h >= config.threshold {
            events.push(TriggerEvent { frame: start + ts - 1, confidence: h });
            next_eligible = start + ts;
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn uniform_posteriors(frames: usize, classes: usize) -> PosteriorSequence {
        let p = 1.0 / classes as f64;
        PosteriorSequence::new(frames, classes, vec![p; frames * classes]).unwrap()
    }

    fn random_smoothed(rng: &mut ChaCha8Rng, frames: usize, classes: usize) -> SmoothedPosteriors {
        let data: Vec<f64> = (0..frames * classes).map(|_| rng.gen_range(0.0..1.0)).collect();
        SmoothedPosteriors::from_rows(frames, classes, data).unwrap()
    }

    fn random_posteriors(rng: &mut ChaCha8Rng, frames: usize, classes: usize) -> PosteriorSequence {
        let mut data = Vec::with_capacity(frames * classes);
        for _ in 0..frames {
            let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / sum));
        }
        PosteriorSequence::new(frames, classes, data).unwrap()
    }

    #[test]
    fn keyword_spec_rejects_filler_and_duplicates() {
        assert!(KeywordSpec::new(vec![1, 2, 3]).is_ok());
        assert!(matches!(KeywordSpec::new(vec![1, 0]), Err(Error::Validation(_))));
        assert!(matches!(KeywordSpec::new(vec![1, 2, 1]), Err(Error::Validation(_))));
        assert!(matches!(KeywordSpec::new(vec![]), Err(Error::Validation(_))));
    }

    #[test]
    fn posterior_rows_must_be_distributions() {
        assert!(PosteriorSequence::new(1, 2, vec![0.6, 0.4]).is_ok());
        assert!(matches!(
            PosteriorSequence::new(1, 2, vec![0.6, 0.6]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            PosteriorSequence::new(1, 2, vec![1.2, -0.2]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn smoothing_with_l1_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_posteriors(&mut rng, 12, 4);
        let s = smooth(&p, 1);
        for t in 0..12 {
            assert_eq!(s.row(t), p.row(t));
        }
    }

    #[test]
    fn constant_sequence_is_a_fixed_point() {
        let p = uniform_posteriors(20, 4);
        let s = smooth(&p, 7);
        for t in 0..20 {
            for &v in s.row(t) {
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trailing_mean_hand_case() {
        // single-column values 0.3, 0.6, 0.9 padded with a complement class
        let p = PosteriorSequence::new(
            3,
            2,
            vec![0.3, 0.7, 0.6, 0.4, 0.9, 0.1],
        )
        .unwrap();
        let s = smooth(&p, 3);
        assert!((s.row(0)[0] - 0.3).abs() < 1e-12);
        assert!((s.row(1)[0] - 0.45).abs() < 1e-12);
        assert!((s.row(2)[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn long_window_gives_prefix_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_posteriors(&mut rng, 9, 3);
        let s = smooth(&p, 100);
        for t in 0..9 {
            for c in 0..3 {
                let mean: f64 =
                    (0..=t).map(|j| p.row(j)[c]).sum::<f64>() / (t + 1) as f64;
                assert!((s.row(t)[c] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn confidence_hand_case() {
        // M=2, T_s=3; the filler column carries the remaining mass freely
        let s = SmoothedPosteriors::from_rows(
            3,
            3,
            vec![0.0, 0.9, 0.1, 0.0, 0.1, 0.8, 0.0, 0.2, 0.5],
        )
        .unwrap();
        let spec = KeywordSpec::new(vec![1, 2]).unwrap();
        let h = confidence(&s, &spec).unwrap();
        assert!((h - 0.72f64.sqrt()).abs() <= 1e-12);
        assert!((h - 0.84853).abs() < 5e-6);
        let brute = confidence_bruteforce(&s, &spec).unwrap();
        assert!((h - brute).abs() <= 1e-12);
    }

    #[test]
    fn saturated_posteriors_score_one() {
        let s = SmoothedPosteriors::from_rows(5, 4, vec![1.0; 20]).unwrap();
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        assert_eq!(confidence(&s, &spec).unwrap(), 1.0);
    }

    #[test]
    fn zero_word_row_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_smoothed(&mut rng, 8, 4);
        for t in 0..8 {
            let k = s.classes;
            s.data[t * k + 2] = 0.0;
        }
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        assert_eq!(confidence(&s, &spec).unwrap(), 0.0);
    }

    #[test]
    fn dp_matches_bruteforce_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let m = rng.gen_range(1..=3usize);
            let ts = rng.gen_range(m..=12usize);
            let s = random_smoothed(&mut rng, ts, m + 1);
            let spec = KeywordSpec::new((1..=m).collect()).unwrap();
            let fast = confidence(&s, &spec).unwrap();
            let brute = confidence_bruteforce(&s, &spec).unwrap();
            assert!((fast - brute).abs() <= 1e-12, "m={m} ts={ts}: {fast} vs {brute}");
        }
    }

    #[test]
    fn forced_alignment_when_window_equals_word_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_smoothed(&mut rng, 3, 4);
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        let h = confidence(&s, &spec).unwrap();
        let product = s.row(0)[1] * s.row(1)[2] * s.row(2)[3];
        assert!((h - product.powf(1.0 / 3.0)).abs() <= 1e-12);
    }

    #[test]
    fn single_word_confidence_is_the_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_smoothed(&mut rng, 10, 2);
        let spec = KeywordSpec::new(vec![1]).unwrap();
        let h = confidence(&s, &spec).unwrap();
        let max = (0..10).map(|t| s.row(t)[1]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(h, max);
    }

    #[test]
    fn raising_any_score_never_lowers_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = KeywordSpec::new(vec![1, 2]).unwrap();
        for _ in 0..50 {
            let s = random_smoothed(&mut rng, 8, 3);
            let before = confidence(&s, &spec).unwrap();
            let mut bumped = s.clone();
            let idx = rng.gen_range(0..bumped.data.len());
            bumped.data[idx] = (bumped.data[idx] + rng.gen_range(0.0..0.5)).min(1.0);
            let after = confidence(&bumped, &spec).unwrap();
            assert!(after >= before - 1e-15);
        }
    }

    #[test]
    fn oracle_guard_rejects_large_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let wide = random_smoothed(&mut rng, 17, 3);
        let spec = KeywordSpec::new(vec![1, 2]).unwrap();
        assert!(matches!(
            confidence_bruteforce(&wide, &spec),
            Err(Error::OracleRange(_))
        ));
        let deep = random_smoothed(&mut rng, 10, 6);
        let spec5 = KeywordSpec::new(vec![1, 2, 3, 4, 5]).unwrap();
        assert!(matches!(
            confidence_bruteforce(&deep, &spec5),
            Err(Error::OracleRange(_))
        ));
    }

    #[test]
    fn window_shorter_than_keyword_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_smoothed(&mut rng, 2, 4);
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        assert!(matches!(confidence(&s, &spec), Err(Error::TooShort(_))));
        assert!(matches!(confidence_bruteforce(&s, &spec), Err(Error::TooShort(_))));
    }

    #[test]
    fn threshold_zero_fires_once_per_refractory_span() {
        let p = uniform_posteriors(300, 4);
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        let config = DetectorConfig { smoothing: 30, window: 100, threshold: 0.0 };
        let events = stream_detect(&p, &config, &spec).unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(events[0].frame, 99);
        assert_eq!(events[1].frame, 199);
        assert_eq!(events[2].frame, 299);
    }

    #[test]
    fn unreachable_threshold_never_fires() {
        let p = uniform_posteriors(200, 4);
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        let config = DetectorConfig { smoothing: 30, window: 100, threshold: 1.0 };
        // uniform posteriors smooth to 0.25 per class, h = 0.25 < 1
        assert!(stream_detect(&p, &config, &spec).unwrap().is_empty());
    }

    #[test]
    fn planted_keyword_region_fires_exactly_once() {
        let mut data = Vec::new();
        for t in 0..160 {
            match t {
                110 => data.extend_from_slice(&[0.0, 1.0, 0.0, 0.0]),
                115 => data.extend_from_slice(&[0.0, 0.0, 1.0, 0.0]),
                120 => data.extend_from_slice(&[0.0, 0.0, 0.0, 1.0]),
                _ => data.extend_from_slice(&[1.0, 0.0, 0.0, 0.0]),
            }
        }
        let p = PosteriorSequence::new(160, 4, data).unwrap();
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        let config = DetectorConfig { smoothing: 1, window: 100, threshold: 0.5 };
        let events = stream_detect(&p, &config, &spec).unwrap();
        assert_eq!(events.len(), 1);
        // the first window covering all three planted frames starts at 21
        assert_eq!(events[0].frame, 120);
        assert!((events[0].confidence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_stream_is_rejected() {
        let p = uniform_posteriors(50, 4);
        let spec = KeywordSpec::new(vec![1, 2, 3]).unwrap();
        let config = DetectorConfig::default();
        assert!(matches!(
            stream_detect(&p, &config, &spec),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn detector_config_validation() {
        let ok = DetectorConfig::default();
        assert!(ok.validate(3).is_ok());
        let zero_l = DetectorConfig { smoothing: 0, ..ok };
        assert!(zero_l.validate(3).is_err());
        let narrow = DetectorConfig { window: 2, ..ok };
        assert!(narrow.validate(3).is_err());
        let wild = DetectorConfig { threshold: 1.5, ..ok };
        assert!(wild.validate(3).is_err());
    }
}
