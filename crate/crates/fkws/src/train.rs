//! Optimization machinery and the two-stage training recipe: the domain
//! classifier is fitted first and frozen, then a keyword classifier is
//! trained under one of the loss regimes (plain cross-entropy, a
//! correlation-alignment strategy, the multi-task objective, or
//! cross-entropy with frozen-net embeddings).

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::ingest::{Domain, TrainingWindow};
use crate::losses::{
    coral_term_grads, mtl_loss, CoralBatch, LossConfig, LossMode,
};
use crate::models::{
    backward_domain, backward_keyword, build_domain_net, build_keyword_net_with, extract_domain_embedding,
    forward_domain, forward_keyword, forward_keyword_cached, save_keyword_net, DomainEmbedding,
    DomainNet, KeywordNet, NetDims, Variant, DOMAIN_HIDDEN,
};
use crate::netcore::{softmax_ce, softmax_ce_backward, Parameter, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_min_delta: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            momentum: 0.9,
            batch: 128,
            max_epochs: 100,
            plateau_patience: 3,
            plateau_factor: 0.1,
            plateau_min_delta: 1e-4,
            early_stop_patience: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("patience values must be positive".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config(format!(
                "decay factor {} outside (0, 1)",
                self.plateau_factor
            )));
        }
        if !(self.plateau_min_delta > 0.0) {
            return Err(Error::Config("improvement threshold must be positive".into()));
        }
        Ok(())
    }
}

/// One parameter update in the Nesterov look-ahead form.
///
/// `v <- mu*v - lr*g; theta <- theta + mu*v - lr*g`, then gradients are
/// zeroed so accumulation can start fresh.
pub fn sgd_nesterov_step(
    params: Vec<&mut Parameter>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    for p in params {
        if !p.grad.all_finite() {
            return Err(Error::Divergence(format!(
                "non-finite gradient on {}",
                p.name
            )));
        }
        let n = p.value.len();
        let (value, grad, velocity) =
            (p.value.data_mut(), p.grad.data(), p.velocity.data_mut());
        for i in 0..n {
            let v_new = momentum * velocity[i] - lr * grad[i];
            value[i] += momentum * v_new - lr * grad[i];
            velocity[i] = v_new;
        }
        p.zero_grad();
    }
    Ok(())
}

/// Cuts the learning rate when the observed loss stops improving.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    best: f64,
    counter: usize,
    patience: usize,
    factor: f64,
    min_delta: f64,
    decays: usize,
}

impl PlateauScheduler {
    pub fn new(config: &TrainConfig) -> Self {
        PlateauScheduler {
            lr: config.lr0,
            best: f64::INFINITY,
            counter: 0,
            patience: config.plateau_patience,
            factor: config.plateau_factor,
            min_delta: config.plateau_min_delta,
            decays: 0,
        }
    }

    /// Feeds one epoch loss; returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if self.best - loss >= self.min_delta {
            self.best = loss;
            self.counter = 0;
        } else {
            self.counter += 1;
            if self.counter >= self.patience {
                self.lr *= self.factor;
                self.counter = 0;
                self.decays += 1;
            }
        }
        self.lr
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn decays(&self) -> usize {
        self.decays
    }
}

/// Replays a loss history through a fresh scheduler and reports the
/// resulting learning rate.
pub fn lr_on_plateau(history: &[f64], config: &TrainConfig) -> f64 {
    let mut sched = PlateauScheduler::new(config);
    for &loss in history {
        sched.observe(loss);
    }
    sched.lr()
}

/// Stops the run after a longer stretch without improvement than the
/// scheduler tolerates, so a decay is always attempted before giving up.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    best: f64,
    counter: usize,
    patience: usize,
    min_delta: f64,
}

impl EarlyStopper {
    pub fn new(config: &TrainConfig) -> Self {
        EarlyStopper {
            best: f64::INFINITY,
            counter: 0,
            patience: config.early_stop_patience,
            min_delta: config.plateau_min_delta,
        }
    }

    /// Feeds one epoch loss; true means stop after this epoch.
    pub fn observe(&mut self, loss: f64) -> bool {
        if self.best - loss >= self.min_delta {
            self.best = loss;
            self.counter = 0;
            false
        } else {
            self.counter += 1;
            self.counter >= self.patience
        }
    }
}

fn epoch_seed(base: u64, epoch: usize) -> u64 {
    base ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Deterministic batch plan over window indices. With `needs` empty this
/// is a plain shuffle cut into `batch`-sized chunks (the final one may be
/// short). With `needs` nonempty, every emitted batch is guaranteed at
/// least two windows from each needed domain so covariances stay defined;
/// windows that cannot be placed without breaking that guarantee are
/// dropped for the epoch.
pub fn make_batches(
    windows: &[TrainingWindow],
    batch: usize,
    needs: &[Domain],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if windows.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if needs.is_empty() {
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut rng);
        return Ok(order.chunks(batch).map(|c| c.to_vec()).collect());
    }

    let needed: BTreeSet<Domain> = needs.iter().copied().collect();
    if batch < 2 * needed.len() {
        return Err(Error::Config(format!(
            "batch of {batch} cannot hold 2 windows from each of {} domains",
            needed.len()
        )));
    }
    let mut per_domain: Vec<Vec<usize>> = vec![Vec::new(); Domain::ALL.len()];
    let mut rest: Vec<usize> = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        if needed.contains(&w.domain) {
            per_domain[w.domain.index()].push(i);
        } else {
            rest.push(i);
        }
    }
    for &domain in &needed {
        if per_domain[domain.index()].len() < 2 {
            return Err(Error::Config(format!(
                "domain {} has {} window(s); stratified batches need at least 2",
                domain.label(),
                per_domain[domain.index()].len()
            )));
        }
    }
    for list in per_domain.iter_mut() {
        list.shuffle(&mut rng);
    }
    rest.shuffle(&mut rng);

    // every batch gets its two reserved windows per needed domain first;
    // the scarcest needed domain caps the batch count
    let max_by_need = needed
        .iter()
        .map(|d| per_domain[d.index()].len() / 2)
        .min()
        .unwrap();
    let by_volume = windows.len().div_ceil(batch);
    let num_batches = max_by_need.min(by_volume).max(1);

    let mut batches: Vec<Vec<usize>> = vec![Vec::with_capacity(batch); num_batches];
    for &domain in &needed {
        let list = &mut per_domain[domain.index()];
        for b in batches.iter_mut() {
            b.push(list.pop().unwrap());
            b.push(list.pop().unwrap());
        }
    }
    // leftovers (spare needed-domain windows plus everything else) are
    // dealt round-robin until batches are full
    let mut leftovers = rest;
    for &domain in &needed {
        leftovers.append(&mut per_domain[domain.index()]);
    }
    leftovers.shuffle(&mut rng);
    let mut b = 0;
    for idx in leftovers {
        let mut placed = false;
        for _ in 0..num_batches {
            if batches[b].len() < batch {
                batches[b].push(idx);
                placed = true;
                b = (b + 1) % num_batches;
                break;
            }
            b = (b + 1) % num_batches;
        }
        if !placed {
            break; // every batch is full; surplus windows sit this epoch out
        }
    }
    Ok(batches)
}

/// One utterance of the domain-classifier training set.
#[derive(Debug, Clone)]
pub struct UtteranceSample {
    pub clip_id: String,
    pub domain: Domain,
    pub features: FeatureMatrix,
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub ce: f64,
    pub coral: Option<f64>,
    /// Mean cross-entropy per domain, indexed by [`Domain::index`];
    /// `None` when the epoch saw no window of that domain.
    pub per_domain_ce: [Option<f64>; 3],
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,lr,ce,coral,seconds\n");
        for e in &self.epochs {
            let coral = e.coral.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.loss, e.lr, e.ce, coral, e.seconds
            ));
        }
        out
    }
}

/// Running per-domain CE sums for one epoch.
#[derive(Default)]
struct DomainCeTally {
    sums: [f64; 3],
    counts: [usize; 3],
}

impl DomainCeTally {
    fn add(&mut self, domain: Domain, ce: f64) {
        self.sums[domain.index()] += ce;
        self.counts[domain.index()] += 1;
    }

    fn means(&self) -> [Option<f64>; 3] {
        let mut out = [None; 3];
        for i in 0..3 {
            if self.counts[i] > 0 {
                out[i] = Some(self.sums[i] / self.counts[i] as f64);
            }
        }
        out
    }
}

/// Fraction of samples whose predicted domain matches the label.
pub fn domain_accuracy(net: &DomainNet, samples: &[UtteranceSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Validation("no samples to score".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        let fwd = forward_domain(net, &s.features)?;
        let logits = fwd.logits.data();
        let pred = (0..logits.len())
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
            .unwrap();
        if pred == s.domain.index() {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains the recurrent domain classifier with batch-mean cross-entropy
/// and returns it frozen.
pub fn fit_domain_classifier(
    samples: &[UtteranceSample],
    config: &TrainConfig,
) -> Result<(DomainNet, TrainLog)> {
    config.validate()?;
    for domain in Domain::ALL {
        if !samples.iter().any(|s| s.domain == domain) {
            return Err(Error::Config(format!(
                "no training utterances from domain {}",
                domain.label()
            )));
        }
    }
    let mut net = build_domain_net(config.seed);
    let mut log = TrainLog::default();
    let mut scheduler = PlateauScheduler::new(config);
    let mut stopper = EarlyStopper::new(config);
    let mut lr = config.lr0;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch)));

        let mut tally = DomainCeTally::default();
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch) {
            let inv = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let sample = &samples[i];
                let fwd = forward_domain(&net, &sample.features)?;
                let (ce, probs) = softmax_ce(&fwd.logits, sample.domain.index())?;
                let mut d_logits = softmax_ce_backward(&probs, sample.domain.index());
                d_logits.scale(inv);
                backward_domain(&mut net, &fwd, &d_logits)?;
                tally.add(sample.domain, ce);
                loss_sum += ce;
            }
            sgd_nesterov_step(net.params_mut(), lr, config.momentum)?;
        }

        let loss = loss_sum / samples.len() as f64;
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            lr,
            ce: loss,
            coral: None,
            per_domain_ce: tally.means(),
            seconds: started.elapsed().as_secs_f64(),
        });
        let stop = stopper.observe(loss);
        lr = scheduler.observe(loss);
        if stop {
            break;
        }
    }

    net.freeze();
    Ok((net, log))
}

/// Where and how often periodic checkpoints are written during keyword
/// training.
#[derive(Debug, Clone)]
pub struct CheckpointPlan {
    pub dir: PathBuf,
    pub every: usize,
}

/// Everything that defines the keyword classifier being fitted.
#[derive(Debug, Clone)]
pub struct KeywordFitSpec<'a> {
    pub variant: Variant,
    pub dims: NetDims,
    pub num_words: usize,
    pub loss: LossConfig,
    pub domain_net: Option<&'a DomainNet>,
    pub checkpoints: Option<CheckpointPlan>,
}

impl<'a> KeywordFitSpec<'a> {
    pub fn new(variant: Variant, loss: LossConfig) -> Self {
        KeywordFitSpec {
            variant,
            dims: NetDims::default(),
            num_words: 3,
            loss,
            domain_net: None,
            checkpoints: None,
        }
    }

    fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        match (self.variant, self.loss.mode) {
            (Variant::Mtl, LossMode::Mtl) => {}
            (Variant::Mtl, _) => {
                return Err(Error::Config(
                    "the mtl variant trains only under the multi-task loss".into(),
                ));
            }
            (_, LossMode::Mtl) => {
                return Err(Error::Config(
                    "the multi-task loss needs the mtl variant's domain head".into(),
                ));
            }
            (Variant::Baseline, _) => {}
            (_, LossMode::Coral(_)) => {
                return Err(Error::Config(
                    "correlation alignment trains the baseline topology".into(),
                ));
            }
            (_, LossMode::CeOnly) => {}
        }
        match (self.variant.needs_embedding(), &self.domain_net) {
            (true, None) => {
                return Err(Error::Config(format!(
                    "variant {} needs a trained domain classifier for embeddings",
                    self.variant.name()
                )));
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!(
                    "variant {} takes no domain classifier",
                    self.variant.name()
                )));
            }
            _ => {}
        }
        if self.variant.needs_embedding() && self.dims.embedding != DOMAIN_HIDDEN {
            return Err(Error::Config(format!(
                "embedding width {} does not match the domain classifier's {}",
                self.dims.embedding, DOMAIN_HIDDEN
            )));
        }
        if let Some(plan) = &self.checkpoints {
            if plan.every == 0 {
                return Err(Error::Config("checkpoint interval must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One window's share of the batch gradient under cross-entropy.
fn ce_window_step(
    net: &mut KeywordNet,
    window: &TrainingWindow,
    embedding: Option<&DomainEmbedding>,
    inv_batch: f64,
) -> Result<f64> {
    let (rec, cache) = forward_keyword_cached(net, &window.features, embedding)?;
    let (ce, probs) = softmax_ce(&rec.word_logits, window.word_label)?;
    let mut d_word = softmax_ce_backward(&probs, window.word_label);
    d_word.scale(inv_batch);
    backward_keyword(net, &cache, &d_word, None, None)?;
    Ok(ce)
}

/// Trains a keyword classifier under the regime selected by `fit.loss`.
///
/// `utterances` holds the full-length feature matrix of each source clip,
/// indexed by `TrainingWindow::clip_index`; the embedding variants look
/// their per-utterance embedding up there (computed once, shared by all
/// windows of the clip).
pub fn fit_keyword_classifier(
    windows: &[TrainingWindow],
    utterances: Option<&[FeatureMatrix]>,
    fit: &KeywordFitSpec,
    config: &TrainConfig,
) -> Result<(KeywordNet, TrainLog)> {
    config.validate()?;
    fit.validate()?;
    if windows.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    for w in windows {
        if w.word_label > fit.num_words {
            return Err(Error::Index(format!(
                "window label {} exceeds keyword count {}",
                w.word_label, fit.num_words
            )));
        }
    }

    // per-utterance embeddings, computed once and shared by all windows
    let embeddings: Option<Vec<DomainEmbedding>> = match (fit.variant.needs_embedding(), utterances)
    {
        (true, Some(feats)) => {
            let max_clip = windows.iter().map(|w| w.clip_index).max().unwrap();
            if max_clip >= feats.len() {
                return Err(Error::Index(format!(
                    "window references clip {max_clip} but only {} utterances given",
                    feats.len()
                )));
            }
            let net = fit.domain_net.unwrap();
            let mut table = Vec::with_capacity(feats.len());
            for f in feats {
                table.push(extract_domain_embedding(net, f)?);
            }
            Some(table)
        }
        (true, None) => {
            return Err(Error::Config(
                "embedding variants need the source utterance features".into(),
            ));
        }
        (false, _) => None,
    };

    let needs: &[Domain] = match fit.loss.mode {
        LossMode::Coral(strategy) => strategy.needed_domains(),
        _ => &[],
    };

    let mut net = build_keyword_net_with(fit.variant, fit.num_words, fit.dims, config.seed)?;
    let mut log = TrainLog::default();
    let mut scheduler = PlateauScheduler::new(config);
    let mut stopper = EarlyStopper::new(config);
    let mut lr = config.lr0;
    let lambda = fit.loss.lambda;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let batches = make_batches(windows, config.batch, needs, epoch_seed(config.seed, epoch))?;

        let mut tally = DomainCeTally::default();
        let mut ce_sum = 0.0;
        let mut ce_count = 0usize;
        let mut coral_sum = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_weight = 0usize;

        for batch in &batches {
            let inv = 1.0 / batch.len() as f64;
            let batch_loss = match fit.loss.mode {
                LossMode::CeOnly => {
                    let mut batch_ce = 0.0;
                    for &i in batch {
                        let w = &windows[i];
                        let emb = embeddings.as_ref().map(|t| &t[w.clip_index]);
                        let ce = ce_window_step(&mut net, w, emb, inv)?;
                        tally.add(w.domain, ce);
                        batch_ce += ce;
                    }
                    ce_sum += batch_ce;
                    ce_count += batch.len();
                    batch_ce * inv
                }
                LossMode::Coral(strategy) => {
                    // first pass: forward everything, collect the feature
                    // rows per domain
                    let mut records = Vec::with_capacity(batch.len());
                    let mut rows: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
                    let mut row_of = Vec::with_capacity(batch.len());
                    for &i in batch {
                        let w = &windows[i];
                        let (rec, cache) = forward_keyword_cached(&net, &w.features, None)?;
                        let d = w.domain.index();
                        row_of.push(rows[d].len() / fit.dims.fc1);
                        rows[d].extend_from_slice(rec.feature_layer.data());
                        records.push((rec, cache));
                    }
                    let mut coral_batch = CoralBatch::default();
                    for domain in Domain::ALL {
                        let d = domain.index();
                        if !rows[d].is_empty() {
                            let n = rows[d].len() / fit.dims.fc1;
                            let mat =
                                Tensor::from_vec(&[n, fit.dims.fc1], std::mem::take(&mut rows[d]))?;
                            match domain {
                                Domain::D025 => coral_batch.d025 = Some(mat),
                                Domain::D1m => coral_batch.d1m = Some(mat),
                                Domain::D3m => coral_batch.d3m = Some(mat),
                            }
                        }
                    }
                    let (term, feature_grads) = coral_term_grads(strategy, &coral_batch)?;

                    // second pass: cross-entropy plus the feature-layer
                    // share of the alignment term
                    let mut batch_ce = 0.0;
                    for (pos, &i) in batch.iter().enumerate() {
                        let w = &windows[i];
                        let (rec, cache) = &records[pos];
                        let (ce, probs) = softmax_ce(&rec.word_logits, w.word_label)?;
                        let mut d_word = softmax_ce_backward(&probs, w.word_label);
                        d_word.scale(inv);
                        let extra = feature_grads.get(w.domain).map(|g| {
                            let r = row_of[pos];
                            let mut t = Tensor::from_vec(
                                &[fit.dims.fc1],
                                g.data()[r * fit.dims.fc1..(r + 1) * fit.dims.fc1].to_vec(),
                            )
                            .unwrap();
                            t.scale(lambda);
                            t
                        });
                        backward_keyword(&mut net, cache, &d_word, None, extra.as_ref())?;
                        tally.add(w.domain, ce);
                        batch_ce += ce;
                    }
                    ce_sum += batch_ce;
                    ce_count += batch.len();
                    coral_sum += term;
                    batch_ce * inv + lambda * term
                }
                LossMode::Mtl => {
                    let mut word_logits = Vec::with_capacity(batch.len());
                    let mut domain_logits = Vec::with_capacity(batch.len());
                    let mut word_labels = Vec::with_capacity(batch.len());
                    let mut domain_labels = Vec::with_capacity(batch.len());
                    let mut caches = Vec::with_capacity(batch.len());
                    for &i in batch {
                        let w = &windows[i];
                        let (rec, cache) = forward_keyword_cached(&net, &w.features, None)?;
                        let (ce, _) = softmax_ce(&rec.word_logits, w.word_label)?;
                        tally.add(w.domain, ce);
                        ce_sum += ce;
                        word_labels.push(w.word_label);
                        domain_labels.push(w.domain.index());
                        domain_logits.push(rec.domain_logits.clone().unwrap());
                        word_logits.push(rec.word_logits);
                        caches.push(cache);
                    }
                    ce_count += batch.len();
                    let (batch_loss, d_words, d_domains) = mtl_loss(
                        &word_logits,
                        &word_labels,
                        &domain_logits,
                        &domain_labels,
                        lambda,
                    )?;
                    for (pos, cache) in caches.iter().enumerate() {
                        backward_keyword(
                            &mut net,
                            cache,
                            &d_words[pos],
                            Some(&d_domains[pos]),
                            None,
                        )?;
                    }
                    batch_loss
                }
            };
            loss_sum += batch_loss * batch.len() as f64;
            loss_weight += batch.len();
            sgd_nesterov_step(net.params_mut(), lr, config.momentum)?;
        }

        let loss = loss_sum / loss_weight as f64;
        let coral = match fit.loss.mode {
            LossMode::Coral(_) => Some(coral_sum / batches.len() as f64),
            _ => None,
        };
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            lr,
            ce: ce_sum / ce_count as f64,
            coral,
            per_domain_ce: tally.means(),
            seconds: started.elapsed().as_secs_f64(),
        });

        if let Some(plan) = &fit.checkpoints {
            if epoch % plan.every == 0 {
                let path = plan.dir.join(format!("epoch_{epoch:03}.ckpt"));
                save_keyword_net(&path, &net)?;
            }
        }

        let stop = stopper.observe(loss);
        lr = scheduler.observe(loss);
        if stop {
            break;
        }
    }

    Ok((net, log))
}

/// Fraction of windows whose best word logit matches the label.
pub fn window_accuracy(
    net: &KeywordNet,
    windows: &[TrainingWindow],
    embeddings: Option<&[DomainEmbedding]>,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Validation("no windows to score".into()));
    }
    let mut hits = 0usize;
    for w in windows {
        let emb = embeddings.map(|t| &t[w.clip_index]);
        let rec = forward_keyword(net, &w.features, emb)?;
        let logits = rec.word_logits.data();
        let pred = (0..logits.len())
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
            .unwrap();
        if pred == w.word_label {
            hits += 1;
        }
    }
    Ok(hits as f64 / windows.len() as f64)
}
