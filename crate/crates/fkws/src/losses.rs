//! Correlation-alignment (CORAL) and multi-task losses with exact gradients.
//!
//! CORAL penalizes the squared Frobenius distance between second-order
//! feature statistics of two domains:
//! `l = (1/(4 d^2)) * ||C_S - C_T||_F^2` over `d x d` covariance matrices
//! `C = (1/(n-1)) (D^T D - (1/n)(1^T D)^T (1^T D))`.

use crate::error::{Error, Result};
use crate::ingest::Domain;
use crate::netcore::{softmax_ce, softmax_ce_backward, Tensor};

/// Per-domain feature-layer matrices of one minibatch, each `[n, d]`.
#[derive(Debug, Clone, Default)]
pub struct CoralBatch {
    pub d025: Option<Tensor>,
    pub d1m: Option<Tensor>,
    pub d3m: Option<Tensor>,
}

impl CoralBatch {
    pub fn get(&self, domain: Domain) -> Option<&Tensor> {
        match domain {
            Domain::D025 => self.d025.as_ref(),
            Domain::D1m => self.d1m.as_ref(),
            Domain::D3m => self.d3m.as_ref(),
        }
    }

    fn slot(&mut self, domain: Domain) -> &mut Option<Tensor> {
        match domain {
            Domain::D025 => &mut self.d025,
            Domain::D1m => &mut self.d1m,
            Domain::D3m => &mut self.d3m,
        }
    }

    fn require(&self, domain: Domain) -> Result<&Tensor> {
        let mat = self.get(domain).ok_or_else(|| {
            Error::DegenerateBatch(format!("domain {} absent from batch", domain.label()))
        })?;
        if mat.shape()[0] < 2 {
            return Err(Error::DegenerateBatch(format!(
                "domain {} has {} row(s); covariance needs at least 2",
                domain.label(),
                mat.shape()[0]
            )));
        }
        Ok(mat)
    }
}

/// The five pairing schemes for the CORAL term. Sources and targets are
/// fixed: 0.25 m is the close-talking source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoralStrategy {
    /// coral(0.25m, 1m)
    S1,
    /// coral(0.25m, 3m)
    S2,
    /// coral(0.25m, 1m and 3m rows stacked)
    S3,
    /// mean of the S1 and S2 terms
    S4,
    /// mean over all three domain pairs
    S5,
}

impl CoralStrategy {
    pub fn name(self) -> &'static str {
        match self {
            CoralStrategy::S1 => "s1",
            CoralStrategy::S2 => "s2",
            CoralStrategy::S3 => "s3",
            CoralStrategy::S4 => "s4",
            CoralStrategy::S5 => "s5",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "s1" => Ok(CoralStrategy::S1),
            "s2" => Ok(CoralStrategy::S2),
            "s3" => Ok(CoralStrategy::S3),
            "s4" => Ok(CoralStrategy::S4),
            "s5" => Ok(CoralStrategy::S5),
            other => Err(Error::Config(format!("unknown coral strategy '{other}'"))),
        }
    }

    /// Domains whose features the strategy needs in every batch.
    pub fn needed_domains(self) -> &'static [Domain] {
        match self {
            CoralStrategy::S1 => &[Domain::D025, Domain::D1m],
            CoralStrategy::S2 => &[Domain::D025, Domain::D3m],
            _ => &[Domain::D025, Domain::D1m, Domain::D3m],
        }
    }

    /// Plain domain pairs averaged by the strategy; S3 is handled apart.
    fn pairs(self) -> &'static [(Domain, Domain)] {
        match self {
            CoralStrategy::S1 => &[(Domain::D025, Domain::D1m)],
            CoralStrategy::S2 => &[(Domain::D025, Domain::D3m)],
            CoralStrategy::S3 => &[],
            CoralStrategy::S4 => &[(Domain::D025, Domain::D1m), (Domain::D025, Domain::D3m)],
            CoralStrategy::S5 => &[
                (Domain::D025, Domain::D1m),
                (Domain::D025, Domain::D3m),
                (Domain::D1m, Domain::D3m),
            ],
        }
    }
}

/// Which objective trains the keyword classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    CeOnly,
    Coral(CoralStrategy),
    Mtl,
}

/// Objective plus its mixing weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub mode: LossMode,
    pub lambda: f64,
}

/// Default mixing weight of the correlation-alignment term.
pub const CORAL_LAMBDA_DEFAULT: f64 = 0.8;
/// Default mixing weight of the auxiliary domain cross-entropy.
pub const MTL_LAMBDA_DEFAULT: f64 = 0.2;

impl LossConfig {
    pub fn ce() -> Self {
        LossConfig { mode: LossMode::CeOnly, lambda: 0.0 }
    }

    pub fn coral(strategy: CoralStrategy) -> Self {
        LossConfig { mode: LossMode::Coral(strategy), lambda: CORAL_LAMBDA_DEFAULT }
    }

    pub fn mtl() -> Self {
        LossConfig { mode: LossMode::Mtl, lambda: MTL_LAMBDA_DEFAULT }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "loss weight {} must be finite and nonnegative",
                self.lambda
            )));
        }
        Ok(())
    }
}

fn expect_matrix(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::Shape(format!(
            "{what}: expected a matrix, got shape {:?}",
            t.shape()
        )));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Sample covariance `C = (1/(n-1)) (D^T D - (1/n) u^T u)` with `u = 1^T D`.
pub fn covariance(d_mat: &Tensor) -> Result<Tensor> {
    let (n, d) = expect_matrix(d_mat, "covariance input")?;
    if n < 2 {
        return Err(Error::DegenerateBatch(format!(
            "covariance over {n} row(s); need at least 2"
        )));
    }
    let x = d_mat.data();
    let mut u = vec![0.0; d];
    for row in 0..n {
        for col in 0..d {
            u[col] += x[row * d + col];
        }
    }
    let mut c = Tensor::zeros(&[d, d]);
    let cd = c.data_mut();
    let inv = 1.0 / (n as f64 - 1.0);
    for a in 0..d {
        for b in a..d {
            let mut dot = 0.0;
            for row in 0..n {
                dot += x[row * d + a] * x[row * d + b];
            }
            let val = inv * (dot - u[a] * u[b] / n as f64);
            cd[a * d + b] = val;
            cd[b * d + a] = val;
        }
    }
    Ok(c)
}

/// Gradient of a scalar through [`covariance`]: given upstream `grad_c` on
/// `C`, returns the gradient on `D`.
pub fn covariance_backward(d_mat: &Tensor, grad_c: &Tensor) -> Result<Tensor> {
    let (n, d) = expect_matrix(d_mat, "covariance input")?;
    if grad_c.shape() != [d, d] {
        return Err(Error::Shape(format!(
            "covariance grad {:?}, expected {:?}",
            grad_c.shape(),
            [d, d]
        )));
    }
    let x = d_mat.data();
    let g = grad_c.data();
    // symmetrized upstream: S = G + G^T
    let mut s = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            s[a * d + b] = g[a * d + b] + g[b * d + a];
        }
    }
    let mut u = vec![0.0; d];
    for row in 0..n {
        for col in 0..d {
            u[col] += x[row * d + col];
        }
    }
    // su = S u (same for every row thanks to the rank-one mean term)
    let mut su = vec![0.0; d];
    for a in 0..d {
        let mut acc = 0.0;
        for b in 0..d {
            acc += s[a * d + b] * u[b];
        }
        su[a] = acc;
    }
    let inv = 1.0 / (n as f64 - 1.0);
    let mut out = Tensor::zeros(&[n, d]);
    let od = out.data_mut();
    for row in 0..n {
        for c_idx in 0..d {
            let mut acc = 0.0;
            for b in 0..d {
                acc += x[row * d + b] * s[b * d + c_idx];
            }
            od[row * d + c_idx] = inv * (acc - su[c_idx] / n as f64);
        }
    }
    Ok(out)
}

fn coral_from_covs(c_s: &Tensor, c_t: &Tensor, d: usize) -> f64 {
    let mut sq = 0.0;
    for (a, b) in c_s.data().iter().zip(c_t.data().iter()) {
        let diff = a - b;
        sq += diff * diff;
    }
    sq / (4.0 * (d * d) as f64)
}

/// CORAL distance between two feature matrices.
pub fn coral_loss(d_s: &Tensor, d_t: &Tensor) -> Result<f64> {
    let (_, ds) = expect_matrix(d_s, "coral source")?;
    let (_, dt) = expect_matrix(d_t, "coral target")?;
    if ds != dt {
        return Err(Error::Shape(format!(
            "coral feature widths differ: {ds} vs {dt}"
        )));
    }
    let c_s = covariance(d_s)?;
    let c_t = covariance(d_t)?;
    Ok(coral_from_covs(&c_s, &c_t, ds))
}

/// CORAL distance plus exact gradients w.r.t. both matrices.
pub fn coral_grads(d_s: &Tensor, d_t: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    let (_, d) = expect_matrix(d_s, "coral source")?;
    let (_, dt) = expect_matrix(d_t, "coral target")?;
    if d != dt {
        return Err(Error::Shape(format!(
            "coral feature widths differ: {d} vs {dt}"
        )));
    }
    let c_s = covariance(d_s)?;
    let c_t = covariance(d_t)?;
    let loss = coral_from_covs(&c_s, &c_t, d);
    // dl/dC_S = (1/(2 d^2)) (C_S - C_T); dl/dC_T is its negation
    let scale = 1.0 / (2.0 * (d * d) as f64);
    let g_cs = Tensor::from_fn(&[d, d], |i| scale * (c_s.data()[i] - c_t.data()[i]));
    let g_ct = Tensor::from_fn(&[d, d], |i| -g_cs.data()[i]);
    let g_ds = covariance_backward(d_s, &g_cs)?;
    let g_dt = covariance_backward(d_t, &g_ct)?;
    Ok((loss, g_ds, g_dt))
}

fn stack_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (na, d) = expect_matrix(a, "stack lhs")?;
    let (nb, db) = expect_matrix(b, "stack rhs")?;
    if d != db {
        return Err(Error::Shape(format!("stacked widths differ: {d} vs {db}")));
    }
    let mut data = Vec::with_capacity((na + nb) * d);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[na + nb, d], data)
}

/// The strategy's CORAL term (no cross-entropy, no lambda).
pub fn coral_term(strategy: CoralStrategy, batch: &CoralBatch) -> Result<f64> {
    for &domain in strategy.needed_domains() {
        batch.require(domain)?;
    }
    match strategy {
        CoralStrategy::S3 => {
            let stacked = stack_rows(batch.require(Domain::D1m)?, batch.require(Domain::D3m)?)?;
            coral_loss(batch.require(Domain::D025)?, &stacked)
        }
        _ => {
            let pairs = strategy.pairs();
            let mut total = 0.0;
            for &(s, t) in pairs {
                total += coral_loss(batch.require(s)?, batch.require(t)?)?;
            }
            Ok(total / pairs.len() as f64)
        }
    }
}

/// The strategy's CORAL term and its gradients on each present matrix.
pub fn coral_term_grads(strategy: CoralStrategy, batch: &CoralBatch) -> Result<(f64, CoralBatch)> {
    for &domain in strategy.needed_domains() {
        batch.require(domain)?;
    }
    let mut grads = CoralBatch::default();
    let add = |slot: &mut Option<Tensor>, g: Tensor, scale: f64| {
        let mut g = g;
        g.scale(scale);
        match slot {
            Some(existing) => existing.add_assign(&g),
            None => *slot = Some(g),
        }
    };
    let term = match strategy {
        CoralStrategy::S3 => {
            let d1 = batch.require(Domain::D1m)?;
            let d3 = batch.require(Domain::D3m)?;
            let stacked = stack_rows(d1, d3)?;
            let (loss, g_s, g_stacked) = coral_grads(batch.require(Domain::D025)?, &stacked)?;
            let (n1, d) = (d1.shape()[0], d1.shape()[1]);
            let g1 = Tensor::from_vec(&[n1, d], g_stacked.data()[..n1 * d].to_vec())?;
            let g3 = Tensor::from_vec(
                &[d3.shape()[0], d],
                g_stacked.data()[n1 * d..].to_vec(),
            )?;
            add(grads.slot(Domain::D025), g_s, 1.0);
            add(grads.slot(Domain::D1m), g1, 1.0);
            add(grads.slot(Domain::D3m), g3, 1.0);
            loss
        }
        _ => {
            let pairs = strategy.pairs();
            let weight = 1.0 / pairs.len() as f64;
            let mut total = 0.0;
            for &(s, t) in pairs {
                let (loss, g_s, g_t) = coral_grads(batch.require(s)?, batch.require(t)?)?;
                total += loss;
                add(grads.slot(s), g_s, weight);
                add(grads.slot(t), g_t, weight);
            }
            total * weight
        }
    };
    Ok((term, grads))
}

/// Joint objective: batch-mean cross-entropy plus the weighted CORAL term.
pub fn joint_coral_loss(
    strategy: CoralStrategy,
    batch: &CoralBatch,
    ce: f64,
    lambda: f64,
) -> Result<f64> {
    Ok(ce + lambda * coral_term(strategy, batch)?)
}

/// Multi-task objective: `CE_word + lambda * CE_domain`, both batch means.
/// Returns the loss and per-sample gradients for both logit sets (already
/// scaled by the batch-mean factor and, for domains, by lambda).
pub fn mtl_loss(
    word_logits: &[Tensor],
    word_labels: &[usize],
    domain_logits: &[Tensor],
    domain_labels: &[usize],
    lambda: f64,
) -> Result<(f64, Vec<Tensor>, Vec<Tensor>)> {
    let b = word_logits.len();
    if b == 0 || word_labels.len() != b || domain_logits.len() != b || domain_labels.len() != b {
        return Err(Error::Shape(format!(
            "mtl batch sizes disagree: {b}/{}/{}/{}",
            word_labels.len(),
            domain_logits.len(),
            domain_labels.len()
        )));
    }
    let inv_b = 1.0 / b as f64;
    let mut word_ce = 0.0;
    let mut domain_ce = 0.0;
    let mut g_word = Vec::with_capacity(b);
    let mut g_domain = Vec::with_capacity(b);
    for i in 0..b {
        let (lw, pw) = softmax_ce(&word_logits[i], word_labels[i])?;
        word_ce += lw;
        let mut gw = softmax_ce_backward(&pw, word_labels[i]);
        gw.scale(inv_b);
        g_word.push(gw);

        let (ld, pd) = softmax_ce(&domain_logits[i], domain_labels[i])?;
        domain_ce += ld;
        let mut gd = softmax_ce_backward(&pd, domain_labels[i]);
        gd.scale(lambda * inv_b);
        g_domain.push(gd);
    }
    let loss = word_ce * inv_b + lambda * domain_ce * inv_b;
    Ok((loss, g_word, g_domain))
}
