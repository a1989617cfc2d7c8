//! Recurrent domain classifier and the embeddings it produces.
//!
//! Two stacked LSTM layers read the full log-Mel sequence of an utterance,
//! the top layer's hidden states are mean-pooled over time, and a linear
//! head maps the pooled vector to the three recording-distance classes.
//! The pooled vector itself is the domain embedding consumed by the
//! embedding-conditioned keyword variants; it may only be read from a
//! frozen (finished-training) network.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{FeatureMatrix, NUM_MELS};
use crate::error::{Error, Result};
use crate::netcore::{
    linear, linear_backward, lstm_backward, lstm_forward, mean_pool_time,
    mean_pool_time_backward, LstmTrace, Parameter, Tensor,
};

/// Hidden width of both LSTM layers and of the embedding.
pub const DOMAIN_HIDDEN: usize = 64;
/// Number of recording-distance classes.
pub const DOMAIN_CLASSES: usize = 3;

/// Fixed-dimensional utterance representation carrying recording-condition
/// information.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEmbedding {
    pub vector: Tensor,
}

#[derive(Debug, Clone)]
pub struct DomainNet {
    pub hidden: usize,
    pub lstm1_wih: Parameter,
    pub lstm1_whh: Parameter,
    pub lstm1_b: Parameter,
    pub lstm2_wih: Parameter,
    pub lstm2_whh: Parameter,
    pub lstm2_b: Parameter,
    pub out_w: Parameter,
    pub out_b: Parameter,
    frozen: bool,
}

impl DomainNet {
    pub fn params(&self) -> Vec<&Parameter> {
        vec![
            &self.lstm1_wih,
            &self.lstm1_whh,
            &self.lstm1_b,
            &self.lstm2_wih,
            &self.lstm2_whh,
            &self.lstm2_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.lstm1_wih,
            &mut self.lstm1_whh,
            &mut self.lstm1_b,
            &mut self.lstm2_wih,
            &mut self.lstm2_whh,
            &mut self.lstm2_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Marks training finished; embeddings may be extracted afterwards.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }
}

pub fn build_domain_net(seed: u64) -> DomainNet {
    build_domain_net_with(DOMAIN_HIDDEN, seed)
}

/// Width-parameterized constructor; gradient checks use small `hidden`.
pub fn build_domain_net_with(hidden: usize, seed: u64) -> DomainNet {
    assert!(hidden > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |shape: &[usize], fan_in: usize| {
        let bound = (1.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        Tensor::from_fn(shape, |_| dist.sample(&mut rng))
    };
    let lstm1_wih = init(&[4 * hidden, NUM_MELS], NUM_MELS);
    let lstm1_whh = init(&[4 * hidden, hidden], hidden);
    let lstm2_wih = init(&[4 * hidden, hidden], hidden);
    let lstm2_whh = init(&[4 * hidden, hidden], hidden);
    let out_w = init(&[DOMAIN_CLASSES, hidden], hidden);
    DomainNet {
        hidden,
        lstm1_wih: Parameter::new("lstm1.w_ih", lstm1_wih),
        lstm1_whh: Parameter::new("lstm1.w_hh", lstm1_whh),
        lstm1_b: Parameter::new("lstm1.b", Tensor::zeros(&[4 * hidden])),
        lstm2_wih: Parameter::new("lstm2.w_ih", lstm2_wih),
        lstm2_whh: Parameter::new("lstm2.w_hh", lstm2_whh),
        lstm2_b: Parameter::new("lstm2.b", Tensor::zeros(&[4 * hidden])),
        out_w: Parameter::new("out.w", out_w),
        out_b: Parameter::new("out.b", Tensor::zeros(&[DOMAIN_CLASSES])),
        frozen: false,
    }
}

/// Activations of one utterance pass, kept for the backward step.
pub struct DomainForward {
    pub logits: Tensor,
    pub pooled: Tensor,
    trace1: LstmTrace,
    trace2: LstmTrace,
}

fn features_tensor(features: &FeatureMatrix) -> Result<Tensor> {
    if features.num_frames() == 0 {
        return Err(Error::TooShort("empty feature sequence".into()));
    }
    Tensor::from_vec(&[features.num_frames(), NUM_MELS], features.data().to_vec())
}

/// Runs both LSTM layers, pools the top hidden states, applies the head.
/// Works on frozen and unfrozen nets alike (training needs the latter).
pub fn forward_domain(net: &DomainNet, features: &FeatureMatrix) -> Result<DomainForward> {
    let inputs = features_tensor(features)?;
    let zero_h = Tensor::zeros(&[net.hidden]);
    let zero_c = Tensor::zeros(&[net.hidden]);
    let trace1 = lstm_forward(
        &inputs,
        &net.lstm1_wih.value,
        &net.lstm1_whh.value,
        &net.lstm1_b.value,
        &zero_h,
        &zero_c,
    )?;
    let trace2 = lstm_forward(
        &trace1.hidden,
        &net.lstm2_wih.value,
        &net.lstm2_whh.value,
        &net.lstm2_b.value,
        &zero_h,
        &zero_c,
    )?;
    let pooled = mean_pool_time(&trace2.hidden)?;
    let logits = linear(&pooled, &net.out_w.value, &net.out_b.value)?;
    Ok(DomainForward { logits, pooled, trace1, trace2 })
}

/// Accumulates gradients of one utterance into the net's parameters.
pub fn backward_domain(
    net: &mut DomainNet,
    fwd: &DomainForward,
    d_logits: &Tensor,
) -> Result<()> {
    let (d_pooled, g_out_w, g_out_b) =
        linear_backward(&fwd.pooled, &net.out_w.value, d_logits)?;
    net.out_w.accumulate_grad(&g_out_w);
    net.out_b.accumulate_grad(&g_out_b);

    let t_len = fwd.trace2.hidden.shape()[0];
    let d_hidden2 = mean_pool_time_backward(t_len, &d_pooled);
    let (d_hidden1, g_wih2, g_whh2, g_b2) = lstm_backward(
        &fwd.trace2,
        &net.lstm2_wih.value,
        &net.lstm2_whh.value,
        &d_hidden2,
    )?;
    net.lstm2_wih.accumulate_grad(&g_wih2);
    net.lstm2_whh.accumulate_grad(&g_whh2);
    net.lstm2_b.accumulate_grad(&g_b2);

    let (_, g_wih1, g_whh1, g_b1) = lstm_backward(
        &fwd.trace1,
        &net.lstm1_wih.value,
        &net.lstm1_whh.value,
        &d_hidden1,
    )?;
    net.lstm1_wih.accumulate_grad(&g_wih1);
    net.lstm1_whh.accumulate_grad(&g_whh1);
    net.lstm1_b.accumulate_grad(&g_b1);
    Ok(())
}

/// Mean-pooled top-layer hidden states of a frozen net — the utterance's
/// domain embedding. Label-free: only the features go in.
pub fn extract_domain_embedding(
    net: &DomainNet,
    features: &FeatureMatrix,
) -> Result<DomainEmbedding> {
    if !net.frozen {
        return Err(Error::Validation(
            "domain embeddings require a frozen, fully trained classifier".into(),
        ));
    }
    let fwd = forward_domain(net, features)?;
    Ok(DomainEmbedding { vector: fwd.pooled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_err, FD_EPS, FD_TOL};
    use crate::netcore::{softmax_ce, softmax_ce_backward};
    use rand::prelude::*;

    fn random_features(rng: &mut ChaCha8Rng, frames: usize) -> FeatureMatrix {
        let data: Vec<f64> =
            (0..frames * NUM_MELS).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMatrix::new(frames, data).unwrap()
    }

    #[test]
    fn parameter_count_matches_hand_tally() {
        let net = build_domain_net(0);
        let lstm1 = 4 * 64 * 40 + 4 * 64 * 64 + 4 * 64;
        let lstm2 = 4 * 64 * 64 + 4 * 64 * 64 + 4 * 64;
        let head = 3 * 64 + 3;
        assert_eq!(lstm1, 26880);
        assert_eq!(lstm2, 33024);
        assert_eq!(head, 195);
        assert_eq!(net.num_params(), 60099);
    }

    #[test]
    fn same_seed_builds_identical_weights() {
        let a = build_domain_net(7);
        let b = build_domain_net(7);
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.value, pb.value);
        }
        let c = build_domain_net(8);
        assert_ne!(a.lstm1_wih.value, c.lstm1_wih.value);
    }

    #[test]
    fn output_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = build_domain_net(0);
        net.freeze();
        let feats = random_features(&mut rng, 12);
        let emb = extract_domain_embedding(&net, &feats).unwrap();
        assert_eq!(emb.vector.shape(), [64]);
        let fwd = forward_domain(&net, &feats).unwrap();
        assert_eq!(fwd.logits.shape(), [3]);
    }

    #[test]
    fn zero_weight_net_yields_zero_embedding() {
        let mut net = build_domain_net(0);
        for p in net.params_mut() {
            p.value = Tensor::zeros(p.value.shape());
        }
        net.freeze();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let emb = extract_domain_embedding(&net, &random_features(&mut rng, 9)).unwrap();
        assert!(emb.vector.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_embedding_is_the_top_hidden_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = build_domain_net(4);
        net.freeze();
        let feats = random_features(&mut rng, 1);
        let emb = extract_domain_embedding(&net, &feats).unwrap();

        let inputs = Tensor::from_vec(&[1, NUM_MELS], feats.data().to_vec()).unwrap();
        let zero = Tensor::zeros(&[net.hidden]);
        let t1 = lstm_forward(
            &inputs,
            &net.lstm1_wih.value,
            &net.lstm1_whh.value,
            &net.lstm1_b.value,
            &zero,
            &zero,
        )
        .unwrap();
        let t2 = lstm_forward(
            &t1.hidden,
            &net.lstm2_wih.value,
            &net.lstm2_whh.value,
            &net.lstm2_b.value,
            &zero,
            &zero,
        )
        .unwrap();
        assert_eq!(emb.vector.data(), t2.hidden.data());
    }

    #[test]
    fn frame_order_changes_the_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = build_domain_net(5);
        net.freeze();
        let feats = random_features(&mut rng, 8);
        let mut reversed = Vec::with_capacity(feats.data().len());
        for row in (0..8).rev() {
            reversed.extend_from_slice(feats.row(row));
        }
        let flipped = FeatureMatrix::new(8, reversed).unwrap();
        let a = extract_domain_embedding(&net, &feats).unwrap();
        let b = extract_domain_embedding(&net, &flipped).unwrap();
        assert_ne!(a.vector, b.vector);
    }

    #[test]
    fn unfrozen_net_refuses_to_emit_embeddings() {
        let net = build_domain_net(0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            extract_domain_embedding(&net, &random_features(&mut rng, 6)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn classifier_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = build_domain_net_with(5, 17);
        let feats = random_features(&mut rng, 3);
        let label = 2usize;

        let fwd = forward_domain(&net, &feats).unwrap();
        let (_, probs) = softmax_ce(&fwd.logits, label).unwrap();
        let d_logits = softmax_ce_backward(&probs, label);
        backward_domain(&mut net, &fwd, &d_logits).unwrap();
        let grads: Vec<Tensor> = net.params().iter().map(|p| p.grad.clone()).collect();
        let names: Vec<String> = net.params().iter().map(|p| p.name.clone()).collect();

        for (idx, name) in names.iter().enumerate() {
            let base = net.params()[idx].value.clone();
            let shape = base.shape().to_vec();
            let num = central_diff(
                |v| {
                    net.params_mut()[idx].value =
                        Tensor::from_vec(&shape, v.to_vec()).unwrap();
                    let fwd = forward_domain(&net, &feats).unwrap();
                    softmax_ce(&fwd.logits, label).unwrap().0
                },
                base.data(),
                FD_EPS,
            );
            net.params_mut()[idx].value = base;
            let err = max_rel_err(grads[idx].data(), &num);
            assert!(err < FD_TOL, "{name}: rel err {err}");
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let net = build_domain_net(0);
        let feats = FeatureMatrix::new(0, vec![]).unwrap();
        assert!(forward_domain(&net, &feats).is_err());
    }
}
