//! The convolutional keyword classifier and its three domain-aware variants.
//!
//! All variants share one trunk: three conv(3x3) -> ReLU -> maxpool(2x2)
//! stages over a 1x40x40 input window, a flatten, fc1 with ReLU (the
//! feature layer), and a word-logit head of width M+1 (M keyword units
//! plus filler). The variants differ only in where extra signals attach:
//!
//! * `Emb1` concatenates a 64-dim domain embedding to the feature layer
//!   before the word head.
//! * `Emb2` concatenates the embedding to the flattened conv output
//!   before fc1.
//! * `Mtl` adds a 3-way domain head reading the feature layer.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::domain::DomainEmbedding;
use crate::netcore::{
    concat, concat_backward, conv2d, conv2d_backward, linear, linear_backward, maxpool2,
    maxpool2_backward, relu, relu_backward, MaxPool2, Parameter, Tensor,
};

/// Side length of the square input window (frames x mel bands).
pub const INPUT_SIDE: usize = 40;

/// Spatial side lengths after each conv and pool: 40 -> 38 -> 19 -> 17 ->
/// 8 -> 6 -> 3.
const STAGE_SIDES: [(usize, usize); 3] = [(38, 19), (17, 8), (6, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    Emb1,
    Emb2,
    Mtl,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Emb1 => "emb1",
            Variant::Emb2 => "emb2",
            Variant::Mtl => "mtl",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "baseline" => Ok(Variant::Baseline),
            "emb1" => Ok(Variant::Emb1),
            "emb2" => Ok(Variant::Emb2),
            "mtl" => Ok(Variant::Mtl),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }

    pub fn needs_embedding(self) -> bool {
        matches!(self, Variant::Emb1 | Variant::Emb2)
    }

    pub fn has_domain_head(self) -> bool {
        self == Variant::Mtl
    }
}

/// Layer widths. The input geometry (40x40, 3x3 kernels, 2x2 pools) is
/// fixed; only these widths vary, which keeps gradient-check configs cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub channels: [usize; 3],
    pub fc1: usize,
    pub embedding: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims { channels: [32, 32, 32], fc1: 128, embedding: 64 }
    }
}

impl NetDims {
    pub fn flatten_width(&self) -> usize {
        let (_, side) = STAGE_SIDES[2];
        self.channels[2] * side * side
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.iter().any(|&c| c == 0) || self.fc1 == 0 || self.embedding == 0 {
            return Err(Error::Validation("network widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KeywordNet {
    pub variant: Variant,
    pub num_words: usize,
    pub dims: NetDims,
    pub conv1_w: Parameter,
    pub conv1_b: Parameter,
    pub conv2_w: Parameter,
    pub conv2_b: Parameter,
    pub conv3_w: Parameter,
    pub conv3_b: Parameter,
    pub fc1_w: Parameter,
    pub fc1_b: Parameter,
    pub out_w: Parameter,
    pub out_b: Parameter,
    pub domain_w: Option<Parameter>,
    pub domain_b: Option<Parameter>,
}

impl KeywordNet {
    /// Parameters in the fixed build/serialization order.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = vec![
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.out_w,
            &self.out_b,
        ];
        if let (Some(w), Some(b)) = (&self.domain_w, &self.domain_b) {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.out_w,
            &mut self.out_b,
        ];
        if let (Some(w), Some(b)) = (&mut self.domain_w, &mut self.domain_b) {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

}

/// What downstream losses read after one window's forward pass.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    pub word_logits: Tensor,
    pub domain_logits: Option<Tensor>,
    /// fc1's post-ReLU output; the correlation-alignment losses and the
    /// embedding/domain heads all hang off this vector.
    pub feature_layer: Tensor,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    input: Tensor,
    conv1_out: Tensor,
    pool1: MaxPool2,
    conv2_out: Tensor,
    pool2: MaxPool2,
    conv3_out: Tensor,
    pool3: MaxPool2,
    fc1_in: Tensor,
    fc1_out: Tensor,
    feature: Tensor,
    head_in: Tensor,
}

fn uniform_init(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(shape, |_| dist.sample(rng))
}

pub fn build_keyword_net(variant: Variant, num_words: usize, seed: u64) -> Result<KeywordNet> {
    build_keyword_net_with(variant, num_words, NetDims::default(), seed)
}

pub fn build_keyword_net_with(
    variant: Variant,
    num_words: usize,
    dims: NetDims,
    seed: u64,
) -> Result<KeywordNet> {
    if num_words == 0 {
        return Err(Error::Validation("need at least one keyword unit".into()));
    }
    dims.validate()?;

    // The conv geometry is baked in; confirm the stage arithmetic once per
    // build so a future edit to the constants cannot drift silently.
    let mut side = INPUT_SIDE;
    for (conv_side, pool_side) in STAGE_SIDES {
        assert_eq!(side - 2, conv_side);
        assert_eq!(conv_side / 2, pool_side);
        side = pool_side;
    }

    let [c1, c2, c3] = dims.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv1_w = uniform_init(&mut rng, &[c1, 1, 3, 3], 9);
    let conv2_w = uniform_init(&mut rng, &[c2, c1, 3, 3], c1 * 9);
    let conv3_w = uniform_init(&mut rng, &[c3, c2, 3, 3], c2 * 9);

    let fc1_in = match variant {
        Variant::Emb2 => dims.flatten_width() + dims.embedding,
        _ => dims.flatten_width(),
    };
    let fc1_w = uniform_init(&mut rng, &[dims.fc1, fc1_in], fc1_in);
    let out_in = match variant {
        Variant::Emb1 => dims.fc1 + dims.embedding,
        _ => dims.fc1,
    };
    let out_w = uniform_init(&mut rng, &[num_words + 1, out_in], out_in);
    let (domain_w, domain_b) = if variant.has_domain_head() {
        let w = uniform_init(&mut rng, &[3, dims.fc1], dims.fc1);
        (
            Some(Parameter::new("domain_head.w", w)),
            Some(Parameter::new("domain_head.b", Tensor::zeros(&[3]))),
        )
    } else {
        (None, None)
    };

    Ok(KeywordNet {
        variant,
        num_words,
        dims,
        conv1_w: Parameter::new("conv1.w", conv1_w),
        conv1_b: Parameter::new("conv1.b", Tensor::zeros(&[c1])),
        conv2_w: Parameter::new("conv2.w", conv2_w),
        conv2_b: Parameter::new("conv2.b", Tensor::zeros(&[c2])),
        conv3_w: Parameter::new("conv3.w", conv3_w),
        conv3_b: Parameter::new("conv3.b", Tensor::zeros(&[c3])),
        fc1_w: Parameter::new("fc1.w", fc1_w),
        fc1_b: Parameter::new("fc1.b", Tensor::zeros(&[dims.fc1])),
        out_w: Parameter::new("out.w", out_w),
        out_b: Parameter::new("out.b", Tensor::zeros(&[num_words + 1])),
        domain_w,
        domain_b,
    })
}

fn check_embedding<'a>(
    net: &KeywordNet,
    embedding: Option<&'a DomainEmbedding>,
) -> Result<Option<&'a Tensor>> {
    match (net.variant.needs_embedding(), embedding) {
        (true, Some(e)) => {
            if e.vector.len() != net.dims.embedding {
                return Err(Error::Shape(format!(
                    "embedding width {} but network expects {}",
                    e.vector.len(),
                    net.dims.embedding
                )));
            }
            Ok(Some(&e.vector))
        }
        (false, None) => Ok(None),
        (true, None) => Err(Error::Config(format!(
            "variant {} requires a domain embedding",
            net.variant.name()
        ))),
        (false, Some(_)) => Err(Error::Config(format!(
            "variant {} takes no domain embedding",
            net.variant.name()
        ))),
    }
}

/// Runs one window through the net, keeping the activations needed by
/// [`backward_keyword`].
pub fn forward_keyword_cached(
    net: &KeywordNet,
    window: &[f64],
    embedding: Option<&DomainEmbedding>,
) -> Result<(ForwardRecord, ForwardCache)> {
    let emb = check_embedding(net, embedding)?;
    if window.len() != INPUT_SIDE * INPUT_SIDE {
        return Err(Error::Shape(format!(
            "window has {} values, expected {}",
            window.len(),
            INPUT_SIDE * INPUT_SIDE
        )));
    }
    let input = Tensor::from_vec(&[1, INPUT_SIDE, INPUT_SIDE], window.to_vec())?;

    let conv1_out = conv2d(&input, &net.conv1_w.value, &net.conv1_b.value)?;
    let pool1 = maxpool2(&relu(&conv1_out))?;
    let conv2_out = conv2d(&pool1.output, &net.conv2_w.value, &net.conv2_b.value)?;
    let pool2 = maxpool2(&relu(&conv2_out))?;
    let conv3_out = conv2d(&pool2.output, &net.conv3_w.value, &net.conv3_b.value)?;
    let pool3 = maxpool2(&relu(&conv3_out))?;

    let flat = Tensor::from_vec(&[net.dims.flatten_width()], pool3.output.data().to_vec())?;
    let fc1_in = match (net.variant, emb) {
        (Variant::Emb2, Some(e)) => concat(&flat, e)?,
        _ => flat,
    };
    let fc1_out = linear(&fc1_in, &net.fc1_w.value, &net.fc1_b.value)?;
    let feature = relu(&fc1_out);

    let head_in = match (net.variant, emb) {
        (Variant::Emb1, Some(e)) => concat(&feature, e)?,
        _ => feature.clone(),
    };
    let word_logits = linear(&head_in, &net.out_w.value, &net.out_b.value)?;

    let domain_logits = match (&net.domain_w, &net.domain_b) {
        (Some(w), Some(b)) => Some(linear(&feature, &w.value, &b.value)?),
        _ => None,
    };

    let record = ForwardRecord {
        word_logits,
        domain_logits,
        feature_layer: feature.clone(),
    };
    let cache = ForwardCache {
        input,
        conv1_out,
        pool1,
        conv2_out,
        pool2,
        conv3_out,
        pool3,
        fc1_in,
        fc1_out,
        feature,
        head_in,
    };
    Ok((record, cache))
}

/// Forward pass without the backward bookkeeping.
pub fn forward_keyword(
    net: &KeywordNet,
    window: &[f64],
    embedding: Option<&DomainEmbedding>,
) -> Result<ForwardRecord> {
    forward_keyword_cached(net, window, embedding).map(|(record, _)| record)
}

/// Accumulates gradients for one window into the net's parameters.
///
/// `d_word_logits` is the loss gradient at the word head;
/// `d_domain_logits` feeds the MTL head; `d_feature_extra` is an extra
/// gradient applied directly to the feature layer (the correlation-
/// alignment term attaches here). Gradients on a provided embedding are
/// discarded — embeddings come from a frozen network.
pub fn backward_keyword(
    net: &mut KeywordNet,
    cache: &ForwardCache,
    d_word_logits: &Tensor,
    d_domain_logits: Option<&Tensor>,
    d_feature_extra: Option<&Tensor>,
) -> Result<()> {
    if d_word_logits.len() != net.num_words + 1 {
        return Err(Error::Shape(format!(
            "word-logit grad {:?}, expected [{}]",
            d_word_logits.shape(),
            net.num_words + 1
        )));
    }
    let (d_head_in, g_out_w, g_out_b) =
        linear_backward(&cache.head_in, &net.out_w.value, d_word_logits)?;
    net.out_w.accumulate_grad(&g_out_w);
    net.out_b.accumulate_grad(&g_out_b);

    let mut d_feature = match net.variant {
        Variant::Emb1 => concat_backward(net.dims.fc1, &d_head_in).0,
        _ => d_head_in,
    };

    match (d_domain_logits, &net.domain_w) {
        (Some(d_dom), Some(w)) => {
            let (d_feat_dom, g_dom_w, g_dom_b) =
                linear_backward(&cache.feature, &w.value, d_dom)?;
            d_feature.add_assign(&d_feat_dom);
            net.domain_w.as_mut().unwrap().accumulate_grad(&g_dom_w);
            net.domain_b.as_mut().unwrap().accumulate_grad(&g_dom_b);
        }
        (Some(_), None) => {
            return Err(Error::Config(format!(
                "variant {} has no domain head to backpropagate",
                net.variant.name()
            )));
        }
        (None, _) => {}
    }

    if let Some(extra) = d_feature_extra {
        if extra.len() != net.dims.fc1 {
            return Err(Error::Shape(format!(
                "feature grad {:?}, expected [{}]",
                extra.shape(),
                net.dims.fc1
            )));
        }
        d_feature.add_assign(extra);
    }

    let d_fc1_out = relu_backward(&cache.fc1_out, &d_feature);
    let (d_fc1_in, g_fc1_w, g_fc1_b) =
        linear_backward(&cache.fc1_in, &net.fc1_w.value, &d_fc1_out)?;
    net.fc1_w.accumulate_grad(&g_fc1_w);
    net.fc1_b.accumulate_grad(&g_fc1_b);

    let d_flat = match net.variant {
        Variant::Emb2 => concat_backward(net.dims.flatten_width(), &d_fc1_in).0,
        _ => d_fc1_in,
    };
    let (_, side) = STAGE_SIDES[2];
    let d_pool3 = Tensor::from_vec(&[net.dims.channels[2], side, side], d_flat.into_data())?;

    let d_relu3 = maxpool2_backward(&cache.pool3, &d_pool3)?;
    let d_conv3 = relu_backward(&cache.conv3_out, &d_relu3);
    let (d_pool2_out, g3w, g3b) =
        conv2d_backward(&cache.pool2.output, &net.conv3_w.value, &d_conv3)?;
    net.conv3_w.accumulate_grad(&g3w);
    net.conv3_b.accumulate_grad(&g3b);

    let d_relu2 = maxpool2_backward(&cache.pool2, &d_pool2_out)?;
    let d_conv2 = relu_backward(&cache.conv2_out, &d_relu2);
    let (d_pool1_out, g2w, g2b) =
        conv2d_backward(&cache.pool1.output, &net.conv2_w.value, &d_conv2)?;
    net.conv2_w.accumulate_grad(&g2w);
    net.conv2_b.accumulate_grad(&g2b);

    let d_relu1 = maxpool2_backward(&cache.pool1, &d_pool1_out)?;
    let d_conv1 = relu_backward(&cache.conv1_out, &d_relu1);
    let (_, g1w, g1b) = conv2d_backward(&cache.input, &net.conv1_w.value, &d_conv1)?;
    net.conv1_w.accumulate_grad(&g1w);
    net.conv1_b.accumulate_grad(&g1b);

    Ok(())
}
