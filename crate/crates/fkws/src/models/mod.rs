//! Network assembly: keyword-classifier variants, the recurrent domain
//! classifier, and checkpoint serialization.

pub mod checkpoint;
pub mod domain;
pub mod keyword;

pub use checkpoint::{
    load_checkpoint, load_domain_net, load_keyword_net, save_domain_net, save_keyword_net,
    Checkpoint,
};
pub use domain::{
    backward_domain, build_domain_net, build_domain_net_with, extract_domain_embedding,
    forward_domain, DomainEmbedding, DomainForward, DomainNet, DOMAIN_CLASSES, DOMAIN_HIDDEN,
};
pub use keyword::{
    backward_keyword, build_keyword_net, build_keyword_net_with, forward_keyword,
    forward_keyword_cached, ForwardCache, ForwardRecord, KeywordNet, NetDims, Variant,
    INPUT_SIDE,
};
