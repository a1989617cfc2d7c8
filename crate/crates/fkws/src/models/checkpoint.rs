//! Binary model checkpoints.
//!
//! Layout: magic `FKWSMODL`, format version (u32 LE), network tag (u8:
//! 0 baseline, 1 emb1, 2 emb2, 3 mtl, 4 domain classifier), keyword count
//! M (u32 LE, 0 for the domain classifier), then one record per parameter
//! in the network's canonical order: name length (u32 LE), UTF-8 name,
//! rank (u32 LE), dims (u32 LE each), values as little-endian f32.
//!
//! Values are stored at 32-bit precision; a round-trip reproduces every
//! parameter exactly at that precision, and re-saving a loaded checkpoint
//! reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::domain::{build_domain_net_with, DomainNet};
use crate::models::keyword::{build_keyword_net_with, KeywordNet, NetDims, Variant};
use crate::netcore::Tensor;

const MAGIC: &[u8; 8] = b"FKWSMODL";
const VERSION: u32 = 1;
const TAG_DOMAIN: u8 = 4;

fn variant_tag(variant: Variant) -> u8 {
    match variant {
        Variant::Baseline => 0,
        Variant::Emb1 => 1,
        Variant::Emb2 => 2,
        Variant::Mtl => 3,
    }
}

fn tag_variant(tag: u8) -> Result<Variant> {
    match tag {
        0 => Ok(Variant::Baseline),
        1 => Ok(Variant::Emb1),
        2 => Ok(Variant::Emb2),
        3 => Ok(Variant::Mtl),
        other => Err(Error::Format(format!("unknown network tag {other}"))),
    }
}

fn push_record(out: &mut Vec<u8>, name: &str, value: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(value.rank() as u32).to_le_bytes());
    for &d in value.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in value.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn encode(tag: u8, num_words: u32, params: &[(&str, &Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(tag);
    out.extend_from_slice(&num_words.to_le_bytes());
    for (name, value) in params {
        push_record(&mut out, name, value);
    }
    out
}

pub fn save_keyword_net(path: &Path, net: &KeywordNet) -> Result<()> {
    let params: Vec<(&str, &Tensor)> =
        net.params().iter().map(|p| (p.name.as_str(), &p.value)).collect();
    let bytes = encode(variant_tag(net.variant), net.num_words as u32, &params);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_domain_net(path: &Path, net: &DomainNet) -> Result<()> {
    let params: Vec<(&str, &Tensor)> =
        net.params().iter().map(|p| (p.name.as_str(), &p.value)).collect();
    let bytes = encode(TAG_DOMAIN, 0, &params);
    fs::write(path, bytes)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn read_records(r: &mut Reader) -> Result<BTreeMap<String, Tensor>> {
    let mut map = BTreeMap::new();
    while !r.done() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = r.take(count * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if map.insert(name.clone(), Tensor::from_vec(&shape, data)?).is_some() {
            return Err(Error::Format(format!("duplicate parameter '{name}'")));
        }
    }
    Ok(map)
}

fn dim(map: &BTreeMap<String, Tensor>, name: &str, axis: usize) -> Result<usize> {
    let t = map
        .get(name)
        .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter '{name}'")))?;
    t.shape()
        .get(axis)
        .copied()
        .ok_or_else(|| Error::Format(format!("parameter '{name}' has too few dims")))
}

/// Moves loaded tensors into the freshly built net, insisting that names
/// and shapes line up exactly and nothing is left over.
fn fill_params(
    mut map: BTreeMap<String, Tensor>,
    params: Vec<&mut crate::netcore::Parameter>,
) -> Result<()> {
    for p in params {
        let value = map
            .remove(&p.name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter '{}'", p.name)))?;
        if value.shape() != p.value.shape() {
            return Err(Error::Format(format!(
                "parameter '{}' has shape {:?}, expected {:?}",
                p.name,
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
    }
    if let Some(name) = map.keys().next() {
        return Err(Error::Format(format!("unexpected parameter '{name}'")));
    }
    Ok(())
}

pub enum Checkpoint {
    Keyword(KeywordNet),
    Domain(DomainNet),
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Unsupported(format!(
            "checkpoint version {version}, expected {VERSION}"
        )));
    }
    let tag = r.u8()?;
    let num_words = r.u32()? as usize;
    let map = read_records(&mut r)?;

    if tag == TAG_DOMAIN {
        let hidden = dim(&map, "out.w", 1)?;
        let mut net = build_domain_net_with(hidden, 0);
        fill_params(map, net.params_mut())?;
        // a serialized classifier is finished training by definition
        net.freeze();
        return Ok(Checkpoint::Domain(net));
    }

    let variant = tag_variant(tag)?;
    if num_words == 0 || dim(&map, "out.w", 0)? != num_words + 1 {
        return Err(Error::Format(format!(
            "keyword count {} does not match head width {:?}",
            num_words,
            dim(&map, "out.w", 0)
        )));
    }
    let channels = [
        dim(&map, "conv1.w", 0)?,
        dim(&map, "conv2.w", 0)?,
        dim(&map, "conv3.w", 0)?,
    ];
    let fc1 = dim(&map, "fc1.w", 0)?;
    let flatten = channels[2] * 9;
    let embedding = match variant {
        Variant::Emb1 => dim(&map, "out.w", 1)?
            .checked_sub(fc1)
            .filter(|&e| e > 0)
            .ok_or_else(|| Error::Format("head narrower than the feature layer".into()))?,
        Variant::Emb2 => dim(&map, "fc1.w", 1)?
            .checked_sub(flatten)
            .filter(|&e| e > 0)
            .ok_or_else(|| Error::Format("fc1 narrower than the flattened conv output".into()))?,
        _ => NetDims::default().embedding,
    };
    let dims = NetDims { channels, fc1, embedding };
    let mut net = build_keyword_net_with(variant, num_words, dims, 0)?;
    fill_params(map, net.params_mut())?;
    Ok(Checkpoint::Keyword(net))
}

pub fn load_keyword_net(path: &Path) -> Result<KeywordNet> {
    match load_checkpoint(path)? {
        Checkpoint::Keyword(net) => Ok(net),
        Checkpoint::Domain(_) => Err(Error::Format(
            "expected a keyword network, found a domain classifier".into(),
        )),
    }
}

pub fn load_domain_net(path: &Path) -> Result<DomainNet> {
    match load_checkpoint(path)? {
        Checkpoint::Domain(net) => Ok(net),
        Checkpoint::Keyword(_) => Err(Error::Format(
            "expected a domain classifier, found a keyword network".into(),
        )),
    }
}
