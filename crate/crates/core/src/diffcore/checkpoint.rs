//! Versioned little-endian binary container for named networks plus scalar
//! metadata. Parameters are stored as raw IEEE-754 bits, so a save/load
//! round trip is bit-exact.
//!
//! Layout (version 1):
//!
//! ```text
//! magic "PCANCKPT" | u32 version | str kind
//! u32 n_meta  { str name | f64 value }
//! u32 n_nets  { str name | u8 activation | u32 n_layers
//!               { u32 inputs | u32 outputs | f64[inputs*outputs] weights | f64[outputs] bias } }
//! ```
//! where `str` is a u32 byte length followed by UTF-8.

use std::io::{Read, Write};
use std::path::Path;

use super::activation::Activation;
use super::dense::{Dense, DenseNet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PCANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, f64)>,
    pub nets: Vec<(String, DenseNet)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            ..Self::default()
        }
    }

    pub fn with_meta(mut self, name: &str, value: f64) -> Self {
        self.meta.push((name.to_string(), value));
        self
    }

    pub fn with_net(mut self, name: &str, net: &DenseNet) -> Self {
        self.nets.push((name.to_string(), net.clone()));
        self
    }

    pub fn meta(&self, name: &str) -> Result<f64> {
        self.meta
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata field `{name}`")))
    }

    pub fn net(&self, name: &str) -> Result<DenseNet> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Checkpoint(format!("missing network `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        put_u32(&mut out, self.meta.len());
        for (name, v) in &self.meta {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        put_u32(&mut out, self.nets.len());
        for (name, net) in &self.nets {
            put_str(&mut out, name);
            out.push(net.hidden().tag());
            put_u32(&mut out, net.layers().len());
            for l in net.layers() {
                put_u32(&mut out, l.inputs);
                put_u32(&mut out, l.outputs);
                for v in l.weights.iter().chain(&l.bias) {
                    out.extend_from_slice(&v.to_bits().to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = r.string()?;
        let n_meta = r.u32()? as usize;
        let mut meta = Vec::with_capacity(n_meta.min(1024));
        for _ in 0..n_meta {
            let name = r.string()?;
            meta.push((name, r.f64()?));
        }
        let n_nets = r.u32()? as usize;
        let mut nets = Vec::with_capacity(n_nets.min(1024));
        for _ in 0..n_nets {
            let name = r.string()?;
            let tag = r.take(1)?[0];
            let act = Activation::from_tag(tag)
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {tag}")))?;
            let n_layers = r.u32()? as usize;
            let mut layers = Vec::with_capacity(n_layers.min(1024));
            for _ in 0..n_layers {
                let inputs = r.u32()? as usize;
                let outputs = r.u32()? as usize;
                let weights = (0..inputs * outputs)
                    .map(|_| r.f64())
                    .collect::<Result<Vec<_>>>()?;
                let bias = (0..outputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                layers.push(Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                });
            }
            let net = DenseNet::from_layers(layers, act)
                .map_err(|e| Error::Checkpoint(format!("network `{name}`: {e}")))?;
            nets.push((name, net));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
        }
        Ok(Self { kind, meta, nets })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(u64::from_le_bytes(
            self.take(8)?.try_into().unwrap(),
        )))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 in checkpoint".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = DenseNet::new(&[8, 16, 4], Activation::Relu, &mut rng).unwrap();
        let mut b = DenseNet::new(&[4, 1], Activation::Tanh, &mut rng).unwrap();
        b.set_param(0, f64::MIN_POSITIVE / 3.0);
        b.set_param(1, -0.0);
        let ck = Checkpoint::new("demo")
            .with_meta("t_lo", 1.0)
            .with_meta("t_span", 4.0)
            .with_net("enc", &a)
            .with_net("head", &b);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let bits = |n: &DenseNet| n.params().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&back.net("enc").unwrap()), bits(&a));
        assert_eq!(bits(&back.net("head").unwrap()), bits(&b));
        assert_eq!(back.kind, "demo");
        assert_eq!(back.meta("t_span").unwrap(), 4.0);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let bytes = Checkpoint::new("x").to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
