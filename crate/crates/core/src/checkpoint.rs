//! Versioned binary model checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic    8 bytes  "UQFAIRCK"
//! version  u32      1
//! kind     u8       1 = variational, 2 = deterministic, 3 = ensemble
//! ```
//!
//! Variational body: prior `pi, -ln sigma1, -ln sigma2` as f64, layer count
//! u32, `(inputs, outputs)` u32 pairs, then per layer the f64 arrays
//! `weight_mu, weight_rho, bias_mu, bias_rho` (weights row-major
//! `outputs x inputs`).
//!
//! Deterministic body: layer count, shape pairs, then per layer `weight, bias`.
//!
//! Ensemble body: member count u32, then per member a u64 byte length
//! followed by a complete deterministic checkpoint.

use std::path::Path;

use crate::bayesnet::{ScaleMixturePrior, VariationalLayer, VariationalNet};
use crate::ensemble::{DeterministicNet, Ensemble};
use crate::error::{Error, Result};
use crate::nn::{Dense, Mlp};

pub const MAGIC: &[u8; 8] = b"UQFAIRCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Variational(VariationalNet),
    Deterministic(DeterministicNet),
    Ensemble(Ensemble),
}

impl Checkpoint {
    fn kind(&self) -> u8 {
        match self {
            Checkpoint::Variational(_) => 1,
            Checkpoint::Deterministic(_) => 2,
            Checkpoint::Ensemble(_) => 3,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Checkpoint::Variational(_) => "variational",
            Checkpoint::Deterministic(_) => "deterministic",
            Checkpoint::Ensemble(_) => "ensemble",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind());
        match self {
            Checkpoint::Variational(net) => {
                for v in [net.prior.pi, net.prior.neg_log_sigma1, net.prior.neg_log_sigma2] {
                    put_f64(&mut out, v);
                }
                put_shapes(&mut out, net.layers.iter().map(|l| (l.inputs, l.outputs)));
                for l in &net.layers {
                    for v in l.weight_mu.iter().chain(&l.weight_rho).chain(&l.bias_mu).chain(&l.bias_rho) {
                        put_f64(&mut out, *v);
                    }
                }
            }
            Checkpoint::Deterministic(net) => {
                let layers = &net.mlp.layers;
                put_shapes(&mut out, layers.iter().map(|l| (l.inputs, l.outputs)));
                for l in layers {
                    for v in l.weight.iter().chain(&l.bias) {
                        put_f64(&mut out, *v);
                    }
                }
            }
            Checkpoint::Ensemble(ens) => {
                out.extend_from_slice(&(ens.members.len() as u32).to_le_bytes());
                for m in &ens.members {
                    let blob = Checkpoint::Deterministic(m.clone()).to_bytes();
                    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
                    out.extend_from_slice(&blob);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let ck = match r.take(1)?[0] {
            1 => {
                let prior = ScaleMixturePrior {
                    pi: r.f64()?,
                    neg_log_sigma1: r.f64()?,
                    neg_log_sigma2: r.f64()?,
                };
                let shapes = r.shapes()?;
                let mut layers = Vec::with_capacity(shapes.len());
                for (i, o) in shapes {
                    layers.push(VariationalLayer {
                        inputs: i,
                        outputs: o,
                        weight_mu: r.f64s(i * o)?,
                        weight_rho: r.f64s(i * o)?,
                        bias_mu: r.f64s(o)?,
                        bias_rho: r.f64s(o)?,
                    });
                }
                let net = VariationalNet { layers, prior };
                net.validate()?;
                Checkpoint::Variational(net)
            }
            2 => {
                let shapes = r.shapes()?;
                let mut layers = Vec::with_capacity(shapes.len());
                for (i, o) in shapes {
                    layers.push(Dense {
                        inputs: i,
                        outputs: o,
                        weight: r.f64s(i * o)?,
                        bias: r.f64s(o)?,
                    });
                }
                Checkpoint::Deterministic(DeterministicNet { mlp: Mlp { layers } })
            }
            3 => {
                let n = r.u32()? as usize;
                let mut members = Vec::with_capacity(n.min(1024));
                for i in 0..n {
                    let len = r.u64()? as usize;
                    match Checkpoint::from_bytes(r.take(len)?)? {
                        Checkpoint::Deterministic(m) => members.push(m),
                        other => {
                            return Err(Error::Checkpoint(format!(
                                "ensemble member {i} is a {} checkpoint",
                                other.kind_name()
                            )))
                        }
                    }
                }
                Checkpoint::Ensemble(Ensemble::new(members)?)
            }
            k => return Err(Error::Checkpoint(format!("unknown model kind {k}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_shapes(out: &mut Vec<u8>, shapes: impl ExactSizeIterator<Item = (usize, usize)>) {
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (i, o) in shapes {
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(o as u32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn shapes(&mut self) -> Result<Vec<(usize, usize)>> {
        let n = self.u32()? as usize;
        if n == 0 {
            return Err(Error::Checkpoint("model without layers".into()));
        }
        let mut shapes = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            shapes.push((self.u32()? as usize, self.u32()? as usize));
        }
        if shapes.windows(2).any(|w| w[0].1 != w[1].0) || shapes.iter().any(|s| s.0 == 0 || s.1 == 0) {
            return Err(Error::Checkpoint(format!("inconsistent layer shapes {shapes:?}")));
        }
        Ok(shapes)
    }
}
