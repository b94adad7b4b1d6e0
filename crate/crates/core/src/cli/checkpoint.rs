//! Binary checkpoints: `PDCK`, u16 version, length-prefixed JSON header,
//! named f32 tensors, trailing SHA-256 of everything before it. All integers
//! little-endian.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seq2seq::{init_model, DecoderParams, EncoderParams, ModelConfig, Vocab, VocabListing};
use crate::taskgen::write_atomic;
use crate::tensor::{Param, Tensor};

pub const MAGIC: &[u8; 4] = b"PDCK";
pub const VERSION: u16 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Teacher,
    StudentEncoder,
    StudentFull,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Teacher => "teacher",
            Role::StudentEncoder => "student-encoder",
            Role::StudentFull => "student-full",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub vocab: VocabListing,
    pub role: Role,
    pub seed: u64,
    /// Hex digest of the checkpoint this one was derived from.
    pub parent: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor)>,
    pub digest: String,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u32(buf: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Shape(format!("{n} does not fit in u32")))?;
    buf.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

/// Serialized bytes and hex digest.
pub fn encode_checkpoint(header: &CheckpointHeader, params: &[&Param]) -> Result<(Vec<u8>, String)> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(header).map_err(|e| Error::Input(e.to_string()))?;
    put_u32(&mut buf, json.len())?;
    buf.extend_from_slice(&json);
    for p in params {
        put_u32(&mut buf, p.name.len())?;
        buf.extend_from_slice(p.name.as_bytes());
        put_u32(&mut buf, p.value.shape().len())?;
        for &d in p.value.shape() {
            put_u32(&mut buf, d)?;
        }
        for x in p.value.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok((buf, hex(&digest)))
}

/// Writes atomically and returns the hex digest.
pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, params: &[&Param]) -> Result<String> {
    let (bytes, digest) = encode_checkpoint(header, params)?;
    write_atomic(path, &bytes)?;
    Ok(digest)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.path, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Magic { path: path.into() });
    }
    if bytes.len() < 6 + DIGEST_LEN {
        return Err(Error::format(path, "file too short"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let (body, stored) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored {
        return Err(Error::Digest { path: path.into() });
    }
    let mut r = Reader {
        buf: body,
        pos: 6,
        path,
    };
    let n = r.u32()?;
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(n)?).map_err(|e| Error::format(path, format!("header: {e}")))?;
    let mut tensors = Vec::new();
    while r.pos < body.len() {
        let n = r.u32()?;
        let name =
            String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = len.ok_or_else(|| Error::format(path, "tensor size overflows"))?;
        let raw = r.take(
            len.checked_mul(4)
                .ok_or_else(|| Error::format(path, "tensor size overflows"))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::format(path, format!("tensor `{name}`: {e}")))?;
        tensors.push((name, t));
    }
    Ok(Checkpoint {
        header,
        tensors,
        digest: hex(&digest),
    })
}

/// Loads and verifies a checkpoint whose role is one of `accept`.
pub fn load_checkpoint(path: &Path, accept: &[Role]) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = decode_checkpoint(&bytes, path)?;
    if !accept.contains(&ck.header.role) {
        let expected: Vec<String> = accept.iter().map(Role::to_string).collect();
        return Err(Error::Role {
            found: ck.header.role.to_string(),
            expected: expected.join(" or "),
        });
    }
    Ok(ck)
}

fn fill(params: Vec<&mut Param>, tensors: &[(String, Tensor)]) -> Result<()> {
    for p in params {
        let (_, t) = tensors
            .iter()
            .find(|(n, _)| *n == p.name)
            .ok_or_else(|| Error::Input(format!("checkpoint lacks tensor `{}`", p.name)))?;
        if t.shape() != p.value.shape() {
            return Err(Error::Dimension {
                op: "checkpoint load",
                lhs: t.shape().to_vec(),
                rhs: p.value.shape().to_vec(),
            });
        }
        p.value = t.clone();
    }
    Ok(())
}

impl Checkpoint {
    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::try_from(self.header.vocab.clone())
    }

    pub fn encoder(&self) -> Result<EncoderParams> {
        let (mut enc, _) = init_model(&self.header.config, 0)?;
        fill(enc.params_mut(), &self.tensors)?;
        Ok(enc)
    }

    pub fn decoder(&self) -> Result<DecoderParams> {
        let (_, mut dec) = init_model(&self.header.config, 0)?;
        fill(dec.params_mut(), &self.tensors)?;
        Ok(dec)
    }
}
