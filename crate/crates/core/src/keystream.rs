//! Subkey derivation and the SHA-256 counter-mode stream that seeds every
//! sampling procedure.
//!
//! Block `i` of a stream is `SHA-256(subkey || LE64(i))`. Bytes are consumed
//! strictly in order, so the output is a pure function of the subkey and the
//! number of bytes already taken.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const SUBKEY_LEN: usize = 32;

/// 32-byte shared secret. Never written to any output.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey([u8; KEY_LEN]);

impl MasterKey {
    pub fn new(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
            Error::InvalidKeyMaterial(format!("key must be {KEY_LEN} bytes, got {}", bytes.len()))
        })?;
        Ok(Self(arr))
    }

    /// Lowercase or uppercase hex, no prefix. Errors never quote the input.
    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim())
            .map_err(|_| Error::InvalidKeyMaterial(format!("key must be {} hex digits", 2 * KEY_LEN)))?;
        Self::from_slice(&bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Copy of this key with a single bit inverted.
    pub fn with_bit_flipped(&self, bit: usize) -> Self {
        let mut out = self.0;
        out[(bit / 8) % KEY_LEN] ^= 1 << (bit % 8);
        Self(out)
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterKey(<redacted>)")
    }
}

/// 16-byte public per-message value.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce([u8; NONCE_LEN]);

impl Nonce {
    pub fn new(bytes: [u8; NONCE_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; NONCE_LEN] = bytes.try_into().map_err(|_| {
            Error::InvalidKeyMaterial(format!("nonce must be {NONCE_LEN} bytes, got {}", bytes.len()))
        })?;
        Ok(Self(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim())
            .map_err(|e| Error::InvalidKeyMaterial(format!("nonce is not valid hex: {e}")))?;
        Self::from_slice(&bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }

    pub fn with_bit_flipped(&self, bit: usize) -> Self {
        let mut out = self.0;
        out[(bit / 8) % NONCE_LEN] ^= 1 << (bit % 8);
        Self(out)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", self.to_hex())
    }
}

/// Domain label for each subkey.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Graph,
    Params,
    Init,
    Noise,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Graph, Domain::Params, Domain::Init, Domain::Noise];

    pub fn label(self) -> &'static str {
        match self {
            Domain::Graph => "graph",
            Domain::Params => "params",
            Domain::Init => "init",
            Domain::Noise => "noise",
        }
    }
}

/// The four domain-separated subkeys.
#[derive(Clone, PartialEq, Eq)]
pub struct SubKeys {
    pub graph: [u8; SUBKEY_LEN],
    pub params: [u8; SUBKEY_LEN],
    pub init: [u8; SUBKEY_LEN],
    pub noise: [u8; SUBKEY_LEN],
}

impl SubKeys {
    pub fn get(&self, domain: Domain) -> &[u8; SUBKEY_LEN] {
        match domain {
            Domain::Graph => &self.graph,
            Domain::Params => &self.params,
            Domain::Init => &self.init,
            Domain::Noise => &self.noise,
        }
    }

    pub fn stream(&self, domain: Domain) -> KeyedStream {
        KeyedStream::new(*self.get(domain))
    }
}

impl fmt::Debug for SubKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SubKeys(<redacted>)")
    }
}

fn derive_one(label: &str, key: &MasterKey, nonce: &Nonce) -> [u8; SUBKEY_LEN] {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(key.as_bytes());
    h.update(nonce.as_bytes());
    h.finalize().into()
}

/// `SHA-256(label || key || nonce)` for each of the four labels, with no
/// separators or length prefixes.
pub fn derive_subkeys(key: &MasterKey, nonce: &Nonce) -> SubKeys {
    SubKeys {
        graph: derive_one(Domain::Graph.label(), key, nonce),
        params: derive_one(Domain::Params.label(), key, nonce),
        init: derive_one(Domain::Init.label(), key, nonce),
        noise: derive_one(Domain::Noise.label(), key, nonce),
    }
}

/// Same as [`derive_subkeys`] but for raw byte slices, validating lengths.
pub fn derive_subkeys_from_bytes(key: &[u8], nonce: &[u8]) -> Result<SubKeys> {
    Ok(derive_subkeys(
        &MasterKey::from_slice(key)?,
        &Nonce::from_slice(nonce)?,
    ))
}

const BLOCK_LEN: usize = 32;

/// Deterministic byte stream keyed by a single subkey.
#[derive(Clone)]
pub struct KeyedStream {
    subkey: [u8; SUBKEY_LEN],
    // index of the next block to hash
    counter: u64,
    // set once block 2^64 - 1 has been produced
    exhausted: bool,
    block: [u8; BLOCK_LEN],
    pos: usize,
}

impl KeyedStream {
    pub fn new(subkey: [u8; SUBKEY_LEN]) -> Self {
        Self {
            subkey,
            counter: 0,
            exhausted: false,
            block: [0; BLOCK_LEN],
            pos: BLOCK_LEN,
        }
    }

    /// Stream positioned at the start of block `index`.
    pub fn at_block(subkey: [u8; SUBKEY_LEN], index: u64) -> Self {
        Self {
            counter: index,
            ..Self::new(subkey)
        }
    }

    /// Total bytes handed out so far, saturating.
    pub fn position(&self) -> u128 {
        let blocks = if self.exhausted {
            1u128 << 64
        } else {
            self.counter as u128
        };
        blocks * BLOCK_LEN as u128 - (BLOCK_LEN - self.pos) as u128
    }

    fn refill(&mut self) -> Result<()> {
        if self.exhausted {
            return Err(Error::StreamExhausted);
        }
        let mut h = Sha256::new();
        h.update(self.subkey);
        h.update(self.counter.to_le_bytes());
        self.block = h.finalize().into();
        self.pos = 0;
        match self.counter.checked_add(1) {
            Some(c) => self.counter = c,
            None => self.exhausted = true,
        }
        Ok(())
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) -> Result<()> {
        let mut written = 0;
        while written < out.len() {
            if self.pos == BLOCK_LEN {
                self.refill()?;
            }
            let n = (BLOCK_LEN - self.pos).min(out.len() - written);
            out[written..written + n].copy_from_slice(&self.block[self.pos..self.pos + n]);
            self.pos += n;
            written += n;
        }
        Ok(())
    }

    /// Next 8 bytes, little-endian.
    pub fn next_u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.fill_bytes(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }

    /// Uniform in `[0, 1)` with 53 bits of entropy.
    pub fn unit_uniform(&mut self) -> Result<f64> {
        Ok(unit_from_u64(self.next_u64()?))
    }

    /// Uniform in `[a, b)`.
    pub fn uniform(&mut self, a: f64, b: f64) -> Result<f64> {
        check_range(a, b)?;
        Ok(scale_unit(self.unit_uniform()?, a, b))
    }

    /// Unbiased integer in `[0, m)` by rejection sampling.
    pub fn index(&mut self, m: u64) -> Result<u64> {
        if m == 0 {
            return Err(Error::InvalidRange("index bound must be at least 1".into()));
        }
        let limit = rejection_limit(m);
        loop {
            let u = self.next_u64()?;
            match limit {
                Some(l) if u >= l => continue,
                _ => return Ok(u % m),
            }
        }
    }
}

impl fmt::Debug for KeyedStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyedStream")
            .field("position", &self.position())
            .finish_non_exhaustive()
    }
}

pub(crate) fn check_range(a: f64, b: f64) -> Result<()> {
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(Error::InvalidRange(format!("need finite a < b, got [{a}, {b})")));
    }
    Ok(())
}

/// `(u >> 11) * 2^-53`.
pub fn unit_from_u64(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `a + (b - a) * unit`, pulled below `b` when rounding lands on it.
pub fn scale_unit(unit: f64, a: f64, b: f64) -> f64 {
    let v = a + (b - a) * unit;
    if v >= b {
        b.next_down()
    } else {
        v
    }
}

/// Exclusive upper bound of accepted draws: the largest multiple of `m` not
/// exceeding 2^64. `None` when every u64 is accepted.
fn rejection_limit(m: u64) -> Option<u64> {
    let rem = ((u64::MAX % m) + 1) % m;
    if rem == 0 {
        None
    } else {
        Some(0u64.wrapping_sub(rem))
    }
}
