//! Key-conditioned system resolution, mask generation, and the additive
//! encrypt/decrypt pair.
//!
//! The params stream is consumed in a fixed order: map index (if not pinned),
//! the map's parameter (if it has one and it is not pinned), graph family (if
//! not pinned), the family's parameters (`p` for ER; `k` then `beta` for WS),
//! and finally the coupling strength. The graph stream then yields the
//! adjacency followed by the weights, and the init stream the initial state.

use sha2::{Digest, Sha256};

use crate::diagnostics::{estimate_lyapunov, LyapunovOptions, LyapunovReport};
use crate::dynamics::{auto_range, init_state, simulate, MapKind, MapParams, StateMatrix, SystemConfig};
use crate::error::{Error, Result};
use crate::graphgen::{check_coupling, Adjacency, GraphFamily, GraphSpec, Topology, WeightMatrix};
use crate::keystream::{derive_subkeys, Domain, KeyedStream, MasterKey, Nonce, SubKeys};
use crate::tensor::{rows_and_width, Tensor};

pub const DEFAULT_T_BURN: u32 = 100;
pub const DEFAULT_SIGMA: f64 = 1e-3;
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Auto-sampling ranges for graph parameters.
pub const ER_P_RANGE: (f64, f64) = (0.05, 0.3);
pub const WS_BETA_RANGE: (f64, f64) = (0.1, 0.5);
pub const WS_DEGREES: [usize; 3] = [2, 4, 6];
pub const COUPLING_RANGE: (f64, f64) = (0.05, 0.3);

/// Exponent estimate run by `verify_chaos`.
pub const VERIFY_STEPS: usize = 2000;
pub const VERIFY_EPSILON: f64 = 1e-8;

/// User-pinned parameter values. A pin only takes effect when its map or
/// family is the active one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamPins {
    pub r: Option<f64>,
    pub mu: Option<f64>,
    pub s: Option<f64>,
    pub kick: Option<f64>,
    pub p: Option<f64>,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub eps_c: Option<f64>,
}

impl ParamPins {
    fn map_param(&self, kind: MapKind) -> Option<f64> {
        match kind {
            MapKind::Logistic => self.r,
            MapKind::Tent => self.mu,
            MapKind::Baker => self.s,
            MapKind::Standard => self.kick,
            MapKind::ArnoldCat => None,
        }
    }

    /// Pins in options-block bit order.
    fn slots(&self) -> [Option<f64>; 8] {
        [
            self.r,
            self.mu,
            self.s,
            self.kick,
            self.p,
            self.k.map(|k| k as f64),
            self.beta,
            self.eps_c,
        ]
    }

    fn validate(&self) -> Result<()> {
        for (kind, v) in [
            (MapKind::Logistic, self.r),
            (MapKind::Tent, self.mu),
            (MapKind::Baker, self.s),
            (MapKind::Standard, self.kick),
        ] {
            if let Some(v) = v {
                MapParams::for_map(kind, v).validate(kind)?;
            }
        }
        if let Some(p) = self.p {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidGraphSpec(format!("p must lie in [0, 1], got {p}")));
            }
        }
        if let Some(k) = self.k {
            if k < 2 || k % 2 != 0 {
                return Err(Error::InvalidGraphSpec(format!(
                    "k must be even and >= 2, got {k}"
                )));
            }
        }
        if let Some(beta) = self.beta {
            if !(0.0..=1.0).contains(&beta) {
                return Err(Error::InvalidGraphSpec(format!(
                    "beta must lie in [0, 1], got {beta}"
                )));
            }
        }
        if let Some(eps) = self.eps_c {
            check_coupling(eps)?;
        }
        Ok(())
    }
}

/// Public knobs of a mask. Everything here is stored in the container header;
/// nothing here is secret.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherOptions {
    pub map: Option<MapKind>,
    pub family: Option<GraphFamily>,
    pub pins: ParamPins,
    pub t_burn: u32,
    pub noise_sigma: f64,
    pub alpha: f64,
    /// Run the Lyapunov gate during resolution. Not stored in containers.
    pub verify_chaos: bool,
}

impl Default for CipherOptions {
    fn default() -> Self {
        Self {
            map: None,
            family: None,
            pins: ParamPins::default(),
            t_burn: DEFAULT_T_BURN,
            noise_sigma: DEFAULT_SIGMA,
            alpha: DEFAULT_ALPHA,
            verify_chaos: false,
        }
    }
}

const AUTO_ID: u8 = 0xFF;

impl CipherOptions {
    pub fn validate(&self) -> Result<()> {
        self.pins.validate()?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be finite and > 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Build options from string pairs, e.g. `("map", "logistic")`,
    /// `("p", "0.2")`, `("sigma", "0")`. Unknown keys are rejected.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut o = Self::default();
        for (key, value) in pairs {
            let num = || -> Result<f64> {
                value
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("option {key}: not a number: {value}")))
            };
            match key {
                "map" => o.map = parse_auto(value, MapKind::from_name, "map")?,
                "graph" | "family" => o.family = parse_auto(value, GraphFamily::from_name, "graph")?,
                "r" => o.pins.r = Some(num()?),
                "mu" => o.pins.mu = Some(num()?),
                "s" => o.pins.s = Some(num()?),
                "kick" | "K" => o.pins.kick = Some(num()?),
                "p" => o.pins.p = Some(num()?),
                "k" => {
                    o.pins.k = Some(
                        value
                            .trim()
                            .parse()
                            .map_err(|_| Error::InvalidInput(format!("option k: not an integer: {value}")))?,
                    )
                }
                "beta" => o.pins.beta = Some(num()?),
                "eps_c" => o.pins.eps_c = Some(num()?),
                "t_burn" | "burn" => {
                    o.t_burn = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("option t_burn: not an integer: {value}")))?
                }
                "sigma" | "noise_sigma" => o.noise_sigma = num()?,
                "alpha" => o.alpha = num()?,
                "verify_chaos" => o.verify_chaos = matches!(value, "1" | "true" | "yes"),
                other => return Err(Error::InvalidInput(format!("unknown option {other}"))),
            }
        }
        o.validate()?;
        Ok(o)
    }

    /// Serialized options block:
    ///
    /// ```text
    /// map id u8 (0xFF = auto) | family u8 (0xFF = auto) | pin flags u8 |
    /// pinned values f64 LE in flag-bit order | t_burn u32 LE |
    /// sigma f64 LE | alpha f64 LE
    /// ```
    ///
    /// Flag bits: r, mu, s, kick, p, k, beta, eps_c (bit 0 first).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 + 8 * 8 + 4 + 16);
        out.push(self.map.map_or(AUTO_ID, MapKind::id));
        out.push(self.family.map_or(AUTO_ID, GraphFamily::id));
        let slots = self.pins.slots();
        let flags = slots
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some())
            .fold(0u8, |acc, (bit, _)| acc | (1 << bit));
        out.push(flags);
        for v in slots.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.t_burn.to_le_bytes());
        out.extend_from_slice(&self.noise_sigma.to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out
    }

    /// Parse an options block from the front of `bytes`, returning the options
    /// and the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = ByteReader::new(bytes);
        let map = match r.u8()? {
            AUTO_ID => None,
            id => Some(MapKind::from_id(id).ok_or_else(|| corrupt(format!("unknown map id {id}")))?),
        };
        let family = match r.u8()? {
            AUTO_ID => None,
            id => Some(
                GraphFamily::from_id(id).ok_or_else(|| corrupt(format!("unknown graph family id {id}")))?,
            ),
        };
        let flags = r.u8()?;
        let mut slots = [None; 8];
        for (bit, slot) in slots.iter_mut().enumerate() {
            if flags & (1 << bit) != 0 {
                let v = r.f64()?;
                if !v.is_finite() {
                    return Err(corrupt(format!("pinned value {bit} is not finite")));
                }
                *slot = Some(v);
            }
        }
        let k = match slots[5] {
            None => None,
            Some(v) if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) => Some(v as usize),
            Some(v) => return Err(corrupt(format!("pinned k is not a small integer: {v}"))),
        };
        let pins = ParamPins {
            r: slots[0],
            mu: slots[1],
            s: slots[2],
            kick: slots[3],
            p: slots[4],
            k,
            beta: slots[6],
            eps_c: slots[7],
        };
        let t_burn = r.u32()?;
        let noise_sigma = r.f64()?;
        let alpha = r.f64()?;
        let opts = Self {
            map,
            family,
            pins,
            t_burn,
            noise_sigma,
            alpha,
            verify_chaos: false,
        };
        opts.validate()
            .map_err(|e| corrupt(format!("invalid options block: {e}")))?;
        Ok((opts, r.pos))
    }

    /// First 8 bytes of SHA-256 over the encoded options block.
    pub fn fingerprint(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.encode());
        let mut fp = [0u8; 8];
        fp.copy_from_slice(&digest[..8]);
        fp
    }
}

fn parse_auto<T>(value: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
    if value.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    parse(value)
        .map(Some)
        .ok_or_else(|| Error::InvalidInput(format!("unknown {what} {value}")))
}

fn corrupt(msg: String) -> Error {
    Error::CorruptFile(msg)
}

/// Minimal little-endian cursor; running off the end is a `CorruptFile`.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// A resolved system together with its key-derived samples.
#[derive(Debug, Clone)]
pub struct ResolvedSystem {
    pub config: SystemConfig,
    pub adjacency: Adjacency,
    pub weights: WeightMatrix,
    pub x0: StateMatrix,
    /// Present when the chaos gate ran.
    pub lyapunov: Option<LyapunovReport>,
    subkeys: SubKeys,
}

impl ResolvedSystem {
    pub fn noise_stream(&self) -> KeyedStream {
        self.subkeys.stream(Domain::Noise)
    }

    /// Run the chaos gate on this system (noise disabled).
    pub fn lyapunov(&self, opts: &LyapunovOptions) -> Result<LyapunovReport> {
        let mut quiet = self.config.clone();
        quiet.noise_sigma = 0.0;
        estimate_lyapunov(&quiet, &self.weights, &self.x0, opts)
    }
}

fn draw_map_param(kind: MapKind, pins: &ParamPins, stream: &mut KeyedStream) -> Result<MapParams> {
    let value = match (pins.map_param(kind), auto_range(kind)) {
        (Some(v), _) => v,
        (None, Some((lo, hi))) => stream.uniform(lo, hi)?,
        (None, None) => return Ok(MapParams::default()),
    };
    Ok(MapParams::for_map(kind, value))
}

/// Build the full system for tensors of width `d`.
pub fn resolve_config(
    key: &MasterKey,
    nonce: &Nonce,
    d: usize,
    options: &CipherOptions,
) -> Result<ResolvedSystem> {
    if d == 0 {
        return Err(Error::InvalidDimension("width must be at least 1".into()));
    }
    options.validate()?;
    let subkeys = derive_subkeys(key, nonce);
    let pins = &options.pins;

    let mut params = subkeys.stream(Domain::Params);
    let map = match options.map {
        Some(m) => m,
        None => MapKind::ALL[params.index(MapKind::ALL.len() as u64)? as usize],
    };
    let map_params = draw_map_param(map, pins, &mut params)?;
    let family = match options.family {
        Some(f) => f,
        None => match GraphFamily::ALL[params.index(2)? as usize] {
            // a lattice needs 2 <= k < d
            GraphFamily::WattsStrogatz if d < 3 => GraphFamily::ErdosRenyi,
            f => f,
        },
    };
    let topology = match family {
        GraphFamily::ErdosRenyi => Topology::ErdosRenyi {
            p: match pins.p {
                Some(p) => p,
                None => params.uniform(ER_P_RANGE.0, ER_P_RANGE.1)?,
            },
        },
        GraphFamily::WattsStrogatz => {
            let k = match pins.k {
                Some(k) => k,
                None => {
                    let choices: Vec<usize> = WS_DEGREES.iter().copied().filter(|&k| k < d).collect();
                    if choices.is_empty() {
                        return Err(Error::InvalidGraphSpec(format!(
                            "Watts-Strogatz needs at least 3 nodes, got {d}"
                        )));
                    }
                    choices[params.index(choices.len() as u64)? as usize]
                }
            };
            let beta = match pins.beta {
                Some(b) => b,
                None => params.uniform(WS_BETA_RANGE.0, WS_BETA_RANGE.1)?,
            };
            Topology::WattsStrogatz { k, beta }
        }
    };
    let eps_c = match pins.eps_c {
        Some(e) => e,
        None => params.uniform(COUPLING_RANGE.0, COUPLING_RANGE.1)?,
    };

    let config = SystemConfig {
        graph: GraphSpec { d, topology, eps_c },
        map,
        params: map_params,
        t_burn: options.t_burn,
        noise_sigma: options.noise_sigma,
        alpha: options.alpha,
    };
    config.validate()?;

    let (adjacency, weights) = config.graph.sample(&mut subkeys.stream(Domain::Graph))?;
    let x0 = init_state(&config, &mut subkeys.stream(Domain::Init))?;

    let mut resolved = ResolvedSystem {
        config,
        adjacency,
        weights,
        x0,
        lyapunov: None,
        subkeys,
    };
    if options.verify_chaos {
        let report = resolved.lyapunov(&LyapunovOptions {
            steps: VERIFY_STEPS,
            epsilon: VERIFY_EPSILON,
            ..Default::default()
        })?;
        if !report.is_chaotic() {
            return Err(Error::ChaosVerificationFailed {
                lambda: report.lambda_hat,
            });
        }
        resolved.lyapunov = Some(report);
    }
    Ok(resolved)
}

/// `n x d` additive mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl MaskMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Reshape into a tensor of `shape`, which must hold `rows * cols`
    /// elements.
    pub fn into_tensor(self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.values)
    }
}

/// Mask for a tensor of `shape`: width is the last axis, rows the product of
/// the leading axes.
pub fn generate_mask(
    key: &MasterKey,
    nonce: &Nonce,
    shape: &[usize],
    options: &CipherOptions,
) -> Result<MaskMatrix> {
    let (n, d) = rows_and_width(shape)?;
    let system = resolve_config(key, nonce, d, options)?;
    mask_from_system(&system, n)
}

/// Run an already resolved system for `rows` retained steps.
pub fn mask_from_system(system: &ResolvedSystem, rows: usize) -> Result<MaskMatrix> {
    let values = simulate(
        &system.config,
        &system.weights,
        &system.x0,
        &mut system.noise_stream(),
        rows,
    )?;
    Ok(MaskMatrix {
        rows,
        cols: system.config.d(),
        values,
    })
}

/// Masked tensor plus everything public needed to undo the mask with the key.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTensor {
    pub nonce: Nonce,
    /// Fingerprint recorded at encryption time.
    pub fingerprint: [u8; 8],
    pub options: CipherOptions,
    pub tensor: Tensor,
}

/// `X + S`.
pub fn encrypt(x: &Tensor, key: &MasterKey, nonce: &Nonce, options: &CipherOptions) -> Result<MaskedTensor> {
    if let Some(bad) = x.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tensor contains non-finite value {bad}"
        )));
    }
    let mask = generate_mask(key, nonce, x.shape(), options)?;
    let data = x.values().iter().zip(mask.values()).map(|(a, s)| a + s).collect();
    let mut stored = options.clone();
    stored.verify_chaos = false;
    Ok(MaskedTensor {
        nonce: *nonce,
        fingerprint: stored.fingerprint(),
        options: stored,
        tensor: Tensor::new(x.shape().to_vec(), data)?,
    })
}

/// `X̃ - S`, with `S` regenerated from the key and the header. A wrong key is
/// not detected; it just yields a wrong tensor.
pub fn decrypt(masked: &MaskedTensor, key: &MasterKey) -> Result<Tensor> {
    let computed = masked.options.fingerprint();
    if computed != masked.fingerprint {
        return Err(Error::ConfigMismatch {
            stored: hex::encode(masked.fingerprint),
            computed: hex::encode(computed),
        });
    }
    let mask = generate_mask(key, &masked.nonce, masked.tensor.shape(), &masked.options)?;
    let data = masked
        .tensor
        .values()
        .iter()
        .zip(mask.values())
        .map(|(a, s)| a - s)
        .collect();
    Tensor::new(masked.tensor.shape().to_vec(), data)
}
