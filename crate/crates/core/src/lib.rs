//! Keyed chaotic graph dynamics for reversible tensor masking.
//!
//! A 32-byte key and a 16-byte public nonce are hashed into four subkeys.
//! Those seed a random coupling graph, a chaotic node map with its
//! parameters, the initial state, and a per-step noise sequence. Simulating
//! the coupled system yields an `n x d` mask `S`; encryption is `X + S`,
//! decryption `X̃ - S`.
//!
//! ```
//! use kcd_core::{decrypt, encrypt, CipherOptions, MasterKey, Nonce, Tensor};
//!
//! let key = MasterKey::new([7; 32]);
//! let nonce = Nonce::new([1; 16]);
//! let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, -4.5]).unwrap();
//! let masked = encrypt(&x, &key, &nonce, &CipherOptions::default()).unwrap();
//! let back = decrypt(&masked, &key).unwrap();
//! for (a, b) in back.values().iter().zip(x.values()) {
//!     assert!((a - b).abs() < 1e-12);
//! }
//! ```

pub mod cipher;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod graphgen;
pub mod keystream;
pub mod tensor;
pub mod tensorio;

pub use cipher::{
    decrypt, encrypt, generate_mask, mask_from_system, resolve_config, CipherOptions, MaskMatrix,
    MaskedTensor, ParamPins, ResolvedSystem,
};
pub use diagnostics::{
    avalanche, compare_masks, estimate_lyapunov, AvalancheOptions, AvalancheReport, LyapunovOptions,
    LyapunovReport, LyapunovWarning,
};
pub use dynamics::{coupled_step, map_step, MapKind, MapParams, StateMatrix, SystemConfig};
pub use error::{Error, Result};
pub use graphgen::{Adjacency, GraphFamily, GraphSpec, Topology, WeightMatrix};
pub use keystream::{derive_subkeys, Domain, KeyedStream, MasterKey, Nonce, SubKeys};
pub use tensor::Tensor;
