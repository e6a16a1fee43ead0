#![allow(dead_code)]

use std::path::PathBuf;

use kcd_core::{CipherOptions, GraphFamily, KeyedStream, MapKind, MasterKey, Nonce, ParamPins};

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

pub fn zero_key() -> MasterKey {
    MasterKey::new([0; 32])
}

pub fn zero_nonce() -> Nonce {
    Nonce::new([0; 16])
}

/// Logistic map on an ER(p = 0.2) graph, everything else at defaults.
pub fn pinned_options() -> CipherOptions {
    CipherOptions {
        map: Some(MapKind::Logistic),
        family: Some(GraphFamily::ErdosRenyi),
        pins: ParamPins {
            p: Some(0.2),
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Deterministic test-data source built on an unrelated subkey.
pub fn rng(tag: u8) -> KeyedStream {
    let mut seed = [0x5a; 32];
    seed[0] = tag;
    KeyedStream::new(seed)
}

pub fn random_key(s: &mut KeyedStream) -> MasterKey {
    let mut k = [0u8; 32];
    s.fill_bytes(&mut k).unwrap();
    MasterKey::new(k)
}

pub fn random_nonce(s: &mut KeyedStream) -> Nonce {
    let mut n = [0u8; 16];
    s.fill_bytes(&mut n).unwrap();
    Nonce::new(n)
}

/// Distance between two finite values in units of the larger one's ulp.
pub fn ulps_apart(a: f64, b: f64) -> f64 {
    let big = a.abs().max(b.abs());
    let ulp = big.next_up() - big;
    if ulp == 0.0 {
        return 0.0;
    }
    (a - b).abs() / ulp
}
