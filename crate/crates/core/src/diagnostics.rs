//! Chaos and key-sensitivity diagnostics: largest Lyapunov exponent by the
//! two-trajectory method, and avalanche statistics between masks.

use crate::cipher::{generate_mask, CipherOptions};
use crate::dynamics::{StateMatrix, Stepper, SystemConfig};
use crate::error::{Error, Result};
use crate::graphgen::WeightMatrix;
use crate::keystream::{MasterKey, Nonce};

/// Default perturbation size.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Logs dropped from the front of the estimate by default.
pub const DEFAULT_DISCARD: usize = 10;
/// Guards the renormalization against a zero separation.
const NORM_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovOptions {
    pub steps: usize,
    pub epsilon: f64,
    /// Leading logs excluded from `lambda_hat`. Ignored when it would leave
    /// nothing to average.
    pub discard: usize,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            epsilon: DEFAULT_EPSILON,
            discard: DEFAULT_DISCARD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovWarning {
    /// The two trajectories coincided exactly; no direction is left to
    /// renormalize along.
    Synchronized { at_step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    /// Mean of `per_step_logs`, in nats per step. `-inf` on synchronization.
    pub lambda_hat: f64,
    /// Mean over every log, including the discarded prefix.
    pub lambda_all: f64,
    pub steps: usize,
    pub epsilon: f64,
    pub discarded: usize,
    /// `log(‖δ(t)‖ / ε)` for the retained steps.
    pub per_step_logs: Vec<f64>,
    pub warning: Option<LyapunovWarning>,
}

impl LyapunovReport {
    pub fn is_chaotic(&self) -> bool {
        self.lambda_hat > 0.0
    }
}

/// Signed separation on the periodic domain, in `[-period/2, period/2)`.
#[inline]
fn wrapped_delta(a: f64, b: f64, period: f64) -> f64 {
    let d = a - b;
    d - period * (d / period).round()
}

fn separation(perturbed: &[f64], base: &[f64], period: f64, delta: &mut [f64]) -> f64 {
    let mut sq = 0.0;
    for ((dv, &p), &b) in delta.iter_mut().zip(perturbed).zip(base) {
        *dv = wrapped_delta(p, b, period);
        sq += *dv * *dv;
    }
    sq.sqrt()
}

fn renormalize(perturbed: &mut [f64], base: &[f64], delta: &[f64], norm: f64, eps: f64, period: f64) {
    let scale = eps / (norm + NORM_FLOOR);
    for ((p, &b), &dv) in perturbed.iter_mut().zip(base).zip(delta) {
        *p = crate::dynamics::fold(b + scale * dv, period);
    }
}

/// Largest Lyapunov exponent of the noise-free system.
///
/// Every component of `x0` is offset by `epsilon`; after one step the offset
/// is renormalized to length `epsilon` without logging, then `steps` logged
/// steps follow, each renormalizing the perturbed trajectory back onto the
/// base trajectory. Separations are measured on the torus, so folding never
/// produces spurious jumps.
pub fn estimate_lyapunov(
    cfg: &SystemConfig,
    w: &WeightMatrix,
    x0: &StateMatrix,
    opts: &LyapunovOptions,
) -> Result<LyapunovReport> {
    if opts.steps == 0 {
        return Err(Error::InvalidInput(
            "lyapunov estimate needs at least one step".into(),
        ));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon < 1e-2) {
        return Err(Error::InvalidInput(format!(
            "perturbation must be small and positive, got {}",
            opts.epsilon
        )));
    }
    let d = cfg.d();
    let m = cfg.map.dim();
    if x0.nodes() != d || x0.components() != m {
        return Err(Error::InvalidDimension(format!(
            "initial state is {}x{}, system needs {d}x{m}",
            x0.nodes(),
            x0.components()
        )));
    }
    let period = cfg.map.period();
    let eps = opts.epsilon;
    let mut stepper = Stepper::new(cfg.map, cfg.params, w, d)?;
    let mut base = x0.as_slice().to_vec();
    let mut perturbed: Vec<f64> = base
        .iter()
        .map(|&v| crate::dynamics::fold(v + eps, period))
        .collect();
    let mut delta = vec![0.0; base.len()];

    stepper.step(&mut base, None, 0)?;
    stepper.step(&mut perturbed, None, 0)?;
    let norm = separation(&perturbed, &base, period, &mut delta);
    let mut warning = None;
    if norm == 0.0 {
        warning = Some(LyapunovWarning::Synchronized { at_step: 0 });
    } else {
        renormalize(&mut perturbed, &base, &delta, norm, eps, period);
    }

    let mut logs = Vec::with_capacity(opts.steps);
    if warning.is_none() {
        for t in 1..=opts.steps {
            stepper.step(&mut base, None, t)?;
            stepper.step(&mut perturbed, None, t)?;
            let norm = separation(&perturbed, &base, period, &mut delta);
            if norm == 0.0 {
                warning = Some(LyapunovWarning::Synchronized { at_step: t });
                break;
            }
            logs.push((norm / eps).ln());
            renormalize(&mut perturbed, &base, &delta, norm, eps, period);
        }
    }
    logs.resize(opts.steps, f64::NEG_INFINITY);

    let discarded = if opts.discard < opts.steps {
        opts.discard
    } else {
        0
    };
    let per_step_logs = logs[discarded..].to_vec();
    Ok(LyapunovReport {
        lambda_hat: mean(&per_step_logs),
        lambda_all: mean(&logs),
        steps: opts.steps,
        epsilon: eps,
        discarded,
        per_step_logs,
        warning,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvalancheReport {
    pub pearson_r: f64,
    pub mean_abs_diff: f64,
    pub elements: usize,
}

/// Pearson correlation and mean absolute difference of two equal-length
/// samples. Bitwise-equal inputs give exactly `r = 1`; a constant sample
/// against a different one gives `r = 0`.
pub fn compare_masks(a: &[f64], b: &[f64]) -> Result<AvalancheReport> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidShape(format!(
            "masks must be non-empty and equally sized, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mean_abs_diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
    let identical = a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    let pearson_r = if identical {
        1.0
    } else {
        let (ma, mb) = (mean(a), mean(b));
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let (da, db) = (x - ma, y - mb);
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        if saa == 0.0 || sbb == 0.0 {
            0.0
        } else {
            (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
        }
    };
    Ok(AvalancheReport {
        pearson_r,
        mean_abs_diff,
        elements: a.len(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct AvalancheOptions {
    pub cipher: CipherOptions,
    /// Accept identical (key, nonce) pairs instead of failing with
    /// [`Error::IdenticalInputs`].
    pub allow_identical: bool,
}

/// Generate the `n x d` masks for both (key, nonce) pairs and compare them.
pub fn avalanche(
    a: (&MasterKey, &Nonce),
    b: (&MasterKey, &Nonce),
    shape: (usize, usize),
    opts: &AvalancheOptions,
) -> Result<AvalancheReport> {
    if !opts.allow_identical && a.0 == b.0 && a.1 == b.1 {
        return Err(Error::IdenticalInputs);
    }
    let dims = [shape.0, shape.1];
    let ma = generate_mask(a.0, a.1, &dims, &opts.cipher)?;
    let mb = generate_mask(b.0, b.1, &dims, &opts.cipher)?;
    compare_masks(ma.values(), mb.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{MapKind, MapParams};
    use crate::graphgen::{GraphSpec, Topology};

    fn single_node(map: MapKind, params: MapParams) -> SystemConfig {
        SystemConfig {
            graph: GraphSpec {
                d: 1,
                topology: Topology::ErdosRenyi { p: 0.0 },
                eps_c: 0.1,
            },
            map,
            params,
            t_burn: 0,
            noise_sigma: 0.0,
            alpha: 1.0,
        }
    }

    #[test]
    fn wrapped_delta_uses_shortest_arc() {
        assert!((wrapped_delta(0.99, 0.01, 1.0) + 0.02).abs() < 1e-15);
        assert!((wrapped_delta(0.01, 0.99, 1.0) - 0.02).abs() < 1e-15);
        assert_eq!(wrapped_delta(0.3, 0.3, 1.0), 0.0);
    }

    #[test]
    fn logistic_exponent_is_ln2() {
        let cfg = single_node(MapKind::Logistic, MapParams::for_map(MapKind::Logistic, 4.0));
        let x0 = StateMatrix::new(1, 1, vec![0.3141]).unwrap();
        let opts = LyapunovOptions {
            steps: 10_000,
            ..Default::default()
        };
        let rep = estimate_lyapunov(&cfg, &WeightMatrix::zeros(1), &x0, &opts).unwrap();
        assert!((rep.lambda_hat - 2f64.ln()).abs() < 0.05, "{}", rep.lambda_hat);
        assert_eq!(rep.per_step_logs.len(), 10_000 - DEFAULT_DISCARD);
        assert!(rep.warning.is_none());
    }

    #[test]
    fn report_mean_matches_logs() {
        let cfg = single_node(MapKind::Tent, MapParams::for_map(MapKind::Tent, 0.45));
        let x0 = StateMatrix::new(1, 1, vec![0.2]).unwrap();
        let opts = LyapunovOptions {
            steps: 50,
            ..Default::default()
        };
        let rep = estimate_lyapunov(&cfg, &WeightMatrix::zeros(1), &x0, &opts).unwrap();
        assert_eq!(rep.lambda_hat, mean(&rep.per_step_logs));
        assert_eq!(rep.discarded, DEFAULT_DISCARD);
        let short = LyapunovOptions {
            steps: 5,
            ..Default::default()
        };
        let rep = estimate_lyapunov(&cfg, &WeightMatrix::zeros(1), &x0, &short).unwrap();
        assert_eq!(rep.discarded, 0);
        assert_eq!(rep.lambda_hat, rep.lambda_all);
    }

    #[test]
    fn collapsed_trajectories_give_sentinel() {
        // the offset vanishes when added to 0.5, so both copies coincide
        let cfg = single_node(MapKind::Logistic, MapParams::for_map(MapKind::Logistic, 4.0));
        let x0 = StateMatrix::new(1, 1, vec![0.5]).unwrap();
        let opts = LyapunovOptions {
            steps: 20,
            epsilon: 1e-300,
            discard: 0,
        };
        let rep = estimate_lyapunov(&cfg, &WeightMatrix::zeros(1), &x0, &opts).unwrap();
        assert_eq!(rep.lambda_hat, f64::NEG_INFINITY);
        assert!(matches!(rep.warning, Some(LyapunovWarning::Synchronized { .. })));
    }

    #[test]
    fn invalid_options_rejected() {
        let cfg = single_node(MapKind::Logistic, MapParams::for_map(MapKind::Logistic, 4.0));
        let x0 = StateMatrix::new(1, 1, vec![0.3]).unwrap();
        let w = WeightMatrix::zeros(1);
        let zero = LyapunovOptions {
            steps: 0,
            ..Default::default()
        };
        assert!(estimate_lyapunov(&cfg, &w, &x0, &zero).is_err());
        let big = LyapunovOptions {
            epsilon: 0.5,
            ..Default::default()
        };
        assert!(estimate_lyapunov(&cfg, &w, &x0, &big).is_err());
    }

    #[test]
    fn compare_identical_and_constant() {
        let a = [0.1, -0.4, 0.9, 0.3];
        let rep = compare_masks(&a, &a).unwrap();
        assert_eq!(rep.pearson_r, 1.0);
        assert_eq!(rep.mean_abs_diff, 0.0);
        let rep = compare_masks(&a, &[0.5; 4]).unwrap();
        assert_eq!(rep.pearson_r, 0.0);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((compare_masks(&a, &neg).unwrap().pearson_r + 1.0).abs() < 1e-12);
        assert!(compare_masks(&a, &a[..2]).is_err());
    }

    #[test]
    fn identical_inputs_policy() {
        let key = MasterKey::new([3; 32]);
        let nonce = Nonce::new([4; 16]);
        let opts = AvalancheOptions::default();
        assert!(matches!(
            avalanche((&key, &nonce), (&key, &nonce), (4, 8), &opts),
            Err(Error::IdenticalInputs)
        ));
        let opts = AvalancheOptions {
            allow_identical: true,
            ..Default::default()
        };
        let rep = avalanche((&key, &nonce), (&key, &nonce), (4, 8), &opts).unwrap();
        assert_eq!(rep.pearson_r, 1.0);
        assert_eq!(rep.mean_abs_diff, 0.0);
        assert_eq!(rep.elements, 32);
    }
}
