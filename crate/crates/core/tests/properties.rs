mod common;

use common::*;
use kcd_core::dynamics::{diffuse, fold, init_state, map_step, param_range, simulate};
use kcd_core::graphgen::{sample_er, sample_weights};
use kcd_core::{
    avalanche, decrypt, encrypt, estimate_lyapunov, generate_mask, AvalancheOptions, CipherOptions, Error,
    GraphSpec, KeyedStream, LyapunovOptions, MapKind, MapParams, StateMatrix, SystemConfig, Tensor, Topology,
    WeightMatrix,
};
use proptest::prelude::*;

fn map_strategy() -> impl Strategy<Value = MapKind> {
    (0..5usize).prop_map(|i| MapKind::ALL[i])
}

fn params_for(map: MapKind, t: f64) -> MapParams {
    match param_range(map) {
        Some((lo, hi)) => MapParams::for_map(map, lo + (hi - lo) * t),
        None => MapParams::default(),
    }
}

fn config(map: MapKind, params: MapParams, d: usize, eps_c: f64, sigma: f64) -> SystemConfig {
    SystemConfig {
        graph: GraphSpec {
            d,
            topology: Topology::ErdosRenyi { p: 0.3 },
            eps_c,
        },
        map,
        params,
        t_burn: 0,
        noise_sigma: sigma,
        alpha: 1.0,
    }
}

fn random_graph(d: usize, p: f64, eps_c: f64, seed: u8) -> WeightMatrix {
    let mut s = rng(seed);
    let a = sample_er(d, p, &mut s).unwrap();
    sample_weights(&a, eps_c, &mut s).unwrap()
}

#[test]
fn index_draws_are_uniform() {
    // Upper 1e-6 tail of chi-squared with m-1 degrees of freedom.
    let critical = [(2u64, 23.928), (5, 33.377), (7, 38.258)];
    for (m, crit) in critical {
        let mut s = rng(40 + m as u8);
        let n = 70_000;
        let mut counts = vec![0u64; m as usize];
        for _ in 0..n {
            counts[s.index(m).unwrap() as usize] += 1;
        }
        let expected = n as f64 / m as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < crit, "m={m}: chi2 {chi2} >= {crit}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn states_stay_in_domain(map in map_strategy(), t in 0.0..1.0f64, d in 1..12usize, eps in 0.05..0.3f64, seed in any::<u8>()) {
        let cfg = config(map, params_for(map, t), d, eps, 1e-3);
        let w = random_graph(d, 0.4, eps, seed);
        let mut init = KeyedStream::new([seed; 32]);
        let x0 = init_state(&cfg, &mut init).unwrap();
        let mut state = x0.as_slice().to_vec();
        let mut stepper = kcd_core::dynamics::Stepper::new(map, cfg.params, &w, d).unwrap();
        let mut noise = rng(seed ^ 0x33);
        let period = map.period();
        let mut n = vec![0.0; state.len()];
        for step in 0..10_000 {
            for v in n.iter_mut() {
                *v = noise.uniform(-1e-3, 1e-3).unwrap();
            }
            stepper.step(&mut state, Some(&n), step).unwrap();
            for &v in &state {
                prop_assert!((0.0..period).contains(&v) && !(v == 0.0 && v.is_sign_negative()));
            }
        }
    }

    #[test]
    fn coupling_alone_stays_in_unit_interval(
        map in prop_oneof![Just(MapKind::Logistic), Just(MapKind::Tent), Just(MapKind::Baker), Just(MapKind::ArnoldCat)],
        t in 0.0..1.0f64, d in 1..20usize, eps in 0.01..0.99f64, seed in any::<u8>(),
    ) {
        let w = random_graph(d, 0.5, eps, seed);
        let cfg = config(map, params_for(map, t), d, eps, 0.0);
        let x = init_state(&cfg, &mut KeyedStream::new([seed; 32])).unwrap();
        let mut y = x.as_slice().to_vec();
        for node in y.chunks_exact_mut(map.dim()) {
            map_step(map, &cfg.params, node).unwrap();
        }
        let mapped = StateMatrix::new(d, map.dim(), y).unwrap();
        let coupled = diffuse(&mapped, &w).unwrap();
        for &v in coupled.as_slice() {
            prop_assert!((0.0..1.0).contains(&v), "{v}");
            prop_assert_eq!(fold(v, 1.0).to_bits(), v.to_bits());
        }
    }

    #[test]
    fn mask_values_inside_open_interval(map in map_strategy(), alpha in 0.01..10.0f64, seed in any::<[u8; 4]>()) {
        let mut key = [0u8; 32];
        key[..4].copy_from_slice(&seed);
        let opts = CipherOptions { map: Some(map), alpha, ..Default::default() };
        let m = generate_mask(&kcd_core::MasterKey::new(key), &zero_nonce(), &[64, 8], &opts).unwrap();
        for &v in m.values() {
            prop_assert!(v > -alpha && v < alpha);
        }
    }

    #[test]
    fn round_trip_any_rank(shape in prop::collection::vec(1..6usize, 1..5), alpha in 0.1..1.0f64, seed in any::<[u8; 4]>()) {
        let mut subkey = [0u8; 32];
        subkey[..4].copy_from_slice(&seed);
        let mut s = KeyedStream::new(subkey);
        let count = shape.iter().product();
        let data = (0..count).map(|_| s.uniform(-1e3, 1e3).unwrap()).collect();
        let x = Tensor::new(shape.clone(), data).unwrap();
        let key = random_key(&mut s);
        let nonce = random_nonce(&mut s);
        let opts = CipherOptions { alpha, ..Default::default() };
        let masked = encrypt(&x, &key, &nonce, &opts).unwrap();
        prop_assert_eq!(masked.tensor.shape(), &shape[..]);
        let back = decrypt(&masked, &key).unwrap();
        prop_assert_eq!(back.shape(), &shape[..]);
        for (a, b) in back.values().iter().zip(x.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_coupling_is_independent_scalar_maps(map in map_strategy(), t in 0.0..1.0f64, d in 1..6usize, sigma in prop_oneof![Just(0.0), 1e-4..1e-2f64], burn in 0..20u32) {
        let mut cfg = config(map, params_for(map, t), d, 0.1, sigma);
        cfg.t_burn = burn;
        let x0 = init_state(&cfg, &mut rng(9)).unwrap();
        let rows = 30;
        let got = simulate(&cfg, &WeightMatrix::zeros(d), &x0, &mut rng(10), rows).unwrap();

        // Scalar reference loop, one node at a time, sharing one noise sequence.
        let period = map.period();
        let mut noise = rng(10);
        let mut states: Vec<Vec<f64>> = (0..d).map(|i| x0.node(i).to_vec()).collect();
        let mut want = Vec::new();
        for step in 0..burn as usize + rows {
            for st in states.iter_mut() {
                map_step(map, &cfg.params, st).unwrap();
                for v in st.iter_mut() {
                    let n = if sigma > 0.0 { noise.uniform(-sigma, sigma).unwrap() } else { 0.0 };
                    *v = fold(*v + n, period);
                }
            }
            if step >= burn as usize {
                for st in &states {
                    let u = (st[0] / period).clamp(f64::EPSILON / 2.0, 1.0 - f64::EPSILON / 2.0);
                    want.push(2.0 * u - 1.0);
                }
            }
        }
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn lyapunov_converges_with_length() {
    let cfg = config(
        MapKind::Logistic,
        MapParams::for_map(MapKind::Logistic, 4.0),
        1,
        0.1,
        0.0,
    );
    let x0 = StateMatrix::new(1, 1, vec![0.3141]).unwrap();
    let run = |steps| {
        estimate_lyapunov(
            &cfg,
            &WeightMatrix::zeros(1),
            &x0,
            &LyapunovOptions {
                steps,
                ..Default::default()
            },
        )
        .unwrap()
        .lambda_hat
    };
    let (short, long) = (run(10_000), run(20_000));
    assert!((short - long).abs() < 0.02, "{short} vs {long}");
}

#[test]
fn lyapunov_is_bit_reproducible() {
    let cfg = config(
        MapKind::Tent,
        MapParams::for_map(MapKind::Tent, 0.45),
        12,
        0.2,
        0.0,
    );
    let w = random_graph(12, 0.3, 0.2, 3);
    let x0 = init_state(&cfg, &mut rng(4)).unwrap();
    let opts = LyapunovOptions::default();
    let a = estimate_lyapunov(&cfg, &w, &x0, &opts).unwrap();
    let b = estimate_lyapunov(&cfg, &w, &x0, &opts).unwrap();
    assert_eq!(a.lambda_hat.to_bits(), b.lambda_hat.to_bits());
}

#[test]
fn mask_shapes() {
    let opts = CipherOptions::default();
    let m = generate_mask(&zero_key(), &zero_nonce(), &[2, 3], &opts).unwrap();
    assert_eq!((m.rows(), m.cols()), (2, 3));
    let m = generate_mask(&zero_key(), &zero_nonce(), &[3], &opts).unwrap();
    assert_eq!((m.rows(), m.cols()), (1, 3));
    let m = generate_mask(&zero_key(), &zero_nonce(), &[2, 2, 5], &opts).unwrap();
    assert_eq!((m.rows(), m.cols()), (4, 5));
    assert!(matches!(
        generate_mask(&zero_key(), &zero_nonce(), &[], &opts),
        Err(Error::InvalidShape(_))
    ));
    assert!(generate_mask(&zero_key(), &zero_nonce(), &[2, 0], &opts).is_err());
}

#[test]
fn zero_input_encrypts_to_the_mask() {
    let x = Tensor::zeros(vec![3, 5]).unwrap();
    let opts = CipherOptions::default();
    let masked = encrypt(&x, &zero_key(), &zero_nonce(), &opts).unwrap();
    let mask = generate_mask(&zero_key(), &zero_nonce(), &[3, 5], &opts).unwrap();
    for (a, b) in masked.tensor.values().iter().zip(mask.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let back = decrypt(&masked, &zero_key()).unwrap();
    assert!(back.values().iter().all(|v| v.abs() <= 1e-12));
}

#[test]
fn non_finite_input_rejected() {
    let x = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
    assert!(matches!(
        encrypt(&x, &zero_key(), &zero_nonce(), &CipherOptions::default()),
        Err(Error::InvalidInput(_))
    ));
}

fn mean_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn wrong_key_or_nonce_gives_garbage_of_mask_size() {
    let mut s = rng(21);
    for alpha in [0.5, 1.0] {
        let opts = CipherOptions {
            alpha,
            ..Default::default()
        };
        let data = (0..64 * 16).map(|_| s.uniform(-5.0, 5.0).unwrap()).collect();
        let x = Tensor::new(vec![64, 16], data).unwrap();
        let key = random_key(&mut s);
        let nonce = random_nonce(&mut s);
        let masked = encrypt(&x, &key, &nonce, &opts).unwrap();

        let wrong = decrypt(&masked, &key.with_bit_flipped(77)).unwrap();
        let err = mean_abs(wrong.values(), x.values());
        assert!(err > 0.2 * alpha && err < 2.0 * alpha, "key flip: {err}");

        let mut other = masked.clone();
        other.nonce = nonce.with_bit_flipped(3);
        let wrong = decrypt(&other, &key).unwrap();
        let err = mean_abs(wrong.values(), x.values());
        assert!(err > 0.2 * alpha && err < 2.0 * alpha, "nonce flip: {err}");
    }
}

#[test]
fn tampered_options_are_detected() {
    let x = Tensor::zeros(vec![2, 4]).unwrap();
    let mut masked = encrypt(&x, &zero_key(), &zero_nonce(), &CipherOptions::default()).unwrap();
    masked.options.alpha = 0.5;
    assert!(matches!(
        decrypt(&masked, &zero_key()),
        Err(Error::ConfigMismatch { .. })
    ));
}

#[test]
fn avalanche_identical_inputs() {
    let opts = AvalancheOptions::default();
    let pair = (&zero_key(), &zero_nonce());
    assert!(matches!(
        avalanche(pair, pair, (32, 32), &opts),
        Err(Error::IdenticalInputs)
    ));
    let allow = AvalancheOptions {
        allow_identical: true,
        ..Default::default()
    };
    let rep = avalanche(pair, pair, (32, 32), &allow).unwrap();
    assert_eq!(rep.pearson_r, 1.0);
    assert_eq!(rep.mean_abs_diff, 0.0);
    assert_eq!(rep.elements, 1024);
}

#[test]
fn nonce_flips_decorrelate_masks() {
    let mut s = rng(22);
    let opts = AvalancheOptions {
        cipher: CipherOptions {
            map: Some(MapKind::ArnoldCat),
            ..Default::default()
        },
        ..Default::default()
    };
    for bit in [0, 5, 64, 127] {
        let key = random_key(&mut s);
        let nonce = random_nonce(&mut s);
        let rep = avalanche(
            (&key, &nonce),
            (&key, &nonce.with_bit_flipped(bit)),
            (128, 32),
            &opts,
        )
        .unwrap();
        assert!(rep.pearson_r.abs() < 0.05, "bit {bit}: r = {}", rep.pearson_r);
    }
}

/// Largest gap between the empirical CDF of `values` and uniform(-1, 1).
fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = (x + 1.0) / 2.0;
            ((i as f64 + 1.0) / n - f).abs().max((f - i as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Marginal statistics of the readout for maps whose single-node invariant
/// density is uniform. Coupled graphs and the logistic map (arcsine
/// density) are outside this check; see the README.
#[test]
fn uncoupled_mask_marginals_are_uniform() {
    for (map, param) in [
        (MapKind::Tent, Some(0.45)),
        (MapKind::Baker, Some(0.6)),
        (MapKind::ArnoldCat, None),
    ] {
        let mut pins = kcd_core::ParamPins::default();
        match map {
            MapKind::Tent => pins.mu = param,
            MapKind::Baker => pins.s = param,
            _ => {}
        }
        let opts = CipherOptions {
            map: Some(map),
            pins,
            ..Default::default()
        };
        let m = generate_mask(&zero_key(), &zero_nonce(), &[1 << 14, 1], &opts).unwrap();
        let mean = m.values().iter().sum::<f64>() / m.values().len() as f64;
        let ks = ks_uniform(m.values());
        assert!(mean.abs() < 0.05, "{}: mean {mean}", map.name());
        assert!(ks < 0.05, "{}: ks {ks}", map.name());
    }
}
