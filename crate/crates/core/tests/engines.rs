//! Cross-engine checks through the public API.

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use harmonic_core::classical::{integrate_at, ClassicalState};
use harmonic_core::ensemble::{simulate, EnsembleRun, NoiseSpec};
use harmonic_core::fock::prepare_product_state;
use harmonic_core::quantum::{number_stats, EigenCache, Propagator};
use harmonic_core::util::linspace;
use harmonic_core::{fano, CoherentInput, ComplexAmplitude, Mode, ModelSpec};

fn c(re: f64, im: f64) -> ComplexAmplitude {
    ComplexAmplitude::new(re, im)
}

#[test]
fn quantum_follows_classical_intensity_for_bright_fields() {
    let model = ModelSpec::unit(2);
    let input = CoherentInput::new(c(8.0, 0.0), c(4.0, 0.0), model).unwrap();
    let prop = Propagator::from_state(&prepare_product_state(&input, 1e-12).unwrap(), &EigenCache::new()).unwrap();
    // away from the stationary point so the intensities actually move
    let input_off = CoherentInput::new(c(8.0, 0.0), c(1.0, 0.0), model).unwrap();
    let prop_off = Propagator::from_state(&prepare_product_state(&input_off, 1e-12).unwrap(), &EigenCache::new()).unwrap();
    let times = linspace(0.0, 0.1, 11);
    for (p, inp) in [(&prop, input), (&prop_off, input_off)] {
        let cl = integrate_at(ClassicalState::new(inp.alpha1, inp.alpha_n), model, &times, 1e-12).unwrap();
        for (t, s) in times.iter().zip(&cl) {
            let q = p.moments_at(*t);
            // corrections are O(1) photons against tens of photons
            assert!((q.harmonic.mean - s.n_n()).abs() < 0.05 * (s.n_n() + 1.0), "t={t}");
            assert!((q.fundamental.mean - s.n1()).abs() < 0.05 * s.n1(), "t={t}");
        }
    }
}

#[test]
fn ensemble_starts_from_symmetric_ordered_moments() {
    let model = ModelSpec::unit(2);
    let input = CoherentInput::new(c(3.0, 0.0), c(2.0, 0.0), model).unwrap();
    let noise = NoiseSpec {
        sigma2: 0.25,
        seed: 5,
        count: 20_000,
    };
    let run = EnsembleRun {
        model,
        times: vec![0.0],
        snapshot_times: vec![],
        quadrature_angles: [0.0, 0.0],
        tol: 1e-10,
    };
    let (stats, _) = simulate(&input, &noise, &run).unwrap();
    // |α + ξ|² with ⟨|ξ|²⟩ = 2σ² = 1/2
    let se = |n: f64| (n / noise.count as f64).sqrt();
    assert!((stats.fundamental.mean[0] - 9.5).abs() < 4.0 * se(9.0));
    assert!((stats.harmonic.mean[0] - 4.5).abs() < 4.0 * se(4.0));
}

#[test]
fn ensemble_mean_tracks_quantum_mean_early() {
    let model = ModelSpec::unit(2);
    let input = CoherentInput::new(c(4.0, 0.0), c(0.5, 0.0), model).unwrap();
    let times = linspace(0.0, 0.3, 4);
    let run = EnsembleRun {
        model,
        times: times.clone(),
        snapshot_times: vec![],
        quadrature_angles: [0.0, 0.0],
        tol: 1e-10,
    };
    let noise = NoiseSpec {
        sigma2: 0.25,
        seed: 2,
        count: 8_000,
    };
    let (stats, _) = simulate(&input, &noise, &run).unwrap();
    let prop = Propagator::from_state(&prepare_product_state(&input, 1e-12).unwrap(), &EigenCache::new()).unwrap();
    for (i, t) in times.iter().enumerate() {
        // symmetric ordering adds 1/2 per mode
        let q = prop.moments_at(*t).fundamental.mean + 0.5;
        assert!((stats.fundamental.mean[i] - q).abs() < 0.15, "t={t}: {} vs {q}", stats.fundamental.mean[i]);
    }
}

#[test]
fn moments_agree_with_evolved_state() {
    let input = CoherentInput::new(c(1.5, 0.5), c(0.7, -0.2), ModelSpec::new(3, 0.4).unwrap()).unwrap();
    let prop = Propagator::from_state(&prepare_product_state(&input, 1e-12).unwrap(), &EigenCache::new()).unwrap();
    for t in [0.0, 0.7, 3.1] {
        let st = prop.state_at(t);
        let m = prop.moments_at(t);
        for mode in [Mode::Fundamental, Mode::Harmonic] {
            let direct = number_stats(&st, mode);
            assert_abs_diff_eq!(direct.mean, m.mode(mode).mean, epsilon = 1e-11);
            assert_abs_diff_eq!(direct.fano().unwrap(), fano(m.mode(mode)).unwrap(), epsilon = 1e-9);
        }
    }
}

#[test]
fn cache_survives_a_disk_round_trip() {
    let input = CoherentInput::new(c(2.0, 0.0), c(1.0, 0.0), ModelSpec::unit(2)).unwrap();
    let state = prepare_product_state(&input, 1e-12).unwrap();
    let cache = EigenCache::new();
    let a = Propagator::from_state(&state, &cache).unwrap().moments_at(1.3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eig.bin");
    harmonic_core::quantum::cache::save(&cache, &path).unwrap();
    let restored = EigenCache::new();
    assert_eq!(harmonic_core::quantum::cache::load(&restored, &path).unwrap(), cache.len());
    let b = Propagator::from_state(&state, &restored).unwrap().moments_at(1.3);
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coherent_inputs_start_poissonian(r1 in 0.3f64..3.0, rn in 0.3f64..2.0, p1 in -3.0f64..3.0, pn in -3.0f64..3.0, order in 1u32..4) {
        let input = CoherentInput::new(ComplexAmplitude::from_polar(r1, p1), ComplexAmplitude::from_polar(rn, pn), ModelSpec::unit(order)).unwrap();
        let prop = Propagator::from_state(&prepare_product_state(&input, 1e-13).unwrap(), &EigenCache::new()).unwrap();
        let m = prop.moments_at(0.0);
        prop_assert!((fano(m.fundamental).unwrap() - 1.0).abs() < 1e-8);
        prop_assert!((fano(m.harmonic).unwrap() - 1.0).abs() < 1e-8);
        prop_assert!((m.fundamental.mean - r1 * r1).abs() < 1e-9 * (1.0 + r1 * r1));
    }

    #[test]
    fn conserved_quanta_match_between_engines(r1 in 0.5f64..3.0, rn in 0.2f64..1.5, t in 0.0f64..4.0) {
        let model = ModelSpec::unit(2);
        let input = CoherentInput::new(c(r1, 0.0), c(rn, 0.0), model).unwrap();
        let prop = Propagator::from_state(&prepare_product_state(&input, 1e-12).unwrap(), &EigenCache::new()).unwrap();
        let m = prop.moments_at(t);
        // ⟨n1 + 2 n2⟩ is conserved and equals the classical E for a coherent input
        let e = m.fundamental.mean + 2.0 * m.harmonic.mean;
        prop_assert!((e - (r1 * r1 + 2.0 * rn * rn)).abs() < 1e-9 * (1.0 + e));
    }
}
