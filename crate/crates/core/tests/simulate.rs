use etas_core::catalog::Region;
use etas_core::diagnostics::ks_uniform_test;
use etas_core::likelihood::{compensator, SpatialMass, Variant};
use etas_core::model::{branching_ratio, EtasParams, MagnitudeModel};
use etas_core::simulate::{inverse_radial_cdf, inverse_temporal_cdf, simulate, simulate_thinning, SimConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn theta() -> EtasParams {
    EtasParams {
        mu: 0.3,
        a: 0.15,
        alpha: 1.2,
        c: 0.01,
        p: 1.3,
        d: 0.005,
        gamma: 1.0,
        q: 1.8,
    }
}

const BETA: f64 = 2.3;

fn region() -> Region {
    Region::new(0.0, 5.0, 0.0, 5.0).unwrap()
}

fn config(params: EtasParams, duration: f64, seed: u64) -> SimConfig {
    SimConfig::new(params, MagnitudeModel::Exponential { beta: BETA }, region(), duration, 4.0, seed).unwrap()
}

/// Fast-decaying Omori kernel so truncation at the window end is negligible.
fn short_memory() -> EtasParams {
    EtasParams { p: 2.5, ..theta() }
}

#[test]
fn total_count_matches_branching_identity() {
    let p = short_memory();
    let n = branching_ratio(&p, &MagnitudeModel::Exponential { beta: BETA }).unwrap();
    let runs = 500;
    let mut total = 0.0;
    for seed in 0..runs {
        total += simulate(&config(p, 500.0, seed)).unwrap().all.len() as f64;
    }
    let mean = total / runs as f64;
    let expect = 0.3 * 500.0 / (1.0 - n);
    assert!((mean - expect).abs() / expect < 0.05, "mean {mean} vs {expect}");
}

#[test]
fn offspring_counts_match_truncated_productivity() {
    // sum over parents of kappa(m) G(T - t) against realized child counts
    let p = theta();
    let (mut observed, mut expected) = (0.0, 0.0);
    for seed in 0..50 {
        let sim = simulate(&config(p, 400.0, seed)).unwrap();
        let mut children = vec![0usize; sim.all.len()];
        for e in &sim.all {
            if let Some(i) = e.parent {
                children[i] += 1;
            }
        }
        for (e, k) in sim.all.iter().zip(&children) {
            let kappa = p.a * (p.alpha * (e.event.mag - 4.0)).exp();
            let g = 1.0 - (1.0 + (400.0 - e.event.t) / p.c).powf(1.0 - p.p);
            expected += kappa * g;
            observed += *k as f64;
        }
    }
    assert!((observed - expected).abs() < 3.0 * expected.sqrt(), "observed {observed} expected {expected}");
}

#[test]
fn simulated_magnitudes_follow_the_magnitude_law() {
    let mut p = theta();
    p.mu = 5.0;
    let sim = simulate(&config(p, 2000.0, 9)).unwrap();
    let m: Vec<f64> = sim.all.iter().map(|e| e.event.mag).take(10_000).collect();
    assert_eq!(m.len(), 10_000);
    let u: Vec<f64> = m.iter().map(|m| 1.0 - (-BETA * (m - 4.0)).exp()).collect();
    let ks = ks_uniform_test(&u).unwrap();
    assert!(ks.p_value.unwrap() > 0.01, "{ks:?}");
}

#[test]
fn background_fraction_is_one_minus_branching_ratio() {
    let p = short_memory();
    let n = branching_ratio(&p, &MagnitudeModel::Exponential { beta: BETA }).unwrap();
    let (mut bg, mut all) = (0.0, 0.0);
    let mut fractions = Vec::new();
    for seed in 0..100 {
        let sim = simulate(&config(p, 500.0, seed)).unwrap();
        let b = sim.all.iter().filter(|e| e.parent.is_none()).count() as f64;
        bg += b;
        all += sim.all.len() as f64;
        fractions.push(b / sim.all.len() as f64);
    }
    let f = bg / all;
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let sd = (fractions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (fractions.len() - 1) as f64).sqrt();
    let se = sd / (fractions.len() as f64).sqrt();
    assert!((f - (1.0 - n)).abs() < 3.0 * se, "fraction {f} vs {} (se {se})", 1.0 - n);
}

#[test]
fn inverse_cdf_draws_match_closed_forms() {
    let p = theta();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let horizon = 30.0;
    let gh = 1.0 - (1.0 + horizon / p.c).powf(1.0 - p.p);
    let lags: Vec<f64> = (0..100_000)
        .map(|_| {
            let lag = inverse_temporal_cdf(&p, rng.random::<f64>(), horizon);
            (1.0 - (1.0 + lag / p.c).powf(1.0 - p.p)) / gh
        })
        .collect();
    assert!(ks_uniform_test(&lags).unwrap().statistic < 0.01);

    let sigma = p.d * (p.gamma * 1.5).exp();
    let radii: Vec<f64> = (0..100_000)
        .map(|_| {
            let r = inverse_radial_cdf(&p, 5.5, 4.0, rng.random::<f64>());
            1.0 - (1.0 + r * r / sigma).powf(1.0 - p.q)
        })
        .collect();
    assert!(ks_uniform_test(&radii).unwrap().statistic < 0.01);
}

#[test]
fn compensator_matches_mean_thinning_count() {
    let p = theta();
    let runs = 1000;
    let mut diffs = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let sim = simulate_thinning(&config(p, 100.0, seed)).unwrap();
        // ground process: every generated event, wherever it landed
        let events: Vec<_> = sim.all.iter().map(|e| e.event).collect();
        let wide = Region::new(-1e3, 1e3, -1e3, 1e3).unwrap();
        let cat = etas_core::Catalog::new(events, wide, 0.0, 100.0, 4.0).unwrap();
        let lambda = compensator(&cat, &p, None, Variant::GroundTemporal, SpatialMass::Infinite).unwrap();
        diffs.push(cat.len() as f64 - lambda);
    }
    let mean = diffs.iter().sum::<f64>() / runs as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
    assert!(mean.abs() < 3.0 * sd / (runs as f64).sqrt(), "mean count - compensator = {mean} (sd {sd})");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn genealogy_is_acyclic_and_backward(seed in 0u64..10_000, mu in 0.05f64..0.5, a in 0.0f64..0.3) {
        let p = EtasParams { mu, a, ..theta() };
        let sim = simulate(&config(p, 200.0, seed)).unwrap();
        for (j, &parent) in sim.parent.iter().enumerate() {
            prop_assert!(parent < j as i64);
        }
        for (i, e) in sim.all.iter().enumerate() {
            if let Some(par) = e.parent {
                prop_assert!(par < i);
                prop_assert!(sim.all[par].event.t <= e.event.t);
            }
        }
        prop_assert!(sim.catalog.events().iter().all(|e| region().contains(e.lon, e.lat)));
    }
}
