//! Independent reference computations: exhaustive search, brute-force
//! trellis walks and Monte Carlo moments.

use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cofdm::channel::{correlation_of, generate_set, BandPlan, SvParams};
use cofdm::code::{enumerate_error_vectors, Bit, ConvCode, EndState, EnumerationOptions, ViterbiDecoder};
use cofdm::interference::{tones_to_freq, FreqInterference, InterferenceSpec, ToneInterferer};
use cofdm::method2::{gauss_hermite, lognormal_average};
use cofdm::modem::{Interleaver, Modulation, QamConstellation};
use cofdm::simulator::{simulate_point, Link, StopRule};
use cofdm::system::System;
use cofdm::{complex_gaussian, q_function};

/// Every input that leaves state zero at once, stays away from it, and
/// returns on its last step; kept if its output weight is below `w_max`.
fn brute_force_events(code: &ConvCode, phase: usize, w_max: usize, max_input: usize) -> BTreeSet<Vec<Bit>> {
    let m = code.memory();
    let mut out = BTreeSet::new();
    for len in (m + 1)..=max_input {
        let free = len - m - 1;
        for pattern in 0u64..(1 << free) {
            let mut u = vec![1 as Bit];
            u.extend((0..free).map(|k| ((pattern >> k) & 1) as Bit));
            u.extend(std::iter::repeat_n(0, m));
            // Reject inputs whose state hits zero before the end.
            let mut state = 0usize;
            let mut early = false;
            for (t, &b) in u.iter().enumerate() {
                state = ((state >> 1) | ((b as usize) << (m - 1))) & ((1 << m) - 1);
                if state == 0 && t + 1 < u.len() {
                    early = true;
                    break;
                }
            }
            if early {
                continue;
            }
            let bits = code.encode_from_phase(&u, phase);
            if bits.iter().map(|&b| b as usize).sum::<usize>() < w_max {
                out.insert(bits);
            }
        }
    }
    out
}

fn check_enumeration(code: &ConvCode, w_max: usize, max_input: usize) {
    let set = enumerate_error_vectors(code, EnumerationOptions::new(w_max)).unwrap();
    for p in 0..code.period() {
        let oracle = brute_force_events(code, p, w_max, max_input);
        let got: BTreeSet<Vec<Bit>> = set.phase(p).iter().map(|e| e.bits.clone()).collect();
        assert_eq!(got, oracle, "phase {p}");
        assert!(set.phase(p).iter().all(|e| e.input.len() < max_input), "oracle horizon too short");
    }
}

#[test]
fn enumeration_matches_brute_force_k3() {
    check_enumeration(&ConvCode::unpunctured(vec![0o7, 0o5], 3).unwrap(), 10, 18);
}

#[test]
fn enumeration_matches_brute_force_k3_punctured() {
    let keep = vec![vec![true, true], vec![true, false]];
    check_enumeration(&ConvCode::new(vec![0o7, 0o5], 3, keep, 1).unwrap(), 8, 22);
}

#[test]
fn enumeration_matches_brute_force_k4_rate_third() {
    check_enumeration(&ConvCode::unpunctured(vec![0o17, 0o15, 0o13], 4).unwrap(), 14, 16);
}

fn correlation_metric(llrs: &[f64], erasures: &[bool], c: &[Bit]) -> f64 {
    llrs.iter()
        .zip(erasures)
        .zip(c)
        .filter(|((_, &e), _)| !e)
        .map(|((&l, _), &b)| if b == 0 { l } else { -l })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The Viterbi output maximizes the correlation metric over all
    /// terminated codewords.
    #[test]
    fn viterbi_is_maximum_likelihood(k in 1usize..=10, gens in prop::sample::select(vec![
        (vec![0o7u32, 0o5], 3usize),
        (vec![0o15, 0o17], 4),
        (vec![0o13, 0o15, 0o17], 4),
    ]), seed in any::<u64>(), erase in any::<bool>()) {
        let (g, kk) = gens;
        let code = ConvCode::unpunctured(g, kk).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (k + code.memory()) * code.generators().len();
        let llrs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let erasures: Vec<bool> = (0..n).map(|_| erase && rng.random_bool(0.2)).collect();
        let decoded = ViterbiDecoder::new(&code).decode(&llrs, &erasures, EndState::Zero).unwrap();
        prop_assert_eq!(decoded.len(), k + code.memory());
        prop_assert!(decoded[k..].iter().all(|&b| b == 0));
        let got = correlation_metric(&llrs, &erasures, &code.encode(&decoded).unwrap());
        let mut best = f64::NEG_INFINITY;
        for u in 0u32..(1 << k) {
            let payload: Vec<Bit> = (0..k).map(|i| ((u >> i) & 1) as Bit).collect();
            let c = code.encode_terminated(&payload).unwrap();
            best = best.max(correlation_metric(&llrs, &erasures, &c));
        }
        prop_assert!(got >= best - 1e-9, "{} < {}", got, best);
    }
}

#[test]
fn shadowing_has_the_configured_spread() {
    let p = SvParams::cm1();
    let set = generate_set(&p, &BandPlan::mb_ofdm(), 11, 4000).unwrap();
    let db: Vec<f64> = set.iter().map(|r| 20.0 * r.shadow.log10()).collect();
    let mean = db.iter().sum::<f64>() / db.len() as f64;
    let var = db.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (db.len() - 1) as f64;
    assert!(mean.abs() < 0.15, "mean {mean}");
    assert!((var.sqrt() - p.shadow_std).abs() < 0.12, "std {}", var.sqrt());
    let g2 = set.iter().map(|r| r.shadow * r.shadow).sum::<f64>() / set.len() as f64;
    assert!((g2 / p.mean_shadow_power() - 1.0).abs() < 0.05, "E[G^2] {g2}");
    // Zero-mean Gaussian in dB: fourth moment is 3 sigma^4.
    let m4 = db.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / db.len() as f64;
    assert!((m4 / (var * var) - 3.0).abs() < 0.3, "kurtosis {}", m4 / (var * var));
}

#[test]
fn normalized_gains_have_unit_power() {
    let set = generate_set(&SvParams::cm1(), &BandPlan::mb_ofdm(), 12, 500).unwrap();
    let vectors: Vec<Vec<Complex64>> = set.iter().map(|r| r.normalized()).collect();
    let sigma = correlation_of(&vectors).unwrap().sigma;
    let mean_diag = sigma.diagonal().iter().map(|x| x.re).sum::<f64>() / sigma.nrows() as f64;
    assert!((mean_diag - 1.0).abs() < 0.03, "mean tone power {mean_diag}");
}

#[test]
fn iid_gains_give_identity_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 8;
    let vectors: Vec<Vec<Complex64>> = (0..20000).map(|_| (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect()).collect();
    let s = correlation_of(&vectors).unwrap().sigma;
    for a in 0..n {
        for b in 0..n {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((s[(a, b)] - want).norm() < 0.04, "({a},{b}) = {}", s[(a, b)]);
        }
    }
}

#[test]
fn rayleigh_tone_draws_match_covariance_trace() {
    let plan = BandPlan::mb_ofdm();
    let mut spec = InterferenceSpec::single(ToneInterferer::rayleigh(52.3, 0.02));
    spec.tones.push(ToneInterferer::rayleigh(20.0, 0.01));
    let fi = tones_to_freq(&spec, &plan).unwrap();
    let want: f64 = fi.mean_powers().iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let draws = 20000;
    let mut got = 0.0;
    for _ in 0..draws {
        got += fi.draw(&mut rng).iter().map(|x| x.norm_sqr()).sum::<f64>();
    }
    got /= draws as f64;
    assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
}

#[test]
fn gauss_hermite_matches_lognormal_moment() {
    // E[G^2] for 20 log10 G ~ N(0, s^2) in closed form.
    for s in [0.5, 3.0, 6.0] {
        let m = lognormal_average(|g| Ok(g * g), s, 20).unwrap();
        let k = s * std::f64::consts::LN_10 / 10.0;
        assert!((m / (k * k / 2.0).exp() - 1.0).abs() < 1e-10, "sigma {s}");
    }
    let (x, w) = gauss_hermite(12).unwrap();
    let fourth: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
    assert!((fourth - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
}

fn awgn_system() -> System {
    let code = ConvCode::unpunctured(vec![0o7, 0o5], 3).unwrap();
    let n = 64;
    System::new(code, Interleaver::identity(2 * n), QamConstellation::new(Modulation::Qam4, 1.0).unwrap(), n).unwrap()
}

#[test]
fn uncoded_qpsk_matches_closed_form() {
    let sys = awgn_system();
    let h = vec![Complex64::new(1.0, 0.0); sys.n_tones];
    let zero = FreqInterference::zero(sys.n_tones);
    let ebn0: f64 = 10f64.powf(4.0 / 10.0);
    // E_s = 1 carries two bits.
    let n0 = 0.5 / ebn0;
    let link = Link { system: &sys, h: &h, interference: &zero, n0, erased: &[], uncoded: true };
    let stop = StopRule { min_errors: u64::MAX, max_packets: 1_000_000 / 128 };
    let r = simulate_point(&link, 99, stop).unwrap();
    let p = q_function((2.0 * ebn0).sqrt());
    let sd = (p * (1.0 - p) / r.bits as f64).sqrt();
    assert!((r.ber() - p).abs() < 3.0 * sd, "{} vs {p}", r.ber());
}

#[test]
fn noiseless_link_is_error_free() {
    let sys = awgn_system();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h: Vec<Complex64> = (0..sys.n_tones).map(|_| complex_gaussian(&mut rng, 1.0) + 0.01).collect();
    let zero = FreqInterference::zero(sys.n_tones);
    let link = Link { system: &sys, h: &h, interference: &zero, n0: 1e-12, erased: &[], uncoded: false };
    let r = simulate_point(&link, 1, StopRule { min_errors: 1, max_packets: 200 }).unwrap();
    assert_eq!(r.errors, 0);
    assert!(r.flagged);
}

#[test]
fn simulation_is_seed_deterministic() {
    let sys = awgn_system();
    let h = vec![Complex64::new(1.0, 0.0); sys.n_tones];
    let zero = FreqInterference::zero(sys.n_tones);
    let link = Link { system: &sys, h: &h, interference: &zero, n0: 0.6, erased: &[3], uncoded: false };
    let stop = StopRule { min_errors: 50, max_packets: 400 };
    let a = simulate_point(&link, 7, stop).unwrap();
    let b = simulate_point(&link, 7, stop).unwrap();
    let c = simulate_point(&link, 8, stop).unwrap();
    assert_eq!(a, b);
    assert!(a.errors >= 50);
    assert_ne!((a.errors, a.packets), (c.errors, c.packets));
}
