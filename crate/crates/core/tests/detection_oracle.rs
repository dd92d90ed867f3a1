mod support;

use pairsim::detection::{
    run_degenerate, run_gates, run_gates_with, run_self_split, AnalyzerSetting, Channel, DetectorConfig, ExperimentKind,
    GateSetup, NoiseModel, Sampling,
};
use pairsim::polarization::bell_phi_plus;
use pairsim::stream::Substream;
use support::{within_sigma, GateModel};

fn setup(m: &GateModel) -> GateSetup {
    GateSetup {
        state: bell_phi_plus(),
        mu: m.mu,
        noise: NoiseModel::unpolarized(m.noise),
        analyzers: AnalyzerSetting::new(m.t1, m.t2),
        detectors: DetectorConfig { eta_signal: m.eta2, eta_idler: m.eta1, dark_prob: m.dark, gate_rate_khz: 780.0 },
        classical_surrogate: false,
    }
}

fn check(m: &GateModel, n: u64, seed: u64, sampling: Sampling) {
    let rec = run_gates_with(n, &setup(m), ExperimentKind::SignalIdler, &Substream::new(seed), sampling).unwrap();
    let p = m.exact();
    assert!(within_sigma(rec.singles_1, n, p.click1, 4.0), "{m:?} {rec:?} {p:?}");
    assert!(within_sigma(rec.singles_2, n, p.click2, 4.0), "{m:?} {rec:?} {p:?}");
    assert!(within_sigma(rec.coincidences, n, p.coincidence, 4.0), "{m:?} {rec:?} {p:?}");
    assert!(within_sigma(rec.accidentals_estimate, n, p.accidental, 4.0), "{m:?} {rec:?} {p:?}");
}

#[test]
fn ideal_small_mu_coincidences() {
    let m = GateModel { mu: 0.01, noise: 0.0, eta1: 1.0, eta2: 1.0, dark: 0.0, t1: 0.0, t2: 0.0 };
    let n = 1_000_000;
    let rec = run_gates(n, &setup(&m), ExperimentKind::SignalIdler, &Substream::new(11)).unwrap();
    let expected = n as f64 * (1.0 - (-0.01f64 * 0.5).exp());
    assert!((expected - 4987.5).abs() < 0.1);
    assert!((rec.coincidences as f64 - expected).abs() < 3.0 * expected.sqrt(), "{rec:?}");
}

#[test]
fn dark_counts_only() {
    let m = GateModel { mu: 0.0, noise: 0.0, eta1: 0.5, eta2: 0.5, dark: 0.01, t1: 0.0, t2: 0.0 };
    let n = 2_000_000;
    let rec = run_gates(n, &setup(&m), ExperimentKind::SignalIdler, &Substream::new(12)).unwrap();
    assert!(within_sigma(rec.coincidences, n, 1e-4, 3.0), "{rec:?}");
    assert!(within_sigma(rec.singles_1, n, 0.01, 3.0), "{rec:?}");
}

#[test]
fn both_samplers_match_the_closed_form() {
    let cases = [
        GateModel { mu: 0.08, noise: 0.0, eta1: 0.3, eta2: 0.4, dark: 0.0, t1: 0.0, t2: 0.0 },
        GateModel { mu: 0.5, noise: 0.1, eta1: 0.6, eta2: 0.5, dark: 0.01, t1: 0.3, t2: 1.1 },
        GateModel { mu: 0.12, noise: 0.02, eta1: 0.008, eta2: 0.007, dark: 5e-6, t1: 0.0, t2: 0.5 },
        GateModel { mu: 2.0, noise: 0.5, eta1: 0.9, eta2: 0.9, dark: 0.05, t1: 0.0, t2: std::f64::consts::FRAC_PI_2 },
    ];
    for (i, m) in cases.iter().enumerate() {
        check(m, 500_000, 100 + i as u64, Sampling::Photons);
        check(m, 500_000, 200 + i as u64, Sampling::Clicks);
    }
}

#[test]
fn default_efficiency_first_order_rates() {
    for (i, mu) in [0.01, 0.08, 0.12].into_iter().enumerate() {
        let m = GateModel { mu, noise: 96.0 * 1e-5, eta1: 0.008, eta2: 0.007, dark: 5e-6, t1: 0.0, t2: 0.0 };
        let n = 1_000_000_000;
        let rec = run_gates(n, &setup(&m), ExperimentKind::SignalIdler, &Substream::new(300 + i as u64)).unwrap();
        // Exact within 4σ, first order within 4σ plus its own truncation error.
        let (e, f) = (m.exact(), m.first_order());
        assert!(within_sigma(rec.coincidences, n, e.coincidence, 4.0), "{rec:?} {e:?}");
        let slack = n as f64 * (f.coincidence - e.coincidence).abs();
        assert!((rec.coincidences as f64 - n as f64 * f.coincidence).abs() <= 4.0 * (n as f64 * f.coincidence).sqrt() + slack);
    }
}

#[test]
fn self_split_has_no_excess_coincidences() {
    let det = DetectorConfig { eta_signal: 0.5, eta_idler: 0.5, dark_prob: 0.01, gate_rate_khz: 780.0 };
    let n = 2_000_000;
    let rec = run_self_split(n, Channel::Signal, 0.3, &NoiseModel::unpolarized(0.1), &det, &Substream::new(5)).unwrap();
    // Independent Poissonian photons: coincidences and delayed pairs share one mean.
    let diff = rec.coincidences as f64 - rec.accidentals_estimate as f64;
    let sigma = ((rec.coincidences + rec.accidentals_estimate) as f64).sqrt();
    assert!(diff.abs() < 4.0 * sigma, "{rec:?}");
    // Per side: photons ½η each.
    let p = 1.0 - (-(0.3 + 0.1) * 0.25f64).exp() * 0.99;
    assert!(within_sigma(rec.singles_1, n, p, 4.0), "{rec:?} {p}");
}

#[test]
fn degenerate_fringe_oracle() {
    // Ideal detectors, one pair per gate at most on average: the split
    // fraction ½ passes the analyzers with ½cos²(t1 − t2).
    let mu = 0.01;
    let n = 4_000_000;
    for (k, t2) in [0.0, 0.4, std::f64::consts::FRAC_PI_2].into_iter().enumerate() {
        let m = GateModel { mu, noise: 0.0, eta1: 1.0, eta2: 1.0, dark: 0.0, t1: 0.0, t2 };
        let rec = run_degenerate(n, &setup(&m), &Substream::new(40 + k as u64)).unwrap();
        let per_pair = 0.5 * 0.5 * t2.cos().powi(2);
        let p = 1.0 - (-mu * per_pair).exp();
        // Two-pair gates add O(μ²) coincidences at crossed analyzers.
        let extra = n as f64 * mu * mu;
        assert!((rec.coincidences as f64 - n as f64 * p).abs() < 4.0 * (n as f64 * p).sqrt().max(1.0) + extra, "{t2} {rec:?}");
    }
}

#[test]
fn worker_count_does_not_change_counts() {
    let m = GateModel { mu: 0.3, noise: 0.05, eta1: 0.5, eta2: 0.4, dark: 0.01, t1: 0.0, t2: 0.7 };
    let s = setup(&m);
    let n = 3 * pairsim::detection::BLOCK_GATES + 5;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_gates_with(n, &s, ExperimentKind::SignalIdler, &Substream::new(77), Sampling::Photons).unwrap())
    };
    assert_eq!(run(1), run(3));
}
