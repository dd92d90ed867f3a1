//! Gated Monte Carlo photon counting.
//!
//! Each gate is one pump pulse seen by two gated detectors. Per gate the
//! engine draws a Poisson number of pairs, a Poisson number of noise photons
//! per channel and independent dark clicks; every photon is projected by its
//! analyzer and detected with its channel efficiency. A detector clicks at
//! most once per gate. Coincidences pair the two detectors within a gate,
//! accidentals pair detector 1 at gate `g` with detector 2 at gate `g + 1`
//! (cyclically over the run).
//!
//! Most gates are empty, so each independent emission process (pairs, noise
//! per channel, dark counts per detector) jumps straight to its next
//! non-empty gate with a geometric skip and draws the conditional
//! (zero-truncated Poisson) photon number there. This is the same per-gate
//! law, only cheaper to sample.
//!
//! The default [`Sampling::Clicks`] goes one step further. Every emitted
//! photon or pair independently ends up as a click on side 1 only, side 2
//! only, both sides, or nothing, so by Poisson thinning the click-producing
//! emissions of each kind form independent Poisson streams. Merging them
//! leaves three independent per-gate Bernoulli processes (side 1, side 2,
//! both), whose cost scales with the number of clicks rather than photons.
//! [`Sampling::Photons`] keeps the photon-by-photon path as a reference.
//!
//! Detector 1 is always the idler side (photon 1) and detector 2 the signal
//! side (photon 2), except for the self-split runs where both detectors watch
//! the one split channel.

use std::ops::Add;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use crate::polarization::{coincidence_prob, marginal_pass_prob, Photon, TwoPhotonState};
use crate::stream::Substream;

/// Gates simulated per random substream block.
pub const BLOCK_GATES: u64 = 1 << 22;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("empty run: n_gates must be at least 1")]
    EmptyRun,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub eta_signal: f64,
    pub eta_idler: f64,
    /// Dark click probability per gate per detector.
    pub dark_prob: f64,
    pub gate_rate_khz: f64,
}

impl DetectorConfig {
    pub fn eta(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Signal => self.eta_signal,
            Channel::Idler => self.eta_idler,
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        for (name, p) in [("eta_signal", self.eta_signal), ("eta_idler", self.eta_idler), ("dark_prob", self.dark_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DetectionError::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(self.gate_rate_khz.is_finite() && self.gate_rate_khz > 0.0) {
            return Err(DetectionError::Config(format!("gate_rate_khz must be > 0, got {}", self.gate_rate_khz)));
        }
        Ok(())
    }
}

/// Detection angles (radians) for the idler (`theta1`) and signal (`theta2`)
/// analyzers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalyzerSetting {
    pub theta1: f64,
    pub theta2: f64,
    /// Added to both angles; zero when compensation mode is off.
    pub compensation_offset: f64,
}

impl AnalyzerSetting {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2, compensation_offset: 0.0 }
    }

    pub fn effective(&self) -> (f64, f64) {
        (self.theta1 + self.compensation_offset, self.theta2 + self.compensation_offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ExperimentKind {
    SignalIdler,
    SignalSplit,
    IdlerSplit,
    DegeneratePostselected,
}

impl ExperimentKind {
    pub fn tag(self) -> u64 {
        match self {
            ExperimentKind::SignalIdler => 1,
            ExperimentKind::SignalSplit => 2,
            ExperimentKind::IdlerSplit => 3,
            ExperimentKind::DegeneratePostselected => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Signal,
    Idler,
}

/// Background photons in one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    /// Photons per pulse per channel.
    pub mean_photons: f64,
    /// Fraction carrying the fixed polarization below; the rest are unpolarized.
    pub polarized_fraction: f64,
    /// Polarization angle of the polarized fraction, radians.
    pub polarization: f64,
}

impl NoiseModel {
    pub fn unpolarized(mean_photons: f64) -> Self {
        Self { mean_photons, polarized_fraction: 0.0, polarization: 0.0 }
    }

    /// Probability that one noise photon passes an analyzer at `theta`.
    pub fn pass_prob(&self, theta: f64) -> f64 {
        let f = self.polarized_fraction;
        (1.0 - f) * 0.5 + f * (theta - self.polarization).cos().powi(2)
    }
}

/// Tallies of one gated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CountRecord {
    pub gates: u64,
    pub singles_1: u64,
    pub singles_2: u64,
    pub coincidences: u64,
    /// Delayed-gate coincidences (detector 2 shifted by one gate).
    pub accidentals_estimate: u64,
}

impl CountRecord {
    pub fn singles_rate_1(&self) -> f64 {
        self.singles_1 as f64 / self.gates as f64
    }

    pub fn singles_rate_2(&self) -> f64 {
        self.singles_2 as f64 / self.gates as f64
    }

    pub fn coincidence_rate(&self) -> f64 {
        self.coincidences as f64 / self.gates as f64
    }

    pub fn accidental_rate(&self) -> f64 {
        self.accidentals_estimate as f64 / self.gates as f64
    }

    /// Checks the per-gate click bounds.
    pub fn is_consistent(&self) -> bool {
        self.coincidences <= self.singles_1.min(self.singles_2)
            && self.accidentals_estimate <= self.singles_1.min(self.singles_2)
            && self.singles_1 <= self.gates
            && self.singles_2 <= self.gates
    }
}

impl Add for CountRecord {
    type Output = CountRecord;

    fn add(self, rhs: CountRecord) -> CountRecord {
        CountRecord {
            gates: self.gates + rhs.gates,
            singles_1: self.singles_1 + rhs.singles_1,
            singles_2: self.singles_2 + rhs.singles_2,
            coincidences: self.coincidences + rhs.coincidences,
            accidentals_estimate: self.accidentals_estimate + rhs.accidentals_estimate,
        }
    }
}

/// Everything a signal–idler or degenerate run needs besides the gate count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSetup {
    pub state: TwoPhotonState,
    /// Mean pairs per pulse.
    pub mu: f64,
    pub noise: NoiseModel,
    pub analyzers: AnalyzerSetting,
    pub detectors: DetectorConfig,
    /// Replace pairs by independent Poissonian photon streams with the same
    /// single-channel statistics.
    pub classical_surrogate: bool,
}

impl GateSetup {
    pub fn validate(&self) -> Result<(), DetectionError> {
        self.detectors.validate()?;
        if !self.state.is_normalized() {
            return Err(DetectionError::Config("pair state is not normalized".into()));
        }
        check_mean("mu", self.mu)?;
        check_mean("noise mean", self.noise.mean_photons)?;
        if !(0.0..=1.0).contains(&self.noise.polarized_fraction) {
            return Err(DetectionError::Config("noise polarized fraction must be in [0, 1]".into()));
        }
        let (t1, t2) = self.analyzers.effective();
        if !(t1.is_finite() && t2.is_finite() && self.noise.polarization.is_finite()) {
            return Err(DetectionError::Config("analyzer angles must be finite".into()));
        }
        Ok(())
    }
}

fn check_mean(name: &str, v: f64) -> Result<(), DetectionError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(DetectionError::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// How the engine draws each gate; both give the same count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Every photon sampled through analyzer and detector.
    Photons,
    /// Only the merged click streams are sampled.
    #[default]
    Clicks,
}

/// Runs `n_gates` gates of the given experiment kind.
///
/// Self-split kinds ignore the pair state and analyzers; see [`run_self_split`].
pub fn run_gates(n_gates: u64, setup: &GateSetup, kind: ExperimentKind, stream: &Substream) -> Result<CountRecord, DetectionError> {
    run_gates_with(n_gates, setup, kind, stream, Sampling::default())
}

pub fn run_gates_with(
    n_gates: u64,
    setup: &GateSetup,
    kind: ExperimentKind,
    stream: &Substream,
    sampling: Sampling,
) -> Result<CountRecord, DetectionError> {
    setup.validate()?;
    let sources = match kind {
        ExperimentKind::SignalIdler => signal_idler_sources(setup),
        ExperimentKind::DegeneratePostselected => degenerate_sources(setup),
        ExperimentKind::SignalSplit => self_split_sources(Channel::Signal, setup.mu, &setup.noise, &setup.detectors),
        ExperimentKind::IdlerSplit => self_split_sources(Channel::Idler, setup.mu, &setup.noise, &setup.detectors),
    };
    simulate(n_gates, &prepare(sources, sampling), stream)
}

/// Degenerate pairs sent through a 50/50 splitter and post-selected on coincidences.
pub fn run_degenerate(n_gates: u64, setup: &GateSetup, stream: &Substream) -> Result<CountRecord, DetectionError> {
    run_gates(n_gates, setup, ExperimentKind::DegeneratePostselected, stream)
}

/// One channel split on a 50/50 splitter onto two detectors, no analyzers.
pub fn run_self_split(
    n_gates: u64,
    channel: Channel,
    mu: f64,
    noise: &NoiseModel,
    detectors: &DetectorConfig,
    stream: &Substream,
) -> Result<CountRecord, DetectionError> {
    detectors.validate()?;
    check_mean("mu", mu)?;
    check_mean("noise mean", noise.mean_photons)?;
    simulate(n_gates, &prepare(self_split_sources(channel, mu, noise, detectors), Sampling::default()), stream)
}

/// Cumulative joint analyzer law for one pair: pass/pass, pass/fail, fail/pass.
#[derive(Debug, Clone, Copy)]
struct JointLaw {
    pp: f64,
    pp_pf: f64,
    pp_pf_fp: f64,
}

impl JointLaw {
    fn new(state: &TwoPhotonState, theta1: f64, theta2: f64) -> Self {
        let pp = coincidence_prob(state, theta1, theta2);
        let m1 = marginal_pass_prob(state, Photon::Idler, theta1);
        let m2 = marginal_pass_prob(state, Photon::Signal, theta2);
        let pf = (m1 - pp).max(0.0);
        let fp = (m2 - pp).max(0.0);
        Self { pp, pp_pf: pp + pf, pp_pf_fp: pp + pf + fp }
    }

    /// Draws which of the two photons pass their analyzers.
    fn sample<R: Rng>(&self, rng: &mut R) -> (bool, bool) {
        let u: f64 = rng.random();
        if u < self.pp {
            (true, true)
        } else if u < self.pp_pf {
            (true, false)
        } else if u < self.pp_pf_fp {
            (false, true)
        } else {
            (false, false)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum PairModel {
    /// Photon 1 to detector 1, photon 2 to detector 2.
    Separate { law: JointLaw, eta1: f64, eta2: f64 },
    /// Both photons share one mode ahead of a 50/50 splitter.
    Degenerate { split: JointLaw, same1: JointLaw, same2: JointLaw, eta1: f64, eta2: f64 },
}

#[derive(Debug, Clone, Copy)]
enum Emission {
    /// Independent photons; each one ends up detected on side 1 with
    /// probability `h1`, on side 2 with `h2`, or lost.
    Photons { h1: f64, h2: f64 },
    Pairs(PairModel),
    /// Clicks directly, without photons: dark counts and merged click streams.
    Clicks { side1: bool, side2: bool },
}

#[derive(Debug, Clone)]
struct Source {
    /// Probability that a gate holds at least one emission.
    occupancy: f64,
    /// Poisson mean of the emission count; zero for click sources.
    mean: f64,
    /// Cumulative zero-truncated Poisson table for the emission count.
    count_cdf: Vec<f64>,
    emission: Emission,
}

impl Source {
    fn poisson(mean: f64, emission: Emission) -> Self {
        if mean <= 0.0 {
            return Self { occupancy: 0.0, mean: 0.0, count_cdf: Vec::new(), emission };
        }
        Self { occupancy: -(-mean).exp_m1(), mean, count_cdf: truncated_poisson_cdf(mean), emission }
    }

    fn dark(prob: f64, side: usize) -> Self {
        Self::clicks(prob, side == 0, side == 1)
    }

    fn clicks(prob: f64, side1: bool, side2: bool) -> Self {
        Self { occupancy: prob, mean: 0.0, count_cdf: vec![1.0], emission: Emission::Clicks { side1, side2 } }
    }

    fn draw_count<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.count_cdf.iter().position(|&c| u < c).unwrap_or(self.count_cdf.len() - 1) + 1
    }
}

/// CDF of a Poisson(mean) conditioned on at least one event, indexed from 1.
fn truncated_poisson_cdf(mean: f64) -> Vec<f64> {
    let norm = -(-mean).exp_m1();
    let mut pk = mean * (-mean).exp() / norm;
    let mut cum = 0.0;
    let mut cdf = Vec::new();
    let mut k = 1.0;
    while cdf.len() < 10_000 {
        cum += pk;
        cdf.push(cum.min(1.0));
        if 1.0 - cum < 1e-16 && k > mean {
            break;
        }
        k += 1.0;
        pk *= mean / k;
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn signal_idler_sources(setup: &GateSetup) -> Vec<Source> {
    let (t1, t2) = setup.analyzers.effective();
    let det = &setup.detectors;
    let (eta1, eta2) = (det.eta_idler, det.eta_signal);
    let mut sources = Vec::with_capacity(6);
    if setup.classical_surrogate {
        let m1 = marginal_pass_prob(&setup.state, Photon::Idler, t1);
        let m2 = marginal_pass_prob(&setup.state, Photon::Signal, t2);
        sources.push(Source::poisson(setup.mu, Emission::Photons { h1: m1 * eta1, h2: 0.0 }));
        sources.push(Source::poisson(setup.mu, Emission::Photons { h1: 0.0, h2: m2 * eta2 }));
    } else {
        let law = JointLaw::new(&setup.state, t1, t2);
        sources.push(Source::poisson(setup.mu, Emission::Pairs(PairModel::Separate { law, eta1, eta2 })));
    }
    let noise = &setup.noise;
    sources.push(Source::poisson(noise.mean_photons, Emission::Photons { h1: noise.pass_prob(t1) * eta1, h2: 0.0 }));
    sources.push(Source::poisson(noise.mean_photons, Emission::Photons { h1: 0.0, h2: noise.pass_prob(t2) * eta2 }));
    sources.push(Source::dark(det.dark_prob, 0));
    sources.push(Source::dark(det.dark_prob, 1));
    sources
}

fn degenerate_sources(setup: &GateSetup) -> Vec<Source> {
    let (t1, t2) = setup.analyzers.effective();
    let det = &setup.detectors;
    let (eta1, eta2) = (det.eta_idler, det.eta_signal);
    let mut sources = Vec::with_capacity(5);
    if setup.classical_surrogate {
        let m1 = marginal_pass_prob(&setup.state, Photon::Idler, t1);
        let m2 = marginal_pass_prob(&setup.state, Photon::Signal, t2);
        let h = Emission::Photons { h1: 0.5 * m1 * eta1, h2: 0.5 * m2 * eta2 };
        sources.push(Source::poisson(2.0 * setup.mu, h));
    } else {
        let model = PairModel::Degenerate {
            split: JointLaw::new(&setup.state, t1, t2),
            same1: JointLaw::new(&setup.state, t1, t1),
            same2: JointLaw::new(&setup.state, t2, t2),
            eta1,
            eta2,
        };
        sources.push(Source::poisson(setup.mu, Emission::Pairs(model)));
    }
    let noise = &setup.noise;
    let h = Emission::Photons { h1: 0.5 * noise.pass_prob(t1) * eta1, h2: 0.5 * noise.pass_prob(t2) * eta2 };
    sources.push(Source::poisson(noise.mean_photons, h));
    sources.push(Source::dark(det.dark_prob, 0));
    sources.push(Source::dark(det.dark_prob, 1));
    sources
}

fn self_split_sources(channel: Channel, mu: f64, noise: &NoiseModel, det: &DetectorConfig) -> Vec<Source> {
    let eta = det.eta(channel);
    let half = Emission::Photons { h1: 0.5 * eta, h2: 0.5 * eta };
    vec![
        // One photon of the chosen channel per pair.
        Source::poisson(mu, half),
        Source::poisson(noise.mean_photons, half),
        Source::dark(det.dark_prob, 0),
        Source::dark(det.dark_prob, 1),
    ]
}

impl JointLaw {
    fn pp(&self) -> f64 {
        self.pp
    }

    fn pf(&self) -> f64 {
        self.pp_pf - self.pp
    }

    fn fp(&self) -> f64 {
        self.pp_pf_fp - self.pp_pf
    }

    /// Per-pair click probabilities `(side 1 only, side 2 only, both)` when
    /// photon 1 meets detector 1 and photon 2 meets detector 2.
    fn click_split(&self, eta1: f64, eta2: f64) -> [f64; 3] {
        [
            self.pp() * eta1 * (1.0 - eta2) + self.pf() * eta1,
            self.pp() * (1.0 - eta1) * eta2 + self.fp() * eta2,
            self.pp() * eta1 * eta2,
        ]
    }

    /// Probability that at least one of two photons on the same detector is seen.
    fn click_same(&self, eta: f64) -> f64 {
        self.pp() * (1.0 - (1.0 - eta) * (1.0 - eta)) + (self.pf() + self.fp()) * eta
    }
}

/// Per-emission click probabilities `(side 1 only, side 2 only, both)`.
fn click_pattern(emission: &Emission) -> [f64; 3] {
    match *emission {
        Emission::Photons { h1, h2 } => [h1, h2, 0.0],
        Emission::Pairs(PairModel::Separate { law, eta1, eta2 }) => law.click_split(eta1, eta2),
        Emission::Pairs(PairModel::Degenerate { split, same1, same2, eta1, eta2 }) => {
            let [a, b, c] = split.click_split(eta1, eta2);
            [0.5 * a + 0.25 * same1.click_same(eta1), 0.5 * b + 0.25 * same2.click_same(eta2), 0.5 * c]
        }
        Emission::Clicks { .. } => [0.0; 3],
    }
}

/// Merges all sources into three independent click streams (see module docs).
fn collapse(sources: &[Source]) -> Vec<Source> {
    // Log-probabilities that a gate holds no click of each pattern.
    let mut log_none = [0.0f64; 3];
    for s in sources {
        match s.emission {
            Emission::Clicks { side1, side2 } => {
                let idx = match (side1, side2) {
                    (true, false) => 0,
                    (false, true) => 1,
                    (true, true) => 2,
                    (false, false) => continue,
                };
                log_none[idx] += (-s.occupancy).ln_1p();
            }
            ref e => {
                for (acc, r) in log_none.iter_mut().zip(click_pattern(e)) {
                    *acc -= s.mean * r;
                }
            }
        }
    }
    vec![
        Source::clicks(-log_none[0].exp_m1(), true, false),
        Source::clicks(-log_none[1].exp_m1(), false, true),
        Source::clicks(-log_none[2].exp_m1(), true, true),
    ]
}

fn prepare(sources: Vec<Source>, sampling: Sampling) -> Vec<Source> {
    match sampling {
        Sampling::Photons => sources,
        Sampling::Clicks => collapse(&sources),
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BlockTally {
    gates: u64,
    singles_1: u64,
    singles_2: u64,
    coincidences: u64,
    delayed: u64,
    first_gate_click_2: bool,
    last_gate_click_1: bool,
}

fn simulate(n_gates: u64, sources: &[Source], stream: &Substream) -> Result<CountRecord, DetectionError> {
    if n_gates == 0 {
        return Err(DetectionError::EmptyRun);
    }
    let n_blocks = n_gates.div_ceil(BLOCK_GATES);
    let tallies: Vec<BlockTally> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK_GATES.min(n_gates - b * BLOCK_GATES);
            let mut rng = stream.block_rng(b);
            simulate_block(len, sources, &mut rng)
        })
        .collect();

    let mut rec = CountRecord { gates: n_gates, ..CountRecord::default() };
    for (i, t) in tallies.iter().enumerate() {
        rec.singles_1 += t.singles_1;
        rec.singles_2 += t.singles_2;
        rec.coincidences += t.coincidences;
        rec.accidentals_estimate += t.delayed;
        // Pair the last gate of this block with the first gate of the next,
        // wrapping around at the end of the run.
        if n_gates > 1 {
            let next = &tallies[(i + 1) % tallies.len()];
            if t.last_gate_click_1 && next.first_gate_click_2 {
                rec.accidentals_estimate += 1;
            }
        }
    }
    debug_assert_eq!(tallies.iter().map(|t| t.gates).sum::<u64>(), n_gates);
    Ok(rec)
}

/// Calls `f` on every gate of `0..len` that holds at least one event of a
/// process with per-gate occupancy `p`.
fn for_each_occupied_gate<R: Rng>(len: u64, p: f64, rng: &mut R, mut f: impl FnMut(u64, &mut R)) {
    if p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        for g in 0..len {
            f(g, rng);
        }
        return;
    }
    // rand_distr's sampler never returns once 1 − p rounds to 1; invert the
    // CDF directly in that range.
    let skip = if p < 1e-12 { None } else { Some(Geometric::new(p).expect("occupancy in (0, 1)")) };
    let log_q = (-p).ln_1p();
    let mut g = 0u64;
    loop {
        let k = match &skip {
            Some(geo) => geo.sample(rng),
            None => ((1.0 - rng.random::<f64>()).ln() / log_q) as u64,
        };
        g = g.saturating_add(k);
        if g >= len {
            break;
        }
        f(g, rng);
        g += 1;
    }
}

fn simulate_block<R: Rng>(len: u64, sources: &[Source], rng: &mut R) -> BlockTally {
    let mut clicks: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    for source in sources {
        for_each_occupied_gate(len, source.occupancy, rng, |g, rng| {
            let (c1, c2) = match source.emission {
                Emission::Clicks { side1, side2 } => (side1, side2),
                Emission::Photons { h1, h2 } => {
                    let (mut c1, mut c2) = (false, false);
                    for _ in 0..source.draw_count(rng) {
                        let u: f64 = rng.random();
                        if u < h1 {
                            c1 = true;
                        } else if u < h1 + h2 {
                            c2 = true;
                        }
                    }
                    (c1, c2)
                }
                Emission::Pairs(model) => {
                    let (mut c1, mut c2) = (false, false);
                    for _ in 0..source.draw_count(rng) {
                        let (d1, d2) = detect_pair(&model, rng);
                        c1 |= d1;
                        c2 |= d2;
                    }
                    (c1, c2)
                }
            };
            if c1 {
                clicks[0].push(g);
            }
            if c2 {
                clicks[1].push(g);
            }
        });
    }
    for side in clicks.iter_mut() {
        side.sort_unstable();
        side.dedup();
    }
    let [ref one, ref two] = clicks;
    BlockTally {
        gates: len,
        singles_1: one.len() as u64,
        singles_2: two.len() as u64,
        coincidences: count_matches(one, two, 0),
        delayed: count_matches(one, two, 1),
        first_gate_click_2: two.first() == Some(&0),
        last_gate_click_1: one.last() == Some(&(len - 1)),
    }
}

/// Number of `g` in `a` with `g + shift` in `b`; both sorted and unique.
fn count_matches(a: &[u64], b: &[u64], shift: u64) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let target = a[i] + shift;
        match target.cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn detect_pair<R: Rng>(model: &PairModel, rng: &mut R) -> (bool, bool) {
    match *model {
        PairModel::Separate { law, eta1, eta2 } => {
            let (p1, p2) = law.sample(rng);
            (p1 && rng.random::<f64>() < eta1, p2 && rng.random::<f64>() < eta2)
        }
        PairModel::Degenerate { split, same1, same2, eta1, eta2 } => {
            if rng.random::<f64>() < 0.5 {
                let (p1, p2) = split.sample(rng);
                (p1 && rng.random::<f64>() < eta1, p2 && rng.random::<f64>() < eta2)
            } else if rng.random::<f64>() < 0.5 {
                let (a, b) = same1.sample(rng);
                let hit = (a && rng.random::<f64>() < eta1) | (b && rng.random::<f64>() < eta1);
                (hit, false)
            } else {
                let (a, b) = same2.sample(rng);
                let hit = (a && rng.random::<f64>() < eta2) | (b && rng.random::<f64>() < eta2);
                (false, hit)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::bell_phi_plus;
    use std::f64::consts::FRAC_PI_2;

    fn ideal_detectors() -> DetectorConfig {
        DetectorConfig { eta_signal: 1.0, eta_idler: 1.0, dark_prob: 0.0, gate_rate_khz: 780.0 }
    }

    fn setup(mu: f64) -> GateSetup {
        GateSetup {
            state: bell_phi_plus(),
            mu,
            noise: NoiseModel::default(),
            analyzers: AnalyzerSetting::new(0.0, 0.0),
            detectors: ideal_detectors(),
            classical_surrogate: false,
        }
    }

    #[test]
    fn nothing_in_nothing_out() {
        let s = Substream::new(1);
        let rec = run_gates(100_000, &setup(0.0), ExperimentKind::SignalIdler, &s).unwrap();
        assert_eq!(rec, CountRecord { gates: 100_000, ..Default::default() });
        let rec = run_degenerate(100_000, &setup(0.0), &s).unwrap();
        assert_eq!(rec.singles_1 + rec.singles_2 + rec.coincidences, 0);
    }

    #[test]
    fn zero_gates_is_an_error() {
        let s = Substream::new(1);
        assert_eq!(run_gates(0, &setup(0.1), ExperimentKind::SignalIdler, &s), Err(DetectionError::EmptyRun));
        let det = ideal_detectors();
        assert_eq!(
            run_self_split(0, Channel::Signal, 0.1, &NoiseModel::default(), &det, &s),
            Err(DetectionError::EmptyRun)
        );
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let s = Substream::new(1);
        let mut bad = setup(0.1);
        bad.detectors.eta_signal = 1.5;
        assert!(matches!(run_gates(10, &bad, ExperimentKind::SignalIdler, &s), Err(DetectionError::Config(_))));
        let mut bad = setup(-0.1);
        assert!(run_gates(10, &bad, ExperimentKind::SignalIdler, &s).is_err());
        bad.mu = f64::NAN;
        assert!(run_gates(10, &bad, ExperimentKind::SignalIdler, &s).is_err());
    }

    #[test]
    fn single_photons_never_split_into_two_clicks() {
        // Every gate holds exactly one photon when μ is huge in a truncated
        // sense; use the photon source directly with one photon per gate.
        let src = vec![Source { occupancy: 1.0, mean: 0.0, count_cdf: vec![1.0], emission: Emission::Photons { h1: 0.5, h2: 0.5 } }];
        let rec = simulate(200_000, &src, &Substream::new(9)).unwrap();
        assert_eq!(rec.coincidences, 0);
        assert_eq!(rec.singles_1 + rec.singles_2, 200_000);
    }

    #[test]
    fn crossed_analyzers_block_phi_plus_coincidences() {
        let mut s = setup(0.05);
        s.analyzers = AnalyzerSetting::new(0.0, FRAC_PI_2);
        let rec = run_gates(1_000_000, &s, ExperimentKind::SignalIdler, &Substream::new(2)).unwrap();
        // Only multi-pair gates can give a crossed coincidence: P ≈ μ²/4.
        assert!(rec.coincidences < 2_000, "{rec:?}");
        assert!(rec.is_consistent());
    }

    #[test]
    fn counts_respect_per_gate_bounds() {
        let mut s = setup(2.0);
        s.detectors.dark_prob = 0.3;
        for kind in [
            ExperimentKind::SignalIdler,
            ExperimentKind::SignalSplit,
            ExperimentKind::IdlerSplit,
            ExperimentKind::DegeneratePostselected,
        ] {
            let rec = run_gates(50_000, &s, kind, &Substream::new(4)).unwrap();
            assert!(rec.is_consistent(), "{kind:?} {rec:?}");
        }
    }

    #[test]
    fn degenerate_ideal_coincidence_per_pair_is_a_quarter() {
        // Mode-algebra enumeration: (a†)² on a 50/50 splitter gives
        // |2,0⟩, |1,1⟩, |0,2⟩ with weights ¼, ½, ¼; the split term then
        // passes both H analyzers with |⟨HH|Φ⁺⟩|² = ½.
        let split_weight = 0.25 + 0.25;
        let oracle = (1.0 - split_weight) * 0.5;
        assert_eq!(oracle, 0.25);
        let mu = 0.01;
        let n = 2_000_000u64;
        let rec = run_degenerate(n, &setup(mu), &Substream::new(21)).unwrap();
        let expected = n as f64 * (1.0 - (-mu * oracle).exp());
        assert!((rec.coincidences as f64 - expected).abs() < 3.0 * expected.sqrt() + 3.0, "{rec:?} vs {expected}");
    }

    #[test]
    fn block_boundaries_carry_delayed_pairs() {
        // Every gate clicks on both sides: the cyclic delayed pairing must
        // count exactly one accidental per gate, across block boundaries.
        let src = vec![Source::dark(1.0, 0), Source::dark(1.0, 1)];
        let n = 2 * BLOCK_GATES + 17;
        let rec = simulate(n, &src, &Substream::new(0)).unwrap();
        assert_eq!(rec.accidentals_estimate, n);
        assert_eq!(rec.coincidences, n);
    }

    #[test]
    fn truncated_poisson_table() {
        let cdf = truncated_poisson_cdf(0.08);
        let e = (-0.08f64).exp();
        let p1 = 0.08 * e / (1.0 - e);
        assert!((cdf[0] - p1).abs() < 1e-12);
        assert_eq!(*cdf.last().unwrap(), 1.0);
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn vanishing_occupancy_terminates() {
        let mut rng = Substream::new(3).block_rng(0);
        let mut hits = 0;
        for p in [1e-30, 1e-17, 1e-13] {
            for_each_occupied_gate(BLOCK_GATES, p, &mut rng, |_, _| hits += 1);
        }
        assert_eq!(hits, 0);
    }

    #[test]
    fn count_matches_with_shift() {
        let a = [1, 3, 5, 9];
        let b = [2, 3, 6, 10];
        assert_eq!(count_matches(&a, &b, 0), 1);
        assert_eq!(count_matches(&a, &b, 1), 3);
    }

    #[test]
    fn click_and_photon_sampling_agree() {
        let mut s = setup(0.3);
        s.detectors = DetectorConfig { eta_signal: 0.4, eta_idler: 0.6, dark_prob: 0.01, gate_rate_khz: 780.0 };
        s.noise = NoiseModel { mean_photons: 0.2, polarized_fraction: 0.5, polarization: 0.3 };
        s.analyzers = AnalyzerSetting::new(0.2, 0.9);
        let n = 400_000;
        for kind in [
            ExperimentKind::SignalIdler,
            ExperimentKind::SignalSplit,
            ExperimentKind::IdlerSplit,
            ExperimentKind::DegeneratePostselected,
        ] {
            for surrogate in [false, true] {
                s.classical_surrogate = surrogate;
                let a = run_gates_with(n, &s, kind, &Substream::new(5), Sampling::Photons).unwrap();
                let b = run_gates_with(n, &s, kind, &Substream::new(6), Sampling::Clicks).unwrap();
                for (x, y) in [
                    (a.singles_1, b.singles_1),
                    (a.singles_2, b.singles_2),
                    (a.coincidences, b.coincidences),
                    (a.accidentals_estimate, b.accidentals_estimate),
                ] {
                    // Two independent binomial counts: difference within 4σ.
                    let sigma = ((x + y) as f64).sqrt().max(1.0);
                    assert!((x as f64 - y as f64).abs() < 4.0 * sigma, "{kind:?} {surrogate}: {a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn noise_pass_probability() {
        let n = NoiseModel::unpolarized(1.0);
        assert_eq!(n.pass_prob(0.3), 0.5);
        let p = NoiseModel { mean_photons: 1.0, polarized_fraction: 1.0, polarization: 0.0 };
        assert!((p.pass_prob(0.0) - 1.0).abs() < 1e-15);
        assert!(p.pass_prob(FRAC_PI_2) < 1e-15);
    }
}
