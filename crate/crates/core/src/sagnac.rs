//! Counter-propagating (Sagnac) loop entanglement source.
//!
//! HWP1/QWP1 set the pump polarization entering PBS1. The horizontal part
//! travels clockwise and creates |HH⟩ pairs, the vertical part travels
//! counter-clockwise and creates |VV⟩ pairs; both recombine on PBS1. Pairs
//! exit backwards through HWP1, which acts on both photons.

use crate::polarization::{apply_both, apply_single, hwp, qwp, ComplexAmp, JonesVector, Photon, PolUnitary, TwoPhotonState};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LoopError {
    #[error("loop angle {0} is not finite")]
    NonFinite(&'static str),
    #[error("residual unitary for {0:?} is not unitary (error {1:e})")]
    NotUnitary(Photon, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub hwp1_angle: f64,
    pub qwp1_angle: f64,
    /// Relative phase between the |HH⟩ and |VV⟩ amplitudes.
    pub loop_phase: f64,
    /// Residual polarization error left after FPC/analyzer compensation on the idler photon.
    pub residual_idler: PolUnitary,
    pub residual_signal: PolUnitary,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            hwp1_angle: std::f64::consts::FRAC_PI_8,
            qwp1_angle: 0.0,
            loop_phase: 0.0,
            residual_idler: PolUnitary::identity(),
            residual_signal: PolUnitary::identity(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        for (name, v) in [
            ("hwp1_angle", self.hwp1_angle),
            ("qwp1_angle", self.qwp1_angle),
            ("loop_phase", self.loop_phase),
        ] {
            if !v.is_finite() {
                return Err(LoopError::NonFinite(name));
            }
        }
        for (photon, u) in [(Photon::Idler, &self.residual_idler), (Photon::Signal, &self.residual_signal)] {
            let err = u.unitarity_error();
            if !(err <= crate::polarization::UNIT_TOL) {
                return Err(LoopError::NotUnitary(photon, err));
            }
        }
        Ok(())
    }

    /// Pump power fractions at PBS1 including QWP1. With QWP1 at 0 this is
    /// exactly [`pump_split`].
    pub fn split_fractions(&self) -> (f64, f64) {
        let pump = hwp(self.hwp1_angle).apply(&qwp(self.qwp1_angle).apply(&JonesVector::vertical()));
        let (ph, pv) = (pump.h.norm_sqr(), pump.v.norm_sqr());
        let total = ph + pv;
        (ph / total, pv / total)
    }
}

/// Power fractions `(P_H, P_V)` for a vertically polarized pump after HWP1.
pub fn pump_split(hwp1_angle: f64) -> (f64, f64) {
    let s = (2.0 * hwp1_angle).sin();
    let p_h = s * s;
    (p_h, 1.0 - p_h)
}

/// Pair state leaving the loop at PBS1: ∝ P_H|HH⟩ + e^{iφ}P_V|VV⟩, with the
/// residual per-photon errors applied.
pub fn generated_state(cfg: &LoopConfig) -> TwoPhotonState {
    let (p_h, p_v) = cfg.split_fractions();
    let zero = ComplexAmp::new(0.0, 0.0);
    let vv = ComplexAmp::from_polar(p_v, cfg.loop_phase);
    // p_h + p_v = 1 so the vector is never zero.
    let raw = TwoPhotonState::normalized([ComplexAmp::new(p_h, 0.0), zero, zero, vv])
        .expect("split fractions sum to one");
    let s = apply_single(&cfg.residual_idler, Photon::Idler, &raw);
    apply_single(&cfg.residual_signal, Photon::Signal, &s)
}

/// Backward pass through HWP1, acting on both photons.
pub fn backward_hwp1(s: &TwoPhotonState, hwp1_angle: f64) -> TwoPhotonState {
    let h = hwp(hwp1_angle);
    apply_both(&h, &h, s)
}

/// Offset added to both analyzer settings when compensating the backward pass.
pub fn compensation_offsets(hwp1_angle: f64) -> f64 {
    hwp1_angle
}

/// Full loop output as seen by the analyzers.
pub fn output_state(cfg: &LoopConfig) -> TwoPhotonState {
    backward_hwp1(&generated_state(cfg), cfg.hwp1_angle)
}

/// Analytic fringe visibility of `a|HH⟩ + b|VV⟩` with real weights.
pub fn pure_state_visibility(p_h: f64, p_v: f64) -> f64 {
    2.0 * p_h * p_v / (p_h * p_h + p_v * p_v)
}
