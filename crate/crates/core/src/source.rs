//! Pump, channel and pair/noise statistics for four-photon scattering.
//!
//! Pair production per pulse grows quadratically with in-waveguide pump power
//! (two pump photons are annihilated per pair). Background photons come from
//! Raman scattering, linear in power, plus a power-independent amplifier
//! floor that survives the channel filters.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("invalid channel plan: {0}")]
    InvalidPlan(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Telecom-band sanity bounds on the pump wavelength, nm.
pub const PUMP_BAND_NM: (f64, f64) = (1500.0, 1620.0);

#[derive(Debug, Clone, PartialEq)]
pub struct PumpConfig {
    pub center_wavelength_nm: f64,
    pub pulse_duration_ps: f64,
    pub rep_rate_mhz: f64,
    /// Average power per pump inside the waveguide, µW.
    pub avg_power_uw: f64,
}

impl PumpConfig {
    pub fn validate(&self) -> Result<(), SourceError> {
        let fields = [
            ("center_wavelength_nm", self.center_wavelength_nm),
            ("pulse_duration_ps", self.pulse_duration_ps),
            ("rep_rate_mhz", self.rep_rate_mhz),
            ("avg_power_uw", self.avg_power_uw),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(SourceError::InvalidInput(format!("{name} must be > 0, got {v}")));
            }
        }
        let (lo, hi) = PUMP_BAND_NM;
        if !(lo..=hi).contains(&self.center_wavelength_nm) {
            return Err(SourceError::InvalidInput(format!(
                "pump wavelength {} nm outside [{lo}, {hi}] nm",
                self.center_wavelength_nm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanKind {
    /// One pump, signal and idler on either side of it.
    NonDegenerate,
    /// Two pumps, degenerate pair at the mean frequency.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan {
    pub kind: PlanKind,
    pub pump_wavelengths_nm: Vec<f64>,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub signal_fwhm_nm: f64,
    pub idler_fwhm_nm: f64,
}

impl ChannelPlan {
    pub fn validate(&self) -> Result<(), SourceError> {
        let expected = match self.kind {
            PlanKind::NonDegenerate => 1,
            PlanKind::Degenerate => 2,
        };
        if self.pump_wavelengths_nm.len() != expected {
            return Err(SourceError::InvalidPlan(format!(
                "{:?} plan needs {expected} pump wavelength(s), got {}",
                self.kind,
                self.pump_wavelengths_nm.len()
            )));
        }
        let all = self.pump_wavelengths_nm.iter().chain([
            &self.signal_wavelength_nm,
            &self.idler_wavelength_nm,
            &self.signal_fwhm_nm,
            &self.idler_fwhm_nm,
        ]);
        for &w in all {
            if !(w.is_finite() && w > 0.0) {
                return Err(SourceError::InvalidPlan(format!("wavelengths must be > 0, got {w}")));
            }
        }
        if self.kind == PlanKind::Degenerate && self.signal_wavelength_nm != self.idler_wavelength_nm {
            return Err(SourceError::InvalidPlan(
                "degenerate plan needs signal and idler at the same wavelength".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of an energy-conservation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    /// |Σν_pump − ν_s − ν_i| / Σν_pump with ν = 1/λ.
    pub detuning: f64,
    /// Σ over the signal and idler filters of (FWHM/2)/λ.
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `ν_p + ν_p' = ν_s + ν_i` against the channel filter widths.
///
/// A non-degenerate plan counts its single pump twice.
pub fn check_energy_conservation(plan: &ChannelPlan) -> Result<EnergyCheck, SourceError> {
    plan.validate()?;
    let pump_sum: f64 = match plan.kind {
        PlanKind::NonDegenerate => 2.0 / plan.pump_wavelengths_nm[0],
        PlanKind::Degenerate => plan.pump_wavelengths_nm.iter().map(|w| 1.0 / w).sum(),
    };
    let out_sum = 1.0 / plan.signal_wavelength_nm + 1.0 / plan.idler_wavelength_nm;
    let detuning = (pump_sum - out_sum).abs() / pump_sum;
    let tolerance = 0.5 * plan.signal_fwhm_nm / plan.signal_wavelength_nm
        + 0.5 * plan.idler_fwhm_nm / plan.idler_wavelength_nm;
    Ok(EnergyCheck { detuning, tolerance, passed: detuning <= tolerance })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Pairs per pulse per µW².
    pub kappa: f64,
    /// Raman photons per pulse per µW, per channel.
    pub raman_coeff: f64,
    /// Amplifier floor, photons per pulse per channel.
    pub ase_floor: f64,
    /// Fraction of noise photons with a fixed polarization; the rest are unpolarized.
    pub noise_polarized_fraction: f64,
}

impl SourceParams {
    /// κ such that `kappa · power² = pairs`.
    pub fn kappa_for(pairs_per_pulse: f64, power_uw: f64) -> f64 {
        pairs_per_pulse / (power_uw * power_uw)
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("raman_coeff", self.raman_coeff),
            ("ase_floor", self.ase_floor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SourceError::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_polarized_fraction) {
            return Err(SourceError::InvalidInput(format!(
                "noise_polarized_fraction must be in [0, 1], got {}",
                self.noise_polarized_fraction
            )));
        }
        Ok(())
    }
}

fn check_power(p: f64) -> Result<(), SourceError> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(SourceError::InvalidInput(format!("pump power must be >= 0, got {p}")))
    }
}

/// Mean pairs per pulse. Degenerate plans use κ·P₁·P₂ at equal pump power P.
pub fn mean_pairs(params: &SourceParams, plan: &ChannelPlan, power_per_pump: f64) -> Result<f64, SourceError> {
    check_power(power_per_pump)?;
    Ok(match plan.kind {
        PlanKind::NonDegenerate => params.kappa * power_per_pump * power_per_pump,
        PlanKind::Degenerate => mean_pairs_two_pumps(params, power_per_pump, power_per_pump)?,
    })
}

/// Reverse degenerate scattering with unequal pumps, κ·P₁·P₂.
pub fn mean_pairs_two_pumps(params: &SourceParams, p1: f64, p2: f64) -> Result<f64, SourceError> {
    check_power(p1)?;
    check_power(p2)?;
    Ok(params.kappa * p1 * p2)
}

/// Noise photons per pulse per channel: `raman_coeff · P + ase_floor`.
pub fn mean_noise(params: &SourceParams, power: f64) -> Result<f64, SourceError> {
    check_power(power)?;
    Ok(params.raman_coeff * power + params.ase_floor)
}

/// Poisson-distributed pair number for one pulse.
pub fn sample_pair_count<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mu).expect("finite positive mean");
    dist.sample(rng) as u64
}
