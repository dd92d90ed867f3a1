//! Random valid plans for parser round trips.
#![allow(dead_code)]

use pairsim::config::{Angle, ExperimentPlan, LoopSettings, Sweep, SweepVariable};
use pairsim::detection::{DetectorConfig, ExperimentKind};
use pairsim::source::{ChannelPlan, PlanKind, PumpConfig, SourceParams};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = Angle> {
    (0i64..360_000_000).prop_map(Angle::from_micro)
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-9..1e6f64, (1u32..5000).prop_map(f64::from)]
}

fn probability() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..=1.0f64, Just(0.0), Just(1.0)]
}

fn band() -> impl Strategy<Value = f64> {
    1500.0..=1620.0f64
}

prop_compose! {
    fn loop_settings()(
        hwp1 in angle(), qwp1 in angle(), loop_phase in angle(), compensation in any::<bool>(),
        ri in (angle(), angle()), rs in (angle(), angle()),
    ) -> LoopSettings {
        LoopSettings { hwp1, qwp1, loop_phase, compensation, residual_idler: ri, residual_signal: rs }
    }
}

fn sweep() -> impl Strategy<Value = Option<Sweep>> {
    let theta = (-720.0..720.0f64, 1e-3..720.0f64, 2u64..400)
        .prop_map(|(start, width, steps)| Sweep { variable: SweepVariable::Theta2, start, stop: start + width, steps });
    let power = (positive(), positive(), 2u64..400)
        .prop_map(|(start, width, steps)| Sweep { variable: SweepVariable::Power, start, stop: start + width, steps });
    prop_oneof![Just(None), theta.prop_map(Some), power.prop_map(Some)]
}

prop_compose! {
    pub fn plan()(
        degenerate in any::<bool>(),
        pump in (band(), positive(), positive(), positive()),
        pump2 in proptest::option::of(positive()),
        pumps in (band(), band()),
        wl in (positive(), positive(), positive(), positive()),
        source in (positive(), positive(), positive(), probability(), angle()),
        loop_settings in loop_settings(),
        det in (probability(), probability(), probability(), positive()),
        split_kind in 0usize..3,
        thetas in (angle(), angle()),
        sweep in sweep(),
        gates in 1u64..=u64::MAX,
        seed in any::<u64>(),
    ) -> ExperimentPlan {
        let kind = if degenerate { PlanKind::Degenerate } else { PlanKind::NonDegenerate };
        let channels = ChannelPlan {
            kind,
            pump_wavelengths_nm: if degenerate { vec![pumps.0, pumps.1] } else { vec![pump.0] },
            signal_wavelength_nm: wl.0,
            idler_wavelength_nm: if degenerate { wl.0 } else { wl.1 },
            signal_fwhm_nm: wl.2,
            idler_fwhm_nm: wl.3,
        };
        ExperimentPlan {
            format_version: 1,
            pump: PumpConfig { center_wavelength_nm: pump.0, pulse_duration_ps: pump.1, rep_rate_mhz: pump.2, avg_power_uw: pump.3 },
            pump2_power_uw: if degenerate { pump2 } else { None },
            channels,
            source: SourceParams { kappa: source.0, raman_coeff: source.1, ase_floor: source.2, noise_polarized_fraction: source.3 },
            noise_polarization: source.4,
            loop_settings,
            detectors: DetectorConfig { eta_signal: det.0, eta_idler: det.1, dark_prob: det.2, gate_rate_khz: det.3 },
            kind: if degenerate {
                ExperimentKind::DegeneratePostselected
            } else {
                [ExperimentKind::SignalIdler, ExperimentKind::SignalSplit, ExperimentKind::IdlerSplit][split_kind]
            },
            theta1: thetas.0,
            theta2: thetas.1,
            sweep,
            gates,
            seed,
        }
    }
}
