//! Turns an [`ExperimentPlan`] into simulation runs.

use serde::Serialize;

use crate::config::{Angle, ErrorCode, ExperimentPlan, Location, SweepVariable};
use crate::detection::{run_gates, CountRecord, ExperimentKind, GateSetup, NoiseModel};
use crate::metrics::{
    car, car_power_sweep, inequality_runs, visibility_fit, zou_mandel_lhs, Car, FringeFit, FringePoint, InequalityResult,
    SweepContext, SweepPoint,
};
use crate::sagnac::output_state;
use crate::source::{mean_noise, mean_pairs_two_pumps, PlanKind};
use crate::stream::Substream;
use crate::Error;

/// Command-line values that replace plan values for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// May be zero, which makes the run fail with an empty-run error.
    pub gates: Option<u64>,
    pub classical_surrogate: bool,
}

impl Overrides {
    pub fn seed(&self, plan: &ExperimentPlan) -> u64 {
        self.seed.unwrap_or(plan.seed)
    }

    pub fn gates(&self, plan: &ExperimentPlan) -> u64 {
        self.gates.unwrap_or(plan.gates)
    }
}

const FRINGE_TAG: u64 = 0x46;
const SWEEP_TAG: u64 = 0x53;
const INEQUALITY_TAG: u64 = 0x49;

/// Gate setup with the first pump at `power_uw`; a second pump keeps its
/// ratio to the first.
pub fn gate_setup(plan: &ExperimentPlan, power_uw: f64, theta2: Angle, classical_surrogate: bool) -> Result<GateSetup, Error> {
    let loop_cfg = plan.loop_config();
    loop_cfg.validate()?;
    let (p1, p2) = plan.pump_powers();
    let (mu, noise_power) = match plan.channels.kind {
        PlanKind::NonDegenerate => (mean_pairs_two_pumps(&plan.source, power_uw, power_uw)?, power_uw),
        PlanKind::Degenerate => {
            let second = power_uw * p2 / p1;
            (mean_pairs_two_pumps(&plan.source, power_uw, second)?, power_uw + second)
        }
    };
    let mut analyzers = plan.analyzers();
    analyzers.theta2 = theta2.radians();
    Ok(GateSetup {
        state: output_state(&loop_cfg),
        mu,
        noise: NoiseModel {
            mean_photons: mean_noise(&plan.source, noise_power)?,
            polarized_fraction: plan.source.noise_polarized_fraction,
            polarization: plan.noise_polarization.radians(),
        },
        analyzers,
        detectors: plan.detectors,
        classical_surrogate,
    })
}

fn require_sweep(plan: &ExperimentPlan, variable: SweepVariable) -> Result<Vec<f64>, Error> {
    match &plan.sweep {
        Some(sw) if sw.variable == variable => Ok(sw.points()),
        _ => Err(Error::Config(crate::config::ConfigError {
            code: ErrorCode::Inconsistent,
            location: Location { line: 1, column: 1 },
            message: format!(
                "this command needs a [sweep] section with variable = {}",
                match variable {
                    SweepVariable::Theta2 => "theta2",
                    SweepVariable::Power => "power",
                }
            ),
        })),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeRun {
    pub points: Vec<FringePoint>,
    pub fit: FringeFit,
}

/// θ₂ scan at fixed θ₁, one substream per angle.
pub fn fringe_points(plan: &ExperimentPlan, overrides: &Overrides) -> Result<Vec<FringePoint>, Error> {
    let angles = require_sweep(plan, SweepVariable::Theta2)?;
    let gates = overrides.gates(plan);
    let root = Substream::new(overrides.seed(plan)).child(FRINGE_TAG);
    let kind = match plan.kind {
        ExperimentKind::DegeneratePostselected => ExperimentKind::DegeneratePostselected,
        _ => ExperimentKind::SignalIdler,
    };
    angles
        .iter()
        .enumerate()
        .map(|(i, &deg)| {
            let theta2 = Angle::from_degrees(deg).map(|(a, _)| a).unwrap_or_default();
            let setup = gate_setup(plan, plan.pump.avg_power_uw, theta2, overrides.classical_surrogate)?;
            let counts = run_gates(gates, &setup, kind, &root.child(i as u64))?;
            Ok(FringePoint { theta1: setup.analyzers.theta1, theta2: setup.analyzers.theta2, counts })
        })
        .collect()
}

pub fn fringe(plan: &ExperimentPlan, overrides: &Overrides) -> Result<FringeRun, Error> {
    let points = fringe_points(plan, overrides)?;
    let fit = visibility_fit(&points)?;
    Ok(FringeRun { points, fit })
}

pub fn car_sweep(plan: &ExperimentPlan, overrides: &Overrides) -> Result<Vec<SweepPoint>, Error> {
    let powers = require_sweep(plan, SweepVariable::Power)?;
    let setup = gate_setup(plan, plan.pump.avg_power_uw, plan.theta2, overrides.classical_surrogate)?;
    let (p1, p2) = plan.pump_powers();
    if plan.channels.kind == PlanKind::Degenerate {
        // Power sweeps use the signal–idler inequality, which needs two channels.
        return Err(Error::Config(crate::config::ConfigError {
            code: ErrorCode::Inconsistent,
            location: Location { line: 1, column: 1 },
            message: format!("car-sweep needs a non-degenerate plan (pumps {p1}/{p2} µW given)"),
        }));
    }
    let ctx = SweepContext {
        params: plan.source,
        plan: plan.channels.clone(),
        state: setup.state,
        analyzers: setup.analyzers,
        noise_polarization: setup.noise.polarization,
        detectors: plan.detectors,
        classical_surrogate: overrides.classical_surrogate,
    };
    let root = Substream::new(overrides.seed(plan)).child(SWEEP_TAG);
    Ok(car_power_sweep(&powers, &ctx, overrides.gates(plan), &root)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRun {
    pub power_uw: f64,
    pub signal_idler: CountRecord,
    pub signal_split: CountRecord,
    pub idler_split: CountRecord,
    pub car: Option<Car>,
    pub result: InequalityResult,
}

/// Signal–idler and both self-split runs at the plan's operating point.
pub fn inequality(plan: &ExperimentPlan, overrides: &Overrides) -> Result<InequalityRun, Error> {
    let setup = gate_setup(plan, plan.pump.avg_power_uw, plan.theta2, overrides.classical_surrogate)?;
    let root = Substream::new(overrides.seed(plan)).child(INEQUALITY_TAG);
    let (si, ss, is) = inequality_runs(&setup, overrides.gates(plan), &root)?;
    Ok(InequalityRun {
        power_uw: plan.pump.avg_power_uw,
        car: car(&si).ok(),
        result: zou_mandel_lhs(&si, &ss, &is)?,
        signal_idler: si,
        signal_split: ss,
        idler_split: is,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse, Sweep};
    use crate::detection::DetectionError;
    use crate::metrics::MetricsError;

    #[test]
    fn default_setup_matches_calibration() {
        let plan = ExperimentPlan::default();
        let s = gate_setup(&plan, 96.0, Angle::default(), false).unwrap();
        assert!((s.mu - 0.08).abs() < 1e-15);
        assert!((s.noise.mean_photons - 96.0 * 1e-5).abs() < 1e-18);
        let s2 = gate_setup(&plan, 192.0, Angle::default(), false).unwrap();
        assert!((s2.mu - 0.32).abs() < 1e-14);
    }

    #[test]
    fn degenerate_setup_uses_both_pumps() {
        let plan = parse("[pump]\navg_power_uw = 288\npump2_power_uw = 144\n[channels]\nkind = degenerate\n").unwrap().plan;
        let s = gate_setup(&plan, 288.0, Angle::default(), false).unwrap();
        assert!((s.mu - 0.06).abs() < 1e-15);
        let expected = plan.source.raman_coeff * 432.0 + plan.source.ase_floor;
        assert!((s.noise.mean_photons - expected).abs() < 1e-15);
    }

    #[test]
    fn commands_need_matching_sweeps() {
        let plan = ExperimentPlan::default();
        let o = Overrides::default();
        assert!(matches!(fringe(&plan, &o), Err(Error::Config(_))));
        assert!(matches!(car_sweep(&plan, &o), Err(Error::Config(_))));
    }

    #[test]
    fn zero_gates_is_an_empty_run() {
        let plan = ExperimentPlan::default();
        let o = Overrides { gates: Some(0), ..Overrides::default() };
        assert!(matches!(inequality(&plan, &o), Err(Error::Metrics(MetricsError::Detection(DetectionError::EmptyRun)))));
    }

    #[test]
    fn fringe_is_seed_deterministic() {
        let plan = ExperimentPlan {
            sweep: Some(Sweep { variable: SweepVariable::Theta2, start: 0.0, stop: 165.0, steps: 12 }),
            ..ExperimentPlan::default()
        };
        let o = Overrides { gates: Some(20_000), seed: Some(9), classical_surrogate: false };
        let a = fringe_points(&plan, &o).unwrap();
        let b = fringe_points(&plan, &o).unwrap();
        assert_eq!(a, b);
        let c = fringe_points(&plan, &Overrides { seed: Some(10), ..o }).unwrap();
        assert_ne!(a, c);
    }
}
