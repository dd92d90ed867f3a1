//! Figures of merit computed from count records.

use serde::Serialize;

use crate::detection::{
    run_gates, AnalyzerSetting, CountRecord, DetectionError, DetectorConfig, ExperimentKind, GateSetup, NoiseModel,
};
use crate::polarization::TwoPhotonState;
use crate::source::{mean_noise, mean_pairs, ChannelPlan, SourceError, SourceParams};
use crate::stream::Substream;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("CAR undefined: no accidental coincidences ({coincidences} coincidences)")]
    UndefinedCar { coincidences: u64 },
    #[error("records disagree on gate count: {0:?}")]
    GateMismatch([u64; 3]),
    #[error("ill-posed fit: {0}")]
    IllPosedFit(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Source(#[from] SourceError),
}

/// Coincidence-to-accidental ratio with its Poisson error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Car {
    pub ratio: f64,
    pub error: f64,
}

pub fn car(rec: &CountRecord) -> Result<Car, MetricsError> {
    let (c, a) = (rec.coincidences as f64, rec.accidentals_estimate as f64);
    if rec.accidentals_estimate == 0 {
        return Err(MetricsError::UndefinedCar { coincidences: rec.coincidences });
    }
    let ratio = c / a;
    let error = ((c.sqrt() / a).powi(2) + (c * a.sqrt() / (a * a)).powi(2)).sqrt();
    Ok(Car { ratio, error })
}

/// Left side of the classical coincidence inequality, per gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityResult {
    pub lhs: f64,
    pub sigma: f64,
    /// `lhs / sigma`, zero when no counts contribute.
    pub n_sigma_violation: f64,
}

/// `R_c(s,i) − R_ac(s,i) − 2·(R_c(s/2) − R_ac(s/2) + R_c(i/2) − R_ac(i/2))`
/// with all rates per gate. Positive values cannot come from two classical
/// light sources.
pub fn zou_mandel_lhs(si: &CountRecord, s_split: &CountRecord, i_split: &CountRecord) -> Result<InequalityResult, MetricsError> {
    let gates = [si.gates, s_split.gates, i_split.gates];
    if gates[0] != gates[1] || gates[0] != gates[2] || gates[0] == 0 {
        return Err(MetricsError::GateMismatch(gates));
    }
    let n = si.gates as f64;
    let c = |r: &CountRecord| r.coincidences as f64;
    let a = |r: &CountRecord| r.accidentals_estimate as f64;
    let lhs = (c(si) - a(si) - 2.0 * (c(s_split) - a(s_split) + c(i_split) - a(i_split))) / n;
    let var = c(si) + a(si) + 4.0 * (c(s_split) + a(s_split) + c(i_split) + a(i_split));
    let sigma = var.sqrt() / n;
    let n_sigma_violation = if sigma > 0.0 { lhs / sigma } else { 0.0 };
    Ok(InequalityResult { lhs, sigma, n_sigma_violation })
}

/// One analyzer setting of a fringe scan; angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringePoint {
    pub theta1: f64,
    pub theta2: f64,
    pub counts: CountRecord,
}

pub type FringeDataset = Vec<FringePoint>;

/// `C(θ₂) = A·cos²(θ₁ − θ₂ − phase) + B` fitted without accidental subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
    pub visibility: f64,
    /// Standard error of the visibility from the fit covariance.
    pub visibility_err: f64,
    pub chi2_per_dof: f64,
}

const MIN_FIT_POINTS: usize = 6;

/// Weighted least-squares fringe fit with weights `1/max(count, 1)`.
///
/// Writing `u = 2(θ₂ − θ₁)`, the model is linear in
/// `c0 + c1·cos u + c2·sin u` with `c0 = B + A/2`, `A/2 = √(c1² + c2²)`, so
/// the unconstrained optimum is closed-form. A negative offset is clamped to
/// zero and the amplitude/phase refitted.
pub fn visibility_fit(fringe: &[FringePoint]) -> Result<FringeFit, MetricsError> {
    let mut angles: Vec<f64> = fringe.iter().map(|p| p.theta2).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if angles.len() < MIN_FIT_POINTS {
        return Err(MetricsError::IllPosedFit(format!(
            "need at least {MIN_FIT_POINTS} distinct angles, got {}",
            angles.len()
        )));
    }
    let span = angles[angles.len() - 1] - angles[0];
    if span < std::f64::consts::PI - 1e-9 {
        return Err(MetricsError::IllPosedFit(format!("angles span {:.3} rad, need at least π", span)));
    }
    if fringe.iter().any(|p| !(p.theta1.is_finite() && p.theta2.is_finite())) {
        return Err(MetricsError::IllPosedFit("non-finite angle".into()));
    }

    let rows: Vec<([f64; 3], f64, f64)> = fringe
        .iter()
        .map(|p| {
            let u = 2.0 * (p.theta2 - p.theta1);
            let y = p.counts.coincidences as f64;
            ([1.0, u.cos(), u.sin()], y, 1.0 / y.max(1.0))
        })
        .collect();

    let mut normal = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (x, y, w) in &rows {
        for i in 0..3 {
            rhs[i] += w * x[i] * y;
            for j in 0..3 {
                normal[i][j] += w * x[i] * x[j];
            }
        }
    }
    let cov = invert3(&normal).ok_or_else(|| MetricsError::IllPosedFit("singular normal matrix".into()))?;
    let coef: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| cov[i][j] * rhs[j]).sum());
    let [c0, c1, c2] = coef;
    let r = c1.hypot(c2);

    // Error propagated from the unconstrained fit, also used when the offset
    // is clamped below.
    let visibility_err = if c0 > 0.0 && r > 0.0 {
        let grad = [-r / (c0 * c0), c1 / (r * c0), c2 / (r * c0)];
        let var: f64 = (0..3).map(|i| (0..3).map(|j| grad[i] * cov[i][j] * grad[j]).sum::<f64>()).sum();
        var.max(0.0).sqrt()
    } else {
        f64::INFINITY
    };
    let (amplitude, offset, phase, visibility) = if c0 - r >= 0.0 && c0 > 0.0 {
        (2.0 * r, c0 - r, phase_of(c1, c2), r / c0)
    } else {
        let (a, ph) = fit_zero_offset(&rows);
        (a, 0.0, ph, if a > 0.0 { 1.0 } else { 0.0 })
    };

    let dof = rows.len().saturating_sub(3).max(1) as f64;
    let chi2: f64 = rows
        .iter()
        .map(|(x, y, w)| {
            let u = x[2].atan2(x[1]);
            let model = amplitude * (0.5 * u - phase).cos().powi(2) + offset;
            w * (y - model).powi(2)
        })
        .sum();

    Ok(FringeFit {
        amplitude,
        offset,
        phase,
        visibility,
        visibility_err,
        chi2_per_dof: chi2 / dof,
    })
}

/// Phase in `(−π/2, π/2]` such that the fringe peaks at `θ₂ = θ₁ + phase`.
fn phase_of(c1: f64, c2: f64) -> f64 {
    // cos(u − 2φ) = cos u·cos 2φ + sin u·sin 2φ ⇒ 2φ = atan2(c2, c1)
    let mut ph = 0.5 * c2.atan2(c1);
    if ph <= -std::f64::consts::FRAC_PI_2 {
        ph += std::f64::consts::PI;
    }
    ph
}

/// Best fit of `A·cos²(½u − φ)` with `B = 0`: for a fixed phase A is linear,
/// so scan φ and refine with golden-section search.
fn fit_zero_offset(rows: &[([f64; 3], f64, f64)]) -> (f64, f64) {
    let eval = |ph: f64| -> (f64, f64) {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, y, w) in rows {
            let u = x[2].atan2(x[1]);
            let g = (0.5 * u - ph).cos().powi(2);
            sxy += w * g * y;
            sxx += w * g * g;
        }
        let a = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
        let chi: f64 = rows
            .iter()
            .map(|(x, y, w)| {
                let u = x[2].atan2(x[1]);
                w * (y - a * (0.5 * u - ph).cos().powi(2)).powi(2)
            })
            .sum();
        (chi, a)
    };
    let pi = std::f64::consts::PI;
    let steps = 360;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..steps {
        let ph = -pi / 2.0 + pi * k as f64 / steps as f64;
        let (chi, _) = eval(ph);
        if chi < best.0 {
            best = (chi, ph);
        }
    }
    let (mut lo, mut hi) = (best.1 - pi / steps as f64, best.1 + pi / steps as f64);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - gr * (hi - lo);
        let m2 = lo + gr * (hi - lo);
        if eval(m1).0 < eval(m2).0 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut ph = 0.5 * (lo + hi);
    if ph <= -pi / 2.0 {
        ph += pi;
    } else if ph > pi / 2.0 {
        ph -= pi;
    }
    (eval(ph).1, ph)
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m.iter().flatten().fold(0.0_f64, |a, b| a.max(b.abs()));
    if !(det.abs() > 1e-14 * scale.powi(3)) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *cell = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    Some(inv)
}

/// Fixed part of a CAR-versus-power scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepContext {
    pub params: SourceParams,
    pub plan: ChannelPlan,
    pub state: TwoPhotonState,
    pub analyzers: AnalyzerSetting,
    /// Polarization of the polarized noise fraction, radians.
    pub noise_polarization: f64,
    pub detectors: DetectorConfig,
    pub classical_surrogate: bool,
}

impl SweepContext {
    /// Gate setup at a given power per pump.
    pub fn setup_at(&self, power_uw: f64) -> Result<GateSetup, MetricsError> {
        Ok(GateSetup {
            state: self.state,
            mu: mean_pairs(&self.params, &self.plan, power_uw)?,
            noise: NoiseModel {
                mean_photons: mean_noise(&self.params, power_uw)?,
                polarized_fraction: self.params.noise_polarized_fraction,
                polarization: self.noise_polarization,
            },
            analyzers: self.analyzers,
            detectors: self.detectors,
            classical_surrogate: self.classical_surrogate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub power_uw: f64,
    pub signal_idler: CountRecord,
    pub signal_split: CountRecord,
    pub idler_split: CountRecord,
    /// `None` when the accidental estimate is zero.
    pub car: Option<Car>,
    pub inequality: InequalityResult,
}

/// The three runs behind one inequality evaluation, each on its own
/// substream derived from `stream`.
pub fn inequality_runs(
    setup: &GateSetup,
    gates: u64,
    stream: &Substream,
) -> Result<(CountRecord, CountRecord, CountRecord), MetricsError> {
    let si = run_gates(gates, setup, ExperimentKind::SignalIdler, &stream.child(ExperimentKind::SignalIdler.tag()))?;
    let ss = run_gates(gates, setup, ExperimentKind::SignalSplit, &stream.child(ExperimentKind::SignalSplit.tag()))?;
    let is = run_gates(gates, setup, ExperimentKind::IdlerSplit, &stream.child(ExperimentKind::IdlerSplit.tag()))?;
    Ok((si, ss, is))
}

/// Runs the signal–idler and both self-split experiments at each power.
pub fn car_power_sweep(
    powers: &[f64],
    ctx: &SweepContext,
    gates_per_point: u64,
    stream: &Substream,
) -> Result<Vec<SweepPoint>, MetricsError> {
    if powers.is_empty() {
        return Err(MetricsError::InvalidSweep("no powers".into()));
    }
    if powers.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(MetricsError::InvalidSweep("powers must be positive".into()));
    }
    if powers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MetricsError::InvalidSweep("powers must be strictly ascending".into()));
    }
    powers
        .iter()
        .enumerate()
        .map(|(i, &power_uw)| {
            let setup = ctx.setup_at(power_uw)?;
            let (si, ss, is) = inequality_runs(&setup, gates_per_point, &stream.child(i as u64))?;
            Ok(SweepPoint {
                power_uw,
                car: car(&si).ok(),
                inequality: zou_mandel_lhs(&si, &ss, &is)?,
                signal_idler: si,
                signal_split: ss,
                idler_split: is,
            })
        })
        .collect()
}
