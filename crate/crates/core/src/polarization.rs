//! Jones calculus for one- and two-photon polarization states.
//!
//! Single-photon states live in the {|H⟩, |V⟩} basis. Two-photon states use the
//! ordered product basis (HH, HV, VH, VV), where the first letter belongs to
//! photon 1 (the idler channel) and the second to photon 2 (the signal channel).
//!
//! Waveplate conventions fix global phases so results are bit-stable:
//!
//! * `hwp(θ)` is the real reflection `[[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`.
//! * `qwp(θ) = R(θ)·diag(1, i)·R(−θ)`, so `qwp(0) = diag(1, i)` and
//!   `qwp(θ)² = hwp(θ)` exactly.
//!
//! Analyzer angles are *detection* angles. A half-wave plate set to `θ/2`
//! followed by a horizontal polarizer projects onto `linear_projector(θ)`.

use std::fmt;

use num_complex::Complex64;

/// Probability amplitude.
pub type ComplexAmp = Complex64;

const ZERO: ComplexAmp = Complex64::new(0.0, 0.0);
const ONE: ComplexAmp = Complex64::new(1.0, 0.0);

/// Tolerance used when checking unitarity and normalization.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("photon index must be 1 or 2, got {0}")]
    InvalidPhotonIndex(u8),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("non-finite amplitude")]
    NonFinite,
}

/// Which photon of a pair an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Photon {
    /// Photon 1, the idler channel.
    Idler,
    /// Photon 2, the signal channel.
    Signal,
}

impl TryFrom<u8> for Photon {
    type Error = PolarizationError;

    fn try_from(index: u8) -> Result<Self, Self::Error> {
        match index {
            1 => Ok(Photon::Idler),
            2 => Ok(Photon::Signal),
            other => Err(PolarizationError::InvalidPhotonIndex(other)),
        }
    }
}

/// Single-photon polarization amplitudes on |H⟩ and |V⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub h: ComplexAmp,
    pub v: ComplexAmp,
}

impl JonesVector {
    pub const fn new(h: ComplexAmp, v: ComplexAmp) -> Self {
        Self { h, v }
    }

    pub fn real(h: f64, v: f64) -> Self {
        Self::new(ComplexAmp::new(h, 0.0), ComplexAmp::new(v, 0.0))
    }

    pub fn horizontal() -> Self {
        Self::new(ONE, ZERO)
    }

    pub fn vertical() -> Self {
        Self::new(ZERO, ONE)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &JonesVector) -> ComplexAmp {
        self.h.conj() * other.h + self.v.conj() * other.v
    }
}

/// A 2×2 operator on one photon's polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolUnitary {
    m: [[ComplexAmp; 2]; 2],
}

impl PolUnitary {
    /// Wraps a matrix without checking unitarity; see [`PolUnitary::unitarity_error`].
    pub const fn from_matrix(m: [[ComplexAmp; 2]; 2]) -> Self {
        Self { m }
    }

    fn from_real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::from_matrix([
            [ComplexAmp::new(a, 0.0), ComplexAmp::new(b, 0.0)],
            [ComplexAmp::new(c, 0.0), ComplexAmp::new(d, 0.0)],
        ])
    }

    pub fn identity() -> Self {
        Self::from_real(1.0, 0.0, 0.0, 1.0)
    }

    /// Real rotation `[[cos φ, −sin φ], [sin φ, cos φ]]`.
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::from_real(c, -s, s, c)
    }

    /// `diag(1, e^{iδ})`: retardance δ between the H and V axes.
    pub fn retarder(delta: f64) -> Self {
        Self::from_matrix([[ONE, ZERO], [ZERO, ComplexAmp::from_polar(1.0, delta)]])
    }

    pub fn matrix(&self) -> [[ComplexAmp; 2]; 2] {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        let m = self.m;
        Self::from_matrix([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    /// Matrix product `self · rhs` (apply `rhs` first).
    pub fn then_after(&self, rhs: &PolUnitary) -> Self {
        let (a, b) = (self.m, rhs.m);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self::from_matrix(out)
    }

    pub fn apply(&self, x: &JonesVector) -> JonesVector {
        JonesVector::new(
            self.m[0][0] * x.h + self.m[0][1] * x.v,
            self.m[1][0] * x.h + self.m[1][1] * x.v,
        )
    }

    /// Largest elementwise deviation of `U·U†` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.then_after(&self.adjoint()).m;
        let mut worst = 0.0_f64;
        for (i, row) in p.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((cell - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() <= UNIT_TOL
    }
}

impl Default for PolUnitary {
    fn default() -> Self {
        Self::identity()
    }
}

/// Half-wave plate with its fast axis at `theta`.
pub fn hwp(theta: f64) -> PolUnitary {
    let (s, c) = (2.0 * theta).sin_cos();
    PolUnitary::from_real(c, s, s, -c)
}

/// Quarter-wave plate with its fast axis at `theta`; `qwp(0) = diag(1, i)`.
pub fn qwp(theta: f64) -> PolUnitary {
    PolUnitary::rotation(theta)
        .then_after(&PolUnitary::retarder(std::f64::consts::FRAC_PI_2))
        .then_after(&PolUnitary::rotation(-theta))
}

/// Linear analyzer state `(cos θ, sin θ)` for detection angle `theta`.
pub fn linear_projector(theta: f64) -> JonesVector {
    let (s, c) = theta.sin_cos();
    JonesVector::real(c, s)
}

/// Pure two-photon polarization state over (HH, HV, VH, VV).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    amps: [ComplexAmp; 4],
}

impl TwoPhotonState {
    pub const fn from_amps(amps: [ComplexAmp; 4]) -> Self {
        Self { amps }
    }

    /// Builds a state and rescales it to unit norm.
    pub fn normalized(amps: [ComplexAmp; 4]) -> Result<Self, PolarizationError> {
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(PolarizationError::NonFinite);
        }
        let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(PolarizationError::ZeroNorm);
        }
        Ok(Self::from_amps(amps.map(|a| a / n)))
    }

    pub fn product(first: &JonesVector, second: &JonesVector) -> Self {
        Self::from_amps([
            first.h * second.h,
            first.h * second.v,
            first.v * second.h,
            first.v * second.v,
        ])
    }

    /// |HH⟩, |HV⟩, |VH⟩ or |VV⟩ by index 0..4.
    pub fn basis(index: usize) -> Self {
        let mut amps = [ZERO; 4];
        amps[index] = ONE;
        Self::from_amps(amps)
    }

    pub fn hh() -> Self {
        Self::basis(0)
    }

    pub fn hv() -> Self {
        Self::basis(1)
    }

    pub fn vh() -> Self {
        Self::basis(2)
    }

    pub fn vv() -> Self {
        Self::basis(3)
    }

    pub fn amps(&self) -> [ComplexAmp; 4] {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= UNIT_TOL
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &TwoPhotonState) -> ComplexAmp {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |⟨self|other⟩|², which ignores global phase.
    pub fn fidelity(&self, other: &TwoPhotonState) -> f64 {
        self.inner(other).norm_sqr()
    }
}

impl fmt::Display for TwoPhotonState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels = ["HH", "HV", "VH", "VV"];
        let mut first = true;
        for (a, l) in self.amps.iter().zip(labels) {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i)|{l}⟩", a.re, a.im)?;
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// `(|HH⟩ + |VV⟩)/√2`.
pub fn bell_phi_plus() -> TwoPhotonState {
    let a = ComplexAmp::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    TwoPhotonState::from_amps([a, ZERO, ZERO, a])
}

/// `U ⊗ I` or `I ⊗ U` depending on `which`.
pub fn apply_single(u: &PolUnitary, which: Photon, s: &TwoPhotonState) -> TwoPhotonState {
    match which {
        Photon::Idler => apply_both(u, &PolUnitary::identity(), s),
        Photon::Signal => apply_both(&PolUnitary::identity(), u, s),
    }
}

/// `(U₁ ⊗ U₂)|s⟩`.
pub fn apply_both(u1: &PolUnitary, u2: &PolUnitary, s: &TwoPhotonState) -> TwoPhotonState {
    let (a, b, c) = (u1.matrix(), u2.matrix(), s.amps());
    let mut out = [ZERO; 4];
    for i1 in 0..2 {
        for i2 in 0..2 {
            let mut acc = ZERO;
            for j1 in 0..2 {
                for j2 in 0..2 {
                    acc += a[i1][j1] * b[i2][j2] * c[2 * j1 + j2];
                }
            }
            out[2 * i1 + i2] = acc;
        }
    }
    TwoPhotonState::from_amps(out)
}

/// Joint probability that photon 1 passes analyzer `theta1` and photon 2
/// passes analyzer `theta2`: |⟨θ₁|⟨θ₂|s⟩|².
pub fn coincidence_prob(s: &TwoPhotonState, theta1: f64, theta2: f64) -> f64 {
    let (p1, p2) = (linear_projector(theta1), linear_projector(theta2));
    let bra = TwoPhotonState::product(&p1, &p2);
    bra.inner(s).norm_sqr().clamp(0.0, 1.0)
}

/// Probability that one photon passes its analyzer regardless of the other.
pub fn marginal_pass_prob(s: &TwoPhotonState, which: Photon, theta: f64) -> f64 {
    let p = linear_projector(theta);
    let a = s.amps();
    let total: f64 = match which {
        // Σ over photon 2's basis of |⟨θ|₁ ⊗ ⟨k|₂ s⟩|²
        Photon::Idler => (0..2).map(|k| (p.h * a[k] + p.v * a[2 + k]).norm_sqr()).sum(),
        Photon::Signal => (0..2).map(|k| (p.h * a[2 * k] + p.v * a[2 * k + 1]).norm_sqr()).sum(),
    };
    total.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

    fn close(a: ComplexAmp, b: ComplexAmp) -> bool {
        (a - b).norm() < 1e-12
    }

    fn mat_close(u: &PolUnitary, m: [[f64; 2]; 2]) -> bool {
        let got = u.matrix();
        (0..2).all(|i| (0..2).all(|j| close(got[i][j], ComplexAmp::new(m[i][j], 0.0))))
    }

    #[test]
    fn hwp_axis_aligned_and_swap() {
        assert!(mat_close(&hwp(0.0), [[1.0, 0.0], [0.0, -1.0]]));
        assert!(mat_close(&hwp(FRAC_PI_4), [[0.0, 1.0], [1.0, 0.0]]));
        let d = hwp(FRAC_PI_8).apply(&JonesVector::horizontal());
        assert!(close(d.h, ComplexAmp::new(FRAC_1_SQRT_2, 0.0)));
        assert!(close(d.v, ComplexAmp::new(FRAC_1_SQRT_2, 0.0)));
    }

    #[test]
    fn qwp_anchor_and_double_pass() {
        let q = qwp(0.0).matrix();
        assert!(close(q[0][0], ONE) && close(q[1][1], ComplexAmp::new(0.0, 1.0)));
        assert!(close(q[0][1], ZERO) && close(q[1][0], ZERO));
        let twice = qwp(0.0).then_after(&qwp(0.0));
        assert!(mat_close(&twice, [[1.0, 0.0], [0.0, -1.0]]));
    }

    #[test]
    fn qwp_at_45_makes_circular_light() {
        // Reference matrix written out by hand: R(π/4)·diag(1,i)·R(−π/4)
        // = ½[[1+i, 1−i], [1−i, 1+i]].
        let half = 0.5;
        let reference = [
            [ComplexAmp::new(half, half), ComplexAmp::new(half, -half)],
            [ComplexAmp::new(half, -half), ComplexAmp::new(half, half)],
        ];
        let got = qwp(FRAC_PI_4).matrix();
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(got[i][j], reference[i][j]));
            }
        }
        let out = qwp(FRAC_PI_4).apply(&JonesVector::horizontal());
        assert!((out.h.norm_sqr() - 0.5).abs() < 1e-12);
        assert!((out.v.norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn projectors() {
        assert_eq!(linear_projector(0.0), JonesVector::real(1.0, 0.0));
        let v = linear_projector(FRAC_PI_2);
        assert!(v.h.norm() < 1e-15 && close(v.v, ONE));
        let d = linear_projector(FRAC_PI_4);
        assert!(close(d.h, ComplexAmp::new(FRAC_1_SQRT_2, 0.0)));
        assert!(close(d.v, ComplexAmp::new(FRAC_1_SQRT_2, 0.0)));
    }

    #[test]
    fn photon_index_validation() {
        assert_eq!(Photon::try_from(1), Ok(Photon::Idler));
        assert_eq!(Photon::try_from(2), Ok(Photon::Signal));
        assert_eq!(Photon::try_from(3), Err(PolarizationError::InvalidPhotonIndex(3)));
        assert_eq!(Photon::try_from(0), Err(PolarizationError::InvalidPhotonIndex(0)));
    }

    #[test]
    fn apply_single_examples() {
        let s = bell_phi_plus();
        assert_eq!(apply_single(&PolUnitary::identity(), Photon::Idler, &s), s);
        let swapped = apply_single(&hwp(FRAC_PI_4), Photon::Idler, &TwoPhotonState::hh());
        assert!((swapped.fidelity(&TwoPhotonState::vh()) - 1.0).abs() < 1e-12);
        let rotated = apply_single(&hwp(FRAC_PI_8), Photon::Signal, &TwoPhotonState::hh());
        let a = ComplexAmp::new(FRAC_1_SQRT_2, 0.0);
        let expected = TwoPhotonState::from_amps([a, a, ZERO, ZERO]);
        for (x, y) in rotated.amps().iter().zip(expected.amps().iter()) {
            assert!(close(*x, *y));
        }
    }

    /// Brute-force 4×4 Kronecker product, independent of `apply_both`.
    fn kron_apply(u1: &PolUnitary, u2: &PolUnitary, s: &TwoPhotonState) -> TwoPhotonState {
        let (a, b) = (u1.matrix(), u2.matrix());
        let mut k = [[ZERO; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                k[r][c] = a[r / 2][c / 2] * b[r % 2][c % 2];
            }
        }
        let x = s.amps();
        let mut out = [ZERO; 4];
        for r in 0..4 {
            out[r] = (0..4).map(|c| k[r][c] * x[c]).sum();
        }
        TwoPhotonState::from_amps(out)
    }

    #[test]
    fn apply_both_examples() {
        let s = bell_phi_plus();
        assert_eq!(apply_both(&PolUnitary::identity(), &PolUnitary::identity(), &s), s);
        let h = hwp(FRAC_PI_8);
        let brute = kron_apply(&h, &h, &s);
        assert!((brute.fidelity(&s) - 1.0).abs() < 1e-12);
        assert!((apply_both(&h, &h, &s).fidelity(&s) - 1.0).abs() < 1e-12);
        let swap = hwp(FRAC_PI_4);
        let out = apply_both(&swap, &swap, &TwoPhotonState::hv());
        assert!((out.fidelity(&TwoPhotonState::vh()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_both_matches_kronecker_product() {
        let u1 = qwp(0.3).then_after(&hwp(1.1));
        let u2 = PolUnitary::rotation(-0.7).then_after(&PolUnitary::retarder(0.4));
        let s = TwoPhotonState::normalized([
            ComplexAmp::new(0.3, 0.1),
            ComplexAmp::new(-0.2, 0.5),
            ComplexAmp::new(0.0, -0.4),
            ComplexAmp::new(0.6, 0.2),
        ])
        .unwrap();
        let a = apply_both(&u1, &u2, &s).amps();
        let b = kron_apply(&u1, &u2, &s).amps();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(close(*x, *y));
        }
    }

    #[test]
    fn bell_state_and_correlations() {
        let s = bell_phi_plus();
        assert!((s.amps()[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s.amps()[3].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        assert!(coincidence_prob(&s, 0.0, FRAC_PI_2) < 1e-30);
        assert!((coincidence_prob(&s, 0.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((coincidence_prob(&s, FRAC_PI_8, 3.0 * FRAC_PI_8) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn marginals_of_phi_plus_are_flat() {
        let s = bell_phi_plus();
        for k in 0..36 {
            let t = k as f64 * PI / 18.0;
            assert!((marginal_pass_prob(&s, Photon::Idler, t) - 0.5).abs() < 1e-12);
            assert!((marginal_pass_prob(&s, Photon::Signal, t) - 0.5).abs() < 1e-12);
        }
        let hv = TwoPhotonState::hv();
        assert!((marginal_pass_prob(&hv, Photon::Idler, 0.0) - 1.0).abs() < 1e-15);
        assert!(marginal_pass_prob(&hv, Photon::Signal, 0.0) < 1e-15);
    }

    #[test]
    fn normalization_errors() {
        assert_eq!(TwoPhotonState::normalized([ZERO; 4]), Err(PolarizationError::ZeroNorm));
        let bad = [ComplexAmp::new(f64::NAN, 0.0), ZERO, ZERO, ZERO];
        assert_eq!(TwoPhotonState::normalized(bad), Err(PolarizationError::NonFinite));
    }
}
