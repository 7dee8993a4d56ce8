//! Characteristic polynomial `l^3 + A2 l^2 + A1 l + A0` at coexistence
//! equilibria, eigenvalues and the stability classification.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibria::{lift, Equilibrium, EquilibriumKind};
use crate::error::{Error, Result};
use crate::model::{jacobian, ModelParams, State};
use crate::poly::cubic_roots;

/// Relative tolerance for the zero tests on `A0`, `A1` and `A0 - A1 A2`.
pub const ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub trace: f64,
    pub determinant: f64,
    /// `P(E2) = m E2 / (a + E2)`.
    pub p_bar: f64,
    /// Slope of the prey nullcline `M(E2)` with `E1` held fixed.
    pub k1: f64,
    /// Slope of the predator nullcline `U2(E2) = (r2 + c m E2/(a+E2)) / kappa2`.
    pub k2: f64,
    pub k_bar: f64,
}

impl CharCoeffs {
    /// Coefficients of `det(l I - J)` for an arbitrary 3x3 matrix.
    pub fn from_matrix(j: &Matrix3<f64>) -> Self {
        let minors = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)] + j[(0, 0)] * j[(2, 2)] - j[(0, 2)] * j[(2, 0)]
            + j[(1, 1)] * j[(2, 2)]
            - j[(1, 2)] * j[(2, 1)];
        let trace = j.trace();
        let determinant = j.determinant();
        Self {
            a0: -determinant,
            a1: minors,
            a2: -trace,
            trace,
            determinant,
            p_bar: f64::NAN,
            k1: f64::NAN,
            k2: f64::NAN,
            k_bar: f64::NAN,
        }
    }

    /// `A0 - A1 A2`; zero on the Hopf set.
    pub fn hopf_function(&self) -> f64 {
        self.a0 - self.a1 * self.a2
    }

    pub fn scale(&self) -> f64 {
        1.0 + self.a0.abs() + (self.a1 * self.a2).abs()
    }

    pub fn eigenvalues(&self) -> [Complex64; 3] {
        cubic_roots(self.a2, self.a1, self.a0)
    }
}

/// Structured coefficients at the state lifted from `E2` through the predator
/// nullcline, `(r1 E2/alpha, E2, U2(E2))`:
///
/// `A2 = alpha + kappa2 M - P k1`,
/// `A1 = alpha (kappa2 M - P k1 - r1) + P kappa2 M (k2 - k1)`,
/// `A0 = -alpha kappa2 M (P (k1 - k2) + r1)`.
pub fn structured_coeffs(p: &ModelParams, e2: f64) -> Result<CharCoeffs> {
    if !(e2 > 0.0) {
        return Err(Error::Precondition(format!("E2 must be positive, got {e2}")));
    }
    let s = p.a + e2;
    let mbar = lift(p, e2).m;
    let kappa_m = p.kappa2 * mbar;
    let pb = p.m * e2 / s;
    let k1 = -(2.0 * p.kappa1 * e2 + p.m * p.a * mbar / (s * s)) / pb;
    let k2 = p.c * p.m * p.a / (p.kappa2 * s * s);
    let a2 = p.alpha + kappa_m - pb * k1;
    let a1 = p.alpha * (kappa_m - pb * k1 - p.r1) + pb * kappa_m * (k2 - k1);
    let a0 = -p.alpha * kappa_m * (pb * (k1 - k2) + p.r1);
    Ok(CharCoeffs {
        a0,
        a1,
        a2,
        trace: -a2,
        determinant: -a0,
        p_bar: pb,
        k1,
        k2,
        k_bar: k2 - k1,
    })
}

/// Characteristic coefficients at a coexistence equilibrium.
pub fn char_coeffs(p: &ModelParams, eq: &Equilibrium) -> Result<CharCoeffs> {
    if eq.kind != EquilibriumKind::Coexistence {
        return Err(Error::KindMismatch(eq.kind.as_str()));
    }
    let j = jacobian(p, &eq.state)?;
    let mut cc = CharCoeffs::from_matrix(&j);
    let s = structured_coeffs(p, eq.state.e2)?;
    cc.p_bar = s.p_bar;
    cc.k1 = s.k1;
    cc.k2 = s.k2;
    cc.k_bar = s.k_bar;
    Ok(cc)
}

/// Coefficients from the Jacobian at any regular state.
pub fn coeffs_at_state(p: &ModelParams, s: &State) -> Result<CharCoeffs> {
    Ok(CharCoeffs::from_matrix(&jacobian(p, s)?))
}

/// Roots of the characteristic polynomial: real roots ascending, then the
/// complex pair with positive imaginary part first.
pub fn eigenvalues(p: &ModelParams, eq: &Equilibrium) -> Result<[Complex64; 3]> {
    Ok(coeffs_at_state(p, &eq.state)?.eigenvalues())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AntiSaddleKind {
    StableNode,
    StableFocus,
    UnstableNode,
    UnstableFocus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityLabel {
    AntiSaddle(AntiSaddleKind),
    HyperbolicSaddle,
    SaddleNodeCandidate,
    HopfCandidate,
    BtCandidate,
    Degenerate,
}

impl StabilityLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityLabel::AntiSaddle(AntiSaddleKind::StableNode) => "anti-saddle (stable node)",
            StabilityLabel::AntiSaddle(AntiSaddleKind::StableFocus) => "anti-saddle (stable focus)",
            StabilityLabel::AntiSaddle(AntiSaddleKind::UnstableNode) => "anti-saddle (unstable node)",
            StabilityLabel::AntiSaddle(AntiSaddleKind::UnstableFocus) => "anti-saddle (unstable focus)",
            StabilityLabel::HyperbolicSaddle => "hyperbolic saddle",
            StabilityLabel::SaddleNodeCandidate => "saddle-node candidate",
            StabilityLabel::HopfCandidate => "Hopf candidate",
            StabilityLabel::BtCandidate => "Bogdanov-Takens candidate",
            StabilityLabel::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub label: StabilityLabel,
    pub eigenvalues: [Complex64; 3],
}

/// Classifies the polynomial `lead l^3 + b2 l^2 + b1 l + b0`; any nonzero
/// leading coefficient is accepted, so both sign conventions agree.
pub fn classify_polynomial(lead: f64, b2: f64, b1: f64, b0: f64) -> StabilityVerdict {
    let (a2, a1, a0) = (b2 / lead, b1 / lead, b0 / lead);
    let eigenvalues = cubic_roots(a2, a1, a0);
    let scale = 1.0 + a0.abs() + (a1 * a2).abs();
    let tol = ZERO_TOL * scale;
    let a0_zero = a0.abs() < tol;
    let a1_zero = a1.abs() < tol;
    let hopf_zero = (a0 - a1 * a2).abs() < tol;

    let label = if a0_zero && a1_zero {
        if a2 > tol {
            StabilityLabel::BtCandidate
        } else {
            StabilityLabel::Degenerate
        }
    } else if a0_zero {
        if a2.abs() > tol {
            StabilityLabel::SaddleNodeCandidate
        } else {
            StabilityLabel::Degenerate
        }
    } else if hopf_zero {
        if a1 > 0.0 && a2 > 0.0 {
            StabilityLabel::HopfCandidate
        } else {
            StabilityLabel::Degenerate
        }
    } else if a0 < 0.0 {
        StabilityLabel::HyperbolicSaddle
    } else {
        let stable = a2 > 0.0 && a1 * a2 > a0;
        let focus = eigenvalues.iter().any(|z| z.im != 0.0);
        StabilityLabel::AntiSaddle(match (stable, focus) {
            (true, false) => AntiSaddleKind::StableNode,
            (true, true) => AntiSaddleKind::StableFocus,
            (false, false) => AntiSaddleKind::UnstableNode,
            (false, true) => AntiSaddleKind::UnstableFocus,
        })
    };
    StabilityVerdict { label, eigenvalues }
}

pub fn classify_coeffs(cc: &CharCoeffs) -> StabilityVerdict {
    classify_polynomial(1.0, cc.a2, cc.a1, cc.a0)
}

pub fn classify_equilibrium(p: &ModelParams, eq: &Equilibrium) -> Result<StabilityVerdict> {
    Ok(classify_coeffs(&coeffs_at_state(p, &eq.state)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::coexistence_equilibria;
    use approx::assert_relative_eq;

    fn p1() -> ModelParams {
        ModelParams::unit_scaled(60.0, 1.6, 51.57, 23.2197961461739, 0.026671).unwrap()
    }

    fn p1_eq() -> Equilibrium {
        Equilibrium::coexistence_at(&p1(), 0.528099623732648)
    }

    #[test]
    fn structured_matches_jacobian_at_p1() {
        let p = p1();
        let eq = p1_eq();
        let cc = char_coeffs(&p, &eq).unwrap();
        let s = structured_coeffs(&p, eq.state.e2).unwrap();
        assert_relative_eq!(cc.a2, s.a2, max_relative = 1e-12);
        assert_relative_eq!(cc.a1, s.a1, max_relative = 1e-10);
        assert_relative_eq!(cc.a0, s.a0, max_relative = 1e-10);
    }

    #[test]
    fn p1_is_hopf_candidate() {
        // the scenario kappa1 sits 6e-9 (relative) below the Hopf value
        let given = p1();
        let p = given.with(crate::ParamName::Kappa1, 23.219796285407595);
        for (q, label) in [
            (p, StabilityLabel::HopfCandidate),
            (given, StabilityLabel::AntiSaddle(AntiSaddleKind::StableFocus)),
        ] {
            let eq = coexistence_equilibria(&q)
                .into_iter()
                .find(|e| (e.state.e2 - 0.528099623732648).abs() < 1e-6)
                .unwrap();
            let v = classify_equilibrium(&q, &eq).unwrap();
            assert_eq!(v.label, label);
            assert!(v.eigenvalues[0].re < -100.0);
            assert!(v.eigenvalues[1].re.abs() < 1e-7);
            assert_relative_eq!(v.eigenvalues[1].im, 1.09824705073231, max_relative = 1e-6);
        }
    }

    #[test]
    fn kind_mismatch() {
        let e = Equilibrium::simple(State::ORIGIN, EquilibriumKind::Origin);
        assert!(matches!(char_coeffs(&p1(), &e), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn synthetic_saddle() {
        // (l+2)(l+1)(l-3) = l^3 + 0 l^2 - 7 l - 6
        let v = classify_polynomial(1.0, 0.0, -7.0, -6.0);
        assert_eq!(v.label, StabilityLabel::HyperbolicSaddle);
    }

    #[test]
    fn sign_convention_invariance() {
        for (b2, b1, b0) in [(0.0, -7.0, -6.0), (3.0, 4.0, 2.0), (2.0, 1.0, 2.0), (1.0, 0.0, 0.0)] {
            let a = classify_polynomial(1.0, b2, b1, b0);
            let b = classify_polynomial(-1.0, -b2, -b1, -b0);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn synthetic_labels() {
        // (l+2)(l^2+1)
        assert_eq!(
            classify_polynomial(1.0, 2.0, 1.0, 2.0).label,
            StabilityLabel::HopfCandidate
        );
        // l^2 (l+1)
        assert_eq!(
            classify_polynomial(1.0, 1.0, 0.0, 0.0).label,
            StabilityLabel::BtCandidate
        );
        // l (l+1)(l+2)
        assert_eq!(
            classify_polynomial(1.0, 3.0, 2.0, 0.0).label,
            StabilityLabel::SaddleNodeCandidate
        );
        // (l+1)(l+2)(l+3)
        assert_eq!(
            classify_polynomial(1.0, 6.0, 11.0, 6.0).label,
            StabilityLabel::AntiSaddle(AntiSaddleKind::StableNode)
        );
        // (l+10)((l-1)^2+1)
        assert_eq!(
            classify_polynomial(1.0, 8.0, -18.0, 20.0).label,
            StabilityLabel::AntiSaddle(AntiSaddleKind::UnstableFocus)
        );
    }
}
