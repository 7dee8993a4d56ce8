//! Boundary and coexistence equilibria, the coexistence cubic `U(E2)` and the
//! threshold curves that split the `(kappa1, kappa2)` plane by the number of
//! coexistence equilibria.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{jacobian_unchecked, vector_field_unchecked, ModelParams, State};
use crate::poly::{cubic_real_roots, quadratic_roots, QuadraticRoots};

/// Two cubic roots merge when `|r_i - r_j| < MERGE_TOL * max(1, |r_i|)`.
pub const MERGE_TOL: f64 = 1e-7;

/// Smallest `E2` counted as a coexistence state; `E2 = 0` is the pest-free point.
pub const MIN_COEXISTENCE_E2: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Origin,
    PredatorExtinction,
    PestFree,
    Coexistence,
}

impl EquilibriumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EquilibriumKind::Origin => "origin",
            EquilibriumKind::PredatorExtinction => "predator-extinction",
            EquilibriumKind::PestFree => "pest-free",
            EquilibriumKind::Coexistence => "coexistence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: State,
    pub kind: EquilibriumKind,
    pub multiplicity: usize,
}

impl Equilibrium {
    pub fn simple(state: State, kind: EquilibriumKind) -> Self {
        Self {
            state,
            kind,
            multiplicity: 1,
        }
    }

    /// A coexistence equilibrium lifted from its `E2` coordinate, without
    /// checking that it solves the cubic.
    pub fn coexistence_at(p: &ModelParams, e2: f64) -> Self {
        Self::simple(lift(p, e2), EquilibriumKind::Coexistence)
    }
}

/// Origin, predator-extinction point `(p1 K1, K1, 0)` and pest-free point
/// `(0, 0, K2)`, with `K1 = r1/kappa1`, `p1 = r1/alpha`, `K2 = r2/kappa2`.
pub fn boundary_equilibria(p: &ModelParams) -> Vec<Equilibrium> {
    let k1 = p.r1 / p.kappa1;
    let p1 = p.r1 / p.alpha;
    let k2 = p.r2 / p.kappa2;
    vec![
        Equilibrium::simple(State::ORIGIN, EquilibriumKind::Origin),
        Equilibrium::simple(State::new(p1 * k1, k1, 0.0), EquilibriumKind::PredatorExtinction),
        Equilibrium::simple(State::new(0.0, 0.0, k2), EquilibriumKind::PestFree),
    ]
}

/// Coefficients `(c3, c2, c1, c0)` of the monic cubic whose positive roots are
/// the `E2` coordinates of coexistence equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoexistenceCubic {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CoexistenceCubic {
    pub fn eval(&self, e2: f64) -> f64 {
        ((self.c3 * e2 + self.c2) * e2 + self.c1) * e2 + self.c0
    }

    pub fn derivative(&self, e2: f64) -> f64 {
        (3.0 * self.c3 * e2 + 2.0 * self.c2) * e2 + self.c1
    }

    pub fn second_derivative(&self, e2: f64) -> f64 {
        6.0 * self.c3 * e2 + 2.0 * self.c2
    }

    /// Standard cubic discriminant (positive for three distinct real roots).
    pub fn discriminant(&self) -> f64 {
        let (b, c, d) = (self.c2, self.c1, self.c0);
        18.0 * b * c * d - 4.0 * b * b * b * d + b * b * c * c - 4.0 * c * c * c - 27.0 * d * d
    }
}

pub fn coexistence_cubic(p: &ModelParams) -> CoexistenceCubic {
    let ratio = p.r1 / p.kappa1;
    let kk = p.kappa1 * p.kappa2;
    CoexistenceCubic {
        c3: 1.0,
        c2: -(ratio - 2.0 * p.a),
        c1: p.a * p.a - 2.0 * p.a * ratio + p.m * (p.c * p.m + p.r2) / kk,
        c0: (p.a * p.a * p.r1 / kk) * (p.m * p.r2 / (p.a * p.r1) - p.kappa2),
    }
}

/// `(p1 E2, E2, U2(E2))` with `U2(E2) = (r2 + c m E2/(a+E2)) / kappa2`.
pub fn lift(p: &ModelParams, e2: f64) -> State {
    let m = (p.r2 + p.c * p.m * e2 / (p.a + e2)) / p.kappa2;
    State::new(p.r1 * e2 / p.alpha, e2, m)
}

/// Positive roots of the cubic lifted to coexistence equilibria, sorted by
/// `E2` ascending (the usual labels S1 < S2 < S3).
pub fn coexistence_equilibria(p: &ModelParams) -> Vec<Equilibrium> {
    let cubic = coexistence_cubic(p);
    cubic_real_roots(cubic.c2, cubic.c1, cubic.c0, MERGE_TOL)
        .into_iter()
        .filter(|r| r.value > MIN_COEXISTENCE_E2)
        .filter_map(|r| {
            let mut state = lift(p, r.value);
            if r.multiplicity == 1 {
                state = newton_polish(p, state);
            }
            (state.m > 0.0 && state.e1 > 0.0).then_some(Equilibrium {
                state,
                kind: EquilibriumKind::Coexistence,
                multiplicity: r.multiplicity,
            })
        })
        .collect()
}

/// One or two Newton steps on the full vector field; keeps the input if the
/// step does not reduce the residual.
pub fn newton_polish(p: &ModelParams, s: State) -> State {
    let mut x = s.to_vector();
    let mut res = vector_field_unchecked(p, &x).amax();
    for _ in 0..2 {
        let j = jacobian_unchecked(p, &x);
        let Some(step) = j.lu().solve(&vector_field_unchecked(p, &x)) else {
            break;
        };
        let next: Vector3<f64> = x - step;
        let r = vector_field_unchecked(p, &next).amax();
        if r < res {
            x = next;
            res = r;
        } else {
            break;
        }
    }
    State::from_vector(&x)
}

/// All equilibria: boundary points first, then coexistence points.
pub fn all_equilibria(p: &ModelParams) -> Vec<Equilibrium> {
    let mut v = boundary_equilibria(p);
    v.extend(coexistence_equilibria(p));
    v
}

/// Named thresholds in the `(kappa1, kappa2)` plane for fixed `(r1, r2, a, c, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    /// `r2 m / (r1 a)`: `E2 = 0` solves the cubic.
    pub kappa2_bar: f64,
    /// `r1 (r2 - c m) / (r2 a)`, defined only for `r2 > c m`.
    pub kappa1_bar: Option<f64>,
    /// `r1 delta1 / (a delta2)`, present only for `delta2 > 0`.
    pub kappa1_star: Option<f64>,
    /// `delta1^2 delta2 / (27 r1 a c^2 m)`, present only for `delta2 > 0`.
    pub kappa2_star: Option<f64>,
    /// Smaller root of `a2 kappa2^2 + a1 kappa2 + a0` at the current kappa1.
    pub kappa2_minus: Option<f64>,
    /// Larger root of the same quadratic.
    pub kappa2_plus: Option<f64>,
    pub delta1: f64,
    pub delta2: f64,
}

/// Coefficients of the quadratic factor of the discriminant in `kappa2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminantQuadratic {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl DiscriminantQuadratic {
    pub fn new(p: &ModelParams) -> Self {
        let (a, c, m, r1, r2, k1) = (p.a, p.c, p.m, p.r1, p.r2, p.kappa1);
        let d1 = p.delta1();
        Self {
            a2: 4.0 * a * c * (a * k1 + r1).powi(3),
            a1: a * a * (8.0 * c * c * m * m - 20.0 * c * m * r2 - r2 * r2) * k1 * k1
                - 2.0 * a * r1 * d1 * (10.0 * c * m + r2) * k1
                - r1 * r1 * d1 * d1,
            a0: 4.0 * m * d1.powi(3) * k1,
        }
    }

    pub fn eval(&self, kappa2: f64) -> f64 {
        (self.a2 * kappa2 + self.a1) * kappa2 + self.a0
    }

    fn scale(&self, kappa2: f64) -> f64 {
        (self.a2 * kappa2 * kappa2).abs() + (self.a1 * kappa2).abs() + self.a0.abs()
    }
}

/// `Delta0(kappa2)`; this equals minus the standard cubic discriminant, so it
/// is negative exactly when there are three distinct real roots.
pub fn delta0(p: &ModelParams) -> f64 {
    let q = DiscriminantQuadratic::new(p);
    p.m * p.m / (p.kappa1.powi(4) * p.kappa2.powi(3)) * q.eval(p.kappa2)
}

/// `Delta1(kappa1)`: discriminant (up to a positive factor) of the quadratic
/// factor of `Delta0` in `kappa2`.
pub fn delta1_of_kappa1(p: &ModelParams) -> f64 {
    let d1 = p.delta1();
    let d2 = p.delta2();
    (p.a * p.kappa1 * p.r2 + p.r1 * d1) * (p.r1 * d1 - p.a * p.kappa1 * d2).powi(3)
}

pub fn thresholds(p: &ModelParams) -> ThresholdSet {
    let d1 = p.delta1();
    let d2 = p.delta2();
    let cm = p.c * p.m;
    let (kappa1_star, kappa2_star) = if d2 > 0.0 {
        (
            Some(p.r1 * d1 / (p.a * d2)),
            Some(d1 * d1 * d2 / (27.0 * p.r1 * p.a * p.c * p.c * p.m)),
        )
    } else {
        (None, None)
    };
    let q = DiscriminantQuadratic::new(p);
    let (kappa2_minus, kappa2_plus) = match quadratic_roots(q.a2, q.a1, q.a0, 0.0) {
        QuadraticRoots::Two(lo, hi) => (Some(lo), Some(hi)),
        QuadraticRoots::Double(x) => (Some(x), Some(x)),
        _ => (None, None),
    };
    ThresholdSet {
        kappa2_bar: p.r2 * p.m / (p.r1 * p.a),
        kappa1_bar: (p.r2 > cm).then(|| p.r1 * (p.r2 - cm) / (p.r2 * p.a)),
        kappa1_star,
        kappa2_star,
        kappa2_minus,
        kappa2_plus,
        delta1: d1,
        delta2: d2,
    }
}

/// Position of `(kappa1, kappa2)` relative to the threshold curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    V0,
    V1,
    V2,
    V3,
    /// On `kappa2 = kappa2_bar`.
    C0,
    /// On the lower discriminant curve.
    CDeltaMinus,
    /// On the upper discriminant curve.
    CDeltaPlus,
    /// Intersection of `C0` with the discriminant curve at `kappa1_bar`.
    CBar,
    /// The cusp `(kappa1*, kappa2*)`.
    CStar,
}

impl Region {
    /// Number of coexistence equilibria for open regions.
    pub fn coexistence_count(self) -> Option<usize> {
        match self {
            Region::V0 => Some(0),
            Region::V1 => Some(1),
            Region::V2 => Some(2),
            Region::V3 => Some(3),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::V0 => "V0",
            Region::V1 => "V1",
            Region::V2 => "V2",
            Region::V3 => "V3",
            Region::C0 => "C0",
            Region::CDeltaMinus => "C_delta-",
            Region::CDeltaPlus => "C_delta+",
            Region::CBar => "C_bar",
            Region::CStar => "C*",
        }
    }
}

/// Relative width of the boundary band used by [`classify_region`].
pub const REGION_TOL: f64 = 1e-9;

/// Classifies `(kappa1, kappa2)` from the discriminant sign and the coefficient
/// signs of the cubic, without computing its roots.
pub fn classify_region(p: &ModelParams) -> Region {
    classify_region_with_tol(p, REGION_TOL)
}

pub fn classify_region_with_tol(p: &ModelParams, tol: f64) -> Region {
    let th = thresholds(p);
    let cubic = coexistence_cubic(p);
    let q = DiscriminantQuadratic::new(p);

    let close = |x: f64, y: f64| (x - y).abs() <= tol.sqrt() * y.abs().max(f64::MIN_POSITIVE);
    if let (Some(k1s), Some(k2s)) = (th.kappa1_star, th.kappa2_star) {
        if close(p.kappa1, k1s) && close(p.kappa2, k2s) {
            return Region::CStar;
        }
    }

    let disc = q.eval(p.kappa2);
    let on_delta = disc.abs() <= tol * q.scale(p.kappa2);
    let on_c0 = (p.kappa2 - th.kappa2_bar).abs() <= tol * th.kappa2_bar;
    if on_c0 && on_delta {
        return Region::CBar;
    }
    if on_c0 {
        return Region::C0;
    }
    if on_delta {
        let mid = -q.a1 / (2.0 * q.a2);
        return if p.kappa2 <= mid {
            Region::CDeltaMinus
        } else {
            Region::CDeltaPlus
        };
    }

    let count = if disc < 0.0 {
        // All roots real: Descartes' rule is exact.
        let coeffs = [cubic.c3, cubic.c2, cubic.c1, cubic.c0];
        coeffs.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
    } else if cubic.c0 < 0.0 {
        1
    } else {
        0
    };
    match count {
        0 => Region::V0,
        1 => Region::V1,
        2 => Region::V2,
        _ => Region::V3,
    }
}

/// The triple-root configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleRoot {
    pub e2_star: f64,
    pub kappa1_star: f64,
    pub kappa2_star: f64,
    /// `E2* > 0`.
    pub feasible: bool,
}

/// `E2* = a(-1 + 3cm/delta1)` with the matching `(kappa1*, kappa2*)`; absent
/// unless `0 < r2 < 2cm`.
pub fn s123_point(p: &ModelParams) -> Option<TripleRoot> {
    let cm = p.c * p.m;
    if !(p.r2 > 0.0 && p.r2 < 2.0 * cm) {
        return None;
    }
    let d1 = p.delta1();
    let d2 = p.delta2();
    let e2_star = p.a * (-1.0 + 3.0 * cm / d1);
    Some(TripleRoot {
        e2_star,
        kappa1_star: p.r1 * d1 / (p.a * d2),
        kappa2_star: d1 * d1 * d2 / (27.0 * p.a * p.c * p.c * p.m * p.r1),
        feasible: e2_star > 0.0,
    })
}

/// Equilibrium residual helper used by tests and continuation.
pub fn residual(p: &ModelParams, s: &State) -> Result<f64> {
    Ok(crate::model::vector_field(p, s)?.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vector_field;
    use approx::assert_relative_eq;

    fn p1() -> ModelParams {
        ModelParams::unit_scaled(60.0, 1.6, 51.57, 23.2197961461739, 0.026671).unwrap()
    }

    #[test]
    fn pest_free_capacity() {
        let b = boundary_equilibria(&p1());
        assert_eq!(b[2].kind, EquilibriumKind::PestFree);
        assert_relative_eq!(b[2].state.m, 1.6 / 0.026671);
        let k1 = 60.0 / 23.2197961461739;
        assert_relative_eq!(b[1].state.e2, k1);
        assert_relative_eq!(b[1].state.e1, 60.0 / 51.57 * k1);
    }

    #[test]
    fn boundary_points_are_fixed() {
        let p = ModelParams::new(3.0, 0.7, 2.0, 1.5, 0.3, 1.2, 0.8, 2.5).unwrap();
        for e in boundary_equilibria(&p) {
            assert!(vector_field(&p, &e.state).unwrap().amax() < 1e-12);
        }
    }

    #[test]
    fn reference_root_of_cubic() {
        let u = coexistence_cubic(&p1());
        assert!(u.eval(0.528099623732648).abs() < 1e-6);
    }

    #[test]
    fn pest_free_root_on_c0() {
        let mut p = p1();
        p.kappa2 = p.r2 * p.m / (p.r1 * p.a);
        let u = coexistence_cubic(&p);
        assert!(u.c0.abs() < 1e-14 * u.c1.abs());
    }

    #[test]
    fn p1_has_reference_equilibrium() {
        let eqs = coexistence_equilibria(&p1());
        let want = [0.614426554662767, 0.528099623732648, 72.9478611523887];
        assert!(eqs.iter().any(|e| {
            let s = e.state.to_vector();
            (0..3).all(|i| (s[i] - want[i]).abs() < 1e-9 * want[i])
        }));
    }

    #[test]
    fn no_coexistence_beyond_kappa1_bar_on_c0() {
        // needs r2 > cm
        let mut p = ModelParams::unit_scaled(60.0, 1.6, 51.57, 30.0, 0.02).unwrap();
        let th = thresholds(&p);
        let k1bar = th.kappa1_bar.unwrap();
        p.kappa1 = 1.5 * k1bar;
        p.kappa2 = thresholds(&p).kappa2_bar;
        assert!(coexistence_equilibria(&p).is_empty());
        // below kappa1_bar: one positive root next to the pest-free root E2 = 0
        p.kappa1 = 0.5 * k1bar;
        assert_eq!(coexistence_equilibria(&p).len(), 1);
        let u = coexistence_cubic(&p);
        let roots = cubic_real_roots(u.c2, u.c1, u.c0, MERGE_TOL);
        assert_eq!(roots.iter().filter(|r| r.value > -1e-12).count(), 2);
    }

    #[test]
    fn kappa1_bar_needs_r2_above_cm() {
        let p = ModelParams::unit_scaled(60.0, 0.9, 51.57, 20.0, 0.02).unwrap();
        assert!(thresholds(&p).kappa1_bar.is_none());
    }

    #[test]
    fn kappa2_bar_value() {
        assert_relative_eq!(thresholds(&p1()).kappa2_bar, 1.6 / 60.0);
    }

    #[test]
    fn star_thresholds_absent_for_large_r2() {
        let p = ModelParams::unit_scaled(60.0, 8.0, 51.57, 20.0, 0.02).unwrap();
        let th = thresholds(&p);
        assert!(th.kappa1_star.is_none() && th.kappa2_star.is_none());
    }

    #[test]
    fn discriminant_roots_vanish() {
        let base = p1();
        let k1s = thresholds(&base).kappa1_star.unwrap();
        for frac in [0.1, 0.4, 0.8, 0.95] {
            let p = base.with(crate::ParamName::Kappa1, frac * k1s);
            let th = thresholds(&p);
            let q = DiscriminantQuadratic::new(&p);
            for k2 in [th.kappa2_minus.unwrap(), th.kappa2_plus.unwrap()] {
                assert!(q.eval(k2).abs() <= 1e-8 * q.scale(k2), "{}", q.eval(k2));
            }
            assert!(th.kappa2_minus <= th.kappa2_plus);
        }
    }

    #[test]
    fn s123_example() {
        let p = p1();
        let t = s123_point(&p).unwrap();
        assert_relative_eq!(t.e2_star, 3.0 / 2.6 - 1.0, max_relative = 1e-14);
        assert!(t.feasible);
        assert!(s123_point(&p.with(crate::ParamName::R2, 2.0)).is_none());
    }

    #[test]
    fn region_at_p1_matches_count() {
        let p = p1();
        let n = coexistence_equilibria(&p).len();
        assert_eq!(classify_region(&p).coexistence_count(), Some(n));
    }

    #[test]
    fn region_boundary_points() {
        let base = ModelParams::unit_scaled(60.0, 1.6, 51.57, 30.0, 0.02).unwrap();
        let th = thresholds(&base);
        let p = base
            .with(crate::ParamName::Kappa1, th.kappa1_bar.unwrap())
            .with(crate::ParamName::Kappa2, th.kappa2_bar);
        assert_eq!(classify_region(&p), Region::CBar);
        // the double root sits on the pest-free point
        let u = coexistence_cubic(&p);
        let roots = cubic_real_roots(u.c2, u.c1, u.c0, MERGE_TOL);
        assert!(roots.iter().any(|r| r.multiplicity == 2 && r.value.abs() < 1e-6));
        assert_eq!(coexistence_equilibria(&p).len(), 1);

        let p = base
            .with(crate::ParamName::Kappa1, th.kappa1_star.unwrap())
            .with(crate::ParamName::Kappa2, th.kappa2_star.unwrap());
        assert_eq!(classify_region(&p), Region::CStar);
        let eqs = coexistence_equilibria(&p);
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].multiplicity, 3);
    }
}
