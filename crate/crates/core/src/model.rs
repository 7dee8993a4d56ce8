//! The stage-structured leafhopper / predatory-mite model.
//!
//! ```text
//! E1' = r1 E2 - alpha E1
//! E2' = alpha E1 - kappa1 E2^2 - m E2 M / (a + E2)
//! M'  = r2 M - kappa2 M^2 + c m E2 M / (a + E2)
//! ```
//!
//! `E1` and `E2` are the two developmental stages of the pest, `M` is the
//! generalist predatory mite. Besides the right-hand side this module provides
//! the analytic Jacobian, the symmetric multilinear derivative forms up to
//! order five (used by the normal-form computations) and the rescaling that
//! sets `a = c = m = 1`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance to `E2 = -a` below which a state is treated as singular.
const SINGULAR_TOL: f64 = 1e-14;

/// The eight positive model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Oviposition rate.
    pub r1: f64,
    /// Intrinsic growth rate of the mite.
    pub r2: f64,
    /// Egg hatch rate.
    pub alpha: f64,
    /// Intraspecific competition among hatchlings.
    pub kappa1: f64,
    /// Intraspecific competition among mites.
    pub kappa2: f64,
    /// Half-saturation prey density.
    pub a: f64,
    /// Conversion rate.
    pub c: f64,
    /// Maximum predation rate.
    pub m: f64,
}

impl ModelParams {
    /// Builds a validated parameter set.
    #[allow(clippy::too_many_arguments)]
    pub fn new(r1: f64, r2: f64, alpha: f64, kappa1: f64, kappa2: f64, a: f64, c: f64, m: f64) -> Result<Self> {
        let p = Self {
            r1,
            r2,
            alpha,
            kappa1,
            kappa2,
            a,
            c,
            m,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `a = c = m = 1`, the setting of all worked scenarios.
    pub fn unit_scaled(r1: f64, r2: f64, alpha: f64, kappa1: f64, kappa2: f64) -> Result<Self> {
        Self::new(r1, r2, alpha, kappa1, kappa2, 1.0, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for name in ParamName::ALL {
            let value = self.get(name);
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: name.as_str(),
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::R1 => self.r1,
            ParamName::R2 => self.r2,
            ParamName::Alpha => self.alpha,
            ParamName::Kappa1 => self.kappa1,
            ParamName::Kappa2 => self.kappa2,
            ParamName::A => self.a,
            ParamName::C => self.c,
            ParamName::M => self.m,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::R1 => self.r1 = value,
            ParamName::R2 => self.r2 = value,
            ParamName::Alpha => self.alpha = value,
            ParamName::Kappa1 => self.kappa1 = value,
            ParamName::Kappa2 => self.kappa2 = value,
            ParamName::A => self.a = value,
            ParamName::C => self.c = value,
            ParamName::M => self.m = value,
        }
    }

    /// Copy with one parameter replaced (not validated).
    pub fn with(&self, name: ParamName, value: f64) -> Self {
        let mut p = *self;
        p.set(name, value);
        p
    }

    /// `delta1 = r2 + c m`.
    pub fn delta1(&self) -> f64 {
        self.r2 + self.c * self.m
    }

    /// `delta2 = 8 c m - r2`.
    pub fn delta2(&self) -> f64 {
        8.0 * self.c * self.m - self.r2
    }
}

/// Names of the model constants, as used by continuation and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamName {
    R1,
    R2,
    Alpha,
    Kappa1,
    Kappa2,
    A,
    C,
    M,
}

impl ParamName {
    pub const ALL: [ParamName; 8] = [
        ParamName::R1,
        ParamName::R2,
        ParamName::Alpha,
        ParamName::Kappa1,
        ParamName::Kappa2,
        ParamName::A,
        ParamName::C,
        ParamName::M,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::R1 => "r1",
            ParamName::R2 => "r2",
            ParamName::Alpha => "alpha",
            ParamName::Kappa1 => "kappa1",
            ParamName::Kappa2 => "kappa2",
            ParamName::A => "a",
            ParamName::C => "c",
            ParamName::M => "m",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown parameter name `{s}`")))
    }
}

/// A point of the phase space `(E1, E2, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub e1: f64,
    pub e2: f64,
    pub m: f64,
}

impl State {
    pub const ORIGIN: State = State {
        e1: 0.0,
        e2: 0.0,
        m: 0.0,
    };

    pub fn new(e1: f64, e2: f64, m: f64) -> Self {
        Self { e1, e2, m }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.e1, self.e2, self.m)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// All components non-negative.
    pub fn is_biological(&self) -> bool {
        self.e1 >= 0.0 && self.e2 >= 0.0 && self.m >= 0.0
    }
}

/// Relation between the original and the rescaled (`a = c = m = 1`) systems:
/// `E1 = a X1`, `E2 = a X2`, `M = a c Y`, `t = tau / (c m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    /// Factor on the two pest stages (`a`).
    pub stage_scale: f64,
    /// Factor on the mite density (`a c`).
    pub mite_scale: f64,
    /// Original time per unit of rescaled time (`1 / (c m)`).
    pub time_scale: f64,
}

impl ScaleMap {
    pub fn identity() -> Self {
        Self {
            stage_scale: 1.0,
            mite_scale: 1.0,
            time_scale: 1.0,
        }
    }

    /// Original state to rescaled state.
    pub fn to_scaled(&self, s: State) -> State {
        State::new(s.e1 / self.stage_scale, s.e2 / self.stage_scale, s.m / self.mite_scale)
    }

    /// Rescaled state back to original units.
    pub fn to_original(&self, s: State) -> State {
        State::new(s.e1 * self.stage_scale, s.e2 * self.stage_scale, s.m * self.mite_scale)
    }

    pub fn to_scaled_time(&self, t: f64) -> f64 {
        t / self.time_scale
    }

    pub fn to_original_time(&self, tau: f64) -> f64 {
        tau * self.time_scale
    }
}

fn check_regular(p: &ModelParams, e2: f64) -> Result<()> {
    if !e2.is_finite() || (p.a + e2).abs() <= SINGULAR_TOL * p.a.max(e2.abs()) {
        return Err(Error::Singular { e2 });
    }
    Ok(())
}

/// Right-hand side of the model.
pub fn vector_field(p: &ModelParams, s: &State) -> Result<Vector3<f64>> {
    check_regular(p, s.e2)?;
    Ok(vector_field_unchecked(p, &s.to_vector()))
}

/// Right-hand side without the singularity check; used in inner loops where
/// the caller has already validated the state.
pub(crate) fn vector_field_unchecked(p: &ModelParams, x: &Vector3<f64>) -> Vector3<f64> {
    let (e1, e2, m) = (x[0], x[1], x[2]);
    let predation = e2 * m / (p.a + e2);
    Vector3::new(
        p.r1 * e2 - p.alpha * e1,
        p.alpha * e1 - p.kappa1 * e2 * e2 - p.m * predation,
        p.r2 * m - p.kappa2 * m * m + p.c * p.m * predation,
    )
}

/// Analytic Jacobian of [`vector_field`].
pub fn jacobian(p: &ModelParams, s: &State) -> Result<Matrix3<f64>> {
    check_regular(p, s.e2)?;
    Ok(jacobian_unchecked(p, &s.to_vector()))
}

pub(crate) fn jacobian_unchecked(p: &ModelParams, x: &Vector3<f64>) -> Matrix3<f64> {
    let (e2, m) = (x[1], x[2]);
    let d = p.a + e2;
    // d/dE2 [E2/(a+E2)] = a/(a+E2)^2
    let dh = p.a / (d * d);
    let h = e2 / d;
    Matrix3::new(
        -p.alpha,
        p.r1,
        0.0,
        p.alpha,
        -2.0 * p.kappa1 * e2 - p.m * m * dh,
        -p.m * h,
        0.0,
        p.c * p.m * m * dh,
        p.r2 - 2.0 * p.kappa2 * m + p.c * p.m * h,
    )
}

/// Partial derivative of the vector field with respect to one constant.
pub fn param_derivative(p: &ModelParams, s: &State, name: ParamName) -> Result<Vector3<f64>> {
    check_regular(p, s.e2)?;
    Ok(param_derivative_unchecked(p, &s.to_vector(), name))
}

pub(crate) fn param_derivative_unchecked(p: &ModelParams, x: &Vector3<f64>, name: ParamName) -> Vector3<f64> {
    let (e1, e2, m) = (x[0], x[1], x[2]);
    let d = p.a + e2;
    let em = e2 * m;
    match name {
        ParamName::R1 => Vector3::new(e2, 0.0, 0.0),
        ParamName::R2 => Vector3::new(0.0, 0.0, m),
        ParamName::Alpha => Vector3::new(-e1, e1, 0.0),
        ParamName::Kappa1 => Vector3::new(0.0, -e2 * e2, 0.0),
        ParamName::Kappa2 => Vector3::new(0.0, 0.0, -m * m),
        ParamName::A => {
            let g = p.m * em / (d * d);
            Vector3::new(0.0, g, -p.c * g)
        }
        ParamName::C => Vector3::new(0.0, 0.0, p.m * em / d),
        ParamName::M => Vector3::new(0.0, -em / d, p.c * em / d),
    }
}

/// Rescales to the three-parameter-free form with `a = c = m = 1`.
///
/// The returned map sends states and times of the rescaled system back to
/// the original one.
pub fn nondimensionalize(p: &ModelParams) -> (ModelParams, ScaleMap) {
    let cm = p.c * p.m;
    let scaled = ModelParams {
        r1: p.r1 / cm,
        r2: p.r2 / cm,
        alpha: p.alpha / cm,
        kappa1: p.a * p.kappa1 / cm,
        kappa2: p.a * p.kappa2 / p.m,
        a: 1.0,
        c: 1.0,
        m: 1.0,
    };
    let map = ScaleMap {
        stage_scale: p.a,
        mite_scale: p.a * p.c,
        time_scale: 1.0 / cm,
    };
    (scaled, map)
}

/// `k`-th derivative of `h(E2) = E2 / (a + E2)`; `k = 0` is `h` itself.
fn saturation_derivative(a: f64, e2: f64, k: usize) -> f64 {
    let d = a + e2;
    if k == 0 {
        return e2 / d;
    }
    // h^(k) = (-1)^(k+1) k! a / (a+E2)^(k+1)
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * factorial * a / d.powi(k as i32 + 1)
}

/// Order-`k` Frechet derivative of the vector field at `s`, applied to the
/// `k = vectors.len()` given directions. Complex directions are allowed; the
/// form is extended complex-multilinearly (no conjugation).
pub fn multilinear_derivative(
    p: &ModelParams,
    s: &State,
    vectors: &[Vector3<Complex64>],
) -> Result<Vector3<Complex64>> {
    let order = vectors.len();
    if !(2..=5).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    check_regular(p, s.e2)?;
    Ok(multilinear_unchecked(p, &s.to_vector(), vectors))
}

pub(crate) fn multilinear_unchecked(
    p: &ModelParams,
    x: &Vector3<f64>,
    vectors: &[Vector3<Complex64>],
) -> Vector3<Complex64> {
    let order = vectors.len();
    let (e2, m) = (x[1], x[2]);

    // Derivative of g(E2, M) = M h(E2): only terms with at most one M slot.
    let all_e2: Complex64 = vectors.iter().map(|v| v[1]).product();
    let mut g = all_e2 * (m * saturation_derivative(p.a, e2, order));
    let hk1 = saturation_derivative(p.a, e2, order - 1);
    for j in 0..order {
        let others: Complex64 = vectors
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, v)| v[1])
            .product();
        g += vectors[j][2] * others * hk1;
    }

    let (quad_e2, quad_m) = if order == 2 {
        (vectors[0][1] * vectors[1][1] * 2.0, vectors[0][2] * vectors[1][2] * 2.0)
    } else {
        (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    };

    Vector3::new(
        Complex64::new(0.0, 0.0),
        -quad_e2 * p.kappa1 - g * p.m,
        -quad_m * p.kappa2 + g * (p.c * p.m),
    )
}

/// Real-valued convenience wrapper around [`multilinear_derivative`].
pub fn multilinear_derivative_real(p: &ModelParams, s: &State, vectors: &[Vector3<f64>]) -> Result<Vector3<f64>> {
    let cv: Vec<Vector3<Complex64>> = vectors.iter().map(|v| v.map(|x| Complex64::new(x, 0.0))).collect();
    Ok(multilinear_derivative(p, s, &cv)?.map(|z| z.re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p1() -> ModelParams {
        ModelParams::unit_scaled(60.0, 1.6, 51.57, 23.2197961461739, 0.026671).unwrap()
    }

    #[test]
    fn origin_is_fixed() {
        let f = vector_field(&p1(), &State::ORIGIN).unwrap();
        assert_eq!(f, Vector3::zeros());
    }

    #[test]
    fn reference_equilibrium_has_small_residual() {
        let s = State::new(0.614426554662767, 0.528099623732648, 72.9478611523887);
        let f = vector_field(&p1(), &s).unwrap();
        assert!(f.amax() < 1e-6, "{f}");
    }

    #[test]
    fn third_equation_uses_r2() {
        // With r1 in place of r2 in the mite equation the reference point is far
        // from an equilibrium.
        let p = p1();
        let s = State::new(0.614426554662767, 0.528099623732648, 72.9478611523887);
        let h = s.e2 / (p.a + s.e2);
        let with_r1 = p.r1 * s.m - p.kappa2 * s.m * s.m + p.c * p.m * h * s.m;
        assert!(with_r1.abs() > 1.0);
        let with_r2 = p.r2 * s.m - p.kappa2 * s.m * s.m + p.c * p.m * h * s.m;
        assert!(with_r2.abs() < 1e-6);
    }

    #[test]
    fn rejects_singular_state() {
        let p = p1();
        let s = State::new(1.0, -1.0, 2.0);
        assert!(matches!(vector_field(&p, &s), Err(Error::Singular { .. })));
        assert!(matches!(jacobian(&p, &s), Err(Error::Singular { .. })));
    }

    #[test]
    fn negative_e2_above_singularity_is_accepted() {
        let p = p1();
        let s = State::new(0.1, -0.5, 2.0);
        assert!(vector_field(&p, &s).is_ok());
        assert!(!s.is_biological());
    }

    #[test]
    fn jacobian_first_row_is_linear_part() {
        let p = p1();
        let j = jacobian(&p, &State::new(0.3, 0.7, 12.0)).unwrap();
        assert_eq!(j[(0, 0)], -p.alpha);
        assert_eq!(j[(0, 1)], p.r1);
        assert_eq!(j[(0, 2)], 0.0);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(ModelParams::unit_scaled(60.0, 1.6, 51.57, 0.0, 0.02).is_err());
        assert!(ModelParams::unit_scaled(60.0, f64::NAN, 51.57, 1.0, 0.02).is_err());
        assert!(ModelParams::unit_scaled(60.0, 1.6, -1.0, 1.0, 0.02).is_err());
    }

    #[test]
    fn unit_scaling_is_identity() {
        let p = p1();
        let (q, map) = nondimensionalize(&p);
        assert_eq!(p, q);
        assert_eq!(map, ScaleMap::identity());
    }

    #[test]
    fn rescaled_oviposition_rate() {
        let p = ModelParams::new(6.0, 1.0, 3.0, 2.0, 0.5, 2.0, 0.5, 4.0).unwrap();
        let (q, map) = nondimensionalize(&p);
        assert_relative_eq!(q.r1, 3.0);
        assert_eq!((q.a, q.c, q.m), (1.0, 1.0, 1.0));
        assert_relative_eq!(map.time_scale, 0.5);
        assert_relative_eq!(map.mite_scale, 1.0);
    }

    #[test]
    fn rescaled_field_is_conjugate() {
        // f_orig(S x) = S f_scaled(x) / time_scale, pointwise.
        let p = ModelParams::new(6.0, 1.3, 3.0, 2.0, 0.5, 2.0, 0.5, 4.0).unwrap();
        let (q, map) = nondimensionalize(&p);
        let x = State::new(0.4, 0.9, 1.7);
        let fo = vector_field(&p, &map.to_original(x)).unwrap();
        let fs = vector_field(&q, &x).unwrap();
        let back = map.to_original(State::from_vector(&fs)).to_vector() / map.time_scale;
        assert_relative_eq!(fo, back, max_relative = 1e-13);
    }

    #[test]
    fn second_derivative_along_e1_vanishes() {
        let e1 = Vector3::new(1.0, 0.0, 0.0);
        let d = multilinear_derivative_real(&p1(), &State::new(0.2, 0.4, 30.0), &[e1, e1]).unwrap();
        assert_eq!(d, Vector3::zeros());
    }

    #[test]
    fn unsupported_orders() {
        let v = Vector3::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        let s = State::new(0.2, 0.4, 30.0);
        assert_eq!(multilinear_derivative(&p1(), &s, &[v]), Err(Error::UnsupportedOrder(1)));
        assert_eq!(
            multilinear_derivative(&p1(), &s, &[v; 6]),
            Err(Error::UnsupportedOrder(6))
        );
    }

    #[test]
    fn param_names_round_trip() {
        for n in ParamName::ALL {
            assert_eq!(n.as_str().parse::<ParamName>().unwrap(), n);
        }
        assert!("kappa3".parse::<ParamName>().is_err());
    }
}
