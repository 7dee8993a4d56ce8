//! Hopf conditions along the coexistence family with `alpha` as bifurcation
//! parameter: the quadratic `H(alpha) = A0 - A1 A2`, its roots, the `A1 > 0`
//! threshold in `kappa2`, the nilpotent thresholds and transversality.
//!
//! Every routine takes `(parameters, E2)`; the value of `alpha` inside the
//! parameter set is ignored unless stated otherwise. The cubic for `E2` does
//! not involve `alpha`, so fixing `E2` follows the equilibrium exactly.

use serde::{Deserialize, Serialize};

use crate::equilibria::{coexistence_equilibria, Equilibrium};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamName};
use crate::poly::{quadratic_roots, QuadraticRoots};
use crate::stability::{structured_coeffs, CharCoeffs};

/// `|Delta_h| < DELTA_H_TOL (1 + h1^2)` counts as a double root.
pub const DELTA_H_TOL: f64 = 1e-10;

/// `H(alpha) = h2 alpha^2 + h1 alpha + h0` with its roots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfQuadratic {
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub delta_h: f64,
    pub alpha_minus: Option<f64>,
    pub alpha_plus: Option<f64>,
    pub alpha_star: Option<f64>,
}

impl HopfQuadratic {
    pub fn from_coefficients(h2: f64, h1: f64, h0: f64) -> Self {
        let delta_h = h1 * h1 - 4.0 * h0 * h2;
        let mut q = Self {
            h0,
            h1,
            h2,
            delta_h,
            alpha_minus: None,
            alpha_plus: None,
            alpha_star: None,
        };
        if h2 == 0.0 {
            return q;
        }
        if delta_h.abs() < DELTA_H_TOL * (1.0 + h1 * h1) {
            q.alpha_star = Some(-h1 / (2.0 * h2));
        } else if let QuadraticRoots::Two(lo, hi) = quadratic_roots(h2, h1, h0, 0.0) {
            // alpha^- = (-h1 - sqrt)/(2 h2), which is the larger root when h2 < 0
            let (minus, plus) = if h2 > 0.0 { (lo, hi) } else { (hi, lo) };
            q.alpha_minus = Some(minus);
            q.alpha_plus = Some(plus);
        }
        q
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        (self.h2 * alpha + self.h1) * alpha + self.h0
    }

    pub fn derivative(&self, alpha: f64) -> f64 {
        2.0 * self.h2 * alpha + self.h1
    }
}

/// Roots of `H` returned by [`hopf_alphas`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HopfAlphas {
    Pair {
        minus: f64,
        plus: f64,
    },
    Double(f64),
    /// `h2 = 0`: the root of the linear remainder.
    Linear(Option<f64>),
    None,
}

impl HopfAlphas {
    /// Roots that are admissible as a hatching rate (`alpha > 0`).
    pub fn admissible(&self) -> Vec<f64> {
        let v = match *self {
            HopfAlphas::Pair { minus, plus } => vec![minus, plus],
            HopfAlphas::Double(x) => vec![x],
            HopfAlphas::Linear(Some(x)) => vec![x],
            _ => vec![],
        };
        v.into_iter().filter(|&a| a > 0.0).collect()
    }
}

pub fn hopf_alphas(q: &HopfQuadratic) -> HopfAlphas {
    if q.h2 == 0.0 {
        return HopfAlphas::Linear((q.h1 != 0.0).then(|| -q.h0 / q.h1));
    }
    match (q.alpha_star, q.alpha_minus, q.alpha_plus) {
        (Some(x), _, _) => HopfAlphas::Double(x),
        (None, Some(minus), Some(plus)) => HopfAlphas::Pair { minus, plus },
        _ => HopfAlphas::None,
    }
}

/// Pieces shared by the closed forms: with `s = a + E2` and
/// `N = delta1 E2 + a r2` the lifted predator density obeys `kappa2 M = N/s`.
struct Lifted {
    s: f64,
    n: f64,
    /// `-J22`
    g: f64,
    /// `J22 J33 - J23 J32`
    q: f64,
}

fn lifted(p: &ModelParams, e2: f64) -> Lifted {
    let s = p.a + e2;
    let n = p.delta1() * e2 + p.a * p.r2;
    let s3 = s * s * s;
    let g = 2.0 * p.kappa1 * e2 + p.m * p.a * n / (p.kappa2 * s3);
    let pb = p.m * e2 / s;
    let j32 = p.c * p.m * p.a * n / (p.kappa2 * s3);
    let q = g * n / s + pb * j32;
    Lifted { s, n, g, q }
}

fn check_e2(e2: f64) -> Result<()> {
    if e2 > 0.0 && e2.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("E2 must be positive, got {e2}")))
    }
}

/// Coefficients of `H(alpha)` obtained by expanding `A0 - A1 A2` in `alpha`.
pub fn hopf_quadratic(p: &ModelParams, e2: f64) -> Result<HopfQuadratic> {
    check_e2(e2)?;
    let l = lifted(p, e2);
    let big_g = l.g + l.n / l.s;
    let h2 = p.r1 - big_g;
    let h1 = -p.r1 * l.n / l.s - big_g * (big_g - p.r1);
    let h0 = -l.q * big_g;
    Ok(HopfQuadratic::from_coefficients(h2, h1, h0))
}

/// The expanded closed forms for `h0`, `h1`, `h2` in powers of `E2`. They do
/// not reproduce `A0 - A1 A2`; [`quadratic_mismatch`] measures the gap.
pub fn expanded_hopf_quadratic(p: &ModelParams, e2: f64) -> Result<HopfQuadratic> {
    check_e2(e2)?;
    let (a, c, m, r1, r2, k1, k2) = (p.a, p.c, p.m, p.r1, p.r2, p.kappa1, p.kappa2);
    let d1 = p.delta1();
    let e = e2;
    let s = a + e;
    let h0 = -(d1 * e + a * r2) / (k2 * s.powi(5))
        * (2.0 * k1 * e * e + (a * k1 + d1 - r1) * e + a * r2)
        * (2.0 * k1 * k2 * e.powi(4)
            + (5.0 * a * k1 * k2 - r1 * k2) * e.powi(3)
            + 2.0 * a * k2 * (2.0 * a * k1 - r1) * e * e
            + a * (c * m * m - a * r1 + a * a * k1 * k2) * e);
    let h1 = (-4.0 * k1 * k1 * e.powi(4) + ((6.0 * r1 - 4.0 * d1) * k1 - 4.0 * a * k1 * k1) * e.powi(3)
        - (a * a * k1 * k1 + a * k1 * (2.0 * c * m - 5.0 * r1 + 6.0 * r2) + 2.0 * r1 * (r1 - d1) + d1 * d1) * e * e
        + ((r1 - 2.0 * r2) * a * a * k1 - a * (2.0 * r2 * d1 - 2.0 * r1 * r2 + r1 * r1)) * e
        - a * a * r2 * r2)
        / (s * s);
    let h2 = (-2.0 * k1 * e * e + (-a * k1 - d1 + 2.0 * r1) * e + a * (r1 - r2)) / s;
    Ok(HopfQuadratic::from_coefficients(h2, h1, h0))
}

/// Largest relative gap between the expanded and the direct coefficients.
pub fn quadratic_mismatch(p: &ModelParams, e2: f64) -> Result<f64> {
    let d = hopf_quadratic(p, e2)?;
    let q = expanded_hopf_quadratic(p, e2)?;
    let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + y.abs());
    Ok(rel(q.h0, d.h0).max(rel(q.h1, d.h1)).max(rel(q.h2, d.h2)))
}

/// Closed-form threshold `kappa2_hat` built from the `q~` coefficients; uses
/// the `alpha` of `p`.
pub fn kappa2_hat(p: &ModelParams, e2: f64) -> Result<f64> {
    check_e2(e2)?;
    let (a, c, m, r1, r2, k1, al) = (p.a, p.c, p.m, p.r1, p.r2, p.kappa1, p.alpha);
    let d1 = p.delta1();
    let q3 = 2.0 * k1 * (d1 + al);
    let q2 = a * k1 * (c * m + 3.0 * al + 3.0 * r2) - 2.0 * al * r1 + d1 * (al - r1);
    let q1 = a * (a * k1 * (r2 + al) + (c * m - 3.0 * r1 + 2.0 * r2) * al - r1 * r2);
    let q0 = a * a * al * (r2 - r1);
    let poly = ((q3 * e2 + q2) * e2 + q1) * e2 + q0;
    let den = (a + e2).powi(2) * poly;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Pole("kappa2_hat"));
    }
    Ok(-a * c * m * m * e2 * (d1 * e2 + a * r2) / den)
}

/// `A1` at the lifted state is `k0 + k1/kappa2` for fixed `E2`; returns
/// `(k0, k1)`. Uses the `alpha` of `p`.
pub fn a1_in_kappa2(p: &ModelParams, e2: f64) -> Result<(f64, f64)> {
    check_e2(e2)?;
    let s = p.a + e2;
    let n = p.delta1() * e2 + p.a * p.r2;
    let k0 = p.alpha * (2.0 * p.kappa1 * e2 + n / s - p.r1) + 2.0 * p.kappa1 * e2 * n / s;
    let k1 = p.m * p.a * n / s.powi(3) * (p.alpha + n / s + p.c * p.m * e2 / s);
    Ok((k0, k1))
}

/// The value of `kappa2` where `A1` changes sign at fixed `E2`, if any.
/// When `k0 < 0`, `A1 > 0` holds exactly for `kappa2` below it.
pub fn a1_sign_threshold(p: &ModelParams, e2: f64) -> Result<Option<f64>> {
    let (k0, k1) = a1_in_kappa2(p, e2)?;
    Ok((k0 < 0.0).then(|| -k1 / k0))
}

/// The two closed-form `kappa2` values tied to a zero eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NilpotentKappa2 {
    /// `acm^2 E2 / ((a+E2)^2 (a+2E2)(r1 - kappa1 E2))`; `None` at its pole.
    pub kappa2_tilde: Option<f64>,
    /// `acm^2 / ((a+E2)^2 (r1 - a kappa1 - 2 kappa1 E2))`; `None` at its pole.
    /// At a genuine coexistence equilibrium this is where `det J = 0`.
    pub kappa2_s123: Option<f64>,
}

pub fn nilpotent_kappa2(p: &ModelParams, e2: f64) -> Result<NilpotentKappa2> {
    check_e2(e2)?;
    let s2 = (p.a + e2).powi(2);
    let acm2 = p.a * p.c * p.m * p.m;
    let d_tilde = s2 * (p.a + 2.0 * e2) * (p.r1 - p.kappa1 * e2);
    let d_s123 = s2 * (p.r1 - p.a * p.kappa1 - 2.0 * p.kappa1 * e2);
    let nonzero = |d: f64| d.abs() > 1e-14 * (s2 * p.r1).abs();
    Ok(NilpotentKappa2 {
        kappa2_tilde: nonzero(d_tilde).then(|| acm2 * e2 / d_tilde),
        kappa2_s123: nonzero(d_s123).then(|| acm2 / d_s123),
    })
}

/// `d Re(lambda)/d alpha` at a Hopf root, by two routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transversality {
    /// `H'(alpha) / (2 (A1 + A2^2))`, from implicit differentiation of the
    /// characteristic polynomial at `lambda = i omega`.
    pub direct: f64,
    /// The factored closed form with the `q-bar` coefficients.
    pub closed_form: f64,
}

/// Relative tolerance on `|H(alpha)|` for accepting `alpha` as a Hopf root.
pub const ROOT_TOL: f64 = 1e-4;

pub fn transversality(p: &ModelParams, e2: f64, alpha_at: f64) -> Result<Transversality> {
    let pa = p.with(ParamName::Alpha, alpha_at);
    let cc = structured_coeffs(&pa, e2)?;
    if cc.hopf_function().abs() > ROOT_TOL * cc.scale() {
        return Err(Error::Precondition(format!(
            "alpha = {alpha_at} is not a root of H (H = {:e})",
            cc.hopf_function()
        )));
    }
    let q = hopf_quadratic(p, e2)?;
    let direct = q.derivative(alpha_at) / (2.0 * (cc.a1 + cc.a2 * cc.a2));
    Ok(Transversality {
        direct,
        closed_form: transversality_closed_form(p, e2, alpha_at),
    })
}

/// The factored expression for `d gamma / d alpha`. Its numerator vanishes
/// exactly at `kappa2_tilde` and at `kappa2_s123`.
pub fn transversality_closed_form(p: &ModelParams, e2: f64, alpha: f64) -> f64 {
    let (a, c, m, r1, r2, k1, k2) = (p.a, p.c, p.m, p.r1, p.r2, p.kappa1, p.kappa2);
    let d1 = p.delta1();
    let e = e2;
    let s2 = (a + e).powi(2);
    let acm2 = a * c * m * m;
    let n = d1 * e + r2 * a;
    let f_s123 = k2 * s2 * (-r1 + (a + 2.0 * e) * k1) + acm2;
    let f_tilde = s2 * (a + 2.0 * e) * (-r1 + e * k1) * k2 + acm2 * e;
    let q3 = 2.0 * (alpha + d1) * k1;
    let q2 = (3.0 * a * k1 + d1) * alpha + a * k1 * (3.0 * r2 + c * m) - r1 * d1;
    let q1 = a * (c * m + r1 + 2.0 * r2 + a * k1) * alpha + a * r2 * (-r1 + a * k1);
    let q0 = a * a * (r2 + r1) * alpha;
    let den = (((q3 * e + q2) * e + q1) * e + q0) * s2 * k2 + acm2 * n * e;
    e * n * n * f_s123 * f_tilde / (den * den)
}

/// Outcome of checking the Hopf theorem's hypotheses at one equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfReport {
    pub equilibrium: Equilibrium,
    /// 1-based position in the ascending `E2` ordering.
    pub index: usize,
    pub coeffs: CharCoeffs,
    pub kappa2_hat: Option<f64>,
    /// `kappa2_hat < kappa2`.
    pub kappa2_hypothesis: bool,
    pub quadratic: HopfQuadratic,
    pub admissible_alphas: Vec<f64>,
    pub certificate: Option<HopfCertificate>,
    /// Set when `Delta_h` vanishes and the only root is `alpha*`.
    pub degenerate_double_root: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfCertificate {
    pub alpha: f64,
    pub omega: f64,
    pub a1: f64,
    pub hopf_residual: f64,
    pub transversality: Transversality,
    pub codimension: u8,
}

/// Relative distance between `alpha` and a root of `H` for a certificate.
pub const ALPHA_MATCH_TOL: f64 = 1e-6;

/// Checks every non-saddle coexistence equilibrium (`A0 > 0`) of `p`; a
/// certificate is issued when the current `alpha` is a root of `H` with
/// `A1 > 0`, nonzero transversality and `kappa2_hat < kappa2`.
pub fn check_hopf_theorem(p: &ModelParams) -> Result<Vec<HopfReport>> {
    let mut out = Vec::new();
    for (i, eq) in coexistence_equilibria(p).into_iter().enumerate() {
        let e2 = eq.state.e2;
        let coeffs = crate::stability::char_coeffs(p, &eq)?;
        if coeffs.a0 <= 0.0 {
            continue;
        }
        let quadratic = hopf_quadratic(p, e2)?;
        let roots = hopf_alphas(&quadratic);
        let admissible = roots.admissible();
        let k2hat = kappa2_hat(p, e2).ok();
        let kappa2_hypothesis = k2hat.is_some_and(|k| k < p.kappa2);
        let degenerate_double_root = matches!(roots, HopfAlphas::Double(_));

        let certificate = admissible
            .iter()
            .copied()
            .find(|&al| (al - p.alpha).abs() <= ALPHA_MATCH_TOL * p.alpha)
            .and_then(|al| {
                let cc = structured_coeffs(&p.with(ParamName::Alpha, al), e2).ok()?;
                let tr = transversality(p, e2, al).ok()?;
                (kappa2_hypothesis && cc.a1 > 0.0 && cc.a2 > 0.0 && tr.direct != 0.0).then(|| HopfCertificate {
                    alpha: al,
                    omega: cc.a1.sqrt(),
                    a1: cc.a1,
                    hopf_residual: cc.hopf_function(),
                    transversality: tr,
                    codimension: if degenerate_double_root { 2 } else { 1 },
                })
            });
        out.push(HopfReport {
            equilibrium: eq,
            index: i + 1,
            coeffs,
            kappa2_hat: k2hat,
            kappa2_hypothesis,
            quadratic,
            admissible_alphas: admissible,
            certificate,
            degenerate_double_root,
        });
    }
    Ok(out)
}
