//! First and second Lyapunov coefficients at a Hopf point by the projection
//! method, with eigenvectors normalized so that `<q, q> = 1` and
//! `<p, q> = 1` (`<u, v> = conj(u)^T v`).

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibria::Equilibrium;
use crate::error::{Error, Result};
use crate::model::{jacobian, multilinear_unchecked, ModelParams};
use crate::stability::CharCoeffs;

type C = Complex64;
type CVec = Vector3<C>;
type CMat = Matrix3<C>;

/// Relative tolerance on `|A0 - A1 A2|` for admitting a point as Hopf.
pub const HOPF_ADMIT_TOL: f64 = 1e-4;

/// `|l1| < L1_ZERO_TOL (1 + |l2|)` counts as a vanishing first coefficient.
pub const L1_ZERO_TOL: f64 = 1e-6;

/// `|l2| < L2_ZERO_TOL` marks a degeneracy beyond the Bautin point.
pub const L2_ZERO_TOL: f64 = 1e-6;

/// Linear part and symmetric multilinear forms of a vector field at a point.
pub trait LocalDynamics {
    fn jacobian(&self) -> Matrix3<f64>;

    /// Order-`vectors.len()` derivative applied to the given directions,
    /// extended complex-multilinearly.
    fn derivative(&self, vectors: &[CVec]) -> CVec;
}

/// The model's vector field at a fixed state.
pub struct ModelAt<'a> {
    pub params: &'a ModelParams,
    pub x: Vector3<f64>,
}

impl LocalDynamics for ModelAt<'_> {
    fn jacobian(&self) -> Matrix3<f64> {
        crate::model::jacobian_unchecked(self.params, &self.x)
    }

    fn derivative(&self, vectors: &[CVec]) -> CVec {
        multilinear_unchecked(self.params, &self.x, vectors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfNormalForm {
    pub omega: f64,
    pub q: [C; 3],
    pub p_adj: [C; 3],
    /// Cubic normal-form coefficient `c1`, with `l1 = Re(c1)/omega`.
    pub c1: C,
    pub l1: f64,
    pub l2: Option<f64>,
}

impl HopfNormalForm {
    pub fn q_vec(&self) -> CVec {
        CVec::from(self.q)
    }

    pub fn p_vec(&self) -> CVec {
        CVec::from(self.p_adj)
    }
}

fn re(x: f64) -> C {
    C::new(x, 0.0)
}

fn cplx(m: &Matrix3<f64>) -> CMat {
    m.map(|x| C::new(x, 0.0))
}

fn inner(u: &CVec, v: &CVec) -> C {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

fn cross(a: &CVec, b: &CVec) -> CVec {
    CVec::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

/// Null vector of a rank-2 matrix: the best-conditioned cross product of two
/// rows (the bilinear cross product is orthogonal to both without conjugation).
fn null_vector(m: &CMat) -> CVec {
    let rows: Vec<CVec> = (0..3).map(|i| m.row(i).transpose()).collect();
    [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(i, j)| cross(&rows[i], &rows[j]))
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap()
}

fn solve(m: &CMat, rhs: &CVec) -> Result<CVec> {
    m.lu()
        .solve(rhs)
        .ok_or_else(|| Error::NoConvergence("singular linear system in normal form".into()))
}

/// Solves `(i omega I - A) h = rhs` with `<p, h> = 0` through the bordered
/// system `[[i omega I - A, q], [p^*, 0]]`.
fn bordered_solve(a: &CMat, omega: f64, q: &CVec, p: &CVec, rhs: &CVec) -> Result<CVec> {
    let iw = C::new(0.0, omega);
    let mut m = Matrix4::<C>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = -a[(i, j)];
        }
        m[(i, i)] += iw;
        m[(i, 3)] = q[i];
        m[(3, i)] = p[i].conj();
    }
    let b = Vector4::new(rhs[0], rhs[1], rhs[2], C::new(0.0, 0.0));
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NoConvergence("singular bordered system".into()))?;
    Ok(CVec::new(x[0], x[1], x[2]))
}

/// Eigenvectors of the critical pair and the frequency.
fn critical_pair(a: &Matrix3<f64>) -> Result<(f64, CVec, CVec)> {
    let cc = CharCoeffs::from_matrix(a);
    let ev = cc.eigenvalues();
    let lambda = ev[1];
    if !(lambda.im > 0.0) || cc.a1 <= 0.0 {
        return Err(Error::NotHopf {
            residual: cc.hopf_function().abs(),
            a1: cc.a1,
        });
    }
    let ac = cplx(a);
    let q = null_vector(&(ac - CMat::identity() * lambda));
    let q = q / C::new(q.norm(), 0.0);
    // A^T p = conj(lambda) p
    let p = null_vector(&(ac.transpose() - CMat::identity() * lambda.conj()));
    let s = inner(&p, &q);
    let p = p / s.conj();
    Ok((lambda.im, q, p))
}

struct Terms {
    omega: f64,
    a: CMat,
    q: CVec,
    p: CVec,
    h20: CVec,
    h11: CVec,
    c1: C,
}

fn first_order_terms<D: LocalDynamics + ?Sized>(d: &D) -> Result<Terms> {
    let a_real = d.jacobian();
    let (omega, q, p) = critical_pair(&a_real)?;
    let a = cplx(&a_real);
    let qb = q.conjugate();
    let iw = C::new(0.0, omega);
    let h20 = solve(&(CMat::identity() * (iw * re(2.0)) - a), &d.derivative(&[q, q]))?;
    let h11 = -solve(&a, &d.derivative(&[q, qb]))?;
    let g21 = inner(
        &p,
        &(d.derivative(&[q, q, qb]) + d.derivative(&[qb, h20]) + d.derivative(&[q, h11]) * re(2.0)),
    );
    Ok(Terms {
        omega,
        a,
        q,
        p,
        h20,
        h11,
        c1: g21 / 2.0,
    })
}

/// Normal form with `l1` only.
pub fn hopf_normal_form<D: LocalDynamics + ?Sized>(d: &D) -> Result<HopfNormalForm> {
    let t = first_order_terms(d)?;
    Ok(HopfNormalForm {
        omega: t.omega,
        q: t.q.into(),
        p_adj: t.p.into(),
        c1: t.c1,
        l1: t.c1.re / t.omega,
        l2: None,
    })
}

/// Normal form with both coefficients; `l2` is meaningful where `l1 = 0`.
pub fn hopf_normal_form_l2<D: LocalDynamics + ?Sized>(d: &D) -> Result<HopfNormalForm> {
    let t = first_order_terms(d)?;
    let Terms {
        omega,
        a,
        q,
        p,
        h20,
        h11,
        c1,
    } = t;
    let qb = q.conjugate();
    let h20b = h20.conjugate();
    let iw = C::new(0.0, omega);
    let id = CMat::identity();
    let b = |x: CVec, y: CVec| d.derivative(&[x, y]);
    let cc = |x: CVec, y: CVec, z: CVec| d.derivative(&[x, y, z]);
    let dd = |x: CVec, y: CVec, z: CVec, w: CVec| d.derivative(&[x, y, z, w]);

    let h30 = solve(&(id * (iw * re(3.0)) - a), &(cc(q, q, q) + b(q, h20) * re(3.0)))?;
    let rhs21 = cc(q, q, qb) + b(qb, h20) + b(q, h11) * re(2.0) - q * (c1 * re(2.0));
    let h21 = bordered_solve(&a, omega, &q, &p, &rhs21)?;
    let h21b = h21.conjugate();
    let h31 = solve(
        &(id * (iw * re(2.0)) - a),
        &(dd(q, q, q, qb)
            + cc(q, q, h11) * re(3.0)
            + cc(q, qb, h20) * re(3.0)
            + b(h20, h11) * re(3.0)
            + b(qb, h30)
            + b(q, h21) * re(3.0)
            - h20 * (c1 * re(6.0))),
    )?;
    let h22 = -solve(
        &a,
        &(dd(q, q, qb, qb)
            + cc(q, qb, h11) * re(4.0)
            + cc(qb, qb, h20)
            + cc(q, q, h20b)
            + b(h11, h11) * re(2.0)
            + b(q, h21b) * re(2.0)
            + b(qb, h21) * re(2.0)
            + b(h20b, h20)
            - h11 * ((c1 + c1.conj()) * re(4.0))),
    )?;
    let g32 = d.derivative(&[q, q, q, qb, qb])
        + dd(q, q, q, h20b)
        + dd(q, qb, qb, h20) * re(3.0)
        + dd(q, q, qb, h11) * re(6.0)
        + cc(qb, qb, h30)
        + cc(q, q, h21b) * re(3.0)
        + cc(q, qb, h21) * re(6.0)
        + cc(q, h20b, h20) * re(3.0)
        + cc(q, h11, h11) * re(6.0)
        + cc(qb, h20, h11) * re(6.0)
        + b(qb, h31) * re(2.0)
        + b(q, h22) * re(3.0)
        + b(h20b, h30)
        + b(h21b, h20) * re(3.0)
        + b(h11, h21) * re(6.0);
    let c2 = inner(&p, &g32) / 12.0;
    Ok(HopfNormalForm {
        omega,
        q: q.into(),
        p_adj: p.into(),
        c1,
        l1: c1.re / omega,
        l2: Some(c2.re / omega),
    })
}

fn admit<'a>(p: &'a ModelParams, eq: &Equilibrium) -> Result<ModelAt<'a>> {
    let j = jacobian(p, &eq.state)?;
    let cc = CharCoeffs::from_matrix(&j);
    if cc.a1 <= 0.0 || cc.hopf_function().abs() > HOPF_ADMIT_TOL * cc.scale() {
        return Err(Error::NotHopf {
            residual: cc.hopf_function().abs(),
            a1: cc.a1,
        });
    }
    Ok(ModelAt {
        params: p,
        x: eq.state.to_vector(),
    })
}

/// First Lyapunov coefficient at a (near-)Hopf equilibrium of the model.
pub fn first_lyapunov(p: &ModelParams, eq: &Equilibrium) -> Result<(f64, HopfNormalForm)> {
    let nf = hopf_normal_form(&admit(p, eq)?)?;
    Ok((nf.l1, nf))
}

/// Second Lyapunov coefficient; requires `l1` to vanish.
pub fn second_lyapunov(p: &ModelParams, eq: &Equilibrium) -> Result<f64> {
    let nf = hopf_normal_form_l2(&admit(p, eq)?)?;
    let l2 = nf.l2.unwrap_or(f64::NAN);
    if nf.l1.abs() >= L1_ZERO_TOL * (1.0 + l2.abs()) {
        return Err(Error::L1NotSmall(nf.l1));
    }
    Ok(l2)
}

/// Both coefficients without the `l1` gate.
pub fn lyapunov_pair(p: &ModelParams, eq: &Equilibrium) -> Result<HopfNormalForm> {
    hopf_normal_form_l2(&admit(p, eq)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    Subcritical,
    Supercritical,
    /// `l1 = 0`; the flag records `l2 > 0`.
    BautinCandidate {
        l2_positive: bool,
    },
    HigherDegenerate,
}

impl Criticality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criticality::Subcritical => "subcritical",
            Criticality::Supercritical => "supercritical",
            Criticality::BautinCandidate { l2_positive: true } => "bautin (l2 > 0)",
            Criticality::BautinCandidate { l2_positive: false } => "bautin (l2 < 0)",
            Criticality::HigherDegenerate => "higher degenerate",
        }
    }
}

pub fn criticality_verdict(l1: f64, l2: Option<f64>) -> Criticality {
    let scale = 1.0 + l2.map_or(0.0, f64::abs);
    if l1.abs() >= L1_ZERO_TOL * scale {
        return if l1 > 0.0 {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        };
    }
    match l2 {
        Some(v) if v.abs() >= L2_ZERO_TOL => Criticality::BautinCandidate { l2_positive: v > 0.0 },
        _ => Criticality::HigherDegenerate,
    }
}
