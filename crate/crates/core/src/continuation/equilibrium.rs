//! One-parameter continuation of equilibria with LP, BP and H detection.

use nalgebra::{DMatrix, DVector, Vector3};

use super::arclength::{correct, locate, make_point, trace, Curve, TracePoint};
use super::{BifurcationEvent, Branch, BranchPoint, EventKind, EventLocation, StepControl, LOCATE_TOL};
use crate::equilibria::Equilibrium;
use crate::error::{Error, Result};
use crate::lyapunov::{hopf_normal_form, ModelAt};
use crate::model::{
    jacobian_unchecked, param_derivative_unchecked, vector_field_unchecked, ModelParams, ParamName, State,
};
use crate::stability::CharCoeffs;

/// Points per traced direction.
const MAX_POINTS: usize = 20_000;

pub(crate) fn regular(p: &ModelParams, x: &Vector3<f64>) -> bool {
    p.a + x[1] > 1e-12 * p.a && x.iter().all(|v| v.is_finite())
}

/// Pair of the unknown vector `(E1, E2, M, lambda...)` and parameters.
pub(crate) fn unpack(base: &ModelParams, free: &[ParamName], u: &DVector<f64>) -> (ModelParams, Vector3<f64>) {
    let mut p = *base;
    for (k, n) in free.iter().enumerate() {
        p.set(*n, u[3 + k]);
    }
    (p, Vector3::new(u[0], u[1], u[2]))
}

pub(crate) fn pack(x: &Vector3<f64>, lambdas: &[f64]) -> DVector<f64> {
    DVector::from_iterator(3 + lambdas.len(), x.iter().copied().chain(lambdas.iter().copied()))
}

pub(crate) fn params_ok(p: &ModelParams) -> bool {
    [p.r1, p.r2, p.alpha, p.kappa1, p.kappa2, p.a, p.c, p.m]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
}

/// `Re` of the oscillatory eigenvalue pair, or of the rightmost eigenvalue.
pub(crate) fn oscillatory_real_part(cc: &CharCoeffs) -> f64 {
    let ev = cc.eigenvalues();
    let k = (0..3)
        .max_by(|&i, &j| {
            ev[i]
                .im
                .abs()
                .total_cmp(&ev[j].im.abs())
                .then(ev[i].re.total_cmp(&ev[j].re))
        })
        .unwrap();
    ev[k].re
}

pub(crate) struct EquilibriumCurve {
    pub base: ModelParams,
    pub free: ParamName,
}

impl EquilibriumCurve {
    fn split(&self, u: &DVector<f64>) -> (ModelParams, Vector3<f64>) {
        unpack(&self.base, &[self.free], u)
    }

    fn coeffs(&self, u: &DVector<f64>) -> CharCoeffs {
        let (p, x) = self.split(u);
        CharCoeffs::from_matrix(&jacobian_unchecked(&p, &x))
    }
}

impl Curve for EquilibriumCurve {
    fn equations(&self) -> usize {
        3
    }

    fn residual(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let (p, x) = self.split(u);
        if !(params_ok(&p) && regular(&p, &x)) {
            return None;
        }
        let f = vector_field_unchecked(&p, &x);
        Some(DVector::from_column_slice(f.as_slice()))
    }

    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (p, x) = self.split(u);
        if !(params_ok(&p) && regular(&p, &x)) {
            return None;
        }
        let j = jacobian_unchecked(&p, &x);
        let d = param_derivative_unchecked(&p, &x, self.free);
        let mut m = DMatrix::zeros(3, 4);
        m.view_mut((0, 0), (3, 3)).copy_from(&j);
        m.view_mut((0, 3), (3, 1)).copy_from(&d);
        Some(m)
    }
}

fn scaled_hopf(cc: &CharCoeffs) -> f64 {
    (cc.a1 * cc.a2 - cc.a0) / cc.scale()
}

fn to_branch_point(c: &EquilibriumCurve, tp: &TracePoint, s: f64, tau_bp: f64) -> BranchPoint {
    let cc = c.coeffs(&tp.u);
    BranchPoint {
        s,
        params: vec![tp.u[3]],
        state: State::new(tp.u[0], tp.u[1], tp.u[2]),
        coeffs: cc,
        tau_lp: cc.a0,
        tau_h: cc.a1 * cc.a2 - cc.a0,
        tau_bp,
        l1: None,
    }
}

fn location(c: &EquilibriumCurve, u: &DVector<f64>) -> EventLocation {
    EventLocation {
        params: vec![(c.free, u[3])],
        state: State::new(u[0], u[1], u[2]),
    }
}

/// Hopf event at a point of the equilibrium curve with its certificates.
pub(crate) fn hopf_event(c: &EquilibriumCurve, tp: &TracePoint) -> BifurcationEvent {
    let cc = c.coeffs(&tp.u);
    let (p, x) = c.split(&tp.u);
    let delta = 1e-6 * (1.0 + tp.u[3].abs());
    let side =
        |sg: f64| correct(c, &tp.u, &tp.tangent, sg * delta).map(|(u, _)| (u[3], oscillatory_real_part(&c.coeffs(&u))));
    let transversality = match (side(1.0), side(-1.0)) {
        (Some((lp, rp)), Some((lm, rm))) if lp != lm => (rp - rm) / (lp - lm),
        _ => f64::NAN,
    };
    let l1 = hopf_normal_form(&ModelAt { params: &p, x }).map_or(f64::NAN, |nf| nf.l1);
    BifurcationEvent {
        kind: EventKind::H,
        location: location(c, &tp.u),
        certificates: vec![
            ("hopf_residual".into(), (cc.a0 - cc.a1 * cc.a2).abs()),
            ("A1".into(), cc.a1),
            ("omega".into(), cc.a1.max(0.0).sqrt()),
            ("transversality".into(), transversality),
            ("l1".into(), l1),
        ],
    }
}

fn detect(c: &EquilibriumCurve, pts: &[TracePoint]) -> Vec<(TracePoint, BifurcationEvent)> {
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ca, cb) = (c.coeffs(&a.u), c.coeffs(&b.u));
        let bp = a.bordered_det.signum() != b.bordered_det.signum();
        if bp {
            let test = |u: &DVector<f64>| make_point(c, u.clone(), Some(&a.tangent), 0, 0.0).map(|q| q.bordered_det);
            if let Some(q) = locate(c, a, b, &test, 0.0, LOCATE_TOL) {
                let cc = c.coeffs(&q.u);
                out.push((
                    q.clone(),
                    BifurcationEvent {
                        kind: EventKind::BP,
                        location: location(c, &q.u),
                        certificates: vec![("tau_BP".into(), q.bordered_det), ("A0".into(), cc.a0 / cc.scale())],
                    },
                ));
            }
        } else if ca.a0.signum() != cb.a0.signum() {
            let test = |u: &DVector<f64>| {
                let cc = c.coeffs(u);
                Some(cc.a0 / cc.scale())
            };
            if let Some(q) = locate(c, a, b, &test, 1e-14, LOCATE_TOL) {
                let cc = c.coeffs(&q.u);
                out.push((
                    q.clone(),
                    BifurcationEvent {
                        kind: EventKind::LP,
                        location: location(c, &q.u),
                        certificates: vec![
                            ("A0".into(), cc.a0 / cc.scale()),
                            ("A1".into(), cc.a1),
                            ("A2".into(), cc.a2),
                        ],
                    },
                ));
            }
        }
        let ha = ca.a1 * ca.a2 - ca.a0;
        let hb = cb.a1 * cb.a2 - cb.a0;
        if ha.signum() != hb.signum() && ca.a1 > 0.0 && cb.a1 > 0.0 {
            let test = |u: &DVector<f64>| Some(scaled_hopf(&c.coeffs(u)));
            if let Some(q) = locate(c, a, b, &test, 1e-15, 0.0) {
                if c.coeffs(&q.u).a1 > 0.0 {
                    let ev = hopf_event(c, &q);
                    out.push((q, ev));
                }
            }
        }
    }
    out
}

/// Replaces the last point by the crossing of `lambda = bound`.
fn clip(c: &EquilibriumCurve, pts: &mut Vec<TracePoint>, lo: f64, hi: f64) {
    if pts.len() < 2 {
        return;
    }
    let last = pts.last().unwrap().u[3];
    let bound = if last > hi {
        hi
    } else if last < lo {
        lo
    } else {
        return;
    };
    let n = pts.len();
    let test = |u: &DVector<f64>| Some(u[3] - bound);
    if let Some(q) = locate(c, &pts[n - 2], &pts[n - 1], &test, 1e-13 * (1.0 + bound.abs()), 0.0) {
        pts[n - 1] = q;
    }
}

/// Continues the equilibrium `start` in `free` over `range`, in both
/// directions from the starting value.
pub fn continue_equilibrium(
    p: &ModelParams,
    start: &Equilibrium,
    free: ParamName,
    range: (f64, f64),
    step: StepControl,
) -> Result<Branch> {
    p.validate()?;
    let (lo, hi) = range;
    let lam0 = p.get(free);
    if !(lo < hi && lo <= lam0 && lam0 <= hi) {
        return Err(Error::Precondition(format!(
            "{free} = {lam0} must lie in the range [{lo}, {hi}]"
        )));
    }
    let c = EquilibriumCurve { base: *p, free };
    let u0 = pack(&start.state.to_vector(), &[lam0]);
    let mut e_lam = DVector::zeros(4);
    e_lam[3] = 1.0;
    let (u0, _) = correct(&c, &u0, &e_lam, 0.0)
        .ok_or_else(|| Error::NoConvergence(format!("start is not an equilibrium at {free} = {lam0}")))?;
    let first = make_point(&c, u0, None, 3, 0.0)
        .ok_or_else(|| Error::NoConvergence("no tangent at the starting point".into()))?;

    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    let inside = |u: &DVector<f64>| u[3] >= lo - slack && u[3] <= hi + slack;
    let no_stop = |_: &TracePoint, _: &TracePoint| false;

    let (mut fwd, t_fwd) = trace(&c, first.clone(), &step, MAX_POINTS, &inside, &no_stop);
    let mut back_start = first.clone();
    back_start.tangent = -&first.tangent;
    back_start.bordered_det = -first.bordered_det;
    let (mut bwd, t_bwd) = trace(&c, back_start, &step, MAX_POINTS, &inside, &no_stop);
    clip(&c, &mut fwd, lo, hi);
    clip(&c, &mut bwd, lo, hi);

    let mut events: Vec<(f64, BifurcationEvent)> = Vec::new();
    for (q, e) in detect(&c, &fwd) {
        events.push((q.s, e));
    }
    for (q, e) in detect(&c, &bwd) {
        events.push((-q.s, e));
    }

    // backward half reversed, then the forward half; tau_BP oriented along
    // the forward tangent
    let mut points: Vec<BranchPoint> = bwd
        .iter()
        .skip(1)
        .rev()
        .map(|tp| to_branch_point(&c, tp, -tp.s, -tp.bordered_det))
        .collect();
    points.extend(fwd.iter().map(|tp| to_branch_point(&c, tp, tp.s, tp.bordered_det)));
    let s0 = points.first().map_or(0.0, |q| q.s);
    for q in &mut points {
        q.s -= s0;
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    // an event found from both sides of the start point is reported once
    events.dedup_by(|x, y| x.1.kind == y.1.kind && (x.0 - y.0).abs() <= 1e-8 * (1.0 + x.0.abs()));

    Ok(Branch {
        base: *p,
        free_params: vec![free],
        points,
        events: events.into_iter().map(|(_, e)| e).collect(),
        terminated: t_fwd || t_bwd,
    })
}

/// Newton on `{f = 0, (A1 A2 - A0)/scale = 0}` in `(state, free)` from an
/// equilibrium near a Hopf point.
pub fn locate_hopf(p: &ModelParams, near: &State, free: ParamName) -> Result<BifurcationEvent> {
    p.validate()?;
    let c = EquilibriumCurve { base: *p, free };
    let mut u = pack(&near.to_vector(), &[p.get(free)]);
    let mut e_lam = DVector::zeros(4);
    e_lam[3] = 1.0;
    u = correct(&c, &u, &e_lam, 0.0)
        .ok_or_else(|| Error::NoConvergence("start is not an equilibrium".into()))?
        .0;
    let g = |u: &DVector<f64>| -> Option<DVector<f64>> {
        let mut r = c.residual(u)?.insert_row(3, 0.0);
        r[3] = scaled_hopf(&c.coeffs(u));
        Some(r)
    };
    for _ in 0..50 {
        let r = g(&u).ok_or_else(|| Error::NoConvergence("left the domain".into()))?;
        let mut jac = DMatrix::zeros(4, 4);
        jac.view_mut((0, 0), (3, 4)).copy_from(&c.jacobian(&u).unwrap());
        for k in 0..4 {
            let h = 1e-7 * (1.0 + u[k].abs());
            let mut up = u.clone();
            up[k] += h;
            let mut um = u.clone();
            um[k] -= h;
            jac[(3, k)] = (scaled_hopf(&c.coeffs(&up)) - scaled_hopf(&c.coeffs(&um))) / (2.0 * h);
        }
        let du = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::NoConvergence("singular Hopf system".into()))?;
        u += &du;
        if du.amax() <= 1e-14 * (1.0 + u.amax()) {
            break;
        }
    }
    let r = g(&u).ok_or_else(|| Error::NoConvergence("left the domain".into()))?;
    let cc = c.coeffs(&u);
    if r.amax() > 1e-9 * (1.0 + u.amax()) || cc.a1 <= 0.0 {
        return Err(Error::NotHopf {
            residual: (cc.a0 - cc.a1 * cc.a2).abs(),
            a1: cc.a1,
        });
    }
    let tp =
        make_point(&c, u, None, 3, 0.0).ok_or_else(|| Error::NoConvergence("no tangent at the Hopf point".into()))?;
    Ok(hopf_event(&c, &tp))
}
