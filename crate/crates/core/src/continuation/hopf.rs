//! Two-parameter continuation of the Hopf set `{f = 0, A0 = A1 A2}` with
//! GH and BT detection.

use nalgebra::{DMatrix, DVector};

use super::arclength::{correct, locate, make_point, trace, Curve, TracePoint};
use super::equilibrium::{pack, params_ok, regular, unpack};
use super::{BifurcationEvent, Branch, BranchPoint, EventKind, EventLocation, StepControl, LOCATE_TOL};
use crate::error::{Error, Result};
use crate::lyapunov::{criticality_verdict, hopf_normal_form, hopf_normal_form_l2, Criticality, ModelAt};
use crate::model::{
    jacobian_unchecked, param_derivative_unchecked, vector_field_unchecked, ModelParams, ParamName, State,
};
use crate::stability::CharCoeffs;

const MAX_POINTS: usize = 20_000;

/// `l1` magnitude below which a located sign change counts as a zero
/// rather than a pole.
const GH_ACCEPT: f64 = 1e-6;

pub(crate) struct HopfCurve {
    pub base: ModelParams,
    pub free: [ParamName; 2],
}

impl HopfCurve {
    fn split(&self, u: &DVector<f64>) -> (ModelParams, nalgebra::Vector3<f64>) {
        unpack(&self.base, &self.free, u)
    }

    pub(crate) fn coeffs(&self, u: &DVector<f64>) -> CharCoeffs {
        let (p, x) = self.split(u);
        CharCoeffs::from_matrix(&jacobian_unchecked(&p, &x))
    }

    fn hopf_row(&self, u: &DVector<f64>) -> f64 {
        let cc = self.coeffs(u);
        (cc.a0 - cc.a1 * cc.a2) / cc.scale()
    }

    pub(crate) fn l1(&self, u: &DVector<f64>) -> Option<f64> {
        let (p, x) = self.split(u);
        hopf_normal_form(&ModelAt { params: &p, x }).ok().map(|nf| nf.l1)
    }
}

impl Curve for HopfCurve {
    fn equations(&self) -> usize {
        4
    }

    fn residual(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let (p, x) = self.split(u);
        if !(params_ok(&p) && regular(&p, &x)) {
            return None;
        }
        let f = vector_field_unchecked(&p, &x);
        Some(DVector::from_vec(vec![f[0], f[1], f[2], self.hopf_row(u)]))
    }

    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (p, x) = self.split(u);
        if !(params_ok(&p) && regular(&p, &x)) {
            return None;
        }
        let mut m = DMatrix::zeros(4, 5);
        m.view_mut((0, 0), (3, 3)).copy_from(&jacobian_unchecked(&p, &x));
        for (k, n) in self.free.iter().enumerate() {
            m.view_mut((0, 3 + k), (3, 1))
                .copy_from(&param_derivative_unchecked(&p, &x, *n));
        }
        for k in 0..5 {
            let h = 1e-7 * (1.0 + u[k].abs());
            let mut up = u.clone();
            up[k] += h;
            let mut um = u.clone();
            um[k] -= h;
            let (pp, xp) = self.split(&up);
            let (pm, xm) = self.split(&um);
            if !(params_ok(&pp) && params_ok(&pm) && regular(&pp, &xp) && regular(&pm, &xm)) {
                return None;
            }
            m[(3, k)] = (self.hopf_row(&up) - self.hopf_row(&um)) / (2.0 * h);
        }
        Some(m)
    }
}

fn location(c: &HopfCurve, u: &DVector<f64>) -> EventLocation {
    EventLocation {
        params: vec![(c.free[0], u[3]), (c.free[1], u[4])],
        state: State::new(u[0], u[1], u[2]),
    }
}

fn to_branch_point(c: &HopfCurve, tp: &TracePoint, s: f64, tau_bp: f64) -> BranchPoint {
    let cc = c.coeffs(&tp.u);
    BranchPoint {
        s,
        params: vec![tp.u[3], tp.u[4]],
        state: State::new(tp.u[0], tp.u[1], tp.u[2]),
        coeffs: cc,
        tau_lp: cc.a0,
        tau_h: cc.a1 * cc.a2 - cc.a0,
        tau_bp,
        l1: if cc.a1 > 0.0 { c.l1(&tp.u) } else { None },
    }
}

fn gh_event(c: &HopfCurve, u: &DVector<f64>) -> Option<BifurcationEvent> {
    let (p, x) = c.split(u);
    let nf = hopf_normal_form_l2(&ModelAt { params: &p, x }).ok()?;
    if nf.l1.abs() > GH_ACCEPT {
        return None;
    }
    let l2 = nf.l2.unwrap_or(f64::NAN);
    let cc = c.coeffs(u);
    let degenerate = matches!(criticality_verdict(0.0, Some(l2)), Criticality::HigherDegenerate);
    Some(BifurcationEvent {
        kind: EventKind::GH,
        location: location(c, u),
        certificates: vec![
            ("l1".into(), nf.l1),
            ("l2".into(), l2),
            ("hopf_residual".into(), (cc.a0 - cc.a1 * cc.a2).abs()),
            ("A1".into(), cc.a1),
            ("omega".into(), nf.omega),
            ("higher_degenerate".into(), if degenerate { 1.0 } else { 0.0 }),
        ],
    })
}

fn bt_event(c: &HopfCurve, u: &DVector<f64>) -> BifurcationEvent {
    let cc = c.coeffs(u);
    BifurcationEvent {
        kind: EventKind::BT,
        location: location(c, u),
        certificates: vec![
            ("A0".into(), cc.a0 / cc.scale()),
            ("A1".into(), cc.a1),
            ("A2".into(), cc.a2),
        ],
    }
}

/// Detects GH along one traced half; a final point with `A1 <= 0` is
/// replaced by the located BT point.
fn detect(c: &HopfCurve, pts: &mut Vec<TracePoint>) -> Vec<(f64, BifurcationEvent)> {
    let mut out = Vec::new();
    let n = pts.len();
    if n >= 2 && c.coeffs(&pts[n - 1].u).a1 <= 0.0 {
        let test = |u: &DVector<f64>| Some(c.coeffs(u).a1);
        if let Some(q) = locate(c, &pts[n - 2], &pts[n - 1], &test, 1e-13, 0.0) {
            out.push((q.s, bt_event(c, &q.u)));
            pts[n - 1] = q;
        } else {
            pts.pop();
        }
    }
    let l1s: Vec<Option<f64>> = pts.iter().map(|tp| c.l1(&tp.u)).collect();
    for i in 1..pts.len() {
        let (Some(la), Some(lb)) = (l1s[i - 1], l1s[i]) else {
            continue;
        };
        if la.signum() == lb.signum() {
            continue;
        }
        let test = |u: &DVector<f64>| c.l1(u);
        if let Some(q) = locate(c, &pts[i - 1], &pts[i], &test, 1e-13, LOCATE_TOL * 1e-3) {
            if let Some(e) = gh_event(c, &q.u) {
                out.push((q.s, e));
            }
        }
    }
    out
}

/// Continues a Hopf point in the two parameters `free`, within the box
/// `ranges`, in both directions.
pub fn continue_hopf(
    p: &ModelParams,
    start: &BifurcationEvent,
    free: [ParamName; 2],
    ranges: [(f64, f64); 2],
    step: StepControl,
) -> Result<Branch> {
    if start.kind != EventKind::H {
        return Err(Error::Precondition(format!(
            "Hopf continuation needs an H event, got {}",
            start.kind.as_str()
        )));
    }
    if free[0] == free[1] {
        return Err(Error::Precondition("the two free parameters must differ".into()));
    }
    let p0 = start.location.apply(p);
    p0.validate()?;
    for (k, n) in free.iter().enumerate() {
        let v = p0.get(*n);
        let (lo, hi) = ranges[k];
        if !(lo < hi && lo <= v && v <= hi) {
            return Err(Error::Precondition(format!("{n} = {v} must lie in [{lo}, {hi}]")));
        }
    }
    let c = HopfCurve { base: p0, free };
    let u0 = pack(&start.location.state.to_vector(), &[p0.get(free[0]), p0.get(free[1])]);
    let mut e2 = DVector::zeros(5);
    e2[4] = 1.0;
    let (u0, _) =
        correct(&c, &u0, &e2, 0.0).ok_or_else(|| Error::NoConvergence("start is not on the Hopf set".into()))?;
    if c.coeffs(&u0).a1 <= 0.0 {
        return Err(Error::NotHopf {
            residual: c.hopf_row(&u0).abs(),
            a1: c.coeffs(&u0).a1,
        });
    }
    let first = make_point(&c, u0, None, 3, 0.0)
        .ok_or_else(|| Error::NoConvergence("no tangent at the starting Hopf point".into()))?;

    let inside = |u: &DVector<f64>| {
        (0..2).all(|k| {
            let (lo, hi) = ranges[k];
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            u[3 + k] >= lo - slack && u[3 + k] <= hi + slack
        })
    };
    let stop = |_: &TracePoint, b: &TracePoint| c.coeffs(&b.u).a1 <= 0.0;

    let (mut fwd, t_fwd) = trace(&c, first.clone(), &step, MAX_POINTS, &inside, &stop);
    let mut back_start = first.clone();
    back_start.tangent = -&first.tangent;
    back_start.bordered_det = -first.bordered_det;
    let (mut bwd, t_bwd) = trace(&c, back_start, &step, MAX_POINTS, &inside, &stop);

    let mut events = detect(&c, &mut fwd);
    events.extend(detect(&c, &mut bwd).into_iter().map(|(s, e)| (-s, e)));

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
    events.dedup_by(|x, y| x.1.kind == y.1.kind && (x.0 - y.0).abs() <= 1e-8 * (1.0 + x.0.abs()));

    Ok(Branch {
        base: p0,
        free_params: free.to_vec(),
        points,
        events: events.into_iter().map(|(_, e)| e).collect(),
        terminated: t_fwd || t_bwd,
    })
}
