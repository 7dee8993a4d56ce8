//! Limit cycles by single shooting on a Poincare section, and their
//! continuation in one parameter with fold (LPC) detection.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, SVector, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::arclength::{locate, make_point, trace, Curve, TracePoint};
use super::equilibrium::{oscillatory_real_part, params_ok, regular};
use super::{BifurcationEvent, EventKind, EventLocation, StepControl, LOCATE_TOL};
use crate::error::{Error, Result};
use crate::integrator::{integrate_system, IntegrationConfig, ModelSystem, OdeSystem};
use crate::lyapunov::{hopf_normal_form, ModelAt};
use crate::model::{
    jacobian_unchecked, param_derivative_unchecked, vector_field_unchecked, ModelParams, ParamName, State,
};
use crate::stability::CharCoeffs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Closure tolerance `|phi(T, x0) - x0|_inf`.
    pub closure_tol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-13,
            closure_tol: 1e-9,
            max_iter: 25,
            max_restarts: 4,
        }
    }
}

/// Hyperplane `normal . (x - point) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub point: State,
    pub normal: [f64; 3],
}

impl Section {
    fn eval(&self, x: &Vector3<f64>) -> f64 {
        Vector3::from(self.normal).dot(&(x - self.point.to_vector()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub params: ModelParams,
    pub anchor: State,
    pub period: f64,
    /// Ordered by distance from 1; the first is the trivial multiplier.
    pub floquet: [Complex64; 3],
    pub stable: bool,
    pub section: Section,
    pub closure_residual: f64,
    /// `max_t |x(t) - x_eq|_2` over the orbit.
    pub amplitude: f64,
    /// The equilibrium the cycle surrounds.
    pub equilibrium: State,
}

/// State, fundamental matrix and parameter sensitivity (3 + 9 + 3).
struct SensitivitySystem<'a> {
    p: &'a ModelParams,
    free: Option<ParamName>,
}

impl OdeSystem<15> for SensitivitySystem<'_> {
    fn rhs(&self, _t: f64, y: &SVector<f64, 15>) -> SVector<f64, 15> {
        let x = Vector3::new(y[0], y[1], y[2]);
        if !regular(self.p, &x) {
            return SVector::repeat(f64::NAN);
        }
        let j = jacobian_unchecked(self.p, &x);
        let phi = Matrix3::from_column_slice(&y.as_slice()[3..12]);
        let s = Vector3::new(y[12], y[13], y[14]);
        let ds = match self.free {
            Some(n) => j * s + param_derivative_unchecked(self.p, &x, n),
            None => Vector3::zeros(),
        };
        let mut out = SVector::<f64, 15>::zeros();
        out.fixed_rows_mut::<3>(0)
            .copy_from(&vector_field_unchecked(self.p, &x));
        out.as_mut_slice()[3..12].copy_from_slice((j * phi).as_slice());
        out.fixed_rows_mut::<3>(12).copy_from(&ds);
        out
    }

    fn in_domain(&self, y: &SVector<f64, 15>) -> bool {
        self.p.a + y[1] > 1e-12 * self.p.a
    }
}

struct FlowSens {
    end: Vector3<f64>,
    monodromy: Matrix3<f64>,
    dparam: Vector3<f64>,
}

fn flow_sens(
    p: &ModelParams,
    free: Option<ParamName>,
    x0: &Vector3<f64>,
    t: f64,
    cfg: &ShootingConfig,
) -> Option<FlowSens> {
    if !(t > 0.0 && t.is_finite() && params_ok(p) && regular(p, x0)) {
        return None;
    }
    let mut y0 = SVector::<f64, 15>::zeros();
    y0.fixed_rows_mut::<3>(0).copy_from(x0);
    y0.as_mut_slice()[3..12].copy_from_slice(Matrix3::<f64>::identity().as_slice());
    let ic = IntegrationConfig::span(0.0, t).with_tolerances(cfg.rtol, cfg.atol);
    let tr = integrate_system(&SensitivitySystem { p, free }, y0, &ic, &[]).ok()?;
    if !tr.completed() {
        return None;
    }
    let y = tr.y_final();
    Some(FlowSens {
        end: Vector3::new(y[0], y[1], y[2]),
        monodromy: Matrix3::from_column_slice(&y.as_slice()[3..12]),
        dparam: Vector3::new(y[12], y[13], y[14]),
    })
}

fn orbit_amplitude(p: &ModelParams, x0: &Vector3<f64>, t: f64, center: &Vector3<f64>, cfg: &ShootingConfig) -> f64 {
    let ic = IntegrationConfig::span(0.0, t).with_tolerances(cfg.rtol, cfg.atol);
    match integrate_system(&ModelSystem(p), *x0, &ic, &[]) {
        Ok(tr) if tr.completed() => tr
            .sample(400)
            .iter()
            .map(|(_, y)| (y - center).norm())
            .fold(0.0, f64::max),
        _ => f64::NAN,
    }
}

fn sorted_multipliers(m: &Matrix3<f64>) -> [Complex64; 3] {
    let ev = m.complex_eigenvalues();
    let mut v = [ev[0], ev[1], ev[2]];
    v.sort_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()));
    v
}

/// Unit null vector of a nearly singular real 3x3 matrix.
fn real_null_vector(a: &Matrix3<f64>) -> Vector3<f64> {
    let r = [a.row(0).transpose(), a.row(1).transpose(), a.row(2).transpose()];
    let c = [r[0].cross(&r[1]), r[0].cross(&r[2]), r[1].cross(&r[2])];
    let best = c.iter().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap();
    best / best.norm()
}

fn equilibrium_near(p: &ModelParams, guess: &Vector3<f64>) -> Result<Vector3<f64>> {
    let mut x = *guess;
    for _ in 0..50 {
        if !regular(p, &x) {
            break;
        }
        let f = vector_field_unchecked(p, &x);
        let dx = jacobian_unchecked(p, &x)
            .lu()
            .solve(&(-f))
            .ok_or_else(|| Error::NoConvergence("singular Jacobian at the equilibrium".into()))?;
        x += dx;
        if dx.amax() <= 1e-15 * (1.0 + x.amax()) {
            return Ok(x);
        }
    }
    if regular(p, &x) && vector_field_unchecked(p, &x).amax() <= 1e-10 * (1.0 + x.amax()) {
        Ok(x)
    } else {
        Err(Error::NoConvergence("equilibrium Newton failed".into()))
    }
}

/// Newton on `{phi(T, x0) - x0 = 0, section(x0) = 0}`.
fn shoot(
    p: &ModelParams,
    section: &Section,
    x_init: Vector3<f64>,
    t_init: f64,
    cfg: &ShootingConfig,
) -> Option<(Vector3<f64>, f64, FlowSens)> {
    let mut x = x_init;
    let mut t = t_init;
    let n = Vector3::from(section.normal);
    for _ in 0..cfg.max_iter {
        let fs = flow_sens(p, None, &x, t, cfg)?;
        let r = fs.end - x;
        let closure = r.amax();
        if closure <= cfg.closure_tol {
            return Some((x, t, fs));
        }
        let fe = vector_field_unchecked(p, &fs.end);
        let mut a = Matrix4::zeros();
        a.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(fs.monodromy - Matrix3::identity()));
        a.fixed_view_mut::<3, 1>(0, 3).copy_from(&fe);
        a.fixed_view_mut::<1, 3>(3, 0).copy_from(&n.transpose());
        let rhs = Vector4::new(-r[0], -r[1], -r[2], -section.eval(&x));
        let d = a.lu().solve(&rhs)?;
        // damp steps that would more than halve or double the period
        let mut lam = 1.0;
        while t + lam * d[3] < 0.5 * t || t + lam * d[3] > 2.0 * t {
            lam *= 0.5;
        }
        x += d.fixed_rows::<3>(0) * lam;
        t += d[3] * lam;
        if !(regular(p, &x) && t.is_finite()) {
            return None;
        }
    }
    None
}

fn finish(
    p: &ModelParams,
    section: Section,
    eq: Vector3<f64>,
    x: Vector3<f64>,
    t: f64,
    fs: &FlowSens,
    cfg: &ShootingConfig,
) -> LimitCycle {
    let floquet = sorted_multipliers(&fs.monodromy);
    LimitCycle {
        params: *p,
        anchor: State::from_vector(&x),
        period: t,
        floquet,
        stable: floquet[1].norm() < 1.0 && floquet[2].norm() < 1.0,
        section,
        closure_residual: (fs.end - x).amax(),
        amplitude: orbit_amplitude(p, &x, t, &eq, cfg),
        equilibrium: State::from_vector(&eq),
    }
}

impl LimitCycle {
    /// Multiplier nearest 1, which should be the trivial one.
    pub fn trivial_multiplier(&self) -> Complex64 {
        self.floquet[0]
    }

    /// Count of multipliers within `tol` of 1.
    pub fn multipliers_near_one(&self, tol: f64) -> usize {
        self.floquet.iter().filter(|m| (*m - 1.0).norm() < tol).count()
    }

    /// Largest modulus among the nontrivial multipliers.
    pub fn dominant_multiplier(&self) -> f64 {
        self.floquet[1].norm().max(self.floquet[2].norm())
    }

    /// Re-integrates for one period and returns the closure error.
    pub fn closure_check(&self, cfg: &ShootingConfig) -> Result<f64> {
        let ic = IntegrationConfig::span(0.0, self.period).with_tolerances(cfg.rtol, cfg.atol);
        let x0 = self.anchor.to_vector();
        let tr = integrate_system(&ModelSystem(&self.params), x0, &ic, &[])?;
        if !tr.completed() {
            return Err(Error::Integration(format!("{:?}", tr.termination)));
        }
        Ok((tr.y_final() - x0).amax())
    }
}

/// Cycle born at the Hopf point `near`, at its first located parameter
/// shifted by `offset`.
///
/// The section passes through the equilibrium and contains the real
/// eigenvector and the real part of the critical eigenvector. The initial
/// guess comes from the normal-form radius `sqrt(-mu / (l1 omega))`.
pub fn find_limit_cycle(
    p: &ModelParams,
    near: &BifurcationEvent,
    offset: f64,
    cfg: &ShootingConfig,
) -> Result<LimitCycle> {
    if near.kind != EventKind::H && near.kind != EventKind::GH {
        return Err(Error::Precondition(format!(
            "cycles start from a Hopf event, got {}",
            near.kind.as_str()
        )));
    }
    let ph = near.location.apply(p);
    let (free, lam_h) = *near
        .location
        .params
        .first()
        .ok_or_else(|| Error::Precondition("event has no parameter location".into()))?;
    let xh = near.location.state.to_vector();
    let nf = hopf_normal_form(&ModelAt { params: &ph, x: xh })?;

    let po = ph.with(free, lam_h + offset);
    po.validate()?;
    let eq = equilibrium_near(&po, &xh)?;
    let j = jacobian_unchecked(&po, &eq);
    let cc = CharCoeffs::from_matrix(&j);
    let mu = oscillatory_real_part(&cc);
    let r2 = -mu / (nf.l1 * nf.omega);
    if !(r2 > 0.0 && r2.is_finite()) {
        return Err(Error::Precondition(format!(
            "no cycle predicted on this side: mu = {mu:e}, l1 = {:e}",
            nf.l1
        )));
    }
    let ev = cc.eigenvalues();
    let k_real = (0..3)
        .min_by(|&a, &b| ev[a].im.abs().total_cmp(&ev[b].im.abs()))
        .unwrap();
    let v3 = real_null_vector(&(j - Matrix3::identity() * ev[k_real].re));
    let q = nf.q_vec();
    let re_q = Vector3::new(q[0].re, q[1].re, q[2].re);
    let normal = re_q.cross(&v3).normalize();
    let section = Section {
        point: State::from_vector(&eq),
        normal: normal.into(),
    };
    let period0 = 2.0 * std::f64::consts::PI / nf.omega;

    let mut scale = 1.0;
    for attempt in 0..=cfg.max_restarts {
        let x0 = eq + re_q * (2.0 * r2.sqrt() * scale);
        if let Some((x, t, fs)) = shoot(&po, &section, x0, period0, cfg) {
            // reject collapse onto the equilibrium
            if (x - eq).norm() > 1e-3 * r2.sqrt() {
                return Ok(finish(&po, section, eq, x, t, &fs, cfg));
            }
        }
        scale = if attempt % 2 == 0 {
            0.5 / scale
        } else {
            1.0 / scale * 1.5
        };
    }
    Err(Error::NoConvergence("cycle not found by shooting".into()))
}

/// Shooting solutions `(x0, T, lambda)` on a fixed section.
struct CycleCurve {
    base: ModelParams,
    free: ParamName,
    section: Section,
    cfg: ShootingConfig,
}

impl CycleCurve {
    fn params(&self, u: &DVector<f64>) -> ModelParams {
        self.base.with(self.free, u[4])
    }

    fn x(u: &DVector<f64>) -> Vector3<f64> {
        Vector3::new(u[0], u[1], u[2])
    }

    fn sens(&self, u: &DVector<f64>, with_param: bool) -> Option<FlowSens> {
        let p = self.params(u);
        flow_sens(&p, with_param.then_some(self.free), &Self::x(u), u[3], &self.cfg)
    }
}

impl Curve for CycleCurve {
    fn equations(&self) -> usize {
        4
    }

    fn residual(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let fs = self.sens(u, false)?;
        let r = fs.end - Self::x(u);
        Some(DVector::from_vec(vec![
            r[0],
            r[1],
            r[2],
            self.section.eval(&Self::x(u)),
        ]))
    }

    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let fs = self.sens(u, true)?;
        let p = self.params(u);
        let mut m = DMatrix::zeros(4, 5);
        m.view_mut((0, 0), (3, 3))
            .copy_from(&(fs.monodromy - Matrix3::identity()));
        m.view_mut((0, 3), (3, 1))
            .copy_from(&vector_field_unchecked(&p, &fs.end));
        m.view_mut((0, 4), (3, 1)).copy_from(&fs.dparam);
        for k in 0..3 {
            m[(3, k)] = self.section.normal[k];
        }
        Some(m)
    }

    fn newton_tol(&self) -> f64 {
        self.cfg.closure_tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePoint {
    pub s: f64,
    pub param: f64,
    pub period: f64,
    pub amplitude: f64,
    pub anchor: State,
    pub dominant_multiplier: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFamily {
    pub base: ModelParams,
    pub free: ParamName,
    pub points: Vec<CyclePoint>,
    pub events: Vec<BifurcationEvent>,
    pub terminated: bool,
}

impl CycleFamily {
    pub fn lpc_events(&self) -> impl Iterator<Item = &BifurcationEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::LPC)
    }
}

fn cycle_point(c: &CycleCurve, tp: &TracePoint, s: f64) -> Option<CyclePoint> {
    let p = c.params(&tp.u);
    let x = CycleCurve::x(&tp.u);
    let fs = c.sens(&tp.u, false)?;
    let eq = equilibrium_near(&p, &c.section.point.to_vector()).ok()?;
    let mult = sorted_multipliers(&fs.monodromy);
    Some(CyclePoint {
        s,
        param: tp.u[4],
        period: tp.u[3],
        amplitude: orbit_amplitude(&p, &x, tp.u[3], &eq, &c.cfg),
        anchor: State::from_vector(&x),
        dominant_multiplier: mult[1].norm().max(mult[2].norm()),
        stable: mult[1].norm() < 1.0 && mult[2].norm() < 1.0,
    })
}

fn lpc_event(c: &CycleCurve, tp: &TracePoint) -> Option<BifurcationEvent> {
    let p = c.params(&tp.u);
    let x = CycleCurve::x(&tp.u);
    let fs = c.sens(&tp.u, false)?;
    let mult = sorted_multipliers(&fs.monodromy);
    let eq = equilibrium_near(&p, &c.section.point.to_vector()).ok()?;
    Some(BifurcationEvent {
        kind: EventKind::LPC,
        location: EventLocation {
            params: vec![(c.free, tp.u[4])],
            state: State::from_vector(&x),
        },
        certificates: vec![
            ("dparam_ds".into(), tp.tangent[4]),
            ("period".into(), tp.u[3]),
            ("closure".into(), (fs.end - x).amax()),
            ("second_multiplier".into(), mult[1].re),
            ("amplitude".into(), orbit_amplitude(&p, &x, tp.u[3], &eq, &c.cfg)),
        ],
    })
}

/// Pseudo-arclength sweep of the cycle family through `start` in `free`.
///
/// Both directions are followed until the parameter leaves `range`, the
/// amplitude collapses towards the Hopf point, or `max_points` is reached.
/// Folds in the parameter are reported as LPC events.
pub fn cycle_family_sweep(
    start: &LimitCycle,
    free: ParamName,
    range: (f64, f64),
    step: StepControl,
    max_points: usize,
    cfg: &ShootingConfig,
) -> Result<CycleFamily> {
    let lam0 = start.params.get(free);
    let (lo, hi) = range;
    if !(lo < hi && lo <= lam0 && lam0 <= hi) {
        return Err(Error::Precondition(format!("{free} = {lam0} must lie in [{lo}, {hi}]")));
    }
    let c = CycleCurve {
        base: start.params,
        free,
        section: start.section,
        cfg: *cfg,
    };
    let a = start.anchor;
    let u0 = DVector::from_vec(vec![a.e1, a.e2, a.m, start.period, lam0]);
    let first = make_point(&c, u0, None, 4, 0.0)
        .ok_or_else(|| Error::NoConvergence("no tangent at the starting cycle".into()))?;

    // the family ends where it shrinks back onto the equilibrium; past that
    // point the shooting solution reappears mirrored through it
    let start_offset = start.anchor.to_vector() - start.equilibrium.to_vector();
    let collapsed = |u: &DVector<f64>| {
        let p = c.params(u);
        match equilibrium_near(&p, &c.section.point.to_vector()) {
            Ok(eq) => {
                let x = CycleCurve::x(u);
                (x - eq).dot(&start_offset) <= 0.0 || orbit_amplitude(&p, &x, u[3], &eq, &c.cfg) < 0.5 * start.amplitude
            }
            Err(_) => true,
        }
    };
    let inside = |u: &DVector<f64>| u[4] >= lo && u[4] <= hi && u[3] < 50.0 * start.period;
    let stop = |_: &TracePoint, b: &TracePoint| collapsed(&b.u);
    let (mut fwd, t_fwd) = trace(&c, first.clone(), &step, max_points, &inside, &stop);
    let mut back_start = first.clone();
    back_start.tangent = -&first.tangent;
    let (mut bwd, t_bwd) = trace(&c, back_start, &step, max_points, &inside, &stop);
    for half in [&mut fwd, &mut bwd] {
        if half.len() > 1 && collapsed(&half.last().unwrap().u) {
            half.pop();
        }
    }

    let mut events: Vec<(f64, BifurcationEvent)> = Vec::new();
    for (sign, half) in [(1.0, &fwd), (-1.0, &bwd)] {
        for w in half.windows(2) {
            if w[0].tangent[4].signum() == w[1].tangent[4].signum() {
                continue;
            }
            let test = |u: &DVector<f64>| make_point(&c, u.clone(), Some(&w[0].tangent), 4, 0.0).map(|q| q.tangent[4]);
            if let Some(q) = locate(&c, &w[0], &w[1], &test, 0.0, LOCATE_TOL) {
                if let Some(e) = lpc_event(&c, &q) {
                    events.push((sign * q.s, e));
                }
            }
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut unique: Vec<(f64, BifurcationEvent)> = Vec::new();
    for (s, e) in events {
        let lam = e.location.params[0].1;
        if !unique
            .iter()
            .any(|(_, u)| (u.location.params[0].1 - lam).abs() <= 1e-7 * (1.0 + lam.abs()))
        {
            unique.push((s, e));
        }
    }
    let events = unique;

    let mut points: Vec<CyclePoint> = bwd
        .iter()
        .skip(1)
        .rev()
        .filter_map(|tp| cycle_point(&c, tp, -tp.s))
        .collect();
    points.extend(fwd.iter().filter_map(|tp| cycle_point(&c, tp, tp.s)));
    let s0 = points.first().map_or(0.0, |q| q.s);
    for q in &mut points {
        q.s -= s0;
    }
    Ok(CycleFamily {
        base: start.params,
        free,
        points,
        events: events.into_iter().map(|(_, e)| e).collect(),
        terminated: t_fwd || t_bwd,
    })
}
