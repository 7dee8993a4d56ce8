//! Dormand-Prince 5(4) integration with step-size control, the free
//! fourth-order dense output, and event location on the interpolant.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{jacobian_unchecked, vector_field_unchecked, ModelParams};

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &SVector<f64, N>) -> SVector<f64, N>;

    /// States outside the domain reject the step.
    fn in_domain(&self, _y: &SVector<f64, N>) -> bool {
        true
    }
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    fn rhs(&self, t: f64, y: &SVector<f64, N>) -> SVector<f64, N> {
        self(t, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on `|h|`; `None` means the span length.
    pub max_step: Option<f64>,
    /// `(t0, t1)`; `t1 < t0` integrates backward.
    pub t_span: (f64, f64),
    pub max_steps: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            max_step: None,
            t_span: (0.0, 1.0),
            max_steps: 1_000_000,
        }
    }
}

impl IntegrationConfig {
    pub fn span(t0: f64, t1: f64) -> Self {
        Self {
            t_span: (t0, t1),
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn direction(&self) -> Direction {
        if self.t_span.1 < self.t_span.0 {
            Direction::Backward
        } else {
            Direction::Forward
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.t_span.0.is_finite()
            && self.t_span.1.is_finite()
            && self.max_step.is_none_or(|h| h > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid integration config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    /// A terminal event fired.
    Event,
    /// The right-hand side became non-finite (for the model: `E2` reached
    /// the singular line `E2 = -a`).
    Singular,
    StepUnderflow,
    MaxSteps,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
struct DenseStep<const N: usize> {
    t0: f64,
    h: f64,
    r: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseStep<N> {
    fn eval(&self, t: f64) -> SVector<f64, N> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.r;
        &r[0] + (&r[1] + (&r[2] + (&r[3] + &r[4] * th1) * th) * th1) * th
    }

    fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Rejected steps exceeded half of all attempts.
    pub stiffness_warning: bool,
}

#[derive(Debug, Clone)]
pub struct EventHit<const N: usize> {
    pub t: f64,
    pub y: SVector<f64, N>,
    pub index: usize,
}

/// Result of an integration: the step endpoints plus a dense interpolant.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<SVector<f64, N>>,
    pub termination: Termination,
    pub events: Vec<EventHit<N>>,
    pub stats: StepStats,
    dense: Vec<DenseStep<N>>,
}

impl<const N: usize> Trajectory<N> {
    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn y_final(&self) -> SVector<f64, N> {
        *self.states.last().unwrap()
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    /// Dense output at any `t` inside the integrated span.
    pub fn eval(&self, t: f64) -> Option<SVector<f64, N>> {
        if self.dense.is_empty() {
            return (t == self.times[0]).then(|| self.states[0]);
        }
        let forward = self.dense[0].h > 0.0;
        let (lo, hi) = if forward {
            (self.times[0], self.t_final())
        } else {
            (self.t_final(), self.times[0])
        };
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo - slack || t > hi + slack {
            return None;
        }
        let idx = self
            .dense
            .partition_point(|s| if forward { s.t1() < t } else { s.t1() > t })
            .min(self.dense.len() - 1);
        Some(self.dense[idx].eval(t))
    }

    /// `n + 1` equally spaced samples over the integrated span.
    pub fn sample(&self, n: usize) -> Vec<(f64, SVector<f64, N>)> {
        let (t0, t1) = (self.times[0], self.t_final());
        (0..=n)
            .map(|i| {
                let t = if i == n {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / n.max(1) as f64
                };
                (t, self.eval(t).unwrap())
            })
            .collect()
    }
}

/// Sign-change condition on `g(t, y)` located on the dense output.
pub struct Event<'a, const N: usize> {
    pub g: Box<dyn Fn(f64, &SVector<f64, N>) -> f64 + 'a>,
    /// +1: only upward crossings, -1: only downward, 0: both.
    pub direction: i8,
    pub terminal: bool,
}

/// Event time accuracy.
pub const EVENT_TOL: f64 = 1e-12;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn finite<const N: usize>(v: &SVector<f64, N>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn err_norm<const N: usize>(
    err: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    cfg: &IntegrationConfig,
) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sc = cfg.atol + cfg.rtol * y0[i].abs().max(y1[i].abs());
        s += (err[i] / sc).powi(2);
    }
    (s / N as f64).sqrt()
}

fn initial_step<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    span: f64,
    cfg: &IntegrationConfig,
) -> f64 {
    let sc = y0.map(|y| cfg.atol + cfg.rtol * y.abs());
    let d0 = y0.component_div(&sc).norm() / (N as f64).sqrt();
    let d1 = f0.component_div(&sc).norm() / (N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = y0 + f0 * h0 * span.signum();
    let f1 = sys.rhs(t0 + h0 * span.signum(), &y1);
    let d2 = (f1 - f0).component_div(&sc).norm() / (N as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `sys` from `y0` over `cfg.t_span`.
pub fn integrate_system<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    y0: SVector<f64, N>,
    cfg: &IntegrationConfig,
    events: &[Event<'_, N>],
) -> Result<Trajectory<N>> {
    cfg.validate()?;
    let (t0, t1) = cfg.t_span;
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![y0],
        termination: Termination::Completed,
        events: Vec::new(),
        stats: StepStats {
            accepted: 0,
            rejected: 0,
            evaluations: 0,
            stiffness_warning: false,
        },
        dense: Vec::new(),
    };
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(traj);
    }
    let sign = (t1 - t0).signum();
    let hmax = cfg.max_step.unwrap_or(span).min(span);

    let mut t = t0;
    let mut y = y0;
    let mut k1 = sys.rhs(t, &y);
    traj.stats.evaluations += 1;
    if !finite(&k1) {
        traj.termination = Termination::Singular;
        return Ok(traj);
    }
    let mut h = initial_step(sys, t0, &y0, &k1, span, cfg).min(hmax);
    traj.stats.evaluations += 1;
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut last_rejected = false;
    let mut left_domain = false;

    loop {
        if traj.stats.accepted + traj.stats.rejected >= cfg.max_steps {
            traj.termination = Termination::MaxSteps;
            break;
        }
        let remaining = (t1 - t).abs();
        if remaining <= 1e-14 * (1.0 + t1.abs()) {
            break;
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < 1e-14 * (1.0 + t.abs()) {
            let blowup = k1.norm() * (1.0 + t.abs()) > 1e8 * (1.0 + y.norm());
            traj.termination = if left_domain || blowup {
                Termination::Singular
            } else {
                Termination::StepUnderflow
            };
            break;
        }
        let hs = h * sign;
        let k2 = sys.rhs(t + C2 * hs, &(y + k1 * (A21 * hs)));
        let k3 = sys.rhs(t + C3 * hs, &(y + (k1 * A31 + k2 * A32) * hs));
        let k4 = sys.rhs(t + C4 * hs, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * hs));
        let k5 = sys.rhs(t + C5 * hs, &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * hs));
        let k6 = sys.rhs(
            t + hs,
            &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * hs),
        );
        let y1 = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * hs;
        let k7 = sys.rhs(t + hs, &y1);
        traj.stats.evaluations += 6;

        let all_finite = [&k2, &k3, &k4, &k5, &k6, &k7].iter().all(|k| finite(k)) && finite(&y1) && sys.in_domain(&y1);
        let err = if all_finite {
            let e = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * hs;
            err_norm(&e, &y, &y1, cfg)
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            let ydiff = y1 - y;
            let bspl = k1 * hs - ydiff;
            let step = DenseStep {
                t0: t,
                h: hs,
                r: [
                    y,
                    ydiff,
                    bspl,
                    ydiff - k7 * hs - bspl,
                    (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * hs,
                ],
            };
            let t_new = if last { t1 } else { t + hs };

            let mut stop_at: Option<(f64, SVector<f64, N>)> = None;
            for (i, ev) in events.iter().enumerate() {
                let g1 = (ev.g)(t_new, &y1);
                let g0 = g_prev[i];
                let up = g0 < 0.0 && g1 >= 0.0;
                let down = g0 > 0.0 && g1 <= 0.0;
                let hit = match ev.direction {
                    1 => up,
                    -1 => down,
                    _ => up || down,
                };
                if hit {
                    let te = locate(&step, t, t_new, g0, |tt| (ev.g)(tt, &step.eval(tt)));
                    let ye = step.eval(te);
                    traj.events.push(EventHit { t: te, y: ye, index: i });
                    if ev.terminal && stop_at.is_none_or(|(ts, _)| (te - t) * sign < (ts - t) * sign) {
                        stop_at = Some((te, ye));
                    }
                }
                g_prev[i] = g1;
            }

            traj.stats.accepted += 1;
            traj.dense.push(step);
            if let Some((te, ye)) = stop_at {
                traj.events.retain(|e| (e.t - t) * sign <= (te - t) * sign);
                traj.times.push(te);
                traj.states.push(ye);
                traj.termination = Termination::Event;
                break;
            }
            t = t_new;
            y = y1;
            k1 = k7;
            traj.times.push(t);
            traj.states.push(y);
            if last {
                break;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * if last_rejected { fac.min(1.0) } else { fac }).min(hmax);
            last_rejected = false;
        } else {
            traj.stats.rejected += 1;
            last_rejected = true;
            left_domain |= !all_finite;
            if !all_finite {
                h *= 0.25;
                if h < 1e-14 * (1.0 + t.abs()) {
                    traj.termination = Termination::Singular;
                    break;
                }
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            }
        }
    }
    let total = traj.stats.accepted + traj.stats.rejected;
    traj.stats.stiffness_warning = total > 20 && 2 * traj.stats.rejected > total;
    Ok(traj)
}

/// Root of `g` on `[ta, tb]` by bisection on the interpolant.
fn locate<const N: usize>(_step: &DenseStep<N>, ta: f64, tb: f64, ga: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b, mut fa) = (ta, tb, ga);
    for _ in 0..200 {
        if (b - a).abs() <= EVENT_TOL * (1.0 + a.abs().max(b.abs())) * 0.5 {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = g(mid);
        if (fm >= 0.0) == (fa >= 0.0) && fm != 0.0 {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    b
}

/// Model vector field as an ODE system; non-finite at the singular line.
pub struct ModelSystem<'a>(pub &'a ModelParams);

impl OdeSystem<3> for ModelSystem<'_> {
    fn rhs(&self, _t: f64, y: &Vector3<f64>) -> Vector3<f64> {
        if self.0.a + y[1] <= 1e-12 * self.0.a {
            return Vector3::repeat(f64::NAN);
        }
        vector_field_unchecked(self.0, y)
    }

    fn in_domain(&self, y: &Vector3<f64>) -> bool {
        self.0.a + y[1] > 1e-12 * self.0.a
    }
}

/// State plus the 3x3 fundamental matrix (column-major), `Phi' = J Phi`.
pub struct VariationalSystem<'a>(pub &'a ModelParams);

impl OdeSystem<12> for VariationalSystem<'_> {
    fn rhs(&self, _t: f64, y: &SVector<f64, 12>) -> SVector<f64, 12> {
        let x = Vector3::new(y[0], y[1], y[2]);
        if self.0.a + x[1] <= 1e-12 * self.0.a {
            return SVector::repeat(f64::NAN);
        }
        let f = vector_field_unchecked(self.0, &x);
        let j = jacobian_unchecked(self.0, &x);
        let phi = Matrix3::from_column_slice(&y.as_slice()[3..]);
        let dphi = j * phi;
        let mut out = SVector::<f64, 12>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&f);
        out.as_mut_slice()[3..].copy_from_slice(dphi.as_slice());
        out
    }

    fn in_domain(&self, y: &SVector<f64, 12>) -> bool {
        self.0.a + y[1] > 1e-12 * self.0.a
    }
}

/// Integrates the model from `s0`.
pub fn integrate(p: &ModelParams, s0: &crate::State, cfg: &IntegrationConfig) -> Result<Trajectory<3>> {
    if p.a + s0.e2 <= 1e-12 * p.a {
        return Err(Error::Singular { e2: s0.e2 });
    }
    integrate_system(&ModelSystem(p), s0.to_vector(), cfg, &[])
}

/// Flow map and its Jacobian (the monodromy matrix for a closed orbit).
pub fn flow_with_sensitivity(
    p: &ModelParams,
    x0: &Vector3<f64>,
    t: f64,
    cfg: &IntegrationConfig,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let mut y0 = SVector::<f64, 12>::zeros();
    y0.fixed_rows_mut::<3>(0).copy_from(x0);
    y0.as_mut_slice()[3..].copy_from_slice(Matrix3::<f64>::identity().as_slice());
    let c = IntegrationConfig {
        t_span: (0.0, t),
        ..*cfg
    };
    let tr = integrate_system(&VariationalSystem(p), y0, &c, &[])?;
    if !tr.completed() {
        return Err(Error::Integration(format!(
            "{:?} at t = {}",
            tr.termination,
            tr.t_final()
        )));
    }
    let y = tr.y_final();
    Ok((
        Vector3::new(y[0], y[1], y[2]),
        Matrix3::from_column_slice(&y.as_slice()[3..]),
    ))
}

/// Flow map only.
pub fn flow(p: &ModelParams, x0: &Vector3<f64>, t: f64, cfg: &IntegrationConfig) -> Result<Vector3<f64>> {
    let c = IntegrationConfig {
        t_span: (0.0, t),
        ..*cfg
    };
    let tr = integrate_system(&ModelSystem(p), *x0, &c, &[])?;
    if !tr.completed() {
        return Err(Error::Integration(format!(
            "{:?} at t = {}",
            tr.termination,
            tr.t_final()
        )));
    }
    Ok(tr.y_final())
}
