//! Tangent-predictor / Newton-corrector tracing of a curve `G(u) = 0`,
//! `G: R^(n+1) -> R^n`.

use nalgebra::{DMatrix, DVector};

use super::{StepControl, NEWTON_MAX_ITER, NEWTON_TOL};

pub(crate) trait Curve {
    /// Number of equations `n`; unknowns have length `n + 1`.
    fn equations(&self) -> usize;

    /// `None` outside the domain of definition.
    fn residual(&self, u: &DVector<f64>) -> Option<DVector<f64>>;

    /// `n x (n+1)` Jacobian.
    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>>;

    fn newton_tol(&self) -> f64 {
        NEWTON_TOL
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TracePoint {
    pub s: f64,
    pub u: DVector<f64>,
    pub tangent: DVector<f64>,
    /// Determinant of the bordered Jacobian `[G_u; t^T]`.
    pub bordered_det: f64,
}

fn bordered(j: &DMatrix<f64>, t: &DVector<f64>) -> DMatrix<f64> {
    let n = j.nrows();
    let mut b = j.clone().insert_row(n, 0.0);
    b.row_mut(n).copy_from(&t.transpose());
    b
}

/// Unit null vector of `j`, oriented to have positive dot product with
/// `prev`, or a positive component `orient` when there is no previous one.
pub(crate) fn tangent(j: &DMatrix<f64>, prev: Option<&DVector<f64>>, orient: usize) -> Option<DVector<f64>> {
    let n = j.nrows();
    let t = match prev {
        Some(tp) => {
            let mut rhs = DVector::zeros(n + 1);
            rhs[n] = 1.0;
            bordered(j, tp).lu().solve(&rhs)?
        }
        None => {
            let sq = j.clone().insert_row(n, 0.0);
            let svd = sq.svd(false, true);
            let vt = svd.v_t?;
            let k = svd.singular_values.imin();
            vt.row(k).transpose()
        }
    };
    let norm = t.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    let mut t = t / norm;
    let flip = match prev {
        Some(tp) => t.dot(tp) < 0.0,
        None => t[orient] < 0.0,
    };
    if flip {
        t = -t;
    }
    Some(t)
}

/// Newton on `{G(u) = 0, t.(u - u_ref) = sigma}` from the predictor
/// `u_ref + sigma t`. Returns the corrected point and the iteration count.
pub(crate) fn correct<C: Curve + ?Sized>(
    c: &C,
    u_ref: &DVector<f64>,
    t: &DVector<f64>,
    sigma: f64,
) -> Option<(DVector<f64>, usize)> {
    let n = c.equations();
    let mut u = u_ref + t * sigma;
    for it in 1..=NEWTON_MAX_ITER {
        let g = c.residual(&u)?;
        let j = c.jacobian(&u)?;
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-&g));
        rhs[n] = sigma - t.dot(&(&u - u_ref));
        let du = bordered(&j, t).lu().solve(&rhs)?;
        u += &du;
        if !u.iter().all(|x| x.is_finite()) {
            return None;
        }
        let small_step = du.amax() <= c.newton_tol() * (1.0 + u.amax());
        let g1 = c.residual(&u)?;
        let tol = c.newton_tol();
        if g1.amax() <= tol || (small_step && g1.amax() <= 5.0 * tol) {
            return Some((u, it));
        }
    }
    None
}

/// Builds a trace point at `u` with tangent oriented along `prev`.
pub(crate) fn make_point<C: Curve + ?Sized>(
    c: &C,
    u: DVector<f64>,
    prev: Option<&DVector<f64>>,
    orient: usize,
    s: f64,
) -> Option<TracePoint> {
    let j = c.jacobian(&u)?;
    let t = tangent(&j, prev, orient)?;
    let bordered_det = bordered(&j, &t).determinant();
    Some(TracePoint {
        s,
        u,
        tangent: t,
        bordered_det,
    })
}

/// Follows the curve from `start` along its tangent until `inside` fails,
/// `max_points` is reached, or the step falls below `hmin`.
///
/// The returned points include `start`. The flag reports a corrector
/// breakdown.
pub(crate) fn trace<C: Curve + ?Sized>(
    c: &C,
    start: TracePoint,
    step: &StepControl,
    max_points: usize,
    inside: &dyn Fn(&DVector<f64>) -> bool,
    stop: &dyn Fn(&TracePoint, &TracePoint) -> bool,
) -> (Vec<TracePoint>, bool) {
    let mut pts = vec![start];
    let mut h = step.h0;
    let orient = 0;
    while pts.len() < max_points {
        let last = pts.last().unwrap();
        let next = correct(c, &last.u, &last.tangent, h).and_then(|(u, it)| {
            let p = make_point(c, u, Some(&last.tangent), orient, last.s + h)?;
            // refuse sharp turns; they usually mean a jump between branches
            (p.tangent.dot(&last.tangent) > 0.9).then_some((p, it))
        });
        match next {
            Some((p, it)) => {
                let leave = !inside(&p.u);
                let halt = stop(last, &p);
                pts.push(p);
                if leave || halt {
                    return (pts, false);
                }
                if it <= 3 {
                    h = (h * 1.5).min(step.hmax);
                } else if it >= 6 {
                    h = (h * 0.7).max(step.hmin);
                }
            }
            None => {
                h *= 0.5;
                if h < step.hmin {
                    return (pts, true);
                }
            }
        }
    }
    (pts, false)
}

/// Point where `test` vanishes between `a` and `b`, found by the Illinois
/// variant of regula falsi on the arclength offset from `a`.
pub(crate) fn locate<C: Curve + ?Sized>(
    c: &C,
    a: &TracePoint,
    b: &TracePoint,
    test: &dyn Fn(&DVector<f64>) -> Option<f64>,
    gtol: f64,
    stol: f64,
) -> Option<TracePoint> {
    let sb = a.tangent.dot(&(&b.u - &a.u));
    let (mut lo, mut hi) = (0.0, sb);
    let mut glo = test(&a.u)?;
    let mut ghi = test(&b.u)?;
    if glo == 0.0 {
        return Some(a.clone());
    }
    if ghi == 0.0 {
        return Some(b.clone());
    }
    if glo.signum() == ghi.signum() {
        return None;
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut side = 0i8;
    for _ in 0..100 {
        let x = (lo * ghi - hi * glo) / (ghi - glo);
        let sigma = if x > lo.min(hi) && x < lo.max(hi) {
            x
        } else {
            0.5 * (lo + hi)
        };
        let (u, _) = correct(c, &a.u, &a.tangent, sigma).or_else(|| correct(c, &a.u, &a.tangent, 0.5 * (lo + hi)))?;
        let g = test(&u)?;
        best = Some((sigma, u));
        if g.abs() <= gtol || (hi - lo).abs() <= stol {
            break;
        }
        if g.signum() == glo.signum() {
            lo = sigma;
            glo = g;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = sigma;
            ghi = g;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
    }
    let (sigma, u) = best?;
    make_point(c, u, Some(&a.tangent), 0, a.s + sigma)
}
