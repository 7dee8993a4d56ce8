//! Closed-form roots of real quadratics and cubics.

use num_complex::Complex64;

/// Real root together with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRoot {
    pub value: f64,
    pub multiplicity: usize,
}

/// Roots of the monic cubic `x^3 + b x^2 + c x + d`.
///
/// Real roots come first in ascending order, followed by a complex pair
/// (positive imaginary part first). Every root receives Newton polishing on
/// the undepressed polynomial.
pub fn cubic_roots(b: f64, c: f64, d: f64) -> [Complex64; 3] {
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    // disc > 0: three distinct real roots
    let disc = -(4.0 * p * p * p + 27.0 * q * q);

    let mut roots = if disc > 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let two_pi_3 = 2.0 * std::f64::consts::PI / 3.0;
        let mut r = [
            m * theta.cos() - shift,
            m * (theta - two_pi_3).cos() - shift,
            m * (theta - 2.0 * two_pi_3).cos() - shift,
        ];
        for x in r.iter_mut() {
            *x = polish_real(b, c, d, *x);
        }
        r.sort_by(f64::total_cmp);
        r.map(|x| Complex64::new(x, 0.0))
    } else {
        // One real root by Cardano; the remaining pair from deflation.
        let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        let t = u + v;
        let r = polish_real(b, c, d, t - shift);
        // x^3 + b x^2 + c x + d = (x - r)(x^2 + e x + f)
        let e = b + r;
        let f = if r.abs() > 1.0 && d != 0.0 { -d / r } else { c + e * r };
        let disc2 = e * e - 4.0 * f;
        if disc2 >= 0.0 {
            // double root region (disc == 0) or round-off
            let sq = disc2.sqrt();
            let mut rr = [r, (-e - sq) / 2.0, (-e + sq) / 2.0];
            for x in rr.iter_mut().skip(1) {
                *x = polish_real(b, c, d, *x);
            }
            rr.sort_by(f64::total_cmp);
            rr.map(|x| Complex64::new(x, 0.0))
        } else {
            let im = (-disc2).sqrt() / 2.0;
            let z = polish_complex(b, c, d, Complex64::new(-e / 2.0, im));
            [Complex64::new(r, 0.0), z, z.conj()]
        }
    };
    // keep the conjugate pair ordered by imaginary part
    if roots[1].im < roots[2].im {
        roots.swap(1, 2);
    }
    roots
}

fn eval(b: f64, c: f64, d: f64, x: f64) -> (f64, f64) {
    ((((x + b) * x) + c) * x + d, (3.0 * x + 2.0 * b) * x + c)
}

fn polish_real(b: f64, c: f64, d: f64, mut x: f64) -> f64 {
    for _ in 0..3 {
        let (f, df) = eval(b, c, d, x);
        if df == 0.0 || !f.is_finite() {
            break;
        }
        let step = f / df;
        let next = x - step;
        // only accept steps that reduce the residual
        if eval(b, c, d, next).0.abs() < f.abs() {
            x = next;
        } else {
            break;
        }
    }
    x
}

fn polish_complex(b: f64, c: f64, d: f64, mut z: Complex64) -> Complex64 {
    let res = |z: Complex64| ((z + b) * z + c) * z + d;
    for _ in 0..3 {
        let f = res(z);
        let df = (3.0 * z + 2.0 * b) * z + c;
        if df.norm() == 0.0 {
            break;
        }
        let next = z - f / df;
        if res(next).norm() < f.norm() {
            z = next;
        } else {
            break;
        }
    }
    z
}

/// Real roots of the monic cubic, clustered into multiplicities.
///
/// Roots whose imaginary part is below `imag_tol * max(1, |root|)` are treated
/// as real; two real roots merge when they differ by less than
/// `merge_tol * max(1, |root|)`.
pub fn cubic_real_roots(b: f64, c: f64, d: f64, merge_tol: f64) -> Vec<RealRoot> {
    if let Some(x) = triple_root(b, c, d, merge_tol) {
        return vec![RealRoot {
            value: x,
            multiplicity: 3,
        }];
    }
    let roots = cubic_roots(b, c, d);
    let imag_tol = merge_tol;
    let mut reals: Vec<f64> = roots
        .iter()
        .filter(|z| z.im.abs() <= imag_tol * z.re.abs().max(1.0))
        .map(|z| z.re)
        .collect();
    reals.sort_by(f64::total_cmp);
    let mut out: Vec<RealRoot> = Vec::new();
    for x in reals {
        match out.last_mut() {
            Some(last) if (x - last.value).abs() < merge_tol * x.abs().max(1.0) => {
                let n = last.multiplicity as f64;
                last.value = (last.value * n + x) / (n + 1.0);
                last.multiplicity += 1;
            }
            _ => out.push(RealRoot {
                value: x,
                multiplicity: 1,
            }),
        }
    }
    out
}

/// Detects a triple root from the depressed coefficients. Round-off of size
/// `eps` spreads a triple root by `eps^(1/3)`, far beyond any sensible merge
/// tolerance, so clustering alone cannot see it.
fn triple_root(b: f64, c: f64, d: f64, merge_tol: f64) -> Option<f64> {
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let scale = shift.abs().max(1.0);
    let s = merge_tol * scale;
    // q is judged at the double-root level s^2: below it the cluster cannot be
    // told apart from a triple root computed from rounded coefficients
    (p.abs() <= s * s && q.abs() <= s * s * scale).then_some(-shift)
}

/// Solutions of the quadratic `a2 x^2 + a1 x + a0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraticRoots {
    None,
    Double(f64),
    Two(f64, f64),
    /// `a2 = 0`: the linear solution, if any.
    Linear(Option<f64>),
}

/// Real roots of a quadratic, using the cancellation-free form. `double_tol`
/// is the absolute threshold on the discriminant below which the roots are
/// reported as a double root.
pub fn quadratic_roots(a2: f64, a1: f64, a0: f64, double_tol: f64) -> QuadraticRoots {
    if a2 == 0.0 {
        return QuadraticRoots::Linear(if a1 != 0.0 { Some(-a0 / a1) } else { None });
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc.abs() <= double_tol {
        return QuadraticRoots::Double(-a1 / (2.0 * a2));
    }
    if disc < 0.0 {
        return QuadraticRoots::None;
    }
    let sq = disc.sqrt();
    let t = -0.5 * (a1 + a1.signum() * sq);
    let (x1, x2) = if t != 0.0 {
        (t / a2, a0 / t)
    } else {
        ((-a1 - sq) / (2.0 * a2), (-a1 + sq) / (2.0 * a2))
    };
    QuadraticRoots::Two(x1.min(x2), x1.max(x2))
}
