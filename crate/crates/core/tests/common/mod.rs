#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use bifurcat_core::lyapunov::LocalDynamics;
use bifurcat_core::ModelParams;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C;

pub const N: usize = 6;

/// Truncated Taylor series `sum c_k t^k`, `k < N`.
#[derive(Clone, Copy, Debug)]
pub struct Jet(pub [C; N]);

impl Jet {
    pub fn constant(x: f64) -> Self {
        let mut c = [C::new(0.0, 0.0); N];
        c[0] = C::new(x, 0.0);
        Jet(c)
    }

    pub fn line(x: f64, u: C) -> Self {
        let mut j = Jet::constant(x);
        j.0[1] = u;
        j
    }

    pub fn scale(self, s: f64) -> Self {
        Jet(self.0.map(|c| c * s))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(o.0) {
            *a += b;
        }
        Jet(c)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet(self.0.map(|c| -c))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [C::new(0.0, 0.0); N];
        for i in 0..N {
            for j in 0..N - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let mut q = [C::new(0.0, 0.0); N];
        for k in 0..N {
            let mut s = self.0[k];
            for j in 1..=k {
                s -= o.0[j] * q[k - j];
            }
            q[k] = s / o.0[0];
        }
        Jet(q)
    }
}

/// Model right-hand side written independently of the library.
pub fn model_field(p: &ModelParams, x: [Jet; 3]) -> [Jet; 3] {
    let [e1, e2, m] = x;
    let pred = e2 * m / (Jet::constant(p.a) + e2);
    [
        e2.scale(p.r1) - e1.scale(p.alpha),
        e1.scale(p.alpha) - (e2 * e2).scale(p.kappa1) - pred.scale(p.m),
        m.scale(p.r2) - (m * m).scale(p.kappa2) + pred.scale(p.c * p.m),
    ]
}

/// Symmetric multilinear derivative by polarization of directional Taylor
/// coefficients: `D^k f[v1..vk] = 2^-k sum_eps (prod eps) coeff_k f(x + t u_eps)`.
pub fn polarized<F: Fn([Jet; 3]) -> [Jet; 3]>(f: F, x: [f64; 3], vs: &[Vector3<C>]) -> Vector3<C> {
    let k = vs.len();
    let mut out = Vector3::<C>::zeros();
    for mask in 0..(1u32 << k) {
        let mut u = Vector3::<C>::zeros();
        let mut sign = 1.0;
        for (i, v) in vs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                u -= v;
                sign = -sign;
            } else {
                u += v;
            }
        }
        let y = f([0, 1, 2].map(|i| Jet::line(x[i], u[i])));
        for i in 0..3 {
            out[i] += y[i].0[k] * sign;
        }
    }
    out / C::new(2f64.powi(k as i32), 0.0)
}

/// Polynomial system given by a Jet closure, expanded at `x`.
pub struct JetDynamics<F: Fn([Jet; 3]) -> [Jet; 3]> {
    pub f: F,
    pub x: [f64; 3],
}

impl<F: Fn([Jet; 3]) -> [Jet; 3]> LocalDynamics for JetDynamics<F> {
    fn jacobian(&self) -> Matrix3<f64> {
        let mut j = Matrix3::zeros();
        for col in 0..3 {
            let mut e = Vector3::<C>::zeros();
            e[col] = C::new(1.0, 0.0);
            let y = polarized(&self.f, self.x, &[e]);
            for row in 0..3 {
                j[(row, col)] = y[row].re;
            }
        }
        j
    }

    fn derivative(&self, vs: &[Vector3<C>]) -> Vector3<C> {
        polarized(&self.f, self.x, vs)
    }
}

pub fn p1() -> ModelParams {
    ModelParams::unit_scaled(60.0, 1.6, 51.57, 23.2197961461739, 0.026671).unwrap()
}

pub fn p2() -> ModelParams {
    ModelParams::unit_scaled(62.27545, 1.6, 37.083850149878, 24.5, 0.02568).unwrap()
}

pub fn p3() -> ModelParams {
    ModelParams::unit_scaled(60.0, 1.6, 53.1351, 24.665343, 0.026927991).unwrap()
}

pub fn p4() -> ModelParams {
    ModelParams::unit_scaled(62.27545, 1.6, 34.888830547725, 24.638748097512, 0.02568).unwrap()
}
