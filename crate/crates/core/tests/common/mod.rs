//! Independent oracles shared by the integration tests. None of them reuse
//! the library's numerics.

#![allow(dead_code)]

use vapor_kinetics::coeffs::ExpProfiles;
use vapor_kinetics::relax::RelaxParams;

/// Double-exponential (tanh-sinh) quadrature on `[a, b]`. Tolerates
/// integrable endpoint singularities: `f` receives points computed from the
/// nearest endpoint, so `a + tiny` stays accurate near `a`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let level_sum = |h: f64| -> f64 {
        let mut s = 0.0;
        let n = (4.5 / h).ceil() as i64;
        for k in -n..=n {
            let t = k as f64 * h;
            let u = 0.5 * std::f64::consts::PI * t.sinh();
            let w = 0.5 * std::f64::consts::PI * t.cosh() / u.cosh().powi(2);
            if w == 0.0 || !w.is_finite() {
                continue;
            }
            // distance from the nearer endpoint, without cancellation
            let dist = half * 2.0 / (1.0 + (2.0 * u.abs()).exp());
            let x = if t < 0.0 { a + dist } else if t > 0.0 { b - dist } else { mid };
            if x <= a && t < 0.0 || x >= b && t > 0.0 {
                continue;
            }
            s += w * f(x);
        }
        s * h * half
    };
    let mut h = 0.5;
    let mut prev = level_sum(h);
    for _ in 0..10 {
        h *= 0.5;
        let cur = level_sum(h);
        if (cur - prev).abs() <= 1e-15 * cur.abs() {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// `∫_{z0}^{z1} z^{α-1} e^{-z} dz` by tanh-sinh quadrature.
pub fn inc_gamma_oracle(alpha: f64, z0: f64, z1: f64) -> f64 {
    tanh_sinh(|z| ((alpha - 1.0) * z.ln() - z).exp(), z0, z1)
}

/// Fixed-step classical RK4 for a scalar ODE, with one Richardson check.
pub fn rk4_scalar<F: Fn(f64, f64) -> f64>(f: F, y0: f64, t_end: f64, steps: usize) -> f64 {
    let run = |n: usize| {
        let h = t_end / n as f64;
        let mut y = y0;
        for i in 0..n {
            let t = i as f64 * h;
            let k1 = f(t, y);
            let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
            let k4 = f(t + h, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    };
    let coarse = run(steps);
    let fine = run(2 * steps);
    // fourth-order extrapolation
    fine + (fine - coarse) / 15.0
}

/// Bernoulli equation for the zeroth moment written out directly from the
/// profiles.
pub fn bernoulli_oracle(p: &RelaxParams, t: f64) -> f64 {
    let pr = p.profiles;
    let rho2 = p.rho * p.rho;
    let f = move |t: f64, s: f64| {
        let a = pr.a1 * (-t / pr.tau_a).exp();
        let beta = pr.b2 + (pr.b1 - pr.b2) * (-t / pr.tau_b).exp();
        let int_d = pr.d1 * pr.tau_d * (1.0 - (-t / pr.tau_d).exp());
        s * a - p.kappa * s * s * s * beta * (1.0 - 4.0 * p.d_in / rho2 - 8.0 * p.d / rho2 * int_d)
    };
    if t == 0.0 {
        return p.sigma0;
    }
    rk4_scalar(f, p.sigma0, t, (t / 1e-3).ceil() as usize)
}

/// Central first derivative.
pub fn fd1<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central second derivative.
pub fn fd2<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Mixed second derivative `∂²f/∂u∂v` by the four-point stencil.
pub fn fd_mixed<F: Fn(f64, f64) -> f64>(f: F, u: f64, v: f64, h: f64) -> f64 {
    (f(u + h, v + h) - f(u + h, v - h) - f(u - h, v + h) + f(u - h, v - h)) / (4.0 * h * h)
}

pub fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

pub fn fig1a() -> RelaxParams {
    RelaxParams::excess_ionization()
}

pub fn fig1b() -> RelaxParams {
    RelaxParams::monotone_decay()
}

pub fn fig2() -> RelaxParams {
    RelaxParams::two_extrema()
}

pub fn figure_sets() -> [(&'static str, RelaxParams); 3] {
    [("1a", fig1a()), ("1b", fig1b()), ("2", fig2())]
}

pub fn profiles_1a() -> ExpProfiles {
    fig1a().profiles
}

/// The valid halving ladder of diffusion parameters.
pub const D_LADDER: [f64; 3] = [0.01, 0.005, 0.0025];
