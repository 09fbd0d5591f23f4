//! Independent reference computations used to cross-check the numerical
//! kernels. Everything here is deliberately built from first principles
//! (adaptive Simpson quadrature, fixed-step Runge-Kutta, closed-form
//! solution families, high-order difference quotients) and shares no code
//! with the implementation under test.
#![allow(dead_code)]

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (left, flm) = simpson(f, a, fa, m, fm);
        let (right, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, frm, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, fm, tol, 48)
}

/// The triple iterated integral
/// `int_0^x int_0^l int_0^t 2 u(s) v'(s) / (1 - s^2) ds dt dl`
/// evaluated by nesting adaptive Simpson rules.
pub fn triple_nested_integral(
    u: &dyn Fn(f64) -> f64,
    v_prime: &dyn Fn(f64) -> f64,
    x: f64,
    tol: f64,
) -> f64 {
    let inner = |t: f64| {
        adaptive_simpson(
            &|s: f64| 2.0 * u(s) * v_prime(s) / (1.0 - s * s),
            0.0,
            t,
            tol * 0.1,
        )
    };
    let middle = |l: f64| adaptive_simpson(&inner, 0.0, l, tol * 0.1);
    adaptive_simpson(&middle, 0.0, x, tol)
}

/// Fixed-step classical Runge-Kutta integration of the profile equation
/// `(1 - x^2) U' + 2 x U + U^2 / 2 = f(x)` from the equator value
/// `U(0) = gamma` out to `x_target`, entirely independent of the adaptive
/// integrator in the library.
pub fn rk4_profile(
    c1: f64,
    c2: f64,
    c3: f64,
    gamma: f64,
    x_target: f64,
    steps: usize,
) -> f64 {
    let rhs = |x: f64, u: f64| {
        let forcing = c1 * (1.0 - x) + c2 * (1.0 + x) + c3 * (1.0 - x * x);
        (forcing - 2.0 * x * u - 0.5 * u * u) / (1.0 - x * x)
    };
    let h = x_target / steps as f64;
    let mut x = 0.0;
    let mut u = gamma;
    for _ in 0..steps {
        let k1 = rhs(x, u);
        let k2 = rhs(x + 0.5 * h, u + 0.5 * h * k1);
        let k3 = rhs(x + 0.5 * h, u + 0.5 * h * k2);
        let k4 = rhs(x + h, u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        x += h;
    }
    u
}

/// Closed-form Landau profile `2 (1 - x^2) / (x - a)` for `|a| > 1`;
/// solves the zero-forcing profile equation with `gamma = -2 / a`.
pub fn landau_profile(a: f64, x: f64) -> f64 {
    2.0 * (1.0 - x * x) / (x - a)
}

/// Radial velocity of the Landau solution at unit radius:
/// the `x`-derivative of [`landau_profile`].
pub fn landau_radial(a: f64, x: f64) -> f64 {
    (-2.0 * x * x + 4.0 * a * x - 2.0) / ((x - a) * (x - a))
}

/// Linear closed-form profile on the boundary stratum
/// `c3 = -s (s + 2) / 2`, `s = sqrt(1 + c1) + sqrt(1 + c2)`.
pub fn boundary_profile_closed(c1: f64, c2: f64, x: f64) -> f64 {
    let r1 = (1.0 + c1).sqrt();
    let r2 = (1.0 + c2).sqrt();
    (1.0 + r1) * (1.0 - x) - (1.0 + r2) * (1.0 + x)
}

/// Equator value of the linear boundary-stratum profile.
pub fn boundary_gamma_closed(c1: f64, c2: f64) -> f64 {
    (1.0 + c1).sqrt() - (1.0 + c2).sqrt()
}

/// Critical third forcing constant of the admissible region.
pub fn cbar3_closed(c1: f64, c2: f64) -> f64 {
    let s = (1.0 + c1).sqrt() + (1.0 + c2).sqrt();
    -0.5 * s * (s + 2.0)
}

/// High-order central difference quotients of a closed-form function;
/// orders one through three with eighth/sixth-order coefficients.
pub fn central_diff(f: &dyn Fn(f64) -> f64, x: f64, h: f64, order: usize) -> f64 {
    let s = |k: i32| f(x + k as f64 * h);
    match order {
        1 => {
            (s(-4) / 280.0 - 4.0 * s(-3) / 105.0 + s(-2) / 5.0 - 4.0 * s(-1) / 5.0
                + 4.0 * s(1) / 5.0
                - s(2) / 5.0
                + 4.0 * s(3) / 105.0
                - s(4) / 280.0)
                / h
        }
        2 => {
            (-s(-4) / 560.0 + 8.0 * s(-3) / 315.0 - s(-2) / 5.0 + 8.0 * s(-1) / 5.0
                - 205.0 * s(0) / 72.0
                + 8.0 * s(1) / 5.0
                - s(2) / 5.0
                + 8.0 * s(3) / 315.0
                - s(4) / 560.0)
                / (h * h)
        }
        3 => {
            (s(-3) / 8.0 - s(-2) + 13.0 * s(-1) / 8.0 - 13.0 * s(1) / 8.0 + s(2)
                - s(3) / 8.0)
                / (h * h * h)
        }
        _ => panic!("difference order {order} not tabulated"),
    }
}
