//! The no-swirl profile family and its parameter region.
//!
//! For parameters `c = (c1, c2, c3)` and `gamma`, the profile solves the
//! Riccati equation
//!
//! ```text
//! (1-x^2) U' + 2x U + U^2/2 = c1 (1-x) + c2 (1+x) + c3 (1-x^2),   U(0) = gamma,
//! ```
//!
//! on (-1,1). Solutions extend to both endpoints exactly when `c` lies in
//! the admissible set `J` (`c1, c2 >= -1`, `c3 >= cbar3(c1, c2)`) and
//! `gamma` lies between the side-wise survival thresholds
//! `gamma_minus <= gamma <= gamma_plus`. This module integrates the
//! profile, measures its endpoint data, computes the gamma bounds by
//! bisection on blow-up, and classifies parameters into strata and
//! solver cases.

use crate::error::{Error, Result};
use crate::mesh::{EndpointEstimate, EndpointWeight, GridFunction, Mesh, Side};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Default absolute tolerance for treating a parameter equality
/// (`c1 = -1`, `c3 = cbar3`, ...) as exact.
pub const PARAM_SNAP_TOL: f64 = 1e-8;
/// |U| threshold treated as blow-up during integration.
const BLOWUP_GUARD: f64 = 1e6;
/// Local error tolerances of the adaptive integrator.
const ODE_ATOL: f64 = 1e-12;
const ODE_RTOL: f64 = 1e-12;

/// Riccati parameters: forcing coefficients and the center value.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma: f64,
}

impl Params {
    pub fn new(c1: f64, c2: f64, c3: f64, gamma: f64) -> Params {
        Params { c1, c2, c3, gamma }
    }

    /// Forcing polynomial `c1 (1-x) + c2 (1+x) + c3 (1-x^2)`.
    pub fn forcing(&self, x: f64) -> f64 {
        self.c1 * (1.0 - x) + self.c2 * (1.0 + x) + self.c3 * (1.0 - x * x)
    }

    /// Derivative of the forcing polynomial.
    pub fn forcing_prime(&self, x: f64) -> f64 {
        -self.c1 + self.c2 - 2.0 * self.c3 * x
    }
}

/// Lower boundary of admissible `c3` given `c1, c2 >= -1`.
pub fn cbar3(c1: f64, c2: f64) -> Result<f64> {
    if c1 < -1.0 - 1e-12 || c2 < -1.0 - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "cbar3 requires c1, c2 >= -1 (got c1={c1}, c2={c2})"
        )));
    }
    let s = (1.0 + c1).max(0.0).sqrt() + (1.0 + c2).max(0.0).sqrt();
    Ok(-0.5 * s * (s + 2.0))
}

/// The unique admissible center value on the boundary `c3 = cbar3`.
pub fn gamma_at_cbar3(c1: f64, c2: f64) -> f64 {
    (1.0 + c1).max(0.0).sqrt() - (1.0 + c2).max(0.0).sqrt()
}

/// Closed-form profile on the boundary `c3 = cbar3`:
/// `(1 + sqrt(1+c1)) (1-x) - (1 + sqrt(1+c2)) (1+x)`.
pub fn boundary_profile(c1: f64, c2: f64, x: f64) -> f64 {
    let s1 = (1.0 + c1).max(0.0).sqrt();
    let s2 = (1.0 + c2).max(0.0).sqrt();
    (1.0 + s1) * (1.0 - x) - (1.0 + s2) * (1.0 + x)
}

/// Solver-case tags for the operator machinery.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    /// Both endpoints regular (list A1).
    Case1,
    /// Logarithmic branch at x = -1 (list A2).
    Case2,
    /// Logarithmic branch at x = +1 (list A3, the mirror of Case2).
    Case2Mirror,
    /// Logarithmic branches at both endpoints.
    Case3,
    /// Endpoint value at or beyond the threshold where no perturbation
    /// family is constructed.
    Case4,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseTag::Case1 => "Case1(A1)",
            CaseTag::Case2 => "Case2(A2)",
            CaseTag::Case2Mirror => "Case2'(A3)",
            CaseTag::Case3 => "Case3",
            CaseTag::Case4 => "Case4",
        };
        f.write_str(s)
    }
}

/// Stratum and case classification of a parameter point.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel {
    /// J-stratum index 1..=8 (which of the defining inequalities are
    /// equalities: 2 <-> c1=-1, 3 <-> c2=-1, 4 <-> both; +4 <-> c3=cbar3).
    pub j_stratum: u8,
    /// I-stratum `(k, l)` when the point belongs to one; `l` records the
    /// gamma position (1 interior, 2 at gamma_plus, 3 at gamma_minus).
    pub i_stratum: Option<(u8, u8)>,
    pub case_tag: CaseTag,
    /// Member of the rigid set: admissible but outside every I_{k,l},
    /// with c1 > -3/4 or c2 > -3/4.
    pub in_i_hat: bool,
}

/// Snap tolerances used by [`classify`].
#[derive(Copy, Clone, Debug)]
pub struct SnapTols {
    /// Tolerance for parameter equalities such as `c1 = -1`.
    pub param: f64,
    /// Tolerance for `gamma = gamma_plus/minus` (combined with the
    /// bisection tolerance of the bounds).
    pub gamma: f64,
}

impl Default for SnapTols {
    fn default() -> Self {
        SnapTols {
            param: PARAM_SNAP_TOL,
            gamma: 1e-10,
        }
    }
}

/// Side-wise survival thresholds in gamma for fixed `c`.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct GammaBounds {
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    /// Width of the final bisection bracket (0 for the closed form on
    /// the boundary stratum).
    pub tol: f64,
    /// True when `c3 = cbar3` so that both bounds coincide.
    pub boundary: bool,
}

/// Result of integrating the Riccati profile across the mesh.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum RiccatiOutcome {
    Profile(Box<NoSwirlProfile>),
    /// Integration left the admissible range: |U| crossed the blow-up
    /// guard near `x_star` before reaching the outermost node.
    BlowUp { x_star: f64 },
}

impl RiccatiOutcome {
    pub fn profile(self) -> Result<Box<NoSwirlProfile>> {
        match self {
            RiccatiOutcome::Profile(p) => Ok(p),
            RiccatiOutcome::BlowUp { x_star } => Err(Error::Divergence(format!(
                "no-swirl profile blows up near x = {x_star:.6}"
            ))),
        }
    }
}

/// A no-swirl profile with measured endpoint data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoSwirlProfile {
    pub params: Params,
    /// Profile values at the mesh nodes (endpoint estimates attached).
    pub u_theta_bar: GridFunction,
    /// First derivative from the Riccati identity
    /// `U' = (P - 2xU - U^2/2)/(1-x^2)` (exact given the values).
    pub du_theta_bar: GridFunction,
    /// Endpoint values after snapping to the nearest branch root when
    /// the extrapolation supports it.
    pub endpoint_minus: f64,
    pub endpoint_plus: f64,
    /// Raw extrapolated values and error estimates.
    pub endpoint_minus_raw: EndpointEstimate,
    pub endpoint_plus_raw: EndpointEstimate,
    /// `lim (U - 2) ln((1+x)/3)` at x = -1, measured when `c1 = -1`.
    pub eta1: Option<f64>,
    /// `lim (U + 2) ln((1-x)/3)` at x = +1, measured when `c2 = -1`.
    pub eta2: Option<f64>,
    /// Filled by the classification pipeline.
    pub stratum: Option<RegionLabel>,
}

impl NoSwirlProfile {
    /// Second derivative from the differentiated Riccati identity
    /// `(1-x^2) U'' + 2U + U U' = P'`.
    pub fn ddu_at(&self, i: usize) -> f64 {
        let x = self.u_theta_bar.mesh().nodes()[i];
        let u = self.u_theta_bar.at(i);
        let du = self.du_theta_bar.at(i);
        (self.params.forcing_prime(x) - 2.0 * u - u * du) / (1.0 - x * x)
    }
}

#[derive(Copy, Clone, PartialEq)]
enum SegChart {
    Center,
    Minus,
    Plus,
}

impl SegChart {
    fn of(x: f64) -> SegChart {
        if x <= -0.75 {
            SegChart::Minus
        } else if x >= 0.75 {
            SegChart::Plus
        } else {
            SegChart::Center
        }
    }

    fn w(self, x: f64) -> f64 {
        match self {
            SegChart::Center => x,
            SegChart::Minus => (1.0 + x).ln(),
            SegChart::Plus => -(1.0 - x).ln(),
        }
    }

    fn x(self, w: f64) -> f64 {
        match self {
            SegChart::Center => w,
            SegChart::Minus => w.exp() - 1.0,
            SegChart::Plus => 1.0 - (-w).exp(),
        }
    }

    /// Riccati right-hand side in this chart's coordinate, written with
    /// exact endpoint-distance factors so that no cancellation occurs in
    /// the tails.
    fn rhs(self, p: &Params, w: f64, u: f64) -> f64 {
        match self {
            SegChart::Center => {
                let x = w;
                (p.forcing(x) - 2.0 * x * u - 0.5 * u * u) / (1.0 - x * x)
            }
            SegChart::Minus => {
                let dm = w.exp(); // 1 + x
                let x = dm - 1.0;
                let dp = 2.0 - dm; // 1 - x
                let forcing = p.c1 * dp + p.c2 * dm + p.c3 * dp * dm;
                (forcing - 2.0 * x * u - 0.5 * u * u) / dp
            }
            SegChart::Plus => {
                let dp = (-w).exp(); // 1 - x
                let x = 1.0 - dp;
                let dm = 2.0 - dp; // 1 + x
                let forcing = p.c1 * dp + p.c2 * dm + p.c3 * dp * dm;
                (forcing - 2.0 * x * u - 0.5 * u * u) / dm
            }
        }
    }

    /// Right-hand side of the profile equation augmented with the four
    /// auxiliary integrands: state `[u, a, b, E, P]` where
    /// `a' = (2x + u)/(1 - x^2)`, `b' = u/(1 - x^2)`, `E' = e^a`,
    /// `P' = e^{-b}` (all primes with respect to x).
    fn aux_rhs(self, p: &Params, w: f64, y: &[f64; 5]) -> [f64; 5] {
        let u = y[0];
        let (x, d_opp, dxdw) = match self {
            SegChart::Center => {
                let x = w;
                (x, 1.0 - x * x, 1.0)
            }
            SegChart::Minus => {
                let dm = w.exp(); // 1 + x = dx/dw
                (dm - 1.0, 2.0 - dm, dm)
            }
            SegChart::Plus => {
                let dp = (-w).exp(); // 1 - x = dx/dw
                (1.0 - dp, 2.0 - dp, dp)
            }
        };
        [
            self.rhs(p, w, u),
            (2.0 * x + u) / d_opp,
            u / d_opp,
            y[1].exp() * dxdw,
            (-y[2]).exp() * dxdw,
        ]
    }
}

/// Dormand-Prince 5(4) step for an `N`-component system; returns the
/// 5th order value and the largest componentwise error ratio against
/// the atol/rtol-scaled tolerance (accept when the ratio is <= 1).
fn dopri_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    w: f64,
    y: &[f64; N],
    h: f64,
) -> ([f64; N], f64) {
    fn comb<const N: usize>(y: &[f64; N], h: f64, terms: &[(&[f64; N], f64)]) -> [f64; N] {
        let mut out = *y;
        for (k, c) in terms {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
        out
    }
    let k1 = f(w, y);
    let k2 = f(w + 0.2 * h, &comb(y, h, &[(&k1, 0.2)]));
    let k3 = f(
        w + 0.3 * h,
        &comb(y, h, &[(&k1, 3.0 / 40.0), (&k2, 9.0 / 40.0)]),
    );
    let k4 = f(
        w + 0.8 * h,
        &comb(
            y,
            h,
            &[(&k1, 44.0 / 45.0), (&k2, -56.0 / 15.0), (&k3, 32.0 / 9.0)],
        ),
    );
    let k5 = f(
        w + 8.0 / 9.0 * h,
        &comb(
            y,
            h,
            &[
                (&k1, 19372.0 / 6561.0),
                (&k2, -25360.0 / 2187.0),
                (&k3, 64448.0 / 6561.0),
                (&k4, -212.0 / 729.0),
            ],
        ),
    );
    let k6 = f(
        w + h,
        &comb(
            y,
            h,
            &[
                (&k1, 9017.0 / 3168.0),
                (&k2, -355.0 / 33.0),
                (&k3, 46732.0 / 5247.0),
                (&k4, 49.0 / 176.0),
                (&k5, -5103.0 / 18656.0),
            ],
        ),
    );
    let y5 = comb(
        y,
        h,
        &[
            (&k1, 35.0 / 384.0),
            (&k3, 500.0 / 1113.0),
            (&k4, 125.0 / 192.0),
            (&k5, -2187.0 / 6784.0),
            (&k6, 11.0 / 84.0),
        ],
    );
    let k7 = f(w + h, &y5);
    let y4 = comb(
        y,
        h,
        &[
            (&k1, 5179.0 / 57600.0),
            (&k3, 7571.0 / 16695.0),
            (&k4, 393.0 / 640.0),
            (&k5, -92097.0 / 339200.0),
            (&k6, 187.0 / 2100.0),
            (&k7, 1.0 / 40.0),
        ],
    );
    let mut ratio: f64 = 0.0;
    for i in 0..N {
        let tol = ODE_ATOL + ODE_RTOL * y[i].abs().max(y5[i].abs());
        ratio = ratio.max((y5[i] - y4[i]).abs() / tol);
    }
    (y5, ratio)
}

/// Adaptive integration of `dy/dw = f(w, y)` from `w0` to `w1`. The
/// first component is the profile value and carries the blow-up guard.
/// On blow-up returns `Err(w_at_blowup)`.
fn integrate_segment<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    w0: f64,
    w1: f64,
    y0: [f64; N],
) -> std::result::Result<[f64; N], f64> {
    let mut w = w0;
    let mut y = y0;
    let span = w1 - w0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut h = span;
    let min_h = 1e-13 * span.abs().max(1e-6);
    loop {
        if y.iter().any(|v| !v.is_finite()) || y[0].abs() > BLOWUP_GUARD {
            return Err(w);
        }
        if (w1 - w) * dir <= 0.0 {
            return Ok(y);
        }
        if (w + h - w1) * dir > 0.0 {
            h = w1 - w;
        }
        let (y_new, ratio) = dopri_step(f, w, &y, h);
        if y_new.iter().any(|v| !v.is_finite()) {
            // force rejection with a smaller step
            h *= 0.2;
            if h.abs() < min_h {
                return Err(w);
            }
            continue;
        }
        if ratio <= 1.0 {
            w += h;
            y = y_new;
            if y[0].abs() > BLOWUP_GUARD {
                return Err(w);
            }
        }
        let fac = if ratio > 0.0 {
            0.9 * ratio.powf(-0.2)
        } else {
            5.0
        };
        h *= fac.clamp(0.2, 5.0);
        if h.abs() < min_h {
            return Err(w);
        }
    }
}

/// Integrate one half of the mesh outward from the center node.
/// Returns node values in outward order, or the blow-up location.
fn integrate_half(
    params: &Params,
    mesh: &Mesh,
    side: Side,
) -> std::result::Result<Vec<f64>, f64> {
    let nodes = mesh.nodes();
    let center = mesh.center_index();
    let targets: Vec<usize> = match side {
        Side::Plus => (center + 1..nodes.len()).collect(),
        Side::Minus => (0..center).rev().collect(),
    };
    let mut vals = Vec::with_capacity(targets.len());
    let mut x_cur = 0.0;
    let mut u = params.gamma;
    for &t in &targets {
        let x_next = nodes[t];
        let chart = SegChart::of(0.5 * (x_cur + x_next));
        let f = |w: f64, y: &[f64; 1]| [chart.rhs(params, w, y[0])];
        match integrate_segment(&f, chart.w(x_cur), chart.w(x_next), [u]) {
            Ok(v) => {
                u = v[0];
                vals.push(u);
                x_cur = x_next;
            }
            Err(w_blow) => return Err(chart.x(w_blow)),
        }
    }
    Ok(vals)
}

/// True when the profile reaches the outermost node on `side` without
/// crossing the blow-up guard.
fn survives(params: &Params, mesh: &Mesh, side: Side) -> bool {
    integrate_half(params, mesh, side).is_ok()
}

/// Node values of the four auxiliary integrals attached to a profile:
///
/// ```text
/// a(x) = int_0^x (2s + U)/(1 - s^2) ds,    b(x) = int_0^x U/(1 - s^2) ds,
/// E(x) = int_0^x e^{a(s)} ds,              P(x) = int_0^x e^{-b(s)} ds,
/// ```
///
/// returned in that order. Each mesh segment integrates the profile
/// equation alongside the integrands and reseeds `U` from the stored
/// node values, so the integrals follow the discrete profile without
/// going through a grid interpolant: node-to-node increments stay at
/// integrator accuracy, which keeps finite differences of the results
/// (second derivatives of `P` in particular) free of interpolation
/// noise.
pub(crate) fn auxiliary_integrals(
    params: &Params,
    u_bar: &GridFunction,
) -> Result<[GridFunction; 4]> {
    let mesh = Arc::clone(u_bar.mesh());
    let nodes = mesh.nodes();
    let center = mesh.center_index();
    let n = nodes.len();
    let mut vals = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for side in [Side::Plus, Side::Minus] {
        let targets: Vec<usize> = match side {
            Side::Plus => (center + 1..n).collect(),
            Side::Minus => (0..center).rev().collect(),
        };
        let mut x_cur = nodes[center];
        let mut state = [u_bar.at(center), 0.0, 0.0, 0.0, 0.0];
        let mut cur = center;
        for &t in &targets {
            let x_next = nodes[t];
            let chart = SegChart::of(0.5 * (x_cur + x_next));
            state[0] = u_bar.at(cur);
            let f = |w: f64, y: &[f64; 5]| chart.aux_rhs(params, w, y);
            state = integrate_segment(&f, chart.w(x_cur), chart.w(x_next), state).map_err(
                |w_blow| {
                    Error::Divergence(format!(
                        "auxiliary integrals diverged near x = {:.6}",
                        chart.x(w_blow)
                    ))
                },
            )?;
            for (k, v) in vals.iter_mut().enumerate() {
                v[t] = state[k + 1];
            }
            x_cur = x_next;
            cur = t;
        }
    }
    let [a, b, e, p] = vals;
    Ok([
        GridFunction::new(Arc::clone(&mesh), a)?,
        GridFunction::new(Arc::clone(&mesh), b)?,
        GridFunction::new(Arc::clone(&mesh), e)?,
        GridFunction::new(mesh, p)?,
    ])
}

/// Smallest root gap `sqrt(1 + c)` for which the inward shot from the
/// extreme endpoint root is attempted. Below this the two roots nearly
/// merge and neither shooting direction resolves the bound.
const SHOOT_MIN_ROOT_GAP: f64 = 0.05;

/// Integrate the bound trajectory inward from the extreme endpoint root.
///
/// At the survival bound the profile ends on the extreme root of the
/// endpoint equation (upper at `x = -1`, lower at `x = +1`), which is
/// repelling in the outward direction: forward shooting can only locate
/// the center value up to a systematic offset of order
/// `delta*^kappa`, `kappa = sqrt(1 + c1)` (the gamma offset whose
/// blow-up pole crosses the outermost node). Reversing the direction
/// makes the same root attracting, so seeding the root value at the
/// outermost node and integrating toward the center recovers both the
/// bound and a clean profile half. Returns the center value and the
/// node values of the integrated half ordered by node index, or `None`
/// when the trajectory crosses the blow-up guard before the center.
fn shoot_bound(c1: f64, c2: f64, c3: f64, mesh: &Mesh, side: Side) -> Option<(f64, Vec<f64>)> {
    let params = Params::new(c1, c2, c3, 0.0);
    let nodes = mesh.nodes();
    let center = mesh.center_index();
    let (start, seed, targets): (usize, f64, Vec<usize>) = match side {
        Side::Minus => (
            0,
            2.0 + 2.0 * (1.0 + c1).max(0.0).sqrt(),
            (1..=center).collect(),
        ),
        Side::Plus => (
            nodes.len() - 1,
            -2.0 - 2.0 * (1.0 + c2).max(0.0).sqrt(),
            (center..nodes.len() - 1).rev().collect(),
        ),
    };
    let mut x_cur = nodes[start];
    let mut u = seed;
    let mut vals = vec![seed];
    for &t in &targets {
        let x_next = nodes[t];
        let chart = SegChart::of(0.5 * (x_cur + x_next));
        let f = |w: f64, y: &[f64; 1]| [chart.rhs(&params, w, y[0])];
        match integrate_segment(&f, chart.w(x_cur), chart.w(x_next), [u]) {
            Ok(v) => {
                u = v[0];
                vals.push(u);
                x_cur = x_next;
            }
            Err(_) => return None,
        }
    }
    if side == Side::Plus {
        vals.reverse();
    }
    Some((u, vals))
}

fn validate_region(c1: f64, c2: f64, c3: f64) -> Result<f64> {
    let tol = PARAM_SNAP_TOL;
    if c1 < -1.0 - tol || c2 < -1.0 - tol {
        return Err(Error::InvalidParameter(format!(
            "(c1, c2) = ({c1}, {c2}) lies outside the admissible region (need >= -1)"
        )));
    }
    let cb = cbar3(c1.max(-1.0), c2.max(-1.0))?;
    if c3 < cb - tol * cb.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "c3 = {c3} is below the admissible boundary cbar3 = {cb}"
        )));
    }
    Ok(cb)
}

/// Integrate the no-swirl profile for `params` on `mesh`.
///
/// Parameters must satisfy the region constraints on `c`; any `gamma` is
/// accepted and inadmissible values yield the `BlowUp` outcome. On the
/// boundary stratum `c3 = cbar3` (within snap tolerance) the closed-form
/// linear profile is returned when `gamma` matches the unique admissible
/// center value.
pub fn solve_riccati(params: &Params, mesh: &Arc<Mesh>) -> Result<RiccatiOutcome> {
    let cb = validate_region(params.c1, params.c2, params.c3)?;
    let scale = cb.abs().max(1.0);
    if (params.c3 - cb).abs() <= PARAM_SNAP_TOL * scale {
        let gb = gamma_at_cbar3(params.c1, params.c2);
        if (params.gamma - gb).abs() <= 1e-7 * gb.abs().max(1.0) {
            let u = GridFunction::from_fn(mesh, |x| boundary_profile(params.c1, params.c2, x));
            return Ok(RiccatiOutcome::Profile(Box::new(finish_profile(params, u)?)));
        }
        // other gamma values on the boundary stratum blow up; fall through
        // to honest integration
    }
    let right = match integrate_half(params, mesh, Side::Plus) {
        Ok(v) => v,
        Err(x_star) => return Ok(RiccatiOutcome::BlowUp { x_star }),
    };
    let left = match integrate_half(params, mesh, Side::Minus) {
        Ok(v) => v,
        Err(x_star) => return Ok(RiccatiOutcome::BlowUp { x_star }),
    };
    let center = mesh.center_index();
    let mut values = vec![0.0; mesh.len()];
    values[center] = params.gamma;
    for (k, v) in right.iter().enumerate() {
        values[center + 1 + k] = *v;
    }
    for (k, v) in left.iter().enumerate() {
        values[center - 1 - k] = *v;
    }
    let u = GridFunction::new(Arc::clone(mesh), values)?;
    Ok(RiccatiOutcome::Profile(Box::new(finish_profile(params, u)?)))
}

/// Attach derivative and endpoint data to freshly integrated values.
///
/// A diverging endpoint extrapolation (which happens when the center
/// value sits within bisection error of a survival bound, so the deep
/// tail leaves the limiting separatrix) is not fatal: the raw tail value
/// is kept with an infinite error estimate and no branch snapping or log
/// coefficient is attempted on that side.
fn finish_profile(params: &Params, mut u: GridFunction) -> Result<NoSwirlProfile> {
    let du = u.map(|x, v| (params.forcing(x) - 2.0 * x * v - 0.5 * v * v) / (1.0 - x * x));
    let raw_minus = endpoint_or_flag(&u, Side::Minus)?;
    let raw_plus = endpoint_or_flag(&u, Side::Plus)?;
    u.endpoint_minus = Some(raw_minus);
    u.endpoint_plus = Some(raw_plus);
    let s1 = (1.0 + params.c1).max(0.0).sqrt();
    let s2 = (1.0 + params.c2).max(0.0).sqrt();
    let endpoint_minus = snap_to_roots(raw_minus, &[2.0 + 2.0 * s1, 2.0 - 2.0 * s1]);
    let endpoint_plus = snap_to_roots(raw_plus, &[-2.0 - 2.0 * s2, -2.0 + 2.0 * s2]);
    let eta1 = if (params.c1 + 1.0).abs() <= PARAM_SNAP_TOL && raw_minus.error.is_finite() {
        let shifted = u.map(|_, v| v - 2.0);
        shifted
            .endpoint_limit(Side::Minus, EndpointWeight::LogThird)
            .ok()
            .map(|e| e.value)
    } else {
        None
    };
    let eta2 = if (params.c2 + 1.0).abs() <= PARAM_SNAP_TOL && raw_plus.error.is_finite() {
        let shifted = u.map(|_, v| v + 2.0);
        shifted
            .endpoint_limit(Side::Plus, EndpointWeight::LogThird)
            .ok()
            .map(|e| e.value)
    } else {
        None
    };
    Ok(NoSwirlProfile {
        params: *params,
        u_theta_bar: u,
        du_theta_bar: du,
        endpoint_minus,
        endpoint_plus,
        endpoint_minus_raw: raw_minus,
        endpoint_plus_raw: raw_plus,
        eta1,
        eta2,
        stratum: None,
    })
}

/// Endpoint extrapolation that degrades to a flagged raw value (infinite
/// error estimate) instead of failing when the tail does not settle.
fn endpoint_or_flag(u: &GridFunction, side: Side) -> Result<EndpointEstimate> {
    match u.endpoint_limit(side, EndpointWeight::One) {
        Ok(est) => Ok(est),
        Err(Error::Divergence(_)) => {
            let i = match side {
                Side::Minus => 0,
                Side::Plus => u.mesh().len() - 1,
            };
            Ok(EndpointEstimate {
                value: u.at(i),
                error: f64::INFINITY,
            })
        }
        Err(e) => Err(e),
    }
}

/// Snap an extrapolated endpoint value to the nearest branch root when it
/// lies within three error estimates; otherwise keep the raw value.
fn snap_to_roots(est: EndpointEstimate, roots: &[f64]) -> f64 {
    if !est.error.is_finite() {
        return est.value;
    }
    let tol = 3.0 * est.error.max(1e-12);
    let mut best = est.value;
    let mut best_d = f64::INFINITY;
    for &r in roots {
        let d = (est.value - r).abs();
        if d < best_d {
            best_d = d;
            best = r;
        }
    }
    if best_d <= tol {
        best
    } else {
        est.value
    }
}

/// Compute the side-wise admissible gamma interval for fixed `c` by
/// expanding-bracket search plus bisection on the blow-up transition.
///
/// `tol <= 0` requests a full 60-iteration (fp-limited) bisection.
pub fn gamma_bounds(c1: f64, c2: f64, c3: f64, mesh: &Arc<Mesh>, tol: f64) -> Result<GammaBounds> {
    let cb = validate_region(c1, c2, c3)?;
    let scale = cb.abs().max(1.0);
    if (c3 - cb).abs() <= PARAM_SNAP_TOL * scale {
        let g = gamma_at_cbar3(c1, c2);
        return Ok(GammaBounds {
            gamma_minus: g,
            gamma_plus: g,
            tol: 0.0,
            boundary: true,
        });
    }
    let probe = |gamma: f64, side: Side| {
        let p = Params::new(c1, c2, c3, gamma);
        survives(&p, mesh, side)
    };
    let seed = gamma_at_cbar3(c1, c2);
    let bisected_plus = bisect_threshold(&|g| probe(g, Side::Minus), seed, true, tol)?;
    let bisected_minus = bisect_threshold(&|g| probe(g, Side::Plus), seed, false, tol)?;
    // The survival threshold systematically overshoots the bound: it
    // locates the gamma whose blow-up pole crosses the outermost node,
    // about delta*^kappa beyond the bound itself. When the endpoint
    // root gap is resolvable, replace it by the inward shot from the
    // extreme root, which is stable and lands on the bound directly.
    let mut gamma_plus = bisected_plus;
    let mut gamma_minus = bisected_minus;
    if (1.0 + c1).max(0.0).sqrt() >= SHOOT_MIN_ROOT_GAP {
        if let Some((g, _)) = shoot_bound(c1, c2, c3, mesh, Side::Minus) {
            if (g - bisected_plus).abs() <= 0.2 * bisected_plus.abs().max(1.0) {
                gamma_plus = g;
            }
        }
    }
    if (1.0 + c2).max(0.0).sqrt() >= SHOOT_MIN_ROOT_GAP {
        if let Some((g, _)) = shoot_bound(c1, c2, c3, mesh, Side::Plus) {
            if (g - bisected_minus).abs() <= 0.2 * bisected_minus.abs().max(1.0) {
                gamma_minus = g;
            }
        }
    }
    if gamma_minus > gamma_plus {
        // Near-degenerate interval: refinement errors crossed the ends,
        // so keep the raw (correctly ordered) thresholds.
        gamma_plus = bisected_plus;
        gamma_minus = bisected_minus;
    }
    Ok(GammaBounds {
        gamma_minus,
        gamma_plus,
        tol: if tol > 0.0 { tol } else { 0.0 },
        boundary: false,
    })
}

/// Locate the edge of `{gamma : alive(gamma)}`, which is a half line
/// (downward-closed when `upper`, upward-closed otherwise). Returns the
/// surviving side of the final bracket.
fn bisect_threshold(
    alive: &impl Fn(f64) -> bool,
    seed: f64,
    upper: bool,
    tol: f64,
) -> Result<f64> {
    let dir = if upper { 1.0 } else { -1.0 };
    // find a surviving point, marching away from the dead side
    let mut lo = if alive(seed) {
        seed
    } else {
        let mut step = 1.0;
        let mut g = seed;
        let mut found = None;
        for _ in 0..80 {
            g -= dir * step;
            if alive(g) {
                found = Some(g);
                break;
            }
            step *= 2.0;
        }
        found.ok_or_else(|| {
            Error::Divergence("gamma bracket search found no surviving value".into())
        })?
    };
    // find a dead point beyond the threshold
    let mut step = 1.0;
    let mut hi = lo;
    let mut found = false;
    for _ in 0..80 {
        hi += dir * step;
        if !alive(hi) {
            found = true;
            break;
        }
        lo = hi;
        step *= 2.0;
    }
    if !found {
        return Err(Error::Divergence(
            "gamma bracket search found no blow-up value".into(),
        ));
    }
    for _ in 0..60 {
        if tol > 0.0 && (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if alive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Classify a parameter point into its J/I strata and solver case.
///
/// Boundary tests snap within `snap.param` for parameter equalities and
/// within `max(snap.gamma, 4 * bounds.tol)` for `gamma` at its bounds.
pub fn classify(params: &Params, bounds: &GammaBounds, snap: &SnapTols) -> Result<RegionLabel> {
    let Params { c1, c2, c3, gamma } = *params;
    let cb = validate_region(c1, c2, c3)?;
    let ptol = snap.param;
    let gtol = snap.gamma.max(4.0 * bounds.tol).max(1e-12 * gamma.abs());
    if gamma < bounds.gamma_minus - gtol || gamma > bounds.gamma_plus + gtol {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} outside the admissible interval [{}, {}]",
            bounds.gamma_minus, bounds.gamma_plus
        )));
    }
    let b1 = (c1 + 1.0).abs() <= ptol;
    let b2 = (c2 + 1.0).abs() <= ptol;
    let b3 = (c3 - cb).abs() <= ptol * cb.abs().max(1.0);
    let mut k: u8 = match (b1, b2) {
        (false, false) => 1,
        (true, false) => 2,
        (false, true) => 3,
        (true, true) => 4,
    };
    if b3 {
        k += 4;
    }
    let at_plus = (gamma - bounds.gamma_plus).abs() <= gtol;
    let at_minus = (gamma - bounds.gamma_minus).abs() <= gtol;
    let small1 = c1 < -0.75 - ptol;
    let small2 = c2 < -0.75 - ptol;
    let i_stratum: Option<(u8, u8)> = if k <= 4 {
        if at_plus && small1 {
            Some((k, 2))
        } else if at_minus && small2 {
            Some((k, 3))
        } else if !at_plus && !at_minus {
            Some((k, 1))
        } else {
            None
        }
    } else if small1 && small2 {
        Some((k, 1))
    } else {
        None
    };
    let case_tag = match i_stratum {
        Some((k, l)) => match (k, l) {
            (1, _) => CaseTag::Case1,
            (5..=8, _) => CaseTag::Case1,
            (2, 2) | (3, 3) => CaseTag::Case1,
            (2, 1) | (2, 3) | (4, 3) => CaseTag::Case2,
            (3, 1) | (3, 2) | (4, 2) => CaseTag::Case2Mirror,
            (4, 1) => CaseTag::Case3,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unexpected stratum ({k}, {l})"
                )))
            }
        },
        None => CaseTag::Case4,
    };
    let in_i_hat = i_stratum.is_none() && (c1 > -0.75 + ptol || c2 > -0.75 + ptol);
    Ok(RegionLabel {
        j_stratum: k,
        i_stratum,
        case_tag,
        in_i_hat,
    })
}

/// Profile at a survival bound: the half ending at the extreme endpoint
/// root comes from the inward shot (forward integration cannot stay on
/// the limiting trajectory across the graded tail), the other half from
/// ordinary outward integration at the recovered center value.
fn bound_profile(params: &Params, mesh: &Arc<Mesh>, shot_side: Side) -> Result<RiccatiOutcome> {
    let Some((gamma_hat, half)) = shoot_bound(params.c1, params.c2, params.c3, mesh, shot_side)
    else {
        return solve_riccati(params, mesh);
    };
    if (gamma_hat - params.gamma).abs() > 0.2 * params.gamma.abs().max(1.0) {
        return solve_riccati(params, mesh);
    }
    let refd = Params::new(params.c1, params.c2, params.c3, gamma_hat);
    let center = mesh.center_index();
    let other = match shot_side {
        Side::Minus => Side::Plus,
        Side::Plus => Side::Minus,
    };
    let rest = match integrate_half(&refd, mesh, other) {
        Ok(v) => v,
        Err(x_star) => return Ok(RiccatiOutcome::BlowUp { x_star }),
    };
    let mut values = vec![0.0; mesh.len()];
    match shot_side {
        Side::Minus => {
            values[..=center].copy_from_slice(&half);
            for (k, v) in rest.iter().enumerate() {
                values[center + 1 + k] = *v;
            }
        }
        Side::Plus => {
            values[center..].copy_from_slice(&half);
            for (k, v) in rest.iter().enumerate() {
                values[center - 1 - k] = *v;
            }
        }
    }
    let u = GridFunction::new(Arc::clone(mesh), values)?;
    Ok(RiccatiOutcome::Profile(Box::new(finish_profile(&refd, u)?)))
}

/// Full no-swirl pipeline: profile, gamma bounds and classification,
/// with the stratum recorded on the returned profile.
///
/// When `gamma` sits at a survival bound (within the classification
/// snap) and the corresponding endpoint root gap is resolvable, the
/// profile is assembled through the inward shot so that its tail stays
/// on the limiting trajectory instead of leaving it near the outermost
/// node.
pub fn analyze(
    params: &Params,
    mesh: &Arc<Mesh>,
    gamma_tol: f64,
) -> Result<(Box<NoSwirlProfile>, GammaBounds, RegionLabel)> {
    let bounds = gamma_bounds(params.c1, params.c2, params.c3, mesh, gamma_tol)?;
    let snap = SnapTols::default();
    let label = classify(params, &bounds, &snap)?;
    let gtol = snap
        .gamma
        .max(4.0 * bounds.tol)
        .max(1e-12 * params.gamma.abs());
    let at_plus = !bounds.boundary
        && (params.gamma - bounds.gamma_plus).abs() <= gtol
        && (1.0 + params.c1).max(0.0).sqrt() >= SHOOT_MIN_ROOT_GAP;
    let at_minus = !bounds.boundary
        && (params.gamma - bounds.gamma_minus).abs() <= gtol
        && (1.0 + params.c2).max(0.0).sqrt() >= SHOOT_MIN_ROOT_GAP;
    let outcome = if at_plus {
        bound_profile(params, mesh, Side::Minus)?
    } else if at_minus {
        bound_profile(params, mesh, Side::Plus)?
    } else {
        solve_riccati(params, mesh)?
    };
    let mut profile = outcome.profile()?;
    profile.stratum = Some(label);
    Ok((profile, bounds, label))
}
