//! Deterministic self-check battery.
//!
//! The battery runs a fixed sequence of pipeline checks (closed-form
//! profiles, operator identities, a swirl construction) with all random
//! draws taken from a seeded generator, and renders the outcome with
//! fixed formatting. Re-running with the same seed and resolution must
//! reproduce the report byte for byte.

use crate::error::Result;
use crate::fields::{profile_residual, reduced_residual};
use crate::mesh::{build_mesh, GridFunction, Mesh};
use crate::noswirl::{boundary_profile, cbar3, gamma_at_cbar3, solve_riccati, Params};
use crate::operators::{NormCase, OperatorContext, ProfilePair, WVariant};
use crate::swirl::{picard_solve, SwirlOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::sync::Arc;

/// Outcome of one check in the battery.
#[derive(Clone, Debug)]
pub struct VerifyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of the whole battery.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub seed: u64,
    pub n: usize,
    pub grading_exponent: f64,
    pub checks: Vec<VerifyCheck>,
    pub passed: bool,
}

impl VerifyReport {
    /// Fixed-format text rendering, one line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "verification battery: seed={} n={} grading={:.1}",
            self.seed, self.n, self.grading_exponent
        );
        for (i, c) in self.checks.iter().enumerate() {
            let _ = writeln!(
                out,
                "[{}/{}] {:<38} {}  {}",
                i + 1,
                self.checks.len(),
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            );
        }
        let npass = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(
            out,
            "result: {}/{} checks passed",
            npass,
            self.checks.len()
        );
        out
    }
}

/// Tolerances pinned for the battery (chosen for the default n = 513).
const BOUNDARY_PROFILE_TOL: f64 = 1e-6;
const LANDAU_RESIDUAL_TOL: f64 = 1e-7;
const ROOT_IDENTITY_TOL: f64 = 1e-4;
const W_IDENTITY_REL_TOL: f64 = 1e-5;
const KERNEL_RESIDUAL_TOL: f64 = 1e-6;
const FUNCTIONAL_MATRIX_TOL: f64 = 1e-8;
const SWIRL_RESIDUAL_TOL: f64 = 1e-7;
const CONSTANT_SWIRL_TOL: f64 = 1e-10;

/// Draw a residual-space pair compatible with the context's weights:
/// a random low-degree polynomial under the case's decay envelope, with
/// the second derivative at 0 projected out of the first component.
pub fn random_residual_pair(ctx: &OperatorContext, rng: &mut impl Rng) -> Result<ProfilePair> {
    let mesh = &ctx.mesh;
    let eps = ctx.epsilon;
    let deg = 6;
    let mut coef = [0.0f64; 7];
    for c in coef.iter_mut().take(deg + 1) {
        *c = rng.gen_range(-1.0..1.0);
    }
    let poly = move |x: f64| {
        // Chebyshev combination
        let (mut t0, mut t1, mut acc) = (1.0, x, coef[0] + coef[1] * x);
        for c in coef.iter().take(deg + 1).skip(2) {
            let t2 = 2.0 * x * t1 - t0;
            acc += c * t2;
            t0 = t1;
            t1 = t2;
        }
        acc
    };
    let envelope: Box<dyn Fn(f64) -> f64> = match ctx.case {
        NormCase::Case1 => Box::new(move |x: f64| (1.0 - x * x).powf(1.0 - 2.0 * eps)),
        NormCase::Case2 => Box::new(move |x: f64| {
            (1.0 - x).powf(1.0 - 2.0 * eps) * (1.0 + x) / ((1.0 + x) / 3.0).ln().powi(2)
        }),
        NormCase::Case2Mirror => Box::new(move |x: f64| {
            (1.0 + x).powf(1.0 - 2.0 * eps) * (1.0 - x) / ((1.0 - x) / 3.0).ln().powi(2)
        }),
        NormCase::Case3 => Box::new(move |x: f64| {
            (1.0 - x * x)
                / (((1.0 + x) / 3.0).ln().powi(2) * ((1.0 - x) / 3.0).ln().powi(2))
        }),
    };
    let raw = GridFunction::from_fn(mesh, |x| envelope(x) * poly(x));
    // Remove the second derivative at 0 with another envelope multiple.
    let c = mesh.center_index();
    let env_grid = GridFunction::from_fn(mesh, &envelope);
    let raw_dd0 = raw.derivative_at_node(c, 2)?;
    let env_dd0 = env_grid.derivative_at_node(c, 2)?;
    let theta = raw.add_scaled(-raw_dd0 / env_dd0, &env_grid);
    let mut coef2 = [0.0f64; 5];
    for c in coef2.iter_mut() {
        *c = rng.gen_range(-1.0..1.0);
    }
    let poly2 = move |x: f64| {
        coef2[0] + x * (coef2[1] + x * (coef2[2] + x * (coef2[3] + x * coef2[4])))
    };
    let phi = GridFunction::from_fn(mesh, move |x| {
        poly2(x) * (1.0 - x * x).powf(-(1.0 + eps) + 0.7)
    });
    Ok(ProfilePair::new(theta, phi))
}

fn check(name: &'static str, passed: bool, detail: String) -> VerifyCheck {
    VerifyCheck {
        name,
        passed,
        detail,
    }
}

fn boundary_profiles_check(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> Result<VerifyCheck> {
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let c1 = rng.gen_range(-1.0..4.0);
        let c2 = rng.gen_range(-1.0..4.0);
        let c3 = cbar3(c1, c2)?;
        let gamma = gamma_at_cbar3(c1, c2);
        let params = Params::new(c1, c2, c3, gamma);
        let profile = solve_riccati(&params, mesh)?.profile()?;
        for (i, &x) in mesh.nodes().iter().enumerate() {
            let err = (profile.u_theta_bar.at(i) - boundary_profile(c1, c2, x)).abs();
            worst = worst.max(err);
        }
    }
    Ok(check(
        "boundary closed-form profiles",
        worst <= BOUNDARY_PROFILE_TOL,
        format!("max_err={worst:.3e} tol={BOUNDARY_PROFILE_TOL:.1e}"),
    ))
}

fn landau_check(mesh: &Arc<Mesh>) -> Result<VerifyCheck> {
    let mut worst = 0.0f64;
    for a in [2.0f64, -2.0] {
        let params = Params::new(0.0, 0.0, 0.0, -2.0 / a);
        let profile = solve_riccati(&params, mesh)?.profile()?;
        worst = worst.max(profile_residual(&profile)?.theta_sup);
    }
    Ok(check(
        "Landau profile residuals",
        worst <= LANDAU_RESIDUAL_TOL,
        format!("max_residual={worst:.3e} tol={LANDAU_RESIDUAL_TOL:.1e}"),
    ))
}

fn root_identity_check(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> Result<VerifyCheck> {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let c1 = rng.gen_range(-0.95..2.0);
        let c2 = rng.gen_range(-0.95..2.0);
        let c3 = cbar3(c1, c2)? + rng.gen_range(0.1..2.0);
        let bounds = crate::noswirl::gamma_bounds(c1, c2, c3, mesh, 1e-7)?;
        let t = rng.gen_range(0.2..0.8);
        let gamma = bounds.gamma_minus + t * (bounds.gamma_plus - bounds.gamma_minus);
        let profile = solve_riccati(&Params::new(c1, c2, c3, gamma), mesh)?.profile()?;
        let um = profile.endpoint_minus;
        let up = profile.endpoint_plus;
        worst = worst.max((um * um - 4.0 * um - 4.0 * c1).abs());
        worst = worst.max((up * up + 4.0 * up - 4.0 * c2).abs());
    }
    Ok(check(
        "endpoint root identities",
        worst <= ROOT_IDENTITY_TOL,
        format!("max_defect={worst:.3e} tol={ROOT_IDENTITY_TOL:.1e}"),
    ))
}

fn operator_checks(
    ctx: &OperatorContext,
    rng: &mut ChaCha8Rng,
) -> Result<(VerifyCheck, VerifyCheck, VerifyCheck)> {
    let mut worst_w = 0.0f64;
    for _ in 0..3 {
        let xi = random_residual_pair(ctx, rng)?;
        let w = ctx.right_inverse_w(&xi)?;
        let back = ctx.op_a(&w)?;
        let diff_norm = ctx.norm_y(&back.add_scaled(-1.0, &xi))?.total;
        let xi_norm = ctx.norm_y(&xi)?.total;
        worst_w = worst_w.max(diff_norm / xi_norm);
    }
    let w_check = check(
        "right-inverse identity A(W(xi)) = xi",
        worst_w <= W_IDENTITY_REL_TOL,
        format!("max_rel_err={worst_w:.3e} tol={W_IDENTITY_REL_TOL:.1e}"),
    );
    let mut worst_k = 0.0f64;
    for kv in &ctx.kernel {
        worst_k = worst_k.max(ctx.norm_y(&ctx.op_a(&kv.pair)?)?.total);
    }
    let k_check = check(
        "kernel annihilation A(V) = 0",
        worst_k <= KERNEL_RESIDUAL_TOL,
        format!("max_norm={worst_k:.3e} tol={KERNEL_RESIDUAL_TOL:.1e}"),
    );
    let m = ctx.interior_functional_matrix()?;
    let mut worst_m = 0.0f64;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let target = if i == j {
                1.0
            } else if i == 1 && j == 0 {
                -ctx.params.gamma
            } else {
                0.0
            };
            worst_m = worst_m.max((v - target).abs());
        }
    }
    let m_check = check(
        "kernel functional matrix",
        worst_m <= FUNCTIONAL_MATRIX_TOL,
        format!("max_entry_err={worst_m:.3e} tol={FUNCTIONAL_MATRIX_TOL:.1e}"),
    );
    Ok((w_check, k_check, m_check))
}

fn swirl_check(ctx: &OperatorContext) -> Result<VerifyCheck> {
    let mut beta = vec![0.0; ctx.kernel.len()];
    let idx = ctx
        .kernel
        .iter()
        .position(|kv| kv.mode == crate::operators::KernelMode::V3)
        .expect("interior context has a V3 direction");
    beta[idx] = 0.01;
    let sol = picard_solve(ctx, &beta, &SwirlOptions::default())?;
    let ok = sol.iterations <= 50 && sol.residual_y <= SWIRL_RESIDUAL_TOL;
    Ok(check(
        "swirl construction at an interior point",
        ok,
        format!(
            "iterations={} residual={:.3e} tol={SWIRL_RESIDUAL_TOL:.1e}",
            sol.iterations, sol.residual_y
        ),
    ))
}

fn constant_swirl_check(ctx: &OperatorContext) -> Result<VerifyCheck> {
    let c = GridFunction::from_fn(&ctx.mesh, |_| 0.01);
    let report = reduced_residual(&ctx.u_bar, &c, {
        let p = &ctx.params;
        (p.c1, p.c2, p.c3)
    })?;
    Ok(check(
        "constant swirl leaves the residual",
        report.phi_weighted_sup <= CONSTANT_SWIRL_TOL,
        format!(
            "phi_residual={:.3e} tol={CONSTANT_SWIRL_TOL:.1e}",
            report.phi_weighted_sup
        ),
    ))
}

/// Run the battery at the given seed and resolution.
pub fn verify(seed: u64, n: usize, grading_exponent: f64) -> Result<VerifyReport> {
    let mesh = build_mesh(n, grading_exponent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    checks.push(boundary_profiles_check(&mesh, &mut rng)?);
    checks.push(landau_check(&mesh)?);
    checks.push(root_identity_check(&mesh, &mut rng)?);
    // Interior operator context at the Landau point A = 2.
    let params = Params::new(0.0, 0.0, 0.0, -1.0);
    let (profile, _, _) = crate::noswirl::analyze(&params, &mesh, 1e-7)?;
    let ctx = OperatorContext::new(&profile)?;
    debug_assert_eq!(ctx.variant, WVariant::W1);
    let (w_check, k_check, m_check) = operator_checks(&ctx, &mut rng)?;
    checks.push(w_check);
    checks.push(k_check);
    checks.push(m_check);
    checks.push(swirl_check(&ctx)?);
    checks.push(constant_swirl_check(&ctx)?);
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed,
        n,
        grading_exponent,
        checks,
        passed,
    })
}
