//! Construction of nearby solutions with nonzero swirl.
//!
//! Given the operator machinery at an admissible parameter point, the
//! perturbation is sought as `U = sum_i beta_i V^i + V` with prescribed
//! kernel coefficients `beta` and a gauge-fixed correction `V`. The
//! correction solves the fixed-point equation `V = -P W Q(U, U)`, which
//! is equivalent to `P W G(U) = 0`; since the map `G` internalizes the
//! forcing adjustments, the converged pair satisfies `G(U) = 0` and the
//! adjusted forcing constants are read off afterwards.

use crate::error::{Error, Result};
use crate::mesh::{EndpointWeight, Side};
use crate::operators::{KernelMode, OperatorContext, ProfilePair};
use serde::{Deserialize, Serialize};

/// Iteration controls for the fixed-point and Newton solvers.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct SwirlOptions {
    /// Stop when the X-norm of the correction increment falls below this.
    pub tol: f64,
    /// Hard cap on fixed-point iterations.
    pub max_iter: usize,
    /// Largest admissible |beta_i|; the construction is perturbative.
    pub beta_guard: f64,
}

impl Default for SwirlOptions {
    fn default() -> Self {
        SwirlOptions {
            tol: 1e-8,
            max_iter: 200,
            beta_guard: 0.1,
        }
    }
}

/// Number of consecutive non-decreasing increments that triggers a
/// divergence error.
const DIVERGENCE_STREAK: usize = 3;
/// Increment size that aborts immediately.
const INCREMENT_BLOWUP: f64 = 1e3;
/// Inner fixed-point steps per Newton update.
const NEWTON_INNER_STEPS: usize = 2;

/// A converged swirl perturbation.
#[derive(Clone, Debug, Serialize)]
pub struct SwirlSolution {
    /// Kernel coefficients, in the order of the context's kernel basis.
    pub beta: Vec<f64>,
    /// Kernel modes matching `beta`.
    pub kernel_modes: Vec<KernelMode>,
    /// Total perturbation `sum beta_i V^i + V`.
    pub pair: ProfilePair,
    /// Gauge-fixed correction `V`.
    pub correction: ProfilePair,
    pub iterations: usize,
    /// X-norm of the final increment.
    pub increment: f64,
    /// Y-norm of `G` at the solution.
    pub residual_y: f64,
    /// X-norm of the correction.
    pub correction_norm_x: f64,
    /// Forcing constants adjusted by the perturbation.
    pub chat: (f64, f64, f64),
}

fn kernel_combination(ctx: &OperatorContext, beta: &[f64]) -> Result<ProfilePair> {
    if beta.len() != ctx.kernel.len() {
        return Err(Error::InvalidParameter(format!(
            "beta has {} entries but the kernel basis has {}",
            beta.len(),
            ctx.kernel.len()
        )));
    }
    let mut acc = ProfilePair::zeros(&ctx.mesh);
    for (b, kv) in beta.iter().zip(ctx.kernel.iter()) {
        acc = acc.add_scaled(*b, &kv.pair);
    }
    Ok(acc)
}

fn check_beta(beta: &[f64], guard: f64) -> Result<()> {
    for (i, b) in beta.iter().enumerate() {
        if !b.is_finite() || b.abs() > guard {
            return Err(Error::InvalidParameter(format!(
                "kernel coefficient beta[{i}] = {b} exceeds the perturbative guard {guard}"
            )));
        }
    }
    Ok(())
}

fn finish(
    ctx: &OperatorContext,
    beta: &[f64],
    correction: ProfilePair,
    iterations: usize,
    increment: f64,
) -> Result<SwirlSolution> {
    let base = kernel_combination(ctx, beta)?;
    let pair = base.add_scaled(1.0, &correction);
    let residual_y = ctx.norm_y(&ctx.op_g(&pair)?)?.total;
    let correction_norm_x = ctx.norm_x(&correction)?.total;
    let chat = ctx.chat(&pair)?;
    Ok(SwirlSolution {
        beta: beta.to_vec(),
        kernel_modes: ctx.kernel.iter().map(|kv| kv.mode).collect(),
        pair,
        correction,
        iterations,
        increment,
        residual_y,
        correction_norm_x,
        chat,
    })
}

/// Fixed-point construction of the gauge-fixed correction for given
/// kernel coefficients.
pub fn picard_solve(
    ctx: &OperatorContext,
    beta: &[f64],
    opts: &SwirlOptions,
) -> Result<SwirlSolution> {
    check_beta(beta, opts.beta_guard)?;
    let base = kernel_combination(ctx, beta)?;
    let mut v = ProfilePair::zeros(&ctx.mesh);
    let mut prev_inc = f64::INFINITY;
    let mut streak = 0usize;
    for iter in 1..=opts.max_iter {
        let u = base.add_scaled(1.0, &v);
        let q = ctx.op_q(&u, &u)?;
        let v_new = ctx.project(&ctx.right_inverse_w(&q)?)?.scale(-1.0);
        let inc = ctx.norm_x(&v_new.add_scaled(-1.0, &v))?.total;
        v = v_new;
        if !inc.is_finite() || inc > INCREMENT_BLOWUP {
            return Err(Error::Divergence(format!(
                "fixed-point increment blew up to {inc:.3e} at iteration {iter}"
            )));
        }
        if inc <= opts.tol {
            return finish(ctx, beta, v, iter, inc);
        }
        if inc >= prev_inc {
            streak += 1;
            if streak >= DIVERGENCE_STREAK {
                return Err(Error::Divergence(format!(
                    "fixed-point increments stopped contracting ({prev_inc:.3e} -> {inc:.3e} \
                     over {DIVERGENCE_STREAK} consecutive iterations, iteration {iter})"
                )));
            }
        } else {
            streak = 0;
        }
        prev_inc = inc;
    }
    Err(Error::Divergence(format!(
        "fixed-point iteration did not reach tol {:.1e} within {} iterations (last increment {prev_inc:.3e})",
        opts.tol, opts.max_iter
    )))
}

/// One matrix-free Newton pass on a converged solution; kept only when
/// it improves the residual.
pub fn newton_refine(
    ctx: &OperatorContext,
    sol: &SwirlSolution,
    opts: &SwirlOptions,
) -> Result<SwirlSolution> {
    let base = kernel_combination(ctx, &sol.beta)?;
    let mut best = sol.clone();
    let mut v = sol.correction.clone();
    for _ in 0..opts.max_iter.min(8) {
        let u = base.add_scaled(1.0, &v);
        let g = ctx.op_g(&u)?;
        // Inner fixed point for L_u delta = -G(u):
        // delta <- -P W (G + Q(u, delta) + Q(delta, u)).
        let mut delta = ProfilePair::zeros(&ctx.mesh);
        for _ in 0..NEWTON_INNER_STEPS {
            let b1 = ctx.op_q(&u, &delta)?;
            let b2 = ctx.op_q(&delta, &u)?;
            let rhs = g.add_scaled(1.0, &b1).add_scaled(1.0, &b2);
            delta = ctx.project(&ctx.right_inverse_w(&rhs)?)?.scale(-1.0);
        }
        let inc = ctx.norm_x(&delta)?.total;
        v = v.add_scaled(1.0, &delta);
        let candidate = finish(ctx, &sol.beta, v.clone(), best.iterations + 1, inc)?;
        if candidate.residual_y < best.residual_y {
            best = candidate;
        } else {
            break;
        }
        if inc <= opts.tol {
            break;
        }
    }
    Ok(best)
}

/// Finite-difference tangency data for one kernel direction.
#[derive(Clone, Debug, Serialize)]
pub struct BetaDerivativeReport {
    /// Kernel index probed.
    pub index: usize,
    pub mode: KernelMode,
    /// (step, X-norm error of the central difference against the kernel
    /// vector), largest step first.
    pub errors: Vec<(f64, f64)>,
    /// Log-log slope of the error against the step.
    pub order: f64,
    /// Error at the smallest step.
    pub limit_error: f64,
}

/// Central-difference derivative of the solution map at beta = 0 in one
/// kernel direction; the limit is the kernel vector itself and the
/// error order reflects the tangency of the solution family.
pub fn beta_derivative_check(
    ctx: &OperatorContext,
    index: usize,
    steps: &[f64],
    opts: &SwirlOptions,
) -> Result<BetaDerivativeReport> {
    if index >= ctx.kernel.len() {
        return Err(Error::InvalidParameter(format!(
            "kernel index {index} out of range ({} basis vectors)",
            ctx.kernel.len()
        )));
    }
    let mut errors = Vec::with_capacity(steps.len());
    for &h in steps {
        if !(h > 0.0 && h <= opts.beta_guard) {
            return Err(Error::InvalidParameter(format!(
                "step {h} outside (0, {}]",
                opts.beta_guard
            )));
        }
        let mut beta_p = vec![0.0; ctx.kernel.len()];
        beta_p[index] = h;
        let mut beta_m = vec![0.0; ctx.kernel.len()];
        beta_m[index] = -h;
        let sp = picard_solve(ctx, &beta_p, opts)?;
        let sm = picard_solve(ctx, &beta_m, opts)?;
        let diff = sp.pair.add_scaled(-1.0, &sm.pair).scale(1.0 / (2.0 * h));
        let err = ctx
            .norm_x(&diff.add_scaled(-1.0, &ctx.kernel[index].pair))?
            .total;
        errors.push((h, err));
    }
    let order = log_log_slope(&errors);
    let limit_error = errors
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|&(_, e)| e)
        .unwrap_or(f64::NAN);
    Ok(BetaDerivativeReport {
        index,
        mode: ctx.kernel[index].mode,
        errors,
        order,
        limit_error,
    })
}

/// Least-squares slope of ln(err) against ln(h).
pub fn log_log_slope(pairs: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|&&(h, e)| h > 0.0 && e > 0.0)
        .map(|&(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Outcome of a swirl construction attempt outside the certified strata.
#[derive(Clone, Debug, Serialize)]
pub enum ProbeOutcome {
    /// The fixed point stopped contracting or blew up.
    Diverged { detail: String },
    /// The iteration converged but the swirl settled to a constant.
    ConstantCollapse { dphi_weighted_sup: f64 },
    /// The iteration produced a genuinely nonconstant swirl.
    NonconstantSwirl {
        dphi_weighted_sup: f64,
        residual_y: f64,
    },
}

/// Rigidity diagnostics at a parameter point.
#[derive(Clone, Debug, Serialize)]
pub struct RigidityReport {
    /// Y-norm of `G` on the constant-swirl pair `(0, C)`; the map
    /// vanishes identically on this family.
    pub constant_family_residual: f64,
    pub constant_value: f64,
    pub probe: ProbeOutcome,
}

/// Threshold on the weighted sup of the swirl derivative below which a
/// converged probe is considered constant.
const CONSTANT_COLLAPSE_TOL: f64 = 1e-9;

/// Check the constant-swirl family and attempt a swirl construction
/// with the context's machinery (typically an override context at a
/// point where no construction is certified).
pub fn rigidity_probe(
    ctx: &OperatorContext,
    constant_value: f64,
    beta3: f64,
    opts: &SwirlOptions,
) -> Result<RigidityReport> {
    let mesh = &ctx.mesh;
    let constant_pair = ProfilePair::new(
        crate::mesh::GridFunction::zeros(mesh),
        crate::mesh::GridFunction::from_fn(mesh, |_| constant_value),
    );
    let constant_family_residual = ctx.norm_y(&ctx.op_g(&constant_pair)?)?.total;
    let mut beta = vec![0.0; ctx.kernel.len()];
    let idx = ctx
        .kernel
        .iter()
        .position(|kv| kv.mode == KernelMode::V3)
        .ok_or_else(|| {
            Error::CaseMismatch("probe context has no V3 kernel direction".into())
        })?;
    beta[idx] = beta3;
    let probe = match picard_solve(ctx, &beta, opts) {
        Err(Error::Divergence(detail)) => ProbeOutcome::Diverged { detail },
        Err(e) => return Err(e),
        Ok(sol) => {
            let dphi = sol.pair.phi.differentiate(1)?;
            let eps = ctx.epsilon;
            let dphi_weighted_sup = dphi.sup_weighted(|x| (1.0 - x * x).powf(1.0 + eps));
            if dphi_weighted_sup <= CONSTANT_COLLAPSE_TOL {
                ProbeOutcome::ConstantCollapse { dphi_weighted_sup }
            } else {
                ProbeOutcome::NonconstantSwirl {
                    dphi_weighted_sup,
                    residual_y: sol.residual_y,
                }
            }
        }
    };
    Ok(RigidityReport {
        constant_family_residual,
        constant_value,
        probe,
    })
}

/// Endpoint limits of the perturbed swirl profile (the swirl component
/// extends continuously to the poles in the constructed cases).
pub fn swirl_endpoint_limits(sol: &SwirlSolution) -> Result<(f64, f64)> {
    let m = sol
        .pair
        .phi
        .endpoint_limit(Side::Minus, EndpointWeight::One)?
        .value;
    let p = sol
        .pair
        .phi
        .endpoint_limit(Side::Plus, EndpointWeight::One)?
        .value;
    Ok((m, p))
}
