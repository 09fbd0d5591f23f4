use homax_core::noswirl::CaseTag;
use homax_core::swirl::{
    beta_derivative_check, log_log_slope, newton_refine, picard_solve, rigidity_probe,
    swirl_endpoint_limits, ProbeOutcome, SwirlOptions,
};
use homax_core::{
    analyze, build_mesh, Error, KernelMode, NormCase, OperatorContext, Params, RegionLabel,
    RiccatiOutcome, WVariant,
};
use std::sync::OnceLock;

/// Y-norm of the nonlinear map at a converged perturbation.
const RESIDUAL_TOL: f64 = 1e-7;
/// Agreement of the central-difference derivative with the kernel
/// vector at the smallest probed step.
const TANGENT_LIMIT_TOL: f64 = 1e-4;
/// Least-squares slope window for quantities expected to be quadratic.
const QUADRATIC_SLOPE_MIN: f64 = 1.8;

fn flat_ctx() -> &'static OperatorContext {
    static CTX: OnceLock<OperatorContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let mesh = build_mesh(513, 4.0).expect("mesh");
        let params = Params::new(0.0, 0.0, 0.0, 0.0);
        let profile = match homax_core::solve_riccati(&params, &mesh).expect("solve") {
            RiccatiOutcome::Profile(p) => *p,
            RiccatiOutcome::BlowUp { x_star } => panic!("unexpected blow-up at {x_star}"),
        };
        let label = RegionLabel {
            j_stratum: 1,
            i_stratum: Some((1, 1)),
            case_tag: CaseTag::Case1,
            in_i_hat: false,
        };
        OperatorContext::with_overrides(&profile, label, NormCase::Case1, WVariant::W1, 0.25)
            .expect("context")
    })
}

/// Context at the upper center-value bound of (c1, c2, c3) = (-0.9, 0, 0),
/// which classifies into the stratum with the shifted second functional.
fn shifted_ctx() -> &'static OperatorContext {
    static CTX: OnceLock<OperatorContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let mesh = build_mesh(513, 4.0).expect("mesh");
        let b = homax_core::gamma_bounds(-0.9, 0.0, 0.0, &mesh, 0.0).expect("bounds");
        let (profile, _, _) =
            analyze(&Params::new(-0.9, 0.0, 0.0, b.gamma_plus), &mesh, 0.0).expect("analyze");
        OperatorContext::new(&profile).expect("context")
    })
}

fn beta_with_v3(ctx: &OperatorContext, value: f64) -> Vec<f64> {
    let idx = ctx
        .kernel
        .iter()
        .position(|kv| kv.mode == KernelMode::V3)
        .expect("V3 direction");
    let mut beta = vec![0.0; ctx.kernel.len()];
    beta[idx] = value;
    beta
}

#[test]
fn zero_coefficients_return_the_unperturbed_point() {
    let ctx = flat_ctx();
    let beta = vec![0.0; ctx.kernel.len()];
    let sol = picard_solve(ctx, &beta, &SwirlOptions::default()).expect("solve");
    assert!(sol.iterations <= 2, "iterations {}", sol.iterations);
    assert!(
        sol.correction_norm_x < 1e-12,
        "correction norm {}",
        sol.correction_norm_x
    );
    assert!(sol.residual_y < 1e-12, "residual {}", sol.residual_y);
}

#[test]
fn picard_converges_in_the_shifted_variant() {
    let ctx = shifted_ctx();
    assert_eq!(ctx.variant, WVariant::W2a);
    let sol = picard_solve(ctx, &beta_with_v3(ctx, 0.01), &SwirlOptions::default())
        .expect("solve");
    assert!(sol.iterations <= 50, "iterations {}", sol.iterations);
    assert!(sol.residual_y < RESIDUAL_TOL, "residual {}", sol.residual_y);
    let dphi = sol.pair.phi.differentiate(1).expect("phi'");
    assert!(
        dphi.sup_weighted(|x| 1.0 - x * x) > 1e-4,
        "swirl collapsed to a constant"
    );
}

#[test]
fn correction_is_quadratically_small_in_the_coefficients() {
    let ctx = flat_ctx();
    let opts = SwirlOptions::default();
    let mut pairs = Vec::new();
    for &b3 in &[1e-3, 3.16e-3, 1e-2, 3.16e-2] {
        let sol = picard_solve(ctx, &beta_with_v3(ctx, b3), &opts).expect("solve");
        pairs.push((b3, sol.correction_norm_x));
    }
    let slope = log_log_slope(&pairs);
    assert!(
        slope >= QUADRATIC_SLOPE_MIN,
        "correction norm slope {slope:.3} from {pairs:?}"
    );
}

#[test]
fn solution_map_is_tangent_to_the_kernel_directions() {
    let ctx = flat_ctx();
    let opts = SwirlOptions::default();
    let steps = [1e-2, 3.16e-3, 1e-3];
    for mode in [KernelMode::V3, KernelMode::V4] {
        let index = ctx
            .kernel
            .iter()
            .position(|kv| kv.mode == mode)
            .expect("kernel direction");
        let report = beta_derivative_check(ctx, index, &steps, &opts).expect("derivative");
        assert!(
            report.order >= QUADRATIC_SLOPE_MIN || report.limit_error < 1e-10,
            "{mode}: tangency order {:.3} with errors {:?}",
            report.order,
            report.errors
        );
        assert!(
            report.limit_error < TANGENT_LIMIT_TOL,
            "{mode}: limit error {:.3e}",
            report.limit_error
        );
    }
}

#[test]
fn newton_refinement_never_worsens_the_residual() {
    let ctx = flat_ctx();
    let mut opts = SwirlOptions::default();
    opts.tol = 1e-5;
    let rough = picard_solve(ctx, &beta_with_v3(ctx, 0.02), &opts).expect("solve");
    let refined = newton_refine(ctx, &rough, &SwirlOptions::default()).expect("refine");
    assert!(
        refined.residual_y <= rough.residual_y,
        "refinement worsened the residual: {} -> {}",
        rough.residual_y,
        refined.residual_y
    );
}

#[test]
fn unreachable_tolerance_reports_divergence() {
    let ctx = flat_ctx();
    let opts = SwirlOptions {
        tol: 1e-30,
        max_iter: 6,
        beta_guard: 0.1,
    };
    let err = picard_solve(ctx, &beta_with_v3(ctx, 0.01), &opts).unwrap_err();
    assert!(matches!(err, Error::Divergence(_)), "got {err:?}");
}

#[test]
fn swirl_component_extends_to_the_poles() {
    // With the third-direction coefficient alone, the leading swirl term
    // at the flat point is beta3 * x, so the pole limits sit near
    // -beta3 and +beta3 with a quadratically small correction.
    let ctx = flat_ctx();
    let b3 = 0.01;
    let sol = picard_solve(ctx, &beta_with_v3(ctx, b3), &SwirlOptions::default()).expect("solve");
    let (minus, plus) = swirl_endpoint_limits(&sol).expect("limits");
    assert!((minus + b3).abs() < 20.0 * b3 * b3, "minus limit {minus}");
    assert!((plus - b3).abs() < 20.0 * b3 * b3, "plus limit {plus}");
}

#[test]
fn rigidity_probe_reports_the_constant_family_and_a_nonconstant_swirl() {
    let ctx = flat_ctx();
    let report = rigidity_probe(ctx, 0.05, 0.01, &SwirlOptions::default()).expect("probe");
    assert!(
        report.constant_family_residual < 1e-12,
        "constant family residual {}",
        report.constant_family_residual
    );
    assert_eq!(report.constant_value, 0.05);
    match report.probe {
        ProbeOutcome::NonconstantSwirl {
            dphi_weighted_sup,
            residual_y,
        } => {
            assert!(dphi_weighted_sup > 1e-6);
            assert!(residual_y < RESIDUAL_TOL, "probe residual {residual_y}");
        }
        ref other => panic!("expected a nonconstant swirl, got {other:?}"),
    }
}

#[test]
fn least_squares_slope_recovers_synthetic_orders() {
    let quadratic: Vec<(f64, f64)> = [1e-3, 1e-2, 1e-1]
        .iter()
        .map(|&h| (h, 3.0 * h * h))
        .collect();
    assert!((log_log_slope(&quadratic) - 2.0).abs() < 1e-12);
    let linear: Vec<(f64, f64)> = [1e-3, 1e-2, 1e-1].iter().map(|&h| (h, 5.0 * h)).collect();
    assert!((log_log_slope(&linear) - 1.0).abs() < 1e-12);
    assert!(log_log_slope(&[(1e-3, 1e-6)]).is_nan());
}

#[test]
fn adjusted_forcing_constants_shift_quadratically() {
    // The third adjusted constant absorbs the center curvature of the
    // swirl-swirl interaction, so it moves by O(beta^2) while the first
    // two stay within the same order.
    let ctx = flat_ctx();
    let opts = SwirlOptions::default();
    let mut pairs = Vec::new();
    for &b3 in &[1e-2, 3.16e-2] {
        let sol = picard_solve(ctx, &beta_with_v3(ctx, b3), &opts).expect("solve");
        let (h1, h2, h3) = sol.chat;
        let shift = h1.abs().max(h2.abs()).max(h3.abs());
        assert!(shift > 0.0, "adjusted constants did not move at all");
        pairs.push((b3, shift));
    }
    let slope = log_log_slope(&pairs);
    assert!(
        slope >= QUADRATIC_SLOPE_MIN,
        "forcing shift slope {slope:.3} from {pairs:?}"
    );
}

#[test]
fn picard_converges_on_the_boundary_stratum() {
    // On c3 = cbar3 both center-value bounds coincide, the profile is
    // the closed-form linear one, and the right inverse switches to the
    // two-vector variant.
    let mesh = build_mesh(513, 4.0).expect("mesh");
    let c1 = -0.9;
    let c2 = -0.8;
    let c3 = homax_core::cbar3(c1, c2).expect("cbar3");
    let b = homax_core::gamma_bounds(c1, c2, c3, &mesh, 0.0).expect("bounds");
    assert!(b.boundary, "expected the collapsed interval");
    let (profile, _, label) =
        analyze(&Params::new(c1, c2, c3, b.gamma_plus), &mesh, 0.0).expect("analyze");
    assert_eq!(label.j_stratum, 5);
    assert_eq!(label.case_tag, CaseTag::Case1);
    let ctx = OperatorContext::new(&profile).expect("context");
    assert_eq!(ctx.variant, WVariant::W3);
    let modes: Vec<KernelMode> = ctx.kernel.iter().map(|kv| kv.mode).collect();
    assert_eq!(modes, vec![KernelMode::V3, KernelMode::V4]);

    let sol = picard_solve(&ctx, &beta_with_v3(&ctx, 0.01), &SwirlOptions::default())
        .expect("solve");
    assert!(sol.iterations <= 50, "iterations {}", sol.iterations);
    assert!(sol.residual_y < RESIDUAL_TOL, "residual {}", sol.residual_y);
    let dphi = sol.pair.phi.differentiate(1).expect("phi'");
    assert!(
        dphi.sup_weighted(|x| 1.0 - x * x) > 1e-4,
        "swirl collapsed to a constant"
    );
}
