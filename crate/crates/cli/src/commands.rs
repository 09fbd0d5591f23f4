//! Implementations behind each CLI subcommand.

use crate::config::RunConfig;
use anyhow::{Context, Result};
use homax_core::{
    analyze, build_mesh, picard_solve, reconstruct, reduced_residual, solve_riccati, Mesh,
    NoSwirlProfile, OperatorContext, Params, RiccatiOutcome,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

fn mesh_for(config: &RunConfig) -> Result<Arc<Mesh>> {
    Ok(build_mesh(config.n, config.grading_exponent)?)
}

fn describe_profile(out: &mut String, profile: &NoSwirlProfile) {
    let p = &profile.params;
    let _ = writeln!(
        out,
        "parameters: c1={:.12} c2={:.12} c3={:.12} gamma={:.12}",
        p.c1, p.c2, p.c3, p.gamma
    );
    let _ = writeln!(
        out,
        "endpoint values: U(-1)={:.12} U(+1)={:.12}",
        profile.endpoint_minus, profile.endpoint_plus
    );
    if let Some(e1) = profile.eta1 {
        let _ = writeln!(out, "log coefficient at -1: eta1={e1:.6}");
    }
    if let Some(e2) = profile.eta2 {
        let _ = writeln!(out, "log coefficient at +1: eta2={e2:.6}");
    }
    if let Some(label) = &profile.stratum {
        let _ = writeln!(out, "stratum: {}", render_label(label));
    }
}

fn render_label(label: &homax_core::RegionLabel) -> String {
    let i = match label.i_stratum {
        Some((k, l)) => format!("I_({k},{l})"),
        None => "none".into(),
    };
    format!(
        "J_{} / {} / {} (interior set membership: {})",
        label.j_stratum,
        i,
        label.case_tag,
        if label.in_i_hat { "I-hat" } else { "regular" }
    )
}

/// `noswirl`: solve the profile equation at one parameter point.
pub fn noswirl(
    params: &Params,
    config: &RunConfig,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> Result<String> {
    let mesh = mesh_for(config)?;
    let mut out = String::new();
    match solve_riccati(params, &mesh)? {
        RiccatiOutcome::BlowUp { x_star } => {
            let _ = writeln!(
                out,
                "outcome: blow-up at x = {x_star:.12} (no profile at this gamma)"
            );
        }
        RiccatiOutcome::Profile(profile) => {
            let _ = writeln!(out, "outcome: profile");
            describe_profile(&mut out, &profile);
            if let Some(path) = csv {
                profile.u_theta_bar.to_csv(path)?;
                let _ = writeln!(out, "wrote {}", path.display());
            }
            if let Some(path) = json {
                profile.u_theta_bar.to_json(path)?;
                let _ = writeln!(out, "wrote {}", path.display());
            }
        }
    }
    Ok(out)
}

/// `gamma-bounds`: admissible center-value interval at fixed (c1, c2, c3).
pub fn gamma_bounds(c1: f64, c2: f64, c3: f64, config: &RunConfig) -> Result<String> {
    let mesh = mesh_for(config)?;
    let b = homax_core::gamma_bounds(c1, c2, c3, &mesh, config.gamma_tol)?;
    let mut out = String::new();
    let _ = writeln!(out, "gamma_minus = {:.12}", b.gamma_minus);
    let _ = writeln!(out, "gamma_plus  = {:.12}", b.gamma_plus);
    let _ = writeln!(out, "tolerance   = {:.3e}", b.tol);
    let _ = writeln!(out, "on boundary c3 = cbar3: {}", b.boundary);
    Ok(out)
}

/// `classify`: solve, bound, and label one parameter point.
pub fn classify(params: &Params, config: &RunConfig) -> Result<String> {
    let mesh = mesh_for(config)?;
    let (profile, bounds, label) = analyze(params, &mesh, config.gamma_tol)?;
    let mut out = String::new();
    describe_profile(&mut out, &profile);
    let _ = writeln!(
        out,
        "admissible gamma interval: [{:.12}, {:.12}]",
        bounds.gamma_minus, bounds.gamma_plus
    );
    if profile.stratum.is_none() {
        let _ = writeln!(out, "stratum: {}", render_label(&label));
    }
    Ok(out)
}

fn context_at(params: &Params, config: &RunConfig) -> Result<(OperatorContext, Arc<Mesh>)> {
    let mesh = mesh_for(config)?;
    let (profile, _, _) = analyze(params, &mesh, config.gamma_tol)?;
    let ctx = OperatorContext::new(&profile)?;
    Ok((ctx, mesh))
}

/// `kernel`: report the kernel basis and gauge data at a point.
pub fn kernel(params: &Params, config: &RunConfig, out_dir: Option<&Path>) -> Result<String> {
    let (ctx, _) = context_at(params, config)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "case: {:?}, right-inverse variant: {:?}, weight exponent eps = {:.4}",
        ctx.case, ctx.variant, ctx.epsilon
    );
    let _ = writeln!(out, "kernel dimension: {}", ctx.kernel.len());
    for kv in &ctx.kernel {
        let f = ctx.functionals(&kv.pair)?;
        let _ = writeln!(
            out,
            "  {}: theta(0)={:+.6e} theta'(0)={:+.6e} phi'(0)={:+.6e} phi(0)={:+.6e}",
            kv.mode, f.l1, f.l2, f.l3, f.l4
        );
    }
    let m = ctx.interior_functional_matrix()?;
    let _ = writeln!(out, "interior functional matrix (rows l1..l4, columns V1..V4):");
    for row in &m {
        let _ = writeln!(
            out,
            "  [{:+.6e} {:+.6e} {:+.6e} {:+.6e}]",
            row[0], row[1], row[2], row[3]
        );
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for kv in &ctx.kernel {
            let t = dir.join(format!("kernel_{}_theta.csv", kv.mode));
            let p = dir.join(format!("kernel_{}_phi.csv", kv.mode));
            kv.pair.theta.to_csv(&t)?;
            kv.pair.phi.to_csv(&p)?;
            let _ = writeln!(out, "wrote {} and {}", t.display(), p.display());
        }
    }
    Ok(out)
}

/// `verify-operators`: right-inverse and kernel identities at a point.
pub fn verify_operators(params: &Params, config: &RunConfig, samples: usize) -> Result<String> {
    let (ctx, _) = context_at(params, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = String::new();
    let mut worst_w = 0.0f64;
    for _ in 0..samples.max(1) {
        let xi = homax_core::random_residual_pair(&ctx, &mut rng)?;
        let w = ctx.right_inverse_w(&xi)?;
        let diff = ctx.op_a(&w)?.add_scaled(-1.0, &xi);
        worst_w = worst_w.max(ctx.norm_y(&diff)?.total / ctx.norm_y(&xi)?.total);
    }
    let _ = writeln!(
        out,
        "right-inverse identity: max relative Y-error {worst_w:.3e} over {} samples",
        samples.max(1)
    );
    let mut worst_k = 0.0f64;
    for kv in &ctx.kernel {
        worst_k = worst_k.max(ctx.norm_y(&ctx.op_a(&kv.pair)?)?.total);
    }
    let _ = writeln!(out, "kernel annihilation: max Y-norm {worst_k:.3e}");
    anyhow::ensure!(
        worst_w <= 1e-5 && worst_k <= 1e-6,
        "operator identities exceeded tolerances (W: {worst_w:.3e}, kernel: {worst_k:.3e})"
    );
    let _ = writeln!(out, "operator identities hold");
    Ok(out)
}

/// Options for the `solve` subcommand.
#[derive(Clone, Debug, Default)]
pub struct SolveOutputs {
    pub newton: bool,
    pub csv_dir: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub field_csv: Option<PathBuf>,
    pub radius: f64,
    pub field_samples: usize,
}

/// `solve`: construct a nearby solution with nonzero swirl.
pub fn solve(
    params: &Params,
    beta: &[f64],
    config: &RunConfig,
    outputs: &SolveOutputs,
) -> Result<String> {
    let (ctx, mesh) = context_at(params, config)?;
    anyhow::ensure!(
        beta.len() == ctx.kernel.len(),
        "expected {} kernel coefficients at this point (basis {}), got {}",
        ctx.kernel.len(),
        ctx.kernel
            .iter()
            .map(|kv| kv.mode.to_string())
            .collect::<Vec<_>>()
            .join(","),
        beta.len()
    );
    let opts = config.swirl_options();
    let mut sol = picard_solve(&ctx, beta, &opts)?;
    if outputs.newton {
        sol = homax_core::newton_refine(&ctx, &sol, &opts)?;
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "converged in {} iterations (last increment {:.3e})",
        sol.iterations, sol.increment
    );
    let modes: Vec<String> = sol.kernel_modes.iter().map(|m| m.to_string()).collect();
    let _ = writeln!(out, "kernel basis: {}", modes.join(", "));
    let _ = writeln!(out, "beta: {:?}", sol.beta);
    let _ = writeln!(out, "residual (Y-norm): {:.3e}", sol.residual_y);
    let _ = writeln!(out, "correction size (X-norm): {:.3e}", sol.correction_norm_x);
    let (h1, h2, h3) = sol.chat;
    let _ = writeln!(
        out,
        "adjusted forcing constants: c1={h1:.12} c2={h2:.12} c3={h3:.12}"
    );
    let u_theta_full = ctx.u_bar.add_scaled(1.0, &sol.pair.theta);
    let residual = reduced_residual(&u_theta_full, &sol.pair.phi, sol.chat)?;
    let _ = writeln!(
        out,
        "reduced-system residual: theta {:.3e}, weighted phi {:.3e}",
        residual.theta_sup, residual.phi_weighted_sup
    );
    if let Some(dir) = &outputs.csv_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        u_theta_full.to_csv(&dir.join("u_theta.csv"))?;
        sol.pair.phi.to_csv(&dir.join("u_phi.csv"))?;
        let _ = writeln!(out, "wrote profiles under {}", dir.display());
    }
    if let Some(path) = &outputs.json {
        let file = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(file, &sol)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    if let Some(path) = &outputs.field_csv {
        let m = outputs.field_samples.max(8);
        let xs: Vec<f64> = (0..m)
            .map(|i| -0.999 + 1.998 * (i as f64) / ((m - 1) as f64))
            .collect();
        let field = reconstruct(&u_theta_full, &sol.pair.phi, outputs.radius, &xs)?;
        let file = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        field.write_csv(file)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    drop(mesh);
    Ok(out)
}

/// `verify`: the seeded self-check battery.
pub fn verify(config: &RunConfig) -> Result<String> {
    let report = homax_core::verify(config.seed, config.n, config.grading_exponent)?;
    let text = report.render();
    anyhow::ensure!(report.passed, "verification battery failed\n{text}");
    Ok(text)
}
