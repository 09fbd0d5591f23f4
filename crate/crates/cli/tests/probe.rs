//! Temporary measurement probe (deleted before release).

use std::sync::Arc;

use homax_core::{
    analyze, build_mesh, cbar3, gamma_bounds, picard_solve, reduced_residual, solve_riccati,
    GridFunction, KernelMode, Mesh, OperatorContext, Params, ProfilePair, SwirlOptions,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mesh() -> Arc<Mesh> {
    build_mesh(1025, 4.0).unwrap()
}

#[test]
fn probe_stratum_points() {
    let mesh = mesh();
    let pts: Vec<(&str, f64, f64, f64, i32)> = vec![
        // (name, c1, c2, c3, gamma selector: 0 mid, 1 plus, -1 minus, 2 boundary)
        ("I11", 0.0, 0.0, 0.0, 0),
        ("I12", -0.9, 0.0, 0.0, 1),
        ("I13", 0.0, -0.9, 0.0, -1),
        ("I21", -1.0, 0.0, 1.0, 0),
        ("I23", -1.0, -0.9, 1.0, -1),
        ("I31", 0.0, -1.0, 1.0, 0),
        ("I41", -1.0, -1.0, 1.0, 0),
        ("I5", -0.9, -0.8, f64::NAN, 2),
    ];
    for (name, c1, c2, mut c3, sel) in pts {
        if sel == 2 {
            c3 = cbar3(c1, c2).unwrap();
        }
        let b = gamma_bounds(c1, c2, c3, &mesh, 1e-9).unwrap();
        let gamma = match sel {
            0 => {
                if name == "I11" {
                    -1.0
                } else {
                    0.5 * (b.gamma_plus + b.gamma_minus)
                }
            }
            1 => b.gamma_plus,
            -1 => b.gamma_minus,
            _ => b.gamma_plus,
        };
        let params = Params::new(c1, c2, c3, gamma);
        let (profile, _, label) = match analyze(&params, &mesh, 1e-9) {
            Ok(t) => t,
            Err(e) => {
                println!("{name}: analyze FAILED: {e}");
                continue;
            }
        };
        println!(
            "{name}: gamma={gamma:.6} bounds=({:.6},{:.6}) label j={} i={:?} case={} eminus={:.6} eplus={:.6} eta1={:?} eta2={:?}",
            b.gamma_minus, b.gamma_plus, label.j_stratum, label.i_stratum, label.case_tag,
            profile.endpoint_minus, profile.endpoint_plus, profile.eta1, profile.eta2
        );
        let ctx = match OperatorContext::new(&profile) {
            Ok(c) => c,
            Err(e) => {
                println!("{name}: ctx FAILED: {e}");
                continue;
            }
        };
        println!(
            "{name}: variant={:?} case={:?} eps={:.4} kernel={:?}",
            ctx.variant,
            ctx.case,
            ctx.epsilon,
            ctx.kernel.iter().map(|k| k.mode).collect::<Vec<_>>()
        );
        let mut beta = vec![0.0; ctx.kernel.len()];
        let idx = ctx
            .kernel
            .iter()
            .position(|kv| kv.mode == KernelMode::V3)
            .unwrap();
        beta[idx] = 0.01;
        match picard_solve(&ctx, &beta, &SwirlOptions::default()) {
            Ok(sol) => {
                let dphi = sol.pair.phi.differentiate(1).unwrap();
                let nonconst = dphi
                    .values()
                    .iter()
                    .zip(mesh.nodes())
                    .map(|(d, &x)| (d * (1.0 - x * x)).abs())
                    .fold(0.0f64, f64::max);
                println!(
                    "{name}: picard iters={} residual={:.3e} dphi_w_sup={:.3e}",
                    sol.iterations, sol.residual_y, nonconst
                );
            }
            Err(e) => println!("{name}: picard FAILED: {e}"),
        }
    }
}

#[test]
fn probe_root_identities() {
    let mesh = mesh();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut worst_pt = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..50 {
        let c1 = rng.gen_range(-0.95..4.0);
        let c2 = rng.gen_range(-0.95..4.0);
        let c3 = cbar3(c1, c2).unwrap() + rng.gen_range(0.05..4.0);
        let b = gamma_bounds(c1, c2, c3, &mesh, 1e-9).unwrap();
        let t = rng.gen_range(0.2..0.8);
        let gamma = b.gamma_minus + t * (b.gamma_plus - b.gamma_minus);
        let profile = solve_riccati(&Params::new(c1, c2, c3, gamma), &mesh)
            .unwrap()
            .profile()
            .unwrap();
        let um = profile.endpoint_minus;
        let up = profile.endpoint_plus;
        let d1 = (um * um - 4.0 * um - 4.0 * c1).abs();
        let d2 = (up * up + 4.0 * up - 4.0 * c2).abs();
        if d1.max(d2) > worst {
            worst = d1.max(d2);
            worst_pt = (c1, c2, c3, gamma);
        }
        // interior branch: lower root at -1, upper at +1
        let lower_m = 2.0 - 2.0 * (1.0 + c1).sqrt();
        let upper_m = 2.0 + 2.0 * (1.0 + c1).sqrt();
        if (um - lower_m).abs() > (um - upper_m).abs() {
            println!("branch violation at ({c1:.3},{c2:.3},{c3:.3},{gamma:.3}): um={um:.6}");
        }
        let upper_p = -2.0 + 2.0 * (1.0 + c2).sqrt();
        let lower_p = -2.0 - 2.0 * (1.0 + c2).sqrt();
        if (up - upper_p).abs() > (up - lower_p).abs() {
            println!("branch violation at ({c1:.3},{c2:.3},{c3:.3},{gamma:.3}): up={up:.6}");
        }
    }
    println!("root identity worst defect = {worst:.3e} at {worst_pt:?}");
}

#[test]
fn probe_eta_boundary() {
    let mesh = mesh();
    let c1 = -1.0;
    for c2 in [0.0, 1.5] {
        let c3 = cbar3(c1, c2).unwrap();
        let b = gamma_bounds(c1, c2, c3, &mesh, 1e-9).unwrap();
        let profile = solve_riccati(&Params::new(c1, c2, c3, b.gamma_plus), &mesh)
            .unwrap()
            .profile()
            .unwrap();
        println!(
            "eta boundary (-1,{c2}): gamma_bar={:.8} boundary={} eta1={:?}",
            b.gamma_plus, b.boundary, profile.eta1
        );
    }
}

#[test]
fn probe_eta() {
    let mesh = mesh();
    for (c1, c2, c3) in [
        (-1.0, 0.0, 1.0),
        (-1.0, -0.9, 1.0),
        (-1.0, 2.0, 0.0),
        (-1.0, 0.0, 3.0),
    ] {
        let b = gamma_bounds(c1, c2, c3, &mesh, 1e-9).unwrap();
        for (tag, gamma) in [
            ("mid", 0.5 * (b.gamma_plus + b.gamma_minus)),
            ("plus", b.gamma_plus),
        ] {
            let profile = solve_riccati(&Params::new(c1, c2, c3, gamma), &mesh)
                .unwrap()
                .profile()
                .unwrap();
            println!(
                "eta probe ({c1},{c2},{c3}) {tag}: gamma={gamma:.8} eta1={:?} eta2={:?}",
                profile.eta1, profile.eta2
            );
        }
    }
}

fn random_domain_pair(
    ctx: &OperatorContext,
    rng: &mut ChaCha8Rng,
    scale: f64,
) -> ProfilePair {
    let mut c = [0.0f64; 7];
    for v in c.iter_mut() {
        *v = scale * rng.gen_range(-1.0..1.0);
    }
    // theta decays like 1-x^2; phi' decays like (1-x^2)^2 so the
    // swirl feedback integrand stays smooth up to the poles.
    let theta = GridFunction::from_fn(&ctx.mesh, move |x| {
        (1.0 - x * x) * (c[0] + x * (c[1] + x * (c[2] + x * c[3])))
    });
    let phi = GridFunction::from_fn(&ctx.mesh, move |x| {
        let q = x - 2.0 * x.powi(3) / 3.0 + x.powi(5) / 5.0;
        let r = x * x / 2.0 - x.powi(4) / 2.0 + x.powi(6) / 6.0;
        c[4] + c[5] * q + c[6] * r
    });
    ProfilePair::new(theta, phi)
}

#[test]
fn probe_linearization_slope() {
    let mesh = mesh();
    let params = Params::new(0.0, 0.0, 0.0, -1.0);
    let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
    let ctx = OperatorContext::new(&profile).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..3 {
        let u = random_domain_pair(&ctx, &mut rng, 1e-3);
        let v = random_domain_pair(&ctx, &mut rng, 1.0);
        let gu = ctx.op_g(&u).unwrap();
        let lv = ctx.op_l(&u, &v).unwrap();
        let qvv = ctx.op_q(&v, &v).unwrap();
        let mut pts = Vec::new();
        for &h in &[1e-3, 1e-4, 1e-5] {
            let guhv = ctx.op_g(&u.add_scaled(h, &v)).unwrap();
            let diff = guhv.add_scaled(-1.0, &gu).scale(1.0 / h).add_scaled(-1.0, &lv);
            let err = ctx.norm_y(&diff).unwrap().total;
            // defect from exact discrete quadraticity
            let defect = diff.add_scaled(-h, &qvv);
            let dn = ctx.norm_y(&defect).unwrap();
            // raw sups of the defect components
            let dth = defect
                .theta
                .values()
                .iter()
                .fold(0.0f64, |a, &z| a.max(z.abs()));
            let dph = defect
                .phi
                .values()
                .iter()
                .zip(mesh.nodes())
                .map(|(z, &x)| (z * (1.0 - x * x)).abs())
                .fold(0.0f64, f64::max);
            println!(
                "  h={h:.0e}: err={err:.3e} defect_y={:.3e} defect_theta_sup={dth:.3e} defect_phi_wsup={dph:.3e}",
                dn.total
            );
            pts.push((h, err));
        }
        let slope = homax_core::swirl::log_log_slope(&pts);
        println!("linearization trial {trial}: errs={pts:?} slope={slope:.4}");
    }
}

#[test]
fn probe_right_inverse_variants() {
    let mesh = mesh();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ctxs: Vec<(&str, OperatorContext)> = Vec::new();
    {
        let params = Params::new(0.0, 0.0, 0.0, -1.0);
        let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
        ctxs.push(("W1", OperatorContext::new(&profile).unwrap()));
    }
    {
        let b = gamma_bounds(-0.9, 0.0, 0.0, &mesh, 1e-9).unwrap();
        let params = Params::new(-0.9, 0.0, 0.0, b.gamma_plus);
        let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
        ctxs.push(("W2a", OperatorContext::new(&profile).unwrap()));
    }
    {
        let b = gamma_bounds(0.0, -0.9, 0.0, &mesh, 1e-9).unwrap();
        let params = Params::new(0.0, -0.9, 0.0, b.gamma_minus);
        let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
        ctxs.push(("W2b", OperatorContext::new(&profile).unwrap()));
    }
    {
        let c3 = cbar3(-0.9, -0.8).unwrap();
        let b = gamma_bounds(-0.9, -0.8, c3, &mesh, 1e-9).unwrap();
        let params = Params::new(-0.9, -0.8, c3, b.gamma_plus);
        let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
        ctxs.push(("W3", OperatorContext::new(&profile).unwrap()));
    }
    for (name, ctx) in &ctxs {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let xi = homax_core::random_residual_pair(ctx, &mut rng).unwrap();
            let w = ctx.right_inverse_w(&xi).unwrap();
            let back = ctx.op_a(&w).unwrap();
            let rel = ctx.norm_y(&back.add_scaled(-1.0, &xi)).unwrap().total
                / ctx.norm_y(&xi).unwrap().total;
            worst = worst.max(rel);
        }
        let mut worst_k = 0.0f64;
        for kv in &ctx.kernel {
            let image = ctx.op_a(&kv.pair).unwrap();
            let report = ctx.norm_y(&image).unwrap();
            if report.total > 1e-7 {
                let nodes = mesh.nodes();
                let (mut wx, mut wv) = (0.0, 0.0f64);
                let eps = ctx.epsilon;
                for (i, &x) in nodes.iter().enumerate() {
                    let w = (1.0 - x * x).powf(1.0 + eps) * image.phi.at(i).abs();
                    if w > wv {
                        wv = w;
                        wx = x;
                    }
                }
                let gap = 1.0 - wx.abs();
                let labels: Vec<String> = report
                    .terms
                    .iter()
                    .map(|t| format!("{}={:.2e}", t.label, t.value))
                    .collect();
                println!(
                    "  {name} {:?}: total={:.3e} terms={labels:?} argmax_t1 x={wx:.9} (1-|x|={gap:.3e}) val={wv:.3e}",
                    kv.mode, report.total
                );
            }
            worst_k = worst_k.max(report.total);
        }
        println!(
            "{name}: variant={:?} eps={:.4} max_rel_w_err={worst:.3e} max_kernel_norm={worst_k:.3e}",
            ctx.variant, ctx.epsilon
        );
    }
}

#[test]
fn probe_annihilation_scaling() {
    for n in [513usize, 1025, 2049] {
        let mesh = build_mesh(n, 4.0).unwrap();
        let b = gamma_bounds(-0.9, 0.0, 0.0, &mesh, 1e-9).unwrap();
        let params = Params::new(-0.9, 0.0, 0.0, b.gamma_plus);
        let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
        let ctx = OperatorContext::new(&profile).unwrap();
        let mut worst = 0.0f64;
        for kv in &ctx.kernel {
            worst = worst.max(
                ctx.norm_y(&ctx.op_a(&kv.pair).unwrap()).unwrap().total,
            );
        }
        let nodes = mesh.nodes();
        let w_last = ((1.0 + nodes[1]) / (1.0 + nodes[0])).ln();
        println!(
            "n={n}: worst_annihilation={worst:.3e} tail_dw={w_last:.4}",
        );
    }
}

#[test]
fn probe_v3_tail_errors() {
    let mesh = mesh();
    let b = gamma_bounds(-0.9, 0.0, 0.0, &mesh, 1e-9).unwrap();
    let params = Params::new(-0.9, 0.0, 0.0, b.gamma_plus);
    let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
    let ctx = OperatorContext::new(&profile).unwrap();
    let v3 = ctx
        .kernel
        .iter()
        .find(|kv| kv.mode == KernelMode::V3)
        .unwrap();
    let phi = &v3.pair.phi;
    let dphi = phi.differentiate(1).unwrap();
    let ddphi = phi.differentiate(2).unwrap();
    let nodes = mesh.nodes();
    let eps = ctx.epsilon;
    println!("tail at x=-1 (eps={eps:.4}):");
    for i in 0..10 {
        let x = nodes[i];
        let t = 1.0 + x;
        let emb = (-ctx.b.at(i)).exp();
        let bp = profile.u_theta_bar.at(i) / (1.0 - x * x);
        let e1 = (dphi.at(i) - emb) / emb.abs().max(1e-300);
        let exact_dd = -bp * emb;
        let e2 = (ddphi.at(i) - exact_dd) / exact_dd.abs().max(1e-300);
        let defect = (1.0 - x * x) * ddphi.at(i)
            + profile.u_theta_bar.at(i) * dphi.at(i);
        let weighted = (1.0 - x * x).powf(1.0 + eps) * defect.abs();
        println!(
            "  i={i} t={t:.3e} phi={:.6e} dphi_rel_err={e1:.3e} ddphi_rel_err={e2:.3e} defect={defect:.3e} weighted={weighted:.3e}",
            phi.at(i)
        );
    }
}

#[test]
fn probe_symmetry() {
    let mesh = mesh();
    let nodes = mesh.nodes();
    let n = nodes.len();
    let asym = (0..n)
        .map(|i| (nodes[i] + nodes[n - 1 - i]).abs())
        .fold(0.0f64, f64::max);
    println!("mesh antisymmetry defect = {asym:.3e}");
    for (c1, c2, dc3) in [(0.7, -0.3, 1.0), (2.0, 0.5, 0.6), (-0.5, 1.5, 2.0)] {
        let c3 = cbar3(c1, c2).unwrap() + dc3;
        let b = gamma_bounds(c1, c2, c3, &mesh, 1e-9).unwrap();
        let gamma = 0.5 * (b.gamma_plus + b.gamma_minus);
        let profile = solve_riccati(&Params::new(c1, c2, c3, gamma), &mesh)
            .unwrap()
            .profile()
            .unwrap();
        let zero = GridFunction::zeros(&mesh);
        let r0 = reduced_residual(&profile.u_theta_bar, &zero, (c1, c2, c3))
            .unwrap()
            .theta_sup;
        let vals = profile.u_theta_bar.values();
        let flipped: Vec<f64> = (0..n).map(|i| -vals[n - 1 - i]).collect();
        let theta_t = GridFunction::new(Arc::clone(&mesh), flipped).unwrap();
        let rt = reduced_residual(&theta_t, &zero, (c2, c1, c3))
            .unwrap()
            .theta_sup;
        println!("symmetry ({c1},{c2}): r0={r0:.3e} rt={rt:.3e} ratio={:.3}", rt / r0);
    }
}

#[test]
fn probe_tangency_v4() {
    let mesh = mesh();
    let params = Params::new(0.0, 0.0, 0.0, -1.0);
    let (profile, _, _) = analyze(&params, &mesh, 1e-9).unwrap();
    let ctx = OperatorContext::new(&profile).unwrap();
    for mode in [KernelMode::V3, KernelMode::V4] {
        let idx = ctx.kernel.iter().position(|kv| kv.mode == mode).unwrap();
        let rep = homax_core::beta_derivative_check(
            &ctx,
            idx,
            &[1e-2, 10f64.powf(-2.5), 1e-3],
            &SwirlOptions::default(),
        )
        .unwrap();
        println!(
            "tangency {mode:?}: errors={:?} order={:.4} limit={:.3e}",
            rep.errors, rep.order, rep.limit_error
        );
    }
}
