//! Linearized operator machinery around a no-swirl profile.
//!
//! For a profile `Ubar` this module builds the weights `a, b`, the
//! kernel basis of the linearized operator, the variant-specific right
//! inverse `W`, the gauge projections, the quadratic part `Q`, the full
//! map `G` and its Frechet derivative `L`, and the weighted norms of the
//! solution and residual spaces. Everything is expressed on grid pairs
//! `(theta, phi)`.

use crate::error::{Error, Result};
use crate::mesh::{EndpointEstimate, EndpointWeight, GridFunction, Mesh, Side};
use crate::noswirl::{CaseTag, NoSwirlProfile, Params, RegionLabel};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Margin added above the case-dependent lower bound when choosing the
/// weight exponent epsilon.
const EPSILON_MARGIN: f64 = 0.02;
/// Hard ceiling for epsilon (must stay below 1/2).
const EPSILON_MAX: f64 = 0.49;

/// Which right inverse / kernel family applies at a parameter point.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WVariant {
    /// Integration from 0; four-dimensional kernel (interior strata and
    /// the double-log stratum).
    W1,
    /// Integration from -1; kernel {V2a, V3, V4} (gamma at its upper
    /// bound with c1 < -3/4).
    W2a,
    /// Integration from +1; kernel {V2b, V3, V4} (gamma at its lower
    /// bound with c2 < -3/4).
    W2b,
    /// Integration from -1 with the mean constraint; kernel {V3, V4}
    /// (boundary strata c3 = cbar3).
    W3,
}

/// Which family of norm weights applies.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormCase {
    Case1,
    /// Logarithmic weights at x = -1.
    Case2,
    /// Logarithmic weights at x = +1.
    Case2Mirror,
    /// Logarithmic weights at both endpoints.
    Case3,
}

/// Kernel basis vectors of the linearized operator.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMode {
    V1,
    V2,
    V2a,
    V2b,
    V3,
    V4,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelMode::V1 => "V1",
            KernelMode::V2 => "V2",
            KernelMode::V2a => "V2a",
            KernelMode::V2b => "V2b",
            KernelMode::V3 => "V3",
            KernelMode::V4 => "V4",
        };
        f.write_str(s)
    }
}

/// A theta/phi pair of grid functions on a common mesh.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfilePair {
    pub theta: GridFunction,
    pub phi: GridFunction,
}

impl ProfilePair {
    pub fn new(theta: GridFunction, phi: GridFunction) -> ProfilePair {
        ProfilePair { theta, phi }
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> ProfilePair {
        ProfilePair {
            theta: GridFunction::zeros(mesh),
            phi: GridFunction::zeros(mesh),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.theta.mesh()
    }

    /// self + c * other, componentwise.
    pub fn add_scaled(&self, c: f64, other: &ProfilePair) -> ProfilePair {
        ProfilePair {
            theta: self.theta.add_scaled(c, &other.theta),
            phi: self.phi.add_scaled(c, &other.phi),
        }
    }

    pub fn scale(&self, c: f64) -> ProfilePair {
        ProfilePair {
            theta: self.theta.scale(c),
            phi: self.phi.scale(c),
        }
    }
}

/// A kernel vector together with its mode tag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelVector {
    pub mode: KernelMode,
    pub pair: ProfilePair,
}

/// The four interior functionals evaluated on a pair.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct Functionals {
    /// theta(0)
    pub l1: f64,
    /// theta'(0)
    pub l2: f64,
    /// phi'(0)
    pub l3: f64,
    /// phi(0)
    pub l4: f64,
}

/// One weighted sup-norm term.
#[derive(Clone, Debug, Serialize)]
pub struct NormTerm {
    pub label: &'static str,
    pub value: f64,
}

/// Breakdown of a space norm into its defining terms.
#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub terms: Vec<NormTerm>,
    pub total: f64,
}

impl NormReport {
    fn from_terms(terms: Vec<NormTerm>) -> NormReport {
        let total = terms.iter().map(|t| t.value).sum();
        NormReport { terms, total }
    }
}

/// Triple-integral output with its endpoint limits.
#[derive(Clone, Debug)]
pub struct PsiResult {
    pub grid: GridFunction,
    pub minus: EndpointEstimate,
    pub plus: EndpointEstimate,
}

/// Precomputed operator data at a classified parameter point.
#[derive(Clone, Debug)]
pub struct OperatorContext {
    pub mesh: Arc<Mesh>,
    pub params: Params,
    pub label: RegionLabel,
    pub case: NormCase,
    pub variant: WVariant,
    /// Weight exponent chosen from the endpoint values of the profile.
    pub epsilon: f64,
    /// The no-swirl profile and its exact first derivative.
    pub u_bar: GridFunction,
    pub du_bar: GridFunction,
    /// Snapped endpoint values of the profile.
    pub u_bar_minus: f64,
    pub u_bar_plus: f64,
    /// a(x) = int_0^x (2s + Ubar)/(1-s^2), b(x) = int_0^x Ubar/(1-s^2).
    pub a: GridFunction,
    pub b: GridFunction,
    /// I_a(x) = int_0^x e^a and its endpoint limits where required.
    pub int_ea: GridFunction,
    pub int_ea_minus: Option<f64>,
    pub int_ea_plus: Option<f64>,
    /// P(x) = int_0^x e^{-b}, the swirl component of the V3 kernel mode.
    v3_phi: GridFunction,
    /// Kernel basis in the variant's order.
    pub kernel: Vec<KernelVector>,
    kernel_funcs: Vec<Functionals>,
}

/// Choose the weight exponent for the given case from the profile's
/// endpoint values, following the selection rule of the existence
/// argument (strictly above the case-dependent lower bound, margin
/// 0.02, hard ceiling 0.49).
pub fn choose_epsilon(case: NormCase, u_minus: f64, u_plus: f64) -> Result<f64> {
    let lb_minus = if u_minus < 2.0 {
        u_minus / 4.0
    } else {
        u_minus / 2.0 - 1.0
    };
    let lb_plus = if u_plus > -2.0 {
        -u_plus / 4.0
    } else {
        -u_plus / 2.0 - 1.0
    };
    let lower = match case {
        NormCase::Case1 => lb_minus.max(lb_plus).max(0.0),
        NormCase::Case2 => lb_plus.max(0.0),
        NormCase::Case2Mirror => lb_minus.max(0.0),
        NormCase::Case3 => 0.0,
    };
    let eps = (lower + EPSILON_MARGIN).min(EPSILON_MAX);
    if eps <= lower || lower >= 0.5 {
        return Err(Error::CaseMismatch(format!(
            "no admissible weight exponent: lower bound {lower:.4} leaves no room below 1/2 \
             (endpoint values {u_minus:.4}, {u_plus:.4})"
        )));
    }
    Ok(eps)
}

fn case_of(label: &RegionLabel) -> Result<NormCase> {
    match label.case_tag {
        CaseTag::Case1 => Ok(NormCase::Case1),
        CaseTag::Case2 => Ok(NormCase::Case2),
        CaseTag::Case2Mirror => Ok(NormCase::Case2Mirror),
        CaseTag::Case3 => Ok(NormCase::Case3),
        CaseTag::Case4 => Err(Error::CaseMismatch(
            "no operator spaces are constructed at Case 4 points".into(),
        )),
    }
}

fn variant_of(label: &RegionLabel) -> Result<WVariant> {
    match label.i_stratum {
        Some((k, _)) if k >= 5 => Ok(WVariant::W3),
        Some((_, 1)) => Ok(WVariant::W1),
        Some((_, 2)) => Ok(WVariant::W2a),
        Some((_, 3)) => Ok(WVariant::W2b),
        _ => Err(Error::CaseMismatch(
            "no right-inverse variant outside the I strata".into(),
        )),
    }
}

impl OperatorContext {
    /// Build the operator data for a classified profile.
    pub fn new(profile: &NoSwirlProfile) -> Result<OperatorContext> {
        let label = profile.stratum.ok_or_else(|| {
            Error::InvalidParameter("profile has no stratum label; classify it first".into())
        })?;
        let case = case_of(&label)?;
        let variant = variant_of(&label)?;
        let epsilon = choose_epsilon(case, profile.endpoint_minus, profile.endpoint_plus)?;
        Self::assemble(profile, label, case, variant, epsilon)
    }

    /// Build with explicit case/variant/epsilon, bypassing classification
    /// (used by diagnostic probes outside the constructed cases).
    pub fn with_overrides(
        profile: &NoSwirlProfile,
        label: RegionLabel,
        case: NormCase,
        variant: WVariant,
        epsilon: f64,
    ) -> Result<OperatorContext> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {epsilon} must lie in (0, 1/2)"
            )));
        }
        Self::assemble(profile, label, case, variant, epsilon)
    }

    fn assemble(
        profile: &NoSwirlProfile,
        label: RegionLabel,
        case: NormCase,
        variant: WVariant,
        epsilon: f64,
    ) -> Result<OperatorContext> {
        let mesh = Arc::clone(profile.u_theta_bar.mesh());
        let u_bar = profile.u_theta_bar.clone();
        let du_bar = profile.du_theta_bar.clone();
        let [a, b, int_ea, v3_phi] = crate::noswirl::auxiliary_integrals(&profile.params, &u_bar)?;
        let need_minus = matches!(variant, WVariant::W2a | WVariant::W3);
        let need_plus = matches!(variant, WVariant::W2b | WVariant::W3);
        let int_ea_minus = if need_minus {
            Some(
                int_ea
                    .endpoint_limit(Side::Minus, EndpointWeight::One)
                    .map_err(|e| {
                        Error::Divergence(format!("int e^a does not converge at x=-1: {e}"))
                    })?
                    .value,
            )
        } else {
            None
        };
        let int_ea_plus = if need_plus {
            Some(
                int_ea
                    .endpoint_limit(Side::Plus, EndpointWeight::One)
                    .map_err(|e| {
                        Error::Divergence(format!("int e^a does not converge at x=+1: {e}"))
                    })?
                    .value,
            )
        } else {
            None
        };
        let mut ctx = OperatorContext {
            mesh,
            params: profile.params,
            label,
            case,
            variant,
            epsilon,
            u_bar,
            du_bar,
            u_bar_minus: profile.endpoint_minus,
            u_bar_plus: profile.endpoint_plus,
            a,
            b,
            int_ea,
            int_ea_minus,
            int_ea_plus,
            v3_phi,
            kernel: Vec::new(),
            kernel_funcs: Vec::new(),
        };
        ctx.kernel = ctx.build_kernel()?;
        ctx.kernel_funcs = ctx
            .kernel
            .iter()
            .map(|kv| ctx.functionals(&kv.pair))
            .collect::<Result<Vec<_>>>()?;
        Ok(ctx)
    }

    fn build_kernel(&self) -> Result<Vec<KernelVector>> {
        let modes: &[KernelMode] = match self.variant {
            WVariant::W1 => &[KernelMode::V1, KernelMode::V2, KernelMode::V3, KernelMode::V4],
            WVariant::W2a => &[KernelMode::V2a, KernelMode::V3, KernelMode::V4],
            WVariant::W2b => &[KernelMode::V2b, KernelMode::V3, KernelMode::V4],
            WVariant::W3 => &[KernelMode::V3, KernelMode::V4],
        };
        modes.iter().map(|&m| self.kernel_vector(m)).collect()
    }

    /// Construct a single kernel basis vector.
    pub fn kernel_vector(&self, mode: KernelMode) -> Result<KernelVector> {
        let mesh = &self.mesh;
        let zero = GridFunction::zeros(mesh);
        let pair = match mode {
            KernelMode::V1 => {
                let theta = self.a.map(|_, av| (-av).exp());
                ProfilePair::new(theta, zero)
            }
            KernelMode::V2 => {
                let theta = self.a.zip(&self.int_ea, |_, av, i| (-av).exp() * i);
                ProfilePair::new(theta, zero)
            }
            KernelMode::V2a => {
                let lam = match self.int_ea_minus {
                    Some(v) => -v, // int_{-1}^0 e^a
                    None => {
                        -self
                            .int_ea
                            .endpoint_limit(Side::Minus, EndpointWeight::One)?
                            .value
                    }
                };
                let theta = self
                    .a
                    .zip(&self.int_ea, |_, av, i| (-av).exp() * (i + lam));
                ProfilePair::new(theta, zero)
            }
            KernelMode::V2b => {
                let lam = match self.int_ea_plus {
                    Some(v) => v, // int_0^1 e^a
                    None => {
                        self.int_ea
                            .endpoint_limit(Side::Plus, EndpointWeight::One)?
                            .value
                    }
                };
                let theta = self
                    .a
                    .zip(&self.int_ea, |_, av, i| (-av).exp() * (i - lam));
                ProfilePair::new(theta, zero)
            }
            KernelMode::V3 => ProfilePair::new(zero, self.v3_phi.clone()),
            KernelMode::V4 => {
                let phi = GridFunction::from_fn(mesh, |_| 1.0);
                ProfilePair::new(zero, phi)
            }
        };
        Ok(KernelVector { mode, pair })
    }

    /// The interior functionals of a pair:
    /// (theta(0), theta'(0), phi'(0), phi(0)).
    pub fn functionals(&self, pair: &ProfilePair) -> Result<Functionals> {
        let c = self.mesh.center_index();
        Ok(Functionals {
            l1: pair.theta.at(c),
            l2: pair.theta.derivative_at_node(c, 1)?,
            l3: pair.phi.derivative_at_node(c, 1)?,
            l4: pair.phi.at(c),
        })
    }

    /// Extrapolated limit of theta' at x = -1.
    pub fn functional_l2a(&self, pair: &ProfilePair) -> Result<EndpointEstimate> {
        let d = pair.theta.differentiate(1)?;
        d.endpoint_limit(Side::Minus, EndpointWeight::One)
    }

    /// Extrapolated limit of theta' at x = +1.
    pub fn functional_l2b(&self, pair: &ProfilePair) -> Result<EndpointEstimate> {
        let d = pair.theta.differentiate(1)?;
        d.endpoint_limit(Side::Plus, EndpointWeight::One)
    }

    /// The 4x4 matrix (l_i(V^j)) over the interior basis V1..V4,
    /// regardless of the active variant.
    pub fn interior_functional_matrix(&self) -> Result<[[f64; 4]; 4]> {
        let modes = [KernelMode::V1, KernelMode::V2, KernelMode::V3, KernelMode::V4];
        let mut m = [[0.0; 4]; 4];
        for (j, &mode) in modes.iter().enumerate() {
            let kv = self.kernel_vector(mode)?;
            let f = self.functionals(&kv.pair)?;
            m[0][j] = f.l1;
            m[1][j] = f.l2;
            m[2][j] = f.l3;
            m[3][j] = f.l4;
        }
        Ok(m)
    }

    /// Remove the kernel components fixed by the variant's gauge
    /// functionals.
    pub fn project(&self, pair: &ProfilePair) -> Result<ProfilePair> {
        let f = self.functionals(pair)?;
        let k = &self.kernel;
        let kf = &self.kernel_funcs;
        let out = match self.variant {
            WVariant::W1 => {
                // basis order V1, V2, V3, V4
                let c1 = f.l1;
                let c2 = (f.l2 - f.l1 * kf[0].l2) / kf[1].l2;
                let c3 = f.l3;
                let c4 = f.l4;
                pair.add_scaled(-c1, &k[0].pair)
                    .add_scaled(-c2, &k[1].pair)
                    .add_scaled(-c3, &k[2].pair)
                    .add_scaled(-c4, &k[3].pair)
            }
            WVariant::W2a | WVariant::W2b => {
                // basis order V2a/V2b, V3, V4
                let c0 = f.l1 / kf[0].l1;
                let c3 = f.l3;
                let c4 = f.l4;
                pair.add_scaled(-c0, &k[0].pair)
                    .add_scaled(-c3, &k[1].pair)
                    .add_scaled(-c4, &k[2].pair)
            }
            WVariant::W3 => {
                let c3 = f.l3;
                let c4 = f.l4;
                pair.add_scaled(-c3, &k[0].pair).add_scaled(-c4, &k[1].pair)
            }
        };
        Ok(out)
    }

    /// Apply the variant's right inverse of the linearized operator to a
    /// residual pair.
    pub fn right_inverse_w(&self, xi: &ProfilePair) -> Result<ProfilePair> {
        let mesh = &self.mesh;
        let center = mesh.center_index();
        let i1 = mesh.cumulative_quadrature(center, &[&self.a, &xi.theta], &|x, v| {
            v[0].exp() * v[1] / (1.0 - x * x)
        });
        let theta = match self.variant {
            WVariant::W1 => self.a.zip(&i1, |_, av, i| (-av).exp() * i),
            WVariant::W2a => {
                let base = i1
                    .endpoint_limit(Side::Minus, EndpointWeight::One)
                    .map_err(|e| {
                        Error::Divergence(format!(
                            "right inverse: base integral at x=-1 diverges: {e}"
                        ))
                    })?
                    .value;
                self.a.zip(&i1, |_, av, i| (-av).exp() * (i - base))
            }
            WVariant::W2b => {
                let base = i1
                    .endpoint_limit(Side::Plus, EndpointWeight::One)
                    .map_err(|e| {
                        Error::Divergence(format!(
                            "right inverse: base integral at x=+1 diverges: {e}"
                        ))
                    })?
                    .value;
                self.a.zip(&i1, |_, av, i| (-av).exp() * (i - base))
            }
            WVariant::W3 => {
                // e^{-a} [ (I1 - I1(-1)) - C_W (I_a - I_a(-1)) ], where C_W
                // makes the bracket vanish at both endpoints.
                let im = i1
                    .endpoint_limit(Side::Minus, EndpointWeight::One)
                    .map_err(|e| {
                        Error::Divergence(format!(
                            "right inverse: base integral at x=-1 diverges: {e}"
                        ))
                    })?
                    .value;
                let ip = i1
                    .endpoint_limit(Side::Plus, EndpointWeight::One)
                    .map_err(|e| {
                        Error::Divergence(format!(
                            "right inverse: base integral at x=+1 diverges: {e}"
                        ))
                    })?
                    .value;
                let em = self.int_ea_minus.ok_or_else(|| {
                    Error::CaseMismatch("W3 context missing int e^a at x=-1".into())
                })?;
                let ep = self.int_ea_plus.ok_or_else(|| {
                    Error::CaseMismatch("W3 context missing int e^a at x=+1".into())
                })?;
                let cw = (ip - im) / (ep - em);
                let mut vals = Vec::with_capacity(mesh.len());
                for idx in 0..mesh.len() {
                    let av = self.a.at(idx);
                    vals.push(
                        (-av).exp() * ((i1.at(idx) - im) - cw * (self.int_ea.at(idx) - em)),
                    );
                }
                GridFunction::new(Arc::clone(mesh), vals)?
            }
        };
        let p = mesh.cumulative_quadrature(center, &[&self.b, &xi.phi], &|x, v| {
            v[0].exp() * v[1] / (1.0 - x * x)
        });
        let phi = mesh.cumulative_quadrature(center, &[&self.b, &p], &|_, v| {
            (-v[0]).exp() * v[1]
        });
        Ok(ProfilePair::new(theta, phi))
    }

    /// Triple integral `psi[u_phi, v_phi]` with endpoint limits.
    pub fn psi(&self, u_phi: &GridFunction, v_phi: &GridFunction) -> Result<PsiResult> {
        psi_on_mesh(&self.mesh, u_phi, v_phi)
    }

    /// Second derivative at 0 of `l[u_theta]` via the product-rule
    /// expansion (the profile derivatives at 0 are exact).
    fn l_ddot0(&self, u_theta: &GridFunction) -> Result<f64> {
        let c = self.mesh.center_index();
        let p = &self.params;
        let gamma = p.gamma;
        let du0 = p.c1 + p.c2 + p.c3 - 0.5 * gamma * gamma;
        let ddu0 = (p.c2 - p.c1) - 2.0 * gamma - gamma * du0;
        let t0 = u_theta.at(c);
        let t1 = u_theta.derivative_at_node(c, 1)?;
        let t2 = u_theta.derivative_at_node(c, 2)?;
        let t3 = u_theta.derivative_at_node(c, 3)?;
        Ok(t3 + gamma * t2 + 2.0 * (du0 + 1.0) * t1 + ddu0 * t0)
    }

    /// Second derivative at 0 of `varphi[u_theta] = l[u_theta] + u^2/2`.
    pub fn varphi_ddot0(&self, u_theta: &GridFunction) -> Result<f64> {
        let c = self.mesh.center_index();
        let t0 = u_theta.at(c);
        let t1 = u_theta.derivative_at_node(c, 1)?;
        let t2 = u_theta.derivative_at_node(c, 2)?;
        Ok(self.l_ddot0(u_theta)? + t1 * t1 + t0 * t2)
    }

    /// The linear part `A` of the map `G` (also the linearization at 0).
    pub fn op_a(&self, pair: &ProfilePair) -> Result<ProfilePair> {
        let dtheta = pair.theta.differentiate(1)?;
        let l_grid = self.u_bar.zip(&pair.theta, |x, ub, t| (2.0 * x + ub) * t).zip(
            &dtheta,
            |x, acc, dt| acc + (1.0 - x * x) * dt,
        );
        let ldd0 = self.l_ddot0(&pair.theta)?;
        let theta = l_grid.map(|x, v| v + 0.5 * ldd0 * (1.0 - x * x));
        let dphi = pair.phi.differentiate(1)?;
        let ddphi = pair.phi.differentiate(2)?;
        let phi = self
            .u_bar
            .zip(&dphi, |_, ub, d| ub * d)
            .zip(&ddphi, |x, acc, dd| acc + (1.0 - x * x) * dd);
        Ok(ProfilePair::new(theta, phi))
    }

    /// The symmetric-free bilinear part `Q(u, v)` of the map `G`.
    pub fn op_q(&self, u: &ProfilePair, v: &ProfilePair) -> Result<ProfilePair> {
        let psi = self.psi(&u.phi, &v.phi)?;
        let c = self.mesh.center_index();
        let u0 = u.theta.at(c);
        let u1 = u.theta.derivative_at_node(c, 1)?;
        let u2 = u.theta.derivative_at_node(c, 2)?;
        let v0 = v.theta.at(c);
        let v1 = v.theta.derivative_at_node(c, 1)?;
        let v2 = v.theta.derivative_at_node(c, 2)?;
        let prod_dd0 = u2 * v0 + 2.0 * u1 * v1 + u0 * v2;
        let pm = psi.minus.value;
        let pp = psi.plus.value;
        let theta = u.theta.zip(&v.theta, |_, a, bv| 0.5 * a * bv).zip(
            &psi.grid,
            move |x, acc, ps| {
                acc + ps - 0.5 * pm * (1.0 - x) - 0.5 * pp * (1.0 + x)
                    + 0.25 * prod_dd0 * (1.0 - x * x)
            },
        );
        let dvphi = v.phi.differentiate(1)?;
        let phi = u.theta.zip(&dvphi, |_, t, d| t * d);
        Ok(ProfilePair::new(theta, phi))
    }

    /// The full map `G` evaluated directly from its definition.
    pub fn op_g(&self, pair: &ProfilePair) -> Result<ProfilePair> {
        let dtheta = pair.theta.differentiate(1)?;
        let varphi = self
            .u_bar
            .zip(&pair.theta, |x, ub, t| (2.0 * x + ub) * t + 0.5 * t * t)
            .zip(&dtheta, |x, acc, dt| acc + (1.0 - x * x) * dt);
        let psi = self.psi(&pair.phi, &pair.phi)?;
        let vdd0 = self.varphi_ddot0(&pair.theta)?;
        let pm = psi.minus.value;
        let pp = psi.plus.value;
        let theta = varphi.zip(&psi.grid, move |x, f, ps| {
            f + ps - 0.5 * pm * (1.0 - x) - 0.5 * pp * (1.0 + x) + 0.5 * vdd0 * (1.0 - x * x)
        });
        let dphi = pair.phi.differentiate(1)?;
        let ddphi = pair.phi.differentiate(2)?;
        let phi = self
            .u_bar
            .zip(&pair.theta, |_, ub, t| ub + t)
            .zip(&dphi, |_, coef, d| coef * d)
            .zip(&ddphi, |x, acc, dd| acc + (1.0 - x * x) * dd);
        Ok(ProfilePair::new(theta, phi))
    }

    /// Frechet derivative of `G` at `base`, applied to `dir`:
    /// `L = A + Q(base, .) + Q(., base)`.
    pub fn op_l(&self, base: &ProfilePair, dir: &ProfilePair) -> Result<ProfilePair> {
        let a = self.op_a(dir)?;
        let q1 = self.op_q(base, dir)?;
        let q2 = self.op_q(dir, base)?;
        Ok(a.add_scaled(1.0, &q1).add_scaled(1.0, &q2))
    }

    /// Reduced forcing constants induced by a perturbation pair.
    pub fn chat(&self, pair: &ProfilePair) -> Result<(f64, f64, f64)> {
        let psi = self.psi(&pair.phi, &pair.phi)?;
        let vdd0 = self.varphi_ddot0(&pair.theta)?;
        let p = &self.params;
        Ok((
            p.c1 + 0.5 * psi.minus.value,
            p.c2 + 0.5 * psi.plus.value,
            p.c3 - 0.5 * vdd0,
        ))
    }

    /// Solution-space norm with its term breakdown.
    pub fn norm_x(&self, pair: &ProfilePair) -> Result<NormReport> {
        let eps = self.epsilon;
        let dtheta = pair.theta.differentiate(1)?;
        let ddtheta = pair.theta.differentiate(2)?;
        let dddtheta = pair.theta.differentiate(3)?;
        let dphi = pair.phi.differentiate(1)?;
        let ddphi = pair.phi.differentiate(2)?;
        let mut terms = Vec::new();
        match self.case {
            NormCase::Case1 => {
                terms.push(NormTerm {
                    label: "theta*(1-x^2)^(-1+2eps)",
                    value: pair
                        .theta
                        .sup_weighted(|x| (1.0 - x * x).powf(-1.0 + 2.0 * eps)),
                });
                terms.push(NormTerm {
                    label: "theta'*(1-x^2)^(2eps)",
                    value: dtheta.sup_weighted(|x| (1.0 - x * x).powf(2.0 * eps)),
                });
            }
            NormCase::Case2 => {
                terms.push(NormTerm {
                    label: "theta*|ln((1+x)/3)|*(1-x)^(-1+2eps)",
                    value: pair.theta.sup_weighted(|x| {
                        ((1.0 + x) / 3.0).ln().abs() * (1.0 - x).powf(-1.0 + 2.0 * eps)
                    }),
                });
                terms.push(NormTerm {
                    label: "theta'*(1+x)*ln((1+x)/3)^2*(1-x)^(2eps)",
                    value: dtheta.sup_weighted(|x| {
                        (1.0 + x) * ((1.0 + x) / 3.0).ln().powi(2) * (1.0 - x).powf(2.0 * eps)
                    }),
                });
            }
            NormCase::Case2Mirror => {
                terms.push(NormTerm {
                    label: "theta*|ln((1-x)/3)|*(1+x)^(-1+2eps)",
                    value: pair.theta.sup_weighted(|x| {
                        ((1.0 - x) / 3.0).ln().abs() * (1.0 + x).powf(-1.0 + 2.0 * eps)
                    }),
                });
                terms.push(NormTerm {
                    label: "theta'*(1-x)*ln((1-x)/3)^2*(1+x)^(2eps)",
                    value: dtheta.sup_weighted(|x| {
                        (1.0 - x) * ((1.0 - x) / 3.0).ln().powi(2) * (1.0 + x).powf(2.0 * eps)
                    }),
                });
            }
            NormCase::Case3 => {
                terms.push(NormTerm {
                    label: "theta*|ln((1+x)/3)*ln((1-x)/3)|",
                    value: pair.theta.sup_weighted(|x| {
                        (((1.0 + x) / 3.0).ln() * ((1.0 - x) / 3.0).ln()).abs()
                    }),
                });
                terms.push(NormTerm {
                    label: "theta'*(1-x^2)*ln((1+x)/3)^2*ln((1-x)/3)^2",
                    value: dtheta.sup_weighted(|x| {
                        (1.0 - x * x)
                            * ((1.0 + x) / 3.0).ln().powi(2)
                            * ((1.0 - x) / 3.0).ln().powi(2)
                    }),
                });
            }
        }
        terms.push(NormTerm {
            label: "theta'' central",
            value: ddtheta.sup_central(),
        });
        terms.push(NormTerm {
            label: "theta''' central",
            value: dddtheta.sup_central(),
        });
        terms.push(NormTerm {
            label: "phi*(1-x^2)^eps",
            value: pair.phi.sup_weighted(|x| (1.0 - x * x).powf(eps)),
        });
        terms.push(NormTerm {
            label: "phi'*(1-x^2)^(1+eps)",
            value: dphi.sup_weighted(|x| (1.0 - x * x).powf(1.0 + eps)),
        });
        terms.push(NormTerm {
            label: "phi''*(1-x^2)^(2+eps)",
            value: ddphi.sup_weighted(|x| (1.0 - x * x).powf(2.0 + eps)),
        });
        Ok(NormReport::from_terms(terms))
    }

    /// Residual-space norm with its term breakdown.
    pub fn norm_y(&self, xi: &ProfilePair) -> Result<NormReport> {
        let eps = self.epsilon;
        let dtheta = xi.theta.differentiate(1)?;
        let ddtheta = xi.theta.differentiate(2)?;
        let mut terms = Vec::new();
        let t1 = match self.case {
            NormCase::Case1 => NormTerm {
                label: "xi_theta*(1-x^2)^(-1+2eps)",
                value: xi
                    .theta
                    .sup_weighted(|x| (1.0 - x * x).powf(-1.0 + 2.0 * eps)),
            },
            NormCase::Case2 => NormTerm {
                label: "xi_theta*ln((1+x)/3)^2*(1-x)^(-1+2eps)",
                value: xi.theta.sup_weighted(|x| {
                    ((1.0 + x) / 3.0).ln().powi(2) * (1.0 - x).powf(-1.0 + 2.0 * eps)
                }),
            },
            NormCase::Case2Mirror => NormTerm {
                label: "xi_theta*ln((1-x)/3)^2*(1+x)^(-1+2eps)",
                value: xi.theta.sup_weighted(|x| {
                    ((1.0 - x) / 3.0).ln().powi(2) * (1.0 + x).powf(-1.0 + 2.0 * eps)
                }),
            },
            NormCase::Case3 => NormTerm {
                label: "xi_theta*ln((1+x)/3)^2*ln((1-x)/3)^2",
                value: xi.theta.sup_weighted(|x| {
                    ((1.0 + x) / 3.0).ln().powi(2) * ((1.0 - x) / 3.0).ln().powi(2)
                }),
            },
        };
        terms.push(t1);
        terms.push(NormTerm {
            label: "xi_theta' central",
            value: dtheta.sup_central(),
        });
        terms.push(NormTerm {
            label: "xi_theta'' central",
            value: ddtheta.sup_central(),
        });
        terms.push(NormTerm {
            label: "xi_phi*(1-x^2)^(1+eps)",
            value: xi.phi.sup_weighted(|x| (1.0 - x * x).powf(1.0 + eps)),
        });
        Ok(NormReport::from_terms(terms))
    }

    /// Defect of Y-membership of a residual pair: the extrapolated
    /// |xi_theta(-1)|, |xi_theta(+1)| and |xi_theta''(0)|.
    pub fn y_defect(&self, xi: &ProfilePair) -> Result<(f64, f64, f64)> {
        let m = xi
            .theta
            .endpoint_limit(Side::Minus, EndpointWeight::One)?
            .value
            .abs();
        let p = xi
            .theta
            .endpoint_limit(Side::Plus, EndpointWeight::One)?
            .value
            .abs();
        let c = xi
            .theta
            .derivative_at_node(self.mesh.center_index(), 2)?
            .abs();
        Ok((m, p, c))
    }
}

/// Triple integral `psi[u_phi, v_phi](x)` on a mesh, with its endpoint
/// limits attached.
pub fn psi_on_mesh(
    mesh: &Arc<Mesh>,
    u_phi: &GridFunction,
    v_phi: &GridFunction,
) -> Result<PsiResult> {
    let center = mesh.center_index();
    let dv = v_phi.differentiate(1)?;
    let inner = mesh.cumulative_quadrature(center, &[u_phi, &dv], &|x, v| {
        2.0 * v[0] * v[1] / (1.0 - x * x)
    });
    let mid = mesh.cumulative_quadrature(center, &[&inner], &|_, v| v[0]);
    let mut grid = mesh.cumulative_quadrature(center, &[&mid], &|_, v| v[0]);
    let minus = grid.endpoint_limit(Side::Minus, EndpointWeight::One)?;
    let plus = grid.endpoint_limit(Side::Plus, EndpointWeight::One)?;
    grid.endpoint_minus = Some(minus);
    grid.endpoint_plus = Some(plus);
    Ok(PsiResult { grid, minus, plus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::noswirl::{solve_riccati, Params};
    use std::sync::OnceLock;

    fn flat_context() -> &'static OperatorContext {
        // c = 0, gamma = 0: Ubar = 0, a = -ln(1-x^2), b = 0
        static CTX: OnceLock<OperatorContext> = OnceLock::new();
        CTX.get_or_init(|| {
            let mesh = build_mesh(1025, 4.0).unwrap();
            let params = Params::new(0.0, 0.0, 0.0, 0.0);
            let profile = solve_riccati(&params, &mesh).unwrap().profile().unwrap();
            let label = RegionLabel {
                j_stratum: 1,
                i_stratum: Some((1, 1)),
                case_tag: CaseTag::Case1,
                in_i_hat: false,
            };
            OperatorContext::with_overrides(&profile, label, NormCase::Case1, WVariant::W1, 0.25)
                .unwrap()
        })
    }

    #[test]
    fn flat_a_b_closed_forms() {
        let ctx = flat_context();
        let nodes = ctx.mesh.nodes();
        for (i, &x) in nodes.iter().enumerate() {
            let expect = -(1.0 - x * x).ln();
            assert!(
                (ctx.a.at(i) - expect).abs() < 1e-9 * (1.0 + expect.abs()),
                "a({x}) = {} expected {expect}",
                ctx.a.at(i)
            );
            assert!(ctx.b.at(i).abs() < 1e-10, "b({x}) = {}", ctx.b.at(i));
        }
    }

    #[test]
    fn flat_kernel_closed_forms() {
        let ctx = flat_context();
        let nodes = ctx.mesh.nodes();
        let v1 = &ctx.kernel[0].pair.theta;
        let v2 = &ctx.kernel[1].pair.theta;
        let v3 = &ctx.kernel[2].pair.phi;
        for (i, &x) in nodes.iter().enumerate() {
            let e1 = 1.0 - x * x;
            assert!((v1.at(i) - e1).abs() < 1e-9, "V1({x})");
            let e2 = (1.0 - x * x) * x.atanh();
            assert!((v2.at(i) - e2).abs() < 1e-8 * (1.0 + e2.abs()), "V2({x})");
            assert!((v3.at(i) - x).abs() < 1e-9, "V3({x})");
        }
    }

    #[test]
    fn flat_psi_closed_form() {
        // u_phi = v_phi = 1 - x^2 gives psi(x) = -x^4/6
        let ctx = flat_context();
        let f = GridFunction::from_fn(&ctx.mesh, |x| 1.0 - x * x);
        let psi = ctx.psi(&f, &f).unwrap();
        for (i, &x) in ctx.mesh.nodes().iter().enumerate() {
            let expect = -x.powi(4) / 6.0;
            assert!(
                (psi.grid.at(i) - expect).abs() < 1e-9,
                "psi({x}) = {} expected {expect}",
                psi.grid.at(i)
            );
        }
        assert!((psi.minus.value + 1.0 / 6.0).abs() < 1e-7);
        assert!((psi.plus.value + 1.0 / 6.0).abs() < 1e-7);
    }

    #[test]
    fn flat_w_phi_closed_form() {
        // Ubar = 0, xi_phi = 1 - x^2: W_phi = x^2/2
        let ctx = flat_context();
        let xi = ProfilePair::new(
            GridFunction::zeros(&ctx.mesh),
            GridFunction::from_fn(&ctx.mesh, |x| 1.0 - x * x),
        );
        let w = ctx.right_inverse_w(&xi).unwrap();
        for (i, &x) in ctx.mesh.nodes().iter().enumerate() {
            let expect = 0.5 * x * x;
            assert!(
                (w.phi.at(i) - expect).abs() < 1e-9,
                "W_phi({x}) = {} expected {expect}",
                w.phi.at(i)
            );
        }
    }

    #[test]
    fn flat_w_theta_closed_forms() {
        // Ubar = 0: xi_theta = (1-x^2)^2 gives W_theta = x (1-x^2),
        // xi_theta = 1-x^2 gives W_theta = (1-x^2) atanh(x).
        let ctx = flat_context();
        let xi = ProfilePair::new(
            GridFunction::from_fn(&ctx.mesh, |x| (1.0 - x * x) * (1.0 - x * x)),
            GridFunction::zeros(&ctx.mesh),
        );
        let w = ctx.right_inverse_w(&xi).unwrap();
        for (i, &x) in ctx.mesh.nodes().iter().enumerate() {
            let expect = x * (1.0 - x * x);
            assert!(
                (w.theta.at(i) - expect).abs() < 1e-9,
                "W_theta({x}) = {} expected {expect}",
                w.theta.at(i)
            );
        }
        let xi2 = ProfilePair::new(
            GridFunction::from_fn(&ctx.mesh, |x| 1.0 - x * x),
            GridFunction::zeros(&ctx.mesh),
        );
        let w2 = ctx.right_inverse_w(&xi2).unwrap();
        for (i, &x) in ctx.mesh.nodes().iter().enumerate() {
            let expect = (1.0 - x * x) * x.atanh();
            assert!(
                (w2.theta.at(i) - expect).abs() < 1e-8 * (1.0 + expect.abs()),
                "W_theta({x}) = {} expected {expect}",
                w2.theta.at(i)
            );
        }
    }

    #[test]
    fn varphi_ddot0_example() {
        // Ubar = 0, u_theta = x: varphi = 1 + 3x^2/2, second derivative 3
        let ctx = flat_context();
        let t = GridFunction::from_fn(&ctx.mesh, |x| x);
        let v = ctx.varphi_ddot0(&t).unwrap();
        assert!((v - 3.0).abs() < 1e-9, "varphi''(0) = {v}");
    }
}
