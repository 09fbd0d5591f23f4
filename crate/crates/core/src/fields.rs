//! Physical-space velocity and pressure fields, and residuals of the
//! reduced system.
//!
//! Profiles live on the sphere coordinate `x = cos(theta)`; the fields
//! are minus-one-homogeneous in the radius, so a profile determines the
//! flow everywhere away from the axis:
//!
//! ```text
//! u_r = U_theta'(x) / r,
//! u_theta = U_theta(x) / (r sin(theta)),
//! u_phi = U_phi(x) / (r sin(theta)),
//! p = q(x) / r^2,
//! q = -1/2 [ (1-x^2) U_theta''' - 2x U_theta'' + U_theta U_theta''
//!            + (U_theta')^2 + (U_theta^2 + U_phi^2)/(1-x^2) ].
//! ```

use crate::error::{Error, Result};
use crate::mesh::{GridFunction, DELTA_STAR};
use crate::noswirl::NoSwirlProfile;
use crate::operators::psi_on_mesh;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Weight exponent on `(1-x^2)` applied to the swirl residual before
/// taking the sup; the bare second-derivative stencil amplifies
/// rounding near the poles and the weighted sup is the honest measure
/// of how well the swirl equation is satisfied.
pub const PHI_RESIDUAL_WEIGHT_EXPONENT: f64 = 1.25;

/// One evaluation point of the reconstructed fields.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct FieldSample {
    /// Sphere coordinate x = cos(theta).
    pub x: f64,
    /// Polar angle in (0, pi).
    pub theta: f64,
    pub u_r: f64,
    pub u_theta: f64,
    pub u_phi: f64,
    pub pressure: f64,
}

/// Velocity and pressure samples on a sphere of fixed radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphericalField {
    pub radius: f64,
    pub samples: Vec<FieldSample>,
}

impl SphericalField {
    /// Write the samples as CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "theta", "u_r", "u_theta", "u_phi", "pressure"])?;
        for s in &self.samples {
            w.write_record([
                format!("{:.16e}", s.x),
                format!("{:.16e}", s.theta),
                format!("{:.16e}", s.u_r),
                format!("{:.16e}", s.u_theta),
                format!("{:.16e}", s.u_phi),
                format!("{:.16e}", s.pressure),
            ])?;
        }
        w.flush().map_err(Error::Io)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::Json)
    }
}

/// Reconstruct the physical fields from the sphere profiles at the
/// given radius and sample coordinates.
///
/// The poles are excluded from the domain: every sample must satisfy
/// `|x| <= 1 - DELTA_STAR`.
pub fn reconstruct(
    u_theta: &GridFunction,
    u_phi: &GridFunction,
    radius: f64,
    xs: &[f64],
) -> Result<SphericalField> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius {radius} must be positive"
        )));
    }
    let d1 = u_theta.differentiate(1)?;
    let d2 = u_theta.differentiate(2)?;
    let d3 = u_theta.differentiate(3)?;
    let mut samples = Vec::with_capacity(xs.len());
    for &x in xs {
        if !(x.abs() <= 1.0 - DELTA_STAR) {
            return Err(Error::InvalidParameter(format!(
                "sample x = {x} lies outside the pole-free domain |x| <= 1 - {DELTA_STAR:e}"
            )));
        }
        let s2 = 1.0 - x * x;
        let sin_t = s2.sqrt();
        let ut = u_theta.eval(x);
        let up = u_phi.eval(x);
        let ut1 = d1.eval(x);
        let ut2 = d2.eval(x);
        let ut3 = d3.eval(x);
        let q = -0.5
            * (s2 * ut3 - 2.0 * x * ut2 + ut * ut2 + ut1 * ut1 + (ut * ut + up * up) / s2);
        samples.push(FieldSample {
            x,
            theta: x.acos(),
            u_r: ut1 / radius,
            u_theta: ut / (radius * sin_t),
            u_phi: up / (radius * sin_t),
            pressure: q / (radius * radius),
        });
    }
    Ok(SphericalField { radius, samples })
}

/// Sup norms of the residual of the reduced system for full profiles
/// `(U_theta, U_phi)` against forcing constants `(c1, c2, c3)`.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Plain sup of the first-equation residual over the nodes.
    pub theta_sup: f64,
    /// Sup of the second-equation residual weighted by
    /// `(1-x^2)^PHI_RESIDUAL_WEIGHT_EXPONENT`.
    pub phi_weighted_sup: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.theta_sup.max(self.phi_weighted_sup)
    }
}

/// Evaluate the residual of the reduced system:
///
/// ```text
/// R_theta = (1-x^2) U_theta' + 2x U_theta + U_theta^2/2
///           + psi[U_phi, U_phi] - c1 (1-x) - c2 (1+x) - c3 (1-x^2),
/// R_phi = (1-x^2) U_phi'' + U_theta U_phi'.
/// ```
pub fn reduced_residual(
    u_theta: &GridFunction,
    u_phi: &GridFunction,
    constants: (f64, f64, f64),
) -> Result<ResidualReport> {
    let mesh = u_theta.mesh();
    let (c1, c2, c3) = constants;
    let psi = psi_on_mesh(mesh, u_phi, u_phi)?;
    let d1 = u_theta.differentiate(1)?;
    let r_theta = u_theta
        .zip(&d1, |x, u, du| {
            (1.0 - x * x) * du + 2.0 * x * u + 0.5 * u * u
        })
        .zip(&psi.grid, |x, acc, ps| {
            acc + ps - c1 * (1.0 - x) - c2 * (1.0 + x) - c3 * (1.0 - x * x)
        });
    let dphi = u_phi.differentiate(1)?;
    let ddphi = u_phi.differentiate(2)?;
    let r_phi = ddphi
        .zip(&dphi, |x, dd, _| (1.0 - x * x) * dd)
        .zip(&u_theta.zip(&dphi, |_, u, d| u * d), |_, acc, c| acc + c);
    Ok(ResidualReport {
        theta_sup: r_theta.sup_weighted(|_| 1.0),
        phi_weighted_sup: r_phi
            .sup_weighted(|x| (1.0 - x * x).powf(PHI_RESIDUAL_WEIGHT_EXPONENT)),
    })
}

/// Residual of a no-swirl profile against its own forcing constants.
pub fn profile_residual(profile: &NoSwirlProfile) -> Result<ResidualReport> {
    let mesh = profile.u_theta_bar.mesh();
    let zero = GridFunction::zeros(mesh);
    let p = &profile.params;
    reduced_residual(&profile.u_theta_bar, &zero, (p.c1, p.c2, p.c3))
}
