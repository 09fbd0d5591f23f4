//! Graded meshes on (-1,1) and the numerical primitives built on them.
//!
//! Nodes are symmetric about 0 and accumulate geometrically at both ends
//! so that boundary layers of logarithmic width are resolved. All local
//! operations (differentiation, interpolation, quadrature) are performed
//! in per-window charts: the identity chart in the center and logarithmic
//! charts `u = ln(1 -+ x)` near the endpoints, where the nodes are
//! well-spaced and polynomial stencils are well-conditioned.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write as IoWrite};
use std::path::Path;
use std::sync::Arc;

/// Distance from the outermost node to the nearest endpoint.
pub const DELTA_STAR: f64 = 3e-9;
/// 1 - |x| at the joint between the algebraic block and the log tail.
const Y_JOINT: f64 = 0.08;
/// Fraction of each half-axis' nodes spent on the algebraic block.
const T_JOINT: f64 = 0.65;
/// |x| beyond which the logarithmic charts are used.
const X_SPLIT: f64 = 0.75;
/// Window length for differentiation stencils (degree 9).
const STENCIL_K: usize = 10;
/// Window length for interpolation in the central chart (degree 5).
const INTERP_K_CENTER: usize = 6;
/// Window length for interpolation in the tail charts (degree 7).
const INTERP_K_TAIL: usize = 8;
/// Number of tail samples inspected by endpoint extrapolation.
const TAIL_DEPTH: usize = 10;

/// 7-point Gauss-Legendre rule on [-1,1]; exact through degree 13.
const GAUSS_X: [f64; 7] = [
    -0.94910791234275852453,
    -0.74153118559939443986,
    -0.40584515137739716691,
    0.0,
    0.40584515137739716691,
    0.74153118559939443986,
    0.94910791234275852453,
];
const GAUSS_W: [f64; 7] = [
    0.12948496616886969327,
    0.27970539148927666790,
    0.38183005050511894495,
    0.41795918367346938776,
    0.38183005050511894495,
    0.27970539148927666790,
    0.12948496616886969327,
];

/// Which endpoint of (-1,1) a limit or weight refers to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    /// Distance to this endpoint: `1+x` for Minus, `1-x` for Plus.
    pub fn dist(self, x: f64) -> f64 {
        match self {
            Side::Minus => 1.0 + x,
            Side::Plus => 1.0 - x,
        }
    }

    pub fn endpoint(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }
}

/// Multiplier applied to a grid function before endpoint extrapolation.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum EndpointWeight {
    One,
    /// `ln((1 -+ x)/3)` toward the chosen side.
    LogThird,
    /// `(1 -+ x)^alpha` toward the chosen side.
    Power(f64),
}

impl EndpointWeight {
    fn apply(self, side: Side, x: f64) -> f64 {
        match self {
            EndpointWeight::One => 1.0,
            EndpointWeight::LogThird => (side.dist(x) / 3.0).ln(),
            EndpointWeight::Power(alpha) => side.dist(x).powf(alpha),
        }
    }
}

/// Local coordinate chart.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Chart {
    Center,
    Minus,
    Plus,
}

impl Chart {
    fn of(x: f64) -> Chart {
        if x <= -X_SPLIT {
            Chart::Minus
        } else if x >= X_SPLIT {
            Chart::Plus
        } else {
            Chart::Center
        }
    }

    /// Chart coordinate w(x); increasing in x in every chart.
    fn w(self, x: f64) -> f64 {
        match self {
            Chart::Center => x,
            Chart::Minus => (1.0 + x).ln(),
            Chart::Plus => -(1.0 - x).ln(),
        }
    }

    fn x(self, w: f64) -> f64 {
        match self {
            Chart::Center => w,
            Chart::Minus => w.exp() - 1.0,
            Chart::Plus => 1.0 - (-w).exp(),
        }
    }

    /// dx/dw at the point x.
    fn jac(self, x: f64) -> f64 {
        match self {
            Chart::Center => 1.0,
            Chart::Minus => 1.0 + x,
            Chart::Plus => 1.0 - x,
        }
    }

    /// (w', w'', w''') as functions of x, for the chain rule.
    fn dw(self, x: f64) -> (f64, f64, f64) {
        match self {
            Chart::Center => (1.0, 0.0, 0.0),
            Chart::Minus => {
                let d = 1.0 + x;
                (1.0 / d, -1.0 / (d * d), 2.0 / (d * d * d))
            }
            Chart::Plus => {
                let d = 1.0 - x;
                (1.0 / d, 1.0 / (d * d), 2.0 / (d * d * d))
            }
        }
    }
}

/// A symmetric graded mesh on (-1,1).
///
/// Each half-axis carries an algebraic block (uniform-like for grading
/// exponent 1, increasingly end-weighted for larger exponents) reaching
/// `1 - |x| = 0.08`, followed by a geometric tail with uniform spacing in
/// `ln(1 - |x|)` reaching `1 - |x| = 3e-9`. The node set contains 0 and
/// is strictly increasing.
#[derive(Clone, Debug)]
pub struct Mesh {
    nodes: Vec<f64>,
    grading_exponent: f64,
    center: usize,
}

/// Construct a mesh with at least `n` nodes (rounded up to the next odd
/// count so that 0 is a node) and the given grading exponent `p >= 1`.
pub fn build_mesh(n: usize, grading_exponent: f64) -> Result<Arc<Mesh>> {
    if n < 64 {
        return Err(Error::InvalidParameter(format!(
            "mesh size n={n} is below the minimum of 64"
        )));
    }
    if !(grading_exponent >= 1.0) || !grading_exponent.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grading exponent p={grading_exponent} must be a finite value >= 1"
        )));
    }
    let m = n / 2; // half-axis node count; total 2m+1
    let p = grading_exponent;
    let mut half = Vec::with_capacity(m);
    let root = Y_JOINT.powf(1.0 / p);
    for j in 1..=m {
        let t = j as f64 / m as f64;
        let y = if t <= T_JOINT {
            (1.0 - (1.0 - root) * (t / T_JOINT)).powf(p)
        } else {
            let s = (t - T_JOINT) / (1.0 - T_JOINT);
            Y_JOINT * (DELTA_STAR / Y_JOINT).powf(s)
        };
        half.push(1.0 - y);
    }
    let mut nodes = Vec::with_capacity(2 * m + 1);
    for &x in half.iter().rev() {
        nodes.push(-x);
    }
    nodes.push(0.0);
    nodes.extend_from_slice(&half);
    debug_assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    Ok(Arc::new(Mesh {
        nodes,
        grading_exponent,
        center: m,
    }))
}

impl Mesh {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grading_exponent(&self) -> f64 {
        self.grading_exponent
    }

    /// Index of the node at x = 0.
    pub fn center_index(&self) -> usize {
        self.center
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index of the node equal to `x` up to a 1e-12 absolute tolerance.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let i = self
            .nodes
            .partition_point(|&v| v < x)
            .min(self.nodes.len() - 1);
        for j in [i.saturating_sub(1), i] {
            if (self.nodes[j] - x).abs() <= 1e-12 {
                return Some(j);
            }
        }
        None
    }

    /// Largest index with node <= x (clamped to valid range).
    fn cell_left_of(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&v| v <= x);
        i.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// A window of `k` consecutive node indices roughly centered at `i`.
    fn window(&self, i: usize, k: usize) -> std::ops::Range<usize> {
        let k = k.min(self.nodes.len());
        let half = (k - 1) / 2;
        let start = i.saturating_sub(half).min(self.nodes.len() - k);
        start..start + k
    }

    /// Integrate `f` over `[a, b] ⊂ [first node, last node]` with the
    /// per-cell Gauss rule in the local charts.
    pub fn integrate_between(&self, a: f64, b: f64, f: &mut dyn FnMut(f64) -> f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut total = 0.0;
        let mut comp = 0.0; // Kahan compensation
        let first_cell = self.cell_left_of(lo);
        let last_cell = self.cell_left_of(hi);
        for c in first_cell..=last_cell {
            let xl = self.nodes[c].max(lo);
            let xr = self.nodes[c + 1].min(hi);
            if xr <= xl {
                continue;
            }
            let chart = Chart::of(0.5 * (xl + xr));
            let wl = chart.w(xl);
            let wr = chart.w(xr);
            let mid = 0.5 * (wl + wr);
            let rad = 0.5 * (wr - wl);
            let mut cell = 0.0;
            for g in 0..7 {
                let wg = mid + rad * GAUSS_X[g];
                let xg = chart.x(wg);
                cell += GAUSS_W[g] * f(xg) * chart.jac(xg);
            }
            cell *= rad;
            let t = total + (cell - comp);
            comp = (t - total) - (cell - comp);
            total = t;
        }
        sign * total
    }

    /// Cumulative integral with integrand `f(x, values-of-samples-at-x)`,
    /// returned as node values with value 0 at `base_index`.
    pub fn cumulative_quadrature(
        self: &Arc<Self>,
        base_index: usize,
        samples: &[&GridFunction],
        f: &dyn Fn(f64, &[f64]) -> f64,
    ) -> GridFunction {
        let n = self.len();
        let mut cell = vec![0.0f64; n - 1];
        let mut buf = vec![0.0f64; samples.len()];
        for c in 0..n - 1 {
            let xl = self.nodes[c];
            let xr = self.nodes[c + 1];
            let chart = Chart::of(0.5 * (xl + xr));
            let wl = chart.w(xl);
            let wr = chart.w(xr);
            let mid = 0.5 * (wl + wr);
            let rad = 0.5 * (wr - wl);
            let mut acc = 0.0;
            for g in 0..7 {
                let wg = mid + rad * GAUSS_X[g];
                let xg = chart.x(wg);
                for (s, grid) in samples.iter().enumerate() {
                    buf[s] = grid.eval(xg);
                }
                acc += GAUSS_W[g] * f(xg, &buf) * chart.jac(xg);
            }
            cell[c] = acc * rad;
        }
        let mut values = vec![0.0f64; n];
        // prefix sums outward from the base node, Kahan-compensated
        let mut total = 0.0;
        let mut comp = 0.0;
        for i in base_index + 1..n {
            let y = cell[i - 1] - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
            values[i] = total;
        }
        total = 0.0;
        comp = 0.0;
        for i in (0..base_index).rev() {
            let y = cell[i] - comp;
            let t = total - y;
            comp = (t - total) + y;
            total = t;
            values[i] = total;
        }
        GridFunction::new_unchecked(Arc::clone(self), values)
    }
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.grading_exponent == other.grading_exponent && self.nodes.len() == other.nodes.len()
    }
}

/// Serializable mesh descriptor; the node set is regenerated on load.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct MeshSpec {
    pub n: usize,
    pub grading_exponent: f64,
}

impl Mesh {
    pub fn spec(&self) -> MeshSpec {
        MeshSpec {
            n: self.len(),
            grading_exponent: self.grading_exponent,
        }
    }
}

impl MeshSpec {
    pub fn build(&self) -> Result<Arc<Mesh>> {
        build_mesh(self.n, self.grading_exponent)
    }
}

/// Estimated endpoint limit together with an error estimate.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct EndpointEstimate {
    pub value: f64,
    pub error: f64,
}

/// Values of a scalar function on the nodes of a [`Mesh`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    /// Optional extrapolated limits at x = -1 and x = +1.
    pub endpoint_minus: Option<EndpointEstimate>,
    pub endpoint_plus: Option<EndpointEstimate>,
}

impl GridFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::InvalidParameter(format!(
                "value vector length {} does not match mesh size {}",
                values.len(),
                mesh.len()
            )));
        }
        Ok(Self::new_unchecked(mesh, values))
    }

    fn new_unchecked(mesh: Arc<Mesh>, values: Vec<f64>) -> Self {
        GridFunction {
            mesh,
            values,
            endpoint_minus: None,
            endpoint_plus: None,
        }
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&x| f(x)).collect();
        Self::new_unchecked(Arc::clone(mesh), values)
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self::new_unchecked(Arc::clone(mesh), vec![0.0; mesh.len()])
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Value at the node x = 0.
    pub fn at_center(&self) -> f64 {
        self.values[self.mesh.center_index()]
    }

    /// Pointwise map, dropping endpoint metadata.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        let values = self
            .mesh
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| f(x, v))
            .collect();
        Self::new_unchecked(Arc::clone(&self.mesh), values)
    }

    /// Pointwise combination of two grids on the same mesh.
    pub fn zip(&self, other: &GridFunction, f: impl Fn(f64, f64, f64) -> f64) -> GridFunction {
        debug_assert_eq!(self.mesh.len(), other.mesh.len());
        let values = self
            .mesh
            .nodes()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(&x, (&a, &b))| f(x, a, b))
            .collect();
        Self::new_unchecked(Arc::clone(&self.mesh), values)
    }

    /// self + c * other
    pub fn add_scaled(&self, c: f64, other: &GridFunction) -> GridFunction {
        self.zip(other, |_, a, b| a + c * b)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|_, v| c * v)
    }

    /// Weighted sup-norm over all nodes.
    pub fn sup_weighted(&self, w: impl Fn(f64) -> f64) -> f64 {
        self.mesh
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| (w(x) * v).abs())
            .fold(0.0, f64::max)
    }

    /// Sup-norm over nodes with |x| < 1/2.
    pub fn sup_central(&self) -> f64 {
        self.mesh
            .nodes()
            .iter()
            .zip(&self.values)
            .filter(|(&x, _)| x.abs() < 0.5)
            .map(|(_, &v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Interpolated value at an arbitrary point inside the node range,
    /// using the polynomial window in the local chart.
    pub fn eval(&self, x: f64) -> f64 {
        let mesh = &self.mesh;
        let chart = Chart::of(x);
        let k = match chart {
            Chart::Center => INTERP_K_CENTER,
            _ => INTERP_K_TAIL,
        };
        let c = mesh.cell_left_of(x);
        let win = mesh.window(c, k);
        let w0 = chart.w(x);
        let mut ws = [0.0f64; INTERP_K_TAIL];
        let m = win.len();
        for (j, i) in win.clone().enumerate() {
            ws[j] = chart.w(mesh.nodes[i]) - w0;
        }
        lagrange_at_zero(&ws[..m], &self.values[win])
    }

    /// Derivative of the interpolant of order 1..=3 at every node.
    pub fn differentiate(&self, order: usize) -> Result<GridFunction> {
        if order == 0 || order > 3 {
            return Err(Error::InvalidParameter(format!(
                "derivative order {order} is outside the supported range 1..=3"
            )));
        }
        let n = self.mesh.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = self.derivative_at_node(i, order)?;
        }
        Ok(GridFunction::new_unchecked(Arc::clone(&self.mesh), out))
    }

    /// Derivative of order 1..=3 at one node.
    pub fn derivative_at_node(&self, i: usize, order: usize) -> Result<f64> {
        if order == 0 || order > 3 {
            return Err(Error::InvalidParameter(format!(
                "derivative order {order} is outside the supported range 1..=3"
            )));
        }
        let mesh = &self.mesh;
        let x = mesh.nodes[i];
        let chart = Chart::of(x);
        let win = mesh.window(i, STENCIL_K);
        let w0 = chart.w(x);
        let m = win.len();
        let mut ws = vec![0.0f64; m];
        for (j, idx) in win.clone().enumerate() {
            ws[j] = chart.w(mesh.nodes[idx]) - w0;
        }
        let weights = fd_weights(0.0, &ws, order);
        let j0 = i - win.start;
        let vals = &self.values[win];
        // Apply derivative weights to differences from the node value:
        // mathematically identical (the weights of order >= 1 sum to
        // zero) but it removes the large-value cancellation and makes
        // the derivative of a constant grid exactly zero.
        let base = vals[j0];
        let mut dw = [0.0f64; 4]; // f, f_w, f_ww, f_www
        dw[0] = base;
        for k in 1..=order {
            let mut acc = 0.0;
            for j in 0..m {
                acc += weights[k][j] * (vals[j] - base);
            }
            dw[k] = acc;
        }
        let (w1, w2, w3) = chart.dw(x);
        Ok(match order {
            1 => dw[1] * w1,
            2 => dw[2] * w1 * w1 + dw[1] * w2,
            _ => dw[3] * w1 * w1 * w1 + 3.0 * dw[2] * w1 * w2 + dw[1] * w3,
        })
    }

    /// Cumulative integral of the interpolant from a base node.
    ///
    /// `base` must coincide with a mesh node. The result vanishes at the
    /// base node and is a node-wise antiderivative elsewhere.
    pub fn cumulative_integral(&self, base: f64) -> Result<GridFunction> {
        let Some(b) = self.mesh.index_of(base) else {
            return Err(Error::InvalidParameter(format!(
                "cumulative integral base {base} is not a mesh node"
            )));
        };
        let this = self.clone();
        Ok(self
            .mesh
            .cumulative_quadrature(b, &[&this], &|_, v| v[0]))
    }

    /// Extrapolated limit of `weight * self` at the chosen endpoint.
    ///
    /// Two tail models are fitted (a geometric/power model via Aitken
    /// acceleration, which the uniform-in-`ln(1 -+ x)` tail makes exact
    /// for power behavior, and a quadratic model in `1/ln((1 -+ x)/3)`);
    /// the better self-consistent one wins. A monotone tail with growing
    /// increments is reported as divergent.
    pub fn endpoint_limit(&self, side: Side, weight: EndpointWeight) -> Result<EndpointEstimate> {
        let n = self.mesh.len();
        let depth = TAIL_DEPTH.min(n / 2);
        let idx: Vec<usize> = match side {
            Side::Minus => (0..depth).rev().collect(),
            Side::Plus => (n - depth..n).collect(),
        };
        let xs: Vec<f64> = idx.iter().map(|&i| self.mesh.nodes[i]).collect();
        let ys: Vec<f64> = idx
            .iter()
            .map(|&i| weight.apply(side, self.mesh.nodes[i]) * self.values[i])
            .collect();
        endpoint_extrapolate(side, &xs, &ys)
    }

    /// Write node/value pairs as CSV with 17 significant digits.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "x,value")?;
        for (x, v) in self.mesh.nodes().iter().zip(&self.values) {
            writeln!(file, "{x:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    /// Read node/value pairs written by [`GridFunction::to_csv`];
    /// the node column must match `mesh` exactly.
    pub fn from_csv(mesh: &Arc<Mesh>, path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut values = Vec::with_capacity(mesh.len());
        for (lineno, line) in file.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                continue; // header
            }
            let mut parts = line.split(',');
            let (Some(xs), Some(vs)) = (parts.next(), parts.next()) else {
                return Err(Error::InvalidParameter(format!(
                    "malformed CSV line {lineno}: {line}"
                )));
            };
            let x: f64 = xs.trim().parse().map_err(|e| {
                Error::InvalidParameter(format!("bad x value on line {lineno}: {e}"))
            })?;
            let v: f64 = vs.trim().parse().map_err(|e| {
                Error::InvalidParameter(format!("bad value on line {lineno}: {e}"))
            })?;
            let i = values.len();
            if i >= mesh.len() || (mesh.nodes()[i] - x).abs() > 1e-14 * (1.0 + x.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "CSV nodes do not match the target mesh at row {i}"
                )));
            }
            values.push(v);
        }
        GridFunction::new(Arc::clone(mesh), values)
    }

    pub fn to_json(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn from_json(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

#[derive(Serialize, Deserialize)]
struct GridFunctionJson {
    mesh: MeshSpec,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    endpoint_minus: Option<EndpointEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    endpoint_plus: Option<EndpointEstimate>,
}

impl Serialize for GridFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridFunctionJson {
            mesh: self.mesh.spec(),
            values: self.values.clone(),
            endpoint_minus: self.endpoint_minus,
            endpoint_plus: self.endpoint_plus,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GridFunctionJson::deserialize(d)?;
        let mesh = raw.mesh.build().map_err(serde::de::Error::custom)?;
        let mut gf = GridFunction::new(mesh, raw.values).map_err(serde::de::Error::custom)?;
        gf.endpoint_minus = raw.endpoint_minus;
        gf.endpoint_plus = raw.endpoint_plus;
        Ok(gf)
    }
}

/// Integral of `g/(1-s^2)` from 0 to `x`, where `g` may be nonzero at the
/// endpoint `side`.
///
/// The singular part `g(side) / (1-s^2)` is integrated in closed form
/// (`g(side) * atanh`), the remainder numerically. If `x` equals the
/// endpoint itself the integral only exists when the endpoint value of
/// `g` vanishes; otherwise a divergence error is returned.
pub fn log_singular_integral(g: &GridFunction, side: Side, x: f64) -> Result<f64> {
    let mesh = g.mesh();
    let end = g.endpoint_limit(side, EndpointWeight::One)?;
    let at_endpoint = (x - side.endpoint()).abs() < 1e-15;
    if at_endpoint {
        if end.value.abs() > f64::max(1e-8, 10.0 * end.error) {
            return Err(Error::Divergence(format!(
                "integral of g/(1-s^2) diverges: g({}) = {:.3e} != 0",
                side.endpoint(),
                end.value
            )));
        }
        // endpoint value numerically zero: integrate the remainder over
        // the whole mesh and extrapolate the partial integrals
        let this = g.clone();
        let remainder = mesh.cumulative_quadrature(mesh.center_index(), &[&this], &|s, v| {
            (v[0] - end.value) / (1.0 - s * s)
        });
        let tail = remainder.endpoint_limit(side, EndpointWeight::One)?;
        return Ok(tail.value);
    }
    if !(x > mesh.first() && x < mesh.last() || mesh.index_of(x).is_some()) {
        return Err(Error::InvalidParameter(format!(
            "evaluation point {x} lies outside the resolved mesh range"
        )));
    }
    let smooth = mesh.integrate_between(0.0, x, &mut |s| (g.eval(s) - end.value) / (1.0 - s * s));
    Ok(smooth + end.value * x.atanh())
}

/// Fornberg finite-difference weights for derivatives 0..=m at point `z`
/// given nodes `xs`; returns one weight row per derivative order.
fn fd_weights(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0f64; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Barycentric Lagrange evaluation at coordinate 0 for nodes `ws`.
fn lagrange_at_zero(ws: &[f64], ys: &[f64]) -> f64 {
    let n = ws.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        if ws[j] == 0.0 {
            return ys[j];
        }
        let mut bw = 1.0;
        for k in 0..n {
            if k != j {
                bw /= ws[j] - ws[k];
            }
        }
        let t = bw / (0.0 - ws[j]);
        num += t * ys[j];
        den += t;
    }
    num / den
}

/// Aitken delta-squared acceleration of a 3-term tail.
fn aitken(y0: f64, y1: f64, y2: f64) -> Option<f64> {
    let d1 = y1 - y0;
    let d2 = y2 - y1;
    let den = d2 - d1;
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    let a = y2 - d2 * d2 / den;
    a.is_finite().then_some(a)
}

/// Quadratic-in-1/L extrapolation to L -> -inf through three samples.
fn log_model(side: Side, xs: &[f64], ys: &[f64], picks: [usize; 3]) -> Option<f64> {
    let t: Vec<f64> = picks
        .iter()
        .map(|&i| 1.0 / (side.dist(xs[i]) / 3.0).ln())
        .collect();
    let mut acc = 0.0;
    for j in 0..3 {
        let mut l = 1.0;
        for k in 0..3 {
            if k != j {
                let den = t[j] - t[k];
                if den == 0.0 {
                    return None;
                }
                l *= -t[k] / den;
            }
        }
        acc += l * ys[picks[j]];
    }
    acc.is_finite().then_some(acc)
}

fn endpoint_extrapolate(side: Side, xs: &[f64], ys: &[f64]) -> Result<EndpointEstimate> {
    let d = ys.len();
    debug_assert!(d >= 7);
    let scale = ys.iter().fold(0.0f64, |a, &y| a.max(y.abs())).max(1e-300);
    // constant tail short-circuit
    let dn: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    if dn.iter().rev().take(4).all(|&v| v.abs() <= 1e-14 * scale) {
        return Ok(EndpointEstimate {
            value: ys[d - 1],
            error: 1e-14 * scale,
        });
    }
    // divergence: monotone increments that keep growing
    let last6 = &dn[d - 1 - 6..];
    let same_sign = last6.iter().all(|&v| v > 0.0) || last6.iter().all(|&v| v < 0.0);
    let growing = last6.windows(2).all(|w| w[1].abs() >= w[0].abs() * 1.02)
        && last6[5].abs() > 2.0 * last6[0].abs();
    if same_sign && growing {
        return Err(Error::Divergence(
            "endpoint extrapolation: tail increments grow without settling".into(),
        ));
    }
    let mut best: Option<(f64, f64)> = None;
    // power/geometric family via Aitken at two depths
    let p0 = aitken(ys[d - 3], ys[d - 2], ys[d - 1]);
    let p1 = aitken(ys[d - 4], ys[d - 3], ys[d - 2]);
    if let (Some(a0), Some(a1)) = (p0, p1) {
        let err = (a0 - a1).abs();
        if best.map_or(true, |(_, e)| err < e) {
            best = Some((a0, err));
        }
    }
    // logarithmic family at two depths
    let l0 = log_model(side, xs, ys, [d - 5, d - 3, d - 1]);
    let l1 = log_model(side, xs, ys, [d - 6, d - 4, d - 2]);
    if let (Some(a0), Some(a1)) = (l0, l1) {
        let err = (a0 - a1).abs();
        if best.map_or(true, |(_, e)| err < e) {
            best = Some((a0, err));
        }
    }
    match best {
        Some((value, err)) => Ok(EndpointEstimate {
            value,
            error: err.max(1e-15 * scale),
        }),
        None => Err(Error::Divergence(
            "endpoint extrapolation: no tail model stabilized".into(),
        )),
    }
}
