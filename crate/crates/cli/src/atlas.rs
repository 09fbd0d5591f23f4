//! Parameter sweeps: classify a list of points in parallel and write a
//! machine-readable atlas.

use crate::config::RunConfig;
use anyhow::{Context, Result};
use homax_core::{analyze, build_mesh, Params, RiccatiOutcome};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Input grid: either an explicit point list, a cartesian product of
/// parameter axes, or both.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    /// Explicit points (c1, c2, c3, gamma).
    pub points: Vec<[f64; 4]>,
    /// Cartesian axes; every combination is classified with `gamma`
    /// swept over `gamma_fractions` of the admissible interval.
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    /// Offsets added to the boundary value `cbar3(c1, c2)`.
    pub c3_offsets: Vec<f64>,
    /// Fractions t in [0, 1]: gamma = gamma_minus + t * (gamma_plus - gamma_minus).
    pub gamma_fractions: Vec<f64>,
}

/// One atlas row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtlasRecord {
    pub index: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma: f64,
    /// "profile", "blow-up", or "error".
    pub outcome: String,
    pub error: Option<String>,
    pub x_star: Option<f64>,
    pub j_stratum: Option<u8>,
    pub i_stratum: Option<(u8, u8)>,
    pub case_tag: Option<String>,
    pub in_i_hat: Option<bool>,
    pub gamma_minus: Option<f64>,
    pub gamma_plus: Option<f64>,
    pub endpoint_minus: Option<f64>,
    pub endpoint_plus: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
}

impl AtlasRecord {
    fn from_error(index: usize, p: &Params, err: String) -> AtlasRecord {
        AtlasRecord {
            index,
            c1: p.c1,
            c2: p.c2,
            c3: p.c3,
            gamma: p.gamma,
            outcome: "error".into(),
            error: Some(err),
            x_star: None,
            j_stratum: None,
            i_stratum: None,
            case_tag: None,
            in_i_hat: None,
            gamma_minus: None,
            gamma_plus: None,
            endpoint_minus: None,
            endpoint_plus: None,
            eta1: None,
            eta2: None,
        }
    }
}

/// Classify one point, folding failures into the record.
pub fn classify_point(
    index: usize,
    params: &Params,
    mesh: &Arc<homax_core::Mesh>,
    gamma_tol: f64,
) -> AtlasRecord {
    match homax_core::solve_riccati(params, mesh) {
        Ok(RiccatiOutcome::BlowUp { x_star }) => {
            let mut rec = AtlasRecord::from_error(index, params, String::new());
            rec.outcome = "blow-up".into();
            rec.error = None;
            rec.x_star = Some(x_star);
            return rec;
        }
        Ok(RiccatiOutcome::Profile(_)) => {}
        Err(err) => return AtlasRecord::from_error(index, params, err.to_string()),
    }
    match analyze(params, mesh, gamma_tol) {
        Ok((profile, bounds, label)) => AtlasRecord {
            index,
            c1: params.c1,
            c2: params.c2,
            c3: params.c3,
            gamma: params.gamma,
            outcome: "profile".into(),
            error: None,
            x_star: None,
            j_stratum: Some(label.j_stratum),
            i_stratum: label.i_stratum,
            case_tag: Some(label.case_tag.to_string()),
            in_i_hat: Some(label.in_i_hat),
            gamma_minus: Some(bounds.gamma_minus),
            gamma_plus: Some(bounds.gamma_plus),
            endpoint_minus: Some(profile.endpoint_minus),
            endpoint_plus: Some(profile.endpoint_plus),
            eta1: profile.eta1,
            eta2: profile.eta2,
        },
        Err(err) => AtlasRecord::from_error(index, params, err.to_string()),
    }
}

/// Expand a grid file into the concrete point list.
pub fn expand_grid(grid: &SweepGrid, mesh: &Arc<homax_core::Mesh>, gamma_tol: f64) -> Result<Vec<Params>> {
    let mut points: Vec<Params> = grid
        .points
        .iter()
        .map(|&[c1, c2, c3, gamma]| Params::new(c1, c2, c3, gamma))
        .collect();
    if !grid.c1.is_empty() {
        anyhow::ensure!(
            !grid.c2.is_empty() && !grid.c3_offsets.is_empty() && !grid.gamma_fractions.is_empty(),
            "cartesian sweep needs non-empty c1, c2, c3_offsets and gamma_fractions"
        );
        for &c1 in &grid.c1 {
            for &c2 in &grid.c2 {
                let base = homax_core::cbar3(c1, c2)
                    .with_context(|| format!("cbar3({c1}, {c2})"))?;
                for &off in &grid.c3_offsets {
                    let c3 = base + off;
                    let bounds = homax_core::gamma_bounds(c1, c2, c3, mesh, gamma_tol)
                        .with_context(|| format!("gamma bounds at ({c1}, {c2}, {c3})"))?;
                    for &t in &grid.gamma_fractions {
                        let gamma = bounds.gamma_minus
                            + t * (bounds.gamma_plus - bounds.gamma_minus);
                        points.push(Params::new(c1, c2, c3, gamma));
                    }
                }
            }
        }
    }
    anyhow::ensure!(!points.is_empty(), "sweep grid contains no points");
    Ok(points)
}

/// Run the sweep and write `point_NNNNN.json` per point plus
/// `index.csv` into the output directory.
pub fn run_sweep(grid_path: &Path, out_dir: &Path, config: &RunConfig) -> Result<Vec<AtlasRecord>> {
    let text = std::fs::read_to_string(grid_path)
        .with_context(|| format!("reading grid {}", grid_path.display()))?;
    let grid: SweepGrid = serde_json::from_str(&text)
        .with_context(|| format!("parsing grid {}", grid_path.display()))?;
    let mesh = build_mesh(config.n, config.grading_exponent)?;
    let points = expand_grid(&grid, &mesh, config.gamma_tol)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let records: Vec<AtlasRecord> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| classify_point(i, p, &mesh, config.gamma_tol))
        .collect();
    for rec in &records {
        let path = out_dir.join(format!("point_{:05}.json", rec.index));
        let file = std::fs::File::create(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(file, rec)?;
    }
    let index_path = out_dir.join("index.csv");
    let mut w = csv::Writer::from_path(&index_path)
        .with_context(|| format!("creating {}", index_path.display()))?;
    w.write_record([
        "index", "c1", "c2", "c3", "gamma", "outcome", "j_stratum", "i_k", "i_l", "case",
        "in_i_hat", "gamma_minus", "gamma_plus", "endpoint_minus", "endpoint_plus", "eta1",
        "eta2",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in &records {
        w.write_record([
            r.index.to_string(),
            format!("{:.16e}", r.c1),
            format!("{:.16e}", r.c2),
            format!("{:.16e}", r.c3),
            format!("{:.16e}", r.gamma),
            r.outcome.clone(),
            r.j_stratum.map(|v| v.to_string()).unwrap_or_default(),
            r.i_stratum.map(|(k, _)| k.to_string()).unwrap_or_default(),
            r.i_stratum.map(|(_, l)| l.to_string()).unwrap_or_default(),
            r.case_tag.clone().unwrap_or_default(),
            r.in_i_hat.map(|v| v.to_string()).unwrap_or_default(),
            fmt(r.gamma_minus),
            fmt(r.gamma_plus),
            fmt(r.endpoint_minus),
            fmt(r.endpoint_plus),
            fmt(r.eta1),
            fmt(r.eta2),
        ])?;
    }
    w.flush()?;
    Ok(records)
}
