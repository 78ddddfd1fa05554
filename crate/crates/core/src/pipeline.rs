//! Stage orchestration. Stages exchange data only through files in the
//! output directory, so each one can be rerun on its own.

use crate::config::PipelineConfig;
use crate::elastic::{cfl_dt, solve, Domain, Grid2D, InitialData, MaterialParams};
use crate::error::{Error, Result};
use crate::io::{self, BoundaryRecord};
use crate::metrics::{self, MetricsReport, SUPERSAMPLE};
use crate::motion::{BoundaryData, DeformationProvider, FieldMotion};
use crate::projection::simulate_scan;
use crate::recon::{reconstruct, reconstruct_static, Image};
use crate::rng::derive_seed;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Body ellipse scale used for the interior error region.
pub const INTERIOR_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Simulate,
    SolveMotion,
    Reconstruct,
    Evaluate,
    All,
}

/// File names inside the output directory.
pub mod files {
    pub const SINOGRAM: &str = "sinogram.sino";
    pub const GROUND_TRUTH: &str = "ground_truth.img";
    pub const RECON_STATIC: &str = "recon_static.img";
    pub const RECON_EXACT: &str = "recon_exact_motion.img";
    pub const REPORT: &str = "report.json";

    pub fn boundary(case: &str) -> String {
        format!("boundary_{case}.field")
    }

    pub fn motion(case: &str) -> String {
        format!("motion_{case}.field")
    }

    pub fn solve_log(case: &str) -> String {
        format!("solve_{case}.json")
    }

    pub fn recon_pde(case: &str) -> String {
        format!("recon_pde_{case}.img")
    }
}

/// `ρ⁰` per grid node: the spine value inside the prior disk, soft tissue
/// everywhere else (boundary and ghost nodes use their own position).
pub fn build_density_prior(cfg: &PipelineConfig, grid: &Grid2D) -> Result<Vec<f64>> {
    let prior = &cfg.material.prior;
    let domain = cfg.domain()?;
    if !domain.contains(prior.spine_center) {
        return Err(Error::config("material.prior: spine disk lies outside the domain"));
    }
    Ok(grid.positions.iter().map(|&p| prior.density(p)).collect())
}

/// Summary of one motion solve, written next to the displacement file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub steps: usize,
    pub dt: f64,
    pub dt_cfl: f64,
    pub max_displacement: f64,
    pub max_boundary_displacement: f64,
}

/// Everything written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub note: String,
    pub interior_factor: f64,
    /// Keyed by image name (`static`, `exact_motion`, `pde_<case>`).
    pub images: BTreeMap<String, MetricsReport>,
    pub solver: BTreeMap<String, SolveLog>,
}

fn out_path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

fn log(stage: &str, msg: impl AsRef<str>) {
    eprintln!("[{stage}] {}", msg.as_ref());
}

/// Run one stage (or all of them in order).
pub fn run(stage: Stage, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match stage {
        Stage::Simulate => simulate(cfg, out),
        Stage::SolveMotion => solve_motion(cfg, out),
        Stage::Reconstruct => reconstruct_all(cfg, out),
        Stage::Evaluate => evaluate(cfg, out).map(|_| ()),
        Stage::All => {
            simulate(cfg, out)?;
            solve_motion(cfg, out)?;
            reconstruct_all(cfg, out)?;
            evaluate(cfg, out).map(|_| ())
        }
    }
}

/// Observation times of the boundary markers: `t = 0` and every view time.
fn observation_times(cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let mut times = cfg.geometry()?.times();
    if times.first().is_none_or(|&t| t > 0.0) {
        times.insert(0, 0.0);
    }
    Ok(times)
}

/// Dynamic sinogram, rasterised ground truth and boundary observations.
pub fn simulate(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let geometry = cfg.geometry()?;
    log(
        "simulate",
        format!("{} views x {} bins", geometry.num_angles, geometry.num_detectors),
    );
    let sino = simulate_scan(&cfg.phantom, &cfg.motion, &geometry)?;
    io::write_sinogram(&out_path(out, files::SINOGRAM), &sino)?;

    let truth = metrics::rasterize(&cfg.phantom, &cfg.image, SUPERSAMPLE);
    io::write_image(&out_path(out, files::GROUND_TRUTH), &truth)?;
    io::write_pgm(&out.join("ground_truth.pgm"), &truth, Some(window(&truth)))?;

    let grid = cfg.grid()?;
    let domain = cfg.domain()?;
    let exact = crate::motion::sample_boundary(&cfg.motion, &grid, &observation_times(cfg)?)?;
    for (i, case) in cfg.boundary_cases.iter().enumerate() {
        let data = case
            .boundary
            .apply(&exact, &domain, derive_seed(cfg.seed, 1 + i as u64))?;
        let rec = BoundaryRecord {
            x_coords: grid.x_coords.clone(),
            y_coords: grid.y_coords.clone(),
            kinds: grid.kinds.clone(),
            times: data.times,
            values: data.values,
        };
        io::write_boundary_field(&out_path(out, &files::boundary(&case.name)), &rec)?;
        log(
            "simulate",
            format!("boundary case {} ({} nodes)", case.name, grid.boundary.len()),
        );
    }
    Ok(())
}

fn load_boundary(cfg: &PipelineConfig, grid: &Grid2D, case: &str, out: &Path) -> Result<BoundaryData> {
    let path = out_path(out, &files::boundary(case));
    let rec = io::read_boundary_field(&path)?;
    if rec.x_coords != grid.x_coords || rec.y_coords != grid.y_coords || rec.kinds != grid.kinds {
        return Err(Error::Mismatch(format!(
            "{} was written for a different grid than the configured one",
            path.display()
        )));
    }
    let data = BoundaryData {
        times: rec.times,
        positions: grid.boundary_positions(),
        values: rec.values,
    };
    let t_end = cfg.geometry()?.times().last().copied().unwrap_or(0.0);
    if data.times.first().is_none_or(|&t| t > 0.0) || data.times.last().is_none_or(|&t| t < t_end) {
        return Err(Error::Mismatch(format!(
            "{} does not cover the scan time",
            path.display()
        )));
    }
    Ok(data)
}

/// Material parameters of the elastic model on `grid`.
pub fn material(cfg: &PipelineConfig, grid: &Grid2D) -> Result<MaterialParams> {
    let (lambda, mu) = cfg.lame();
    Ok(MaterialParams {
        lambda,
        mu,
        rho0: build_density_prior(cfg, grid)?,
        forcing: None,
    })
}

/// Solve the elastic model once per boundary case.
pub fn solve_motion(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid()?;
    let params = material(cfg, &grid)?;
    let dt_cfl = cfl_dt(&params, &grid, cfg.solver.cfl_safety)?;
    let t_end = cfg.geometry()?.times().last().copied().unwrap_or(0.0);
    let n = cfg.solver.num_snapshots;
    let snapshot_times: Vec<f64> = (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect();
    let initial = InitialData::zeros(grid.len());
    for case in &cfg.boundary_cases {
        let data = load_boundary(cfg, &grid, &case.name, out)?;
        let max_boundary = data.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if t_end <= 0.0 {
            return Err(Error::config("scan must span a positive time interval"));
        }
        let (history, stats) = solve(&grid, &params, &initial, &data, t_end, dt_cfl, &snapshot_times)?;
        io::write_field(&out_path(out, &files::motion(&case.name)), &history)?;
        let entry = SolveLog {
            steps: stats.steps,
            dt: stats.dt,
            dt_cfl,
            max_displacement: stats.max_displacement,
            max_boundary_displacement: max_boundary,
        };
        write_json(&out_path(out, &files::solve_log(&case.name)), &entry)?;
        log(
            "solve-motion",
            format!(
                "{}: {} steps, dt {:.4e}, max |u| {:.4}",
                case.name, stats.steps, stats.dt, stats.max_displacement
            ),
        );
    }
    Ok(())
}

/// Grey window shared by all written images.
fn window(truth: &Image) -> (f64, f64) {
    truth
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

fn write_recon(out: &Path, name: &str, img: &Image, win: (f64, f64)) -> Result<()> {
    io::write_image(&out_path(out, name), img)?;
    io::write_pgm(&out_path(out, name).with_extension("pgm"), img, Some(win))
}

/// Static, exact-motion and PDE-motion reconstructions.
pub fn reconstruct_all(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let sino = io::read_sinogram(&out_path(out, files::SINOGRAM), cfg.time_map()?)?;
    let expected = cfg.geometry()?;
    if sino.geometry != expected {
        return Err(Error::Mismatch(
            "sinogram geometry differs from the configuration".into(),
        ));
    }
    let truth = io::read_image(&out_path(out, files::GROUND_TRUTH))?;
    let win = window(&truth);
    let filter = cfg.filter_spec()?;

    let img = reconstruct_static(&sino, &filter, &cfg.image)?;
    write_recon(out, files::RECON_STATIC, &img, win)?;
    log("reconstruct", "static");

    let img = reconstruct(&sino, &DeformationProvider::Analytic(cfg.motion), &filter, &cfg.image)?;
    write_recon(out, files::RECON_EXACT, &img, win)?;
    log("reconstruct", "exact motion");

    let domain: Arc<dyn Domain> = Arc::new(cfg.domain()?);
    for case in &cfg.boundary_cases {
        let history = io::read_field(&out_path(out, &files::motion(&case.name)))?;
        let provider = DeformationProvider::FromField(FieldMotion::new(&history, domain.clone())?);
        let img = reconstruct(&sino, &provider, &filter, &cfg.image)?;
        write_recon(out, &files::recon_pde(&case.name), &img, win)?;
        log("reconstruct", format!("PDE motion, {}", case.name));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        kind: "json",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Metrics of every reconstruction against the ground truth.
pub fn evaluate(cfg: &PipelineConfig, out: &Path) -> Result<PipelineReport> {
    let truth = io::read_image(&out_path(out, files::GROUND_TRUTH))?;
    let regions = metrics::phantom_regions(&cfg.phantom, &truth.spec, INTERIOR_FACTOR);
    let mut images = BTreeMap::new();
    let mut named = vec![
        ("static".to_owned(), files::RECON_STATIC.to_owned()),
        ("exact_motion".to_owned(), files::RECON_EXACT.to_owned()),
    ];
    named.extend(
        cfg.boundary_cases
            .iter()
            .map(|c| (format!("pde_{}", c.name), files::recon_pde(&c.name))),
    );
    for (key, file) in named {
        let img = io::read_image(&out_path(out, &file))?;
        images.insert(key, metrics::evaluate(&img, &truth, &regions)?);
    }
    let mut solver = BTreeMap::new();
    for c in &cfg.boundary_cases {
        solver.insert(c.name.clone(), read_json(&out_path(out, &files::solve_log(&c.name)))?);
    }
    let report = PipelineReport {
        note: "artifact metrics of this implementation against the rasterised initial state".into(),
        interior_factor: INTERIOR_FACTOR,
        images,
        solver,
    };
    write_json(&out_path(out, files::REPORT), &report)?;
    for (k, m) in &report.images {
        log("evaluate", format!("{k}: rmse {:.5} psnr {:.2} dB", m.rmse, m.psnr));
    }
    Ok(report)
}
