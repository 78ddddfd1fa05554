//! Pipeline configuration (JSON, schema version 1).

use crate::elastic::{classify_nodes, Domain, EllipseDomain, Grid2D};
use crate::error::{Error, Result};
use crate::geometry::{linspace, Vec2};
use crate::motion::BoundarySpec;
use crate::phantom::{AffineMotion, PhantomSpec};
use crate::projection::{ScanGeometry, TimeMap};
use crate::recon::{FilterSpec, ImageSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub phantom: PhantomSpec,
    /// Label of the phantom ellipse that serves as the reference domain.
    #[serde(default = "default_domain_label")]
    pub domain_label: String,
    pub motion: AffineMotion,
    pub scan: ScanConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub boundary_cases: Vec<BoundaryCase>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub image: ImageSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_domain_label() -> String {
    "body".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub num_angles: usize,
    pub angle_start: f64,
    pub angle_end: f64,
    pub num_detectors: usize,
    pub detector_min: f64,
    pub detector_max: f64,
    pub time_map: TimeMapConfig,
}

/// How view indices map to time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeMapConfig {
    Linear {
        start: f64,
        step: f64,
    },
    /// Spread the views over `periods` cycles of the (periodic) motion.
    CoverPeriods {
        periods: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    /// Pa
    pub lambda: f64,
    /// Pa
    pub mu: f64,
    /// Metres per domain unit.
    #[serde(default = "unit")]
    pub length_scale: f64,
    pub prior: DensityPrior,
}

fn unit() -> f64 {
    1.0
}

/// Two-value density prior: a spine disk inside soft tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityPrior {
    pub spine_center: Vec2,
    pub spine_radius: f64,
    /// kg/m³
    pub spine_density: f64,
    /// kg/m³
    pub soft_density: f64,
}

impl DensityPrior {
    pub fn density(&self, p: Vec2) -> f64 {
        if (p - self.spine_center).norm() <= self.spine_radius {
            self.spine_density
        } else {
            self.soft_density
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Nodes per axis.
    pub grid_size: usize,
    #[serde(default = "default_grid_min")]
    pub grid_min: Vec2,
    #[serde(default = "default_grid_max")]
    pub grid_max: Vec2,
    pub cfl_safety: f64,
    pub snap_fraction: f64,
    /// Stored time levels, equally spaced over the scan.
    pub num_snapshots: usize,
}

fn default_grid_min() -> Vec2 {
    Vec2::new(-1.0, -1.0)
}

fn default_grid_max() -> Vec2 {
    Vec2::new(1.0, 1.0)
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_size: 257,
            grid_min: default_grid_min(),
            grid_max: default_grid_max(),
            cfl_safety: 0.9,
            snap_fraction: 0.5,
            num_snapshots: 41,
        }
    }
}

/// One named boundary-data scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCase {
    pub name: String,
    pub boundary: BoundarySpec,
}

/// Optional overrides of the default reconstruction filter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dft_size: Option<usize>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("cannot parse configuration: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises")
    }

    /// Read and validate a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn domain_shape(&self) -> Option<&crate::phantom::Ellipse> {
        self.phantom.by_label(&self.domain_label).next()
    }

    pub fn domain(&self) -> Result<EllipseDomain> {
        self.domain_shape()
            .map(|e| EllipseDomain::new(e.clone()))
            .ok_or_else(|| Error::config(format!("no phantom ellipse is labelled {:?}", self.domain_label)))
    }

    pub fn time_map(&self) -> Result<TimeMap> {
        match self.scan.time_map {
            TimeMapConfig::Linear { start, step } => Ok(TimeMap { start, step }),
            TimeMapConfig::CoverPeriods { periods } => match self.motion {
                AffineMotion::Breathing(b) => Ok(TimeMap::covering(b.period(), periods, self.scan.num_angles)),
                _ => Err(Error::config(
                    "scan.time_map: cover_periods needs a periodic (breathing) motion",
                )),
            },
        }
    }

    pub fn geometry(&self) -> Result<ScanGeometry> {
        let s = &self.scan;
        Ok(ScanGeometry {
            num_angles: s.num_angles,
            angle_start: s.angle_start,
            angle_end: s.angle_end,
            num_detectors: s.num_detectors,
            detector_min: s.detector_min,
            detector_max: s.detector_max,
            time_map: self.time_map()?,
        })
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        let geometry = self.geometry()?;
        let mut spec = FilterSpec::for_geometry(&geometry);
        if let Some(g) = self.filter.gamma {
            spec.gamma = g;
        }
        if let Some(n) = self.filter.dft_size {
            spec.dft_size = n;
        }
        Ok(spec)
    }

    pub fn grid_coords(&self) -> (Vec<f64>, Vec<f64>) {
        let s = &self.solver;
        (
            linspace(s.grid_min.x, s.grid_max.x, s.grid_size),
            linspace(s.grid_min.y, s.grid_max.y, s.grid_size),
        )
    }

    pub fn grid(&self) -> Result<Grid2D> {
        let (xs, ys) = self.grid_coords();
        classify_nodes(&xs, &ys, &self.domain()?, self.solver.snap_fraction)
    }

    /// Effective Lamé coefficients in domain units.
    pub fn lame(&self) -> (f64, f64) {
        let l2 = self.material.length_scale * self.material.length_scale;
        (self.material.lambda / l2, self.material.mu / l2)
    }

    /// Check every stage's preconditions; all problems are reported at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.version != SCHEMA_VERSION {
            errors.push(format!("version: expected {SCHEMA_VERSION}, found {}", self.version));
        }
        self.phantom.validate(&mut errors);
        self.motion.validate(&mut errors);
        if self.domain_shape().is_none() {
            errors.push(format!(
                "domain_label: no phantom ellipse is labelled {:?}",
                self.domain_label
            ));
        }

        let geometry = match self.time_map() {
            Ok(_) => self.geometry().ok(),
            Err(Error::Config(msgs)) => {
                errors.extend(msgs);
                None
            }
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        };
        if let TimeMapConfig::CoverPeriods { periods } = self.scan.time_map {
            if !(periods > 0.0 && periods.is_finite()) {
                errors.push("scan.time_map: periods must be positive".into());
            }
        }
        if let Some(g) = &geometry {
            g.collect_errors(&mut errors);
            if g.num_angles >= 1 && g.num_detectors >= 2 && errors.is_empty() {
                let times = g.times();
                if let Some(t) = times.iter().find(|&&t| self.motion.jacobian_det(t).abs() < 1e-12) {
                    errors.push(format!("motion: not invertible at scan time {t}"));
                }
                if times.iter().any(|&t| t < 0.0) {
                    errors.push("scan.time_map: scan times must be non-negative".into());
                }
            }
        }

        let m = &self.material;
        if !(m.mu > 0.0 && m.lambda + 2.0 * m.mu > 0.0 && m.lambda.is_finite() && m.mu.is_finite()) {
            errors.push("material: need finite mu > 0 and lambda + 2 mu > 0".into());
        }
        if !(m.length_scale > 0.0 && m.length_scale.is_finite()) {
            errors.push("material.length_scale must be positive".into());
        }
        let p = &m.prior;
        if !(p.spine_density > 0.0 && p.soft_density > 0.0 && p.spine_density.is_finite() && p.soft_density.is_finite())
        {
            errors.push("material.prior: densities must be positive".into());
        }
        if !(p.spine_radius > 0.0) {
            errors.push("material.prior: spine_radius must be positive".into());
        }

        let s = &self.solver;
        if s.grid_size < 5 {
            errors.push("solver.grid_size must be at least 5".into());
        }
        if !(s.grid_min.x < s.grid_max.x && s.grid_min.y < s.grid_max.y) {
            errors.push("solver: grid_min must lie below grid_max".into());
        }
        if !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0) {
            errors.push("solver.cfl_safety must lie in (0, 1]".into());
        }
        if !(s.snap_fraction >= 0.0 && s.snap_fraction < 1.0) {
            errors.push("solver.snap_fraction must lie in [0, 1)".into());
        }
        if s.num_snapshots < 2 {
            errors.push("solver.num_snapshots must be at least 2".into());
        }

        if let Some(shape) = self.domain_shape() {
            let domain = EllipseDomain::new(shape.clone());
            if p.spine_radius > 0.0 {
                let outside = (0..64).any(|k| {
                    let a = std::f64::consts::TAU * k as f64 / 64.0;
                    !domain.contains(p.spine_center + p.spine_radius * Vec2::from_angle(a))
                });
                if outside || !domain.contains(p.spine_center) {
                    errors.push("material.prior: spine disk must lie inside the domain".into());
                }
            }
            let bbox_ok = (0..64).all(|k| {
                let q = shape.boundary_point(std::f64::consts::TAU * k as f64 / 64.0);
                q.x > s.grid_min.x && q.x < s.grid_max.x && q.y > s.grid_min.y && q.y < s.grid_max.y
            });
            if !bbox_ok {
                errors.push("solver: the domain must lie strictly inside the grid".into());
            }
        }

        let mut names = BTreeSet::new();
        if self.boundary_cases.is_empty() {
            errors.push("boundary_cases: at least one case is required".into());
        }
        for (i, case) in self.boundary_cases.iter().enumerate() {
            let ctx = format!("boundary_cases[{i}]");
            let valid = !case.name.is_empty()
                && case
                    .name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '-' | '.'));
            if !valid {
                errors.push(format!("{ctx}: name must be non-empty and use only [a-z0-9_.-]"));
            }
            if !names.insert(case.name.as_str()) {
                errors.push(format!("{ctx}: duplicate name {:?}", case.name));
            }
            case.boundary.validate(&mut errors, &ctx);
        }

        if let Some(g) = &geometry {
            if g.num_detectors >= 2 && g.detector_min < g.detector_max {
                if let Ok(f) = self.filter_spec() {
                    if let Err(e) = f.validate(g.num_detectors) {
                        errors.push(format!("filter: {e}"));
                    }
                }
            }
        }
        if let Err(e) = self.image.validate() {
            errors.push(format!("image: {e}"));
        }

        // the grid is only classified when everything it depends on is sane
        if errors.is_empty() {
            match self.grid() {
                Ok(grid) => {
                    for (i, case) in self.boundary_cases.iter().enumerate() {
                        if let BoundarySpec::Sparse { num_nodes } = case.boundary {
                            if num_nodes > grid.boundary.len() {
                                errors.push(format!(
                                    "boundary_cases[{i}]: num_nodes {num_nodes} exceeds the {} boundary nodes",
                                    grid.boundary.len()
                                ));
                            }
                        }
                    }
                }
                Err(e) => errors.push(format!("solver: {e}")),
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THORAX: &str = include_str!("../configs/thorax.json");

    #[test]
    fn default_config_is_valid() {
        let cfg = PipelineConfig::from_json(THORAX).unwrap();
        cfg.validate().unwrap();
        let g = cfg.geometry().unwrap();
        assert_eq!((g.num_angles, g.num_detectors), (660, 451));
        // one breathing period
        let period = std::f64::consts::TAU / 0.04;
        assert!((g.time_map.step * 660.0 - period).abs() < 1e-9);
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.lame(), (3460.0, 1480.0));
        assert_eq!(cfg.boundary_cases.len(), 5);
        assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn errors_are_collected() {
        let mut cfg = PipelineConfig::from_json(THORAX).unwrap();
        cfg.version = 2;
        cfg.solver.cfl_safety = 1.5;
        cfg.material.prior.spine_center = Vec2::new(0.9, 0.9);
        cfg.boundary_cases[1].name = cfg.boundary_cases[0].name.clone();
        match cfg.validate() {
            Err(Error::Config(msgs)) => {
                assert_eq!(msgs.len(), 4, "{msgs:?}");
                assert!(msgs.iter().any(|m| m.contains("spine disk")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_and_bad_modes_are_rejected() {
        let text = THORAX.replacen("\"seed\"", "\"sed\"", 1);
        assert!(matches!(PipelineConfig::from_json(&text), Err(Error::Config(_))));
        let mut cfg = PipelineConfig::from_json(THORAX).unwrap();
        cfg.motion = AffineMotion::Identity;
        assert!(cfg.validate().is_err());
        cfg.scan.time_map = TimeMapConfig::Linear { start: 0.0, step: 0.1 };
        cfg.validate().unwrap();
    }

    #[test]
    fn sparse_count_is_checked_against_the_grid() {
        let mut cfg = PipelineConfig::from_json(THORAX).unwrap();
        cfg.boundary_cases[0].boundary = BoundarySpec::Sparse { num_nodes: 1_000_000 };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("exceeds"), "{err}");
    }

    #[test]
    fn prior_values() {
        let cfg = PipelineConfig::from_json(THORAX).unwrap();
        let p = cfg.material.prior;
        assert_eq!(p.density(p.spine_center), 1.85e3);
        // inside the right lung
        assert_eq!(p.density(Vec2::new(0.38, 0.05)), 1.05e3);
    }
}
