//! Boundary observations of the motion and the deformation `Φ_t x` seen by
//! the reconstructor.

use crate::elastic::{BoundarySource, DisplacementHistory, Domain, Grid2D, NodeKind};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::phantom::{AffineMotion, FrozenMotion};
use crate::rng::NormalRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;

/// Prescribed boundary displacement `ψ` at a set of observation times.
///
/// Between observation times the data are interpolated linearly; before
/// the first and after the last they are held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub times: Vec<f64>,
    /// Boundary node positions, in `Grid2D::boundary` order.
    pub positions: Vec<Vec2>,
    /// `times.len() × positions.len()`, time-major.
    pub values: Vec<Vec2>,
}

impl BoundaryData {
    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn num_times(&self) -> usize {
        self.times.len()
    }

    pub fn at(&self, k: usize) -> &[Vec2] {
        let m = self.num_nodes();
        &self.values[k * m..(k + 1) * m]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [Vec2] {
        let m = self.num_nodes();
        &mut self.values[k * m..(k + 1) * m]
    }

    /// `ψ(t, ·)` at every node.
    pub fn interpolate(&self, t: f64, out: &mut [Vec2]) {
        let (k, w) = bracket(&self.times, t);
        let lo = self.at(k);
        if w == 0.0 {
            out.copy_from_slice(lo);
        } else {
            let hi = self.at(k + 1);
            for ((o, a), b) in out.iter_mut().zip(lo).zip(hi) {
                *o = lerp(*a, *b, w);
            }
        }
    }

    fn check(&self) -> Result<()> {
        if self.times.is_empty() || self.values.len() != self.times.len() * self.positions.len() {
            return Err(Error::Mismatch("boundary data has inconsistent sizes".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "boundary data times must be strictly ascending".into(),
            ));
        }
        Ok(())
    }
}

impl BoundarySource for BoundaryData {
    fn fill(&self, t: f64, positions: &[Vec2], out: &mut [Vec2]) {
        assert_eq!(
            positions.len(),
            self.num_nodes(),
            "boundary data belongs to another grid"
        );
        self.interpolate(t, out);
    }
}

/// Index `k` and weight `w` with `t ≈ (1 − w)·times[k] + w·times[k+1]`,
/// clamped to the sampled range (`w = 0` at and beyond the ends).
pub fn bracket(times: &[f64], t: f64) -> (usize, f64) {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return (0, 0.0);
    }
    if t >= times[n - 1] {
        return (n - 1, 0.0);
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    (k, w)
}

fn lerp(a: Vec2, b: Vec2, w: f64) -> Vec2 {
    if w == 0.0 {
        a
    } else {
        (1.0 - w) * a + w * b
    }
}

/// `ψ(t, x) = Φ(t, x) − x` at every boundary node and time.
pub fn sample_boundary(motion: &AffineMotion, grid: &Grid2D, times: &[f64]) -> Result<BoundaryData> {
    let positions = grid.boundary_positions();
    let mut values = Vec::with_capacity(times.len() * positions.len());
    for &t in times {
        let phi = motion.at(t);
        values.extend(positions.iter().map(|&x| phi.apply(x) - x));
    }
    let bd = BoundaryData {
        times: times.to_vec(),
        positions,
        values,
    };
    bd.check()?;
    Ok(bd)
}

/// Temporal structure of the added noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCorrelation {
    /// A fresh draw per node, time and component.
    #[default]
    Independent,
    /// One draw per node and component, shared by all times.
    TimeConstant,
}

/// How the boundary observations are degraded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Exact,
    Noisy {
        noise_std: f64,
        #[serde(default)]
        correlation: NoiseCorrelation,
        /// Defaults to a seed derived from the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Sparse {
        num_nodes: usize,
    },
}

impl BoundarySpec {
    pub(crate) fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        match *self {
            BoundarySpec::Exact => {}
            BoundarySpec::Noisy { noise_std, .. } => {
                if !(noise_std >= 0.0 && noise_std.is_finite()) {
                    errors.push(format!("{ctx}: noise_std must be finite and non-negative"));
                }
            }
            BoundarySpec::Sparse { num_nodes } => {
                if num_nodes < 3 {
                    errors.push(format!("{ctx}: num_nodes must be at least 3"));
                }
            }
        }
    }

    /// Degrade exact boundary data according to this spec.
    pub fn apply(&self, exact: &BoundaryData, domain: &dyn Domain, default_seed: u64) -> Result<BoundaryData> {
        match *self {
            BoundarySpec::Exact => Ok(exact.clone()),
            BoundarySpec::Noisy {
                noise_std,
                correlation,
                seed,
            } => perturb(exact, noise_std, correlation, seed.unwrap_or(default_seed)),
            BoundarySpec::Sparse { num_nodes } => sparsify(exact, num_nodes, domain),
        }
    }
}

/// Add `N(0, noise_std²)` draws to every displacement component.
///
/// Draw order is time-major, then node, then component (x before y).
pub fn perturb(bd: &BoundaryData, noise_std: f64, correlation: NoiseCorrelation, seed: u64) -> Result<BoundaryData> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidArgument(
            "noise_std must be finite and non-negative".into(),
        ));
    }
    let mut out = bd.clone();
    if noise_std == 0.0 {
        return Ok(out);
    }
    let mut rng = NormalRng::new(seed);
    match correlation {
        NoiseCorrelation::Independent => {
            for v in &mut out.values {
                v.x += rng.normal(noise_std);
                v.y += rng.normal(noise_std);
            }
        }
        NoiseCorrelation::TimeConstant => {
            let noise: Vec<Vec2> = (0..bd.num_nodes())
                .map(|_| {
                    let x = rng.normal(noise_std);
                    Vec2::new(x, rng.normal(noise_std))
                })
                .collect();
            for k in 0..bd.num_times() {
                for (v, n) in out.at_mut(k).iter_mut().zip(&noise) {
                    *v = *v + *n;
                }
            }
        }
    }
    Ok(out)
}

/// Boundary nodes walked once around the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoop {
    /// Node ordinals (into `BoundaryData::positions`) in walking order.
    pub order: Vec<usize>,
    /// Arc length of the closed polygon at each node of `order`.
    pub arc: Vec<f64>,
    pub length: f64,
}

impl BoundaryLoop {
    pub fn new(positions: &[Vec2], domain: &dyn Domain) -> Self {
        let mut order: Vec<usize> = (0..positions.len()).collect();
        let angles: Vec<f64> = positions.iter().map(|&p| domain.boundary_angle(p)).collect();
        order.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]).then(a.cmp(&b)));
        let mut arc = Vec::with_capacity(order.len());
        let mut s = 0.0;
        for (k, &i) in order.iter().enumerate() {
            if k > 0 {
                s += (positions[i] - positions[order[k - 1]]).norm();
            }
            arc.push(s);
        }
        let closing = match (order.first(), order.last()) {
            (Some(&a), Some(&b)) => (positions[a] - positions[b]).norm(),
            _ => 0.0,
        };
        BoundaryLoop {
            order,
            arc,
            length: s + closing,
        }
    }

    /// Positions in `order` nearest in arc length to `count` equally spaced targets.
    pub fn equally_spaced(&self, count: usize) -> Vec<usize> {
        let m = self.order.len();
        let mut picked: Vec<usize> = Vec::with_capacity(count);
        let mut k = 0;
        for j in 0..count {
            let target = self.length * j as f64 / count as f64;
            while k + 1 < m && self.arc[k + 1] <= target {
                k += 1;
            }
            let dist = |q: usize| {
                let d = (self.arc[q % m] + if q >= m { self.length } else { 0.0 }) - target;
                d.abs()
            };
            let best = if dist(k + 1) < dist(k) { (k + 1) % m } else { k };
            if picked.last() != Some(&best) && !(best == 0 && j > 0 && picked.first() == Some(&0)) {
                picked.push(best);
            }
        }
        picked
    }
}

/// Keep `num_nodes` boundary nodes equally spaced in arc length and replace
/// every other node by linear interpolation in arc length between its two
/// enclosing kept nodes.
pub fn sparsify(bd: &BoundaryData, num_nodes: usize, domain: &dyn Domain) -> Result<BoundaryData> {
    let m = bd.num_nodes();
    if num_nodes < 3 {
        return Err(Error::InvalidArgument("sparse boundary needs at least 3 nodes".into()));
    }
    if num_nodes > m {
        return Err(Error::InvalidArgument(format!(
            "sparse boundary asks for {num_nodes} nodes but the grid has {m}"
        )));
    }
    if num_nodes == m {
        return Ok(bd.clone());
    }
    let lp = BoundaryLoop::new(&bd.positions, domain);
    let kept = lp.equally_spaced(num_nodes);
    if kept.len() < 3 {
        return Err(Error::GridConfiguration(
            "too few distinct sparse boundary nodes".into(),
        ));
    }

    // (left kept, right kept, weight of right) per walking position
    let mut weights = vec![(0usize, 0usize, 0.0f64); m];
    for (a, &start) in kept.iter().enumerate() {
        let end = kept[(a + 1) % kept.len()];
        let span = if end > start {
            lp.arc[end] - lp.arc[start]
        } else {
            lp.length - lp.arc[start] + lp.arc[end]
        };
        let mut q = start;
        loop {
            let along = if q >= start {
                lp.arc[q] - lp.arc[start]
            } else {
                lp.length - lp.arc[start] + lp.arc[q]
            };
            weights[q] = (start, end, if q == start { 0.0 } else { along / span });
            q = (q + 1) % m;
            if q == end {
                break;
            }
        }
    }

    let mut out = bd.clone();
    for k in 0..bd.num_times() {
        let src = bd.at(k);
        let dst = out.at_mut(k);
        for (q, &(a, b, w)) in weights.iter().enumerate() {
            let (ia, ib) = (lp.order[a], lp.order[b]);
            dst[lp.order[q]] = lerp(src[ia], src[ib], w);
        }
    }
    Ok(out)
}

/// Where a point falls in the tensor grid, with its bilinear weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Flat index of the lower-left node.
    pub base: usize,
    pub wx: f64,
    pub wy: f64,
}

fn locate(coords: &[f64], v: f64) -> (usize, f64) {
    let n = coords.len();
    if v <= coords[0] {
        return (0, 0.0);
    }
    if v >= coords[n - 1] {
        return (n - 2, 1.0);
    }
    let i = coords.partition_point(|&c| c <= v) - 1;
    (i, (v - coords[i]) / (coords[i + 1] - coords[i]))
}

/// Displacement history turned into a total map `x ↦ x + u(t, x)`.
#[derive(Clone)]
pub struct FieldMotion {
    pub x_coords: Vec<f64>,
    pub y_coords: Vec<f64>,
    pub times: Vec<f64>,
    /// Per snapshot, one displacement per tensor node; exterior nodes carry
    /// the value of the nearest active node.
    pub values: Vec<Vec<Vec2>>,
    domain: Arc<dyn Domain>,
}

impl std::fmt::Debug for FieldMotion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldMotion")
            .field("nx", &self.x_coords.len())
            .field("ny", &self.y_coords.len())
            .field("times", &self.times)
            .finish_non_exhaustive()
    }
}

impl FieldMotion {
    pub fn new(history: &DisplacementHistory, domain: Arc<dyn Domain>) -> Result<Self> {
        let (nx, ny) = (history.nx(), history.ny());
        if nx < 2 || ny < 2 || history.kinds.len() != nx * ny {
            return Err(Error::Mismatch(
                "displacement history has inconsistent grid sizes".into(),
            ));
        }
        if history.snapshots.is_empty() {
            return Err(Error::InvalidArgument("displacement history has no snapshots".into()));
        }
        let times: Vec<f64> = history.snapshots.iter().map(|s| s.time).collect();
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "snapshot times must be strictly ascending".into(),
            ));
        }
        let source = nearest_active(&history.kinds, nx, ny)?;
        let values = history
            .snapshots
            .iter()
            .map(|s| {
                if s.u1.len() != nx * ny || s.u2.len() != nx * ny {
                    return Err(Error::Mismatch("snapshot size does not match the grid".into()));
                }
                Ok(source.iter().map(|&q| Vec2::new(s.u1[q], s.u2[q])).collect())
            })
            .collect::<Result<Vec<Vec<Vec2>>>>()?;
        Ok(FieldMotion {
            x_coords: history.x_coords.clone(),
            y_coords: history.y_coords.clone(),
            times,
            values,
            domain,
        })
    }

    /// Cell of the closest point of the domain to `x`.
    pub fn cell(&self, x: Vec2) -> Cell {
        let y = if self.domain.contains(x) {
            x
        } else {
            self.domain.project(x)
        };
        let (i, wx) = locate(&self.x_coords, y.x);
        let (j, wy) = locate(&self.y_coords, y.y);
        Cell {
            base: j * self.x_coords.len() + i,
            wx,
            wy,
        }
    }

    fn sample(&self, k: usize, c: Cell) -> Vec2 {
        let v = &self.values[k];
        let nx = self.x_coords.len();
        let (a, b, cc, d) = (v[c.base], v[c.base + 1], v[c.base + nx], v[c.base + nx + 1]);
        (1.0 - c.wy) * ((1.0 - c.wx) * a + c.wx * b) + c.wy * ((1.0 - c.wx) * cc + c.wx * d)
    }

    pub fn displacement(&self, t: f64, x: Vec2) -> Vec2 {
        let c = self.cell(x);
        let (k, w) = bracket(&self.times, t);
        let lo = self.sample(k, c);
        if w == 0.0 {
            lo
        } else {
            lerp(lo, self.sample(k + 1, c), w)
        }
    }
}

/// For every node, the active node whose value it takes (itself if active).
fn nearest_active(kinds: &[NodeKind], nx: usize, ny: usize) -> Result<Vec<usize>> {
    let mut source = vec![usize::MAX; kinds.len()];
    let mut queue = VecDeque::new();
    for (p, k) in kinds.iter().enumerate() {
        if k.is_active() {
            source[p] = p;
            queue.push_back(p);
        }
    }
    if queue.is_empty() {
        return Err(Error::GridConfiguration("grid has no active nodes".into()));
    }
    while let Some(p) = queue.pop_front() {
        let (i, j) = (p % nx, p / nx);
        let mut visit = |q: usize| {
            if source[q] == usize::MAX {
                source[q] = source[p];
                queue.push_back(q);
            }
        };
        if i + 1 < nx {
            visit(p + 1);
        }
        if i > 0 {
            visit(p - 1);
        }
        if j + 1 < ny {
            visit(p + nx);
        }
        if j > 0 {
            visit(p - nx);
        }
    }
    Ok(source)
}

/// The deformation `Φ_t x` used by the reconstructor.
#[derive(Debug, Clone)]
pub enum DeformationProvider {
    Analytic(AffineMotion),
    FromField(FieldMotion),
}

impl DeformationProvider {
    pub fn identity() -> Self {
        DeformationProvider::Analytic(AffineMotion::Identity)
    }

    pub fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        match self {
            DeformationProvider::Analytic(m) => m.phi(t, x),
            DeformationProvider::FromField(f) => x + f.displacement(t, x),
        }
    }

    /// Evaluation tables for a fixed set of points and view times.
    pub fn prepare(&self, points: &[Vec2], view_times: &[f64]) -> PreparedMotion {
        match self {
            DeformationProvider::Analytic(m) => PreparedMotion::Analytic(view_times.iter().map(|&t| m.at(t)).collect()),
            DeformationProvider::FromField(f) => {
                let cells: Vec<Cell> = points.par_iter().map(|&x| f.cell(x)).collect();
                let samples = (0..f.times.len())
                    .map(|k| cells.par_iter().map(|&c| f.sample(k, c)).collect())
                    .collect();
                let brackets = view_times.iter().map(|&t| bracket(&f.times, t)).collect();
                PreparedMotion::Field { samples, brackets }
            }
        }
    }
}

/// `Φ_{t_n}` at prepared points; agrees bitwise with `DeformationProvider::eval`.
#[derive(Debug, Clone)]
pub enum PreparedMotion {
    Analytic(Vec<FrozenMotion>),
    Field {
        /// Per snapshot, the displacement at every prepared point.
        samples: Vec<Vec<Vec2>>,
        brackets: Vec<(usize, f64)>,
    },
}

impl PreparedMotion {
    /// Position at view `n` of prepared point `i` (located at `x`).
    #[inline]
    pub fn eval(&self, n: usize, i: usize, x: Vec2) -> Vec2 {
        match self {
            PreparedMotion::Analytic(m) => m[n].apply(x),
            PreparedMotion::Field { samples, brackets } => {
                let (k, w) = brackets[n];
                let lo = samples[k][i];
                x + if w == 0.0 { lo } else { lerp(lo, samples[k + 1][i], w) }
            }
        }
    }
}
