//! Explicit second-order scheme for the 2D Navier-Cauchy equation
//!
//! ```text
//! ρ̂ ∂²u_k/∂t² = v̂_k + μ Δu_k + (λ + μ) ∂_k (∂_1 u_1 + ∂_2 u_2),   k = 1, 2
//! ```
//!
//! with central differences in time and the nine-node stencil in space.
//! Dirichlet data are imposed on boundary nodes every step; ghost nodes are
//! refreshed by linear extrapolation after the boundary update.

use super::grid::{Grid2D, NodeKind};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

pub type ForcingFn = dyn Fn(f64, Vec2) -> Vec2 + Send + Sync;

/// Lamé coefficients, reference density per node and volume forcing.
#[derive(Clone)]
pub struct MaterialParams {
    /// Pa
    pub lambda: f64,
    /// Pa
    pub mu: f64,
    /// kg/m³, one value per grid node (exterior entries are ignored).
    pub rho0: Vec<f64>,
    /// `v̂(t, x)`; `None` means zero forcing.
    pub forcing: Option<Arc<ForcingFn>>,
}

impl fmt::Debug for MaterialParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaterialParams")
            .field("lambda", &self.lambda)
            .field("mu", &self.mu)
            .field("rho0_len", &self.rho0.len())
            .field("forcing", &self.forcing.is_some())
            .finish()
    }
}

impl MaterialParams {
    pub fn uniform(lambda: f64, mu: f64, rho: f64, nodes: usize) -> Self {
        MaterialParams {
            lambda,
            mu,
            rho0: vec![rho; nodes],
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, f: impl Fn(f64, Vec2) -> Vec2 + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    fn check(&self, grid: &Grid2D) -> Result<()> {
        if self.rho0.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "rho0 has {} entries for {} nodes",
                self.rho0.len(),
                grid.len()
            )));
        }
        if !(self.mu > 0.0 && self.lambda + 2.0 * self.mu > 0.0) {
            return Err(Error::InvalidArgument("need mu > 0 and lambda + 2 mu > 0".into()));
        }
        Ok(())
    }

    /// Smallest density over the active nodes.
    pub fn min_density(&self, grid: &Grid2D) -> Result<f64> {
        let mut min = f64::INFINITY;
        for (p, kind) in grid.kinds.iter().enumerate() {
            if !kind.is_active() {
                continue;
            }
            let r = self.rho0[p];
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidArgument(format!("non-positive density {r} at node {p}")));
            }
            min = min.min(r);
        }
        Ok(min)
    }
}

/// Largest stable time step `safety / (ν (1/Δx + 1/Δy))` with
/// `ν = sqrt((λ + 2μ) / min ρ⁰)` and the smallest grid-line spacings.
pub fn cfl_dt(params: &MaterialParams, grid: &Grid2D, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidArgument("CFL safety must lie in (0, 1]".into()));
    }
    params.check(grid)?;
    let rho = params.min_density(grid)?;
    let (dx, dy) = grid.min_spacing();
    Ok(cfl_bound(params.lambda, params.mu, rho, dx, dy, safety))
}

/// The bare CFL formula.
pub fn cfl_bound(lambda: f64, mu: f64, rho: f64, dx: f64, dy: f64, safety: f64) -> f64 {
    let nu = ((lambda + 2.0 * mu) / rho).sqrt();
    safety / (nu * (1.0 / dx + 1.0 / dy))
}

/// One time level of the displacement, both components over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field {
            u1: vec![0.0; n],
            u2: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(Vec2) -> Vec2) -> Self {
        let mut out = Field::zeros(grid.len());
        for p in 0..grid.len() {
            if grid.kinds[p].is_active() {
                out.set(p, f(grid.positions[p]));
            }
        }
        out
    }

    pub fn get(&self, p: usize) -> Vec2 {
        Vec2::new(self.u1[p], self.u2[p])
    }

    pub fn set(&mut self, p: usize, v: Vec2) {
        self.u1[p] = v.x;
        self.u2[p] = v.y;
    }
}

/// Initial displacement `ϑ⁰` and velocity `ϑ¹` per node.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub theta0: Vec<Vec2>,
    pub theta1: Vec<Vec2>,
}

impl InitialData {
    pub fn zeros(n: usize) -> Self {
        InitialData {
            theta0: vec![Vec2::ZERO; n],
            theta1: vec![Vec2::ZERO; n],
        }
    }
}

/// Prescribed displacement on the boundary nodes.
pub trait BoundarySource: Sync {
    /// Write `ψ(t, ·)` for every boundary node (`positions` in `Grid2D::boundary` order).
    fn fill(&self, t: f64, positions: &[Vec2], out: &mut [Vec2]);
}

impl<F> BoundarySource for F
where
    F: Fn(f64, Vec2) -> Vec2 + Sync,
{
    fn fill(&self, t: f64, positions: &[Vec2], out: &mut [Vec2]) {
        for (o, &p) in out.iter_mut().zip(positions) {
            *o = self(t, p);
        }
    }
}

/// Write ghost values of `field` by affine extrapolation from `node0`,
/// `node1` and `node2`. For the axis-aligned layout this is the linear
/// extrapolation from `node0` through the midpoint of `node1` and `node2`.
pub fn fill_ghost(grid: &Grid2D, field: &mut Field) -> Result<()> {
    for g in &grid.ghosts {
        let [_, w1, w2] = g.weights(grid).ok_or(Error::DegenerateGhost { node: g.ghost })?;
        let h0 = field.get(g.node0);
        let v = h0 + w1 * (field.get(g.node1) - h0) + w2 * (field.get(g.node2) - h0);
        field.set(g.ghost, v);
    }
    Ok(())
}

/// Interior nodes per parallel work item.
const CHUNK: usize = 2048;

/// Update weights shared by all interior nodes with the same local
/// spacing and density.
#[derive(Debug, Clone)]
struct Stencil {
    /// weights of u1 at centre, E, W, N, S in the u1 update
    w1: [f64; 5],
    /// weights of u2 at centre, E, W, N, S in the u2 update
    w2: [f64; 5],
    /// mixed-derivative weight, shared by both components
    cross: f64,
    /// Δt²/ρ⁰
    force: f64,
}

/// Explicit time stepper bound to a grid, material and time step.
pub struct ElasticSolver<'a> {
    grid: &'a Grid2D,
    params: &'a MaterialParams,
    dt: f64,
    stencils: Vec<Stencil>,
    /// (centre node, stencil class) per interior node
    nodes: Vec<(u32, u32)>,
    boundary_positions: Vec<Vec2>,
}

impl<'a> ElasticSolver<'a> {
    pub fn new(grid: &'a Grid2D, params: &'a MaterialParams, dt: f64) -> Result<Self> {
        params.check(grid)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument("time step must be positive".into()));
        }
        let lam = params.lambda;
        let mu = params.mu;
        if grid.len() > u32::MAX as usize {
            return Err(Error::InvalidArgument("grid too large".into()));
        }
        let mut stencils = Vec::new();
        let mut nodes = Vec::with_capacity(grid.interior.len());
        let mut classes: HashMap<[u64; 12], u32> = HashMap::new();
        for &p in &grid.interior {
            let nb = |di, dj| {
                grid.neighbor(p, di, dj)
                    .ok_or_else(|| Error::GridConfiguration(format!("interior node {p} on grid edge")))
            };
            let idx = [
                p,
                nb(1, 0)?,
                nb(-1, 0)?,
                nb(0, 1)?,
                nb(0, -1)?,
                nb(1, 1)?,
                nb(-1, 1)?,
                nb(1, -1)?,
                nb(-1, -1)?,
            ];
            let pos = |q: usize| grid.positions[q];
            let dx_p = pos(idx[1]).x - pos(p).x;
            let dx_m = pos(p).x - pos(idx[2]).x;
            let dy_p = pos(idx[3]).y - pos(p).y;
            let dy_m = pos(p).y - pos(idx[4]).y;
            let rho = params.rho0[p];
            if !(rho > 0.0) {
                return Err(Error::InvalidArgument(format!("non-positive density at node {p}")));
            }
            let c = dt * dt / rho;
            let sx2 = dx_p * dx_p + dx_m * dx_m;
            let sy2 = dy_p * dy_p + dy_m * dy_m;
            let rx = (dx_p - dx_m) / (dx_p + dx_m);
            let ry = (dy_p - dy_m) / (dy_p + dy_m);
            let stiff = lam + 2.0 * mu;

            let w1 = [
                2.0 * (1.0 - 2.0 * c * (mu / sy2 + stiff / sx2)),
                c * 2.0 * stiff / sx2 * (1.0 - rx),
                c * 2.0 * stiff / sx2 * (1.0 + rx),
                c * 2.0 * mu / sy2 * (1.0 - ry),
                c * 2.0 * mu / sy2 * (1.0 + ry),
            ];
            let w2 = [
                2.0 * (1.0 - 2.0 * c * (mu / sx2 + stiff / sy2)),
                c * 2.0 * mu / sx2 * (1.0 - rx),
                c * 2.0 * mu / sx2 * (1.0 + rx),
                c * 2.0 * stiff / sy2 * (1.0 - ry),
                c * 2.0 * stiff / sy2 * (1.0 + ry),
            ];
            let cross = c * (lam + mu) / ((dx_p + dx_m) * (dy_p + dy_m));
            let stencil = Stencil {
                w1,
                w2,
                cross,
                force: c,
            };
            let mut key = [0u64; 12];
            for (k, v) in w1.iter().chain(&w2).chain([&cross, &c]).enumerate() {
                key[k] = v.to_bits();
            }
            let class = *classes.entry(key).or_insert_with(|| {
                stencils.push(stencil);
                (stencils.len() - 1) as u32
            });
            nodes.push((p as u32, class));
        }
        Ok(ElasticSolver {
            grid,
            params,
            dt,
            stencils,
            nodes,
            boundary_positions: grid.boundary_positions(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Replace the interior values of `level` (holding `u^{n-1}`) by
    /// `F(cur) − u^{n-1}`; returns the largest squared interior value.
    fn interior_update(&self, level: &mut Field, cur: &Field, n: usize) -> Result<f64> {
        let t = self.dt * n as f64;
        let forcing = self.params.forcing.as_deref();
        let positions = &self.grid.positions;
        let row = self.grid.nx();
        let (a, b) = (&cur.u1[..], &cur.u2[..]);

        // disjoint index ranges of the level, one per chunk of interior nodes
        let mut jobs = Vec::with_capacity(self.nodes.len().div_ceil(CHUNK));
        let (mut rest1, mut rest2) = (&mut level.u1[..], &mut level.u2[..]);
        let mut offset = 0;
        for (k, nodes) in self.nodes.chunks(CHUNK).enumerate() {
            let end = self
                .nodes
                .get((k + 1) * CHUNK)
                .map_or(offset + rest1.len(), |&(p, _)| p as usize);
            let (head1, tail1) = std::mem::take(&mut rest1).split_at_mut(end - offset);
            let (head2, tail2) = std::mem::take(&mut rest2).split_at_mut(end - offset);
            jobs.push((offset, nodes, head1, head2));
            rest1 = tail1;
            rest2 = tail2;
            offset = end;
        }

        let results: Vec<(f64, Option<usize>)> = jobs
            .into_par_iter()
            .map(|(offset, nodes, out1, out2)| {
                let mut max2 = 0.0f64;
                let mut bad = None;
                for &(p, class) in nodes {
                    let p = p as usize;
                    let s = &self.stencils[class as usize];
                    let (e, w, nn, ss) = (p + 1, p - 1, p + row, p - row);
                    let (ne, nw, se, sw) = (nn + 1, nn - 1, ss + 1, ss - 1);
                    let mut u1 = s.w1[0] * a[p]
                        + s.w1[1] * a[e]
                        + s.w1[2] * a[w]
                        + s.w1[3] * a[nn]
                        + s.w1[4] * a[ss]
                        + s.cross * (b[ne] - b[nw] - b[se] + b[sw]);
                    let mut u2 = s.w2[0] * b[p]
                        + s.w2[1] * b[e]
                        + s.w2[2] * b[w]
                        + s.w2[3] * b[nn]
                        + s.w2[4] * b[ss]
                        + s.cross * (a[ne] - a[nw] - a[se] + a[sw]);
                    let q = p - offset;
                    u1 -= out1[q];
                    u2 -= out2[q];
                    if let Some(f) = forcing {
                        let v = f(t, positions[p]);
                        u1 += s.force * v.x;
                        u2 += s.force * v.y;
                    }
                    out1[q] = u1;
                    out2[q] = u2;
                    let m = u1 * u1 + u2 * u2;
                    if m > max2 {
                        max2 = m;
                    } else if !m.is_finite() && bad.is_none() {
                        bad = Some(p);
                    }
                }
                (max2, bad)
            })
            .collect();

        let mut max2 = 0.0f64;
        for (m, bad) in results {
            if let Some(node) = bad {
                return Err(Error::Instability { node, step: n });
            }
            max2 = max2.max(m);
        }
        if !max2.is_finite() {
            let node = self
                .grid
                .interior
                .iter()
                .copied()
                .find(|&p| !level.get(p).is_finite())
                .unwrap_or(0);
            return Err(Error::Instability { node, step: n });
        }
        Ok(max2)
    }

    /// Write `ψ(t)` into the boundary nodes and refresh the ghosts.
    pub fn apply_boundary(&self, field: &mut Field, boundary: &dyn BoundarySource, t: f64) -> Result<()> {
        let mut psi = vec![Vec2::ZERO; self.grid.boundary.len()];
        boundary.fill(t, &self.boundary_positions, &mut psi);
        for (&b, v) in self.grid.boundary.iter().zip(&psi) {
            field.set(b, *v);
        }
        fill_ghost(self.grid, field)
    }

    /// Level 0 from `ϑ⁰`, with boundary data at `t = 0`.
    pub fn initial_level(&self, initial: &InitialData, boundary: &dyn BoundarySource) -> Result<Field> {
        let mut u0 = Field::zeros(self.grid.len());
        for &p in &self.grid.interior {
            u0.set(p, initial.theta0[p]);
        }
        self.apply_boundary(&mut u0, boundary, 0.0)?;
        Ok(u0)
    }

    /// `u¹` from the `n = 0` update with `u⁻¹ = u¹ − 2Δt ϑ¹` substituted.
    pub fn first_step(&self, u0: &Field, initial: &InitialData, boundary: &dyn BoundarySource) -> Result<Field> {
        let mut u1 = Field::zeros(self.grid.len());
        self.interior_update(&mut u1, u0, 0)?;
        for &p in &self.grid.interior {
            u1.set(p, 0.5 * u1.get(p) + self.dt * initial.theta1[p]);
        }
        self.apply_boundary(&mut u1, boundary, self.dt)?;
        Ok(u1)
    }

    /// `u^{n+1}` from `u^{n-1}` and `u^n`.
    pub fn step(&self, prev: &Field, cur: &Field, n: usize, boundary: &dyn BoundarySource) -> Result<Field> {
        let mut next = prev.clone();
        self.advance(&mut next, cur, n, boundary)?;
        Ok(next)
    }

    /// Overwrite `level` (holding `u^{n-1}`) with `u^{n+1}`; returns the
    /// largest squared interior displacement of the new level.
    pub fn advance(&self, level: &mut Field, cur: &Field, n: usize, boundary: &dyn BoundarySource) -> Result<f64> {
        let max2 = self.interior_update(level, cur, n)?;
        self.apply_boundary(level, boundary, self.dt * (n + 1) as f64)?;
        Ok(max2)
    }
}

/// Stored time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

/// Displacement history on a classified grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementHistory {
    pub x_coords: Vec<f64>,
    pub y_coords: Vec<f64>,
    pub kinds: Vec<NodeKind>,
    pub snapshots: Vec<Snapshot>,
}

impl DisplacementHistory {
    pub fn nx(&self) -> usize {
        self.x_coords.len()
    }

    pub fn ny(&self) -> usize {
        self.y_coords.len()
    }
}

/// Run summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub steps: usize,
    pub dt: f64,
    /// Largest |u| over all interior nodes and all steps.
    pub max_displacement: f64,
}

/// Number of steps and the step size actually used for `[0, t_end]`.
pub fn time_steps(t_end: f64, dt_max: f64) -> (usize, f64) {
    let steps = ((t_end / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (steps, t_end / steps as f64)
}

/// Integrate from `0` to `t_end` with a step no larger than `dt_max`,
/// storing the level nearest to every requested output time.
pub fn solve(
    grid: &Grid2D,
    params: &MaterialParams,
    initial: &InitialData,
    boundary: &dyn BoundarySource,
    t_end: f64,
    dt_max: f64,
    output_times: &[f64],
) -> Result<(DisplacementHistory, SolveStats)> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument("t_end must be positive".into()));
    }
    if initial.theta0.len() != grid.len() || initial.theta1.len() != grid.len() {
        return Err(Error::Mismatch("initial data does not match the grid".into()));
    }
    let (steps, dt) = time_steps(t_end, dt_max);
    let solver = ElasticSolver::new(grid, params, dt)?;

    // step index -> output ordinals
    let mut wanted: Vec<(usize, usize)> = output_times
        .iter()
        .enumerate()
        .map(|(k, &t)| (((t / dt).round().max(0.0) as usize).min(steps), k))
        .collect();
    wanted.sort();
    let mut snapshots: Vec<Option<Snapshot>> = vec![None; output_times.len()];
    let mut cursor = 0;
    let mut record = |level: usize, f: &Field, snapshots: &mut Vec<Option<Snapshot>>| {
        while cursor < wanted.len() && wanted[cursor].0 == level {
            snapshots[wanted[cursor].1] = Some(Snapshot {
                time: dt * level as f64,
                u1: f.u1.clone(),
                u2: f.u2.clone(),
            });
            cursor += 1;
        }
    };
    let max_interior = |f: &Field| {
        grid.interior
            .iter()
            .map(|&p| f.u1[p] * f.u1[p] + f.u2[p] * f.u2[p])
            .fold(0.0f64, f64::max)
    };

    let mut prev = solver.initial_level(initial, boundary)?;
    record(0, &prev, &mut snapshots);
    let mut max2 = max_interior(&prev);
    let mut cur = solver.first_step(&prev, initial, boundary)?;
    record(1, &cur, &mut snapshots);
    max2 = max2.max(max_interior(&cur));
    for n in 1..steps {
        max2 = max2.max(solver.advance(&mut prev, &cur, n, boundary)?);
        std::mem::swap(&mut prev, &mut cur);
        record(n + 1, &cur, &mut snapshots);
    }

    Ok((
        DisplacementHistory {
            x_coords: grid.x_coords.clone(),
            y_coords: grid.y_coords.clone(),
            kinds: grid.kinds.clone(),
            snapshots: snapshots
                .into_iter()
                .map(|s| s.expect("all output steps visited"))
                .collect(),
        },
        SolveStats {
            steps,
            dt,
            max_displacement: max2.sqrt(),
        },
    ))
}
