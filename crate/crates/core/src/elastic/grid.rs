//! Cartesian grid with interior / boundary / ghost node classification.
//!
//! Boundary nodes are grid nodes moved along a coordinate line onto the
//! continuous boundary, so the grid is locally nonuniform next to it. A ghost
//! is an exterior node reached only by the diagonal (mixed-derivative) part of
//! an interior stencil; it is filled by affine extrapolation from its
//! interior diagonal neighbour `node0` and the two boundary nodes `node1`,
//! `node2` that close the corner.

use super::domain::Domain;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NodeKind {
    Exterior = 0,
    Interior = 1,
    Boundary = 2,
    Ghost = 3,
}

impl NodeKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(NodeKind::Exterior),
            1 => Some(NodeKind::Interior),
            2 => Some(NodeKind::Boundary),
            3 => Some(NodeKind::Ghost),
            _ => None,
        }
    }

    /// Carries a solver value.
    pub fn is_active(self) -> bool {
        self != NodeKind::Exterior
    }
}

/// Extrapolation triple of a ghost node (flat node indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GhostNode {
    pub ghost: usize,
    pub node0: usize,
    pub node1: usize,
    pub node2: usize,
}

#[derive(Debug, Clone)]
pub struct Grid2D {
    pub x_coords: Vec<f64>,
    pub y_coords: Vec<f64>,
    /// Row-major, `j * nx + i`.
    pub kinds: Vec<NodeKind>,
    /// Node positions; boundary nodes carry their snapped position.
    pub positions: Vec<Vec2>,
    /// Interior nodes in ascending index order.
    pub interior: Vec<usize>,
    /// Boundary nodes in ascending index order.
    pub boundary: Vec<usize>,
    pub ghosts: Vec<GhostNode>,
}

// (di, dj) of the four axis neighbours and four diagonals
const AXIS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const DIAG: [(isize, isize); 4] = [(1, 1), (-1, 1), (1, -1), (-1, -1)];

/// Relative level-set tolerance for nodes that already sit on the boundary.
const ON_BOUNDARY_TOL: f64 = 1e-12;

impl Grid2D {
    pub fn nx(&self) -> usize {
        self.x_coords.len()
    }

    pub fn ny(&self) -> usize {
        self.y_coords.len()
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx(), idx / self.nx())
    }

    pub fn tensor_position(&self, idx: usize) -> Vec2 {
        let (i, j) = self.ij(idx);
        Vec2::new(self.x_coords[i], self.y_coords[j])
    }

    pub fn neighbor(&self, idx: usize, di: isize, dj: isize) -> Option<usize> {
        let (i, j) = self.ij(idx);
        let ni = i as isize + di;
        let nj = j as isize + dj;
        if ni < 0 || nj < 0 || ni >= self.nx() as isize || nj >= self.ny() as isize {
            None
        } else {
            Some(self.index(ni as usize, nj as usize))
        }
    }

    pub fn min_spacing(&self) -> (f64, f64) {
        let m = |c: &[f64]| c.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        (m(&self.x_coords), m(&self.y_coords))
    }

    /// Positions of the boundary nodes, in `boundary` order.
    pub fn boundary_positions(&self) -> Vec<Vec2> {
        self.boundary.iter().map(|&b| self.positions[b]).collect()
    }

    /// Ordinal of every node inside `boundary` (usize::MAX when not a boundary node).
    pub fn boundary_ordinals(&self) -> Vec<usize> {
        let mut ord = vec![usize::MAX; self.len()];
        for (k, &b) in self.boundary.iter().enumerate() {
            ord[b] = k;
        }
        ord
    }

    /// Check that every interior stencil is closed and every ghost triple is well formed.
    pub fn check_invariants(&self) -> Result<()> {
        for &p in &self.interior {
            for &(di, dj) in AXIS.iter().chain(DIAG.iter()) {
                let q = self
                    .neighbor(p, di, dj)
                    .ok_or_else(|| Error::GridConfiguration(format!("interior node {p} on the grid edge")))?;
                if self.kinds[q] == NodeKind::Exterior {
                    return Err(Error::GridConfiguration(format!(
                        "interior node {p} reaches exterior node {q}"
                    )));
                }
            }
        }
        for g in &self.ghosts {
            if self.kinds[g.node0] != NodeKind::Interior
                || self.kinds[g.node1] != NodeKind::Boundary
                || self.kinds[g.node2] != NodeKind::Boundary
            {
                return Err(Error::GridConfiguration(format!("bad ghost triple {g:?}")));
            }
        }
        Ok(())
    }
}

impl GhostNode {
    /// Weights `(w0, w1, w2)` with `x_ghost = w0·x0 + w1·x1 + w2·x2` and
    /// `w0 + w1 + w2 = 1`; `None` when the three nodes are collinear.
    ///
    /// When the ghost lies on the line from `node0` through the midpoint of
    /// `node1` and `node2` this is the extrapolation along that line.
    pub fn weights(&self, grid: &Grid2D) -> Option<[f64; 3]> {
        let x0 = grid.positions[self.node0];
        let e1 = grid.positions[self.node1] - x0;
        let e2 = grid.positions[self.node2] - x0;
        let r = grid.positions[self.ghost] - x0;
        let det = e1.x * e2.y - e1.y * e2.x;
        let scale = e1.norm() * e2.norm();
        if !(det.abs() > 1e-12 * scale) {
            return None;
        }
        let a = (r.x * e2.y - r.y * e2.x) / det;
        let b = (e1.x * r.y - e1.y * r.x) / det;
        Some([1.0 - a - b, a, b])
    }
}

/// Classify the nodes of the tensor grid `x_coords × y_coords` against `domain`.
///
/// `snap_fraction` (in `(0, 1)`) is the smallest distance, in units of the
/// local spacing, allowed between an interior node and the boundary; nodes
/// closer than that are themselves moved onto the boundary.
pub fn classify_nodes(x_coords: &[f64], y_coords: &[f64], domain: &dyn Domain, snap_fraction: f64) -> Result<Grid2D> {
    let (nx, ny) = (x_coords.len(), y_coords.len());
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidArgument("grid needs at least 3x3 nodes".into()));
    }
    if x_coords.windows(2).any(|w| !(w[1] > w[0])) || y_coords.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "grid coordinates must be strictly ascending".into(),
        ));
    }
    if !(snap_fraction > 0.0 && snap_fraction < 1.0) {
        return Err(Error::InvalidArgument("snap_fraction must lie in (0, 1)".into()));
    }

    let n = nx * ny;
    let mut grid = Grid2D {
        x_coords: x_coords.to_vec(),
        y_coords: y_coords.to_vec(),
        kinds: vec![NodeKind::Exterior; n],
        positions: Vec::with_capacity(n),
        interior: Vec::new(),
        boundary: Vec::new(),
        ghosts: Vec::new(),
    };
    for j in 0..ny {
        for i in 0..nx {
            grid.positions.push(Vec2::new(x_coords[i], y_coords[j]));
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Side {
        Inside,
        On,
        Outside,
    }
    let scale = x_coords[nx - 1] - x_coords[0] + y_coords[ny - 1] - y_coords[0];
    let side: Vec<Side> = grid
        .positions
        .iter()
        .map(|&p| {
            let l = domain.level(p);
            if l.abs() <= ON_BOUNDARY_TOL * scale {
                Side::On
            } else if l < 0.0 {
                Side::Inside
            } else {
                Side::Outside
            }
        })
        .collect();

    // admissible snapped positions per node, nearest to the home position first
    let mut options: Vec<Vec<Vec2>> = vec![Vec::new(); n];

    // inside nodes too close to the boundary move onto it
    for p in 0..n {
        if side[p] != Side::Inside {
            continue;
        }
        let pos = grid.positions[p];
        for &(di, dj) in &AXIS {
            let Some(q) = grid.neighbor(p, di, dj) else { continue };
            if side[q] != Side::Outside {
                continue;
            }
            let c = domain.crossing(pos, grid.positions[q]);
            let h = (grid.positions[q] - pos).norm();
            if (c - pos).norm() < snap_fraction * h {
                options[p].push(c);
            }
        }
    }

    for p in 0..n {
        match side[p] {
            Side::Inside if options[p].is_empty() => grid.kinds[p] = NodeKind::Interior,
            Side::Inside | Side::On => grid.kinds[p] = NodeKind::Boundary,
            Side::Outside => {}
        }
    }

    // outside axis neighbours of interior nodes move onto the boundary along
    // the line joining them
    for p in 0..n {
        if grid.kinds[p] != NodeKind::Interior {
            continue;
        }
        let pos = grid.positions[p];
        for &(di, dj) in &AXIS {
            let q = grid
                .neighbor(p, di, dj)
                .ok_or_else(|| Error::GridConfiguration(format!("interior node {p} lies on the grid edge")))?;
            if side[q] != Side::Outside {
                continue;
            }
            options[q].push(domain.crossing(pos, grid.positions[q]));
            grid.kinds[q] = NodeKind::Boundary;
        }
    }
    for p in 0..n {
        let home = grid.positions[p];
        options[p].sort_by(|a, b| (*a - home).norm().total_cmp(&(*b - home).norm()));
        if let Some(&c) = options[p].first() {
            grid.positions[p] = c;
        }
    }

    // ghosts: diagonal stencil members that are still unassigned
    let mut candidates: Vec<Vec<GhostNode>> = vec![Vec::new(); n];
    for p in 0..n {
        if grid.kinds[p] != NodeKind::Interior {
            continue;
        }
        for &(di, dj) in &DIAG {
            let g = grid
                .neighbor(p, di, dj)
                .ok_or_else(|| Error::GridConfiguration(format!("interior node {p} lies on the grid edge")))?;
            if grid.kinds[g] != NodeKind::Exterior && grid.kinds[g] != NodeKind::Ghost {
                continue;
            }
            grid.kinds[g] = NodeKind::Ghost;
            // node0 = g + (a, b); node1 = g + (a, 0); node2 = g + (0, b)
            let (a, b) = (-di, -dj);
            let node1 = grid.neighbor(g, a, 0);
            let node2 = grid.neighbor(g, 0, b);
            if let (Some(node1), Some(node2)) = (node1, node2) {
                if grid.kinds[node1] == NodeKind::Boundary && grid.kinds[node2] == NodeKind::Boundary {
                    candidates[g].push(GhostNode {
                        ghost: g,
                        node0: p,
                        node1,
                        node2,
                    });
                }
            }
        }
    }
    let ghost_ids: Vec<usize> = (0..n).filter(|&g| grid.kinds[g] == NodeKind::Ghost).collect();
    for &g in &ghost_ids {
        if candidates[g].is_empty() {
            return Err(Error::GridConfiguration(format!(
                "ghost node {g} at {:?} has no interior diagonal with two boundary neighbours",
                grid.positions[g]
            )));
        }
    }

    // a node with several admissible crossings takes the one that keeps the
    // extrapolation of its ghosts best conditioned
    let mut involved: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &g in &ghost_ids {
        for c in &candidates[g] {
            for q in [c.node1, c.node2] {
                if options[q].len() > 1 && !involved[q].contains(&g) {
                    involved[q].push(g);
                }
            }
        }
    }
    let best_of = |grid: &Grid2D, g: usize| {
        candidates[g]
            .iter()
            .map(|c| ghost_conditioning(grid, c))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let movable: Vec<usize> = (0..n).filter(|&q| !involved[q].is_empty()).collect();
    for _sweep in 0..16 {
        let mut changed = false;
        for &q in &movable {
            let current = grid.positions[q];
            let mut best = (f64::NEG_INFINITY, current);
            for &c in &options[q] {
                grid.positions[q] = c;
                let worst = involved[q]
                    .iter()
                    .map(|&g| best_of(&grid, g))
                    .fold(f64::INFINITY, f64::min);
                if worst > best.0 {
                    best = (worst, c);
                }
            }
            grid.positions[q] = best.1;
            changed |= best.1 != current;
        }
        if !changed {
            break;
        }
    }

    for &g in &ghost_ids {
        let pick = candidates[g]
            .iter()
            .copied()
            .max_by(|a, b| ghost_conditioning(&grid, a).total_cmp(&ghost_conditioning(&grid, b)))
            .expect("non-empty");
        grid.ghosts.push(pick);
    }

    grid.interior = (0..n).filter(|&p| grid.kinds[p] == NodeKind::Interior).collect();
    grid.boundary = (0..n).filter(|&p| grid.kinds[p] == NodeKind::Boundary).collect();
    if grid.interior.is_empty() {
        return Err(Error::GridConfiguration("no interior nodes".into()));
    }
    grid.check_invariants()?;
    Ok(grid)
}

/// `1 / Σ|w|` of the extrapolation weights; larger is better.
fn ghost_conditioning(grid: &Grid2D, g: &GhostNode) -> f64 {
    match g.weights(grid) {
        Some(w) => 1.0 / w.iter().map(|v| v.abs()).sum::<f64>(),
        None => 0.0,
    }
}
