//! Motion estimation by the linear elasticity (Navier-Cauchy) equation.

pub mod domain;
pub mod grid;
pub mod solver;

pub use domain::{Domain, EllipseDomain, RectDomain};
pub use grid::{classify_nodes, GhostNode, Grid2D, NodeKind};
pub use solver::{
    cfl_bound, cfl_dt, fill_ghost, solve, time_steps, BoundarySource, DisplacementHistory, ElasticSolver, Field,
    InitialData, MaterialParams, Snapshot, SolveStats,
};
