//! Exact sphere and union-of-spheres classifiers.

use super::{first_exit, InterfaceData, ON_SURFACE_TOL};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::molecule::{dist, AtomSet};

/// Parameter interval `[s0, s1]` (edge units) where the edge from `p0` along
/// `axis` lies within distance `radius` of `center`.
pub(crate) fn ball_interval(
    p0: [f64; 3],
    axis: Axis,
    h: f64,
    center: [f64; 3],
    radius: f64,
) -> Option<(f64, f64)> {
    let a = axis.index();
    let d = [p0[0] - center[0], p0[1] - center[1], p0[2] - center[2]];
    let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let disc = d[a] * d[a] - (dd - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    Some(((-d[a] - r) / h, (-d[a] + r) / h))
}

fn union_fraction(grid: &Grid, balls: &[([f64; 3], f64)], axis: Axis, low: [usize; 3], low_inside: bool) -> f64 {
    let p0 = grid.node(low[0], low[1], low[2]);
    let intervals: Vec<(f64, f64)> = balls
        .iter()
        .filter_map(|&(c, r)| ball_interval(p0, axis, grid.h, c, r))
        .filter(|&(s0, s1)| s1 >= -1e-9 && s0 <= 1.0 + 1e-9)
        .collect();
    first_exit(&intervals, low_inside)
}

/// Classification and exact crossings for a union of balls.
pub(crate) fn classify_balls(grid: &Grid, balls: &[([f64; 3], f64)]) -> Result<InterfaceData> {
    for &(c, r) in balls {
        if !grid.contains_ball_strictly(c, r) {
            return Err(Error::Validation(format!(
                "sphere at {c:?} with radius {r} does not fit strictly inside the grid"
            )));
        }
    }
    let inside: Vec<bool> = (0..grid.len())
        .map(|idx| {
            let p = grid.node_at(idx);
            balls
                .iter()
                .any(|&(c, r)| r - dist(p, c) >= -ON_SURFACE_TOL)
        })
        .collect();
    let flags = inside.clone();
    Ok(InterfaceData::from_classification(grid, inside, |axis, low| {
        let idx = grid.index(low[0], low[1], low[2]);
        union_fraction(grid, balls, axis, low, flags[idx])
    }))
}

/// Exact sphere of radius `radius` around `center`.
pub fn classify_sphere(grid: &Grid, center: [f64; 3], radius: f64) -> Result<InterfaceData> {
    if !(radius > 0.0) {
        return Err(Error::Validation(format!("sphere radius must be positive, got {radius}")));
    }
    classify_balls(grid, &[(center, radius)])
}

/// Union of atom spheres with radii `r_i + inflate`: the van der Waals surface
/// for `inflate = 0`, the solvent-accessible surface for `inflate = r_p`.
pub fn classify_union(grid: &Grid, atoms: &AtomSet, inflate: f64) -> Result<InterfaceData> {
    if !(inflate >= 0.0) {
        return Err(Error::Validation(format!("inflation must be nonnegative, got {inflate}")));
    }
    let balls: Vec<_> = atoms.iter().map(|a| (a.center, a.radius + inflate)).collect();
    classify_balls(grid, &balls)
}
