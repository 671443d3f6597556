//! Eulerian interface representation: which nodes lie in the solute, and
//! where the interface cuts each grid edge joining nodes on opposite sides.
//!
//! Generators:
//! - [`classify_sphere`]: exact sphere,
//! - [`classify_union`]: union of (optionally inflated) atom spheres,
//! - [`classify_ses_grid`]: grid-based solvent-excluded surface,
//! - [`import_interface`]: externally produced interface files.

mod analytic;
mod interchange;
mod ses;

pub use analytic::{classify_sphere, classify_union};
pub use interchange::{export_interface, import_interface, Convention};
pub use ses::{classify_ses_grid, SesOptions};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

/// Lower clamp for interface fractions; the upper clamp is `1 - THETA_MIN`.
pub const THETA_MIN: f64 = 1e-6;

/// Implicit-function magnitude below which a node is treated as lying on the
/// interface (and classified inside).
pub const ON_SURFACE_TOL: f64 = 1e-12;

/// One interface crossing on the edge `low -> low + e_axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub axis: Axis,
    pub low: [usize; 3],
    /// Fraction of the edge from `low` to the interface.
    pub theta: f64,
    pub location: [f64; 3],
}

impl Crossing {
    /// Builds a crossing with `theta` clamped and the location recomputed from it.
    pub fn new(grid: &Grid, axis: Axis, low: [usize; 3], theta: f64) -> Crossing {
        let theta = clamp_theta(theta);
        let mut location = grid.node(low[0], low[1], low[2]);
        location[axis.index()] += theta * grid.h;
        Crossing {
            axis,
            low,
            theta,
            location,
        }
    }

    pub fn high(&self) -> [usize; 3] {
        let mut h = self.low;
        h[self.axis.index()] += 1;
        h
    }
}

pub fn clamp_theta(theta: f64) -> f64 {
    theta.clamp(THETA_MIN, 1.0 - THETA_MIN)
}

/// Nodewise solute classification plus per-axis crossings.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceData {
    /// `true` for solute (low-dielectric) nodes, indexed like the grid.
    pub inside: Vec<bool>,
    /// Crossings per axis, ordered by the linear index of their low node.
    pub crossings: [Vec<Crossing>; 3],
}

impl InterfaceData {
    /// Classification from `inside` with one crossing per sign-change edge;
    /// `locate(axis, low)` returns the raw fraction from the low node.
    pub fn from_classification(
        grid: &Grid,
        inside: Vec<bool>,
        mut locate: impl FnMut(Axis, [usize; 3]) -> f64,
    ) -> InterfaceData {
        let mut crossings: [Vec<Crossing>; 3] = Default::default();
        for axis in Axis::ALL {
            let stride = grid.stride(axis);
            let a = axis.index();
            for idx in 0..grid.len() {
                let ijk = grid.ijk(idx);
                if ijk[a] + 1 >= grid.n[a] {
                    continue;
                }
                if inside[idx] != inside[idx + stride] {
                    let theta = locate(axis, ijk);
                    crossings[a].push(Crossing::new(grid, axis, ijk, theta));
                }
            }
        }
        InterfaceData { inside, crossings }
    }

    pub fn num_crossings(&self) -> usize {
        self.crossings.iter().map(Vec::len).sum()
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Checks that crossings sit exactly on the edges whose endpoints differ
    /// in classification, with clamped fractions.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.inside.len() != grid.len() {
            return Err(Error::Validation(format!(
                "classification has {} nodes, grid has {}",
                self.inside.len(),
                grid.len()
            )));
        }
        for axis in Axis::ALL {
            let a = axis.index();
            let stride = grid.stride(axis);
            let mut seen = vec![false; grid.len()];
            for c in &self.crossings[a] {
                if c.axis != axis {
                    return Err(Error::Validation(format!("crossing filed under the wrong axis: {c:?}")));
                }
                if (0..3).any(|d| c.low[d] >= grid.n[d]) || c.low[a] + 1 >= grid.n[a] {
                    return Err(Error::Validation(format!("crossing outside the grid: {c:?}")));
                }
                if !(c.theta >= THETA_MIN && c.theta <= 1.0 - THETA_MIN) {
                    return Err(Error::Validation(format!("unclamped fraction: {c:?}")));
                }
                let idx = grid.index(c.low[0], c.low[1], c.low[2]);
                if self.inside[idx] == self.inside[idx + stride] {
                    return Err(Error::Validation(format!(
                        "crossing between same-side nodes: {c:?}"
                    )));
                }
                if std::mem::replace(&mut seen[idx], true) {
                    return Err(Error::Validation(format!("duplicate crossing: {c:?}")));
                }
            }
            for idx in 0..grid.len() {
                let ijk = grid.ijk(idx);
                if ijk[a] + 1 < grid.n[a]
                    && self.inside[idx] != self.inside[idx + stride]
                    && !seen[idx]
                {
                    return Err(Error::Validation(format!(
                        "edge {ijk:?} along {} changes side without a crossing",
                        axis.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Map from the linear index of each low node to its crossing, per axis.
    pub fn crossing_index(&self, grid: &Grid) -> [HashMap<usize, usize>; 3] {
        let mut maps: [HashMap<usize, usize>; 3] = Default::default();
        for a in 0..3 {
            for (n, c) in self.crossings[a].iter().enumerate() {
                maps[a].insert(grid.index(c.low[0], c.low[1], c.low[2]), n);
            }
        }
        maps
    }

    /// Errors unless every boundary node is in the solvent.
    pub fn check_boundary_outside(&self, grid: &Grid) -> Result<()> {
        for idx in 0..grid.len() {
            if self.inside[idx] && grid.is_boundary_index(idx) {
                return Err(Error::Validation(format!(
                    "solute touches the box at node {:?}",
                    grid.ijk(idx)
                )));
            }
        }
        Ok(())
    }
}

/// Walks from the inside end of an edge through overlapping `[start, end]`
/// intervals (in edge-length units) and returns the first exit point.
pub(crate) fn first_exit(intervals: &[(f64, f64)], from_low: bool) -> f64 {
    const SLACK: f64 = 1e-9;
    if from_low {
        let mut cur = 0.0f64;
        loop {
            let mut moved = false;
            for &(a, b) in intervals {
                if a <= cur + SLACK && b > cur {
                    cur = b;
                    moved = true;
                }
            }
            if !moved || cur >= 1.0 {
                return cur.min(1.0);
            }
        }
    } else {
        let mut cur = 1.0f64;
        loop {
            let mut moved = false;
            for &(a, b) in intervals {
                if b >= cur - SLACK && a < cur {
                    cur = a;
                    moved = true;
                }
            }
            if !moved || cur <= 0.0 {
                return cur.max(0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_exit_follows_overlaps() {
        assert_eq!(first_exit(&[(-0.5, 0.3)], true), 0.3);
        assert_eq!(first_exit(&[(-0.5, 0.3), (0.2, 0.6), (0.8, 2.0)], true), 0.6);
        assert_eq!(first_exit(&[(0.7, 1.5)], false), 0.7);
        assert_eq!(first_exit(&[(0.7, 1.5), (0.1, 0.75), (-1.0, 0.05)], false), 0.1);
    }

    #[test]
    fn validate_rejects_inconsistent_data() {
        let grid = Grid::new([0.0; 3], 1.0, [4; 3]).unwrap();
        let mut inside = vec![false; grid.len()];
        inside[grid.index(1, 1, 1)] = true;
        let good = InterfaceData::from_classification(&grid, inside.clone(), |_, _| 0.5);
        good.validate(&grid).unwrap();
        assert_eq!(good.num_crossings(), 6);

        let mut missing = good.clone();
        missing.crossings[0].pop();
        assert!(missing.validate(&grid).is_err());

        let mut extra = good.clone();
        extra.crossings[1].push(Crossing::new(&grid, Axis::Y, [2, 2, 2], 0.5));
        assert!(extra.validate(&grid).is_err());
    }
}
