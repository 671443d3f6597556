//! Three-dimensional assembly of the per-axis GFM operators and the line
//! sweeps used by the splitting schemes.
//!
//! Each axis keeps two node-indexed arrays: `cond[idx]` is the conductance of
//! the edge from `idx` to its `+axis` neighbour and `jc[idx]` is the jump
//! correction of the row at `idx`. Boundary nodes of the box are Dirichlet
//! nodes: every operator returns 0 there and every implicit solve leaves them
//! at their right-hand-side value.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gfm::{assemble_line, JumpData, LineCut, LineSystem};
use crate::grid::{Axis, Field, Grid};
use crate::molecule::{AtomSet, PhysicalParams};
use crate::surface::InterfaceData;

/// Row positions per parallel task in the plane-wise sweeps.
const CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct AxisOperator {
    pub axis: Axis,
    pub cond: Vec<f64>,
    pub jc: Vec<f64>,
}

/// The three modified second-difference operators of one problem.
#[derive(Debug, Clone)]
pub struct SpatialOperator {
    pub grid: Grid,
    pub axes: [AxisOperator; 3],
}

fn line_nodes(grid: &Grid, axis: Axis, line: usize) -> (usize, usize, usize) {
    // returns start index, stride and length of line number `line`
    let n = grid.n;
    match axis {
        Axis::X => (line * n[0], 1, n[0]),
        Axis::Y => {
            let (i, k) = (line % n[0], line / n[0]);
            (grid.index(i, 0, k), n[0], n[1])
        }
        Axis::Z => (line, n[0] * n[1], n[2]),
    }
}

fn line_count(grid: &Grid, axis: Axis) -> usize {
    grid.len() / grid.n[axis.index()]
}

fn line_of(grid: &Grid, axis: Axis, low: [usize; 3]) -> usize {
    let n = grid.n;
    match axis {
        Axis::X => low[1] + n[1] * low[2],
        Axis::Y => low[0] + n[0] * low[2],
        Axis::Z => low[0] + n[0] * low[1],
    }
}

/// One-dimensional systems of every line along `axis`, indexed by line
/// number; lines lying on a box face are `None`. Each system has passed
/// [`LineSystem::check_invariants`].
pub fn line_systems(
    grid: &Grid,
    interface: &InterfaceData,
    jumps: &[Vec<JumpData>; 3],
    params: &PhysicalParams,
    boundary: &[f64],
    axis: Axis,
) -> Result<Vec<Option<LineSystem>>> {
    let a = axis.index();
    let mut cuts: Vec<Vec<LineCut>> = vec![Vec::new(); line_count(grid, axis)];
    for (c, j) in interface.crossings[a].iter().zip(&jumps[a]) {
        cuts[line_of(grid, axis, c.low)].push(LineCut {
            edge: c.low[a],
            theta: c.theta,
            jump: *j,
        });
    }
    let len = grid.n[a];
    (0..cuts.len())
        .into_par_iter()
        .map(|line| {
            let (start, stride, _) = line_nodes(grid, axis, line);
            let ijk = grid.ijk(start);
            let on_face = (0..3).any(|d| d != a && (ijk[d] == 0 || ijk[d] + 1 == grid.n[d]));
            if on_face {
                return Ok(None);
            }
            let inside: Vec<bool> = (0..len).map(|m| interface.inside[start + m * stride]).collect();
            assemble_line(
                grid.h,
                &inside,
                params.eps_in,
                params.eps_out,
                &cuts[line],
                boundary[start],
                boundary[start + (len - 1) * stride],
            )
            .map(Some)
        })
        .collect()
}

impl SpatialOperator {
    /// Assembles every line of every axis and scatters the result into
    /// node-indexed arrays. `boundary` holds the Dirichlet values on boundary
    /// nodes.
    pub fn assemble(
        grid: &Grid,
        interface: &InterfaceData,
        jumps: &[Vec<JumpData>; 3],
        params: &PhysicalParams,
        boundary: &[f64],
    ) -> Result<SpatialOperator> {
        let axes = Axis::ALL.map(|axis| -> Result<AxisOperator> {
            let systems = line_systems(grid, interface, jumps, params, boundary, axis)?;
            let mut cond = vec![0.0; grid.len()];
            let mut jc = vec![0.0; grid.len()];
            for (line, sys) in systems.into_iter().enumerate() {
                let Some(sys) = sys else { continue };
                let (start, stride, _) = line_nodes(grid, axis, line);
                for (e, g) in sys.cond.iter().enumerate() {
                    cond[start + e * stride] = *g;
                }
                for (m, c) in sys.corr.iter().enumerate() {
                    jc[start + (m + 1) * stride] = *c;
                }
            }
            Ok(AxisOperator { axis, cond, jc })
        });
        let [x, y, z] = axes;
        Ok(SpatialOperator {
            grid: *grid,
            axes: [x?, y?, z?],
        })
    }

    /// `out = δ̃²_axis v` on interior nodes, 0 on boundary nodes.
    pub fn apply(&self, axis: Axis, v: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let [nx, ny, nz] = g.n;
        let op = &self.axes[axis.index()];
        let s = g.stride(axis);
        let plane = nx * ny;
        out.par_chunks_mut(plane).enumerate().for_each(|(k, o)| {
            o.fill(0.0);
            if k == 0 || k + 1 == nz {
                return;
            }
            for j in 1..ny - 1 {
                let base = k * plane + j * nx;
                for i in 1..nx - 1 {
                    let idx = base + i;
                    let vi = v[idx];
                    o[j * nx + i] = op.cond[idx - s] * (v[idx - s] - vi)
                        + op.cond[idx] * (v[idx + s] - vi)
                        + op.jc[idx];
                }
            }
        });
    }

    /// Solves `(I - τ δ̃²_axis) out = rhs`, with boundary nodes copied from `rhs`.
    pub fn solve(&self, axis: Axis, tau: f64, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        let g = &self.grid;
        let [nx, ny, nz] = g.n;
        let op = &self.axes[axis.index()];
        let plane = nx * ny;
        match axis {
            Axis::X => {
                out.par_chunks_mut(nx)
                    .zip(rhs.par_chunks(nx))
                    .enumerate()
                    .try_for_each(|(row, (o, r))| {
                        let (j, k) = (row % ny, row / ny);
                        if j == 0 || k == 0 || j + 1 == ny || k + 1 == nz {
                            o.copy_from_slice(r);
                            return Ok(());
                        }
                        let base = row * nx;
                        solve_row(&op.cond[base..base + nx], &op.jc[base..base + nx], tau, r, o)
                    })
            }
            Axis::Y => {
                let mask: Vec<bool> = (0..nx).map(|i| i > 0 && i + 1 < nx).collect();
                out.par_chunks_mut(plane)
                    .zip(rhs.par_chunks(plane))
                    .enumerate()
                    .try_for_each(|(k, (o, r))| {
                        if k == 0 || k + 1 == nz {
                            o.copy_from_slice(r);
                            return Ok(());
                        }
                        let base = k * plane;
                        let mut cp = vec![0.0; plane];
                        sweep_rows(
                            o,
                            r,
                            &op.cond[base..base + plane],
                            &op.jc[base..base + plane],
                            &mut cp,
                            &mask,
                            tau,
                            false,
                        )
                    })
            }
            Axis::Z => {
                let mask: Vec<bool> = (0..plane)
                    .map(|p| {
                        let (i, j) = (p % nx, p / nx);
                        i > 0 && j > 0 && i + 1 < nx && j + 1 < ny
                    })
                    .collect();
                let mut cp = vec![0.0; g.len()];
                sweep_rows(out, rhs, &op.cond, &op.jc, &mut cp, &mask, tau, true)
            }
        }
    }
}

/// Thomas solve of one contiguous line with identity end rows.
fn solve_row(cond: &[f64], jc: &[f64], tau: f64, rhs: &[f64], out: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    let mut cp = vec![0.0; n];
    out[0] = rhs[0];
    for m in 1..n - 1 {
        let a = -tau * cond[m - 1];
        let c = -tau * cond[m];
        let den = 1.0 - a - c - a * cp[m - 1];
        if !(den > 0.0) {
            return Err(Error::Numerical(format!("nonpositive pivot {den} in line solve")));
        }
        cp[m] = c / den;
        out[m] = (rhs[m] + tau * jc[m] - a * out[m - 1]) / den;
    }
    out[n - 1] = rhs[n - 1];
    for m in (1..n - 1).rev() {
        out[m] -= cp[m] * out[m + 1];
    }
    Ok(())
}

/// Batched Thomas solve where each row of a row-major block is one step along
/// the solve direction and each column is an independent line. Columns with
/// `mask == false` and the first and last rows are Dirichlet nodes.
#[allow(clippy::too_many_arguments)]
fn sweep_rows(
    out: &mut [f64],
    rhs: &[f64],
    cond: &[f64],
    jc: &[f64],
    cp: &mut [f64],
    mask: &[bool],
    tau: f64,
    parallel: bool,
) -> Result<()> {
    let w = mask.len();
    let rows = out.len() / w;
    out[..w].copy_from_slice(&rhs[..w]);
    cp[..w].fill(0.0);
    for r in 1..rows - 1 {
        let (done, rest) = out.split_at_mut(r * w);
        let (cdone, crest) = cp.split_at_mut(r * w);
        let d_prev = &done[(r - 1) * w..];
        let c_prev = &cdone[(r - 1) * w..];
        let d_cur = &mut rest[..w];
        let c_cur = &mut crest[..w];
        let rhs_cur = &rhs[r * w..(r + 1) * w];
        let g_prev = &cond[(r - 1) * w..r * w];
        let g_cur = &cond[r * w..(r + 1) * w];
        let jc_cur = &jc[r * w..(r + 1) * w];
        let kernel = |off: usize, d: &mut [f64], c: &mut [f64]| -> bool {
            let mut ok = true;
            for (q, (dq, cq)) in d.iter_mut().zip(c.iter_mut()).enumerate() {
                let p = off + q;
                if !mask[p] {
                    *dq = rhs_cur[p];
                    *cq = 0.0;
                    continue;
                }
                let a = -tau * g_prev[p];
                let cc = -tau * g_cur[p];
                let den = 1.0 - a - cc - a * c_prev[p];
                ok &= den > 0.0;
                *cq = cc / den;
                *dq = (rhs_cur[p] + tau * jc_cur[p] - a * d_prev[p]) / den;
            }
            ok
        };
        let ok = if parallel {
            d_cur
                .par_chunks_mut(CHUNK)
                .zip(c_cur.par_chunks_mut(CHUNK))
                .enumerate()
                .map(|(n, (d, c))| kernel(n * CHUNK, d, c))
                .reduce(|| true, |a, b| a && b)
        } else {
            kernel(0, d_cur, c_cur)
        };
        if !ok {
            return Err(Error::Numerical("nonpositive pivot in line solve".into()));
        }
    }
    let last = (rows - 1) * w;
    out[last..].copy_from_slice(&rhs[last..]);
    for r in (1..rows - 1).rev() {
        let (head, tail) = out.split_at_mut((r + 1) * w);
        let d_cur = &mut head[r * w..];
        let d_next = &tail[..w];
        let c_cur = &cp[r * w..(r + 1) * w];
        let back = |off: usize, d: &mut [f64]| {
            for (q, dq) in d.iter_mut().enumerate() {
                *dq -= c_cur[off + q] * d_next[off + q];
            }
        };
        if parallel {
            d_cur
                .par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(n, d)| back(n * CHUNK, d));
        } else {
            back(0, d_cur);
        }
    }
    Ok(())
}

/// Dirichlet data: `φ_b` on boundary nodes, 0 elsewhere.
pub fn boundary_values(grid: &Grid, atoms: &AtomSet, params: &PhysicalParams) -> Result<Field> {
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if grid.is_boundary_index(idx) {
                crate::molecule::dirichlet_boundary(atoms, grid.node_at(idx), params)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Field::from_values(grid, values)
}
