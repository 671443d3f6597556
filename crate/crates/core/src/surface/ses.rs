//! Grid approximation of the solvent-excluded surface.
//!
//! A point lies outside the SES when some accessible probe center (a point
//! outside the solvent-accessible surface) is within `r_p` of it, i.e. the SES
//! interior is the morphological closing of the van der Waals union by a ball
//! of radius `r_p`. Distances to the accessible region come from an exact
//! squared EDT over the accessible nodes, tightened near the surface with
//! exact foot points on exposed SAS spheres and exact SAS edge crossings.

use std::collections::HashMap;

use super::analytic::ball_interval;
use super::{classify_union, first_exit, InterfaceData, ON_SURFACE_TOL};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::molecule::{dist, AtomSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SesOptions {
    pub probe_radius: f64,
    /// Locate crossings by bisection on the continuous implicit function
    /// instead of linear interpolation of nodal values.
    pub refine: bool,
}

impl Default for SesOptions {
    fn default() -> Self {
        SesOptions {
            probe_radius: crate::molecule::DEFAULT_PROBE_RADIUS,
            refine: true,
        }
    }
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
/// `f` holds 0 on feature sites and `INFINITY` elsewhere, or any squared
/// distances from previous passes.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let (qf, pf) = (q as f64, p as f64);
                    let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *o = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in node units) from every node to the
/// nearest `feature` node.
pub(crate) fn squared_edt(n: [usize; 3], feature: &[bool]) -> Vec<f64> {
    let len = n[0] * n[1] * n[2];
    let mut d: Vec<f64> = feature
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();
    let strides = [1, n[0], n[0] * n[1]];
    let mut v = Vec::new();
    let mut z = Vec::new();
    for axis in 0..3 {
        let m = n[axis];
        let mut line = vec![0.0; m];
        let mut out = vec![0.0; m];
        for start in 0..len {
            let coord = (start / strides[axis]) % m;
            if coord != 0 {
                continue;
            }
            for (t, l) in line.iter_mut().enumerate() {
                *l = d[start + t * strides[axis]];
            }
            edt_1d(&line, &mut out, &mut v, &mut z);
            for (t, o) in out.iter().enumerate() {
                d[start + t * strides[axis]] = *o;
            }
        }
    }
    d
}

/// Points known to belong to the accessible (probe-center) region, bucketed by
/// lattice cell for radius queries.
struct AccessibleSamples {
    grid: Grid,
    buckets: HashMap<[i64; 3], Vec<[f64; 3]>>,
    reach: i64,
    cap: f64,
}

impl AccessibleSamples {
    fn cell(&self, p: [f64; 3]) -> [i64; 3] {
        let g = &self.grid;
        [
            ((p[0] - g.origin[0]) / g.h).floor() as i64,
            ((p[1] - g.origin[1]) / g.h).floor() as i64,
            ((p[2] - g.origin[2]) / g.h).floor() as i64,
        ]
    }

    fn insert(&mut self, p: [f64; 3]) {
        let c = self.cell(p);
        self.buckets.entry(c).or_default().push(p);
    }

    fn nearest(&self, p: [f64; 3]) -> f64 {
        let c = self.cell(p);
        let mut best = self.cap;
        for dk in -self.reach..=self.reach {
            for dj in -self.reach..=self.reach {
                for di in -self.reach..=self.reach {
                    if let Some(list) = self.buckets.get(&[c[0] + di, c[1] + dj, c[2] + dk]) {
                        for &q in list {
                            best = best.min(dist(p, q));
                        }
                    }
                }
            }
        }
        best
    }
}

struct SesGeometry<'a> {
    atoms: &'a AtomSet,
    probe: f64,
    samples: AccessibleSamples,
}

impl SesGeometry<'_> {
    /// Signed SAS function: nonnegative on accessible probe centers.
    fn sas(&self, p: [f64; 3]) -> f64 {
        self.atoms
            .iter()
            .map(|a| dist(p, a.center) - a.radius - self.probe)
            .fold(f64::INFINITY, f64::min)
    }

    /// Positive inside the van der Waals union.
    fn vdw(&self, p: [f64; 3]) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.radius - dist(p, a.center))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Distance from a SAS-interior point to the accessible region, capped at
    /// the search radius. `upper` is any known upper bound.
    fn accessible_distance(&self, p: [f64; 3], upper: f64) -> f64 {
        let mut best = upper.min(self.samples.nearest(p));
        for (i, a) in self.atoms.iter().enumerate() {
            let big = a.radius + self.probe;
            let r = dist(p, a.center);
            let gap = (r - big).abs();
            if gap >= best || r == 0.0 {
                continue;
            }
            let s = big / r;
            let foot = [
                a.center[0] + (p[0] - a.center[0]) * s,
                a.center[1] + (p[1] - a.center[1]) * s,
                a.center[2] + (p[2] - a.center[2]) * s,
            ];
            let exposed = self.atoms.iter().enumerate().all(|(j, b)| {
                j == i || dist(foot, b.center) >= b.radius + self.probe - 1e-12
            });
            if exposed {
                best = gap;
            }
        }
        best
    }

    /// Combined implicit function: nonnegative inside the SES.
    fn implicit(&self, p: [f64; 3]) -> f64 {
        let v = self.vdw(p);
        if v >= 0.0 {
            return v;
        }
        let s = self.sas(p);
        if s >= 0.0 {
            return -s.max(ON_SURFACE_TOL) - self.probe;
        }
        if -s >= self.probe {
            return (-s - self.probe).max(v);
        }
        let d = self.accessible_distance(p, self.samples.cap);
        (d - self.probe).max(v)
    }
}

/// Grid solvent-excluded surface for probe radius `opts.probe_radius`.
pub fn classify_ses_grid(grid: &Grid, atoms: &AtomSet, opts: SesOptions) -> Result<InterfaceData> {
    let rp = opts.probe_radius;
    if !(rp >= 0.0) || !rp.is_finite() {
        return Err(Error::Validation(format!("probe radius must be nonnegative, got {rp}")));
    }
    if rp == 0.0 {
        return classify_union(grid, atoms, 0.0);
    }
    for a in atoms.iter() {
        if !grid.contains_ball_strictly(a.center, a.radius + rp) {
            return Err(Error::Validation(format!(
                "probe-inflated atom at {:?} does not fit strictly inside the grid",
                a.center
            )));
        }
    }
    let h = grid.h;
    let reach = ((rp + h) / h).ceil() as i64 + 1;
    let mut geom = SesGeometry {
        atoms,
        probe: rp,
        samples: AccessibleSamples {
            grid: *grid,
            buckets: HashMap::new(),
            reach,
            cap: rp + h,
        },
    };

    let sas: Vec<f64> = (0..grid.len()).map(|idx| geom.sas(grid.node_at(idx))).collect();
    let accessible: Vec<bool> = sas.iter().map(|&s| s >= 0.0).collect();

    // Exact SAS crossings on edges between accessible and buried nodes, plus
    // the accessible nodes adjacent to them.
    let balls: Vec<_> = atoms.iter().map(|a| (a.center, a.radius + rp)).collect();
    for axis in Axis::ALL {
        let stride = grid.stride(axis);
        let ax = axis.index();
        for idx in 0..grid.len() {
            let ijk = grid.ijk(idx);
            if ijk[ax] + 1 >= grid.n[ax] || accessible[idx] == accessible[idx + stride] {
                continue;
            }
            let p0 = grid.node_at(idx);
            let intervals: Vec<(f64, f64)> = balls
                .iter()
                .filter_map(|&(c, r)| ball_interval(p0, axis, h, c, r))
                .filter(|&(s0, s1)| s1 >= -1e-9 && s0 <= 1.0 + 1e-9)
                .collect();
            let t = first_exit(&intervals, !accessible[idx]);
            let mut q = p0;
            q[ax] += t * h;
            geom.samples.insert(q);
            let outer = if accessible[idx] { idx } else { idx + stride };
            geom.samples.insert(grid.node_at(outer));
        }
    }

    let edt = squared_edt(grid.n, &accessible);
    let phi: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let p = grid.node_at(idx);
            let v = geom.vdw(p);
            if v >= 0.0 {
                return v;
            }
            let s = sas[idx];
            if s >= 0.0 {
                return -s.max(ON_SURFACE_TOL) - rp;
            }
            if -s >= rp {
                return (-s - rp).max(v);
            }
            let d_grid = edt[idx].sqrt() * h;
            let d = geom.accessible_distance(p, d_grid.min(geom.samples.cap));
            (d - rp).max(v)
        })
        .collect();

    let inside: Vec<bool> = phi.iter().map(|&f| f >= -ON_SURFACE_TOL).collect();
    let flags = inside.clone();
    Ok(InterfaceData::from_classification(grid, inside, |axis, low| {
        let idx = grid.index(low[0], low[1], low[2]);
        let hi = idx + grid.stride(axis);
        let (f0, f1) = (phi[idx], phi[hi]);
        let linear = if f0 == f1 { 0.5 } else { f0 / (f0 - f1) };
        if !opts.refine {
            return linear;
        }
        // bisection keeping `a` on the side of the low node
        let p0 = grid.node_at(idx);
        let at = |t: f64| {
            let mut q = p0;
            q[axis.index()] += t * h;
            geom.implicit(q) >= -ON_SURFACE_TOL
        };
        let low_in = flags[idx];
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if at(m) == low_in {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }))
}
