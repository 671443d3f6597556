//! Uniform Cartesian lattice, nodal scalar fields and field dumps.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::molecule::AtomSet;

/// Cartesian axis of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn from_name(s: &str) -> Option<Axis> {
        match s {
            "x" | "X" => Some(Axis::X),
            "y" | "Y" => Some(Axis::Y),
            "z" | "Z" => Some(Axis::Z),
            _ => None,
        }
    }
}

/// Uniform lattice: `node(i, j, k) = origin + h * (i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: [f64; 3],
    pub h: f64,
    pub n: [usize; 3],
}

/// Slack used when snapping box extents to the lattice.
const SNAP_SLACK: f64 = 1e-9;

impl Grid {
    pub fn new(origin: [f64; 3], h: f64, n: [usize; 3]) -> Result<Grid> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Validation(format!("grid spacing must be positive, got {h}")));
        }
        if n.iter().any(|&c| c < 4) {
            return Err(Error::Validation(format!(
                "grid needs at least 4 nodes per axis, got {n:?}"
            )));
        }
        if !origin.iter().all(|o| o.is_finite()) {
            return Err(Error::Validation("grid origin is not finite".into()));
        }
        Ok(Grid { origin, h, n })
    }

    /// Lattice covering `[lo, hi]`, with both ends snapped outward to integer
    /// multiples of `h`.
    pub fn covering(lo: [f64; 3], hi: [f64; 3], h: f64) -> Result<Grid> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Validation(format!("grid spacing must be positive, got {h}")));
        }
        let mut origin = [0.0; 3];
        let mut n = [0usize; 3];
        for d in 0..3 {
            if !(hi[d] > lo[d]) {
                return Err(Error::Validation(format!("empty box along axis {d}")));
            }
            if h > hi[d] - lo[d] {
                return Err(Error::Validation(format!(
                    "spacing {h} exceeds the box extent {} along axis {d}",
                    hi[d] - lo[d]
                )));
            }
            let a = (lo[d] / h + SNAP_SLACK).floor();
            let b = (hi[d] / h - SNAP_SLACK).ceil();
            origin[d] = a * h;
            n[d] = (b - a) as usize + 1;
        }
        Grid::new(origin, h, n)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let r = idx / self.n[0];
        [i, r % self.n[1], r / self.n[1]]
    }

    /// Linear-index distance between neighbours along `axis`.
    #[inline]
    pub fn stride(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => 1,
            Axis::Y => self.n[0],
            Axis::Z => self.n[0] * self.n[1],
        }
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.h * i as f64,
            self.origin[1] + self.h * j as f64,
            self.origin[2] + self.h * k as f64,
        ]
    }

    pub fn node_at(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(idx);
        self.node(i, j, k)
    }

    /// Upper corner of the box.
    pub fn far_corner(&self) -> [f64; 3] {
        self.node(self.n[0] - 1, self.n[1] - 1, self.n[2] - 1)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0
            || j == 0
            || k == 0
            || i + 1 == self.n[0]
            || j + 1 == self.n[1]
            || k + 1 == self.n[2]
    }

    pub fn is_boundary_index(&self, idx: usize) -> bool {
        let [i, j, k] = self.ijk(idx);
        self.is_boundary(i, j, k)
    }

    /// True when `p` lies in the closed box (with a relative slack of 1e-12).
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let far = self.far_corner();
        let slack = 1e-12 * self.h;
        (0..3).all(|d| p[d] >= self.origin[d] - slack && p[d] <= far[d] + slack)
    }

    /// True when every point of the ball lies strictly inside the box.
    pub fn contains_ball_strictly(&self, center: [f64; 3], radius: f64) -> bool {
        let far = self.far_corner();
        (0..3).all(|d| center[d] - radius > self.origin[d] && center[d] + radius < far[d])
    }
}

/// Lattice enclosing the atoms: their extremes padded by `floor(2 r_p)`,
/// snapped outward to multiples of `h`.
///
/// The pad is raised to `r_p + h` when `floor(2 r_p)` would leave less than one
/// lattice spacing between a probe-inflated sphere and the box.
pub fn build_grid(atoms: &AtomSet, h: f64, probe_radius: f64) -> Result<Grid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Validation(format!("grid spacing must be positive, got {h}")));
    }
    if !(probe_radius >= 0.0) || !probe_radius.is_finite() {
        return Err(Error::Validation(format!(
            "probe radius must be nonnegative, got {probe_radius}"
        )));
    }
    if atoms.is_empty() {
        return Err(Error::Validation("no atoms".into()));
    }
    let (lo, hi) = atoms.extent(0.0);
    let base = (2.0 * probe_radius).floor();
    let narrowest = (0..3).map(|a| hi[a] - lo[a] + 2.0 * base).fold(f64::INFINITY, f64::min);
    if h > narrowest {
        return Err(Error::Validation(format!(
            "grid spacing {h} exceeds the padded box width {narrowest}"
        )));
    }
    let pad = base.max(probe_radius + h);
    let lo = [lo[0] - pad, lo[1] - pad, lo[2] - pad];
    let hi = [hi[0] + pad, hi[1] + pad, hi[2] + pad];
    Grid::covering(lo, hi, h)
}

/// Scalar value per lattice node, `i` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn constant(grid: &Grid, value: f64) -> Field {
        Field {
            grid: *grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::Validation(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid: *grid,
            values,
        })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Field {
        let values = (0..grid.len()).map(|idx| f(grid.node_at(idx))).collect();
        Field {
            grid: *grid,
            values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `i,j,k,value` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,k,value")?;
        for (idx, v) in self.values.iter().enumerate() {
            let [i, j, k] = self.grid.ijk(idx);
            writeln!(out, "{i},{j},{k},{v:e}")?;
        }
        Ok(())
    }

    /// Little-endian dump: `nx ny nz` as u64, `h ox oy oz` as f64, then values.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        for n in self.grid.n {
            out.write_all(&(n as u64).to_le_bytes())?;
        }
        out.write_all(&self.grid.h.to_le_bytes())?;
        for o in self.grid.origin {
            out.write_all(&o.to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Field> {
        let mut b8 = [0u8; 8];
        let mut n = [0usize; 3];
        for c in n.iter_mut() {
            input.read_exact(&mut b8)?;
            *c = u64::from_le_bytes(b8) as usize;
        }
        input.read_exact(&mut b8)?;
        let h = f64::from_le_bytes(b8);
        let mut origin = [0.0; 3];
        for o in origin.iter_mut() {
            input.read_exact(&mut b8)?;
            *o = f64::from_le_bytes(b8);
        }
        let grid = Grid::new(origin, h, n)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            input.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Field::from_values(&grid, values)
    }
}

/// Trilinear interpolation of `field` at `p`.
pub fn trilinear(field: &Field, p: [f64; 3]) -> Result<f64> {
    let g = &field.grid;
    if !g.contains(p) {
        return Err(Error::Domain(p));
    }
    let mut base = [0usize; 3];
    let mut t = [0.0; 3];
    for d in 0..3 {
        let s = ((p[d] - g.origin[d]) / g.h).max(0.0);
        let cell = (s.floor() as usize).min(g.n[d] - 2);
        base[d] = cell;
        t[d] = (s - cell as f64).clamp(0.0, 1.0);
    }
    let mut acc = 0.0;
    for dk in 0..2 {
        let wk = if dk == 0 { 1.0 - t[2] } else { t[2] };
        for dj in 0..2 {
            let wj = if dj == 0 { 1.0 - t[1] } else { t[1] };
            for di in 0..2 {
                let wi = if di == 0 { 1.0 - t[0] } else { t[0] };
                let w = wi * wj * wk;
                if w != 0.0 {
                    acc += w * field.at(base[0] + di, base[1] + dj, base[2] + dk);
                }
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::Atom;
    use proptest::prelude::*;

    fn atoms(list: &[([f64; 3], f64)]) -> AtomSet {
        AtomSet::new(list.iter().map(|&(c, r)| Atom::new(c, 1.0, r).unwrap()).collect()).unwrap()
    }

    #[test]
    fn single_atom_box() {
        let g = build_grid(&atoms(&[([0.0; 3], 2.0)]), 0.5, 1.4).unwrap();
        assert_eq!(g.origin, [-4.0; 3]);
        assert_eq!(g.n, [17; 3]);
        assert!(g.contains_ball_strictly([0.0; 3], 2.0 + 1.4));
    }

    #[test]
    fn coarse_spacing_pads_for_the_probe() {
        let g = build_grid(&atoms(&[([0.0; 3], 2.0)]), 1.0, 1.4).unwrap();
        assert_eq!(g.origin, [-5.0; 3]);
        assert_eq!(g.n, [11; 3]);
        assert!(g.contains_ball_strictly([0.0; 3], 3.4));
    }

    #[test]
    fn spacing_larger_than_box_is_rejected() {
        let a = atoms(&[([0.0; 3], 1.0)]);
        assert!(build_grid(&a, 100.0, 1.4).is_err());
        assert!(build_grid(&a, 0.0, 1.4).is_err());
        assert!(build_grid(&a, 0.5, -1.0).is_err());
    }

    #[test]
    fn symmetric_atoms_give_symmetric_box() {
        let g = build_grid(&atoms(&[([-1.3, 0.2, 0.0], 1.5), ([1.3, -0.2, 0.0], 1.5)]), 0.25, 1.4)
            .unwrap();
        let far = g.far_corner();
        for d in 0..3 {
            assert!((g.origin[d] + far[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_by_lattice_vector() {
        let a = atoms(&[([0.3, 0.1, -0.7], 1.6), ([1.9, 0.4, 0.2], 1.2)]);
        let h = 0.5;
        let g = build_grid(&a, h, 1.4).unwrap();
        let shift = [3.0 * h, -2.0 * h, 7.0 * h];
        let g2 = build_grid(&a.translated(shift), h, 1.4).unwrap();
        assert_eq!(g.n, g2.n);
        for d in 0..3 {
            assert!((g2.origin[d] - g.origin[d] - shift[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn trilinear_at_node_and_outside() {
        let g = Grid::new([0.0; 3], 1.0, [4; 3]).unwrap();
        let f = Field::from_fn(&g, |p| p[0] * 7.0 + p[1] * p[1] - p[2] * p[0]);
        assert_eq!(trilinear(&f, g.node(2, 1, 3)).unwrap(), f.at(2, 1, 3));
        assert_eq!(trilinear(&f, g.node(3, 3, 3)).unwrap(), f.at(3, 3, 3));
        assert!(matches!(trilinear(&f, [3.5, 0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn binary_and_csv_dumps() {
        let g = Grid::new([-1.0, 0.5, 2.0], 0.25, [4, 5, 6]).unwrap();
        let f = Field::from_fn(&g, |p| p[0] - 2.0 * p[1] + p[2] * p[2]);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (7 + g.len()));
        let back = Field::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, f);

        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), g.len() + 1);
        assert!(text.lines().nth(2).unwrap().starts_with("1,0,0,"));
    }

    proptest! {
        #[test]
        fn trilinear_is_exact_for_affine_fields(
            a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, d in -5.0..5.0f64,
            px in 0.0..3.0f64, py in 0.0..3.0f64, pz in 0.0..3.0f64,
        ) {
            let g = Grid::new([-0.5, 0.0, 0.25], 0.75, [5, 5, 5]).unwrap();
            let f = Field::from_fn(&g, |p| a + b * p[0] + c * p[1] + d * p[2]);
            let p = [px - 0.5, py, pz + 0.25];
            let v = trilinear(&f, p).unwrap();
            let exact = a + b * p[0] + c * p[1] + d * p[2];
            prop_assert!((v - exact).abs() < 1e-11);
        }

        #[test]
        fn trilinear_matches_eight_weight_blend(
            seed in 0u64..1000, px in 0.0..1.0f64, py in 0.0..1.0f64, pz in 0.0..1.0f64,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new([0.0; 3], 0.5, [4, 4, 4]).unwrap();
            let vals: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = Field::from_values(&g, vals).unwrap();
            // point in the cell with lower corner (1,1,1)
            let p = [0.5 + 0.5 * px, 0.5 + 0.5 * py, 0.5 + 0.5 * pz];
            let mut blend = 0.0;
            let mut wsum = 0.0;
            for corner in 0..8usize {
                let (di, dj, dk) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
                let w = (if di == 1 { px } else { 1.0 - px })
                    * (if dj == 1 { py } else { 1.0 - py })
                    * (if dk == 1 { pz } else { 1.0 - pz });
                wsum += w;
                blend += w * f.at(1 + di, 1 + dj, 1 + dk);
            }
            prop_assert!((wsum - 1.0).abs() < 1e-14);
            prop_assert!((trilinear(&f, p).unwrap() - blend).abs() < 1e-13);
        }
    }
}
