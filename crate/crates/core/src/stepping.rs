//! One pseudo-time step of the regularized equation
//! `u_t = ∇·(ε∇u) − κ² sinh(u)`: exact integration of the reaction term
//! combined with Douglas ADI or Crank–Nicolson LOD sweeps of the GFM
//! operators.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gfm::JumpData;
use crate::grid::{Axis, Field, Grid};
use crate::molecule::{AtomSet, PhysicalParams};
use crate::operator::{boundary_values, SpatialOperator};
use crate::surface::InterfaceData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepScheme {
    #[default]
    Adi,
    Lod,
}

impl FromStr for StepScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adi" => Ok(StepScheme::Adi),
            "lod" => Ok(StepScheme::Lod),
            _ => Err(Error::Validation(format!("unknown scheme '{s}' (expected adi or lod)"))),
        }
    }
}

impl fmt::Display for StepScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepScheme::Adi => "ADI",
            StepScheme::Lod => "LOD",
        })
    }
}

/// Reaction term integrated in the nonlinear substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reaction {
    /// `−κ² sinh(w)`.
    #[default]
    Sinh,
    /// `−κ² w`, the linearized equation.
    Linear,
}

/// Exact solution after time `dt` of `w' = −s κ² sinh(w)` from `w0`.
pub fn sinh_decay(w0: f64, kappa_sq: f64, dt: f64, strength: f64) -> f64 {
    let rate = strength * kappa_sq * dt;
    if rate == 0.0 || w0 == 0.0 {
        return w0;
    }
    let a = (-rate).exp();
    let one_minus_a = -(-rate).exp_m1();
    let e = (-w0.abs()).exp();
    let one_minus_e = -(-w0.abs()).exp_m1();
    let den = one_minus_a + e * (1.0 + a);
    let mag = (2.0 * a * one_minus_e / den).ln_1p();
    mag.copysign(w0)
}

/// Applies the reaction substep in place on interior nodes.
pub fn nonlinear_substep(
    w: &mut [f64],
    kappa_sq: &[f64],
    interior: &[bool],
    dt: f64,
    strength: f64,
    reaction: Reaction,
) -> Result<()> {
    if !(dt >= 0.0) {
        return Err(Error::Validation(format!("time step must be nonnegative, got {dt}")));
    }
    w.par_iter_mut()
        .zip(kappa_sq.par_iter())
        .zip(interior.par_iter())
        .for_each(|((wi, &k), &inner)| {
            if inner && k > 0.0 {
                *wi = match reaction {
                    Reaction::Sinh => sinh_decay(*wi, k, dt, strength),
                    Reaction::Linear => *wi * (-strength * k * dt).exp(),
                };
            }
        });
    Ok(())
}

/// A fully assembled problem: geometry, coefficients, Dirichlet data and the
/// per-axis operators.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub atoms: AtomSet,
    pub params: PhysicalParams,
    pub interface: InterfaceData,
    /// Jump data at every crossing, parallel to `interface.crossings`.
    pub jumps: [Vec<JumpData>; 3],
    /// `κ²` per node: the solvent value outside, 0 in the solute.
    pub kappa_sq: Vec<f64>,
    pub interior: Vec<bool>,
    /// `φ_b` on boundary nodes, 0 on interior nodes.
    pub boundary: Field,
    pub op: SpatialOperator,
}

impl Problem {
    pub fn new(grid: &Grid, atoms: &AtomSet, params: &PhysicalParams, interface: InterfaceData) -> Result<Problem> {
        params.validate()?;
        interface.validate(grid)?;
        interface.check_boundary_outside(grid)?;
        for (n, a) in atoms.iter().enumerate() {
            let idx = nearest_node(grid, a.center);
            if !interface.inside[idx] {
                return Err(Error::Validation(format!(
                    "atom {n} at {:?} is not enclosed by the interface",
                    a.center
                )));
            }
        }
        let jumps: [Result<Vec<JumpData>>; 3] = [0, 1, 2].map(|ax| {
            interface.crossings[ax]
                .par_iter()
                .map(|c| JumpData::at_crossing(atoms, params, c))
                .collect::<Result<Vec<_>>>()
        });
        let [jx, jy, jz] = jumps;
        let jumps = [jx?, jy?, jz?];
        let boundary = boundary_values(grid, atoms, params)?;
        let op = SpatialOperator::assemble(grid, &interface, &jumps, params, &boundary.values)?;
        let kappa_sq = interface
            .inside
            .iter()
            .map(|&inside| if inside { 0.0 } else { params.kappa_sq })
            .collect();
        let interior = (0..grid.len()).map(|i| !grid.is_boundary_index(i)).collect();
        Ok(Problem {
            grid: *grid,
            atoms: atoms.clone(),
            params: *params,
            interface,
            jumps,
            kappa_sq,
            interior,
            boundary,
            op,
        })
    }

    /// `u = 0` inside with `φ_b` on the boundary.
    pub fn zero_state(&self) -> Field {
        self.boundary.clone()
    }

    /// `Σ_ξ δ̃²_ξ v`, the full discrete operator.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; v.len()];
        let mut part = vec![0.0; v.len()];
        for axis in Axis::ALL {
            self.op.apply(axis, v, &mut part);
            total.iter_mut().zip(&part).for_each(|(t, p)| *t += p);
        }
        total
    }
}

fn nearest_node(grid: &Grid, p: [f64; 3]) -> usize {
    let c = |a: usize| {
        let x = ((p[a] - grid.origin[a]) / grid.h).round();
        (x.max(0.0) as usize).min(grid.n[a] - 1)
    };
    grid.index(c(0), c(1), c(2))
}

/// Scratch buffers reused across steps.
#[derive(Debug, Default)]
pub struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl Workspace {
    fn ensure(&mut self, n: usize) {
        for v in [&mut self.a, &mut self.b, &mut self.c, &mut self.d] {
            v.resize(n, 0.0);
        }
    }
}

/// Advances `u` by one step of the chosen scheme.
pub fn step(
    problem: &Problem,
    scheme: StepScheme,
    u: &mut Field,
    dt: f64,
    reaction: Reaction,
    ws: &mut Workspace,
) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    match scheme {
        StepScheme::Adi => adi_step(problem, u, dt, reaction, ws),
        StepScheme::Lod => lod_step(problem, u, dt, reaction, ws),
    }
}

/// Douglas ADI step preceded by the full reaction substep.
pub fn adi_step(problem: &Problem, u: &mut Field, dt: f64, reaction: Reaction, ws: &mut Workspace) -> Result<()> {
    let n = problem.grid.len();
    ws.ensure(n);
    let op = &problem.op;
    let w = &mut u.values;
    nonlinear_substep(w, &problem.kappa_sq, &problem.interior, dt, 1.0, reaction)?;
    let (ly, lz, rhs, v) = (&mut ws.a, &mut ws.b, &mut ws.c, &mut ws.d);
    op.apply(Axis::Y, w, ly);
    op.apply(Axis::Z, w, lz);
    rhs.par_iter_mut()
        .zip(w.par_iter())
        .zip(ly.par_iter().zip(lz.par_iter()))
        .for_each(|((r, &wi), (&y, &z))| *r = wi + dt * (y + z));
    op.solve(Axis::X, dt, rhs, v)?;
    rhs.par_iter_mut()
        .zip(v.par_iter().zip(ly.par_iter()))
        .for_each(|(r, (&vi, &y))| *r = vi - dt * y);
    op.solve(Axis::Y, dt, rhs, v)?;
    rhs.par_iter_mut()
        .zip(v.par_iter().zip(lz.par_iter()))
        .for_each(|(r, (&vi, &z))| *r = vi - dt * z);
    op.solve(Axis::Z, dt, rhs, w)?;
    reset_boundary(problem, w);
    Ok(())
}

/// Crank–Nicolson LOD step between two half-strength reaction substeps.
pub fn lod_step(problem: &Problem, u: &mut Field, dt: f64, reaction: Reaction, ws: &mut Workspace) -> Result<()> {
    let n = problem.grid.len();
    ws.ensure(n);
    let op = &problem.op;
    let v = &mut u.values;
    nonlinear_substep(v, &problem.kappa_sq, &problem.interior, dt, 0.5, reaction)?;
    let half = 0.5 * dt;
    let (l, rhs) = (&mut ws.a, &mut ws.b);
    for axis in Axis::ALL {
        op.apply(axis, v, l);
        rhs.par_iter_mut()
            .zip(v.par_iter().zip(l.par_iter()))
            .for_each(|(r, (&vi, &li))| *r = vi + half * li);
        op.solve(axis, half, rhs, v)?;
    }
    nonlinear_substep(v, &problem.kappa_sq, &problem.interior, dt, 0.5, reaction)?;
    reset_boundary(problem, v);
    Ok(())
}

fn reset_boundary(problem: &Problem, v: &mut [f64]) {
    v.par_iter_mut()
        .zip(problem.boundary.values.par_iter())
        .zip(problem.interior.par_iter())
        .for_each(|((x, &b), &inner)| {
            if !inner {
                *x = b;
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfm::{assemble_line, LineCut};
    use crate::molecule::Atom;
    use crate::surface::{classify_sphere, classify_union};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rk4(w0: f64, k: f64, dt: f64, s: f64) -> f64 {
        let steps = 200_000;
        let h = dt / steps as f64;
        let f = |w: f64| -s * k * w.sinh();
        let mut w = w0;
        for _ in 0..steps {
            let k1 = f(w);
            let k2 = f(w + 0.5 * h * k1);
            let k3 = f(w + 0.5 * h * k2);
            let k4 = f(w + h * k3);
            w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        w
    }

    #[test]
    fn sinh_decay_matches_rk4() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        assert!((sinh_decay(1.0, 1.0, 0.1, 1.0) - rk4(1.0, 1.0, 0.1, 1.0)).abs() < 1e-10);
        for _ in 0..100 {
            let w0 = rng.gen_range(-8.0..8.0);
            let k = rng.gen_range(0.0..2.0);
            let dt = rng.gen_range(0.0..1.0);
            let s = if rng.gen_bool(0.5) { 1.0 } else { 0.5 };
            let exact = sinh_decay(w0, k, dt, s);
            let oracle = rk4(w0, k, dt, s);
            assert!((exact - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{w0} {k} {dt} {s}");
        }
    }

    #[test]
    fn sinh_decay_handles_large_arguments() {
        let w = sinh_decay(800.0, 1.0, 0.01, 1.0);
        assert!(w.is_finite() && w < 800.0 && w > 0.0);
        assert_eq!(sinh_decay(0.0, 1.0, 1.0, 1.0), 0.0);
        assert_eq!(sinh_decay(2.0, 0.0, 1.0, 1.0), 2.0);
    }

    proptest! {
        #[test]
        fn substep_contracts_and_keeps_sign(w0 in -50.0f64..50.0, k in 0.0f64..5.0, dt in 0.0f64..2.0) {
            let w = sinh_decay(w0, k, dt, 1.0);
            prop_assert!(w.abs() <= w0.abs());
            prop_assert!(w == 0.0 || w.signum() == w0.signum());
        }

        #[test]
        fn substep_is_odd(w0 in 0.0f64..30.0, k in 0.0f64..5.0, dt in 0.0f64..2.0) {
            prop_assert_eq!(sinh_decay(-w0, k, dt, 0.5), -sinh_decay(w0, k, dt, 0.5));
        }
    }

    fn kirkwood(grid: &Grid, kappa_sq: f64) -> Problem {
        let atoms = AtomSet::new(vec![Atom::new([0.0; 3], 1.0, 2.0).unwrap()]).unwrap();
        let params = PhysicalParams::with_kappa_sq(kappa_sq);
        let iface = classify_sphere(grid, [0.0; 3], 2.0).unwrap();
        Problem::new(grid, &atoms, &params, iface).unwrap()
    }

    type Dense = Vec<Vec<f64>>;

    /// Dense per-axis operators `M_ξ v + c_ξ` over all nodes, built line by
    /// line from the 1D assembly.
    fn dense_axes(p: &Problem) -> [(Dense, Vec<f64>); 3] {
        let g = &p.grid;
        let n = g.len();
        let imap = p.interface.crossing_index(g);
        Axis::ALL.map(|axis| {
            let a = axis.index();
            let s = g.stride(axis);
            let mut m = vec![vec![0.0; n]; n];
            let mut c = vec![0.0; n];
            for start in 0..n {
                let ijk = g.ijk(start);
                if ijk[a] != 0 || (0..3).any(|d| d != a && (ijk[d] == 0 || ijk[d] + 1 == g.n[d])) {
                    continue;
                }
                let len = g.n[a];
                let nodes: Vec<usize> = (0..len).map(|q| start + q * s).collect();
                let inside: Vec<bool> = nodes.iter().map(|&q| p.interface.inside[q]).collect();
                let cuts: Vec<LineCut> = (0..len - 1)
                    .filter_map(|e| {
                        imap[a].get(&nodes[e]).map(|&ci| {
                            let cr = &p.interface.crossings[a][ci];
                            LineCut {
                                edge: e,
                                theta: cr.theta,
                                jump: JumpData::at_crossing(&p.atoms, &p.params, cr).unwrap(),
                            }
                        })
                    })
                    .collect();
                let sys = assemble_line(g.h, &inside, p.params.eps_in, p.params.eps_out, &cuts, 0.0, 0.0).unwrap();
                for q in 1..len - 1 {
                    let row = nodes[q];
                    m[row][nodes[q - 1]] += sys.cond[q - 1];
                    m[row][nodes[q + 1]] += sys.cond[q];
                    m[row][row] -= sys.cond[q - 1] + sys.cond[q];
                    c[row] = sys.corr[q - 1];
                }
            }
            (m, c)
        })
    }

    fn matvec(m: &Dense, v: &[f64]) -> Vec<f64> {
        m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    fn dense_solve(mut a: Dense, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let pivot = a[col][col];
            for r in col + 1..n {
                let f = a[r][col] / pivot;
                if f == 0.0 {
                    continue;
                }
                for cc in col..n {
                    a[r][cc] -= f * a[col][cc];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|cc| a[r][cc] * x[cc]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    /// `(I − τ M) x = rhs + τ c`.
    fn implicit(m: &Dense, c: &[f64], tau: f64, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let a: Dense = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - tau * m[i][j]).collect())
            .collect();
        let b: Vec<f64> = rhs.iter().zip(c).map(|(r, ci)| r + tau * ci).collect();
        dense_solve(a, b)
    }

    fn explicit(m: &Dense, c: &[f64], v: &[f64]) -> Vec<f64> {
        matvec(m, v).iter().zip(c).map(|(a, b)| a + b).collect()
    }

    fn small_problem(kappa_sq: f64) -> Problem {
        let grid = Grid::new([-1.5; 3], 0.5, [7; 3]).unwrap();
        let atoms = AtomSet::new(vec![Atom::new([0.1, -0.05, 0.0], 1.0, 0.9).unwrap()]).unwrap();
        let iface = classify_union(&grid, &atoms, 0.0).unwrap();
        Problem::new(&grid, &atoms, &PhysicalParams::with_kappa_sq(kappa_sq), iface).unwrap()
    }

    fn random_state(p: &Problem, seed: u64) -> Field {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut u = p.zero_state();
        for (i, v) in u.values.iter_mut().enumerate() {
            if p.interior[i] {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        u
    }

    #[test]
    fn adi_matches_dense_splitting_formulas() {
        let p = small_problem(0.7);
        let [(mx, cx), (my, cy), (mz, cz)] = dense_axes(&p);
        let u0 = random_state(&p, 4);
        let dt = 0.013;
        let mut w = u0.values.clone();
        for (i, x) in w.iter_mut().enumerate() {
            if p.interior[i] {
                *x = sinh_decay(*x, p.kappa_sq[i], dt, 1.0);
            }
        }
        let ly = explicit(&my, &cy, &w);
        let lz = explicit(&mz, &cz, &w);
        let r1: Vec<f64> = (0..w.len()).map(|i| w[i] + dt * (ly[i] + lz[i])).collect();
        let v1 = implicit(&mx, &cx, dt, &r1);
        let r2: Vec<f64> = (0..w.len()).map(|i| v1[i] - dt * ly[i]).collect();
        let v2 = implicit(&my, &cy, dt, &r2);
        let r3: Vec<f64> = (0..w.len()).map(|i| v2[i] - dt * lz[i]).collect();
        let expect = implicit(&mz, &cz, dt, &r3);

        let mut u = u0.clone();
        adi_step(&p, &mut u, dt, Reaction::Sinh, &mut Workspace::default()).unwrap();
        for (a, b) in u.values.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn lod_matches_dense_factors() {
        let p = small_problem(0.7);
        let axes = dense_axes(&p);
        let u0 = random_state(&p, 5);
        let dt = 0.021;
        let mut v = u0.values.clone();
        let react = |v: &mut Vec<f64>| {
            for (i, x) in v.iter_mut().enumerate() {
                if p.interior[i] {
                    *x = sinh_decay(*x, p.kappa_sq[i], dt, 0.5);
                }
            }
        };
        react(&mut v);
        for (m, c) in &axes {
            let l = explicit(m, c, &v);
            let r: Vec<f64> = (0..v.len()).map(|i| v[i] + 0.5 * dt * l[i]).collect();
            v = implicit(m, c, 0.5 * dt, &r);
        }
        react(&mut v);
        let mut u = u0.clone();
        lod_step(&p, &mut u, dt, Reaction::Sinh, &mut Workspace::default()).unwrap();
        for (a, b) in u.values.iter().zip(&v) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    /// Discrete steady state of the full operator by a dense solve.
    fn steady_state(p: &Problem) -> Vec<f64> {
        let [(mx, cx), (my, cy), (mz, cz)] = dense_axes(p);
        let n = p.grid.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for i in 0..n {
            if !p.interior[i] {
                a[i][i] = 1.0;
                b[i] = p.boundary.values[i];
                continue;
            }
            for j in 0..n {
                a[i][j] = mx[i][j] + my[i][j] + mz[i][j];
            }
            b[i] = -(cx[i] + cy[i] + cz[i]);
        }
        dense_solve(a, b)
    }

    fn nine_cube() -> Problem {
        let grid = Grid::new([-2.0; 3], 0.5, [9; 3]).unwrap();
        let atoms = AtomSet::new(vec![
            Atom::new([-0.3, 0.0, 0.1], 1.0, 0.9).unwrap(),
            Atom::new([0.5, 0.2, -0.1], -0.5, 0.8).unwrap(),
        ])
        .unwrap();
        let iface = classify_union(&grid, &atoms, 0.0).unwrap();
        Problem::new(&grid, &atoms, &PhysicalParams::default(), iface).unwrap()
    }

    #[test]
    fn adi_preserves_the_discrete_steady_state() {
        let p = nine_cube();
        let us = steady_state(&p);
        let res = p.residual(&us);
        assert!(res.iter().all(|r| r.abs() < 1e-8));
        let scale = us.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for dt in [0.001, 0.1, 1.0] {
            let mut u = Field::from_values(&p.grid, us.clone()).unwrap();
            adi_step(&p, &mut u, dt, Reaction::Sinh, &mut Workspace::default()).unwrap();
            for (a, b) in u.values.iter().zip(&us) {
                assert!((a - b).abs() <= 1e-10 * scale, "dt {dt}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn lod_nearly_preserves_the_steady_state() {
        let p = nine_cube();
        let us = steady_state(&p);
        let dt = 0.001;
        let mut u = Field::from_values(&p.grid, us.clone()).unwrap();
        lod_step(&p, &mut u, dt, Reaction::Sinh, &mut Workspace::default()).unwrap();
        let cmax = Axis::ALL
            .iter()
            .flat_map(|&a| p.op.axes[a.index()].jc.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let drift = u.values.iter().zip(&us).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(drift <= 5.0 * dt * cmax, "drift {drift}, bound {}", 5.0 * dt * cmax);
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = Grid::new([-3.0; 3], 0.5, [13; 3]).unwrap();
        let atoms = AtomSet::new(vec![Atom::new([0.0; 3], 0.0, 1.5).unwrap()]).unwrap();
        let iface = classify_union(&grid, &atoms, 0.0).unwrap();
        let p = Problem::new(&grid, &atoms, &PhysicalParams::with_kappa_sq(1.0), iface).unwrap();
        for scheme in [StepScheme::Adi, StepScheme::Lod] {
            let mut u = p.zero_state();
            step(&p, scheme, &mut u, 0.1, Reaction::Sinh, &mut Workspace::default()).unwrap();
            assert!(u.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn kirkwood_relaxes_towards_born() {
        let grid = Grid::new([-4.0; 3], 0.5, [17; 3]).unwrap();
        let p = kirkwood(&grid, 0.0);
        let mut u = p.zero_state();
        let mut ws = Workspace::default();
        for _ in 0..400 {
            adi_step(&p, &mut u, 0.01, Reaction::Sinh, &mut ws).unwrap();
        }
        let e = crate::molecule::solvation_energy(&u, &p.atoms, &p.params).unwrap();
        assert!((e + 81.98).abs() < 3.0, "E = {e}");
    }

    #[test]
    fn unenclosed_atom_is_rejected() {
        let grid = Grid::new([-4.0; 3], 0.5, [17; 3]).unwrap();
        let atoms = AtomSet::new(vec![Atom::new([0.0; 3], 1.0, 2.0).unwrap()]).unwrap();
        let iface = classify_sphere(&grid, [2.0, 0.0, 0.0], 1.0).unwrap();
        assert!(Problem::new(&grid, &atoms, &PhysicalParams::default(), iface).is_err());
    }
}
