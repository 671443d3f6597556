//! Ghost-fluid modification of the 1D second-difference operator across an
//! interface with prescribed jumps, plus the tridiagonal line solver.
//!
//! A line has `n` nodes; nodes `0` and `n - 1` carry Dirichlet values and the
//! `n - 2` interior nodes are unknowns. The line operator is
//! `(δ̃²v)_i = g_{i-1}(v_{i-1} - v_i) + g_i(v_{i+1} - v_i) + c_i`, where `g_e`
//! is the conductance of edge `e` (joining nodes `e` and `e + 1`) and `c` is
//! the jump correction.

use crate::error::{Error, Result};
use crate::molecule::{green_gradient, green_potential, AtomSet, PhysicalParams};
use crate::surface::{Crossing, THETA_MIN};

/// Jumps at one crossing, measured as solvent value minus solute value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JumpData {
    /// Jump of the potential.
    pub a: f64,
    /// Jump of the flux component along the crossing's axis.
    pub b: f64,
}

impl JumpData {
    /// Jumps of the regularized unknown: `[u] = G` and `[ε u_ξ] = ε⁻ ∂_ξ G`.
    pub fn at_crossing(atoms: &AtomSet, params: &PhysicalParams, c: &Crossing) -> Result<JumpData> {
        let a = green_potential(atoms, c.location, params)?;
        let b = params.eps_in * green_gradient(atoms, c.location, params)?[c.axis.index()];
        Ok(JumpData { a, b })
    }
}

/// Interface cut of edge `edge` (from node `edge` to `edge + 1`) on a line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCut {
    pub edge: usize,
    pub theta: f64,
    pub jump: JumpData,
}

/// Assembled line operator.
///
/// `diag` and `off` hold the stiffness matrix `K = -A` on the interior nodes,
/// so `off <= 0` and `diag >= Σ|off|`; `A` itself is the negative
/// semidefinite discrete second derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSystem {
    /// Edge conductances, `n - 1` entries.
    pub cond: Vec<f64>,
    /// Diagonal of `K`, one entry per interior node.
    pub diag: Vec<f64>,
    /// Off-diagonal of `K` coupling interior nodes `m` and `m + 1`.
    pub off: Vec<f64>,
    /// Jump correction per interior node.
    pub corr: Vec<f64>,
    pub bc_lo: f64,
    pub bc_hi: f64,
}

/// Edge conductance and the corrections to its two end rows.
///
/// `inside_lo` tells which side of the interface the low node is on.
pub fn cut_edge(
    h: f64,
    theta: f64,
    eps_lo: f64,
    eps_hi: f64,
    inside_lo: bool,
    jump: JumpData,
) -> (f64, f64, f64) {
    let (ju, jf) = if inside_lo {
        (jump.a, jump.b)
    } else {
        (-jump.a, -jump.b)
    };
    let eh = eps_lo * eps_hi / (theta * eps_hi + (1.0 - theta) * eps_lo);
    let g = eh / (h * h);
    let c_lo = -g * ju - eh * jf * (1.0 - theta) / (eps_hi * h);
    let c_hi = g * ju - eh * jf * theta / (eps_lo * h);
    (g, c_lo, c_hi)
}

/// Builds the operator of one line from the side pattern and its cuts.
pub fn assemble_line(
    h: f64,
    inside: &[bool],
    eps_in: f64,
    eps_out: f64,
    cuts: &[LineCut],
    bc_lo: f64,
    bc_hi: f64,
) -> Result<LineSystem> {
    let n = inside.len();
    if n < 3 {
        return Err(Error::Assembly(format!("line needs at least 3 nodes, got {n}")));
    }
    if !(eps_in > 0.0 && eps_out > 0.0) {
        return Err(Error::Assembly("permittivities must be positive".into()));
    }
    let eps = |m: usize| if inside[m] { eps_in } else { eps_out };
    let mut cut_at: Vec<Option<&LineCut>> = vec![None; n - 1];
    for c in cuts {
        if c.edge + 1 >= n {
            return Err(Error::Assembly(format!("cut on edge {} of a {n}-node line", c.edge)));
        }
        if !(c.theta >= THETA_MIN && c.theta <= 1.0 - THETA_MIN) {
            return Err(Error::Assembly(format!("fraction {} outside the clamp range", c.theta)));
        }
        if inside[c.edge] == inside[c.edge + 1] {
            return Err(Error::Assembly(format!("cut on same-side edge {}", c.edge)));
        }
        if cut_at[c.edge].replace(c).is_some() {
            return Err(Error::Assembly(format!("two cuts on edge {}", c.edge)));
        }
    }

    let mut cond = vec![0.0; n - 1];
    let mut full_corr = vec![0.0; n];
    for e in 0..n - 1 {
        match cut_at[e] {
            Some(c) => {
                let (g, lo, hi) = cut_edge(h, c.theta, eps(e), eps(e + 1), inside[e], c.jump);
                cond[e] = g;
                full_corr[e] += lo;
                full_corr[e + 1] += hi;
            }
            None => {
                if inside[e] != inside[e + 1] {
                    return Err(Error::Assembly(format!("edge {e} changes side without jump data")));
                }
                cond[e] = eps(e) / (h * h);
            }
        }
    }
    let m = n - 2;
    let diag: Vec<f64> = (1..=m).map(|i| cond[i - 1] + cond[i]).collect();
    let off: Vec<f64> = (1..m).map(|i| -cond[i]).collect();
    let sys = LineSystem {
        diag,
        off,
        corr: full_corr[1..n - 1].to_vec(),
        cond,
        bc_lo,
        bc_hi,
    };
    sys.check_invariants()?;
    Ok(sys)
}

impl LineSystem {
    pub fn interior_len(&self) -> usize {
        self.diag.len()
    }

    /// Symmetry, sign and diagonal-dominance checks.
    pub fn check_invariants(&self) -> Result<()> {
        let m = self.diag.len();
        for i in 0..m {
            // coefficient of row i towards i + 1 and of row i + 1 towards i
            if i + 1 < m {
                let right = -self.cond[i + 1];
                let left = self.off[i];
                if right != left {
                    return Err(Error::Assembly(format!("asymmetric coupling at row {i}")));
                }
                if self.off[i] > 0.0 {
                    return Err(Error::Assembly(format!("positive off-diagonal at row {i}")));
                }
            }
            let mut offsum = 0.0;
            if i > 0 {
                offsum += self.off[i - 1].abs();
            }
            if i + 1 < m {
                offsum += self.off[i].abs();
            }
            if !(self.diag[i] >= offsum) || !self.diag[i].is_finite() {
                return Err(Error::Assembly(format!("row {i} is not diagonally dominant")));
            }
            if !self.corr[i].is_finite() {
                return Err(Error::Assembly(format!("non-finite correction at row {i}")));
            }
        }
        Ok(())
    }

    /// Correction plus the Dirichlet contributions of the end nodes.
    pub fn known_terms(&self) -> Vec<f64> {
        let mut k = self.corr.clone();
        let m = k.len();
        k[0] += self.cond[0] * self.bc_lo;
        k[m - 1] += self.cond[m] * self.bc_hi;
        k
    }

    /// `δ̃²v` on the interior nodes.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        apply_operator(self, v)
    }

    /// Solves `(I - τ δ̃²) x = rhs` on the interior nodes.
    pub fn solve_shifted(&self, tau: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.diag.len();
        if rhs.len() != m {
            return Err(Error::Validation(format!("rhs has {} entries, line has {m}", rhs.len())));
        }
        let known = self.known_terms();
        let diag: Vec<f64> = self.diag.iter().map(|d| 1.0 + tau * d).collect();
        let off: Vec<f64> = self.off.iter().map(|o| tau * o).collect();
        let r: Vec<f64> = rhs.iter().zip(&known).map(|(r, k)| r + tau * k).collect();
        thomas_solve(&off, &diag, &off, &r)
    }
}

/// `A v + c` including the Dirichlet end values.
pub fn apply_operator(sys: &LineSystem, v: &[f64]) -> Result<Vec<f64>> {
    let m = sys.diag.len();
    if v.len() != m {
        return Err(Error::Validation(format!("vector has {} entries, line has {m}", v.len())));
    }
    let mut out = sys.known_terms();
    for i in 0..m {
        let mut kv = sys.diag[i] * v[i];
        if i > 0 {
            kv += sys.off[i - 1] * v[i - 1];
        }
        if i + 1 < m {
            kv += sys.off[i] * v[i + 1];
        }
        out[i] -= kv;
    }
    Ok(out)
}

/// Tridiagonal solve: `sub[i]` couples row `i + 1` to column `i`, `sup[i]`
/// couples row `i` to column `i + 1`.
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || sub.len() + 1 != n.max(1) || sup.len() + 1 != n.max(1) {
        return Err(Error::Validation("tridiagonal system has inconsistent lengths".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut den = diag[0];
    for i in 0..n {
        if i > 0 {
            den = diag[i] - sub[i - 1] * cp[i - 1];
        }
        if den == 0.0 || !den.is_finite() {
            return Err(Error::Numerical(format!("zero pivot in tridiagonal row {i}")));
        }
        cp[i] = if i + 1 < n { sup[i] / den } else { 0.0 };
        dp[i] = if i > 0 {
            (rhs[i] - sub[i - 1] * dp[i - 1]) / den
        } else {
            rhs[0] / den
        };
    }
    for i in (0..n - 1).rev() {
        dp[i] -= cp[i] * dp[i + 1];
    }
    Ok(dp)
}
