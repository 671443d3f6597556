//! Solute atoms, physical constants and the closed-form pieces of the
//! regularized model: the Coulomb (Green's function) component, its gradient,
//! the screened Dirichlet boundary data and the solvation energy.
//!
//! Potentials are carried in units of `k_B T / e_c`; lengths in angstrom.

use crate::error::{Error, Result};
use crate::grid::{trilinear, Field};

/// Coulomb constant `e_c^2 / (4 pi eps_0)` in kcal·Å/(mol·e²).
pub const COULOMB_KCAL: f64 = 332.0636;

/// `k_B T` at 298.15 K in kcal/mol.
pub const KBT_KCAL_298: f64 = 0.592183;

/// Conversion from ionic strength (molar) to the Debye-Hückel parameter, Å⁻².
pub const DEBYE_FACTOR: f64 = 8.486902807;

/// Evaluation points closer than this to an atom center are rejected.
pub const SINGULARITY_TOL: f64 = 1e-12;

/// Default solvent probe radius, Å.
pub const DEFAULT_PROBE_RADIUS: f64 = 1.4;

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(sub(a, b))
}

/// A solute atom: center (Å), partial charge (e) and radius (Å).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub center: [f64; 3],
    pub charge: f64,
    pub radius: f64,
}

impl Atom {
    pub fn new(center: [f64; 3], charge: f64, radius: f64) -> Result<Self> {
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::Validation(format!(
                "atom center {center:?} is not finite"
            )));
        }
        if !charge.is_finite() {
            return Err(Error::Validation("atom charge is not finite".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Validation(format!(
                "atom radius must be positive, got {radius}"
            )));
        }
        Ok(Atom {
            center,
            charge,
            radius,
        })
    }
}

/// Nonempty ordered set of atoms with pairwise distinct centers.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    atoms: Vec<Atom>,
}

impl AtomSet {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Validation("atom set is empty".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            for (j, b) in atoms.iter().enumerate().skip(i + 1) {
                if a.center == b.center {
                    return Err(Error::Validation(format!(
                        "atoms {i} and {j} share the center {:?}",
                        a.center
                    )));
                }
            }
        }
        Ok(AtomSet { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Atom> {
        self.atoms.iter()
    }

    /// Axis-aligned extremes of the union of atom spheres, each inflated by `inflate`.
    pub fn extent(&self, inflate: f64) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for a in &self.atoms {
            for d in 0..3 {
                lo[d] = lo[d].min(a.center[d] - a.radius - inflate);
                hi[d] = hi[d].max(a.center[d] + a.radius + inflate);
            }
        }
        (lo, hi)
    }

    /// Copy of the set with every center shifted by `delta`.
    pub fn translated(&self, delta: [f64; 3]) -> AtomSet {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                center: [
                    a.center[0] + delta[0],
                    a.center[1] + delta[1],
                    a.center[2] + delta[2],
                ],
                ..*a
            })
            .collect();
        AtomSet { atoms }
    }

    fn nearest_check(&self, p: [f64; 3]) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            if dist(p, a.center) <= SINGULARITY_TOL {
                return Err(Error::Singularity {
                    atom: i,
                    point: p,
                    tol: SINGULARITY_TOL,
                });
            }
        }
        Ok(())
    }
}

/// Dielectric, ionic and unit-conversion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Relative permittivity of the solute.
    pub eps_in: f64,
    /// Relative permittivity of the solvent.
    pub eps_out: f64,
    /// Ionic strength in mol/L. Informational once `kappa_sq` is set.
    pub ionic_strength: f64,
    /// Debye-Hückel parameter in the solvent, Å⁻².
    pub kappa_sq: f64,
    /// `e_c^2 / (k_B T)` in Å, the prefactor of the Coulomb terms.
    pub charge_factor: f64,
    /// `k_B T` in kcal/mol, converts `charge x potential` to energy.
    pub kbt_kcal: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            eps_in: 1.0,
            eps_out: 80.0,
            ionic_strength: 0.0,
            kappa_sq: 0.0,
            charge_factor: COULOMB_KCAL / KBT_KCAL_298,
            kbt_kcal: KBT_KCAL_298,
        }
    }
}

impl PhysicalParams {
    /// Parameters at the given ionic strength (molar), other values default.
    pub fn with_ionic_strength(ionic_strength: f64) -> Result<Self> {
        Ok(PhysicalParams {
            ionic_strength,
            kappa_sq: debye_kappa_sq(ionic_strength)?,
            ..Default::default()
        })
    }

    /// Parameters with the Debye-Hückel parameter set directly.
    pub fn with_kappa_sq(kappa_sq: f64) -> Self {
        PhysicalParams {
            ionic_strength: kappa_sq / DEBYE_FACTOR,
            kappa_sq,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_in > 0.0) || !(self.eps_out >= self.eps_in) {
            return Err(Error::Validation(format!(
                "permittivities must satisfy eps_out >= eps_in > 0 (got {} / {})",
                self.eps_in, self.eps_out
            )));
        }
        if !(self.kappa_sq >= 0.0) || !self.kappa_sq.is_finite() {
            return Err(Error::Validation(format!(
                "kappa^2 must be nonnegative, got {}",
                self.kappa_sq
            )));
        }
        if !(self.charge_factor > 0.0) || !(self.kbt_kcal > 0.0) {
            return Err(Error::Validation(
                "charge factor and k_B T must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Reads `x y z q r` records, one atom per line. Blank lines and lines whose
/// first non-blank character is `#` are skipped.
pub fn parse_atoms(text: &str) -> Result<AtomSet> {
    let mut atoms = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 5 fields `x y z q r`, found {}", fields.len()),
            });
        }
        let mut vals = [0.0; 5];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("`{f}`: {e}"),
            })?;
        }
        let atom = Atom::new([vals[0], vals[1], vals[2]], vals[3], vals[4]).map_err(|e| {
            match e {
                Error::Validation(msg) => Error::Validation(format!("line {lineno}: {msg}")),
                other => other,
            }
        })?;
        atoms.push(atom);
    }
    AtomSet::new(atoms)
}

/// Debye-Hückel parameter `kappa^2` (Å⁻²) at ionic strength `ionic` (molar).
pub fn debye_kappa_sq(ionic: f64) -> Result<f64> {
    if !(ionic >= 0.0) || !ionic.is_finite() {
        return Err(Error::Validation(format!(
            "ionic strength must be nonnegative, got {ionic}"
        )));
    }
    Ok(DEBYE_FACTOR * ionic)
}

/// Coulomb potential of the point charges in a uniform `eps_in` medium.
pub fn green_potential(atoms: &AtomSet, p: [f64; 3], params: &PhysicalParams) -> Result<f64> {
    atoms.nearest_check(p)?;
    let sum: f64 = atoms
        .iter()
        .map(|a| a.charge / dist(p, a.center))
        .sum();
    Ok(params.charge_factor * sum / params.eps_in)
}

/// Analytic gradient of [`green_potential`].
pub fn green_gradient(
    atoms: &AtomSet,
    p: [f64; 3],
    params: &PhysicalParams,
) -> Result<[f64; 3]> {
    atoms.nearest_check(p)?;
    let mut g = [0.0; 3];
    for a in atoms.iter() {
        let d = sub(p, a.center);
        let r = norm(d);
        let w = a.charge / (r * r * r);
        for k in 0..3 {
            g[k] -= w * d[k];
        }
    }
    let scale = params.charge_factor / params.eps_in;
    Ok([g[0] * scale, g[1] * scale, g[2] * scale])
}

/// Screened Coulomb superposition used as Dirichlet data on the box faces.
pub fn dirichlet_boundary(
    atoms: &AtomSet,
    p: [f64; 3],
    params: &PhysicalParams,
) -> Result<f64> {
    atoms.nearest_check(p)?;
    let screening = (params.kappa_sq / params.eps_out).sqrt();
    let sum: f64 = atoms
        .iter()
        .map(|a| {
            let r = dist(p, a.center);
            a.charge * (-r * screening).exp() / r
        })
        .sum();
    Ok(params.charge_factor * sum / params.eps_out)
}

/// Electrostatic solvation energy in kcal/mol: half the charge-weighted
/// reaction field, taking `u` (trilinearly interpolated) as the reaction field.
pub fn solvation_energy(u: &Field, atoms: &AtomSet, params: &PhysicalParams) -> Result<f64> {
    let mut sum = 0.0;
    for a in atoms.iter() {
        sum += a.charge * trilinear(u, a.center)?;
    }
    Ok(0.5 * params.kbt_kcal * sum)
}
