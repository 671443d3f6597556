//! Run orchestration: problem setup, initial conditions, the pseudo-time loop
//! with energy tracing, schedule runs, convergence and scaling studies, and
//! field export.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use crate::control::{error_norm, should_stop, ControllerConfig, ControllerKind, ControllerState, TIME_EPS};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Field, Grid};
use crate::molecule::{
    green_potential, solvation_energy, Atom, AtomSet, PhysicalParams, DEFAULT_PROBE_RADIUS, SINGULARITY_TOL,
};
use crate::stepping::{step, Problem, Reaction, StepScheme, Workspace};
use crate::surface::{classify_ses_grid, classify_sphere, classify_union, import_interface, InterfaceData, SesOptions};

/// Energies beyond this magnitude (kcal/mol) are treated as divergence.
pub const DIVERGENCE_ENERGY: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum SurfaceKind {
    /// Exact sphere of the single atom.
    Sphere,
    /// Union of the atom spheres.
    #[default]
    Vdw,
    /// Grid solvent-excluded surface.
    SesGrid,
    /// Interface file in the interchange format.
    Import(PathBuf),
}

impl FromStr for SurfaceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("import:") {
            return Ok(SurfaceKind::Import(PathBuf::from(path)));
        }
        match s.to_ascii_lowercase().as_str() {
            "sphere" => Ok(SurfaceKind::Sphere),
            "vdw" => Ok(SurfaceKind::Vdw),
            "ses-grid" | "ses" => Ok(SurfaceKind::SesGrid),
            _ => Err(Error::Validation(format!(
                "unknown surface '{s}' (expected sphere, vdw, ses-grid or import:PATH)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialKind {
    #[default]
    Zero,
    /// Steady state of the linearized equation.
    Lpb,
}

impl FromStr for InitialKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(InitialKind::Zero),
            "lpb" => Ok(InitialKind::Lpb),
            _ => Err(Error::Validation(format!("unknown initial condition '{s}'"))),
        }
    }
}

impl fmt::Display for InitialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialKind::Zero => "zero",
            InitialKind::Lpb => "lpb",
        })
    }
}

/// Everything needed to set up and run one solve.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub atoms: AtomSet,
    pub h: f64,
    pub probe_radius: f64,
    /// Explicit box `(lo, hi)`; otherwise the box comes from the atoms.
    pub box_override: Option<([f64; 3], [f64; 3])>,
    pub surface: SurfaceKind,
    pub ses_refine: bool,
    pub scheme: StepScheme,
    pub controller: ControllerConfig,
    pub ic: InitialKind,
    pub params: PhysicalParams,
}

impl RunConfig {
    pub fn new(atoms: AtomSet, h: f64) -> Self {
        RunConfig {
            atoms,
            h,
            probe_radius: DEFAULT_PROBE_RADIUS,
            box_override: None,
            surface: SurfaceKind::default(),
            ses_refine: true,
            scheme: StepScheme::default(),
            controller: ControllerConfig::default(),
            ic: InitialKind::default(),
            params: PhysicalParams::default(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        match self.box_override {
            Some((lo, hi)) => Grid::covering(lo, hi, self.h),
            None => build_grid(&self.atoms, self.h, self.probe_radius),
        }
    }

    pub fn interface(&self, grid: &Grid) -> Result<(Grid, InterfaceData)> {
        let data = match &self.surface {
            SurfaceKind::Sphere => {
                if self.atoms.len() != 1 {
                    return Err(Error::Validation(format!(
                        "the sphere surface needs exactly one atom, got {}",
                        self.atoms.len()
                    )));
                }
                let a = self.atoms.atoms()[0];
                classify_sphere(grid, a.center, a.radius)?
            }
            SurfaceKind::Vdw => classify_union(grid, &self.atoms, 0.0)?,
            SurfaceKind::SesGrid => classify_ses_grid(
                grid,
                &self.atoms,
                SesOptions {
                    probe_radius: self.probe_radius,
                    refine: self.ses_refine,
                },
            )?,
            SurfaceKind::Import(path) => {
                let text = std::fs::read_to_string(path)?;
                let (g, d) = import_interface(&text)?;
                return Ok((g, d));
            }
        };
        Ok((*grid, data))
    }

    /// Builds the grid, interface and operators.
    pub fn problem(&self) -> Result<Problem> {
        self.params.validate()?;
        self.controller.validate()?;
        let grid = self.grid()?;
        let (grid, iface) = self.interface(&grid)?;
        Problem::new(&grid, &self.atoms, &self.params, iface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    /// Controller error of this step (NaN for the constant controller).
    pub error: f64,
    pub factor: f64,
    pub energy: f64,
    pub delta_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Horizon,
    Tolerance,
    AfterMinimum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub initial_energy: f64,
    pub records: Vec<StepRecord>,
    pub stop: StopReason,
    /// Wall time of the stepping loop, seconds.
    pub wall_time: f64,
}

impl EnergyTrace {
    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(self.initial_energy, |r| r.energy)
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    /// CSV with columns `step,t,dt,e_n,F,E_sol,dE`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,t,dt,e_n,F,E_sol,dE")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step, r.t, r.dt, r.error, r.factor, r.energy, r.delta_energy
            )?;
        }
        Ok(())
    }
}

/// How the step size is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    Controller(ControllerConfig),
    /// Piecewise-constant steps `(t_switch, dt)` with increasing switch times;
    /// stopping follows the embedded constant-controller settings.
    Schedule(Vec<(f64, f64)>, ControllerConfig),
}

fn energy_of(problem: &Problem, u: &Field) -> Result<f64> {
    solvation_energy(u, &problem.atoms, &problem.params)
}

/// Pseudo-time loop from `u` (updated in place).
pub fn run_loop(
    problem: &Problem,
    scheme: StepScheme,
    u: &mut Field,
    rule: &StepRule,
    reaction: Reaction,
) -> Result<EnergyTrace> {
    let (cfg, schedule) = match rule {
        StepRule::Controller(c) => (*c, None),
        StepRule::Schedule(s, c) => {
            if s.is_empty() || s.windows(2).any(|w| w[1].0 <= w[0].0) || s.iter().any(|p| !(p.1 > 0.0)) {
                return Err(Error::Validation(
                    "schedule needs increasing switch times and positive steps".into(),
                ));
            }
            let c = ControllerConfig {
                kind: ControllerKind::Constant,
                dt: s[0].1,
                ..*c
            };
            (c, Some(s.as_slice()))
        }
    };
    cfg.validate()?;
    let norm = cfg.kind.norm();
    let mut state = ControllerState::new(&cfg);
    let mut ws = Workspace::default();
    let mut prev = if norm.is_some() { u.values.clone() } else { Vec::new() };
    let initial_energy = energy_of(problem, u)?;
    let mut energy = initial_energy;
    let mut t = 0.0;
    let mut records = Vec::new();
    let start = Instant::now();
    let mut stop = StopReason::Horizon;
    while t < cfg.t_end - TIME_EPS {
        let mut dt = match schedule {
            Some(s) => s.iter().rev().find(|p| t >= p.0 - TIME_EPS).map_or(s[0].1, |p| p.1),
            None => state.dt,
        };
        dt = dt.min(cfg.t_end - t);
        state.dt = dt;
        if norm.is_some() {
            prev.copy_from_slice(&u.values);
        }
        step(problem, scheme, u, dt, reaction, &mut ws)?;
        t += dt;
        let n = records.len() + 1;
        if !u.all_finite() {
            return Err(Error::Divergence {
                step: n,
                t,
                reason: "non-finite potential".into(),
            });
        }
        let e = energy_of(problem, u)?;
        if !e.is_finite() || e.abs() > DIVERGENCE_ENERGY {
            return Err(Error::Divergence {
                step: n,
                t,
                reason: format!("energy {e} out of range"),
            });
        }
        let de = e - energy;
        energy = e;
        let err = norm.map_or(f64::NAN, |k| error_norm(k, &u.values, &prev, e, e - de));
        state.update(&cfg, err);
        records.push(StepRecord {
            step: n,
            t,
            dt,
            error: err,
            factor: state.factor,
            energy: e,
            delta_energy: de,
        });
        if should_stop(t, de, &state, &cfg) {
            stop = if t >= cfg.t_end - TIME_EPS {
                StopReason::Horizon
            } else if de.abs() < cfg.tol {
                StopReason::Tolerance
            } else {
                StopReason::AfterMinimum
            };
            break;
        }
    }
    Ok(EnergyTrace {
        initial_energy,
        records,
        stop,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Settings of the linearized pre-solve.
pub const LPB_DT: f64 = 0.01;
pub const LPB_TOL: f64 = 1e-3;
pub const LPB_T_END: f64 = 10.0;

/// Zero state, or the linearized steady state reached by the same scheme.
pub fn initial_condition(problem: &Problem, scheme: StepScheme, kind: InitialKind) -> Result<Field> {
    let mut u = problem.zero_state();
    if kind == InitialKind::Lpb {
        let cfg = ControllerConfig {
            kind: ControllerKind::Constant,
            dt: LPB_DT,
            tol: LPB_TOL,
            t_end: LPB_T_END,
            t_min_stop: 0.0,
            ..Default::default()
        };
        run_loop(problem, scheme, &mut u, &StepRule::Controller(cfg), Reaction::Linear).map_err(|e| match e {
            Error::Divergence { step, t, reason } => {
                Error::Initialization(format!("linearized pre-solve diverged at step {step} (t = {t}): {reason}"))
            }
            other => other,
        })?;
    }
    Ok(u)
}

/// Result of a full solve.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: EnergyTrace,
    pub field: Field,
}

/// Initial condition followed by the nonlinear pseudo-time loop.
pub fn run_problem(problem: &Problem, scheme: StepScheme, ic: InitialKind, rule: &StepRule) -> Result<RunOutput> {
    let mut u = initial_condition(problem, scheme, ic)?;
    let trace = run_loop(problem, scheme, &mut u, rule, Reaction::Sinh)?;
    Ok(RunOutput { trace, field: u })
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let problem = config.problem()?;
    run_problem(&problem, config.scheme, config.ic, &StepRule::Controller(config.controller))
}

/// Piecewise-constant step schedule run.
pub fn run_schedule(config: &RunConfig, switches: &[(f64, f64)]) -> Result<RunOutput> {
    let problem = config.problem()?;
    run_problem(
        &problem,
        config.scheme,
        config.ic,
        &StepRule::Schedule(switches.to_vec(), config.controller),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub resolution: f64,
    pub energy: Option<f64>,
    pub error: Option<f64>,
    /// Why the row is excluded from the fit, if it is.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub reference_resolution: f64,
    pub reference_energy: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of log(error) against log(resolution); NaN when
    /// undefined.
    pub rate: f64,
    pub message: Option<String>,
}

impl ConvergenceTable {
    /// Ratios of consecutive errors, `error[i] / error[i + 1]`.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| match (w[0].error, w[1].error) {
                (Some(a), Some(b)) => a / b,
                _ => f64::NAN,
            })
            .collect()
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs `solve` at every resolution and at `reference`, then fits the
/// observed order from the relative errors against the reference energy.
pub fn convergence_study(
    resolutions: &[f64],
    reference: f64,
    mut solve: impl FnMut(f64) -> Result<f64>,
) -> Result<ConvergenceTable> {
    if resolutions.len() < 3 {
        return Err(Error::Validation("a convergence study needs at least three resolutions".into()));
    }
    let reference_energy = solve(reference)?;
    let results: Vec<(f64, Result<f64>)> = resolutions.iter().map(|&r| (r, solve(r))).collect();
    Ok(tabulate(reference, reference_energy, results))
}

/// Builds the table from precomputed energies.
pub fn tabulate(reference: f64, reference_energy: f64, results: Vec<(f64, Result<f64>)>) -> ConvergenceTable {
    let mut rows = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (r, res) in results {
        match res {
            Ok(e) => {
                let err = ((e - reference_energy) / reference_energy).abs();
                let note = if err > 0.0 && err.is_finite() {
                    xs.push(r.ln());
                    ys.push(err.ln());
                    None
                } else {
                    Some("zero error".to_string())
                };
                rows.push(ConvergenceRow {
                    resolution: r,
                    energy: Some(e),
                    error: Some(err),
                    note,
                });
            }
            Err(e) => rows.push(ConvergenceRow {
                resolution: r,
                energy: None,
                error: None,
                note: Some(format!("failed: {e}")),
            }),
        }
    }
    let (rate, message) = if xs.len() >= 2 {
        (fit_slope(&xs, &ys), None)
    } else {
        (f64::NAN, Some("fewer than two nonzero errors; rate undefined".to_string()))
    };
    ConvergenceTable {
        reference_resolution: reference,
        reference_energy,
        rows,
        rate,
        message,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialMode {
    /// The regularized unknown.
    U,
    /// The full potential: `u + G` in the solute, `u` in the solvent.
    Phi,
}

impl FromStr for PotentialMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u" => Ok(PotentialMode::U),
            "phi" => Ok(PotentialMode::Phi),
            _ => Err(Error::Validation(format!("unknown potential mode '{s}'"))),
        }
    }
}

/// Field to export in the requested mode.
pub fn potential_field(problem: &Problem, u: &Field, mode: PotentialMode) -> Result<Field> {
    let mut out = u.clone();
    if mode == PotentialMode::Phi {
        for (idx, v) in out.values.iter_mut().enumerate() {
            if problem.interface.inside[idx] {
                *v += match green_potential(&problem.atoms, problem.grid.node_at(idx), &problem.params) {
                    Ok(g) => g,
                    // Node on an atom centre: only charged atoms make it singular.
                    Err(Error::Singularity { .. }) => charged_green(problem, problem.grid.node_at(idx)),
                    Err(e) => return Err(e),
                };
            }
        }
    }
    Ok(out)
}

fn charged_green(problem: &Problem, p: [f64; 3]) -> f64 {
    let mut sum = 0.0;
    for a in problem.atoms.iter().filter(|a| a.charge != 0.0) {
        let r = crate::molecule::dist(p, a.center);
        if r < SINGULARITY_TOL {
            return f64::NAN;
        }
        sum += a.charge / r;
    }
    problem.params.charge_factor * sum / problem.params.eps_in
}

/// Writes the potential as a binary dump, or CSV when the path ends in `.csv`.
pub fn export_potential(problem: &Problem, u: &Field, mode: PotentialMode, path: &std::path::Path) -> Result<()> {
    let f = potential_field(problem, u, mode)?;
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if path.extension().is_some_and(|e| e == "csv") {
        f.write_csv(file)
    } else {
        f.write_binary(file)
    }
}

/// Single unit charge in a sphere of radius 2 centred at the origin.
pub fn kirkwood_atoms() -> AtomSet {
    AtomSet::new(vec![Atom::new([0.0; 3], 1.0, 2.0).expect("valid atom")]).expect("one atom")
}

/// Half-width of the cubic box of the sphere benchmark.
pub const KIRKWOOD_HALF_WIDTH: f64 = 8.0;

/// Sphere benchmark: exact sphere, `ε = 1 / 80`, `κ² = 1`, box `[-8, 8]³`.
pub fn kirkwood_config(h: f64, scheme: StepScheme, controller: ControllerConfig) -> RunConfig {
    let l = KIRKWOOD_HALF_WIDTH;
    RunConfig {
        box_override: Some(([-l; 3], [l; 3])),
        surface: SurfaceKind::Sphere,
        scheme,
        controller,
        ic: InitialKind::Zero,
        params: PhysicalParams::with_kappa_sq(1.0),
        ..RunConfig::new(kirkwood_atoms(), h)
    }
}

/// A small multi-sphere solute with mixed charges used by the controller and
/// schedule experiments.
pub fn demo_solute() -> AtomSet {
    let rows = [
        ([0.0, 0.0, 0.0], 0.8, 1.9),
        ([1.6, 0.4, -0.3], -0.6, 1.6),
        ([-1.4, 0.9, 0.5], -0.5, 1.7),
        ([0.3, -1.7, 0.6], 0.7, 1.5),
        ([-0.5, 0.2, -1.8], -0.9, 1.8),
        ([1.1, 1.3, 1.5], 0.5, 1.4),
    ];
    AtomSet::new(
        rows.iter()
            .map(|&(c, q, r)| Atom::new(c, q, r).expect("valid atom"))
            .collect(),
    )
    .expect("distinct atoms")
}

/// Experiment setup on [`demo_solute`]: grid SES at `h = 0.5`, ionic strength
/// 0.15 M, linearized initial state.
pub fn demo_config(scheme: StepScheme, controller: ControllerConfig) -> RunConfig {
    RunConfig {
        surface: SurfaceKind::SesGrid,
        scheme,
        controller,
        ic: InitialKind::Lpb,
        params: PhysicalParams::with_ionic_strength(0.15).expect("valid ionic strength"),
        ..RunConfig::new(demo_solute(), 0.5)
    }
}

/// Reference protocol: constant `dt = 0.01`, stop at `T_end = 50` or
/// `|ΔE| < 1e-4` after `t = 5`.
pub fn reference_controller() -> ControllerConfig {
    ControllerConfig {
        tol: 1e-4,
        ..ControllerConfig::constant(0.01)
    }
}

/// Constant step with the sphere benchmark stopping rule: `|ΔE| < 1e-4` once
/// `t ≥ 1`.
pub fn kirkwood_controller(dt: f64) -> ControllerConfig {
    ControllerConfig {
        tol: 1e-4,
        t_min_stop: 1.0,
        ..ControllerConfig::constant(dt)
    }
}

/// Constant step that always runs to `t_end`.
pub fn fixed_horizon(dt: f64, t_end: f64) -> ControllerConfig {
    ControllerConfig {
        t_end,
        t_min_stop: t_end,
        ..ControllerConfig::constant(dt)
    }
}

/// Sphere benchmark energy at spacing `h`.
pub fn kirkwood_energy(h: f64, scheme: StepScheme, controller: ControllerConfig) -> Result<f64> {
    Ok(run(&kirkwood_config(h, scheme, controller))?.trace.final_energy())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub schedule: Vec<(f64, f64)>,
    pub steps: usize,
    pub energy: f64,
    /// Relative difference from the first schedule's energy.
    pub relative_error: f64,
}

impl ScheduleRow {
    pub fn final_dt(&self) -> f64 {
        self.schedule.last().map_or(f64::NAN, |p| p.1)
    }
}

/// Fine/coarse schedules over `[0, 10]`: constant 0.001 (the reference),
/// constant 0.01, then two pairs that use each step size for the same number
/// of steps in opposite orders.
pub fn hypothesis_schedules() -> Vec<Vec<(f64, f64)>> {
    vec![
        vec![(0.0, 0.001)],
        vec![(0.0, 0.01)],
        vec![(0.0, 0.01), (9.0, 0.001)],
        vec![(0.0, 0.001), (1.0, 0.01)],
        vec![(0.0, 0.01), (5.0, 0.001)],
        vec![(0.0, 0.001), (5.0, 0.01)],
    ]
}

/// Horizon of [`hypothesis_schedules`].
pub const HYPOTHESIS_T_END: f64 = 10.0;

/// Runs each schedule to `t_end` from the same initial state.
pub fn schedule_study(
    problem: &Problem,
    scheme: StepScheme,
    ic: InitialKind,
    schedules: &[Vec<(f64, f64)>],
    t_end: f64,
) -> Result<Vec<ScheduleRow>> {
    let u0 = initial_condition(problem, scheme, ic)?;
    let stop = fixed_horizon(1.0, t_end);
    let mut rows: Vec<ScheduleRow> = Vec::new();
    for s in schedules {
        let mut u = u0.clone();
        let trace = run_loop(problem, scheme, &mut u, &StepRule::Schedule(s.clone(), stop), Reaction::Sinh)?;
        let e = trace.final_energy();
        let e_ref = rows.first().map_or(e, |r| r.energy);
        rows.push(ScheduleRow {
            schedule: s.clone(),
            steps: trace.steps(),
            energy: e,
            relative_error: ((e - e_ref) / e_ref).abs(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerRow {
    pub kind: ControllerKind,
    pub steps: usize,
    pub final_time: f64,
    pub energy: f64,
    pub relative_error: f64,
    pub relative_steps: f64,
    pub monotone_dt: bool,
}

/// Runs each controller from the same initial state and compares against the
/// reference protocol.
pub fn compare_controllers(
    problem: &Problem,
    scheme: StepScheme,
    ic: InitialKind,
    controllers: &[ControllerConfig],
) -> Result<(EnergyTrace, Vec<(ControllerRow, EnergyTrace)>)> {
    let u0 = initial_condition(problem, scheme, ic)?;
    let mut u = u0.clone();
    let reference = run_loop(problem, scheme, &mut u, &StepRule::Controller(reference_controller()), Reaction::Sinh)?;
    let e_ref = reference.final_energy();
    let mut rows = Vec::new();
    for cfg in controllers {
        let mut u = u0.clone();
        let trace = run_loop(problem, scheme, &mut u, &StepRule::Controller(*cfg), Reaction::Sinh)?;
        let monotone_dt = trace.records.windows(2).all(|w| w[1].dt <= w[0].dt);
        rows.push((
            ControllerRow {
                kind: cfg.kind,
                steps: trace.steps(),
                final_time: trace.final_time(),
                energy: trace.final_energy(),
                relative_error: ((trace.final_energy() - e_ref) / e_ref).abs(),
                relative_steps: trace.steps() as f64 / reference.steps() as f64,
                monotone_dt,
            },
            trace,
        ));
    }
    Ok((reference, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub nodes: usize,
    pub seconds_per_step: f64,
}

/// Wall time per step on the sphere benchmark for cubic grids with `n` nodes
/// per side; returns the rows and the log-log slope against node count.
pub fn scaling_study(sides: &[usize], scheme: StepScheme, steps: usize) -> Result<(Vec<ScalingRow>, f64)> {
    let mut rows = Vec::new();
    for &n in sides {
        if n < 5 {
            return Err(Error::Validation(format!("grid side {n} is too small")));
        }
        let h = 2.0 * KIRKWOOD_HALF_WIDTH / (n - 1) as f64;
        let cfg = kirkwood_config(h, scheme, ControllerConfig::constant(0.001));
        let problem = cfg.problem()?;
        let mut u = problem.zero_state();
        let mut ws = Workspace::default();
        step(&problem, scheme, &mut u, 0.001, Reaction::Sinh, &mut ws)?;
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            for _ in 0..steps.max(1) {
                step(&problem, scheme, &mut u, 0.001, Reaction::Sinh, &mut ws)?;
            }
            best = best.min(start.elapsed().as_secs_f64() / steps.max(1) as f64);
        }
        rows.push(ScalingRow {
            nodes: problem.grid.len(),
            seconds_per_step: best,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.nodes as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds_per_step.ln()).collect();
    let slope = if rows.len() >= 2 { fit_slope(&xs, &ys) } else { f64::NAN };
    Ok((rows, slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_kirkwood(controller: ControllerConfig) -> RunConfig {
        RunConfig {
            box_override: Some(([-4.0; 3], [4.0; 3])),
            ..kirkwood_config(0.5, StepScheme::Adi, controller)
        }
    }

    #[test]
    fn zero_horizon_gives_empty_trace() {
        let cfg = small_kirkwood(ControllerConfig {
            t_end: 0.0,
            ..ControllerConfig::constant(0.01)
        });
        let out = run(&cfg).unwrap();
        assert_eq!(out.trace.steps(), 0);
        assert_eq!(out.trace.final_energy(), 0.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small_kirkwood(ControllerConfig {
            kind: ControllerKind::Pid1,
            t_end: 2.0,
            ..Default::default()
        });
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(format!("{:?}", a.trace.records), format!("{:?}", b.trace.records));
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn single_segment_schedule_equals_constant_run() {
        let c = ControllerConfig {
            t_end: 0.5,
            ..ControllerConfig::constant(0.05)
        };
        let cfg = small_kirkwood(c);
        let a = run(&cfg).unwrap();
        let b = run_schedule(&cfg, &[(0.0, 0.05)]).unwrap();
        assert_eq!(a.trace.steps(), b.trace.steps());
        for (x, y) in a.trace.records.iter().zip(&b.trace.records) {
            assert_eq!((x.t, x.dt, x.energy), (y.t, y.dt, y.energy));
        }
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn schedule_switches_at_the_first_step_past_the_switch() {
        let cfg = small_kirkwood(ControllerConfig {
            t_end: 0.3,
            ..ControllerConfig::constant(0.1)
        });
        let out = run_schedule(&cfg, &[(0.0, 0.1), (0.1, 0.05)]).unwrap();
        let dts: Vec<f64> = out.trace.records.iter().map(|r| r.dt).collect();
        assert_eq!(dts[0], 0.1);
        assert!(dts[1..].iter().all(|&d| (d - 0.05).abs() < 1e-12));
        assert!(run_schedule(&cfg, &[(1.0, 0.1), (0.5, 0.05)]).is_err());
    }

    #[test]
    fn degenerate_convergence_fit_is_nan() {
        let t = convergence_study(&[1.0, 0.5, 0.25], 0.125, |_| Ok(-10.0)).unwrap();
        assert!(t.rate.is_nan());
        assert!(t.message.is_some());
        assert!(t.rows.iter().all(|r| r.error == Some(0.0)));
    }

    #[test]
    fn convergence_fit_recovers_synthetic_order() {
        let t = convergence_study(&[0.4, 0.2, 0.1], 0.0125, |h| Ok(-10.0 * (1.0 + 0.3 * h * h))).unwrap();
        assert!((t.rate - 2.0).abs() < 0.05, "{}", t.rate);
        let failing = convergence_study(&[0.4, 0.2, 0.1], 0.0125, |h| {
            if h == 0.2 {
                Err(Error::Numerical("boom".into()))
            } else {
                Ok(-10.0 * (1.0 + h))
            }
        })
        .unwrap();
        assert!(failing.rows[1].note.is_some());
        assert!(failing.rate.is_finite());
    }

    #[test]
    fn phi_export_adds_green_inside_only() {
        let cfg = small_kirkwood(ControllerConfig::constant(0.01));
        let p = cfg.problem().unwrap();
        let u = Field::from_fn(&p.grid, |x| x[0] * 0.1);
        let phi = potential_field(&p, &u, PotentialMode::Phi).unwrap();
        for idx in 0..p.grid.len() {
            if p.grid.node_at(idx) == [0.0; 3] {
                assert!(phi.values[idx].is_nan());
                continue;
            }
            let expect = if p.interface.inside[idx] {
                u.values[idx] + green_potential(&p.atoms, p.grid.node_at(idx), &p.params).unwrap()
            } else {
                u.values[idx]
            };
            assert!((phi.values[idx] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
        assert_eq!(potential_field(&p, &u, PotentialMode::U).unwrap(), u);
    }

    #[test]
    fn zero_charge_phi_equals_u() {
        let atoms = AtomSet::new(vec![Atom::new([0.0; 3], 0.0, 2.0).unwrap()]).unwrap();
        let cfg = RunConfig {
            atoms,
            ..small_kirkwood(ControllerConfig::constant(0.01))
        };
        let p = cfg.problem().unwrap();
        let u = Field::from_fn(&p.grid, |x| x[1]);
        assert_eq!(potential_field(&p, &u, PotentialMode::Phi).unwrap(), u);
    }

    #[test]
    fn lpb_matches_nonlinear_without_salt() {
        let mut cfg = small_kirkwood(ControllerConfig::constant(0.01));
        cfg.params = PhysicalParams::default();
        let p = cfg.problem().unwrap();
        let lpb = initial_condition(&p, StepScheme::Adi, InitialKind::Lpb).unwrap();
        let mut u = p.zero_state();
        let rule = StepRule::Controller(ControllerConfig {
            tol: 1e-3,
            t_min_stop: 0.0,
            t_end: 10.0,
            ..ControllerConfig::constant(0.01)
        });
        run_loop(&p, StepScheme::Adi, &mut u, &rule, Reaction::Sinh).unwrap();
        assert_eq!(lpb, u);
    }

    #[test]
    fn sphere_surface_needs_one_atom() {
        let cfg = RunConfig {
            surface: SurfaceKind::Sphere,
            ..RunConfig::new(demo_solute(), 0.5)
        };
        assert!(cfg.problem().is_err());
    }

    #[test]
    fn parses_names() {
        assert_eq!("ses-grid".parse::<SurfaceKind>().unwrap(), SurfaceKind::SesGrid);
        assert_eq!(
            "import:/tmp/x.txt".parse::<SurfaceKind>().unwrap(),
            SurfaceKind::Import(PathBuf::from("/tmp/x.txt"))
        );
        assert_eq!("lpb".parse::<InitialKind>().unwrap(), InitialKind::Lpb);
        assert!("bogus".parse::<SurfaceKind>().is_err());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let cfg = small_kirkwood(ControllerConfig {
            t_end: 0.03,
            ..ControllerConfig::constant(0.01)
        });
        let out = run(&cfg).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,t,dt,e_n,F,E_sol,dE\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
