//! `ptpbe` command-line front end.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ptpbe_core::control::{ControllerConfig, ControllerKind};
use ptpbe_core::driver::{
    compare_controllers, convergence_study, demo_config, export_potential, fixed_horizon, hypothesis_schedules,
    kirkwood_config, kirkwood_controller, kirkwood_energy, run_problem, run_schedule, scaling_study,
    schedule_study, ConvergenceTable, EnergyTrace, InitialKind, PotentialMode, RunConfig, StepRule, SurfaceKind,
    HYPOTHESIS_T_END,
};
use ptpbe_core::molecule::{parse_atoms, PhysicalParams};
use ptpbe_core::stepping::StepScheme;
use ptpbe_core::Error;

#[derive(Parser)]
#[command(name = "ptpbe", version, about = "Pseudo-time Poisson-Boltzmann solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a molecule read from an `x y z q r` atom file.
    Solve(SolveArgs),
    /// Built-in sphere benchmark (R = 2, q = 1, κ² = 1).
    Kirkwood(KirkwoodArgs),
    /// Self-convergence in h or Δt on the sphere benchmark.
    Convergence(ConvergenceArgs),
    /// Piecewise-constant Δt runs.
    Schedule(ScheduleArgs),
    /// All controllers against the constant Δt = 0.01 reference.
    CompareControllers(CompareArgs),
    /// Wall time per step against grid size.
    Scaling(ScalingArgs),
}

#[derive(Args, Clone)]
struct StepArgs {
    #[arg(long, default_value = "adi")]
    scheme: StepScheme,
    #[arg(long, default_value = "nipid")]
    controller: ControllerKind,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    tend: Option<f64>,
    #[arg(long)]
    tmin_stop: Option<f64>,
}

impl StepArgs {
    fn controller(&self) -> ControllerConfig {
        let mut c = ControllerConfig {
            kind: self.controller,
            ..Default::default()
        };
        if let Some(v) = self.dt {
            c.dt = v;
        }
        if let Some(v) = self.dt_min {
            c.dt_min = v;
        }
        if let Some(v) = self.dt_max {
            c.dt_max = v;
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.tend {
            c.t_end = v;
        }
        if let Some(v) = self.tmin_stop {
            c.t_min_stop = v;
        }
        c
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    atoms: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    h: f64,
    /// sphere, vdw, ses-grid or import:PATH.
    #[arg(long, default_value = "ses-grid")]
    surface: SurfaceKind,
    #[arg(long, default_value_t = 1.4)]
    probe: f64,
    #[command(flatten)]
    step: StepArgs,
    #[arg(long, default_value = "lpb")]
    ic: InitialKind,
    /// Ionic strength, mol/L.
    #[arg(long, default_value_t = 0.15)]
    ionic: f64,
    #[arg(long, default_value_t = 1.0)]
    eps_in: f64,
    #[arg(long, default_value_t = 80.0)]
    eps_out: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct OutputArgs {
    /// Per-step CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Final field dump (CSV when the name ends in .csv).
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FieldMode::U)]
    field_mode: FieldMode,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldMode {
    U,
    Phi,
}

#[derive(Args)]
struct KirkwoodArgs {
    #[arg(long, default_value_t = 0.25)]
    h: f64,
    #[arg(long, default_value = "adi")]
    scheme: StepScheme,
    #[arg(long, default_value_t = 0.001)]
    dt: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Vary {
    H,
    Dt,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, value_enum)]
    vary: Vary,
    #[arg(long, num_args = 3.., required = true)]
    values: Vec<f64>,
    /// Reference resolution; defaults to half the finest value.
    #[arg(long)]
    reference: Option<f64>,
    #[arg(long, default_value = "adi")]
    scheme: StepScheme,
    /// Δt when varying h.
    #[arg(long, default_value_t = 0.001)]
    dt: f64,
    /// h when varying Δt.
    #[arg(long, default_value_t = 0.5)]
    h: f64,
    /// Common horizon when varying Δt.
    #[arg(long, default_value_t = 1.0)]
    tend: f64,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Switch points `t:dt`; without any, runs the built-in fine/coarse set.
    #[arg(long = "switch", value_parser = parse_switch)]
    switches: Vec<(f64, f64)>,
    /// Molecule file; defaults to the built-in multi-sphere solute.
    #[arg(long)]
    atoms: Option<PathBuf>,
    #[arg(long, default_value = "adi")]
    scheme: StepScheme,
    #[arg(long, default_value_t = HYPOTHESIS_T_END)]
    tend: f64,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    atoms: Option<PathBuf>,
    #[arg(long, default_value = "adi")]
    scheme: StepScheme,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, num_args = 2.., default_values_t = vec![33usize, 49, 65, 81, 97])]
    sides: Vec<usize>,
    #[arg(long, default_value = "adi")]
    scheme: StepScheme,
    #[arg(long, default_value_t = 5)]
    steps: usize,
}

fn parse_switch(s: &str) -> Result<(f64, f64), String> {
    let (t, dt) = s.split_once(':').ok_or_else(|| format!("expected t:dt, got '{s}'"))?;
    let t = t.trim().parse::<f64>().map_err(|e| format!("bad switch time '{t}': {e}"))?;
    let dt = dt.trim().parse::<f64>().map_err(|e| format!("bad step '{dt}': {e}"))?;
    Ok((t, dt))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        Error::Divergence { .. } | Error::Initialization(_) => 3,
        _ => 2,
    }
}

fn load_atoms_config(path: &Option<PathBuf>, scheme: StepScheme) -> ptpbe_core::Result<RunConfig> {
    let mut cfg = demo_config(scheme, ControllerConfig::default());
    if let Some(p) = path {
        cfg.atoms = parse_atoms(&std::fs::read_to_string(p)?)?;
    }
    Ok(cfg)
}

fn print_trace_summary(trace: &EnergyTrace) {
    println!(
        "E_sol = {:.6} kcal/mol  steps = {}  t = {:.4}  stop = {:?}  wall = {:.2} s",
        trace.final_energy(),
        trace.steps(),
        trace.final_time(),
        trace.stop,
        trace.wall_time
    );
}

fn write_outputs(
    out: &OutputArgs,
    problem: &ptpbe_core::Problem,
    result: &ptpbe_core::RunOutput,
) -> ptpbe_core::Result<()> {
    if let Some(p) = &out.trace {
        result.trace.write_csv(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &out.field {
        let mode = match out.field_mode {
            FieldMode::U => PotentialMode::U,
            FieldMode::Phi => PotentialMode::Phi,
        };
        export_potential(problem, &result.field, mode, p)?;
    }
    Ok(())
}

fn print_table(table: &ConvergenceTable, label: &str) {
    println!("reference {label} = {}  E = {:.8}", table.reference_resolution, table.reference_energy);
    println!("{label:>10} {:>16} {:>12}", "E", "rel. error");
    for r in &table.rows {
        match (r.energy, r.error) {
            (Some(e), Some(err)) => println!("{:>10} {:>16.8} {:>12.4e}", r.resolution, e, err),
            _ => println!("{:>10} {:>16} {:>12}", r.resolution, "-", "-"),
        }
        if let Some(n) = &r.note {
            println!("{:>10} note: {n}", "");
        }
    }
    let ratios: Vec<String> = table.ratios().iter().map(|r| format!("{r:.3}")).collect();
    println!("error ratios: {}", ratios.join(", "));
    match &table.message {
        Some(m) => println!("rate: NaN ({m})"),
        None => println!("rate: {:.4}", table.rate),
    }
}

fn execute(cli: Cli) -> ptpbe_core::Result<()> {
    match cli.command {
        Command::Solve(a) => {
            let atoms = parse_atoms(&std::fs::read_to_string(&a.atoms)?)?;
            let mut params = PhysicalParams::with_ionic_strength(a.ionic)?;
            params.eps_in = a.eps_in;
            params.eps_out = a.eps_out;
            let cfg = RunConfig {
                probe_radius: a.probe,
                surface: a.surface,
                scheme: a.step.scheme,
                controller: a.step.controller(),
                ic: a.ic,
                params,
                ..RunConfig::new(atoms, a.h)
            };
            let problem = cfg.problem()?;
            println!("grid {:?}, h = {}, solute nodes = {}", problem.grid.n, problem.grid.h, problem.interface.inside_count());
            let out = run_problem(&problem, cfg.scheme, cfg.ic, &StepRule::Controller(cfg.controller))?;
            print_trace_summary(&out.trace);
            write_outputs(&a.out, &problem, &out)?;
        }
        Command::Kirkwood(a) => {
            let cfg = kirkwood_config(a.h, a.scheme, kirkwood_controller(a.dt));
            let problem = cfg.problem()?;
            println!("grid {:?}, h = {}", problem.grid.n, problem.grid.h);
            let out = run_problem(&problem, cfg.scheme, cfg.ic, &StepRule::Controller(cfg.controller))?;
            print_trace_summary(&out.trace);
            write_outputs(&a.out, &problem, &out)?;
        }
        Command::Convergence(a) => {
            let finest = a.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let reference = a.reference.unwrap_or(finest / 2.0);
            let table = match a.vary {
                Vary::H => convergence_study(&a.values, reference, |h| {
                    kirkwood_energy(h, a.scheme, kirkwood_controller(a.dt))
                })?,
                Vary::Dt => convergence_study(&a.values, reference, |dt| {
                    kirkwood_energy(a.h, a.scheme, fixed_horizon(dt, a.tend))
                })?,
            };
            print_table(&table, match a.vary {
                Vary::H => "h",
                Vary::Dt => "dt",
            });
        }
        Command::Schedule(a) => {
            let cfg = RunConfig {
                controller: fixed_horizon(1.0, a.tend),
                ..load_atoms_config(&a.atoms, a.scheme)?
            };
            if a.switches.is_empty() {
                let problem = cfg.problem()?;
                let rows = schedule_study(&problem, a.scheme, cfg.ic, &hypothesis_schedules(), a.tend)?;
                println!("{:<32} {:>7} {:>16} {:>12}", "schedule (t:dt)", "steps", "E", "rel. error");
                for r in rows {
                    let s: Vec<String> = r.schedule.iter().map(|(t, dt)| format!("{t}:{dt}")).collect();
                    println!("{:<32} {:>7} {:>16.8} {:>12.4e}", s.join(" "), r.steps, r.energy, r.relative_error);
                }
            } else {
                let out = run_schedule(&cfg, &a.switches)?;
                print_trace_summary(&out.trace);
                if let Some(p) = &a.trace {
                    out.trace.write_csv(BufWriter::new(File::create(p)?))?;
                }
            }
        }
        Command::CompareControllers(a) => {
            let cfg = load_atoms_config(&a.atoms, a.scheme)?;
            let problem = cfg.problem()?;
            let ctrls: Vec<ControllerConfig> = ControllerKind::ALL
                .iter()
                .filter(|k| **k != ControllerKind::Constant)
                .map(|&kind| ControllerConfig {
                    kind,
                    ..Default::default()
                })
                .collect();
            let (reference, rows) = compare_controllers(&problem, a.scheme, cfg.ic, &ctrls)?;
            println!(
                "reference (dt = 0.01): E = {:.6}  steps = {}",
                reference.final_energy(),
                reference.steps()
            );
            println!(
                "{:<10} {:>7} {:>9} {:>14} {:>11} {:>10} {:>9}",
                "method", "steps", "t_final", "E", "rel. error", "rel. steps", "monotone"
            );
            for (r, _) in rows {
                println!(
                    "{:<10} {:>7} {:>9.3} {:>14.6} {:>11.3e} {:>10.4} {:>9}",
                    r.kind.to_string(),
                    r.steps,
                    r.final_time,
                    r.energy,
                    r.relative_error,
                    r.relative_steps,
                    r.monotone_dt
                );
            }
        }
        Command::Scaling(a) => {
            let (rows, slope) = scaling_study(&a.sides, a.scheme, a.steps)?;
            println!("{:>10} {:>14}", "nodes", "s/step");
            for r in rows {
                println!("{:>10} {:>14.6}", r.nodes, r.seconds_per_step);
            }
            println!("log-log slope: {slope:.4}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
