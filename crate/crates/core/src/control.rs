//! Time-step controllers and stopping rules for the pseudo-time loop.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Slack used when comparing times and step sizes against thresholds.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControllerKind {
    #[default]
    Constant,
    /// Halving rule on the absolute solution change.
    Manual1,
    /// Halving rule on the energy change.
    Manual2,
    /// PID on the relative solution change.
    Pid1,
    /// PID on the relative energy change.
    Pid2,
    /// PID1 that may also stop a fixed number of steps after reaching `dt_min`.
    FastPid,
    /// PID1 whose step never grows.
    NonincreasingPid,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 7] = [
        ControllerKind::Constant,
        ControllerKind::Manual1,
        ControllerKind::Manual2,
        ControllerKind::Pid1,
        ControllerKind::Pid2,
        ControllerKind::FastPid,
        ControllerKind::NonincreasingPid,
    ];

    pub fn is_pid(self) -> bool {
        matches!(
            self,
            ControllerKind::Pid1 | ControllerKind::Pid2 | ControllerKind::FastPid | ControllerKind::NonincreasingPid
        )
    }

    /// Error measure that drives the controller.
    pub fn norm(self) -> Option<ErrorKind> {
        match self {
            ControllerKind::Constant => None,
            ControllerKind::Manual1 => Some(ErrorKind::AbsoluteU),
            ControllerKind::Manual2 => Some(ErrorKind::AbsoluteE),
            ControllerKind::Pid2 => Some(ErrorKind::E),
            ControllerKind::Pid1 | ControllerKind::FastPid | ControllerKind::NonincreasingPid => Some(ErrorKind::U),
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "constant" => ControllerKind::Constant,
            "manual1" => ControllerKind::Manual1,
            "manual2" => ControllerKind::Manual2,
            "pid1" => ControllerKind::Pid1,
            "pid2" => ControllerKind::Pid2,
            "fastpid" => ControllerKind::FastPid,
            "nipid" | "nonincreasingpid" => ControllerKind::NonincreasingPid,
            _ => return Err(Error::Validation(format!("unknown controller '{s}'"))),
        })
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Constant => "constant",
            ControllerKind::Manual1 => "manual1",
            ControllerKind::Manual2 => "manual2",
            ControllerKind::Pid1 => "pid1",
            ControllerKind::Pid2 => "pid2",
            ControllerKind::FastPid => "fastpid",
            ControllerKind::NonincreasingPid => "nipid",
        })
    }
}

/// Error measures between consecutive steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// `‖uⁿ − uⁿ⁻¹‖₂ / ‖uⁿ‖₂`.
    U,
    /// `|ΔE / Eⁿ|`.
    E,
    /// `‖Uⁿ − Uⁿ⁻¹‖₂`.
    AbsoluteU,
    /// `|ΔE|`.
    AbsoluteE,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Step of the constant controller.
    pub dt: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    pub eps_p: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    /// Energy-change stopping tolerance, kcal/mol.
    pub tol: f64,
    pub t_end: f64,
    pub t_min_stop: f64,
    pub post_min_steps: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kind: ControllerKind::NonincreasingPid,
            dt: 0.01,
            dt_max: 1.0,
            dt_min: 0.01,
            k_p: 0.075,
            k_i: 0.175,
            k_d: 0.01,
            eps_p: 0.0025,
            f_lo: 0.2,
            f_hi: 5.0,
            tol: 0.01,
            t_end: 50.0,
            t_min_stop: 5.0,
            post_min_steps: 100,
        }
    }
}

impl ControllerConfig {
    /// Constant step `dt` with the remaining defaults.
    pub fn constant(dt: f64) -> Self {
        ControllerConfig {
            kind: ControllerKind::Constant,
            dt,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.kind == ControllerKind::Constant {
            if !(self.dt > 0.0) || !self.dt.is_finite() {
                return bad(format!("time step must be positive, got {}", self.dt));
            }
        } else if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max && self.dt_max.is_finite()) {
            return bad(format!("need 0 < dt_min <= dt_max, got {} and {}", self.dt_min, self.dt_max));
        }
        if !(self.f_lo > 0.0 && self.f_lo <= 1.0 && self.f_hi >= 1.0) {
            return bad(format!("need 0 < F_lo <= 1 <= F_hi, got {} and {}", self.f_lo, self.f_hi));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if !(self.eps_p > 0.0) {
            return bad(format!("PID setpoint must be positive, got {}", self.eps_p));
        }
        if !(self.t_end >= 0.0) || !(self.t_min_stop >= 0.0) {
            return bad("time horizon and stop guard must be nonnegative".into());
        }
        Ok(())
    }

    /// Step size of the first step.
    pub fn initial_dt(&self) -> f64 {
        match self.kind {
            ControllerKind::Constant => self.dt,
            _ => self.dt_max,
        }
    }
}

/// Error measure of kind `kind` between two states and their energies.
pub fn error_norm(kind: ErrorKind, u: &[f64], u_prev: &[f64], e: f64, e_prev: f64) -> f64 {
    match kind {
        ErrorKind::U | ErrorKind::AbsoluteU => {
            let diff: f64 = u.iter().zip(u_prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if kind == ErrorKind::AbsoluteU {
                return diff;
            }
            let norm: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                f64::NAN
            } else {
                diff / norm
            }
        }
        ErrorKind::E => {
            if e == 0.0 {
                f64::NAN
            } else {
                ((e - e_prev) / e).abs()
            }
        }
        ErrorKind::AbsoluteE => (e - e_prev).abs(),
    }
}

/// PID scaling factor from the history `[e_n, e_{n-1}, e_{n-2}]`, clamped,
/// and floored at 1 for the nonincreasing variant.
pub fn pid_factor(history: [f64; 3], cfg: &ControllerConfig) -> f64 {
    let fix = |e: f64| if e > 0.0 && e.is_finite() { e } else { cfg.eps_p };
    let [en, e1, e2] = history.map(fix);
    let f = (e1 / en).powf(cfg.k_p) * (cfg.eps_p / en).powf(cfg.k_i) * (e1 * e1 / (en * e2)).powf(cfg.k_d);
    let f = f.clamp(cfg.f_lo, cfg.f_hi);
    if cfg.kind == ControllerKind::NonincreasingPid {
        f.max(1.0)
    } else {
        f
    }
}

/// Halving rule: returns the new `(dt, δ)`.
pub fn manual_update(dt: f64, delta: f64, e: f64, cfg: &ControllerConfig) -> (f64, f64) {
    if e < delta {
        ((0.5 * dt).max(cfg.dt_min), 0.5 * delta)
    } else {
        (dt, delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// `[e_n, e_{n-1}, e_{n-2}]`.
    pub errors: [f64; 3],
    /// Number of errors recorded so far.
    pub recorded: usize,
    pub delta: f64,
    pub dt: f64,
    pub reached_min: bool,
    pub steps_since_min: usize,
    /// Factor applied in the last update (1 when none).
    pub factor: f64,
}

impl ControllerState {
    pub fn new(cfg: &ControllerConfig) -> Self {
        let dt = cfg.initial_dt();
        ControllerState {
            errors: [f64::NAN; 3],
            recorded: 0,
            delta: 1.0,
            dt,
            reached_min: false,
            steps_since_min: 0,
            factor: 1.0,
        }
    }

    /// Records the error of the step just taken (with `self.dt`) and picks the
    /// next step size. `reached_min` turns on once a step has been taken at
    /// `dt_min`; `steps_since_min` counts the steps taken from then on.
    pub fn update(&mut self, cfg: &ControllerConfig, e: f64) -> f64 {
        if cfg.kind != ControllerKind::Constant && self.dt <= cfg.dt_min * (1.0 + TIME_EPS) {
            self.reached_min = true;
        }
        if self.reached_min {
            self.steps_since_min += 1;
        }
        self.errors = [e, self.errors[0], self.errors[1]];
        self.recorded += 1;
        self.factor = 1.0;
        match cfg.kind {
            ControllerKind::Constant => {}
            ControllerKind::Manual1 | ControllerKind::Manual2 => {
                let (dt, delta) = manual_update(self.dt, self.delta, e, cfg);
                self.dt = dt;
                self.delta = delta;
            }
            _ => {
                if self.recorded >= 3 {
                    self.factor = pid_factor(self.errors, cfg);
                }
                self.dt = (self.dt / self.factor).clamp(cfg.dt_min, cfg.dt_max);
            }
        }
        self.dt
    }
}

/// Stopping predicate evaluated after a step that ended at time `t` with
/// energy change `de` (kcal/mol).
pub fn should_stop(t: f64, de: f64, state: &ControllerState, cfg: &ControllerConfig) -> bool {
    if t >= cfg.t_end - TIME_EPS {
        return true;
    }
    if t < cfg.t_min_stop - TIME_EPS {
        return false;
    }
    let small = de.abs() < cfg.tol;
    match cfg.kind {
        ControllerKind::NonincreasingPid => small && state.reached_min,
        ControllerKind::FastPid => small || (state.reached_min && state.steps_since_min >= cfg.post_min_steps),
        _ => small,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cfg(kind: ControllerKind) -> ControllerConfig {
        ControllerConfig {
            kind,
            ..Default::default()
        }
    }

    #[test]
    fn error_norms() {
        let u = [1.0, 2.0, 3.0];
        assert_eq!(error_norm(ErrorKind::U, &u, &u, 1.0, 1.0), 0.0);
        assert!((error_norm(ErrorKind::E, &[], &[], -100.0, -101.0) - 0.01).abs() < 1e-15);
        assert!(error_norm(ErrorKind::U, &[0.0; 3], &u, 1.0, 1.0).is_nan());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut d2 = 0.0;
        let mut n2 = 0.0;
        for i in 0..50 {
            d2 += (a[i] - b[i]).powi(2);
            n2 += a[i].powi(2);
        }
        let rel = error_norm(ErrorKind::U, &a, &b, 0.0, 0.0);
        assert!((rel - (d2 / n2).sqrt()).abs() < 1e-13);
        assert!((error_norm(ErrorKind::AbsoluteU, &a, &b, 0.0, 0.0) - d2.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn pid_factor_examples() {
        let c = cfg(ControllerKind::Pid1);
        let ep = c.eps_p;
        assert!((pid_factor([ep, ep, ep], &c) - 1.0).abs() < 1e-15);
        let f = pid_factor([ep, 2.0 * ep, 4.0 * ep], &c);
        assert!((f - 2f64.powf(0.075)).abs() < 1e-12, "{f}");
        // raw F = 0.5 is floored for the nonincreasing controller
        let raw = ControllerConfig { k_p: 1.0, k_i: 0.0, k_d: 0.0, ..c };
        assert!((pid_factor([2.0, 1.0, 1.0], &raw) - 0.5).abs() < 1e-15);
        let ni = ControllerConfig { kind: ControllerKind::NonincreasingPid, ..raw };
        assert_eq!(pid_factor([2.0, 1.0, 1.0], &ni), 1.0);
    }

    #[test]
    fn pid_factor_falls_back_on_bad_errors() {
        let c = cfg(ControllerKind::Pid1);
        let ep = c.eps_p;
        assert_eq!(pid_factor([0.0, -1.0, f64::NAN], &c), pid_factor([ep, ep, ep], &c));
    }

    #[test]
    fn manual_examples() {
        let c = cfg(ControllerKind::Manual1);
        assert_eq!(manual_update(1.0, 1.0, 2.0, &c), (1.0, 1.0));
        assert_eq!(manual_update(1.0, 1.0, 0.5, &c), (0.5, 0.5));
        assert_eq!(manual_update(c.dt_min, 0.25, 0.1, &c), (c.dt_min, 0.125));
    }

    #[test]
    fn first_two_pid_steps_keep_dt() {
        let c = cfg(ControllerKind::Pid1);
        let mut s = ControllerState::new(&c);
        assert_eq!(s.dt, 1.0);
        s.update(&c, 1e-5);
        assert_eq!(s.factor, 1.0);
        s.update(&c, 1e-6);
        assert_eq!(s.factor, 1.0);
        s.update(&c, 1e-7);
        assert!(s.factor > 1.0);
    }

    #[test]
    fn stopping_rules() {
        let mut c = cfg(ControllerKind::NonincreasingPid);
        let mut s = ControllerState::new(&c);
        assert!(!should_stop(3.0, 1e-9, &s, &c));
        assert!(!should_stop(6.0, 1e-9, &s, &c));
        s.reached_min = true;
        assert!(should_stop(6.0, 1e-9, &s, &c));
        for kind in ControllerKind::ALL {
            c.kind = kind;
            assert!(should_stop(c.t_end, 1.0, &ControllerState::new(&c), &c));
        }
        let f = cfg(ControllerKind::FastPid);
        let mut s = ControllerState::new(&f);
        assert!(!should_stop(6.0, 1.0, &s, &f));
        s.reached_min = true;
        s.steps_since_min = 100;
        assert!(should_stop(6.0, 1.0, &s, &f));
        assert!(!should_stop(4.0, 1.0, &s, &f));
        let p = cfg(ControllerKind::Pid1);
        assert!(should_stop(6.0, 0.001, &ControllerState::new(&p), &p));
    }

    #[test]
    fn fastpid_counts_steps_after_reaching_min() {
        let c = ControllerConfig { kind: ControllerKind::FastPid, dt_max: 0.02, ..Default::default() };
        let mut s = ControllerState::new(&c);
        let mut e = 1e-3;
        for _ in 0..500 {
            e *= 0.5;
            s.update(&c, e);
        }
        assert!(s.reached_min);
        assert!(s.steps_since_min > 0);
    }

    proptest! {
        #[test]
        fn dt_stays_in_bounds_and_factor_is_clamped(
            kind in prop::sample::select(ControllerKind::ALL[1..].to_vec()),
            errs in prop::collection::vec(-1e-2f64..1.0, 1..60),
        ) {
            let c = cfg(kind);
            let mut s = ControllerState::new(&c);
            let mut prev = s.dt;
            for e in errs {
                let dt = s.update(&c, e.abs());
                prop_assert!(dt >= c.dt_min && dt <= c.dt_max);
                prop_assert!(s.factor >= c.f_lo && s.factor <= c.f_hi);
                if matches!(kind, ControllerKind::NonincreasingPid | ControllerKind::Manual1 | ControllerKind::Manual2) {
                    prop_assert!(dt <= prev);
                }
                prev = dt;
            }
        }

        #[test]
        fn updates_are_deterministic(errs in prop::collection::vec(1e-9f64..1.0, 1..40)) {
            let c = cfg(ControllerKind::Pid1);
            let run = || {
                let mut s = ControllerState::new(&c);
                errs.iter().map(|&e| s.update(&c, e)).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
