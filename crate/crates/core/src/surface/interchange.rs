//! Text interchange format for Eulerian interface data.
//!
//! ```text
//! # comments start with '#'
//! convention native            # or: convention eses  /  convention=eses
//! n 17 17 17
//! h 0.5
//! box -4 -4 -4 4 4 4           # origin and far corner
//! row 0 0 17*+1                # row j k, then runs count*sign covering i = 0..nx
//! row 8 8 5*+1 7*-1 5*+1
//! node 3 4 5 -1                # single-node override form, optional
//! cross x 4 8 8 0.25           # axis, low node i j k, fraction; optional normal nx ny nz
//! end
//! ```
//!
//! Under `native` a node value of `-1` marks the solute and `+1` the solvent;
//! `eses` uses the opposite signs. Every node must be assigned exactly once,
//! either by a `row` or by a `node` record, and every edge joining nodes of
//! different sides needs exactly one `cross` record.

use std::fmt::Write as _;

use super::{Crossing, InterfaceData, THETA_MIN};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    #[default]
    Native,
    Eses,
}

impl Convention {
    fn inside_sign(self) -> i8 {
        match self {
            Convention::Native => -1,
            Convention::Eses => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Convention::Native => "native",
            Convention::Eses => "eses",
        }
    }
}

fn sign_token(s: i8) -> &'static str {
    if s < 0 {
        "-1"
    } else {
        "+1"
    }
}

/// Serializes `data` on `grid` using run-length encoded rows.
pub fn export_interface(grid: &Grid, data: &InterfaceData, convention: Convention) -> String {
    let mut out = String::new();
    let s_in = convention.inside_sign();
    let far = grid.far_corner();
    let _ = writeln!(out, "# eulerian interface");
    let _ = writeln!(out, "convention {}", convention.name());
    let _ = writeln!(out, "n {} {} {}", grid.n[0], grid.n[1], grid.n[2]);
    let _ = writeln!(out, "h {}", grid.h);
    let _ = writeln!(
        out,
        "box {} {} {} {} {} {}",
        grid.origin[0], grid.origin[1], grid.origin[2], far[0], far[1], far[2]
    );
    for k in 0..grid.n[2] {
        for j in 0..grid.n[1] {
            let _ = write!(out, "row {j} {k}");
            let mut i = 0;
            while i < grid.n[0] {
                let v = data.inside[grid.index(i, j, k)];
                let mut run = 1;
                while i + run < grid.n[0] && data.inside[grid.index(i + run, j, k)] == v {
                    run += 1;
                }
                let s = if v { s_in } else { -s_in };
                let _ = write!(out, " {run}*{}", sign_token(s));
                i += run;
            }
            out.push('\n');
        }
    }
    for axis in Axis::ALL {
        for c in &data.crossings[axis.index()] {
            let _ = writeln!(
                out,
                "cross {} {} {} {} {}",
                axis.name(),
                c.low[0],
                c.low[1],
                c.low[2],
                c.theta
            );
        }
    }
    out.push_str("end\n");
    out
}

fn ferr(line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| ferr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| ferr(line, format!("invalid {what} '{tok}'")))
}

fn parse_sign(tok: &str, line: usize) -> Result<i8> {
    match tok {
        "-1" | "-" => Ok(-1),
        "+1" | "1" | "+" => Ok(1),
        _ => Err(ferr(line, format!("invalid node sign '{tok}'"))),
    }
}

/// Parses a document produced by [`export_interface`] or written by hand
/// following the grammar in the module docs.
pub fn import_interface(text: &str) -> Result<(Grid, InterfaceData)> {
    let mut convention: Option<Convention> = None;
    let mut n: Option<[usize; 3]> = None;
    let mut h: Option<f64> = None;
    let mut bounds: Option<([f64; 3], [f64; 3], usize)> = None;
    let mut grid: Option<Grid> = None;
    let mut signs: Vec<i8> = Vec::new();
    let mut raw_cross: Vec<(Axis, [usize; 3], f64, usize)> = Vec::new();
    let mut ended = false;
    let mut last_line = 0;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        last_line = line;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if ended {
            return Err(ferr(line, "content after 'end'"));
        }
        let normalized = body.replacen('=', " ", 1);
        let mut toks = normalized.split_whitespace();
        let key = toks.next().unwrap_or_default();
        let needs_grid = matches!(key, "row" | "node" | "cross" | "end");
        if needs_grid && grid.is_none() {
            let (Some(nn), Some(hh), Some((lo, hi, bl))) = (n, h, bounds) else {
                return Err(ferr(line, "records before the n, h and box headers"));
            };
            let g = Grid::new(lo, hh, nn).map_err(|e| ferr(line, e.to_string()))?;
            let far = g.far_corner();
            for a in 0..3 {
                if (far[a] - hi[a]).abs() > 1e-9 * (1.0 + hi[a].abs()) {
                    return Err(ferr(
                        bl,
                        format!("box extent along {} disagrees with n and h", Axis::ALL[a].name()),
                    ));
                }
            }
            signs = vec![0; g.len()];
            grid = Some(g);
        }
        match key {
            "convention" => {
                let v = toks.next().ok_or_else(|| ferr(line, "missing convention"))?;
                convention = Some(match v {
                    "native" => Convention::Native,
                    "eses" => Convention::Eses,
                    _ => return Err(ferr(line, format!("unknown convention '{v}'"))),
                });
            }
            "n" => {
                let nn = [
                    num(toks.next(), line, "nx")?,
                    num(toks.next(), line, "ny")?,
                    num(toks.next(), line, "nz")?,
                ];
                n = Some(nn);
            }
            "h" => h = Some(num(toks.next(), line, "h")?),
            "box" => {
                let mut v = [0.0; 6];
                for (c, slot) in v.iter_mut().enumerate() {
                    *slot = num(toks.next(), line, &format!("box coordinate {}", c + 1))?;
                }
                bounds = Some(([v[0], v[1], v[2]], [v[3], v[4], v[5]], line));
            }
            "row" => {
                let g = grid.as_ref().unwrap();
                let j: usize = num(toks.next(), line, "j")?;
                let k: usize = num(toks.next(), line, "k")?;
                if j >= g.n[1] || k >= g.n[2] {
                    return Err(ferr(line, format!("row ({j}, {k}) outside the grid")));
                }
                let mut i = 0;
                for run in toks.by_ref() {
                    let (count, sign) = run
                        .split_once('*')
                        .ok_or_else(|| ferr(line, format!("invalid run '{run}'")))?;
                    let count: usize = num(Some(count), line, "run length")?;
                    let sign = parse_sign(sign, line)?;
                    if i + count > g.n[0] {
                        return Err(ferr(line, "row longer than nx"));
                    }
                    for ii in i..i + count {
                        let idx = g.index(ii, j, k);
                        if signs[idx] != 0 {
                            return Err(ferr(line, format!("node ({ii}, {j}, {k}) assigned twice")));
                        }
                        signs[idx] = sign;
                    }
                    i += count;
                }
                if i != g.n[0] {
                    return Err(ferr(line, format!("row covers {i} nodes, expected {}", g.n[0])));
                }
            }
            "node" => {
                let g = grid.as_ref().unwrap();
                let ijk = [
                    num::<usize>(toks.next(), line, "i")?,
                    num::<usize>(toks.next(), line, "j")?,
                    num::<usize>(toks.next(), line, "k")?,
                ];
                if (0..3).any(|a| ijk[a] >= g.n[a]) {
                    return Err(ferr(line, format!("node {ijk:?} outside the grid")));
                }
                let sign = parse_sign(toks.next().ok_or_else(|| ferr(line, "missing sign"))?, line)?;
                let idx = g.index(ijk[0], ijk[1], ijk[2]);
                if signs[idx] != 0 {
                    return Err(ferr(line, format!("node {ijk:?} assigned twice")));
                }
                signs[idx] = sign;
            }
            "cross" => {
                let g = grid.as_ref().unwrap();
                let name = toks.next().ok_or_else(|| ferr(line, "missing axis"))?;
                let axis = Axis::from_name(name).ok_or_else(|| ferr(line, format!("invalid axis '{name}'")))?;
                let low = [
                    num::<usize>(toks.next(), line, "i")?,
                    num::<usize>(toks.next(), line, "j")?,
                    num::<usize>(toks.next(), line, "k")?,
                ];
                let theta: f64 = num(toks.next(), line, "theta")?;
                let a = axis.index();
                if (0..3).any(|d| low[d] >= g.n[d]) || low[a] + 1 >= g.n[a] {
                    return Err(ferr(line, format!("crossing edge {low:?} outside the grid")));
                }
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(ferr(line, format!("fraction {theta} outside (0, 1)")));
                }
                let normal: Vec<&str> = toks.by_ref().collect();
                if !normal.is_empty() {
                    if normal.len() != 3 {
                        return Err(ferr(line, "normal needs three components"));
                    }
                    for c in normal {
                        num::<f64>(Some(c), line, "normal component")?;
                    }
                }
                raw_cross.push((axis, low, theta, line));
            }
            "end" => ended = true,
            _ => return Err(ferr(line, format!("unknown record '{key}'"))),
        }
        if key != "row" && key != "cross" && toks.next().is_some() {
            return Err(ferr(line, "trailing tokens"));
        }
    }

    let eof = last_line + 1;
    if !ended {
        return Err(ferr(eof, "unexpected end of document (missing 'end')"));
    }
    let grid = grid.ok_or_else(|| ferr(eof, "no node records"))?;
    if let Some(idx) = signs.iter().position(|&s| s == 0) {
        return Err(ferr(eof, format!("node {:?} has no value", grid.ijk(idx))));
    }
    let s_in = convention.unwrap_or_default().inside_sign();
    let inside: Vec<bool> = signs.iter().map(|&s| s == s_in).collect();

    let mut crossings: [Vec<(usize, Crossing)>; 3] = Default::default();
    let mut seen = [
        vec![false; grid.len()],
        vec![false; grid.len()],
        vec![false; grid.len()],
    ];
    for (axis, low, theta, line) in raw_cross {
        let idx = grid.index(low[0], low[1], low[2]);
        let a = axis.index();
        if inside[idx] == inside[idx + grid.stride(axis)] {
            return Err(ferr(line, format!("crossing on edge {low:?} joins same-side nodes")));
        }
        if std::mem::replace(&mut seen[a][idx], true) {
            return Err(ferr(line, format!("duplicate crossing on edge {low:?}")));
        }
        let theta = theta.clamp(THETA_MIN, 1.0 - THETA_MIN);
        crossings[a].push((idx, Crossing::new(&grid, axis, low, theta)));
    }
    let crossings = crossings.map(|mut v| {
        v.sort_by_key(|&(idx, _)| idx);
        v.into_iter().map(|(_, c)| c).collect::<Vec<_>>()
    });
    let data = InterfaceData { inside, crossings };
    data.validate(&grid).map_err(|e| ferr(eof, e.to_string()))?;
    Ok((grid, data))
}
