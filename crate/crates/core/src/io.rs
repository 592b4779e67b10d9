//! Text formats: grid files, density and trace CSVs, particle snapshots.
//!
//! A grid file is a header `torus d=<d> n=<n>` followed by the row-major
//! values, one per line, with 17 significant digits.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::{GridDensity, GridFunction, TorusGrid};
use crate::particles::{Domain, ParticleEnsemble};
use crate::real::Real;
use crate::wgf::FlowTrace;

/// Writes one grid block.
pub fn write_grid<S: Real, W: Write>(out: &mut W, grid: &TorusGrid, values: &[S]) -> Result<()> {
    writeln!(out, "torus d={} n={}", grid.dim(), grid.n())?;
    for v in values {
        writeln!(out, "{:.16e}", v.to_f64_lossy())?;
    }
    Ok(())
}

fn parse_field(token: Option<&str>, key: &str) -> Result<usize> {
    let tok = token.ok_or_else(|| Error::Parse(format!("missing `{key}=` field")))?;
    let rest = tok
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Parse(format!("expected `{key}=`, found `{tok}`")))?;
    rest.parse().map_err(|_| Error::Parse(format!("bad integer in `{tok}`")))
}

/// Parses a `torus d=<d> n=<n>` header.
pub fn parse_grid_header(line: &str) -> Result<TorusGrid> {
    let mut it = line.split_whitespace();
    if it.next() != Some("torus") {
        return Err(Error::Parse(format!("expected grid header, found `{line}`")));
    }
    let d = parse_field(it.next(), "d")?;
    let n = parse_field(it.next(), "n")?;
    TorusGrid::new(d, n)
}

/// Reads one grid block from a line iterator, skipping blank lines.
pub fn read_grid_block<S: Real, I>(lines: &mut I) -> Result<(TorusGrid, Vec<S>)>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut next_line = || -> Result<Option<String>> {
        for l in lines.by_ref() {
            let l = l?;
            if !l.trim().is_empty() {
                return Ok(Some(l));
            }
        }
        Ok(None)
    };
    let header = next_line()?.ok_or_else(|| Error::Parse("unexpected end of input before grid header".into()))?;
    let grid = parse_grid_header(&header)?;
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let l = next_line()?.ok_or_else(|| Error::Parse(format!("grid block ended after {k} of {} values", grid.len())))?;
        let v: f64 = l.trim().parse().map_err(|_| Error::Parse(format!("bad value `{}`", l.trim())))?;
        values.push(S::c(v));
    }
    Ok((grid, values))
}

/// Reads a single-block grid file.
pub fn read_grid<S: Real, R: BufRead>(input: R) -> Result<(TorusGrid, Vec<S>)> {
    read_grid_block(&mut input.lines())
}

/// Reads a grid file as a density (checked for nonnegativity and unit mass).
pub fn read_density<S: Real, R: BufRead>(input: R) -> Result<GridDensity<S>> {
    let (grid, values) = read_grid(input)?;
    GridDensity::new(grid, values)
}

/// Reads a grid file as a function.
pub fn read_function<S: Real, R: BufRead>(input: R) -> Result<GridFunction<S>> {
    let (grid, values) = read_grid(input)?;
    GridFunction::new(grid, values)
}

/// `x,value` rows of a one-dimensional grid quantity.
pub fn write_profile_csv<S: Real, W: Write>(out: &mut W, grid: &TorusGrid, values: &[S]) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::DimensionUnsupported(grid.dim()));
    }
    writeln!(out, "x,value")?;
    for (i, v) in values.iter().enumerate() {
        let x: f64 = grid.coords::<f64>(i)[0];
        writeln!(out, "{x:.16e},{:.16e}", v.to_f64_lossy())?;
    }
    Ok(())
}

/// `x,value` rows of a one-dimensional density.
pub fn write_density_csv<S: Real, W: Write>(out: &mut W, mu: &GridDensity<S>) -> Result<()> {
    write_profile_csv(out, mu.grid(), mu.values())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

/// Trace CSV with columns `t,F,dissipation,gap,min_density,max_density`;
/// the gap column is empty without a reference value.
pub fn write_trace_csv<S: Real, W: Write>(out: &mut W, trace: &FlowTrace<S>) -> Result<()> {
    writeln!(out, "t,F,dissipation,gap,min_density,max_density")?;
    for k in 0..trace.times.len() {
        let gap = trace.gaps.as_ref().map(|g| g[k].to_f64_lossy());
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            trace.times[k].to_f64_lossy(),
            trace.values[k].to_f64_lossy(),
            trace.dissipation[k].to_f64_lossy(),
            fmt_opt(gap),
            trace.min_density[k].to_f64_lossy(),
            trace.max_density[k].to_f64_lossy(),
        )?;
    }
    Ok(())
}

/// Particle snapshot rows `index,x1[,x2]`.
pub fn write_ensemble_csv<W: Write>(out: &mut W, ens: &ParticleEnsemble) -> Result<()> {
    let d = ens.dim;
    let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    writeln!(out, "index,{}", header.join(","))?;
    for (i, p) in ens.positions.chunks(d).enumerate() {
        let cols: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{i},{}", cols.join(","))?;
    }
    Ok(())
}

/// Sidecar `key=value` metadata of a particle snapshot.
pub fn write_ensemble_metadata<W: Write>(out: &mut W, ens: &ParticleEnsemble, params: &[(String, String)]) -> Result<()> {
    let domain = match ens.domain {
        Domain::Line => "line",
        Domain::Torus => "torus",
    };
    writeln!(out, "particles={}", ens.len())?;
    writeln!(out, "dim={}", ens.dim)?;
    writeln!(out, "time={:.16e}", ens.time)?;
    writeln!(out, "seed={}", ens.seed)?;
    writeln!(out, "domain={domain}")?;
    for (k, v) in params {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}
