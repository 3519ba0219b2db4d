//! Parsers for the textual input specs: grids, slots, sets and targets.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use czlab::grid::{CellSet, GridFunction, GridSpec};
use czlab::kernel::KernelSpec;
use czlab::operator::{AtomicMeasure, SlotValue};

use crate::settings::{parse_real, Settings};

/// Grid from `--h` and `--box`; the box is the same interval on every axis.
pub fn grid(s: &Settings, n: usize, h_default: &str, box_default: &str) -> Result<GridSpec> {
    let h = parse_real(&s.string_or("h", h_default)).context("--h")?;
    if !(h > 0.0) || h.log2().fract() != 0.0 {
        bail!("--h must be a power of two, got {h}");
    }
    let (lo, hi) = interval(&s.string_or("box", box_default)).context("--box")?;
    GridSpec::cube(n, h, lo, hi).map_err(|e| anyhow!("--box: {e}"))
}

fn interval(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    let [lo, hi] = parts.as_slice() else { bail!("expected `lo,hi`, got `{text}`") };
    let (lo, hi) = (parse_real(lo)?, parse_real(hi)?);
    if !(lo < hi) {
        bail!("empty interval `{text}`");
    }
    Ok((lo, hi))
}

fn point(text: &str, n: usize) -> Result<Vec<f64>> {
    let p = text.split(',').map(parse_real).collect::<Result<Vec<_>>>()?;
    if p.len() != n {
        bail!("point `{text}` has {} coordinates, expected {n}", p.len());
    }
    Ok(p)
}

/// Kernel from `--kernel`, `--n`, `--m`, `--c`, `--j`.
///
/// `hilbert` is the one-dimensional `1/(x - y)`, which is the tensor Hilbert
/// kernel with `m = 1` scaled by `pi`.
pub fn kernel(s: &Settings, default: &str, m_default: usize) -> Result<KernelSpec> {
    let name = s.string_or("kernel", default);
    let n = s.usize_or("n", 1)?;
    let m = s.usize_or("m", m_default)?;
    let c = s.f64_or("c", 1.0)?;
    let j = s.usize_or("j", 1)?;
    if name == "hilbert" {
        if n != 1 || m != 1 {
            bail!("kernel `hilbert` needs n = 1 and m = 1");
        }
        return Ok(KernelSpec::tensor_hilbert(1)?.scaled(std::f64::consts::PI));
    }
    KernelSpec::by_name(&name, n, m, c, j).map_err(|e| anyhow!("--kernel: {e}"))
}

/// One `--slot` value.
///
/// Forms: `indicator:LO:HI[:VALUE]`, `zero`, `file:PATH` (plain text, or
/// JSON when the name ends in `.json`), `atoms:P@W;P@W`. Coordinates of
/// `LO`, `HI` and `P` are comma separated.
pub fn slot(text: &str, grid: &GridSpec) -> Result<SlotValue> {
    let n = grid.n();
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let value = match kind {
        "zero" => SlotValue::Function(GridFunction::zeros(grid)),
        "indicator" => {
            let parts: Vec<&str> = rest.split(':').collect();
            if !(2..=3).contains(&parts.len()) {
                bail!("expected `indicator:LO:HI[:VALUE]`, got `{text}`");
            }
            let (lo, hi) = (point(parts[0], n)?, point(parts[1], n)?);
            let value = parts.get(2).map_or(Ok(1.0), |v| parse_real(v))?;
            SlotValue::Function(CellSet::open_box(grid, &lo, &hi).indicator(value))
        }
        "file" => {
            let path = Path::new(rest);
            let body = std::fs::read_to_string(path).with_context(|| format!("reading {rest}"))?;
            let f = if rest.ends_with(".json") { GridFunction::from_json(&body) } else { GridFunction::from_text(&body) }
                .map_err(|e| anyhow!("{rest}: {e}"))?;
            grid.ensure_same(f.grid()).map_err(|e| anyhow!("{rest}: {e}"))?;
            SlotValue::Function(f)
        }
        "atoms" => {
            let atoms = rest
                .split(';')
                .filter(|a| !a.trim().is_empty())
                .map(|a| {
                    let (p, w) = a.split_once('@').ok_or_else(|| anyhow!("atom `{a}` needs the form POINT@WEIGHT"))?;
                    Ok((point(p, n)?, parse_real(w)?))
                })
                .collect::<Result<Vec<_>>>()?;
            SlotValue::Atoms(AtomicMeasure::new(n, atoms).map_err(|e| anyhow!("{text}: {e}"))?)
        }
        _ => bail!("unknown slot kind `{kind}` in `{text}`"),
    };
    Ok(value)
}

/// One `--set` value `LO:HI`: the open box with those corners.
pub fn set_box(text: &str, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = text.split_once(':').ok_or_else(|| anyhow!("expected `LO:HI`, got `{text}`"))?;
    let (lo, hi) = (point(lo, n)?, point(hi, n)?);
    if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
        bail!("empty box `{text}`");
    }
    Ok((lo, hi))
}

/// Union of all `--set` boxes.
pub fn set_union(s: &Settings, grid: &GridSpec, default: &str) -> Result<CellSet> {
    let mut texts = s.list("set");
    if texts.is_empty() {
        texts.push(default.to_string());
    }
    let mut out = CellSet::empty(grid);
    for t in &texts {
        let (lo, hi) = set_box(t, grid.n())?;
        out = out.union(&CellSet::open_box(grid, &lo, &hi))?;
    }
    if out.is_empty() {
        bail!("--set covers no cell centers");
    }
    Ok(out)
}

/// `grid` (all cell centers) or `P;P;...`.
pub fn targets(text: &str, grid: &GridSpec) -> Result<Vec<Vec<f64>>> {
    if text == "grid" {
        return Ok((0..grid.cell_count()).map(|i| grid.cell_center(i)).collect());
    }
    text.split(';').filter(|p| !p.trim().is_empty()).map(|p| point(p, grid.n())).collect()
}
