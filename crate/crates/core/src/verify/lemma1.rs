//! Numerical estimate of the Hörmander-type sum over collections of
//! separated sets.
//!
//! For sets `S_{i,j}` with reference points `c_{i,j}` and dilates
//! `Omega_i*`, the estimator computes
//! `sum_j prod_i |S_{i,j_i}| * int_y sup_{y in prod S} int_D |K(x, y) - K(x, c, y')| dx`
//! over a domain `D` outside the dilates. The supremum is taken over a finite
//! probe set (corners, face midpoints and center of each set's bounding box),
//! so the estimate is a lower bound on the true supremum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::BallSystem;
use crate::dyadic::{cube_cells, DyadicCube};
use crate::error::{Error, Result};
use crate::grid::{Aabb, CellSet, GridSpec};
use crate::kernel::KernelSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaSet {
    pub cells: Vec<usize>,
    pub measure: f64,
    pub center: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
}

/// One collection `{S_{i,j}}_j` with its dilate `Omega_i*`.
#[derive(Clone, Debug)]
pub struct Collection {
    pub sets: Vec<LemmaSet>,
    /// `Omega_i*` as cells.
    pub dilate: CellSet,
    /// `|Omega_i| = |union_j S_{i,j}|`.
    pub union_measure: f64,
}

impl Collection {
    /// Dyadic cubes with `Omega* = union 2Q`.
    pub fn from_cubes(grid: &GridSpec, cubes: &[DyadicCube]) -> Result<Self> {
        let mut dilate = CellSet::empty(grid);
        let mut union = CellSet::empty(grid);
        let mut sets = Vec::with_capacity(cubes.len());
        for q in cubes {
            let cells = cube_cells(grid, q)?;
            let b = q.bounds();
            let lo: Vec<f64> = b.lo.iter().zip(&b.hi).map(|(l, h)| l - (h - l) / 2.0).collect();
            let hi: Vec<f64> = b.lo.iter().zip(&b.hi).map(|(l, h)| h + (h - l) / 2.0).collect();
            dilate = dilate.union(&CellSet::open_box(grid, &lo, &hi))?;
            union = union.union(&cells)?;
            sets.push(LemmaSet { measure: cells.measure(), center: q.center(), probes: lattice(&b), cells: cells.iter().collect() });
        }
        Ok(Self { sets, dilate, union_measure: union.measure() })
    }

    /// Pieces of one slot of a ball system with `Omega* = union B(x, 2r)`.
    pub fn from_ball_slot(system: &BallSystem, slot: usize) -> Result<Self> {
        let grid = &system.grid;
        let s = system.slots.get(slot).ok_or_else(|| Error::InvalidArgument(format!("no ball slot {slot}")))?;
        let sets = s
            .pieces
            .iter()
            .map(|p| {
                let probes = snapped_probes(grid, &p.cells);
                LemmaSet { cells: p.cells.clone(), measure: p.measure, center: p.center.clone(), probes }
            })
            .collect();
        Ok(Self { sets, dilate: system.doubled_union(slot), union_measure: system.union(slot).measure() })
    }

    /// Arbitrary cell sets with reference points; probes are the bounding
    /// box lattice snapped into each set.
    pub fn from_sets(grid: &GridSpec, sets: &[(CellSet, Vec<f64>)], dilate: CellSet) -> Result<Self> {
        let mut union = CellSet::empty(grid);
        let mut out = Vec::with_capacity(sets.len());
        for (s, c) in sets {
            if s.is_empty() {
                return Err(Error::EmptySet);
            }
            union = union.union(s)?;
            let cells: Vec<usize> = s.iter().collect();
            out.push(LemmaSet { probes: snapped_probes(grid, &cells), measure: s.measure(), center: c.clone(), cells });
        }
        Ok(Self { sets: out, dilate, union_measure: union.measure() })
    }

    /// Keeps the first `count` sets.
    pub fn truncated(&self, count: usize) -> Self {
        let sets: Vec<LemmaSet> = self.sets.iter().take(count).cloned().collect();
        let grid = self.dilate.grid();
        let union = CellSet::from_indices(grid, sets.iter().flat_map(|s| s.cells.iter().copied())).expect("same grid");
        Self { sets, dilate: self.dilate.clone(), union_measure: union.measure() }
    }
}

/// `{lo, mid, hi}^n` of a box.
fn lattice(b: &Aabb) -> Vec<Vec<f64>> {
    let n = b.lo.len();
    let mut out = vec![Vec::with_capacity(n)];
    for axis in 0..n {
        let opts = [b.lo[axis], (b.lo[axis] + b.hi[axis]) / 2.0, b.hi[axis]];
        out = out.into_iter().flat_map(|p| opts.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    out
}

fn snapped_probes(grid: &GridSpec, cells: &[usize]) -> Vec<Vec<f64>> {
    let n = grid.n();
    let boxes: Vec<Aabb> = cells.iter().map(|&c| grid.cell_box(c)).collect();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for b in &boxes {
        for a in 0..n {
            lo[a] = lo[a].min(b.lo[a]);
            hi[a] = hi[a].max(b.hi[a]);
        }
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in lattice(&Aabb::new(lo, hi)) {
        let snapped = boxes
            .iter()
            .map(|b| (0..n).map(|a| p[a].clamp(b.lo[a], b.hi[a])).collect::<Vec<f64>>())
            .min_by(|u, v| sq_dist(u, &p).total_cmp(&sq_dist(v, &p)))
            .expect("nonempty set");
        if !out.contains(&snapped) {
            out.push(snapped);
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Role of one kernel slot in the sum.
#[derive(Clone, Copy, Debug)]
pub enum LemmaSlot<'a> {
    Sets(&'a Collection),
    /// Integrated over the grid extent (one-dimensional only).
    Free,
}

#[derive(Clone, Debug)]
pub struct LemmaConfig {
    /// Stride in cells between quadrature nodes of a free slot.
    pub y_stride: usize,
    /// Target cells within this distance of a free-slot node are skipped.
    pub eps: f64,
    /// Cap on set tuples times probe tuples times free-slot nodes.
    pub budget: u64,
}

impl LemmaConfig {
    pub fn for_grid(h: f64) -> Self {
        Self { y_stride: 16, eps: 2.0 * h, budget: crate::operator::DEFAULT_BUDGET }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleTerm {
    pub indices: Vec<usize>,
    /// `prod_i |S_{i,j_i}|`.
    pub weight: f64,
    /// `int_y sup int_D |K(x, y) - K(x, c, y')| dx`.
    pub integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub sum: f64,
    /// `sum_i |Omega_i|`.
    pub omega_total: f64,
    /// `sum / omega_total`, the fitted constant.
    pub ratio: f64,
    pub terms: Vec<TupleTerm>,
    pub evaluated_probes: usize,
    pub skipped_probes: usize,
}

/// Complement of the union of the dilates.
pub fn outside_dilates(grid: &GridSpec, slots: &[LemmaSlot]) -> Result<CellSet> {
    let mut d = CellSet::empty(grid);
    for s in slots {
        if let LemmaSlot::Sets(c) = s {
            d = d.union(&c.dilate)?;
        }
    }
    Ok(d.complement())
}

/// Evaluates the sum over every tuple of sets, integrating `x` over `domain`.
pub fn lemma1_sum(k: &KernelSpec, slots: &[LemmaSlot], domain: &CellSet, cfg: &LemmaConfig) -> Result<LemmaReport> {
    let (n, m) = (k.n(), k.m());
    let grid = domain.grid();
    if slots.len() != m || grid.n() != n {
        return Err(Error::InvalidArgument(format!("{} slots for a kernel of degree {m}", slots.len())));
    }
    let collections: Vec<(usize, &Collection)> = slots
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            LemmaSlot::Sets(c) => Some((i, *c)),
            LemmaSlot::Free => None,
        })
        .collect();
    let free: Vec<usize> = (0..m).filter(|i| matches!(slots[*i], LemmaSlot::Free)).collect();
    if collections.is_empty() {
        return Err(Error::InvalidArgument("at least one slot must hold sets".into()));
    }
    if !free.is_empty() && (free.len() > 1 || n != 1) {
        return Err(Error::InvalidArgument("free slots are supported only for one free slot in one dimension".into()));
    }
    for (_, c) in &collections {
        grid.ensure_same(c.dilate.grid())?;
        if c.sets.is_empty() {
            return Err(Error::EmptySet);
        }
    }
    let vol = grid.cell_volume();
    let xs: Vec<usize> = domain.iter().collect();
    let xs: Vec<f64> = xs.iter().flat_map(|&c| grid.cell_center(c)).collect();
    let y_nodes: Vec<f64> = if free.is_empty() {
        vec![0.0]
    } else {
        let stride = cfg.y_stride.max(1);
        (0..grid.cell_count()).step_by(stride).map(|c| grid.cell_center(c)[0] + (stride as f64 - 1.0) * grid.h() / 2.0).collect()
    };
    let y_weight = if free.is_empty() { 1.0 } else { cfg.y_stride.max(1) as f64 * grid.h() };

    let radix: Vec<usize> = collections.iter().map(|(_, c)| c.sets.len()).collect();
    let total: usize = radix.iter().product();
    let probe_work: u128 = collections
        .iter()
        .map(|(_, c)| c.sets.iter().map(|s| s.probes.len() as u128).max().unwrap_or(0))
        .product();
    let required = total as u128 * probe_work * y_nodes.len() as u128;
    if required > cfg.budget as u128 {
        return Err(Error::BudgetExceeded { required, budget: cfg.budget });
    }
    let results: Vec<(TupleTerm, usize, usize)> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let indices = unflatten(flat, &radix);
            let sets: Vec<&LemmaSet> = collections.iter().zip(&indices).map(|((_, c), &j)| &c.sets[j]).collect();
            let weight: f64 = sets.iter().map(|s| s.measure).product();
            let probe_radix: Vec<usize> = sets.iter().map(|s| s.probes.len()).collect();
            let probe_total: usize = probe_radix.iter().product();
            let (mut evaluated, mut skipped) = (0, 0);
            let mut integral = 0.0;
            let mut ys = vec![0.0; n * m];
            let mut cs = vec![0.0; n * m];
            for (pos, s) in collections.iter().zip(&sets) {
                cs[pos.0 * n..(pos.0 + 1) * n].copy_from_slice(&s.center);
            }
            for &y in &y_nodes {
                for &f in &free {
                    ys[f] = y;
                    cs[f] = y;
                }
                let mut best: Option<f64> = None;
                for pf in 0..probe_total {
                    let pi = unflatten(pf, &probe_radix);
                    for ((pos, s), &p) in collections.iter().zip(&sets).zip(&pi) {
                        ys[pos.0 * n..(pos.0 + 1) * n].copy_from_slice(&s.probes[p]);
                    }
                    let mut acc = 0.0;
                    for x in xs.chunks_exact(n) {
                        if !free.is_empty() && (x[0] - y).abs() < cfg.eps {
                            continue;
                        }
                        acc += (k.eval(x, &ys) - k.eval(x, &cs)).abs();
                    }
                    if acc.is_finite() {
                        evaluated += 1;
                        best = Some(best.map_or(acc, |b: f64| b.max(acc)));
                    } else {
                        skipped += 1;
                    }
                }
                if let Some(b) = best {
                    integral += y_weight * b * vol;
                } else {
                    skipped += usize::MAX / 2;
                }
            }
            (TupleTerm { indices, weight, integral }, evaluated, skipped)
        })
        .collect();
    let mut terms = Vec::with_capacity(total);
    let (mut evaluated, mut skipped) = (0usize, 0usize);
    for (t, e, s) in results {
        if s >= usize::MAX / 2 {
            return Err(Error::Singular(format!("every probe hits a singularity for sets {:?}", t.indices)));
        }
        evaluated += e;
        skipped += s;
        terms.push(t);
    }
    let sum: f64 = terms.iter().map(|t| t.weight * t.integral).sum();
    let omega_total: f64 = collections.iter().map(|(_, c)| c.union_measure).sum();
    Ok(LemmaReport { sum, omega_total, ratio: sum / omega_total, terms, evaluated_probes: evaluated, skipped_probes: skipped })
}

fn unflatten(mut flat: usize, radix: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radix.len()];
    for i in (0..radix.len()).rev() {
        out[i] = flat % radix[i];
        flat /= radix[i];
    }
    out
}
