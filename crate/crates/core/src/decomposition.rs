//! Constructive splittings: good/bad parts with Whitney pieces and surrogate
//! point masses, and measure-targeted disjointified ball systems.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{whitney, DyadicCube, WhitneyDecomposition};
use crate::error::{Error, Result};
use crate::grid::{CellSet, GridFunction, GridSpec};
use crate::kernel::euclid;
use crate::maximal::maximal_function;
use crate::operator::{AtomicMeasure, SlotValue};

/// Per-cube data of a bad part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubePiece {
    pub cube: DyadicCube,
    pub center: Vec<f64>,
    /// `a = int_Q b`.
    pub weight: f64,
    /// `||b 1_Q||_1`.
    pub l1: f64,
    /// `(17 sqrt(n))^n t^(1/m) |Q|`.
    pub mass_bound: f64,
    pub mass_bound_holds: bool,
}

/// Good/bad split of one input.
#[derive(Clone, Debug)]
pub struct SlotSplit {
    /// `G = {M f > t^(1/m)}`.
    pub level_set: CellSet,
    pub good: GridFunction,
    pub bad: GridFunction,
    /// Whitney cubes in truncation order (decreasing measure).
    pub pieces: Vec<CubePiece>,
    /// Cells of `G` not covered by any Whitney cube.
    pub remainder: Vec<usize>,
    /// `int |b|` over the remainder cells.
    pub remainder_l1: f64,
    pub resolution_insufficient: bool,
}

impl SlotSplit {
    /// `nu^N`: atoms at the first `N` cube centers with weights `a_j`.
    pub fn surrogate(&self, count: usize) -> AtomicMeasure {
        let n = self.good.grid().n();
        let atoms = self.pieces.iter().take(count).map(|p| (p.center.clone(), p.weight)).collect();
        AtomicMeasure::new(n, atoms).expect("cube centers are finite")
    }

    /// `b 1_Q` for piece `j`.
    pub fn piece(&self, j: usize) -> Result<GridFunction> {
        let cells = crate::dyadic::cube_cells(self.bad.grid(), &self.pieces[j].cube)?;
        self.bad.restrict(&cells)
    }

    /// `b^N = sum_{j < N} b 1_{Q_j}`.
    pub fn bad_truncated(&self, count: usize) -> Result<GridFunction> {
        let grid = self.bad.grid();
        let mut mask = vec![false; grid.cell_count()];
        let j = grid.dyadic_level().ok_or(Error::NonDyadic(grid.h()))?;
        for p in self.pieces.iter().take(count) {
            let (lo, hi) = p.cube.cell_range(j).expect("cubes are not finer than the grid");
            for c in grid.cells_in_box(&lo, &hi) {
                mask[c] = true;
            }
        }
        self.bad.restrict(&CellSet::from_mask(grid, mask)?)
    }

    /// Cubes `Q_j` for `j < N` as cell sets.
    pub fn cube_sets(&self, count: usize) -> Result<Vec<CellSet>> {
        self.pieces.iter().take(count).map(|p| crate::dyadic::cube_cells(self.bad.grid(), &p.cube)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct GoodBadSplit {
    pub slots: Vec<SlotSplit>,
    /// `G = union G_i`.
    pub union: CellSet,
    pub t: f64,
    pub m: usize,
}

/// Splits each `f_i` at height `t^(1/m)` of its maximal function, with `m = fs.len()`.
pub fn split(fs: &[GridFunction], t: f64) -> Result<GoodBadSplit> {
    let maximals: Vec<GridFunction> = fs.par_iter().map(maximal_function).collect();
    split_with_maximal(fs, &maximals, t)
}

/// Like [`split`] with precomputed maximal functions.
pub fn split_with_maximal(fs: &[GridFunction], maximals: &[GridFunction], t: f64) -> Result<GoodBadSplit> {
    if fs.is_empty() {
        return Err(Error::InvalidArgument("no inputs to split".into()));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {t}")));
    }
    let grid = fs[0].grid();
    for f in fs.iter().chain(maximals) {
        grid.ensure_same(f.grid())?;
    }
    let m = fs.len();
    let level = t.powf(1.0 / m as f64);
    let slots: Vec<SlotSplit> = fs
        .par_iter()
        .zip(maximals)
        .map(|(f, mf)| split_one(f, mf, level))
        .collect::<Result<_>>()?;
    let mut union = CellSet::empty(grid);
    for s in &slots {
        union = union.union(&s.level_set)?;
    }
    Ok(GoodBadSplit { slots, union, t, m })
}

fn split_one(f: &GridFunction, mf: &GridFunction, level: f64) -> Result<SlotSplit> {
    let grid = f.grid();
    let n = grid.n();
    let level_set = mf.superlevel_set(level);
    let good = f.restrict(&level_set.complement())?;
    let bad = f.restrict(&level_set)?;
    let decomposition = if level_set.is_empty() {
        WhitneyDecomposition { cubes: Vec::new(), remainder: Vec::new(), resolution_insufficient: false }
    } else {
        whitney(&level_set)?
    };
    let j = grid.dyadic_level().ok_or(Error::NonDyadic(grid.h()))?;
    let vol = grid.cell_volume();
    let factor = (17.0 * (n as f64).sqrt()).powi(n as i32);
    let pieces = decomposition
        .cubes
        .iter()
        .map(|q| {
            let (lo, hi) = q.cell_range(j).expect("cubes are not finer than the grid");
            let (mut sum, mut abs) = (0.0, 0.0);
            for c in grid.cells_in_box(&lo, &hi) {
                let v = bad.values()[c];
                sum += v;
                abs += v.abs();
            }
            let (weight, l1) = (sum * vol, abs * vol);
            let mass_bound = factor * level * q.measure();
            CubePiece { cube: q.clone(), center: q.center(), weight, l1, mass_bound, mass_bound_holds: l1 <= mass_bound }
        })
        .collect();
    let remainder_l1 = decomposition.remainder.iter().map(|&c| bad.values()[c].abs()).sum::<f64>() * vol;
    Ok(SlotSplit {
        level_set,
        good,
        bad,
        pieces,
        remainder: decomposition.remainder,
        remainder_l1,
        resolution_insufficient: decomposition.resolution_insufficient,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Good,
    Bad,
}

/// All `2^m` good/bad patterns in lexicographic order, all-good first and
/// the first slot most significant.
pub fn enumerate_splittings(m: usize) -> Vec<Vec<Part>> {
    (0..1usize << m)
        .map(|bits| (0..m).map(|i| if (bits >> (m - 1 - i)) & 1 == 1 { Part::Bad } else { Part::Good }).collect())
        .collect()
}

/// One disjointified ball piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallPiece {
    pub center: Vec<f64>,
    pub weight: f64,
    pub radius: f64,
    /// Requested measure `a t^(-1/m)`.
    pub target: f64,
    pub measure: f64,
    /// Flat indices of the piece cells, ascending.
    pub cells: Vec<usize>,
    pub doubled_measure: f64,
    pub doubled_cells: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSlot {
    pub pieces: Vec<BallPiece>,
    pub measure: f64,
    pub doubled_measure: f64,
}

#[derive(Clone, Debug)]
pub struct BallSystem {
    pub grid: GridSpec,
    pub slots: Vec<BallSlot>,
    pub t: f64,
    pub m: usize,
}

impl BallSystem {
    pub fn union(&self, slot: usize) -> CellSet {
        let cells = self.slots[slot].pieces.iter().flat_map(|p| p.cells.iter().copied());
        CellSet::from_indices(&self.grid, cells).expect("cells lie in the grid")
    }

    pub fn doubled_union(&self, slot: usize) -> CellSet {
        let cells = self.slots[slot].pieces.iter().flat_map(|p| p.doubled_cells.iter().copied());
        CellSet::from_indices(&self.grid, cells).expect("cells lie in the grid")
    }

    /// `E* = union_i E_i*`.
    pub fn doubled_total(&self) -> CellSet {
        let cells = self.slots.iter().flat_map(|s| s.pieces.iter().flat_map(|p| p.doubled_cells.iter().copied()));
        CellSet::from_indices(&self.grid, cells).expect("cells lie in the grid")
    }

    pub fn piece_set(&self, slot: usize, j: usize) -> CellSet {
        CellSet::from_indices(&self.grid, self.slots[slot].pieces[j].cells.iter().copied())
            .expect("cells lie in the grid")
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            t: f64,
            m: usize,
            h: f64,
            slots: Vec<SlotOut<'a>>,
            doubled_total_measure: f64,
            doubled_bound: f64,
        }
        #[derive(Serialize)]
        struct SlotOut<'a> {
            order: Vec<usize>,
            measure: f64,
            doubled_measure: f64,
            pieces: Vec<PieceOut<'a>>,
        }
        #[derive(Serialize)]
        struct PieceOut<'a> {
            center: &'a [f64],
            weight: f64,
            radius: f64,
            target: f64,
            measure: f64,
            doubled_radius: f64,
            doubled_measure: f64,
        }
        let n = self.grid.n();
        let out = Out {
            t: self.t,
            m: self.m,
            h: self.grid.h(),
            slots: self
                .slots
                .iter()
                .map(|s| SlotOut {
                    order: (0..s.pieces.len()).collect(),
                    measure: s.measure,
                    doubled_measure: s.doubled_measure,
                    pieces: s
                        .pieces
                        .iter()
                        .map(|p| PieceOut {
                            center: &p.center,
                            weight: p.weight,
                            radius: p.radius,
                            target: p.target,
                            measure: p.measure,
                            doubled_radius: 2.0 * p.radius,
                            doubled_measure: p.doubled_measure,
                        })
                        .collect(),
                })
                .collect(),
            doubled_total_measure: self.doubled_total().measure(),
            doubled_bound: self.m as f64 * 2f64.powi(n as i32) * self.t.powf(-1.0 / self.m as f64),
        };
        Ok(serde_json::to_string(&out)?)
    }
}

/// Builds `E_{i,j} = B(x_{i,j}, r_{i,j}) minus earlier pieces` with
/// `|E_{i,j}| = a_{i,j} t^(-1/m)`, and the doubled system.
///
/// Ball membership is by cell center in the open ball. Among the achievable
/// cell counts the one closest to the target is chosen and the radius is
/// placed midway between the two distances that bracket it.
pub fn build_ball_system(nus: &[AtomicMeasure], t: f64, m: usize, grid: &GridSpec) -> Result<BallSystem> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {t}")));
    }
    if nus.len() > m || m == 0 {
        return Err(Error::InvalidArgument(format!("{} measure slots for degree {m}", nus.len())));
    }
    for (i, nu) in nus.iter().enumerate() {
        if nu.n() != grid.n() {
            return Err(Error::InvalidArgument(format!("measure {i} has dimension {}", nu.n())));
        }
        for (j, a) in nu.atoms().iter().enumerate() {
            if !(a.weight > 0.0) {
                return Err(Error::NonPositiveWeight { slot: i, atom: j, weight: a.weight });
            }
        }
    }
    let scale = t.powf(-1.0 / m as f64);
    let centers = grid.centers_flat();
    let slots = nus
        .par_iter()
        .enumerate()
        .map(|(i, nu)| build_slot(i, nu, scale, grid, &centers))
        .collect::<Result<_>>()?;
    Ok(BallSystem { grid: grid.clone(), slots, t, m })
}

fn build_slot(slot: usize, nu: &AtomicMeasure, scale: f64, grid: &GridSpec, centers: &[f64]) -> Result<BallSlot> {
    let n = grid.n();
    let vol = grid.cell_volume();
    let extent = grid.extent();
    let mut claimed = vec![false; grid.cell_count()];
    let mut claimed_doubled = vec![false; grid.cell_count()];
    let mut pieces = Vec::with_capacity(nu.len());
    for (j, atom) in nu.atoms().iter().enumerate() {
        let x = &atom.point;
        let target = atom.weight * scale;
        let mut dists: Vec<(f64, usize)> = (0..grid.cell_count())
            .filter(|&c| !claimed[c])
            .map(|c| (euclid(x, &centers[c * n..(c + 1) * n]), c))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let wanted = target / vol;
        if wanted > dists.len() as f64 {
            return Err(Error::InsufficientRoom {
                slot,
                atom: j,
                reason: format!("target measure {target} exceeds the free measure {}", dists.len() as f64 * vol),
            });
        }
        // Achievable counts are the positions where the distance strictly increases.
        let mut best: Option<usize> = None;
        for count in 1..=dists.len() {
            let achievable = count == dists.len() || dists[count].0 > dists[count - 1].0;
            if !achievable {
                continue;
            }
            if best.map_or(true, |b| (count as f64 - wanted).abs() < (b as f64 - wanted).abs()) {
                best = Some(count);
            }
            if count as f64 > wanted {
                break;
            }
        }
        let count = best.ok_or_else(|| Error::InsufficientRoom {
            slot,
            atom: j,
            reason: "no free cells".into(),
        })?;
        let radius = if count < dists.len() {
            0.5 * (dists[count - 1].0 + dists[count].0)
        } else {
            dists[count - 1].0 + 0.5 * grid.h()
        };
        let room = (0..n).map(|a| (x[a] - extent.lo[a]).min(extent.hi[a] - x[a])).fold(f64::INFINITY, f64::min);
        if 2.0 * radius > room {
            return Err(Error::InsufficientRoom {
                slot,
                atom: j,
                reason: format!("doubled ball of radius {} leaves the extent box", 2.0 * radius),
            });
        }
        let mut cells: Vec<usize> = dists[..count].iter().map(|d| d.1).collect();
        cells.sort_unstable();
        for &c in &cells {
            claimed[c] = true;
        }
        let doubled_cells: Vec<usize> = (0..grid.cell_count())
            .filter(|&c| !claimed_doubled[c] && euclid(x, &centers[c * n..(c + 1) * n]) < 2.0 * radius)
            .collect();
        for &c in &doubled_cells {
            claimed_doubled[c] = true;
        }
        pieces.push(BallPiece {
            center: x.clone(),
            weight: atom.weight,
            radius,
            target,
            measure: cells.len() as f64 * vol,
            cells,
            doubled_measure: doubled_cells.len() as f64 * vol,
            doubled_cells,
        });
    }
    let measure = pieces.iter().map(|p| p.measure).sum();
    let doubled_measure = pieces.iter().map(|p| p.doubled_measure).sum();
    Ok(BallSlot { pieces, measure, doubled_measure })
}

/// Arguments of `sigma_k`: slots `1..=k` are `t^(1/m) 1_{E_i}`, slots
/// `k+1..=l` the measures, then the functions.
pub fn sigma_inputs(
    system: &BallSystem,
    nus: &[AtomicMeasure],
    fs: &[GridFunction],
    k: usize,
) -> Result<Vec<SlotValue>> {
    let l = nus.len();
    if k > l {
        return Err(Error::InvalidArgument(format!("sigma index {k} exceeds {l} measure slots")));
    }
    let m = l + fs.len();
    let height = system.t.powf(1.0 / m as f64);
    let mut out = Vec::with_capacity(m);
    for i in 0..k {
        out.push(SlotValue::Function(system.union(i).indicator(height)));
    }
    out.extend(nus[k..].iter().cloned().map(SlotValue::Atoms));
    out.extend(fs.iter().cloned().map(SlotValue::Function));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(h: f64, lo: f64, hi: f64) -> GridFunction {
        let g = GridSpec::cube(1, h, lo, hi).unwrap();
        CellSet::open_box(&g, &[0.0], &[1.0]).indicator(1.0)
    }

    #[test]
    fn high_threshold_is_all_good() {
        let f = unit(2f64.powi(-6), -4.0, 4.0);
        let s = split(&[f.clone(), f.clone()], 4.0).unwrap();
        for slot in &s.slots {
            assert!(slot.level_set.is_empty());
            assert_eq!(slot.good, f);
            assert!(slot.bad.is_zero());
            assert!(slot.pieces.is_empty());
        }
    }

    #[test]
    fn low_threshold_mass_conservation() {
        let h = 2f64.powi(-8);
        let f = unit(h, -4.0, 4.0);
        let s = split(&[f.clone(), f.clone()], 0.25).unwrap();
        let slot = &s.slots[0];
        assert!((slot.level_set.measure() - 3.0).abs() <= 2.0 * h);
        let total: f64 = slot.pieces.iter().map(|p| p.weight).sum::<f64>() + slot.remainder_l1;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(slot.pieces.iter().all(|p| p.mass_bound_holds));
        assert!(slot.good.linf_norm() <= 0.5);
        assert_eq!(s.slots[0].pieces, s.slots[1].pieces);
        for (j, p) in slot.pieces.iter().enumerate().take(8) {
            let piece = slot.piece(j).unwrap();
            assert_eq!(piece.integral(), p.weight);
        }
        let nu = slot.surrogate(4);
        assert_eq!(nu.len(), 4);
        assert!(nu.total_variation() <= slot.bad.l1_norm());
    }

    #[test]
    fn splitting_patterns() {
        use Part::*;
        assert_eq!(enumerate_splittings(1), vec![vec![Good], vec![Bad]]);
        assert_eq!(
            enumerate_splittings(2),
            vec![vec![Good, Good], vec![Good, Bad], vec![Bad, Good], vec![Bad, Bad]]
        );
        assert_eq!(enumerate_splittings(4).len(), 16);
    }

    fn line(h: f64, half: f64) -> GridSpec {
        GridSpec::cube(1, h, -half, half).unwrap()
    }

    #[test]
    fn single_ball() {
        let g = line(2f64.powi(-6), 4.0);
        let sys = build_ball_system(&[AtomicMeasure::dirac(vec![0.0])], 4.0, 2, &g).unwrap();
        let p = &sys.slots[0].pieces[0];
        assert_eq!(p.radius, 0.25);
        assert_eq!(p.measure, 0.5);
        assert!(sys.to_json().unwrap().contains("\"radius\":0.25"));
    }

    #[test]
    fn separated_balls() {
        let g = line(2f64.powi(-6), 16.0);
        let nu = AtomicMeasure::new(1, vec![(vec![0.0], 1.0), (vec![10.0], 1.0)]).unwrap();
        let sys = build_ball_system(&[nu], 4.0, 2, &g).unwrap();
        let radii: Vec<f64> = sys.slots[0].pieces.iter().map(|p| p.radius).collect();
        assert_eq!(radii, vec![0.25, 0.25]);
    }

    #[test]
    fn overlapping_balls() {
        let g = line(2f64.powi(-10), 4.0);
        let nu = AtomicMeasure::new(1, vec![(vec![0.0], 1.0), (vec![0.1], 1.0)]).unwrap();
        let sys = build_ball_system(&[nu], 4.0, 2, &g).unwrap();
        let p = &sys.slots[0].pieces[1];
        // B(0.1, r) minus (-1/4, 1/4) has measure 2r - 0.5 + ... = 0.5 at r = 0.5.
        assert!((p.radius - 0.5).abs() <= 2f64.powi(-10));
        assert!((p.measure - 0.5).abs() <= 1e-3 * 0.5);
        let e1 = sys.piece_set(0, 0);
        let e2 = sys.piece_set(0, 1);
        assert!(e1.is_disjoint(&e2));
    }

    #[test]
    fn ball_errors() {
        let g = line(2f64.powi(-6), 1.0);
        let nu = AtomicMeasure::new(1, vec![(vec![0.0], -1.0)]).unwrap();
        assert!(matches!(build_ball_system(&[nu], 4.0, 2, &g), Err(Error::NonPositiveWeight { .. })));
        let big = AtomicMeasure::new(1, vec![(vec![0.0], 100.0)]).unwrap();
        assert!(matches!(build_ball_system(&[big], 4.0, 2, &g), Err(Error::InsufficientRoom { .. })));
        let edge = AtomicMeasure::new(1, vec![(vec![0.9], 0.4)]).unwrap();
        assert!(matches!(build_ball_system(&[edge], 4.0, 2, &g), Err(Error::InsufficientRoom { .. })));
    }

    #[test]
    fn sigma_argument_lists() {
        let g = line(2f64.powi(-6), 4.0);
        let d0 = AtomicMeasure::dirac(vec![0.0]);
        let f = unit(2f64.powi(-6), -4.0, 4.0).scaled(0.5);
        let sys = build_ball_system(std::slice::from_ref(&d0), 4.0, 2, &g).unwrap();
        let s0 = sigma_inputs(&sys, std::slice::from_ref(&d0), std::slice::from_ref(&f), 0).unwrap();
        assert_eq!(s0, vec![SlotValue::Atoms(d0.clone()), SlotValue::Function(f.clone())]);
        let s1 = sigma_inputs(&sys, std::slice::from_ref(&d0), std::slice::from_ref(&f), 1).unwrap();
        assert_eq!(s1.len(), 2);
        match &s1[0] {
            SlotValue::Function(e) => {
                assert_eq!(e.linf_norm(), 2.0);
                assert_eq!(e.l1_norm(), 1.0);
            }
            _ => panic!("expected indicator"),
        }
        assert!(sigma_inputs(&sys, &[d0], &[f], 2).is_err());
    }
}
