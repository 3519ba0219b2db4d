//! Uniform grids on `R^n`: piecewise-constant functions, cell-union sets, and
//! the exact geometry (measure, norms, distances) built on them.
//!
//! A grid with cell width `h` and integer extent `[lo, hi)` per axis owns the
//! cells `prod [z_i h, (z_i + 1) h)` for `lo_i <= z_i < hi_i`. Storage is
//! row-major: the last axis varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a uniform grid: dimension, cell width and integer extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    h: f64,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl GridSpec {
    pub fn new(n: usize, h: f64, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!("cell width must be positive, got {h}")));
        }
        if lo.len() != n || hi.len() != n {
            return Err(Error::InvalidArgument(format!(
                "extent corners must have {n} coordinates"
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::InvalidArgument(format!("empty extent box {lo:?}..{hi:?}")));
        }
        Ok(Self { n, h, lo, hi })
    }

    /// Grid whose extent is the physical box `[lo, hi]^n`. Both corners must be
    /// integer multiples of `h`.
    pub fn cube(n: usize, h: f64, lo: f64, hi: f64) -> Result<Self> {
        let to_index = |v: f64| -> Result<i64> {
            let q = v / h;
            if q.fract() != 0.0 || !q.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "box corner {v} is not a multiple of the cell width {h}"
                )));
            }
            Ok(q as i64)
        };
        let (a, b) = (to_index(lo)?, to_index(hi)?);
        Self::new(n, h, vec![a; n], vec![b; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn shape(&self) -> Vec<usize> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) as usize).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Lebesgue measure of one cell, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Physical lower corner of the extent box.
    pub fn box_lo(&self) -> Vec<f64> {
        self.lo.iter().map(|&z| z as f64 * self.h).collect()
    }

    pub fn box_hi(&self) -> Vec<f64> {
        self.hi.iter().map(|&z| z as f64 * self.h).collect()
    }

    pub fn extent(&self) -> Aabb {
        Aabb::new(self.box_lo(), self.box_hi())
    }

    /// Returns `j` when `h = 2^-j`.
    pub fn dyadic_level(&self) -> Option<i32> {
        let j = -self.h.log2().round();
        if j.abs() > 1000.0 {
            return None;
        }
        let j = j as i32;
        (2f64.powi(-j) == self.h).then_some(j)
    }

    pub fn strides(&self) -> Vec<usize> {
        let shape = self.shape();
        let mut strides = vec![1usize; self.n];
        for axis in (0..self.n.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * shape[axis + 1];
        }
        strides
    }

    pub fn flat_index(&self, z: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        let mut stride = 1usize;
        for axis in (0..self.n).rev() {
            let (a, b) = (self.lo[axis], self.hi[axis]);
            if z[axis] < a || z[axis] >= b {
                return None;
            }
            flat += (z[axis] - a) as usize * stride;
            stride *= (b - a) as usize;
        }
        Some(flat)
    }

    /// Writes the integer index of cell `flat` into `out`.
    pub fn cell_index_into(&self, mut flat: usize, out: &mut [i64]) {
        for axis in (0..self.n).rev() {
            let len = (self.hi[axis] - self.lo[axis]) as usize;
            out[axis] = self.lo[axis] + (flat % len) as i64;
            flat /= len;
        }
    }

    pub fn cell_index(&self, flat: usize) -> Vec<i64> {
        let mut z = vec![0; self.n];
        self.cell_index_into(flat, &mut z);
        z
    }

    /// Flat indices of the cells in the index box `[lo, hi)`, clipped to the extent.
    pub fn cells_in_box(&self, lo: &[i64], hi: &[i64]) -> Vec<usize> {
        let a: Vec<i64> = (0..self.n).map(|i| lo[i].max(self.lo[i])).collect();
        let b: Vec<i64> = (0..self.n).map(|i| hi[i].min(self.hi[i])).collect();
        if a.iter().zip(&b).any(|(x, y)| x >= y) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut z = a.clone();
        loop {
            out.push(self.flat_index(&z).expect("clipped to extent"));
            let mut axis = self.n;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                z[axis] += 1;
                if z[axis] < b[axis] {
                    break;
                }
                z[axis] = a[axis];
            }
        }
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        self.cell_index(flat).into_iter().map(|z| (z as f64 + 0.5) * self.h).collect()
    }

    /// Centers of every cell, concatenated (`n` coordinates per cell).
    pub fn centers_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cell_count() * self.n);
        let mut z = vec![0; self.n];
        for flat in 0..self.cell_count() {
            self.cell_index_into(flat, &mut z);
            out.extend(z.iter().map(|&zi| (zi as f64 + 0.5) * self.h));
        }
        out
    }

    pub fn cell_box(&self, flat: usize) -> Aabb {
        let z = self.cell_index(flat);
        Aabb::new(
            z.iter().map(|&zi| zi as f64 * self.h).collect(),
            z.iter().map(|&zi| (zi + 1) as f64 * self.h).collect(),
        )
    }

    /// Cell containing `point`, if it lies in the extent box.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        let z: Vec<i64> = point.iter().map(|&p| (p / self.h).floor() as i64).collect();
        self.flat_index(&z)
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(n={}, h={}, {:?}..{:?}) vs (n={}, h={}, {:?}..{:?})",
                self.n, self.h, self.lo, self.hi, other.n, other.h, other.lo, other.hi
            )))
        }
    }
}

/// Closed axis-aligned box in physical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.lo.iter().zip(&self.hi).zip(other.lo.iter().zip(&other.hi)).all(
            |((a0, a1), (b0, b1))| a0 <= b1 && b0 <= a1,
        )
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.lo.iter().zip(&self.hi).zip(other.lo.iter().zip(&other.hi)).all(
            |((a0, a1), (b0, b1))| a0 <= b0 && b1 <= a1,
        )
    }

    /// Euclidean distance between two closed boxes.
    pub fn distance(&self, other: &Aabb) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .map(|((a0, a1), (b0, b1))| {
                let gap = (b0 - a1).max(a0 - b1).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// A finite union of grid cells, stored as a membership mask over the extent.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSet {
    grid: GridSpec,
    mask: Vec<bool>,
}

impl CellSet {
    pub fn empty(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), mask: vec![false; grid.cell_count()] }
    }

    pub fn full(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), mask: vec![true; grid.cell_count()] }
    }

    pub fn from_mask(grid: &GridSpec, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries, grid has {} cells",
                mask.len(),
                grid.cell_count()
            )));
        }
        Ok(Self { grid: grid.clone(), mask })
    }

    pub fn from_indices(grid: &GridSpec, cells: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = Self::empty(grid);
        for c in cells {
            if c >= set.mask.len() {
                return Err(Error::InvalidArgument(format!("cell {c} outside extent")));
            }
            set.mask[c] = true;
        }
        Ok(set)
    }

    /// Cells whose center satisfies `pred`.
    pub fn from_centers(grid: &GridSpec, mut pred: impl FnMut(&[f64]) -> bool) -> Self {
        let n = grid.n();
        let centers = grid.centers_flat();
        let mask = centers.chunks_exact(n).map(|c| pred(c)).collect();
        Self { grid: grid.clone(), mask }
    }

    /// Cells whose center lies in the open box `(lo, hi)`.
    pub fn open_box(grid: &GridSpec, lo: &[f64], hi: &[f64]) -> Self {
        Self::from_centers(grid, |c| c.iter().zip(lo.iter().zip(hi)).all(|(x, (a, b))| a < x && x < b))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    pub fn insert(&mut self, flat: usize) {
        self.mask[flat] = true;
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    /// `|s| = #cells * h^n`.
    pub fn measure(&self) -> f64 {
        self.len() as f64 * self.grid.cell_volume()
    }

    pub fn complement(&self) -> Self {
        Self { grid: self.grid.clone(), mask: self.mask.iter().map(|b| !b).collect() }
    }

    fn zip_with(&self, other: &Self, op: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let mask = self.mask.iter().zip(&other.mask).map(|(&a, &b)| op(a, b)).collect();
        Ok(Self { grid: self.grid.clone(), mask })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.grid == other.grid && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.grid == other.grid && !self.mask.iter().zip(&other.mask).any(|(&a, &b)| a && b)
    }

    pub fn indicator(&self, value: f64) -> GridFunction {
        let values = self.mask.iter().map(|&b| if b { value } else { 0.0 }).collect();
        GridFunction { grid: self.grid.clone(), values }
    }

    /// Euclidean distance from the closed box `q` to the closed complement of
    /// the cell union; the complement includes everything outside the extent.
    pub fn distance_to_complement(&self, q: &Aabb) -> f64 {
        let extent = self.grid.extent();
        if !extent.contains_box(q) {
            return 0.0;
        }
        let mut best = (0..self.grid.n())
            .map(|i| (q.lo[i] - extent.lo[i]).min(extent.hi[i] - q.hi[i]))
            .fold(f64::INFINITY, f64::min);
        for (flat, &member) in self.mask.iter().enumerate() {
            if !member {
                best = best.min(q.distance(&self.grid.cell_box(flat)));
                if best == 0.0 {
                    break;
                }
            }
        }
        best
    }
}

/// Exact distances from cells to the complement of a cell set.
///
/// For each cell `z` the field stores `D(z) = min_w sum_i max(0, |z_i - w_i| - 1)^2`
/// over complement cells `w` (including the exterior of the extent), which is
/// `(dist(cell z, complement) / h)^2` for closed cells. `D` equals the ordinary
/// squared Euclidean distance transform of the complement dilated by one cell
/// in the chessboard metric, computed here with separable lower envelopes.
#[derive(Clone, Debug)]
pub struct DistanceField {
    grid: GridSpec,
    sq: Vec<u64>,
}

impl DistanceField {
    pub fn new(set: &CellSet) -> Self {
        let grid = set.grid.clone();
        let n = grid.n();
        let shape = grid.shape();
        // Padded by one cell per side; the padding ring is complement.
        let pshape: Vec<usize> = shape.iter().map(|s| s + 2).collect();
        let total: usize = pshape.iter().product();
        let mut pstrides = vec![1usize; n];
        for axis in (0..n.saturating_sub(1)).rev() {
            pstrides[axis] = pstrides[axis + 1] * pshape[axis + 1];
        }
        let mut complement = vec![true; total];
        let mut z = vec![0usize; n];
        for (flat, &member) in set.mask.iter().enumerate() {
            let mut rem = flat;
            for axis in (0..n).rev() {
                z[axis] = rem % shape[axis];
                rem /= shape[axis];
            }
            let p: usize = z.iter().zip(&pstrides).map(|(zi, s)| (zi + 1) * s).sum();
            complement[p] = !member;
        }
        // Chessboard dilation, one axis at a time.
        let mut dilated = complement;
        for axis in 0..n {
            let stride = pstrides[axis];
            let len = pshape[axis];
            let src = dilated.clone();
            for (p, out) in dilated.iter_mut().enumerate() {
                if *out {
                    continue;
                }
                let coord = (p / stride) % len;
                if (coord > 0 && src[p - stride]) || (coord + 1 < len && src[p + stride]) {
                    *out = true;
                }
            }
        }
        let mut dist: Vec<f64> = vec![0.0; total];
        // First axis: exact two-sweep distance to the nearest source on the line.
        // Every line touches the padding ring at both ends, so all values are finite.
        {
            let stride = pstrides[0];
            let len = pshape[0];
            for start in 0..stride {
                let mut last: Option<usize> = None;
                for k in 0..len {
                    let p = start + k * stride;
                    if dilated[p] {
                        last = Some(k);
                    }
                    dist[p] = last.map_or(f64::INFINITY, |l| (k - l) as f64);
                }
                let mut next: Option<usize> = None;
                for k in (0..len).rev() {
                    let p = start + k * stride;
                    if dilated[p] {
                        next = Some(k);
                    }
                    if let Some(nx) = next {
                        dist[p] = dist[p].min((nx - k) as f64);
                    }
                    dist[p] *= dist[p];
                }
            }
        }
        let mut f = Vec::new();
        let mut d = Vec::new();
        let mut v = Vec::new();
        let mut zs = Vec::new();
        for axis in 1..n {
            let stride = pstrides[axis];
            let len = pshape[axis];
            let block = stride * len;
            f.resize(len, 0.0);
            d.resize(len, 0.0);
            v.resize(len, 0usize);
            zs.resize(len + 1, 0.0);
            for base in (0..total).step_by(block) {
                for start in base..base + stride {
                    for k in 0..len {
                        f[k] = dist[start + k * stride];
                    }
                    lower_envelope(&f, &mut d, &mut v, &mut zs);
                    for k in 0..len {
                        dist[start + k * stride] = d[k];
                    }
                }
            }
        }
        let mut sq = Vec::with_capacity(grid.cell_count());
        for flat in 0..grid.cell_count() {
            let mut rem = flat;
            let mut p = 0;
            for axis in (0..n).rev() {
                p += (rem % shape[axis] + 1) * pstrides[axis];
                rem /= shape[axis];
            }
            sq.push(dist[p].round() as u64);
        }
        Self { grid, sq }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `(dist(cell, complement) / h)^2` for one cell; zero off the set.
    pub fn cell_sq(&self, flat: usize) -> u64 {
        self.sq[flat]
    }

    /// Minimum of [`Self::cell_sq`] over the index box `[lo, hi)`.
    /// Returns 0 if the box leaves the extent.
    pub fn box_sq(&self, lo: &[i64], hi: &[i64]) -> u64 {
        let g = &self.grid;
        if (0..g.n()).any(|i| lo[i] < g.lo()[i] || hi[i] > g.hi()[i]) {
            return 0;
        }
        let mut best = u64::MAX;
        let mut z = lo.to_vec();
        loop {
            let flat = g.flat_index(&z).expect("inside extent");
            best = best.min(self.sq[flat]);
            if best == 0 {
                return 0;
            }
            let mut axis = g.n();
            loop {
                if axis == 0 {
                    return best;
                }
                axis -= 1;
                z[axis] += 1;
                if z[axis] < hi[axis] {
                    break;
                }
                z[axis] = lo[axis];
            }
        }
    }

    /// Physical distance from the cell-aligned index box `[lo, hi)` to the complement.
    pub fn box_distance(&self, lo: &[i64], hi: &[i64]) -> f64 {
        self.grid.h() * (self.box_sq(lo, hi) as f64).sqrt()
    }
}

// Lower envelope of parabolas `f[q] + (k - q)^2`.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let len = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..len {
        let fq = f[q] + (q * q) as f64;
        loop {
            let r = v[k];
            let s = (fq - (f[r] + (r * r) as f64)) / (2.0 * (q as f64 - r as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: the new parabola dominates everything seen so far
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let r = v[k];
        let diff = q as f64 - r as f64;
        *out = diff * diff + f[r];
    }
}

/// A real function on the grid, constant on each cell; zero outside the extent.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionJson {
    n: usize,
    h: f64,
    lo: Vec<i64>,
    hi: Vec<i64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value {v} at cell {i}")));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.cell_count()] }
    }

    /// Samples `f` at cell centers.
    pub fn from_centers(grid: &GridSpec, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let n = grid.n();
        let values = grid.centers_flat().chunks_exact(n).map(|c| f(c)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `sum |v|^2 h^n`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    /// Signed integral `sum v h^n`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Cells where `|value| > t`.
    pub fn superlevel_set(&self, t: f64) -> CellSet {
        CellSet {
            grid: self.grid.clone(),
            mask: self.values.iter().map(|v| v.abs() > t).collect(),
        }
    }

    /// Keeps values on `s`, zero elsewhere.
    pub fn restrict(&self, s: &CellSet) -> Result<Self> {
        self.grid.ensure_same(&s.grid)?;
        let values = self
            .values
            .iter()
            .zip(&s.mask)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn support(&self) -> CellSet {
        CellSet { grid: self.grid.clone(), mask: self.values.iter().map(|&v| v != 0.0).collect() }
    }

    pub fn to_json(&self) -> Result<String> {
        let json = GridFunctionJson {
            n: self.grid.n,
            h: self.grid.h,
            lo: self.grid.lo.clone(),
            hi: self.grid.hi.clone(),
            values: self.values.clone(),
        };
        Ok(serde_json::to_string(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: GridFunctionJson = serde_json::from_str(text)?;
        let grid = GridSpec::new(json.n, json.h, json.lo, json.hi)?;
        Self::new(&grid, json.values)
    }

    /// Plain-text form: `n`, `h`, `lo`, `hi` header lines, then one value per
    /// line in row-major order.
    pub fn to_text(&self) -> String {
        let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "n {}\nh {}\nlo {}\nhi {}\n",
            self.grid.n,
            self.grid.h,
            join(&self.grid.lo),
            join(&self.grid.hi)
        );
        for v in &self.values {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse(format!("expected `{key}` line, got `{line}`")));
            }
            Ok(parts.map(str::to_owned).collect())
        };
        let parse_err = |e: &dyn std::fmt::Display| Error::Parse(e.to_string());
        let n: usize = field("n")?.first().ok_or_else(|| Error::Parse("empty n".into()))?
            .parse().map_err(|e| parse_err(&e))?;
        let h: f64 = field("h")?.first().ok_or_else(|| Error::Parse("empty h".into()))?
            .parse().map_err(|e| parse_err(&e))?;
        let ints = |v: Vec<String>| -> Result<Vec<i64>> {
            v.iter().map(|s| s.parse::<i64>().map_err(|e| parse_err(&e))).collect()
        };
        let lo = ints(field("lo")?)?;
        let hi = ints(field("hi")?)?;
        let grid = GridSpec::new(n, h, lo, hi)?;
        let values = lines
            .map(|l| l.parse::<f64>().map_err(|e| parse_err(&e)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&grid, values)
    }
}
