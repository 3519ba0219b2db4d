//! Dyadic cubes anchored at the origin and the Whitney decomposition of cell
//! sets with comparability window `2 diam(Q) <= dist(Q, complement) <= 8 diam(Q)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Aabb, CellSet, DistanceField};

/// The cube `prod [z_i 2^-k, (z_i + 1) 2^-k)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub k: i32,
    pub z: Vec<i64>,
}

impl DyadicCube {
    pub fn new(k: i32, z: Vec<i64>) -> Self {
        Self { k, z }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn side(&self) -> f64 {
        2f64.powi(-self.k)
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side();
        self.z.iter().map(|&z| (z as f64 + 0.5) * s).collect()
    }

    pub fn diam(&self) -> f64 {
        (self.n() as f64).sqrt() * self.side()
    }

    pub fn measure(&self) -> f64 {
        self.side().powi(self.n() as i32)
    }

    pub fn bounds(&self) -> Aabb {
        let s = self.side();
        Aabb::new(
            self.z.iter().map(|&z| z as f64 * s).collect(),
            self.z.iter().map(|&z| (z + 1) as f64 * s).collect(),
        )
    }

    pub fn parent(&self) -> Self {
        Self { k: self.k - 1, z: self.z.iter().map(|&z| z >> 1).collect() }
    }

    pub fn children(&self) -> Vec<Self> {
        let n = self.n();
        (0..1usize << n)
            .map(|bits| Self {
                k: self.k + 1,
                z: (0..n).map(|i| 2 * self.z[i] + ((bits >> (n - 1 - i)) & 1) as i64).collect(),
            })
            .collect()
    }

    pub fn contains(&self, other: &Self) -> bool {
        other.k >= self.k && {
            let shift = (other.k - self.k) as u32;
            other.z.iter().zip(&self.z).all(|(&o, &s)| o >> shift == s)
        }
    }

    /// Cell-index box `[lo, hi)` of this cube on a grid of width `2^-j`.
    pub fn cell_range(&self, j: i32) -> Option<(Vec<i64>, Vec<i64>)> {
        if self.k > j {
            return None;
        }
        let s = 1i64 << (j - self.k);
        Some((self.z.iter().map(|z| z * s).collect(), self.z.iter().map(|z| (z + 1) * s).collect()))
    }
}

/// Output of [`whitney`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyDecomposition {
    /// Cubes ordered by decreasing measure, then lexicographically.
    pub cubes: Vec<DyadicCube>,
    /// Flat indices of cells that admit no admissible cube at cell scale.
    pub remainder: Vec<usize>,
    pub resolution_insufficient: bool,
}

impl WhitneyDecomposition {
    pub fn cubes_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.cubes)?)
    }
}

/// Decomposes `s` into the maximal dyadic cubes `Q` contained in `s` with
/// `dist(Q, complement) >= 2 diam(Q)`.
///
/// The grid width must be `2^-j`. Cells that fail the distance test even at
/// cell scale go to the remainder and set `resolution_insufficient`.
pub fn whitney(s: &CellSet) -> Result<WhitneyDecomposition> {
    let grid = s.grid();
    let j = grid.dyadic_level().ok_or(Error::NonDyadic(grid.h()))?;
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = grid.n();
    let field = DistanceField::new(s);

    // Contained cubes per level, with their minimal squared cell distance.
    let mut levels: Vec<HashMap<Vec<i64>, u64>> = Vec::new();
    let base: HashMap<Vec<i64>, u64> =
        s.iter().map(|flat| (grid.cell_index(flat), field.cell_sq(flat))).collect();
    levels.push(base);
    loop {
        let current = levels.last().expect("nonempty");
        let mut groups: HashMap<Vec<i64>, (usize, u64)> = HashMap::new();
        for (z, &d) in current {
            let parent: Vec<i64> = z.iter().map(|&zi| zi >> 1).collect();
            let entry = groups.entry(parent).or_insert((0, u64::MAX));
            entry.0 += 1;
            entry.1 = entry.1.min(d);
        }
        let full = 1usize << n;
        let next: HashMap<Vec<i64>, u64> =
            groups.into_iter().filter(|(_, (count, _))| *count == full).map(|(z, (_, d))| (z, d)).collect();
        if next.is_empty() {
            break;
        }
        levels.push(next);
    }

    let good = |depth: usize, d: u64| -> bool {
        // (dist / h)^2 >= (2 diam / h)^2 = 4 n side_cells^2
        let side = 1u64 << depth;
        d >= 4 * n as u64 * side * side
    };
    let mut cubes = Vec::new();
    for (depth, level) in levels.iter().enumerate() {
        for (z, &d) in level {
            if !good(depth, d) {
                continue;
            }
            let parent_good = levels.get(depth + 1).is_some_and(|up| {
                let parent: Vec<i64> = z.iter().map(|&zi| zi >> 1).collect();
                up.get(&parent).is_some_and(|&pd| good(depth + 1, pd))
            });
            if !parent_good {
                cubes.push(DyadicCube::new(j - depth as i32, z.clone()));
            }
        }
    }
    cubes.sort();
    let mut remainder: Vec<usize> =
        s.iter().filter(|&flat| !good(0, field.cell_sq(flat))).collect();
    remainder.sort_unstable();
    Ok(WhitneyDecomposition { resolution_insufficient: !remainder.is_empty(), cubes, remainder })
}

/// Physical distance from a dyadic cube to the complement of `s`, via a
/// precomputed distance field. The cube must not be finer than the grid.
pub fn cube_distance(field: &DistanceField, q: &DyadicCube) -> Result<f64> {
    let j = field.grid().dyadic_level().ok_or(Error::NonDyadic(field.grid().h()))?;
    let (lo, hi) = q.cell_range(j).ok_or_else(|| {
        Error::InvalidArgument(format!("cube at level {} is finer than the grid", q.k))
    })?;
    Ok(field.box_distance(&lo, &hi))
}

/// Cell set covered by a cube, clipped to the grid extent.
pub fn cube_cells(grid: &crate::grid::GridSpec, q: &DyadicCube) -> Result<CellSet> {
    let j = grid.dyadic_level().ok_or(Error::NonDyadic(grid.h()))?;
    let (lo, hi) = q.cell_range(j).ok_or_else(|| {
        Error::InvalidArgument(format!("cube at level {} is finer than the grid", q.k))
    })?;
    CellSet::from_indices(grid, grid.cells_in_box(&lo, &hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn center_and_diam() {
        let q = DyadicCube::new(3, vec![3]);
        assert_eq!(q.center(), vec![7.0 / 16.0]);
        assert_eq!(q.diam(), 0.125);
        let q = DyadicCube::new(0, vec![0, 0]);
        assert_eq!(q.center(), vec![0.5, 0.5]);
        assert_eq!(q.diam(), 2f64.sqrt());
        for child in q.children() {
            assert_eq!(child.diam(), q.diam() / 2.0);
            assert_eq!(child.parent(), q);
            assert!(q.contains(&child));
        }
        assert_eq!(DyadicCube::new(2, vec![-1]).parent(), DyadicCube::new(1, vec![-1]));
    }

    #[test]
    fn unit_interval() {
        let g = GridSpec::cube(1, 2f64.powi(-6), -1.0, 2.0).unwrap();
        let s = CellSet::open_box(&g, &[0.0], &[1.0]);
        let w = whitney(&s).unwrap();
        assert!(w.cubes.contains(&DyadicCube::new(3, vec![3])));
        let field = DistanceField::new(&s);
        let mut covered = w.remainder.len() as f64 * g.cell_volume();
        for q in &w.cubes {
            let d = cube_distance(&field, q).unwrap();
            assert!(2.0 * q.diam() <= d && d <= 8.0 * q.diam(), "{q:?} dist {d}");
            covered += q.measure();
        }
        assert_eq!(covered, s.measure());
        assert!(w.resolution_insufficient);
        let json = w.cubes_json().unwrap();
        assert!(json.starts_with("[{\"k\":3,\"z\":[2]}"), "{json}");
    }

    #[test]
    fn single_cell_is_remainder() {
        let g = GridSpec::cube(2, 0.125, -1.0, 1.0).unwrap();
        let s = CellSet::from_indices(&g, [g.flat_index(&[0, 0]).unwrap()]).unwrap();
        let w = whitney(&s).unwrap();
        assert!(w.cubes.is_empty());
        assert_eq!(w.remainder, vec![g.flat_index(&[0, 0]).unwrap()]);
        assert!(w.resolution_insufficient);
    }

    #[test]
    fn errors() {
        let g = GridSpec::cube(1, 0.125, -1.0, 1.0).unwrap();
        assert!(matches!(whitney(&CellSet::empty(&g)), Err(Error::EmptySet)));
        let g = GridSpec::new(1, 0.1, vec![0], vec![10]).unwrap();
        assert!(matches!(whitney(&CellSet::full(&g)), Err(Error::NonDyadic(_))));
    }
}
