//! Uncentered Hardy-Littlewood maximal function over grid-aligned cubes.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::grid::{CellSet, GridFunction};

/// Maximal averages of `|f|` over cubes with grid-aligned corners that contain
/// each cell and stay inside the extent.
///
/// In one dimension every grid-aligned interval is searched (`O(N^2)`). In
/// higher dimensions the cube side runs over `2^p h`.
pub fn maximal_function(f: &GridFunction) -> GridFunction {
    let grid = f.grid();
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let values = if grid.n() == 1 { maximal_1d(&abs) } else { maximal_dyadic_sides(&abs, &grid.shape()) };
    GridFunction::new(grid, values).expect("averages of finite values are finite")
}

/// `{M f > t^(1/m)}`.
pub fn level_set_g(f: &GridFunction, t: f64, m: usize) -> CellSet {
    maximal_function(f).superlevel_set(t.powf(1.0 / m as f64))
}

fn maximal_1d(a: &[f64]) -> Vec<f64> {
    let len = a.len();
    let mut prefix = vec![0.0; len + 1];
    for i in 0..len {
        prefix[i + 1] = prefix[i] + a[i];
    }
    // For each left end, the best average over right ends at or beyond each
    // cell; cells then take the best over left ends at or before them.
    let chunk = 64usize;
    let partial: Vec<Vec<f64>> = (0..len)
        .step_by(chunk)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut best = vec![0.0f64; len];
            let mut suffix = vec![0.0f64; len + 1];
            for left in start..(start + chunk).min(len) {
                let mut run = 0.0f64;
                for right in (left + 1..=len).rev() {
                    let avg = (prefix[right] - prefix[left]) / (right - left) as f64;
                    run = run.max(avg);
                    suffix[right] = run;
                }
                for i in left..len {
                    best[i] = best[i].max(suffix[i + 1]);
                }
            }
            best
        })
        .collect();
    let mut out = a.to_vec();
    for best in partial {
        for (o, b) in out.iter_mut().zip(best) {
            *o = o.max(b);
        }
    }
    out
}

fn maximal_dyadic_sides(a: &[f64], shape: &[usize]) -> Vec<f64> {
    let n = shape.len();
    let total = a.len();
    let mut strides = vec![1usize; n];
    for axis in (0..n - 1).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }
    let mut out = a.to_vec();
    let max_side = *shape.iter().min().expect("n >= 1");
    let mut side = 2usize;
    while side <= max_side {
        // Window sums with lower corner at each cell (NaN where the cube leaves the extent).
        let mut sums = a.to_vec();
        for axis in 0..n {
            let (stride, len) = (strides[axis], shape[axis]);
            let src = sums.clone();
            for (p, s) in sums.iter_mut().enumerate() {
                let coord = (p / stride) % len;
                if coord + side > len {
                    *s = f64::NAN;
                    continue;
                }
                let mut acc = 0.0;
                for r in 0..side {
                    acc += src[p + r * stride];
                }
                *s = acc;
            }
        }
        let vol = side.pow(n as u32) as f64;
        let mut best: Vec<f64> = sums.iter().map(|&s| if s.is_nan() { f64::NEG_INFINITY } else { s / vol }).collect();
        // Each cell takes the best cube whose lower corner is within side-1 below it, per axis.
        for axis in 0..n {
            let (stride, len) = (strides[axis], shape[axis]);
            let src = best.clone();
            let block = stride * len;
            for base in (0..total).step_by(block) {
                for start in base..base + stride {
                    sliding_max(&src, &mut best, start, stride, len, side);
                }
            }
        }
        for (o, b) in out.iter_mut().zip(best) {
            *o = o.max(b);
        }
        side *= 2;
    }
    out
}

// out[i] = max(src[i-w+1..=i]) along one line.
fn sliding_max(src: &[f64], out: &mut [f64], start: usize, stride: usize, len: usize, w: usize) {
    let mut window: VecDeque<usize> = VecDeque::new();
    for i in 0..len {
        let v = src[start + i * stride];
        while window.back().is_some_and(|&b| src[start + b * stride] <= v) {
            window.pop_back();
        }
        window.push_back(i);
        while window.front().is_some_and(|&f| f + w <= i) {
            window.pop_front();
        }
        out[start + i * stride] = src[start + window[0] * stride];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn unit_indicator(h: f64) -> GridFunction {
        let g = GridSpec::cube(1, h, -4.0, 4.0).unwrap();
        CellSet::open_box(&g, &[0.0], &[1.0]).indicator(1.0)
    }

    #[test]
    fn interval_indicator_closed_form() {
        let h = 2f64.powi(-8);
        let f = unit_indicator(h);
        let mf = maximal_function(&f);
        let g = f.grid();
        for (c, &v) in mf.values().iter().enumerate() {
            let x = g.cell_center(c)[0];
            let exact = |x: f64| {
                if x > 1.0 {
                    1.0 / x
                } else if x < 0.0 {
                    1.0 / (1.0 - x)
                } else {
                    1.0
                }
            };
            let lo = exact(x - h).min(exact(x + h));
            let hi = exact(x - h).max(exact(x + h)).max(exact(x));
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "x={x} Mf={v}");
        }
    }

    #[test]
    fn zero_and_homogeneity() {
        let f = unit_indicator(2f64.powi(-5));
        assert!(maximal_function(&f.scaled(0.0)).is_zero());
        let mf = maximal_function(&f);
        assert_eq!(maximal_function(&f.scaled(4.0)), mf.scaled(4.0));
    }

    #[test]
    fn level_sets() {
        let f = unit_indicator(2f64.powi(-8));
        assert!(level_set_g(&f, 4.0, 2).is_empty());
        for (t, m) in [(0.25, 2), (0.5, 1)] {
            let s = level_set_g(&f, t, m);
            assert!((s.measure() - 3.0).abs() <= 2.0 * 2f64.powi(-8), "{}", s.measure());
        }
    }

    #[test]
    fn two_dimensional_bounds() {
        let g = GridSpec::cube(2, 0.25, -2.0, 2.0).unwrap();
        let f = GridFunction::from_centers(&g, |c| c[0] - c[1]).unwrap();
        let mf = maximal_function(&f);
        for (v, m) in f.values().iter().zip(mf.values()) {
            assert!(*m >= v.abs());
            assert!(*m <= f.linf_norm());
        }
    }
}
