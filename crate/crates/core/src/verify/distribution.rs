//! Distribution functions and weak quasinorms of sampled functions.

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// `lambda(t) = |{|F| > t}|` at each `t`, which must be strictly increasing.
pub fn distribution_function(f: &GridFunction, ts: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_ts(ts)?;
    let vol = f.grid().cell_volume();
    let mut abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    abs.sort_unstable_by(f64::total_cmp);
    Ok(ts
        .iter()
        .map(|&t| {
            let below = abs.partition_point(|&v| v <= t);
            (t, (abs.len() - below) as f64 * vol)
        })
        .collect())
}

/// `sup_t t |{|F| > t}|^(1/p)` over the given thresholds.
pub fn weak_quasinorm(f: &GridFunction, p: f64, ts: &[f64]) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent must be positive, got {p}")));
    }
    Ok(distribution_function(f, ts)?.into_iter().map(|(t, mu)| t * mu.powf(1.0 / p)).fold(0.0, f64::max))
}

/// `count` log-uniform points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::InvalidArgument(format!("bad threshold range [{lo}, {hi}] x {count}")));
    }
    if count == 1 || hi == lo {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect())
}

/// Thresholds for estimating the weak quasinorm of `F`.
///
/// The range runs from the smallest positive `|F|` value up to the largest
/// value whose superlevel set still holds `min_cells` cells; above that the
/// level sets are too coarse to measure. Both ends sit a relative `1e-9`
/// below the sampled values so that cells at a plateau are counted.
pub fn t_grid_for(f: &GridFunction, count: usize, min_cells: usize) -> Result<Vec<f64>> {
    let mut abs: Vec<f64> = f.values().iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    if abs.is_empty() {
        return Err(Error::EmptySet);
    }
    abs.sort_unstable_by(|a, b| b.total_cmp(a));
    let lo = *abs.last().expect("nonempty");
    let hi = abs[min_cells.max(1).min(abs.len()) - 1];
    let shrink = 1.0 - 1e-9;
    log_grid(lo * shrink, hi * shrink, count)
}

fn check_ts(ts: &[f64]) -> Result<()> {
    if ts.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidArgument("thresholds must be finite and nonnegative".into()));
    }
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("thresholds must be strictly increasing".into()));
    }
    Ok(())
}

/// `|{i : |v_i| > t}| * vol`, skipping missing samples.
pub fn sampled_measure(values: &[Option<f64>], t: f64, vol: f64) -> f64 {
    values.iter().filter(|v| v.is_some_and(|v| v.abs() > t)).count() as f64 * vol
}

/// Like [`sampled_measure`] restricted to cells where `keep` holds.
pub fn sampled_measure_where(values: &[Option<f64>], keep: &[bool], t: f64, vol: f64) -> f64 {
    values.iter().zip(keep).filter(|(v, k)| **k && v.is_some_and(|v| v.abs() > t)).count() as f64 * vol
}

/// `sum |v_i|^power * vol` over kept, present samples.
pub fn sampled_integral(values: &[Option<f64>], keep: &[bool], power: f64, vol: f64) -> f64 {
    values.iter().zip(keep).filter_map(|(v, k)| if *k { *v } else { None }).map(|v| v.abs().powf(power)).sum::<f64>() * vol
}

/// Pointwise difference of two sampled functions.
pub fn sampled_difference(a: &[Option<f64>], b: &[Option<f64>]) -> Vec<Option<f64>> {
    a.iter().zip(b).map(|(x, y)| Some((*x)? - (*y)?)).collect()
}
