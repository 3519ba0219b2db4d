//! Replay of the endpoint weak-type bound for function inputs.
//!
//! For every threshold the inputs are split at the maximal-function level,
//! each good/bad pattern is measured, and the bad parts are truncated to their
//! first `N` Whitney cubes and compared against the surrogate point masses.

use rayon::prelude::*;

use crate::decomposition::{enumerate_splittings, split_with_maximal, GoodBadSplit, Part};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernel::KernelSpec;
use crate::maximal::maximal_function;
use crate::operator::{EvalConfig, SlotValue};
use crate::verify::distribution::{sampled_difference, sampled_integral, sampled_measure_where};
use crate::verify::ledger::{InequalityLedger, Provenance};
use crate::verify::lemma1::{lemma1_sum, Collection, LemmaConfig, LemmaReport, LemmaSlot};
use crate::verify::theorem2::{evaluate, record_kernel};

#[derive(Clone, Debug)]
pub struct Theorem1Config {
    pub eval: EvalConfig,
    pub lemma: LemmaConfig,
    pub t_grid: Vec<f64>,
    pub n_list: Vec<usize>,
    /// Run even when the kernel is not known to be bounded on `L^2`.
    pub allow_unbounded: bool,
    pub seed: u64,
    /// Multiplier on probe-based suprema and fitted constants.
    pub safety: f64,
}

impl Theorem1Config {
    /// Thresholds `2^-6 .. 2^6` at powers of two and `N` in `{4, 16, 64}`.
    pub fn for_grid(h: f64) -> Self {
        Self {
            eval: EvalConfig::for_grid(h),
            lemma: LemmaConfig::for_grid(h),
            t_grid: (-6..=6).map(|p| 2f64.powi(p)).collect(),
            n_list: vec![4, 16, 64],
            allow_unbounded: false,
            seed: crate::kernel::DEFAULT_SEED,
            safety: 2.0,
        }
    }
}

/// Data of one truncation level of one mixed pattern.
struct Truncation {
    n: usize,
    e_tilde: f64,
    s_k: Vec<f64>,
    s_k_cheb: Vec<f64>,
    /// Cancellation bound without the safety factor.
    s_k_cancel: Vec<Option<f64>>,
    /// `sum prod ||b|| prod ||g||_inf I` and `sum prod |Q| I`.
    weighted_sum: Option<f64>,
    cube_sum: Option<f64>,
    omega: f64,
    s: f64,
    s_weak: f64,
}

struct Pattern {
    label: String,
    bad: usize,
    vanishes: bool,
    e_s: f64,
    /// All-good pattern: `int |T g|^(2/m)` and `prod (int |g|^2)^(1/m)`.
    good_terms: Option<(f64, f64)>,
    truncations: Vec<Truncation>,
}

struct Level {
    t: f64,
    g: f64,
    g_sum: f64,
    level_set: f64,
    mass_ratio: Vec<f64>,
    remainder_l1: f64,
    patterns: Vec<Pattern>,
}

/// Builds the ledger for `|{|T(f_1..f_m)| > t}|` over the configured thresholds.
///
/// Inputs are normalized to unit `L^1` norm; thresholds refer to the
/// normalized problem. Targets are all cell centers.
pub fn theorem1_ledger(k: &KernelSpec, fs: &[GridFunction], cfg: &Theorem1Config) -> Result<InequalityLedger> {
    let (n, m) = (k.n(), k.m());
    if fs.len() != m {
        return Err(Error::InvalidArgument(format!("{} inputs for degree {m}", fs.len())));
    }
    if cfg.t_grid.is_empty() || cfg.t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("thresholds must be a nonempty list of positive numbers".into()));
    }
    if cfg.n_list.is_empty() || cfg.n_list.contains(&0) {
        return Err(Error::InvalidArgument("truncation levels must be positive".into()));
    }
    if !k.boundedness().known_bounded && !cfg.allow_unbounded {
        return Err(Error::InvalidArgument(format!("kernel {} is not known to be bounded on L^2", k.name())));
    }
    let grid = fs[0].grid().clone();
    for f in fs {
        grid.ensure_same(f.grid())?;
    }
    if grid.n() != n {
        return Err(Error::InvalidArgument(format!("grid dimension {} for kernel dimension {n}", grid.n())));
    }
    cfg.eval.policy.validate(grid.h())?;

    let mut ledger = InequalityLedger::new(Provenance {
        seed: cfg.seed,
        h: grid.h(),
        extent: grid.box_lo().into_iter().zip(grid.box_hi()).map(|(a, b)| [a, b]).collect(),
        eps: cfg.eval.policy.eps,
        n_list: cfg.n_list.clone(),
    });
    record_kernel(&mut ledger, k);
    let norms: Vec<f64> = fs.iter().map(GridFunction::l1_norm).collect();
    if norms.contains(&0.0) {
        ledger.note("an input vanishes, so T is identically zero");
        ledger.constant("A2_root_empirical", 0.0);
        return Ok(ledger);
    }
    let fs: Vec<GridFunction> = fs.iter().zip(&norms).map(|(f, s)| f.scaled(1.0 / s)).collect();
    for (i, s) in norms.iter().enumerate() {
        ledger.constant(&format!("scale_f_{}", i + 1), *s);
    }

    let maximals: Vec<GridFunction> = fs.par_iter().map(maximal_function).collect();
    let m_norm = maximals.iter().map(weak_l1_constant).fold(0.0, f64::max);
    ledger.constant("M_norm_empirical", m_norm);
    let targets: Vec<Vec<f64>> = (0..grid.cell_count()).map(|c| grid.cell_center(c)).collect();
    let inputs: Vec<SlotValue> = fs.iter().cloned().map(SlotValue::Function).collect();
    let full = evaluate(k, &inputs, &targets, &cfg.eval)?;

    let levels: Vec<Level> = cfg
        .t_grid
        .par_iter()
        .map(|&t| level(k, &fs, &maximals, &full, &targets, t, cfg))
        .collect::<Result<_>>()?;

    let mf = m as f64;
    let singular = full.iter().filter(|v| v.is_none()).count();
    if singular > 0 {
        ledger.note(format!("{singular} singular targets of T(f) excluded"));
    }

    // Fitted constants over the whole run.
    let mut a1_fit: Option<f64> = None;
    let mut a3_fit: Option<f64> = None;
    for lv in &levels {
        for p in &lv.patterns {
            for tr in &p.truncations {
                if let Some(c) = tr.cube_sum {
                    let r = c / tr.omega;
                    a1_fit = Some(a1_fit.map_or(r, |a: f64| a.max(r)));
                }
                a3_fit = Some(a3_fit.map_or(tr.s_weak, |a: f64| a.max(tr.s_weak)));
            }
        }
    }
    let a1 = a1_fit.map(|a| cfg.safety * a);
    let factor_17 = 17.0 * (n as f64).sqrt();
    let norm = k.boundedness().norm;
    let b1 = norm.map(|v| 4.0 * v.powf(2.0 / mf));
    let b2 = m_norm * mf * mf
        + a1.unwrap_or(0.0) * mf * mf * (mf + 1.0) * 2f64.powi(m as i32 + 1) * factor_17.powi((n * m) as i32) * m_norm
        + 2.0 * (mf + 1.0).powf(1.0 / mf) * a3_fit.unwrap_or(0.0);
    if let Some(a) = a1_fit {
        ledger.constant("A1_fit", a);
    }
    if let Some(a) = a3_fit {
        ledger.constant("A3_fit", a);
    }
    if let Some(b) = b1 {
        ledger.constant("B1", b);
    }
    ledger.constant("B2", b2);

    let mut a2_root: f64 = 0.0;
    let mut s_by_n = vec![0.0f64; cfg.n_list.len()];
    for lv in &levels {
        let t = lv.t;
        let tp = t.powf(1.0 / mf);
        let tag = format!("t={t}");
        a2_root = a2_root.max(tp * lv.level_set);
        ledger.check(format!("{tag}: |G| <= sum |G_i|"), "G-union", lv.g, lv.g_sum, 1e-12);
        ledger.check(format!("{tag}: sum |G_i| <= m||M||t^(-1/m)"), "G-union", lv.g_sum, mf * m_norm / tp, 1e-12);
        if lv.remainder_l1 > 0.0 {
            ledger.note(format!("{tag}: bad mass {} lies outside every Whitney cube", lv.remainder_l1));
        }
        for (i, r) in lv.mass_ratio.iter().enumerate() {
            ledger.check(format!("{tag}: slot {} mass bound", i + 1), "mass-bound", *r, 1.0, 1e-12);
        }
        let e_total: f64 = lv.patterns.iter().map(|p| p.e_s).sum();
        ledger.check(format!("{tag}: union over patterns"), "union-Es", lv.level_set, e_total, 1e-12);
        for p in &lv.patterns {
            let ptag = format!("{tag} {}", p.label);
            if p.vanishes {
                ledger.note(format!("{ptag}: pattern vanishes"));
                continue;
            }
            if let Some((int_pow, l2)) = p.good_terms {
                let cheb = 4.0 * t.powf(-2.0 / mf) * int_pow;
                ledger.check(format!("{ptag}: Chebyshev"), "E1-chebyshev", p.e_s, cheb, 1e-12);
                if let (Some(v), Some(b1)) = (norm, b1) {
                    let bounded = 4.0 * v.powf(2.0 / mf) * t.powf(-2.0 / mf) * l2;
                    ledger.check(format!("{ptag}: boundedness"), "E1-boundedness", cheb, bounded, 0.02);
                    ledger.check(format!("{ptag}: |E_1| <= B_1 t^(-1/m)"), "E1-final", p.e_s, b1 / tp, 0.0);
                }
                continue;
            }
            let l = p.bad as f64;
            let sk_scale = (l + 1.0) * 2f64.powi(m as i32) / t;
            for (ni, tr) in p.truncations.iter().enumerate() {
                let ntag = format!("{ptag} N={}", tr.n);
                s_by_n[ni] = s_by_n[ni].max(tr.s_weak);
                let split_rhs = tr.s_k.iter().map(|s| lv.g + s).sum::<f64>() + tr.s;
                ledger.check(format!("{ntag}: split"), "Es-split", tr.e_tilde, split_rhs, 1e-12);
                for (kk, (&sk, &cheb)) in tr.s_k.iter().zip(&tr.s_k_cheb).enumerate() {
                    let ktag = format!("{ntag} k={}", kk + 1);
                    ledger.check(format!("{ktag}: Chebyshev"), "Sk-chebyshev", sk, cheb, 1e-12);
                    if let Some(cancel) = tr.s_k_cancel[kk] {
                        ledger.check(format!("{ktag}: cancellation"), "Sk-cancellation", cheb, cfg.safety * sk_scale * cancel, 0.0);
                    }
                    if let Some(a1) = a1 {
                        let rhs = a1 * mf * (mf + 1.0) * 2f64.powi(m as i32 + 1) * factor_17.powi((n * m) as i32) * m_norm / tp;
                        ledger.check(format!("{ktag}: final"), "Sk-final", sk, rhs, 0.0);
                    }
                }
                if let (Some(w), Some(c)) = (tr.weighted_sum, tr.cube_sum) {
                    ledger.check(format!("{ntag}: mass step"), "Sk-mass", w, factor_17.powi((n * p.bad) as i32) * t * c, 1e-12);
                    if let Some(a1) = a1 {
                        ledger.check(format!("{ntag}: Hörmander sum"), "lemma1", c, a1 * tr.omega, 0.0);
                    }
                }
                ledger.check(format!("{ntag}: |E_s| <= B_2 t^(-1/m)"), "Es-final", tr.e_tilde, b2 / tp, 0.0);
            }
        }
        if let Some(b1) = b1 {
            let rhs = (b1 + (2f64.powi(m as i32) - 1.0) * b2) / tp;
            ledger.check(format!("{tag}: final"), "A2-final", lv.level_set, rhs, 0.0);
        }
    }
    for (nn, s) in cfg.n_list.iter().zip(&s_by_n) {
        ledger.constant(&format!("S_weak_N{nn}"), *s);
    }
    ledger.constant("A2_root_empirical", a2_root);
    Ok(ledger)
}

/// `sup_s s |{M f > s}| / ||f||_1`, exact over the sampled values.
pub fn weak_l1_constant(mf: &GridFunction) -> f64 {
    let vol = mf.grid().cell_volume();
    let mut v: Vec<f64> = mf.values().to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut best: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        if v.get(i + 1) != Some(&x) {
            best = best.max(x * (i + 1) as f64 * vol);
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn level(
    k: &KernelSpec,
    fs: &[GridFunction],
    maximals: &[GridFunction],
    full: &[Option<f64>],
    targets: &[Vec<f64>],
    t: f64,
    cfg: &Theorem1Config,
) -> Result<Level> {
    let m = k.m();
    let grid = fs[0].grid();
    let vol = grid.cell_volume();
    let all = vec![true; targets.len()];
    let split = split_with_maximal(fs, maximals, t)?;
    let outside_g: Vec<bool> = split.union.mask().iter().map(|b| !b).collect();
    let level_set = sampled_measure_where(full, &all, t, vol);
    let mass_ratio = split
        .slots
        .iter()
        .filter(|s| !s.pieces.is_empty())
        .map(|s| s.pieces.iter().map(|p| p.l1 / p.mass_bound).fold(0.0, f64::max))
        .collect();
    let remainder_l1 = split.slots.iter().map(|s| s.remainder_l1).sum();
    let threshold = t / 2f64.powi(m as i32);
    let mut patterns = Vec::new();
    for parts in enumerate_splittings(m) {
        let label: String = parts.iter().map(|p| if *p == Part::Good { 'g' } else { 'b' }).collect();
        let h: Vec<&GridFunction> =
            parts.iter().zip(&split.slots).map(|(p, s)| if *p == Part::Good { &s.good } else { &s.bad }).collect();
        let bad = parts.iter().filter(|p| **p == Part::Bad).count();
        if h.iter().any(|f| f.is_zero()) {
            patterns.push(Pattern { label, bad, vanishes: true, e_s: 0.0, good_terms: None, truncations: Vec::new() });
            continue;
        }
        let inputs: Vec<SlotValue> = h.iter().map(|f| SlotValue::Function((*f).clone())).collect();
        let values = evaluate(k, &inputs, targets, &cfg.eval)?;
        let e_s = sampled_measure_where(&values, &all, threshold, vol);
        let good_terms = (bad == 0).then(|| {
            let int_pow = sampled_integral(&values, &all, 2.0 / m as f64, vol);
            let l2: f64 = h.iter().map(|g| g.l2_norm_sq().powf(1.0 / m as f64)).product();
            (int_pow, l2)
        });
        let truncations = if bad == 0 {
            Vec::new()
        } else {
            truncations(k, &split, &parts, &outside_g, targets, t, cfg)?
        };
        patterns.push(Pattern { label, bad, vanishes: false, e_s, good_terms, truncations });
    }
    Ok(Level {
        t,
        g: split.union.measure(),
        g_sum: split.slots.iter().map(|s| s.level_set.measure()).sum(),
        level_set,
        mass_ratio,
        remainder_l1,
        patterns,
    })
}

fn truncations(
    k: &KernelSpec,
    split: &GoodBadSplit,
    parts: &[Part],
    outside_g: &[bool],
    targets: &[Vec<f64>],
    t: f64,
    cfg: &Theorem1Config,
) -> Result<Vec<Truncation>> {
    let (n, m) = (k.n(), k.m());
    let grid = split.union.grid();
    let vol = grid.cell_volume();
    let all = vec![true; targets.len()];
    let bad_slots: Vec<usize> = (0..m).filter(|&i| parts[i] == Part::Bad).collect();
    let l = bad_slots.len();
    let tau = t / ((l as f64 + 1.0) * 2f64.powi(m as i32));
    let n_max = *cfg.n_list.iter().max().expect("nonempty");
    let g_sup: f64 = (0..m).filter(|&i| parts[i] == Part::Good).map(|i| split.slots[i].good.linf_norm()).product();

    let lemma: Option<(LemmaReport, Vec<Collection>)> = if m - l > 1 || (m - l == 1 && n != 1) {
        None
    } else {
        let collections: Vec<Collection> = bad_slots
            .iter()
            .map(|&i| {
                let cubes: Vec<_> = split.slots[i].pieces.iter().take(n_max).map(|p| p.cube.clone()).collect();
                Collection::from_cubes(grid, &cubes)
            })
            .collect::<Result<_>>()?;
        let mut it = collections.iter();
        let slots: Vec<LemmaSlot> = parts
            .iter()
            .map(|p| if *p == Part::Bad { LemmaSlot::Sets(it.next().expect("one per bad slot")) } else { LemmaSlot::Free })
            .collect();
        let report = lemma1_sum(k, &slots, &split.union.complement(), &cfg.lemma)?;
        Some((report, collections))
    };

    let mut out = Vec::with_capacity(cfg.n_list.len());
    for &count in &cfg.n_list {
        let b_n: Vec<GridFunction> = bad_slots.iter().map(|&i| split.slots[i].bad_truncated(count)).collect::<Result<_>>()?;
        let nu_n: Vec<_> = bad_slots.iter().map(|&i| split.slots[i].surrogate(count)).collect();
        // Slot values with the bad slots given by `pick(position among bad slots)`.
        let build = |pick: &dyn Fn(usize) -> SlotValue| -> Vec<SlotValue> {
            (0..m)
                .map(|i| match bad_slots.iter().position(|&b| b == i) {
                    Some(q) => pick(q),
                    None => SlotValue::Function(split.slots[i].good.clone()),
                })
                .collect()
        };
        let e_tilde_vals = evaluate(k, &build(&|q| SlotValue::Function(b_n[q].clone())), targets, &cfg.eval)?;
        let e_tilde = sampled_measure_where(&e_tilde_vals, &all, t / 2f64.powi(m as i32), vol);
        let mut s_k = Vec::with_capacity(l);
        let mut s_k_cheb = Vec::with_capacity(l);
        for kk in 0..l {
            let with_b = build(&|q| if q < kk { SlotValue::Atoms(nu_n[q].clone()) } else { SlotValue::Function(b_n[q].clone()) });
            let with_nu = build(&|q| if q <= kk { SlotValue::Atoms(nu_n[q].clone()) } else { SlotValue::Function(b_n[q].clone()) });
            let d = sampled_difference(&evaluate(k, &with_b, targets, &cfg.eval)?, &evaluate(k, &with_nu, targets, &cfg.eval)?);
            s_k.push(sampled_measure_where(&d, outside_g, tau, vol));
            s_k_cheb.push((l as f64 + 1.0) * 2f64.powi(m as i32) / t * sampled_integral(&d, outside_g, 1.0, vol));
        }
        let s_vals = evaluate(k, &build(&|q| SlotValue::Atoms(nu_n[q].clone())), targets, &cfg.eval)?;
        let s = sampled_measure_where(&s_vals, &all, tau, vol);
        let denom: f64 = nu_n.iter().map(|nu| nu.total_variation().powf(1.0 / m as f64)).product::<f64>()
            * (0..m).filter(|&i| parts[i] == Part::Good).map(|i| split.slots[i].good.l1_norm().powf(1.0 / m as f64)).product::<f64>();
        let s_weak = if s == 0.0 { 0.0 } else { s * tau.powf(1.0 / m as f64) / denom };

        let (mut s_k_cancel, mut weighted_sum, mut cube_sum, mut omega) = (vec![None; l], None, None, 0.0);
        if let Some((report, collections)) = &lemma {
            omega = collections.iter().map(|c| c.truncated(count).union_measure).sum();
            let terms: Vec<_> = report.terms.iter().filter(|term| term.indices.iter().all(|&j| j < count)).collect();
            let piece = |q: usize, j: usize| &split.slots[bad_slots[q]].pieces[j];
            cube_sum = Some(terms.iter().map(|term| term.weight * term.integral).sum());
            weighted_sum = Some(
                terms
                    .iter()
                    .map(|term| term.indices.iter().enumerate().map(|(q, &j)| piece(q, j).l1).product::<f64>() * g_sup * term.integral)
                    .sum(),
            );
            for (kk, slot) in s_k_cancel.iter_mut().enumerate() {
                let total: f64 = terms
                    .iter()
                    .map(|term| {
                        let w: f64 = term
                            .indices
                            .iter()
                            .enumerate()
                            .map(|(q, &j)| {
                                let p = piece(q, j);
                                match q.cmp(&kk) {
                                    std::cmp::Ordering::Less => p.weight.abs(),
                                    std::cmp::Ordering::Equal => p.l1 + p.weight.abs(),
                                    std::cmp::Ordering::Greater => p.l1,
                                }
                            })
                            .product();
                        w * g_sup * term.integral
                    })
                    .sum();
                *slot = Some(total);
            }
        }
        out.push(Truncation { n: count, e_tilde, s_k, s_k_cheb, s_k_cancel, weighted_sum, cube_sum, omega, s, s_weak });
    }
    Ok(out)
}
