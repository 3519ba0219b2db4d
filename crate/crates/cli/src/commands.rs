//! Subcommand bodies.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::anyhow;
use czlab::dyadic::whitney;
use czlab::grid::{CellSet, GridFunction, GridSpec};
use czlab::kernel::{check_size, check_smoothness, KernelSpec, SamplerConfig, DEFAULT_SEED};
use czlab::maximal::maximal_function;
use czlab::operator::{apply, apply_lenient, AtomicMeasure, EvalConfig, Slot, SlotValue, TruncationPolicy, DEFAULT_BUDGET};
use czlab::decomposition::build_ball_system;
use czlab::verify::{
    lemma1_sum, log_grid, t_grid_for, theorem1_ledger, theorem2_ledger, Collection, InequalityLedger, LemmaConfig,
    LemmaSlot, Provenance, Theorem1Config, Theorem2Config,
};
use czlab::verify::distribution::sampled_measure;
use serde_json::json;

use crate::settings::Settings;
use crate::specs;

/// Why a run stopped; maps onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Eval(czlab::Error),
    Assertion(Vec<String>),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Eval(czlab::Error::BudgetExceeded { .. }) => 4,
            Self::Eval(_) => 2,
            Self::Assertion(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e:#}"),
            Self::Eval(e) => write!(f, "{e}"),
            Self::Assertion(names) => write!(f, "{} ledger entries failed: {}", names.len(), names.join("; ")),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Config(e)
    }
}

impl From<czlab::Error> for Failure {
    fn from(e: czlab::Error) -> Self {
        use czlab::Error::*;
        match e {
            // Rejections of the inputs themselves are configuration problems.
            InvalidArgument(_) | NonDyadic(_) | GridMismatch(_) | Parse(_) | HypothesisViolated { .. } => {
                Self::Config(anyhow!(e))
            }
            other => Self::Eval(other),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn run(name: &str, s: &Settings) -> Outcome {
    match name {
        "kernel-check" => kernel_check(s),
        "whitney" => whitney_cmd(s),
        "maximal" => maximal_cmd(s),
        "apply" => apply_cmd(s),
        "ball-system" => ball_system_cmd(s),
        "verify" => verify(s),
        other => Err(Failure::Config(anyhow!("unknown subcommand {other}"))),
    }
}

fn write(dir: &Path, file: &str, body: &str) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| anyhow!("creating {}: {e}", dir.display()))?;
    let path = dir.join(file);
    let mut body = body.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(&path, body).map_err(|e| anyhow!("writing {}: {e}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize")
}

fn eval_config(s: &Settings, h: f64) -> Result<EvalConfig, Failure> {
    let eps = s.f64_or("eps", 2.0)?;
    if !(eps >= 0.5) {
        return Err(anyhow!("--eps must be at least 0.5 cell widths, got {eps}").into());
    }
    let budget = s.u64_or("budget", DEFAULT_BUDGET)?;
    if budget == 0 {
        return Err(anyhow!("--budget must be positive").into());
    }
    Ok(EvalConfig { policy: TruncationPolicy { eps: eps * h, ..TruncationPolicy::for_grid(h) }, budget })
}

fn lemma_config(eval: &EvalConfig, h: f64) -> LemmaConfig {
    LemmaConfig { eps: eval.policy.eps, budget: eval.budget, ..LemmaConfig::for_grid(h) }
}

fn slots(s: &Settings, grid: &GridSpec, defaults: &[&str]) -> Result<Vec<SlotValue>, Failure> {
    let mut texts = s.list("slot");
    if texts.is_empty() {
        texts = defaults.iter().map(|d| d.to_string()).collect();
    }
    Ok(texts.iter().map(|t| specs::slot(t, grid)).collect::<anyhow::Result<Vec<_>>>()?)
}

fn check_arity(k: &KernelSpec, count: usize) -> Outcome {
    if count != k.m() {
        return Err(anyhow!("{count} --slot inputs for a kernel of degree {}", k.m()).into());
    }
    Ok(())
}

fn kernel_check(s: &Settings) -> Outcome {
    let k = specs::kernel(s, "homogeneous", 2)?;
    let sampler = SamplerConfig {
        samples: s.usize_or("samples", SamplerConfig::default().samples)?,
        seed: s.u64_or("seed", DEFAULT_SEED)?,
        ..SamplerConfig::default()
    };
    if sampler.samples == 0 {
        return Err(anyhow!("--samples must be positive").into());
    }
    let size = check_size(&k, &sampler)?;
    let smoothness = check_smoothness(&k, &sampler)?;
    let report = json!({
        "kernel": k.name(),
        "n": k.n(),
        "m": k.m(),
        "declared": { "C_K": k.c_k(), "delta": k.delta(), "boundedness": k.boundedness() },
        "sampler": sampler,
        "size": size,
        "smoothness": smoothness,
    });
    write(&s.out_dir(), "kernel_check.json", &pretty(&report))
}

fn whitney_cmd(s: &Settings) -> Outcome {
    let n = s.usize_or("n", 1)?;
    let grid = specs::grid(s, n, "2^-6", "-2,3")?;
    let set = specs::set_union(s, &grid, "0:1")?;
    let w = whitney(&set)?;
    let cube_measure: f64 = w.cubes.iter().map(|q| q.measure()).sum();
    let report = json!({
        "h": grid.h(),
        "n": n,
        "set_measure": set.measure(),
        "cube_measure": cube_measure,
        "remainder_measure": w.remainder.len() as f64 * grid.cell_volume(),
        "resolution_insufficient": w.resolution_insufficient,
        "cubes": w.cubes,
        "remainder": w.remainder.iter().map(|&c| grid.cell_center(c)).collect::<Vec<_>>(),
    });
    write(&s.out_dir(), "whitney.json", &pretty(&report))
}

fn function_slot(s: &Settings, grid: &GridSpec, default: &str) -> Result<GridFunction, Failure> {
    match slots(s, grid, &[default])?.into_iter().next() {
        Some(SlotValue::Function(f)) => Ok(f),
        _ => Err(anyhow!("the first --slot must be a function").into()),
    }
}

fn distribution_csv(values: &[Option<f64>], ts: &[f64], vol: f64, power: f64) -> String {
    let mut out = String::from("t,measure,weak\n");
    for &t in ts {
        let mu = sampled_measure(values, t, vol);
        out.push_str(&format!("{t},{mu},{}\n", t * mu.powf(power)));
    }
    out
}

fn maximal_cmd(s: &Settings) -> Outcome {
    let n = s.usize_or("n", 1)?;
    let grid = specs::grid(s, n, "2^-8", "-4,4")?;
    let f = function_slot(s, &grid, "indicator:0:1")?;
    let mf = maximal_function(&f);
    let dir = s.out_dir();
    write(&dir, "maximal.txt", &mf.to_text())?;
    if !mf.is_zero() {
        let ts = t_grid_for(&mf, 64, 1)?;
        let values: Vec<Option<f64>> = mf.values().iter().map(|&v| Some(v)).collect();
        write(&dir, "maximal_distribution.csv", &distribution_csv(&values, &ts, grid.cell_volume(), 1.0))?;
    }
    Ok(())
}

fn apply_cmd(s: &Settings) -> Outcome {
    let k = specs::kernel(s, "tensor-hilbert", 2)?;
    let grid = specs::grid(s, k.n(), "2^-8", "-4,4")?;
    let cfg = eval_config(s, grid.h())?;
    let inputs = slots(s, &grid, &vec!["indicator:0:1"; k.m()])?;
    check_arity(&k, inputs.len())?;
    let targets = specs::targets(&s.string_or("targets", "grid"), &grid)?;
    let slot_refs: Vec<Slot> = inputs.iter().map(SlotValue::as_slot).collect();
    let out = apply(&k, &slot_refs, &targets, &cfg)?;
    write(&s.out_dir(), "operator.csv", &out.to_csv(&targets))
}

fn atoms_only(inputs: Vec<SlotValue>) -> Result<Vec<AtomicMeasure>, Failure> {
    inputs
        .into_iter()
        .map(|v| match v {
            SlotValue::Atoms(nu) => Ok(nu),
            SlotValue::Function(_) => Err(anyhow!("every --slot must be atoms:...").into()),
        })
        .collect()
}

fn ball_system_cmd(s: &Settings) -> Outcome {
    let n = s.usize_or("n", 1)?;
    let m = s.usize_or("m", 2)?;
    let grid = specs::grid(s, n, "2^-8", "-4,4")?;
    let t = positive(s, "t", 1.0)?;
    let nus = atoms_only(slots(s, &grid, &["atoms:0@1"])?)?;
    if nus.len() > m {
        return Err(anyhow!("{} atomic slots for degree {m}", nus.len()).into());
    }
    let system = build_ball_system(&nus, t, m, &grid)?;
    write(&s.out_dir(), "ball_system.json", &system.to_json()?)
}

fn positive(s: &Settings, key: &str, default: f64) -> Result<f64, Failure> {
    let v = s.f64_or(key, default)?;
    if !(v > 0.0) {
        return Err(anyhow!("--{key} must be positive, got {v}").into());
    }
    Ok(v)
}

fn verify(s: &Settings) -> Outcome {
    let scenario = s.get("scenario").ok_or_else(|| anyhow!("--scenario is required (theorem1, theorem2, lemma1)"))?;
    let dir = s.out_dir();
    let ledger = match scenario {
        "theorem1" => verify_theorem1(s, &dir)?,
        "theorem2" => verify_theorem2(s, &dir)?,
        "lemma1" => verify_lemma1(s, &dir)?,
        other => return Err(anyhow!("unknown scenario `{other}`").into()),
    };
    write(&dir, "ledger.json", &ledger.to_json()?)?;
    write(&dir, "entries.csv", &entries_csv(&ledger))?;
    let failed: Vec<String> = ledger.failures().iter().map(|e| e.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(failed))
    }
}

fn entries_csv(ledger: &InequalityLedger) -> String {
    let mut out = String::from("name,anchor,lhs,rhs,tol,pass\n");
    for e in &ledger.entries {
        out.push_str(&format!("\"{}\",{},{},{},{},{}\n", e.name.replace('"', "'"), e.anchor, e.lhs, e.rhs, e.tol, e.pass));
    }
    out
}

fn t_grid(s: &Settings) -> Result<Option<Vec<f64>>, Failure> {
    if s.get("t-min").is_none() && s.get("t-max").is_none() && s.get("t-count").is_none() {
        return Ok(None);
    }
    let lo = positive(s, "t-min", 2f64.powi(-6))?;
    let hi = positive(s, "t-max", 2f64.powi(6))?;
    let count = s.usize_or("t-count", 13)?;
    if count == 0 || lo > hi || (count > 1 && lo == hi) {
        return Err(anyhow!("empty t-grid: t-min {lo}, t-max {hi}, t-count {count}").into());
    }
    if count == 1 {
        return Ok(Some(vec![lo]));
    }
    Ok(Some(log_grid(lo, hi, count)?))
}

fn n_list(s: &Settings) -> Result<Option<Vec<usize>>, Failure> {
    let Some(text) = s.get("N") else { return Ok(None) };
    let list = text
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| anyhow!("--N: {e}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if list.is_empty() || list.contains(&0) {
        return Err(anyhow!("--N entries must be positive").into());
    }
    Ok(Some(list))
}

fn verify_theorem1(s: &Settings, dir: &Path) -> Result<InequalityLedger, Failure> {
    let k = specs::kernel(s, "tensor-hilbert", 2)?;
    let grid = specs::grid(s, k.n(), "2^-8", "-16,16")?;
    let eval = eval_config(s, grid.h())?;
    let mut cfg = Theorem1Config::for_grid(grid.h());
    cfg.lemma = lemma_config(&eval, grid.h());
    cfg.eval = eval;
    cfg.seed = s.u64_or("seed", DEFAULT_SEED)?;
    cfg.allow_unbounded = s.bool_or("allow-unbounded", false)?;
    if let Some(ts) = t_grid(s)? {
        cfg.t_grid = ts;
    }
    if let Some(ns) = n_list(s)? {
        cfg.n_list = ns;
    }
    let inputs = slots(s, &grid, &vec!["indicator:0:1"; k.m()])?;
    check_arity(&k, inputs.len())?;
    let fs: Vec<GridFunction> = inputs
        .into_iter()
        .map(|v| match v {
            SlotValue::Function(f) => Ok(f),
            SlotValue::Atoms(_) => Err(Failure::Config(anyhow!("theorem1 takes function slots only"))),
        })
        .collect::<Result<_, _>>()?;
    let ledger = theorem1_ledger(&k, &fs, &cfg)?;

    let targets: Vec<Vec<f64>> = (0..grid.cell_count()).map(|i| grid.cell_center(i)).collect();
    let slot_refs: Vec<Slot> = fs.iter().map(Slot::Function).collect();
    let (values, _) = apply_lenient(&k, &slot_refs, &targets, &cfg.eval)?;
    write(dir, "distribution.csv", &distribution_csv(&values, &cfg.t_grid, grid.cell_volume(), k.m() as f64))?;
    Ok(ledger)
}

fn verify_theorem2(s: &Settings, dir: &Path) -> Result<InequalityLedger, Failure> {
    let k = specs::kernel(s, "homogeneous", 2)?;
    let grid = specs::grid(s, k.n(), "2^-7", "-4,4")?;
    let eval = eval_config(s, grid.h())?;
    let cfg = Theorem2Config {
        lemma: lemma_config(&eval, grid.h()),
        eval,
        seed: s.u64_or("seed", DEFAULT_SEED)?,
        ..Theorem2Config::for_grid(grid.h())
    };
    let t = positive(s, "t", 4.0)?;
    let inputs = slots(s, &grid, &vec!["atoms:0@1"; k.m()])?;
    check_arity(&k, inputs.len())?;
    let mut nus = Vec::new();
    let mut fs = Vec::new();
    for v in &inputs {
        match v {
            SlotValue::Atoms(nu) if fs.is_empty() => nus.push(nu.clone()),
            SlotValue::Atoms(_) => return Err(anyhow!("measure slots must come before function slots").into()),
            SlotValue::Function(f) => fs.push(f.clone()),
        }
    }
    let ledger = theorem2_ledger(&k, &nus, &fs, t, &grid, &cfg)?;

    let targets: Vec<Vec<f64>> = (0..grid.cell_count()).map(|i| grid.cell_center(i)).collect();
    let slot_refs: Vec<Slot> = inputs.iter().map(SlotValue::as_slot).collect();
    let (values, _) = apply_lenient(&k, &slot_refs, &targets, &cfg.eval)?;
    let ts = match t_grid(s)? {
        Some(ts) => ts,
        None => log_grid(t / 64.0, t * 64.0, 25)?,
    };
    write(dir, "distribution.csv", &distribution_csv(&values, &ts, grid.cell_volume(), k.m() as f64))?;
    Ok(ledger)
}

/// Collection of the `--set` boxes scaled by `lambda` about the origin, or
/// `None` when the doubled boxes leave the grid.
fn box_collection(grid: &GridSpec, boxes: &[(Vec<f64>, Vec<f64>)], lambda: f64) -> Result<Option<Collection>, Failure> {
    let (glo, ghi) = (grid.box_lo(), grid.box_hi());
    let mut sets = Vec::new();
    let mut dilate = CellSet::empty(grid);
    for (lo, hi) in boxes {
        let lo: Vec<f64> = lo.iter().map(|v| v * lambda).collect();
        let hi: Vec<f64> = hi.iter().map(|v| v * lambda).collect();
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let dlo: Vec<f64> = lo.iter().zip(&center).map(|(a, c)| 2.0 * a - c).collect();
        let dhi: Vec<f64> = hi.iter().zip(&center).map(|(b, c)| 2.0 * b - c).collect();
        if dlo.iter().zip(&glo).any(|(a, g)| a < g) || dhi.iter().zip(&ghi).any(|(b, g)| b > g) {
            return Ok(None);
        }
        let cells = CellSet::open_box(grid, &lo, &hi);
        if cells.is_empty() {
            return Err(anyhow!("set box covers no cell centers").into());
        }
        sets.push((cells, center));
        dilate = dilate.union(&CellSet::open_box(grid, &dlo, &dhi))?;
    }
    Ok(Some(Collection::from_sets(grid, &sets, dilate)?))
}

fn verify_lemma1(s: &Settings, dir: &Path) -> Result<InequalityLedger, Failure> {
    let k = specs::kernel(s, "hilbert", 1)?;
    let grid = specs::grid(s, k.n(), "2^-8", "-64,64")?;
    let eval = eval_config(s, grid.h())?;
    let lemma = lemma_config(&eval, grid.h());
    let seed = s.u64_or("seed", DEFAULT_SEED)?;
    let mut texts = s.list("set");
    if texts.is_empty() {
        texts.push("-1:1".into());
    }
    let boxes = texts.iter().map(|t| specs::set_box(t, k.n())).collect::<anyhow::Result<Vec<_>>>()?;

    let mut ledger = InequalityLedger::new(Provenance {
        seed,
        h: grid.h(),
        extent: grid.box_lo().into_iter().zip(grid.box_hi()).map(|(a, b)| [a, b]).collect(),
        eps: lemma.eps,
        n_list: vec![boxes.len()],
    });
    let base = box_collection(&grid, &boxes, 1.0)?.ok_or_else(|| anyhow!("doubled --set boxes leave the grid"))?;
    let run = |c: &Collection| -> Result<_, Failure> {
        let slot_list = vec![LemmaSlot::Sets(c); k.m()];
        let domain = czlab::verify::lemma1::outside_dilates(&grid, &slot_list)?;
        Ok(lemma1_sum(&k, &slot_list, &domain, &lemma)?)
    };
    let report = run(&base)?;
    ledger.constant("sum", report.sum);
    ledger.constant("omega_total", report.omega_total);
    ledger.constant("ratio", report.ratio);
    ledger.constant("evaluated_probes", report.evaluated_probes as f64);
    ledger.constant("skipped_probes", report.skipped_probes as f64);

    // The ratio sum / sum|Omega| is scale free for homogeneous kernels, so
    // the dilated configuration must reproduce it.
    let mut a1 = report.ratio;
    match box_collection(&grid, &boxes, 2.0)? {
        Some(dilated) => {
            let r2 = run(&dilated)?;
            ledger.constant("ratio_dilated", r2.ratio);
            ledger.check("lemma1 ratio under dilation by 2, upper", "lemma1", r2.ratio, report.ratio, 0.05);
            ledger.check("lemma1 ratio under dilation by 2, lower", "lemma1", report.ratio, r2.ratio, 0.05);
            a1 = a1.max(r2.ratio);
        }
        None => ledger.note("dilation by 2 leaves the grid; invariance not checked"),
    }
    ledger.constant("A1_fit", a1);
    ledger.check("lemma1 sum <= A1 sum|Omega_i|", "lemma1", report.sum, a1 * report.omega_total, 1e-9);

    let mut csv = String::from("indices,weight,integral\n");
    for term in &report.terms {
        let idx: Vec<String> = term.indices.iter().map(usize::to_string).collect();
        csv.push_str(&format!("{},{},{}\n", idx.join(" "), term.weight, term.integral));
    }
    write(dir, "terms.csv", &csv)?;
    Ok(ledger)
}
