//! Acceptance suite: one line per criterion, then a nonzero exit if any
//! criterion outside `KNOWN_FAILURES` fails.
//!
//! Runs without the libtest harness so the report is always printed.

use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use czlab::dyadic::{cube_cells, cube_distance, whitney};
use czlab::grid::{CellSet, DistanceField, GridFunction, GridSpec};
use czlab::kernel::KernelSpec;
use czlab::maximal::maximal_function;
use czlab::operator::{apply_atoms, apply_functions, AtomicMeasure, EvalConfig};
use czlab::verify::{distribution_function, t_grid_for, weak_quasinorm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Criteria that cannot hold as worded; see the README.
const KNOWN_FAILURES: &[&str] = &["1b", "5a"];

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn timed(limit: Duration, start: Instant, pass: bool, detail: String) -> (bool, String) {
    let elapsed = start.elapsed();
    (pass && elapsed <= limit, format!("{detail}; {:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn czlab(args: &[&str], out: &Path) -> (Option<i32>, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_czlab")).args(args).arg("--out").arg(out).output().expect("binary runs");
    (o.status.code(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn ledger(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("ledger.json")).unwrap()).unwrap()
}

fn constant(ledger: &Value, key: &str) -> f64 {
    ledger["constants"][key].as_f64().unwrap_or(f64::NAN)
}

fn random_boxes(rng: &mut ChaCha8Rng, n: usize, h: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let count = rng.gen_range(1..=5);
    (0..count)
        .map(|_| {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for _ in 0..n {
                // Corners on the grid lines inside [-0.75, 0.75].
                let a = rng.gen_range(-48i64..40) as f64 * h;
                let w = rng.gen_range(2i64..=24) as f64 * h;
                lo.push(a);
                hi.push((a + w).min(0.75));
            }
            (lo, hi)
        })
        .collect()
}

/// 2 diam <= dist <= 8 diam for every cube, and cubes plus remainder cells
/// tile the set without overlap.
fn criterion_1() -> Vec<Outcome> {
    let start = Instant::now();
    let h = 2f64.powi(-6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut window_ok, mut cover_ok, mut strict_ok) = (true, true, true);
    let (mut cubes, mut remainder_measure) = (0usize, 0.0f64);
    for trial in 0..50 {
        let n = 1 + trial % 2;
        let grid = GridSpec::cube(n, h, -1.0, 1.0).unwrap();
        let mut set = CellSet::empty(&grid);
        for (lo, hi) in random_boxes(&mut rng, n, h) {
            set = set.union(&CellSet::open_box(&grid, &lo, &hi)).unwrap();
        }
        let w = whitney(&set).unwrap();
        let field = DistanceField::new(&set);
        let mut covered = CellSet::empty(&grid);
        let mut overlap = false;
        for q in &w.cubes {
            let d = cube_distance(&field, q).unwrap();
            window_ok &= 2.0 * q.diam() <= d && d <= 8.0 * q.diam();
            let cells = cube_cells(&grid, q).unwrap();
            overlap |= !cells.is_disjoint(&covered);
            covered = covered.union(&cells).unwrap();
        }
        let rem = CellSet::from_indices(&grid, w.remainder.iter().copied()).unwrap();
        overlap |= !rem.is_disjoint(&covered);
        let cube_measure: f64 = w.cubes.iter().map(|q| q.measure()).sum();
        cover_ok &= !overlap && covered.union(&rem).unwrap() == set;
        strict_ok &= cube_measure == set.measure();
        cubes += w.cubes.len();
        remainder_measure = remainder_measure.max(rem.measure());
    }
    let (pass, detail) = timed(Duration::from_secs(10), start, window_ok && cover_ok, format!("{cubes} cubes over 50 sets"));
    vec![
        Outcome { id: "1a", title: "Whitney window and exact cover by cubes plus remainder", pass, detail },
        Outcome {
            id: "1b",
            title: "Whitney cubes alone reproduce the set measure",
            pass: strict_ok,
            detail: format!("largest boundary remainder {remainder_measure}; cells next to the complement admit no cube"),
        },
    ]
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let h = 2f64.powi(-8);
    let grid = GridSpec::cube(1, h, -4.0, 4.0).unwrap();
    let f = CellSet::open_box(&grid, &[0.0], &[1.0]).indicator(1.0);
    let mf = maximal_function(&f);
    let exact = |x: f64| if x < 0.0 { 1.0 / (1.0 - x) } else if x > 1.0 { 1.0 / x } else { 1.0 };
    let mut worst = 0.0f64;
    let mut shape_ok = true;
    for (c, &v) in mf.values().iter().enumerate() {
        let x = grid.cell_center(c)[0];
        let near = [x - h, x, x + h].map(exact);
        let (lo, hi) = near.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &y| (a.min(y), b.max(y)));
        shape_ok &= lo - 1e-12 <= v && v <= hi + 1e-12;
        worst = worst.max((v - exact(x)).abs());
    }
    let ts = t_grid_for(&mf, 64, 1).unwrap();
    let weak = distribution_function(&mf, &ts).unwrap().iter().map(|(t, mu)| t * mu).fold(0.0, f64::max);
    let pass = shape_ok && weak <= 3.0 * f.l1_norm();
    let (pass, detail) = timed(Duration::from_secs(30), start, pass, format!("max deviation {worst:.2e}, sup t|{{Mf>t}}| = {weak:.4}"));
    Outcome { id: "2", title: "maximal function closed form and weak (1,1) bound", pass, detail }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let h = 2f64.powi(-8);
    let grid = GridSpec::cube(1, h, -4.0, 4.0).unwrap();
    let f = CellSet::open_box(&grid, &[0.0], &[1.0]).indicator(1.0);
    let k = KernelSpec::tensor_hilbert(2).unwrap();
    let targets: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![if i % 2 == 0 { -0.5 - 0.15 * i as f64 } else { 1.5 + 0.15 * i as f64 } + h / 2.0])
        .collect();
    let exact = apply_functions(&k, &[f.clone(), f.clone()], &targets, &EvalConfig::for_grid(h)).unwrap();
    let mut cfg = EvalConfig::for_grid(h);
    cfg.policy.principal_value = false;
    let generic = apply_functions(&k, &[f.clone(), f], &targets, &cfg).unwrap();
    let (mut abs_err, mut rel_err) = (0.0f64, 0.0f64);
    for ((x, e), g) in targets.iter().zip(&exact.values).zip(&generic.values) {
        let want = ((x[0] / (x[0] - 1.0)).abs().ln() / PI).powi(2);
        abs_err = abs_err.max((e - want).abs());
        rel_err = rel_err.max((g - want).abs() / want);
    }
    let (pass, detail) = timed(
        Duration::from_secs(30),
        start,
        abs_err <= 1e-4 && rel_err <= 0.02,
        format!("exact route error {abs_err:.2e}, midpoint route relative error {rel_err:.4}"),
    );
    Outcome { id: "3", title: "tensor Hilbert operator on indicators", pass, detail }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let h = 2f64.powi(-8);
    let grid = GridSpec::cube(1, h, -64.0, 64.0).unwrap();
    let k = KernelSpec::homogeneous(1, 2, 1.0).unwrap();
    let d0 = AtomicMeasure::dirac(vec![0.0]);
    let targets: Vec<Vec<f64>> = (0..grid.cell_count()).map(|c| grid.cell_center(c)).collect();
    let values = apply_atoms(&k, &[d0.clone(), d0], &targets).unwrap();
    let f = GridFunction::new(&grid, values).unwrap();
    let q = weak_quasinorm(&f, 0.5, &t_grid_for(&f, 64, 64).unwrap()).unwrap();
    let (pass, detail) = timed(Duration::from_secs(5), start, (q - 1.0).abs() <= 0.05, format!("sup t|{{|T|>t}}|^2 = {q:.5}"));
    Outcome { id: "4", title: "weak quasinorm of T(delta_0, delta_0)", pass, detail }
}

fn criterion_5(scratch: &Path) -> Vec<Outcome> {
    let start = Instant::now();
    let dir = scratch.join("lemma1");
    let (code, err) = czlab(&["verify", "--scenario", "lemma1"], &dir);
    if code != Some(0) {
        let detail = format!("exit {code:?}: {err}");
        return vec![
            Outcome { id: "5a", title: "Hormander sum equals 4 ln 2", pass: false, detail: detail.clone() },
            Outcome { id: "5b", title: "Hormander sum closed form and dilation invariance", pass: false, detail },
        ];
    }
    let l = ledger(&dir);
    let (sum, r1, r2) = (constant(&l, "sum"), constant(&l, "ratio"), constant(&l, "ratio_dilated"));
    // Sup over the probes {-1, 0, 1} of the integral over |x| in (2, 64) of
    // |1/(x - y) - 1/x|; the endpoint probes tie.
    let closed = 2.0 * ((LN_2 - (64.0f64 / 63.0).ln()) + (1.5f64.ln() - (65.0f64 / 64.0).ln()));
    let target = 4.0 * LN_2;
    let (pass, detail) = timed(
        Duration::from_secs(60),
        start,
        (sum - closed).abs() <= 1e-3 && (r1 - r2).abs() <= 0.05 * r1,
        format!("sum {sum:.5} vs closed form {closed:.5}; ratios {r1:.4} and {r2:.4} at lambda 1 and 2"),
    );
    vec![
        Outcome {
            id: "5a",
            title: "Hormander sum equals 4 ln 2",
            pass: (sum - target).abs() <= 0.05 * target,
            detail: format!("sum {sum:.5} vs {target:.5}; 4 ln 2 takes the supremum inside the integral"),
        },
        Outcome { id: "5b", title: "Hormander sum closed form and dilation invariance", pass, detail },
    ]
}

fn theorem2_run(dir: &Path, kernel: &str, h: &str) -> (bool, String) {
    let atoms = "atoms:0@0.5;0.1@0.5";
    let (code, err) = czlab(
        &["verify", "--scenario", "theorem2", "--kernel", kernel, "--h", h, "--box", "-2,2", "--t", "4", "--slot", atoms, "--slot", atoms],
        dir,
    );
    if code != Some(0) {
        return (false, format!("{kernel}: exit {code:?}: {}", err.trim()));
    }
    let l = ledger(dir);
    let entries = l["entries"].as_array().unwrap();
    let all_pass = entries.iter().all(|e| e["pass"] == true);
    let estar = entries.iter().find(|e| e["name"] == "|E*| <= m 2^n t^(-1/m)");
    let estar_ok = estar.is_some_and(|e| e["rhs"] == 2.0 && e["pass"] == true);
    let radius_err = entries
        .iter()
        .filter(|e| e["name"].as_str().is_some_and(|s| s.contains("matches a t^(-1/m)")))
        .map(|e| {
            // Entries hold |measure - target| against 1e-3 target.
            let (lhs, rhs) = (e["lhs"].as_f64().unwrap(), e["rhs"].as_f64().unwrap());
            1e-3 * lhs / rhs
        })
        .fold(0.0f64, f64::max);
    (
        all_pass && estar_ok && radius_err <= 1e-3,
        format!("{kernel}: {} entries, E* rhs {}, radius error {radius_err:.1e}", entries.len(), estar.map_or(Value::Null, |e| e["rhs"].clone())),
    )
}

fn criterion_6(scratch: &Path) -> Outcome {
    let start = Instant::now();
    let (a, da) = theorem2_run(&scratch.join("t2-hilbert"), "tensor-hilbert", "2^-11");
    let (b, db) = theorem2_run(&scratch.join("t2-homogeneous"), "homogeneous", "2^-8");
    let (pass, detail) = timed(Duration::from_secs(60), start, a && b, format!("{da}; {db}"));
    Outcome { id: "6", title: "two-atom ledgers", pass, detail }
}

fn theorem1_run(dir: &Path, h: &str) -> Result<Value, String> {
    let (code, err) = czlab(&["verify", "--scenario", "theorem1", "--h", h, "--box", "-16,16"], dir);
    if code != Some(0) {
        return Err(format!("h={h}: exit {code:?}: {}", err.trim()));
    }
    Ok(ledger(dir))
}

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo) / lo
}

fn criterion_7(scratch: &Path) -> Outcome {
    let start = Instant::now();
    let runs = theorem1_run(&scratch.join("t1-8"), "2^-8").and_then(|a| Ok((a, theorem1_run(&scratch.join("t1-9"), "2^-9")?)));
    let (coarse, fine) = match runs {
        Ok(r) => r,
        Err(detail) => return Outcome { id: "7", title: "indicator-pair ledger stability", pass: false, detail },
    };
    let s_weak: Vec<f64> = [4, 16, 64].iter().map(|n| constant(&coarse, &format!("S_weak_N{n}"))).collect();
    let (a, b) = (constant(&coarse, "A2_root_empirical"), constant(&fine, "A2_root_empirical"));
    let (s_spread, a_spread) = (spread(&s_weak), (a - b).abs() / a.min(b));
    let (pass, detail) = timed(
        Duration::from_secs(600),
        start,
        s_spread < 0.25 && a_spread < 0.10,
        format!("S weak constants {s_weak:.4?} spread {s_spread:.3}; A2 root {a:.4} vs {b:.4} spread {a_spread:.4}"),
    );
    Outcome { id: "7", title: "indicator-pair ledger stability", pass, detail }
}

fn criterion_8(scratch: &Path) -> Outcome {
    let start = Instant::now();
    let runs: [(&str, &[&str], &str); 4] = [
        ("kernel-check", &["kernel-check", "--kernel", "homogeneous"], "kernel_check.json"),
        ("lemma1", &["verify", "--scenario", "lemma1"], "ledger.json"),
        ("theorem2", &["verify", "--scenario", "theorem2", "--box", "-2,2", "--slot", "atoms:0@0.5;0.1@0.5", "--slot", "atoms:0@0.5;0.1@0.5"], "ledger.json"),
        ("theorem1", &["verify", "--scenario", "theorem1"], "ledger.json"),
    ];
    let mut same = true;
    for (name, args, file) in runs {
        let (a, b) = (scratch.join(format!("det-{name}-a")), scratch.join(format!("det-{name}-b")));
        czlab(args, &a);
        czlab(args, &b);
        same &= match (std::fs::read(a.join(file)), std::fs::read(b.join(file))) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
    }
    let detail = format!("{} scenarios rerun, {:.1}s", runs.len(), start.elapsed().as_secs_f64());
    Outcome { id: "8", title: "byte-identical reruns", pass: same, detail }
}

fn exit_codes(scratch: &Path) -> Outcome {
    let dir = scratch.join("codes");
    let cases: [(&[&str], i32); 6] = [
        (&["verify", "--scenario", "theorem2"], 0),
        // Four cells per set: too coarse for the dilation check to hold.
        (&["verify", "--scenario", "lemma1", "--h", "2^-2", "--box", "-8,8", "--set=-0.5:0.5"], 3),
        (&["kernel-check", "--kernel", "unknown"], 1),
        (&["verify", "--scenario", "theorem1", "--t-count", "0"], 1),
        (&["verify", "--scenario", "theorem1", "--kernel", "homogeneous", "--allow-unbounded", "--budget", "1000"], 4),
        (&["apply", "--kernel", "homogeneous", "--budget", "10"], 4),
    ];
    let mut seen = Vec::new();
    let mut pass = true;
    for (args, want) in cases {
        let (code, _) = czlab(args, &dir);
        pass &= code == Some(want);
        seen.push(format!("{}", code.unwrap_or(-1)));
    }
    Outcome { id: "codes", title: "exit-code contract", pass, detail: format!("codes {}", seen.join(",")) }
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let mut outcomes = criterion_1();
    outcomes.push(criterion_2());
    outcomes.push(criterion_3());
    outcomes.push(criterion_4());
    outcomes.extend(criterion_5(scratch.path()));
    outcomes.push(criterion_6(scratch.path()));
    outcomes.push(criterion_7(scratch.path()));
    outcomes.push(criterion_8(scratch.path()));
    outcomes.push(exit_codes(scratch.path()));

    let mut unexpected = 0;
    for o in &outcomes {
        let known = KNOWN_FAILURES.contains(&o.id);
        let status = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        if !o.pass && !known {
            unexpected += 1;
        }
        println!("criterion {:<5} {:<58} {status}  {}", o.id, o.title, o.detail);
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
