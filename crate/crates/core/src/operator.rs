//! Evaluation of `T(h_1, ..., h_m)(x)` where each slot holds a grid function
//! or a finite atomic measure.
//!
//! Two routes exist. The generic route is a midpoint sum over cell-center
//! tuples with a hard exclusion radius around the target. For the 1D tensor
//! Hilbert family with principal values enabled, each factor is integrated
//! exactly: a piecewise-constant `f` has
//! `int f(y) / (x - y) dy = sum_e (f(e+) - f(e-)) ln|x - e|` over its jump points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Aabb, GridFunction};
use crate::kernel::KernelSpec;

/// Default cap on kernel evaluations for the generic route.
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

/// Finite signed combination of point masses in `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    n: usize,
    atoms: Vec<Atom>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

impl AtomicMeasure {
    pub fn new(n: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut out = Vec::with_capacity(atoms.len());
        for (i, (point, weight)) in atoms.into_iter().enumerate() {
            if point.len() != n {
                return Err(Error::InvalidArgument(format!("atom {i} has {} coordinates, expected {n}", point.len())));
            }
            if !weight.is_finite() || point.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidArgument(format!("atom {i} is not finite")));
            }
            out.push(Atom { point, weight });
        }
        Ok(Self { n, atoms: out })
    }

    /// The unit point mass at `point`.
    pub fn dirac(point: Vec<f64>) -> Self {
        Self { n: point.len(), atoms: vec![Atom { point, weight: 1.0 }] }
    }

    pub fn empty(n: usize) -> Self {
        Self { n, atoms: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `||nu|| = sum |a_j|`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            atoms: self.atoms.iter().map(|a| Atom { point: a.point.clone(), weight: a.weight * c }).collect(),
        }
    }

    pub fn translated(&self, v: &[f64]) -> Self {
        Self {
            n: self.n,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { point: a.point.iter().zip(v).map(|(p, d)| p + d).collect(), weight: a.weight })
                .collect(),
        }
    }

    /// Positive and negative parts, both with positive weights; zero weights are dropped.
    pub fn split_by_sign(&self) -> (Self, Self) {
        let pick = |sign: f64| Self {
            n: self.n,
            atoms: self
                .atoms
                .iter()
                .filter(|a| a.weight * sign > 0.0)
                .map(|a| Atom { point: a.point.clone(), weight: a.weight.abs() })
                .collect(),
        };
        (pick(1.0), pick(-1.0))
    }
}

/// Diagonal handling for the generic route.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Physical exclusion radius around the target for function slots.
    pub eps: f64,
    /// Use exact per-cell antiderivatives for the 1D tensor Hilbert family.
    pub principal_value: bool,
    pub report_tail: bool,
}

impl TruncationPolicy {
    /// `eps = 2h`, principal values and tail reporting on.
    pub fn for_grid(h: f64) -> Self {
        Self { eps: 2.0 * h, principal_value: true, report_tail: true }
    }

    pub fn validate(&self, h: f64) -> Result<()> {
        if !(self.eps >= 0.5 * h) {
            return Err(Error::InvalidArgument(format!(
                "exclusion radius {} is below half a cell ({})",
                self.eps,
                0.5 * h
            )));
        }
        Ok(())
    }
}

/// One argument slot of `T`.
#[derive(Clone, Copy, Debug)]
pub enum Slot<'a> {
    Function(&'a GridFunction),
    Atoms(&'a AtomicMeasure),
}

/// Owned counterpart of [`Slot`].
#[derive(Clone, Debug, PartialEq)]
pub enum SlotValue {
    Function(GridFunction),
    Atoms(AtomicMeasure),
}

impl SlotValue {
    pub fn as_slot(&self) -> Slot<'_> {
        match self {
            Self::Function(f) => Slot::Function(f),
            Self::Atoms(nu) => Slot::Atoms(nu),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorOutput {
    pub values: Vec<f64>,
    /// Size-condition bound on the part removed by the exclusion radius;
    /// infinite when the kernel constant is unknown or an excluded tuple
    /// touches the target.
    pub tail_bounds: Option<Vec<f64>>,
}

impl OperatorOutput {
    /// CSV with columns `x1..xn,value,tail_bound`.
    pub fn to_csv(&self, targets: &[Vec<f64>]) -> String {
        let n = targets.first().map_or(1, Vec::len);
        let mut out: String = (1..=n).map(|i| format!("x{i},")).collect();
        out.push_str("value,tail_bound\n");
        for (i, x) in targets.iter().enumerate() {
            for c in x {
                out.push_str(&format!("{c},"));
            }
            let tail = self.tail_bounds.as_ref().map_or(String::new(), |t| t[i].to_string());
            out.push_str(&format!("{},{}\n", self.values[i], tail));
        }
        out
    }
}

/// Options shared by every entry point.
#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub policy: TruncationPolicy,
    pub budget: u64,
}

impl EvalConfig {
    pub fn for_grid(h: f64) -> Self {
        Self { policy: TruncationPolicy::for_grid(h), budget: DEFAULT_BUDGET }
    }
}

/// `T(f_1, ..., f_m)` at each target.
pub fn apply_functions(
    k: &KernelSpec,
    fs: &[GridFunction],
    targets: &[Vec<f64>],
    cfg: &EvalConfig,
) -> Result<OperatorOutput> {
    let slots: Vec<Slot> = fs.iter().map(Slot::Function).collect();
    apply(k, &slots, targets, cfg)
}

/// The exact finite sum `sum prod a_{i,j_i} K(x, x_{1,j_1}, ..., x_{m,j_m})`.
pub fn apply_atoms(k: &KernelSpec, nus: &[AtomicMeasure], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    let slots: Vec<Slot> = nus.iter().map(Slot::Atoms).collect();
    let cfg = EvalConfig { policy: TruncationPolicy { eps: 0.0, principal_value: false, report_tail: false }, budget: u64::MAX };
    Ok(apply(k, &slots, targets, &cfg)?.values)
}

/// `T(nu_1, ..., nu_l, f_{l+1}, ..., f_m)`.
pub fn apply_mixed(
    k: &KernelSpec,
    nus: &[AtomicMeasure],
    fs: &[GridFunction],
    targets: &[Vec<f64>],
    cfg: &EvalConfig,
) -> Result<OperatorOutput> {
    if nus.is_empty() {
        return Err(Error::InvalidArgument("mixed evaluation needs at least one measure slot".into()));
    }
    let slots: Vec<Slot> = nus.iter().map(Slot::Atoms).chain(fs.iter().map(Slot::Function)).collect();
    apply(k, &slots, targets, cfg)
}

/// General entry point: any ordering of function and measure slots.
pub fn apply(k: &KernelSpec, slots: &[Slot], targets: &[Vec<f64>], cfg: &EvalConfig) -> Result<OperatorOutput> {
    let engine = Engine::new(k, slots, cfg)?;
    engine.check_budget(targets.len())?;
    let results: Vec<(f64, f64)> = targets.par_iter().map(|x| engine.eval(x)).collect::<Result<_>>()?;
    Ok(engine.package(results))
}

/// Like [`apply`], but singular targets yield `None` instead of an error.
pub fn apply_lenient(
    k: &KernelSpec,
    slots: &[Slot],
    targets: &[Vec<f64>],
    cfg: &EvalConfig,
) -> Result<(Vec<Option<f64>>, Option<Vec<f64>>)> {
    let engine = Engine::new(k, slots, cfg)?;
    engine.check_budget(targets.len())?;
    let results: Vec<Option<(f64, f64)>> = targets
        .par_iter()
        .map(|x| match engine.eval(x) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Singular(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let values = results.iter().map(|r| r.map(|v| v.0)).collect();
    let tails = cfg.policy.report_tail.then(|| results.iter().map(|r| r.map_or(0.0, |v| v.1)).collect());
    Ok((values, tails))
}

struct Nodes {
    is_function: bool,
    points: Vec<f64>,
    weights: Vec<f64>,
    /// Cell boxes for tail bounds, function slots only.
    boxes: Vec<Aabb>,
}

enum Route {
    Generic(Vec<Nodes>),
    /// Per slot: jump points with coefficients, or atoms (point, weight).
    Tensor { factor: f64, slots: Vec<TensorSlot> },
}

enum TensorSlot {
    Jumps(Vec<(f64, f64)>),
    Atoms(Vec<(f64, f64)>),
}

struct Engine<'a> {
    k: &'a KernelSpec,
    route: Route,
    cfg: &'a EvalConfig,
    zero: bool,
}

impl<'a> Engine<'a> {
    fn new(k: &'a KernelSpec, slots: &[Slot], cfg: &'a EvalConfig) -> Result<Self> {
        if slots.len() != k.m() {
            return Err(Error::InvalidArgument(format!("kernel takes {} slots, got {}", k.m(), slots.len())));
        }
        let mut grid = None;
        for s in slots {
            match s {
                Slot::Function(f) => {
                    if f.grid().n() != k.n() {
                        return Err(Error::InvalidArgument("function dimension differs from kernel".into()));
                    }
                    match grid {
                        None => grid = Some(f.grid()),
                        Some(g) => g.ensure_same(f.grid())?,
                    }
                }
                Slot::Atoms(nu) => {
                    if nu.n() != k.n() {
                        return Err(Error::InvalidArgument("measure dimension differs from kernel".into()));
                    }
                }
            }
        }
        if let Some(g) = grid {
            cfg.policy.validate(g.h())?;
        }
        let zero = slots.iter().any(|s| match s {
            Slot::Function(f) => f.is_zero(),
            Slot::Atoms(nu) => nu.atoms().iter().all(|a| a.weight == 0.0),
        });
        let route = match k.tensor_factor() {
            Some(factor) if cfg.policy.principal_value => Route::Tensor {
                factor,
                slots: slots
                    .iter()
                    .map(|s| match s {
                        Slot::Function(f) => TensorSlot::Jumps(jumps(f)),
                        Slot::Atoms(nu) => TensorSlot::Atoms(
                            nu.atoms().iter().filter(|a| a.weight != 0.0).map(|a| (a.point[0], a.weight)).collect(),
                        ),
                    })
                    .collect(),
            },
            _ => Route::Generic(slots.iter().map(nodes).collect()),
        };
        Ok(Self { k, route, cfg, zero })
    }

    fn check_budget(&self, targets: usize) -> Result<()> {
        if let Route::Generic(nodes) = &self.route {
            let required = nodes.iter().fold(targets as u128, |acc, s| acc * s.weights.len() as u128);
            if required > self.cfg.budget as u128 {
                return Err(Error::BudgetExceeded { required, budget: self.cfg.budget });
            }
        }
        Ok(())
    }

    fn package(&self, results: Vec<(f64, f64)>) -> OperatorOutput {
        OperatorOutput {
            values: results.iter().map(|r| r.0).collect(),
            tail_bounds: self.cfg.policy.report_tail.then(|| results.iter().map(|r| r.1).collect()),
        }
    }

    /// (value, tail bound) at `x`.
    fn eval(&self, x: &[f64]) -> Result<(f64, f64)> {
        if self.zero {
            return Ok((0.0, 0.0));
        }
        match &self.route {
            Route::Tensor { factor, slots } => {
                let mut value = *factor;
                for slot in slots {
                    let mut acc = 0.0;
                    match slot {
                        TensorSlot::Jumps(jumps) => {
                            for &(e, c) in jumps {
                                if x[0] == e {
                                    return Err(Error::Singular(format!("target {x:?} sits on a jump of an input")));
                                }
                                acc += c * (x[0] - e).abs().ln();
                            }
                        }
                        TensorSlot::Atoms(atoms) => {
                            for &(p, a) in atoms {
                                if x[0] == p {
                                    return Err(Error::Singular(format!("target {x:?} coincides with an atom")));
                                }
                                acc += a / (x[0] - p);
                            }
                        }
                    }
                    value *= acc;
                }
                Ok((value, 0.0))
            }
            Route::Generic(nodes) => {
                let n = self.k.n();
                let mut ys = vec![0.0; n * nodes.len()];
                let mut walk = Walk { k: self.k, x, nodes, eps: self.cfg.policy.eps, value: 0.0, tail: 0.0 };
                walk.run(0, &mut ys, 1.0, 0.0, false)?;
                let c_k = self.k.c_k().unwrap_or(f64::INFINITY);
                let tail = if walk.tail == 0.0 { 0.0 } else { c_k * walk.tail };
                Ok((walk.value, tail))
            }
        }
    }
}

struct Walk<'a> {
    k: &'a KernelSpec,
    x: &'a [f64],
    nodes: &'a [Nodes],
    eps: f64,
    value: f64,
    /// Sum over excluded tuples of `|w| / (sum_i dist(x, support_i))^(nm)`.
    tail: f64,
}

impl Walk<'_> {
    fn run(&mut self, slot: usize, ys: &mut [f64], weight: f64, dist_sum: f64, excluded: bool) -> Result<()> {
        let n = self.k.n();
        if slot == self.nodes.len() {
            if excluded {
                let nm = (n * self.k.m()) as i32;
                self.tail += weight.abs() / dist_sum.powi(nm);
                return Ok(());
            }
            let v = self.k.eval(self.x, ys);
            if !v.is_finite() {
                return Err(Error::Singular(format!("kernel singular at x={:?}, y={ys:?}", self.x)));
            }
            self.value += weight * v;
            return Ok(());
        }
        let nodes = &self.nodes[slot];
        for (i, &w) in nodes.weights.iter().enumerate() {
            let p = &nodes.points[i * n..(i + 1) * n];
            ys[slot * n..(slot + 1) * n].copy_from_slice(p);
            let (near, d) = if nodes.is_function {
                let center_dist = crate::kernel::euclid(self.x, p);
                let cell = Aabb::new(self.x.to_vec(), self.x.to_vec()).distance(&nodes.boxes[i]);
                (center_dist < self.eps, cell)
            } else {
                (false, crate::kernel::euclid(self.x, p))
            };
            self.run(slot + 1, ys, weight * w, dist_sum + d, excluded || near)?;
        }
        Ok(())
    }
}

fn nodes(slot: &Slot) -> Nodes {
    match slot {
        Slot::Function(f) => {
            let g = f.grid();
            let vol = g.cell_volume();
            let mut points = Vec::new();
            let mut weights = Vec::new();
            let mut boxes = Vec::new();
            for (c, &v) in f.values().iter().enumerate() {
                if v != 0.0 {
                    points.extend(g.cell_center(c));
                    weights.push(v * vol);
                    boxes.push(g.cell_box(c));
                }
            }
            Nodes { is_function: true, points, weights, boxes }
        }
        Slot::Atoms(nu) => {
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for a in nu.atoms().iter().filter(|a| a.weight != 0.0) {
                points.extend(&a.point);
                weights.push(a.weight);
            }
            Nodes { is_function: false, points, weights, boxes: Vec::new() }
        }
    }
}

/// Jump points `e` of a 1D piecewise-constant function with coefficients
/// `f(e+) - f(e-)`.
fn jumps(f: &GridFunction) -> Vec<(f64, f64)> {
    let g = f.grid();
    let h = g.h();
    let lo = g.lo()[0];
    let mut out = Vec::new();
    let mut prev = 0.0;
    for (i, &v) in f.values().iter().chain(std::iter::once(&0.0)).enumerate() {
        if v != prev {
            out.push(((lo + i as i64) as f64 * h, v - prev));
        }
        prev = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellSet, GridSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit(h: f64) -> GridFunction {
        let g = GridSpec::cube(1, h, -4.0, 4.0).unwrap();
        CellSet::open_box(&g, &[0.0], &[1.0]).indicator(1.0)
    }

    #[test]
    fn tensor_hilbert_exact_route() {
        let h = 2f64.powi(-8);
        let f = unit(h);
        let k = KernelSpec::tensor_hilbert(2).unwrap();
        let out = apply_functions(&k, &[f.clone(), f], &[vec![2.0]], &EvalConfig::for_grid(h)).unwrap();
        let exact = (2f64.ln() / PI).powi(2);
        assert!((out.values[0] - exact).abs() < 1e-4);
        assert_relative_eq!(exact, 0.048680, epsilon = 1e-6);
    }

    #[test]
    fn atoms_sums() {
        let k = KernelSpec::homogeneous(1, 2, 1.0).unwrap();
        let d0 = AtomicMeasure::dirac(vec![0.0]);
        assert_eq!(apply_atoms(&k, &[d0.clone(), d0.clone()], &[vec![1.0]]).unwrap(), vec![0.25]);
        let two = AtomicMeasure::new(1, vec![(vec![0.0], 1.0), (vec![1.0], 1.0)]).unwrap();
        let v = apply_atoms(&k, &[two, d0.clone()], &[vec![3.0]]).unwrap()[0];
        assert_relative_eq!(v, 1.0 / 36.0 + 1.0 / 25.0, max_relative = 1e-15);
        let tripled = apply_atoms(&k, &[d0.scaled(3.0), d0.clone()], &[vec![1.0], vec![-2.0]]).unwrap();
        let plain = apply_atoms(&k, &[d0.clone(), d0.clone()], &[vec![1.0], vec![-2.0]]).unwrap();
        assert_eq!(tripled, plain.iter().map(|v| 3.0 * v).collect::<Vec<_>>());
    }

    #[test]
    fn singular_atom_target() {
        let k = KernelSpec::tensor_hilbert(1).unwrap();
        let d0 = AtomicMeasure::dirac(vec![0.0]);
        assert!(matches!(apply_atoms(&k, &[d0], &[vec![0.0]]), Err(Error::Singular(_))));
    }

    #[test]
    fn mixed_tensor_hilbert() {
        let h = 2f64.powi(-8);
        let k = KernelSpec::tensor_hilbert(2).unwrap();
        let d0 = AtomicMeasure::dirac(vec![0.0]);
        let out = apply_mixed(&k, &[d0], &[unit(h)], &[vec![2.0]], &EvalConfig::for_grid(h)).unwrap();
        let exact = 1.0 / (PI * 2.0) * (2f64.ln() / PI);
        assert!((out.values[0] - exact).abs() < 1e-4);
        assert_relative_eq!(exact, 0.035115, epsilon = 1e-6);
    }

    #[test]
    fn zero_slot_and_multilinearity() {
        let h = 2f64.powi(-5);
        let f = unit(h);
        let k = KernelSpec::homogeneous(1, 2, 1.0).unwrap();
        let cfg = EvalConfig::for_grid(h);
        let targets = vec![vec![2.0], vec![-1.5], vec![0.5]];
        let z = apply_functions(&k, &[f.clone(), f.scaled(0.0)], &targets, &cfg).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let a = apply_functions(&k, &[f.scaled(2.0), f.clone()], &targets, &cfg).unwrap();
        let b = apply_functions(&k, &[f.clone(), f.clone()], &targets, &cfg).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(*x, 2.0 * y);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let h = 2f64.powi(-8);
        let f = unit(h);
        let k = KernelSpec::homogeneous(1, 2, 1.0).unwrap();
        let cfg = EvalConfig { budget: 1000, ..EvalConfig::for_grid(h) };
        assert!(matches!(
            apply_functions(&k, &[f.clone(), f], &[vec![2.0]], &cfg),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn split_by_sign_parts() {
        let nu = AtomicMeasure::new(1, vec![(vec![0.0], 2.0), (vec![1.0], -0.5), (vec![2.0], 0.0)]).unwrap();
        let (p, q) = nu.split_by_sign();
        assert_eq!(p.total_variation(), 2.0);
        assert_eq!(q.total_variation(), 0.5);
        assert_eq!(nu.total_variation(), 2.5);
    }

    #[test]
    fn csv_layout() {
        let out = OperatorOutput { values: vec![0.5], tail_bounds: Some(vec![0.0]) };
        assert_eq!(out.to_csv(&[vec![1.0, 2.0]]), "x1,x2,value,tail_bound\n1,2,0.5,0\n");
    }
}
