//! Randomized invariants.

use proptest::prelude::*;

use czlab::decomposition::build_ball_system;
use czlab::dyadic::{cube_cells, whitney};
use czlab::grid::{CellSet, DistanceField, GridFunction, GridSpec};
use czlab::kernel::KernelSpec;
use czlab::maximal::maximal_function;
use czlab::operator::{apply_atoms, apply_functions, AtomicMeasure, EvalConfig};
use czlab::verify::distribution::{log_grid, weak_quasinorm};

fn grid(n: usize, half: f64, h: f64) -> GridSpec {
    GridSpec::cube(n, h, -half, half).unwrap()
}

fn mask_set(g: &GridSpec, bits: &[bool]) -> CellSet {
    CellSet::from_mask(g, bits.iter().cycle().take(g.cell_count()).copied().collect()).unwrap()
}

/// Union of up to five boxes with corners on a coarse lattice.
fn boxes_set(g: &GridSpec, boxes: &[(Vec<i32>, Vec<i32>)]) -> CellSet {
    let mut s = CellSet::empty(g);
    for (a, b) in boxes {
        let lo: Vec<f64> = a.iter().zip(b).map(|(x, y)| (*x.min(y)) as f64 / 8.0).collect();
        let hi: Vec<f64> = a.iter().zip(b).map(|(x, y)| (*x.max(y)) as f64 / 8.0 + 0.125).collect();
        s = s.union(&CellSet::open_box(g, &lo, &hi)).unwrap();
    }
    s
}

fn box_strategy(n: usize) -> impl Strategy<Value = Vec<(Vec<i32>, Vec<i32>)>> {
    prop::collection::vec((prop::collection::vec(-12i32..12, n), prop::collection::vec(-12i32..12, n)), 1..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn measure_is_additive(a in prop::collection::vec(any::<bool>(), 1..64), b in prop::collection::vec(any::<bool>(), 1..64)) {
        let g = grid(1, 2.0, 0.0625);
        let (a, b) = (mask_set(&g, &a), mask_set(&g, &b));
        let lhs = a.union(&b).unwrap().measure() + a.intersection(&b).unwrap().measure();
        prop_assert_eq!(lhs, a.measure() + b.measure());
        prop_assert_eq!(a.difference(&b).unwrap().measure() + a.intersection(&b).unwrap().measure(), a.measure());
    }

    #[test]
    fn superlevel_sets_are_antitone(v in prop::collection::vec(-5.0f64..5.0, 64), s in 0.0f64..3.0, d in 0.0f64..2.0) {
        let g = grid(1, 2.0, 0.0625);
        let f = GridFunction::new(&g, v).unwrap();
        prop_assert!(f.superlevel_set(s + d).is_subset(&f.superlevel_set(s)));
    }

    #[test]
    fn restriction_splits_l1(v in prop::collection::vec(-5.0f64..5.0, 64), bits in prop::collection::vec(any::<bool>(), 64)) {
        let g = grid(1, 2.0, 0.0625);
        let f = GridFunction::new(&g, v).unwrap();
        let s = mask_set(&g, &bits);
        let split = f.restrict(&s).unwrap().l1_norm() + f.restrict(&s.complement()).unwrap().l1_norm();
        prop_assert!((split - f.l1_norm()).abs() <= 1e-12 * f.l1_norm().max(1.0));
    }

    #[test]
    fn distance_field_matches_brute_force(n in 1usize..=2, bits in prop::collection::vec(prop::bool::weighted(0.8), 1..97)) {
        let h = 0.125;
        let g = grid(n, if n == 1 { 8.0 } else { 2.0 }, h);
        let s = mask_set(&g, &bits);
        let field = DistanceField::new(&s);
        for c in 0..g.cell_count() {
            let brute = if s.contains(c) { s.distance_to_complement(&g.cell_box(c)) } else { 0.0 };
            let fast = h * (field.cell_sq(c) as f64).sqrt();
            prop_assert!((brute - fast).abs() <= 1e-12, "cell {}: {} vs {}", c, brute, fast);
        }
    }

    #[test]
    fn whitney_window_and_cover(n in 1usize..=2, boxes in box_strategy(2)) {
        let g = grid(n, 2.0, if n == 1 { 2f64.powi(-6) } else { 2f64.powi(-4) });
        let boxes: Vec<_> = boxes.into_iter().map(|(a, b)| (a[..n].to_vec(), b[..n].to_vec())).collect();
        let s = boxes_set(&g, &boxes);
        prop_assume!(!s.is_empty());
        let w = whitney(&s).unwrap();
        let mut covered = CellSet::from_indices(&g, w.remainder.iter().copied()).unwrap();
        for q in &w.cubes {
            let cells = cube_cells(&g, q).unwrap();
            let dist = s.distance_to_complement(&q.bounds());
            prop_assert!(2.0 * q.diam() <= dist && dist <= 8.0 * q.diam(), "{:?}: dist {} diam {}", q, dist, q.diam());
            prop_assert!(cells.is_disjoint(&covered));
            covered = covered.union(&cells).unwrap();
        }
        prop_assert_eq!(covered, s);
    }

    #[test]
    fn maximal_is_sublinear(a in prop::collection::vec(-2.0f64..2.0, 32), b in prop::collection::vec(-2.0f64..2.0, 32)) {
        let g = grid(1, 1.0, 0.0625);
        let (f, k) = (GridFunction::new(&g, a).unwrap(), GridFunction::new(&g, b).unwrap());
        let (mf, mk, ms) = (maximal_function(&f), maximal_function(&k), maximal_function(&f.add(&k).unwrap()));
        for i in 0..g.cell_count() {
            prop_assert!(ms.values()[i] <= mf.values()[i] + mk.values()[i] + 1e-12);
            prop_assert!(mf.values()[i] >= f.values()[i].abs());
        }
    }

    #[test]
    fn operator_commutes_with_grid_shifts(shift in -8i32..8, x in 2.0f64..3.0) {
        let h = 2f64.powi(-5);
        let g = grid(1, 8.0, h);
        let s = shift as f64 * 0.25;
        let f = CellSet::open_box(&g, &[0.0], &[1.0]).indicator(1.0);
        let fs = CellSet::open_box(&g, &[s], &[1.0 + s]).indicator(1.0);
        let k = KernelSpec::tensor_hilbert(2).unwrap();
        let cfg = EvalConfig::for_grid(h);
        let a = apply_functions(&k, &[f.clone(), f], &[vec![x]], &cfg).unwrap().values[0];
        let b = apply_functions(&k, &[fs.clone(), fs], &[vec![x + s]], &cfg).unwrap().values[0];
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3));
        let hom = KernelSpec::homogeneous(1, 2, 1.0).unwrap();
        let nu = AtomicMeasure::new(1, vec![(vec![0.0], 1.0), (vec![0.5], -2.0)]).unwrap();
        let a = apply_atoms(&hom, &[nu.clone(), nu.clone()], &[vec![x]]).unwrap()[0];
        let b = apply_atoms(&hom, &[nu.translated(&[s]), nu.translated(&[s])], &[vec![x + s]]).unwrap()[0];
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn weak_quasinorm_is_monotone(v in prop::collection::vec(-4.0f64..4.0, 64), scale in prop::collection::vec(0.0f64..1.0, 64), p in 0.25f64..2.0) {
        let g = grid(1, 2.0, 0.0625);
        let big = GridFunction::new(&g, v.clone()).unwrap();
        let small = GridFunction::new(&g, v.iter().zip(&scale).map(|(a, s)| a * s).collect()).unwrap();
        let ts = log_grid(1e-3, 4.0, 64).unwrap();
        prop_assert!(weak_quasinorm(&small, p, &ts).unwrap() <= weak_quasinorm(&big, p, &ts).unwrap());
    }

    #[test]
    fn ball_pieces_are_disjoint(points in prop::collection::vec((-1.0f64..1.0, 0.05f64..0.5), 1..5)) {
        let h = 2f64.powi(-8);
        let g = grid(1, 8.0, h);
        let nu = AtomicMeasure::new(1, points.iter().map(|(x, a)| (vec![*x], *a)).collect()).unwrap();
        let system = build_ball_system(&[nu], 4.0, 2, &g).unwrap();
        let mut seen = CellSet::empty(&g);
        for (j, p) in system.slots[0].pieces.iter().enumerate() {
            let piece = system.piece_set(0, j);
            prop_assert!(piece.is_disjoint(&seen));
            seen = seen.union(&piece).unwrap();
            prop_assert!((p.measure - p.target).abs() <= h, "{} vs {}", p.measure, p.target);
        }
        prop_assert!(system.union(0).is_subset(&system.doubled_union(0)));
    }
}
