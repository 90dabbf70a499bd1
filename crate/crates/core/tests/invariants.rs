//! Property tests over randomly generated tensors, bases and systems.

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use strmor::basis::{build_vw, orth_dedup, realify, InterpPlan, PlanEntry};
use strmor::bench;
use strmor::drop::{self, numerical_rank};
use strmor::signal::Signal;
use strmor::simulate::{simulate, SimOptions, TimeGrid};
use strmor::tensor::next_permutation;
use strmor::C64;

fn kron_all(vs: &[&DVector<f64>]) -> DVector<f64> {
    vs.iter().skip(1).fold(vs[0].clone(), |acc, v| acc.kronecker(*v))
}

fn random_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn tensor_case() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=4, 2usize..=4, any::<u64>())
}


proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetrize_preserves_evaluation_and_column_sums((n, xi, seed) in tensor_case()) {
        let mut rng = common::rng(seed);
        let h = common::sparse_tensor(&mut rng, n, vec![n; xi], 2 * n * xi, 1.0);
        let hs = h.symmetrize(0..xi).unwrap();
        prop_assert!(hs.is_symmetric(0..xi, 1e-14));
        let twice = hs.symmetrize(0..xi).unwrap();
        prop_assert!((twice.to_dense() - hs.to_dense()).amax() <= 1e-15 * hs.to_dense().amax().max(1.0));
        let (a, b) = (h.to_dense().row_sum(), hs.to_dense().row_sum());
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        prop_assert!((sa - sb).abs() <= 1e-13 * (1.0 + sa.abs()));
        for _ in 0..5 {
            let x = random_vec(&mut rng, n);
            let f = vec![&x; xi];
            let y0 = h.apply(&f).unwrap();
            let y1 = hs.apply(&f).unwrap();
            prop_assert!((&y0 - &y1).norm() <= 1e-12 * y0.norm().max(1e-12));
        }
    }

    #[test]
    fn symmetric_apply_ignores_argument_order((n, xi, seed) in tensor_case()) {
        let mut rng = common::rng(seed);
        let hs = common::sparse_tensor(&mut rng, n, vec![n; xi], 2 * n * xi, 1.0).symmetrize(0..xi).unwrap();
        let qs: Vec<DVector<f64>> = (0..xi).map(|_| random_vec(&mut rng, n)).collect();
        let base = hs.apply(&qs.iter().collect::<Vec<_>>()).unwrap();
        let mut perm: Vec<usize> = (0..xi).collect();
        while next_permutation(&mut perm) {
            let args: Vec<&DVector<f64>> = perm.iter().map(|&k| &qs[k]).collect();
            prop_assert!((hs.apply(&args).unwrap() - &base).norm() <= 1e-12 * base.norm().max(1e-12));
        }
    }

    #[test]
    fn symmetric_modes_coincide((n, xi, seed) in tensor_case()) {
        let mut rng = common::rng(seed);
        let hs = common::sparse_tensor(&mut rng, n, vec![n; xi], 2 * n * xi, 1.0).symmetrize(0..xi).unwrap();
        let m2 = hs.mode(2).unwrap().to_dense();
        for m in 3..=xi + 1 {
            prop_assert!((hs.mode(m).unwrap().to_dense() - &m2).amax() <= 1e-15);
        }
    }

    #[test]
    fn every_mode_gives_the_same_scalar(seed in any::<u64>(), rows in 1usize..=3, dims in prop::collection::vec(1usize..=3, 1..=3)) {
        let mut rng = common::rng(seed);
        let t = common::sparse_tensor(&mut rng, rows, dims.clone(), 8, 1.0);
        let a0 = random_vec(&mut rng, rows);
        let a: Vec<DVector<f64>> = dims.iter().map(|&d| random_vec(&mut rng, d)).collect();
        let whole = a0.dot(&t.apply(&a.iter().collect::<Vec<_>>()).unwrap());
        let f = dims.len();
        for m in 2..=f + 1 {
            let c = f - (m - 1);
            let mut rest: Vec<&DVector<f64>> = a.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| v).collect();
            rest.push(&a0);
            let y = a[c].dot(&t.mode(m).unwrap().apply(&rest).unwrap());
            prop_assert!((y - whole).abs() <= 1e-12 * (1.0 + whole.abs()));
        }
    }

    #[test]
    fn reduce_matches_kronecker_projection(seed in any::<u64>(), n in 2usize..=5, xi in 1usize..=3, r in 1usize..=3) {
        let mut rng = common::rng(seed);
        let h = common::sparse_tensor(&mut rng, n, vec![n; xi], 3 * n, 1.0);
        let v = common::uniform(&mut rng, n, r);
        let w = common::uniform(&mut rng, n, r);
        let maps = vec![Some(&v); xi];
        let red = h.reduce(&w, &maps).unwrap().to_dense();
        let vk = (1..xi).fold(v.clone(), |acc, _| acc.kronecker(&v));
        let oracle = w.transpose() * h.to_dense() * vk;
        prop_assert!((&red - &oracle).norm() <= 1e-12 * oracle.norm().max(1e-12));
    }

    #[test]
    fn apply_matches_dense_kronecker(seed in any::<u64>(), dims in prop::collection::vec(1usize..=4, 1..=3)) {
        let mut rng = common::rng(seed);
        let t = common::sparse_tensor(&mut rng, 3, dims.clone(), 10, 1.0);
        let xs: Vec<DVector<f64>> = dims.iter().map(|&d| random_vec(&mut rng, d)).collect();
        let refs: Vec<&DVector<f64>> = xs.iter().collect();
        let oracle = t.to_dense() * kron_all(&refs);
        prop_assert!((t.apply(&refs).unwrap() - &oracle).norm() <= 1e-13 * oracle.norm().max(1.0));
    }

    #[test]
    fn orth_dedup_spans_its_input(seed in any::<u64>(), n in 3usize..=30, k in 1usize..=12, dups in 0usize..=4) {
        let mut rng = common::rng(seed);
        let base = common::uniform(&mut rng, n, k);
        let mut cols: Vec<DVector<f64>> = base.column_iter().map(|c| c.into_owned()).collect();
        for j in 0..dups {
            let c = cols[j % k].clone() * 3.0;
            cols.push(c);
        }
        let m = DMatrix::from_columns(&cols);
        let q = orth_dedup(&m, 0.0).unwrap();
        prop_assert_eq!(q.ncols(), k.min(n));
        prop_assert!((q.transpose() * &q - DMatrix::identity(q.ncols(), q.ncols())).amax() <= 1e-12);
        let resid = &m - &q * (q.transpose() * &m);
        prop_assert!(resid.amax() <= 1e-10 * m.amax());
    }

    #[test]
    fn realify_keeps_the_real_span(seed in any::<u64>(), n in 2usize..=10, k in 1usize..=4) {
        let mut rng = common::rng(seed);
        let z = DMatrix::from_fn(n, k, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let conj = z.map(|v| v.conj());
        let both = DMatrix::from_columns(&z.column_iter().chain(conj.column_iter()).map(|c| c.into_owned()).collect::<Vec<_>>());
        let q = orth_dedup(&realify(&both), 0.0).unwrap();
        prop_assert_eq!(q.ncols(), (2 * k).min(n));
    }

    #[test]
    fn rank_shrinks_as_tolerance_grows(mut sigma in prop::collection::vec(0.0f64..1.0, 1..20), t1 in 1e-14f64..1e-1, t2 in 1e-14f64..1e-1) {
        sigma.sort_by(|a, b| b.total_cmp(a));
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(numerical_rank(&sigma, hi).unwrap() <= numerical_rank(&sigma, lo).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn signal_text_round_trips(a in -5.0f64..5.0, b in 0.1f64..3.0) {
        let text = format!("{a}*sin({b}*t) + exp(-{b}*t); {a}*t^2");
        let u: Signal = text.parse().unwrap();
        let again: Signal = u.to_string().parse().unwrap();
        for t in [0.0, 0.3, 1.7] {
            prop_assert_eq!(u.eval(t), again.eval(t));
        }
    }

    #[test]
    fn larger_plans_never_lower_the_rank(seed in any::<u64>()) {
        let sys = bench::gen_delay_rod(30).unwrap();
        let mut rng = common::rng(seed);
        let entries: Vec<PlanEntry> =
            (0..8).map(|_| PlanEntry::at(C64::new(0.0, 10f64.powf(rng.random_range(-2.0..2.0))), vec![rng.random_range(1.0..10.0)])).collect();
        let mut last = 0;
        for k in [2, 4, 8] {
            let bundle = build_vw(&sys, &InterpPlan::new(entries[..k].to_vec())).unwrap();
            let blocks = drop::pencil_blocks(&bundle, &sys).unwrap();
            let rank = drop::estimate_rank(&blocks, drop::DEFAULT_RANK_TOL).unwrap().chosen;
            prop_assert!(rank >= last, "{k} points: rank {rank} after {last}");
            last = rank;
        }
    }
}

#[test]
fn galerkin_keeps_second_order_matrices_symmetric() {
    let sys = bench::gen_msd(40).unwrap();
    let mut rng = common::rng(11);
    let mut dir = || Some(DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)).normalize().iter().map(|&x| C64::new(x, 0.0)).collect());
    let entries = bench::logspace(1e-2, 1e2, 12).into_iter().map(|w| PlanEntry { sigma: C64::new(0.0, w), mu: C64::new(0.0, w), p: vec![], b: dir(), c: dir() }).collect();
    let mut plan = InterpPlan::new(entries);
    plan.galerkin = true;
    let bundle = build_vw(&sys, &plan).unwrap();
    assert_eq!(bundle.v, bundle.w);
    let blocks = drop::pencil_blocks(&bundle, &sys).unwrap();
    let (v_e, w_e) = drop::truncate(&bundle, &blocks, 8).unwrap();
    assert_eq!(v_e, w_e);
    let rom = drop::project(&sys, &v_e, &w_e).unwrap();
    for (_, a) in rom.operator.terms() {
        let a = a.to_dense();
        assert!((&a - a.transpose()).norm() <= 1e-12 * a.norm());
    }
}

#[test]
fn identity_projection_reproduces_trajectories_bitwise() {
    for sys in [bench::gen_delay_rod(12).unwrap(), bench::gen_chafee(8).unwrap(), bench::gen_msd(5).unwrap()] {
        let n = sys.n();
        let eye = DMatrix::identity(n, n);
        let rom = drop::project(&sys, &eye, &eye).unwrap();
        let u: Signal = if sys.m() == 2 { "sin(t); cos(t)".parse().unwrap() } else { "0.05*(cos(10*t)+cos(5*t))".parse().unwrap() };
        let f = u.evaluator().unwrap();
        let p = if sys.q == 1 { vec![2.0] } else { vec![] };
        let grid = TimeGrid::new(0.0, 0.2, 1e-5).unwrap();
        let a = simulate(&sys, &p, &f, &grid, SimOptions::default()).unwrap();
        let b = simulate(&rom, &p, &f, &grid, SimOptions::default()).unwrap();
        assert_eq!(a.outputs, b.outputs);
    }
}

#[test]
fn chafee_cubic_is_symmetric_and_diffusion_is_dissipative() {
    let sys = bench::gen_chafee(20).unwrap();
    let h3 = &sys.poly[0];
    assert!(h3.tensor().at(&[1.0]).unwrap().is_symmetric(0..3, 0.0));
    // K(s) = sI − A₁ − pI, so the constant term is −A₁
    let a1 = -sys.operator.terms()[1].1.to_dense();
    let sym = (&a1 + a1.transpose()) * 0.5;
    let max_eig = sym.symmetric_eigen().eigenvalues.max();
    assert!(max_eig <= 1e-9 * a1.norm());
}

#[test]
fn delay_rod_pencil_is_regular_on_the_plan_domain() {
    let sys = bench::gen_delay_rod(50).unwrap();
    let tf = strmor::transfer::Transfer::new(&sys);
    for w in bench::logspace(1e-2, 1e2, 25) {
        for p in bench::linspace(1.0, 10.0, 7) {
            assert!(tf.factor(C64::new(0.0, w), &[p]).is_ok(), "ω = {w}, p = {p}");
        }
    }
}
