use permabc::criterion::{best_match, Criterion};
use permabc::distance::{cost_matrix, squared_restricted_distance};
use permabc::{solve_full, solve_rectangular, solve_under_match, CostMatrix, ObservedData, SimulatedData};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CostMatrix<f64>> {
    proptest::collection::vec(0.0f64..100.0, rows * cols).prop_map(move |d| CostMatrix::new(rows, cols, d).unwrap())
}

fn brute_injection(c: &CostMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
    if row == c.rows() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for j in 0..c.cols() {
        if !used[j] {
            used[j] = true;
            best = best.min(c.get(row, j) + brute_injection(c, row + 1, used));
            used[j] = false;
        }
    }
    best
}

proptest! {
    #[test]
    fn full_solver_is_optimal(c in (1usize..7).prop_flat_map(|k| matrix(k, k))) {
        let r = solve_full(&c).unwrap();
        let brute = brute_injection(&c, 0, &mut vec![false; c.cols()]);
        prop_assert!((r.total_cost - brute).abs() <= 1e-10 * brute.max(1.0));
        prop_assert_eq!(r.matching.len(), c.rows());
        prop_assert!((c.matched_cost(&r.matching) - r.total_cost).abs() <= 1e-10 * brute.max(1.0));
    }

    #[test]
    fn extra_columns_never_hurt(k in 1usize..5, extra in 0usize..3, seed in matrix(4, 7)) {
        let sub = |cols: usize| CostMatrix::from_rows((0..k).map(|i| seed.row(i)[..cols].to_vec()).collect()).unwrap();
        let square = solve_full(&sub(k)).unwrap().total_cost;
        let wide = solve_rectangular(&sub(k + extra)).unwrap().total_cost;
        prop_assert!(wide <= square + 1e-10 * square.max(1.0));
    }

    #[test]
    fn under_match_cost_grows_with_l(c in (1usize..6).prop_flat_map(|k| matrix(k, k))) {
        let k = c.rows();
        let costs: Vec<f64> = (1..=k).map(|l| solve_under_match(&c, l).unwrap().total_cost).collect();
        let min_entry = (0..k).flat_map(|i| c.row(i).to_vec()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(costs[0], min_entry);
        prop_assert!(costs.windows(2).all(|w| w[0] <= w[1] + 1e-10));
        prop_assert!((costs[k - 1] - solve_full(&c).unwrap().total_cost).abs() <= 1e-10 * costs[k - 1].max(1.0));
        prop_assert!(solve_under_match(&c, 0).is_err());
    }

    #[test]
    fn best_match_is_permutation_invariant(
        yd in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 4),
        zd in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 4),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let y = ObservedData::with_unit_weights(yd).unwrap();
        let z = SimulatedData::new(zd).unwrap();
        let a = best_match(&y, &z, Criterion::Permutation).unwrap();
        let b = best_match(&y, &z.select(&perm), Criterion::Permutation).unwrap();
        prop_assert!((a.squared - b.squared).abs() <= 1e-10 * a.squared.max(1.0));
        let direct = squared_restricted_distance(&y, &z, &a.matching).unwrap();
        prop_assert!((direct - a.squared).abs() <= 1e-10 * a.squared.max(1.0));
    }
}

#[test]
fn single_precision_solves() {
    let y = ObservedData::<f32>::with_unit_weights(vec![vec![0.0], vec![10.0]]).unwrap();
    let z = SimulatedData::<f32>::new(vec![vec![10.0], vec![1.0]]).unwrap();
    let r = solve_full(&cost_matrix(&y, &z).unwrap()).unwrap();
    assert_eq!(r.total_cost, 1.0);
    assert_eq!(r.matching.pairs(), [(0, 1), (1, 0)]);
}

#[test]
fn k100_solve_is_fast() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..100 * 100).map(|_| rng.random::<f64>()).collect();
    let c = CostMatrix::new(100, 100, data).unwrap();
    let start = std::time::Instant::now();
    let r = solve_full(&c).unwrap();
    assert!(start.elapsed().as_millis() < 50, "{:?}", start.elapsed());
    assert_eq!(r.matching.len(), 100);
}
