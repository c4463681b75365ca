//! Randomized invariant checks over seeded state families.

use proptest::prelude::*;

use qdemon::correlations;
use qdemon::measurement::{self, QubitBasis};
use qdemon::optimizer;
use qdemon::states;
use qdemon::{CandidateGrid, ProductBasisSpec};

fn angles() -> impl Strategy<Value = (f64, f64)> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU)
}

fn spec_for(labels: &[String], bases: &[(f64, f64)]) -> ProductBasisSpec {
    let mut spec = ProductBasisSpec::new();
    for (l, &(t, p)) in labels.iter().zip(bases) {
        spec.insert(l.clone(), QubitBasis::new(t, p));
    }
    spec
}

fn shared_grid() -> CandidateGrid {
    CandidateGrid::with_steps(5, 4).without_refinement()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn chained_steps_telescope_to_global_value(
        seed in 0u64..1_000_000,
        rank in 2usize..=8,
        bases in proptest::collection::vec(angles(), 3),
        rot in 0usize..3,
    ) {
        let rho = states::random_mixed(3, rank, seed).unwrap();
        let labels = rho.layout().labels().to_vec();
        let spec = spec_for(&labels, &bases);
        let mut order = labels.clone();
        order.rotate_left(rot);

        let total = correlations::gqd_fixed(&rho, &spec).unwrap().value;
        let steps = correlations::chained_decomposition(&rho, &spec, &order).unwrap();
        let sum: f64 = steps.iter().sum();
        prop_assert!((total - sum).abs() < 1e-9, "sum {sum} vs total {total}");
        prop_assert!(steps.iter().all(|&s| s > -1e-10));
    }

    #[test]
    fn chain_bound_holds_on_shared_candidates(seed in 0u64..1_000_000, rank in 2usize..=8) {
        let rho = states::random_mixed(3, rank, seed).unwrap();
        let labels = rho.layout().labels().to_vec();
        let grid = shared_grid();
        let gqd = optimizer::minimize_gqd(&rho, &grid).unwrap();
        let chained = optimizer::minimize_chained(&rho, &labels, &grid).unwrap();
        let sum: f64 = chained.iter().map(|s| s.value).sum();
        prop_assert!(gqd.value >= sum - 1e-9, "gqd {} < chained sum {sum}", gqd.value);
    }

    #[test]
    fn mid_dominates_optimized_value(seed in 0u64..1_000_000, rank in 2usize..=8) {
        let rho = states::random_mixed(3, rank, seed).unwrap();
        let mid = correlations::mid_multipartite(&rho).unwrap();
        let gqd = optimizer::minimize_gqd(&rho, &shared_grid()).unwrap();
        prop_assert!(mid.value >= gqd.value - 1e-9, "mid {} < gqd {}", mid.value, gqd.value);
    }

    #[test]
    fn channel_is_entropy_non_decreasing_and_idempotent(
        seed in 0u64..1_000_000,
        rank in 2usize..=4,
        bases in proptest::collection::vec(angles(), 2),
    ) {
        let rho = states::random_mixed(2, rank, seed).unwrap();
        let labels = rho.layout().labels().to_vec();
        let spec = spec_for(&labels, &bases);
        let measured = measurement::apply_channel(&rho, &spec).unwrap();
        prop_assert!(measured.von_neumann_entropy() >= rho.von_neumann_entropy() - 1e-12);
        let twice = measurement::apply_channel(&measured, &spec).unwrap();
        prop_assert!((twice.matrix() - measured.matrix()).norm() < 1e-10);
    }

    #[test]
    fn thermal_dominates_original_discord(
        seed in 0u64..1_000_000,
        rank in 2usize..=4,
        basis in angles(),
    ) {
        let rho = states::random_mixed(2, rank, seed).unwrap();
        let b = QubitBasis::new(basis.0, basis.1);
        let thermal = correlations::thermal_qd_fixed(&rho, "A", &b).unwrap().value;
        let original = correlations::original_qd_fixed(&rho, "A", &b).unwrap();
        prop_assert!(thermal >= original - 1e-9, "thermal {thermal} < original {original}");
    }

    #[test]
    fn refinement_never_raises_the_minimum(seed in 0u64..1_000_000, rank in 2usize..=4) {
        let rho = states::random_mixed(2, rank, seed).unwrap();
        let coarse = shared_grid();
        let refined = CandidateGrid { refine: true, ..coarse };
        let a = optimizer::minimize_gqd(&rho, &coarse).unwrap();
        let b = optimizer::minimize_gqd(&rho, &refined).unwrap();
        prop_assert!(b.value <= a.value + 1e-12);
    }

    #[test]
    fn results_are_bitwise_deterministic(seed in 0u64..1_000_000, rank in 2usize..=8) {
        let rho = states::random_mixed(3, rank, seed).unwrap();
        let grid = shared_grid();
        let a = optimizer::minimize_gqd(&rho, &grid).unwrap();
        let b = optimizer::minimize_gqd(&rho, &grid).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.spec, b.spec);
        prop_assert_eq!(a.evaluations, b.evaluations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn doubling_the_grid_barely_moves_the_minimum(seed in 0u64..1_000_000) {
        let rho = states::random_mixed(2, 3, seed).unwrap();
        let standard = optimizer::minimize_gqd(&rho, &CandidateGrid::default()).unwrap();
        let double =
            optimizer::minimize_gqd(&rho, &CandidateGrid::with_steps(49, 50)).unwrap();
        prop_assert!(
            (standard.value - double.value).abs() < 2e-3,
            "standard {} vs doubled {}",
            standard.value,
            double.value
        );
    }
}
