use pleijel::hardy::{hardy_weight, random_test_fields, verify_hardy};
use pleijel::Grid;
use proptest::prelude::*;

#[test]
fn fifty_seeded_bumps_two_poles() {
    let grid = Grid::new(3, 3.0, 47).unwrap();
    let poles = vec![vec![0.6, 0.0, 0.0], vec![-0.6, 0.0, 0.0]];
    let w = hardy_weight(&poles, 3, None).unwrap();
    let fields = random_test_fields(grid, &poles, None, 50, 7);
    let report = verify_hardy(&w, &fields).unwrap();
    for (m, e) in report.margins.iter().zip(&report.energies) {
        assert!(*m >= -1e-3 * e, "margin {m} energy {e}");
    }
}

#[test]
fn planar_fields_respect_the_disc() {
    let grid = Grid::new(2, 4.0, 127).unwrap();
    let poles = vec![vec![0.0, 0.0]];
    let w = hardy_weight(&poles, 2, Some(3.5)).unwrap();
    let fields = random_test_fields(grid, &poles, Some(3.5), 20, 3);
    let report = verify_hardy(&w, &fields).unwrap();
    assert!(report.min_relative_margin >= -1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn margins_nonnegative_for_any_seed(seed in any::<u64>()) {
        let grid = Grid::new(3, 3.0, 31).unwrap();
        let poles = vec![vec![0.0, 0.0, 0.0]];
        let w = hardy_weight(&poles, 3, None).unwrap();
        let report = verify_hardy(&w, &random_test_fields(grid, &poles, None, 4, seed)).unwrap();
        prop_assert!(report.min_relative_margin >= -1e-3);
    }
}
