use pleijel::partition::build_lattice_partition;
use pleijel::weyl::{bracket_sums, bracketing_partition};
use pleijel::PotentialSpec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]
    #[test]
    fn lower_weyl_upper_ordering(lambda in 5.0..80.0f64, delta in 0.1..0.5f64) {
        let spec = PotentialSpec::harmonic_oscillator();
        let p = bracketing_partition(&spec, lambda, 2, delta).unwrap();
        let r = bracket_sums(&spec, lambda, &p, 2).unwrap();
        prop_assert!(r.lower_sum <= r.weyl);
        prop_assert!(r.weyl <= r.upper_sum);
        prop_assert!(r.defect >= 0.0);
    }

    #[test]
    fn wider_overlap_raises_the_bound(lambda in 5.0..40.0f64) {
        use pleijel::nodal::nodal_upper_bound;
        let spec = PotentialSpec::harmonic_oscillator();
        let narrow = build_lattice_partition(lambda, 1.0 / 6.0, 0.2, 6.0, 2).unwrap();
        let wide = build_lattice_partition(lambda, 1.0 / 6.0, 0.3, 6.0, 2).unwrap();
        // the gradient bound shrinks with δ, so compare with it removed
        let plain = |p: &pleijel::PartitionOfUnity| {
            let mut q = p.clone();
            q.gradient_bounds.iter_mut().for_each(|b| *b = 0.0);
            nodal_upper_bound(&spec, lambda, &q, 2, None).unwrap()
        };
        prop_assert!(plain(&wide) >= plain(&narrow));
    }
}
