//! End-to-end Case A chain on a coarse grid: eigensolve, count, localise,
//! bound.

use pleijel::nodal::{count_nodal_domains, localize_domains, nodal_upper_bound, DEFAULT_ZERO_TOL};
use pleijel::partition::build_lattice_partition;
use pleijel::spectral::{assemble_hamiltonian, counting_lower_bound, exact_counting_ho, lowest_eigenpairs, AssemblyOptions};
use pleijel::weyl::bracketing_partition;
use pleijel::{Grid, PotentialSpec};

#[test]
fn grid_eigenfunctions_obey_the_nodal_chain() {
    let spec = PotentialSpec::harmonic_oscillator();
    let grid = Grid::new(2, 7.0, 95).unwrap();
    let op = assemble_hamiltonian(&spec, grid, &AssemblyOptions::default()).unwrap();
    let pairs = lowest_eigenpairs(&op, 6, 1e-8).unwrap();
    let expected = [2.0, 4.0, 4.0, 6.0, 6.0, 6.0];
    for (p, e) in pairs.iter().zip(expected) {
        assert!((p.lambda - e).abs() / e < 1e-2, "{} vs {e}", p.lambda);
    }
    for pair in &pairs {
        let lambda = pair.lambda.max(1.5);
        let dec = count_nodal_domains(&pair.field, DEFAULT_ZERO_TOL).unwrap();
        let cover = build_lattice_partition(lambda, 1.0 / 6.0, 0.25, 7.0 * 2f64.sqrt(), 2).unwrap();
        let audit = localize_domains(&dec, &cover, &pair.field).unwrap();
        assert!(audit.violations.is_empty(), "λ = {}: {:?}", pair.lambda, audit.violations);
        let wide = bracketing_partition(&spec, lambda, 2, 0.25).unwrap();
        let bound = nodal_upper_bound(&spec, pair.lambda, &wide, 2, None).unwrap();
        assert!(dec.mu as f64 <= bound);
    }
}

#[test]
fn counting_lower_bound_stays_below_exact_count() {
    let spec = PotentialSpec::harmonic_oscillator();
    for lambda in [10.0, 20.0, 40.0, 60.0] {
        let p = build_lattice_partition(lambda, 1.0 / 6.0, 0.25, lambda.sqrt() + 1.0, 2).unwrap();
        let lower = counting_lower_bound(&spec, lambda, &p.cells).unwrap();
        assert!(lower <= exact_counting_ho(lambda), "λ = {lambda}: {lower}");
    }
}
