//! Coulomb problem on a modest grid: bound states, annular localisation,
//! the central-cell bound and the semibound constant.

use pleijel::hardy::semibound_constant;
use pleijel::nodal::{central_cell_bound, count_nodal_domains, localize_domains, nodal_bound_report, DEFAULT_ZERO_TOL};
use pleijel::partition::{build_annular_layout, tile_annuli};
use pleijel::spectral::{assemble_hamiltonian, lowest_eigenpairs, AssemblyOptions};
use pleijel::{Grid, PotentialSpec};

#[test]
fn coulomb_bound_states_localise() {
    let spec = PotentialSpec::coulomb(2.0, 1.0, 2).unwrap();
    let grid = Grid::new(2, 24.0, 191).unwrap();
    let op = assemble_hamiltonian(&spec, grid, &AssemblyOptions::default()).unwrap();
    let pairs = lowest_eigenpairs(&op, 2, 1e-7).unwrap();
    // exact levels -1/(n - 1/2)²
    assert!((pairs[0].lambda + 4.0).abs() < 0.1, "{}", pairs[0].lambda);
    assert!((pairs[1].lambda + 4.0 / 9.0).abs() < 0.03, "{}", pairs[1].lambda);
    assert!(pairs[0].lambda >= -semibound_constant(&spec, 2).unwrap());

    let layout = build_annular_layout(1.0, 2.0 / 3.0, 24.0 * 2f64.sqrt()).unwrap();
    let cover = tile_annuli(&layout, 2, 0.05).unwrap();
    let mu0 = central_cell_bound(&spec, &cover).unwrap();
    for pair in &pairs {
        let dec = count_nodal_domains(&pair.field, DEFAULT_ZERO_TOL).unwrap();
        let audit = localize_domains(&dec, &cover, &pair.field).unwrap();
        assert!(audit.violations.is_empty());
        let bound = nodal_bound_report(&spec, pair.lambda, &cover, 2, None).unwrap();
        assert_eq!(bound.mu0, mu0);
        assert!(dec.mu as f64 <= bound.total);
    }
}
