use pleijel::field::{load_labels, save_labels};
use pleijel::nodal::{count_nodal_domains, DEFAULT_ZERO_TOL};
use pleijel::spectral::ho_reference;
use pleijel::{Grid, SampledField};

#[test]
fn eigenfield_and_labels_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new(2, 6.0, 63).unwrap();
    let pair = ho_reference(2, 1, grid).unwrap();
    let base = dir.path().join("u21");
    pair.field.save(&base, Some(pair.lambda), Some(pair.residual)).unwrap();
    let (back, meta) = SampledField::load(&base).unwrap();
    assert_eq!(back, pair.field);
    assert_eq!(meta.lambda, Some(pair.lambda));

    let dec = count_nodal_domains(&back, DEFAULT_ZERO_TOL).unwrap();
    save_labels(&dir.path().join("labels"), grid, &dec.labels).unwrap();
    let (g, labels) = load_labels(&dir.path().join("labels")).unwrap();
    assert_eq!(g, grid);
    assert_eq!(labels, dec.labels);
    assert_eq!(dec.mu, 6);
}
