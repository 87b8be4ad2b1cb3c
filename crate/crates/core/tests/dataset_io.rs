use std::path::Path;

use warpmetric::dataset::{
    load_manifest, load_path, matrix_from_csv, save_manifest, save_path, SynthSpec,
};
use warpmetric::Error;

fn spec() -> SynthSpec {
    SynthSpec::from_json(
        r#"{"pairs": 3, "min_length": 10, "max_length": 14, "min_tempo": 0.8,
            "max_tempo": 1.25, "noise_sigma": 0.1, "informative_dims": 2,
            "noise_dims": 1, "seed": 4}"#,
        Path::new("spec.json"),
    )
    .unwrap()
}

#[test]
fn manifest_round_trip_preserves_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = spec().generate().unwrap();
    let manifest = dir.path().join("sub").join("manifest.json");
    save_manifest(&pairs, &manifest).unwrap();
    let back = load_manifest(&manifest).unwrap();
    assert_eq!(back.len(), pairs.len());
    for (a, b) in pairs.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.a, b.a);
        assert_eq!(a.b, b.b);
    }
}

#[test]
fn generation_is_seeded() {
    let s = spec();
    assert_eq!(s.generate().unwrap(), s.generate().unwrap());
    let other = SynthSpec { seed: 5, ..spec() };
    assert_ne!(s.generate().unwrap()[0].a, other.generate().unwrap()[0].a);
}

#[test]
fn unknown_spec_fields_are_rejected() {
    let err = SynthSpec::from_json(r#"{"pairs": 1, "bogus": 2}"#, Path::new("s.json"));
    assert!(err.is_err());
}

#[test]
fn malformed_csv_reports_location() {
    match matrix_from_csv("1,2\n3,x\n", Path::new("m.csv")) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        matrix_from_csv("1,2\n3\n", Path::new("m.csv")),
        Err(Error::InconsistentDims { .. })
    ));
}

#[test]
fn invalid_path_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = spec().generate().unwrap().remove(0);
    let truth = good.truth.clone().unwrap();
    let file = dir.path().join("t.csv");
    save_path(&truth, &file).unwrap();
    let (r, c) = truth.dims();
    assert_eq!(load_path(&file, r, c).unwrap(), truth);
    std::fs::write(&file, "1,1\n3,3\n").unwrap();
    assert!(load_path(&file, 3, 3).is_err());
}
