use std::collections::HashSet;
use std::io::Cursor;

use approx_topk::dataset::{
    load, read_dataset, read_results_csv, save, synth_distinct, synth_distinct_row,
    synth_gaussian, write_dataset, write_results_csv, ResultRecord, VectorDataset, HEADER_LEN,
    MAX_EXACT_F32_INT,
};
use approx_topk::Error;
use proptest::prelude::*;

fn bytes(ds: &VectorDataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_dataset(ds, &mut out).unwrap();
    out
}

fn finite_or_inf() -> impl Strategy<Value = f32> {
    prop_oneof![
        8 => any::<f32>().prop_filter("no NaN", |x| !x.is_nan()),
        1 => Just(f32::INFINITY),
        1 => Just(f32::NEG_INFINITY),
        1 => Just(-0.0f32),
    ]
}

fn dataset() -> impl Strategy<Value = VectorDataset> {
    (0usize..8, 0usize..8).prop_flat_map(|(r, d)| {
        prop::collection::vec(finite_or_inf(), r * d)
            .prop_map(move |data| VectorDataset::new(r, d, data).unwrap())
    })
}

proptest! {
    #[test]
    fn binary_round_trip(ds in dataset()) {
        let raw = bytes(&ds);
        prop_assert_eq!(raw.len(), HEADER_LEN + 4 * ds.data().len());
        let back = read_dataset(Cursor::new(&raw)).unwrap();
        prop_assert_eq!(back.rows(), ds.rows());
        prop_assert_eq!(back.dims(), ds.dims());
        let a: Vec<u32> = back.data().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u32> = ds.data().iter().map(|x| x.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_strict_prefix_is_rejected(ds in dataset()) {
        let raw = bytes(&ds);
        for cut in 0..raw.len() {
            let err = read_dataset(Cursor::new(&raw[..cut])).unwrap_err();
            prop_assert!(matches!(err, Error::Truncated(_)), "cut {}: {:?}", cut, err);
        }
    }

    #[test]
    fn csv_round_trip(
        recs in prop::collection::vec(
            ("[a-z0-9 ,=\"]{0,12}", "[a-z_]{1,8}", -1e9f64..1e9, prop::option::of(0.0f64..1.0)),
            0..10,
        )
    ) {
        let records: Vec<ResultRecord> = recs
            .into_iter()
            .map(|(c, m, v, se)| ResultRecord { config: c, metric: m, value: v, stderr: se })
            .collect();
        let mut out = Vec::new();
        write_results_csv(&records, &mut out).unwrap();
        prop_assert_eq!(read_results_csv(Cursor::new(out)).unwrap(), records);
    }

    #[test]
    fn synth_rows_are_permutations(n in 1usize..2000, seed in any::<u64>(), row in 0u64..50) {
        let v = synth_distinct_row(n, seed, row).unwrap();
        let mut ints: Vec<u32> = v.iter().map(|&x| x as u32).collect();
        ints.sort_unstable();
        prop_assert!(ints.iter().copied().eq(1..=n as u32));
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.atkv");
    let ds = synth_gaussian(33, 7, 3);
    save(&ds, &path).unwrap();
    assert_eq!(load(&path).unwrap(), ds);
    assert!(load(dir.path().join("missing.atkv")).is_err());
}

#[test]
fn header_errors() {
    let ds = synth_gaussian(2, 3, 0);
    let mut raw = bytes(&ds);
    raw[0] = b'X';
    assert!(matches!(
        read_dataset(Cursor::new(&raw)),
        Err(Error::BadMagic { found }) if &found == b"XTKV"
    ));
    let mut raw = bytes(&ds);
    raw[4] = 9;
    assert!(matches!(read_dataset(Cursor::new(&raw)), Err(Error::UnsupportedVersion(9))));
    let mut raw = bytes(&ds);
    raw[HEADER_LEN + 4..HEADER_LEN + 8].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(
        read_dataset(Cursor::new(&raw)),
        Err(Error::NanInPayload { index: 1 })
    ));
    // trailing bytes after the payload are not read
    let mut raw = bytes(&ds);
    raw.extend_from_slice(&[1, 2, 3]);
    assert_eq!(read_dataset(Cursor::new(&raw)).unwrap(), ds);
}

#[test]
fn constructor_checks() {
    assert!(matches!(
        VectorDataset::new(2, 2, vec![0.0; 3]),
        Err(Error::LengthMismatch { expected: 4, actual: 3 })
    ));
    assert!(matches!(
        VectorDataset::new(1, 2, vec![0.0, f32::NAN]),
        Err(Error::NanInPayload { index: 1 })
    ));
}

#[test]
fn synth_is_deterministic_and_row_stable() {
    let a = synth_distinct(5, 100, 42).unwrap();
    let b = synth_distinct(9, 100, 42).unwrap();
    assert_eq!(a.data(), &b.data()[..500]);
    assert_eq!(a.row(3), synth_distinct_row(100, 42, 3).unwrap().as_slice());
    let rows: HashSet<Vec<u32>> = (0..5)
        .map(|r| a.row(r).iter().map(|x| x.to_bits()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert_ne!(synth_distinct(1, 100, 43).unwrap().data(), &a.data()[..100]);
    assert!(synth_distinct_row(0, 1, 0).is_err());
    assert!(synth_distinct_row(MAX_EXACT_F32_INT as usize + 1, 1, 0).is_err());
    assert_eq!(synth_gaussian(4, 4, 1), synth_gaussian(4, 4, 1));
}
