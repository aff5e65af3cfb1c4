use std::fs;

use ndarray::{array, Array1, Array2, Ix2};
use surf_bench::bundle::{read_bundle, write_bundle, BUNDLE_VERSION};
use surf_bench::manifest::{self, check_roundtrip, Manifest};
use surf_bench::npy::{self, read_npy, Dtype};
use surf_bench::pipeline::{fit_explanation, FitOptions, MethodSpec};
use surf_bench::synthetic::{gen_synthetic, SynthConfig};
use surf_bench::BenchError;
use surf_core::discovery::Method;

fn small() -> surf_bench::synthetic::Synthetic {
    let cfg = SynthConfig {
        classes: 6,
        dim: 24,
        per_class: 12,
        test_per_class: 6,
        ..SynthConfig::default()
    };
    gen_synthetic(&cfg, 1).unwrap()
}

// The header numpy writes for a little-endian C-order array.
fn numpy_header(descr: &str, shape: &str) -> Vec<u8> {
    let dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}");
    let mut h = dict.into_bytes();
    while (10 + h.len() + 1) % 64 != 0 {
        h.push(b' ');
    }
    h.push(b'\n');
    let mut out = b"\x93NUMPY\x01\x00".to_vec();
    out.extend((h.len() as u16).to_le_bytes());
    out.extend(h);
    out
}

#[test]
fn npy_matches_numpy_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.npy");
    let a = Array2::from_shape_fn((2, 3), |(i, j)| (3 * i + j) as f64);
    npy::write_array(&p, &a).unwrap();
    let mut want = numpy_header("<f8", "(2, 3)");
    assert_eq!(want.len(), 128);
    for x in a.iter() {
        want.extend(x.to_le_bytes());
    }
    assert_eq!(fs::read(&p).unwrap(), want);

    let q = dir.path().join("i.npy");
    npy::write_ints(&q, &array![3i64, -1]).unwrap();
    let mut want = numpy_header("<i8", "(2,)");
    want.extend(3i64.to_le_bytes());
    want.extend((-1i64).to_le_bytes());
    assert_eq!(fs::read(&q).unwrap(), want);
}

#[test]
fn npy_roundtrip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.npy");
    let a = array![
        [0.1 + 0.2, -0.0, f64::MIN_POSITIVE],
        [1e300, -1e-300, std::f64::consts::PI]
    ];
    npy::write_array(&p, &a).unwrap();
    let b = npy::read_array(&p).unwrap().into_dimensionality::<Ix2>().unwrap();
    assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let s = Array1::from_iter((0..5).map(|i| i as f64 * 0.5));
    let q = dir.path().join("s.npy");
    npy::write_f32(&q, &s).unwrap();
    let n = read_npy(&q).unwrap();
    assert_eq!(n.dtype, Dtype::F4);
    assert_eq!(n.shape, vec![5]);
    assert_eq!(n.to_f64().iter().copied().collect::<Vec<_>>(), s.to_vec());
}

#[test]
fn npy_rejects_fortran_order_and_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.npy");
    let mut bytes = numpy_header("<f8", "(1, 2)");
    let text = String::from_utf8(bytes[10..].to_vec())
        .unwrap()
        .replace("False", "True ");
    bytes.truncate(10);
    bytes.extend(text.into_bytes());
    bytes.extend([0u8; 16]);
    fs::write(&p, &bytes).unwrap();
    assert!(matches!(read_npy(&p), Err(BenchError::Unsupported { .. })));

    let q = dir.path().join("m.npy");
    fs::write(&q, b"not an npy file at all").unwrap();
    assert!(matches!(read_npy(&q), Err(BenchError::Format { .. })));

    let r = dir.path().join("short.npy");
    let mut bytes = numpy_header("<f8", "(2,)");
    bytes.extend(1.0f64.to_le_bytes());
    fs::write(&r, &bytes).unwrap();
    assert!(matches!(read_npy(&r), Err(BenchError::Format { .. })));
}

#[test]
fn manifest_save_and_load() {
    let s = small();
    let dir = tempfile::tempdir().unwrap();
    let y = s.head.forward(s.train.embeddings.view()).unwrap();
    let path = manifest::save(dir.path(), "train", &s.head, &s.train, Some(&y), "unit test").unwrap();
    let l = Manifest::load(&path).unwrap();
    assert_eq!(l.head, s.head);
    assert_eq!(l.data, s.train);
    assert_eq!(l.provenance, "unit test");
    let rt = check_roundtrip(&l).unwrap();
    assert_eq!(rt.max_abs_diff, 0.0);
    assert_eq!(rt.label_mismatches, 0);
}

#[test]
fn manifest_shape_mismatch_is_reported() {
    let s = small();
    let dir = tempfile::tempdir().unwrap();
    let path = manifest::save(dir.path(), "train", &s.head, &s.train, None, "").unwrap();
    npy::write_array(&dir.path().join("head_bias.npy"), &Array1::<f64>::zeros(3)).unwrap();
    let err = Manifest::load(&path).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn perturbed_logits_fail_the_check() {
    let s = small();
    let dir = tempfile::tempdir().unwrap();
    let mut y = s.head.forward(s.train.embeddings.view()).unwrap();
    y[[3, 2]] += 0.01;
    let path = manifest::save(dir.path(), "train", &s.head, &s.train, Some(&y), "").unwrap();
    let rt = check_roundtrip(&Manifest::load(&path).unwrap()).unwrap();
    assert!((rt.max_abs_diff - 0.01).abs() < 1e-9);
    assert!(!rt.passes(1e-3));
}

#[test]
fn bundle_roundtrip() {
    let s = small();
    for m in [
        MethodSpec::Oracle,
        MethodSpec::Discovery(Method::McdLite),
        MethodSpec::Discovery(Method::Ice),
        MethodSpec::Discovery(Method::Sae),
    ] {
        let opts = FitOptions {
            sae_epochs: 3,
            ..FitOptions::default()
        };
        let b = fit_explanation(m, 2, &opts, 4, &s.train, &s.head).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &b).unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap(), b, "{m}");
    }
}

#[test]
fn tampered_bundle_is_rejected() {
    let s = small();
    let b = fit_explanation(
        MethodSpec::Discovery(Method::Kmeans),
        2,
        &FitOptions::default(),
        0,
        &s.train,
        &s.head,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), &b).unwrap();
    let cavs = dir.path().join("class0000_cavs.npy");
    let mut v = npy::read_array(&cavs).unwrap().into_dimensionality::<Ix2>().unwrap();
    v[[0, 0]] += 0.5;
    npy::write_array(&cavs, &v).unwrap();
    let err = read_bundle(dir.path()).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn bundle_version_mismatch() {
    let s = small();
    let b = fit_explanation(MethodSpec::Oracle, 1, &FitOptions::default(), 0, &s.train, &s.head).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), &b).unwrap();
    let meta = dir.path().join("bundle.json");
    let text =
        fs::read_to_string(&meta)
            .unwrap()
            .replacen(&format!("\"version\": {BUNDLE_VERSION}"), "\"version\": 99", 1);
    fs::write(&meta, text).unwrap();
    match read_bundle(dir.path()) {
        Err(BenchError::Version { found, expected, .. }) => assert_eq!((found, expected), (99, BUNDLE_VERSION)),
        other => panic!("expected a version error, got {other:?}"),
    }
}
