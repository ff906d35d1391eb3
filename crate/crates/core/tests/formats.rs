use bomasim::bnn::{NetworkParams, DEFAULT_DEPTH, TINY_DIMS};
use bomasim::leakage::{BmntReader, BmntWriter, TraceMeta, TraceSet};
use bomasim::tvla::Window;
use bomasim::Error;

fn params() -> NetworkParams {
    NetworkParams::generate(&TINY_DIMS, DEFAULT_DEPTH, 9).unwrap()
}

fn traces(prng: &str) -> TraceSet {
    let meta = TraceMeta {
        design: "masked".into(),
        prng: prng.into(),
        seed: 77,
        windows: vec![Window { start: 1, end: 3 }],
        ..Default::default()
    };
    let mut ts = TraceSet::new(5, meta);
    for i in 0..7u8 {
        let x: Vec<f32> = (0..5).map(|j| i as f32 * 0.25 - j as f32 + f32::EPSILON * j as f32).collect();
        ts.push(i % 2, &x).unwrap();
    }
    ts.push(0, &[f32::MAX, f32::MIN_POSITIVE, -0.0, 1e-42, -3.5]).unwrap();
    ts
}

fn format_err<T: std::fmt::Debug>(r: bomasim::Result<T>) -> String {
    match r {
        Err(Error::Format(m)) => m,
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn bmnp_round_trip_is_byte_exact() {
    let p = params();
    let bytes = p.to_bytes();
    assert_eq!(&bytes[..4], b"BMNP");
    let q = NetworkParams::from_bytes(&bytes).unwrap();
    assert_eq!(q.to_bytes(), bytes);
    assert_eq!(q.dims(), TINY_DIMS.to_vec());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bmnp");
    p.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(NetworkParams::load(&path).unwrap().to_bytes(), bytes);
}

#[test]
fn bmnp_corruption_is_rejected() {
    let bytes = params().to_bytes();
    for cut in 0..bytes.len() {
        format_err(NetworkParams::from_bytes(&bytes[..cut]));
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(format_err(NetworkParams::from_bytes(&extra)).contains("trailing"));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(format_err(NetworkParams::from_bytes(&bad)).contains("magic"));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(format_err(NetworkParams::from_bytes(&bad)).contains("version"));
    // a width that is not a multiple of the depth
    let mut bad = bytes.clone();
    bad[12] = 100;
    assert!(NetworkParams::from_bytes(&bad).is_err());
    // absurd sizes fail without allocating them
    let mut bad = bytes.clone();
    bad[8..16].copy_from_slice(&[0xff; 8]);
    assert!(NetworkParams::from_bytes(&bad).is_err());
}

#[test]
fn bmnt_round_trip_is_byte_exact() {
    for prng in ["on", "off"] {
        let ts = traces(prng);
        let bytes = ts.to_bytes();
        assert_eq!(&bytes[..4], b"BMNT");
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), (prng == "on") as u16);
        let back = TraceSet::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.labels(), ts.labels());
        for (a, b) in back.samples().iter().zip(ts.samples()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.meta.windows, ts.meta.windows);
    }
}

#[test]
fn streaming_writer_matches_in_memory_encoding() {
    let ts = traces("on");
    let mut w = BmntWriter::new(Vec::new(), &ts.meta, ts.n_samples(), ts.labels()).unwrap();
    for i in 0..ts.n_traces() {
        w.write_trace(ts.trace(i)).unwrap();
    }
    assert_eq!(w.finish().unwrap(), ts.to_bytes());

    // too few traces is an error, not a short file
    let w = BmntWriter::new(Vec::new(), &ts.meta, ts.n_samples(), ts.labels()).unwrap();
    assert!(w.finish().is_err());
}

#[test]
fn bmnt_file_round_trip() {
    let ts = traces("off");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bmnt");
    ts.save(&path).unwrap();
    let rd = BmntReader::open(&path).unwrap();
    assert_eq!((rd.n_traces(), rd.n_samples()), (8, 5));
    assert_eq!(rd.into_trace_set().unwrap().to_bytes(), ts.to_bytes());
    assert_eq!(TraceSet::load(&path).unwrap().to_bytes(), ts.to_bytes());

    let mut bytes = ts.to_bytes();
    bytes.truncate(bytes.len() - 1);
    std::fs::write(&path, &bytes).unwrap();
    format_err(BmntReader::open(&path));
}

#[test]
fn bmnt_corruption_is_rejected() {
    let bytes = traces("on").to_bytes();
    for cut in 0..bytes.len() {
        format_err(TraceSet::from_bytes(&bytes[..cut]));
    }
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0, 0, 0, 0]);
    assert!(format_err(TraceSet::from_bytes(&extra)).contains("trailing"));

    let patch = |at: usize, v: &[u8]| {
        let mut b = bytes.clone();
        b[at..at + v.len()].copy_from_slice(v);
        format_err(TraceSet::from_bytes(&b))
    };
    assert!(patch(0, b"BMNX").contains("magic"));
    assert!(patch(4, &2u16.to_le_bytes()).contains("version"));
    assert!(patch(14, &4u16.to_le_bytes()).contains("flags"));
    // flag says PRNG off, metadata says on
    assert!(patch(14, &0u16.to_le_bytes()).contains("disagree"));
    assert!(patch(10, &u32::MAX.to_le_bytes()).contains("implausible"));
    assert!(patch(16, &u32::MAX.to_le_bytes()).contains("implausible"));
    // more traces than the file holds
    patch(6, &1_000_000u32.to_le_bytes());
    // metadata that is not JSON
    assert!(patch(20, b"#").contains("metadata"));
    // an invalid label
    let meta_len = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    assert!(patch(20 + meta_len, &[7]).contains("label"));
}
