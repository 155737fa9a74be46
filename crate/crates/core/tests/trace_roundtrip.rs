mod common;

use std::fs;
use std::path::Path;

use ndarray::{Array3, Array4};
use polyprobe::corpus::{Language, ModelMeta};
use polyprobe::trace::{
    payload_bytes, read_trace, validate_trace_dir, write_trace, ActivationTrace, SentenceTraceHeader, Span, TraceDir,
    TraceError, REASON_NON_FINITE, REASON_RANGE, REASON_ROW_SUM,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn meta(l: usize, h: usize, d: usize) -> ModelMeta {
    ModelMeta {
        model_id: "toy".into(),
        family: "toy".into(),
        multilingual: false,
        param_count: 1000,
        num_layers: l,
        num_heads: h,
        hidden_dim: d,
        languages: [Language::English].into_iter().collect(),
    }
}

fn header(uid: &str, n: usize) -> SentenceTraceHeader {
    SentenceTraceHeader {
        sentence_uid: uid.into(),
        n_tokens: n,
        tokens: (0..n).map(|i| format!("t{i}")).collect(),
        target_span: Span::new(n - 1, n),
        cue_span: Span::new(0, 1),
        special_mask: vec![false; n],
    }
}

fn uniform(uid: &str, l: usize, h: usize, d: usize, n: usize) -> ActivationTrace {
    ActivationTrace {
        header: header(uid, n),
        hidden: Array3::from_shape_fn((l + 1, n, d), |(a, b, c)| (a * 100 + b * 10 + c) as f32 * 0.01),
        attention: Array4::from_elem((l, h, n, n), 1.0 / n as f32),
    }
}

fn random_trace(rng: &mut ChaCha8Rng, uid: &str, m: &ModelMeta) -> ActivationTrace {
    let n = rng.gen_range(2..=9);
    let (l, h, d) = (m.num_layers, m.num_heads, m.hidden_dim);
    let hidden = Array3::from_shape_fn((l + 1, n, d), |_| gauss(rng) as f32);
    let mut attention = Array4::from_shape_fn((l, h, n, n), |_| rng.gen_range(0.01f32..1.0));
    for mut row in attention.rows_mut() {
        let s: f32 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    ActivationTrace { header: header(uid, n), hidden, attention }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![("manifest.json".to_string(), fs::read(dir.join("manifest.json")).unwrap())];
    let mut names: Vec<_> = fs::read_dir(dir.join("sentences")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        out.push((n.to_string_lossy().into_owned(), fs::read(dir.join("sentences").join(&n)).unwrap()));
    }
    out
}

#[test]
fn payload_size_follows_shape() {
    let dir = tempfile::tempdir().unwrap();
    let m = meta(2, 2, 4);
    let manifest = write_trace(&m, "ds", [uniform("p#a", 2, 2, 4, 3)], dir.path()).unwrap();
    let len = fs::metadata(dir.path().join(&manifest.sentences[0].file)).unwrap().len();
    assert_eq!(len, 288);
    assert_eq!(payload_bytes(&m, 3), 288);
    assert_eq!(manifest.sentences[0].byte_offsets.hidden, [0, 144]);
    assert_eq!(manifest.sentences[0].byte_offsets.attention, [144, 288]);
}

#[test]
fn random_traces_round_trip_bitwise() {
    let mut rng = rng(41);
    for round in 0..20 {
        let m = meta(rng.gen_range(1..=4), rng.gen_range(1..=3), rng.gen_range(1..=6));
        let traces: Vec<_> = (0..5).map(|i| random_trace(&mut rng, &format!("p{round}-{i}#a"), &m)).collect();
        let dir = tempfile::tempdir().unwrap();
        write_trace(&m, "ds", traces.clone(), dir.path()).unwrap();
        let td = TraceDir::open(dir.path()).unwrap();
        for t in &traces {
            let back = td.read(&t.header.sentence_uid).unwrap();
            assert_eq!(back.header, t.header);
            let bits = |a: &[f32]| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(back.hidden.as_slice().unwrap()), bits(t.hidden.as_slice().unwrap()));
            assert_eq!(bits(back.attention.as_slice().unwrap()), bits(t.attention.as_slice().unwrap()));
        }
        assert!(validate_trace_dir(dir.path(), true).passed());
    }
}

#[test]
fn identical_inputs_give_identical_directories() {
    let m = meta(2, 2, 3);
    let make = |seed| {
        let mut rng = rng(seed);
        (0..4).map(|i| random_trace(&mut rng, &format!("q{i}#b"), &m)).collect::<Vec<_>>()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_trace(&m, "ds", make(9), a.path()).unwrap();
    write_trace(&m, "ds", make(9), b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
}

#[test]
fn invalid_traces_are_refused_on_write() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = uniform("p#a", 2, 2, 4, 3);
    t.attention[[0, 0, 1, 0]] -= 0.1;
    let err = write_trace(&meta(2, 2, 4), "ds", [t], dir.path()).unwrap_err();
    assert!(matches!(err, TraceError::ShapeMismatch { ref reason, .. } if reason == REASON_ROW_SUM));

    let err = write_trace(&meta(2, 2, 5), "ds", [uniform("p#a", 2, 2, 4, 3)], dir.path()).unwrap_err();
    assert!(matches!(err, TraceError::ShapeMismatch { .. }));

    let mut overlap = uniform("p#a", 1, 1, 2, 3);
    overlap.header.cue_span = Span::new(1, 3);
    let err = write_trace(&meta(1, 1, 2), "ds", [overlap], dir.path()).unwrap_err();
    assert!(matches!(err, TraceError::ShapeMismatch { .. }));
}

#[test]
fn unknown_and_truncated_payloads() {
    let dir = tempfile::tempdir().unwrap();
    write_trace(&meta(1, 1, 2), "ds", [uniform("p#a", 1, 1, 2, 3)], dir.path()).unwrap();
    assert!(matches!(read_trace(dir.path(), "zz#a"), Err(TraceError::UnknownSentence(_))));
    let path = dir.path().join("sentences/p#a.bin");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(read_trace(dir.path(), "p#a"), Err(TraceError::CorruptPayload { .. })));
    assert!(!validate_trace_dir(dir.path(), false).passed());
}

#[test]
fn non_finite_values_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    write_trace(&meta(1, 1, 2), "ds", [uniform("p#a", 1, 1, 2, 3)], dir.path()).unwrap();
    let path = dir.path().join("sentences/p#a.bin");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0..4].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_trace(dir.path(), "p#a"), Err(TraceError::NonFiniteValue { .. })));
    let report = validate_trace_dir(dir.path(), false);
    assert_eq!(report.sentences[0].reasons, vec![REASON_NON_FINITE.to_string()]);
}

#[test]
fn corrupted_attention_row_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let m = meta(1, 1, 2);
    write_trace(&m, "ds", [uniform("p#a", 1, 1, 2, 3), uniform("p#b", 1, 1, 2, 3)], dir.path()).unwrap();
    let path = dir.path().join("sentences/p#b.bin");
    let mut bytes = fs::read(&path).unwrap();
    let at = 4 * (2 * 3 * 2);
    bytes[at..at + 4].copy_from_slice(&0.9f32.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    let report = validate_trace_dir(dir.path(), false);
    assert!(report.sentences[0].passed);
    assert_eq!(report.sentences[1].reasons, vec![REASON_ROW_SUM.to_string()]);
    assert_eq!(report.violations(), 1);
}

#[test]
fn missing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(TraceDir::open(dir.path()), Err(TraceError::MissingManifest(_))));
    assert!(validate_trace_dir(dir.path(), false).manifest_error.is_some());
}

#[test]
fn strict_mode_flags_orphans_and_special_spans() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = uniform("p#a", 1, 1, 2, 3);
    t.header.special_mask[0] = true;
    write_trace(&meta(1, 1, 2), "ds", [t], dir.path()).unwrap();
    fs::write(dir.path().join("sentences/extra.bin"), b"").unwrap();
    assert!(validate_trace_dir(dir.path(), false).passed());
    let strict = validate_trace_dir(dir.path(), true);
    assert_eq!(strict.orphans, vec!["sentences/extra.bin".to_string()]);
    assert_eq!(strict.sentences[0].reasons, vec!["cue span covers a special token".to_string()]);
}

#[test]
fn spans_serialize_as_pairs() {
    assert_eq!(serde_json::to_string(&Span::new(2, 4)).unwrap(), "[2,4]");
    assert_eq!(serde_json::from_str::<Span>("[1,3]").unwrap(), Span::new(1, 3));
}

/// Independent re-scan of one payload: returns whether every invariant holds.
fn rescan(bytes: &[u8], l: usize, h: usize, d: usize, n: usize) -> bool {
    let hid = (l + 1) * n * d;
    if bytes.len() != 4 * (hid + l * h * n * n) {
        return false;
    }
    let v: Vec<f32> = bytes.chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let att = &v[hid..];
    if att.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return false;
    }
    att.chunks(n).all(|row| (row.iter().map(|&w| w as f64).sum::<f64>() - 1.0).abs() <= 1e-4)
}

#[test]
fn fuzzed_directories_agree_with_rescan() {
    let mut rng = rng(77);
    let mut flagged = 0;
    for round in 0..40 {
        let m = meta(rng.gen_range(1..=3), rng.gen_range(1..=2), rng.gen_range(1..=4));
        let traces: Vec<_> = (0..4).map(|i| random_trace(&mut rng, &format!("f{round}-{i}#a"), &m)).collect();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_trace(&m, "ds", traces, dir.path()).unwrap();
        for entry in &manifest.sentences {
            let path = dir.path().join(&entry.file);
            let mut bytes = fs::read(&path).unwrap();
            match rng.gen_range(0..5) {
                0 => {
                    let i = rng.gen_range(0..bytes.len());
                    bytes[i] ^= 1 << rng.gen_range(0..8);
                }
                1 => {
                    let k = 4 * rng.gen_range(0..bytes.len() / 4);
                    let v = [f32::NAN, f32::INFINITY, -0.5, 1.5, 0.3][rng.gen_range(0..5)];
                    bytes[k..k + 4].copy_from_slice(&v.to_le_bytes());
                }
                2 => bytes.truncate(bytes.len() - 4 * rng.gen_range(1..=2)),
                _ => {}
            }
            fs::write(&path, &bytes).unwrap();
        }
        let report = validate_trace_dir(dir.path(), false);
        for (entry, check) in manifest.sentences.iter().zip(&report.sentences) {
            let bytes = fs::read(dir.path().join(&entry.file)).unwrap();
            let ok = rescan(&bytes, m.num_layers, m.num_heads, m.hidden_dim, entry.header.n_tokens);
            assert_eq!(check.passed, ok, "{}: {:?}", entry.header.sentence_uid, check.reasons);
            flagged += usize::from(!ok);
            if !ok && bytes.len() == payload_bytes(&m, entry.header.n_tokens) {
                assert!(check.reasons.iter().all(|r| [REASON_NON_FINITE, REASON_RANGE, REASON_ROW_SUM]
                    .contains(&r.as_str())));
            }
        }
    }
    assert!(flagged > 20, "fuzzing produced only {flagged} invalid payloads");
}

#[test]
fn fixture_traces_validate() {
    for entry in fs::read_dir(toy_fixture().join("traces")).unwrap() {
        let dir = entry.unwrap().path();
        let report = validate_trace_dir(&dir, true);
        assert!(report.passed(), "{}: {:?}", dir.display(), report);
    }
}
