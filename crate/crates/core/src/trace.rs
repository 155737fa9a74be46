//! On-disk activation traces.
//!
//! A trace directory holds `manifest.json` plus one payload per sentence in
//! `sentences/<uid>.bin`. Each payload is the hidden block, `(L+1)·n·D`
//! little-endian `f32` values in row-major order, immediately followed by the
//! attention block of `L·H·n·n` values. Layer 0 of the hidden block is the
//! embedding-layer output.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::ROW_SUM_TOL;
use crate::corpus::ModelMeta;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SENTENCE_DIR: &str = "sentences";

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{uid}: shape mismatch: {reason}")]
    ShapeMismatch { uid: String, reason: String },
    #[error("unknown sentence {0}")]
    UnknownSentence(String),
    #[error("{uid}: corrupt payload: {reason}")]
    CorruptPayload { uid: String, reason: String },
    #[error("{uid}: non-finite value in payload")]
    NonFiniteValue { uid: String },
    #[error("no trace manifest at {0}")]
    MissingManifest(PathBuf),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTraceHeader {
    pub sentence_uid: String,
    pub n_tokens: usize,
    pub tokens: Vec<String>,
    pub target_span: Span,
    pub cue_span: Span,
    pub special_mask: Vec<bool>,
}

impl SentenceTraceHeader {
    pub fn validate(&self) -> Result<(), String> {
        let n = self.n_tokens;
        if n == 0 {
            return Err("n_tokens must be positive".into());
        }
        if self.tokens.len() != n {
            return Err(format!("{} tokens listed for n_tokens={n}", self.tokens.len()));
        }
        if self.special_mask.len() != n {
            return Err(format!("special_mask has {} entries for n_tokens={n}", self.special_mask.len()));
        }
        for (name, span) in [("target_span", self.target_span), ("cue_span", self.cue_span)] {
            if span.is_empty() || span.end > n {
                return Err(format!("{name} {span} invalid for {n} tokens"));
            }
        }
        if self.target_span.overlaps(&self.cue_span) {
            return Err(format!("target_span {} overlaps cue_span {}", self.target_span, self.cue_span));
        }
        Ok(())
    }

    /// Number of subword tokens covering the target word.
    pub fn target_tokens(&self) -> usize {
        self.target_span.len()
    }

    pub fn cue_tokens(&self) -> usize {
        self.cue_span.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub header: SentenceTraceHeader,
    /// `(L+1) × n × D`.
    pub hidden: Array3<f32>,
    /// `L × H × n × n`, `[ℓ-1][h][query][key]`.
    pub attention: Array4<f32>,
}

impl ActivationTrace {
    pub fn num_layers(&self) -> usize {
        self.attention.dim().0
    }

    pub fn num_heads(&self) -> usize {
        self.attention.dim().1
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.dim().2
    }

    /// Hidden states at probe point `layer` (0 = embedding output).
    pub fn hidden_layer(&self, layer: usize) -> ArrayView2<'_, f32> {
        self.hidden.index_axis(ndarray::Axis(0), layer)
    }

    /// Attention matrix of `head` in transformer layer `layer` (1-based).
    pub fn attention_head(&self, layer: usize, head: usize) -> ArrayView2<'_, f32> {
        self.attention.slice(ndarray::s![layer - 1, head, .., ..])
    }

    fn check_shapes(&self, meta: &ModelMeta) -> Result<(), String> {
        let n = self.header.n_tokens;
        let (l, h, d) = (meta.num_layers, meta.num_heads, meta.hidden_dim);
        if self.hidden.dim() != (l + 1, n, d) {
            return Err(format!("hidden {:?}, expected {:?}", self.hidden.dim(), (l + 1, n, d)));
        }
        if self.attention.dim() != (l, h, n, n) {
            return Err(format!("attention {:?}, expected {:?}", self.attention.dim(), (l, h, n, n)));
        }
        Ok(())
    }

    /// Every invariant violation found in the tensors, deduplicated.
    pub fn tensor_violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.hidden.iter().chain(self.attention.iter()).any(|v| !v.is_finite()) {
            out.push(REASON_NON_FINITE);
        }
        if self.attention.iter().any(|&w| w.is_finite() && !(0.0..=1.0).contains(&w)) {
            out.push(REASON_RANGE);
        }
        let n = self.header.n_tokens;
        let row_bad = self.attention.as_slice().map_or(true, |flat| {
            flat.chunks_exact(n.max(1)).any(|row| {
                let sum: f64 = row.iter().map(|&w| w as f64).sum();
                !((sum - 1.0).abs() <= ROW_SUM_TOL)
            })
        });
        if row_bad && self.attention.len() > 0 {
            out.push(REASON_ROW_SUM);
        }
        out
    }
}

pub const REASON_NON_FINITE: &str = "non-finite value";
pub const REASON_RANGE: &str = "attention weight outside [0, 1]";
pub const REASON_ROW_SUM: &str = "row-sum violation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteOffsets {
    pub hidden: [u64; 2],
    pub attention: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEntry {
    #[serde(flatten)]
    pub header: SentenceTraceHeader,
    pub file: String,
    pub byte_offsets: ByteOffsets,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub model: ModelMeta,
    pub dataset_id: String,
    pub dtype: String,
    pub endianness: String,
    pub sentences: Vec<SentenceEntry>,
}

impl TraceManifest {
    pub fn read(dir: &Path) -> Result<Self, TraceError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(TraceError::MissingManifest(path));
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let manifest: TraceManifest = serde_json::from_slice(&bytes)?;
        manifest.check()?;
        Ok(manifest)
    }

    fn check(&self) -> Result<(), TraceError> {
        if self.dtype != "f32" {
            return Err(TraceError::Manifest(format!("unsupported dtype {:?}", self.dtype)));
        }
        if self.endianness != "little" {
            return Err(TraceError::Manifest(format!("unsupported endianness {:?}", self.endianness)));
        }
        self.model.validate().map_err(|e| TraceError::Manifest(e.to_string()))?;
        let mut seen = HashSet::new();
        for s in &self.sentences {
            if !seen.insert(&s.header.sentence_uid) {
                return Err(TraceError::Manifest(format!("duplicate sentence {}", s.header.sentence_uid)));
            }
        }
        Ok(())
    }

    pub fn hidden_len(&self, n: usize) -> usize {
        (self.model.num_layers + 1) * n * self.model.hidden_dim
    }

    pub fn attention_len(&self, n: usize) -> usize {
        self.model.num_layers * self.model.num_heads * n * n
    }
}

/// Sentence uid for side `a` or `b` of a pair.
pub fn sentence_uid(pair_id: &str, side: char) -> String {
    format!("{pair_id}#{side}")
}

fn payload_file_name(uid: &str) -> String {
    let safe: String = uid
        .chars()
        .map(|c| if c.is_alphanumeric() || "-_.#".contains(c) { c } else { '_' })
        .collect();
    format!("{SENTENCE_DIR}/{safe}.bin")
}

/// Payload size in bytes for one sentence.
pub fn payload_bytes(meta: &ModelMeta, n_tokens: usize) -> usize {
    let (l, h, d) = (meta.num_layers, meta.num_heads, meta.hidden_dim);
    4 * ((l + 1) * n_tokens * d + l * h * n_tokens * n_tokens)
}

fn encode(trace: &ActivationTrace) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * (trace.hidden.len() + trace.attention.len()));
    for v in trace.hidden.iter().chain(trace.attention.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Writes `traces` into `dir` and returns the manifest that was written.
/// Output is byte-identical for identical inputs.
pub fn write_trace<I>(
    model: &ModelMeta,
    dataset_id: &str,
    traces: I,
    dir: &Path,
) -> Result<TraceManifest, TraceError>
where
    I: IntoIterator<Item = ActivationTrace>,
{
    model.validate().map_err(|e| TraceError::Manifest(e.to_string()))?;
    let sentence_dir = dir.join(SENTENCE_DIR);
    fs::create_dir_all(&sentence_dir).map_err(io_err(&sentence_dir))?;

    let mut manifest = TraceManifest {
        model: model.clone(),
        dataset_id: dataset_id.to_string(),
        dtype: "f32".into(),
        endianness: "little".into(),
        sentences: Vec::new(),
    };
    let mut files = HashSet::new();
    for trace in traces {
        let uid = trace.header.sentence_uid.clone();
        let shape_err = |reason: String| TraceError::ShapeMismatch { uid: uid.clone(), reason };
        trace.header.validate().map_err(shape_err)?;
        trace.check_shapes(model).map_err(shape_err)?;
        if let Some(reason) = trace.tensor_violations().first() {
            return Err(shape_err(reason.to_string()));
        }
        let file = payload_file_name(&uid);
        if !files.insert(file.clone()) {
            return Err(TraceError::Manifest(format!("sentence {uid} duplicates payload {file}")));
        }
        let bytes = encode(&trace);
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        let split = 4 * trace.hidden.len() as u64;
        manifest.sentences.push(SentenceEntry {
            header: trace.header,
            file,
            byte_offsets: ByteOffsets { hidden: [0, split], attention: [split, bytes.len() as u64] },
        });
    }

    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}

/// An opened trace directory with its manifest indexed by sentence uid.
#[derive(Debug, Clone)]
pub struct TraceDir {
    pub root: PathBuf,
    pub manifest: TraceManifest,
    index: HashMap<String, usize>,
}

impl TraceDir {
    pub fn open(dir: &Path) -> Result<Self, TraceError> {
        let manifest = TraceManifest::read(dir)?;
        let index = manifest
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.header.sentence_uid.clone(), i))
            .collect();
        Ok(Self { root: dir.to_path_buf(), manifest, index })
    }

    pub fn contains(&self, uid: &str) -> bool {
        self.index.contains_key(uid)
    }

    pub fn entry(&self, uid: &str) -> Option<&SentenceEntry> {
        self.index.get(uid).map(|&i| &self.manifest.sentences[i])
    }

    pub fn read(&self, uid: &str) -> Result<ActivationTrace, TraceError> {
        let entry = self.entry(uid).ok_or_else(|| TraceError::UnknownSentence(uid.to_string()))?;
        let path = self.root.join(&entry.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        self.decode_entry(entry, &bytes)
    }

    fn decode_entry(&self, entry: &SentenceEntry, bytes: &[u8]) -> Result<ActivationTrace, TraceError> {
        let uid = entry.header.sentence_uid.clone();
        let corrupt = |reason: String| TraceError::CorruptPayload { uid: uid.clone(), reason };
        entry.header.validate().map_err(corrupt)?;
        let n = entry.header.n_tokens;
        let m = &self.manifest;
        let (hid, att) = (m.hidden_len(n), m.attention_len(n));
        let expected = 4 * (hid + att);
        if bytes.len() != expected {
            return Err(corrupt(format!("{} bytes, expected {expected}", bytes.len())));
        }
        let offsets = ByteOffsets {
            hidden: [0, 4 * hid as u64],
            attention: [4 * hid as u64, expected as u64],
        };
        if entry.byte_offsets != offsets {
            return Err(corrupt(format!("byte offsets {:?}, expected {offsets:?}", entry.byte_offsets)));
        }
        let values = decode(bytes);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TraceError::NonFiniteValue { uid });
        }
        let (l, h, d) = (m.model.num_layers, m.model.num_heads, m.model.hidden_dim);
        let hidden = Array3::from_shape_vec((l + 1, n, d), values[..hid].to_vec())
            .map_err(|e| corrupt(e.to_string()))?;
        let attention = Array4::from_shape_vec((l, h, n, n), values[hid..].to_vec())
            .map_err(|e| corrupt(e.to_string()))?;
        Ok(ActivationTrace { header: entry.header.clone(), hidden, attention })
    }
}

pub fn read_trace(dir: &Path, sentence_uid: &str) -> Result<ActivationTrace, TraceError> {
    TraceDir::open(dir)?.read(sentence_uid)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceCheck {
    pub sentence_uid: String,
    pub passed: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dir: PathBuf,
    pub manifest_error: Option<String>,
    pub sentences: Vec<SentenceCheck>,
    /// Payload files present on disk but absent from the manifest (strict mode).
    pub orphans: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.manifest_error.is_none() && self.orphans.is_empty() && self.sentences.iter().all(|s| s.passed)
    }

    pub fn violations(&self) -> usize {
        usize::from(self.manifest_error.is_some())
            + self.orphans.len()
            + self.sentences.iter().filter(|s| !s.passed).count()
    }
}

/// Checks every sentence in `dir` against the trace invariants. Failures are
/// reported, never raised. `strict` also flags orphan payloads and spans
/// that cover special tokens.
pub fn validate_trace_dir(dir: &Path, strict: bool) -> ValidationReport {
    let mut report = ValidationReport {
        dir: dir.to_path_buf(),
        manifest_error: None,
        sentences: Vec::new(),
        orphans: Vec::new(),
    };
    let td = match TraceDir::open(dir) {
        Ok(td) => td,
        Err(e) => {
            report.manifest_error = Some(e.to_string());
            return report;
        }
    };
    for entry in &td.manifest.sentences {
        let uid = entry.header.sentence_uid.clone();
        let mut reasons: Vec<String> = Vec::new();
        let path = td.root.join(&entry.file);
        match fs::read(&path) {
            Err(e) => reasons.push(format!("missing payload: {e}")),
            Ok(bytes) => match check_payload(&td, entry, &bytes) {
                Ok(trace) => {
                    reasons.extend(trace.tensor_violations().into_iter().map(String::from));
                    if strict {
                        let h = &trace.header;
                        for (name, span) in [("target", h.target_span), ("cue", h.cue_span)] {
                            if span.range().any(|i| h.special_mask[i]) {
                                reasons.push(format!("{name} span covers a special token"));
                            }
                        }
                    }
                }
                Err(reason) => reasons.push(reason),
            },
        }
        report.sentences.push(SentenceCheck { sentence_uid: uid, passed: reasons.is_empty(), reasons });
    }
    if strict {
        let referenced: BTreeSet<String> =
            td.manifest.sentences.iter().map(|s| s.file.clone()).collect();
        if let Ok(read) = fs::read_dir(dir.join(SENTENCE_DIR)) {
            let mut orphans: Vec<String> = read
                .filter_map(|e| e.ok())
                .map(|e| format!("{SENTENCE_DIR}/{}", e.file_name().to_string_lossy()))
                .filter(|f| !referenced.contains(f))
                .collect();
            orphans.sort();
            report.orphans = orphans;
        }
    }
    report
}

/// Decodes a payload without rejecting non-finite values, so that every
/// tensor violation can be reported together.
fn check_payload(td: &TraceDir, entry: &SentenceEntry, bytes: &[u8]) -> Result<ActivationTrace, String> {
    match td.decode_entry(entry, bytes) {
        Ok(t) => Ok(t),
        Err(TraceError::NonFiniteValue { .. }) => {
            let m = &td.manifest;
            let n = entry.header.n_tokens;
            let hid = m.hidden_len(n);
            let values = decode(bytes);
            let (l, h, d) = (m.model.num_layers, m.model.num_heads, m.model.hidden_dim);
            Ok(ActivationTrace {
                header: entry.header.clone(),
                hidden: Array3::from_shape_vec((l + 1, n, d), values[..hid].to_vec())
                    .map_err(|e| e.to_string())?,
                attention: Array4::from_shape_vec((l, h, n, n), values[hid..].to_vec())
                    .map_err(|e| e.to_string())?,
            })
        }
        Err(e) => Err(match e {
            TraceError::CorruptPayload { reason, .. } => format!("size mismatch: {reason}"),
            other => other.to_string(),
        }),
    }
}
