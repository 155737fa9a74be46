//! Minimal-pair relatedness datasets and model metadata.
//!
//! Every downstream table keys on [`SentencePair::pair_id`] within a
//! [`Dataset`]. Source CSVs use their own column names; a
//! [`ColumnMapping`] translates them to the canonical schema.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("pair {pair_id}: cue {cue:?} not found in sentence {which}")]
    CueNotInSentence { pair_id: String, which: char, cue: String },
    #[error("pair {pair_id}: target {target:?} not found in sentence {which}")]
    TargetNotInSentence { pair_id: String, which: char, target: String },
    #[error("pair {pair_id}: relatedness {value} outside [{min}, {max}]")]
    ScaleViolation { pair_id: String, value: f64, min: f64, max: f64 },
    #[error("pair {pair_id}: sentences are identical")]
    IdenticalSentences { pair_id: String },
    #[error("duplicate pair_id {0}")]
    DuplicatePairId(String),
    #[error("pair {pair_id}: language {found} differs from dataset language {expected}")]
    LanguageMismatch { pair_id: String, expected: Language, found: Language },
    #[error("not a minimal pair ({differences} differing positions, lengths {len_a}/{len_b})")]
    NotMinimalPair { differences: usize, len_a: usize, len_b: usize },
    #[error("pair {pair_id}: {source}")]
    InPair {
        pair_id: String,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("row {row}: cannot parse {field} from {value:?}")]
    BadValue { row: usize, field: &'static str, value: String },
    #[error("invalid scale [{0}, {1}]")]
    InvalidScale(f64, f64),
    #[error("invalid model metadata for {model_id}: {reason}")]
    InvalidModelMeta { model_id: String, reason: String },
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("unknown canonical field {0:?}")]
    UnknownField(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn in_pair(self, pair_id: &str) -> Self {
        CorpusError::InPair { pair_id: pair_id.to_string(), source: Box::new(self) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    English,
    Spanish,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::English => "english",
            Language::Spanish => "spanish",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "english" | "en" | "eng" => Ok(Language::English),
            "spanish" | "es" | "spa" => Ok(Language::Spanish),
            other => Err(CorpusError::UnknownLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub pair_id: String,
    pub target_word: String,
    pub language: Language,
    pub sentence_a: String,
    pub sentence_b: String,
    pub cue_a: String,
    pub cue_b: String,
    pub relatedness_mean: f64,
    pub relatedness_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dataset_id: String,
    pub language: Language,
    pub scale_min: f64,
    pub scale_max: f64,
    pub items: Vec<SentencePair>,
}

impl Dataset {
    pub fn get(&self, pair_id: &str) -> Option<&SentencePair> {
        self.items.iter().find(|p| p.pair_id == pair_id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_id: String,
    pub family: String,
    pub multilingual: bool,
    pub param_count: u64,
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub languages: BTreeSet<Language>,
}

impl ModelMeta {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: &str| {
            Err(CorpusError::InvalidModelMeta {
                model_id: self.model_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.param_count == 0 {
            return fail("param_count must be positive");
        }
        if self.num_layers == 0 || self.num_heads == 0 || self.hidden_dim == 0 {
            return fail("layers, heads and hidden_dim must be positive");
        }
        if self.languages.is_empty() {
            return fail("no languages");
        }
        if !self.multilingual && self.languages.len() != 1 {
            return fail("monolingual model must declare exactly one language");
        }
        Ok(())
    }

    pub fn log_params(&self) -> f64 {
        (self.param_count as f64).ln()
    }

    /// Monolingual models are only evaluated in their own language.
    pub fn evaluates(&self, language: Language) -> bool {
        self.multilingual || self.languages.contains(&language)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalField {
    PairId,
    TargetWord,
    Language,
    SentenceA,
    SentenceB,
    CueA,
    CueB,
    RelatednessMean,
    RelatednessSd,
}

impl CanonicalField {
    pub const ALL: [CanonicalField; 9] = [
        CanonicalField::PairId,
        CanonicalField::TargetWord,
        CanonicalField::Language,
        CanonicalField::SentenceA,
        CanonicalField::SentenceB,
        CanonicalField::CueA,
        CanonicalField::CueB,
        CanonicalField::RelatednessMean,
        CanonicalField::RelatednessSd,
    ];
    pub const REQUIRED: [CanonicalField; 5] = [
        CanonicalField::PairId,
        CanonicalField::TargetWord,
        CanonicalField::SentenceA,
        CanonicalField::SentenceB,
        CanonicalField::RelatednessMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CanonicalField::PairId => "pair_id",
            CanonicalField::TargetWord => "target_word",
            CanonicalField::Language => "language",
            CanonicalField::SentenceA => "sentence_a",
            CanonicalField::SentenceB => "sentence_b",
            CanonicalField::CueA => "cue_a",
            CanonicalField::CueB => "cue_b",
            CanonicalField::RelatednessMean => "relatedness_mean",
            CanonicalField::RelatednessSd => "relatedness_sd",
        }
    }
}

/// Source column name → canonical field.
pub type ColumnMapping = BTreeMap<String, CanonicalField>;

/// Identity mapping for files already in canonical form.
pub fn canonical_mapping() -> ColumnMapping {
    CanonicalField::ALL.iter().map(|f| (f.name().to_string(), *f)).collect()
}

fn default_true() -> bool {
    true
}

/// Dataset-level facts that the CSV itself does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub language: Language,
    pub scale_min: f64,
    pub scale_max: f64,
    pub csv_path: PathBuf,
    pub mapping: ColumnMapping,
    #[serde(default = "default_true")]
    pub case_insensitive: bool,
    /// Human inter-annotator agreement, when the distributor supplies it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement_ceiling: Option<f64>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path)
            .map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        let mut manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
        if manifest.csv_path.is_relative() {
            if let Some(dir) = path.parent() {
                manifest.csv_path = dir.join(&manifest.csv_path);
            }
        }
        Ok(manifest)
    }

    pub fn load(&self) -> Result<Dataset, CorpusError> {
        load_dataset(&self.csv_path, &self.mapping, self)
    }
}

/// Loads a dataset CSV, translating columns through `mapping` and validating
/// every item against the manifest's language and scale.
pub fn load_dataset(
    path: &Path,
    mapping: &ColumnMapping,
    manifest: &DatasetManifest,
) -> Result<Dataset, CorpusError> {
    let bytes =
        std::fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let dataset = parse_dataset(&bytes, mapping, manifest)?;
    if dataset.is_empty() {
        log::warn!("dataset {} at {} has no items", dataset.dataset_id, path.display());
    }
    Ok(dataset)
}

pub fn parse_dataset(
    bytes: &[u8],
    mapping: &ColumnMapping,
    manifest: &DatasetManifest,
) -> Result<Dataset, CorpusError> {
    if !(manifest.scale_min.is_finite()
        && manifest.scale_max.is_finite()
        && manifest.scale_min < manifest.scale_max)
    {
        return Err(CorpusError::InvalidScale(manifest.scale_min, manifest.scale_max));
    }
    let mapped: BTreeSet<CanonicalField> = mapping.values().copied().collect();
    if let Some(missing) = CanonicalField::REQUIRED.iter().find(|f| !mapped.contains(f)) {
        return Err(CorpusError::MissingColumn(missing.name().to_string()));
    }
    let has_cue_a = mapped.contains(&CanonicalField::CueA);
    if has_cue_a != mapped.contains(&CanonicalField::CueB) {
        let missing = if has_cue_a { CanonicalField::CueB } else { CanonicalField::CueA };
        return Err(CorpusError::MissingColumn(missing.name().to_string()));
    }

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader.headers()?.clone();
    let mut index: BTreeMap<CanonicalField, usize> = BTreeMap::new();
    for (column, field) in mapping {
        let pos = headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| CorpusError::MissingColumn(column.clone()))?;
        index.insert(*field, pos);
    }

    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let get = |f: CanonicalField| index.get(&f).map(|&i| record.get(i).unwrap_or("").to_string());
        let req = |f: CanonicalField| get(f).expect("required field mapped");
        let pair_id = req(CanonicalField::PairId);
        let relatedness_raw = req(CanonicalField::RelatednessMean);
        let relatedness_mean: f64 = relatedness_raw.trim().parse().map_err(|_| CorpusError::BadValue {
            row,
            field: "relatedness_mean",
            value: relatedness_raw.clone(),
        })?;
        let relatedness_sd = match get(CanonicalField::RelatednessSd) {
            Some(s) if !s.trim().is_empty() => Some(s.trim().parse().map_err(|_| {
                CorpusError::BadValue { row, field: "relatedness_sd", value: s.clone() }
            })?),
            _ => None,
        };
        let language = match get(CanonicalField::Language) {
            Some(s) if !s.trim().is_empty() => s.parse()?,
            _ => manifest.language,
        };
        let sentence_a = req(CanonicalField::SentenceA);
        let sentence_b = req(CanonicalField::SentenceB);
        let (cue_a, cue_b) = if has_cue_a {
            (req(CanonicalField::CueA), req(CanonicalField::CueB))
        } else {
            diff_cue(&sentence_a, &sentence_b).map_err(|e| e.in_pair(&pair_id))?
        };
        let pair = SentencePair {
            pair_id,
            target_word: req(CanonicalField::TargetWord),
            language,
            sentence_a,
            sentence_b,
            cue_a,
            cue_b,
            relatedness_mean,
            relatedness_sd,
        };
        validate_pair(&pair, manifest)?;
        if !seen.insert(pair.pair_id.clone()) {
            return Err(CorpusError::DuplicatePairId(pair.pair_id));
        }
        items.push(pair);
    }

    Ok(Dataset {
        dataset_id: manifest.dataset_id.clone(),
        language: manifest.language,
        scale_min: manifest.scale_min,
        scale_max: manifest.scale_max,
        items,
    })
}

fn validate_pair(pair: &SentencePair, manifest: &DatasetManifest) -> Result<(), CorpusError> {
    let id = &pair.pair_id;
    if pair.language != manifest.language {
        return Err(CorpusError::LanguageMismatch {
            pair_id: id.clone(),
            expected: manifest.language,
            found: pair.language,
        });
    }
    if pair.sentence_a == pair.sentence_b {
        return Err(CorpusError::IdenticalSentences { pair_id: id.clone() });
    }
    let fold = manifest.case_insensitive;
    for (which, sentence) in [('a', &pair.sentence_a), ('b', &pair.sentence_b)] {
        if !contains_word(sentence, &pair.target_word, fold) {
            return Err(CorpusError::TargetNotInSentence {
                pair_id: id.clone(),
                which,
                target: pair.target_word.clone(),
            });
        }
    }
    for (which, sentence, cue) in
        [('a', &pair.sentence_a, &pair.cue_a), ('b', &pair.sentence_b, &pair.cue_b)]
    {
        if !contains_word(sentence, cue, fold) {
            return Err(CorpusError::CueNotInSentence { pair_id: id.clone(), which, cue: cue.clone() });
        }
    }
    let v = pair.relatedness_mean;
    if !(v.is_finite() && v >= manifest.scale_min && v <= manifest.scale_max) {
        return Err(CorpusError::ScaleViolation {
            pair_id: id.clone(),
            value: v,
            min: manifest.scale_min,
            max: manifest.scale_max,
        });
    }
    Ok(())
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '’'
}

/// Splits a sentence into words, dropping whitespace and punctuation.
pub fn words(sentence: &str) -> Vec<&str> {
    sentence.split(|c: char| !is_word_char(c)).filter(|w| !w.is_empty()).collect()
}

/// Whole-word containment. `needle` may span several words.
pub fn contains_word(sentence: &str, needle: &str, case_insensitive: bool) -> bool {
    let norm = |s: &str| if case_insensitive { s.to_lowercase() } else { s.to_string() };
    let hay: Vec<String> = words(sentence).into_iter().map(norm).collect();
    let pat: Vec<String> = words(needle).into_iter().map(norm).collect();
    !pat.is_empty() && hay.windows(pat.len()).any(|w| w == pat.as_slice())
}

/// Recovers the single differing word of a minimal pair.
pub fn diff_cue(sentence_a: &str, sentence_b: &str) -> Result<(String, String), CorpusError> {
    let (wa, wb) = (words(sentence_a), words(sentence_b));
    let not_minimal = |differences| CorpusError::NotMinimalPair {
        differences,
        len_a: wa.len(),
        len_b: wb.len(),
    };
    if wa.len() != wb.len() {
        return Err(not_minimal(wa.len().abs_diff(wb.len()).max(1)));
    }
    let diffs: Vec<usize> = (0..wa.len()).filter(|&i| wa[i] != wb[i]).collect();
    match diffs.as_slice() {
        [i] => Ok((wa[*i].to_string(), wb[*i].to_string())),
        other => Err(not_minimal(other.len())),
    }
}

/// Serializes a dataset with canonical column names, in field order.
pub fn to_canonical_csv(dataset: &Dataset) -> Result<Vec<u8>, CorpusError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CanonicalField::ALL.iter().map(|f| f.name()))?;
    for p in &dataset.items {
        writer.write_record([
            p.pair_id.clone(),
            p.target_word.clone(),
            p.language.to_string(),
            p.sentence_a.clone(),
            p.sentence_b.clone(),
            p.cue_a.clone(),
            p.cue_b.clone(),
            p.relatedness_mean.to_string(),
            p.relatedness_sd.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.into_inner().map_err(|e| CorpusError::Csv(e.into_error().into()))
}
