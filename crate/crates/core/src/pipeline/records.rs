//! Row types of the analysis tables and their CSV encoding.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};

/// All metrics for one (model, dataset, layer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub model_id: String,
    pub dataset_id: String,
    pub language: Language,
    pub multilingual: bool,
    pub log_params: f64,
    pub layer: usize,
    pub depth: f64,
    pub r2: f64,
    pub mean_ci: Option<f64>,
    pub mean_mcd: Option<f64>,
    pub mean_iss: Option<f64>,
    pub mean_attn: Option<f64>,
    pub max_attn: Option<f64>,
    pub cum_max_attn: Option<f64>,
    pub mean_target_tokens: f64,
    pub mean_cue_tokens: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn as_char(self) -> char {
        match self {
            Side::A => 'a',
            Side::B => 'b',
        }
    }
}

/// Metrics for one sentence of one model at one layer. Missing isotropy
/// values mark sentences excluded from isotropy aggregation; missing
/// attention values mark the embedding layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceLayerRecord {
    pub pair_id: String,
    pub sentence: Side,
    pub model_id: String,
    pub dataset_id: String,
    pub layer: usize,
    pub ci: Option<f64>,
    pub mcd: Option<f64>,
    pub iss: Option<f64>,
    pub attn_mean: Option<f64>,
    pub attn_max: Option<f64>,
    pub attn_cum_max: Option<f64>,
    pub target_tokens: usize,
    pub cue_tokens: usize,
}

/// Sentence-grain observation joined with model and item covariates; the
/// input of the sentence-grain regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRow {
    pub sentence_id: String,
    pub model_id: String,
    pub dataset_id: String,
    pub target_word: String,
    pub language: Language,
    pub multilingual: bool,
    pub log_params: f64,
    pub layer: usize,
    pub depth: f64,
    pub ci: Option<f64>,
    pub attn_mean: Option<f64>,
    pub attn_max: Option<f64>,
    pub target_tokens: usize,
    pub cue_tokens: usize,
}

/// Joins sentence records with their layer cell and the dataset items.
/// `target_words` maps `(dataset_id, pair_id)` to the target word.
pub fn join_sentence_rows(
    layers: &[LayerRecord],
    sentences: &[SentenceLayerRecord],
    target_words: &BTreeMap<(String, String), String>,
) -> Result<Vec<SentenceRow>> {
    let cells: BTreeMap<(&str, &str, usize), &LayerRecord> = layers
        .iter()
        .map(|r| ((r.model_id.as_str(), r.dataset_id.as_str(), r.layer), r))
        .collect();
    sentences
        .iter()
        .map(|s| {
            let cell = cells
                .get(&(s.model_id.as_str(), s.dataset_id.as_str(), s.layer))
                .ok_or_else(|| {
                    Error::GrainMismatch(format!(
                        "no layer record for {} / {} / layer {}",
                        s.model_id, s.dataset_id, s.layer
                    ))
                })?;
            let target_word = target_words
                .get(&(s.dataset_id.clone(), s.pair_id.clone()))
                .ok_or_else(|| Error::GrainMismatch(format!("unknown pair {} in {}", s.pair_id, s.dataset_id)))?;
            Ok(SentenceRow {
                sentence_id: format!("{}/{}#{}", s.dataset_id, s.pair_id, s.sentence.as_char()),
                model_id: s.model_id.clone(),
                dataset_id: s.dataset_id.clone(),
                target_word: target_word.clone(),
                language: cell.language,
                multilingual: cell.multilingual,
                log_params: cell.log_params,
                layer: s.layer,
                depth: cell.depth,
                ci: s.ci,
                attn_mean: s.attn_mean,
                attn_max: s.attn_max,
                target_tokens: s.target_tokens,
                cue_tokens: s.cue_tokens,
            })
        })
        .collect()
}

pub const LAYER_HEADER: &str = "model_id,dataset_id,language,multilingual,log_params,layer,depth,r2,\
mean_ci,mean_mcd,mean_iss,mean_attn,max_attn,cum_max_attn,mean_target_tokens,mean_cue_tokens";

pub const SENTENCE_HEADER: &str = "pair_id,sentence,model_id,dataset_id,layer,ci,mcd,iss,\
attn_mean,attn_max,attn_cum_max,target_tokens,cue_tokens";

/// Serializes rows with a header; `header` is used verbatim when `rows` is
/// empty.
pub fn to_csv<R: Serialize>(rows: &[R], header: &str) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Ok(format!("{header}\n").into_bytes());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

pub fn from_csv<R: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    from_csv(&bytes)
}
