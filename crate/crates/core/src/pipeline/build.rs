use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Array4, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::{LayerRecord, SentenceLayerRecord, Side};
use crate::attention::AttentionToCue;
use crate::corpus::{Dataset, SentencePair};
use crate::error::{Error, Result};
use crate::geometry::{cosine_distance, isotropy_scores, pool, GeometryError};
use crate::stats::ols_simple;
use crate::trace::{sentence_uid, ActivationTrace, SentenceTraceHeader, TraceDir, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Probe the embedding-layer output (layer 0) as well as layers 1..=L.
    pub include_embedding_layer: bool,
    /// Keep special tokens in isotropy computations.
    pub include_specials: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { include_embedding_layer: true, include_specials: false }
    }
}

/// Input/used/dropped counts with per-reason breakdown.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub input: usize,
    pub used: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl DropCounts {
    fn used(&mut self) {
        self.input += 1;
        self.used += 1;
    }

    fn drop(&mut self, reason: &str) {
        self.input += 1;
        *self.dropped.entry(reason.to_string()).or_default() += 1;
    }

    pub fn n_dropped(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn is_conserved(&self) -> bool {
        self.input == self.used + self.n_dropped()
    }

    fn merge(&mut self, other: &DropCounts) {
        self.input += other.input;
        self.used += other.used;
        for (k, v) in &other.dropped {
            *self.dropped.entry(k.clone()).or_default() += v;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    /// Dataset pairs per traced (model, dataset) cell.
    pub pairs: DropCounts,
    /// Pair × layer observations entering the R² regressions.
    pub r2_observations: DropCounts,
    /// Sentence × layer observations entering isotropy aggregation.
    pub isotropy_observations: DropCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTable {
    pub layers: Vec<LayerRecord>,
    pub sentences: Vec<SentenceLayerRecord>,
    pub report: RunReport,
}

/// Traces of both sentences of one pair, converted to analysis precision.
#[derive(Debug, Clone)]
pub struct PairTraces {
    pub pair_id: String,
    pub relatedness: f64,
    pub a: SentenceTensors,
    pub b: SentenceTensors,
}

#[derive(Debug, Clone)]
pub struct SentenceTensors {
    pub header: SentenceTraceHeader,
    pub hidden: Array3<f64>,
    pub attention: Array4<f64>,
}

impl From<ActivationTrace> for SentenceTensors {
    fn from(t: ActivationTrace) -> Self {
        Self {
            header: t.header,
            hidden: t.hidden.mapv(f64::from),
            attention: t.attention.mapv(f64::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerR2 {
    pub r2: f64,
    pub used: usize,
    pub dropped_degenerate: usize,
}

/// R² of relatedness regressed on the cosine distance between the pooled
/// target embeddings of the two sentences, at probe point `layer`.
pub fn layer_r2(pairs: &[PairTraces], layer: usize) -> Result<LayerR2> {
    let mut dist = Vec::with_capacity(pairs.len());
    let mut rel = Vec::with_capacity(pairs.len());
    let mut dropped = 0;
    for p in pairs {
        let d = pool(p.a.hidden.index_axis(Axis(0), layer), p.a.header.target_span).and_then(|ea| {
            let eb = pool(p.b.hidden.index_axis(Axis(0), layer), p.b.header.target_span)?;
            cosine_distance(ea.vector.view(), eb.vector.view())
        });
        match d {
            Ok(d) => {
                dist.push(d);
                rel.push(p.relatedness);
            }
            Err(GeometryError::DegenerateVector) => dropped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if dist.len() < 3 {
        return Err(Error::InsufficientPairs { got: dist.len(), needed: 3 });
    }
    let fit = ols_simple(&dist, &rel)?;
    Ok(LayerR2 { r2: fit.r_squared, used: dist.len(), dropped_degenerate: dropped })
}

/// Trace directories under `root`: `root` itself when it holds a manifest,
/// otherwise each immediate subdirectory in name order.
pub fn discover_trace_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = std::fs::read_dir(root)
        .map_err(|_| Error::MissingTrace(format!("trace root {} not readable", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingTrace(format!("no trace directories under {}", root.display())));
    }
    for d in &dirs {
        if !d.join(MANIFEST_FILE).is_file() {
            return Err(Error::MissingTrace(format!("{} has no {MANIFEST_FILE}", d.display())));
        }
    }
    Ok(dirs)
}

struct SentenceLayerMetrics {
    iso: std::result::Result<(f64, f64, f64), &'static str>,
    attn: Option<(f64, f64, f64)>,
}

fn sentence_metrics(
    s: &SentenceTensors,
    probe_layers: &[usize],
    opts: MetricOptions,
) -> Result<Vec<SentenceLayerMetrics>> {
    let h = &s.header;
    let keep: Vec<usize> = (0..h.n_tokens).filter(|&i| opts.include_specials || !h.special_mask[i]).collect();
    let layers = s.attention.dim().0;
    let heads = s.attention.dim().1;
    let attn = AttentionToCue::compute(layers, heads, h.target_span, h.cue_span, |l, hd| {
        s.attention.slice(ndarray::s![l, hd, .., ..])
    })?;
    probe_layers
        .iter()
        .map(|&layer| {
            let rows: Array2<f64> = s.hidden.index_axis(Axis(0), layer).select(Axis(0), &keep);
            let iso = match isotropy_scores(rows.view()) {
                Ok(sc) => Ok((sc.ci, sc.mcd, sc.iss)),
                Err(GeometryError::TooFewTokens { .. }) => Err("too_few_tokens"),
                Err(GeometryError::DegenerateVector) => Err("degenerate_embedding"),
                Err(e) => return Err(e.into()),
            };
            let attn = (layer >= 1).then(|| {
                (attn.layer_mean[layer - 1], attn.layer_max[layer - 1], attn.cum_max[layer - 1])
            });
            Ok(SentenceLayerMetrics { iso, attn })
        })
        .collect()
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn load_pair(td: &TraceDir, pair: &SentencePair) -> Result<Option<PairTraces>> {
    let (ua, ub) = (sentence_uid(&pair.pair_id, 'a'), sentence_uid(&pair.pair_id, 'b'));
    if !td.contains(&ua) || !td.contains(&ub) {
        return Ok(None);
    }
    Ok(Some(PairTraces {
        pair_id: pair.pair_id.clone(),
        relatedness: pair.relatedness_mean,
        a: td.read(&ua)?.into(),
        b: td.read(&ub)?.into(),
    }))
}

/// Metrics for one traced (model, dataset) cell.
pub fn build_cell(td: &TraceDir, dataset: &Dataset, opts: MetricOptions) -> Result<AnalysisTable> {
    let model = &td.manifest.model;
    if !model.evaluates(dataset.language) {
        return Err(Error::GrainMismatch(format!(
            "monolingual model {} traced on {} dataset {}",
            model.model_id, dataset.language, dataset.dataset_id
        )));
    }
    let mut report = RunReport::default();
    let loaded: Vec<Option<PairTraces>> =
        dataset.items.par_iter().map(|p| load_pair(td, p)).collect::<Result<_>>()?;
    for p in &loaded {
        match p {
            Some(_) => report.pairs.used(),
            None => report.pairs.drop("missing_trace"),
        }
    }
    let pairs: Vec<PairTraces> = loaded.into_iter().flatten().collect();

    let n_layers = model.num_layers;
    let first = if opts.include_embedding_layer { 0 } else { 1 };
    let probe_layers: Vec<usize> = (first..=n_layers).collect();

    let per_pair: Vec<[Vec<SentenceLayerMetrics>; 2]> = pairs
        .par_iter()
        .map(|p| Ok([sentence_metrics(&p.a, &probe_layers, opts)?, sentence_metrics(&p.b, &probe_layers, opts)?]))
        .collect::<Result<_>>()?;

    let mut sentences = Vec::with_capacity(pairs.len() * 2 * probe_layers.len());
    for (p, metrics) in pairs.iter().zip(&per_pair) {
        for (side, (tensors, m)) in [(Side::A, (&p.a, &metrics[0])), (Side::B, (&p.b, &metrics[1]))] {
            for (&layer, lm) in probe_layers.iter().zip(m) {
                match lm.iso {
                    Ok(_) => report.isotropy_observations.used(),
                    Err(reason) => report.isotropy_observations.drop(reason),
                }
                let iso = lm.iso.ok();
                sentences.push(SentenceLayerRecord {
                    pair_id: p.pair_id.clone(),
                    sentence: side,
                    model_id: model.model_id.clone(),
                    dataset_id: dataset.dataset_id.clone(),
                    layer,
                    ci: iso.map(|v| v.0),
                    mcd: iso.map(|v| v.1),
                    iss: iso.map(|v| v.2),
                    attn_mean: lm.attn.map(|v| v.0),
                    attn_max: lm.attn.map(|v| v.1),
                    attn_cum_max: lm.attn.map(|v| v.2),
                    target_tokens: tensors.header.target_tokens(),
                    cue_tokens: tensors.header.cue_tokens(),
                });
            }
        }
    }

    let r2s: Vec<LayerR2> = probe_layers.par_iter().map(|&l| layer_r2(&pairs, l)).collect::<Result<_>>()?;
    let mut layers = Vec::with_capacity(probe_layers.len());
    for (&layer, r2) in probe_layers.iter().zip(&r2s) {
        report.r2_observations.input += r2.used + r2.dropped_degenerate;
        report.r2_observations.used += r2.used;
        if r2.dropped_degenerate > 0 {
            *report.r2_observations.dropped.entry("degenerate_embedding".into()).or_default() +=
                r2.dropped_degenerate;
        }
        let rows: Vec<&SentenceLayerRecord> = sentences.iter().filter(|s| s.layer == layer).collect();
        layers.push(aggregate_cell(
            model.model_id.clone(),
            dataset,
            model.multilingual,
            model.log_params(),
            layer,
            layer as f64 / n_layers as f64,
            r2.r2,
            &rows,
        ));
    }
    Ok(AnalysisTable { layers, sentences, report })
}

/// Layer-cell means over the cell's sentence records.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_cell(
    model_id: String,
    dataset: &Dataset,
    multilingual: bool,
    log_params: f64,
    layer: usize,
    depth: f64,
    r2: f64,
    rows: &[&SentenceLayerRecord],
) -> LayerRecord {
    LayerRecord {
        model_id,
        dataset_id: dataset.dataset_id.clone(),
        language: dataset.language,
        multilingual,
        log_params,
        layer,
        depth,
        r2,
        mean_ci: mean_of(rows.iter().filter_map(|s| s.ci)),
        mean_mcd: mean_of(rows.iter().filter_map(|s| s.mcd)),
        mean_iss: mean_of(rows.iter().filter_map(|s| s.iss)),
        mean_attn: mean_of(rows.iter().filter_map(|s| s.attn_mean)),
        max_attn: mean_of(rows.iter().filter_map(|s| s.attn_max)),
        cum_max_attn: mean_of(rows.iter().filter_map(|s| s.attn_cum_max)),
        mean_target_tokens: mean_of(rows.iter().map(|s| s.target_tokens as f64)).unwrap_or(f64::NAN),
        mean_cue_tokens: mean_of(rows.iter().map(|s| s.cue_tokens as f64)).unwrap_or(f64::NAN),
    }
}

/// Builds both analysis grains from every trace directory.
pub fn build_analysis_table(
    trace_dirs: &[PathBuf],
    datasets: &[Dataset],
    opts: MetricOptions,
) -> Result<AnalysisTable> {
    let mut out = AnalysisTable { layers: Vec::new(), sentences: Vec::new(), report: RunReport::default() };
    for dir in trace_dirs {
        let td = TraceDir::open(dir).map_err(|e| match e {
            crate::trace::TraceError::MissingManifest(p) => Error::MissingTrace(p.display().to_string()),
            other => other.into(),
        })?;
        let ds = datasets.iter().find(|d| d.dataset_id == td.manifest.dataset_id).ok_or_else(|| {
            Error::Config(format!(
                "{} references dataset {} that is not configured",
                dir.display(),
                td.manifest.dataset_id
            ))
        })?;
        let cell = build_cell(&td, ds, opts)?;
        out.layers.extend(cell.layers);
        out.sentences.extend(cell.sentences);
        out.report.pairs.merge(&cell.report.pairs);
        out.report.r2_observations.merge(&cell.report.r2_observations);
        out.report.isotropy_observations.merge(&cell.report.isotropy_observations);
    }
    let mut seen = std::collections::BTreeSet::new();
    for r in &out.layers {
        if !seen.insert((r.model_id.clone(), r.dataset_id.clone(), r.layer)) {
            return Err(Error::GrainMismatch(format!(
                "model {} traced twice on dataset {}",
                r.model_id, r.dataset_id
            )));
        }
    }
    Ok(out)
}
