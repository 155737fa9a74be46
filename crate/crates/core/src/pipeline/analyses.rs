//! The regression analyses run over the layer and sentence tables.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::{LayerRecord, SentenceRow};
use crate::error::{Error, Result};
use crate::stats::{compare_aic, fit_lmm, ols_multiple, FitOptions, MixedModelSpec};
use crate::{AicLadder, LmmFit, OlsMultiFit, Table};

/// Observation grain of the attention regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grain {
    #[default]
    Sentence,
    Layer,
}

/// Level set of the per-model random intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptGrouping {
    #[default]
    Model,
    /// One intercept per (model, language) cell.
    ModelLanguage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub standardize: bool,
    pub grouping: InterceptGrouping,
    pub grain: Grain,
    /// Fit independent models on the rayon pool.
    pub parallel: bool,
}

impl AnalysisOptions {
    fn fit_options(&self) -> FitOptions<f64> {
        FitOptions { standardize: self.standardize, ..FitOptions::default() }
    }

    fn group(&self, model_id: &str, language: crate::corpus::Language) -> String {
        match self.grouping {
            InterceptGrouping::Model => model_id.to_string(),
            InterceptGrouping::ModelLanguage => format!("{model_id}/{language}"),
        }
    }
}

pub const LADDER_BASELINE: &str = "baseline";
pub const LADDER_MULTILINGUAL: &str = "+multilingual";
pub const LADDER_CI: &str = "+ci";
pub const LADDER_ATTENTION: &str = "+attention";
pub const LADDER_TOKENS: &str = "+tokens";
pub const LADDER_FULL: &str = "+ci+attention+tokens";
pub const LADDER_FULL_MULTILINGUAL: &str = "+ci+attention+tokens+multilingual";

fn level(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn fit(table: &Table, spec: &MixedModelSpec, opts: &AnalysisOptions) -> Result<LmmFit> {
    let fit = fit_lmm(table, spec, &opts.fit_options())?;
    if !fit.converged {
        warn!("fit of {} did not converge after {} iterations", spec.response, fit.iterations);
    }
    Ok(fit)
}

/// Numeric and categorical columns of the layer grain. Missing metric
/// values become NaN, which the design builder rejects if a model uses them.
pub fn layer_table(rows: &[&LayerRecord], opts: &AnalysisOptions) -> Result<Table> {
    let num = |f: &dyn Fn(&LayerRecord) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let mut t = Table::new();
    t.push_numeric("r2", num(&|r| r.r2))?;
    t.push_numeric("depth", num(&|r| r.depth))?;
    t.push_numeric("log_params", num(&|r| r.log_params))?;
    t.push_categorical("language", rows.iter().map(|r| r.language.as_str()))?;
    t.push_categorical("multilingual", rows.iter().map(|r| level(r.multilingual)))?;
    t.push_categorical("model", rows.iter().map(|r| opts.group(&r.model_id, r.language)))?;
    t.push_numeric("mean_ci", num(&|r| opt(r.mean_ci)))?;
    t.push_numeric("mean_attn", num(&|r| opt(r.mean_attn)))?;
    t.push_numeric("max_attn", num(&|r| opt(r.max_attn)))?;
    t.push_numeric("cum_max_attn", num(&|r| opt(r.cum_max_attn)))?;
    t.push_numeric("mean_target_tokens", num(&|r| r.mean_target_tokens))?;
    t.push_numeric("mean_cue_tokens", num(&|r| r.mean_cue_tokens))?;
    Ok(t)
}

pub fn sentence_table(rows: &[&SentenceRow], opts: &AnalysisOptions) -> Result<Table> {
    let num = |f: &dyn Fn(&SentenceRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let mut t = Table::new();
    t.push_numeric("depth", num(&|r| r.depth))?;
    t.push_numeric("log_params", num(&|r| r.log_params))?;
    t.push_categorical("language", rows.iter().map(|r| r.language.as_str()))?;
    t.push_categorical("multilingual", rows.iter().map(|r| level(r.multilingual)))?;
    t.push_categorical("model", rows.iter().map(|r| opts.group(&r.model_id, r.language)))?;
    t.push_categorical("target_word", rows.iter().map(|r| r.target_word.to_lowercase()))?;
    t.push_categorical("sentence", rows.iter().map(|r| r.sentence_id.as_str()))?;
    t.push_numeric("ci", num(&|r| opt(r.ci)))?;
    t.push_numeric("attn_mean", num(&|r| opt(r.attn_mean)))?;
    t.push_numeric("attn_max", num(&|r| opt(r.attn_max)))?;
    t.push_numeric("target_tokens", num(&|r| r.target_tokens as f64))?;
    t.push_numeric("cue_tokens", num(&|r| r.cue_tokens as f64))?;
    Ok(t)
}

/// Distinct multilingual and monolingual model ids.
pub fn model_counts(layers: &[LayerRecord]) -> (usize, usize) {
    let mut multi = BTreeSet::new();
    let mut mono = BTreeSet::new();
    for r in layers {
        if r.multilingual {
            multi.insert(r.model_id.as_str());
        } else {
            mono.insert(r.model_id.as_str());
        }
    }
    (multi.len(), mono.len())
}

fn require_roster(layers: &[LayerRecord]) -> Result<()> {
    let (multilingual, monolingual) = model_counts(layers);
    if multilingual < 2 || monolingual < 2 {
        return Err(Error::InsufficientModels { multilingual, monolingual });
    }
    Ok(())
}

pub fn penalty_spec() -> MixedModelSpec {
    MixedModelSpec::new("r2").fixed(&["depth", "log_params", "language", "multilingual"]).random(&["model"])
}

/// `r2 ~ depth + log_params + language + multilingual + (1|model)`.
pub fn run_penalty_analysis(layers: &[LayerRecord], opts: &AnalysisOptions) -> Result<LmmFit> {
    require_roster(layers)?;
    let rows: Vec<&LayerRecord> = layers.iter().collect();
    fit(&layer_table(&rows, opts)?, &penalty_spec(), opts)
}

pub fn isotropy_spec() -> MixedModelSpec {
    MixedModelSpec::new("ci")
        .fixed(&["depth", "multilingual", "language", "log_params"])
        .interaction("depth", "multilingual")
        .random(&["target_word", "model"])
}

/// `ci ~ depth × multilingual + language + log_params + (1|target_word) + (1|model)`
/// over sentences with a defined CI.
pub fn run_isotropy_analysis(
    layers: &[LayerRecord],
    rows: &[SentenceRow],
    opts: &AnalysisOptions,
) -> Result<LmmFit> {
    require_roster(layers)?;
    let used: Vec<&SentenceRow> = rows.iter().filter(|r| r.ci.is_some()).collect();
    fit(&sentence_table(&used, opts)?, &isotropy_spec(), opts)
}

pub fn attention_spec(response: &str) -> MixedModelSpec {
    MixedModelSpec::new(response)
        .fixed(&["depth", "multilingual", "language", "log_params"])
        .interaction("multilingual", "language")
        .random(&["model"])
}

/// `attn_max ~ depth + multilingual × language + log_params + (1|model)` at
/// the requested grain; layer 0 carries no attention and is skipped.
pub fn run_attention_analysis(
    layers: &[LayerRecord],
    rows: &[SentenceRow],
    grain: Grain,
    opts: &AnalysisOptions,
) -> Result<LmmFit> {
    require_roster(layers)?;
    match grain {
        Grain::Sentence => {
            let used: Vec<&SentenceRow> = rows.iter().filter(|r| r.attn_max.is_some()).collect();
            fit(&sentence_table(&used, opts)?, &attention_spec("attn_max"), opts)
        }
        Grain::Layer => {
            let used: Vec<&LayerRecord> = layers.iter().filter(|r| r.max_attn.is_some()).collect();
            fit(&layer_table(&used, opts)?, &attention_spec("max_attn"), opts)
        }
    }
}

pub fn token_spec(response: &str) -> MixedModelSpec {
    MixedModelSpec::new(response)
        .fixed(&["multilingual", "language", "log_params"])
        .random(&["model", "target_word", "sentence"])
}

/// One row per (sentence, model): the record at each model's first probed
/// layer, since token counts do not vary with depth.
pub fn token_rows(rows: &[SentenceRow]) -> Vec<&SentenceRow> {
    let mut first: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in rows {
        let e = first.entry((r.model_id.as_str(), r.dataset_id.as_str())).or_insert(r.layer);
        *e = (*e).min(r.layer);
    }
    rows.iter().filter(|r| first[&(r.model_id.as_str(), r.dataset_id.as_str())] == r.layer).collect()
}

/// Target and cue token-count models.
pub fn run_token_analysis(
    layers: &[LayerRecord],
    rows: &[SentenceRow],
    opts: &AnalysisOptions,
) -> Result<(LmmFit, LmmFit)> {
    require_roster(layers)?;
    let table = sentence_table(&token_rows(rows), opts)?;
    let target = fit(&table, &token_spec("target_tokens"), opts)?;
    let cue = fit(&table, &token_spec("cue_tokens"), opts)?;
    Ok((target, cue))
}

/// Candidate specifications of the factor ladder, baseline first.
pub fn ladder_specs() -> Vec<(&'static str, MixedModelSpec)> {
    let base = ["log_params", "depth"];
    let with = |extra: &[&str]| {
        let terms: Vec<&str> = base.iter().chain(extra).copied().collect();
        MixedModelSpec::new("r2").fixed(&terms).random(&["model"])
    };
    vec![
        (LADDER_BASELINE, with(&[])),
        (LADDER_MULTILINGUAL, with(&["multilingual"])),
        (LADDER_CI, with(&["mean_ci"])),
        (LADDER_ATTENTION, with(&["cum_max_attn"])),
        (LADDER_TOKENS, with(&["mean_target_tokens"])),
        (LADDER_FULL, with(&["mean_ci", "cum_max_attn", "mean_target_tokens"])),
        (LADDER_FULL_MULTILINGUAL, with(&["mean_ci", "cum_max_attn", "mean_target_tokens", "multilingual"])),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLadder {
    pub ladder: AicLadder,
    /// Every candidate fit, in candidate order.
    pub fits: Vec<(String, LmmFit)>,
}

impl FactorLadder {
    /// The three-factor model.
    pub fn full(&self) -> &LmmFit {
        &self.fits.iter().find(|(l, _)| l == LADDER_FULL).expect("full candidate present").1
    }
}

/// Fits every ladder candidate on the layer rows where all three factors
/// are defined and rescales AIC to the baseline.
pub fn run_factor_ladder(layers: &[LayerRecord], opts: &AnalysisOptions) -> Result<FactorLadder> {
    let rows: Vec<&LayerRecord> =
        layers.iter().filter(|r| r.mean_ci.is_some() && r.cum_max_attn.is_some()).collect();
    let table = layer_table(&rows, opts)?;
    let specs = ladder_specs();
    let fit_one = |(label, spec): &(&str, MixedModelSpec)| -> Result<(String, LmmFit)> {
        Ok((label.to_string(), fit(&table, spec, opts)?))
    };
    let fits: Vec<(String, LmmFit)> = if opts.parallel {
        specs.par_iter().map(fit_one).collect::<Result<_>>()?
    } else {
        specs.iter().map(fit_one).collect::<Result<_>>()?
    };
    let ladder = compare_aic(&fits, 0)?;
    Ok(FactorLadder { ladder, fits })
}

/// Best layer R² of one (model, dataset) trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxR2Row {
    pub model_id: String,
    pub dataset_id: String,
    pub language: crate::corpus::Language,
    pub multilingual: bool,
    pub log_params: f64,
    pub max_r2: f64,
    pub best_layer: usize,
}

pub fn max_r2_rows(layers: &[LayerRecord]) -> Vec<MaxR2Row> {
    let mut cells: BTreeMap<(&str, &str), MaxR2Row> = BTreeMap::new();
    for r in layers {
        let row = cells.entry((r.model_id.as_str(), r.dataset_id.as_str())).or_insert_with(|| MaxR2Row {
            model_id: r.model_id.clone(),
            dataset_id: r.dataset_id.clone(),
            language: r.language,
            multilingual: r.multilingual,
            log_params: r.log_params,
            max_r2: r.r2,
            best_layer: r.layer,
        });
        if r.r2 > row.max_r2 {
            row.max_r2 = r.r2;
            row.best_layer = r.layer;
        }
    }
    cells.into_values().collect()
}

/// `max_r2 ~ log_params + language + multilingual` by least squares over
/// (model, dataset) cells.
pub fn run_max_r2_analysis(layers: &[LayerRecord], opts: &AnalysisOptions) -> Result<OlsMultiFit> {
    let rows = max_r2_rows(layers);
    let models: BTreeSet<&str> = rows.iter().map(|r| r.model_id.as_str()).collect();
    if models.len() < 2 {
        return Err(Error::InsufficientPairs { got: rows.len(), needed: 2 });
    }
    let t = Table::new()
        .with_numeric("max_r2", rows.iter().map(|r| r.max_r2).collect())?
        .with_numeric("log_params", rows.iter().map(|r| r.log_params).collect())?
        .with_categorical("language", rows.iter().map(|r| r.language.as_str()))?
        .with_categorical("multilingual", rows.iter().map(|r| level(r.multilingual)))?;
    let spec = MixedModelSpec::new("max_r2").fixed(&["log_params", "language", "multilingual"]);
    Ok(ols_multiple(&t, &spec, opts.standardize)?)
}

/// Output of one named analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnalysisOutput {
    Lmm(Box<LmmFit>),
    Ols(Box<OlsMultiFit>),
    Ladder(Box<FactorLadder>),
}

/// Serializable account of a failed analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisFailure {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for AnalysisFailure {
    fn from(e: &Error) -> Self {
        Self { kind: e.kind().to_string(), message: e.to_string(), exit_code: e.exit_code() }
    }
}

pub struct AnalysisOutcome {
    pub name: String,
    pub result: std::result::Result<AnalysisOutput, AnalysisFailure>,
}

type Job<'a> = Box<dyn Fn() -> Result<Vec<(String, AnalysisOutput)>> + Send + Sync + 'a>;

fn lmm_job<'a>(name: &'static str, f: impl Fn() -> Result<LmmFit> + Send + Sync + 'a) -> (Vec<&'static str>, Job<'a>) {
    (vec![name], Box::new(move || Ok(vec![(name.to_string(), AnalysisOutput::Lmm(Box::new(f()?)))])))
}

/// Runs every analysis; failures are reported per analysis rather than
/// aborting the others.
pub fn run_all(layers: &[LayerRecord], rows: &[SentenceRow], opts: &AnalysisOptions) -> Vec<AnalysisOutcome> {
    let (other, other_name) = match opts.grain {
        Grain::Sentence => (Grain::Layer, "attention_by_layer"),
        Grain::Layer => (Grain::Sentence, "attention_by_sentence"),
    };
    let jobs: Vec<(Vec<&'static str>, Job)> = vec![
        lmm_job("penalty", || run_penalty_analysis(layers, opts)),
        lmm_job("isotropy", || run_isotropy_analysis(layers, rows, opts)),
        lmm_job("attention", || run_attention_analysis(layers, rows, opts.grain, opts)),
        lmm_job(other_name, move || run_attention_analysis(layers, rows, other, opts)),
        (
            vec!["tokens_target", "tokens_cue"],
            Box::new(|| {
                let (t, c) = run_token_analysis(layers, rows, opts)?;
                Ok(vec![
                    ("tokens_target".to_string(), AnalysisOutput::Lmm(Box::new(t))),
                    ("tokens_cue".to_string(), AnalysisOutput::Lmm(Box::new(c))),
                ])
            }),
        ),
        (
            vec!["factor_ladder"],
            Box::new(|| {
                let ladder = run_factor_ladder(layers, opts)?;
                Ok(vec![("factor_ladder".to_string(), AnalysisOutput::Ladder(Box::new(ladder)))])
            }),
        ),
        (
            vec!["max_r2"],
            Box::new(|| {
                let fit = run_max_r2_analysis(layers, opts)?;
                Ok(vec![("max_r2".to_string(), AnalysisOutput::Ols(Box::new(fit)))])
            }),
        ),
    ];
    let results: Vec<Result<Vec<(String, AnalysisOutput)>>> = if opts.parallel {
        jobs.par_iter().map(|(_, job)| job()).collect()
    } else {
        jobs.iter().map(|(_, job)| job()).collect()
    };
    let mut out = Vec::new();
    for ((names, _), res) in jobs.iter().zip(results) {
        match res {
            Ok(items) => out.extend(items.into_iter().map(|(name, o)| AnalysisOutcome { name, result: Ok(o) })),
            Err(e) => {
                warn!("analysis {} failed: {e}", names.join("/"));
                let failure = AnalysisFailure::from(&e);
                out.extend(names.iter().map(|n| AnalysisOutcome { name: n.to_string(), result: Err(failure.clone()) }));
            }
        }
    }
    out
}
