//! Seeded generators: metric tables with planted effects, and a small
//! self-consistent fixture of datasets plus activation traces.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_mapping, CanonicalField, ColumnMapping, DatasetManifest, Language, ModelMeta};
use crate::error::{Error, Result};
use crate::pipeline::{LayerRecord, SentenceRow};
use crate::trace::{sentence_uid, write_trace, ActivationTrace, SentenceTraceHeader, Span};

fn fnv(parts: &[&str], seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn rng_for(parts: &[&str], seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fnv(parts, seed))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A model of a simulated roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    pub model_id: String,
    pub multilingual: bool,
    pub log_params: f64,
    pub num_layers: usize,
    pub languages: Vec<Language>,
}

impl SimModel {
    fn dataset_id(lang: Language) -> String {
        format!("sim-{lang}")
    }
}

/// Multilingual models cover both languages; monolingual ones alternate
/// English and Spanish. Sizes spread over roughly 10^7.5 to 10^9.
pub fn sim_roster(n_multilingual: usize, n_monolingual: usize, rng: &mut ChaCha8Rng) -> Vec<SimModel> {
    let mut out = Vec::new();
    for i in 0..n_multilingual {
        out.push(SimModel {
            model_id: format!("multi-{i:02}"),
            multilingual: true,
            log_params: rng.gen_range(17.5..20.8),
            num_layers: if i % 2 == 0 { 12 } else { 6 },
            languages: vec![Language::English, Language::Spanish],
        });
    }
    for i in 0..n_monolingual {
        let lang = if i % 2 == 0 { Language::English } else { Language::Spanish };
        out.push(SimModel {
            model_id: format!("mono-{i:02}"),
            multilingual: false,
            log_params: rng.gen_range(17.5..20.8),
            num_layers: if i % 2 == 0 { 6 } else { 12 },
            languages: vec![lang],
        });
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn layer_record(
    m: &SimModel,
    lang: Language,
    layer: usize,
    r2: f64,
    ci: Option<f64>,
    attn: Option<(f64, f64, f64)>,
    target_tokens: f64,
    cue_tokens: f64,
) -> LayerRecord {
    LayerRecord {
        model_id: m.model_id.clone(),
        dataset_id: SimModel::dataset_id(lang),
        language: lang,
        multilingual: m.multilingual,
        log_params: m.log_params,
        layer,
        depth: layer as f64 / m.num_layers as f64,
        r2,
        mean_ci: ci,
        mean_mcd: ci.map(|c| c / 2.0),
        mean_iss: ci.map(|c| 1.0 - c / 2.0),
        mean_attn: attn.map(|a| a.0),
        max_attn: attn.map(|a| a.1),
        cum_max_attn: attn.map(|a| a.2),
        mean_target_tokens: target_tokens,
        mean_cue_tokens: cue_tokens,
    }
}

/// Layer table whose R² carries a direct multilingual deficit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySim {
    pub n_multilingual: usize,
    pub n_monolingual: usize,
    pub intercept: f64,
    pub deficit: f64,
    pub depth_effect: f64,
    pub size_effect: f64,
    pub spanish_effect: f64,
    pub model_sd: f64,
    pub noise_sd: f64,
}

impl Default for PenaltySim {
    fn default() -> Self {
        Self {
            n_multilingual: 4,
            n_monolingual: 4,
            intercept: -1.5,
            deficit: -0.1,
            depth_effect: 0.2,
            size_effect: 0.09,
            spanish_effect: -0.05,
            model_sd: 0.03,
            noise_sd: 0.04,
        }
    }
}

pub fn simulate_penalty_table(cfg: &PenaltySim, seed: u64) -> Vec<LayerRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roster = sim_roster(cfg.n_multilingual, cfg.n_monolingual, &mut rng);
    let mut out = Vec::new();
    for m in &roster {
        let u = cfg.model_sd * normal(&mut rng);
        for &lang in &m.languages {
            for layer in 0..=m.num_layers {
                let depth = layer as f64 / m.num_layers as f64;
                let spanish = f64::from(u8::from(lang == Language::Spanish));
                let r2 = cfg.intercept
                    + cfg.depth_effect * depth
                    + cfg.size_effect * m.log_params
                    + cfg.spanish_effect * spanish
                    + cfg.deficit * f64::from(u8::from(m.multilingual))
                    + u
                    + cfg.noise_sd * normal(&mut rng);
                let attn = (layer > 0).then_some((0.2, 0.4, 0.4));
                out.push(layer_record(m, lang, layer, r2, Some(0.8), attn, 1.3, 1.2));
            }
        }
    }
    out
}

/// Layer table where the multilingual flag shifts CI, cumulative maximum
/// attention and token fertility, and R² depends on those three alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationSim {
    pub n_multilingual: usize,
    pub n_monolingual: usize,
    /// Effects of the multilingual flag on the three factors.
    pub multi_on_ci: f64,
    pub multi_on_attention: f64,
    pub multi_on_tokens: f64,
    /// Effects of the three factors on R².
    pub ci_on_r2: f64,
    pub attention_on_r2: f64,
    pub tokens_on_r2: f64,
    pub factor_sd: f64,
    pub noise_sd: f64,
}

impl Default for MediationSim {
    fn default() -> Self {
        Self {
            n_multilingual: 4,
            n_monolingual: 4,
            multi_on_ci: -0.08,
            multi_on_attention: -0.06,
            multi_on_tokens: 0.35,
            ci_on_r2: 0.6,
            attention_on_r2: 0.3,
            tokens_on_r2: -0.25,
            factor_sd: 0.04,
            noise_sd: 0.02,
        }
    }
}

pub fn simulate_mediation_table(cfg: &MediationSim, seed: u64) -> Vec<LayerRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roster = sim_roster(cfg.n_multilingual, cfg.n_monolingual, &mut rng);
    let mut out = Vec::new();
    for m in &roster {
        let multi = f64::from(u8::from(m.multilingual));
        let fertility = 1.2 + cfg.multi_on_tokens * multi + cfg.factor_sd * normal(&mut rng);
        for &lang in &m.languages {
            let spanish = f64::from(u8::from(lang == Language::Spanish));
            let tokens = fertility + 0.1 * spanish + cfg.factor_sd * normal(&mut rng);
            let cue_tokens = tokens + 0.05 * normal(&mut rng);
            let mut cum = f64::NEG_INFINITY;
            for layer in 0..=m.num_layers {
                let depth = layer as f64 / m.num_layers as f64;
                let ci = 0.5 + 0.35 * depth + cfg.multi_on_ci * multi + cfg.factor_sd * normal(&mut rng);
                let attn = (layer > 0).then(|| {
                    let max = 0.15 + 0.25 * depth + cfg.multi_on_attention * multi * (0.5 + spanish)
                        + cfg.factor_sd * normal(&mut rng);
                    cum = cum.max(max);
                    (max * 0.6, max, cum)
                });
                let r2 = 0.2
                    + cfg.ci_on_r2 * ci
                    + cfg.attention_on_r2 * attn.map_or(0.0, |a| a.2)
                    + cfg.tokens_on_r2 * tokens
                    + cfg.noise_sd * normal(&mut rng);
                out.push(layer_record(m, lang, layer, r2, Some(ci), attn, tokens, cue_tokens));
            }
        }
    }
    out
}

/// Sentence-grain table with planted effects on CI, attention and token
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSim {
    pub n_multilingual: usize,
    pub n_monolingual: usize,
    pub pairs_per_language: usize,
    pub n_target_words: usize,
    pub ci_multi: f64,
    pub ci_depth_multi: f64,
    /// Multilingual × Spanish effect on maximum attention.
    pub attn_multi_spanish: f64,
    /// Multilingual shift in the probability of splitting a word.
    pub fertility_gap: f64,
    pub word_sd: f64,
    pub model_sd: f64,
    pub noise_sd: f64,
}

impl Default for SentenceSim {
    fn default() -> Self {
        Self {
            n_multilingual: 3,
            n_monolingual: 4,
            pairs_per_language: 12,
            n_target_words: 8,
            ci_multi: -0.02,
            ci_depth_multi: -0.05,
            attn_multi_spanish: -0.09,
            fertility_gap: 0.3,
            word_sd: 0.02,
            model_sd: 0.01,
            noise_sd: 0.03,
        }
    }
}

/// Layers are probed at four depths per model to keep tables small.
pub fn simulate_sentence_table(cfg: &SentenceSim, seed: u64) -> (Vec<LayerRecord>, Vec<SentenceRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roster = sim_roster(cfg.n_multilingual, cfg.n_monolingual, &mut rng);
    for m in &mut roster {
        m.num_layers = 4;
    }
    let word_ci: Vec<f64> = (0..cfg.n_target_words).map(|_| cfg.word_sd * normal(&mut rng)).collect();
    let word_split: Vec<f64> = (0..cfg.n_target_words).map(|_| rng.gen_range(0.0..0.3)).collect();
    let mut layers = Vec::new();
    let mut rows = Vec::new();
    for m in &roster {
        let multi = f64::from(u8::from(m.multilingual));
        let u_ci = cfg.model_sd * normal(&mut rng);
        let u_attn = cfg.model_sd * normal(&mut rng);
        for &lang in &m.languages {
            let spanish = f64::from(u8::from(lang == Language::Spanish));
            let dataset_id = SimModel::dataset_id(lang);
            let mut sentences = Vec::new();
            for p in 0..cfg.pairs_per_language {
                let w = p % cfg.n_target_words;
                let p_split = (word_split[w] + cfg.fertility_gap * multi).clamp(0.0, 1.0);
                let target_tokens = 1 + usize::from(rng.gen_bool(p_split));
                for side in ['a', 'b'] {
                    let cue_tokens = 1 + usize::from(rng.gen_bool((0.2 + cfg.fertility_gap * multi).min(1.0)));
                    sentences.push((format!("{dataset_id}/p{p:03}#{side}"), w, target_tokens, cue_tokens));
                }
            }
            for layer in 0..=m.num_layers {
                let depth = layer as f64 / m.num_layers as f64;
                let mut cell = Vec::new();
                for (sid, w, tt, ct) in &sentences {
                    let ci = 0.7 + 0.2 * depth + cfg.ci_multi * multi + cfg.ci_depth_multi * depth * multi
                        + 0.01 * spanish
                        + word_ci[*w]
                        + u_ci
                        + cfg.noise_sd * normal(&mut rng);
                    let attn_max = (layer > 0).then(|| {
                        0.3 + 0.1 * depth + 0.02 * spanish + cfg.attn_multi_spanish * multi * spanish
                            + u_attn
                            + cfg.noise_sd * normal(&mut rng)
                    });
                    cell.push(SentenceRow {
                        sentence_id: sid.clone(),
                        model_id: m.model_id.clone(),
                        dataset_id: dataset_id.clone(),
                        target_word: format!("word{w:02}"),
                        language: lang,
                        multilingual: m.multilingual,
                        log_params: m.log_params,
                        layer,
                        depth,
                        ci: Some(ci),
                        attn_mean: attn_max.map(|a| a * 0.5),
                        attn_max,
                        target_tokens: *tt,
                        cue_tokens: *ct,
                    });
                }
                let mean = |f: &dyn Fn(&SentenceRow) -> Option<f64>| {
                    let v: Vec<f64> = cell.iter().filter_map(f).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                };
                let ci = mean(&|r| r.ci);
                let attn = mean(&|r| r.attn_max).map(|a| (a * 0.5, a, a));
                let tt = mean(&|r| Some(r.target_tokens as f64)).unwrap_or(1.0);
                let ct = mean(&|r| Some(r.cue_tokens as f64)).unwrap_or(1.0);
                let r2 = 0.3 + 0.2 * depth - 0.1 * multi + 0.03 * normal(&mut rng);
                layers.push(layer_record(m, lang, layer, r2, ci, attn, tt, ct));
                rows.extend(cell);
            }
        }
    }
    (layers, rows)
}

// Toy fixture.

const ENGLISH_TEMPLATES: [&str; 3] =
    ["She liked the {c} {t}", "They noticed the {c} {t} yesterday", "He pointed at the {c} {t} again"];

const SPANISH_TEMPLATES: [&str; 3] = ["Ella vio el {t} {c}", "Ellos compraron el {t} {c} ayer", "Él encontró el {t} {c} hoy"];

const ENGLISH_ITEMS: [(&str, &str, &str, f64); 12] = [
    ("lamb", "marinated", "friendly", 1.6),
    ("bark", "rough", "loud", 1.3),
    ("bat", "wooden", "flying", 1.2),
    ("glass", "broken", "empty", 4.1),
    ("pitcher", "clay", "baseball", 1.4),
    ("band", "rubber", "jazz", 1.8),
    ("letter", "handwritten", "capital", 2.0),
    ("bank", "river", "savings", 1.5),
    ("seal", "wax", "harbor", 1.3),
    ("chicken", "roasted", "wild", 3.5),
    ("cap", "wool", "bottle", 2.6),
    ("ring", "diamond", "boxing", 1.7),
];

const SPANISH_ITEMS: [(&str, &str, &str, f64); 10] = [
    ("banco", "antiguo", "financiero", 1.4),
    ("gato", "negro", "hidráulico", 1.2),
    ("papel", "mojado", "principal", 2.9),
    ("cuello", "largo", "blanco", 3.8),
    ("pollo", "asado", "salvaje", 3.4),
    ("tipo", "raro", "alto", 2.2),
    ("disco", "duro", "rayado", 2.0),
    ("cabo", "suelto", "militar", 1.3),
    ("partido", "político", "largo", 1.6),
    ("corte", "limpio", "supremo", 1.5),
];

pub const TOY_SCALE: (f64, f64) = (1.0, 5.0);

/// One simulated tokenizer-plus-encoder.
#[derive(Debug, Clone)]
struct ToyModel {
    meta: ModelMeta,
}

fn toy_roster() -> Vec<ToyModel> {
    let mk = |id: &str, family: &str, multi: bool, params: u64, layers: usize, langs: &[Language]| ToyModel {
        meta: ModelMeta {
            model_id: id.into(),
            family: family.into(),
            multilingual: multi,
            param_count: params,
            num_layers: layers,
            num_heads: 2,
            hidden_dim: 8,
            languages: langs.iter().copied().collect::<BTreeSet<_>>(),
        },
    };
    use Language::{English, Spanish};
    vec![
        mk("toy-mono-en-small", "toybert", false, 11_000_000, 3, &[English]),
        mk("toy-mono-en-base", "toybert", false, 110_000_000, 4, &[English]),
        mk("toy-mono-es", "toybeto", false, 60_000_000, 3, &[Spanish]),
        mk("toy-multi-small", "toymbert", true, 40_000_000, 3, &[English, Spanish]),
        mk("toy-multi-base", "toymbert", true, 170_000_000, 4, &[English, Spanish]),
    ]
}

/// Subword pieces of `word` under the model's simulated tokenizer.
fn pieces(model: &ModelMeta, lang: Language, word: &str, seed: u64) -> Vec<String> {
    let lower = word.to_lowercase();
    let mut rng = rng_for(&[&model.family, &lower], seed);
    let p_split = match (model.multilingual, lang) {
        (false, _) => 0.15,
        (true, Language::English) => 0.45,
        (true, Language::Spanish) => 0.55,
    };
    let chars: Vec<char> = word.chars().collect();
    let mut k = 1 + usize::from(rng.gen_bool(p_split));
    if k == 2 && chars.len() >= 8 && rng.gen_bool(p_split / 2.0) {
        k = 3;
    }
    let k = k.min(chars.len());
    let step = chars.len().div_ceil(k);
    chars
        .chunks(step)
        .enumerate()
        .map(|(i, c)| {
            let s: String = c.iter().collect();
            if i == 0 {
                s
            } else {
                format!("##{s}")
            }
        })
        .collect()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    (0..d).map(|_| normal(rng)).collect()
}

struct ToySentence<'a> {
    uid: String,
    text: &'a str,
    target: &'a str,
    cue: &'a str,
}

#[allow(clippy::too_many_arguments)]
fn toy_trace(
    model: &ModelMeta,
    lang: Language,
    s: &ToySentence<'_>,
    pair_id: &str,
    sign: f64,
    rel_norm: f64,
    seed: u64,
) -> ActivationTrace {
    let (l_count, h_count, d) = (model.num_layers, model.num_heads, model.hidden_dim);
    let mut tokens = vec!["[CLS]".to_string()];
    let mut word_of = vec![None];
    let mut target_span = Span::new(0, 0);
    let mut cue_span = Span::new(0, 0);
    for w in crate::corpus::words(s.text) {
        let start = tokens.len();
        for p in pieces(model, lang, w, seed) {
            tokens.push(p);
            word_of.push(Some(w.to_lowercase()));
        }
        let span = Span::new(start, tokens.len());
        if w.eq_ignore_ascii_case(s.target) {
            target_span = span;
        } else if w.to_lowercase() == s.cue.to_lowercase() {
            cue_span = span;
        }
    }
    tokens.push("[SEP]".into());
    word_of.push(None);
    let n = tokens.len();
    let special_mask: Vec<bool> = word_of.iter().map(Option::is_none).collect();

    let multi = model.multilingual;
    let mut rng = rng_for(&[&model.model_id, &s.uid], seed);
    let bases: Vec<Array1<f64>> = tokens
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            let key = word_of[i].clone().unwrap_or_else(|| tok.clone());
            let mut wr = rng_for(&[&model.model_id, "word", &key], seed);
            let mut v = gaussian_vec(&mut wr, d);
            let mut pr = rng_for(&[&model.model_id, "piece", tok], seed);
            v.scaled_add(0.3, &gaussian_vec(&mut pr, d));
            v
        })
        .collect();
    let ctx = bases.iter().fold(Array1::<f64>::zeros(d), |acc, b| acc + b) / n as f64;
    let mut pr = rng_for(&[&model.model_id, "pair", pair_id], seed);
    let sense_dir = gaussian_vec(&mut pr, d);
    let gain = if multi { 1.2 } else { 2.5 };
    let noise = if multi { 0.35 } else { 0.15 };
    let collapse = if multi { 0.6 } else { 0.2 };
    let shared = gaussian_vec(&mut rng_for(&[&model.model_id, "shared"], seed), d);

    let mut hidden = Array3::<f32>::zeros((l_count + 1, n, d));
    for layer in 0..=l_count {
        let t = layer as f64 / l_count as f64;
        for i in 0..n {
            let mut v = &bases[i] * (1.0 - 0.5 * t) + &ctx * t;
            v.scaled_add(collapse * t * 2.0, &shared);
            if target_span.range().contains(&i) {
                v.scaled_add(t * gain * (1.0 - rel_norm) * sign, &sense_dir);
            }
            for x in v.iter_mut() {
                *x += noise * normal(&mut rng);
            }
            for (k, x) in v.iter().enumerate() {
                hidden[[layer, i, k]] = *x as f32;
            }
        }
    }

    let mut attention = Array4::<f32>::zeros((l_count, h_count, n, n));
    let spanish_drop = if multi && lang == Language::Spanish { 0.6 } else { 0.0 };
    for layer in 0..l_count {
        let t = (layer + 1) as f64 / l_count as f64;
        for head in 0..h_count {
            for i in 0..n {
                let logits: Vec<f64> = (0..n)
                    .map(|j| {
                        let mut z = 0.8 * normal(&mut rng);
                        if i == j {
                            z += 0.5;
                        }
                        if target_span.range().contains(&i) && cue_span.range().contains(&j) {
                            z += (1.0 + t + head as f64 * 0.5) * if multi { 0.7 } else { 1.0 } - spanish_drop;
                        }
                        z
                    })
                    .collect();
                let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|z| (z - mx).exp()).collect();
                let total: f64 = exps.iter().sum();
                for (j, e) in exps.iter().enumerate() {
                    attention[[layer, head, i, j]] = (e / total) as f32;
                }
            }
        }
    }

    ActivationTrace {
        header: SentenceTraceHeader {
            sentence_uid: s.uid.clone(),
            n_tokens: n,
            tokens,
            target_span,
            cue_span,
            special_mask,
        },
        hidden,
        attention,
    }
}

fn spanish_mapping() -> ColumnMapping {
    [
        ("item", CanonicalField::PairId),
        ("palabra", CanonicalField::TargetWord),
        ("contexto_1", CanonicalField::SentenceA),
        ("contexto_2", CanonicalField::SentenceB),
        ("relacion", CanonicalField::RelatednessMean),
        ("relacion_sd", CanonicalField::RelatednessSd),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(Error::io(path))
}

fn fill(template: &str, target: &str, cue: &str) -> String {
    template.replace("{t}", target).replace("{c}", cue)
}

/// Writes the toy fixture into `dir`: two dataset manifests and CSVs, one
/// trace directory per evaluated (model, dataset) cell, and `config.json`.
/// Pair `es-10` is left untraced for `toy-mono-es`. Returns the config path.
pub fn write_toy_fixture(dir: &Path, seed: u64) -> Result<PathBuf> {
    let mut english = csv::Writer::from_writer(Vec::new());
    english.write_record(CanonicalField::ALL.iter().map(|f| f.name()))?;
    let mut en_items = Vec::new();
    for (i, (t, ca, cb, rel)) in ENGLISH_ITEMS.iter().enumerate() {
        let tpl = ENGLISH_TEMPLATES[i % ENGLISH_TEMPLATES.len()];
        let (sa, sb) = (fill(tpl, t, ca), fill(tpl, t, cb));
        let id = format!("en-{:02}", i + 1);
        let sd = 0.5 + 0.05 * i as f64;
        english.write_record([&id, *t, "english", &sa, &sb, *ca, *cb, &rel.to_string(), &format!("{sd:.2}")])?;
        en_items.push((id, t.to_string(), sa, sb, ca.to_string(), cb.to_string(), *rel));
    }
    let mut spanish = csv::Writer::from_writer(Vec::new());
    spanish.write_record(["item", "palabra", "contexto_1", "contexto_2", "relacion", "relacion_sd"])?;
    let mut es_items = Vec::new();
    for (i, (t, ca, cb, rel)) in SPANISH_ITEMS.iter().enumerate() {
        let tpl = SPANISH_TEMPLATES[i % SPANISH_TEMPLATES.len()];
        let (sa, sb) = (fill(tpl, t, ca), fill(tpl, t, cb));
        let id = format!("es-{:02}", i + 1);
        spanish.write_record([&id, *t, &sa, &sb, &rel.to_string(), ""])?;
        es_items.push((id, t.to_string(), sa, sb, ca.to_string(), cb.to_string(), *rel));
    }
    let inner = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| Error::Csv(e.into_error().into()));
    write_file(&dir.join("datasets/toy-en.csv"), &inner(english)?)?;
    write_file(&dir.join("datasets/toy-es.csv"), &inner(spanish)?)?;
    let manifests = [
        DatasetManifest {
            dataset_id: "toy-en".into(),
            language: Language::English,
            scale_min: TOY_SCALE.0,
            scale_max: TOY_SCALE.1,
            csv_path: "toy-en.csv".into(),
            mapping: canonical_mapping(),
            case_insensitive: true,
            agreement_ceiling: Some(0.79),
        },
        DatasetManifest {
            dataset_id: "toy-es".into(),
            language: Language::Spanish,
            scale_min: TOY_SCALE.0,
            scale_max: TOY_SCALE.1,
            csv_path: "toy-es.csv".into(),
            mapping: spanish_mapping(),
            case_insensitive: true,
            agreement_ceiling: None,
        },
    ];
    for m in &manifests {
        let mut json = serde_json::to_vec_pretty(m)?;
        json.push(b'\n');
        write_file(&dir.join(format!("datasets/{}.json", m.dataset_id)), &json)?;
    }

    for model in toy_roster() {
        let meta = &model.meta;
        for (dataset_id, lang, items) in
            [("toy-en", Language::English, &en_items), ("toy-es", Language::Spanish, &es_items)]
        {
            if !meta.evaluates(lang) {
                continue;
            }
            let mut traces = Vec::new();
            for (id, t, sa, sb, ca, cb, rel) in items.iter() {
                if meta.model_id == "toy-mono-es" && id == "es-10" {
                    continue;
                }
                let rel_norm = (rel - TOY_SCALE.0) / (TOY_SCALE.1 - TOY_SCALE.0);
                for (side, text, cue, sign) in [('a', sa, ca, 1.0), ('b', sb, cb, -1.0)] {
                    let s = ToySentence { uid: sentence_uid(id, side), text, target: t, cue };
                    traces.push(toy_trace(meta, lang, &s, id, sign, rel_norm, seed));
                }
            }
            let out = dir.join("traces").join(format!("{}__{}", meta.model_id, dataset_id));
            write_trace(meta, dataset_id, traces, &out)?;
        }
    }

    let config = serde_json::json!({
        "datasets": ["datasets/toy-en.json", "datasets/toy-es.json"],
        "trace_root": "traces",
        "output_root": "out",
        "seed": seed,
    });
    let path = dir.join("config.json");
    let mut bytes = serde_json::to_vec_pretty(&config)?;
    bytes.push(b'\n');
    write_file(&path, &bytes)?;
    Ok(path)
}
