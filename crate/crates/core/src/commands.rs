//! Subcommand implementations. Every command stages its outputs and moves
//! them into place only after all of them were produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{
    RunConfig, ANALYSIS_DIR, FIGURES_DIR, LADDER_FILE, METRICS_FILE, RUN_REPORT_FILE, SENTENCE_METRICS_FILE,
};
use crate::error::{Error, Result};
use crate::pipeline::records::{read_csv, to_csv};
use crate::pipeline::{
    build_analysis_table, discover_trace_dirs, join_sentence_rows, run_all, AnalysisOutput, LayerRecord,
    RunReport, SentenceLayerRecord, LAYER_HEADER, SENTENCE_HEADER,
};
use crate::report;
use crate::sim;
use crate::trace::{validate_trace_dir, ValidationReport, MANIFEST_FILE};

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn staging_path(target: &Path) -> PathBuf {
    let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    target.with_file_name(format!(".{name}.staging"))
}

/// Writes all files to staging names first, then renames them into place.
pub fn write_files_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    for (path, bytes) in files {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        let tmp = staging_path(path);
        std::fs::write(&tmp, bytes).map_err(Error::io(&tmp))?;
    }
    for (path, _) in files {
        std::fs::rename(staging_path(path), path).map_err(Error::io(path))?;
    }
    Ok(())
}

/// Fills a fresh staging directory with `fill` and swaps it in for
/// `target`.
pub fn replace_dir_atomic(target: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let staging = staging_path(target);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(Error::io(&staging))?;
    }
    std::fs::create_dir_all(&staging).map_err(Error::io(&staging))?;
    if let Err(e) = fill(&staging) {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    if target.exists() {
        std::fs::remove_dir_all(target).map_err(Error::io(target))?;
    }
    std::fs::rename(&staging, target).map_err(Error::io(target))
}

/// Validates one trace directory, or every trace directory under a root.
pub fn cmd_validate(trace: &Path, strict: bool) -> Result<Vec<ValidationReport>> {
    if !trace.is_dir() {
        return Err(Error::MissingTrace(format!("{} is not a directory", trace.display())));
    }
    if trace.join(MANIFEST_FILE).is_file() {
        return Ok(vec![validate_trace_dir(trace, strict)]);
    }
    let dirs: Vec<PathBuf> = match discover_trace_dirs(trace) {
        Ok(d) => d,
        Err(_) => {
            let mut dirs: Vec<PathBuf> = std::fs::read_dir(trace)
                .map_err(Error::io(trace))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            dirs.sort();
            if dirs.is_empty() {
                dirs.push(trace.to_path_buf());
            }
            dirs
        }
    };
    Ok(dirs.iter().map(|d| validate_trace_dir(d, strict)).collect())
}

/// Fails with the number of violations when any report failed.
pub fn require_valid(trace: &Path, reports: &[ValidationReport]) -> Result<()> {
    let violations: usize = reports.iter().map(|r| r.violations()).sum();
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(Error::ValidationFailed(trace.to_path_buf(), violations.max(1)))
    }
}

pub fn cmd_metrics(cfg: &RunConfig) -> Result<RunReport> {
    let datasets = cfg.load_datasets()?;
    let dirs = discover_trace_dirs(&cfg.trace_root)?;
    let table = build_analysis_table(&dirs, &datasets, cfg.metric_options())?;
    log::info!(
        "{} layer records, {} sentence records; pairs used {}/{}",
        table.layers.len(),
        table.sentences.len(),
        table.report.pairs.used,
        table.report.pairs.input
    );
    write_files_atomic(&[
        (cfg.output_root.join(METRICS_FILE), to_csv(&table.layers, LAYER_HEADER)?),
        (cfg.output_root.join(SENTENCE_METRICS_FILE), to_csv(&table.sentences, SENTENCE_HEADER)?),
        (cfg.output_root.join(RUN_REPORT_FILE), json_bytes(&table.report)?),
    ])?;
    Ok(table.report)
}

fn read_required<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    if !path.is_file() {
        return Err(Error::MissingAnalysis(path.to_path_buf()));
    }
    read_csv(path)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub fitted: Vec<String>,
    pub failed: Vec<String>,
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeSummary> {
    let layers: Vec<LayerRecord> = read_required(&cfg.metrics_path())?;
    let sentences: Vec<SentenceLayerRecord> = read_required(&cfg.sentence_metrics_path())?;
    let datasets = cfg.load_datasets()?;
    let target_words: BTreeMap<(String, String), String> = datasets
        .iter()
        .flat_map(|d| d.items.iter().map(|p| ((d.dataset_id.clone(), p.pair_id.clone()), p.target_word.clone())))
        .collect();
    let rows = join_sentence_rows(&layers, &sentences, &target_words)?;
    let outcomes = run_all(&layers, &rows, &cfg.analysis_options());

    let mut summary = AnalyzeSummary::default();
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for o in &outcomes {
        match &o.result {
            Ok(out) => {
                summary.fitted.push(o.name.clone());
                files.push((format!("{}.json", o.name), json_bytes(out)?));
                if let AnalysisOutput::Ladder(l) = out {
                    files.push((LADDER_FILE.to_string(), l.ladder.to_csv().into_bytes()));
                }
            }
            Err(f) => {
                summary.failed.push(o.name.clone());
                files.push((format!("{}.error.json", o.name), json_bytes(f)?));
            }
        }
    }
    files.push(("summary.json".to_string(), json_bytes(&summary)?));
    std::fs::create_dir_all(&cfg.output_root).map_err(Error::io(&cfg.output_root))?;
    replace_dir_atomic(&cfg.output_root.join(ANALYSIS_DIR), |dir| {
        for (name, bytes) in &files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(Error::io(&p))?;
        }
        Ok(())
    })?;
    Ok(summary)
}

pub const FIGURE_STEMS: [&str; 5] = [
    "fig1_max_r2_by_size",
    "fig2a_isotropy_by_depth",
    "fig2b_attention_by_depth",
    "fig3_aic_ladder",
    "fig4_token_fertility",
];

pub fn cmd_report(cfg: &RunConfig) -> Result<PathBuf> {
    let analysis = cfg.analysis_dir();
    if !analysis.is_dir() {
        return Err(Error::MissingAnalysis(analysis));
    }
    let layers: Vec<LayerRecord> = read_required(&cfg.metrics_path())?;
    let ladder_path = analysis.join(LADDER_FILE);
    let ladder = if ladder_path.is_file() {
        report::read_ladder_csv(&std::fs::read(&ladder_path).map_err(Error::io(&ladder_path))?)?
    } else {
        log::warn!("{} missing; fig3 will be empty", ladder_path.display());
        Vec::new()
    };

    let fig1 = report::fig1_max_r2_by_size(&layers);
    let fig2a = report::fig2a_isotropy_by_depth(&layers);
    let fig2b = report::fig2b_attention_by_depth(&layers);
    let fig4 = report::fig4_token_fertility(&layers);
    const BIN_HEADER: &str = "multilingual,depth_bin,bin_start,bin_end,n,mean,se";
    let tables: [(Vec<u8>, String); 5] = [
        (to_csv(&fig1, "model_id,dataset_id,language,multilingual,log_params,max_r2,best_layer")?, report::fig1_svg(&fig1)),
        (to_csv(&fig2a, BIN_HEADER)?, report::depth_svg("Centered isotropy by depth", "mean CI", &fig2a)),
        (to_csv(&fig2b, BIN_HEADER)?, report::depth_svg("Maximum attention to cue by depth", "max attention", &fig2b)),
        (to_csv(&ladder, "label,aic,delta_aic")?, report::fig3_svg(&ladder)),
        (to_csv(&fig4, "language,multilingual,word,n,mean,se")?, report::fig4_svg(&fig4)),
    ];
    let figures = cfg.output_root.join(FIGURES_DIR);
    replace_dir_atomic(&figures, |dir| {
        for (stem, (csv, svg)) in FIGURE_STEMS.iter().zip(&tables) {
            let c = dir.join(format!("{stem}.csv"));
            std::fs::write(&c, csv).map_err(Error::io(&c))?;
            let s = dir.join(format!("{stem}.svg"));
            std::fs::write(&s, svg).map_err(Error::io(&s))?;
        }
        Ok(())
    })?;
    Ok(figures)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulationKind {
    /// Layer table with a direct multilingual R² deficit.
    Penalty,
    /// Layer table where multilingual status acts only through the factors.
    Mediation,
    /// Sentence-grain rows with planted CI, attention and token effects.
    Sentences,
    /// Datasets and trace directories for an end-to-end run.
    Toy,
}

/// Writes a seeded synthetic table (or the toy fixture) into `out`.
pub fn cmd_simulate(kind: SimulationKind, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    match kind {
        SimulationKind::Penalty | SimulationKind::Mediation => {
            let layers = match kind {
                SimulationKind::Penalty => sim::simulate_penalty_table(&sim::PenaltySim::default(), seed),
                _ => sim::simulate_mediation_table(&sim::MediationSim::default(), seed),
            };
            let path = out.join(METRICS_FILE);
            write_files_atomic(&[(path.clone(), to_csv(&layers, LAYER_HEADER)?)])?;
            Ok(vec![path])
        }
        SimulationKind::Sentences => {
            let (layers, rows) = sim::simulate_sentence_table(&sim::SentenceSim::default(), seed);
            let (lp, rp) = (out.join(METRICS_FILE), out.join("sentence_rows.csv"));
            write_files_atomic(&[
                (lp.clone(), to_csv(&layers, LAYER_HEADER)?),
                (
                    rp.clone(),
                    to_csv(
                        &rows,
                        "sentence_id,model_id,dataset_id,target_word,language,multilingual,log_params,layer,depth,\
ci,attn_mean,attn_max,target_tokens,cue_tokens",
                    )?,
                ),
            ])?;
            Ok(vec![lp, rp])
        }
        SimulationKind::Toy => {
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
            }
            replace_dir_atomic(out, |dir| sim::write_toy_fixture(dir, seed).map(|_| ()))?;
            Ok(vec![out.join("config.json")])
        }
    }
}
