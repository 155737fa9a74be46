//! Run configuration read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::pipeline::{AnalysisOptions, Grain, InterceptGrouping, MetricOptions};

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest files.
    pub datasets: Vec<PathBuf>,
    pub trace_root: PathBuf,
    pub output_root: PathBuf,
    #[serde(default = "yes")]
    pub include_embedding_layer: bool,
    #[serde(default)]
    pub include_specials: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub grain: Grain,
    #[serde(default)]
    pub intercept: InterceptGrouping,
    #[serde(default)]
    pub parallel_fits: bool,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn new(datasets: Vec<PathBuf>, trace_root: PathBuf, output_root: PathBuf) -> Self {
        Self {
            datasets,
            trace_root,
            output_root,
            include_embedding_layer: true,
            include_specials: false,
            standardize: false,
            grain: Grain::Sentence,
            intercept: InterceptGrouping::Model,
            parallel_fits: false,
            seed: 0,
        }
    }

    /// Reads a config; relative paths resolve against the file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(Error::io(path))?;
        let mut cfg: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.datasets.iter_mut().for_each(resolve);
        resolve(&mut cfg.trace_root);
        resolve(&mut cfg.output_root);
        Ok(cfg)
    }

    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions {
            include_embedding_layer: self.include_embedding_layer,
            include_specials: self.include_specials,
        }
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            standardize: self.standardize,
            grouping: self.intercept,
            grain: self.grain,
            parallel: self.parallel_fits,
        }
    }

    pub fn load_datasets(&self) -> Result<Vec<Dataset>> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no dataset manifests configured".into()));
        }
        let mut out: Vec<Dataset> = Vec::new();
        for path in &self.datasets {
            let ds = DatasetManifest::read(path)?.load()?;
            if out.iter().any(|d| d.dataset_id == ds.dataset_id) {
                return Err(Error::Config(format!("dataset {} configured twice", ds.dataset_id)));
            }
            out.push(ds);
        }
        Ok(out)
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.output_root.join(METRICS_FILE)
    }

    pub fn sentence_metrics_path(&self) -> PathBuf {
        self.output_root.join(SENTENCE_METRICS_FILE)
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.output_root.join(ANALYSIS_DIR)
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.output_root.join(FIGURES_DIR)
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SENTENCE_METRICS_FILE: &str = "sentence_metrics.csv";
pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const ANALYSIS_DIR: &str = "analysis";
pub const FIGURES_DIR: &str = "figures";
pub const LADDER_FILE: &str = "ladder.csv";
