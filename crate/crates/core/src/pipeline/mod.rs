//! Assembly of the analysis tables from traces and the regressions run on
//! them.

pub mod analyses;
pub mod build;
pub mod records;

pub use analyses::*;
pub use build::{
    build_analysis_table, build_cell, discover_trace_dirs, layer_r2, AnalysisTable, DropCounts, LayerR2,
    MetricOptions, PairTraces, RunReport, SentenceTensors,
};
pub use records::{
    join_sentence_rows, LayerRecord, SentenceLayerRecord, SentenceRow, Side, LAYER_HEADER, SENTENCE_HEADER,
};
