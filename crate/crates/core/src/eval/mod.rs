//! Metrics, experiment harnesses and file formats.

mod data;
mod harness;
mod metrics;
mod rouge;

pub use data::{read_jsonl, write_jsonl, ExperimentRecord, Instance, ResultRecord};
pub use harness::{
    decode_dataset, decode_instance, resolve_global_attention, run_degradation, run_sweep,
    summarize, synthetic_dataset, DegradationReport, DegradationRow, GMode, GSource, MetricsRow,
    SweepRow, DEFAULT_BETAS, DEFAULT_GAMMAS,
};
pub use metrics::{divergence_position, length_stats, novel_word_pct, LengthStats};
pub use rouge::{lcs_len, rouge, RougeOrder, RougeScore};
