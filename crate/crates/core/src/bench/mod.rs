//! Experiment harness: dataset presets, the experiment drivers and their
//! JSON/CSV reports.

mod data;
mod experiments;
mod grid;
mod report;

pub use data::{
    load_mnist_raw, load_spambase_raw, load_split, DataSplit, DatasetId, Preset, RunSettings,
    SPAM_AUGMENT_NOISE, SPAM_TEST, SPAM_TRAIN, SYNTH_TEST_PER_CLASS, SYNTH_TRAIN_PER_CLASS,
};
pub use experiments::{
    exp_attack, exp_compression, exp_condition, exp_dp, exp_overhead, exp_scaling, AttackConfig,
    CompressionConfig, ConditionConfig, DpConfig, OverheadConfig, ScalingConfig,
    REFERENCE_BYTES_PER_PARTICIPANT, REFERENCE_PROJECTION_SECS,
};
pub use grid::write_dp_grid;
pub use report::{
    build_id, participants_from_csv, round4, runs_from_csv, ExperimentReport, ParticipantRecord,
    RunRecord, SCHEMA_VERSION,
};
