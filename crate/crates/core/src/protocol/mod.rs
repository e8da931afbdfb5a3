//! Participant/coordinator protocol: framing, per-participant obfuscation,
//! anonymous assembly and the TCP roles, plus in-process simulation.

pub mod assembly;
pub mod coordinator;
pub mod participant;
pub mod simulate;
pub mod wire;

pub use assembly::{assemble, ReceivedShard};
pub use coordinator::{
    serve_coordinator, Coordinator, CoordinatorConfig, CoordinatorOutcome, SessionStats,
};
pub use participant::{
    classify_remote, participant_seed, prepare_shard, run_participant, run_participant_with,
    shard_seeds, Obfuscation, ParticipantOptions, Purpose, QueryReport, Scheme, TransferReport,
};
pub use simulate::{
    collaborative, score, simulate, simulate_networked, Collaboration, ParticipantOutcome,
    SimulationConfig, SimulationOutcome,
};
pub use wire::{dataset_phase_bytes, ErrorCode, MsgType, WireMessage};
