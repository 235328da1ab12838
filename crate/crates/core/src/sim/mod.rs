//! Monte Carlo simulation of synchronized heralded sources.

mod engine;
mod policy;
pub mod qkd_counts;
mod rng;

pub use engine::{simulate_frames, Estimate, FrameOutcome, SimOptions, SimStats, Simulator, DELIVERY_BINS};
pub use policy::{decide, first_herald_policy, latest_slot_policy, PolicyKind, SyncDecision};
pub use qkd_counts::{expected_coincidence, generate_qkd_counts, BsmModel, QkdCountOptions, QkdCounts, Qubit, QubitSchedule};
pub use rng::{FrameStreams, RngContract};
