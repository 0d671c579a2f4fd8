//! Data side of cooperative data-rate prediction.
//!
//! A synthetic vehicular cell ([`cellsim`]) produces two traces: the UE-side
//! transmission log and the per-TTI resource grants a control-channel observer
//! would decode. [`loadmon`] condenses the grant stream into windowed cell-load
//! statistics, and [`fusion`] joins both sides on their timestamps into the
//! training matrices consumed by the learners.

pub mod cellsim;
pub mod csvio;
pub mod error;
pub mod fusion;
pub mod loadmon;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Direction, DirectionalLoad, FusedDataset, NetLoadFeatures, TimestampMs, TransmissionRecord,
    TtiAllocation, UeFeatures,
};
