//! Self-organizing resource allocation for an LTE-U small-cell network with
//! uplink/downlink decoupling.
//!
//! Every base station (the macro cell and each dual-mode small cell) is an
//! autonomous learner that picks a quantized split of licensed bandwidth and
//! unlicensed airtime across the users it covers. The crate contains the
//! whole algorithmic stack and nothing that touches the outside world:
//!
//! - [`scenario`]: configuration, topology and the fading channel.
//! - [`rate_model`]: SINR-based link capacities and per-user rates.
//! - [`wifi`]: saturation throughput of the co-located WiFi cells and the
//!   resulting LTE-U duty cycle.
//! - [`game`]: action spaces, utilities, expected utilities and equilibrium
//!   verification.
//! - [`esn`]: echo-state reservoirs with gradient-trained linear readouts.
//! - [`agents`]: the two-reservoir learning agent and Q-learning baselines.
//! - [`harness`]: synchronous round loop, convergence detection and metrics.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel Monte-Carlo live in the `lteu-sim` companion crate.
#![no_std]
// `!(x > 0.0)` style checks are how parameter validation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agents;
pub mod esn;
pub mod game;
pub mod harness;
pub mod math;
pub mod rate_model;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod wifi;

pub use agents::{BroadcastMsg, EsnAgent, QAgent, QVariant};
pub use esn::{LearningRate, Readout, Reservoir};
pub use game::{
    ActionSpace, AllocationAction, CellularGame, GameModel, MatrixGame, MixedStrategy,
};
pub use harness::{run, Algorithm, RoundRecord, RunResult};
pub use rate_model::{LinkCapacitySet, UserRates};
pub use scenario::{ChannelRealization, ScenarioConfig, Topology};
pub use wifi::WifiParams;
