//! File formats, Monte-Carlo batches, sweeps and equilibrium checks on top
//! of `lteu-core`.

pub mod checkpoint;
pub mod coexistence;
pub mod config;
pub mod fmt;
pub mod monte_carlo;
pub mod ne_check;
pub mod output;
pub mod small_game;
pub mod sweep;
