//! Scenario files, command implementations and the reproduction suite
//! behind the `passync` binary.

pub mod commands;
pub mod config;
pub mod suite;

pub use config::ScenarioConfig;

/// Process exit codes. These are stable.
pub mod exit {
    pub const OK: u8 = 0;
    /// Suite assertion failed or an I/O error occurred.
    pub const FAILURE: u8 = 1;
    pub const CONFIG_INVALID: u8 = 2;
    pub const BLOWUP: u8 = 3;
    pub const NOT_CERTIFIED: u8 = 4;
}
