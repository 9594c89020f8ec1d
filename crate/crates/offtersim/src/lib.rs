//! Host-side tooling for the offtersim simulator: configuration loading,
//! terrain and depth exports, the JSON-lines wire protocol with its TCP
//! server and client, and the rollout driver behind the command line.

pub mod client;
pub mod config;
pub mod error;
pub mod export;
pub mod protocol;
pub mod rollout;
pub mod server;

pub use error::{CliError, ExitCode};
