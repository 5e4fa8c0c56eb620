//! Hierarchical spectrum sharing between a macro-cell operator and femto
//! underlay users.
//!
//! The operator prices interference on each sub-band (leader), the underlay
//! users form overlapping coalitions and split each coalition's virtual-MIMO
//! rate by eigenvalue (followers).

#[cfg(feature = "cli")]
pub mod cli;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiments;
pub mod follower;
pub mod leader;
pub mod mimo;
pub mod ocf;
pub mod sim;
pub mod verify;

pub use channel::{generate_channel, ChannelRealization, ScenarioConfig};
pub use error::{Error, Result};
pub use follower::{AccessMode, PowerAllocation, PriceVector};
