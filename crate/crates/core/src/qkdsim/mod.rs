//! Simulation of device-independent QKD key growth over the insider-proof
//! channel: measurement, sifting, parameter estimation, error correction,
//! privacy amplification and the round protocol between two labs.

pub mod config;
pub mod device;
pub mod ec;
pub mod estimate;
pub mod ldpc;
pub mod link;
pub mod messages;
pub mod pa;
pub mod peer;
pub mod session;
pub mod sim;

pub use config::{ChannelVariant, DeviceKind, Layout, SimConfig};
pub use device::{Device, DeviceInput};
pub use session::{AbortReason, Party, PartyRound, Role, RoundStatus};
pub use sim::{simulate, simulate_with_devices, split_rounds, RoundResult, SimReport};
pub use peer::{peer_session, PeerSummary};
