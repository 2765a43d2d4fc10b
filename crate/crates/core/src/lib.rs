pub mod bits;
pub mod budget;
pub mod distinguisher;
pub mod error;
pub mod gf2n;
pub mod hashfam;
pub mod ipchannel;
pub mod qkdsim;
pub mod rng;
pub mod wire;

pub use bits::BitString;
pub use error::{Error, Result};
