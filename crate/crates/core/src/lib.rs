pub mod device;
pub mod dispersion;
pub mod error;
pub mod ladder;
pub mod mixing;
pub mod noise;
pub mod snail;
pub mod twoport;
pub mod units;

pub use device::Device;
pub use error::{Error, Result};
