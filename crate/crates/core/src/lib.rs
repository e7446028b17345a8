//! Software twin of a research smart ring: a virtual device, its wire
//! protocol, a simulated radio link, and the host-side acquisition toolkit.

pub mod dsp;
pub mod hostkit;
pub mod proto;
pub mod render;
pub mod ringsim;
pub mod transport;
pub mod types;

pub use types::*;
