#![no_std]
extern crate alloc;

pub mod data;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod manifold;
pub mod method;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod oracle;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use manifold::Manifold;
pub use method::Method;
pub use net::{ScoreField, ScoreModel, TimeInput};
pub use noise::NoiseSchedule;
