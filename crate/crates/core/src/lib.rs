pub mod audio;
pub mod error;
pub mod features;
pub mod linalg;
pub mod model;
pub mod net;
pub mod peaq;
pub mod pipeline;
pub mod report;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
