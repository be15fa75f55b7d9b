pub mod classify;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod labeling;
pub mod mis;
pub mod optim;
pub mod seed;
pub mod sis;
pub use error::{Error, Result};
