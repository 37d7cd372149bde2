pub mod criterion;
pub mod error;
pub mod family;
pub mod harness;
pub mod learning;
pub mod model;
pub mod objective;
pub mod special;

pub use error::{Error, Result};
