pub mod bounds;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod mixup;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
