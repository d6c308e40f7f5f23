pub mod cli;
pub mod context;
pub mod data;
pub mod embedding;
pub mod error;
pub mod head;
pub mod inspect;
pub mod model;
pub mod numerics;
pub mod train_eval;

pub use error::{Error, Result};
