//! On-disk artifact formats.

pub mod checkpoint;
pub mod ensemble;
pub mod tables;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use ensemble::{read_ensemble, write_ensemble};
