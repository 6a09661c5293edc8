#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attain;
pub mod error;
pub mod experiment;
pub mod lp;
pub mod postprocess;
pub mod probcore;
pub mod report;
pub mod rocgeom;
pub mod sample;
pub mod simulate;
pub mod statmod;
pub mod tablefile;
pub mod trainer;

pub use error::{Error, Result};
