//! Re-analysis of measured source data.

pub mod counting;
pub mod fit;
pub mod heralding;
pub mod jsi;
