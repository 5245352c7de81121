//! Reference methods used to check the variational engines.

pub mod kde;
pub mod mfvb;
pub mod rwm;
