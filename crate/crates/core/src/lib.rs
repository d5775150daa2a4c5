//! Information capacity of Gaussian mean-field inference, plus a small
//! reverse-mode autodiff and training stack for capacity sweeps.

pub mod autodiff;
pub mod capacity;
pub mod data;
pub mod error;
pub mod experiments;
pub mod mean_field;
pub mod models;
pub mod special_math;

pub use error::{Error, Result};
