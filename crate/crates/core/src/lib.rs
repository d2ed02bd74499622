//! Hands in contact: detection with side and contact state, hand-object
//! association, mesh-quality self-assessment, contact-event mining and the
//! evaluation protocol for all of them.

pub mod association;
pub mod data_model;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod grasp_mining;
pub mod mesh_quality;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
