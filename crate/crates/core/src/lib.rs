//! Joint document retrieval and reading comprehension for question answering
//! over long documents.
//!
//! Pipeline: [`retrieval`] builds a candidate pool per question, [`chunking`]
//! splits each (question, document) pair into fixed-length blocks, the
//! [`encoder`] and [`heads`] score every block, [`ranking`] turns block
//! scores into ranked answers, and [`metrics`] evaluates them. [`training`]
//! runs multi-stage transfer plans with the joint loss from [`losses`].

pub mod chunking;
pub mod corpus;
pub mod encoder;
mod error;
pub mod heads;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod ranking;
pub mod retrieval;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
