//! Distantly supervised relation extraction over sentence bags, with
//! sentence-level explanations and the evaluation protocol to score them.

pub mod tensor;
pub mod corpus;
pub mod encoder;
pub mod evalsuite;
pub mod models;
pub mod distractor;
pub mod explain;
pub mod pipeline;
pub mod cli;
